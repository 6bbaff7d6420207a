//! Pareto-front extraction over (fairness violation V, utility U) solution
//! sets, coordinate normalization, the rectangle-sum hypervolume indicator,
//! and utopia-distance solution selection.
//!
//! Conventions: V is minimized, U is maximized. The hypervolume reference
//! point defaults to (1.1, -0.1) and the utopia point to (0, 1), so a
//! normalized front scores at most 1.21 raw hypervolume (reported also as a
//! percentage of that maximum).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One solution: fairness violation `v` (lower is better), utility `u`
/// (higher is better), and the trade-off weight that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub v: f64,
    pub u: f64,
    pub lambda: f64,
}

impl TradeoffPoint {
    pub fn new(v: f64, u: f64, lambda: f64) -> Result<Self> {
        if !v.is_finite() || !u.is_finite() || !lambda.is_finite() {
            return Err(Error::validation("TradeoffPoint: non-finite coordinate"));
        }
        if !(0.0..1.0).contains(&lambda) {
            return Err(Error::validation("TradeoffPoint: lambda must lie in [0, 1)"));
        }
        Ok(TradeoffPoint { v, u, lambda })
    }
}

/// Reference and utopia points for hypervolume and selection.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FrontConfig {
    pub ref_point: (f64, f64),
    pub utopia: (f64, f64),
}

impl Default for FrontConfig {
    fn default() -> Self {
        FrontConfig { ref_point: (1.1, -0.1), utopia: (0.0, 1.0) }
    }
}

impl FrontConfig {
    pub fn validate(&self) -> Result<()> {
        let (vr, ur) = self.ref_point;
        if !(vr.is_finite() && ur.is_finite()) {
            return Err(Error::config("FrontConfig: non-finite reference point"));
        }
        if vr <= 1.0 || ur >= 0.0 {
            return Err(Error::config(
                "FrontConfig: reference point must satisfy v_ref > 1 and u_ref < 0 on normalized fronts",
            ));
        }
        Ok(())
    }

    /// Raw hypervolume of the whole normalized box, used for the percentage.
    fn max_raw(&self) -> f64 {
        let (vr, ur) = self.ref_point;
        let (vu, uu) = self.utopia;
        (vr - vu) * (uu - ur)
    }
}

/// Non-dominated subset, sorted ascending in v (and therefore ascending in
/// u). A point is dropped when another point weakly dominates it (v no
/// larger, u no smaller) and differs in at least one coordinate. Exact
/// duplicates collapse to one representative (the first by input order).
pub fn pareto_front(points: &[TradeoffPoint]) -> Result<Vec<TradeoffPoint>> {
    if points.is_empty() {
        return Err(Error::validation("pareto_front: empty input"));
    }
    let mut kept: Vec<TradeoffPoint> = Vec::new();
    'outer: for (i, p) in points.iter().enumerate() {
        for (j, q) in points.iter().enumerate() {
            if i == j {
                continue;
            }
            let duplicate = q.v == p.v && q.u == p.u;
            if duplicate {
                // keep only the first occurrence
                if j < i {
                    continue 'outer;
                }
                continue;
            }
            if q.v <= p.v && q.u >= p.u {
                continue 'outer;
            }
        }
        kept.push(*p);
    }
    // merge exact ties in v keeping the higher u
    kept.sort_by(|a, b| a.v.partial_cmp(&b.v).unwrap().then(b.u.partial_cmp(&a.u).unwrap()));
    kept.dedup_by(|next, first| next.v == first.v);
    Ok(kept)
}

/// Affine map of both coordinates into [0, 1]. Bounds default to the input's
/// own extremes; a degenerate range maps every value to 0.
pub fn normalize_front(
    front: &[TradeoffPoint],
    bounds: Option<(f64, f64, f64, f64)>,
) -> Result<Vec<TradeoffPoint>> {
    if front.is_empty() {
        return Err(Error::validation("normalize_front: empty front"));
    }
    let (v_min, v_max, u_min, u_max) = match bounds {
        Some(b) => b,
        None => {
            let v_min = front.iter().map(|p| p.v).fold(f64::INFINITY, f64::min);
            let v_max = front.iter().map(|p| p.v).fold(f64::NEG_INFINITY, f64::max);
            let u_min = front.iter().map(|p| p.u).fold(f64::INFINITY, f64::min);
            let u_max = front.iter().map(|p| p.u).fold(f64::NEG_INFINITY, f64::max);
            (v_min, v_max, u_min, u_max)
        }
    };
    let dv = v_max - v_min;
    let du = u_max - u_min;
    Ok(front
        .iter()
        .map(|p| TradeoffPoint {
            v: if dv > 0.0 { (p.v - v_min) / dv } else { 0.0 },
            u: if du > 0.0 { (p.u - u_min) / du } else { 0.0 },
            lambda: p.lambda,
        })
        .collect())
}

/// Rectangle-sum hypervolume of a sorted front against the reference point:
/// sum over i of (V_{i+1} - V_i)(U_i - U_ref), with the final V taken at the
/// reference. Returns (raw, percent of the maximum box).
pub fn hvi(norm_front: &[TradeoffPoint], cfg: &FrontConfig) -> Result<(f64, f64)> {
    cfg.validate()?;
    if norm_front.is_empty() {
        return Err(Error::validation("hvi: empty front"));
    }
    for w in norm_front.windows(2) {
        if !(w[0].v < w[1].v && w[0].u < w[1].u) {
            return Err(Error::contract("hvi: front must be strictly ascending in v and u"));
        }
    }
    let (v_ref, u_ref) = cfg.ref_point;
    let mut raw = 0.0;
    for i in 0..norm_front.len() {
        let next_v = if i + 1 < norm_front.len() { norm_front[i + 1].v } else { v_ref };
        raw += (next_v - norm_front[i].v) * (norm_front[i].u - u_ref);
    }
    Ok((raw, raw * 100.0 / cfg.max_raw()))
}

/// Index of the front point closest to the utopia point in L2 distance.
/// Ties break toward the lower v, then the lower index.
pub fn select_global_criterion(norm_front: &[TradeoffPoint], cfg: &FrontConfig) -> Result<usize> {
    if norm_front.is_empty() {
        return Err(Error::validation("select_global_criterion: empty front"));
    }
    let (vu, uu) = cfg.utopia;
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for (i, p) in norm_front.iter().enumerate() {
        let d = ((p.v - vu).powi(2) + (uu - p.u).powi(2)).sqrt();
        let better = d < best_d
            || (d == best_d && p.v < norm_front[best].v)
            || (d == best_d && p.v == norm_front[best].v && i < best);
        if better {
            best = i;
            best_d = d;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn pt(v: f64, u: f64) -> TradeoffPoint {
        TradeoffPoint::new(v, u, 0.0).unwrap()
    }

    #[test]
    fn front_basics() {
        // incomparable pair: higher v buys higher u
        let f = pareto_front(&[pt(0.1, 0.8), pt(0.2, 0.9)]).unwrap();
        assert_eq!(f.len(), 2);
        let f = pareto_front(&[pt(0.1, 0.9), pt(0.2, 0.85)]).unwrap();
        assert_eq!(f, vec![pt(0.1, 0.9)]);
        assert!(pareto_front(&[]).is_err());
    }

    #[test]
    fn front_deduplicates_and_merges_v_ties() {
        let f = pareto_front(&[pt(0.1, 0.9), pt(0.1, 0.9), pt(0.1, 0.9)]).unwrap();
        assert_eq!(f.len(), 1);
        // same v, different u: lower u is dominated and removed
        let f = pareto_front(&[pt(0.1, 0.5), pt(0.1, 0.9)]).unwrap();
        assert_eq!(f, vec![pt(0.1, 0.9)]);
    }

    fn brute_force_front(points: &[TradeoffPoint]) -> Vec<TradeoffPoint> {
        let mut out: Vec<TradeoffPoint> = Vec::new();
        for (i, p) in points.iter().enumerate() {
            let dominated = points.iter().enumerate().any(|(j, q)| {
                i != j && q.v <= p.v && q.u >= p.u && (q.v < p.v || q.u > p.u)
            });
            let dup_earlier = points[..i].iter().any(|q| q.v == p.v && q.u == p.u);
            if !dominated && !dup_earlier {
                out.push(*p);
            }
        }
        out.sort_by(|a, b| a.v.partial_cmp(&b.v).unwrap());
        out
    }

    #[test]
    fn front_matches_brute_force_on_random_clouds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            // quantize to force occasional ties and duplicates
            let pts: Vec<TradeoffPoint> = (0..30)
                .map(|_| {
                    pt(
                        (rng.random::<f64>() * 10.0).round() / 10.0,
                        (rng.random::<f64>() * 10.0).round() / 10.0,
                    )
                })
                .collect();
            let fast = pareto_front(&pts).unwrap();
            let brute = brute_force_front(&pts);
            assert_eq!(fast, brute);
        }
    }

    #[test]
    fn front_idempotent_and_order_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut pts: Vec<TradeoffPoint> =
            (0..40).map(|_| pt(rng.random(), rng.random())).collect();
        let f1 = pareto_front(&pts).unwrap();
        assert_eq!(pareto_front(&f1).unwrap(), f1);
        pts.shuffle(&mut rng);
        assert_eq!(pareto_front(&pts).unwrap(), f1);
    }

    #[test]
    fn normalize_cases() {
        let f = vec![pt(0.0, 0.0), pt(1.0, 1.0)];
        assert_eq!(normalize_front(&f, None).unwrap(), f);
        let one = normalize_front(&[pt(0.3, 0.7)], None).unwrap();
        assert_eq!(one, vec![pt(0.0, 0.0)]);
        let two = normalize_front(&[pt(2.0, 10.0), pt(4.0, 20.0)], None).unwrap();
        assert_eq!(two, vec![pt(0.0, 0.0), pt(1.0, 1.0)]);
    }

    #[test]
    fn hvi_single_point_cases() {
        let cfg = FrontConfig::default();
        let (raw, pct) = hvi(&[pt(0.0, 1.0)], &cfg).unwrap();
        assert_abs_diff_eq!(raw, 1.21, epsilon = 1e-12);
        assert_abs_diff_eq!(pct, 100.0, epsilon = 1e-10);
        let (raw, pct) = hvi(&[pt(1.0, 0.0)], &cfg).unwrap();
        assert_abs_diff_eq!(raw, 0.01, epsilon = 1e-12);
        assert_abs_diff_eq!(pct, 100.0 / 121.0, epsilon = 1e-10);
    }

    #[test]
    fn hvi_rejects_unsorted() {
        let cfg = FrontConfig::default();
        assert!(hvi(&[pt(0.5, 0.9), pt(0.2, 0.3)], &cfg).is_err());
    }

    #[test]
    fn hvi_matches_monte_carlo() {
        let cfg = FrontConfig::default();
        let front = vec![pt(0.0, 0.2), pt(0.3, 0.5), pt(0.6, 0.8), pt(0.9, 1.0)];
        let (raw, _) = hvi(&front, &cfg).unwrap();
        // dominated-region area over [0, 1.1] x [-0.1, 1]
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 1_000_000usize;
        let mut hits = 0usize;
        for _ in 0..n {
            let v = rng.random::<f64>() * 1.1;
            let u = -0.1 + rng.random::<f64>() * 1.1;
            if front.iter().any(|p| v >= p.v && u <= p.u) {
                hits += 1;
            }
        }
        let area = 1.21 * hits as f64 / n as f64;
        let p = raw / 1.21;
        let se = 1.21 * (p * (1.0 - p) / n as f64).sqrt();
        assert!((area - raw).abs() < 3.0 * se, "mc {area} vs exact {raw} (se {se})");
    }

    #[test]
    fn hvi_monotone_in_added_points() {
        let cfg = FrontConfig::default();
        let base = vec![pt(0.2, 0.4), pt(0.8, 0.9)];
        let (raw_base, _) = hvi(&base, &cfg).unwrap();
        let extended = pareto_front(&[pt(0.2, 0.4), pt(0.5, 0.7), pt(0.8, 0.9)]).unwrap();
        let (raw_ext, _) = hvi(&extended, &cfg).unwrap();
        assert!(raw_ext >= raw_base - 1e-15);
    }

    #[test]
    fn selection_cases() {
        let cfg = FrontConfig::default();
        let f = vec![pt(0.0, 1.0), pt(0.5, 0.5)];
        assert_eq!(select_global_criterion(&f, &cfg).unwrap(), 0);
        // symmetric tie: (0,0) and (1,1) both at distance 1 from (0,1)
        let f = vec![pt(1.0, 1.0), pt(0.0, 0.0)];
        assert_eq!(select_global_criterion(&f, &cfg).unwrap(), 1);
    }

    #[test]
    fn selection_matches_linear_scan() {
        let cfg = FrontConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let pts: Vec<TradeoffPoint> =
                (0..20).map(|_| pt(rng.random(), rng.random())).collect();
            let front = pareto_front(&pts).unwrap();
            let norm = normalize_front(&front, None).unwrap();
            let idx = select_global_criterion(&norm, &cfg).unwrap();
            let dist =
                |p: &TradeoffPoint| ((p.v - 0.0).powi(2) + (1.0 - p.u).powi(2)).sqrt();
            let best = norm.iter().map(dist).fold(f64::INFINITY, f64::min);
            assert_abs_diff_eq!(dist(&norm[idx]), best, epsilon = 1e-15);
        }
    }

    #[test]
    fn pipeline_order_invariance() {
        let cfg = FrontConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut pts: Vec<TradeoffPoint> =
            (0..30).map(|_| pt(rng.random(), rng.random())).collect();
        let run = |pts: &[TradeoffPoint]| {
            let norm = normalize_front(&pareto_front(pts).unwrap(), None).unwrap();
            let h = hvi(&norm, &cfg).unwrap();
            let s = select_global_criterion(&norm, &cfg).unwrap();
            (h, norm[s])
        };
        let (h1, s1) = run(&pts);
        pts.shuffle(&mut rng);
        let (h2, s2) = run(&pts);
        assert_eq!(h1, h2);
        assert_eq!(s1, s2);
    }

    #[test]
    fn config_validation() {
        assert!(FrontConfig::default().validate().is_ok());
        assert!(FrontConfig { ref_point: (0.9, -0.1), utopia: (0.0, 1.0) }.validate().is_err());
        assert!(FrontConfig { ref_point: (1.1, 0.1), utopia: (0.0, 1.0) }.validate().is_err());
        assert!(TradeoffPoint::new(0.1, 0.2, 1.0).is_err());
    }
}
