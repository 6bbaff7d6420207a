//! Exact discrete probability over small finite spaces.
//!
//! Everything here works on dense tables and natural logarithms (nats).
//! These functions are the oracle substrate for the bound checks in
//! [`crate::bounds`].

use ndarray::{Array2, Array3, Array4, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for "sums to one" checks on input distributions.
pub const NORM_TOL: f64 = 1e-9;
/// Strict tolerance used when validating constructed tables.
pub const STRICT_TOL: f64 = 1e-12;
/// Cap on dense joint size so enumeration stays sub-second.
pub const MAX_CELLS: usize = 1_000_000;

fn check_distribution(p: &[f64], tol: f64) -> Result<()> {
    if p.iter().any(|&v| !v.is_finite() || v < 0.0) {
        return Err(Error::validation("distribution has negative or non-finite entries"));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > tol {
        return Err(Error::validation(format!("distribution sums to {s}, expected 1")));
    }
    Ok(())
}

/// Total variation distance between two distributions of equal length.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::validation(format!(
            "tv_distance: length mismatch {} vs {}",
            p.len(),
            q.len()
        )));
    }
    check_distribution(p, NORM_TOL)?;
    check_distribution(q, NORM_TOL)?;
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Shannon entropy in nats, with 0 ln 0 = 0.
pub fn entropy(p: &[f64]) -> Result<f64> {
    check_distribution(p, NORM_TOL)?;
    Ok(entropy_unchecked(p))
}

fn entropy_unchecked(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}

/// KL divergence D(p || q) in nats. Requires q strictly positive wherever
/// it is compared, so the value is always finite.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::validation("kl_divergence: length mismatch"));
    }
    check_distribution(p, NORM_TOL)?;
    check_distribution(q, NORM_TOL)?;
    if q.iter().any(|&v| v <= 0.0) {
        return Err(Error::validation("kl_divergence: reference distribution must be strictly positive"));
    }
    Ok(p.iter()
        .zip(q)
        .filter(|(&a, _)| a > 0.0)
        .map(|(&a, &b)| a * (a / b).ln())
        .sum())
}

/// Entropy of the joint table minus entropy of the conditioning marginal,
/// computed as sum_c p(c) H(A | C = c). Axis 1 is the conditioning variable.
pub fn conditional_entropy(joint: &Array2<f64>) -> Result<f64> {
    let flat: Vec<f64> = joint.iter().copied().collect();
    check_distribution(&flat, NORM_TOL)?;
    let mut h = 0.0;
    for col in joint.axis_iter(Axis(1)) {
        let pc: f64 = col.sum();
        if pc > 0.0 {
            let cond: Vec<f64> = col.iter().map(|&v| v / pc).collect();
            h += pc * entropy_unchecked(&cond);
        }
    }
    Ok(h)
}

/// Mutual information I(A;B) = H(A) + H(B) - H(A,B), clamped to 0.
pub fn mutual_information(joint: &Array2<f64>) -> Result<f64> {
    let flat: Vec<f64> = joint.iter().copied().collect();
    check_distribution(&flat, NORM_TOL)?;
    Ok(mutual_information_unchecked(joint))
}

fn mutual_information_unchecked(joint: &Array2<f64>) -> f64 {
    let pa: Vec<f64> = joint.sum_axis(Axis(1)).to_vec();
    let pb: Vec<f64> = joint.sum_axis(Axis(0)).to_vec();
    let flat: Vec<f64> = joint.iter().copied().collect();
    let mi = entropy_unchecked(&pa) + entropy_unchecked(&pb) - entropy_unchecked(&flat);
    mi.max(0.0)
}

/// Conditional mutual information I(A;B|C) over a 3-way table (a, b, c):
/// sum_c p(c) I(A;B | C = c). Clamped to 0.
pub fn conditional_mutual_information(joint: &Array3<f64>) -> Result<f64> {
    let flat: Vec<f64> = joint.iter().copied().collect();
    check_distribution(&flat, NORM_TOL)?;
    let (na, nb, nc) = joint.dim();
    let mut cmi = 0.0;
    for c in 0..nc {
        let slab = joint.index_axis(Axis(2), c);
        let pc: f64 = slab.sum();
        if pc > 0.0 {
            let mut cond = Array2::zeros((na, nb));
            for a in 0..na {
                for b in 0..nb {
                    cond[[a, b]] = slab[[a, b]] / pc;
                }
            }
            cmi += pc * mutual_information_unchecked(&cond);
        }
    }
    Ok(cmi.max(0.0))
}

/// Exact joint law over (input, label, domain, group) with domain roles.
///
/// Serialized as `{sizes, probs (flat row-major), source_domains,
/// target_domain}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FiniteJoint {
    /// (|X|, |Y|, |D|, |G|)
    pub sizes: (usize, usize, usize, usize),
    /// Flat row-major table p(x, y, d, g).
    pub probs: Vec<f64>,
    /// Source domain indices, at least two.
    pub source_domains: Vec<usize>,
    /// Target domain index, disjoint from the sources.
    pub target_domain: usize,
}

impl FiniteJoint {
    pub fn new(
        sizes: (usize, usize, usize, usize),
        probs: Vec<f64>,
        source_domains: Vec<usize>,
        target_domain: usize,
    ) -> Result<Self> {
        let j = FiniteJoint { sizes, probs, source_domains, target_domain };
        j.validate()?;
        Ok(j)
    }

    pub fn validate(&self) -> Result<()> {
        let (nx, ny, nd, ng) = self.sizes;
        let cells = nx * ny * nd * ng;
        if cells == 0 {
            return Err(Error::validation("FiniteJoint: zero-sized axis"));
        }
        if cells > MAX_CELLS {
            return Err(Error::validation(format!("FiniteJoint: {cells} cells exceeds cap {MAX_CELLS}")));
        }
        if self.probs.len() != cells {
            return Err(Error::validation(format!(
                "FiniteJoint: table has {} entries, sizes imply {cells}",
                self.probs.len()
            )));
        }
        check_distribution(&self.probs, STRICT_TOL)?;
        if self.source_domains.len() < 2 {
            return Err(Error::validation("FiniteJoint: need at least two source domains"));
        }
        let mut seen = vec![false; nd];
        for &d in &self.source_domains {
            if d >= nd {
                return Err(Error::validation(format!("FiniteJoint: source domain {d} out of range")));
            }
            if seen[d] {
                return Err(Error::validation(format!("FiniteJoint: duplicate source domain {d}")));
            }
            seen[d] = true;
        }
        if self.target_domain >= nd {
            return Err(Error::validation("FiniteJoint: target domain out of range"));
        }
        if seen[self.target_domain] {
            return Err(Error::validation("FiniteJoint: target domain must not be a source domain"));
        }
        Ok(())
    }

    pub fn table(&self) -> Array4<f64> {
        let (nx, ny, nd, ng) = self.sizes;
        Array4::from_shape_vec((nx, ny, nd, ng), self.probs.clone()).expect("validated shape")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("FiniteJoint is serializable")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: FiniteJoint =
            serde_json::from_str(s).map_err(|e| Error::validation(format!("FiniteJoint JSON: {e}")))?;
        j.validate()?;
        Ok(j)
    }
}

/// Prediction channel p(yhat | x), one row per input value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Channel {
    /// Shape (|X|, |Y|); each row is a distribution.
    pub cond_probs: Array2<f64>,
    pub deterministic: bool,
}

impl Channel {
    pub fn new(cond_probs: Array2<f64>, deterministic: bool) -> Result<Self> {
        for row in cond_probs.rows() {
            let r: Vec<f64> = row.to_vec();
            check_distribution(&r, STRICT_TOL)?;
            if deterministic && !r.iter().all(|&v| v == 0.0 || v == 1.0) {
                return Err(Error::validation("Channel: deterministic flag requires one-hot rows"));
            }
        }
        Ok(Channel { cond_probs, deterministic })
    }

    /// Deterministic channel from a map x -> yhat.
    pub fn from_map(n_inputs: usize, n_labels: usize, map: impl Fn(usize) -> usize) -> Result<Self> {
        let mut t = Array2::zeros((n_inputs, n_labels));
        for x in 0..n_inputs {
            let y = map(x);
            if y >= n_labels {
                return Err(Error::validation("Channel::from_map: label out of range"));
            }
            t[[x, y]] = 1.0;
        }
        Channel::new(t, true)
    }

    pub fn n_inputs(&self) -> usize {
        self.cond_probs.nrows()
    }

    pub fn n_labels(&self) -> usize {
        self.cond_probs.ncols()
    }
}

/// Joint law of (yhat, y, d, g) obtained by pushing the input joint through a
/// prediction channel: p(yhat, y, d, g) = sum_x p(yhat|x) p(x, y, d, g).
pub fn push_channel(joint: &FiniteJoint, ch: &Channel) -> Result<Array4<f64>> {
    let (nx, ny, nd, ng) = joint.sizes;
    if ch.n_inputs() != nx {
        return Err(Error::validation(format!(
            "push_channel: channel has {} inputs, joint has {nx}",
            ch.n_inputs()
        )));
    }
    let nyhat = ch.n_labels();
    let t = joint.table();
    let mut out = Array4::zeros((nyhat, ny, nd, ng));
    for x in 0..nx {
        for yh in 0..nyhat {
            let w = ch.cond_probs[[x, yh]];
            if w == 0.0 {
                continue;
            }
            for y in 0..ny {
                for d in 0..nd {
                    for g in 0..ng {
                        out[[yh, y, d, g]] += w * t[[x, y, d, g]];
                    }
                }
            }
        }
    }
    Ok(out)
}
