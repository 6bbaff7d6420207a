//! Empirical group-fairness metrics (equalized-odds distance and
//! equal-opportunity gap) plus accuracy, over predicted/true label pairs
//! annotated with group membership.
//!
//! Both fairness metrics are normalized by 2 / (|Y| |G| (|G| - 1)), the
//! number of unordered group pairs per class. Empty (y, g) cells are skipped
//! rather than imputed, and the skip count is reported.

use ndarray::Array3;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::prob::tv_distance;

/// A finite evaluation sample: labels, predictions, group ids, and optional
/// domain ids.
#[derive(Debug, Clone)]
pub struct EvalBatch {
    pub y_true: Vec<usize>,
    pub y_pred: Vec<usize>,
    pub g: Vec<usize>,
    pub d: Option<Vec<usize>>,
    /// Declared label cardinality (predictions and labels share a space).
    pub n_labels: usize,
    /// Declared group cardinality.
    pub n_groups: usize,
}

impl EvalBatch {
    pub fn new(
        y_true: Vec<usize>,
        y_pred: Vec<usize>,
        g: Vec<usize>,
        d: Option<Vec<usize>>,
        n_labels: usize,
        n_groups: usize,
    ) -> Result<Self> {
        let n = y_true.len();
        if n == 0 {
            return Err(Error::validation("EvalBatch: empty batch"));
        }
        if y_pred.len() != n || g.len() != n || d.as_ref().is_some_and(|d| d.len() != n) {
            return Err(Error::validation("EvalBatch: column length mismatch"));
        }
        if y_true.iter().chain(&y_pred).any(|&v| v >= n_labels) {
            return Err(Error::validation("EvalBatch: label id out of range"));
        }
        if g.iter().any(|&v| v >= n_groups) {
            return Err(Error::validation("EvalBatch: group id out of range"));
        }
        Ok(EvalBatch { y_true, y_pred, g, d, n_labels, n_groups })
    }

    /// Infer cardinalities from the data (max id + 1).
    pub fn from_columns(
        y_true: Vec<usize>,
        y_pred: Vec<usize>,
        g: Vec<usize>,
        d: Option<Vec<usize>>,
    ) -> Result<Self> {
        let n_labels = y_true.iter().chain(&y_pred).max().map_or(0, |&m| m + 1);
        let n_groups = g.iter().max().map_or(0, |&m| m + 1);
        EvalBatch::new(y_true, y_pred, g, d, n_labels, n_groups)
    }

    pub fn len(&self) -> usize {
        self.y_true.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y_true.is_empty()
    }
}

/// Empirical prediction conditionals p(yhat | y, g) with a support mask.
#[derive(Debug, Clone)]
pub struct ConditionalPredDists {
    /// Shape (|Y| labels y, |G| groups g, |Y| predictions yhat).
    pub probs: Array3<f64>,
    /// True where the (y, g) cell has at least one sample.
    pub support: Vec<Vec<bool>>,
    /// Raw cell counts n(y, g).
    pub counts: Vec<Vec<usize>>,
}

pub fn conditional_pred_dists(batch: &EvalBatch) -> Result<ConditionalPredDists> {
    let (ny, ng) = (batch.n_labels, batch.n_groups);
    let mut counts = vec![vec![0usize; ng]; ny];
    let mut probs = Array3::zeros((ny, ng, ny));
    for i in 0..batch.len() {
        let (y, g, yh) = (batch.y_true[i], batch.g[i], batch.y_pred[i]);
        counts[y][g] += 1;
        probs[[y, g, yh]] += 1.0;
    }
    let mut support = vec![vec![false; ng]; ny];
    for y in 0..ny {
        for g in 0..ng {
            if counts[y][g] > 0 {
                support[y][g] = true;
                let c = counts[y][g] as f64;
                for yh in 0..ny {
                    probs[[y, g, yh]] /= c;
                }
            }
        }
    }
    Ok(ConditionalPredDists { probs, support, counts })
}

/// A fairness metric value plus pair-coverage diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct FairnessValue {
    pub value: f64,
    pub evaluated_pairs: usize,
    pub skipped_pairs: usize,
}

fn pairwise_metric(
    batch: &EvalBatch,
    gap: impl Fn(&ConditionalPredDists, usize, usize, usize) -> Result<f64>,
) -> Result<FairnessValue> {
    if batch.n_groups < 2 {
        return Err(Error::validation("fairness metrics need at least two groups"));
    }
    let dists = conditional_pred_dists(batch)?;
    let (ny, ng) = (batch.n_labels, batch.n_groups);
    let norm = 2.0 / (ny as f64 * ng as f64 * (ng as f64 - 1.0));
    let mut total = 0.0;
    let mut evaluated = 0;
    let mut skipped = 0;
    for y in 0..ny {
        for g in 0..ng {
            for g2 in (g + 1)..ng {
                if dists.support[y][g] && dists.support[y][g2] {
                    total += gap(&dists, y, g, g2)?;
                    evaluated += 1;
                } else {
                    skipped += 1;
                }
            }
        }
    }
    if evaluated == 0 {
        return Err(Error::degenerate("no (y, g, g') pair has samples on both sides"));
    }
    Ok(FairnessValue { value: norm * total, evaluated_pairs: evaluated, skipped_pairs: skipped })
}

/// Equalized-odds distance: normalized sum of TV gaps between the group
/// prediction conditionals within each class.
pub fn eod(batch: &EvalBatch) -> Result<FairnessValue> {
    pairwise_metric(batch, |dists, y, g, g2| {
        let a: Vec<f64> = dists.probs.slice(ndarray::s![y, g, ..]).to_vec();
        let b: Vec<f64> = dists.probs.slice(ndarray::s![y, g2, ..]).to_vec();
        tv_distance(&a, &b)
    })
}

/// Equal-opportunity gap: normalized sum of |TPR(y, g) - TPR(y, g')| where
/// TPR(y, g) = p(yhat = y | y, g).
pub fn eo(batch: &EvalBatch) -> Result<FairnessValue> {
    pairwise_metric(batch, |dists, y, g, g2| {
        Ok((dists.probs[[y, g, y]] - dists.probs[[y, g2, y]]).abs())
    })
}

/// Fraction of correct predictions.
pub fn accuracy(batch: &EvalBatch) -> f64 {
    let correct = batch.y_true.iter().zip(&batch.y_pred).filter(|(a, b)| a == b).count();
    correct as f64 / batch.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::Array4;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    use crate::bounds::eod_violation_exact;

    #[test]
    fn conditional_dists_basics() {
        // perfect predictor, one group: one-hot rows
        let b = EvalBatch::from_columns(vec![0, 1, 2], vec![0, 1, 2], vec![0, 0, 0], None).unwrap();
        let d = conditional_pred_dists(&b).unwrap();
        for y in 0..3 {
            assert_abs_diff_eq!(d.probs[[y, 0, y]], 1.0, epsilon = 1e-15);
        }
        // frequency count: preds {0,0,1,1} in one cell
        let b = EvalBatch::from_columns(vec![0; 4], vec![0, 0, 1, 1], vec![0; 4], None).unwrap();
        let d = conditional_pred_dists(&b).unwrap();
        assert_abs_diff_eq!(d.probs[[0, 0, 0]], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(d.probs[[0, 0, 1]], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn masked_cells_are_excluded() {
        // class 1 never appears for group 1
        let b = EvalBatch::new(
            vec![0, 0, 1],
            vec![0, 0, 1],
            vec![0, 1, 0],
            None,
            2,
            2,
        )
        .unwrap();
        let d = conditional_pred_dists(&b).unwrap();
        assert!(!d.support[1][1]);
        let e = eod(&b).unwrap();
        assert_eq!(e.skipped_pairs, 1);
        assert_eq!(e.evaluated_pairs, 1);
    }

    #[test]
    fn eod_hand_case() {
        // y=0: group 0 always predicts 0, group 1 always predicts 1 (tv 1);
        // y=1 cells identical (tv 0); C = 2/(2*2*1) = 0.5
        let b = EvalBatch::from_columns(
            vec![0, 0, 1, 1],
            vec![0, 1, 1, 1],
            vec![0, 1, 0, 1],
            None,
        )
        .unwrap();
        let e = eod(&b).unwrap();
        assert_abs_diff_eq!(e.value, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn eod_zero_for_group_symmetric_predictions() {
        let b = EvalBatch::from_columns(
            vec![0, 0, 1, 1, 0, 0, 1, 1],
            vec![0, 1, 1, 0, 0, 1, 1, 0],
            vec![0, 0, 0, 0, 1, 1, 1, 1],
            None,
        )
        .unwrap();
        assert_abs_diff_eq!(eod(&b).unwrap().value, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn eod_group_relabel_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 200;
        let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let p: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let g: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let b = EvalBatch::from_columns(y.clone(), p.clone(), g.clone(), None).unwrap();
        let g_swapped: Vec<usize> = g.iter().map(|&v| (v + 1) % 3).collect();
        let b2 = EvalBatch::from_columns(y, p, g_swapped, None).unwrap();
        assert_abs_diff_eq!(eod(&b).unwrap().value, eod(&b2).unwrap().value, epsilon = 1e-14);
    }

    #[test]
    fn eo_hand_case() {
        // TPRs 0.9 vs 0.5 on class 0; class 1 empty for both groups
        let mut y = Vec::new();
        let mut p = Vec::new();
        let mut g = Vec::new();
        for i in 0..10 {
            y.push(0);
            p.push(if i < 9 { 0 } else { 1 });
            g.push(0);
        }
        for i in 0..10 {
            y.push(0);
            p.push(if i < 5 { 0 } else { 1 });
            g.push(1);
        }
        let b = EvalBatch::new(y, p, g, None, 2, 2).unwrap();
        let e = eo(&b).unwrap();
        assert_abs_diff_eq!(e.value, 0.2, epsilon = 1e-12);
        assert_eq!(e.skipped_pairs, 1);
    }

    #[test]
    fn eo_perfect_predictor_zero_and_bounded_by_eod() {
        let b = EvalBatch::from_columns(
            vec![0, 1, 0, 1],
            vec![0, 1, 0, 1],
            vec![0, 0, 1, 1],
            None,
        )
        .unwrap();
        assert_abs_diff_eq!(eo(&b).unwrap().value, 0.0, epsilon = 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let n = 120;
            let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
            let p: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
            let g: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
            let b = EvalBatch::from_columns(y, p, g, None).unwrap();
            assert!(eo(&b).unwrap().value <= eod(&b).unwrap().value + 1e-12);
        }
    }

    #[test]
    fn accuracy_basics() {
        let b = EvalBatch::from_columns(vec![0, 1], vec![0, 1], vec![0, 0], None).unwrap();
        assert_eq!(accuracy(&b), 1.0);
        let b = EvalBatch::from_columns(vec![0, 1], vec![1, 0], vec![0, 0], None).unwrap();
        assert_eq!(accuracy(&b), 0.0);
        let b =
            EvalBatch::from_columns(vec![0, 1, 0, 1], vec![0, 1, 0, 0], vec![0, 0, 0, 0], None).unwrap();
        assert_eq!(accuracy(&b), 0.75);
    }

    #[test]
    fn duplication_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 80;
        let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let p: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let g: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let b = EvalBatch::from_columns(y.clone(), p.clone(), g.clone(), None).unwrap();
        let dup = EvalBatch::from_columns(
            [y.clone(), y].concat(),
            [p.clone(), p].concat(),
            [g.clone(), g].concat(),
            None,
        )
        .unwrap();
        assert_abs_diff_eq!(eod(&b).unwrap().value, eod(&dup).unwrap().value, epsilon = 1e-14);
        assert_abs_diff_eq!(eo(&b).unwrap().value, eo(&dup).unwrap().value, epsilon = 1e-14);
        assert_abs_diff_eq!(accuracy(&b), accuracy(&dup), epsilon = 1e-15);
    }

    #[test]
    fn empirical_eod_matches_exact_on_frequency_joint() {
        // build the exact (yhat, y, d, g) law from empirical frequencies and
        // compare with the enumeration-based metric
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 300;
        let (ny, ng) = (3, 2);
        let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..ny)).collect();
        let p: Vec<usize> = (0..n).map(|_| rng.random_range(0..ny)).collect();
        let g: Vec<usize> = (0..n).map(|_| rng.random_range(0..ng)).collect();
        let b = EvalBatch::from_columns(y.clone(), p.clone(), g.clone(), None).unwrap();
        let emp = eod(&b).unwrap().value;

        let mut law = Array4::zeros((ny, ny, 1, ng));
        for i in 0..n {
            law[[p[i], y[i], 0, g[i]]] += 1.0 / n as f64;
        }
        let exact = eod_violation_exact(&law, &[0]).unwrap().value;
        assert_abs_diff_eq!(emp, exact, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_inputs_rejected() {
        assert!(EvalBatch::from_columns(vec![], vec![], vec![], None).is_err());
        // single group: metric undefined
        let b = EvalBatch::from_columns(vec![0, 1], vec![0, 1], vec![0, 0], None).unwrap();
        assert!(eod(&b).is_err());
    }
}
