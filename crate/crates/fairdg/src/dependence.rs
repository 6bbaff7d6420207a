//! Empirical distance correlation, its class-conditional variants, and a
//! Gaussian-kernel HSIC alternative, over finite batches of real-valued
//! representations.
//!
//! The conditional estimators partition the batch into cells (by label, or
//! by label and domain), compute the squared distance covariance and
//! variances inside each cell, and aggregate with the squared empirical cell
//! probabilities before taking the correlation ratio.

use ndarray::Array2;

use crate::error::{Error, Result};

/// A batch of n representation vectors of common dimension.
#[derive(Debug, Clone)]
pub struct RepBatch {
    pub values: Array2<f64>,
}

impl RepBatch {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("RepBatch: non-finite entries"));
        }
        Ok(RepBatch { values })
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Cell labels for the conditional estimators: class ids, plus optional
/// domain ids for the jointly conditioned variant.
#[derive(Debug, Clone)]
pub struct PartitionLabels {
    pub y: Vec<usize>,
    pub d: Option<Vec<usize>>,
}

impl PartitionLabels {
    pub fn by_class(y: Vec<usize>) -> Self {
        PartitionLabels { y, d: None }
    }

    pub fn by_class_and_domain(y: Vec<usize>, d: Vec<usize>) -> Self {
        PartitionLabels { y, d: Some(d) }
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if self.y.len() != n {
            return Err(Error::validation("PartitionLabels: label length mismatch"));
        }
        if let Some(d) = &self.d {
            if d.len() != n {
                return Err(Error::validation("PartitionLabels: domain length mismatch"));
            }
        }
        Ok(())
    }
}

/// Euclidean pairwise distance matrix: symmetric with a zero diagonal.
pub fn pairwise_distances(a: &RepBatch) -> Result<Array2<f64>> {
    let n = a.len();
    if n == 0 {
        return Err(Error::validation("pairwise_distances: empty batch"));
    }
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let mut s = 0.0;
            for k in 0..a.values.ncols() {
                let diff = a.values[[i, k]] - a.values[[j, k]];
                s += diff * diff;
            }
            let d = s.sqrt();
            out[[i, j]] = d;
            out[[j, i]] = d;
        }
    }
    Ok(out)
}

/// Double centering: subtract row and column means, add the grand mean.
/// All row and column sums of the result vanish.
pub fn double_center(dist: &Array2<f64>) -> Result<Array2<f64>> {
    let (n, m) = dist.dim();
    if n != m {
        return Err(Error::validation("double_center: matrix must be square"));
    }
    if n == 0 {
        return Err(Error::validation("double_center: empty matrix"));
    }
    let row_means: Vec<f64> = (0..n).map(|i| dist.row(i).sum() / n as f64).collect();
    let col_means: Vec<f64> = (0..n).map(|j| dist.column(j).sum() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            out[[i, j]] = dist[[i, j]] - row_means[i] - col_means[j] + grand;
        }
    }
    Ok(out)
}

/// dCov², dVar²(a), dVar²(b) for one sample set, already multiplied by 1/n².
fn cell_moments(a: &Array2<f64>, b: &Array2<f64>) -> (f64, f64, f64) {
    let n = a.nrows() as f64;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        cov += x * y;
        va += x * x;
        vb += y * y;
    }
    (cov / (n * n), va / (n * n), vb / (n * n))
}

fn correlation_ratio(cov: f64, va: f64, vb: f64) -> f64 {
    let denom = (va * vb).sqrt();
    if denom <= 0.0 {
        return 0.0;
    }
    // clamp tiny negatives from cancellation before the square root
    (cov / denom).max(0.0).sqrt().min(1.0)
}

/// Unconditional empirical distance correlation, in [0, 1].
pub fn dcor(a: &RepBatch, b: &RepBatch) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::validation("dcor: batch size mismatch"));
    }
    if a.len() < 2 {
        return Err(Error::validation("dcor: need at least 2 samples"));
    }
    let ca = double_center(&pairwise_distances(a)?)?;
    let cb = double_center(&pairwise_distances(b)?)?;
    let (cov, va, vb) = cell_moments(&ca, &cb);
    Ok(correlation_ratio(cov, va, vb))
}

/// Result of a conditional distance-correlation estimate: the statistic plus
/// partition-coverage diagnostics. Cells with fewer than 2 samples cannot
/// support a distance covariance and are skipped.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ConditionalDcor {
    pub value: f64,
    pub used_cells: usize,
    pub skipped_cells: usize,
    pub skipped_samples: usize,
}

fn conditional_dcor_impl(
    a: &RepBatch,
    b: &RepBatch,
    cell_ids: &[usize],
) -> Result<ConditionalDcor> {
    let n = a.len();
    if a.len() != b.len() || cell_ids.len() != n {
        return Err(Error::validation("conditional dcor: length mismatch"));
    }
    if n < 2 {
        return Err(Error::validation("conditional dcor: need at least 2 samples"));
    }
    let max_cell = *cell_ids.iter().max().unwrap();
    let mut cells: Vec<Vec<usize>> = vec![Vec::new(); max_cell + 1];
    for (i, &c) in cell_ids.iter().enumerate() {
        cells[c].push(i);
    }
    let nf = n as f64;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    let mut used = 0;
    let mut skipped = 0;
    let mut skipped_samples = 0;
    for idx in cells.iter().filter(|c| !c.is_empty()) {
        if idx.len() < 2 {
            skipped += 1;
            skipped_samples += idx.len();
            continue;
        }
        let sub_a = select_rows(&a.values, idx);
        let sub_b = select_rows(&b.values, idx);
        let ca = double_center(&pairwise_distances(&RepBatch { values: sub_a })?)?;
        let cb = double_center(&pairwise_distances(&RepBatch { values: sub_b })?)?;
        let (c, x, y) = cell_moments(&ca, &cb);
        // weight by the squared cell probability
        let w = (idx.len() as f64 / nf).powi(2);
        cov += w * c;
        va += w * x;
        vb += w * y;
        used += 1;
    }
    if used == 0 {
        return Err(Error::degenerate("conditional dcor: every partition cell has fewer than 2 samples"));
    }
    Ok(ConditionalDcor {
        value: correlation_ratio(cov, va, vb),
        used_cells: used,
        skipped_cells: skipped,
        skipped_samples,
    })
}

fn select_rows(m: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((idx.len(), m.ncols()));
    for (r, &i) in idx.iter().enumerate() {
        out.row_mut(r).assign(&m.row(i));
    }
    out
}

/// Distance correlation conditioned on the class label.
pub fn dcor_given_y(zd: &RepBatch, ze: &RepBatch, labels: &PartitionLabels) -> Result<ConditionalDcor> {
    labels.check_len(zd.len())?;
    if labels.d.is_some() {
        return Err(Error::contract("dcor_given_y: domain ids present; use dcor_given_y_d"));
    }
    conditional_dcor_impl(zd, ze, &labels.y)
}

/// Distance correlation conditioned jointly on class label and domain.
pub fn dcor_given_y_d(zg: &RepBatch, ze: &RepBatch, labels: &PartitionLabels) -> Result<ConditionalDcor> {
    labels.check_len(zg.len())?;
    let d = labels
        .d
        .as_ref()
        .ok_or_else(|| Error::contract("dcor_given_y_d: domain ids required"))?;
    let nd = d.iter().max().map_or(0, |&m| m + 1);
    let cell_ids: Vec<usize> = labels.y.iter().zip(d).map(|(&y, &dd)| y * nd + dd).collect();
    conditional_dcor_impl(zg, ze, &cell_ids)
}

/// Kernel bandwidth specification for [`hsic`].
#[derive(Debug, Clone, Copy)]
pub enum Bandwidth {
    Fixed(f64),
    Median,
}

fn median_bandwidth(dist: &Array2<f64>) -> Result<f64> {
    let n = dist.nrows();
    let mut offdiag: Vec<f64> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            offdiag.push(dist[[i, j]]);
        }
    }
    offdiag.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = offdiag.len();
    let median = if m % 2 == 1 { offdiag[m / 2] } else { 0.5 * (offdiag[m / 2 - 1] + offdiag[m / 2]) };
    if median <= 0.0 {
        return Err(Error::degenerate("hsic: median pairwise distance is zero"));
    }
    Ok(median)
}

/// Biased HSIC V-statistic with Gaussian kernels: trace(K H L H) / n².
pub fn hsic(a: &RepBatch, b: &RepBatch, bandwidth: Bandwidth) -> Result<f64> {
    let n = a.len();
    if n != b.len() {
        return Err(Error::validation("hsic: batch size mismatch"));
    }
    if n < 4 {
        return Err(Error::validation("hsic: need at least 4 samples"));
    }
    let da = pairwise_distances(a)?;
    let db = pairwise_distances(b)?;
    let gram = |d: &Array2<f64>| -> Result<Array2<f64>> {
        let sigma = match bandwidth {
            Bandwidth::Fixed(s) => {
                if s <= 0.0 {
                    return Err(Error::validation("hsic: bandwidth must be positive"));
                }
                s
            }
            Bandwidth::Median => median_bandwidth(d)?,
        };
        let c = -1.0 / (2.0 * sigma * sigma);
        Ok(d.mapv(|v| (c * v * v).exp()))
    };
    let k = gram(&da)?;
    let l = gram(&db)?;
    // trace(K H L H) = sum_{ij} (HKH)_{ij} L_{ij}; centering K suffices since
    // H is idempotent and symmetric
    let kc = double_center_gram(&k);
    let mut tr = 0.0;
    for (x, y) in kc.iter().zip(l.iter()) {
        tr += x * y;
    }
    Ok((tr / (n as f64 * n as f64)).max(0.0))
}

/// Double centering for Gram matrices: H K H with H = I - 11ᵀ/n. Same
/// algebra as [`double_center`] but without the symmetry pre-check.
fn double_center_gram(k: &Array2<f64>) -> Array2<f64> {
    let n = k.nrows();
    let row_means: Vec<f64> = (0..n).map(|i| k.row(i).sum() / n as f64).collect();
    let col_means: Vec<f64> = (0..n).map(|j| k.column(j).sum() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    Array2::from_shape_fn((n, n), |(i, j)| k[[i, j]] - row_means[i] - col_means[j] + grand)
}
