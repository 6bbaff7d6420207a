//! Minimal differentiable stack: plain MLPs for the four networks (feature
//! encoder, classifier, domain encoder, group encoder), a bounded softmax
//! cross-entropy, the full trade-off objective
//!
//! ```text
//! (1 - lambda) * CE_bounded  +  lambda * dCor(Z_G, Z_E | y, d)  +  gamma * dCor(Z_D, Z_E | y)
//! ```
//!
//! and exact hand-derived gradients. The dCor terms use smoothed distances
//! sqrt(||.||^2 + eps) so the objective is differentiable everywhere; the
//! exact-Euclidean estimator lives in [`crate::dependence`].

use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hidden-layer activation. The output layer is always linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(&self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Relu => v.max(0.0),
        }
    }

    fn derivative(&self, pre: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - pre.tanh().powi(2),
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// A fully connected network. `weights[l]` has shape (in, out).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MLPParams {
    pub layer_dims: Vec<usize>,
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub activation: Activation,
}

impl MLPParams {
    /// Symmetric uniform init in +-sqrt(6 / (fan_in + fan_out)), zero biases.
    pub fn glorot(layer_dims: &[usize], activation: Activation, rng: &mut ChaCha8Rng) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.iter().any(|&d| d == 0) {
            return Err(Error::config("MLPParams: need at least two non-zero layer dims"));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in layer_dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            weights.push(Array2::from_shape_fn((fan_in, fan_out), |_| {
                rng.random_range(-bound..bound)
            }));
            biases.push(Array1::zeros(fan_out));
        }
        Ok(MLPParams { layer_dims: layer_dims.to_vec(), weights, biases, activation })
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    /// Forward pass keeping the per-layer trace needed for backprop.
    pub fn forward(&self, x: &Array2<f64>) -> Result<ForwardTrace> {
        if x.ncols() != self.input_dim() {
            return Err(Error::validation(format!(
                "forward: input dim {} does not match layer dim {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        let n_layers = self.weights.len();
        let mut activations = vec![x.clone()];
        let mut pre_activations = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let z = activations[l].dot(&self.weights[l]) + &self.biases[l];
            let a = if l + 1 == n_layers { z.clone() } else { z.mapv(|v| self.activation.apply(v)) };
            pre_activations.push(z);
            activations.push(a);
        }
        Ok(ForwardTrace { activations, pre_activations })
    }

    /// Backprop `grad_out` (dL/d output, shape n x out) through the network.
    /// Returns parameter gradients and the gradient with respect to the input.
    pub fn backward(&self, trace: &ForwardTrace, grad_out: &Array2<f64>) -> (MLPGrads, Array2<f64>) {
        let n_layers = self.weights.len();
        let mut grads = MLPGrads::zeros_like(self);
        let mut delta = grad_out.clone();
        for l in (0..n_layers).rev() {
            if l + 1 != n_layers {
                // hidden layer: multiply by the activation derivative
                delta = &delta * &trace.pre_activations[l].mapv(|v| self.activation.derivative(v));
            }
            grads.weights[l] = trace.activations[l].t().dot(&delta);
            grads.biases[l] = delta.sum_axis(ndarray::Axis(0));
            delta = delta.dot(&self.weights[l].t());
        }
        (grads, delta)
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn assign_from_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::validation("assign_from_flat: length mismatch"));
        }
        let mut k = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            for v in w.iter_mut() {
                *v = flat[k];
                k += 1;
            }
            for v in b.iter_mut() {
                *v = flat[k];
                k += 1;
            }
        }
        Ok(())
    }

    /// In-place SGD step: p -= lr * g.
    pub fn sgd_step(&mut self, grads: &MLPGrads, lr: f64) {
        for (w, gw) in self.weights.iter_mut().zip(&grads.weights) {
            w.scaled_add(-lr, gw);
        }
        for (b, gb) in self.biases.iter_mut().zip(&grads.biases) {
            b.scaled_add(-lr, gb);
        }
    }
}

/// Cached quantities from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// activations[0] is the input; activations[L] the output.
    pub activations: Vec<Array2<f64>>,
    pub pre_activations: Vec<Array2<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().unwrap()
    }
}

/// Parameter-shaped gradient accumulator.
#[derive(Debug, Clone)]
pub struct MLPGrads {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl MLPGrads {
    pub fn zeros_like(p: &MLPParams) -> Self {
        MLPGrads {
            weights: p.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            biases: p.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|&v| v == 0.0))
            && self.biases.iter().all(|b| b.iter().all(|&v| v == 0.0))
    }
}

/// A labeled sample batch: features plus label, domain, and group ids.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleBatch {
    pub x: Array2<f64>,
    pub y: Vec<usize>,
    pub d: Vec<usize>,
    pub g: Vec<usize>,
    pub n_labels: usize,
    pub n_domains: usize,
    pub n_groups: usize,
}

impl SampleBatch {
    pub fn new(
        x: Array2<f64>,
        y: Vec<usize>,
        d: Vec<usize>,
        g: Vec<usize>,
        n_labels: usize,
        n_domains: usize,
        n_groups: usize,
    ) -> Result<Self> {
        let n = x.nrows();
        if n == 0 {
            return Err(Error::validation("SampleBatch: empty batch"));
        }
        if y.len() != n || d.len() != n || g.len() != n {
            return Err(Error::validation("SampleBatch: column length mismatch"));
        }
        if y.iter().any(|&v| v >= n_labels)
            || d.iter().any(|&v| v >= n_domains)
            || g.iter().any(|&v| v >= n_groups)
        {
            return Err(Error::validation("SampleBatch: id out of range"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("SampleBatch: non-finite features"));
        }
        Ok(SampleBatch { x, y, d, g, n_labels, n_domains, n_groups })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row subset in the given index order.
    pub fn select(&self, idx: &[usize]) -> SampleBatch {
        let mut x = Array2::zeros((idx.len(), self.x.ncols()));
        for (r, &i) in idx.iter().enumerate() {
            x.row_mut(r).assign(&self.x.row(i));
        }
        SampleBatch {
            x,
            y: idx.iter().map(|&i| self.y[i]).collect(),
            d: idx.iter().map(|&i| self.d[i]).collect(),
            g: idx.iter().map(|&i| self.g[i]).collect(),
            n_labels: self.n_labels,
            n_domains: self.n_domains,
            n_groups: self.n_groups,
        }
    }
}

/// The four networks. The domain and group encoders are frozen after stage-1
/// training; only the feature encoder and classifier receive gradients.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncoderStack {
    pub encoder: MLPParams,
    pub classifier: MLPParams,
    pub domain_enc: MLPParams,
    pub group_enc: MLPParams,
}

impl EncoderStack {
    pub fn validate(&self) -> Result<()> {
        if self.encoder.output_dim() != self.classifier.input_dim() {
            return Err(Error::config("EncoderStack: encoder output does not feed the classifier"));
        }
        Ok(())
    }
}

/// Trade-off and smoothing parameters for the training objective.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    /// Utility-fairness trade-off weight in [0, 1).
    pub lambda: f64,
    /// Source-domain-invariance weight, >= 0.
    pub gamma: f64,
    /// Cross-entropy cap C; softmax outputs are floored at exp(-C).
    pub cap: f64,
    /// Distance smoothing epsilon inside sqrt(||.||^2 + eps).
    pub smoothing_eps: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig { lambda: 0.0, gamma: 0.0, cap: 1.0, smoothing_eps: 1e-12 }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.lambda) {
            return Err(Error::config("ObjectiveConfig: lambda must lie in [0, 1)"));
        }
        if self.gamma < 0.0 || !self.gamma.is_finite() {
            return Err(Error::config("ObjectiveConfig: gamma must be a non-negative real"));
        }
        if self.cap <= 0.0 {
            return Err(Error::config("ObjectiveConfig: cap must be positive"));
        }
        if self.smoothing_eps <= 0.0 {
            return Err(Error::config("ObjectiveConfig: smoothing_eps must be positive"));
        }
        Ok(())
    }

    /// The cap actually used for `n_labels` classes: flooring requires
    /// exp(-C) < 1/|Y|, so an infeasible cap is raised to ln(2|Y|).
    pub fn effective_cap(&self, n_labels: usize) -> f64 {
        if 1.0 - (-self.cap).exp() * n_labels as f64 > 0.0 {
            self.cap
        } else {
            (2.0 * n_labels as f64).ln()
        }
    }
}

/// Softmax with every output floored at exp(-cap):
/// p_hat_i = p_i (1 - e^{-cap} k) + e^{-cap}. Sums to one; -ln p_hat <= cap.
pub fn bounded_softmax(logits: &[f64], cap: f64) -> Result<Vec<f64>> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("bounded_softmax: non-finite logits"));
    }
    let k = logits.len() as f64;
    let floor = (-cap).exp();
    let alpha = 1.0 - floor * k;
    if alpha <= 0.0 {
        return Err(Error::config(format!(
            "bounded_softmax: cap {cap} too small for {} classes; raise cap above ln({})",
            logits.len(),
            logits.len()
        )));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let s: f64 = exps.iter().sum();
    Ok(exps.iter().map(|&e| (e / s) * alpha + floor).collect())
}

/// Value of the objective with its additive term breakdown.
#[derive(Debug, Clone, Serialize)]
pub struct ObjectiveTerms {
    pub total: f64,
    /// (1 - lambda) * mean bounded cross-entropy.
    pub utility: f64,
    /// lambda * dCor(Z_G, Z_E | y, d).
    pub fairness: f64,
    /// gamma * dCor(Z_D, Z_E | y).
    pub invariance: f64,
    /// Raw (unweighted) dCor values; zero when the weight is zero.
    pub dcor_fairness: f64,
    pub dcor_invariance: f64,
    pub effective_cap: f64,
    pub skipped_cells_fairness: usize,
    pub skipped_cells_invariance: usize,
}

/// Gradients for the whole stack. The frozen domain and group encoders are
/// included as all-zero blocks so freezing is checkable.
#[derive(Debug, Clone)]
pub struct StackGrads {
    pub encoder: MLPGrads,
    pub classifier: MLPGrads,
    pub domain_enc: MLPGrads,
    pub group_enc: MLPGrads,
}

/// Smoothed conditional distance correlation between a frozen representation
/// and `ze`, partitioned by `cell_ids`, together with its exact gradient
/// with respect to `ze`. Cells with fewer than 2 rows are skipped.
fn smoothed_conditional_dcor(
    frozen: &Array2<f64>,
    ze: &Array2<f64>,
    cell_ids: &[usize],
    eps: f64,
    want_grad: bool,
) -> Result<(f64, Array2<f64>, usize)> {
    let n = ze.nrows();
    if frozen.nrows() != n || cell_ids.len() != n {
        return Err(Error::validation("smoothed dcor: length mismatch"));
    }
    let max_cell = *cell_ids.iter().max().unwrap();
    let mut cells: Vec<Vec<usize>> = vec![Vec::new(); max_cell + 1];
    for (i, &c) in cell_ids.iter().enumerate() {
        cells[c].push(i);
    }

    struct CellData {
        idx: Vec<usize>,
        a_centered: Array2<f64>,
        b_centered: Array2<f64>,
        b_dist: Array2<f64>,
    }

    let smooth_dist = |m: &Array2<f64>, idx: &[usize]| -> Array2<f64> {
        let s = idx.len();
        Array2::from_shape_fn((s, s), |(i, j)| {
            let mut sq = 0.0;
            for k in 0..m.ncols() {
                let diff = m[[idx[i], k]] - m[[idx[j], k]];
                sq += diff * diff;
            }
            (sq + eps).sqrt()
        })
    };
    let center = |d: &Array2<f64>| -> Array2<f64> {
        let s = d.nrows();
        let row: Vec<f64> = (0..s).map(|i| d.row(i).sum() / s as f64).collect();
        let col: Vec<f64> = (0..s).map(|j| d.column(j).sum() / s as f64).collect();
        let grand = row.iter().sum::<f64>() / s as f64;
        Array2::from_shape_fn((s, s), |(i, j)| d[[i, j]] - row[i] - col[j] + grand)
    };

    let nf = (n * n) as f64;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    let mut used: Vec<CellData> = Vec::new();
    let mut skipped = 0usize;
    for idx in cells.into_iter().filter(|c| !c.is_empty()) {
        if idx.len() < 2 {
            skipped += 1;
            continue;
        }
        let a_dist = smooth_dist(frozen, &idx);
        let b_dist = smooth_dist(ze, &idx);
        let a_c = center(&a_dist);
        let b_c = center(&b_dist);
        for (x, y) in a_c.iter().zip(b_c.iter()) {
            cov += x * y;
        }
        for x in a_c.iter() {
            va += x * x;
        }
        for y in b_c.iter() {
            vb += y * y;
        }
        used.push(CellData { idx, a_centered: a_c, b_centered: b_c, b_dist });
    }
    if used.is_empty() {
        return Err(Error::degenerate("smoothed dcor: every partition cell has fewer than 2 samples"));
    }
    cov /= nf;
    va /= nf;
    vb /= nf;

    let mut grad = Array2::zeros(ze.dim());
    let denom = (va * vb).sqrt();
    if denom <= 0.0 || cov <= 0.0 {
        // value is 0 by the zero-denominator rule (or clamped at 0); the
        // gradient is taken as 0 on this branch
        return Ok((0.0, grad, skipped));
    }
    let r2 = cov / denom;
    let value = r2.sqrt();
    if want_grad {
        // value = sqrt(cov / sqrt(va vb)); va depends only on the frozen side
        let dv_dcov = 1.0 / (2.0 * value * denom);
        let dr2_dvb = -cov * va / (2.0 * (va * vb).powf(1.5));
        let dv_dvb = dr2_dvb / (2.0 * value);
        for cell in &used {
            let s = cell.idx.len();
            for i in 0..s {
                for j in 0..s {
                    if i == j {
                        continue;
                    }
                    // dL/db_ij: centering is linear and self-adjoint, and the
                    // frozen-side matrix is already centered
                    let dl_db = (dv_dcov * cell.a_centered[[i, j]]
                        + dv_dvb * 2.0 * cell.b_centered[[i, j]])
                        / nf;
                    // b_ij depends on both rows; accumulate on row i (the
                    // (j, i) entry contributes symmetrically when j iterates)
                    let bij = cell.b_dist[[i, j]];
                    for k in 0..ze.ncols() {
                        let diff = ze[[cell.idx[i], k]] - ze[[cell.idx[j], k]];
                        grad[[cell.idx[i], k]] += 2.0 * dl_db * diff / bij;
                    }
                }
            }
        }
    }
    Ok((value, grad, skipped))
}

fn fairness_cells(batch: &SampleBatch) -> Vec<usize> {
    batch
        .y
        .iter()
        .zip(&batch.d)
        .map(|(&y, &d)| y * batch.n_domains + d)
        .collect()
}

struct ObjectivePass {
    terms: ObjectiveTerms,
    grads: Option<StackGrads>,
}

fn objective_pass(
    stack: &EncoderStack,
    batch: &SampleBatch,
    cfg: &ObjectiveConfig,
    want_grad: bool,
) -> Result<ObjectivePass> {
    cfg.validate()?;
    stack.validate()?;
    let n = batch.len();
    let ze_trace = stack.encoder.forward(&batch.x)?;
    let ze = ze_trace.output().clone();
    let logit_trace = stack.classifier.forward(&ze)?;
    let logits = logit_trace.output();
    let ny = stack.classifier.output_dim();
    if batch.y.iter().any(|&y| y >= ny) {
        return Err(Error::validation("objective: label outside classifier output range"));
    }

    let cap = cfg.effective_cap(ny);
    let floor = (-cap).exp();
    let alpha = 1.0 - floor * ny as f64;

    // bounded-softmax cross entropy and its logit gradient
    let mut ce_sum = 0.0;
    let w_util = (1.0 - cfg.lambda) / n as f64;
    let mut dlogits = Array2::zeros(logits.dim());
    for i in 0..n {
        let row: Vec<f64> = logits.row(i).to_vec();
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
        let s: f64 = exps.iter().sum();
        let p: Vec<f64> = exps.iter().map(|&e| e / s).collect();
        let y = batch.y[i];
        let p_hat_y = p[y] * alpha + floor;
        ce_sum += -p_hat_y.ln();
        if want_grad {
            // d(-ln p_hat_y)/d logit_k = -(alpha / p_hat_y) p_y (delta_ky - p_k)
            let c = -(alpha / p_hat_y) * p[y];
            for k in 0..ny {
                let delta = if k == y { 1.0 } else { 0.0 };
                dlogits[[i, k]] = w_util * c * (delta - p[k]);
            }
        }
    }
    let utility = (1.0 - cfg.lambda) * ce_sum / n as f64;

    // regularizers (computed only when active)
    let mut dcor_fair = 0.0;
    let mut dcor_inv = 0.0;
    let mut grad_ze_reg: Array2<f64> = Array2::zeros(ze.dim());
    let mut skipped_fair = 0;
    let mut skipped_inv = 0;
    // the frozen encoders consume the raw feature block; conditioning
    // coordinates appended for the trainable encoder are not part of it
    let frozen_input = |input_dim: usize| -> Result<Array2<f64>> {
        if input_dim == batch.x.ncols() {
            Ok(batch.x.clone())
        } else if input_dim < batch.x.ncols() {
            Ok(batch.x.slice(ndarray::s![.., ..input_dim]).to_owned())
        } else {
            Err(Error::validation("objective: frozen encoder expects more features than provided"))
        }
    };
    if cfg.lambda > 0.0 {
        let zg = stack.group_enc.forward(&frozen_input(stack.group_enc.input_dim())?)?.output().clone();
        let cells = fairness_cells(batch);
        let (v, g, sk) = smoothed_conditional_dcor(&zg, &ze, &cells, cfg.smoothing_eps, want_grad)?;
        dcor_fair = v;
        skipped_fair = sk;
        grad_ze_reg.scaled_add(cfg.lambda, &g);
    }
    if cfg.gamma > 0.0 {
        let zd = stack.domain_enc.forward(&frozen_input(stack.domain_enc.input_dim())?)?.output().clone();
        let (v, g, sk) = smoothed_conditional_dcor(&zd, &ze, &batch.y, cfg.smoothing_eps, want_grad)?;
        dcor_inv = v;
        skipped_inv = sk;
        grad_ze_reg.scaled_add(cfg.gamma, &g);
    }

    let fairness = cfg.lambda * dcor_fair;
    let invariance = cfg.gamma * dcor_inv;
    let terms = ObjectiveTerms {
        total: utility + fairness + invariance,
        utility,
        fairness,
        invariance,
        dcor_fairness: dcor_fair,
        dcor_invariance: dcor_inv,
        effective_cap: cap,
        skipped_cells_fairness: skipped_fair,
        skipped_cells_invariance: skipped_inv,
    };

    let grads = if want_grad {
        let (clf_grads, dze_from_clf) = stack.classifier.backward(&logit_trace, &dlogits);
        let dze_total = &dze_from_clf + &grad_ze_reg;
        let (enc_grads, _) = stack.encoder.backward(&ze_trace, &dze_total);
        Some(StackGrads {
            encoder: enc_grads,
            classifier: clf_grads,
            domain_enc: MLPGrads::zeros_like(&stack.domain_enc),
            group_enc: MLPGrads::zeros_like(&stack.group_enc),
        })
    } else {
        None
    };
    Ok(ObjectivePass { terms, grads })
}

/// Objective value with its term breakdown.
pub fn objective_value(stack: &EncoderStack, batch: &SampleBatch, cfg: &ObjectiveConfig) -> Result<ObjectiveTerms> {
    Ok(objective_pass(stack, batch, cfg, false)?.terms)
}

/// Exact gradients of the smoothed objective for the trainable networks.
/// The frozen domain and group encoders receive exactly-zero blocks.
pub fn backward(stack: &EncoderStack, batch: &SampleBatch, cfg: &ObjectiveConfig) -> Result<(ObjectiveTerms, StackGrads)> {
    let pass = objective_pass(stack, batch, cfg, true)?;
    Ok((pass.terms, pass.grads.unwrap()))
}

/// Maximum relative error between analytic gradients and central finite
/// differences over every trainable coordinate. Guarded to small nets.
pub fn grad_check(stack: &EncoderStack, batch: &SampleBatch, cfg: &ObjectiveConfig, h: f64) -> Result<f64> {
    let n_params = stack.encoder.n_params() + stack.classifier.n_params();
    if n_params > 10_000 {
        return Err(Error::contract(format!(
            "grad_check: {n_params} trainable parameters exceeds the 10^4 guard"
        )));
    }
    let (_, grads) = backward(stack, batch, cfg)?;
    let analytic: Vec<f64> = [grads.encoder.flatten(), grads.classifier.flatten()].concat();

    let mut work = stack.clone();
    let base_enc = stack.encoder.flatten();
    let base_clf = stack.classifier.flatten();
    let n_enc = base_enc.len();
    let eval = |work: &mut EncoderStack, flat: &[f64]| -> Result<f64> {
        work.encoder.assign_from_flat(&flat[..n_enc])?;
        work.classifier.assign_from_flat(&flat[n_enc..])?;
        Ok(objective_value(work, batch, cfg)?.total)
    };
    let base: Vec<f64> = [base_enc, base_clf].concat();
    let mut max_rel = 0.0f64;
    for i in 0..base.len() {
        let mut plus = base.clone();
        plus[i] += h;
        let mut minus = base.clone();
        minus[i] -= h;
        let fd = (eval(&mut work, &plus)? - eval(&mut work, &minus)?) / (2.0 * h);
        let denom = analytic[i].abs().max(fd.abs()).max(1e-6);
        max_rel = max_rel.max((analytic[i] - fd).abs() / denom);
    }
    Ok(max_rel)
}

/// Version-tagged checkpoint wrapper for stack serialization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub stack: EncoderStack,
}

pub const CHECKPOINT_VERSION: u32 = 1;

impl Checkpoint {
    pub fn new(stack: EncoderStack) -> Self {
        Checkpoint { format_version: CHECKPOINT_VERSION, stack }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint is serializable")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Checkpoint =
            serde_json::from_str(s).map_err(|e| Error::validation(format!("checkpoint JSON: {e}")))?;
        if c.format_version != CHECKPOINT_VERSION {
            return Err(Error::validation(format!(
                "checkpoint version {} unsupported (expected {CHECKPOINT_VERSION})",
                c.format_version
            )));
        }
        c.stack.validate()?;
        Ok(c)
    }
}
