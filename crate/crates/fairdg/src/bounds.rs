//! Executable verification of the risk and equalized-odds upper bounds, the
//! risk-to-MI lower bound, the chain-rule inequalities, and the four
//! supporting lemmas, all by exact enumeration on [`FiniteJoint`] instances.

use std::collections::BTreeMap;

use ndarray::{Array2, Array3, Array4};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::prob::{
    conditional_entropy, conditional_mutual_information, mutual_information, push_channel,
    tv_distance, Channel, FiniteJoint,
};

/// Loss functions admissible in the risk bound: non-negative and capped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    BoundedCrossEntropy,
    ZeroOne,
}

#[derive(Debug, Clone, Copy)]
pub struct BoundedLoss {
    pub cap: f64,
    pub kind: LossKind,
}

impl BoundedLoss {
    pub fn zero_one() -> Self {
        BoundedLoss { cap: 1.0, kind: LossKind::ZeroOne }
    }

    pub fn bounded_cross_entropy(cap: f64) -> Self {
        BoundedLoss { cap, kind: LossKind::BoundedCrossEntropy }
    }

    /// The cap actually achievable for this loss on `n_labels` classes.
    /// Flooring softmax outputs at exp(-C) requires exp(-C) < 1/|Y|; when the
    /// configured cap is too small the cap is raised to ln(2|Y|).
    pub fn effective_cap(&self, n_labels: usize) -> f64 {
        match self.kind {
            LossKind::ZeroOne => self.cap,
            LossKind::BoundedCrossEntropy => {
                if 1.0 - (-self.cap).exp() * n_labels as f64 > 0.0 {
                    self.cap
                } else {
                    (2.0 * n_labels as f64).ln()
                }
            }
        }
    }
}

/// Floor every entry of a distribution at exp(-cap) by the affine map
/// p -> p (1 - exp(-cap) k) + exp(-cap).
pub fn floor_distribution(p: &[f64], cap: f64) -> Vec<f64> {
    let k = p.len() as f64;
    let floor = (-cap).exp();
    let alpha = 1.0 - floor * k;
    p.iter().map(|&v| v * alpha + floor).collect()
}

fn ser_terms<S: Serializer>(terms: &Vec<(String, f64)>, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeMap;
    let mut m = s.serialize_map(Some(terms.len()))?;
    for (k, v) in terms {
        m.serialize_entry(k, v)?;
    }
    m.end()
}

/// Outcome of one bound check: lhs <= rhs with the rhs decomposed into named
/// terms that sum to it. `slack = rhs - lhs` must be >= -1e-9 when the bound
/// holds. `aux` carries side diagnostics that are not part of the sum.
#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    #[serde(serialize_with = "ser_terms")]
    pub terms: Vec<(String, f64)>,
    pub slack: f64,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub aux: BTreeMap<String, f64>,
}

impl BoundReport {
    fn new(name: &str, lhs: f64, terms: Vec<(String, f64)>) -> Self {
        let rhs: f64 = terms.iter().map(|(_, v)| v).sum();
        BoundReport { name: name.to_string(), lhs, rhs, terms, slack: rhs - lhs, aux: BTreeMap::new() }
    }

    fn with_aux(mut self, key: &str, value: f64) -> Self {
        self.aux.insert(key.to_string(), value);
        self
    }
}

fn domain_mass(t: &Array4<f64>, filter: &[usize]) -> f64 {
    let (a, b, _, c) = t.dim();
    let mut m = 0.0;
    for &d in filter {
        for i in 0..a {
            for j in 0..b {
                for k in 0..c {
                    m += t[[i, j, d, k]];
                }
            }
        }
    }
    m
}

/// Condition a 4-way law on D being in `filter`: entries outside the filter
/// are zeroed, the rest renormalized.
pub fn condition_on_domains(t: &Array4<f64>, filter: &[usize]) -> Result<Array4<f64>> {
    if filter.is_empty() {
        return Err(Error::degenerate("empty domain filter"));
    }
    let mass = domain_mass(t, filter);
    if mass <= 0.0 {
        return Err(Error::degenerate("domain filter has zero probability mass"));
    }
    let mut out = Array4::zeros(t.dim());
    for &d in filter {
        let (a, b, _, c) = t.dim();
        for i in 0..a {
            for j in 0..b {
                for k in 0..c {
                    out[[i, j, d, k]] = t[[i, j, d, k]] / mass;
                }
            }
        }
    }
    Ok(out)
}

/// Expected risk E[L(yhat, y)] under the law of (Yhat, Y) conditioned on
/// D in `filter`. Only the zero-one loss is a pure function of the pair; the
/// cross-entropy path lives in [`cross_entropy_risk`].
pub fn expected_risk(pred: &Array4<f64>, loss: &BoundedLoss, filter: &[usize]) -> Result<f64> {
    if loss.kind != LossKind::ZeroOne {
        return Err(Error::contract(
            "expected_risk on a prediction law requires the zero-one loss; use cross_entropy_risk for CE",
        ));
    }
    let q = condition_on_domains(pred, filter)?;
    let (nyh, ny, nd, ng) = q.dim();
    let mut r = 0.0;
    for yh in 0..nyh {
        for y in 0..ny {
            if yh == y {
                continue;
            }
            for d in 0..nd {
                for g in 0..ng {
                    r += q[[yh, y, d, g]];
                }
            }
        }
    }
    Ok(r)
}

/// Expected cross-entropy risk E[-ln rows(x)[y]] conditioned on D in
/// `filter`, with the channel rows read as predicted distributions.
pub fn cross_entropy_risk(joint: &FiniteJoint, rows: &Array2<f64>, filter: &[usize]) -> Result<f64> {
    let t = joint.table();
    let (nx, ny, _, ng) = joint.sizes;
    if rows.nrows() != nx || rows.ncols() != ny {
        return Err(Error::validation("cross_entropy_risk: row table shape mismatch"));
    }
    let mass = domain_mass(&t, filter);
    if mass <= 0.0 {
        return Err(Error::degenerate("cross_entropy_risk: zero-mass domain filter"));
    }
    let mut r = 0.0;
    for x in 0..nx {
        for y in 0..ny {
            let mut p_xy = 0.0;
            for &d in filter {
                for g in 0..ng {
                    p_xy += t[[x, y, d, g]];
                }
            }
            if p_xy > 0.0 {
                let q = rows[[x, y]];
                r += (p_xy / mass) * if q > 0.0 { -q.ln() } else { f64::INFINITY };
            }
        }
    }
    Ok(r)
}

/// Exact EOD violation of a prediction law restricted to D in `filter`.
#[derive(Debug, Clone, Serialize)]
pub struct EodExact {
    pub value: f64,
    pub evaluated_pairs: usize,
    pub skipped_pairs: usize,
}

pub fn eod_violation_exact(pred: &Array4<f64>, filter: &[usize]) -> Result<EodExact> {
    let q = condition_on_domains(pred, filter)?;
    let (nyh, ny, nd, ng) = q.dim();
    if ng < 2 {
        return Err(Error::validation("eod_violation_exact: need at least two groups"));
    }
    // p(yhat | y, g) and cell masses
    let mut cond = vec![vec![None::<Vec<f64>>; ng]; ny];
    for y in 0..ny {
        for g in 0..ng {
            let mut cell = vec![0.0; nyh];
            let mut mass = 0.0;
            for yh in 0..nyh {
                for d in 0..nd {
                    cell[yh] += q[[yh, y, d, g]];
                }
            }
            mass += cell.iter().sum::<f64>();
            if mass > 0.0 {
                cond[y][g] = Some(cell.iter().map(|v| v / mass).collect());
            }
        }
    }
    let norm = 2.0 / (ny as f64 * ng as f64 * (ng as f64 - 1.0));
    let mut total = 0.0;
    let mut evaluated = 0;
    let mut skipped = 0;
    for y in 0..ny {
        for g in 0..ng {
            for g2 in (g + 1)..ng {
                match (&cond[y][g], &cond[y][g2]) {
                    (Some(a), Some(b)) => {
                        total += tv_distance(a, b)?;
                        evaluated += 1;
                    }
                    _ => skipped += 1,
                }
            }
        }
    }
    if evaluated == 0 {
        return Err(Error::degenerate("eod_violation_exact: every (y, g, g') pair is empty"));
    }
    Ok(EodExact { value: norm * total, evaluated_pairs: evaluated, skipped_pairs: skipped })
}

// ---- marginalization helpers on a (yhat, y, d, g) law ----

fn mi_d_vs_pred_label(q: &Array4<f64>) -> Result<f64> {
    let (nyh, ny, nd, ng) = q.dim();
    let mut t = Array2::zeros((nd, nyh * ny));
    for yh in 0..nyh {
        for y in 0..ny {
            for d in 0..nd {
                for g in 0..ng {
                    t[[d, yh * ny + y]] += q[[yh, y, d, g]];
                }
            }
        }
    }
    mutual_information(&t)
}

fn cmi_g_pred_given_y_d(q: &Array4<f64>) -> Result<f64> {
    let (nyh, ny, nd, ng) = q.dim();
    let mut t = Array3::zeros((ng, nyh, ny * nd));
    for yh in 0..nyh {
        for y in 0..ny {
            for d in 0..nd {
                for g in 0..ng {
                    t[[g, yh, y * nd + d]] += q[[yh, y, d, g]];
                }
            }
        }
    }
    conditional_mutual_information(&t)
}

fn cmi_d_pred_given_y_g(q: &Array4<f64>) -> Result<f64> {
    let (nyh, ny, nd, ng) = q.dim();
    let mut t = Array3::zeros((nd, nyh, ny * ng));
    for yh in 0..nyh {
        for y in 0..ny {
            for d in 0..nd {
                for g in 0..ng {
                    t[[d, yh, y * ng + g]] += q[[yh, y, d, g]];
                }
            }
        }
    }
    conditional_mutual_information(&t)
}

fn cmi_d_pred_given_y(q: &Array4<f64>) -> Result<f64> {
    let (nyh, ny, nd, ng) = q.dim();
    let mut t = Array3::zeros((nd, nyh, ny));
    for yh in 0..nyh {
        for y in 0..ny {
            for d in 0..nd {
                for g in 0..ng {
                    t[[d, yh, y]] += q[[yh, y, d, g]];
                }
            }
        }
    }
    conditional_mutual_information(&t)
}

fn cmi_g_pred_given_y(q: &Array4<f64>) -> Result<f64> {
    let (nyh, ny, nd, ng) = q.dim();
    let mut t = Array3::zeros((ng, nyh, ny));
    for yh in 0..nyh {
        for y in 0..ny {
            for d in 0..nd {
                for g in 0..ng {
                    t[[g, yh, y]] += q[[yh, y, d, g]];
                }
            }
        }
    }
    conditional_mutual_information(&t)
}

fn cmi_pred_y_given_d(q: &Array4<f64>) -> Result<f64> {
    let (nyh, ny, nd, ng) = q.dim();
    let mut t = Array3::zeros((nyh, ny, nd));
    for yh in 0..nyh {
        for y in 0..ny {
            for d in 0..nd {
                for g in 0..ng {
                    t[[yh, y, d]] += q[[yh, y, d, g]];
                }
            }
        }
    }
    conditional_mutual_information(&t)
}

fn mi_pred_y(q: &Array4<f64>) -> Result<f64> {
    let (nyh, ny, nd, ng) = q.dim();
    let mut t = Array2::zeros((nyh, ny));
    for yh in 0..nyh {
        for y in 0..ny {
            for d in 0..nd {
                for g in 0..ng {
                    t[[yh, y]] += q[[yh, y, d, g]];
                }
            }
        }
    }
    mutual_information(&t)
}

fn mi_pred_d(q: &Array4<f64>) -> Result<f64> {
    let (nyh, ny, nd, ng) = q.dim();
    let mut t = Array2::zeros((nyh, nd));
    for yh in 0..nyh {
        for y in 0..ny {
            for d in 0..nd {
                for g in 0..ng {
                    t[[yh, d]] += q[[yh, y, d, g]];
                }
            }
        }
    }
    mutual_information(&t)
}

/// (y, g) marginal of a 4-way law over (x|yhat, y, d, g).
fn yg_marginal(t: &Array4<f64>) -> Array2<f64> {
    let (na, ny, nd, ng) = t.dim();
    let mut m = Array2::zeros((ny, ng));
    for a in 0..na {
        for y in 0..ny {
            for d in 0..nd {
                for g in 0..ng {
                    m[[y, g]] += t[[a, y, d, g]];
                }
            }
        }
    }
    m
}

/// The channel the risk bound is instantiated with: raw rows for the
/// zero-one loss, floored rows for bounded cross-entropy.
fn effective_channel(ch: &Channel, loss: &BoundedLoss) -> Result<(Channel, f64)> {
    match loss.kind {
        LossKind::ZeroOne => Ok((ch.clone(), loss.cap)),
        LossKind::BoundedCrossEntropy => {
            let cap = loss.effective_cap(ch.n_labels());
            let mut rows = ch.cond_probs.clone();
            for mut row in rows.rows_mut() {
                let floored = floor_distribution(&row.to_vec(), cap);
                for (dst, v) in row.iter_mut().zip(floored) {
                    *dst = v;
                }
            }
            Ok((Channel::new(rows, false)?, cap))
        }
    }
}

/// Upper bound for the expected risk on the target domain.
///
/// lhs is the target-domain risk; the rhs decomposes into the source risk,
/// the capped TV between the target and source-mixture (X, Y) laws, and the
/// sqrt-MI penalty between the source-domain variable and the sampled
/// prediction-label pair.
pub fn verify_theorem1(joint: &FiniteJoint, ch: &Channel, loss: &BoundedLoss) -> Result<BoundReport> {
    joint.validate()?;
    let (ch_eff, cap) = effective_channel(ch, loss)?;
    let pred = push_channel(joint, &ch_eff)?;
    let sources = joint.source_domains.clone();
    let target = vec![joint.target_domain];

    let (lhs, source_risk) = match loss.kind {
        LossKind::ZeroOne => (
            expected_risk(&pred, loss, &target)?,
            expected_risk(&pred, loss, &sources)?,
        ),
        LossKind::BoundedCrossEntropy => (
            cross_entropy_risk(joint, &ch_eff.cond_probs, &target)?,
            cross_entropy_risk(joint, &ch_eff.cond_probs, &sources)?,
        ),
    };

    // TV between the (X, Y) law of the target and the p(d_S)-weighted source
    // mixture (equal to the source-conditioned law).
    let t = joint.table();
    let target_xy = xy_conditional(&t, &target)?;
    let source_xy = xy_conditional(&t, &sources)?;
    let tv = tv_distance(&target_xy, &source_xy)?;

    let q_s = condition_on_domains(&pred, &sources)?;
    let mi = mi_d_vs_pred_label(&q_s)?;

    let terms = vec![
        ("source_risk".to_string(), source_risk),
        ("capped_tv_xy".to_string(), cap * tv),
        ("sqrt_mi_domain_pred_label".to_string(), (2.0f64.sqrt() * cap / 2.0) * mi.sqrt()),
    ];
    Ok(BoundReport::new("theorem1", lhs, terms).with_aux("effective_cap", cap))
}

fn xy_conditional(t: &Array4<f64>, filter: &[usize]) -> Result<Vec<f64>> {
    let (nx, ny, _, ng) = t.dim();
    let mass = domain_mass(t, filter);
    if mass <= 0.0 {
        return Err(Error::degenerate("zero-mass domain filter in (X, Y) conditional"));
    }
    let mut out = vec![0.0; nx * ny];
    for x in 0..nx {
        for y in 0..ny {
            for &d in filter {
                for g in 0..ng {
                    out[x * ny + y] += t[[x, y, d, g]];
                }
            }
        }
    }
    out.iter_mut().for_each(|v| *v /= mass);
    Ok(out)
}

/// Upper bound for the EOD violation on the target domain.
///
/// The conditioning law for the two CMI terms and for min p(y, g) is the
/// source mixture. The TV term uses the source-conditional p(x | y, g),
/// which equals the mixture weighted by p(d_S | y, g); the variant weighted
/// by the unconditional p(d_S) is reported in `aux`.
pub fn verify_theorem2(joint: &FiniteJoint, ch: &Channel) -> Result<BoundReport> {
    joint.validate()?;
    let pred = push_channel(joint, ch)?;
    let sources = joint.source_domains.clone();
    let target = vec![joint.target_domain];
    let (nx, ny, _, ng) = joint.sizes;

    let q_s = condition_on_domains(&pred, &sources)?;
    let yg = yg_marginal(&q_s);
    let min_pyg = yg.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_pyg <= 0.0 {
        return Err(Error::degenerate(
            "theorem2: a (y, g) cell has zero mass under the source mixture; the bound is undefined",
        ));
    }

    let lhs = eod_violation_exact(&pred, &target)?.value;

    let denom = ny as f64 * ng as f64 * min_pyg;
    let cmi_g = cmi_g_pred_given_y_d(&q_s)?;
    let cmi_d = cmi_d_pred_given_y_g(&q_s)?;
    let term1 = (2.0 * cmi_g).sqrt() / denom;
    let term3 = (2.0 * cmi_d).sqrt() / denom;

    // TV over p(x | y, g): target vs source-conditional, skipping cells that
    // are empty on either side.
    let t = joint.table();
    let t_target = condition_on_domains(&t, &target)?;
    let t_source = condition_on_domains(&t, &sources)?;
    let mut tv_sum = 0.0;
    let mut tv_sum_uncond = 0.0;
    let mut skipped = 0usize;
    let source_d_marginal: Vec<f64> = sources
        .iter()
        .map(|&d| {
            let mut m = 0.0;
            for x in 0..nx {
                for y in 0..ny {
                    for g in 0..ng {
                        m += t_source[[x, y, d, g]];
                    }
                }
            }
            m
        })
        .collect();
    for y in 0..ny {
        for g in 0..ng {
            let tgt = x_conditional_cell(&t_target, y, g, None);
            let src = x_conditional_cell(&t_source, y, g, None);
            match (tgt, src) {
                (Some(a), Some(b)) => {
                    tv_sum += tv_distance(&a, &b)?;
                    // unconditional-weight mixture, renormalized over the
                    // source domains whose (y, g) cell is populated
                    let mut mix = vec![0.0; nx];
                    let mut wsum = 0.0;
                    for (si, &d) in sources.iter().enumerate() {
                        if let Some(pd) = x_conditional_cell(&t_source, y, g, Some(d)) {
                            let w = source_d_marginal[si];
                            wsum += w;
                            for (m, v) in mix.iter_mut().zip(pd) {
                                *m += w * v;
                            }
                        }
                    }
                    if wsum > 0.0 {
                        mix.iter_mut().for_each(|v| *v /= wsum);
                        tv_sum_uncond += tv_distance(&a, &mix)?;
                    }
                }
                _ => skipped += 1,
            }
        }
    }
    let term2 = 2.0 / (ny as f64 * ng as f64) * tv_sum;

    let terms = vec![
        ("sqrt_cmi_group_pred".to_string(), term1),
        ("tv_x_given_yg".to_string(), term2),
        ("sqrt_cmi_domain_pred".to_string(), term3),
    ];
    Ok(BoundReport::new("theorem2", lhs, terms)
        .with_aux("min_p_yg", min_pyg)
        .with_aux("tv_term_unconditional_mixture", 2.0 / (ny as f64 * ng as f64) * tv_sum_uncond)
        .with_aux("skipped_yg_cells", skipped as f64))
}

fn x_conditional_cell(t: &Array4<f64>, y: usize, g: usize, only_d: Option<usize>) -> Option<Vec<f64>> {
    let (nx, _, nd, _) = t.dim();
    let ds: Vec<usize> = match only_d {
        Some(d) => vec![d],
        None => (0..nd).collect(),
    };
    let mut out = vec![0.0; nx];
    let mut mass = 0.0;
    for x in 0..nx {
        for &d in &ds {
            out[x] += t[[x, y, d, g]];
        }
        mass += out[x];
    }
    if mass <= 0.0 {
        return None;
    }
    out.iter_mut().for_each(|v| *v /= mass);
    Some(out)
}

/// Risk minimization implies MI maximization: under the cross-entropy loss,
/// I(Yhat; Y | D_S) >= H(Y | D_S) - R_{D_S}, with Yhat sampled from the
/// channel rows read as predicted distributions.
pub fn verify_theorem3(joint: &FiniteJoint, ch: &Channel, loss: &BoundedLoss) -> Result<BoundReport> {
    if loss.kind != LossKind::BoundedCrossEntropy {
        return Err(Error::contract("theorem3 requires the cross-entropy loss"));
    }
    joint.validate()?;
    let sources = &joint.source_domains;
    let t = joint.table();
    let (nx, ny, _, ng) = joint.sizes;

    // the prediction here is the full probability row assigned to each x
    // (not a sampled label): floor the rows by the cap, then cluster inputs
    // that share an identical prediction vector, so the mutual-information
    // side conditions on exactly the information the risk side uses
    let cap = loss.effective_cap(ny);
    let rows: Vec<Vec<f64>> =
        (0..nx).map(|x| floor_distribution(&ch.cond_probs.row(x).to_vec(), cap)).collect();
    let mut cluster_of = vec![0usize; nx];
    let mut reps: Vec<&[f64]> = Vec::new();
    for x in 0..nx {
        let bits: Vec<u64> = rows[x].iter().map(|v| v.to_bits()).collect();
        match reps.iter().position(|r| r.iter().map(|v| v.to_bits()).eq(bits.iter().copied())) {
            Some(c) => cluster_of[x] = c,
            None => {
                cluster_of[x] = reps.len();
                reps.push(&rows[x]);
            }
        }
    }
    let ncl = reps.len();

    // source-conditioned joint p(cluster, y, d) with d indexing the sources
    let mass = sources
        .iter()
        .map(|&d| (0..nx).map(|x| (0..ny).map(|y| (0..ng).map(|g| t[[x, y, d, g]]).sum::<f64>()).sum::<f64>()).sum::<f64>())
        .sum::<f64>();
    if mass <= 0.0 {
        return Err(Error::degenerate("theorem3: zero-mass source filter"));
    }
    let mut cyd = Array3::zeros((ncl, ny, sources.len()));
    let mut risk = 0.0;
    for (di, &d) in sources.iter().enumerate() {
        for x in 0..nx {
            for y in 0..ny {
                let p_xyd: f64 = (0..ng).map(|g| t[[x, y, d, g]]).sum::<f64>() / mass;
                if p_xyd > 0.0 {
                    cyd[[cluster_of[x], y, di]] += p_xyd;
                    risk += p_xyd * -rows[x][y].ln();
                }
            }
        }
    }

    // H(Y | D_S) over the source-conditioned (y, d) marginal
    let mut yd = Array2::zeros((ny, sources.len()));
    for c in 0..ncl {
        for y in 0..ny {
            for di in 0..sources.len() {
                yd[[y, di]] += cyd[[c, y, di]];
            }
        }
    }
    let h_y_given_d = conditional_entropy(&yd)?;
    let cmi = conditional_mutual_information(&cyd)?;

    let terms = vec![("cmi_pred_label_given_domain".to_string(), cmi)];
    Ok(BoundReport::new("theorem3", h_y_given_d - risk, terms)
        .with_aux("source_risk", risk)
        .with_aux("h_y_given_domain", h_y_given_d)
        .with_aux("prediction_clusters", ncl as f64))
}

/// The three chain-rule inequalities plus their underlying equalities
/// (residuals reported in `aux` as `chain_residual`).
pub fn verify_theorem4(joint: &FiniteJoint, ch: &Channel) -> Result<Vec<BoundReport>> {
    joint.validate()?;
    let pred = push_channel(joint, ch)?;
    let q_s = condition_on_domains(&pred, &joint.source_domains)?;

    let i_d_pred_y = cmi_d_pred_given_y(&q_s)?;
    let i_g_pred_yd = cmi_g_pred_given_y_d(&q_s)?;
    let i_d_pred_yg = cmi_d_pred_given_y_g(&q_s)?;
    let i_g_pred_y = cmi_g_pred_given_y(&q_s)?;
    let i_pred_y = mi_pred_y(&q_s)?;
    let i_pred_y_given_d = cmi_pred_y_given_d(&q_s)?;
    let i_pred_d = mi_pred_d(&q_s)?;

    // chain rule over (D, G) given Y, two factorizations of I(D,G; Yhat | Y)
    let residual_dg = (i_d_pred_y + i_g_pred_yd) - (i_g_pred_y + i_d_pred_yg);
    // chain rule over (Y, D), two factorizations of I(Yhat; Y, D)
    let residual_yd = (i_pred_d + i_pred_y_given_d) - (i_pred_y + i_d_pred_y);

    let a = BoundReport::new(
        "theorem4_domain_cmi",
        i_d_pred_yg,
        vec![
            ("cmi_domain_pred_given_y".to_string(), i_d_pred_y),
            ("cmi_group_pred_given_yd".to_string(), i_g_pred_yd),
        ],
    )
    .with_aux("chain_residual", residual_dg);

    let b = BoundReport::new(
        "theorem4_pred_label_mi",
        i_pred_y_given_d - i_d_pred_y,
        vec![("mi_pred_label".to_string(), i_pred_y)],
    )
    .with_aux("chain_residual", residual_yd);

    let c = BoundReport::new(
        "theorem4_group_cmi",
        i_g_pred_y,
        vec![
            ("cmi_domain_pred_given_y".to_string(), i_d_pred_y),
            ("cmi_group_pred_given_yd".to_string(), i_g_pred_yd),
        ],
    )
    .with_aux("chain_residual", residual_dg);

    Ok(vec![a, b, c])
}

/// Inputs for the four supporting lemma checks.
#[derive(Debug, Clone)]
pub enum LemmaInstance {
    /// f bounded in [0, cap] on a finite space, plus two distributions.
    BoundedShift { f: Vec<f64>, cap: f64, p: Vec<f64>, q: Vec<f64> },
    /// 2-way joint over (x, y): average TV to the marginal vs sqrt(I/2).
    AvgTvPinsker { joint: Array2<f64> },
    /// TV difference vs cross-domain TVs on four distributions.
    TvDifference { p_j: Vec<f64>, p_j2: Vec<f64>, p_i: Vec<f64>, p_i2: Vec<f64> },
    /// 4-way joint over (x, d, g, y): conditional average TV vs sqrt(CMI/2).
    ConditionalAvgTv { joint: Array4<f64> },
}

pub fn verify_lemma(instance: &LemmaInstance) -> Result<BoundReport> {
    match instance {
        LemmaInstance::BoundedShift { f, cap, p, q } => {
            if f.len() != p.len() || p.len() != q.len() {
                return Err(Error::validation("lemma1: length mismatch"));
            }
            if f.iter().any(|&v| v < 0.0 || v > *cap) {
                return Err(Error::validation("lemma1: f must take values in [0, cap]"));
            }
            let ep: f64 = f.iter().zip(p).map(|(a, b)| a * b).sum();
            let eq: f64 = f.iter().zip(q).map(|(a, b)| a * b).sum();
            let tv = tv_distance(p, q)?;
            Ok(BoundReport::new("lemma1", ep - eq, vec![("capped_tv".to_string(), cap * tv)]))
        }
        LemmaInstance::AvgTvPinsker { joint } => {
            let (nx, ny) = joint.dim();
            let mut lhs = 0.0;
            let py: Vec<f64> = (0..ny).map(|y| joint.column(y).sum()).collect();
            // marginal over y for each row x
            let mut marg = vec![0.0; ny];
            for y in 0..ny {
                for x in 0..nx {
                    marg[y] += joint[[x, y]];
                }
            }
            let _ = py;
            for x in 0..nx {
                let px: f64 = joint.row(x).sum();
                if px > 0.0 {
                    let cond: Vec<f64> = joint.row(x).iter().map(|&v| v / px).collect();
                    lhs += px * tv_distance(&cond, &marg)?;
                }
            }
            let mi = mutual_information(joint)?;
            Ok(BoundReport::new("lemma2", lhs, vec![("sqrt_half_mi".to_string(), (mi / 2.0).sqrt())]))
        }
        LemmaInstance::TvDifference { p_j, p_j2, p_i, p_i2 } => {
            let lhs = tv_distance(p_j, p_j2)? - tv_distance(p_i, p_i2)?;
            let terms = vec![
                ("tv_first_pair".to_string(), tv_distance(p_j, p_i)?),
                ("tv_second_pair".to_string(), tv_distance(p_j2, p_i2)?),
            ];
            Ok(BoundReport::new("lemma3", lhs, terms))
        }
        LemmaInstance::ConditionalAvgTv { joint } => {
            let (nx, nd, ng, ny) = joint.dim();
            let mut lhs = 0.0;
            for d in 0..nd {
                for g in 0..ng {
                    let mut marg = vec![0.0; ny];
                    let mut mass_dg = 0.0;
                    for x in 0..nx {
                        for y in 0..ny {
                            marg[y] += joint[[x, d, g, y]];
                        }
                    }
                    mass_dg += marg.iter().sum::<f64>();
                    if mass_dg <= 0.0 {
                        continue;
                    }
                    let marg: Vec<f64> = marg.iter().map(|v| v / mass_dg).collect();
                    for x in 0..nx {
                        let mass_xdg: f64 = (0..ny).map(|y| joint[[x, d, g, y]]).sum();
                        if mass_xdg > 0.0 {
                            let cond: Vec<f64> =
                                (0..ny).map(|y| joint[[x, d, g, y]] / mass_xdg).collect();
                            lhs += mass_xdg * tv_distance(&cond, &marg)?;
                        }
                    }
                }
            }
            // I(X; Y | D, G) with the (d, g) pair flattened into one axis
            let mut t = Array3::zeros((nx, ny, nd * ng));
            for x in 0..nx {
                for d in 0..nd {
                    for g in 0..ng {
                        for y in 0..ny {
                            t[[x, y, d * ng + g]] = joint[[x, d, g, y]];
                        }
                    }
                }
            }
            let cmi = conditional_mutual_information(&t)?;
            Ok(BoundReport::new("lemma4", lhs, vec![("sqrt_half_cmi".to_string(), (cmi / 2.0).sqrt())]))
        }
    }
}

// ---- randomized harness ----

/// One random verification instance: a full-support joint with domain roles
/// plus a strictly positive channel.
pub fn random_instance(rng: &mut ChaCha8Rng) -> (FiniteJoint, Channel) {
    let nx = rng.random_range(2..=6);
    let ny = rng.random_range(2..=4);
    let nd = rng.random_range(3..=4);
    let ng = rng.random_range(2..=3);
    let cells = nx * ny * nd * ng;
    // Dirichlet(1, ..., 1) over the full table
    let mut probs: Vec<f64> = (0..cells).map(|_| -(rng.random::<f64>().ln())).collect();
    let s: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|v| *v /= s);
    let target = rng.random_range(0..nd);
    let sources: Vec<usize> = (0..nd).filter(|&d| d != target).collect();
    let joint = FiniteJoint::new((nx, ny, nd, ng), probs, sources, target).expect("valid random joint");

    let mut rows = Array2::zeros((nx, ny));
    for mut row in rows.rows_mut() {
        let mut v: Vec<f64> = (0..ny).map(|_| -(rng.random::<f64>().ln())).collect();
        let s: f64 = v.iter().sum();
        v.iter_mut().for_each(|x| *x /= s);
        for (dst, src) in row.iter_mut().zip(v) {
            *dst = src;
        }
    }
    let ch = Channel::new(rows, false).expect("valid random channel");
    (joint, ch)
}

/// Every bound report produced for one instance: the two risk-bound variants
/// share one entry (zero-one loss), then the EOD bound, the MI lower bound,
/// the three chain-rule inequalities, and the four lemmas.
pub fn verify_instance(joint: &FiniteJoint, ch: &Channel) -> Result<Vec<BoundReport>> {
    let mut reports = Vec::with_capacity(10);
    reports.push(verify_theorem1(joint, ch, &BoundedLoss::zero_one())?);
    reports.push(verify_theorem2(joint, ch)?);
    reports.push(verify_theorem3(joint, ch, &BoundedLoss::bounded_cross_entropy(1.0))?);
    reports.extend(verify_theorem4(joint, ch)?);
    reports.extend(lemma_instances_from(joint, ch)?.iter().map(|li| verify_lemma(li)).collect::<Result<Vec<_>>>()?);
    Ok(reports)
}

/// Lemma inputs derived from a verification instance so the harness stresses
/// the same laws the theorems use.
pub fn lemma_instances_from(joint: &FiniteJoint, ch: &Channel) -> Result<Vec<LemmaInstance>> {
    let pred = push_channel(joint, ch)?;
    let sources = joint.source_domains.clone();
    let target = vec![joint.target_domain];
    let (nyh, ny, _, _) = pred.dim();

    // L1: zero-one loss on the (yhat, y) pair, target vs source laws
    let q_t = condition_on_domains(&pred, &target)?;
    let q_s = condition_on_domains(&pred, &sources)?;
    let pair_law = |q: &Array4<f64>| -> Vec<f64> {
        let (nyh, ny, nd, ng) = q.dim();
        let mut out = vec![0.0; nyh * ny];
        for yh in 0..nyh {
            for y in 0..ny {
                for d in 0..nd {
                    for g in 0..ng {
                        out[yh * ny + y] += q[[yh, y, d, g]];
                    }
                }
            }
        }
        out
    };
    let f: Vec<f64> = (0..nyh * ny).map(|i| if i / ny == i % ny { 0.0 } else { 1.0 }).collect();
    let l1 = LemmaInstance::BoundedShift { f, cap: 1.0, p: pair_law(&q_t), q: pair_law(&q_s) };

    // L2: (d, (yhat, y)) under the source law
    let (_, _, nd, ng) = q_s.dim();
    let mut dj = Array2::zeros((nd, nyh * ny));
    for yh in 0..nyh {
        for y in 0..ny {
            for d in 0..nd {
                for g in 0..ng {
                    dj[[d, yh * ny + y]] += q_s[[yh, y, d, g]];
                }
            }
        }
    }
    let l2 = LemmaInstance::AvgTvPinsker { joint: dj };

    // L3: prediction conditionals for two groups, target vs first source
    let cond = |q: &Array4<f64>, y: usize, g: usize| -> Vec<f64> {
        let (nyh, _, nd, _) = q.dim();
        let mut out = vec![0.0; nyh];
        for yh in 0..nyh {
            for d in 0..nd {
                out[yh] += q[[yh, y, d, g]];
            }
        }
        let s: f64 = out.iter().sum();
        out.iter_mut().for_each(|v| *v /= s);
        out
    };
    let l3 = LemmaInstance::TvDifference {
        p_j: cond(&q_t, 0, 0),
        p_j2: cond(&q_t, 0, 1),
        p_i: cond(&q_s, 0, 0),
        p_i2: cond(&q_s, 0, 1),
    };

    // L4: (g, y, d, yhat) under the source law, matching the EOD proof step
    let mut l4t = Array4::zeros((ng, ny, nd, nyh));
    for yh in 0..nyh {
        for y in 0..ny {
            for d in 0..nd {
                for g in 0..ng {
                    l4t[[g, y, d, yh]] = q_s[[yh, y, d, g]];
                }
            }
        }
    }
    let l4 = LemmaInstance::ConditionalAvgTv { joint: l4t };

    Ok(vec![l1, l2, l3, l4])
}

/// Report from the randomized harness: per-instance seed plus the reports.
#[derive(Debug, Serialize)]
pub struct HarnessRecord {
    pub seed: u64,
    pub reports: Vec<BoundReport>,
}

/// Run the randomized verification harness over `instances` independently
/// seeded instances.
pub fn run_harness(instances: usize, seed: u64) -> Result<Vec<HarnessRecord>> {
    (0..instances as u64)
        .into_par_iter()
        .map(|i| {
            let inst_seed = seed.wrapping_add(i).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let mut rng = ChaCha8Rng::seed_from_u64(inst_seed);
            let (joint, ch) = random_instance(&mut rng);
            Ok(HarnessRecord { seed: inst_seed, reports: verify_instance(&joint, &ch)? })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;

    fn dirichlet_joint(rng: &mut ChaCha8Rng, sizes: (usize, usize, usize, usize)) -> FiniteJoint {
        let cells = sizes.0 * sizes.1 * sizes.2 * sizes.3;
        let mut probs: Vec<f64> = (0..cells).map(|_| -(rng.random::<f64>().ln())).collect();
        let s: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|v| *v /= s);
        let sources: Vec<usize> = (0..sizes.2 - 1).collect();
        FiniteJoint::new(sizes, probs, sources, sizes.2 - 1).unwrap()
    }

    #[test]
    fn risk_of_identity_channel_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let joint = dirichlet_joint(&mut rng, (3, 3, 3, 2));
        // X carries the label exactly: collapse the joint onto x == y
        let mut probs = vec![0.0; 3 * 3 * 3 * 2];
        let t = joint.table();
        let mut total = 0.0;
        for x in 0..3 {
            for d in 0..3 {
                for g in 0..2 {
                    let v = t[[x, x, d, g]];
                    probs[((x * 3 + x) * 3 + d) * 2 + g] = v;
                    total += v;
                }
            }
        }
        probs.iter_mut().for_each(|v| *v /= total);
        let aligned = FiniteJoint::new((3, 3, 3, 2), probs, vec![0, 1], 2).unwrap();
        let id = Channel::from_map(3, 3, |x| x).unwrap();
        let pred = push_channel(&aligned, &id).unwrap();
        let r = expected_risk(&pred, &BoundedLoss::zero_one(), &[2]).unwrap();
        assert_abs_diff_eq!(r, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn risk_of_label_blind_channel_on_uniform_labels() {
        // channel ignores x; uniform y over k: misclassification = (k-1)/k
        let k = 4;
        let cells = 2 * k * 3 * 2;
        let probs = vec![1.0 / cells as f64; cells];
        let joint = FiniteJoint::new((2, k, 3, 2), probs, vec![0, 1], 2).unwrap();
        let constant = Channel::from_map(2, k, |_| 0).unwrap();
        let pred = push_channel(&joint, &constant).unwrap();
        let r = expected_risk(&pred, &BoundedLoss::zero_one(), &[0, 1]).unwrap();
        assert_abs_diff_eq!(r, (k as f64 - 1.0) / k as f64, epsilon = 1e-12);
    }

    #[test]
    fn eod_exact_group_blind_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        // p(x,y,d,g) = p(x,y,d) p(g): predictions depend on x only, and x is
        // independent of g given y, so conditionals match across groups
        let (nx, ny, nd, ng) = (3, 2, 3, 2);
        let mut base: Vec<f64> = (0..nx * ny * nd).map(|_| -(rng.random::<f64>().ln())).collect();
        let s: f64 = base.iter().sum();
        base.iter_mut().for_each(|v| *v /= s);
        let pg = [0.3, 0.7];
        let mut probs = vec![0.0; nx * ny * nd * ng];
        for (i, &b) in base.iter().enumerate() {
            for g in 0..ng {
                probs[i * ng + g] = b * pg[g];
            }
        }
        let joint = FiniteJoint::new((nx, ny, nd, ng), probs, vec![0, 1], 2).unwrap();
        let (_, ch) = {
            let mut r2 = ChaCha8Rng::seed_from_u64(3);
            random_instance(&mut r2)
        };
        let _ = ch;
        let mut rows = Array2::zeros((nx, ny));
        for mut row in rows.rows_mut() {
            let mut v: Vec<f64> = (0..ny).map(|_| -(rng.random::<f64>().ln())).collect();
            let s: f64 = v.iter().sum();
            v.iter_mut().for_each(|x| *x /= s);
            for (dst, src) in row.iter_mut().zip(v) {
                *dst = src;
            }
        }
        let ch = Channel::new(rows, false).unwrap();
        let pred = push_channel(&joint, &ch).unwrap();
        let eod = eod_violation_exact(&pred, &[0, 1]).unwrap();
        assert_abs_diff_eq!(eod.value, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn eod_exact_hand_built() {
        // |Y|=2, |G|=2, deterministic split: for y=0 groups predict 0 vs 1;
        // for y=1 both groups identical. EOD = (2/(2*2*1)) * (1 + 0) = 0.5
        let mut pred = Array4::zeros((2, 2, 3, 2));
        // mass spread evenly over the cells we populate (sources 0, 1)
        let w = 1.0 / 16.0;
        for d in 0..2 {
            pred[[0, 0, d, 0]] = 2.0 * w; // y=0, g=0 -> yhat 0
            pred[[1, 0, d, 1]] = 2.0 * w; // y=0, g=1 -> yhat 1
            pred[[1, 1, d, 0]] = 2.0 * w; // y=1 both groups -> yhat 1
            pred[[1, 1, d, 1]] = 2.0 * w;
        }
        let eod = eod_violation_exact(&pred, &[0, 1]).unwrap();
        assert_abs_diff_eq!(eod.value, 0.5, epsilon = 1e-12);
        assert_eq!(eod.skipped_pairs, 0);
    }

    #[test]
    fn eod_exact_group_relabel_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (joint, ch) = random_instance(&mut rng);
        let pred = push_channel(&joint, &ch).unwrap();
        let v1 = eod_violation_exact(&pred, &joint.source_domains).unwrap().value;
        // permute group axis
        let (a, b, c, ng) = pred.dim();
        let mut perm = Array4::zeros((a, b, c, ng));
        for i in 0..a {
            for j in 0..b {
                for k in 0..c {
                    for g in 0..ng {
                        perm[[i, j, k, (g + 1) % ng]] = pred[[i, j, k, g]];
                    }
                }
            }
        }
        let v2 = eod_violation_exact(&perm, &joint.source_domains).unwrap().value;
        assert_abs_diff_eq!(v1, v2, epsilon = 1e-12);
    }

    #[test]
    fn theorem1_target_equals_mixture_makes_tv_zero() {
        // all domains share the same (x, y, g) law
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (nx, ny, nd, ng) = (3, 2, 3, 2);
        let mut base: Vec<f64> = (0..nx * ny * ng).map(|_| -(rng.random::<f64>().ln())).collect();
        let s: f64 = base.iter().sum();
        base.iter_mut().for_each(|v| *v /= s);
        let mut probs = vec![0.0; nx * ny * nd * ng];
        for x in 0..nx {
            for y in 0..ny {
                for g in 0..ng {
                    for d in 0..nd {
                        probs[((x * ny + y) * nd + d) * ng + g] = base[(x * ny + y) * ng + g] / nd as f64;
                    }
                }
            }
        }
        let joint = FiniteJoint::new((nx, ny, nd, ng), probs, vec![0, 1], 2).unwrap();
        let (_, ch) = random_instance(&mut rng);
        let _ = ch;
        let ch = Channel::from_map(nx, ny, |x| x % ny).unwrap();
        let rep = verify_theorem1(&joint, &ch, &BoundedLoss::zero_one()).unwrap();
        assert_abs_diff_eq!(rep.terms[1].1, 0.0, epsilon = 1e-12);
        assert!(rep.slack >= -1e-9);
    }

    #[test]
    fn theorem1_constant_channel_mi_reduces_to_label_mi() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (joint, _) = random_instance(&mut rng);
        let (nx, ny, _, _) = joint.sizes;
        let constant = Channel::from_map(nx, ny, |_| 0).unwrap();
        let rep = verify_theorem1(&joint, &constant, &BoundedLoss::zero_one()).unwrap();
        // I(D_S; Yhat, Y) with constant Yhat equals I(D_S; Y)
        let pred = push_channel(&joint, &constant).unwrap();
        let q_s = condition_on_domains(&pred, &joint.source_domains).unwrap();
        let (nyh, ny2, nd, ng) = q_s.dim();
        let mut dy = Array2::zeros((nd, ny2));
        for yh in 0..nyh {
            for y in 0..ny2 {
                for d in 0..nd {
                    for g in 0..ng {
                        dy[[d, y]] += q_s[[yh, y, d, g]];
                    }
                }
            }
        }
        let mi_dy = mutual_information(&dy).unwrap();
        let expected = 2.0f64.sqrt() / 2.0 * mi_dy.sqrt();
        assert_abs_diff_eq!(rep.terms[2].1, expected, epsilon = 1e-12);
        assert!(rep.slack >= -1e-9);
    }

    #[test]
    fn theorem3_uniform_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (joint, _) = random_instance(&mut rng);
        let (nx, ny, _, _) = joint.sizes;
        let rows = Array2::from_elem((nx, ny), 1.0 / ny as f64);
        let ch = Channel::new(rows, false).unwrap();
        let rep = verify_theorem3(&joint, &ch, &BoundedLoss::bounded_cross_entropy(1.0)).unwrap();
        // risk = ln |Y|, MI = 0, H(Y|D_S) <= ln |Y|: slack >= 0
        assert_abs_diff_eq!(rep.aux["source_risk"], (ny as f64).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(rep.rhs, 0.0, epsilon = 1e-12);
        assert!(rep.slack >= -1e-9);
    }

    #[test]
    fn theorem3_rejects_zero_one_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (joint, ch) = random_instance(&mut rng);
        assert!(verify_theorem3(&joint, &ch, &BoundedLoss::zero_one()).is_err());
    }

    #[test]
    fn theorem4_group_independent_reduces_to_equality() {
        // G independent of everything: I(G; Yhat | Y, D) = 0 and the first
        // inequality becomes an equality
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (nx, ny, nd, ng) = (3, 2, 3, 2);
        let mut base: Vec<f64> = (0..nx * ny * nd).map(|_| -(rng.random::<f64>().ln())).collect();
        let s: f64 = base.iter().sum();
        base.iter_mut().for_each(|v| *v /= s);
        let mut probs = vec![0.0; nx * ny * nd * ng];
        for (i, &b) in base.iter().enumerate() {
            for g in 0..ng {
                probs[i * ng + g] = b / ng as f64;
            }
        }
        let joint = FiniteJoint::new((nx, ny, nd, ng), probs, vec![0, 1], 2).unwrap();
        let (_, ch) = random_instance(&mut rng);
        let _ = ch;
        let mut rows = Array2::zeros((nx, ny));
        for mut row in rows.rows_mut() {
            let mut v: Vec<f64> = (0..ny).map(|_| -(rng.random::<f64>().ln())).collect();
            let s: f64 = v.iter().sum();
            v.iter_mut().for_each(|x| *x /= s);
            for (dst, src) in row.iter_mut().zip(v) {
                *dst = src;
            }
        }
        let ch = Channel::new(rows, false).unwrap();
        let reps = verify_theorem4(&joint, &ch).unwrap();
        assert_abs_diff_eq!(reps[0].slack, 0.0, epsilon = 1e-10);
        for r in &reps {
            assert!(r.aux["chain_residual"].abs() < 1e-10);
        }
    }

    #[test]
    fn lemma1_identical_domains() {
        let p = vec![0.25, 0.75];
        let rep = verify_lemma(&LemmaInstance::BoundedShift {
            f: vec![2.0, 2.0],
            cap: 2.0,
            p: p.clone(),
            q: p,
        })
        .unwrap();
        assert_abs_diff_eq!(rep.lhs, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rep.rhs, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn lemma3_equal_pairs() {
        let p = vec![0.2, 0.8];
        let q = vec![0.6, 0.4];
        // lhs = tv(p, q) - tv(q, q) = 0.4; rhs = tv(p, q) + tv(q, q) = 0.4
        let rep = verify_lemma(&LemmaInstance::TvDifference {
            p_j: p.clone(),
            p_j2: q.clone(),
            p_i: q.clone(),
            p_i2: q,
        })
        .unwrap();
        assert_abs_diff_eq!(rep.lhs, 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(rep.rhs, 0.4, epsilon = 1e-12);
        // identical pairs: lhs = 0, rhs = 0
        let rep2 = verify_lemma(&LemmaInstance::TvDifference {
            p_j: vec![0.2, 0.8],
            p_j2: vec![0.2, 0.8],
            p_i: vec![0.2, 0.8],
            p_i2: vec![0.2, 0.8],
        })
        .unwrap();
        assert_abs_diff_eq!(rep2.lhs, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn harness_small_run_all_hold() {
        let records = run_harness(50, 20240817).unwrap();
        assert_eq!(records.len(), 50);
        for rec in &records {
            assert_eq!(rec.reports.len(), 10);
            for rep in &rec.reports {
                assert!(
                    rep.slack >= -1e-9,
                    "bound {} violated: lhs={} rhs={} (seed {})",
                    rep.name,
                    rep.lhs,
                    rep.rhs,
                    rec.seed
                );
                let term_sum: f64 = rep.terms.iter().map(|(_, v)| v).sum();
                assert!((term_sum - rep.rhs).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn relabeling_axes_preserves_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (joint, ch) = random_instance(&mut rng);
        let rep = verify_theorem2(&joint, &ch).unwrap();
        // permute the group axis of the joint
        let (nx, ny, nd, ng) = joint.sizes;
        let t = joint.table();
        let mut probs = vec![0.0; nx * ny * nd * ng];
        for x in 0..nx {
            for y in 0..ny {
                for d in 0..nd {
                    for g in 0..ng {
                        probs[((x * ny + y) * nd + d) * ng + (g + 1) % ng] = t[[x, y, d, g]];
                    }
                }
            }
        }
        let permuted =
            FiniteJoint::new(joint.sizes, probs, joint.source_domains.clone(), joint.target_domain)
                .unwrap();
        let rep2 = verify_theorem2(&permuted, &ch).unwrap();
        assert_abs_diff_eq!(rep.lhs, rep2.lhs, epsilon = 1e-10);
        assert_abs_diff_eq!(rep.rhs, rep2.rhs, epsilon = 1e-10);
    }

    #[test]
    fn lemma2_on_chain_residuals_precision() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            let (joint, ch) = random_instance(&mut rng);
            for rep in verify_theorem4(&joint, &ch).unwrap() {
                assert!(rep.aux["chain_residual"].abs() < 1e-10, "residual {}", rep.aux["chain_residual"]);
            }
        }
    }
}
