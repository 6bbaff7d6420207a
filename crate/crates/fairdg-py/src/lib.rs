//! Python bindings for the `fairdg` laboratory.
//!
//! Exposes the exact bound-verification harness, the conditional distance
//! correlation estimators, group-fairness metrics, Pareto/hypervolume
//! utilities, and the synthetic-data training pipeline.

use ndarray::Array2;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use fairdg::bounds::{self, BoundReport, BoundedLoss};
use fairdg::dependence::{self, ConditionalDcor, PartitionLabels, RepBatch};
use fairdg::fairness::{self, EvalBatch, FairnessValue};
use fairdg::pareto::{self, FrontConfig, TradeoffPoint};
use fairdg::prob;
use fairdg::synth::{generate_synthetic, SynthConfig};
use fairdg::trainer::{self, TrainConfig};

fn err(e: fairdg::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn rows_to_array(rows: Vec<Vec<f64>>, what: &str) -> PyResult<Array2<f64>> {
    if rows.is_empty() {
        return Err(PyValueError::new_err(format!("{what}: empty matrix")));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err(format!("{what}: ragged rows")));
    }
    let nrows = rows.len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((nrows, ncols), flat)
        .map_err(|e| PyValueError::new_err(format!("{what}: {e}")))
}

fn rep_batch(rows: Vec<Vec<f64>>, what: &str) -> PyResult<RepBatch> {
    RepBatch::new(rows_to_array(rows, what)?).map_err(err)
}

fn report_to_dict<'py>(py: Python<'py>, r: &BoundReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("name", &r.name)?;
    d.set_item("lhs", r.lhs)?;
    d.set_item("rhs", r.rhs)?;
    d.set_item("slack", r.slack)?;
    let terms = PyDict::new(py);
    for (k, v) in &r.terms {
        terms.set_item(k, *v)?;
    }
    d.set_item("terms", terms)?;
    if !r.aux.is_empty() {
        let aux = PyDict::new(py);
        for (k, v) in &r.aux {
            aux.set_item(k, *v)?;
        }
        d.set_item("aux", aux)?;
    }
    Ok(d)
}

fn cdcor_to_dict<'py>(py: Python<'py>, c: &ConditionalDcor) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("value", c.value)?;
    d.set_item("used_cells", c.used_cells)?;
    d.set_item("skipped_cells", c.skipped_cells)?;
    d.set_item("skipped_samples", c.skipped_samples)?;
    Ok(d)
}

fn fairness_to_dict<'py>(py: Python<'py>, f: &FairnessValue) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("value", f.value)?;
    d.set_item("evaluated_pairs", f.evaluated_pairs)?;
    d.set_item("skipped_pairs", f.skipped_pairs)?;
    Ok(d)
}

/// Exact joint law p(x, y, d, g) over finite alphabets with domain roles.
#[pyclass(name = "FiniteJoint", skip_from_py_object)]
struct PyFiniteJoint {
    inner: prob::FiniteJoint,
}

#[pymethods]
impl PyFiniteJoint {
    /// Build from sizes (|X|, |Y|, |D|, |G|), a flat row-major probability
    /// table, the source-domain indices, and the target-domain index.
    #[new]
    fn new(
        sizes: (usize, usize, usize, usize),
        probs: Vec<f64>,
        source_domains: Vec<usize>,
        target_domain: usize,
    ) -> PyResult<Self> {
        Ok(Self {
            inner: prob::FiniteJoint::new(sizes, probs, source_domains, target_domain)
                .map_err(err)?,
        })
    }

    #[getter]
    fn sizes(&self) -> (usize, usize, usize, usize) {
        self.inner.sizes
    }

    #[getter]
    fn source_domains(&self) -> Vec<usize> {
        self.inner.source_domains.clone()
    }

    #[getter]
    fn target_domain(&self) -> usize {
        self.inner.target_domain
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        Ok(Self { inner: prob::FiniteJoint::from_json(s).map_err(err)? })
    }

    /// Run every bound check against the given predictor channel; returns one
    /// dict per check with name, lhs, rhs, terms, and slack = rhs - lhs.
    fn verify<'py>(&self, py: Python<'py>, channel: &PyChannel) -> PyResult<Bound<'py, PyList>> {
        let reports = bounds::verify_instance(&self.inner, &channel.inner).map_err(err)?;
        let items: Vec<_> =
            reports.iter().map(|r| report_to_dict(py, r)).collect::<PyResult<_>>()?;
        PyList::new(py, items)
    }
}

/// Row-stochastic predictor channel p(yhat | x).
#[pyclass(name = "Channel", skip_from_py_object)]
struct PyChannel {
    inner: prob::Channel,
}

#[pymethods]
impl PyChannel {
    #[new]
    #[pyo3(signature = (rows, deterministic = false))]
    fn new(rows: Vec<Vec<f64>>, deterministic: bool) -> PyResult<Self> {
        let table = rows_to_array(rows, "Channel")?;
        Ok(Self { inner: prob::Channel::new(table, deterministic).map_err(err)? })
    }

    /// Deterministic channel sending input x to label `mapping[x]`.
    #[staticmethod]
    fn from_map(n_inputs: usize, n_labels: usize, mapping: Vec<usize>) -> PyResult<Self> {
        if mapping.len() != n_inputs {
            return Err(PyValueError::new_err("Channel.from_map: mapping length != n_inputs"));
        }
        Ok(Self {
            inner: prob::Channel::from_map(n_inputs, n_labels, |x| mapping[x]).map_err(err)?,
        })
    }

    #[getter]
    fn n_inputs(&self) -> usize {
        self.inner.n_inputs()
    }

    #[getter]
    fn n_labels(&self) -> usize {
        self.inner.n_labels()
    }
}

/// Total-variation distance between two distributions on the same alphabet.
#[pyfunction]
fn tv_distance(p: Vec<f64>, q: Vec<f64>) -> PyResult<f64> {
    prob::tv_distance(&p, &q).map_err(err)
}

/// Shannon entropy in nats.
#[pyfunction]
fn entropy(p: Vec<f64>) -> PyResult<f64> {
    prob::entropy(&p).map_err(err)
}

/// KL divergence D(p || q) in nats.
#[pyfunction]
fn kl_divergence(p: Vec<f64>, q: Vec<f64>) -> PyResult<f64> {
    prob::kl_divergence(&p, &q).map_err(err)
}

/// Mutual information I(A; B) of a joint table p(a, b), in nats.
#[pyfunction]
fn mutual_information(joint: Vec<Vec<f64>>) -> PyResult<f64> {
    prob::mutual_information(&rows_to_array(joint, "mutual_information")?).map_err(err)
}

/// Conditional mutual information I(A; B | C) of a table p(a, b, c), in nats.
#[pyfunction]
fn conditional_mutual_information(joint: Vec<Vec<Vec<f64>>>) -> PyResult<f64> {
    let (na, nb) = (joint.len(), joint.first().map_or(0, |r| r.len()));
    let nc = joint.first().and_then(|r| r.first()).map_or(0, |c| c.len());
    let mut flat = Vec::with_capacity(na * nb * nc);
    for plane in &joint {
        if plane.len() != nb {
            return Err(PyValueError::new_err("conditional_mutual_information: ragged table"));
        }
        for row in plane {
            if row.len() != nc {
                return Err(PyValueError::new_err("conditional_mutual_information: ragged table"));
            }
            flat.extend_from_slice(row);
        }
    }
    let arr = ndarray::Array3::from_shape_vec((na, nb, nc), flat)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    prob::conditional_mutual_information(&arr).map_err(err)
}

/// Run the randomized bound-verification harness; returns one record per
/// instance: {"seed": int, "reports": [report dicts]}.
#[pyfunction]
#[pyo3(signature = (instances, seed = 7))]
fn run_harness<'py>(py: Python<'py>, instances: usize, seed: u64) -> PyResult<Bound<'py, PyList>> {
    let records = bounds::run_harness(instances, seed).map_err(err)?;
    let mut items = Vec::with_capacity(records.len());
    for rec in &records {
        let d = PyDict::new(py);
        d.set_item("seed", rec.seed)?;
        let reports: Vec<_> =
            rec.reports.iter().map(|r| report_to_dict(py, r)).collect::<PyResult<_>>()?;
        d.set_item("reports", PyList::new(py, reports)?)?;
        items.push(d);
    }
    PyList::new(py, items)
}

/// Unconditional empirical distance correlation between two sample matrices.
#[pyfunction]
fn dcor(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> PyResult<f64> {
    dependence::dcor(&rep_batch(a, "dcor")?, &rep_batch(b, "dcor")?).map_err(err)
}

/// Distance correlation between zd and ze conditioned on the class label.
#[pyfunction]
fn dcor_given_y<'py>(
    py: Python<'py>,
    zd: Vec<Vec<f64>>,
    ze: Vec<Vec<f64>>,
    y: Vec<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let stat = dependence::dcor_given_y(
        &rep_batch(zd, "dcor_given_y")?,
        &rep_batch(ze, "dcor_given_y")?,
        &PartitionLabels::by_class(y),
    )
    .map_err(err)?;
    cdcor_to_dict(py, &stat)
}

/// Distance correlation between zg and ze conditioned on (label, domain).
#[pyfunction]
fn dcor_given_y_d<'py>(
    py: Python<'py>,
    zg: Vec<Vec<f64>>,
    ze: Vec<Vec<f64>>,
    y: Vec<usize>,
    d: Vec<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let stat = dependence::dcor_given_y_d(
        &rep_batch(zg, "dcor_given_y_d")?,
        &rep_batch(ze, "dcor_given_y_d")?,
        &PartitionLabels::by_class_and_domain(y, d),
    )
    .map_err(err)?;
    cdcor_to_dict(py, &stat)
}

/// Accuracy plus equalized-odds gap (EOD) and equalized-odds distance (EO)
/// for hard predictions with group labels.
#[pyfunction]
fn fairness_report<'py>(
    py: Python<'py>,
    y_true: Vec<usize>,
    y_pred: Vec<usize>,
    g: Vec<usize>,
    n_labels: usize,
    n_groups: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let batch = EvalBatch::new(y_true, y_pred, g, None, n_labels, n_groups).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("n", batch.len())?;
    out.set_item("accuracy", fairness::accuracy(&batch))?;
    out.set_item("eod", fairness_to_dict(py, &fairness::eod(&batch).map_err(err)?)?)?;
    out.set_item("eo", fairness_to_dict(py, &fairness::eo(&batch).map_err(err)?)?)?;
    Ok(out)
}

fn to_tradeoffs(points: Vec<(f64, f64, f64)>) -> PyResult<Vec<TradeoffPoint>> {
    points.into_iter().map(|(v, u, l)| TradeoffPoint::new(v, u, l).map_err(err)).collect()
}

/// Non-dominated subset of (violation, utility, lambda) triples, sorted by
/// ascending violation.
#[pyfunction]
fn pareto_front(points: Vec<(f64, f64, f64)>) -> PyResult<Vec<(f64, f64, f64)>> {
    let front = pareto::pareto_front(&to_tradeoffs(points)?).map_err(err)?;
    Ok(front.into_iter().map(|p| (p.v, p.u, p.lambda)).collect())
}

/// Hypervolume of the Pareto front of the given points. Returns
/// (raw, percent of the reference box). `bounds`, when given, is the
/// (v_min, v_max, u_min, u_max) normalization window; otherwise the front's
/// own extremes are used.
#[pyfunction]
#[pyo3(signature = (points, bounds = None))]
fn hvi(points: Vec<(f64, f64, f64)>, bounds: Option<(f64, f64, f64, f64)>) -> PyResult<(f64, f64)> {
    let cfg = FrontConfig::default();
    let front = pareto::pareto_front(&to_tradeoffs(points)?).map_err(err)?;
    let norm = pareto::normalize_front(&front, bounds).map_err(err)?;
    pareto::hvi(&norm, &cfg).map_err(err)
}

/// Global-criterion pick from the Pareto front: the lambda of the normalized
/// front point closest to the utopia point (0, 1).
#[pyfunction]
#[pyo3(signature = (points, bounds = None))]
fn select_lambda(points: Vec<(f64, f64, f64)>, bounds: Option<(f64, f64, f64, f64)>) -> PyResult<f64> {
    let cfg = FrontConfig::default();
    let front = pareto::pareto_front(&to_tradeoffs(points)?).map_err(err)?;
    let norm = pareto::normalize_front(&front, bounds).map_err(err)?;
    let idx = pareto::select_global_criterion(&norm, &cfg).map_err(err)?;
    Ok(front[idx].lambda)
}

/// Spearman rank correlation with average ranks for ties.
#[pyfunction]
fn spearman(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    trainer::spearman(&a, &b).map_err(err)
}

fn parse_cfg<T: serde::de::DeserializeOwned + Default>(json: Option<&str>, what: &str) -> PyResult<T> {
    match json {
        None => Ok(T::default()),
        Some(s) => serde_json::from_str(s)
            .map_err(|e| PyValueError::new_err(format!("{what}: {e}"))),
    }
}

/// Generate synthetic multi-domain data, run the two-stage training and the
/// lambda sweep on the target domain, and return the sweep with summary
/// statistics. Configs are JSON objects; omitted fields take defaults.
#[pyfunction]
#[pyo3(signature = (synth_config = None, train_config = None, gamma = None))]
fn run_sweep<'py>(
    py: Python<'py>,
    synth_config: Option<&str>,
    train_config: Option<&str>,
    gamma: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let synth_cfg: SynthConfig = parse_cfg(synth_config, "synth_config")?;
    let train_cfg: TrainConfig = parse_cfg(train_config, "train_config")?;
    synth_cfg.validate().map_err(err)?;
    train_cfg.validate().map_err(err)?;

    let data = generate_synthetic(&synth_cfg).map_err(err)?;
    let stage1 = trainer::stage1_train(&data, &train_cfg).map_err(err)?;
    let (gamma, tuning) = match gamma {
        Some(g) => (g, Vec::new()),
        None => trainer::select_gamma(&data, &stage1, &train_cfg).map_err(err)?,
    };
    let points = trainer::sweep(&data, &stage1, &train_cfg, gamma, data.target()).map_err(err)?;
    let (hvi_raw, hvi_pct) = trainer::sweep_hvi(&points, &FrontConfig::default()).map_err(err)?;

    let out = PyDict::new(py);
    out.set_item("gamma", gamma)?;
    if !tuning.is_empty() {
        out.set_item("gamma_tuning", tuning)?;
    }
    out.set_item("hvi_raw", hvi_raw)?;
    out.set_item("hvi_percent", hvi_pct)?;
    out.set_item("stage1_domain_accuracy", stage1.domain_accuracy)?;
    out.set_item("stage1_group_accuracy", stage1.group_accuracy)?;
    let mut rows = Vec::with_capacity(points.len());
    for p in &points {
        let d = PyDict::new(py);
        d.set_item("lambda", p.lambda)?;
        d.set_item("v_eod", p.v_eod)?;
        d.set_item("v_eo", p.v_eo)?;
        d.set_item("u", p.u)?;
        rows.push(d);
    }
    out.set_item("points", PyList::new(py, rows)?)?;
    Ok(out)
}

/// Expected risk of a channel on the source mixture. `cap = None` gives the
/// zero-one risk; a finite cap gives the capped cross-entropy risk.
#[pyfunction]
#[pyo3(signature = (joint, channel, cap = None))]
fn source_risk(joint: &PyFiniteJoint, channel: &PyChannel, cap: Option<f64>) -> PyResult<f64> {
    let filter = &joint.inner.source_domains;
    match cap {
        None => {
            let pred = prob::push_channel(&joint.inner, &channel.inner).map_err(err)?;
            bounds::expected_risk(&pred, &BoundedLoss::zero_one(), filter).map_err(err)
        }
        Some(c) => {
            let loss = BoundedLoss::bounded_cross_entropy(c);
            let ny = channel.inner.n_labels();
            let eff = loss.effective_cap(ny);
            let mut rows = channel.inner.cond_probs.clone();
            for mut row in rows.rows_mut() {
                let floored = bounds::floor_distribution(&row.to_vec(), eff);
                for (dst, src) in row.iter_mut().zip(&floored) {
                    *dst = *src;
                }
            }
            bounds::cross_entropy_risk(&joint.inner, &rows, filter).map_err(err)
        }
    }
}

#[pymodule]
fn fairdg_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFiniteJoint>()?;
    m.add_class::<PyChannel>()?;
    m.add_function(wrap_pyfunction!(tv_distance, m)?)?;
    m.add_function(wrap_pyfunction!(entropy, m)?)?;
    m.add_function(wrap_pyfunction!(kl_divergence, m)?)?;
    m.add_function(wrap_pyfunction!(mutual_information, m)?)?;
    m.add_function(wrap_pyfunction!(conditional_mutual_information, m)?)?;
    m.add_function(wrap_pyfunction!(run_harness, m)?)?;
    m.add_function(wrap_pyfunction!(dcor, m)?)?;
    m.add_function(wrap_pyfunction!(dcor_given_y, m)?)?;
    m.add_function(wrap_pyfunction!(dcor_given_y_d, m)?)?;
    m.add_function(wrap_pyfunction!(fairness_report, m)?)?;
    m.add_function(wrap_pyfunction!(pareto_front, m)?)?;
    m.add_function(wrap_pyfunction!(hvi, m)?)?;
    m.add_function(wrap_pyfunction!(select_lambda, m)?)?;
    m.add_function(wrap_pyfunction!(spearman, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(source_risk, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
