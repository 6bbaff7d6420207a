//! Command-line entry point: wires JSON/CSV inputs to the library modules
//! and emits machine-readable reports.
//!
//! Exit codes: 0 on success; 2 on any validation error, with a single-line
//! diagnostic on stderr. Every output embeds the tool version and a SHA-256
//! hash of the resolved invocation, and identical invocations produce
//! byte-identical outputs. The environment variable `FAIRDG_THREADS` caps
//! internal parallelism.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use ndarray::Array2;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use fairdg::bounds::run_harness;
use fairdg::dependence::{dcor, dcor_given_y, dcor_given_y_d, PartitionLabels, RepBatch};
use fairdg::fairness::{accuracy, eo, eod, EvalBatch};
use fairdg::nn::Checkpoint;
use fairdg::pareto::{
    hvi, normalize_front, pareto_front, select_global_criterion, FrontConfig, TradeoffPoint,
};
use fairdg::synth::{generate_synthetic, SynthConfig};
use fairdg::trainer::{
    select_gamma, spearman, stage1_train, stage2_train, sweep, sweep_hvi, SweepPoint, TrainConfig,
};

const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "fairdg", version, about = "Fair domain generalization laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Conditioning {
    /// Unconditional distance correlation.
    None,
    /// Condition on the label column `y`.
    Y,
    /// Condition jointly on the label column `y` and domain column `d`.
    Yd,
}

#[derive(Subcommand)]
enum Command {
    /// Run the random-instance bound harness and emit every report.
    VerifyBounds {
        #[arg(long, default_value_t = 1000)]
        instances: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Distance correlation between two representation blocks in a CSV.
    ///
    /// Expected header: a0..a{p-1}, b0..b{q-1}, then optional `y` and `d`
    /// label columns for the conditional variants.
    Dcor {
        #[arg(long, name = "in")]
        r#in: PathBuf,
        #[arg(long, value_enum, default_value_t = Conditioning::None)]
        conditional: Conditioning,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Group-fairness metrics of a prediction CSV (y_true, y_pred, g[, d]).
    Fairness {
        #[arg(long, name = "in")]
        r#in: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pareto front, hypervolume, and global-criterion selection of a
    /// trade-off CSV (columns lambda, V, U; `V_eod` is accepted for V).
    Pareto {
        #[arg(long, name = "in")]
        r#in: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one two-stage model from a JSON config and write a checkpoint,
    /// per-epoch curves, and target metrics into --out-dir.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Full lambda sweep from a JSON config; writes sweep.csv and a summary.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Summarize an existing sweep.csv (front, hypervolume, selection,
    /// rank trend).
    Report {
        #[arg(long, name = "in")]
        r#in: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    if let Ok(threads) = std::env::var("FAIRDG_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n > 0 => {
                // ignore the error if a pool already exists
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("fairdg: FAIRDG_THREADS must be a positive integer");
                std::process::exit(2);
            }
        }
    }
    let cli = Cli::parse();
    if let Err(msg) = run(cli.command) {
        eprintln!("fairdg: {}", msg.replace('\n', " "));
        std::process::exit(2);
    }
}

fn run(cmd: Command) -> Result<(), String> {
    match cmd {
        Command::VerifyBounds { instances, seed, out } => verify_bounds(instances, seed, out),
        Command::Dcor { r#in, conditional, out } => dcor_cmd(&r#in, conditional, out),
        Command::Fairness { r#in, out } => fairness_cmd(&r#in, out),
        Command::Pareto { r#in, out } => pareto_cmd(&r#in, out),
        Command::Train { config, out_dir } => train_cmd(&config, &out_dir),
        Command::Sweep { config, out_dir } => sweep_cmd(&config, &out_dir),
        Command::Report { r#in, format, out } => report_cmd(&r#in, format, out),
    }
}

// ---- shared plumbing ----

/// Round to 12 significant digits so emitted numbers are stable for oracle
/// cross-checking across implementations.
fn sig12(v: f64) -> f64 {
    if !v.is_finite() {
        return v;
    }
    format!("{v:.11e}").parse().expect("formatted float parses back")
}

fn round_json(value: &mut serde_json::Value) {
    match value {
        serde_json::Value::Number(n) => {
            if let Some(f) = n.as_f64() {
                if n.as_i64().is_none() && n.as_u64().is_none() {
                    if let Some(rounded) = serde_json::Number::from_f64(sig12(f)) {
                        *value = serde_json::Value::Number(rounded);
                    }
                }
            }
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(round_json),
        serde_json::Value::Object(map) => map.values_mut().for_each(round_json),
        _ => {}
    }
}

fn config_hash(parts: &[&str]) -> String {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update(p.as_bytes());
        hasher.update([0u8]);
    }
    format!("{:x}", hasher.finalize())
}

fn emit_json<T: Serialize>(payload: &T, hash: &str, out: Option<&Path>) -> Result<(), String> {
    let mut doc = json!({
        "tool_version": TOOL_VERSION,
        "config_hash": hash,
        "result": serde_json::to_value(payload).map_err(|e| e.to_string())?,
    });
    round_json(&mut doc);
    let text = serde_json::to_string_pretty(&doc).map_err(|e| e.to_string())?;
    match out {
        Some(path) => fs::write(path, text + "\n").map_err(|e| format!("write {}: {e}", path.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn read_file(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("read {}: {e}", path.display()))
}

struct CsvTable {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_csv(path: &Path) -> Result<CsvTable, String> {
    let text = read_file(path)?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| format!("{}: {e}", path.display()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| format!("{}: {e}", path.display()))?;
        rows.push(record.iter().map(|v| v.trim().to_string()).collect());
    }
    if rows.is_empty() {
        return Err(format!("{}: no data rows", path.display()));
    }
    Ok(CsvTable { headers, rows })
}

impl CsvTable {
    fn column_index(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    fn float_column(&self, idx: usize) -> Result<Vec<f64>, String> {
        self.rows
            .iter()
            .map(|r| r[idx].parse::<f64>().map_err(|e| format!("column {}: {e}", self.headers[idx])))
            .collect()
    }

    fn id_column(&self, idx: usize) -> Result<Vec<usize>, String> {
        self.rows
            .iter()
            .map(|r| r[idx].parse::<usize>().map_err(|e| format!("column {}: {e}", self.headers[idx])))
            .collect()
    }
}

// ---- subcommands ----

fn verify_bounds(instances: usize, seed: u64, out: Option<PathBuf>) -> Result<(), String> {
    if instances == 0 {
        return Err("verify-bounds: --instances must be positive".into());
    }
    let records = run_harness(instances, seed).map_err(|e| e.to_string())?;
    let violations: usize = records
        .iter()
        .flat_map(|r| &r.reports)
        .filter(|rep| rep.slack < -1e-9)
        .count();
    let payload = json!({
        "instances": instances,
        "seed": seed,
        "violations": violations,
        "records": records,
    });
    let hash = config_hash(&["verify-bounds", &instances.to_string(), &seed.to_string()]);
    emit_json(&payload, &hash, out.as_deref())
}

fn block(table: &CsvTable, prefix: &str) -> Result<Array2<f64>, String> {
    let cols: Vec<usize> = (0..)
        .map_while(|i| table.column_index(&format!("{prefix}{i}")))
        .collect();
    if cols.is_empty() {
        return Err(format!("dcor: no columns named {prefix}0, {prefix}1, ..."));
    }
    let n = table.rows.len();
    let mut out = Array2::zeros((n, cols.len()));
    for (k, &c) in cols.iter().enumerate() {
        for (i, v) in table.float_column(c)?.into_iter().enumerate() {
            out[[i, k]] = v;
        }
    }
    Ok(out)
}

fn dcor_cmd(input: &Path, conditional: Conditioning, out: Option<PathBuf>) -> Result<(), String> {
    let table = read_csv(input)?;
    let a = RepBatch::new(block(&table, "a")?).map_err(|e| e.to_string())?;
    let b = RepBatch::new(block(&table, "b")?).map_err(|e| e.to_string())?;
    let id_col = |name: &str| -> Result<Vec<usize>, String> {
        table
            .column_index(name)
            .ok_or_else(|| format!("dcor: missing required column {name}"))
            .and_then(|i| table.id_column(i))
    };
    let payload = match conditional {
        Conditioning::None => {
            let value = dcor(&a, &b).map_err(|e| e.to_string())?;
            json!({ "conditioning": "none", "value": value })
        }
        Conditioning::Y => {
            let labels = PartitionLabels::by_class(id_col("y")?);
            let c = dcor_given_y(&a, &b, &labels).map_err(|e| e.to_string())?;
            json!({ "conditioning": "y", "stat": c })
        }
        Conditioning::Yd => {
            let labels = PartitionLabels::by_class_and_domain(id_col("y")?, id_col("d")?);
            let c = dcor_given_y_d(&a, &b, &labels).map_err(|e| e.to_string())?;
            json!({ "conditioning": "y_d", "stat": c })
        }
    };
    let hash = config_hash(&["dcor", &read_file(input)?]);
    emit_json(&payload, &hash, out.as_deref())
}

fn fairness_cmd(input: &Path, out: Option<PathBuf>) -> Result<(), String> {
    let table = read_csv(input)?;
    let col = |name: &str| -> Result<Vec<usize>, String> {
        table
            .column_index(name)
            .ok_or_else(|| format!("fairness: missing required column {name}"))
            .and_then(|i| table.id_column(i))
    };
    let d = match table.column_index("d") {
        Some(i) => Some(table.id_column(i)?),
        None => None,
    };
    let batch = EvalBatch::from_columns(col("y_true")?, col("y_pred")?, col("g")?, d)
        .map_err(|e| e.to_string())?;
    let eod_v = eod(&batch).map_err(|e| e.to_string())?;
    let eo_v = eo(&batch).map_err(|e| e.to_string())?;
    let payload = json!({
        "n": batch.len(),
        "accuracy": accuracy(&batch),
        "eod": { "raw": eod_v.value, "percent": eod_v.value * 100.0,
                 "evaluated_pairs": eod_v.evaluated_pairs, "skipped_pairs": eod_v.skipped_pairs },
        "eo": { "raw": eo_v.value, "percent": eo_v.value * 100.0,
                "evaluated_pairs": eo_v.evaluated_pairs, "skipped_pairs": eo_v.skipped_pairs },
    });
    let hash = config_hash(&["fairness", &read_file(input)?]);
    emit_json(&payload, &hash, out.as_deref())
}

fn read_tradeoff_csv(input: &Path) -> Result<Vec<TradeoffPoint>, String> {
    let table = read_csv(input)?;
    let lam = table
        .column_index("lambda")
        .ok_or("missing required column lambda")
        .map_err(String::from)?;
    let v = table
        .column_index("V")
        .or_else(|| table.column_index("V_eod"))
        .ok_or("missing required column V (or V_eod)")
        .map_err(String::from)?;
    let u = table.column_index("U").ok_or("missing required column U").map_err(String::from)?;
    let (lam, v, u) = (table.float_column(lam)?, table.float_column(v)?, table.float_column(u)?);
    lam.iter()
        .zip(&v)
        .zip(&u)
        .map(|((&l, &v), &u)| TradeoffPoint::new(v, u, l).map_err(|e| e.to_string()))
        .collect()
}

fn front_summary(points: &[TradeoffPoint]) -> Result<serde_json::Value, String> {
    let cfg = FrontConfig::default();
    let front = pareto_front(points).map_err(|e| e.to_string())?;
    let norm = normalize_front(&front, Some((0.0, 1.0, 0.0, 1.0))).map_err(|e| e.to_string())?;
    let (raw, pct) = hvi(&norm, &cfg).map_err(|e| e.to_string())?;
    let selected = select_global_criterion(&norm, &cfg).map_err(|e| e.to_string())?;
    Ok(json!({
        "front": front,
        "hvi_raw": raw,
        "hvi_percent": pct,
        "selected": front[selected],
    }))
}

fn pareto_cmd(input: &Path, out: Option<PathBuf>) -> Result<(), String> {
    let points = read_tradeoff_csv(input)?;
    let payload = front_summary(&points)?;
    let hash = config_hash(&["pareto", &read_file(input)?]);
    emit_json(&payload, &hash, out.as_deref())
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainCliConfig {
    #[serde(default)]
    synth: SynthConfig,
    #[serde(default)]
    train: TrainConfig,
    #[serde(default)]
    lambda: f64,
    #[serde(default)]
    gamma: f64,
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepCliConfig {
    #[serde(default)]
    synth: SynthConfig,
    #[serde(default)]
    train: TrainConfig,
    /// Invariance weight; omitted means "tune on the validation domain".
    gamma: Option<f64>,
}

fn ensure_dir(dir: &Path) -> Result<(), String> {
    fs::create_dir_all(dir).map_err(|e| format!("create {}: {e}", dir.display()))
}

fn write_sweep_csv(path: &Path, points: &[SweepPoint]) -> Result<(), String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["lambda", "V_eod", "V_eo", "U"]).map_err(|e| e.to_string())?;
    for p in points {
        w.write_record([
            sig12(p.lambda).to_string(),
            sig12(p.v_eod).to_string(),
            sig12(p.v_eo).to_string(),
            sig12(p.u).to_string(),
        ])
        .map_err(|e| e.to_string())?;
    }
    let bytes = w.into_inner().map_err(|e| e.to_string())?;
    fs::write(path, bytes).map_err(|e| format!("write {}: {e}", path.display()))
}

fn train_cmd(config: &Path, out_dir: &Path) -> Result<(), String> {
    let text = read_file(config)?;
    let cfg: TrainCliConfig = serde_json::from_str(&text).map_err(|e| format!("config: {e}"))?;
    let hash = config_hash(&["train", &text]);
    ensure_dir(out_dir)?;

    let data = generate_synthetic(&cfg.synth).map_err(|e| e.to_string())?;
    let s1 = stage1_train(&data, &cfg.train).map_err(|e| e.to_string())?;
    let run = stage2_train(&data, &s1, &cfg.train, cfg.lambda, cfg.gamma).map_err(|e| e.to_string())?;
    let (acc, eod_v, eo_v) =
        fairdg::trainer::evaluate_target(&run.model, data.target(), cfg.lambda).map_err(|e| e.to_string())?;

    fs::write(out_dir.join("checkpoint.json"), Checkpoint::new(run.model.stack.clone()).to_json())
        .map_err(|e| e.to_string())?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["epoch", "objective", "val_accuracy", "val_eod"]).map_err(|e| e.to_string())?;
    for c in &run.curves {
        w.write_record([
            c.epoch.to_string(),
            sig12(c.objective).to_string(),
            sig12(c.val_accuracy).to_string(),
            sig12(c.val_eod).to_string(),
        ])
        .map_err(|e| e.to_string())?;
    }
    fs::write(out_dir.join("curves.csv"), w.into_inner().map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;

    let payload = json!({
        "lambda": cfg.lambda,
        "gamma": cfg.gamma,
        "stage1": {
            "domain_accuracy": s1.domain_accuracy,
            "group_accuracy": s1.group_accuracy,
            "warnings": s1.warnings,
        },
        "target": { "accuracy": acc, "eod": eod_v.value, "eo": eo_v.value },
        "outputs": ["checkpoint.json", "curves.csv"],
    });
    emit_json(&payload, &hash, Some(&out_dir.join("metrics.json")))
}

fn sweep_cmd(config: &Path, out_dir: &Path) -> Result<(), String> {
    let text = read_file(config)?;
    let cfg: SweepCliConfig = serde_json::from_str(&text).map_err(|e| format!("config: {e}"))?;
    let hash = config_hash(&["sweep", &text]);
    ensure_dir(out_dir)?;

    let data = generate_synthetic(&cfg.synth).map_err(|e| e.to_string())?;
    let s1 = stage1_train(&data, &cfg.train).map_err(|e| e.to_string())?;
    let (gamma, tuning) = match cfg.gamma {
        Some(g) => (g, Vec::new()),
        None => select_gamma(&data, &s1, &cfg.train).map_err(|e| e.to_string())?,
    };
    let points = sweep(&data, &s1, &cfg.train, gamma, data.target()).map_err(|e| e.to_string())?;
    write_sweep_csv(&out_dir.join("sweep.csv"), &points)?;

    let (raw, pct) = sweep_hvi(&points, &FrontConfig::default()).map_err(|e| e.to_string())?;
    let payload = json!({
        "gamma": gamma,
        "gamma_tuning": tuning,
        "n_points": points.len(),
        "hvi_raw": raw,
        "hvi_percent": pct,
        "stage1": {
            "domain_accuracy": s1.domain_accuracy,
            "group_accuracy": s1.group_accuracy,
            "warnings": s1.warnings,
        },
        "outputs": ["sweep.csv"],
    });
    emit_json(&payload, &hash, Some(&out_dir.join("summary.json")))
}

fn report_cmd(input: &Path, format: Format, out: Option<PathBuf>) -> Result<(), String> {
    let table = read_csv(input)?;
    let need = |name: &str| -> Result<Vec<f64>, String> {
        table
            .column_index(name)
            .ok_or_else(|| format!("report: missing required column {name}"))
            .and_then(|i| table.float_column(i))
    };
    let lam = need("lambda")?;
    let v_eod = need("V_eod")?;
    let u = need("U")?;
    let points: Vec<TradeoffPoint> = lam
        .iter()
        .zip(&v_eod)
        .zip(&u)
        .map(|((&l, &v), &u)| TradeoffPoint::new(v, u, l).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    let summary = front_summary(&points)?;
    let trend = spearman(&lam, &v_eod).map(sig12).ok();
    let hash = config_hash(&["report", &read_file(input)?]);

    match format {
        Format::Json => {
            let payload = json!({
                "n_points": points.len(),
                "spearman_lambda_eod": trend,
                "pareto": summary,
            });
            emit_json(&payload, &hash, out.as_deref())
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["key", "value"]).map_err(|e| e.to_string())?;
            let mut kv = vec![
                ("tool_version".to_string(), TOOL_VERSION.to_string()),
                ("config_hash".to_string(), hash),
                ("n_points".to_string(), points.len().to_string()),
                (
                    "spearman_lambda_eod".to_string(),
                    trend.map_or("NA".into(), |t| t.to_string()),
                ),
            ];
            for key in ["hvi_raw", "hvi_percent"] {
                kv.push((key.to_string(), sig12(summary[key].as_f64().unwrap()).to_string()));
            }
            for key in ["lambda", "v", "u"] {
                kv.push((
                    format!("selected_{key}"),
                    sig12(summary["selected"][key].as_f64().unwrap()).to_string(),
                ));
            }
            for (k, v) in kv {
                w.write_record([k, v]).map_err(|e| e.to_string())?;
            }
            let bytes = w.into_inner().map_err(|e| e.to_string())?;
            match out {
                Some(path) => {
                    fs::write(&path, bytes).map_err(|e| format!("write {}: {e}", path.display()))
                }
                None => {
                    print!("{}", String::from_utf8_lossy(&bytes));
                    Ok(())
                }
            }
        }
    }
}
