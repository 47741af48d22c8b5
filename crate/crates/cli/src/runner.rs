//! Task dispatch and artifact emission.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use twistlab::cocycles::{gap_on_path, kz_exponents, surface_path};
use twistlab::fit::mean_stderr;
use twistlab::rng::{stream_rng, StreamRng};
use twistlab::spectral::{correlation_decay, local_dimension, spectral_mass_upper, QuadratureSpec};
use twistlab::surface::ZipperedRectangles;
use twistlab::twisted::sweep_and_fit;

use crate::config::{ConfigError, Experiment, ExperimentConfig, OutputFormat};
use crate::plot::plot_script;

/// Streams are `kind << 32 | index` under the experiment seed.
const SURFACE_STREAM: u64 = 0;
const OBSERVABLE_STREAM: u64 = 1;
const START_STREAM: u64 = 2;
const ESTIMATOR_STREAM: u64 = 3;
const PATH_STREAM: u64 = 4;

const CORRELATION_GROUPS: usize = 8;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("i/o failure on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskStatus {
    pub id: usize,
    pub label: String,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub experiment: Experiment,
    pub config_hash: String,
    pub seed: u64,
    pub threads: usize,
    pub started_unix: u64,
    pub wall_time_s: f64,
    pub tasks: Vec<TaskStatus>,
    pub files: Vec<FileEntry>,
}

impl RunManifest {
    pub fn failed_tasks(&self) -> usize {
        self.tasks.iter().filter(|t| !t.ok).count()
    }

    /// Rehashes every listed file under `dir`.
    pub fn verify(&self, dir: &Path) -> Result<(), String> {
        for f in &self.files {
            let bytes = std::fs::read(dir.join(&f.path)).map_err(|e| format!("{}: {e}", f.path))?;
            if sha256(&bytes) != f.sha256 || bytes.len() as u64 != f.bytes {
                return Err(format!("{} does not match its digest", f.path));
            }
        }
        Ok(())
    }
}

pub fn sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Rows of one output table.
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&'static str]) -> Self {
        Table { header: header.to_vec(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn render(&self, format: OutputFormat) -> Vec<u8> {
        match format {
            OutputFormat::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(&self.header).expect("in-memory write");
                for r in &self.rows {
                    w.write_record(r).expect("in-memory write");
                }
                w.into_inner().expect("in-memory write")
            }
            OutputFormat::Json => {
                let rows: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|r| {
                        let obj = self.header.iter().zip(r).map(|(k, v)| {
                            let v = match (v.parse::<i64>(), v.parse::<f64>()) {
                                (Ok(n), _) => json!(n),
                                (_, Ok(x)) => serde_json::Number::from_f64(x).map_or_else(|| json!(v), Value::Number),
                                _ => json!(v),
                            };
                            (k.to_string(), v)
                        });
                        Value::Object(obj.collect())
                    })
                    .collect();
                let mut out = serde_json::to_vec_pretty(&rows).expect("rows serialize");
                out.push(b'\n');
                out
            }
        }
    }
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

/// Files a task wants written, plus a JSON summary.
#[derive(Default)]
struct TaskOutput {
    tables: Vec<(String, Table)>,
    raw: Vec<(String, Vec<u8>)>,
    summary: Value,
}

type TaskResult = Result<TaskOutput, String>;

struct Task {
    label: String,
    run: Box<dyn Fn() -> TaskResult + Send + Sync>,
}

fn rng(seed: u64, kind: u64, index: usize) -> StreamRng {
    stream_rng(seed, (kind << 32) | index as u64)
}

fn setup(cfg: &ExperimentConfig, seed: u64, i: usize) -> Result<(ZipperedRectangles, twistlab::observables::CellwiseObservable), String> {
    let s = cfg.surface(&mut rng(seed, SURFACE_STREAM, i)).map_err(|e| e.to_string())?;
    let f = cfg.observable(&s, &mut rng(seed, OBSERVABLE_STREAM, i)).map_err(|e| e.to_string())?;
    Ok((s, f))
}

fn surface_meta(s: &ZipperedRectangles, f: &twistlab::observables::CellwiseObservable) -> Value {
    json!({
        "surface_sha256": sha256(s.to_json().as_bytes()),
        "observable_sha256": sha256(f.to_json().as_bytes()),
        "surface": serde_json::from_str::<Value>(&s.to_json()).expect("surface json"),
        "observable": serde_json::from_str::<Value>(&f.to_json()).expect("observable json"),
    })
}

fn tasks(kind: Experiment, cfg: &ExperimentConfig, seed: u64) -> Vec<Task> {
    let per_surface = |label: &str, body: fn(&ExperimentConfig, u64, usize) -> TaskResult| -> Vec<Task> {
        (0..cfg.surfaces)
            .map(|i| {
                let cfg = cfg.clone();
                Task { label: format!("{label}-{i:03}"), run: Box::new(move || body(&cfg, seed, i)) }
            })
            .collect()
    };
    match kind {
        Experiment::StratumInfo => {
            let cfg = cfg.clone();
            vec![Task { label: "stratum-info".into(), run: Box::new(move || stratum_info(&cfg)) }]
        }
        Experiment::TwistedSweep => per_surface("sweep", twisted_sweep),
        Experiment::GapSweep => per_surface("gap", gap),
        Experiment::Spectral => per_surface("spectral", spectral),
        Experiment::Weakmix => per_surface("weakmix", weakmix),
        Experiment::KzExponents => (0..cfg.samples.paths)
            .map(|i| {
                let cfg = cfg.clone();
                Task { label: format!("kz-path-{i:03}"), run: Box::new(move || kz_path(&cfg, seed, i)) }
            })
            .collect(),
    }
}

fn stratum_info(cfg: &ExperimentConfig) -> TaskResult {
    let p = cfg.permutation().map_err(|e| e.to_string())?;
    let info = p.stratum().map_err(|e| e.to_string())?;
    let kappa = info.kappa.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(" ");
    let mut t = Table::new(&["permutation", "genus", "kappa", "d", "marked_points"]);
    t.push(vec![p.to_string().replace('\n', " / "), info.genus.to_string(), kappa, info.d.to_string(), info.marked_points.to_string()]);
    Ok(TaskOutput { tables: vec![("stratum_info".into(), t)], summary: serde_json::to_value(&info).expect("info"), ..Default::default() })
}

fn twisted_sweep(cfg: &ExperimentConfig, seed: u64, i: usize) -> TaskResult {
    let (s, f) = setup(cfg, seed, i)?;
    let x0 = s.sample_point(&mut rng(seed, START_STREAM, i));
    let mut t = Table::new(&["T", "lambda", "re", "im", "abs"]);
    let mut fits = Vec::new();
    for &lambda in &cfg.lambda_grid {
        let sw = sweep_and_fit(&s, &f, lambda, &x0, &cfg.t_grid, cfg.fit_mode).map_err(|e| format!("lambda {lambda}: {e}"))?;
        for (tt, v) in sw.t_grid.iter().zip(&sw.values) {
            t.push(vec![num(*tt), num(lambda), num(v.re), num(v.im), num(v.norm())]);
        }
        fits.push(json!({
            "lambda": lambda,
            "exponent": sw.fit.exponent,
            "intercept": sw.fit.intercept,
            "r_squared": sw.fit.r_squared,
            "stderr": sw.fit.stderr,
            "mode": sw.fit.mode,
        }));
    }
    let mut meta = surface_meta(&s, &f);
    meta["start"] = json!(x0);
    meta["fits"] = json!(fits);
    Ok(TaskOutput { tables: vec![(format!("sweep_{i:03}"), t)], summary: meta, ..Default::default() })
}

fn gap(cfg: &ExperimentConfig, seed: u64, i: usize) -> TaskResult {
    let s = cfg.surface(&mut rng(seed, SURFACE_STREAM, i)).map_err(|e| e.to_string())?;
    let path = surface_path(&s, cfg.samples.zorich_steps).map_err(|e| e.to_string())?;
    let mut t = Table::new(&["lambda", "alpha_hat", "stderr", "n_steps"]);
    let mut estimates = Vec::new();
    for &lambda in &cfg.lambda_grid {
        let g = gap_on_path(&path, lambda);
        t.push(vec![num(lambda), num(g.alpha_hat), num(g.stderr), g.n_steps.to_string()]);
        estimates.push(g);
    }
    let mut raw = Vec::new();
    if cfg.path_log {
        let mut log = Vec::new();
        for (k, step) in path.steps.iter().enumerate() {
            let z = &step.zorich;
            let line = json!({
                "step": k,
                "kind": z.kind,
                "winner": z.winner,
                "losers": z.losers,
                "step_count": z.step_count,
                "duration": z.duration,
                "time": step.time,
            });
            serde_json::to_writer(&mut log, &line).expect("log line");
            log.push(b'\n');
        }
        raw.push((format!("gap_path_{i:03}.ndjson"), log));
    }
    let summary = json!({
        "surface_sha256": sha256(s.to_json().as_bytes()),
        "estimates": estimates,
    });
    Ok(TaskOutput { tables: vec![(format!("gap_{i:03}"), t)], raw, summary })
}

fn spectral(cfg: &ExperimentConfig, seed: u64, i: usize) -> TaskResult {
    let (s, f) = setup(cfg, seed, i)?;
    let mut seeds = rng(seed, ESTIMATOR_STREAM, i);
    let mut t = Table::new(&["lambda", "r", "mass_upper", "stderr"]);
    let mut dims = Vec::new();
    for &lambda in &cfg.lambda_grid {
        for &r in &cfg.r_grid {
            let e = spectral_mass_upper(&s, &f, lambda, r, cfg.samples.mc, seeds.random()).map_err(|e| e.to_string())?;
            t.push(vec![num(lambda), num(r), num(e.mass_upper), num(e.stderr)]);
        }
        let dim = local_dimension(&s, &f, lambda, &cfg.r_grid, cfg.samples.mc, seeds.random())
            .map(|d| json!({"lambda": lambda, "slope": d.slope, "stderr": d.stderr, "band": d.band, "r_squared": d.r_squared}))
            .unwrap_or_else(|e| json!({"lambda": lambda, "skipped": e.to_string()}));
        dims.push(dim);
    }
    let mut meta = surface_meta(&s, &f);
    meta["local_dimension"] = json!(dims);
    Ok(TaskOutput { tables: vec![(format!("spectral_{i:03}"), t)], summary: meta, ..Default::default() })
}

fn weakmix(cfg: &ExperimentConfig, seed: u64, i: usize) -> TaskResult {
    let (s, f) = setup(cfg, seed, i)?;
    let q = QuadratureSpec {
        n_base: cfg.samples.base_points,
        dt: cfg.samples.dt,
        groups: CORRELATION_GROUPS,
        seed: rng(seed, ESTIMATOR_STREAM, i).random(),
        max_evaluations: cfg.samples.max_evaluations,
    };
    let curve = correlation_decay(&s, &f, &f, &cfg.t_grid, &q).map_err(|e| e.to_string())?;
    let mut t = Table::new(&["T", "decay_value"]);
    for (tt, v) in curve.t_grid.iter().zip(&curve.values) {
        t.push(vec![num(*tt), num(*v)]);
    }
    let mut meta = surface_meta(&s, &f);
    meta["c0"] = json!(curve.c0);
    meta["fit"] = match curve.fit {
        Some(fit) => json!({
            "exponent": fit.slope,
            "band": fit.slope_interval(0.95),
            "r_squared": fit.r_squared,
            "stderr": fit.slope_stderr,
        }),
        None => Value::Null,
    };
    Ok(TaskOutput { tables: vec![(format!("decay_{i:03}"), t)], summary: meta, ..Default::default() })
}

fn kz_path(cfg: &ExperimentConfig, seed: u64, i: usize) -> TaskResult {
    let p = cfg.permutation().map_err(|e| e.to_string())?;
    let e =
        kz_exponents(&p, 1, cfg.samples.zorich_steps, cfg.samples.exponents, &mut rng(seed, PATH_STREAM, i)).map_err(|e| e.to_string())?;
    Ok(TaskOutput { summary: json!({"exponents": e.exponents, "steps": e.total_steps}), ..Default::default() })
}

/// Combines per-path exponents into the exponent table.
fn kz_tables(outcomes: &[(String, TaskResult)]) -> Vec<(String, Table)> {
    let per_path: Vec<(usize, Vec<f64>, u64)> = outcomes
        .iter()
        .enumerate()
        .filter_map(|(i, (_, r))| {
            r.as_ref().ok().map(|o| {
                (i, serde_json::from_value(o.summary["exponents"].clone()).expect("exponents"), o.summary["steps"].as_u64().unwrap_or(0))
            })
        })
        .collect();
    let mut paths = Table::new(&["path", "index", "exponent"]);
    for (i, ex, _) in &per_path {
        for (k, e) in ex.iter().enumerate() {
            paths.push(vec![i.to_string(), (k + 1).to_string(), num(*e)]);
        }
    }
    let mut table = Table::new(&["index", "exponent", "stderr", "n_paths", "total_steps"]);
    if let Some((_, first, _)) = per_path.first() {
        let total: u64 = per_path.iter().map(|p| p.2).sum();
        for k in 0..first.len() {
            let col: Vec<f64> = per_path.iter().map(|p| p.1[k]).collect();
            let (m, se) = mean_stderr(&col);
            let se = if se.is_finite() { num(se) } else { "nan".into() };
            table.push(vec![(k + 1).to_string(), num(m), se, col.len().to_string(), total.to_string()]);
        }
    }
    vec![("kz".into(), table), ("kz_paths".into(), paths)]
}

fn write(dir: &Path, name: &str, bytes: &[u8], files: &mut Vec<FileEntry>) -> Result<(), RunError> {
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(|source| RunError::Io { path, source })?;
    files.push(FileEntry { path: name.into(), sha256: sha256(bytes), bytes: bytes.len() as u64 });
    Ok(())
}

/// Runs every task of the experiment on a pool of `threads` workers and
/// writes data files, summaries, a plot script and the manifest into the
/// configured output directory. Data files depend only on the config.
pub fn run(kind: Experiment, cfg: &ExperimentConfig, threads: usize) -> Result<RunManifest, RunError> {
    cfg.validate()?;
    let seed = cfg.seed()?;
    let started = Instant::now();
    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let dir = cfg.out.clone();
    std::fs::create_dir_all(&dir).map_err(|source| RunError::Io { path: dir.clone(), source })?;

    let work = tasks(kind, cfg, seed);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| ConfigError::Invalid(format!("thread pool: {e}")))?;
    let outcomes: Vec<(String, TaskResult)> = pool.install(|| work.par_iter().map(|t| (t.label.clone(), (t.run)())).collect());

    let ext = match cfg.format {
        OutputFormat::Csv => "csv",
        OutputFormat::Json => "json",
    };
    let mut files = Vec::new();
    let mut data_files = Vec::new();
    let mut summaries = Vec::new();
    let mut statuses = Vec::new();
    for (id, (label, outcome)) in outcomes.iter().enumerate() {
        match outcome {
            Ok(out) => {
                for (name, table) in &out.tables {
                    let file = format!("{name}.{ext}");
                    write(&dir, &file, &table.render(cfg.format), &mut files)?;
                    data_files.push(file);
                }
                for (name, bytes) in &out.raw {
                    write(&dir, name, bytes, &mut files)?;
                }
                summaries.push(json!({"task": label, "summary": out.summary}));
                statuses.push(TaskStatus { id, label: label.clone(), ok: true, error: None });
            }
            Err(e) => statuses.push(TaskStatus { id, label: label.clone(), ok: false, error: Some(e.clone()) }),
        }
    }
    if kind == Experiment::KzExponents {
        for (name, table) in kz_tables(&outcomes) {
            let file = format!("{name}.{ext}");
            write(&dir, &file, &table.render(cfg.format), &mut files)?;
            data_files.push(file);
        }
    }
    let mut summary = serde_json::to_vec_pretty(&json!({"experiment": kind, "tasks": summaries})).expect("summary");
    summary.push(b'\n');
    write(&dir, "summary.json", &summary, &mut files)?;
    write(&dir, "config.json", cfg.to_json().as_bytes(), &mut files)?;
    write(&dir, "plot.py", plot_script(kind, cfg.format, &data_files).as_bytes(), &mut files)?;

    let manifest = RunManifest {
        artifact_version: env!("CARGO_PKG_VERSION").into(),
        experiment: kind,
        config_hash: cfg.hash(),
        seed,
        threads: threads.max(1),
        started_unix,
        wall_time_s: started.elapsed().as_secs_f64(),
        tasks: statuses,
        files,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest");
    std::fs::write(&path, text).map_err(|source| RunError::Io { path, source })?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_tables_keep_numbers_and_text() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec!["1e0".into(), "x".into()]);
        let v: Value = serde_json::from_slice(&t.render(OutputFormat::Json)).unwrap();
        assert_eq!(v, json!([{"a": 1.0, "b": "x"}]));
        assert_eq!(t.render(OutputFormat::Csv), b"a,b\n1e0,x\n");
    }

    #[test]
    fn streams_do_not_collide() {
        let a: u64 = rng(1, SURFACE_STREAM, 1).random();
        let b: u64 = rng(1, OBSERVABLE_STREAM, 1).random();
        let c: u64 = rng(1, SURFACE_STREAM, 2).random();
        assert!(a != b && a != c && b != c);
    }
}
