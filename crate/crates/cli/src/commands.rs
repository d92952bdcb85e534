//! Command implementations. Each returns its structured result and writes
//! its files; `main` only parses flags and maps errors to exit codes.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use ijforest::dataset::{self, load_query_csv, TrainingSet};
use ijforest::experiments::{
    self, run_bias_grid, run_coverage, run_metrics, run_normality, BiasGrid, CoverageReport, DataSource, MetricsReport,
    NormalityReport, ReplicateTable, SourceSpec,
};
use ijforest::forest::{self, ResolvedForestConfig};
use ijforest::jackknife::{forest_estimate, interval};
use ijforest::oracle::{
    anova_bound_check, exact_resampling, hajek_projection_stats, monte_carlo_vij, BaseLearnerSpec,
    FiniteSupportDistribution, EXACT_RTOL,
};
use ijforest::persist::{sha256_hex, ModelFile, TOOL_VERSION};
use ijforest::LabeledExample;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{
    Atom, GenConfig, OracleCase, OracleConfig, PredictConfig, SimulateConfig, TrainConfig, THREADS_ENV,
};

/// A check that ran but did not hold. Maps to exit code 2.
#[derive(Debug)]
pub struct AssertionFailure(pub String);

impl fmt::Display for AssertionFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "assertion failed: {}", self.0)
    }
}

impl std::error::Error for AssertionFailure {}

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_ASSERTION: i32 = 2;

pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<AssertionFailure>().is_some() {
        EXIT_ASSERTION
    } else {
        EXIT_USAGE
    }
}

/// Worker count: explicit value, else the environment variable, else the
/// machine's parallelism.
pub fn resolve_threads(explicit: Option<usize>) -> anyhow::Result<usize> {
    if let Some(t) = explicit {
        if t == 0 {
            bail!("thread count must be at least 1");
        }
        return Ok(t);
    }
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let t: usize = v.trim().parse().with_context(|| format!("{THREADS_ENV}={v:?} is not a thread count"))?;
        return resolve_threads(Some(t));
    }
    Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Runs `f` on a dedicated pool of `threads` workers.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> anyhow::Result<T> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    Ok(pool.install(f))
}

fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn json_bytes<T: Serialize>(value: &T) -> anyhow::Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

/// Path of the metadata file written next to a CSV output.
pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn write_meta(path: &Path, command: &str, config: &impl Serialize) -> anyhow::Result<()> {
    let meta = json!({ "tool": TOOL_VERSION, "command": command, "config": config });
    write_file(&meta_path(path), &json_bytes(&meta)?)
}

/// Writes `bytes` to `out`, or to stdout when `out` is `None`.
fn emit(out: Option<&Path>, bytes: &[u8]) -> anyhow::Result<()> {
    match out {
        Some(p) => write_file(p, bytes),
        None => match std::io::stdout().lock().write_all(bytes) {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
            _ => Ok(()),
        },
    }
}

pub fn cmd_gen(cfg: &GenConfig) -> anyhow::Result<TrainingSet> {
    let ts = dataset::gen_synthetic(&cfg.spec(), cfg.n, cfg.seed)?;
    let mut bytes = Vec::new();
    ts.write_csv(&mut bytes)?;
    emit(cfg.out.as_deref(), &bytes)?;
    if let Some(p) = &cfg.out {
        write_meta(p, "gen", cfg)?;
    }
    Ok(ts)
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub tool: String,
    pub n: usize,
    pub d: usize,
    pub s: usize,
    pub b: usize,
    pub mode: String,
    pub wall_time_seconds: f64,
    pub data_fingerprint: String,
    pub model_sha256: String,
    pub resolved: ResolvedForestConfig,
    pub config: TrainConfig,
}

pub fn cmd_train(cfg: &TrainConfig, threads: usize) -> anyhow::Result<TrainSummary> {
    let data = cfg.data.as_ref().ok_or_else(|| anyhow!("train needs a dataset (--data or [train].data)"))?;
    let out = cfg.out.as_ref().ok_or_else(|| anyhow!("train needs an output path (--out or [train].out)"))?;
    let ts = dataset::load_csv(data, &cfg.target, cfg.features.as_deref())?;
    let resolved = cfg.forest.resolve(ts.n())?;
    let start = Instant::now();
    let model = with_threads(threads, || forest::train_resolved(&ts, &resolved))??;
    let wall_time_seconds = start.elapsed().as_secs_f64();
    let file = ModelFile::new(&model, &ts);
    let bytes = file.to_bytes()?;
    write_file(out, &bytes)?;
    let summary = TrainSummary {
        tool: TOOL_VERSION.into(),
        n: ts.n(),
        d: ts.d(),
        s: resolved.s,
        b: resolved.b,
        mode: resolved.tree.mode.to_string(),
        wall_time_seconds,
        data_fingerprint: file.fingerprint,
        model_sha256: sha256_hex(&bytes),
        resolved,
        config: cfg.clone(),
    };
    if let Some(p) = &cfg.summary {
        write_file(p, &json_bytes(&summary)?)?;
    }
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PredictionRecord {
    pub row: usize,
    pub y_hat: f64,
    pub v_plugin: f64,
    pub v_corrected: f64,
    pub v_truncated: f64,
    pub lower: f64,
    pub upper: f64,
    pub degenerate: bool,
}

fn records_csv(records: &[PredictionRecord]) -> String {
    let mut s = String::from("row,y_hat,v_plugin,v_corrected,v_truncated,lower,upper,degenerate\n");
    for r in records {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.row, r.y_hat, r.v_plugin, r.v_corrected, r.v_truncated, r.lower, r.upper, r.degenerate
        ));
    }
    s
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

pub fn cmd_predict(cfg: &PredictConfig, threads: usize) -> anyhow::Result<Vec<PredictionRecord>> {
    let model_path = cfg.model.as_ref().ok_or_else(|| anyhow!("predict needs a model (--model or [predict].model)"))?;
    let query = cfg.query.as_ref().ok_or_else(|| anyhow!("predict needs a query file (--query or [predict].query)"))?;
    let file = ModelFile::load(model_path).with_context(|| format!("loading model {}", model_path.display()))?;
    let names = file.feature_names.clone();
    let resolved = file.config;
    let model = file.into_forest()?;
    let points = load_query_csv(query, &names)?;
    let records = with_threads(threads, || {
        use rayon::prelude::*;
        points
            .par_iter()
            .enumerate()
            .map(|(i, x)| {
                let (y_hat, est) = forest_estimate(&model, x)?;
                let iv = interval(y_hat, &est, cfg.level)?;
                Ok(PredictionRecord {
                    row: i + 1,
                    y_hat,
                    v_plugin: est.plugin,
                    v_corrected: est.corrected,
                    v_truncated: est.truncated,
                    lower: iv.lower(),
                    upper: iv.upper(),
                    degenerate: iv.degenerate,
                })
            })
            .collect::<ijforest::Result<Vec<_>>>()
    })??;
    match cfg.out.as_deref() {
        Some(p) if is_json(p) => {
            let doc = json!({ "tool": TOOL_VERSION, "config": cfg, "model": resolved, "records": records });
            write_file(p, &json_bytes(&doc)?)?;
        }
        Some(p) => {
            write_file(p, records_csv(&records).as_bytes())?;
            write_meta(p, "predict", &json!({ "predict": cfg, "model": resolved }))?;
        }
        None => emit(None, records_csv(&records).as_bytes())?,
    }
    Ok(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimulateKind {
    Metrics,
    Normality,
    Coverage,
    BiasGrid,
    Bootstrap,
}

pub enum SimulateOutput {
    Metrics(ReplicateTable, MetricsReport),
    Normality(ReplicateTable, NormalityReport),
    Coverage(ReplicateTable, CoverageReport),
    BiasGrid(BiasGrid),
}

/// Header of the metrics table.
pub const METRICS_COLUMNS: &str = "Distr,d,n,rel_bias2,rel_var,rel_mse,abs_bias2,abs_var,abs_mse";

pub fn metrics_row(table: &ReplicateTable, d: usize, rep: &MetricsReport) -> String {
    let rel = |f: fn(&experiments::MetricTriple) -> f64| {
        rep.relative.as_ref().map(f).map_or("NaN".to_string(), |v| v.to_string())
    };
    format!(
        "{},{},{},{},{},{},{},{},{}\n",
        table.source,
        d,
        table.n,
        rel(|m| m.bias2),
        rel(|m| m.variance),
        rel(|m| m.mse),
        rep.absolute.bias2,
        rep.absolute.variance,
        rep.absolute.mse
    )
}

fn with_extension(path: &Path, ext: &str) -> PathBuf {
    let mut p = path.to_path_buf();
    p.set_extension(ext);
    p
}

pub fn cmd_simulate(kind: SimulateKind, cfg: &SimulateConfig, threads: usize) -> anyhow::Result<SimulateOutput> {
    let out = cfg.out.as_deref();
    if kind == SimulateKind::BiasGrid {
        let grid = with_threads(threads, || run_bias_grid(&cfg.bias_grid))??;
        emit(out, grid.to_csv().as_bytes())?;
        if let Some(p) = out {
            write_meta(p, "simulate bias-grid", &cfg.bias_grid)?;
        }
        return Ok(SimulateOutput::BiasGrid(grid));
    }
    let spec = cfg.experiment();
    if kind == SimulateKind::Bootstrap && !matches!(spec.source, SourceSpec::Csv { bootstrap: true, .. }) {
        bail!("simulate bootstrap needs a CSV source with bootstrap = true (--data)");
    }
    let source = with_threads(threads, || DataSource::from_spec(&spec.source, &spec.forest))??;
    if let DataSource::Bootstrap(b) = &source {
        if let Some(w) = &b.warning {
            eprintln!("warning: {w}");
        }
    }
    let resolved = spec.forest.resolve(spec.n)?;
    let header = json!({ "tool": TOOL_VERSION, "config": cfg, "resolved_forest": resolved });
    let doc = |report: Value, table: &ReplicateTable| {
        let mut d = header.clone();
        d["report"] = report;
        d["test_points"] = json!(table.test_points);
        d["true_means"] = json!(table.true_means);
        d
    };
    match kind {
        SimulateKind::Metrics | SimulateKind::Bootstrap => {
            let (table, rep) = with_threads(threads, || run_metrics(&spec, &source))??;
            let csv = format!("{METRICS_COLUMNS}\n{}", metrics_row(&table, source.d(), &rep));
            emit(out, csv.as_bytes())?;
            if let Some(p) = out {
                write_file(&with_extension(p, "json"), &json_bytes(&doc(json!(rep), &table))?)?;
            }
            Ok(SimulateOutput::Metrics(table, rep))
        }
        SimulateKind::Normality => {
            let (table, rep) = with_threads(threads, || run_normality(&spec, &source))??;
            emit(out, &json_bytes(&doc(json!(rep), &table))?)?;
            Ok(SimulateOutput::Normality(table, rep))
        }
        SimulateKind::Coverage => {
            let (table, rep) = with_threads(threads, || run_coverage(&spec, &source))??;
            emit(out, &json_bytes(&doc(json!(rep), &table))?)?;
            Ok(SimulateOutput::Coverage(table, rep))
        }
        SimulateKind::BiasGrid => unreachable!(),
    }
}

fn distribution(atoms: &[Atom]) -> anyhow::Result<FiniteSupportDistribution> {
    let atoms =
        atoms.iter().map(|a| (LabeledExample::new(a.x.clone().unwrap_or_else(|| vec![a.y]), a.y), a.p)).collect();
    Ok(FiniteSupportDistribution::new(atoms)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct CaseOutcome {
    pub name: String,
    pub case: OracleCase,
    pub passed: bool,
    pub detail: Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub tool: String,
    pub passed: bool,
    pub cases: Vec<CaseOutcome>,
}

fn learner_name(l: &BaseLearnerSpec) -> &'static str {
    match l {
        BaseLearnerSpec::SubsampleMean => "mean",
        BaseLearnerSpec::SubsampleMax => "max",
        BaseLearnerSpec::LabelSum => "sum",
        BaseLearnerSpec::Constant { .. } => "constant",
        BaseLearnerSpec::HonestTree { .. } => "honest-tree",
    }
}

fn case_name(case: &OracleCase) -> String {
    match case {
        OracleCase::Vij { labels, s, learner, .. } => format!("vij {} n={} s={s}", learner_name(learner), labels.len()),
        OracleCase::Anova { atoms, learner, n, s } => {
            format!("anova {} atoms={} n={n} s={s}", learner_name(learner), atoms.len())
        }
        OracleCase::Hajek { atoms, learner, s } => {
            format!("hajek {} atoms={} s={s}", learner_name(learner), atoms.len())
        }
    }
}

fn run_case(case: &OracleCase) -> anyhow::Result<CaseOutcome> {
    let (passed, detail) = match case {
        OracleCase::Vij { labels, s, learner, monte_carlo_b, tolerance, seed } => {
            let ex: Vec<LabeledExample> = labels.iter().map(|&y| LabeledExample::new(vec![y], y)).collect();
            let ts = TrainingSet::from_examples(1, &ex)?;
            let exact = exact_resampling(&ts, learner, *s)?;
            let mc = monte_carlo_vij(&ts, learner, *s, *monte_carlo_b, *seed)?;
            let relative_error =
                if exact.vij > 0.0 { (mc.corrected - exact.vij).abs() / exact.vij } else { mc.corrected.abs() };
            (
                relative_error <= *tolerance,
                json!({
                    "exact": exact,
                    "monte_carlo": { "plugin": mc.plugin, "correction": mc.correction, "corrected": mc.corrected },
                    "relative_error": relative_error,
                }),
            )
        }
        OracleCase::Anova { atoms, learner, n, s } => {
            let rep = anova_bound_check(&distribution(atoms)?, learner, *n, *s)?;
            (rep.holds, json!(rep))
        }
        OracleCase::Hajek { atoms, learner, s } => {
            let st = hajek_projection_stats(&distribution(atoms)?, learner, *s)?;
            let bounded = st.hajek_variance <= st.base_variance * (1.0 + EXACT_RTOL) + f64::MIN_POSITIVE;
            let linear_ok =
                !matches!(learner, BaseLearnerSpec::LabelSum) || st.ratio.is_none_or(|r| (r - 1.0).abs() <= EXACT_RTOL);
            (bounded && linear_ok, json!(st))
        }
    };
    Ok(CaseOutcome { name: case_name(case), case: case.clone(), passed, detail })
}

/// Runs every oracle case and writes the report. Returns an
/// [`AssertionFailure`] (after writing) when any case fails.
pub fn cmd_oracle_check(cfg: &OracleConfig, threads: usize) -> anyhow::Result<OracleReport> {
    if cfg.cases.is_empty() {
        bail!("oracle-check has no cases to run");
    }
    let cases = with_threads(threads, || cfg.cases.iter().map(run_case).collect::<anyhow::Result<Vec<_>>>())??;
    let report = OracleReport { tool: TOOL_VERSION.into(), passed: cases.iter().all(|c| c.passed), cases };
    emit(cfg.out.as_deref(), &json_bytes(&json!({ "report": report, "config": cfg }))?)?;
    for c in &report.cases {
        eprintln!("{} {}", if c.passed { "PASS" } else { "FAIL" }, c.name);
    }
    if !report.passed {
        let failed = report.cases.iter().filter(|c| !c.passed).count();
        return Err(AssertionFailure(format!("{failed} of {} oracle cases failed", report.cases.len())).into());
    }
    Ok(report)
}
