use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ijforest::dataset::ColumnRef;
use ijforest::experiments::{EstimateChoice, SourceSpec};
use ijforest::forest::{SubsampleSize, TreeCount};
use ijforest::oracle::BaseLearnerSpec;
use ijforest::{ForestConfig, SyntheticKind, SyntheticSpec, TreeMode};
use ijforest_cli::commands::{EXIT_OK, EXIT_USAGE};
use ijforest_cli::config::{Atom, OracleCase};
use ijforest_cli::{
    cmd_gen, cmd_oracle_check, cmd_predict, cmd_simulate, cmd_train, exit_code, resolve_threads, RunConfig,
    SimulateKind, SimulateOutput,
};

/// Subsampled random forests with infinitesimal jackknife variance estimates.
#[derive(Parser, Debug)]
#[command(name = "ijforest", version)]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: $IJFOREST_THREADS, else all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dataset as CSV.
    Gen(GenArgs),
    /// Train a forest on a CSV dataset and save the model.
    Train(TrainArgs),
    /// Predict with variance estimates and intervals.
    Predict(PredictArgs),
    /// Run a simulation study.
    Simulate {
        #[command(subcommand)]
        study: Study,
    },
    /// Run exact oracle checks; exits 2 if any fails.
    OracleCheck(OracleArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    /// cosine, xor or and.
    #[arg(long)]
    kind: Option<SyntheticKind>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    noise_sd: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct ForestArgs {
    /// honest or cart.
    #[arg(long)]
    mode: Option<TreeMode>,
    /// Explicit subsample size.
    #[arg(long, conflicts_with = "s_exponent")]
    s: Option<usize>,
    /// Subsample size floor(n^e).
    #[arg(long)]
    s_exponent: Option<f64>,
    /// Explicit number of trees.
    #[arg(long, conflicts_with = "b_per_example")]
    b: Option<usize>,
    /// Number of trees as a multiple of n.
    #[arg(long)]
    b_per_example: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    max_leaf_size: Option<usize>,
}

impl ForestArgs {
    fn apply(&self, f: &mut ForestConfig) {
        if let Some(m) = self.mode {
            f.tree.mode = m;
        }
        if let Some(s) = self.s {
            f.s = SubsampleSize::Fixed(s);
        }
        if let Some(e) = self.s_exponent {
            f.s = SubsampleSize::Power(e);
        }
        if let Some(b) = self.b {
            f.b = TreeCount::Fixed(b);
        }
        if let Some(k) = self.b_per_example {
            f.b = TreeCount::PerExample(k);
        }
        if let Some(g) = self.gamma {
            f.tree.gamma = g;
        }
        if let Some(d) = self.delta {
            f.tree.delta = d;
        }
        if let Some(m) = self.max_leaf_size {
            f.tree.max_leaf_size = m;
        }
    }
}

fn set<T>(dst: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *dst = v;
    }
}

fn column_list(s: &str) -> Vec<ColumnRef> {
    s.split(',').map(|c| ColumnRef::from(c.trim())).collect()
}

fn number_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(|v| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"))).collect()
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    /// Target column name or zero-based index.
    #[arg(long)]
    target: Option<String>,
    /// Comma-separated feature columns (default: all but the target).
    #[arg(long)]
    features: Option<String>,
    #[command(flatten)]
    forest: ForestArgs,
    #[arg(long)]
    seed: Option<u64>,
    /// Model file to write.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the training summary here.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    query: Option<PathBuf>,
    #[arg(long)]
    level: Option<f64>,
    /// Output CSV, or JSON if the name ends in .json (stdout CSV if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Study {
    /// Bias², variance and MSE of the variance estimate.
    Metrics(SimArgs),
    /// KS test of standardized predictions.
    Normality(SimArgs),
    /// Interval coverage.
    Coverage(SimArgs),
    /// Mean predictions on a grid under pure Bernoulli noise.
    BiasGrid(GridArgs),
    /// Metrics on a parametric bootstrap of a CSV dataset.
    Bootstrap(SimArgs),
}

#[derive(Args, Debug)]
struct SimArgs {
    /// Synthetic source kind (cosine, xor, and).
    #[arg(long, conflicts_with = "data")]
    kind: Option<SyntheticKind>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    noise_sd: Option<f64>,
    /// CSV dataset used as a parametric bootstrap source.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    /// Number of test points.
    #[arg(long)]
    k: Option<usize>,
    /// Number of replicate training sets.
    #[arg(long)]
    r: Option<usize>,
    #[command(flatten)]
    forest: ForestArgs,
    /// plugin, corrected or truncated.
    #[arg(long)]
    estimate: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Comma-separated confidence levels.
    #[arg(long)]
    levels: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GridArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    s: Option<usize>,
    #[arg(long)]
    b: Option<usize>,
    #[arg(long)]
    mode: Option<TreeMode>,
    #[arg(long)]
    resolution: Option<usize>,
    #[arg(long)]
    r: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct OracleArgs {
    /// Run a single check instead of the configured suite: vij, anova or hajek.
    #[arg(long)]
    check: Option<String>,
    /// mean, max, sum or constant.
    #[arg(long, default_value = "mean")]
    learner: String,
    /// Comma-separated labels (vij) or equally likely atoms (anova, hajek).
    #[arg(long, default_value = "0,1")]
    labels: String,
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    s: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn learner(name: &str) -> anyhow::Result<BaseLearnerSpec> {
    Ok(match name {
        "mean" => BaseLearnerSpec::SubsampleMean,
        "max" => BaseLearnerSpec::SubsampleMax,
        "sum" | "linear" => BaseLearnerSpec::LabelSum,
        "constant" => BaseLearnerSpec::Constant { value: 0.0 },
        other => anyhow::bail!("unknown learner '{other}' (expected mean, max, sum or constant)"),
    })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let threads = resolve_threads(cli.threads.or(cfg.threads))?;
    match cli.command {
        Command::Gen(a) => {
            let g = &mut cfg.gen;
            set(&mut g.kind, a.kind);
            set(&mut g.d, a.d);
            set(&mut g.n, a.n);
            set(&mut g.noise_sd, a.noise_sd);
            set(&mut g.seed, a.seed);
            if a.out.is_some() {
                g.out = a.out;
            }
            cmd_gen(g)?;
        }
        Command::Train(a) => {
            let t = &mut cfg.train;
            if a.data.is_some() {
                t.data = a.data;
            }
            if let Some(v) = a.target {
                t.target = ColumnRef::from(v.as_str());
            }
            if let Some(v) = a.features {
                t.features = Some(column_list(&v));
            }
            a.forest.apply(&mut t.forest);
            set(&mut t.forest.seed, a.seed);
            if a.out.is_some() {
                t.out = a.out;
            }
            if a.summary.is_some() {
                t.summary = a.summary;
            }
            let summary = cmd_train(t, threads)?;
            // A closed stdout (e.g. piped into `head`) is not an error.
            let _ = writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Predict(a) => {
            let p = &mut cfg.predict;
            if a.model.is_some() {
                p.model = a.model;
            }
            if a.query.is_some() {
                p.query = a.query;
            }
            set(&mut p.level, a.level);
            if a.out.is_some() {
                p.out = a.out;
            }
            cmd_predict(p, threads)?;
        }
        Command::Simulate { study } => {
            let sim = &mut cfg.simulate;
            let kind = match study {
                Study::BiasGrid(a) => {
                    let g = &mut sim.bias_grid;
                    set(&mut g.n, a.n);
                    set(&mut g.s, a.s);
                    set(&mut g.b, a.b);
                    set(&mut g.mode, a.mode);
                    set(&mut g.resolution, a.resolution);
                    set(&mut g.r, a.r);
                    set(&mut g.p, a.p);
                    set(&mut g.seed, a.seed);
                    if a.out.is_some() {
                        sim.out = a.out;
                    }
                    SimulateKind::BiasGrid
                }
                Study::Metrics(a) => apply_sim(sim, a, SimulateKind::Metrics)?,
                Study::Normality(a) => apply_sim(sim, a, SimulateKind::Normality)?,
                Study::Coverage(a) => apply_sim(sim, a, SimulateKind::Coverage)?,
                Study::Bootstrap(a) => apply_sim(sim, a, SimulateKind::Bootstrap)?,
            };
            let output = cmd_simulate(kind, sim, threads)?;
            if sim.out.is_some() {
                eprintln!("{}", describe(&output));
            }
        }
        Command::OracleCheck(a) => {
            let o = &mut cfg.oracle;
            if let Some(check) = a.check {
                let learner = learner(&a.learner)?;
                let labels = number_list(&a.labels).map_err(anyhow::Error::msg)?;
                let atoms = Atom::uniform(&labels);
                let case = match check.as_str() {
                    "vij" => {
                        OracleCase::Vij { labels, s: a.s, learner, monte_carlo_b: 100_000, tolerance: 0.02, seed: 0 }
                    }
                    "anova" => OracleCase::Anova { atoms, learner, n: a.n, s: a.s },
                    "hajek" => OracleCase::Hajek { atoms, learner, s: a.s },
                    other => anyhow::bail!("unknown check '{other}' (expected vij, anova or hajek)"),
                };
                o.cases = vec![case];
            }
            if a.out.is_some() {
                o.out = a.out;
            }
            cmd_oracle_check(o, threads)?;
        }
    }
    Ok(())
}

fn apply_sim(
    sim: &mut ijforest_cli::config::SimulateConfig,
    a: SimArgs,
    kind: SimulateKind,
) -> anyhow::Result<SimulateKind> {
    if let Some(path) = a.data {
        let target = ColumnRef::from(a.target.as_deref().unwrap_or("y"));
        sim.source = SourceSpec::Csv { path, target, features: None, bootstrap: true };
    } else if a.kind.is_some() || a.d.is_some() || a.noise_sd.is_some() {
        let mut spec = match sim.source {
            SourceSpec::Synthetic(s) => s,
            _ => SyntheticSpec::new(SyntheticKind::Cosine, 2),
        };
        set(&mut spec.kind, a.kind);
        set(&mut spec.d, a.d);
        set(&mut spec.noise_sd, a.noise_sd);
        sim.source = SourceSpec::Synthetic(spec);
    }
    set(&mut sim.n, a.n);
    set(&mut sim.k, a.k);
    set(&mut sim.r, a.r);
    a.forest.apply(&mut sim.forest);
    if let Some(e) = a.estimate {
        sim.estimate = match e.as_str() {
            "plugin" => EstimateChoice::Plugin,
            "corrected" => EstimateChoice::Corrected,
            "truncated" => EstimateChoice::Truncated,
            other => anyhow::bail!("unknown estimate '{other}' (expected plugin, corrected or truncated)"),
        };
    }
    set(&mut sim.alpha, a.alpha);
    if let Some(l) = a.levels {
        sim.levels = number_list(&l).map_err(anyhow::Error::msg)?;
    }
    set(&mut sim.seed, a.seed);
    if a.out.is_some() {
        sim.out = a.out;
    }
    Ok(kind)
}

fn describe(out: &SimulateOutput) -> String {
    match out {
        SimulateOutput::Metrics(_, m) => match &m.relative {
            Some(r) => format!("relative mse {:.4} (bias2 {:.4}, var {:.4})", r.mse, r.bias2, r.variance),
            None => "relative metrics undefined (zero prediction variance)".into(),
        },
        SimulateOutput::Normality(_, n) => format!("KS pass fraction {:?} at alpha {}", n.pass_fraction, n.alpha),
        SimulateOutput::Coverage(_, c) => c
            .levels
            .iter()
            .map(|l| format!("level {}: coverage {:.4}", l.level, l.coverage))
            .collect::<Vec<_>>()
            .join("; "),
        SimulateOutput::BiasGrid(g) => {
            format!("corner mean {:.5}, center mean {:.5}", g.corner_mean(), g.center_mean())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::from(EXIT_OK as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
