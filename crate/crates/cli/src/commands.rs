//! Subcommand implementations.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use mbgibbs::data::{
    gen_gmm_data, gen_probit_data, gen_synthetic_corpus, save_gmm, save_regression,
    save_synthetic_corpus, CorpusSpec,
};
use mbgibbs::{
    adapt_batch_size, adapt_batch_size_clocked, objective, run_scan_with, AdaptConfig,
    AdaptationResult, BatchGrid, ChainTrace, DiagnosticsReport, IndexPolicy, ManualClock,
    MonotonicClock, RandomStream, ScanSchedule, ScriptedModel, Stop,
};

use crate::config::{ConfigFile, Settings};
use crate::error::{CliError, CliResult, Context};
use crate::experiments::{fig3, fig56, fig8};
use crate::model::{build_model, Dataset, ModelFlags, ModelKind, ModelOptions};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "MBGIBBS_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "mbgibbs", version, about = "Adaptive mini-batch scan Gibbs sampling")]
pub struct Cli {
    /// Config file; see the README for the grammar.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic data set.
    Generate(GenerateArgs),
    /// Pick the batch size minimizing (m w_z + w_theta) tau_int.
    Adapt(AdaptArgs),
    /// Run chains at a fixed batch size and report diagnostics.
    Sample(SampleArgs),
    /// Reproduce a figure end to end.
    Experiment(ExperimentArgs),
    /// Diagnostics for existing trace CSVs.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(value_enum)]
    pub model: ModelKind,
    /// Number of points.
    #[arg(long)]
    pub n: Option<usize>,
    /// Point dimension.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Clusters (dpmm) or topics (lda).
    #[arg(long)]
    pub k: Option<usize>,
    /// Radius of the circle the cluster centers sit on.
    #[arg(long)]
    pub separation: Option<f64>,
    /// Noise added to the probit score before taking its sign.
    #[arg(long)]
    pub noise_sd: Option<f64>,
    /// Training documents.
    #[arg(long)]
    pub d: Option<usize>,
    /// Vocabulary size.
    #[arg(long)]
    pub v: Option<usize>,
    #[arg(long)]
    pub min_len: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Document-topic concentration of the generator.
    #[arg(long)]
    pub gen_alpha: Option<f64>,
    /// Topic-word concentration of the generator.
    #[arg(long)]
    pub gen_eta: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AdaptArgs {
    #[arg(long, value_enum, required_unless_present = "scripted")]
    pub model: Option<ModelKind>,
    #[arg(long, required_unless_present = "scripted")]
    pub data: Option<PathBuf>,
    /// Explicit grid, e.g. `1,4,16,64`.
    #[arg(long, conflicts_with = "grid_ratio")]
    pub grid: Option<String>,
    #[arg(long)]
    pub grid_ratio: Option<f64>,
    #[arg(long)]
    pub max_arms: Option<usize>,
    #[arg(long)]
    pub n_per_arm: Option<u64>,
    #[arg(long)]
    pub burnin: Option<u64>,
    #[arg(long)]
    pub t_max: Option<usize>,
    /// cyclic|uniform
    #[arg(long)]
    pub policy: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Per-arm CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the concatenated adaptation trace.
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
    /// Self-test on a model with tau_int(m) = tau_scale / m and fixed
    /// simulated costs.
    #[arg(long)]
    pub scripted: bool,
    #[arg(long)]
    pub units: Option<usize>,
    #[arg(long)]
    pub tau_scale: Option<f64>,
    #[arg(long)]
    pub w_z: Option<f64>,
    #[arg(long)]
    pub w_theta: Option<f64>,
    #[command(flatten)]
    pub model_flags: ModelFlags,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long, value_enum)]
    pub model: ModelKind,
    #[arg(long)]
    pub data: PathBuf,
    /// Batch size; defaults to a full sweep.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, conflicts_with = "budget_seconds")]
    pub cycles: Option<u64>,
    #[arg(long)]
    pub budget_seconds: Option<f64>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Full-sweep cycles before recording.
    #[arg(long)]
    pub burnin: Option<u64>,
    #[arg(long)]
    pub t_max: Option<usize>,
    #[arg(long)]
    pub policy: Option<String>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[command(flatten)]
    pub model_flags: ModelFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    Fig3,
    Fig5,
    Fig6,
    Fig8,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(value_enum)]
    pub figure: Figure,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Sampling budget per curve (fig3, fig8).
    #[arg(long)]
    pub budget_seconds: Option<f64>,
    /// Fixed batch size instead of adapting (fig5, fig6).
    #[arg(long)]
    pub m: Option<usize>,
    /// Override any experiment setting, e.g. `--set n_per_arm=500`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    /// Trace CSVs (`cycle,seconds,summary`); two or more add EPSR.
    #[arg(long = "trace", num_args = 1.., required = true)]
    pub traces: Vec<PathBuf>,
    #[arg(long)]
    pub t_max: Option<usize>,
    /// Batch size the traces were recorded at, for the report's `m` column.
    #[arg(long)]
    pub m: Option<usize>,
    /// Report CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> CliResult<()> {
    let file = cli.config.as_deref().map(ConfigFile::load).transpose()?;
    match cli.command {
        Command::Generate(a) => generate(a, Settings::new(file, "generate")),
        Command::Adapt(a) => adapt(a, Settings::new(file, "adapt")),
        Command::Sample(a) => sample(a, Settings::new(file, "sample")),
        Command::Experiment(a) => {
            let scope = format!("experiment.{}", figure_name(a.figure));
            let s = Settings::new(file, &scope).with_overrides(&a.set)?;
            experiment(a, s)
        }
        Command::Diagnose(a) => diagnose(a, Settings::new(file, "diagnose")),
    }
}

fn figure_name(f: Figure) -> &'static str {
    match f {
        Figure::Fig3 => "fig3",
        Figure::Fig5 => "fig5",
        Figure::Fig6 => "fig6",
        Figure::Fig8 => "fig8",
    }
}

/// Flag, then config `out_dir`, then the environment, then `.`.
fn resolve_out_dir(flag: Option<PathBuf>, s: &Settings) -> CliResult<PathBuf> {
    let dir = match s.get_opt(flag, "out_dir")? {
        Some(d) => d,
        None => std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(".")),
    };
    std::fs::create_dir_all(&dir).stage(format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn parse_policy(flag: &Option<String>, s: &Settings) -> CliResult<IndexPolicy> {
    let flag = flag
        .as_deref()
        .map(|p| p.parse::<IndexPolicy>().map_err(|e| CliError::usage(format!("--policy: {e}"))))
        .transpose()?;
    s.get(flag, "policy", IndexPolicy::default())
}

fn write_or_print(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => std::fs::write(p, text).stage(format!("writing {}", p.display())),
        None => std::io::stdout().write_all(text.as_bytes()).stage("writing to stdout"),
    }
}

fn generate(a: GenerateArgs, s: Settings) -> CliResult<()> {
    let seed = s.get(a.seed, "seed", 1)?;
    let out: PathBuf = s
        .get_opt(a.out, "out")?
        .ok_or_else(|| CliError::usage("generate needs --out"))?;
    let summary = match a.model {
        ModelKind::Blasso => {
            let n = s.get(a.n, "n", 1200)?;
            let dim = s.get(a.dim, "dim", 4)?;
            let noise = s.get(a.noise_sd, "noise_sd", 1.0)?;
            s.finish()?;
            let data = gen_probit_data(n, dim, None, noise, seed).stage("generating")?;
            save_regression(&data, &out).stage(format!("writing {}", out.display()))?;
            format!("{n} points in {dim} dimensions")
        }
        ModelKind::Dpmm => {
            let n = s.get(a.n, "n", 1000)?;
            let k = s.get(a.k, "k", 5)?;
            let dim = s.get(a.dim, "dim", 2)?;
            let sep = s.get(a.separation, "separation", 10.0)?;
            s.finish()?;
            let data = gen_gmm_data(n, k, dim, sep, seed).stage("generating")?;
            save_gmm(&data, &out).stage(format!("writing {}", out.display()))?;
            format!("{n} points in {dim} dimensions from {k} clusters")
        }
        ModelKind::Lda => {
            let d = CorpusSpec::new(250, 4, 6000, seed);
            let spec = CorpusSpec {
                docs: s.get(a.d, "d", d.docs)?,
                topics: s.get(a.k, "k", d.topics)?,
                vocab: s.get(a.v, "v", d.vocab)?,
                min_len: s.get(a.min_len, "min_len", d.min_len)?,
                max_len: s.get(a.max_len, "max_len", d.max_len)?,
                alpha: s.get(a.gen_alpha, "gen_alpha", d.alpha)?,
                eta: s.get(a.gen_eta, "gen_eta", d.eta)?,
                seed,
            };
            s.finish()?;
            let c = gen_synthetic_corpus(&spec).stage("generating")?;
            save_synthetic_corpus(&c, &out).stage(format!("writing {}", out.display()))?;
            format!(
                "{} training and {} test documents, {} topics, vocabulary {}",
                c.train.num_docs(),
                c.test.num_docs(),
                spec.topics,
                spec.vocab
            )
        }
    };
    eprintln!("wrote {}: {summary}", out.display());
    Ok(())
}

fn parse_grid(text: &str) -> CliResult<Vec<usize>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|e| CliError::usage(format!("--grid: `{t}`: {e}")))
        })
        .collect()
}

fn adapt(a: AdaptArgs, s: Settings) -> CliResult<()> {
    let seed = s.get(a.seed, "seed", 1)?;
    let grid_text: Option<String> = s.get_opt(a.grid, "grid")?;
    let ratio = s.get(a.grid_ratio, "grid_ratio", 4.0)?;
    let max_arms = s.get(a.max_arms, "max_arms", 5)?;
    let defaults = AdaptConfig::default();
    let mut config = AdaptConfig {
        burnin_cycles: s.get(a.burnin, "burnin", defaults.burnin_cycles)?,
        n_per_arm: s.get(a.n_per_arm, "n_per_arm", defaults.n_per_arm)?,
        t_max: s.get_opt(a.t_max, "t_max")?,
        policy: parse_policy(&a.policy, &s)?,
    };
    let out: Option<PathBuf> = s.get_opt(a.out, "out")?;
    let trace_out: Option<PathBuf> = s.get_opt(a.trace_out, "trace_out")?;
    let make_grid = |n: usize| -> CliResult<BatchGrid> {
        match &grid_text {
            Some(t) => BatchGrid::new(parse_grid(t)?, n).stage("batch grid"),
            None => BatchGrid::logarithmic(n, ratio, max_arms).stage("batch grid"),
        }
    };
    let mut rng = RandomStream::new(seed, 0);

    let result: AdaptationResult = if a.scripted {
        let units = s.get(a.units, "units", 100)?;
        let tau_scale = s.get(a.tau_scale, "tau_scale", 100.0)?;
        let w_z = s.get(a.w_z, "w_z", 1e-3)?;
        let w_theta = s.get(a.w_theta, "w_theta", 0.1)?;
        // the scripted series is stationary from the first cycle
        config.burnin_cycles = s.get(a.burnin, "burnin", 0)?;
        s.finish()?;
        let clock = ManualClock::new();
        let mut model = ScriptedModel::new(units, tau_scale, w_z, w_theta, seed, clock.clone())
            .stage("scripted model")?;
        let grid = make_grid(units)?;
        adapt_batch_size_clocked(&mut model, &grid, &config, &mut rng, &clock).stage("adaptation")?
    } else {
        let kind = a.model.expect("clap requires --model");
        let path = a.data.expect("clap requires --data");
        let opts = ModelOptions::resolve(&a.model_flags, &s)?;
        s.finish()?;
        let dataset = Dataset::load(kind, &path)?;
        let grid = make_grid(dataset.units())?;
        let mut model = build_model(&dataset, &opts, &mut rng).stage("initial state")?;
        adapt_batch_size(model.as_mut(), &grid, &config, &mut rng).stage("adaptation")?
    };

    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    let mut buf = Vec::new();
    result.write_csv(&mut buf).stage("formatting")?;
    write_or_print(out.as_deref(), std::str::from_utf8(&buf).expect("ascii"))?;
    if let Some(p) = trace_out {
        result.adaptation_trace.save_csv(&p).stage(format!("writing {}", p.display()))?;
    }
    if out.is_some() {
        println!("m_star {}", result.m_star);
    }
    Ok(())
}

fn sample(a: SampleArgs, s: Settings) -> CliResult<()> {
    let seed = s.get(a.seed, "seed", 1)?;
    let chains = s.get(a.chains, "chains", 1)?;
    let burnin = s.get(a.burnin, "burnin", 0u64)?;
    let t_max: Option<usize> = s.get_opt(a.t_max, "t_max")?;
    let policy = parse_policy(&a.policy, &s)?;
    let cycles: Option<u64> = s.get_opt(a.cycles, "cycles")?;
    let budget: Option<f64> = s.get_opt(a.budget_seconds, "budget_seconds")?;
    let m_flag: Option<usize> = s.get_opt(a.m, "m")?;
    let opts = ModelOptions::resolve(&a.model_flags, &s)?;
    let out_dir = resolve_out_dir(a.out_dir, &s)?;
    s.finish()?;
    if chains == 0 {
        return Err(CliError::usage("--chains must be at least 1"));
    }
    let stop = match (cycles, budget) {
        (Some(c), None) => Stop::Cycles(c),
        (None, Some(b)) => Stop::Budget(b),
        (None, None) => return Err(CliError::usage("sample needs --cycles or --budget-seconds")),
        (Some(_), Some(_)) => {
            return Err(CliError::usage("--cycles and --budget-seconds are exclusive"))
        }
    };
    let dataset = Dataset::load(a.model, &a.data)?;
    let n = dataset.units();
    let m = m_flag.unwrap_or(n);
    let schedule = ScanSchedule::new(m, 1, policy).stage("schedule")?;
    let sweep = ScanSchedule::new(n, 1, policy).stage("schedule")?;

    // one chain per thread, each with its own stream (seed, j)
    let traces: Vec<CliResult<ChainTrace>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..chains)
            .map(|j| {
                let (dataset, opts) = (&dataset, &opts);
                scope.spawn(move || -> CliResult<ChainTrace> {
                    let mut rng = RandomStream::new(seed, j as u64);
                    let mut model = build_model(dataset, opts, &mut rng).stage(format!("chain {j} init"))?;
                    mbgibbs::scan::burn_in(model.as_mut(), &sweep, burnin, &mut rng)
                        .stage(format!("chain {j} burn-in"))?;
                    run_scan_with(model.as_mut(), &schedule, stop, &mut rng, &MonotonicClock::new())
                        .stage(format!("chain {j}"))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("chain thread panicked"))
            .collect()
    });
    let traces = traces.into_iter().collect::<CliResult<Vec<_>>>()?;

    for (j, t) in traces.iter().enumerate() {
        let path = out_dir.join(format!("chain_{j}.csv"));
        t.save_csv(&path).stage(format!("writing {}", path.display()))?;
        let per_cycle = m as f64 * t.w_z + t.w_theta;
        eprintln!(
            "chain {j}: {} cycles in {:.3} s; median costs predict {:.0}",
            t.len(),
            t.total_seconds(),
            t.total_seconds() / per_cycle
        );
    }
    let report = diagnostics_report(&traces, Some(m), t_max)?;
    let mut text = format!("{}\n", DiagnosticsReport::CSV_HEADER);
    let mut row = Vec::new();
    report.write_csv_row(&mut row).stage("formatting")?;
    text.push_str(std::str::from_utf8(&row).expect("ascii"));
    let path = out_dir.join("diagnostics.csv");
    std::fs::write(&path, &text).stage(format!("writing {}", path.display()))?;
    print!("{text}");
    Ok(())
}

/// Report over the traces' summaries, truncated to the shortest chain so
/// EPSR sees equal lengths. The objective uses the first chain's costs.
fn diagnostics_report(traces: &[ChainTrace], m: Option<usize>, t_max: Option<usize>) -> CliResult<DiagnosticsReport> {
    let len = traces.iter().map(ChainTrace::len).min().unwrap_or(0);
    if traces.iter().any(|t| t.len() != len) {
        eprintln!("note: chains truncated to {len} samples for EPSR");
    }
    let series: Vec<Vec<f64>> = traces
        .iter()
        .map(|t| t.entries[..len].iter().map(|e| e.summary).collect())
        .collect();
    let mut report = DiagnosticsReport::from_chains(m, &series, t_max).stage("diagnostics")?;
    let first = &traces[0];
    if let Some(m) = m {
        if first.w_z > 0.0 || first.w_theta > 0.0 {
            report.objective = objective(m, first.w_z, first.w_theta, report.tau_int).ok();
        }
    }
    Ok(report)
}

fn experiment(a: ExperimentArgs, s: Settings) -> CliResult<()> {
    let seed = s.get(a.seed, "seed", 1)?;
    let out_dir = resolve_out_dir(a.out_dir, &s)?;
    let written = match a.figure {
        Figure::Fig3 => {
            let cfg = fig3::Fig3Config::resolve(&s, a.budget_seconds)?;
            s.finish()?;
            let r = fig3::run(&cfg, seed, None)?;
            eprintln!("m* = {}", r.adaptation.m_star);
            fig3::write(&r, &out_dir)?
        }
        Figure::Fig5 | Figure::Fig6 => {
            let cfg = fig56::DpmmExperimentConfig::resolve(&s, a.m)?;
            s.finish()?;
            let r = fig56::run(&cfg, seed)?;
            eprintln!("m* = {}", r.m_star);
            fig56::write(&r, &out_dir)?
        }
        Figure::Fig8 => {
            let cfg = fig8::LdaExperimentConfig::resolve(&s, a.budget_seconds)?;
            s.finish()?;
            let r = fig8::run(&cfg, seed)?;
            eprintln!("m* = {}", r.adaptation.m_star);
            fig8::write(&r, &out_dir)?
        }
    };
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}

fn diagnose(a: DiagnoseArgs, s: Settings) -> CliResult<()> {
    let t_max: Option<usize> = s.get_opt(a.t_max, "t_max")?;
    let m: Option<usize> = s.get_opt(a.m, "m")?;
    let out: Option<PathBuf> = s.get_opt(a.out, "out")?;
    s.finish()?;
    let traces = a
        .traces
        .iter()
        .map(|p| ChainTrace::load_csv(p).stage(format!("reading {}", p.display())))
        .collect::<CliResult<Vec<_>>>()?;
    let report = diagnostics_report(&traces, m, t_max)?;
    let mut text = String::new();
    let _ = writeln!(text, "{}", DiagnosticsReport::CSV_HEADER);
    let mut row = Vec::new();
    report.write_csv_row(&mut row).stage("formatting")?;
    text.push_str(std::str::from_utf8(&row).expect("ascii"));
    write_or_print(out.as_deref(), &text)
}
