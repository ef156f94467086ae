//! LDA: held-out perplexity against wall clock for each batch size, and
//! the objective table that picks m*.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use mbgibbs::data::{gen_synthetic_corpus, CorpusSpec, SyntheticCorpus};
use mbgibbs::metrics::{PerplexityNorm, TopicSnapshot, FOLD_IN_PASSES};
use mbgibbs::{
    adapt_batch_size, perplexity, run_scan_observed, AdaptConfig, AdaptationResult, BatchGrid,
    Corpus, LdaConfig, LdaMode, LdaState, MonotonicClock, RandomStream, ScanSchedule, Stop,
};

use super::{adaptation_csv, fmt_f64, objective_plot, save_plot, write_text, Checkpoints, CurveSizes};
use crate::config::Settings;
use crate::error::{CliResult, Context};
use crate::plot::{LinePlot, Series};

#[derive(Debug, Clone, PartialEq)]
pub struct LdaExperimentConfig {
    pub docs: usize,
    pub topics: usize,
    pub vocab: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Hyperparameters of the generating process.
    pub gen_alpha: f64,
    pub gen_eta: f64,
    pub data_seed: u64,
    /// Sampler document-topic prior; `None` means `50 / topics`.
    pub alpha: Option<f64>,
    pub eta: f64,
    pub mode: LdaMode,
    pub grid_ratio: f64,
    pub max_arms: usize,
    pub burnin: u64,
    pub n_per_arm: u64,
    /// Lag cap for τ_int; `None` uses the library default.
    pub t_max: Option<usize>,
    pub budget_seconds: f64,
    pub curves: CurveSizes,
    pub checkpoints: usize,
    pub fold_in_passes: usize,
    pub norm: PerplexityNorm,
}

impl Default for LdaExperimentConfig {
    fn default() -> Self {
        let spec = CorpusSpec::new(250, 4, 6000, 1);
        LdaExperimentConfig {
            docs: spec.docs,
            topics: spec.topics,
            vocab: spec.vocab,
            min_len: spec.min_len,
            max_len: spec.max_len,
            gen_alpha: spec.alpha,
            gen_eta: spec.eta,
            data_seed: spec.seed,
            alpha: None,
            eta: 0.01,
            mode: LdaMode::Instantiated,
            grid_ratio: 4.0,
            max_arms: 5,
            // the full-sweep chain is still drifting after a few hundred
            // sweeps, and 200 cycles at m = 1 cover less than one sweep
            burnin: 2_000,
            n_per_arm: 2_000,
            t_max: None,
            budget_seconds: 20.0,
            curves: CurveSizes::Grid,
            checkpoints: 10,
            fold_in_passes: FOLD_IN_PASSES,
            norm: PerplexityNorm::PerDocument,
        }
    }
}

impl LdaExperimentConfig {
    pub fn resolve(s: &Settings, budget: Option<f64>) -> CliResult<Self> {
        let d = LdaExperimentConfig::default();
        Ok(LdaExperimentConfig {
            docs: s.get(None, "docs", d.docs)?,
            topics: s.get(None, "topics", d.topics)?,
            vocab: s.get(None, "vocab", d.vocab)?,
            min_len: s.get(None, "min_len", d.min_len)?,
            max_len: s.get(None, "max_len", d.max_len)?,
            gen_alpha: s.get(None, "gen_alpha", d.gen_alpha)?,
            gen_eta: s.get(None, "gen_eta", d.gen_eta)?,
            data_seed: s.get(None, "data_seed", d.data_seed)?,
            alpha: s.get_opt(None, "lda_alpha")?,
            eta: s.get(None, "eta", d.eta)?,
            mode: s.get(None, "lda_mode", d.mode)?,
            grid_ratio: s.get(None, "grid_ratio", d.grid_ratio)?,
            max_arms: s.get(None, "max_arms", d.max_arms)?,
            burnin: s.get(None, "burnin", d.burnin)?,
            n_per_arm: s.get(None, "n_per_arm", d.n_per_arm)?,
            t_max: s.get_opt(None, "t_max")?,
            budget_seconds: s.get(budget, "budget_seconds", d.budget_seconds)?,
            curves: s.get(None, "curves", d.curves)?,
            checkpoints: s.get(None, "checkpoints", d.checkpoints)?,
            fold_in_passes: s.get(None, "fold_in_passes", d.fold_in_passes)?,
            norm: s.get(None, "perplexity_norm", d.norm)?,
        })
    }

    pub fn corpus(&self) -> mbgibbs::Result<SyntheticCorpus> {
        let spec = CorpusSpec {
            docs: self.docs,
            topics: self.topics,
            vocab: self.vocab,
            min_len: self.min_len,
            max_len: self.max_len,
            alpha: self.gen_alpha,
            eta: self.gen_eta,
            seed: self.data_seed,
        };
        gen_synthetic_corpus(&spec)
    }

    pub fn sampler_config(&self) -> LdaConfig {
        let mut c = LdaConfig::new(self.topics).with_mode(self.mode);
        if let Some(a) = self.alpha {
            c.alpha = a;
        }
        c.eta = self.eta;
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerplexityPoint {
    pub seconds: f64,
    pub cycles: u64,
    pub perplexity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerplexityCurve {
    pub batch_size: usize,
    pub points: Vec<PerplexityPoint>,
}

impl PerplexityCurve {
    pub fn final_perplexity(&self) -> f64 {
        self.points.last().map_or(f64::NAN, |p| p.perplexity)
    }
}

#[derive(Debug, Clone)]
pub struct LdaResult {
    pub docs: usize,
    pub adaptation: AdaptationResult,
    pub curves: Vec<PerplexityCurve>,
}

impl LdaResult {
    pub fn curve(&self, m: usize) -> Option<&PerplexityCurve> {
        self.curves.iter().find(|c| c.batch_size == m)
    }
}

/// Runs `m` for the time budget from `start`, scoring held-out perplexity
/// at each checkpoint. Scoring uses `score_rng`, so the chain itself sees
/// the same random numbers whether or not it is scored.
#[allow(clippy::too_many_arguments)]
pub fn perplexity_curve(
    start: &LdaState,
    m: usize,
    test: &Corpus,
    cfg: &LdaExperimentConfig,
    rng: &mut RandomStream,
    score_rng: &mut RandomStream,
) -> mbgibbs::Result<PerplexityCurve> {
    let mut state = start.clone();
    let mut marks = Checkpoints::new(cfg.budget_seconds, cfg.checkpoints);
    let mut points = Vec::new();
    let mut failure = None;
    let score = |s: &LdaState, score_rng: &mut RandomStream| {
        perplexity(test, &[TopicSnapshot::from_state(s)], cfg.fold_in_passes, cfg.norm, score_rng)
    };
    let timing = run_scan_observed(
        &mut state,
        &ScanSchedule::mini_batch(m)?,
        Stop::Budget(cfg.budget_seconds),
        rng,
        &MonotonicClock::new(),
        |info, s| {
            if failure.is_none() && marks.reached(info.seconds) {
                match score(s, score_rng) {
                    Ok(p) => points.push(PerplexityPoint {
                        seconds: info.seconds,
                        cycles: info.cycle,
                        perplexity: p,
                    }),
                    Err(e) => failure = Some(e),
                }
            }
        },
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    if points.last().map(|p| p.cycles) != Some(timing.cycles) {
        points.push(PerplexityPoint {
            seconds: timing.seconds,
            cycles: timing.cycles,
            perplexity: score(&state, score_rng)?,
        });
    }
    Ok(PerplexityCurve {
        batch_size: m,
        points,
    })
}

pub fn run(cfg: &LdaExperimentConfig, seed: u64) -> CliResult<LdaResult> {
    let corpus = cfg.corpus().stage("generating corpus")?;
    let train = Arc::new(corpus.train);
    let docs = train.num_docs();
    let mut rng = RandomStream::new(seed, 0);
    let mut state = LdaState::new(train, cfg.sampler_config(), &mut rng).stage("initial state")?;
    let grid = BatchGrid::logarithmic(docs, cfg.grid_ratio, cfg.max_arms).stage("batch grid")?;
    let adapt_cfg = AdaptConfig {
        burnin_cycles: cfg.burnin,
        n_per_arm: cfg.n_per_arm,
        t_max: cfg.t_max,
        ..AdaptConfig::default()
    };
    let adaptation = adapt_batch_size(&mut state, &grid, &adapt_cfg, &mut rng).stage("adaptation")?;
    let mut curves = Vec::new();
    for m in cfg.curves.pick(&adaptation, docs) {
        let mut chain_rng = RandomStream::new(seed, 1 + m as u64);
        let mut score_rng = RandomStream::new(seed, 1 << 32 | m as u64);
        curves.push(
            perplexity_curve(&state, m, &corpus.test, cfg, &mut chain_rng, &mut score_rng)
                .stage(format!("sampling at m = {m}"))?,
        );
    }
    Ok(LdaResult {
        docs,
        adaptation,
        curves,
    })
}

pub fn write(result: &LdaResult, dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut csv = String::from("m,seconds,cycles,perplexity\n");
    for c in &result.curves {
        for p in &c.points {
            let _ = writeln!(
                csv,
                "{},{},{},{}",
                c.batch_size,
                fmt_f64(p.seconds),
                p.cycles,
                fmt_f64(p.perplexity)
            );
        }
    }
    write_text(dir, "fig8_perplexity.csv", &csv, &mut written)?;
    let plot = LinePlot {
        title: "LDA: held-out perplexity vs time".into(),
        x_label: "seconds".into(),
        y_label: "perplexity".into(),
        series: result
            .curves
            .iter()
            .map(|c| {
                let label = if c.batch_size == result.docs {
                    format!("m = {} (full)", c.batch_size)
                } else {
                    format!("m = {}", c.batch_size)
                };
                Series::line(label, c.points.iter().map(|p| (p.seconds, p.perplexity)).collect())
                    .with_markers()
            })
            .collect(),
        ..Default::default()
    };
    save_plot(dir, "fig8_perplexity.svg", &plot, &mut written)?;
    write_text(dir, "fig8_objective.csv", &adaptation_csv(&result.adaptation), &mut written)?;
    save_plot(
        dir,
        "fig8_objective.svg",
        &objective_plot(&result.adaptation, "LDA: objective"),
        &mut written,
    )?;
    Ok(written)
}
