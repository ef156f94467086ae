//! Bayesian lasso probit: MSE of the posterior-mean estimate against wall
//! clock for each batch size, and the objective table that picks m*.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use mbgibbs::data::gen_probit_data;
use mbgibbs::scan::burn_in;
use mbgibbs::{
    adapt_batch_size, run_scan_observed, AdaptConfig, AdaptationResult, BatchGrid, BlassoMode,
    BlassoState, MonotonicClock, RandomStream, RegressionData, ScanSchedule, Stop,
};

use super::{adaptation_csv, fmt_f64, objective_plot, save_plot, write_text, Checkpoints, CurveSizes};
use crate::config::Settings;
use crate::error::{CliResult, Context};
use crate::plot::{LinePlot, Series};

#[derive(Debug, Clone, PartialEq)]
pub struct Fig3Config {
    pub n: usize,
    pub d: usize,
    pub noise_sd: f64,
    /// Seeds the data set; the experiment seed only drives the chains.
    pub data_seed: u64,
    pub lambda: f64,
    pub grid_ratio: f64,
    pub max_arms: usize,
    pub burnin: u64,
    pub n_per_arm: u64,
    /// Lag cap for τ_int; `None` uses the library default.
    pub t_max: Option<usize>,
    pub budget_seconds: f64,
    pub curves: CurveSizes,
    pub checkpoints: usize,
    /// Full-sweep cycles for the posterior-mean reference.
    pub reference_burnin: u64,
    pub reference_cycles: u64,
}

impl Default for Fig3Config {
    fn default() -> Self {
        Fig3Config {
            n: 1200,
            d: 4,
            noise_sd: 1.0,
            data_seed: 1,
            lambda: 1.0,
            grid_ratio: 4.0,
            max_arms: 5,
            burnin: 500,
            // τ_int of the small batch sizes is badly underestimated from a
            // few hundred samples, which biases the selection towards m = 1.
            n_per_arm: 20_000,
            t_max: None,
            budget_seconds: 10.0,
            curves: CurveSizes::Grid,
            checkpoints: 100,
            reference_burnin: 1_000,
            reference_cycles: 200_000,
        }
    }
}

impl Fig3Config {
    pub fn resolve(s: &Settings, budget: Option<f64>) -> CliResult<Self> {
        let d = Fig3Config::default();
        Ok(Fig3Config {
            n: s.get(None, "n", d.n)?,
            d: s.get(None, "dim", d.d)?,
            noise_sd: s.get(None, "noise_sd", d.noise_sd)?,
            data_seed: s.get(None, "data_seed", d.data_seed)?,
            lambda: s.get(None, "lambda", d.lambda)?,
            grid_ratio: s.get(None, "grid_ratio", d.grid_ratio)?,
            max_arms: s.get(None, "max_arms", d.max_arms)?,
            burnin: s.get(None, "burnin", d.burnin)?,
            n_per_arm: s.get(None, "n_per_arm", d.n_per_arm)?,
            t_max: s.get_opt(None, "t_max")?,
            budget_seconds: s.get(budget, "budget_seconds", d.budget_seconds)?,
            curves: s.get(None, "curves", d.curves)?,
            checkpoints: s.get(None, "checkpoints", d.checkpoints)?,
            reference_burnin: s.get(None, "reference_burnin", d.reference_burnin)?,
            reference_cycles: s.get(None, "reference_cycles", d.reference_cycles)?,
        })
    }

    pub fn data(&self) -> mbgibbs::Result<RegressionData> {
        gen_probit_data(self.n, self.d, None, self.noise_sd, self.data_seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MsePoint {
    pub seconds: f64,
    pub cycles: u64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseCurve {
    pub batch_size: usize,
    pub points: Vec<MsePoint>,
}

impl MseCurve {
    pub fn final_mse(&self) -> f64 {
        self.points.last().map_or(f64::NAN, |p| p.mse)
    }
}

#[derive(Debug, Clone)]
pub struct Fig3Result {
    pub n: usize,
    pub reference: Vec<f64>,
    pub adaptation: AdaptationResult,
    pub curves: Vec<MseCurve>,
}

impl Fig3Result {
    pub fn curve(&self, m: usize) -> Option<&MseCurve> {
        self.curves.iter().find(|c| c.batch_size == m)
    }
}

/// Posterior mean of `w` from a long full-sweep run on its own stream.
pub fn reference_mean(
    data: Arc<RegressionData>,
    lambda: f64,
    burnin: u64,
    cycles: u64,
    seed: u64,
) -> mbgibbs::Result<Vec<f64>> {
    let mut state = BlassoState::new(data.clone(), BlassoMode::Probit, lambda)?;
    let mut rng = RandomStream::new(seed, u64::MAX);
    let sweep = ScanSchedule::mini_batch(data.n())?;
    burn_in(&mut state, &sweep, burnin, &mut rng)?;
    let mut sum = vec![0.0; data.d()];
    run_scan_observed(
        &mut state,
        &sweep,
        Stop::Cycles(cycles),
        &mut rng,
        &MonotonicClock::new(),
        |_, s| sum.iter_mut().zip(&s.w).for_each(|(a, w)| *a += w),
    )?;
    Ok(sum.into_iter().map(|s| s / cycles as f64).collect())
}

/// Runs `m` for the time budget from `start`, tracking the squared error
/// of the running mean of `w` against `reference`.
pub fn mse_curve(
    start: &BlassoState,
    m: usize,
    reference: &[f64],
    budget: f64,
    checkpoints: usize,
    rng: &mut RandomStream,
) -> mbgibbs::Result<MseCurve> {
    let mut state = start.clone();
    let mut sum = vec![0.0; reference.len()];
    let mut marks = Checkpoints::new(budget, checkpoints);
    let mut points = Vec::new();
    let mse = |sum: &[f64], k: u64| -> f64 {
        sum.iter()
            .zip(reference)
            .map(|(s, r)| {
                let e = s / k as f64 - r;
                e * e
            })
            .sum()
    };
    let timing = run_scan_observed(
        &mut state,
        &ScanSchedule::mini_batch(m)?,
        Stop::Budget(budget),
        rng,
        &MonotonicClock::new(),
        |info, s| {
            sum.iter_mut().zip(&s.w).for_each(|(a, w)| *a += w);
            if info.cycle == 1 || marks.reached(info.seconds) {
                points.push(MsePoint {
                    seconds: info.seconds,
                    cycles: info.cycle,
                    mse: mse(&sum, info.cycle),
                });
            }
        },
    )?;
    if points.last().map(|p| p.cycles) != Some(timing.cycles) {
        points.push(MsePoint {
            seconds: timing.seconds,
            cycles: timing.cycles,
            mse: mse(&sum, timing.cycles),
        });
    }
    Ok(MseCurve {
        batch_size: m,
        points,
    })
}

/// Full pipeline. `reference` may be passed in to share one posterior-mean
/// run between seeds; it depends only on the data.
pub fn run(cfg: &Fig3Config, seed: u64, reference: Option<Vec<f64>>) -> CliResult<Fig3Result> {
    let data = Arc::new(cfg.data().stage("generating data")?);
    let reference = match reference {
        Some(r) => r,
        None => reference_mean(
            data.clone(),
            cfg.lambda,
            cfg.reference_burnin,
            cfg.reference_cycles,
            cfg.data_seed,
        )
        .stage("reference run")?,
    };
    let grid = BatchGrid::logarithmic(cfg.n, cfg.grid_ratio, cfg.max_arms).stage("batch grid")?;
    let adapt_cfg = AdaptConfig {
        burnin_cycles: cfg.burnin,
        n_per_arm: cfg.n_per_arm,
        t_max: cfg.t_max,
        ..AdaptConfig::default()
    };
    let mut state = BlassoState::new(data, BlassoMode::Probit, cfg.lambda).stage("initial state")?;
    let mut rng = RandomStream::new(seed, 0);
    let adaptation = adapt_batch_size(&mut state, &grid, &adapt_cfg, &mut rng).stage("adaptation")?;
    let mut curves = Vec::new();
    for m in cfg.curves.pick(&adaptation, cfg.n) {
        let mut rng = RandomStream::new(seed, 1 + m as u64);
        curves.push(
            mse_curve(&state, m, &reference, cfg.budget_seconds, cfg.checkpoints, &mut rng)
                .stage(format!("sampling at m = {m}"))?,
        );
    }
    Ok(Fig3Result {
        n: cfg.n,
        reference,
        adaptation,
        curves,
    })
}

pub fn write(result: &Fig3Result, dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut csv = String::from("m,seconds,cycles,mse\n");
    for c in &result.curves {
        for p in &c.points {
            let _ = writeln!(csv, "{},{},{},{}", c.batch_size, fmt_f64(p.seconds), p.cycles, fmt_f64(p.mse));
        }
    }
    write_text(dir, "fig3_mse.csv", &csv, &mut written)?;
    let plot = LinePlot {
        title: "Lasso probit: MSE of posterior mean vs time".into(),
        x_label: "seconds".into(),
        y_label: "MSE".into(),
        log_y: true,
        series: result
            .curves
            .iter()
            .map(|c| {
                let label = if c.batch_size == result.n {
                    format!("m = {} (full)", c.batch_size)
                } else {
                    format!("m = {}", c.batch_size)
                };
                Series::line(label, c.points.iter().map(|p| (p.seconds, p.mse)).collect())
            })
            .collect(),
        ..Default::default()
    };
    save_plot(dir, "fig3_mse.svg", &plot, &mut written)?;
    write_text(dir, "fig3_objective.csv", &adaptation_csv(&result.adaptation), &mut written)?;
    save_plot(
        dir,
        "fig3_objective.svg",
        &objective_plot(&result.adaptation, "Lasso probit: objective"),
        &mut written,
    )?;
    let mut r = String::from("coefficient,posterior_mean\n");
    for (j, v) in result.reference.iter().enumerate() {
        let _ = writeln!(r, "{j},{}", fmt_f64(*v));
    }
    write_text(dir, "fig3_reference.csv", &r, &mut written)?;
    Ok(written)
}
