//! Dirichlet-process mixture: cluster count, center MSE and purity per
//! iteration for the mini-batch sampler at m* and the collapsed sampler.
//!
//! An iteration is `ceil(N/m)` cycles, i.e. one sweep's worth of local
//! updates, so both samplers are compared per datum visited.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use mbgibbs::data::{gen_gmm_data, GmmData};
use mbgibbs::{
    adapt_batch_size, cluster_mse, purity, run_scan_observed, AdaptConfig, AdaptationResult,
    BatchGrid, DpmmMode, DpmmState, MonotonicClock, RandomStream, ScanSchedule, Stop,
};

use super::{adaptation_csv, fmt_f64, objective_plot, save_plot, write_text};
use crate::config::Settings;
use crate::error::{CliError, CliResult, Context};
use crate::model::{build_dpmm, DpmmInit, ModelOptions};
use crate::plot::{LinePlot, ScatterPlot, Series};

#[derive(Debug, Clone, PartialEq)]
pub struct DpmmExperimentConfig {
    pub n: usize,
    pub k: usize,
    pub dim: usize,
    pub separation: f64,
    pub data_seed: u64,
    pub alpha: f64,
    pub kappa0: f64,
    /// `None` means `dim + 3`.
    pub nu0: Option<f64>,
    pub init: DpmmInit,
    pub grid_ratio: f64,
    pub max_arms: usize,
    pub burnin: u64,
    pub n_per_arm: u64,
    /// Lag cap for τ_int; `None` uses the library default.
    pub t_max: Option<usize>,
    pub iterations: u64,
    /// Skip adaptation and use this batch size.
    pub fixed_m: Option<usize>,
}

impl Default for DpmmExperimentConfig {
    fn default() -> Self {
        DpmmExperimentConfig {
            n: 1000,
            k: 5,
            dim: 2,
            separation: 10.0,
            data_seed: 1,
            alpha: 1.0,
            kappa0: 0.01,
            nu0: None,
            init: DpmmInit::Singletons,
            grid_ratio: 4.0,
            max_arms: 5,
            burnin: 500,
            n_per_arm: 200,
            t_max: None,
            iterations: 200,
            fixed_m: None,
        }
    }
}

impl DpmmExperimentConfig {
    pub fn resolve(s: &Settings, fixed_m: Option<usize>) -> CliResult<Self> {
        let d = DpmmExperimentConfig::default();
        Ok(DpmmExperimentConfig {
            n: s.get(None, "n", d.n)?,
            k: s.get(None, "k", d.k)?,
            dim: s.get(None, "dim", d.dim)?,
            separation: s.get(None, "separation", d.separation)?,
            data_seed: s.get(None, "data_seed", d.data_seed)?,
            alpha: s.get(None, "alpha", d.alpha)?,
            kappa0: s.get(None, "kappa0", d.kappa0)?,
            nu0: s.get_opt(None, "nu0")?,
            init: s.get(None, "dpmm_init", d.init)?,
            grid_ratio: s.get(None, "grid_ratio", d.grid_ratio)?,
            max_arms: s.get(None, "max_arms", d.max_arms)?,
            burnin: s.get(None, "burnin", d.burnin)?,
            n_per_arm: s.get(None, "n_per_arm", d.n_per_arm)?,
            t_max: s.get_opt(None, "t_max")?,
            iterations: s.get(None, "iterations", d.iterations)?,
            fixed_m: s.get_opt(fixed_m, "m")?,
        })
    }

    pub fn data(&self) -> mbgibbs::Result<GmmData> {
        gen_gmm_data(self.n, self.k, self.dim, self.separation, self.data_seed)
    }

    fn options(&self) -> ModelOptions {
        ModelOptions {
            alpha: self.alpha,
            kappa0: self.kappa0,
            nu0: self.nu0,
            dpmm_init: self.init,
            ..ModelOptions::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationMetrics {
    pub iteration: u64,
    pub clusters: usize,
    pub purity: f64,
    pub mse: f64,
    /// Live clusters left without a true center (or vice versa).
    pub unmatched: usize,
}

#[derive(Debug, Clone)]
pub struct DpmmRun {
    pub label: String,
    pub batch_size: usize,
    pub metrics: Vec<IterationMetrics>,
    /// Canonical cluster label per point after the last iteration.
    pub final_labels: Vec<usize>,
}

impl DpmmRun {
    /// Most frequent cluster count over iterations `from..=to`; ties go to
    /// the smaller count.
    pub fn modal_clusters(&self, from: u64, to: u64) -> Option<usize> {
        let mut counts = std::collections::BTreeMap::new();
        for m in self.metrics.iter().filter(|m| (from..=to).contains(&m.iteration)) {
            *counts.entry(m.clusters).or_insert(0usize) += 1;
        }
        counts
            .into_iter()
            .max_by_key(|&(k, c)| (c, std::cmp::Reverse(k)))
            .map(|(k, _)| k)
    }

    pub fn at(&self, iteration: u64) -> Option<&IterationMetrics> {
        self.metrics.iter().find(|m| m.iteration == iteration)
    }
}

#[derive(Debug, Clone)]
pub struct DpmmResult {
    pub data: GmmData,
    /// `None` when the batch size was fixed.
    pub adaptation: Option<AdaptationResult>,
    pub m_star: usize,
    pub minibatch: DpmmRun,
    pub collapsed: DpmmRun,
}

/// Runs one chain for `iterations` sweep-equivalents, scoring it after each.
pub fn run_chain(
    mut state: DpmmState,
    m: usize,
    iterations: u64,
    truth: &GmmData,
    label: &str,
    rng: &mut RandomStream,
) -> CliResult<DpmmRun> {
    let n = state.data().n();
    let per_iter = n.div_ceil(m) as u64;
    let classes = truth
        .points
        .labels()
        .ok_or_else(|| CliError::usage("mixture data has no labels"))?
        .to_vec();
    let mut metrics = Vec::new();
    let mut failure = None;
    run_scan_observed(
        &mut state,
        &ScanSchedule::mini_batch(m).stage("schedule")?,
        Stop::Cycles(iterations * per_iter),
        rng,
        &MonotonicClock::new(),
        |info, s| {
            if info.cycle % per_iter != 0 || failure.is_some() {
                return;
            }
            let scored = purity(s.assignments(), &classes)
                .and_then(|p| cluster_mse(&s.cluster_centers(), &truth.centers).map(|c| (p, c)));
            match scored {
                Ok((p, c)) => metrics.push(IterationMetrics {
                    iteration: info.cycle / per_iter,
                    clusters: s.num_clusters(),
                    purity: p,
                    mse: c.mse,
                    unmatched: c.unmatched,
                }),
                Err(e) => failure = Some(e),
            }
        },
    )
    .stage(format!("{label} sampler"))?;
    if let Some(e) = failure {
        return Err(e).stage(format!("{label} metrics"));
    }
    Ok(DpmmRun {
        label: label.to_string(),
        batch_size: m,
        metrics,
        final_labels: state.canonical_labels(),
    })
}

pub fn run(cfg: &DpmmExperimentConfig, seed: u64) -> CliResult<DpmmResult> {
    let gmm = cfg.data().stage("generating data")?;
    let data = Arc::new(gmm.points.clone());
    let opts = cfg.options();
    let (adaptation, m_star) = match cfg.fixed_m {
        Some(m) => (None, m),
        None => {
            let mut rng = RandomStream::new(seed, 0);
            let mut state = build_dpmm(data.clone(), &opts, DpmmMode::Instantiated, &mut rng)
                .stage("initial state")?;
            let grid = BatchGrid::logarithmic(cfg.n, cfg.grid_ratio, cfg.max_arms).stage("batch grid")?;
            let adapt_cfg = AdaptConfig {
                burnin_cycles: cfg.burnin,
                n_per_arm: cfg.n_per_arm,
                t_max: cfg.t_max,
                ..AdaptConfig::default()
            };
            let a = adapt_batch_size(&mut state, &grid, &adapt_cfg, &mut rng).stage("adaptation")?;
            let m = a.m_star;
            (Some(a), m)
        }
    };

    let mut rng = RandomStream::new(seed, 1);
    let start = build_dpmm(data.clone(), &opts, DpmmMode::Instantiated, &mut rng).stage("initial state")?;
    let minibatch = run_chain(start, m_star, cfg.iterations, &gmm, "minibatch", &mut rng)?;

    let mut rng = RandomStream::new(seed, 2);
    let start = build_dpmm(data, &opts, DpmmMode::Collapsed, &mut rng).stage("initial state")?;
    let collapsed = run_chain(start, cfg.n, cfg.iterations, &gmm, "collapsed", &mut rng)?;

    Ok(DpmmResult {
        data: gmm,
        adaptation,
        m_star,
        minibatch,
        collapsed,
    })
}

/// Writes the fig5 clustering panels, the fig6 metric panels and, when
/// adaptation ran, the objective table.
pub fn write(result: &DpmmResult, dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut written = Vec::new();
    let pts = &result.data.points;
    let truth = pts.labels().map(<[usize]>::to_vec).unwrap_or_else(|| vec![0; pts.n()]);

    let mut csv = String::new();
    let dims: Vec<String> = (0..pts.dim()).map(|j| format!("x{}", j + 1)).collect();
    let _ = writeln!(csv, "{},true,minibatch,collapsed", dims.join(","));
    for i in 0..pts.n() {
        let coords: Vec<String> = pts.point(i).iter().map(|v| fmt_f64(*v)).collect();
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            coords.join(","),
            truth[i],
            result.minibatch.final_labels[i],
            result.collapsed.final_labels[i]
        );
    }
    write_text(dir, "fig5_clusters.csv", &csv, &mut written)?;
    let xy = |labels: &[usize]| -> Vec<(f64, f64, usize)> {
        (0..pts.n())
            .map(|i| {
                let p = pts.point(i);
                (p[0], p.get(1).copied().unwrap_or(0.0), labels[i])
            })
            .collect()
    };
    let scatter = ScatterPlot {
        title: "DPMM posterior clustering".into(),
        panels: vec![
            ("true labels".into(), xy(&truth)),
            (format!("mini-batch m = {}", result.m_star), xy(&result.minibatch.final_labels)),
            ("collapsed".into(), xy(&result.collapsed.final_labels)),
        ],
    };
    let path = dir.join("fig5_clusters.svg");
    scatter.save(&path)?;
    written.push(path);

    let mut csv = String::from("metric,value,iteration,chain\n");
    for run in [&result.minibatch, &result.collapsed] {
        for m in &run.metrics {
            for (name, v) in [
                ("clusters", m.clusters as f64),
                ("mse", m.mse),
                ("purity", m.purity),
                ("unmatched", m.unmatched as f64),
            ] {
                let _ = writeln!(csv, "{name},{},{},{}", fmt_f64(v), m.iteration, run.label);
            }
        }
    }
    write_text(dir, "fig6_metrics.csv", &csv, &mut written)?;
    let panel = |title: &str, y: &str, log_y: bool, f: fn(&IterationMetrics) -> f64| LinePlot {
        title: title.into(),
        x_label: "iteration".into(),
        y_label: y.into(),
        log_y,
        series: [&result.minibatch, &result.collapsed]
            .iter()
            .map(|r| {
                let label = if r.label == "collapsed" {
                    "collapsed".to_string()
                } else {
                    format!("mini-batch m = {}", r.batch_size)
                };
                Series::line(label, r.metrics.iter().map(|m| (m.iteration as f64, f(m))).collect())
            })
            .collect(),
        ..Default::default()
    };
    save_plot(dir, "fig6_mse.svg", &panel("DPMM center MSE", "MSE", true, |m| m.mse), &mut written)?;
    save_plot(dir, "fig6_purity.svg", &panel("DPMM purity", "purity", false, |m| m.purity), &mut written)?;
    save_plot(
        dir,
        "fig6_clusters.svg",
        &panel("DPMM live clusters", "clusters", false, |m| m.clusters as f64),
        &mut written,
    )?;
    if let Some(a) = &result.adaptation {
        write_text(dir, "fig56_objective.csv", &adaptation_csv(a), &mut written)?;
        save_plot(dir, "fig56_objective.svg", &objective_plot(a, "DPMM: objective"), &mut written)?;
    }
    Ok(written)
}
