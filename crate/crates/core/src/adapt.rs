//! Batch-size adaptation.
//!
//! Each candidate batch size `m` is run for a fixed number of cycles, its
//! update costs are measured, and the cost-weighted autocorrelation time
//! `f(m) = (m·w_z + w_theta) · tau_int(m)` is minimized over the grid.
//! The winning size is then used for the sampling phase, continuing from
//! the adapted state.

use std::io::Write;

use rand::seq::SliceRandom;

use crate::diagnostics::{default_t_max, integrated_autocorrelation_time};
use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::scan::{
    burn_in, run_scan_with, ChainTrace, Clock, GibbsModel, IndexPolicy, MonotonicClock,
    ScanSchedule, Stop, TraceEntry,
};

/// Candidate batch sizes, strictly increasing, all within `1..=N`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchGrid {
    sizes: Vec<usize>,
}

impl BatchGrid {
    pub fn new(sizes: Vec<usize>, n: usize) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::invalid("batch grid is empty"));
        }
        if sizes[0] == 0 {
            return Err(Error::invalid("batch sizes must be positive"));
        }
        if sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(format!(
                "batch sizes must be strictly increasing: {sizes:?}"
            )));
        }
        if *sizes.last().unwrap() > n {
            return Err(Error::invalid(format!(
                "batch size {} exceeds the {n} local units",
                sizes.last().unwrap()
            )));
        }
        Ok(BatchGrid { sizes })
    }

    /// Geometric grid `round(ratio^k)`, k = 0, 1, …, keeping at most
    /// `max_arms` sizes `<= n`; `n` itself is appended when missing so the
    /// full-sweep sampler is always one of the arms.
    pub fn logarithmic(n: usize, ratio: f64, max_arms: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("need at least one local unit"));
        }
        if !(ratio > 1.0) || !ratio.is_finite() {
            return Err(Error::invalid(format!("grid ratio must exceed 1, got {ratio}")));
        }
        if max_arms == 0 {
            return Err(Error::invalid("max_arms must be positive"));
        }
        let mut sizes: Vec<usize> = Vec::new();
        let mut k = 0i32;
        while sizes.len() < max_arms {
            let v = ratio.powi(k).round();
            if v > n as f64 {
                break;
            }
            let v = v as usize;
            if sizes.last() != Some(&v) {
                sizes.push(v);
            }
            k += 1;
        }
        if sizes.last() != Some(&n) {
            sizes.push(n);
        }
        BatchGrid::new(sizes, n)
    }

    /// Grid with a single size.
    pub fn singleton(m: usize, n: usize) -> Result<Self> {
        BatchGrid::new(vec![m], n)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }
}

/// `f(m) = (m·w_z + w_theta) · tau_int`.
pub fn objective(batch_size: usize, w_z: f64, w_theta: f64, tau_int: f64) -> Result<f64> {
    for (name, v) in [("w_z", w_z), ("w_theta", w_theta), ("tau_int", tau_int)] {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::invalid(format!("{name} must be finite and >= 0, got {v}")));
        }
    }
    if tau_int == 0.0 || batch_size == 0 {
        return Err(Error::invalid("batch size and tau_int must be positive"));
    }
    Ok((batch_size as f64 * w_z + w_theta) * tau_int)
}

/// Measurements for one grid arm.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmResult {
    pub batch_size: usize,
    pub w_z: f64,
    pub w_theta: f64,
    pub tau_int: f64,
    /// `+inf` when the arm's trace was degenerate.
    pub objective: f64,
}

/// Picks the arm with the smallest finite objective; ties go to the
/// smaller batch size.
pub fn select_batch_size(arms: &[ArmResult]) -> Result<usize> {
    arms.iter()
        .filter(|a| a.objective.is_finite())
        .min_by(|a, b| {
            a.objective
                .total_cmp(&b.objective)
                .then(a.batch_size.cmp(&b.batch_size))
        })
        .map(|a| a.batch_size)
        .ok_or(Error::AllArmsDegenerate(arms.len()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptationResult {
    /// One entry per grid size, in increasing batch size.
    pub per_arm: Vec<ArmResult>,
    /// Batch sizes in the order they were run.
    pub visit_order: Vec<usize>,
    pub m_star: usize,
    /// The arms' traces back to back, with cycles and seconds continued.
    pub adaptation_trace: ChainTrace,
    /// One message per degenerate arm.
    pub warnings: Vec<String>,
}

impl AdaptationResult {
    pub fn arm(&self, batch_size: usize) -> Option<&ArmResult> {
        self.per_arm.iter().find(|a| a.batch_size == batch_size)
    }

    pub const CSV_HEADER: &'static str = "m,w_z,w_theta,tau_int,objective";

    /// One row per arm, then a `m_star,<m>` footer row.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for a in &self.per_arm {
            writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e},{:.16e}",
                a.batch_size, a.w_z, a.w_theta, a.tau_int, a.objective
            )?;
        }
        writeln!(out, "m_star,{},,,", self.m_star)
    }
}

/// Settings for the adaptation phase.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptConfig {
    /// Full-sweep cycles run once before the first arm.
    pub burnin_cycles: u64,
    /// Cycles (θ-samples) recorded per arm.
    pub n_per_arm: u64,
    /// Lag cap for τ_int; `None` uses `min(n/4, 1000)`.
    pub t_max: Option<usize>,
    pub policy: IndexPolicy,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig {
            burnin_cycles: 500,
            n_per_arm: 200,
            t_max: None,
            policy: IndexPolicy::default(),
        }
    }
}

/// Minimum per-arm sample count; below this τ_int is mostly noise.
pub const MIN_SAMPLES_PER_ARM: u64 = 50;

/// Runs the adaptation phase with the wall clock.
pub fn adapt_batch_size<M: GibbsModel + ?Sized>(
    model: &mut M,
    grid: &BatchGrid,
    config: &AdaptConfig,
    rng: &mut RandomStream,
) -> Result<AdaptationResult> {
    adapt_batch_size_clocked(model, grid, config, rng, &MonotonicClock::new())
}

/// Runs the adaptation phase, timing updates with `clock`.
///
/// Arms are visited in a random order and the chain state carries over
/// from one arm to the next.
pub fn adapt_batch_size_clocked<M, C>(
    model: &mut M,
    grid: &BatchGrid,
    config: &AdaptConfig,
    rng: &mut RandomStream,
    clock: &C,
) -> Result<AdaptationResult>
where
    M: GibbsModel + ?Sized,
    C: Clock + ?Sized,
{
    let n_units = model.num_local_units();
    if *grid.sizes().last().unwrap() > n_units {
        return Err(Error::invalid(format!(
            "grid exceeds the model's {n_units} local units"
        )));
    }
    if config.n_per_arm < MIN_SAMPLES_PER_ARM {
        return Err(Error::invalid(format!(
            "n_per_arm must be at least {MIN_SAMPLES_PER_ARM}, got {}",
            config.n_per_arm
        )));
    }
    let t_max = config
        .t_max
        .unwrap_or_else(|| default_t_max(config.n_per_arm as usize));
    if t_max as u64 >= config.n_per_arm {
        return Err(Error::invalid(format!(
            "t_max {t_max} must be below n_per_arm {}",
            config.n_per_arm
        )));
    }

    let sweep = ScanSchedule::new(n_units, 1, config.policy)?;
    burn_in(model, &sweep, config.burnin_cycles, rng)?;

    let mut order: Vec<usize> = grid.sizes().to_vec();
    order.shuffle(rng);

    let mut per_arm = Vec::with_capacity(order.len());
    let mut warnings = Vec::new();
    let mut concat: Vec<TraceEntry> = Vec::new();
    let mut offset_seconds = 0.0;
    let mut offset_cycles = 0;
    for &m in &order {
        let schedule = ScanSchedule::new(m, 1, config.policy)?;
        let trace = run_scan_with(model, &schedule, Stop::Cycles(config.n_per_arm), rng, clock)?;
        let summaries = trace.summaries();
        let arm = match integrated_autocorrelation_time(&summaries, t_max) {
            Ok(tau) => ArmResult {
                batch_size: m,
                w_z: trace.w_z,
                w_theta: trace.w_theta,
                tau_int: tau,
                objective: objective(m, trace.w_z, trace.w_theta, tau)?,
            },
            Err(Error::DegenerateSeries(msg)) => {
                warnings.push(format!("arm m={m}: {msg}"));
                ArmResult {
                    batch_size: m,
                    w_z: trace.w_z,
                    w_theta: trace.w_theta,
                    tau_int: f64::NAN,
                    objective: f64::INFINITY,
                }
            }
            Err(e) => return Err(e),
        };
        per_arm.push(arm);
        concat.extend(trace.entries.iter().map(|e| TraceEntry {
            cycle: e.cycle + offset_cycles,
            seconds: e.seconds + offset_seconds,
            summary: e.summary,
        }));
        offset_cycles += trace.len() as u64;
        offset_seconds += trace.total_seconds();
    }

    let m_star = select_batch_size(&per_arm)?;
    let (w_z, w_theta) = per_arm
        .iter()
        .find(|a| a.batch_size == m_star)
        .map(|a| (a.w_z, a.w_theta))
        .unwrap();
    per_arm.sort_by_key(|a| a.batch_size);
    Ok(AdaptationResult {
        per_arm,
        visit_order: order,
        m_star,
        adaptation_trace: ChainTrace {
            entries: concat,
            w_z,
            w_theta,
            seed: rng.seed(),
        },
        warnings,
    })
}

/// Adaptation followed by sampling at the selected batch size, without
/// resetting the chain in between.
pub fn run_two_phase<M, C>(
    model: &mut M,
    grid: &BatchGrid,
    config: &AdaptConfig,
    sampling: Stop,
    rng: &mut RandomStream,
    clock: &C,
) -> Result<(AdaptationResult, ChainTrace)>
where
    M: GibbsModel + ?Sized,
    C: Clock + ?Sized,
{
    let adaptation = adapt_batch_size_clocked(model, grid, config, rng, clock)?;
    let schedule = ScanSchedule::new(adaptation.m_star, 1, config.policy)?;
    let trace = run_scan_with(model, &schedule, sampling, rng, clock)?;
    Ok((adaptation, trace))
}

/// Independent adaptations on separate threads, one per model, each with
/// its own stream `(seed, chain index)`. Returns the per-chain results
/// and the most frequent `m*` (ties to the smaller size).
pub fn adapt_multi_chain<M>(
    models: &mut [M],
    grid: &BatchGrid,
    config: &AdaptConfig,
    seed: u64,
) -> Result<(Vec<AdaptationResult>, usize)>
where
    M: GibbsModel + Send,
{
    let results: Vec<Result<AdaptationResult>> = std::thread::scope(|s| {
        let handles: Vec<_> = models
            .iter_mut()
            .enumerate()
            .map(|(j, model)| {
                s.spawn(move || {
                    let mut rng = RandomStream::new(seed, j as u64);
                    adapt_batch_size(model, grid, config, &mut rng)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("adaptation thread panicked"))
            .collect()
    });
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    let modal = modal_batch_size(results.iter().map(|r| r.m_star))
        .ok_or_else(|| Error::invalid("no chains to adapt"))?;
    Ok((results, modal))
}

fn modal_batch_size(ms: impl Iterator<Item = usize>) -> Option<usize> {
    let mut counts: std::collections::BTreeMap<usize, usize> = Default::default();
    for m in ms {
        *counts.entry(m).or_default() += 1;
    }
    // BTreeMap iterates in increasing m, so max_by_key keeping the first
    // maximum would pick the largest; compare on (count, Reverse(m)).
    counts
        .into_iter()
        .max_by_key(|&(m, c)| (c, std::cmp::Reverse(m)))
        .map(|(m, _)| m)
}
