//! Model interface and the mini-batch scan executor.
//!
//! A scan cycle performs `m` local updates followed by `g` global updates,
//! then records the model summary. `m = 1, g = 1` alternates θ and z,
//! `m = N` is the systematic-scan sampler, and `g > 1` gives the
//! fractional schedule that refreshes θ several times per local update.

use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// A hierarchical model split into per-unit local updates and a global
/// update, as required by the scan executor.
///
/// `local_update(i)` may only touch unit `i`'s latent state and shared
/// sufficient statistics; `global_update` must leave every local latent
/// unchanged. `summary` and `log_joint` are pure.
pub trait GibbsModel {
    /// Number of local units N.
    fn num_local_units(&self) -> usize;

    fn local_update(&mut self, index: usize, rng: &mut RandomStream) -> Result<()>;

    fn global_update(&mut self, rng: &mut RandomStream) -> Result<()>;

    /// Scalar f(θ) tracked for diagnostics.
    fn summary(&self) -> f64;

    /// Unnormalized log posterior.
    fn log_joint(&self) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IndexPolicy {
    /// Walk a fresh random permutation each epoch.
    #[default]
    CyclicPermutation,
    /// Draw indices i.i.d. uniformly.
    UniformWithReplacement,
}

impl std::str::FromStr for IndexPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cyclic" | "cyclic-permutation" => Ok(IndexPolicy::CyclicPermutation),
            "uniform" | "uniform-with-replacement" => Ok(IndexPolicy::UniformWithReplacement),
            other => Err(Error::invalid(format!("unknown index policy `{other}`"))),
        }
    }
}

/// How many local and global updates make up one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScanSchedule {
    batch_size: usize,
    global_repeats: usize,
    policy: IndexPolicy,
}

impl ScanSchedule {
    pub fn new(batch_size: usize, global_repeats: usize, policy: IndexPolicy) -> Result<Self> {
        if batch_size == 0 || global_repeats == 0 {
            return Err(Error::invalid(
                "batch size and global repeats must both be at least 1",
            ));
        }
        if batch_size > 1 && global_repeats > 1 {
            return Err(Error::invalid(format!(
                "a cycle cannot have both m = {batch_size} > 1 and g = {global_repeats} > 1"
            )));
        }
        Ok(ScanSchedule {
            batch_size,
            global_repeats,
            policy,
        })
    }

    /// `m` local updates per global update, default index policy.
    pub fn mini_batch(batch_size: usize) -> Result<Self> {
        Self::new(batch_size, 1, IndexPolicy::default())
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn global_repeats(&self) -> usize {
        self.global_repeats
    }

    pub fn policy(&self) -> IndexPolicy {
        self.policy
    }

    pub fn with_policy(self, policy: IndexPolicy) -> Self {
        ScanSchedule { policy, ..self }
    }

    fn check_units(&self, n: usize) -> Result<()> {
        if self.batch_size > n {
            return Err(Error::invalid(format!(
                "batch size {} exceeds the {n} local units",
                self.batch_size
            )));
        }
        Ok(())
    }
}

/// Produces the local-unit indices for each cycle.
#[derive(Debug, Clone)]
pub struct IndexSampler {
    policy: IndexPolicy,
    n: usize,
    perm: Vec<usize>,
    cursor: usize,
}

impl IndexSampler {
    pub fn new(policy: IndexPolicy, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("model has no local units"));
        }
        Ok(IndexSampler {
            policy,
            n,
            perm: (0..n).collect(),
            // forces a shuffle on first use
            cursor: n,
        })
    }

    /// Fills `out` with the next `m` indices.
    ///
    /// For the cyclic policy, a batch that crosses an epoch boundary is
    /// completed from the head of the next epoch's permutation, so every
    /// batch has exactly `m` entries.
    pub fn next_indices(&mut self, m: usize, rng: &mut RandomStream, out: &mut Vec<usize>) -> Result<()> {
        if m == 0 || m > self.n {
            return Err(Error::invalid(format!(
                "batch size {m} outside 1..={}",
                self.n
            )));
        }
        out.clear();
        match self.policy {
            IndexPolicy::UniformWithReplacement => {
                out.extend((0..m).map(|_| rng.random_range(0..self.n)));
            }
            IndexPolicy::CyclicPermutation => {
                while out.len() < m {
                    if self.cursor == self.n {
                        self.perm.shuffle(rng);
                        self.cursor = 0;
                    }
                    let take = (m - out.len()).min(self.n - self.cursor);
                    out.extend_from_slice(&self.perm[self.cursor..self.cursor + take]);
                    self.cursor += take;
                }
            }
        }
        Ok(())
    }
}

/// Source of elapsed seconds for timing updates.
pub trait Clock {
    fn now(&self) -> f64;
}

/// Wall clock backed by [`Instant`].
#[derive(Debug, Clone, Copy)]
pub struct MonotonicClock {
    start: Instant,
}

impl MonotonicClock {
    pub fn new() -> Self {
        MonotonicClock {
            start: Instant::now(),
        }
    }
}

impl Default for MonotonicClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for MonotonicClock {
    fn now(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }
}

/// A clock that only moves when told to; clones share the same time.
#[derive(Debug, Clone, Default)]
pub struct ManualClock {
    bits: Arc<AtomicU64>,
}

impl ManualClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn advance(&self, seconds: f64) {
        let now = f64::from_bits(self.bits.load(Ordering::Relaxed));
        self.bits.store((now + seconds).to_bits(), Ordering::Relaxed);
    }
}

impl Clock for ManualClock {
    fn now(&self) -> f64 {
        f64::from_bits(self.bits.load(Ordering::Relaxed))
    }
}

/// When a scan stops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stop {
    Cycles(u64),
    /// Stop after the first cycle that brings accumulated update time to
    /// at least this many seconds.
    Budget(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    /// 1-based cycle count.
    pub cycle: u64,
    /// Accumulated update time since the start of the run.
    pub seconds: f64,
    pub summary: f64,
}

/// Recorded output of one scan run.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainTrace {
    pub entries: Vec<TraceEntry>,
    /// Median seconds per local update.
    pub w_z: f64,
    /// Median seconds per global update.
    pub w_theta: f64,
    pub seed: u64,
}

impl ChainTrace {
    pub fn summaries(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.summary).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_seconds(&self) -> f64 {
        self.entries.last().map_or(0.0, |e| e.seconds)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "cycle,seconds,summary")?;
        for e in &self.entries {
            writeln!(out, "{},{:.16e},{:.16e}", e.cycle, e.seconds, e.summary)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Reads a trace CSV. Timing medians are not stored in the file and
    /// come back as zero.
    pub fn load_csv(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        let mut entries = Vec::new();
        for (idx, line) in std::io::BufReader::new(f).lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            if idx == 0 {
                if line.trim() != "cycle,seconds,summary" {
                    return Err(Error::parse(path, lineno, "expected header `cycle,seconds,summary`"));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("expected 3 fields, found {}", fields.len()),
                ));
            }
            let cycle = fields[0]
                .trim()
                .parse::<u64>()
                .map_err(|e| Error::parse(path, lineno, format!("cycle: {e}")))?;
            let seconds = fields[1]
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::parse(path, lineno, format!("seconds: {e}")))?;
            let summary = fields[2]
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::parse(path, lineno, format!("summary: {e}")))?;
            entries.push(TraceEntry {
                cycle,
                seconds,
                summary,
            });
        }
        if entries.is_empty() {
            return Err(Error::parse(path, 1, "trace has no rows"));
        }
        Ok(ChainTrace {
            entries,
            w_z: 0.0,
            w_theta: 0.0,
            seed: 0,
        })
    }
}

/// Bounded sample of per-update durations. When full it drops every
/// other value and halves its sampling rate, so the median stays
/// representative over arbitrarily long runs.
#[derive(Debug, Clone)]
struct DurationSample {
    values: Vec<f64>,
    stride: u64,
    seen: u64,
}

const DURATION_CAP: usize = 1 << 16;

impl DurationSample {
    fn new() -> Self {
        DurationSample {
            values: Vec::new(),
            stride: 1,
            seen: 0,
        }
    }

    fn push(&mut self, v: f64) {
        if self.seen % self.stride == 0 {
            self.values.push(v);
            if self.values.len() == DURATION_CAP {
                let kept: Vec<f64> = self.values.iter().step_by(2).copied().collect();
                self.values = kept;
                self.stride *= 2;
            }
        }
        self.seen += 1;
    }

    fn median(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        let mut v = self.values.clone();
        v.sort_by(|a, b| a.total_cmp(b));
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    }
}

/// Per-cycle information handed to scan observers.
#[derive(Debug, Clone, Copy)]
pub struct CycleInfo {
    pub cycle: u64,
    pub seconds: f64,
}

/// Aggregate timing of a run that did not collect summaries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanTiming {
    pub cycles: u64,
    pub seconds: f64,
    pub w_z: f64,
    pub w_theta: f64,
}

/// Runs the schedule, calling `observe` after each cycle's global block.
///
/// Time spent inside `observe` is not counted: the clock accumulates only
/// the local and global update blocks.
pub fn run_scan_observed<M, C, F>(
    model: &mut M,
    schedule: &ScanSchedule,
    stop: Stop,
    rng: &mut RandomStream,
    clock: &C,
    mut observe: F,
) -> Result<ScanTiming>
where
    M: GibbsModel + ?Sized,
    C: Clock + ?Sized,
    F: FnMut(CycleInfo, &M),
{
    let n = model.num_local_units();
    schedule.check_units(n)?;
    match stop {
        Stop::Cycles(0) => return Err(Error::invalid("need at least one cycle")),
        Stop::Budget(t) if !(t > 0.0) => {
            return Err(Error::invalid(format!("time budget must be positive, got {t}")))
        }
        _ => {}
    }
    let m = schedule.batch_size();
    let g = schedule.global_repeats();
    let mut sampler = IndexSampler::new(schedule.policy(), n)?;
    let mut batch = Vec::with_capacity(m);
    let mut local_times = DurationSample::new();
    let mut global_times = DurationSample::new();
    let mut elapsed = 0.0;
    let mut cycle = 0u64;

    loop {
        cycle += 1;
        sampler.next_indices(m, rng, &mut batch)?;
        let t0 = clock.now();
        for &i in &batch {
            model.local_update(i, rng).map_err(|e| Error::Update {
                cycle,
                source: Box::new(e),
            })?;
        }
        let t1 = clock.now();
        for _ in 0..g {
            model.global_update(rng).map_err(|e| Error::Update {
                cycle,
                source: Box::new(e),
            })?;
        }
        let t2 = clock.now();
        local_times.push((t1 - t0) / m as f64);
        global_times.push((t2 - t1) / g as f64);
        elapsed += t2 - t0;
        observe(
            CycleInfo {
                cycle,
                seconds: elapsed,
            },
            model,
        );
        let done = match stop {
            Stop::Cycles(n) => cycle >= n,
            Stop::Budget(t) => elapsed >= t,
        };
        if done {
            break;
        }
    }
    Ok(ScanTiming {
        cycles: cycle,
        seconds: elapsed,
        w_z: local_times.median(),
        w_theta: global_times.median(),
    })
}

/// Runs `n_cycles` cycles and records the summary after each one.
pub fn run_scan<M>(
    model: &mut M,
    schedule: &ScanSchedule,
    n_cycles: u64,
    rng: &mut RandomStream,
) -> Result<ChainTrace>
where
    M: GibbsModel + ?Sized,
{
    run_scan_with(model, schedule, Stop::Cycles(n_cycles), rng, &MonotonicClock::new())
}

/// [`run_scan`] with an explicit stopping rule and clock.
pub fn run_scan_with<M, C>(
    model: &mut M,
    schedule: &ScanSchedule,
    stop: Stop,
    rng: &mut RandomStream,
    clock: &C,
) -> Result<ChainTrace>
where
    M: GibbsModel + ?Sized,
    C: Clock + ?Sized,
{
    let mut entries = Vec::new();
    if let Stop::Cycles(n) = stop {
        entries.reserve(n.min(1 << 24) as usize);
    }
    let seed = rng.seed();
    let timing = run_scan_observed(model, schedule, stop, rng, clock, |info, m| {
        entries.push(TraceEntry {
            cycle: info.cycle,
            seconds: info.seconds,
            summary: m.summary(),
        })
    })?;
    Ok(ChainTrace {
        entries,
        w_z: timing.w_z,
        w_theta: timing.w_theta,
        seed,
    })
}

/// Runs `cycles` cycles without recording anything.
pub fn burn_in<M>(
    model: &mut M,
    schedule: &ScanSchedule,
    cycles: u64,
    rng: &mut RandomStream,
) -> Result<()>
where
    M: GibbsModel + ?Sized,
{
    if cycles == 0 {
        return Ok(());
    }
    run_scan_observed(
        model,
        schedule,
        Stop::Cycles(cycles),
        rng,
        &MonotonicClock::new(),
        |_, _| {},
    )?;
    Ok(())
}
