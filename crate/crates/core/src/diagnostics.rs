//! Autocorrelation, integrated autocorrelation time, effective sample
//! size, the time-budget variance estimate and multi-chain EPSR.

use std::io::Write;

use crate::error::{Error, Result};

/// Normalization convention for the lag-t autocorrelation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AcfMode {
    /// Both sums scaled by `1/n`; `rho_0 = 1` and `|rho_t| <= 1`.
    #[default]
    Standard,
    /// Lag sum scaled by `1/(n-t)`, variance by `1/(n-1)`, so that
    /// `rho_0 = (n-1)/n`.
    PaperExact,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Centered copy of the series and its sum of squares.
fn centered(samples: &[f64]) -> Result<(Vec<f64>, f64)> {
    if samples.len() < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 samples, got {}",
            samples.len()
        )));
    }
    if let Some(x) = samples.iter().find(|x| !x.is_finite()) {
        return Err(Error::invalid(format!("non-finite sample {x}")));
    }
    let m = mean(samples);
    let c: Vec<f64> = samples.iter().map(|x| x - m).collect();
    let ss: f64 = c.iter().map(|x| x * x).sum();
    if !(ss > 0.0) || ss <= 1e-300 * samples.len() as f64 {
        return Err(Error::DegenerateSeries(format!(
            "all {} samples are equal",
            samples.len()
        )));
    }
    Ok((c, ss))
}

fn lag_sum(c: &[f64], t: usize) -> f64 {
    c[..c.len() - t]
        .iter()
        .zip(&c[t..])
        .map(|(a, b)| a * b)
        .sum()
}

/// Lag-`t` autocorrelation of `samples`.
pub fn autocorrelation(samples: &[f64], t: usize, mode: AcfMode) -> Result<f64> {
    let (c, ss) = centered(samples)?;
    let n = c.len();
    if t >= n {
        return Err(Error::invalid(format!("lag {t} must be below n = {n}")));
    }
    let s = lag_sum(&c, t);
    Ok(match mode {
        AcfMode::Standard => s / ss,
        AcfMode::PaperExact => (s / (n - t) as f64) / (ss / (n - 1) as f64),
    })
}

/// Standard-mode autocorrelations for lags `0..=t_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct AcfSeries {
    pub rho: Vec<f64>,
}

impl AcfSeries {
    pub fn new(samples: &[f64], t_max: usize) -> Result<Self> {
        let (c, ss) = centered(samples)?;
        if t_max >= c.len() {
            return Err(Error::invalid(format!(
                "t_max {t_max} must be below n = {}",
                c.len()
            )));
        }
        let rho = (0..=t_max).map(|t| lag_sum(&c, t) / ss).collect();
        Ok(AcfSeries { rho })
    }
}

/// Default lag cap: `min(n/4, 1000)`.
pub fn default_t_max(n: usize) -> usize {
    (n / 4).min(1000)
}

/// Lower clamp for τ_int.
pub const TAU_FLOOR: f64 = 0.1;

/// `tau_int = 1 + 2 Σ rho_t`, summed over lags `1..` until the first
/// negative autocorrelation or `t_max`, whichever comes first.
pub fn integrated_autocorrelation_time(samples: &[f64], t_max: usize) -> Result<f64> {
    let n = samples.len();
    if n < 10 {
        return Err(Error::invalid(format!(
            "need at least 10 samples for tau_int, got {n}"
        )));
    }
    if t_max >= n {
        return Err(Error::invalid(format!("t_max {t_max} must be below n = {n}")));
    }
    let (c, ss) = centered(samples)?;
    let mut tau = 1.0;
    for t in 1..=t_max {
        let rho = lag_sum(&c, t) / ss;
        if rho < 0.0 {
            break;
        }
        tau += 2.0 * rho;
    }
    Ok(tau.max(TAU_FLOOR))
}

/// `n / tau_int` using the default lag cap.
pub fn effective_sample_size(samples: &[f64]) -> Result<f64> {
    let tau = integrated_autocorrelation_time(samples, default_t_max(samples.len()))?;
    Ok(samples.len() as f64 / tau)
}

/// Unbiased sample variance.
pub fn sample_variance(samples: &[f64]) -> Result<f64> {
    let (_, ss) = centered(samples)?;
    Ok(ss / (samples.len() - 1) as f64)
}

/// Variance of the chain mean under a wall-clock budget `budget`:
/// `(sigma² / T) · (m·w_z + w_theta) · tau_int`.
pub fn asymptotic_variance(
    samples: &[f64],
    batch_size: usize,
    w_z: f64,
    w_theta: f64,
    budget: f64,
) -> Result<f64> {
    if !(budget > 0.0) || !(w_z > 0.0) || !(w_theta > 0.0) {
        return Err(Error::invalid(format!(
            "budget, w_z and w_theta must be positive (got {budget}, {w_z}, {w_theta})"
        )));
    }
    let sigma2 = sample_variance(samples)?;
    let tau = integrated_autocorrelation_time(samples, default_t_max(samples.len()))?;
    Ok(sigma2 / budget * (batch_size as f64 * w_z + w_theta) * tau)
}

/// Estimated potential scale reduction over `J >= 2` equal-length chains.
///
/// `W` is the mean within-chain variance, `B = n · var(chain means)`, and
/// the result is `sqrt(((n-1)/n · W + B/n) / W)`.
pub fn epsr(chains: &[Vec<f64>]) -> Result<f64> {
    let j = chains.len();
    if j < 2 {
        return Err(Error::invalid(format!("EPSR needs at least 2 chains, got {j}")));
    }
    let n = chains[0].len();
    if n < 10 {
        return Err(Error::invalid(format!("EPSR needs chains of length >= 10, got {n}")));
    }
    if let Some(c) = chains.iter().find(|c| c.len() != n) {
        return Err(Error::invalid(format!(
            "chains differ in length ({} vs {n})",
            c.len()
        )));
    }
    let mut means = Vec::with_capacity(j);
    let mut within = 0.0;
    for c in chains {
        if let Some(x) = c.iter().find(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample {x}")));
        }
        let m = mean(c);
        within += c.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
        means.push(m);
    }
    let w = within / j as f64;
    if !(w > 0.0) {
        return Err(Error::DegenerateSeries("every chain is constant".into()));
    }
    let grand = mean(&means);
    let nf = n as f64;
    let b = nf * means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>() / (j - 1) as f64;
    let var_plus = (nf - 1.0) / nf * w + b / nf;
    Ok((var_plus / w).sqrt())
}

/// Diagnostics for one batch size.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsReport {
    /// `None` when the trace's batch size is unknown.
    pub batch_size: Option<usize>,
    pub tau_int: f64,
    pub ess: f64,
    pub sigma2: f64,
    pub epsr: Option<f64>,
    pub objective: Option<f64>,
}

impl DiagnosticsReport {
    /// Single-chain report; `chains` beyond the first feed EPSR only.
    pub fn from_chains(batch_size: Option<usize>, chains: &[Vec<f64>], t_max: Option<usize>) -> Result<Self> {
        let first = chains
            .first()
            .ok_or_else(|| Error::invalid("no chains to diagnose"))?;
        let t_max = t_max.unwrap_or_else(|| default_t_max(first.len()));
        let tau_int = integrated_autocorrelation_time(first, t_max)?;
        let sigma2 = sample_variance(first)?;
        let epsr = if chains.len() >= 2 {
            Some(epsr(chains)?)
        } else {
            None
        };
        Ok(DiagnosticsReport {
            batch_size,
            tau_int,
            ess: first.len() as f64 / tau_int,
            sigma2,
            epsr,
            objective: None,
        })
    }

    pub const CSV_HEADER: &'static str = "m,tau_int,ess,sigma2,epsr,objective";

    pub fn write_csv_row<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
        writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{},{}",
            self.batch_size.map(|m| m.to_string()).unwrap_or_default(),
            self.tau_int,
            self.ess,
            self.sigma2,
            opt(self.epsr),
            opt(self.objective)
        )
    }
}
