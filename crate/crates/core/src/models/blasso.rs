//! Bayesian lasso with a probit link.
//!
//! The Laplace prior on `w` is written as a scale mixture,
//! `w | sigma², tau² ~ N(0, sigma² D_tau)` with exponential mixing, which
//! makes every full conditional standard:
//!
//! * local: `z_i | w ~ N(x_iᵀw, 1)` truncated to the side of `y_i`;
//! * global, in order:
//!   `sigma² ~ IG((n-1)/2 + d/2, ½‖z - Xw‖² + ½ wᵀD_tau⁻¹w)`,
//!   `1/tau_j² ~ IN(sqrt(lambda² sigma² / w_j²), lambda²)`,
//!   `w ~ N(A⁻¹Xᵀz, sigma² A⁻¹)` with `A = XᵀX + D_tau⁻¹`.
//!
//! In [`BlassoMode::Linear`] there are no latents and `y` itself is the
//! continuous response in the global block.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{dot, gram, Cholesky};
use crate::rng::{
    sample_inverse_gamma, sample_inverse_gaussian, sample_mvn_precision, sample_truncated_normal,
    HalfLine, RandomStream,
};
use crate::scan::GibbsModel;

/// Design matrix, responses and (for synthetic data) the true weights.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionData {
    n: usize,
    d: usize,
    /// row-major n×d
    x: Vec<f64>,
    y: Vec<f64>,
    w_true: Option<Vec<f64>>,
}

impl RegressionData {
    pub fn new(x: Vec<f64>, n: usize, d: usize, y: Vec<f64>, w_true: Option<Vec<f64>>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::invalid("need at least one row and one column"));
        }
        if x.len() != n * d {
            return Err(Error::invalid(format!(
                "design has {} entries, expected {n}x{d}",
                x.len()
            )));
        }
        if y.len() != n {
            return Err(Error::invalid(format!("{} labels for {n} rows", y.len())));
        }
        if let Some(w) = &w_true {
            if w.len() != d {
                return Err(Error::invalid(format!("w_true has {} entries, expected {d}", w.len())));
            }
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite value in regression data"));
        }
        Ok(RegressionData { n, d, x, y, w_true })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn w_true(&self) -> Option<&[f64]> {
        self.w_true.as_deref()
    }

    pub fn with_w_true(mut self, w: Option<Vec<f64>>) -> Result<Self> {
        if let Some(w) = &w {
            if w.len() != self.d {
                return Err(Error::invalid(format!(
                    "w_true has {} entries, expected {}",
                    w.len(),
                    self.d
                )));
            }
        }
        self.w_true = w;
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BlassoMode {
    /// Binary labels in {-1, +1} with truncated-normal latents.
    #[default]
    Probit,
    /// Continuous responses, no latents.
    Linear,
}

impl std::str::FromStr for BlassoMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "probit" => Ok(BlassoMode::Probit),
            "linear" => Ok(BlassoMode::Linear),
            other => Err(Error::invalid(format!("unknown lasso mode `{other}`"))),
        }
    }
}

/// Replacement for an exactly-zero coefficient inside the `tau` update.
const ZERO_WEIGHT_NUDGE: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct BlassoState {
    data: Arc<RegressionData>,
    mode: BlassoMode,
    lambda: f64,
    pub w: Vec<f64>,
    pub sigma2: f64,
    pub tau2: Vec<f64>,
    /// Probit latents; empty in linear mode.
    z: Vec<f64>,
    xtx: Vec<f64>,
    /// `Xᵀr` and `‖r‖²` for the current response, kept in step with `z`.
    xtr: Vec<f64>,
    rr: f64,
    /// Local updates since `xtr` and `rr` were last recomputed exactly.
    since_sync: usize,
    zero_weight_nudges: u64,
}

/// Exact recomputation of the running response sums every this many sweeps.
const RESYNC_SWEEPS: usize = 64;

impl BlassoState {
    /// Starts at `w = 0`, `sigma² = 1`, `tau² = 1`, `z_i = y_i`.
    pub fn new(data: Arc<RegressionData>, mode: BlassoMode, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(format!("lambda must be positive, got {lambda}")));
        }
        let (n, d) = (data.n(), data.d());
        let z = match mode {
            BlassoMode::Probit => {
                if let Some(v) = data.y().iter().find(|v| **v != 1.0 && **v != -1.0) {
                    return Err(Error::invalid(format!("probit labels must be ±1, found {v}")));
                }
                data.y().to_vec()
            }
            BlassoMode::Linear => Vec::new(),
        };
        let xtx = gram(data.x(), n, d);
        let mut state = BlassoState {
            data,
            mode,
            lambda,
            w: vec![0.0; d],
            sigma2: 1.0,
            tau2: vec![1.0; d],
            z,
            xtx,
            xtr: vec![0.0; d],
            rr: 0.0,
            since_sync: 0,
            zero_weight_nudges: 0,
        };
        state.resync();
        Ok(state)
    }

    /// Probit latents; empty in linear mode.
    pub fn latents(&self) -> &[f64] {
        &self.z
    }

    /// Replaces the probit latents.
    pub fn set_latents(&mut self, z: Vec<f64>) -> Result<()> {
        if self.mode == BlassoMode::Linear || z.len() != self.data.n() {
            return Err(Error::invalid(format!(
                "expected {} probit latents, got {}",
                self.data.n(),
                z.len()
            )));
        }
        self.z = z;
        self.resync();
        Ok(())
    }

    fn resync(&mut self) {
        let d = self.data.d();
        let mut xtr = vec![0.0; d];
        let mut rr = 0.0;
        for (i, &ri) in self.response().iter().enumerate() {
            rr += ri * ri;
            for (acc, &xij) in xtr.iter_mut().zip(self.data.row(i)) {
                *acc += xij * ri;
            }
        }
        self.xtr = xtr;
        self.rr = rr;
        self.since_sync = 0;
    }

    pub fn data(&self) -> &RegressionData {
        &self.data
    }

    pub fn mode(&self) -> BlassoMode {
        self.mode
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// How often an exactly-zero `w_j` had to be nudged in the `tau` draw.
    pub fn zero_weight_nudges(&self) -> u64 {
        self.zero_weight_nudges
    }

    fn response(&self) -> &[f64] {
        match self.mode {
            BlassoMode::Probit => &self.z,
            BlassoMode::Linear => self.data.y(),
        }
    }

    /// `(Xᵀr, ‖r - Xw‖²)` for the current response `r`.
    fn response_stats(&self) -> (Vec<f64>, f64) {
        let d = self.data.d();
        let r = self.response();
        let mut xtr = vec![0.0; d];
        let mut rss = 0.0;
        for (i, &ri) in r.iter().enumerate() {
            let row = self.data.row(i);
            let fit = dot(row, &self.w);
            rss += (ri - fit) * (ri - fit);
            for (acc, &xij) in xtr.iter_mut().zip(row) {
                *acc += xij * ri;
            }
        }
        (xtr, rss)
    }

    /// Factor of `A = XᵀX + D_tau⁻¹`.
    pub fn precision_factor(&self) -> Result<Cholesky> {
        let d = self.data.d();
        let mut a = self.xtx.clone();
        for j in 0..d {
            a[j * d + j] += 1.0 / self.tau2[j];
        }
        Cholesky::new(&a, d)
    }

    /// Mean `A⁻¹Xᵀr` of the `w` full conditional at the current state.
    pub fn weight_conditional_mean(&self) -> Result<Vec<f64>> {
        let (xtr, _) = self.response_stats();
        Ok(self.precision_factor()?.solve(&xtr))
    }

    /// Resamples probit latent `i`. No-op in linear mode.
    pub fn local_update(&mut self, i: usize, rng: &mut RandomStream) {
        if self.mode == BlassoMode::Linear {
            return;
        }
        let mean = dot(self.data.row(i), &self.w);
        let side = if self.data.y()[i] >= 0.0 {
            HalfLine::NonNegative
        } else {
            HalfLine::NonPositive
        };
        let old = self.z[i];
        let new = sample_truncated_normal(mean, 1.0, side, rng);
        self.z[i] = new;
        let delta = new - old;
        for (acc, &xij) in self.xtr.iter_mut().zip(self.data.row(i)) {
            *acc += xij * delta;
        }
        self.rr += new * new - old * old;
        self.since_sync += 1;
        if self.since_sync >= RESYNC_SWEEPS * self.data.n() {
            self.resync();
        }
    }

    /// `(Xᵀr, ‖r - Xw‖²)` from the running sums, O(d²).
    fn cached_response_stats(&self) -> (Vec<f64>, f64) {
        let d = self.data.d();
        let w = &self.w;
        let mut quad = 0.0;
        for r in 0..d {
            for c in 0..d {
                quad += w[r] * self.xtx[r * d + c] * w[c];
            }
        }
        let rss = (self.rr - 2.0 * dot(w, &self.xtr) + quad).max(0.0);
        (self.xtr.clone(), rss)
    }

    /// Draws `sigma²`, then `tau²`, then `w`.
    pub fn global_update(&mut self, rng: &mut RandomStream) -> Result<()> {
        let (n, d) = (self.data.n() as f64, self.data.d());
        let (xtr, rss) = self.cached_response_stats();

        let penalty: f64 = self
            .w
            .iter()
            .zip(&self.tau2)
            .map(|(w, t)| w * w / t)
            .sum();
        let shape = (n - 1.0) / 2.0 + d as f64 / 2.0;
        let scale = 0.5 * rss + 0.5 * penalty;
        if !(shape > 0.0) || !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::Numeric(format!(
                "sigma2 conditional has shape {shape}, scale {scale}"
            )));
        }
        self.sigma2 = sample_inverse_gamma(shape, scale, rng);

        let lambda2 = self.lambda * self.lambda;
        for j in 0..d {
            let mut wj = self.w[j];
            if wj == 0.0 {
                wj = ZERO_WEIGHT_NUDGE;
                self.zero_weight_nudges += 1;
            }
            let mu = (lambda2 * self.sigma2 / (wj * wj)).sqrt();
            if !mu.is_finite() {
                return Err(Error::Numeric(format!("tau mean for w[{j}] = {wj} is {mu}")));
            }
            let inv = sample_inverse_gaussian(mu, lambda2, rng);
            self.tau2[j] = (1.0 / inv).clamp(f64::MIN_POSITIVE, f64::MAX);
        }

        let chol = self.precision_factor()?;
        let mean = chol.solve(&xtr);
        let w = sample_mvn_precision(&mean, &chol, self.sigma2.sqrt(), rng);
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite weight draw {w:?}")));
        }
        self.w = w;
        Ok(())
    }

    /// `‖w - w_true‖²` when the truth is known, otherwise `w[0]`.
    pub fn summary(&self) -> f64 {
        match self.data.w_true() {
            Some(truth) => self
                .w
                .iter()
                .zip(truth)
                .map(|(a, b)| (a - b) * (a - b))
                .sum(),
            None => self.w[0],
        }
    }

    /// Unnormalized log posterior of `(w, sigma², tau², z)`.
    pub fn log_joint(&self) -> f64 {
        let n = self.data.n() as f64;
        let d = self.data.d() as f64;
        let (_, rss) = self.response_stats();
        let lik = match self.mode {
            BlassoMode::Probit => -0.5 * rss,
            BlassoMode::Linear => -0.5 * (n - 1.0) * self.sigma2.ln() - rss / (2.0 * self.sigma2),
        };
        let lambda2 = self.lambda * self.lambda;
        let prior_w: f64 = self
            .w
            .iter()
            .zip(&self.tau2)
            .map(|(w, t)| -0.5 * t.ln() - w * w / (2.0 * self.sigma2 * t))
            .sum::<f64>()
            - 0.5 * d * self.sigma2.ln();
        let prior_tau: f64 = self.tau2.iter().map(|t| -0.5 * lambda2 * t).sum();
        lik + prior_w + prior_tau - self.sigma2.ln()
    }

    /// True when every latent sits on its label's side of zero.
    pub fn signs_consistent(&self) -> bool {
        self.mode == BlassoMode::Linear
            || self
                .z
                .iter()
                .zip(self.data.y())
                .all(|(z, y)| if *y >= 0.0 { *z >= 0.0 } else { *z <= 0.0 })
    }
}

impl GibbsModel for BlassoState {
    fn num_local_units(&self) -> usize {
        self.data.n()
    }

    fn local_update(&mut self, index: usize, rng: &mut RandomStream) -> Result<()> {
        BlassoState::local_update(self, index, rng);
        if cfg!(debug_assertions) && self.mode == BlassoMode::Probit {
            let (z, y) = (self.z[index], self.data.y()[index]);
            debug_assert!(if y >= 0.0 { z >= 0.0 } else { z <= 0.0 });
        }
        Ok(())
    }

    fn global_update(&mut self, rng: &mut RandomStream) -> Result<()> {
        BlassoState::global_update(self, rng)
    }

    fn summary(&self) -> f64 {
        BlassoState::summary(self)
    }

    fn log_joint(&self) -> f64 {
        BlassoState::log_joint(self)
    }
}
