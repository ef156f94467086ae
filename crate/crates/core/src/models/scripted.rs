//! A model with prescribed costs and autocorrelation, for checking the
//! scheduler against a known answer.
//!
//! Each local update advances a [`ManualClock`] by `w_z` and each global
//! update by `w_theta`. The summary is a stationary Gaussian AR(1) series
//! whose coefficient is chosen so that its integrated autocorrelation time
//! is `tau_scale / m`, where `m` is the number of local updates since the
//! previous global update. Whenever `m` changes the series restarts from a
//! stream keyed on `(seed, m)`, so an arm's trace depends only on its
//! batch size and not on the order in which arms are visited.

use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::scan::{GibbsModel, ManualClock};

use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone)]
pub struct ScriptedModel {
    units: usize,
    tau_scale: f64,
    w_z: f64,
    w_theta: f64,
    seed: u64,
    clock: ManualClock,
    pending: usize,
    current_m: usize,
    noise: RandomStream,
    x: f64,
}

impl ScriptedModel {
    pub fn new(
        units: usize,
        tau_scale: f64,
        w_z: f64,
        w_theta: f64,
        seed: u64,
        clock: ManualClock,
    ) -> Result<Self> {
        if units == 0 {
            return Err(Error::invalid("scripted model needs at least one unit"));
        }
        for (name, v) in [("tau_scale", tau_scale), ("w_z", w_z), ("w_theta", w_theta)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(ScriptedModel {
            units,
            tau_scale,
            w_z,
            w_theta,
            seed,
            clock,
            pending: 0,
            current_m: 0,
            noise: RandomStream::new(seed, 0),
            x: 0.0,
        })
    }

    /// `max(tau_scale / m, 1)`.
    pub fn tau(&self, m: usize) -> f64 {
        (self.tau_scale / m as f64).max(1.0)
    }

    /// AR(1) coefficient with `(1+φ)/(1-φ) = tau(m)`.
    pub fn phi(&self, m: usize) -> f64 {
        let t = self.tau(m);
        (t - 1.0) / (t + 1.0)
    }

    pub fn clock(&self) -> &ManualClock {
        &self.clock
    }
}

impl GibbsModel for ScriptedModel {
    fn num_local_units(&self) -> usize {
        self.units
    }

    fn local_update(&mut self, _index: usize, _rng: &mut RandomStream) -> Result<()> {
        self.clock.advance(self.w_z);
        self.pending += 1;
        Ok(())
    }

    fn global_update(&mut self, _rng: &mut RandomStream) -> Result<()> {
        self.clock.advance(self.w_theta);
        let m = self.pending.max(1);
        self.pending = 0;
        if m != self.current_m {
            self.current_m = m;
            self.noise = RandomStream::new(self.seed, m as u64 + 1);
            self.x = self.noise.sample(StandardNormal);
            return Ok(());
        }
        let phi = self.phi(m);
        let e: f64 = self.noise.sample(StandardNormal);
        self.x = phi * self.x + (1.0 - phi * phi).sqrt() * e;
        Ok(())
    }

    fn summary(&self) -> f64 {
        self.x
    }

    fn log_joint(&self) -> f64 {
        -0.5 * self.x * self.x
    }
}
