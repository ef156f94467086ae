//! Seeded random streams and the distribution samplers used by the models.
//!
//! Parameterization conventions, since they are easy to mix up:
//!
//! * [`sample_inverse_gamma`]`(shape, scale)`: `1/X ~ Gamma(shape, rate = scale)`,
//!   so `E[X] = scale / (shape - 1)`.
//! * [`sample_inverse_gaussian`]`(mean, shape)`: mean `mu`, shape `lambda`,
//!   variance `mu³ / lambda`.
//! * [`sample_mvn`] takes a covariance; [`sample_mvn_precision`] takes a
//!   Cholesky factor of the precision matrix.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};
use crate::linalg::Cholesky;

/// A reproducible random stream identified by `(seed, stream)`.
///
/// Streams with the same seed and different stream ids are independent
/// ChaCha streams; chains use the chain index as stream id.
#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        RandomStream {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Independent stream derived from this one's seed.
    pub fn fork(&self, stream: u64) -> Self {
        RandomStream::new(self.seed, stream)
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Which half-line a truncated normal is restricted to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HalfLine {
    NonNegative,
    NonPositive,
}

/// Standardized cutoff above which the exponential-proposal sampler is used.
const TAIL_SWITCH: f64 = 5.0;
const MAX_TAIL_TRIES: usize = 10_000;

/// Draws from `N(mu, sigma²)` conditioned on the half-line `side`.
pub fn sample_truncated_normal<R: Rng + ?Sized>(
    mu: f64,
    sigma: f64,
    side: HalfLine,
    rng: &mut R,
) -> f64 {
    debug_assert!(sigma > 0.0);
    match side {
        HalfLine::NonNegative => {
            let y = standard_normal_above(-mu / sigma, rng);
            (mu + sigma * y).max(0.0)
        }
        HalfLine::NonPositive => {
            let y = standard_normal_above(mu / sigma, rng);
            (mu - sigma * y).min(0.0)
        }
    }
}

/// `Y ~ N(0, 1)` conditioned on `Y >= a`.
fn standard_normal_above<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    if a < TAIL_SWITCH {
        // Invert the upper tail Q(y) = P(Y > y) so that deep negative `a`
        // and moderate positive `a` both keep full precision.
        let tail = 0.5 * erfc(a / std::f64::consts::SQRT_2);
        let u = 1.0 - rng.random::<f64>();
        let y = std::f64::consts::SQRT_2 * erfc_inv(2.0 * u * tail);
        if y.is_finite() {
            y.max(a)
        } else {
            a
        }
    } else {
        // Robert (1995): translated exponential proposal with optimal rate.
        let rate = 0.5 * (a + (a * a + 4.0).sqrt());
        for _ in 0..MAX_TAIL_TRIES {
            let e: f64 = rng.sample(Exp1);
            let z = a + e / rate;
            let u: f64 = rng.random();
            if u <= (-0.5 * (z - rate) * (z - rate)).exp() {
                return z;
            }
        }
        a + 1.0 / rate
    }
}

/// Inverse Gaussian draw by the Michael–Schucany–Haas transformation.
pub fn sample_inverse_gaussian<R: Rng + ?Sized>(mu: f64, lambda: f64, rng: &mut R) -> f64 {
    debug_assert!(mu > 0.0 && lambda > 0.0);
    let n: f64 = rng.sample(StandardNormal);
    let y = n * n;
    if y == 0.0 {
        return mu;
    }
    let my = mu * y;
    let root = (4.0 * mu * lambda * y + my * my).sqrt();
    // x = mu + mu²y/(2λ) - mu/(2λ)·root, rewritten without cancellation.
    let x = 4.0 * mu * mu * lambda * y / ((root + my) * (root + my));
    let x = if x > 0.0 { x } else { f64::MIN_POSITIVE };
    let u: f64 = rng.random();
    if u <= mu / (mu + x) {
        x
    } else {
        mu * mu / x
    }
}

/// `Gamma(shape, rate = 1)` draw.
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    Gamma::new(shape, 1.0)
        .expect("gamma shape must be positive and finite")
        .sample(rng)
}

/// `ln` of a `Gamma(shape, 1)` draw, accurate for tiny shapes where the
/// draw itself underflows.
fn sample_log_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape >= 1.0 {
        sample_gamma(shape, rng).ln()
    } else {
        let u = 1.0 - rng.random::<f64>();
        sample_gamma(shape + 1.0, rng).ln() + u.ln() / shape
    }
}

/// Inverse gamma draw: `1/X ~ Gamma(shape, rate = scale)`.
pub fn sample_inverse_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    debug_assert!(shape > 0.0 && scale > 0.0);
    let g = sample_gamma(shape, rng);
    let x = scale / g;
    if x.is_finite() {
        x
    } else {
        f64::MAX
    }
}

/// Multivariate normal draw with the given covariance.
pub fn sample_mvn<R: Rng + ?Sized>(mean: &[f64], cov: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    let chol = Cholesky::new(cov, mean.len())?;
    let eps: Vec<f64> = (0..mean.len()).map(|_| rng.sample(StandardNormal)).collect();
    let noise = chol.mul_lower(&eps);
    Ok(mean.iter().zip(noise).map(|(m, e)| m + e).collect())
}

/// Draws `N(mean, scale² · P⁻¹)` given the Cholesky factor of the precision `P`.
pub fn sample_mvn_precision<R: Rng + ?Sized>(
    mean: &[f64],
    precision: &Cholesky,
    scale: f64,
    rng: &mut R,
) -> Vec<f64> {
    let mut eps: Vec<f64> = (0..mean.len()).map(|_| rng.sample(StandardNormal)).collect();
    precision.solve_upper_in_place(&mut eps);
    mean.iter().zip(eps).map(|(m, e)| m + scale * e).collect()
}

/// Dirichlet draw. Components are nonnegative and sum to one.
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    let mut out = vec![0.0; alpha.len()];
    sample_dirichlet_into(alpha, rng, &mut out)?;
    Ok(out)
}

/// Dirichlet draw written into `out` (same length as `alpha`).
pub fn sample_dirichlet_into<R: Rng + ?Sized>(
    alpha: &[f64],
    rng: &mut R,
    out: &mut [f64],
) -> Result<()> {
    if alpha.is_empty() {
        return Err(Error::invalid("dirichlet needs at least one component"));
    }
    if let Some(a) = alpha.iter().find(|a| !(**a > 0.0) || !a.is_finite()) {
        return Err(Error::invalid(format!(
            "dirichlet concentration must be positive, got {a}"
        )));
    }
    let mut sum = 0.0;
    for (o, &a) in out.iter_mut().zip(alpha) {
        *o = sample_gamma(a, rng);
        sum += *o;
    }
    if sum > 0.0 && sum.is_finite() {
        out.iter_mut().for_each(|o| *o /= sum);
        return Ok(());
    }
    // Every gamma draw underflowed: redo in log space.
    for (o, &a) in out.iter_mut().zip(alpha) {
        *o = sample_log_gamma(a, rng);
    }
    normalize_log_in_place(out);
    Ok(())
}

fn normalize_log_in_place(v: &mut [f64]) {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    v.iter_mut().for_each(|x| *x /= sum);
}

/// Draws an index with probability proportional to `weights`.
pub fn sample_categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<usize> {
    let mut total = 0.0;
    for &w in weights {
        if !(w >= 0.0) || !w.is_finite() {
            return Err(Error::invalid(format!("categorical weight {w} is invalid")));
        }
        total += w;
    }
    if !(total > 0.0) {
        return Err(Error::invalid("categorical weights are all zero"));
    }
    let mut u = rng.random::<f64>() * total;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            if u < w {
                return Ok(i);
            }
            u -= w;
            last_positive = i;
        }
    }
    Ok(last_positive)
}

/// Categorical draw from unnormalized log weights. Entries equal to
/// `-inf` get zero mass.
pub fn sample_categorical_log<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> Result<usize> {
    let max = log_weights
        .iter()
        .cloned()
        .filter(|x| !x.is_nan())
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::invalid("categorical log weights have no finite entry"));
    }
    let weights: Vec<f64> = log_weights
        .iter()
        .map(|&lw| if lw.is_nan() { 0.0 } else { (lw - max).exp() })
        .collect();
    sample_categorical(&weights, rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn streams_reproduce_and_differ() {
        let a: Vec<u64> = {
            let mut r = RandomStream::new(7, 0);
            (0..8).map(|_| r.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut r = RandomStream::new(7, 0);
            (0..8).map(|_| r.next_u64()).collect()
        };
        let c: Vec<u64> = {
            let mut r = RandomStream::new(7, 1);
            (0..8).map(|_| r.next_u64()).collect()
        };
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn truncated_normal_respects_side() {
        let mut rng = RandomStream::new(1, 0);
        for &mu in &[-12.0, -8.0, -3.0, 0.0, 3.0, 8.0, 12.0] {
            for _ in 0..2000 {
                let x = sample_truncated_normal(mu, 1.0, HalfLine::NonNegative, &mut rng);
                assert!(x >= 0.0 && x.is_finite(), "mu={mu} x={x}");
                let x = sample_truncated_normal(mu, 1.0, HalfLine::NonPositive, &mut rng);
                assert!(x <= 0.0 && x.is_finite(), "mu={mu} x={x}");
            }
        }
    }

    #[test]
    fn truncated_normal_large_mu_is_nearly_untruncated() {
        let mut rng = RandomStream::new(2, 0);
        let xs: Vec<f64> = (0..200_000)
            .map(|_| sample_truncated_normal(5.0, 1.0, HalfLine::NonNegative, &mut rng))
            .collect();
        let (mean, var) = moments(&xs);
        assert!((mean - 5.0).abs() < 0.01, "{mean}");
        assert!((var - 1.0).abs() < 0.02, "{var}");
    }

    #[test]
    fn inverse_gaussian_is_positive() {
        let mut rng = RandomStream::new(3, 0);
        for &(mu, lambda) in &[(1.0, 1.0), (1e-6, 1e6), (1e6, 1e-6), (5.0, 1e-3)] {
            for _ in 0..1000 {
                let x = sample_inverse_gaussian(mu, lambda, &mut rng);
                assert!(x > 0.0 && x.is_finite(), "mu={mu} lambda={lambda} x={x}");
            }
        }
    }

    #[test]
    fn inverse_gamma_support() {
        let mut rng = RandomStream::new(4, 0);
        for _ in 0..10_000 {
            assert!(sample_inverse_gamma(0.5, 1e-3, &mut rng) > 0.0);
        }
    }

    #[test]
    fn mvn_rejects_indefinite_covariance() {
        let mut rng = RandomStream::new(5, 0);
        let err = sample_mvn(&[0.0, 0.0], &[1.0, 3.0, 3.0, 1.0], &mut rng).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { pivot: 1 }));
    }

    #[test]
    fn dirichlet_sums_to_one_even_for_tiny_alpha() {
        let mut rng = RandomStream::new(6, 0);
        for alpha in [vec![1.0, 1.0, 1.0], vec![1e-3; 50], vec![1e6, 1.0]] {
            let p = sample_dirichlet(&alpha, &mut rng).unwrap();
            assert!(p.iter().all(|x| *x >= 0.0));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(sample_dirichlet(&[1.0, 0.0], &mut rng).is_err());
    }

    #[test]
    fn categorical_edge_cases() {
        let mut rng = RandomStream::new(8, 0);
        for _ in 0..1000 {
            assert_eq!(sample_categorical(&[1.0, 0.0, 0.0], &mut rng).unwrap(), 0);
            assert_eq!(sample_categorical(&[0.0, 0.0, 2.0], &mut rng).unwrap(), 2);
        }
        assert!(sample_categorical(&[0.0, 0.0], &mut rng).is_err());
        assert!(sample_categorical_log(&[f64::NEG_INFINITY], &mut rng).is_err());
        let i = sample_categorical_log(&[-800.0, 700.0, f64::NEG_INFINITY], &mut rng).unwrap();
        assert_eq!(i, 1);
    }
}
