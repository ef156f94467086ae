//! Dirichlet-process Gaussian mixture with a normal–inverse-Wishart base
//! measure.
//!
//! Local updates reassign one point under the Chinese-restaurant prior:
//! an existing cluster `k` gets weight `N_{k,-i} · p(x_i | k)` and a new
//! cluster gets `alpha · p(x_i)`, where `p(x_i)` is the NIW prior
//! predictive. In [`DpmmMode::Collapsed`] `p(x_i | k)` is the Student-t
//! posterior predictive of cluster `k`; in [`DpmmMode::Instantiated`] it is
//! `N(x_i | mu_k, Sigma_k)` and the global update redraws every cluster's
//! `(mu_k, Sigma_k)` from its NIW posterior.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::linalg::{invert_lower, Cholesky};
use crate::rng::{sample_categorical_log, sample_gamma, RandomStream};
use crate::scan::GibbsModel;

/// Row-major points with optional ground-truth labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PointData {
    n: usize,
    dim: usize,
    x: Vec<f64>,
    labels: Option<Vec<usize>>,
}

impl PointData {
    pub fn new(x: Vec<f64>, n: usize, dim: usize, labels: Option<Vec<usize>>) -> Result<Self> {
        if n == 0 || dim == 0 {
            return Err(Error::invalid("need at least one point of positive dimension"));
        }
        if x.len() != n * dim {
            return Err(Error::invalid(format!(
                "{} coordinates for {n} points of dimension {dim}",
                x.len()
            )));
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::invalid(format!("{} labels for {n} points", l.len())));
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite coordinate"));
        }
        Ok(PointData { n, dim, x, labels })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.x
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for i in 0..self.n {
            for (a, b) in m.iter_mut().zip(self.point(i)) {
                *a += b;
            }
        }
        m.iter_mut().for_each(|v| *v /= self.n as f64);
        m
    }

    /// Sample covariance (`1/(n-1)`; `1/n` for a single point).
    pub fn covariance(&self) -> Vec<f64> {
        let d = self.dim;
        let m = self.mean();
        let mut c = vec![0.0; d * d];
        for i in 0..self.n {
            let p = self.point(i);
            for r in 0..d {
                for s in 0..d {
                    c[r * d + s] += (p[r] - m[r]) * (p[s] - m[s]);
                }
            }
        }
        let denom = if self.n > 1 { (self.n - 1) as f64 } else { 1.0 };
        c.iter_mut().for_each(|v| *v /= denom);
        c
    }
}

/// Count, sum and raw second moment of a cluster's points.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterStats {
    pub count: usize,
    pub sum: Vec<f64>,
    /// Σ x xᵀ, row-major dim×dim.
    pub outer: Vec<f64>,
}

impl ClusterStats {
    pub fn empty(dim: usize) -> Self {
        ClusterStats {
            count: 0,
            sum: vec![0.0; dim],
            outer: vec![0.0; dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.sum.len()
    }

    pub fn add(&mut self, x: &[f64]) {
        self.update(x, 1.0);
        self.count += 1;
    }

    pub fn remove(&mut self, x: &[f64]) {
        debug_assert!(self.count > 0);
        self.update(x, -1.0);
        self.count -= 1;
        if self.count == 0 {
            self.sum.iter_mut().for_each(|v| *v = 0.0);
            self.outer.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    fn update(&mut self, x: &[f64], sign: f64) {
        let d = x.len();
        for r in 0..d {
            self.sum[r] += sign * x[r];
            for s in 0..d {
                self.outer[r * d + s] += sign * x[r] * x[s];
            }
        }
    }

    pub fn mean(&self) -> Option<Vec<f64>> {
        (self.count > 0).then(|| self.sum.iter().map(|v| v / self.count as f64).collect())
    }
}

/// Normal–inverse-Wishart hyperparameters `(m0, kappa0, nu0, Psi0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NiwPrior {
    pub mean: Vec<f64>,
    pub kappa: f64,
    pub nu: f64,
    /// row-major dim×dim
    pub scale: Vec<f64>,
}

impl NiwPrior {
    pub fn new(mean: Vec<f64>, kappa: f64, nu: f64, scale: Vec<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::invalid("NIW prior needs a positive dimension"));
        }
        if !(kappa > 0.0) {
            return Err(Error::invalid(format!("kappa0 must be positive, got {kappa}")));
        }
        if !(nu > d as f64 - 1.0) {
            return Err(Error::invalid(format!("nu0 must exceed dim - 1, got {nu}")));
        }
        Cholesky::new(&scale, d)?;
        Ok(NiwPrior {
            mean,
            kappa,
            nu,
            scale,
        })
    }

    /// `m0` = data mean, `Psi0` = data covariance.
    pub fn from_data(data: &PointData, kappa: f64, nu: f64) -> Result<Self> {
        NiwPrior::new(data.mean(), kappa, nu, data.covariance())
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Conjugate update with a cluster's statistics:
    /// `kappa_n = kappa0 + n`, `nu_n = nu0 + n`,
    /// `m_n = (kappa0 m0 + Σx) / kappa_n`,
    /// `Psi_n = Psi0 + Σxxᵀ + kappa0 m0 m0ᵀ - kappa_n m_n m_nᵀ`.
    pub fn posterior(&self, stats: &ClusterStats) -> NiwPosterior {
        let d = self.dim();
        let n = stats.count as f64;
        let kappa = self.kappa + n;
        let nu = self.nu + n;
        let mean: Vec<f64> = (0..d)
            .map(|r| (self.kappa * self.mean[r] + stats.sum[r]) / kappa)
            .collect();
        let mut scale = self.scale.clone();
        for r in 0..d {
            for s in 0..d {
                scale[r * d + s] += stats.outer[r * d + s] + self.kappa * self.mean[r] * self.mean[s]
                    - kappa * mean[r] * mean[s];
            }
        }
        // symmetrize away rounding
        for r in 0..d {
            for s in 0..r {
                let v = 0.5 * (scale[r * d + s] + scale[s * d + r]);
                scale[r * d + s] = v;
                scale[s * d + r] = v;
            }
        }
        NiwPosterior {
            mean,
            kappa,
            nu,
            scale,
        }
    }

    /// `ln p(X)` of the cluster's points with `(mu, Sigma)` integrated out.
    pub fn log_marginal_likelihood(&self, stats: &ClusterStats) -> Result<f64> {
        let d = self.dim();
        let post = self.posterior(stats);
        let n = stats.count as f64;
        let prior_chol = Cholesky::new(&self.scale, d)?;
        let post_chol = Cholesky::new(&post.scale, d)?;
        Ok(-0.5 * n * d as f64 * std::f64::consts::PI.ln()
            + ln_multivariate_gamma(post.nu / 2.0, d)
            - ln_multivariate_gamma(self.nu / 2.0, d)
            + 0.5 * self.nu * prior_chol.log_det()
            - 0.5 * post.nu * post_chol.log_det()
            + 0.5 * d as f64 * (self.kappa.ln() - post.kappa.ln()))
    }
}

fn ln_multivariate_gamma(a: f64, d: usize) -> f64 {
    let df = d as f64;
    0.25 * df * (df - 1.0) * std::f64::consts::PI.ln()
        + (0..d).map(|j| ln_gamma(a - 0.5 * j as f64)).sum::<f64>()
}

/// NIW parameters after conditioning on data.
#[derive(Debug, Clone, PartialEq)]
pub struct NiwPosterior {
    pub mean: Vec<f64>,
    pub kappa: f64,
    pub nu: f64,
    pub scale: Vec<f64>,
}

impl NiwPosterior {
    /// Multivariate Student-t predictive: `nu' = nu_n - d + 1` degrees of
    /// freedom, location `m_n`, shape `Psi_n (kappa_n + 1) / (kappa_n nu')`.
    pub fn predictive(&self) -> Result<StudentT> {
        let d = self.mean.len();
        let dof = self.nu - d as f64 + 1.0;
        let chol = Cholesky::new(&self.scale, d)?;
        let factor = (self.kappa + 1.0) / (self.kappa * dof);
        let df = d as f64;
        let log_norm = ln_gamma(0.5 * (dof + df))
            - ln_gamma(0.5 * dof)
            - 0.5 * df * (dof * std::f64::consts::PI).ln()
            - 0.5 * (chol.log_det() + df * factor.ln());
        Ok(StudentT {
            loc: self.mean.clone(),
            chol,
            factor,
            dof,
            log_norm,
        })
    }

    /// Draws `Sigma ~ IW(nu_n, Psi_n)` by the Bartlett decomposition, then
    /// `mu ~ N(m_n, Sigma / kappa_n)`.
    pub fn sample(&self, rng: &mut RandomStream) -> Result<Gaussian> {
        let d = self.mean.len();
        let psi = Cholesky::new(&self.scale, d)?;
        // A lower-triangular with chi draws on the diagonal
        let mut a = vec![0.0; d * d];
        for i in 0..d {
            let chi2 = 2.0 * sample_gamma(0.5 * (self.nu - i as f64), rng);
            a[i * d + i] = chi2.sqrt();
            for j in 0..i {
                a[i * d + j] = rng.sample(StandardNormal);
            }
        }
        // Sigma = (U A⁻ᵀ)(U A⁻ᵀ)ᵀ with Psi = U Uᵀ
        let a_inv = invert_lower(&a, d);
        let u = psi.lower();
        let mut b = vec![0.0; d * d];
        for r in 0..d {
            for c in 0..d {
                // (A⁻ᵀ)[k][c] = A⁻¹[c][k], nonzero for k <= c
                b[r * d + c] = (0..=r.min(c)).map(|k| u[r * d + k] * a_inv[c * d + k]).sum();
            }
        }
        let mut cov = vec![0.0; d * d];
        for r in 0..d {
            for c in 0..=r {
                let v: f64 = (0..d).map(|k| b[r * d + k] * b[c * d + k]).sum();
                cov[r * d + c] = v;
                cov[c * d + r] = v;
            }
        }
        let chol = Cholesky::new(&cov, d)?;
        let eps: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let shift = chol.mul_lower(&eps);
        let s = self.kappa.sqrt();
        let mean = self.mean.iter().zip(shift).map(|(m, e)| m + e / s).collect();
        Ok(Gaussian::from_parts(mean, cov, chol))
    }
}

/// Multivariate Student-t with a cached factorization.
#[derive(Debug, Clone)]
pub struct StudentT {
    loc: Vec<f64>,
    chol: Cholesky,
    factor: f64,
    dof: f64,
    log_norm: f64,
}

impl StudentT {
    pub fn log_density(&self, x: &[f64]) -> f64 {
        let d = self.loc.len() as f64;
        let delta: Vec<f64> = x.iter().zip(&self.loc).map(|(a, b)| a - b).collect();
        let maha = self.chol.inv_quad_form(&delta) / self.factor;
        self.log_norm - 0.5 * (self.dof + d) * (maha / self.dof).ln_1p()
    }

    pub fn dof(&self) -> f64 {
        self.dof
    }
}

/// Gaussian with a cached Cholesky factor of its covariance.
#[derive(Debug, Clone)]
pub struct Gaussian {
    pub mean: Vec<f64>,
    pub cov: Vec<f64>,
    chol: Cholesky,
    log_norm: f64,
}

impl Gaussian {
    pub fn new(mean: Vec<f64>, cov: Vec<f64>) -> Result<Self> {
        let chol = Cholesky::new(&cov, mean.len())?;
        Ok(Self::from_parts(mean, cov, chol))
    }

    fn from_parts(mean: Vec<f64>, cov: Vec<f64>, chol: Cholesky) -> Self {
        let d = mean.len() as f64;
        let log_norm = -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + chol.log_det());
        Gaussian {
            mean,
            cov,
            chol,
            log_norm,
        }
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let delta: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        self.log_norm - 0.5 * self.chol.inv_quad_form(&delta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DpmmMode {
    Collapsed,
    #[default]
    Instantiated,
}

impl std::str::FromStr for DpmmMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "collapsed" => Ok(DpmmMode::Collapsed),
            "instantiated" => Ok(DpmmMode::Instantiated),
            other => Err(Error::invalid(format!("unknown mixture mode `{other}`"))),
        }
    }
}

pub type ClusterId = u64;

#[derive(Debug, Clone)]
pub struct Cluster {
    pub stats: ClusterStats,
    /// Present only in instantiated mode.
    pub params: Option<Gaussian>,
    /// Student-t predictive under `stats`, kept current in collapsed mode.
    predictive: Option<StudentT>,
}

impl Cluster {
    fn empty(dim: usize) -> Self {
        Cluster {
            stats: ClusterStats::empty(dim),
            params: None,
            predictive: None,
        }
    }
}

/// Target of a CRP draw for one point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Seat {
    Existing(ClusterId),
    New,
}

#[derive(Debug, Clone)]
pub struct DpmmState {
    data: Arc<PointData>,
    prior: NiwPrior,
    prior_predictive: StudentT,
    alpha: f64,
    mode: DpmmMode,
    assignments: Vec<ClusterId>,
    clusters: BTreeMap<ClusterId, Cluster>,
    next_id: ClusterId,
}

impl DpmmState {
    /// All points in one cluster. In instantiated mode, call
    /// [`DpmmState::instantiate`] before running.
    pub fn single_cluster(
        data: Arc<PointData>,
        prior: NiwPrior,
        alpha: f64,
        mode: DpmmMode,
    ) -> Result<Self> {
        let n = data.n();
        Self::with_assignments(data, prior, alpha, mode, &vec![0; n])
    }

    /// Starts from the given labels (any integers; equal labels share a
    /// cluster).
    pub fn with_assignments(
        data: Arc<PointData>,
        prior: NiwPrior,
        alpha: f64,
        mode: DpmmMode,
        labels: &[usize],
    ) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::invalid(format!("alpha must be positive, got {alpha}")));
        }
        if prior.dim() != data.dim() {
            return Err(Error::invalid(format!(
                "prior dimension {} does not match data dimension {}",
                prior.dim(),
                data.dim()
            )));
        }
        if labels.len() != data.n() {
            return Err(Error::invalid(format!(
                "{} labels for {} points",
                labels.len(),
                data.n()
            )));
        }
        let prior_predictive = prior.posterior(&ClusterStats::empty(data.dim())).predictive()?;
        let mut state = DpmmState {
            data,
            prior,
            prior_predictive,
            alpha,
            mode,
            assignments: Vec::new(),
            clusters: BTreeMap::new(),
            next_id: 0,
        };
        let mut ids: BTreeMap<usize, ClusterId> = BTreeMap::new();
        for (i, &l) in labels.iter().enumerate() {
            let id = *ids.entry(l).or_insert_with(|| {
                let id = state.next_id;
                state.next_id += 1;
                id
            });
            state.assignments.push(id);
            state
                .clusters
                .entry(id)
                .or_insert_with(|| Cluster::empty(state.data.dim()))
                .stats
                .add(state.data.point(i));
        }
        let ids: Vec<ClusterId> = state.clusters.keys().copied().collect();
        for id in ids {
            state.refresh_predictive(id)?;
        }
        Ok(state)
    }

    /// Sequential seeding: points are added one at a time in random order,
    /// each drawn from the collapsed CRP conditional given the points
    /// already placed.
    pub fn sequential(
        data: Arc<PointData>,
        prior: NiwPrior,
        alpha: f64,
        mode: DpmmMode,
        rng: &mut RandomStream,
    ) -> Result<Self> {
        use rand::seq::SliceRandom;
        let mut state = Self::with_assignments(data.clone(), prior, alpha, mode, &vec![0; data.n()])?;
        state.clusters.clear();
        state.next_id = 0;
        let mut order: Vec<usize> = (0..data.n()).collect();
        order.shuffle(rng);
        let mut log_w = Vec::new();
        let mut ids = Vec::new();
        for &i in &order {
            let x = data.point(i);
            log_w.clear();
            ids.clear();
            for (&id, c) in &state.clusters {
                let ll = match &c.predictive {
                    Some(p) => p.log_density(x),
                    None => state.prior.posterior(&c.stats).predictive()?.log_density(x),
                };
                log_w.push((c.stats.count as f64).ln() + ll);
                ids.push(Seat::Existing(id));
            }
            log_w.push(state.alpha.ln() + state.prior_predictive.log_density(x));
            ids.push(Seat::New);
            let pick = ids[sample_categorical_log(&log_w, rng)?];
            let id = state.seat(pick);
            state.clusters.get_mut(&id).unwrap().stats.add(x);
            state.refresh_predictive(id)?;
            state.assignments[i] = id;
        }
        if mode == DpmmMode::Instantiated {
            state.instantiate(rng)?;
        }
        Ok(state)
    }

    /// Draws `(mu_k, Sigma_k)` for every cluster (instantiated mode only).
    pub fn instantiate(&mut self, rng: &mut RandomStream) -> Result<()> {
        if self.mode != DpmmMode::Instantiated {
            return Ok(());
        }
        for (id, c) in self.clusters.iter_mut() {
            let post = self.prior.posterior(&c.stats);
            c.params = Some(post.sample(rng).map_err(|e| with_cluster(e, *id))?);
        }
        Ok(())
    }

    fn seat(&mut self, seat: Seat) -> ClusterId {
        match seat {
            Seat::Existing(id) => id,
            Seat::New => {
                let id = self.next_id;
                self.next_id += 1;
                self.clusters.insert(id, Cluster::empty(self.data.dim()));
                id
            }
        }
    }

    fn refresh_predictive(&mut self, id: ClusterId) -> Result<()> {
        if self.mode != DpmmMode::Collapsed {
            return Ok(());
        }
        if let Some(c) = self.clusters.get_mut(&id) {
            let pred = self.prior.posterior(&c.stats).predictive().map_err(|e| with_cluster(e, id))?;
            c.predictive = Some(pred);
        }
        Ok(())
    }

    pub fn data(&self) -> &PointData {
        &self.data
    }

    pub fn prior(&self) -> &NiwPrior {
        &self.prior
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn mode(&self) -> DpmmMode {
        self.mode
    }

    pub fn num_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn assignments(&self) -> &[ClusterId] {
        &self.assignments
    }

    pub fn clusters(&self) -> &BTreeMap<ClusterId, Cluster> {
        &self.clusters
    }

    /// Assignments relabeled `0, 1, …` in order of first appearance.
    pub fn canonical_labels(&self) -> Vec<usize> {
        let mut map: BTreeMap<ClusterId, usize> = BTreeMap::new();
        let mut next = 0;
        self.assignments
            .iter()
            .map(|id| {
                *map.entry(*id).or_insert_with(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect()
    }

    /// Cluster centers: `mu_k` when instantiated, otherwise member means.
    pub fn cluster_centers(&self) -> Vec<Vec<f64>> {
        self.clusters
            .values()
            .map(|c| match &c.params {
                Some(g) => g.mean.clone(),
                None => c.stats.mean().expect("live clusters are nonempty"),
            })
            .collect()
    }

    /// CRP prior over where point `i` sits, with `i` removed:
    /// `N_{k,-i}/(alpha + N - 1)` per existing cluster and
    /// `alpha/(alpha + N - 1)` for a new one.
    pub fn crp_prior_weights(&self, i: usize) -> Vec<(Seat, f64)> {
        let n = self.data.n() as f64;
        let denom = self.alpha + n - 1.0;
        let own = self.assignments[i];
        let mut out: Vec<(Seat, f64)> = self
            .clusters
            .iter()
            .filter_map(|(&id, c)| {
                let count = c.stats.count - usize::from(id == own);
                (count > 0).then(|| (Seat::Existing(id), count as f64 / denom))
            })
            .collect();
        out.push((Seat::New, self.alpha / denom));
        out
    }

    /// Log of `p(x | cluster)` used by the local update.
    fn log_likelihood(&self, cluster: &Cluster, x: &[f64]) -> Result<f64> {
        match (&cluster.params, &cluster.predictive, self.mode) {
            (Some(g), _, DpmmMode::Instantiated) => Ok(g.log_density(x)),
            (_, Some(p), DpmmMode::Collapsed) => Ok(p.log_density(x)),
            _ => Ok(self
                .prior
                .posterior(&cluster.stats)
                .predictive()?
                .log_density(x)),
        }
    }

    /// Student-t predictive of `x` under a cluster's current members.
    pub fn predictive_log_density(&self, id: ClusterId, x: &[f64]) -> Result<f64> {
        let c = self
            .clusters
            .get(&id)
            .ok_or_else(|| Error::invalid(format!("no cluster {id}")))?;
        Ok(self
            .prior
            .posterior(&c.stats)
            .predictive()
            .map_err(|e| with_cluster(e, id))?
            .log_density(x))
    }

    /// Prior predictive of `x` (the new-cluster term).
    pub fn prior_predictive_log_density(&self, x: &[f64]) -> f64 {
        self.prior_predictive.log_density(x)
    }

    pub fn local_update(&mut self, i: usize, rng: &mut RandomStream) -> Result<()> {
        let data = self.data.clone();
        let x = data.point(i);
        let old = self.assignments[i];
        {
            let c = self.clusters.get_mut(&old).expect("assigned cluster exists");
            c.stats.remove(x);
            if c.stats.count == 0 {
                self.clusters.remove(&old);
            } else {
                self.refresh_predictive(old)?;
            }
        }
        let mut log_w = Vec::with_capacity(self.clusters.len() + 1);
        let mut seats = Vec::with_capacity(self.clusters.len() + 1);
        for (&id, c) in &self.clusters {
            let ll = self.log_likelihood(c, x).map_err(|e| with_cluster(e, id))?;
            log_w.push((c.stats.count as f64).ln() + ll);
            seats.push(Seat::Existing(id));
        }
        log_w.push(self.alpha.ln() + self.prior_predictive.log_density(x));
        seats.push(Seat::New);
        let seat = seats[sample_categorical_log(&log_w, rng)?];
        let id = self.seat(seat);
        let cluster = self.clusters.get_mut(&id).unwrap();
        cluster.stats.add(x);
        if seat == Seat::New && self.mode == DpmmMode::Instantiated {
            let post = self.prior.posterior(&cluster.stats);
            cluster.params = Some(post.sample(rng).map_err(|e| with_cluster(e, id))?);
        }
        self.refresh_predictive(id)?;
        self.assignments[i] = id;
        Ok(())
    }

    /// Redraws every cluster's parameters; nothing to do when collapsed.
    pub fn global_update(&mut self, rng: &mut RandomStream) -> Result<()> {
        self.instantiate(rng)
    }

    /// `ln p(partition) + Σ_k ln p(X_k)` with cluster parameters
    /// integrated out.
    pub fn log_joint(&self) -> f64 {
        let n = self.data.n() as f64;
        let k = self.clusters.len() as f64;
        let mut lp = k * self.alpha.ln() + ln_gamma(self.alpha) - ln_gamma(self.alpha + n);
        for c in self.clusters.values() {
            lp += ln_gamma(c.stats.count as f64);
            lp += self
                .prior
                .log_marginal_likelihood(&c.stats)
                .unwrap_or(f64::NEG_INFINITY);
        }
        lp
    }

    /// Recomputes statistics from the assignments and compares them with
    /// the incrementally maintained ones.
    pub fn max_stats_discrepancy(&self) -> f64 {
        let mut fresh: BTreeMap<ClusterId, ClusterStats> = BTreeMap::new();
        for (i, &id) in self.assignments.iter().enumerate() {
            fresh
                .entry(id)
                .or_insert_with(|| ClusterStats::empty(self.data.dim()))
                .add(self.data.point(i));
        }
        if fresh.len() != self.clusters.len() {
            return f64::INFINITY;
        }
        let mut worst: f64 = 0.0;
        for (id, f) in &fresh {
            let Some(c) = self.clusters.get(id) else {
                return f64::INFINITY;
            };
            if c.stats.count != f.count {
                return f64::INFINITY;
            }
            for (a, b) in c.stats.sum.iter().chain(&c.stats.outer).zip(f.sum.iter().chain(&f.outer)) {
                worst = worst.max((a - b).abs() / b.abs().max(1.0));
            }
        }
        worst
    }
}

fn with_cluster(e: Error, id: ClusterId) -> Error {
    match e {
        Error::NotPositiveDefinite { pivot } => {
            Error::Numeric(format!("cluster {id}: posterior scale not positive definite (pivot {pivot})"))
        }
        other => other,
    }
}

impl GibbsModel for DpmmState {
    fn num_local_units(&self) -> usize {
        self.data.n()
    }

    fn local_update(&mut self, index: usize, rng: &mut RandomStream) -> Result<()> {
        DpmmState::local_update(self, index, rng)
    }

    fn global_update(&mut self, rng: &mut RandomStream) -> Result<()> {
        DpmmState::global_update(self, rng)
    }

    /// Number of live clusters.
    fn summary(&self) -> f64 {
        self.clusters.len() as f64
    }

    fn log_joint(&self) -> f64 {
        DpmmState::log_joint(self)
    }
}
