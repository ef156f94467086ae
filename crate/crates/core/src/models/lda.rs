//! Latent Dirichlet allocation with documents as local units.
//!
//! A local update sweeps the tokens of one document. In
//! [`LdaMode::Collapsed`] each token is drawn from
//! `(n_wk + eta)/(n_k + V eta) · (n_dk + alpha)/(n_d + K alpha)` with the
//! token removed from the counts, and the global update does nothing. In
//! [`LdaMode::Instantiated`] the word ratio is replaced by the current
//! `beta_k[w]`, and the global update redraws every topic from
//! `Dirichlet(eta + n_·k)`.

use std::sync::Arc;

use rand::Rng;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::rng::{sample_categorical, sample_dirichlet_into, RandomStream};
use crate::scan::GibbsModel;

/// Documents as lists of word ids in `[0, vocab_size)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    vocab_size: usize,
    docs: Vec<Vec<usize>>,
}

impl Corpus {
    pub fn new(vocab_size: usize, docs: Vec<Vec<usize>>) -> Result<Self> {
        if vocab_size == 0 {
            return Err(Error::invalid("vocabulary must be nonempty"));
        }
        let mut bad: Vec<usize> = docs
            .iter()
            .flatten()
            .copied()
            .filter(|&w| w >= vocab_size)
            .collect();
        if !bad.is_empty() {
            bad.sort_unstable();
            bad.dedup();
            return Err(Error::UnknownWord(bad));
        }
        Ok(Corpus { vocab_size, docs })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn num_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn doc(&self, d: usize) -> &[usize] {
        &self.docs[d]
    }

    pub fn docs(&self) -> &[Vec<usize>] {
        &self.docs
    }

    pub fn num_tokens(&self) -> usize {
        self.docs.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LdaMode {
    Collapsed,
    #[default]
    Instantiated,
}

impl std::str::FromStr for LdaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "collapsed" => Ok(LdaMode::Collapsed),
            "instantiated" => Ok(LdaMode::Instantiated),
            other => Err(Error::invalid(format!("unknown topic-model mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LdaConfig {
    pub topics: usize,
    pub alpha: f64,
    pub eta: f64,
    pub mode: LdaMode,
    /// Draw `theta_d ~ Dirichlet(alpha + n_d·)` after each document sweep.
    pub sample_theta: bool,
}

impl LdaConfig {
    /// `alpha = 50/K`, `eta = 0.01`.
    pub fn new(topics: usize) -> Self {
        LdaConfig {
            topics,
            alpha: 50.0 / topics.max(1) as f64,
            eta: 0.01,
            mode: LdaMode::default(),
            sample_theta: false,
        }
    }

    pub fn with_mode(mut self, mode: LdaMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_hyper(mut self, alpha: f64, eta: f64) -> Self {
        self.alpha = alpha;
        self.eta = eta;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.topics == 0 {
            return Err(Error::invalid("need at least one topic"));
        }
        for (name, v) in [("alpha", self.alpha), ("eta", self.eta)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LdaState {
    corpus: Arc<Corpus>,
    config: LdaConfig,
    z: Vec<Vec<usize>>,
    /// `n_dk[d * K + k]`
    n_dk: Vec<u32>,
    /// `n_wk[w * K + k]`
    n_wk: Vec<u32>,
    n_k: Vec<u32>,
    /// `beta[w * K + k] = beta_k[w]`; empty when collapsed.
    beta: Vec<f64>,
    /// `theta[d * K + k]`; empty unless `sample_theta`.
    theta: Vec<f64>,
    weights: Vec<f64>,
    scratch: Vec<f64>,
}

impl LdaState {
    /// Uniformly random topics; in instantiated mode `beta` is then drawn
    /// from its conditional.
    pub fn new(corpus: Arc<Corpus>, config: LdaConfig, rng: &mut RandomStream) -> Result<Self> {
        config.validate()?;
        let k = config.topics;
        let z = corpus
            .docs()
            .iter()
            .map(|doc| doc.iter().map(|_| rng.random_range(0..k)).collect())
            .collect();
        let mut s = Self::with_topics(corpus, config, z)?;
        if config.mode == LdaMode::Instantiated {
            s.resample_beta(rng)?;
        }
        if config.sample_theta {
            for d in 0..s.corpus.num_docs() {
                s.resample_theta(d, rng)?;
            }
        }
        Ok(s)
    }

    /// Uses the given topic of every token. `beta` starts at the smoothed
    /// count estimate and `theta` at the smoothed document proportions.
    pub fn with_topics(corpus: Arc<Corpus>, config: LdaConfig, z: Vec<Vec<usize>>) -> Result<Self> {
        config.validate()?;
        let k = config.topics;
        let v = corpus.vocab_size();
        if z.len() != corpus.num_docs()
            || z.iter().zip(corpus.docs()).any(|(a, b)| a.len() != b.len())
        {
            return Err(Error::invalid("topic assignments do not match the corpus shape"));
        }
        if let Some(t) = z.iter().flatten().find(|&&t| t >= k) {
            return Err(Error::invalid(format!("topic {t} out of range for K = {k}")));
        }
        let mut s = LdaState {
            n_dk: vec![0; corpus.num_docs() * k],
            n_wk: vec![0; v * k],
            n_k: vec![0; k],
            beta: Vec::new(),
            theta: Vec::new(),
            weights: vec![0.0; k],
            scratch: Vec::new(),
            z,
            corpus,
            config,
        };
        for d in 0..s.corpus.num_docs() {
            for (i, &w) in s.corpus.doc(d).iter().enumerate() {
                let t = s.z[d][i];
                s.n_dk[d * k + t] += 1;
                s.n_wk[w * k + t] += 1;
                s.n_k[t] += 1;
            }
        }
        if config.mode == LdaMode::Instantiated {
            s.beta = s.phi_hat();
        }
        if config.sample_theta {
            s.theta = (0..s.corpus.num_docs()).flat_map(|d| s.theta_hat(d)).collect();
        }
        Ok(s)
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn config(&self) -> &LdaConfig {
        &self.config
    }

    pub fn topics(&self) -> usize {
        self.config.topics
    }

    pub fn assignments(&self) -> &[Vec<usize>] {
        &self.z
    }

    pub fn doc_topic_count(&self, d: usize, k: usize) -> u32 {
        self.n_dk[d * self.config.topics + k]
    }

    pub fn word_topic_count(&self, w: usize, k: usize) -> u32 {
        self.n_wk[w * self.config.topics + k]
    }

    pub fn topic_count(&self, k: usize) -> u32 {
        self.n_k[k]
    }

    /// Word-major topic-word table (`beta[w * K + k]`), instantiated mode only.
    pub fn beta(&self) -> Option<&[f64]> {
        (!self.beta.is_empty()).then_some(self.beta.as_slice())
    }

    /// Overwrites `beta`; each topic column must sum to one.
    pub fn set_beta(&mut self, beta: Vec<f64>) -> Result<()> {
        let k = self.config.topics;
        if beta.len() != self.corpus.vocab_size() * k {
            return Err(Error::invalid("beta has the wrong shape"));
        }
        if beta.iter().any(|b| !(*b >= 0.0)) {
            return Err(Error::invalid("beta entries must be nonnegative"));
        }
        self.beta = beta;
        Ok(())
    }

    /// `theta[d * K + k]`, when `sample_theta` is on.
    pub fn theta(&self) -> Option<&[f64]> {
        (!self.theta.is_empty()).then_some(self.theta.as_slice())
    }

    /// `(n_wk + eta) / (n_k + V eta)`, word-major.
    pub fn phi_hat(&self) -> Vec<f64> {
        let k = self.config.topics;
        let veta = self.corpus.vocab_size() as f64 * self.config.eta;
        self.n_wk
            .iter()
            .enumerate()
            .map(|(i, &c)| (c as f64 + self.config.eta) / (self.n_k[i % k] as f64 + veta))
            .collect()
    }

    /// `(n_dk + alpha) / (n_d + K alpha)`.
    pub fn theta_hat(&self, d: usize) -> Vec<f64> {
        let k = self.config.topics;
        let n_d = self.corpus.doc(d).len() as f64;
        let denom = n_d + k as f64 * self.config.alpha;
        self.n_dk[d * k..(d + 1) * k]
            .iter()
            .map(|&c| (c as f64 + self.config.alpha) / denom)
            .collect()
    }

    /// Collapsed conditional weights of token `t` in document `d`, with
    /// that token's own assignment removed from the counts.
    pub fn collapsed_conditional(&self, d: usize, t: usize) -> Vec<f64> {
        let k = self.config.topics;
        let w = self.corpus.doc(d)[t];
        let own = self.z[d][t];
        let v = self.corpus.vocab_size() as f64;
        let n_d = (self.corpus.doc(d).len() - 1) as f64;
        let (alpha, eta) = (self.config.alpha, self.config.eta);
        (0..k)
            .map(|j| {
                let minus = u32::from(j == own) as f64;
                let nw = self.n_wk[w * k + j] as f64 - minus;
                let nk = self.n_k[j] as f64 - minus;
                let nd = self.n_dk[d * k + j] as f64 - minus;
                (nw + eta) / (nk + v * eta) * (nd + alpha) / (n_d + k as f64 * alpha)
            })
            .collect()
    }

    fn resample_beta(&mut self, rng: &mut RandomStream) -> Result<()> {
        let k = self.config.topics;
        let v = self.corpus.vocab_size();
        if self.beta.len() != v * k {
            self.beta = vec![0.0; v * k];
        }
        let mut conc = vec![0.0; v];
        self.scratch.resize(v, 0.0);
        for j in 0..k {
            for w in 0..v {
                conc[w] = self.config.eta + self.n_wk[w * k + j] as f64;
            }
            sample_dirichlet_into(&conc, rng, &mut self.scratch)?;
            for w in 0..v {
                self.beta[w * k + j] = self.scratch[w];
            }
        }
        Ok(())
    }

    fn resample_theta(&mut self, d: usize, rng: &mut RandomStream) -> Result<()> {
        let k = self.config.topics;
        if self.theta.len() != self.corpus.num_docs() * k {
            self.theta = vec![0.0; self.corpus.num_docs() * k];
        }
        let conc: Vec<f64> = self.n_dk[d * k..(d + 1) * k]
            .iter()
            .map(|&c| c as f64 + self.config.alpha)
            .collect();
        sample_dirichlet_into(&conc, rng, &mut self.theta[d * k..(d + 1) * k])
    }

    pub fn local_update(&mut self, d: usize, rng: &mut RandomStream) -> Result<()> {
        let k = self.config.topics;
        let corpus = self.corpus.clone();
        let doc = corpus.doc(d);
        let (alpha, eta) = (self.config.alpha, self.config.eta);
        let veta = corpus.vocab_size() as f64 * eta;
        for (i, &w) in doc.iter().enumerate() {
            let old = self.z[d][i];
            self.n_dk[d * k + old] -= 1;
            self.n_wk[w * k + old] -= 1;
            self.n_k[old] -= 1;
            // the document-length denominator is common to all topics
            match self.config.mode {
                LdaMode::Collapsed => {
                    for j in 0..k {
                        self.weights[j] = (self.n_wk[w * k + j] as f64 + eta)
                            / (self.n_k[j] as f64 + veta)
                            * (self.n_dk[d * k + j] as f64 + alpha);
                    }
                }
                LdaMode::Instantiated => {
                    for j in 0..k {
                        self.weights[j] = self.beta[w * k + j] * (self.n_dk[d * k + j] as f64 + alpha);
                    }
                }
            }
            let new = sample_categorical(&self.weights, rng).map_err(|_| {
                Error::Numeric(format!("document {d}, token {i}: topic weights all zero"))
            })?;
            self.z[d][i] = new;
            self.n_dk[d * k + new] += 1;
            self.n_wk[w * k + new] += 1;
            self.n_k[new] += 1;
        }
        if self.config.sample_theta {
            self.resample_theta(d, rng)?;
        }
        Ok(())
    }

    pub fn global_update(&mut self, rng: &mut RandomStream) -> Result<()> {
        match self.config.mode {
            LdaMode::Collapsed => Ok(()),
            LdaMode::Instantiated => self.resample_beta(rng),
        }
    }

    /// Mean per-token `ln Σ_k theta_dk beta_k[w]` over the training corpus.
    /// Uses the stored `theta`/`beta` when present and the smoothed count
    /// estimates otherwise. An empty corpus gives 0.
    pub fn summary(&self) -> f64 {
        let k = self.config.topics;
        let tokens = self.corpus.num_tokens();
        if tokens == 0 {
            return 0.0;
        }
        let phi;
        let beta: &[f64] = if self.beta.is_empty() {
            phi = self.phi_hat();
            &phi
        } else {
            &self.beta
        };
        let mut total = 0.0;
        for d in 0..self.corpus.num_docs() {
            let th_owned;
            let theta: &[f64] = if self.theta.is_empty() {
                th_owned = self.theta_hat(d);
                &th_owned
            } else {
                &self.theta[d * k..(d + 1) * k]
            };
            for &w in self.corpus.doc(d) {
                let p: f64 = (0..k).map(|j| theta[j] * beta[w * k + j]).sum();
                total += p.ln();
            }
        }
        total / tokens as f64
    }

    /// Collapsed log joint `ln p(w, z)` with `theta` and `beta` integrated out.
    pub fn log_joint(&self) -> f64 {
        let k = self.config.topics;
        let kf = k as f64;
        let v = self.corpus.vocab_size() as f64;
        let (alpha, eta) = (self.config.alpha, self.config.eta);
        let mut lp = 0.0;
        for d in 0..self.corpus.num_docs() {
            let n_d = self.corpus.doc(d).len() as f64;
            lp += ln_gamma(kf * alpha) - ln_gamma(n_d + kf * alpha);
            for j in 0..k {
                lp += ln_gamma(self.n_dk[d * k + j] as f64 + alpha) - ln_gamma(alpha);
            }
        }
        for j in 0..k {
            lp += ln_gamma(v * eta) - ln_gamma(self.n_k[j] as f64 + v * eta);
        }
        for &c in &self.n_wk {
            if c > 0 {
                lp += ln_gamma(c as f64 + eta) - ln_gamma(eta);
            }
        }
        lp
    }

    /// True when every count table equals its recomputation from `z`.
    pub fn counts_consistent(&self) -> bool {
        let k = self.config.topics;
        let mut n_dk = vec![0u32; self.n_dk.len()];
        let mut n_wk = vec![0u32; self.n_wk.len()];
        let mut n_k = vec![0u32; k];
        for d in 0..self.corpus.num_docs() {
            for (i, &w) in self.corpus.doc(d).iter().enumerate() {
                let t = self.z[d][i];
                n_dk[d * k + t] += 1;
                n_wk[w * k + t] += 1;
                n_k[t] += 1;
            }
        }
        n_dk == self.n_dk && n_wk == self.n_wk && n_k == self.n_k
    }
}

impl GibbsModel for LdaState {
    fn num_local_units(&self) -> usize {
        self.corpus.num_docs()
    }

    fn local_update(&mut self, index: usize, rng: &mut RandomStream) -> Result<()> {
        LdaState::local_update(self, index, rng)
    }

    fn global_update(&mut self, rng: &mut RandomStream) -> Result<()> {
        LdaState::global_update(self, rng)
    }

    fn summary(&self) -> f64 {
        LdaState::summary(self)
    }

    fn log_joint(&self) -> f64 {
        LdaState::log_joint(self)
    }
}
