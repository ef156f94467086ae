//! Loading data files and building models for the generic subcommands.

use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use mbgibbs::data::{load_corpus, load_points, load_regression, sidecar};
use mbgibbs::{
    BlassoMode, BlassoState, Corpus, DpmmMode, DpmmState, GibbsModel, LdaConfig, LdaMode, LdaState,
    NiwPrior, PointData, RandomStream, RegressionData,
};

use crate::config::Settings;
use crate::error::{CliError, CliResult, Context};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ModelKind {
    Blasso,
    Dpmm,
    Lda,
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        <Self as clap::ValueEnum>::from_str(s, true)
    }
}

/// How a mixture chain is initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DpmmInit {
    /// Every point in its own cluster.
    #[default]
    Singletons,
    /// All points in one cluster.
    Single,
    /// Points seated one at a time from the collapsed conditional.
    Sequential,
}

impl FromStr for DpmmInit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "singletons" => Ok(DpmmInit::Singletons),
            "single" => Ok(DpmmInit::Single),
            "sequential" => Ok(DpmmInit::Sequential),
            other => Err(format!("unknown init `{other}` (singletons|single|sequential)")),
        }
    }
}

pub enum Dataset {
    Blasso(Arc<RegressionData>),
    Dpmm(Arc<PointData>),
    Lda(Arc<Corpus>),
}

impl Dataset {
    /// Loads `path` along with its `.truth` or `.vocab` sidecar when present.
    pub fn load(kind: ModelKind, path: &Path) -> CliResult<Self> {
        let stage = format!("loading {}", path.display());
        Ok(match kind {
            ModelKind::Blasso => Dataset::Blasso(Arc::new(load_regression(path).stage(&stage)?)),
            ModelKind::Dpmm => Dataset::Dpmm(Arc::new(load_points(path).stage(&stage)?)),
            ModelKind::Lda => {
                let vocab = sidecar(path, "vocab");
                let vocab = vocab.exists().then_some(vocab);
                Dataset::Lda(Arc::new(load_corpus(path, vocab.as_deref()).stage(&stage)?))
            }
        })
    }

    pub fn units(&self) -> usize {
        match self {
            Dataset::Blasso(d) => d.n(),
            Dataset::Dpmm(d) => d.n(),
            Dataset::Lda(c) => c.num_docs(),
        }
    }
}

/// Model hyperparameters shared by `adapt` and `sample`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOptions {
    pub lambda: f64,
    pub blasso_mode: BlassoMode,
    pub alpha: f64,
    pub kappa0: f64,
    /// `None` means `dim + 3`.
    pub nu0: Option<f64>,
    pub dpmm_mode: DpmmMode,
    pub dpmm_init: DpmmInit,
    pub topics: usize,
    /// `None` means `50 / topics`.
    pub lda_alpha: Option<f64>,
    pub eta: f64,
    pub lda_mode: LdaMode,
    pub sample_theta: bool,
}

impl Default for ModelOptions {
    fn default() -> Self {
        ModelOptions {
            lambda: 1.0,
            blasso_mode: BlassoMode::Probit,
            alpha: 1.0,
            kappa0: 0.01,
            nu0: None,
            dpmm_mode: DpmmMode::Instantiated,
            dpmm_init: DpmmInit::Singletons,
            topics: 4,
            lda_alpha: None,
            eta: 0.01,
            lda_mode: LdaMode::Instantiated,
            sample_theta: false,
        }
    }
}

/// Model flags as parsed by clap; all optional so config and defaults can
/// fill the gaps.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct ModelFlags {
    /// Lasso penalty.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// probit|linear
    #[arg(long)]
    pub blasso_mode: Option<String>,
    /// DP concentration.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub kappa0: Option<f64>,
    /// Defaults to dim + 3.
    #[arg(long)]
    pub nu0: Option<f64>,
    /// collapsed|instantiated
    #[arg(long)]
    pub dpmm_mode: Option<String>,
    /// singletons|single|sequential
    #[arg(long)]
    pub dpmm_init: Option<String>,
    #[arg(long)]
    pub topics: Option<usize>,
    /// Document-topic prior; defaults to 50 / topics.
    #[arg(long)]
    pub lda_alpha: Option<f64>,
    /// Topic-word prior.
    #[arg(long)]
    pub eta: Option<f64>,
    /// collapsed|instantiated
    #[arg(long)]
    pub lda_mode: Option<String>,
    /// Keep explicit document-topic proportions.
    #[arg(long)]
    pub sample_theta: Option<bool>,
}

fn parse_flag<T: FromStr>(flag: &Option<String>, name: &str) -> CliResult<Option<T>>
where
    T::Err: std::fmt::Display,
{
    flag.as_deref()
        .map(|s| s.parse::<T>().map_err(|e| CliError::usage(format!("--{name}: {e}"))))
        .transpose()
}

impl ModelOptions {
    pub fn resolve(flags: &ModelFlags, s: &Settings) -> CliResult<Self> {
        let d = ModelOptions::default();
        Ok(ModelOptions {
            lambda: s.get(flags.lambda, "lambda", d.lambda)?,
            blasso_mode: s.get(parse_flag(&flags.blasso_mode, "blasso-mode")?, "blasso_mode", d.blasso_mode)?,
            alpha: s.get(flags.alpha, "alpha", d.alpha)?,
            kappa0: s.get(flags.kappa0, "kappa0", d.kappa0)?,
            nu0: s.get_opt(flags.nu0, "nu0")?,
            dpmm_mode: s.get(parse_flag(&flags.dpmm_mode, "dpmm-mode")?, "dpmm_mode", d.dpmm_mode)?,
            dpmm_init: s.get(parse_flag(&flags.dpmm_init, "dpmm-init")?, "dpmm_init", d.dpmm_init)?,
            topics: s.get(flags.topics, "topics", d.topics)?,
            lda_alpha: s.get_opt(flags.lda_alpha, "lda_alpha")?,
            eta: s.get(flags.eta, "eta", d.eta)?,
            lda_mode: s.get(parse_flag(&flags.lda_mode, "lda-mode")?, "lda_mode", d.lda_mode)?,
            sample_theta: s.get(flags.sample_theta, "sample_theta", d.sample_theta)?,
        })
    }

    pub fn niw_prior(&self, data: &PointData) -> mbgibbs::Result<NiwPrior> {
        let nu = self.nu0.unwrap_or(data.dim() as f64 + 3.0);
        NiwPrior::from_data(data, self.kappa0, nu)
    }

    pub fn lda_config(&self) -> LdaConfig {
        let mut c = LdaConfig::new(self.topics).with_mode(self.lda_mode);
        if let Some(a) = self.lda_alpha {
            c.alpha = a;
        }
        c.eta = self.eta;
        c.sample_theta = self.sample_theta;
        c
    }
}

pub fn build_dpmm(
    data: Arc<PointData>,
    opts: &ModelOptions,
    mode: DpmmMode,
    rng: &mut RandomStream,
) -> mbgibbs::Result<DpmmState> {
    let prior = opts.niw_prior(&data)?;
    let n = data.n();
    let mut state = match opts.dpmm_init {
        DpmmInit::Singletons => {
            let labels: Vec<usize> = (0..n).collect();
            DpmmState::with_assignments(data, prior, opts.alpha, mode, &labels)?
        }
        DpmmInit::Single => DpmmState::single_cluster(data, prior, opts.alpha, mode)?,
        DpmmInit::Sequential => DpmmState::sequential(data, prior, opts.alpha, mode, rng)?,
    };
    state.instantiate(rng)?;
    Ok(state)
}

/// A fresh chain for `dataset`, drawing any random initialization from `rng`.
pub fn build_model(
    dataset: &Dataset,
    opts: &ModelOptions,
    rng: &mut RandomStream,
) -> mbgibbs::Result<Box<dyn GibbsModel + Send>> {
    Ok(match dataset {
        Dataset::Blasso(d) => Box::new(BlassoState::new(d.clone(), opts.blasso_mode, opts.lambda)?),
        Dataset::Dpmm(d) => Box::new(build_dpmm(d.clone(), opts, opts.dpmm_mode, rng)?),
        Dataset::Lda(c) => Box::new(LdaState::new(c.clone(), opts.lda_config(), rng)?),
    })
}
