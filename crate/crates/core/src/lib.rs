//! Mini-batch scan Gibbs sampling.
//!
//! Models implement [`GibbsModel`] by splitting their full conditionals
//! into per-unit local updates and a global update. The scan executor
//! runs `m` local updates per global update, and [`adapt`] picks the `m`
//! that minimizes `(m·w_z + w_theta)·tau_int(m)` from measured costs and
//! autocorrelation.

pub mod adapt;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod scan;

pub use adapt::{
    adapt_batch_size, adapt_batch_size_clocked, objective, run_two_phase, AdaptConfig,
    AdaptationResult, ArmResult, BatchGrid,
};
pub use diagnostics::{
    autocorrelation, effective_sample_size, epsr, integrated_autocorrelation_time, AcfMode,
    DiagnosticsReport,
};
pub use error::{Error, Result};
pub use rng::RandomStream;
pub use scan::{
    run_scan, run_scan_observed, run_scan_with, ChainTrace, Clock, GibbsModel, IndexPolicy,
    ManualClock, MonotonicClock, ScanSchedule, Stop,
};
pub use metrics::{cluster_mse, hungarian_min_cost, perplexity, purity};
pub use models::blasso::{BlassoMode, BlassoState, RegressionData};
pub use models::dpmm::{DpmmMode, DpmmState, NiwPrior, PointData};
pub use models::lda::{Corpus, LdaConfig, LdaMode, LdaState};
pub use models::scripted::ScriptedModel;
