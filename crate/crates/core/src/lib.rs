//! Ensemble smoother with multiple data assimilation (ES-MDA).
//!
//! The crate covers the full pipeline of a synthetic history-matching study:
//! Gaussian random field priors ([`fieldgen`]), forward models ([`forward`]),
//! ensemble algebra ([`ensemble`]), inflation schedules ([`schedule`]) chosen
//! either as constants or as geometric sequences checked against the
//! discrepancy principle ([`discrepancy`]), Gaspari-Cohn localization of the
//! Kalman gain ([`localization`]), the analysis step and multi-step driver
//! ([`analysis`]), evaluation metrics ([`metrics`]) and the twin-experiment
//! runner used by the command line tool ([`experiment`]).
//!
//! ## Feature flags
//!
//! - `parallel` (default): evaluates ensemble members and experiment runs on the rayon thread pool.
//!     Without it every map runs serially; results are identical either way.

pub mod analysis;
pub mod discrepancy;
pub mod ensemble;
mod error;
pub mod experiment;
pub mod fieldgen;
pub mod forward;
pub mod io;
pub mod localization;
pub mod metrics;
pub mod parallel;
pub mod rng;
pub mod schedule;

pub use analysis::{
    esmda_step, gaussian_mda_oracle, perturb_observations, run_esmda, subspace_inverse_apply, AnalysisConfig,
    ObservationSet, RunContext, RunOutput, RunReport, StepRecord, SubspaceInverse,
};
pub use discrepancy::{AlphaStar, SensitivitySpectrum, SolveOutcome};
pub use ensemble::{Ensemble, PredictedData};
pub use error::{Error, Result};
pub use fieldgen::{CovarianceModel, GridSpec};
pub use forward::{evaluate_ensemble, Darcy2D, ForwardModel, LinearModel, Well, WellRole};
pub use localization::LocalizationSpec;
pub use metrics::MetricsBundle;
pub use schedule::{Geo2Settings, InflationSchedule, ScheduleOrigin};
