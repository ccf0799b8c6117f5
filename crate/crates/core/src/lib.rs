//! Localized ensemble Kalman filters and a Lorenz-96 twin-experiment harness.
//!
//! The crate provides five ensemble analysis schemes (perturbed-observation
//! EnKF, serial square-root filter, DEnKF and the two continuous gradient-flow
//! updates `cenkf1`/`cenkf2`), a closed-form Kalman reference used for
//! verification, Gaspari–Cohn / Gaussian Schur-product localization, the
//! Lorenz-96 model with implicit-midpoint and RK4 integrators, and a seeded
//! twin-experiment driver with `(δ, r0)` sweeps and CSV output.
//!
//! Ensembles are stored as `n × m` matrices whose columns are members.

pub mod ensemble;
pub mod error;
pub mod filters;
pub mod harness;
pub mod localization;
pub mod models;
pub mod observation;

pub use ensemble::{Ensemble, EnsembleStats};
pub use error::{Error, Result};
pub use filters::{AnalysisConfig, AnalysisProblem, AnalysisReport, FilterKind};
pub use localization::{DistanceMetric, RadiusConvention, TaperFunction, TaperMatrices};
pub use models::{IntegratorConfig, Lorenz96, Model, Scheme};
pub use observation::{LinearObservation, ObsError, ObservationBatch};
