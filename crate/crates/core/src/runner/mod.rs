//! Training loop, evaluation, metrics, ablations and the geometry audit.

pub mod ablate;
pub mod audit;
pub mod config;
pub mod gradsuite;
pub mod metrics;
pub mod model;
pub mod train;

pub use ablate::{ablate, AblationRow, AblationTable, Arm};
pub use audit::{default_audit, geometry_audit, GeometryAudit};
pub use config::{RunConfig, Scheduler};
pub use gradsuite::{gradient_suite, GradCase, GRAD_TOL};
pub use metrics::{weighted_f1, Confusion, Metrics};
pub use model::{Model, Objective};
pub use train::{evaluate, evaluate_model, train, train_on, RunReport, TrainOutcome};
