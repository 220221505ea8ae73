//! Simulation engine for two-stage adaptive clinical trials: a randomized
//! stage that carries the regulatory test, followed by model-guided patient
//! acquisition and arm assignment, evaluated with benefit and fairness
//! metrics.

pub mod acquisition;
pub mod causal;
pub mod data;
pub mod dataset;
pub mod error;
pub mod gp;
pub mod metrics;
pub mod sequential;
pub mod trial;

pub use acquisition::{select_batch, AcquisitionKind, BatchSelection, Pick};
pub use causal::{fit_causal, fit_causal_validated, CausalPosterior};
pub use data::{gen_synthetic, load_potential_outcomes_csv, GeneratedCohort, PatientRecord, SYNTHETIC_SUBGROUPS};
pub use dataset::{Arm, Observation, Split, Stage, TrialDataset};
pub use error::{Error, Result};
pub use gp::{default_grid, fit_gp, GpFit, Hyperparams, KernelKind, KernelSpec, Prediction};
pub use metrics::{MetricsReport, SeedMetrics, Summary};
pub use sequential::{obf_alpha, t_test, SpendingSchedule, TestResult};
pub use trial::{run_experiment, run_trial, run_trial_early_stopping, StepTrace, SwitchMode, TrialConfig, TrialResult};
