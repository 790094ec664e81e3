//! Scenario files, batch experiment execution, parameter sweeps, trace/plot
//! emission and the acceptance report.

pub mod acceptance;
pub mod experiment;
pub mod plot;
pub mod scenario;
pub mod sweep;

pub use acceptance::{check_acceptance, AcceptanceReport, CriterionResult, CriterionStatus};
pub use experiment::{
    run_experiment, run_scenario, summarize, ExperimentOptions, Summary,
};
pub use scenario::{load_scenario, parse_scenario, preset, preset_names, Mode, Scenario};
pub use sweep::{run_sweep, SweepParameter, SweepSummary};
