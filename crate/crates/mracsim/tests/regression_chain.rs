//! Cross-module integration checks on the full closed loops that the unit
//! tests cannot cover in isolation: excitation preservation through the
//! parametrization chains and the alternative extension scheme.

use mracsim::adaptation::excitation_level;
use mracsim::harness::{preset, run_scenario, Scenario};
use mracsim::numerics::Vector;
use mracsim::simulation::RunOutcome;

fn run_short(name: &str, t_end: f64) -> (Scenario, RunOutcome) {
    let mut scenario = preset(name).unwrap();
    scenario.t_end = t_end;
    let outcome = run_scenario(&scenario).unwrap();
    assert!(outcome.aborted.is_none(), "{name} aborted: {:?}", outcome.aborted);
    (scenario, outcome)
}

/// Excitation level of the scalar regressor over the first ten seconds,
/// sampled at the trace rate.
fn delta_excitation(outcome: &RunOutcome) -> f64 {
    let dt = outcome.series.dt;
    let stride = 100;
    let mut ts = Vec::new();
    let mut samples = Vec::new();
    for (k, d) in outcome.series.delta.iter().enumerate().step_by(stride) {
        let t = k as f64 * dt;
        if t > 10.0 {
            break;
        }
        ts.push(t);
        samples.push(Vector::from_element(1, *d));
    }
    excitation_level(&ts, &samples).unwrap().level
}

#[test]
fn excitation_survives_the_state_feedback_chain() {
    let (_, outcome) = run_short("sf_fig1", 10.0);
    let level = delta_excitation(&outcome);
    assert!(level > 0.0, "excitation level {level}");
}

#[test]
fn excitation_survives_the_output_feedback_chain() {
    let (_, outcome) = run_short("of_fig6", 10.0);
    let level = delta_excitation(&outcome);
    assert!(level > 0.0, "excitation level {level}");
}

#[test]
fn error_dynamics_consistency_along_the_recorded_run() {
    let (_, outcome) = run_short("sf_fig1", 10.0);
    let ratio = outcome.stats.consistency_ratio_max.expect("state-feedback consistency stat");
    assert!(ratio <= 1.0, "finite-difference residual at {ratio} of its tolerance");
}

#[test]
fn outer_product_extension_is_a_drop_in_substitute() {
    let mut scenario = preset("sf_fig1").unwrap();
    scenario.t_end = 20.0;
    scenario.filters.extension = Some(mracsim::state_feedback::ExtensionScheme::OuterProduct);
    let outcome = run_scenario(&scenario).unwrap();
    assert!(outcome.aborted.is_none());
    assert!(outcome.stats.oracle_residual_max <= 1e-5);
    assert!(outcome.stats.mono_violation_max <= 1e-12);
    let initial = outcome.series.theta_tilde_norm.first().unwrap();
    let final_ = outcome.series.theta_tilde_norm.last().unwrap();
    assert!(
        final_ / initial <= 1e-2,
        "parameter error only fell to {final_:.3e} from {initial:.3e}"
    );
}
