//! Batch execution of one scenario: run the closed loop, derive the summary
//! statistics, and write `trace.csv`, `summary.json` and optional plots.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::plot;
use crate::harness::scenario::{LawSpec, Mode, PlantSpec, Scenario};
use crate::simulation::{
    self, estimate_excitation_time, fit_decay_rate, AbortInfo, RunOutcome, SimulationTrace,
};

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

/// Fraction of the final running excitation integral that marks the
/// estimated excitation onset.
pub const EXCITATION_ONSET_FRACTION: f64 = 1e-6;

/// Horizon of the comparison fit of the augmented-error decay rate.
pub const XI_FIT_HORIZON: f64 = 5.0;

/// Equivalent exponential fit of a decay transient: the slope `-r` of the
/// exponential through the window's starting value whose time average over
/// the window matches the observed one. Transients here are a plateau, then
/// a cliff whose onset and depth carry the information, then a common
/// oscillatory tail; a least-squares log slope mostly measures the tail,
/// while the time average is ordered whenever one curve dominates another.
fn equivalent_exponential_rate(ts: &[f64], values: &[f64], t0: f64, horizon: f64) -> Option<f64> {
    let t_end = ts.last().copied()?;
    let t1 = (t0 + horizon).min(t_end);
    let window = t1 - t0;
    if window < 1.0 {
        return None;
    }
    let mut acc = 0.0;
    let mut count = 0usize;
    let mut start = None;
    for (&t, &v) in ts.iter().zip(values) {
        if t >= t0 && t <= t1 {
            if start.is_none() {
                start = Some(v.max(1e-300));
            }
            acc += v.max(1e-300);
            count += 1;
        }
    }
    let start = start?;
    if count == 0 {
        return None;
    }
    let q = (acc / count as f64) / start;
    if q >= 1.0 {
        // No decay over the window; report the (non-negative) growth slope.
        return Some(q.ln() / window);
    }
    // Solve (1 - e^{-r w}) / (r w) = q for r by bisection.
    let g = |r: f64| (1.0 - (-r * window).exp()) / (r * window);
    let (mut lo, mut hi): (f64, f64) = (1e-9, 1e9);
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if g(mid) > q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(-(lo * hi).sqrt())
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ExperimentOptions {
    pub plots: bool,
    /// Overrides the scenario's trace decimation.
    pub decimate: Option<usize>,
}

/// Machine-readable digest of one run; everything the acceptance checks and
/// sweep comparisons consume. Per-step statistics come from the full-rate
/// internal series, not from the decimated trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub scenario_name: String,
    pub mode: String,
    pub law: String,
    pub theta_star: Vec<f64>,
    pub theta_hat_final: Vec<f64>,
    pub theta_tilde_initial_norm: f64,
    pub theta_tilde_final_norm: f64,
    pub xi_max: f64,
    pub xi_final: f64,
    pub oracle_residual_max: f64,
    pub mono_violation_max: f64,
    pub sign_flips: usize,
    pub consistency_ratio_max: Option<f64>,
    /// Excitation level of the scalar regressor over the diagnostics window.
    pub excitation_level: Option<f64>,
    pub excitation_window: (f64, f64),
    /// Estimated excitation window end (running-integral detector).
    pub t_excitation: Option<f64>,
    /// First sample with a nonzero scalar regressor.
    pub t_excitation_start: Option<f64>,
    /// Log-slope of the parameter error norm over `[t_e, t_end]`.
    pub theta_decay_rate: Option<f64>,
    /// Log-slope of the augmented error norm over `[t_e, t_e + horizon]`.
    pub xi_decay_rate: Option<f64>,
    /// `||x(t_end)||` for state feedback, `|y(t_end)|` for output feedback.
    pub final_state_norm: f64,
    /// Set for baseline output-feedback runs whose error transfer function
    /// cannot be strictly positive real (relative degree above one); such
    /// runs are documentation contrast only.
    pub reference_only: bool,
    pub aborted: Option<AbortInfo>,
}

/// Runs a validated scenario in memory.
pub fn run_scenario(scenario: &Scenario) -> Result<RunOutcome> {
    run_scenario_with_stride(scenario, None)
}

fn run_scenario_with_stride(scenario: &Scenario, stride: Option<usize>) -> Result<RunOutcome> {
    match scenario.mode {
        Mode::StateFeedback => {
            let mut exp = scenario.to_sf_experiment()?;
            if let Some(s) = stride {
                exp.record_stride = s;
            }
            simulation::run_sf(&exp)
        }
        Mode::OutputFeedback => {
            let mut exp = scenario.to_of_experiment()?;
            if let Some(s) = stride {
                exp.record_stride = s;
            }
            simulation::run_of(&exp)
        }
    }
}

/// Clamps a fit window to the strictly positive prefix of the series.
fn positive_window_end(ts: &[f64], values: &[f64], start: f64, end: f64) -> f64 {
    let mut clamped = start;
    for (&t, &v) in ts.iter().zip(values) {
        if t < start {
            continue;
        }
        if t > end || v <= 0.0 {
            break;
        }
        clamped = t;
    }
    clamped
}

fn fit_over(ts: &[f64], values: &[f64], start: f64, end: f64) -> Option<f64> {
    let end = positive_window_end(ts, values, start, end);
    if end <= start {
        return None;
    }
    fit_decay_rate(ts, values, (start, end)).ok()
}

/// Derives the summary digest from a finished run.
pub fn summarize(scenario: &Scenario, outcome: &RunOutcome) -> Summary {
    let trace = &outcome.trace;
    let n_theta = trace.n_theta;
    let last = trace.rows.last();

    let theta_hat_final: Vec<f64> = last
        .map(|row| row[trace.idx_theta()..trace.idx_theta() + n_theta].to_vec())
        .unwrap_or_default();
    let tilde_final = outcome.series.theta_tilde_norm.last().copied().unwrap_or(f64::NAN);
    let tilde_initial = outcome.series.theta_tilde_norm.first().copied().unwrap_or(f64::NAN);
    let xi_final = outcome.series.xi_norm.last().copied().unwrap_or(f64::NAN);

    let dt = outcome.series.dt;
    let ts: Vec<f64> = (0..outcome.series.delta.len()).map(|k| k as f64 * dt).collect();

    // Excitation diagnostics on the scalar regressor.
    let window_end = ts.last().copied().unwrap_or(0.0).min(10.0);
    let mut level = 0.0;
    for (&t, &d) in ts.iter().zip(&outcome.series.delta) {
        if t > window_end {
            break;
        }
        level += d * d * dt;
    }
    let excitation_level = if level > 0.0 { Some(level) } else { None };
    let t_excitation =
        estimate_excitation_time(&ts, &outcome.series.delta, EXCITATION_ONSET_FRACTION);

    let t_excitation_start = ts
        .iter()
        .zip(&outcome.series.delta)
        .find(|(_, d)| **d != 0.0)
        .map(|(t, _)| *t);

    let t_end = ts.last().copied().unwrap_or(0.0);
    let theta_decay_rate = t_excitation
        .and_then(|te| fit_over(&ts, &outcome.series.theta_tilde_norm, te, t_end));
    // The comparison rate is fitted over the adaptation transient, which
    // begins at the excitation onset.
    let xi_decay_rate = t_excitation_start.and_then(|ts0| {
        equivalent_exponential_rate(&ts, &outcome.series.xi_norm, ts0, XI_FIT_HORIZON)
    });

    let final_state_norm = last
        .map(|row| {
            let states = &row[trace.idx_state()..trace.idx_state() + trace.n_state];
            states.iter().map(|v| v * v).sum::<f64>().sqrt()
        })
        .unwrap_or(f64::NAN);

    let reference_only = matches!(scenario.law, LawSpec::Baseline { .. })
        && scenario.mode == Mode::OutputFeedback
        && !reference_is_spr_capable(scenario);

    Summary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        scenario_name: scenario.name.clone(),
        mode: scenario.mode.as_str().to_string(),
        law: match scenario.law {
            LawSpec::Normalized { .. } => "normalized".into(),
            LawSpec::Baseline { .. } => "baseline".into(),
        },
        theta_star: outcome.theta_star.iter().copied().collect(),
        theta_hat_final,
        theta_tilde_initial_norm: tilde_initial,
        theta_tilde_final_norm: tilde_final,
        xi_max: outcome.stats.xi_max,
        xi_final,
        oracle_residual_max: outcome.stats.oracle_residual_max,
        mono_violation_max: outcome.stats.mono_violation_max,
        sign_flips: outcome.stats.sign_flips,
        consistency_ratio_max: outcome.stats.consistency_ratio_max,
        excitation_level,
        excitation_window: (0.0, window_end),
        t_excitation,
        t_excitation_start,
        theta_decay_rate,
        xi_decay_rate,
        final_state_norm,
        reference_only,
        aborted: outcome.aborted.clone(),
    }
}

/// Necessary-condition screen for strict positive realness of the error
/// transfer function: relative degree at most one.
fn reference_is_spr_capable(scenario: &Scenario) -> bool {
    match &scenario.reference_model {
        PlantSpec::Transfer { numerator_monic, denominator_monic, .. } => {
            denominator_monic.len() - numerator_monic.len() <= 1
        }
        PlantSpec::State { .. } => true,
    }
}

/// Serializes the decimated trace as RFC-4180 CSV with a header row.
pub fn write_trace_csv(trace: &SimulationTrace, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer
        .write_record(&trace.header)
        ?;
    let mut record = csv::StringRecord::new();
    for row in &trace.rows {
        record.clear();
        for v in row {
            record.push_field(&format!("{v}"));
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads a trace written by [`write_trace_csv`].
pub fn read_trace_csv(path: &Path, n_state: usize, n_theta: usize) -> Result<SimulationTrace> {
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse(e.to_string()))?
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse(e.to_string()))?;
        let row: std::result::Result<Vec<f64>, _> =
            record.iter().map(|s| s.parse::<f64>()).collect();
        rows.push(row.map_err(|e| Error::Parse(format!("bad trace value: {e}")))?);
    }
    Ok(SimulationTrace { header, rows, n_state, n_theta })
}

/// Runs a scenario and writes its artifacts under `out_dir`:
/// `scenario.json` (echo), `trace.csv`, `summary.json`, and `plots/*.svg`
/// when requested. Overflow produces the partial outputs plus the abort
/// marker in the summary; the caller decides the exit status.
pub fn run_experiment(
    scenario: &Scenario,
    out_dir: &Path,
    opts: &ExperimentOptions,
) -> Result<Summary> {
    fs::create_dir_all(out_dir)?;
    let outcome = run_scenario_with_stride(scenario, opts.decimate)?;
    let summary = summarize(scenario, &outcome);

    fs::write(out_dir.join("scenario.json"), scenario.to_json())?;
    write_trace_csv(&outcome.trace, &out_dir.join("trace.csv"))?;
    let summary_json =
        serde_json::to_string_pretty(&summary).map_err(|e| Error::Parse(e.to_string()))?;
    fs::write(out_dir.join("summary.json"), summary_json)?;

    if opts.plots {
        let plot_dir = out_dir.join("plots");
        fs::create_dir_all(&plot_dir)?;
        plot::plot_trace(&outcome.trace, &plot_dir)?;
    }
    Ok(summary)
}

/// Loads a summary written by [`run_experiment`].
pub fn read_summary(path: &Path) -> Result<Summary> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::scenario::preset;

    fn short(name: &str, t_end: f64) -> Scenario {
        let mut s = preset(name).unwrap();
        s.t_end = t_end;
        s
    }

    #[test]
    fn experiment_writes_all_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let s = short("sf_fig1", 2.0);
        let summary =
            run_experiment(&s, dir.path(), &ExperimentOptions { plots: true, decimate: None })
                .unwrap();
        assert!(summary.aborted.is_none());
        assert!(dir.path().join("trace.csv").exists());
        assert!(dir.path().join("summary.json").exists());
        assert!(dir.path().join("scenario.json").exists());
        assert!(dir.path().join("plots").join("parameters.svg").exists());

        let reread = read_summary(&dir.path().join("summary.json")).unwrap();
        assert_eq!(reread.scenario_name, "sf_fig1");
        assert_eq!(reread.theta_star, summary.theta_star);

        let trace = read_trace_csv(&dir.path().join("trace.csv"), 2, 3).unwrap();
        assert_eq!(trace.header[0], "t");
        // Decimation: dt = 1e-4, stride 100, t_end = 2 -> 201 rows.
        assert_eq!(trace.rows.len(), 201);
        let t0 = trace.rows[0][0];
        let t1 = trace.rows[1][0];
        assert!((t1 - t0 - 0.01).abs() < 1e-12);
    }

    #[test]
    fn trace_csv_round_trips_exact_values() {
        let dir = tempfile::tempdir().unwrap();
        let s = short("sf_fig1", 1.0);
        let outcome = run_scenario(&s).unwrap();
        let path = dir.path().join("trace.csv");
        write_trace_csv(&outcome.trace, &path).unwrap();
        let reread = read_trace_csv(&path, 2, 3).unwrap();
        assert_eq!(outcome.trace.rows.len(), reread.rows.len());
        for (a, b) in outcome.trace.rows.iter().zip(&reread.rows) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(x, y, "shortest round-trip formatting must be exact");
            }
        }
    }

    #[test]
    fn rerun_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let s = short("sf_fig1", 1.0);
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        write_trace_csv(&run_scenario(&s).unwrap().trace, &a).unwrap();
        write_trace_csv(&run_scenario(&s).unwrap().trace, &b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    }
}
