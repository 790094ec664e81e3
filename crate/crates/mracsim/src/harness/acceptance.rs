//! Acceptance checking: evaluates every shipped acceptance criterion against
//! the artifacts of a full preset/sweep campaign and reports one
//! machine-readable pass/fail entry per criterion.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::ForgettingFilter;
use crate::harness::experiment::{
    read_summary, read_trace_csv, run_scenario, write_trace_csv, Summary,
};
use crate::harness::scenario::load_scenario;
use crate::harness::sweep::{read_sweep_summary, SweepSummary};
use crate::numerics::{adjugate, det, max_eig_outer, solve_lyapunov, Matrix, Vector};
use crate::simulation::SimulationTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionStatus {
    Pass,
    Fail,
    NotRun,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: String,
    pub status: CriterionStatus,
    pub details: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AcceptanceReport {
    pub criteria: Vec<CriterionResult>,
}

impl AcceptanceReport {
    pub fn all_passed(&self) -> bool {
        self.criteria.iter().all(|c| c.status == CriterionStatus::Pass)
    }
}

impl fmt::Display for AcceptanceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.criteria {
            let tag = match c.status {
                CriterionStatus::Pass => "PASS",
                CriterionStatus::Fail => "FAIL",
                CriterionStatus::NotRun => "NOT RUN",
            };
            writeln!(f, "C{:02} {:<7} {:<28} {}", c.id, tag, c.name, c.details)?;
        }
        Ok(())
    }
}

struct LoadedRun {
    summary: Summary,
    trace: SimulationTrace,
}

fn load_run(dir: &Path) -> Result<LoadedRun> {
    let summary = read_summary(&dir.join("summary.json"))?;
    let n_theta = summary.theta_star.len();
    let n_state = if summary.mode == "state_feedback" { n_theta - 1 } else { 1 };
    let trace = read_trace_csv(&dir.join("trace.csv"), n_state, n_theta)?;
    Ok(LoadedRun { summary, trace })
}

struct Artifacts<'a> {
    root: &'a Path,
}

impl<'a> Artifacts<'a> {
    fn run(&self, name: &str) -> std::result::Result<LoadedRun, String> {
        load_run(&self.root.join(name)).map_err(|e| format!("{name}: not run ({e})"))
    }

    fn sweep(&self, name: &str) -> std::result::Result<SweepSummary, String> {
        read_sweep_summary(&self.root.join(name).join("sweep_summary.json"))
            .map_err(|e| format!("{name}: not run ({e})"))
    }
}

fn result(id: u8, name: &str, outcome: std::result::Result<(bool, String), String>) -> CriterionResult {
    match outcome {
        Ok((true, details)) => {
            CriterionResult { id, name: name.into(), status: CriterionStatus::Pass, details }
        }
        Ok((false, details)) => {
            CriterionResult { id, name: name.into(), status: CriterionStatus::Fail, details }
        }
        Err(details) => {
            CriterionResult { id, name: name.into(), status: CriterionStatus::NotRun, details }
        }
    }
}

/// Per-row elementwise monotonicity of `|theta_hat_i - theta_star_i|` on a
/// recorded trace, with the per-step tolerance.
fn trace_monotonicity_violation(run: &LoadedRun) -> f64 {
    let trace = &run.trace;
    let idx = trace.idx_theta();
    let mut worst = f64::NEG_INFINITY;
    for w in trace.rows.windows(2) {
        for i in 0..trace.n_theta {
            let prev = (w[0][idx + i] - run.summary.theta_star[i]).abs();
            let next = (w[1][idx + i] - run.summary.theta_star[i]).abs();
            worst = worst.max(next - prev);
        }
    }
    worst
}

const NORMALIZED_PRESETS: [&str; 6] =
    ["sf_fig1", "sf_fig2", "sf_fig3", "of_fig6", "of_fig7", "of_fig8"];

fn criterion_oracle(id: u8, name: &str, art: &Artifacts<'_>, run_name: &str, extra: impl Fn(&Summary) -> std::result::Result<(), String>) -> CriterionResult {
    result(
        id,
        name,
        art.run(run_name).map(|run| {
            let residual = run.summary.oracle_residual_max;
            let mut ok = residual <= 1e-5;
            let mut details = format!("max |Y - Delta*theta|/(1+|Delta|) = {residual:.3e} (<= 1e-5)");
            if let Err(msg) = extra(&run.summary) {
                ok = false;
                details = format!("{details}; {msg}");
            }
            (ok, details)
        }),
    )
}

fn criterion_monotonicity(art: &Artifacts<'_>) -> CriterionResult {
    let mut failures = Vec::new();
    let mut details = Vec::new();
    let mut missing = Vec::new();
    for name in NORMALIZED_PRESETS {
        match art.run(name) {
            Ok(run) => {
                let full_rate = run.summary.mono_violation_max;
                let on_trace = trace_monotonicity_violation(&run);
                let worst = full_rate.max(on_trace);
                if worst > 1e-12 {
                    failures.push(format!("{name}: violation {worst:.3e}"));
                } else {
                    details.push(format!("{name} {worst:.1e}"));
                }
            }
            Err(e) => missing.push(e),
        }
    }
    if !missing.is_empty() {
        return result(3, "elementwise monotonicity", Err(missing.join("; ")));
    }
    let ok = failures.is_empty();
    let details =
        if ok { format!("worst per-step growth: {}", details.join(", ")) } else { failures.join("; ") };
    result(3, "elementwise monotonicity", Ok((ok, details)))
}

fn criterion_convergence(art: &Artifacts<'_>) -> CriterionResult {
    let mut problems = Vec::new();
    let mut notes = Vec::new();
    let mut missing = Vec::new();
    for name in NORMALIZED_PRESETS {
        match art.run(name) {
            Ok(run) => {
                let s = &run.summary;
                if s.aborted.is_some() || !s.xi_max.is_finite() {
                    problems.push(format!("{name}: xi unbounded or run aborted"));
                }
                if name == "sf_fig1" || name == "of_fig6" {
                    match s.theta_decay_rate {
                        Some(rate) if rate <= -0.01 => {
                            notes.push(format!("{name} slope {rate:.3}"))
                        }
                        other => problems.push(format!("{name}: decay slope {other:?} above -0.01")),
                    }
                    let ratio = s.theta_tilde_final_norm / s.theta_tilde_initial_norm;
                    if !(ratio <= 1e-2) {
                        problems.push(format!("{name}: final parameter error ratio {ratio:.3e}"));
                    } else {
                        notes.push(format!("{name} ratio {ratio:.1e}"));
                    }
                }
            }
            Err(e) => missing.push(e),
        }
    }
    if !missing.is_empty() {
        return result(4, "xi bounded, exponential decay", Err(missing.join("; ")));
    }
    let ok = problems.is_empty();
    result(
        4,
        "xi bounded, exponential decay",
        Ok((ok, if ok { notes.join(", ") } else { problems.join("; ") })),
    )
}

/// Closed form of `integral_0^T e^{-s tau} sin^2 tau d tau`.
fn forgetting_sin2_integral(sigma: f64, t: f64) -> f64 {
    let f = |tau: f64| {
        ((-sigma * tau).exp() * (2.0 * (2.0 * tau).sin() - sigma * (2.0 * tau).cos()))
            / (sigma * sigma + 4.0)
    };
    (1.0 - (-sigma * t).exp()) / (2.0 * sigma) - 0.5 * (f(t) - f(0.0))
}

fn criterion_bounded_forgetting() -> CriterionResult {
    // Delta = sin t is finitely exciting over [0, t_e]; the filter output
    // must sit between the windowed integral and sup^2 / sigma afterwards.
    let sigma = 0.5;
    let t_e = 2.0;
    let dt = 5e-7;
    let mut filter = ForgettingFilter::new(sigma, 1).unwrap();
    let lower = forgetting_sin2_integral(sigma, t_e);
    let upper = 1.0 / sigma;
    let steps = (12.0 / dt) as usize;
    let mut worst_low: f64 = f64::INFINITY;
    let mut worst_high: f64 = f64::NEG_INFINITY;
    let mut quad_err: f64 = 0.0;
    for k in 0..steps {
        let t = k as f64 * dt;
        let d = t.sin();
        filter.step(&Vector::from_element(1, d * d), dt);
        let t_next = t + dt;
        if t_next >= t_e && k % 20_000 == 0 {
            let omega = filter.out()[0];
            worst_low = worst_low.min(omega - lower);
            worst_high = worst_high.max(omega - upper);
            quad_err = quad_err
                .max((omega - forgetting_sin2_integral(sigma, t_next)).abs() / omega.max(1e-30));
        }
    }
    let tol = 1e-6 * lower.abs().max(1.0);
    let ok = worst_low >= -tol && worst_high <= tol && quad_err <= 1e-6;
    result(
        5,
        "forgetting bounds, bounded input",
        Ok((
            ok,
            format!(
                "Omega - LB >= {worst_low:.3e}, Omega - UB <= {worst_high:.3e}, quadrature gap {quad_err:.1e}"
            ),
        )),
    )
}

fn criterion_exponential_forgetting() -> CriterionResult {
    // Delta = e^{0.1 t}, sigma = 0.5, so the bound constant is 10/3.
    let (c1, c2, sigma) = (1.0, 0.1, 0.5);
    let c3 = sigma - 2.0 * c2;
    let t_e = 5.0;
    let dt = 1e-4;
    let mut filter = ForgettingFilter::new(sigma, 1).unwrap();
    let upper = c1 * c1 / c3;
    let lower = upper * (1.0 - (-c3 * t_e).exp());
    let steps = (30.0 / dt) as usize;
    let mut worst_low: f64 = f64::INFINITY;
    let mut worst_high: f64 = f64::NEG_INFINITY;
    for k in 0..steps {
        let t = k as f64 * dt;
        let d = c1 * (c2 * t).exp();
        filter.step(&Vector::from_element(1, d * d), dt);
        if t + dt >= t_e {
            let omega = filter.out()[0];
            worst_low = worst_low.min(omega - lower);
            worst_high = worst_high.max(omega - upper);
        }
    }
    // Euler-step tolerance: the rectangle rule misses O(dt) per unit bound.
    let tol = 10.0 * dt * upper;
    let ok = worst_low >= -tol && worst_high <= tol;
    result(
        6,
        "forgetting bounds, growing input",
        Ok((ok, format!("Omega - LB >= {worst_low:.3e}, Omega - UB <= {worst_high:.3e}"))),
    )
}

fn sweep_rates(sweep: &SweepSummary) -> std::result::Result<Vec<f64>, String> {
    sweep
        .runs
        .iter()
        .map(|r| {
            if r.status != "ok" {
                return Err(format!("{} value {}: {}", sweep.parameter, r.value, r.status));
            }
            r.xi_decay_rate
                .map(|s| -s)
                .ok_or_else(|| format!("value {}: no fitted rate", r.value))
        })
        .collect()
}

fn criterion_gamma0_ordering(art: &Artifacts<'_>) -> CriterionResult {
    let outcome = (|| {
        let mut details = Vec::new();
        let mut ok = true;
        for name in ["sf_gamma0", "of_gamma0"] {
            let sweep = art.sweep(name)?;
            let rates = sweep_rates(&sweep).map_err(|e| format!("{name}: {e}"))?;
            let sorted = rates.windows(2).all(|w| w[1] >= w[0] - 1e-9);
            ok &= sorted;
            details.push(format!(
                "{name}: rates [{}]{}",
                rates.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>().join(", "),
                if sorted { "" } else { " NOT nondecreasing" }
            ));
        }
        Ok((ok, details.join("; ")))
    })();
    result(7, "decay rate ordering in gamma0", outcome)
}

fn criterion_gamma1_floor(art: &Artifacts<'_>) -> CriterionResult {
    let outcome = (|| {
        let mut details = Vec::new();
        let mut ok = true;
        for mode in ["sf", "of"] {
            let zero = art.sweep(&format!("{mode}_gamma1_0"))?;
            let ten = art.sweep(&format!("{mode}_gamma1_10"))?;
            let r0 = sweep_rates(&zero).map_err(|e| format!("{mode}_gamma1_0: {e}"))?;
            let r10 = sweep_rates(&ten).map_err(|e| format!("{mode}_gamma1_10: {e}"))?;
            let min0 = r0.iter().cloned().fold(f64::INFINITY, f64::min);
            let min10 = r10.iter().cloned().fold(f64::INFINITY, f64::min);
            ok &= min10 > min0;
            details.push(format!("{mode}: min rate {min10:.3} at gamma1=10 vs {min0:.3} at 0"));
        }
        Ok((ok, details.join("; ")))
    })();
    result(8, "gamma1 sets the minimum rate", outcome)
}

fn criterion_sign_independence(art: &Artifacts<'_>) -> CriterionResult {
    let outcome = (|| {
        let mut details = Vec::new();
        let mut ok = true;
        for name in ["sf_fig2", "of_fig7"] {
            let run = art.run(name)?;
            let gap: f64 = run
                .summary
                .theta_hat_final
                .iter()
                .zip(&run.summary.theta_star)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            ok &= gap <= 1e-2;
            details.push(format!("{name}: |theta_hat - theta_star| = {gap:.3e}"));
        }
        Ok((ok, details.join("; ")))
    })();
    result(9, "gain-sign independence", outcome)
}

fn criterion_stabilization(art: &Artifacts<'_>) -> CriterionResult {
    let outcome = (|| {
        let mut details = Vec::new();
        let mut ok = true;
        for name in ["sf_fig3", "of_fig8"] {
            let run = art.run(name)?;
            let norm = run.summary.final_state_norm;
            ok &= norm <= 1e-3;
            details.push(format!("{name}: final state/output magnitude {norm:.3e}"));
        }
        Ok((ok, details.join("; ")))
    })();
    result(10, "stabilization mode", outcome)
}

/// Deterministic uniform generator in `[-1, 1]` for fuzzing without a
/// dependency.
struct Lcg(u64);

impl Lcg {
    fn next_f64(&mut self) -> f64 {
        // 64-bit LCG constants from Knuth.
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    }
}

fn criterion_numerics(art: &Artifacts<'_>) -> CriterionResult {
    let mut rng = Lcg(0x9e3779b97f4a7c15);
    let mut worst_adj: f64 = 0.0;
    for case in 0..1000 {
        let n = 1 + case % 8;
        let m = Matrix::from_fn(n, n, |_, _| rng.next_f64());
        let adj = adjugate(&m).unwrap();
        let d = det(&m).unwrap();
        let dev = (adj * &m - Matrix::identity(n, n) * d).abs().max();
        worst_adj = worst_adj.max(dev / m.norm().powi(n as i32).max(1.0));
    }

    let mut worst_eig: f64 = 0.0;
    for case in 0..50 {
        let n = 1 + case % 10;
        let w = Vector::from_fn(n, |_, _| rng.next_f64() * 10.0);
        let outer = &w * w.transpose();
        let max_eig = outer
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let expected = max_eig_outer(&w);
        worst_eig = worst_eig.max((expected - max_eig).abs() / expected.max(1e-30));
    }

    let mut worst_lyap: f64 = 0.0;
    for _ in 0..20 {
        let n = 3;
        let m = Matrix::from_fn(n, n, |_, _| rng.next_f64());
        let k = Matrix::from_fn(n, n, |_, _| rng.next_f64());
        let a = -(m.transpose() * &m + Matrix::identity(n, n)) + (&k - k.transpose());
        let q = Matrix::identity(n, n);
        let p = solve_lyapunov(&a, &q).unwrap();
        worst_lyap = worst_lyap.max((&a * &p + &p * a.transpose() + &q).norm());
    }

    // Bit-identical rerun of the echoed tracking scenario.
    let repro = (|| -> Result<bool> {
        let scenario = load_scenario(&art.root.join("sf_fig1").join("scenario.json"))?;
        let outcome = run_scenario(&scenario)?;
        let fresh = art.root.join("sf_fig1").join("trace_rerun.csv");
        write_trace_csv(&outcome.trace, &fresh)?;
        let identical =
            std::fs::read(&fresh)? == std::fs::read(art.root.join("sf_fig1").join("trace.csv"))?;
        std::fs::remove_file(&fresh)?;
        Ok(identical)
    })();

    let outcome = match repro {
        Err(e) => Err(format!("sf_fig1 artifacts needed for the rerun check: {e}")),
        Ok(identical) => {
            let ok =
                worst_adj <= 1e-9 && worst_eig <= 1e-12 && worst_lyap <= 1e-9 && identical;
            Ok((
                ok,
                format!(
                    "adjugate dev {worst_adj:.1e}, spectrum dev {worst_eig:.1e}, Lyapunov residual {worst_lyap:.1e}, rerun identical: {identical}"
                ),
            ))
        }
    };
    result(11, "numerics property suite", outcome)
}

fn criterion_baseline_contrast(art: &Artifacts<'_>) -> CriterionResult {
    let outcome = (|| {
        let baseline = art.run("sf_baseline")?;
        let new_law = art.run("sf_fig1")?;
        let ratio =
            baseline.summary.theta_tilde_final_norm / baseline.summary.theta_tilde_initial_norm;
        let new_ratio =
            new_law.summary.theta_tilde_final_norm / new_law.summary.theta_tilde_initial_norm;
        let ok = ratio > 0.5 && new_ratio <= 1e-2 && baseline.summary.aborted.is_none();
        Ok((
            ok,
            format!("baseline keeps {ratio:.2} of the parameter error, normalized law {new_ratio:.1e}"),
        ))
    })();
    result(12, "baseline vs normalized contrast", outcome)
}

/// Evaluates every acceptance criterion against the artifacts under
/// `out_dir` (as produced by the campaign described in the README) and
/// writes `acceptance_report.json` next to them.
pub fn check_acceptance(out_dir: &Path) -> Result<AcceptanceReport> {
    let art = Artifacts { root: out_dir };

    let criteria = vec![
        criterion_oracle(1, "regression oracle (state fb)", &art, "sf_fig1", |s| {
            let expected = [-6.0, -3.0, 4.0];
            let gap: f64 = s
                .theta_star
                .iter()
                .zip(expected)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if gap <= 1e-9 {
                Ok(())
            } else {
                Err(format!("ideal gains {:?} differ from [-6, -3, 4]", s.theta_star))
            }
        }),
        criterion_oracle(2, "regression oracle (output fb)", &art, "of_fig6", |s| {
            let k4 = s.theta_star.first().copied().unwrap_or(f64::NAN);
            if (k4 - 4.0).abs() <= 1e-12 {
                Ok(())
            } else {
                Err(format!("k4 = {k4} differs from gain ratio 4"))
            }
        }),
        criterion_monotonicity(&art),
        criterion_convergence(&art),
        criterion_bounded_forgetting(),
        criterion_exponential_forgetting(),
        criterion_gamma0_ordering(&art),
        criterion_gamma1_floor(&art),
        criterion_sign_independence(&art),
        criterion_stabilization(&art),
        criterion_numerics(&art),
        criterion_baseline_contrast(&art),
    ];

    let report = AcceptanceReport { criteria };
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(out_dir.join("acceptance_report.json"), json)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::experiment::{run_experiment, ExperimentOptions};
    use crate::harness::scenario::preset;

    #[test]
    fn missing_runs_are_reported_not_run() {
        let dir = tempfile::tempdir().unwrap();
        let report = check_acceptance(dir.path()).unwrap();
        let c3 = report.criteria.iter().find(|c| c.id == 3).unwrap();
        assert_eq!(c3.status, CriterionStatus::NotRun);
        assert!(c3.details.contains("not run"));
        assert!(!report.all_passed());
        assert!(dir.path().join("acceptance_report.json").exists());
    }

    #[test]
    fn tampered_trace_fails_monotonicity() {
        let dir = tempfile::tempdir().unwrap();
        let mut scenario = preset("sf_fig1").unwrap();
        scenario.t_end = 6.0;
        for name in NORMALIZED_PRESETS {
            let mut s = scenario.clone();
            s.name = name.to_string();
            run_experiment(&s, &dir.path().join(name), &ExperimentOptions::default()).unwrap();
        }
        // Push one recorded parameter sample away from its ideal value.
        let victim = dir.path().join("sf_fig2").join("trace.csv");
        let text = std::fs::read_to_string(&victim).unwrap();
        let mut lines: Vec<String> = text.lines().map(|l| l.to_string()).collect();
        let idx = lines.len() / 2;
        let mut fields: Vec<String> = lines[idx].split(',').map(|s| s.to_string()).collect();
        fields[5] = "100.0".into(); // a theta_hat column
        lines[idx] = fields.join(",");
        std::fs::write(&victim, lines.join("\n") + "\n").unwrap();

        let art = Artifacts { root: dir.path() };
        let c3 = criterion_monotonicity(&art);
        assert_eq!(c3.status, CriterionStatus::Fail);
        assert!(c3.details.contains("sf_fig2"), "details: {}", c3.details);
    }
}
