//! Plant and reference-model realizations, the closed-loop run loops for the
//! state- and output-feedback problems, and trace recording.
//!
//! A run is strictly single-threaded and deterministic: fixed-step Euler for
//! every dynamic quantity, no randomness anywhere. The loops keep per-step
//! diagnostics at full rate (regression-oracle residual, elementwise
//! parameter-error monotonicity, tracking-error consistency) while the
//! recorded trace may be decimated.

use serde::{Deserialize, Serialize};

use crate::adaptation::{
    ideal_gains_of, ideal_gains_sf, AdaptiveLaw, BaselineLaw, NormalizedRegression,
};
use crate::error::{Error, Result};
use crate::numerics::{is_hurwitz, max_eig_outer, solve_lyapunov, IntegratorConfig, Matrix, Vector};
use crate::output_feedback::{OutputFeedbackConfig, OutputFeedbackPipeline};
use crate::polynomial::Polynomial;
use crate::signal::ReferenceSignal;
use crate::state_feedback::{StateFeedbackConfig, StateFeedbackPipeline};

/// State-space plant `x' = A x + B u` with measurable state.
#[derive(Debug, Clone)]
pub struct LtiStatePlant {
    pub a: Matrix,
    pub b: Vector,
    pub x0: Vector,
}

impl LtiStatePlant {
    pub fn new(a: Matrix, b: Vector, x0: Vector) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.len() != n || x0.len() != n {
            return Err(Error::Dimension("plant matrices have inconsistent dims".into()));
        }
        // Controllability check: for a single input the controllability
        // matrix is square, so a rank test reduces to a determinant.
        let mut ctrb = Matrix::zeros(n, n);
        let mut col = b.clone();
        for j in 0..n {
            ctrb.column_mut(j).copy_from(&col);
            col = &a * col;
        }
        let d = crate::numerics::det(&ctrb)?;
        let scale = a.norm().max(1.0).powi(n as i32 - 1) * b.norm().max(1.0).powi(n as i32);
        if d.abs() <= 1e-12 * scale {
            return Err(Error::Config("(A, B) is not controllable".into()));
        }
        Ok(Self { a, b, x0 })
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }
}

/// Observer-canonical realization of a strictly proper transfer function
/// `num(p) / den(p)` with monic `den`:
///
/// ```text
/// A = [-a | I; 0],  B = [0; num coefficients],  y = x_1
/// ```
pub fn realize_observer_form(num_descending: &[f64], den: &Polynomial) -> Result<(Matrix, Vector)> {
    let n = den.degree();
    let m1 = num_descending.len();
    if n == 0 || m1 > n {
        return Err(Error::Config(format!(
            "transfer function must be strictly proper: deg(num) = {}, deg(den) = {n}",
            m1 as i64 - 1
        )));
    }
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        // den = p^n + a_{n-1} p^{n-1} + ... + a_0, ascending storage.
        a[(i, 0)] = -den.coeffs()[n - 1 - i] / den.leading();
        if i + 1 < n {
            a[(i, i + 1)] = 1.0;
        }
    }
    let mut b = Vector::zeros(n);
    for (k, &c) in num_descending.iter().enumerate() {
        b[n - m1 + k] = c;
    }
    Ok((a, b))
}

/// SISO plant given as `y = b_m Z(p) / R(p) u` with monic Hurwitz `Z`,
/// realized in observer canonical form.
#[derive(Debug, Clone)]
pub struct TransferFunctionPlant {
    pub b_m: f64,
    pub z: Polynomial,
    pub r: Polynomial,
    /// Denominator coefficients `[a_{n-1}, ..., a_0]`.
    pub a_vec: Vector,
    /// Numerator coefficients `[b_m, ..., b_0]` (i.e. `b_m * Z`).
    pub b_vec: Vector,
    pub a_o: Matrix,
    pub b_o: Vector,
    pub x0: Vector,
}

impl TransferFunctionPlant {
    pub fn new(b_m: f64, z: Polynomial, r: Polynomial, y0: f64) -> Result<Self> {
        if b_m == 0.0 {
            return Err(Error::Config("plant gain b_m must be nonzero".into()));
        }
        if !z.is_monic() || !r.is_monic() {
            return Err(Error::Config("plant polynomials Z and R must be monic".into()));
        }
        if z.degree() >= r.degree() {
            return Err(Error::Config("plant must be strictly proper (deg Z < deg R)".into()));
        }
        if !z.hurwitz() {
            return Err(Error::Config("plant numerator Z must be Hurwitz (minimum phase)".into()));
        }
        let n = r.degree();
        let m = z.degree();
        let a_vec = Vector::from_fn(n, |i, _| r.coeffs()[n - 1 - i]);
        let num_descending: Vec<f64> = (0..=m).map(|k| b_m * z.coeffs()[m - k]).collect();
        let b_vec = Vector::from_vec(num_descending.clone());
        let (a_o, b_o) = realize_observer_form(&num_descending, &r)?;
        let mut x0 = Vector::zeros(n);
        x0[0] = y0;
        Ok(Self { b_m, z, r, a_vec, b_vec, a_o, b_o, x0 })
    }

    pub fn order(&self) -> usize {
        self.r.degree()
    }
}

/// Reference model in state form (state-feedback problems).
#[derive(Debug, Clone)]
pub struct StateReference {
    pub a_ref: Matrix,
    pub b_ref: Vector,
    pub x0: Vector,
}

impl StateReference {
    pub fn new(a_ref: Matrix, b_ref: Vector, x0: Vector) -> Result<Self> {
        if !is_hurwitz(&a_ref) {
            return Err(Error::Config("a_ref is not Hurwitz".into()));
        }
        if a_ref.ncols() != b_ref.len() || x0.len() != b_ref.len() {
            return Err(Error::Dimension("reference model dims are inconsistent".into()));
        }
        Ok(Self { a_ref, b_ref, x0 })
    }
}

/// Reference model in transfer form (output-feedback problems), realized in
/// observer canonical form.
#[derive(Debug, Clone)]
pub struct TransferReference {
    pub b_ref: f64,
    pub z_ref: Polynomial,
    pub r_ref: Polynomial,
    pub a_o: Matrix,
    pub b_o: Vector,
    pub x0: Vector,
}

impl TransferReference {
    pub fn new(b_ref: f64, z_ref: Polynomial, r_ref: Polynomial, y0: f64) -> Result<Self> {
        if !z_ref.hurwitz() || !r_ref.hurwitz() {
            return Err(Error::Config("reference polynomials must be Hurwitz".into()));
        }
        let m = z_ref.degree();
        let num: Vec<f64> = (0..=m).map(|k| b_ref * z_ref.coeffs()[m - k]).collect();
        let (a_o, b_o) = realize_observer_form(&num, &r_ref)?;
        let n = r_ref.degree();
        let mut x0 = Vector::zeros(n);
        x0[0] = y0;
        Ok(Self { b_ref, z_ref, r_ref, a_o, b_o, x0 })
    }
}

/// Either adaptation law, as selected by a scenario.
#[derive(Debug, Clone)]
pub enum LawConfig {
    /// The normalized law with its gain schedule and forgetting rate.
    Normalized { gamma0: f64, gamma1: f64, sigma: f64, omega_floor: f64 },
    /// Classical gradient baseline with explicit gain and Lyapunov weight.
    Baseline { gamma: Matrix, q: Matrix },
}

impl LawConfig {
    pub fn is_baseline(&self) -> bool {
        matches!(self, Self::Baseline { .. })
    }
}

/// Time-indexed record of a run. `rows` follow the layout returned by
/// [`SimulationTrace::header`]; stride-decimated when requested.
#[derive(Debug, Clone)]
pub struct SimulationTrace {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub n_state: usize,
    pub n_theta: usize,
}

impl SimulationTrace {
    fn new(state_names: &[String], n_theta: usize) -> Self {
        let mut header = vec!["t".to_string()];
        for name in state_names {
            header.push(name.clone());
        }
        for name in state_names {
            header.push(format!("{name}_ref"));
        }
        for i in 0..n_theta {
            header.push(format!("theta_hat{}", i + 1));
        }
        header.push("Omega".into());
        header.push("lambda_max".into());
        header.push("xi_norm".into());
        header.push("Delta".into());
        Self { header, rows: Vec::new(), n_state: state_names.len(), n_theta }
    }

    pub fn idx_t(&self) -> usize {
        0
    }

    pub fn idx_state(&self) -> usize {
        1
    }

    pub fn idx_reference(&self) -> usize {
        1 + self.n_state
    }

    pub fn idx_theta(&self) -> usize {
        1 + 2 * self.n_state
    }

    pub fn idx_omega(&self) -> usize {
        1 + 2 * self.n_state + self.n_theta
    }

    pub fn idx_lambda(&self) -> usize {
        self.idx_omega() + 1
    }

    pub fn idx_xi(&self) -> usize {
        self.idx_omega() + 2
    }

    pub fn idx_delta(&self) -> usize {
        self.idx_omega() + 3
    }

    pub fn column(&self, idx: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[idx]).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        self.column(0)
    }
}

/// Full-rate scalar series kept for summary statistics regardless of the
/// trace decimation.
#[derive(Debug, Clone, Default)]
pub struct FullRateSeries {
    pub dt: f64,
    pub xi_norm: Vec<f64>,
    pub theta_tilde_norm: Vec<f64>,
    pub delta: Vec<f64>,
}

/// Per-step diagnostics folded online over the whole run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunStats {
    /// `max |Y - Delta * theta_star| / (1 + |Delta|)` over all samples.
    pub oracle_residual_max: f64,
    /// Largest per-step increase of any `|theta_tilde_i|`.
    pub mono_violation_max: f64,
    /// Parameter-error sign flips at non-negligible amplitude.
    pub sign_flips: usize,
    /// `sup_t ||xi(t)||`.
    pub xi_max: f64,
    /// Worst finite-difference residual of the tracking-error dynamics,
    /// relative to its Euler-truncation tolerance (state feedback only).
    pub consistency_ratio_max: Option<f64>,
}

impl Default for RunStats {
    fn default() -> Self {
        Self {
            oracle_residual_max: 0.0,
            mono_violation_max: 0.0,
            sign_flips: 0,
            xi_max: 0.0,
            consistency_ratio_max: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AbortInfo {
    pub t: f64,
    pub what: String,
}

/// Everything a run produces: the (possibly decimated) trace, full-rate
/// summary series, online diagnostics, the oracle gains, and the abort
/// marker when the run overflowed.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: SimulationTrace,
    pub series: FullRateSeries,
    pub stats: RunStats,
    pub theta_star: Vector,
    pub aborted: Option<AbortInfo>,
}

/// State-feedback experiment description.
#[derive(Debug, Clone)]
pub struct SfExperiment {
    pub plant: LtiStatePlant,
    pub reference: StateReference,
    pub signal: ReferenceSignal,
    pub pipeline: StateFeedbackConfig,
    pub law: LawConfig,
    pub theta0: Vector,
    pub integrator: IntegratorConfig,
    pub record_stride: usize,
}

/// Output-feedback experiment description.
#[derive(Debug, Clone)]
pub struct OfExperiment {
    pub plant: TransferFunctionPlant,
    pub reference: TransferReference,
    pub signal: ReferenceSignal,
    pub pipeline: OutputFeedbackConfig,
    pub law: LawConfig,
    pub theta0: Vector,
    pub integrator: IntegratorConfig,
    pub record_stride: usize,
}

enum RunLaw {
    Normalized { law: AdaptiveLaw, reg: NormalizedRegression },
    Baseline(BaselineLaw),
}

impl RunLaw {
    fn theta_hat(&self) -> &Vector {
        match self {
            Self::Normalized { law, .. } => law.theta_hat(),
            Self::Baseline(law) => law.theta_hat(),
        }
    }

    fn omega_value(&self) -> f64 {
        match self {
            Self::Normalized { reg, .. } => reg.omega(),
            Self::Baseline(_) => 0.0,
        }
    }
}

struct Diagnostics {
    stats: RunStats,
    prev_tilde: Option<Vector>,
    tilde0: Vector,
    theta_scale: f64,
}

impl Diagnostics {
    fn new(theta0: &Vector, theta_star: &Vector) -> Self {
        Self {
            stats: RunStats::default(),
            prev_tilde: None,
            tilde0: theta0 - theta_star,
            theta_scale: theta_star.norm().max(1.0),
        }
    }

    fn update(&mut self, tilde: &Vector, xi_norm: f64, oracle_residual: f64) {
        let s = &mut self.stats;
        s.oracle_residual_max = s.oracle_residual_max.max(oracle_residual);
        s.xi_max = s.xi_max.max(xi_norm);
        if let Some(prev) = &self.prev_tilde {
            for i in 0..tilde.len() {
                s.mono_violation_max = s.mono_violation_max.max(tilde[i].abs() - prev[i].abs());
                // Sign flips below 1e-9 of the parameter scale are floating
                // point noise around convergence, not law behavior.
                if tilde[i].abs() > 1e-9 * self.theta_scale
                    && self.tilde0[i] != 0.0
                    && tilde[i].signum() != self.tilde0[i].signum()
                {
                    s.sign_flips += 1;
                }
            }
        }
        self.prev_tilde = Some(tilde.clone());
    }
}

/// Runs the state-feedback closed loop. Numeric overflow aborts the run and
/// returns the partial trace together with the offending time.
pub fn run_sf(exp: &SfExperiment) -> Result<RunOutcome> {
    let n = exp.plant.order();
    if exp.theta0.len() != n + 1 {
        return Err(Error::Config(format!(
            "theta0 must have n + 1 = {} entries, got {}",
            n + 1,
            exp.theta0.len()
        )));
    }
    if exp.theta0[n] == 0.0 {
        return Err(Error::Config("initial reference gain k_r(0) must be nonzero".into()));
    }
    if exp.record_stride == 0 {
        return Err(Error::Config("record_stride must be >= 1".into()));
    }
    exp.integrator.validate()?;

    let theta_star =
        ideal_gains_sf(&exp.plant.a, &exp.plant.b, &exp.reference.a_ref, &exp.reference.b_ref)?;
    let mut pipeline = StateFeedbackPipeline::new(&exp.pipeline)?;
    let mut law = match &exp.law {
        LawConfig::Normalized { gamma0, gamma1, sigma, omega_floor } => RunLaw::Normalized {
            law: AdaptiveLaw::new(exp.theta0.clone(), *gamma0, *gamma1, *omega_floor)?,
            reg: NormalizedRegression::new(*sigma, n + 1)?,
        },
        LawConfig::Baseline { gamma, q } => {
            // The Lyapunov function of the classical law weights the error by
            // P solving A_ref^T P + P A_ref = -Q.
            let p = solve_lyapunov(&exp.reference.a_ref.transpose(), q)?;
            RunLaw::Baseline(BaselineLaw::new(gamma.clone(), p, exp.theta0.clone())?)
        }
    };

    let dt = exp.integrator.dt;
    let steps = exp.integrator.steps();
    let state_names: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    let mut trace = SimulationTrace::new(&state_names, n + 1);
    let mut series = FullRateSeries { dt, ..Default::default() };
    let mut diag = Diagnostics::new(&exp.theta0, &theta_star);
    let mut aborted = None;

    let mut x = exp.plant.x0.clone();
    let mut x_ref = exp.reference.x0.clone();
    let mut prev_consistency: Option<(Vector, Vector)> = None; // (e_ref, rhs)

    'run: for k in 0..=steps {
        let t = k as f64 * dt;
        let r = exp.signal.eval(t);
        let theta_hat = law.theta_hat().clone();
        let mut omega_vec = Vector::zeros(n + 1);
        omega_vec.rows_mut(0, n).copy_from(&x);
        omega_vec[n] = r;
        let u = theta_hat.dot(&omega_vec);

        let pair = match pipeline.process(&x, u, t, dt) {
            Ok(p) => p,
            Err(Error::Overflow { t, what }) => {
                aborted = Some(AbortInfo { t, what });
                break 'run;
            }
            Err(e) => return Err(e),
        };

        // Evaluation-layer quantities (the controller never sees these).
        let tilde = &theta_hat - &theta_star;
        let e_ref = &x - &x_ref;
        let xi_norm = (e_ref.norm_squared() + tilde.norm_squared()).sqrt();
        let oracle_residual = (&pair.y - &theta_star * pair.delta).norm() / (1.0 + pair.delta.abs());
        diag.update(&tilde, xi_norm, oracle_residual);

        // Finite-difference consistency of the error dynamics.
        let rhs = &exp.reference.a_ref * &e_ref + &exp.plant.b * tilde.dot(&omega_vec);
        if let Some((prev_e, prev_rhs)) = &prev_consistency {
            let fd = (&e_ref - prev_e) / dt;
            let viol = (&fd - prev_rhs).norm();
            let tol = 10.0 * dt * (1.0 + prev_e.norm() + prev_rhs.norm());
            let ratio = viol / tol;
            diag.stats.consistency_ratio_max =
                Some(diag.stats.consistency_ratio_max.unwrap_or(0.0).max(ratio));
        }
        prev_consistency = Some((e_ref.clone(), rhs));

        series.xi_norm.push(xi_norm);
        series.theta_tilde_norm.push(tilde.norm());
        series.delta.push(pair.delta);

        if k % exp.record_stride == 0 || k == steps {
            let mut row = Vec::with_capacity(trace.header.len());
            row.push(t);
            row.extend(x.iter());
            row.extend(x_ref.iter());
            row.extend(theta_hat.iter());
            row.push(law.omega_value());
            row.push(max_eig_outer(&omega_vec));
            row.push(xi_norm);
            row.push(pair.delta);
            trace.rows.push(row);
        }

        if k == steps {
            break;
        }

        match &mut law {
            RunLaw::Normalized { law, reg } => {
                if let Err(Error::Overflow { t, what }) =
                    law.step(reg.omega(), &reg.upsilon(), &omega_vec, t, dt)
                {
                    aborted = Some(AbortInfo { t, what });
                    break 'run;
                }
                reg.step(&pair, dt);
            }
            RunLaw::Baseline(law) => law.sf_step(&omega_vec, &e_ref, &exp.plant.b, dt)?,
        }

        x += (&exp.plant.a * &x + &exp.plant.b * u) * dt;
        x_ref += (&exp.reference.a_ref * &x_ref + &exp.reference.b_ref * r) * dt;
        if !x.iter().all(|v| v.is_finite()) || !x_ref.iter().all(|v| v.is_finite()) {
            aborted = Some(AbortInfo { t: t + dt, what: "plant or reference state overflowed".into() });
            break 'run;
        }
    }

    Ok(RunOutcome { trace, series, stats: diag.stats, theta_star, aborted })
}

/// Runs the output-feedback closed loop.
pub fn run_of(exp: &OfExperiment) -> Result<RunOutcome> {
    let cfg = &exp.pipeline;
    let n = cfg.n;
    if exp.plant.order() != n || exp.plant.z.degree() != cfg.m {
        return Err(Error::Config("plant orders do not match the pipeline configuration".into()));
    }
    if exp.theta0.len() != 2 * n {
        return Err(Error::Config(format!(
            "theta0 must have 2n = {} entries, got {}",
            2 * n,
            exp.theta0.len()
        )));
    }
    if exp.theta0[0] == 0.0 {
        return Err(Error::Config("initial reference gain k_4(0) must be nonzero".into()));
    }
    if exp.record_stride == 0 {
        return Err(Error::Config("record_stride must be >= 1".into()));
    }
    exp.integrator.validate()?;

    let theta_star = ideal_gains_of(&exp.plant.a_vec, &exp.plant.b_vec, cfg)?;
    let mut pipeline = OutputFeedbackPipeline::new(cfg)?;
    let mut law = match &exp.law {
        LawConfig::Normalized { gamma0, gamma1, sigma, omega_floor } => RunLaw::Normalized {
            law: AdaptiveLaw::new(exp.theta0.clone(), *gamma0, *gamma1, *omega_floor)?,
            reg: NormalizedRegression::new(*sigma, 2 * n)?,
        },
        LawConfig::Baseline { gamma, q } => {
            let p = solve_lyapunov(&exp.reference.a_o.transpose(), q)?;
            RunLaw::Baseline(BaselineLaw::new(gamma.clone(), p, exp.theta0.clone())?)
        }
    };

    let controller = cfg.controller_filter();
    let v_dim = n - 1;
    let mut v1 = Vector::zeros(v_dim);
    let mut v2 = Vector::zeros(v_dim);

    // Tracking-error model for the evaluation layer: the transfer from the
    // parametric mismatch theta_tilde^T omega to the output error is
    // b_m Z_ref / R_ref; its observer-form state is the e_ref whose norm the
    // augmented error uses. The controller itself never sees it.
    let m_star = exp.reference.z_ref.degree();
    let err_num: Vec<f64> = (0..=m_star)
        .map(|k| exp.plant.b_m * exp.reference.z_ref.coeffs()[m_star - k])
        .collect();
    let (a_err, b_err) = realize_observer_form(&err_num, &exp.reference.r_ref)?;
    let mut e_model = Vector::zeros(a_err.nrows());

    let dt = exp.integrator.dt;
    let steps = exp.integrator.steps();
    let mut trace = SimulationTrace::new(&["y".to_string()], 2 * n);
    let mut series = FullRateSeries { dt, ..Default::default() };
    let mut diag = Diagnostics::new(&exp.theta0, &theta_star);
    let mut aborted = None;

    let mut x = exp.plant.x0.clone();
    let mut x_ref = exp.reference.x0.clone();

    'run: for k in 0..=steps {
        let t = k as f64 * dt;
        let r = exp.signal.eval(t);
        let y = x[0];
        let y_ref = x_ref[0];
        let theta_hat = law.theta_hat().clone();

        let mut omega_vec = Vector::zeros(2 * n);
        omega_vec[0] = r;
        omega_vec.rows_mut(1, v_dim).copy_from(&v1);
        omega_vec.rows_mut(1 + v_dim, v_dim).copy_from(&v2);
        omega_vec[2 * n - 1] = y;
        let u = theta_hat.dot(&omega_vec);

        let pair = match pipeline.process(u, y, t, dt) {
            Ok(p) => p,
            Err(Error::Overflow { t, what }) => {
                aborted = Some(AbortInfo { t, what });
                break 'run;
            }
            Err(e) => return Err(e),
        };

        let tilde = &theta_hat - &theta_star;
        let eps = y - y_ref;
        let xi_norm = (e_model.norm_squared() + tilde.norm_squared()).sqrt();
        let oracle_residual = (&pair.y - &theta_star * pair.delta).norm() / (1.0 + pair.delta.abs());
        diag.update(&tilde, xi_norm, oracle_residual);

        series.xi_norm.push(xi_norm);
        series.theta_tilde_norm.push(tilde.norm());
        series.delta.push(pair.delta);

        if k % exp.record_stride == 0 || k == steps {
            let mut row = Vec::with_capacity(trace.header.len());
            row.push(t);
            row.push(y);
            row.push(y_ref);
            row.extend(theta_hat.iter());
            row.push(law.omega_value());
            row.push(max_eig_outer(&omega_vec));
            row.push(xi_norm);
            row.push(pair.delta);
            trace.rows.push(row);
        }

        if k == steps {
            break;
        }

        match &mut law {
            RunLaw::Normalized { law, reg } => {
                if let Err(Error::Overflow { t, what }) =
                    law.step(reg.omega(), &reg.upsilon(), &omega_vec, t, dt)
                {
                    aborted = Some(AbortInfo { t, what });
                    break 'run;
                }
                reg.step(&pair, dt);
            }
            RunLaw::Baseline(law) => law.of_step(&omega_vec, eps, dt)?,
        }

        x += (&exp.plant.a_o * &x + &exp.plant.b_o * u) * dt;
        x_ref += (&exp.reference.a_o * &x_ref + &exp.reference.b_o * r) * dt;
        e_model += (&a_err * &e_model + &b_err * tilde.dot(&omega_vec)) * dt;
        if let Some((lam, h)) = &controller {
            v1 += (lam * &v1 + h * u) * dt;
            v2 += (lam * &v2 + h * y) * dt;
        }
        if !x.iter().all(|v| v.is_finite()) || !x_ref.iter().all(|v| v.is_finite()) {
            aborted = Some(AbortInfo { t: t + dt, what: "plant or reference state overflowed".into() });
            break 'run;
        }
    }

    Ok(RunOutcome { trace, series, stats: diag.stats, theta_star, aborted })
}

/// Least-squares slope of `log(values)` against time over `window`.
/// Every sample inside the window must be strictly positive.
pub fn fit_decay_rate(ts: &[f64], values: &[f64], window: (f64, f64)) -> Result<f64> {
    if ts.len() != values.len() {
        return Err(Error::Dimension(format!(
            "{} time stamps but {} samples",
            ts.len(),
            values.len()
        )));
    }
    let mut pts = Vec::new();
    for (&t, &v) in ts.iter().zip(values) {
        if t >= window.0 && t <= window.1 {
            if v <= 0.0 {
                return Err(Error::Config(format!(
                    "nonpositive sample {v} at t = {t} inside the fit window"
                )));
            }
            pts.push((t, v.ln()));
        }
    }
    if pts.len() < 2 {
        return Err(Error::Config("fit window contains fewer than two samples".into()));
    }
    let n = pts.len() as f64;
    let mean_t = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, y) in pts {
        num += (t - mean_t) * (y - mean_y);
        den += (t - mean_t) * (t - mean_t);
    }
    if den == 0.0 {
        return Err(Error::Config("fit window has no time spread".into()));
    }
    Ok(num / den)
}

/// First time the running excitation integral of `delta` crosses `fraction`
/// of its final value; `None` when the signal never excites.
pub fn estimate_excitation_time(ts: &[f64], delta: &[f64], fraction: f64) -> Option<f64> {
    if ts.len() != delta.len() || ts.len() < 2 {
        return None;
    }
    let mut running = vec![0.0; ts.len()];
    for i in 1..ts.len() {
        let dt = ts[i] - ts[i - 1];
        running[i] =
            running[i - 1] + 0.5 * dt * (delta[i] * delta[i] + delta[i - 1] * delta[i - 1]);
    }
    let total = *running.last().unwrap();
    if total <= 0.0 {
        return None;
    }
    let threshold = fraction * total;
    for i in 0..ts.len() {
        if running[i] >= threshold {
            return Some(ts[i]);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, dvector};

    pub(crate) fn fig1_experiment() -> SfExperiment {
        let plant = LtiStatePlant::new(
            dmatrix![0.0, 1.0; 4.0, 2.0],
            dvector![0.0, 2.0],
            Vector::zeros(2),
        )
        .unwrap();
        let reference = StateReference::new(
            dmatrix![0.0, 1.0; -8.0, -4.0],
            dvector![0.0, 8.0],
            Vector::zeros(2),
        )
        .unwrap();
        let pipeline =
            StateFeedbackConfig::new(2, 1.0, reference.a_ref.clone(), reference.b_ref.clone());
        SfExperiment {
            plant,
            reference,
            signal: ReferenceSignal::Constant { amplitude: 1.0 },
            pipeline,
            law: LawConfig::Normalized { gamma0: 1.0, gamma1: 0.0, sigma: 0.5, omega_floor: 0.0 },
            theta0: dvector![0.0, 0.0, 1.0],
            integrator: IntegratorConfig { dt: 1e-4, t_end: 10.0 },
            record_stride: 100,
        }
    }

    pub(crate) fn fig6_experiment() -> OfExperiment {
        let plant = TransferFunctionPlant::new(
            2.0,
            Polynomial::one(),
            Polynomial::new(vec![-4.0, -2.0, 1.0]),
            0.0,
        )
        .unwrap();
        let reference = TransferReference::new(
            8.0,
            Polynomial::one(),
            Polynomial::new(vec![8.0, 4.0, 1.0]),
            0.0,
        )
        .unwrap();
        let pipeline = OutputFeedbackConfig::new(
            2,
            0,
            8.0,
            Polynomial::one(),
            Polynomial::new(vec![8.0, 4.0, 1.0]),
            None,
            dvector![20.0, 100.0],
            0.1,
        )
        .unwrap();
        OfExperiment {
            plant,
            reference,
            signal: ReferenceSignal::Constant { amplitude: 1.0 },
            pipeline,
            law: LawConfig::Normalized { gamma0: 1.0, gamma1: 0.0, sigma: 0.5, omega_floor: 0.0 },
            theta0: dvector![1.0, 0.0, 0.0, 0.0],
            integrator: IntegratorConfig { dt: 1e-4, t_end: 10.0 },
            record_stride: 100,
        }
    }

    #[test]
    fn observer_realization_matches_transfer_function() {
        let plant = TransferFunctionPlant::new(
            2.0,
            Polynomial::one(),
            Polynomial::new(vec![-4.0, -2.0, 1.0]),
            0.0,
        )
        .unwrap();
        assert_eq!(plant.a_o, dmatrix![2.0, 1.0; 4.0, 0.0]);
        assert_eq!(plant.b_o, dvector![0.0, 2.0]);
        assert_eq!(plant.a_vec, dvector![-2.0, -4.0]);
        assert_eq!(plant.b_vec, dvector![2.0]);
    }

    #[test]
    fn plant_rejects_non_minimum_phase() {
        // Z(p) = p - 1 has a right half-plane zero.
        let r = Polynomial::new(vec![1.0, 2.0, 1.0]);
        assert!(TransferFunctionPlant::new(1.0, Polynomial::new(vec![-1.0, 1.0]), r, 0.0).is_err());
    }

    #[test]
    fn plant_rejects_uncontrollable_pair() {
        let a = dmatrix![1.0, 0.0; 0.0, 2.0];
        let b = dvector![1.0, 0.0];
        assert!(LtiStatePlant::new(a, b, Vector::zeros(2)).is_err());
    }

    #[test]
    fn zero_error_fixed_point() {
        // theta_hat starts at the ideal gains with matched initial states:
        // the tracking error stays at rounding level and the law holds the
        // gains to the accuracy at which the earliest regression samples pin
        // them (the samples right at the excitation threshold are only
        // 1e-3-accurate, but carry negligible weight).
        let mut exp = fig1_experiment();
        exp.theta0 = dvector![-6.0, -3.0, 4.0];
        exp.integrator.t_end = 2.0;
        let out = run_sf(&exp).unwrap();
        assert!(out.aborted.is_none());
        assert!(out.stats.xi_max <= 1e-6, "xi_max = {}", out.stats.xi_max);
        let last = out.trace.rows.last().unwrap();
        for (i, v) in exp.theta0.iter().enumerate() {
            assert!((last[out.trace.idx_theta() + i] - *v).abs() <= 1e-6);
        }
    }

    #[test]
    fn ideal_static_law_tracks_reference_exactly() {
        // u forced to the ideal static law (adaptation effectively frozen by
        // a vanishing baseline gain): the matched closed loop and the
        // reference model are the same discrete recurrence up to rounding.
        let mut exp = fig1_experiment();
        exp.theta0 = dvector![-6.0, -3.0, 4.0];
        exp.law = LawConfig::Baseline {
            gamma: Matrix::identity(3, 3) * 1e-30,
            q: Matrix::identity(2, 2),
        };
        exp.integrator.t_end = 5.0;
        exp.signal = ReferenceSignal::Sinusoid { amplitude: 1.0, angular_frequency: 2.0, phase: 0.0 };
        let out = run_sf(&exp).unwrap();
        let idx_x = out.trace.idx_state();
        let idx_r = out.trace.idx_reference();
        for row in &out.trace.rows {
            let ex: f64 = (0..2)
                .map(|i| (row[idx_x + i] - row[idx_r + i]).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(ex <= 1e-9, "tracking error {ex}");
        }
    }

    #[test]
    fn sf_run_converges_toward_ideal_gains() {
        let out = run_sf(&fig1_experiment()).unwrap();
        assert!(out.aborted.is_none());
        let last = out.trace.rows.last().unwrap();
        let idx = out.trace.idx_theta();
        let theta_final = dvector![last[idx], last[idx + 1], last[idx + 2]];
        assert!((theta_final - &out.theta_star).norm() < 0.2);
        assert!(out.stats.oracle_residual_max <= 1e-5);
        assert!(out.stats.mono_violation_max <= 1e-12);
        assert_eq!(out.stats.sign_flips, 0);
        assert!(out.stats.consistency_ratio_max.unwrap() <= 1.0);
    }

    #[test]
    fn of_zero_error_fixed_point() {
        let mut exp = fig6_experiment();
        exp.theta0 = dvector![4.0, -6.0, -3.0, -15.0];
        exp.integrator.t_end = 2.0;
        let out = run_of(&exp).unwrap();
        assert!(out.aborted.is_none());
        // eps stays at machine zero and theta does not move.
        let last = out.trace.rows.last().unwrap();
        assert!((last[1] - last[2]).abs() <= 1e-9);
        for (i, v) in exp.theta0.iter().enumerate() {
            assert!((last[out.trace.idx_theta() + i] - *v).abs() <= 1e-9);
        }
    }

    #[test]
    fn of_run_converges_toward_ideal_gains() {
        let out = run_of(&fig6_experiment()).unwrap();
        assert!(out.aborted.is_none());
        let last = out.trace.rows.last().unwrap();
        let idx = out.trace.idx_theta();
        let theta_final = dvector![last[idx], last[idx + 1], last[idx + 2], last[idx + 3]];
        let gap = (&theta_final - &out.theta_star).norm();
        assert!(gap < 0.5, "final gains {theta_final:?} vs {:?}", out.theta_star);
        assert!(out.stats.oracle_residual_max <= 1e-5);
        assert!(out.stats.mono_violation_max <= 1e-12);
    }

    #[test]
    fn lambda_column_equals_squared_regressor_norm() {
        let out = run_sf(&fig1_experiment()).unwrap();
        let idx_l = out.trace.idx_lambda();
        let idx_x = out.trace.idx_state();
        for row in &out.trace.rows {
            // omega = [x; r] with r = 1.
            let expected = row[idx_x] * row[idx_x] + row[idx_x + 1] * row[idx_x + 1] + 1.0;
            assert_relative_eq!(row[idx_l], expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn overflow_aborts_with_partial_trace() {
        // A step size far beyond the stability limit of the explicit
        // integrator makes every state diverge geometrically.
        let mut exp = fig1_experiment();
        exp.integrator = IntegratorConfig { dt: 1.0, t_end: 1000.0 };
        let out = run_sf(&exp).unwrap();
        let info = out.aborted.expect("run should overflow");
        assert!(info.t > 0.0);
        assert!(!out.trace.rows.is_empty());
        let last_t = out.trace.rows.last().unwrap()[0];
        assert!(last_t <= info.t);
    }

    #[test]
    fn decay_rate_fitting() {
        let ts: Vec<f64> = (0..=1000).map(|k| k as f64 * 0.01).collect();
        let vals: Vec<f64> = ts.iter().map(|t| (-2.0 * t).exp()).collect();
        let slope = fit_decay_rate(&ts, &vals, (0.0, 10.0)).unwrap();
        assert_relative_eq!(slope, -2.0, epsilon = 1e-6);

        let consts: Vec<f64> = ts.iter().map(|_| 3.0).collect();
        let slope = fit_decay_rate(&ts, &consts, (0.0, 10.0)).unwrap();
        assert_relative_eq!(slope, 0.0, epsilon = 1e-12);

        let mut bad = vals.clone();
        bad[500] = 0.0;
        assert!(fit_decay_rate(&ts, &bad, (0.0, 10.0)).is_err());
    }

    #[test]
    fn excitation_time_estimate() {
        let ts: Vec<f64> = (0..=1000).map(|k| k as f64 * 0.01).collect();
        // A pulse of excitation between t = 1 and t = 2.
        let delta: Vec<f64> =
            ts.iter().map(|&t| if (1.0..2.0).contains(&t) { 1.0 } else { 0.0 }).collect();
        let te = estimate_excitation_time(&ts, &delta, 1e-6).unwrap();
        assert!((1.0..1.2).contains(&te), "t_e = {te}");

        let silent: Vec<f64> = ts.iter().map(|_| 0.0).collect();
        assert!(estimate_excitation_time(&ts, &silent, 1e-6).is_none());
    }
}
