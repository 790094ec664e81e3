//! Adaptive laws: the normalized law driven by the forgetting-filtered
//! regression, the classical gradient baselines it is compared against,
//! excitation diagnostics, and the ideal-gain oracles used for evaluation.

use crate::error::{Error, Result};
use crate::filters::ForgettingFilter;
use crate::numerics::{max_eig_outer, Matrix, Vector};
use crate::output_feedback::{matching_system, OutputFeedbackConfig};

/// One sample of the scalar-regressor equation `Y(t) = Delta(t) * theta`.
#[derive(Debug, Clone)]
pub struct RegressionPair {
    pub y: Vector,
    pub delta: f64,
}

impl RegressionPair {
    pub fn zero(dim: usize) -> Self {
        Self { y: Vector::zeros(dim), delta: 0.0 }
    }
}

/// The forgetting-filtered regression `(Omega, Upsilon)`:
///
/// ```text
/// Omega(t)   = integral_0^t e^{-sigma tau} Delta^2(tau)        d tau
/// Upsilon(t) = integral_0^t e^{-sigma tau} Delta(tau) Y(tau)   d tau
/// ```
///
/// Both integrals share one forgetting filter so they see identical weights;
/// `Omega` is nonnegative and nondecreasing by construction.
#[derive(Debug, Clone)]
pub struct NormalizedRegression {
    filter: ForgettingFilter,
    dim: usize,
}

impl NormalizedRegression {
    /// `dim` is the length of `Y` (and of the parameter vector).
    pub fn new(sigma: f64, dim: usize) -> Result<Self> {
        Ok(Self { filter: ForgettingFilter::new(sigma, dim + 1)?, dim })
    }

    pub fn sigma(&self) -> f64 {
        self.filter.sigma()
    }

    pub fn omega(&self) -> f64 {
        self.filter.out()[0]
    }

    pub fn upsilon(&self) -> Vector {
        self.filter.out().rows(1, self.dim).into_owned()
    }

    pub fn step(&mut self, pair: &RegressionPair, dt: f64) {
        debug_assert_eq!(pair.y.len(), self.dim);
        let mut input = Vector::zeros(self.dim + 1);
        input[0] = pair.delta * pair.delta;
        input.rows_mut(1, self.dim).copy_from(&(&pair.y * pair.delta));
        self.filter.step(&input, dt);
    }
}

/// Default numerical zero test for `Omega`: an exact zero compare, matching
/// the exact-arithmetic branch of the gain schedule. Adaptation must engage
/// at the first representable nonzero `Omega` — holding it back (e.g. with a
/// 1e-12 floor) lets an open-loop-unstable plant grow until the discrete
/// update `dt * gamma0 * lambda_max` is no longer contractive.
pub const DEFAULT_OMEGA_FLOOR: f64 = 0.0;

/// Gain schedule of the normalized law:
///
/// ```text
/// gamma = 1                                               if Omega <= floor
///       = (gamma0 * lambda_max(omega omega^T) + gamma1) / Omega^2  otherwise
/// ```
///
/// In the `Omega <= floor` branch the update vanishes anyway because `Omega`
/// multiplies it.
pub fn gamma_value(omega: f64, omega_vec: &Vector, gamma0: f64, gamma1: f64, omega_floor: f64) -> f64 {
    if omega <= omega_floor {
        1.0
    } else {
        (gamma0 * max_eig_outer(omega_vec) + gamma1) / (omega * omega)
    }
}

/// The normalized adaptive law
///
/// ```text
/// theta_hat' = -gamma * Omega * (Omega * theta_hat - Upsilon)
/// ```
///
/// Because `Upsilon = Omega * theta`, the parameter error obeys
/// `theta_tilde' = -gamma Omega^2 theta_tilde`, decaying elementwise without
/// ever changing sign. The law never reads the tracking error states.
#[derive(Debug, Clone)]
pub struct AdaptiveLaw {
    theta_hat: Vector,
    gamma0: f64,
    gamma1: f64,
    omega_floor: f64,
}

impl AdaptiveLaw {
    pub fn new(theta0: Vector, gamma0: f64, gamma1: f64, omega_floor: f64) -> Result<Self> {
        if !(gamma0 >= 1.0) {
            return Err(Error::Config(format!("gamma0 must be >= 1, got {gamma0}")));
        }
        if !(gamma1 >= 0.0) {
            return Err(Error::Config(format!("gamma1 must be >= 0, got {gamma1}")));
        }
        if !(omega_floor >= 0.0) {
            return Err(Error::Config(format!("omega_floor must be >= 0, got {omega_floor}")));
        }
        Ok(Self { theta_hat: theta0, gamma0, gamma1, omega_floor })
    }

    pub fn theta_hat(&self) -> &Vector {
        &self.theta_hat
    }

    pub fn gamma0(&self) -> f64 {
        self.gamma0
    }

    pub fn gamma1(&self) -> f64 {
        self.gamma1
    }

    pub fn omega_floor(&self) -> f64 {
        self.omega_floor
    }

    pub fn step(&mut self, omega: f64, upsilon: &Vector, omega_vec: &Vector, t: f64, dt: f64) -> Result<()> {
        if upsilon.len() != self.theta_hat.len() {
            return Err(Error::Dimension(format!(
                "upsilon has dim {}, theta_hat has dim {}",
                upsilon.len(),
                self.theta_hat.len()
            )));
        }
        // -gamma Omega (Omega theta_hat - Upsilon) with gamma from
        // gamma_value, evaluated so that Omega^2 never appears on its own:
        // right after excitation onset Omega can sit at denormal magnitudes
        // where Omega^2 underflows even though the normalized update
        // -(gamma0 lambda_max + gamma1)(theta_hat - Upsilon/Omega) is well
        // scaled. Upsilon/Omega is a convex combination of per-sample ratios
        // Y_i/Delta, so it stays bounded whenever Omega > 0.
        let update = if omega <= self.omega_floor {
            (upsilon - &self.theta_hat * omega) * (omega * dt)
        } else {
            let rate = self.gamma0 * max_eig_outer(omega_vec) + self.gamma1;
            (upsilon / omega - &self.theta_hat) * (rate * dt)
        };
        if !update.iter().all(|v| v.is_finite()) {
            return Err(Error::Overflow { t, what: "adaptive law update is not finite".into() });
        }
        self.theta_hat += update;
        Ok(())
    }
}

/// Classical gradient laws used as baselines.
///
/// State feedback: `theta_hat' = -Gamma * omega * (e_ref^T P B)`, with `P`
/// solving the Lyapunov equation for the reference model. Output feedback:
/// `theta_hat' = -Gamma * omega * eps`, valid only when the error transfer
/// function is strictly positive real; the harness marks non-SPR runs as
/// reference-only.
#[derive(Debug, Clone)]
pub struct BaselineLaw {
    gamma: Matrix,
    p: Matrix,
    theta_hat: Vector,
}

fn require_spd(m: &Matrix, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!("{what} must be square")));
    }
    if (m - m.transpose()).abs().max() > 1e-9 * m.norm().max(1.0) {
        return Err(Error::Config(format!("{what} must be symmetric")));
    }
    let min_eig = m
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if !(min_eig > 0.0) {
        return Err(Error::Config(format!("{what} must be positive definite (min eigenvalue {min_eig:.3e})")));
    }
    Ok(())
}

impl BaselineLaw {
    pub fn new(gamma: Matrix, p: Matrix, theta0: Vector) -> Result<Self> {
        require_spd(&gamma, "adaptive gain Gamma")?;
        require_spd(&p, "Lyapunov solution P")?;
        if gamma.nrows() != theta0.len() {
            return Err(Error::Dimension(format!(
                "Gamma is {}x{} but theta has dim {}",
                gamma.nrows(),
                gamma.ncols(),
                theta0.len()
            )));
        }
        Ok(Self { gamma, p, theta_hat: theta0 })
    }

    pub fn theta_hat(&self) -> &Vector {
        &self.theta_hat
    }

    pub fn p(&self) -> &Matrix {
        &self.p
    }

    pub fn sf_step(&mut self, omega_vec: &Vector, e_ref: &Vector, b: &Vector, dt: f64) -> Result<()> {
        if omega_vec.len() != self.theta_hat.len() || e_ref.len() != b.len() || e_ref.len() != self.p.nrows() {
            return Err(Error::Dimension("baseline state-feedback law: operand dims do not match".into()));
        }
        let scalar = (e_ref.transpose() * &self.p * b)[(0, 0)];
        self.theta_hat -= (&self.gamma * omega_vec) * (scalar * dt);
        Ok(())
    }

    pub fn of_step(&mut self, omega_vec: &Vector, eps: f64, dt: f64) -> Result<()> {
        if omega_vec.len() != self.theta_hat.len() {
            return Err(Error::Dimension("baseline output-feedback law: operand dims do not match".into()));
        }
        self.theta_hat -= (&self.gamma * omega_vec) * (eps * dt);
        Ok(())
    }
}

/// Ideal state-feedback gains solving the matching conditions
/// `A + B k_x = A_ref`, `B k_r = B_ref` in least squares. Returns
/// `[k_x^T, k_r]` or an error when the residual shows the conditions are
/// unsolvable.
pub fn ideal_gains_sf(a: &Matrix, b: &Vector, a_ref: &Matrix, b_ref: &Vector) -> Result<Vector> {
    let n = a.nrows();
    if a.ncols() != n || a_ref.nrows() != n || a_ref.ncols() != n || b.len() != n || b_ref.len() != n {
        return Err(Error::Dimension("ideal_gains_sf: operand dims do not match".into()));
    }
    let btb = b.norm_squared();
    let diff = a_ref - a;
    let scale = diff.norm().max(b_ref.norm()).max(1.0);
    if btb == 0.0 {
        if diff.norm() <= 1e-9 * scale && b_ref.norm() <= 1e-9 * scale {
            return Ok(Vector::zeros(n + 1));
        }
        return Err(Error::Solver("Erzberger conditions unsolvable: B = 0".into()));
    }
    let mut theta = Vector::zeros(n + 1);
    for j in 0..n {
        theta[j] = b.dot(&diff.column(j).into_owned()) / btb;
    }
    theta[n] = b.dot(b_ref) / btb;

    let kx = theta.rows(0, n).into_owned();
    let residual = ((b * kx.transpose()) - &diff).norm().max((b * theta[n] - b_ref).norm());
    if residual > 1e-9 * scale {
        return Err(Error::Solver(format!(
            "Erzberger conditions unsolvable: least-squares residual {residual:.3e}"
        )));
    }
    Ok(theta)
}

/// Ideal output-feedback gains `[k_4, k_1, k_2, k_3]` solving the
/// model-matching system built from the true plant coefficients
/// (`a = [a_{n-1}, ..., a_0]`, `b = [b_m, ..., b_0]`). The system is unique
/// and nonsingular for admissible plants; a singular system is reported as a
/// configuration error.
pub fn ideal_gains_of(a: &Vector, b: &Vector, cfg: &OutputFeedbackConfig) -> Result<Vector> {
    let (m, n_vec) = matching_system(1.0, a, b, cfg)?;
    m.clone()
        .lu()
        .solve(&n_vec)
        .ok_or_else(|| Error::Config("model-matching system is singular; gains are not unique".into()))
}

/// Excitation diagnostics for a windowed regressor record: the Gramian
/// `integral omega omega^T d tau` (trapezoidal) and its smallest eigenvalue,
/// which is the excitation level of the window.
#[derive(Debug, Clone)]
pub struct ExcitationReport {
    pub gramian: Matrix,
    pub level: f64,
    pub window: (f64, f64),
}

pub fn excitation_level(ts: &[f64], omegas: &[Vector]) -> Result<ExcitationReport> {
    if ts.len() != omegas.len() {
        return Err(Error::Dimension(format!(
            "{} time stamps but {} regressor samples",
            ts.len(),
            omegas.len()
        )));
    }
    if ts.len() < 2 {
        return Err(Error::Config("excitation window needs at least two samples".into()));
    }
    let dim = omegas[0].len();
    let mut gramian = Matrix::zeros(dim, dim);
    for i in 0..ts.len() - 1 {
        let dt = ts[i + 1] - ts[i];
        let a = &omegas[i] * omegas[i].transpose();
        let b = &omegas[i + 1] * omegas[i + 1].transpose();
        gramian += (a + b) * (0.5 * dt);
    }
    let level = gramian
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    Ok(ExcitationReport { gramian, level, window: (ts[0], *ts.last().unwrap()) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn gamma_branches() {
        assert_eq!(gamma_value(0.0, &dvector![1.0], 1.0, 0.0, 1e-12), 1.0);
        assert_relative_eq!(gamma_value(2.0, &dvector![3.0, 4.0], 1.0, 0.0, 1e-12), 6.25);
        assert_relative_eq!(gamma_value(1.0, &Vector::zeros(2), 1.0, 10.0, 1e-12), 10.0);
    }

    #[test]
    fn law_fixed_point_when_upsilon_matches() {
        let mut law = AdaptiveLaw::new(dvector![2.0, -1.0], 1.0, 0.0, 1e-12).unwrap();
        let omega = 3.0;
        let upsilon = law.theta_hat() * omega;
        law.step(omega, &upsilon, &dvector![1.0, 1.0], 0.0, 0.1).unwrap();
        assert_eq!(law.theta_hat(), &dvector![2.0, -1.0]);
    }

    #[test]
    fn law_scalar_single_step() {
        // Omega = 1, gamma forced to 1 via gamma0 = 1 and omega_vec = e1.
        let mut law = AdaptiveLaw::new(dvector![1.0], 1.0, 0.0, 1e-12).unwrap();
        law.step(1.0, &dvector![0.0], &dvector![1.0], 0.0, 0.1).unwrap();
        assert_relative_eq!(law.theta_hat()[0], 0.9);
    }

    #[test]
    fn law_matches_elementwise_exponential() {
        // Constant gamma * Omega^2 = 2 gives theta_tilde(1) = e^{-2} theta_tilde(0).
        let dt = 1e-4;
        let mut law = AdaptiveLaw::new(dvector![1.0], 1.0, 0.0, 1e-12).unwrap();
        let omega_vec = dvector![2.0f64.sqrt()];
        for k in 0..(1.0 / dt) as usize {
            law.step(1.0, &dvector![0.0], &omega_vec, k as f64 * dt, dt).unwrap();
        }
        let expected = (-2.0f64).exp();
        assert!((law.theta_hat()[0] - expected).abs() < 1e-3 * expected);
    }

    #[test]
    fn law_update_equals_unnormalized_error_feedback() {
        // Whenever Omega is above the floor the update reduces to
        // -(gamma0 lambda_max + gamma1) * theta_tilde.
        let theta_star = dvector![2.0, -3.0];
        let (gamma0, gamma1) = (2.0, 5.0);
        let mut reg = NormalizedRegression::new(0.5, 2).unwrap();
        let dt = 1e-3;
        let mut t: f64 = 0.0;
        for _ in 0..500 {
            let delta = (3.0 * t).sin();
            reg.step(&RegressionPair { y: &theta_star * delta, delta }, dt);
            t += dt;
        }
        let omega = reg.omega();
        assert!(omega > 1e-12);
        let theta_hat = dvector![5.0, 5.0];
        let omega_vec = dvector![0.3, -1.2];
        let gamma = gamma_value(omega, &omega_vec, gamma0, gamma1, 1e-12);
        let update = (reg.upsilon() - &theta_hat * omega) * (gamma * omega);
        let rate = gamma0 * max_eig_outer(&omega_vec) + gamma1;
        let expected = (&theta_hat - &theta_star) * -rate;
        assert_relative_eq!(update, expected, max_relative = 1e-10);
    }

    #[test]
    fn law_is_elementwise_monotone_and_sign_preserving() {
        let theta_star = dvector![2.0, -1.0, 0.5];
        let mut reg = NormalizedRegression::new(0.5, 3).unwrap();
        let mut law = AdaptiveLaw::new(dvector![-1.0, 4.0, 0.5], 1.0, 1.0, 1e-12).unwrap();
        let tilde0 = law.theta_hat() - &theta_star;
        let dt = 1e-3;
        let mut t: f64 = 0.0;
        let mut prev = tilde0.abs();
        for _ in 0..20_000 {
            let delta = (0.7 * t).sin() * (1.0 + 0.2 * (0.1 * t).cos());
            reg.step(&RegressionPair { y: &theta_star * delta, delta }, dt);
            let omega_vec = dvector![t.sin(), 1.0, 0.3 * t.cos()];
            law.step(reg.omega(), &reg.upsilon(), &omega_vec, t, dt).unwrap();
            let tilde = law.theta_hat() - &theta_star;
            for i in 0..3 {
                assert!(tilde[i].abs() <= prev[i] + 1e-12, "component {i} grew at t = {t}");
                if tilde0[i] != 0.0 && tilde[i].abs() > 1e-9 * theta_star.norm() {
                    assert_eq!(tilde[i].signum(), tilde0[i].signum(), "sign flip at t = {t}");
                }
            }
            prev = tilde.abs();
            t += dt;
        }
    }

    #[test]
    fn baseline_sf_no_update_without_error() {
        let p = Matrix::identity(2, 2);
        let mut law = BaselineLaw::new(Matrix::identity(3, 3), p, dvector![0.0, 0.0, 1.0]).unwrap();
        law.sf_step(&dvector![1.0, 2.0, 3.0], &Vector::zeros(2), &dvector![0.0, 2.0], 0.1).unwrap();
        assert_eq!(law.theta_hat(), &dvector![0.0, 0.0, 1.0]);
    }

    #[test]
    fn baseline_sf_direct_arithmetic() {
        // Gamma = I, omega = e1, e_ref^T P B = 2, dt = 0.1 -> theta_1 drops by 0.2.
        let p = Matrix::identity(2, 2);
        let mut law = BaselineLaw::new(Matrix::identity(3, 3), p, Vector::zeros(3)).unwrap();
        let e_ref = dvector![2.0, 0.0];
        let b = dvector![1.0, 0.0];
        law.sf_step(&dvector![1.0, 0.0, 0.0], &e_ref, &b, 0.1).unwrap();
        assert_relative_eq!(law.theta_hat()[0], -0.2);
        assert_eq!(law.theta_hat()[1], 0.0);
    }

    #[test]
    fn baseline_of_direct_arithmetic() {
        let p = Matrix::identity(2, 2);
        let gamma = Matrix::identity(2, 2) * 2.0;
        let mut law = BaselineLaw::new(gamma, p, Vector::zeros(2)).unwrap();
        law.of_step(&dvector![1.0, 1.0], 0.5, 0.1).unwrap();
        assert_relative_eq!(law.theta_hat(), &dvector![-0.1, -0.1]);

        let before = law.theta_hat().clone();
        law.of_step(&dvector![1.0, 1.0], 0.0, 0.1).unwrap();
        assert_eq!(law.theta_hat(), &before);
    }

    #[test]
    fn ideal_sf_gains_for_second_order_plant() {
        let a = dmatrix![0.0, 1.0; 4.0, 2.0];
        let b = dvector![0.0, 2.0];
        let a_ref = dmatrix![0.0, 1.0; -8.0, -4.0];
        let b_ref = dvector![0.0, 8.0];
        let theta = ideal_gains_sf(&a, &b, &a_ref, &b_ref).unwrap();
        assert_relative_eq!(theta, dvector![-6.0, -3.0, 4.0], epsilon = 1e-12);
    }

    #[test]
    fn ideal_sf_gains_trivial_and_unsolvable() {
        let a = dmatrix![0.0, 1.0; -8.0, -4.0];
        let b = dvector![0.0, 8.0];
        let theta = ideal_gains_sf(&a, &b, &a, &b).unwrap();
        assert_relative_eq!(theta, dvector![0.0, 0.0, 1.0], epsilon = 1e-12);

        let err = ideal_gains_sf(&dmatrix![0.0, 1.0; 4.0, 2.0], &Vector::zeros(2), &a, &b);
        assert!(err.is_err());
    }

    #[test]
    fn excitation_of_rotating_regressor() {
        let dt = 1e-4;
        let n = (2.0 * std::f64::consts::PI / dt) as usize;
        let ts: Vec<f64> = (0..=n).map(|k| k as f64 * dt).collect();
        let omegas: Vec<Vector> = ts.iter().map(|&t| dvector![t.sin(), t.cos()]).collect();
        let report = excitation_level(&ts, &omegas).unwrap();
        assert_relative_eq!(report.level, std::f64::consts::PI, epsilon = 1e-4);
        assert_relative_eq!(report.gramian[(0, 1)], 0.0, epsilon = 1e-4);
    }

    #[test]
    fn excitation_of_constant_regressor_is_zero() {
        let ts: Vec<f64> = (0..=100).map(|k| k as f64 * 0.01).collect();
        let omegas: Vec<Vector> = ts.iter().map(|_| dvector![1.0, 2.0]).collect();
        let report = excitation_level(&ts, &omegas).unwrap();
        assert!(report.level.abs() < 1e-12);
    }

    #[test]
    fn excitation_of_scalar_unit_regressor() {
        let alpha = 0.7;
        let ts: Vec<f64> = (0..=700).map(|k| k as f64 * (alpha / 700.0)).collect();
        let omegas: Vec<Vector> = ts.iter().map(|_| dvector![1.0]).collect();
        let report = excitation_level(&ts, &omegas).unwrap();
        assert_relative_eq!(report.level, alpha, epsilon = 1e-12);
    }

    #[test]
    fn excitation_rejects_tiny_windows() {
        assert!(excitation_level(&[0.0], &[dvector![1.0]]).is_err());
    }
}
