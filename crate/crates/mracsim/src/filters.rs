//! Continuous-time filter primitives shared by the two parametrization
//! pipelines, each advanced one explicit Euler step at a time with the same
//! step size as the plant.

use crate::error::{Error, Result};
use crate::numerics::{is_hurwitz, Matrix, Vector};

/// First-order lag `value' = -l * value + input`, zero initial state.
#[derive(Debug, Clone)]
pub struct FirstOrderFilter {
    l: f64,
    value: Vector,
}

impl FirstOrderFilter {
    pub fn new(l: f64, dim: usize) -> Result<Self> {
        if !(l > 0.0) {
            return Err(Error::Config(format!("filter constant l must be > 0, got {l}")));
        }
        Ok(Self { l, value: Vector::zeros(dim) })
    }

    pub fn value(&self) -> &Vector {
        &self.value
    }

    pub fn l(&self) -> f64 {
        self.l
    }

    pub fn step(&mut self, input: &Vector, dt: f64) -> Result<()> {
        if input.len() != self.value.len() {
            return Err(Error::Dimension(format!(
                "filter state has dim {}, input has dim {}",
                self.value.len(),
                input.len()
            )));
        }
        self.value += (input - &self.value * self.l) * dt;
        Ok(())
    }
}

/// A bank of first-order taps `state_i' = -beta_i * state_i + alpha_i * input`
/// realizing `H_i(p) = alpha_i / (p + beta_i)`. Gains `alpha_i` must be
/// pairwise distinct so the filtered copies stay independent.
#[derive(Debug, Clone)]
pub struct FilterBank {
    taps: Vec<Tap>,
}

#[derive(Debug, Clone)]
struct Tap {
    alpha: f64,
    beta: f64,
    state: Vector,
}

impl FilterBank {
    pub fn new(params: &[(f64, f64)], dim: usize) -> Result<Self> {
        if params.is_empty() {
            return Err(Error::Config("filter bank needs at least one tap".into()));
        }
        for (i, &(alpha, beta)) in params.iter().enumerate() {
            if !(alpha > 0.0) || !(beta > 0.0) {
                return Err(Error::Config(format!(
                    "bank tap {i}: gains must be > 0, got alpha = {alpha}, beta = {beta}"
                )));
            }
            for &(other, _) in &params[..i] {
                if (alpha - other).abs() < 1e-12 {
                    return Err(Error::Config(format!(
                        "bank tap {i}: alpha = {alpha} repeats an earlier tap"
                    )));
                }
            }
        }
        Ok(Self {
            taps: params
                .iter()
                .map(|&(alpha, beta)| Tap { alpha, beta, state: Vector::zeros(dim) })
                .collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn state(&self, i: usize) -> &Vector {
        &self.taps[i].state
    }

    pub fn step(&mut self, input: &Vector, dt: f64) -> Result<()> {
        for tap in &mut self.taps {
            if input.len() != tap.state.len() {
                return Err(Error::Dimension(format!(
                    "bank state has dim {}, input has dim {}",
                    tap.state.len(),
                    input.len()
                )));
            }
            tap.state += (input * tap.alpha - &tap.state * tap.beta) * dt;
        }
        Ok(())
    }
}

/// Exponential-forgetting integrator
///
/// ```text
/// beta' = sigma,        beta(0) = 0
/// out'  = e^{-beta} v,  out(0)  = 0
/// ```
///
/// so that `out(t) = integral_0^t e^{-sigma tau} v(tau) d tau`. The weight is
/// applied to the input rather than unwinding `e^{+beta}` later, which keeps
/// every stored quantity bounded.
#[derive(Debug, Clone)]
pub struct ForgettingFilter {
    sigma: f64,
    beta: f64,
    out: Vector,
}

impl ForgettingFilter {
    pub fn new(sigma: f64, dim: usize) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::Config(format!("forgetting rate sigma must be > 0, got {sigma}")));
        }
        Ok(Self { sigma, beta: 0.0, out: Vector::zeros(dim) })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn out(&self) -> &Vector {
        &self.out
    }

    pub fn step(&mut self, input: &Vector, dt: f64) {
        debug_assert_eq!(input.len(), self.out.len());
        let w = (-self.beta).exp();
        self.out += input * (w * dt);
        self.beta += self.sigma * dt;
    }
}

/// Regressor extension scheme
///
/// ```text
/// zf'   = -l zf   + phibar * zbar^T
/// phif' = -l phif + phibar * phibar^T
/// ```
///
/// `zbar` has one column per regression output (a single column in the
/// output-feedback case). `phif` stays symmetric positive semidefinite along
/// any trajectory because it is a filtered sum of outer products.
#[derive(Debug, Clone)]
pub struct ExtensionFilter {
    l: f64,
    zf: Matrix,
    phif: Matrix,
}

impl ExtensionFilter {
    pub fn new(l: f64, dim: usize, outputs: usize) -> Result<Self> {
        if !(l > 0.0) {
            return Err(Error::Config(format!("extension filter constant l must be > 0, got {l}")));
        }
        Ok(Self { l, zf: Matrix::zeros(dim, outputs), phif: Matrix::zeros(dim, dim) })
    }

    pub fn zf(&self) -> &Matrix {
        &self.zf
    }

    pub fn phif(&self) -> &Matrix {
        &self.phif
    }

    pub fn step(&mut self, zbar: &Vector, phibar: &Vector, dt: f64) -> Result<()> {
        if phibar.len() != self.phif.nrows() || zbar.len() != self.zf.ncols() {
            return Err(Error::Dimension(format!(
                "extension filter is {}x{}, inputs have dims {} and {}",
                self.phif.nrows(),
                self.zf.ncols(),
                phibar.len(),
                zbar.len()
            )));
        }
        self.zf += (phibar * zbar.transpose() - &self.zf * self.l) * dt;
        self.phif += (phibar * phibar.transpose() - &self.phif * self.l) * dt;
        Ok(())
    }

    /// Scalar-output convenience used by the output-feedback pipeline.
    pub fn step_scalar(&mut self, zbar: f64, phibar: &Vector, dt: f64) -> Result<()> {
        self.step(&Vector::from_element(1, zbar), phibar, dt)
    }
}

/// State filters for the observer-form regression:
///
/// ```text
/// eta_f1' = Psi_c^T eta_f1 + c * u
/// eta_f2' = Psi_c^T eta_f2 + c * y
/// ```
///
/// with `c = [1, 0, ..., 0]^T` and `Psi_c` a Hurwitz canonical matrix
/// (checked once at construction).
#[derive(Debug, Clone)]
pub struct KreisselmeierFilter {
    psi_c_t: Matrix,
    c: Vector,
    eta_f1: Vector,
    eta_f2: Vector,
}

impl KreisselmeierFilter {
    pub fn new(psi_c: &Matrix) -> Result<Self> {
        if psi_c.nrows() != psi_c.ncols() {
            return Err(Error::Dimension(format!(
                "state filter matrix must be square, got {}x{}",
                psi_c.nrows(),
                psi_c.ncols()
            )));
        }
        if !is_hurwitz(psi_c) {
            return Err(Error::Config("state filter matrix is not Hurwitz".into()));
        }
        let n = psi_c.nrows();
        let mut c = Vector::zeros(n);
        c[0] = 1.0;
        Ok(Self {
            psi_c_t: psi_c.transpose(),
            c,
            eta_f1: Vector::zeros(n),
            eta_f2: Vector::zeros(n),
        })
    }

    pub fn eta_f1(&self) -> &Vector {
        &self.eta_f1
    }

    pub fn eta_f2(&self) -> &Vector {
        &self.eta_f2
    }

    pub fn step(&mut self, u: f64, y: f64, dt: f64) {
        self.eta_f1 += (&self.psi_c_t * &self.eta_f1 + &self.c * u) * dt;
        self.eta_f2 += (&self.psi_c_t * &self.eta_f2 + &self.c * y) * dt;
    }
}
