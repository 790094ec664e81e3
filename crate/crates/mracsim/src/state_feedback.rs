//! State-feedback parametrization: turns the measurable pair `(x, u)` into a
//! scalar-regressor equation `Y(t) = Delta(t) * theta` for the controller
//! parameters `theta = [k_x, k_r]`.
//!
//! The chain is: filter `[x; u]` through a first-order lag, absorb the
//! unknown initial state into an extra regressor column that decays like the
//! lag, extend the resulting vector regression with a bank of first-order
//! filters, mix the stacked system with the adjugate to decouple it, and
//! finally contract the matching conditions of the reference model onto the
//! measurable mixing products.
//!
//! Every filter is advanced with the same Euler step as the plant, including
//! the decaying regressor column. That keeps the regression identities exact
//! in discrete time instead of only up to truncation error.

use crate::adaptation::RegressionPair;
use crate::error::{Error, Result};
use crate::filters::{ExtensionFilter, FilterBank, FirstOrderFilter};
use crate::numerics::{is_hurwitz, mix_symmetric_system, Matrix, Vector};

/// How the vector regression is extended before mixing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtensionScheme {
    /// A bank of `n + 2` first-order taps; the stack keeps the raw signal as
    /// its first row. This is the default.
    FilterBank,
    /// Filtered outer products of the regressor with itself, the same scheme
    /// the output-feedback pipeline uses; fewer knobs to choose.
    OuterProduct,
}

#[derive(Debug, Clone)]
pub struct StateFeedbackConfig {
    /// Plant order.
    pub n: usize,
    /// Lag constant of the measurement filters.
    pub l: f64,
    /// `(alpha_i, beta_i)` per bank tap; `n + 2` taps with pairwise distinct
    /// alphas. Ignored by the outer-product scheme.
    pub bank: Vec<(f64, f64)>,
    pub a_ref: Matrix,
    pub b_ref: Vector,
    pub extension: ExtensionScheme,
    /// Recompute the mixing products every `mix_stride` steps (1 = every step).
    pub mix_stride: usize,
}

impl StateFeedbackConfig {
    /// Default bank `alpha_i = beta_i = i` for `i = 1..=n+2`.
    pub fn default_bank(n: usize) -> Vec<(f64, f64)> {
        (1..=n + 2).map(|i| (i as f64, i as f64)).collect()
    }

    pub fn new(n: usize, l: f64, a_ref: Matrix, b_ref: Vector) -> Self {
        Self {
            n,
            l,
            bank: Self::default_bank(n),
            a_ref,
            b_ref,
            extension: ExtensionScheme::FilterBank,
            mix_stride: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("plant order n must be >= 1".into()));
        }
        if !(self.l > 0.0) {
            return Err(Error::Config(format!("filter constant l must be > 0, got {}", self.l)));
        }
        if self.extension == ExtensionScheme::FilterBank && self.bank.len() != self.n + 2 {
            return Err(Error::Config(format!(
                "filter bank needs n + 2 = {} taps, got {}",
                self.n + 2,
                self.bank.len()
            )));
        }
        if self.a_ref.nrows() != self.n || self.a_ref.ncols() != self.n || self.b_ref.len() != self.n {
            return Err(Error::Config("reference model dims do not match plant order".into()));
        }
        if !is_hurwitz(&self.a_ref) {
            return Err(Error::Config("a_ref is not Hurwitz".into()));
        }
        if self.mix_stride == 0 {
            return Err(Error::Config("mix_stride must be >= 1".into()));
        }
        Ok(())
    }
}

enum Extension {
    Bank { bank_z: FilterBank, bank_phi: FilterBank },
    Outer(ExtensionFilter),
}

/// Regression pipeline state. One instance is owned by a single run loop.
pub struct StateFeedbackPipeline {
    n: usize,
    l: f64,
    a_ref: Matrix,
    b_ref: Vector,
    mix_stride: usize,
    steps: usize,

    /// First-order lag over the stacked signal `[x; u]`.
    phibar_filter: FirstOrderFilter,
    /// The decaying regressor column that absorbs the unknown `x(0)`;
    /// advanced by Euler together with everything else so the discrete
    /// regression identity stays exact.
    exp_term: f64,
    extension: Extension,

    // Snapshot of the current step's measurable quantities.
    zbar: Vector,
    phibar: Vector,
    // Mixing products.
    z: Matrix,
    phi: f64,
    z_a: Matrix,
    z_b: Vector,
    // Matching products.
    y: Vector,
    delta: f64,
}

impl StateFeedbackPipeline {
    pub fn new(cfg: &StateFeedbackConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.n;
        let extension = match cfg.extension {
            ExtensionScheme::FilterBank => Extension::Bank {
                bank_z: FilterBank::new(&cfg.bank, n)?,
                bank_phi: FilterBank::new(&cfg.bank, n + 2)?,
            },
            ExtensionScheme::OuterProduct => Extension::Outer(ExtensionFilter::new(cfg.l, n + 2, n)?),
        };
        Ok(Self {
            n,
            l: cfg.l,
            a_ref: cfg.a_ref.clone(),
            b_ref: cfg.b_ref.clone(),
            mix_stride: cfg.mix_stride,
            steps: 0,
            phibar_filter: FirstOrderFilter::new(cfg.l, n + 1)?,
            exp_term: 1.0,
            extension,
            zbar: Vector::zeros(n),
            phibar: Vector::zeros(n + 2),
            z: Matrix::zeros(n + 2, n),
            phi: 0.0,
            z_a: Matrix::zeros(n, n),
            z_b: Vector::zeros(n),
            y: Vector::zeros(n + 1),
            delta: 0.0,
        })
    }

    pub fn zbar(&self) -> &Vector {
        &self.zbar
    }

    pub fn phibar(&self) -> &Vector {
        &self.phibar
    }

    pub fn exp_term(&self) -> f64 {
        self.exp_term
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn z(&self) -> &Matrix {
        &self.z
    }

    pub fn z_a(&self) -> &Matrix {
        &self.z_a
    }

    pub fn z_b(&self) -> &Vector {
        &self.z_b
    }

    pub fn regression(&self) -> RegressionPair {
        RegressionPair { y: self.y.clone(), delta: self.delta }
    }

    /// The extended regression pair at the current snapshot, before mixing:
    /// the square system matrix whose determinant is the mixing regressor and
    /// the matching right-hand side. Diagnostic accessor.
    pub fn extended_system(&self) -> (Matrix, Matrix) {
        match &self.extension {
            Extension::Bank { bank_z, bank_phi } => {
                let n = self.n;
                let rows = n + 3;
                let mut zf = Matrix::zeros(rows, n);
                let mut phif = Matrix::zeros(rows, n + 2);
                zf.row_mut(0).copy_from(&self.zbar.transpose());
                phif.row_mut(0).copy_from(&self.phibar.transpose());
                for i in 0..n + 2 {
                    zf.row_mut(i + 1).copy_from(&bank_z.state(i).transpose());
                    phif.row_mut(i + 1).copy_from(&bank_phi.state(i).transpose());
                }
                (phif.transpose() * &phif, phif.transpose() * zf)
            }
            Extension::Outer(ext) => (ext.phif().clone(), ext.zf().clone()),
        }
    }

    /// Full per-step update: snapshot the measurable quantities at the
    /// current time, recompute the mixing and matching products, then advance
    /// all filters by one Euler step.
    pub fn process(&mut self, x: &Vector, u: f64, t: f64, dt: f64) -> Result<RegressionPair> {
        self.observe(x, u, t)?;
        if self.steps % self.mix_stride == 0 {
            self.mix()?;
            self.match_gains();
            if !self.delta.is_finite() || !self.y.iter().all(|v| v.is_finite()) {
                return Err(Error::Overflow { t, what: "regression products overflowed".into() });
            }
        }
        self.advance(x, u, dt)?;
        self.steps += 1;
        Ok(self.regression())
    }

    /// Forms `zbar = x - l * xbar` and `phibar = [Phibar; exp_term]` from the
    /// current filter states.
    ///
    /// Both sides of the pair are scaled by `1 / (1 + ||phibar||)`. A common
    /// time-varying factor cancels in the regression, and it stops runaway
    /// signal growth from dominating the filtered stacks so their Gram
    /// matrix keeps numerical rank.
    pub fn observe(&mut self, x: &Vector, u: f64, t: f64) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::Dimension(format!(
                "state has dim {}, pipeline expects {}",
                x.len(),
                self.n
            )));
        }
        if !x.iter().all(|v| v.is_finite()) || !u.is_finite() {
            return Err(Error::Overflow { t, what: "plant state or input is not finite".into() });
        }
        let filtered = self.phibar_filter.value();
        let xbar = filtered.rows(0, self.n);
        self.phibar.rows_mut(0, self.n + 1).copy_from(filtered);
        self.phibar[self.n + 1] = self.exp_term;
        let weight = 1.0 / (1.0 + self.phibar.norm());
        self.phibar *= weight;
        self.zbar = (x - xbar * self.l) * weight;
        Ok(())
    }

    /// Adjugate/determinant mixing of the extended regression, then the
    /// block split `z_a = z^T H`, `z_b = z^T e_{n+1}`.
    ///
    /// The mixing is rank-aware: directions of the Gram matrix without
    /// excitation at working precision are truncated, which reduces to the
    /// plain adjugate/determinant products whenever the system has full
    /// numerical rank. Only the `A` and `B` component rows must be excited;
    /// the trailing initial-state row may stay ambiguous.
    pub fn mix(&mut self) -> Result<()> {
        let n = self.n;
        let required: Vec<usize> = (0..=n).collect();
        let (gram, cross) = self.extended_system();
        let (phi, z) = mix_symmetric_system(&gram, &cross, &required, &[])?;
        self.phi = phi;
        self.z = z;
        // z^T = phi * [A  B  x(0)]; keep the A and B blocks.
        self.z_a = self.z.rows(0, n).transpose();
        self.z_b = self.z.row(n).transpose();
        Ok(())
    }

    /// Contracts the reference-matching conditions onto the mixing products:
    /// `Y = Ybar * z_b`, `Delta = ||z_b||^2`.
    pub fn match_gains(&mut self) {
        let n = self.n;
        let mut ybar = Matrix::zeros(n + 1, n);
        ybar
            .rows_mut(0, n)
            .copy_from(&(&self.a_ref * self.phi - &self.z_a).transpose());
        ybar.row_mut(n).copy_from(&(&self.b_ref * self.phi).transpose());
        self.y = ybar * &self.z_b;
        self.delta = self.z_b.norm_squared();
    }

    /// Advances every filter one Euler step using the measurements at the
    /// current time.
    pub fn advance(&mut self, x: &Vector, u: f64, dt: f64) -> Result<()> {
        let mut stacked = Vector::zeros(self.n + 1);
        stacked.rows_mut(0, self.n).copy_from(x);
        stacked[self.n] = u;
        self.phibar_filter.step(&stacked, dt)?;
        self.exp_term *= 1.0 - self.l * dt;
        match &mut self.extension {
            Extension::Bank { bank_z, bank_phi } => {
                bank_z.step(&self.zbar, dt)?;
                bank_phi.step(&self.phibar, dt)?;
            }
            Extension::Outer(ext) => ext.step(&self.zbar, &self.phibar, dt)?,
        }
        Ok(())
    }
}
