//! Dense univariate polynomials with ascending coefficient storage, plus the
//! two companion-matrix layouts used by the controller and observer filters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{is_hurwitz, Matrix, Vector};

/// Polynomial with coefficients stored in ascending degree order:
/// `coeffs[k]` multiplies `p^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        assert!(!coeffs.is_empty(), "a polynomial needs at least one coefficient");
        Self { coeffs }
    }

    /// The constant polynomial `1`.
    pub fn one() -> Self {
        Self::new(vec![1.0])
    }

    /// Monic polynomial with every root at `root`: `(p - root)^degree`.
    pub fn monic_with_root(root: f64, degree: usize) -> Self {
        let mut out = Self::one();
        for _ in 0..degree {
            out = out.mul(&Self::new(vec![-root, 1.0]));
        }
        out
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn leading(&self) -> f64 {
        *self.coeffs.last().unwrap()
    }

    pub fn is_monic(&self) -> bool {
        (self.leading() - 1.0).abs() < 1e-12
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self::new(conv(&self.coeffs, &other.coeffs))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.coeffs.iter().map(|c| c * s).collect())
    }

    /// Coefficients padded with zeros up to `len` entries.
    pub fn padded(&self, len: usize) -> Vec<f64> {
        let mut out = self.coeffs.clone();
        assert!(out.len() <= len, "polynomial of degree {} does not fit in {len} coefficients", self.degree());
        out.resize(len, 0.0);
        out
    }

    /// True when all roots have strictly negative real parts. Degree-zero
    /// polynomials are vacuously Hurwitz.
    pub fn hurwitz(&self) -> bool {
        if self.degree() == 0 {
            return true;
        }
        is_hurwitz(&self.companion_bottom_row())
    }

    /// Controllable-canonical companion matrix (coefficient row at the
    /// bottom). For a monic `p^d + c_{d-1} p^{d-1} + ... + c_0` this is
    ///
    /// ```text
    /// [ 0    1        0   ]
    /// [ 0    0    1       ]
    /// [ -c_0 -c_1 ... -c_{d-1} ]
    /// ```
    ///
    /// With input vector `h = [0, ..., 0, 1]^T` the filter `v' = A v + h u`
    /// realizes the transfer vector `[1, p, ..., p^{d-1}]^T / poly(p)`.
    pub fn companion_bottom_row(&self) -> Matrix {
        let d = self.degree();
        assert!(d >= 1, "companion matrix needs degree >= 1");
        let lead = self.leading();
        let mut a = Matrix::zeros(d, d);
        for i in 0..d.saturating_sub(1) {
            a[(i, i + 1)] = 1.0;
        }
        for j in 0..d {
            a[(d - 1, j)] = -self.coeffs[j] / lead;
        }
        a
    }
}

/// Convolution of two ascending coefficient slices.
pub fn conv(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

/// Canonical observer-form matrix for the coefficient vector
/// `psi = [psi_1, ..., psi_n]` of the characteristic polynomial
/// `p^n + psi_1 p^{n-1} + ... + psi_n`:
///
/// ```text
/// [ -psi_1  1  0 ... ]
/// [ -psi_2  0  1 ... ]
/// [  ...            1]
/// [ -psi_n  0  ...  0]
/// ```
pub fn observer_companion(psi: &Vector) -> Matrix {
    let n = psi.len();
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        m[(i, 0)] = -psi[i];
        if i + 1 < n {
            m[(i, i + 1)] = 1.0;
        }
    }
    m
}

/// Resolvent numerator matrices of `a` via the Faddeev-LeVerrier recursion:
/// `adj(sI - a) = sum_{k=1..n} s^{n-k} M_k` with `M_1 = I`,
/// `M_{k+1} = a M_k + c_k I`, `c_k = -tr(a M_k) / k`. Also returns the
/// characteristic polynomial coefficients `[c_1, ..., c_n]` (descending
/// association: char poly = `s^n + c_1 s^{n-1} + ... + c_n`).
pub fn resolvent_numerators(a: &Matrix) -> Result<(Vec<Matrix>, Vec<f64>)> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!(
            "resolvent numerators need a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let n = a.nrows();
    let mut mats = Vec::with_capacity(n);
    let mut cs = Vec::with_capacity(n);
    let mut mk = Matrix::identity(n, n);
    for k in 1..=n {
        let amk = a * &mk;
        let ck = -amk.trace() / k as f64;
        mats.push(mk.clone());
        cs.push(ck);
        mk = amk + Matrix::identity(n, n) * ck;
    }
    Ok((mats, cs))
}
