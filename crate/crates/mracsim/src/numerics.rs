//! Small dense matrix/vector arithmetic and the fixed-step explicit Euler
//! integrator shared by every other module.
//!
//! All matrices in this crate are small (a handful of rows at most), so the
//! determinant and adjugate are computed by cofactor expansion up to 4x4 and
//! by LU factorization above that. The adjugate is computed entrywise from
//! cofactors because the regression mixing steps need it to stay well-defined
//! when the matrix is singular (early in a run the filtered Gram matrices
//! always are).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Fixed-step integration settings. `dt` defaults to 1e-4 s.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_end: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self { dt: 1e-4, t_end: 0.0 }
    }
}

impl IntegratorConfig {
    pub fn new(dt: f64, t_end: f64) -> Result<Self> {
        let cfg = Self { dt, t_end };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::Config(format!("dt must be > 0, got {}", self.dt)));
        }
        if self.t_end < 0.0 {
            return Err(Error::Config(format!("t_end must be >= 0, got {}", self.t_end)));
        }
        if self.t_end > 0.0 && self.dt > self.t_end {
            return Err(Error::Config(format!(
                "dt = {} exceeds t_end = {}",
                self.dt, self.t_end
            )));
        }
        Ok(())
    }

    /// Number of Euler steps covering `[0, t_end]`.
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

fn require_square(m: &Matrix, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "{what} requires a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Determinant. Cofactor expansion for dimensions <= 4, LU above.
pub fn det(m: &Matrix) -> Result<f64> {
    require_square(m, "det")?;
    Ok(det_unchecked(m))
}

fn det_unchecked(m: &Matrix) -> f64 {
    match m.nrows() {
        0 => 1.0,
        1 => m[(0, 0)],
        2 => m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)],
        3 => {
            let a = m[(0, 0)];
            let b = m[(0, 1)];
            let c = m[(0, 2)];
            let d = m[(1, 0)];
            let e = m[(1, 1)];
            let f = m[(1, 2)];
            let g = m[(2, 0)];
            let h = m[(2, 1)];
            let i = m[(2, 2)];
            a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g)
        }
        4 => {
            // Expansion along the first row; 3x3 minors are handled above.
            let mut acc = 0.0;
            let mut sign = 1.0;
            for col in 0..4 {
                let entry = m[(0, col)];
                if entry != 0.0 {
                    acc += sign * entry * det_unchecked(&minor(m, 0, col));
                }
                sign = -sign;
            }
            acc
        }
        _ => m.clone().lu().determinant(),
    }
}

/// Minor of `m` with `row` and `col` removed.
fn minor(m: &Matrix, row: usize, col: usize) -> Matrix {
    let n = m.nrows();
    let mut out = Matrix::zeros(n - 1, n - 1);
    let mut r_out = 0;
    for r in 0..n {
        if r == row {
            continue;
        }
        let mut c_out = 0;
        for c in 0..n {
            if c == col {
                continue;
            }
            out[(r_out, c_out)] = m[(r, c)];
            c_out += 1;
        }
        r_out += 1;
    }
    out
}

/// Adjugate (transpose of the cofactor matrix). Defined for singular
/// matrices as well; satisfies `adjugate(m) * m == det(m) * I`.
pub fn adjugate(m: &Matrix) -> Result<Matrix> {
    require_square(m, "adjugate")?;
    let n = m.nrows();
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    if n == 1 {
        return Ok(Matrix::from_element(1, 1, 1.0));
    }
    let mut adj = Matrix::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            let cof = det_unchecked(&minor(m, r, c));
            let sign = if (r + c) % 2 == 0 { 1.0 } else { -1.0 };
            // adj = cofactor matrix transposed
            adj[(c, r)] = sign * cof;
        }
    }
    Ok(adj)
}

/// Largest eigenvalue of the rank-one outer product `w w^T`, i.e. `||w||^2`.
pub fn max_eig_outer(w: &Vector) -> f64 {
    w.norm_squared()
}

/// One explicit Euler step: `state + dt * deriv(t, state)`.
///
/// A non-finite derivative aborts with an overflow error stamped with `t`.
pub fn euler_step<F>(state: &Vector, t: f64, deriv: F, dt: f64) -> Result<Vector>
where
    F: Fn(f64, &Vector) -> Vector,
{
    let d = deriv(t, state);
    if d.len() != state.len() {
        return Err(Error::Dimension(format!(
            "derivative has dim {}, state has dim {}",
            d.len(),
            state.len()
        )));
    }
    if !d.iter().all(|v| v.is_finite()) {
        return Err(Error::Overflow { t, what: "derivative is not finite".into() });
    }
    Ok(state + d * dt)
}

/// Solves `a_ref * P + P * a_ref^T = -q` for symmetric `P` by vectorizing
/// the linear system (Kronecker form). `a_ref` must be Hurwitz for the
/// system to be nonsingular; `q` is expected symmetric positive definite.
pub fn solve_lyapunov(a_ref: &Matrix, q: &Matrix) -> Result<Matrix> {
    require_square(a_ref, "solve_lyapunov")?;
    require_square(q, "solve_lyapunov")?;
    let n = a_ref.nrows();
    if q.nrows() != n {
        return Err(Error::Dimension(format!(
            "a_ref is {n}x{n} but q is {}x{}",
            q.nrows(),
            q.ncols()
        )));
    }
    // vec(A P + P A^T) = (I (x) A + A (x) I) vec(P)
    let eye = Matrix::identity(n, n);
    let kron = eye.kronecker(a_ref) + a_ref.kronecker(&eye);
    let rhs = Vector::from_iterator(n * n, (-q).iter().copied());
    let lu = kron.lu();
    let sol = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Solver("Lyapunov system is singular (a_ref not Hurwitz?)".into()))?;
    let p = Matrix::from_iterator(n, n, sol.iter().copied());
    let p = (&p + p.transpose()) * 0.5;

    let residual = (a_ref * &p + &p * a_ref.transpose() + q).norm();
    let scale = (a_ref.norm() * p.norm()).max(q.norm()).max(1.0);
    if residual > 1e-9 * scale {
        return Err(Error::Solver(format!(
            "Lyapunov residual {residual:.3e} exceeds 1e-9 relative tolerance"
        )));
    }
    Ok(p)
}

/// Relative eigenvalue trust threshold for the regression mixing: directions
/// of a symmetric positive semidefinite system below `1e3 * eps` of the
/// largest eigenvalue are indistinguishable from rounding error, and
/// quotients along them would be noise of unbounded relative size.
pub const MIX_EIGENVALUE_TRUST: f64 = 1e3 * f64::EPSILON;

/// Largest acceptable weight of an unresolved truncated direction on a
/// component that the caller needs from the mixed solution.
const MIX_PURITY_TOL: f64 = 1e-6;

/// Smallest projection of a truncated direction onto the structurally zero
/// rows that the completion is allowed to invert. Directions below this are
/// left as ambiguity (and vetted against the required rows) instead of
/// amplifying noise through a near-singular solve.
const MIX_ZERO_ROW_SV_FLOOR: f64 = 1e-2;

/// Rank-aware adjugate/determinant mixing of the symmetric positive
/// semidefinite system `gram * theta = rhs` (one column of `rhs` per
/// unknown block).
///
/// At full numerical rank this returns exactly the classical mixing
/// products: `phi = det(gram)` and `z = adjugate(gram) * rhs = phi * theta`.
/// When some eigenvalues fall below the trust threshold the system is
/// solved on the excited eigensubspace instead, with `phi` the product of
/// the retained eigenvalues, so the decoupled regression stays exact for
/// every component the excitation actually pins down.
///
/// Two pieces of caller knowledge resolve deficient samples:
/// `zero_rows` lists components known to vanish a priori (structural zeros
/// of the unknown vector); ambiguity along truncated directions is first
/// eliminated against them in least squares. `required_rows` lists the
/// components the caller will read; if ambiguity remains on any of them the
/// sample is reported as unexcited (`phi = 0, z = 0`) rather than
/// contaminated.
///
/// The deficient branch matters: a constant or single-mode control input
/// makes filter states coincide with part of the initial-condition
/// regressor, so the full matrix is exactly singular even though — together
/// with the structural zeros — every coefficient the matching layer needs
/// is still pinned down.
pub fn mix_symmetric_system(
    gram: &Matrix,
    rhs: &Matrix,
    required_rows: &[usize],
    zero_rows: &[usize],
) -> Result<(f64, Matrix)> {
    let dim = gram.nrows();
    if gram.ncols() != dim || rhs.nrows() != dim {
        return Err(Error::Dimension(format!(
            "mixing expects a square system, got {}x{} gram and {}-row rhs",
            gram.nrows(),
            gram.ncols(),
            rhs.nrows()
        )));
    }
    let zero = || (0.0, Matrix::zeros(dim, rhs.ncols()));

    let sym = (gram + gram.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let lambda_max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    if lambda_max <= 0.0 {
        return Ok(zero());
    }
    let trust = MIX_EIGENVALUE_TRUST * lambda_max;
    let retained: Vec<usize> = (0..dim).filter(|&i| eig.eigenvalues[i] > trust).collect();
    let truncated: Vec<usize> = (0..dim).filter(|&i| eig.eigenvalues[i] <= trust).collect();

    let mut phi = 1.0;
    let mut theta = Matrix::zeros(dim, rhs.ncols());
    for &i in &retained {
        phi *= eig.eigenvalues[i];
        let q = eig.eigenvectors.column(i);
        theta += q * (q.transpose() * rhs) / eig.eigenvalues[i];
    }
    if !phi.is_finite() {
        return Ok(zero());
    }

    if !truncated.is_empty() {
        let k = truncated.len();
        let mut q_t = Matrix::zeros(dim, k);
        for (j, &i) in truncated.iter().enumerate() {
            q_t.column_mut(j).copy_from(&eig.eigenvectors.column(i));
        }
        // Ambiguity along the truncated directions is resolved against the
        // structurally zero rows where their projection is substantial;
        // whatever cannot be resolved that way must stay clear of the rows
        // the caller reads.
        let ambiguous = if zero_rows.is_empty() {
            q_t
        } else {
            let mut z_mat = Matrix::zeros(zero_rows.len(), k);
            let mut z_rhs = Matrix::zeros(zero_rows.len(), rhs.ncols());
            for (r, &row) in zero_rows.iter().enumerate() {
                z_mat.row_mut(r).copy_from(&q_t.row(row));
                z_rhs.row_mut(r).copy_from(&(-theta.row(row)));
            }
            // Least squares through the eigenstructure of Z^T Z so the
            // unresolvable null directions fall out of the same
            // decomposition.
            let ztz = z_mat.transpose() * &z_mat;
            let zrhs = z_mat.transpose() * &z_rhs;
            let eig_z = ztz.symmetric_eigen();
            let floor2 = MIX_ZERO_ROW_SV_FLOOR * MIX_ZERO_ROW_SV_FLOOR;
            let mut coeffs = Matrix::zeros(k, rhs.ncols());
            let mut null_dirs = Vec::new();
            for j in 0..k {
                let mu = eig_z.eigenvalues[j];
                let v = eig_z.eigenvectors.column(j);
                if mu > floor2 {
                    coeffs += v * (v.transpose() * &zrhs) / mu;
                } else {
                    null_dirs.push(v.into_owned());
                }
            }
            theta += &q_t * coeffs;
            let mut amb = Matrix::zeros(dim, null_dirs.len());
            for (j, dir) in null_dirs.iter().enumerate() {
                amb.column_mut(j).copy_from(&(&q_t * dir));
            }
            amb
        };
        for col in ambiguous.column_iter() {
            for &row in required_rows {
                if col[row].abs() > MIX_PURITY_TOL {
                    return Ok(zero());
                }
            }
        }
    }

    Ok((phi, theta * phi))
}

/// True when every eigenvalue of `m` has a strictly negative real part.
pub fn is_hurwitz(m: &Matrix) -> bool {
    if m.nrows() != m.ncols() || m.is_empty() {
        return false;
    }
    m.complex_eigenvalues().iter().all(|l| l.re < 0.0)
}
