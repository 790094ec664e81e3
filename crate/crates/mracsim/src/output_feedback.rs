//! Output-feedback parametrization: turns the measurable pair `(u, y)` into a
//! scalar-regressor equation `Y(t) = Delta(t) * theta` for the controller
//! parameters `theta = [k_4, k_1, k_2, k_3]`.
//!
//! The chain: an observer-form regression built from two state filter banks
//! (one driven by `u`, one by `y`) recovers the plant coefficients up to a
//! common factor; a filtered outer-product extension plus adjugate mixing
//! decouples them; finally the model-matching identity between plant,
//! controller and reference model is assembled coefficient-by-coefficient
//! into a square system `N = M theta` and mixed once more to scalar form.
//!
//! Polynomial-basis convention: the internal `k_1`/`k_2` blocks pair with the
//! controller filter states in ascending-power order, i.e. component `j`
//! multiplies `p^j u / Lambda(p)` (resp. `.../y`). The matching columns below
//! use the same order, so adaptive and ideal parameters line up one-to-one.

use crate::adaptation::RegressionPair;
use crate::error::{Error, Result};
use crate::filters::{ExtensionFilter, KreisselmeierFilter};
use crate::numerics::{adjugate, det, mix_symmetric_system, Matrix, Vector};
use crate::polynomial::{conv, observer_companion, resolvent_numerators, Polynomial};

/// Static data of the output-feedback problem: plant orders, reference
/// model, filter polynomials and the derived canonical matrices.
#[derive(Debug, Clone)]
pub struct OutputFeedbackConfig {
    /// Plant denominator degree.
    pub n: usize,
    /// Plant numerator degree.
    pub m: usize,
    /// Reference model gain.
    pub b_ref: f64,
    /// Monic reference numerator.
    pub z_ref: Polynomial,
    /// Monic reference denominator.
    pub r_ref: Polynomial,
    /// Monic Hurwitz factor completing `lambda = lambda0 * z_ref` to degree
    /// `n - 1`.
    pub lambda0: Polynomial,
    /// `lambda0 * z_ref`, the controller filter polynomial.
    pub lambda: Polynomial,
    /// Characteristic coefficients of the observer filter matrix.
    pub psi: Vector,
    /// Canonical observer-form realization of `psi` (Hurwitz).
    pub psi_c: Matrix,
    /// Resolvent-numerator transform matrices of `psi_c`.
    pub t_mats: Vec<Matrix>,
    /// Extension filter constant.
    pub l: f64,
    /// Recompute mixing every `mix_stride` steps.
    pub mix_stride: usize,
}

impl OutputFeedbackConfig {
    pub fn new(
        n: usize,
        m: usize,
        b_ref: f64,
        z_ref: Polynomial,
        r_ref: Polynomial,
        lambda0: Option<Polynomial>,
        psi: Vector,
        l: f64,
    ) -> Result<Self> {
        if n == 0 || m >= n {
            return Err(Error::Config(format!(
                "plant orders must satisfy 0 <= m < n, got n = {n}, m = {m}"
            )));
        }
        let m_star = z_ref.degree();
        let n_star = r_ref.degree();
        if n_star < m_star || n_star - m_star != n - m {
            return Err(Error::Config(format!(
                "reference relative degree {} does not match plant relative degree {}",
                n_star as i64 - m_star as i64,
                n - m
            )));
        }
        if !z_ref.is_monic() || !r_ref.is_monic() {
            return Err(Error::Config("z_ref and r_ref must be monic".into()));
        }
        if !z_ref.hurwitz() || !r_ref.hurwitz() {
            return Err(Error::Config("z_ref and r_ref must be Hurwitz".into()));
        }
        if b_ref == 0.0 {
            return Err(Error::Config("b_ref must be nonzero".into()));
        }
        if m_star + 1 > n {
            return Err(Error::Config(format!(
                "reference numerator degree {m_star} too high: lambda0 would need negative degree"
            )));
        }
        let lambda0 = lambda0.unwrap_or_else(|| Polynomial::monic_with_root(-1.0, n - 1 - m_star));
        if lambda0.degree() != n - 1 - m_star {
            return Err(Error::Config(format!(
                "lambda0 must have degree n - 1 - deg(z_ref) = {}, got {}",
                n - 1 - m_star,
                lambda0.degree()
            )));
        }
        if !lambda0.is_monic() || !lambda0.hurwitz() {
            return Err(Error::Config("lambda0 must be monic Hurwitz".into()));
        }
        let lambda = lambda0.mul(&z_ref);
        if psi.len() != n {
            return Err(Error::Config(format!("psi must have {n} entries, got {}", psi.len())));
        }
        let psi_c = observer_companion(&psi);
        if !crate::numerics::is_hurwitz(&psi_c) {
            return Err(Error::Config("psi does not define a Hurwitz filter matrix".into()));
        }
        if !(l > 0.0) {
            return Err(Error::Config(format!("extension filter constant l must be > 0, got {l}")));
        }
        let t_mats = build_transform_matrices(&psi_c)?;
        Ok(Self {
            n,
            m,
            b_ref,
            z_ref,
            r_ref,
            lambda0,
            lambda,
            psi,
            psi_c,
            t_mats,
            l,
            mix_stride: 1,
        })
    }

    /// Controller filter realization `(Lambda_companion, h)` for the state
    /// filters of dimension `n - 1`; `None` when `n == 1` (no filters).
    pub fn controller_filter(&self) -> Option<(Matrix, Vector)> {
        if self.n == 1 {
            return None;
        }
        let a = self.lambda.companion_bottom_row();
        let d = self.n - 1;
        let mut h = Vector::zeros(d);
        h[d - 1] = 1.0;
        Some((a, h))
    }
}

/// Transform matrices `T_1, ..., T_n` collecting the numerator-polynomial
/// coefficients of the resolvent columns `(sI - Psi_c)^{-1} e_i`; column `j`
/// of `T_i` holds the coefficient vector of `s^{n-1-j}`.
///
/// For the canonical observer form these matrices commute through the filter
/// dynamics (`T_i Psi_c^T = Psi_c T_i`, `T_i e_1 = e_i`), which is what makes
/// the filtered-state regression exact.
pub fn build_transform_matrices(psi_c: &Matrix) -> Result<Vec<Matrix>> {
    let (mats, _) = resolvent_numerators(psi_c)?;
    let n = psi_c.nrows();
    let mut t_mats = Vec::with_capacity(n);
    for i in 0..n {
        let mut t = Matrix::zeros(n, n);
        for (j, mj) in mats.iter().enumerate() {
            t.column_mut(j).copy_from(&mj.column(i));
        }
        t_mats.push(t);
    }
    Ok(t_mats)
}

/// Assembles the model-matching system `N = M theta` by equating the
/// coefficients of each power of `p` after multiplying the matching identity
/// by `phi`, substituting the measurable products `z_a = phi * a`,
/// `z_b = phi * b`. Row `k` holds the coefficient of `p^k`; columns follow
/// `theta = [k_4 | k_1 (ascending) | k_2 (ascending) | k_3]`.
///
/// The ideal-gain oracle uses the same construction with `phi = 1` and the
/// true coefficients.
pub fn matching_system(
    phi: f64,
    z_a: &Vector,
    z_b: &Vector,
    cfg: &OutputFeedbackConfig,
) -> Result<(Matrix, Vector)> {
    let (n, m) = (cfg.n, cfg.m);
    if z_a.len() != n || z_b.len() != m + 1 {
        return Err(Error::Dimension(format!(
            "matching system expects z_a of dim {n} and z_b of dim {}, got {} and {}",
            m + 1,
            z_a.len(),
            z_b.len()
        )));
    }
    let rows = 2 * n;

    // phi * R(p), ascending: z_a is stored highest-coefficient first.
    let mut phi_r = Vec::with_capacity(n + 1);
    for i in (0..n).rev() {
        phi_r.push(z_a[i]);
    }
    phi_r.push(phi);

    // phi * b_m * Z(p), ascending.
    let mut phi_bmz = Vec::with_capacity(m + 1);
    for i in (0..=m).rev() {
        phi_bmz.push(z_b[i]);
    }

    let pad = |v: Vec<f64>| -> Vec<f64> {
        let mut v = v;
        debug_assert!(v.len() <= rows);
        v.resize(rows, 0.0);
        v
    };
    let shifted = |v: &[f64], by: usize| -> Vec<f64> {
        let mut out = vec![0.0; by];
        out.extend_from_slice(v);
        out
    };

    let mut m_mat = Matrix::zeros(rows, rows);
    let lambda0_r_ref = conv(cfg.lambda0.coeffs(), cfg.r_ref.coeffs());

    // k_4 column.
    let col = pad(conv(&phi_bmz, &lambda0_r_ref));
    m_mat.column_mut(0).copy_from_slice(&col);
    // k_1 block: p^j * phi * R(p).
    for j in 0..n - 1 {
        let col = pad(shifted(&phi_r, j).iter().map(|c| c * cfg.b_ref).collect());
        m_mat.column_mut(1 + j).copy_from_slice(&col);
    }
    // k_2 block: p^j * phi * b_m Z(p).
    for j in 0..n - 1 {
        let col = pad(shifted(&phi_bmz, j).iter().map(|c| c * cfg.b_ref).collect());
        m_mat.column_mut(n + j).copy_from_slice(&col);
    }
    // k_3 column.
    let col = pad(conv(&phi_bmz, cfg.lambda.coeffs()).iter().map(|c| c * cfg.b_ref).collect());
    m_mat.column_mut(2 * n - 1).copy_from_slice(&col);

    let n_coeffs = pad(conv(cfg.lambda.coeffs(), &phi_r).iter().map(|c| c * cfg.b_ref).collect());
    let n_vec = Vector::from_vec(n_coeffs);
    Ok((m_mat, n_vec))
}

/// Regression pipeline state for one run loop.
///
/// The extension stage works on a balanced copy of the regression: the
/// filtered-state block is multiplied by the constant `psi_n` (undoing the
/// attenuation of the observer filters) and each sample of the pair
/// `(zbar, phibar)` is scaled by `1 / (1 + ||phibar||)`. Both operations
/// leave the regression exact — a constant diagonal scaling moves into the
/// unknown vector and is undone after mixing, and a common time-varying
/// factor cancels between the two sides — but they keep the extension matrix
/// numerically full rank, which raw magnitudes do not.
pub struct OutputFeedbackPipeline {
    cfg: OutputFeedbackConfig,
    filters: KreisselmeierFilter,
    /// Decaying regressor block absorbing the unknown plant initial state;
    /// Euler-advanced copy of `e^{Psi_c^T t} c`.
    w: Vector,
    ext: ExtensionFilter,
    /// Constant balance factor applied to the filtered-state block.
    block_scale: f64,
    steps: usize,

    // Snapshot quantities.
    phi_mat: Matrix,
    zbar: f64,
    phibar: Vector,
    // Mixing products.
    z: Vector,
    phi: f64,
    z_a: Vector,
    z_b: Vector,
    // Matching products.
    m_mat: Matrix,
    n_vec: Vector,
    y: Vector,
    delta: f64,
}

impl OutputFeedbackPipeline {
    pub fn new(cfg: &OutputFeedbackConfig) -> Result<Self> {
        let n = cfg.n;
        let mut w = Vector::zeros(n);
        w[0] = 1.0;
        let block_scale = cfg.psi[n - 1].abs().max(1.0);
        Ok(Self {
            filters: KreisselmeierFilter::new(&cfg.psi_c)?,
            w,
            ext: ExtensionFilter::new(cfg.l, 3 * n, 1)?,
            block_scale,
            steps: 0,
            phi_mat: Matrix::zeros(n, 2 * n),
            zbar: 0.0,
            phibar: Vector::zeros(3 * n),
            z: Vector::zeros(3 * n),
            phi: 0.0,
            z_a: Vector::zeros(n),
            z_b: Vector::zeros(cfg.m + 1),
            m_mat: Matrix::zeros(2 * n, 2 * n),
            n_vec: Vector::zeros(2 * n),
            y: Vector::zeros(2 * n),
            delta: 0.0,
            cfg: cfg.clone(),
        })
    }

    pub fn zbar(&self) -> f64 {
        self.zbar
    }

    pub fn phibar(&self) -> &Vector {
        &self.phibar
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn z_a(&self) -> &Vector {
        &self.z_a
    }

    pub fn z_b(&self) -> &Vector {
        &self.z_b
    }

    pub fn m_mat(&self) -> &Matrix {
        &self.m_mat
    }

    pub fn filters(&self) -> &KreisselmeierFilter {
        &self.filters
    }

    /// The extension filter's square regressor matrix; its determinant
    /// (before the noise gate) is the mixing regressor. Diagnostic accessor.
    pub fn ext_phif(&self) -> &Matrix {
        self.ext.phif()
    }

    /// The extension filter's filtered regression function. Diagnostic
    /// accessor.
    pub fn ext_zf(&self) -> &Matrix {
        self.ext.zf()
    }

    /// The decaying initial-condition regressor block (raw, unscaled).
    pub fn initial_state_block(&self) -> &Vector {
        &self.w
    }

    /// Constant balance factor applied to the filtered-state block of the
    /// regressor.
    pub fn block_scale(&self) -> f64 {
        self.block_scale
    }

    pub fn regression(&self) -> RegressionPair {
        RegressionPair { y: self.y.clone(), delta: self.delta }
    }

    /// Full per-step update: snapshot, mix, match, then advance the filters.
    pub fn process(&mut self, u: f64, y: f64, t: f64, dt: f64) -> Result<RegressionPair> {
        self.observe(u, y, t)?;
        if self.steps % self.cfg.mix_stride == 0 {
            self.mix()?;
            self.match_gains()?;
            if !self.delta.is_finite() || !self.y.iter().all(|v| v.is_finite()) {
                return Err(Error::Overflow { t, what: "regression products overflowed".into() });
            }
        }
        self.advance(u, y, dt)?;
        self.steps += 1;
        Ok(self.regression())
    }

    /// Assembles the filtered-state regressor at the current time.
    ///
    /// Column convention: the y-driven filter states pair with the first
    /// parameter block, the u-driven states with the second. (The resolvent
    /// identity puts the output-driven filters against the `psi - a`
    /// coefficients; the ground-truth oracle pins this orientation.)
    ///
    /// The stored pair `(zbar, phibar)` is the balanced copy described on the
    /// pipeline type; the regression identity holds with the block-scaled
    /// unknown vector `[-a / s; B_o / s; x(0)]`, `s = psi_n`.
    pub fn observe(&mut self, u: f64, y: f64, t: f64) -> Result<()> {
        if !u.is_finite() || !y.is_finite() {
            return Err(Error::Overflow { t, what: "plant output or input is not finite".into() });
        }
        let n = self.cfg.n;
        for i in 0..n {
            let col_y = &self.cfg.t_mats[i] * self.filters.eta_f2();
            let col_u = &self.cfg.t_mats[i] * self.filters.eta_f1();
            self.phi_mat.column_mut(i).copy_from(&col_y);
            self.phi_mat.column_mut(n + i).copy_from(&col_u);
        }
        // zbar = y - c^T Phi [psi; 0]
        let top_row = self.phi_mat.row(0);
        let mut psi_part = 0.0;
        for i in 0..n {
            psi_part += top_row[i] * self.cfg.psi[i];
        }
        for j in 0..2 * n {
            self.phibar[j] = top_row[j] * self.block_scale;
        }
        self.phibar.rows_mut(2 * n, n).copy_from(&self.w);
        let weight = 1.0 / (1.0 + self.phibar.norm());
        self.phibar *= weight;
        self.zbar = (y - psi_part) * weight;
        Ok(())
    }

    /// Adjugate/determinant mixing of the extended regression, then the
    /// block split `z_a = H_1 z`, `z_b = H_2 z`.
    ///
    /// The mixing is rank-aware (see the state-feedback pipeline): only the
    /// denominator rows and the trailing numerator rows must be excited.
    /// That matters here: a constant control input makes one u-driven filter
    /// state coincide with part of the initial-condition block, which leaves
    /// the extension matrix exactly singular while every coefficient the
    /// matching layer reads is still pinned down.
    pub fn mix(&mut self) -> Result<()> {
        let n = self.cfg.n;
        let m = self.cfg.m;
        let mut required: Vec<usize> = (0..n).collect();
        required.extend(2 * n - (m + 1)..2 * n);
        // Leading entries of the input block are structural zeros of the
        // observer form; they resolve deficient samples where the input
        // filters overlap the initial-condition block.
        let zero_rows: Vec<usize> = (n..2 * n - (m + 1)).collect();
        let (phi, z) =
            mix_symmetric_system(self.ext.phif(), self.ext.zf(), &required, &zero_rows)?;
        self.phi = phi;
        self.z = z.column(0).into_owned();
        // z = phi * [-a / s; B_o / s; x(0)]; H_1 flips the sign of the first
        // block, H_2 selects the trailing m + 1 entries of the B_o block, and
        // the constant block balance s is undone here.
        self.z_a = -self.z.rows(0, n) * self.block_scale;
        self.z_b = self.z.rows(2 * n - (m + 1), m + 1) * self.block_scale;
        Ok(())
    }

    /// Builds the matching system from the mixed products and contracts it to
    /// scalar form: `Y = adj(M) N`, `Delta = det(M)`.
    pub fn match_gains(&mut self) -> Result<()> {
        let (m_mat, n_vec) = matching_system(self.phi, &self.z_a, &self.z_b, &self.cfg)?;
        self.y = adjugate(&m_mat)? * &n_vec;
        self.delta = det(&m_mat)?;
        self.m_mat = m_mat;
        self.n_vec = n_vec;
        Ok(())
    }

    pub fn advance(&mut self, u: f64, y: f64, dt: f64) -> Result<()> {
        self.filters.step(u, y, dt);
        self.w += self.cfg.psi_c.transpose() * &self.w * dt;
        self.ext.step_scalar(self.zbar, &self.phibar, dt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adaptation::ideal_gains_of;
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, dvector};

    const DT: f64 = 1e-4;

    /// Plant and reference of the second-order output-feedback scenario:
    /// `y = 2 / (p^2 - 2p - 4) u`, `y_ref = 8 / (p^2 + 4p + 8) r`.
    fn second_order_config() -> OutputFeedbackConfig {
        OutputFeedbackConfig::new(
            2,
            0,
            8.0,
            Polynomial::one(),
            Polynomial::new(vec![8.0, 4.0, 1.0]),
            None,
            dvector![20.0, 100.0],
            0.1,
        )
        .unwrap()
    }

    #[test]
    fn transform_matrices_match_known_values() {
        let cfg = second_order_config();
        assert_eq!(cfg.t_mats[0], dmatrix![1.0, 0.0; 0.0, -100.0]);
        assert_eq!(cfg.t_mats[1], dmatrix![0.0, 1.0; 1.0, 20.0]);
    }

    #[test]
    fn transform_matrix_scalar_case() {
        let t = build_transform_matrices(&dmatrix![-3.0]).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0], dmatrix![1.0]);
    }

    #[test]
    fn transform_matrices_reconstruct_resolvent_numerator() {
        // Canonical Hurwitz matrix of dimension 3 with scattered poles.
        let psi = dvector![6.0, 11.0, 6.0]; // (p+1)(p+2)(p+3)
        let psi_c = observer_companion(&psi);
        let t_mats = build_transform_matrices(&psi_c).unwrap();
        for s in [0.7, 1.9, 4.2] {
            let m = Matrix::identity(3, 3) * s - &psi_c;
            let adj = m.clone().try_inverse().unwrap() * m.determinant();
            for (i, t) in t_mats.iter().enumerate() {
                let direct = adj.column(i).into_owned();
                let mut series = Vector::zeros(3);
                for j in 0..3 {
                    series += t.column(j) * s.powi(2 - j as i32);
                }
                assert_relative_eq!(direct, series, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn matching_system_first_order_hand_expansion() {
        // Plant y = 1 / (p - 2) u, reference y_ref = 2 / (p + 2) r.
        let cfg = OutputFeedbackConfig::new(
            1,
            0,
            2.0,
            Polynomial::one(),
            Polynomial::new(vec![2.0, 1.0]),
            None,
            dvector![5.0],
            1.0,
        )
        .unwrap();
        let (m, n) = matching_system(1.0, &dvector![-2.0], &dvector![1.0], &cfg).unwrap();
        assert_eq!(m, dmatrix![2.0, 2.0; 1.0, 0.0]);
        assert_eq!(n, dvector![-4.0, 2.0]);

        let theta = ideal_gains_of(&dvector![-2.0], &dvector![1.0], &cfg).unwrap();
        assert_relative_eq!(theta, dvector![2.0, -4.0], epsilon = 1e-12);
    }

    #[test]
    fn ideal_gains_for_second_order_scenario() {
        let cfg = second_order_config();
        let theta = ideal_gains_of(&dvector![-2.0, -4.0], &dvector![2.0], &cfg).unwrap();
        assert_relative_eq!(theta, dvector![4.0, -6.0, -3.0, -15.0], epsilon = 1e-10);
        // The leading gain is fixed by the gain ratio alone.
        assert_relative_eq!(theta[0], 8.0 / 2.0);
    }

    #[test]
    fn ideal_gains_reproduce_reference_closed_loop() {
        // Closed-loop equivalence: k4 bm Z lambda * R_ref == b_ref Z_ref *
        // ([lambda - k1 alpha] R - bm Z [k2 alpha + k3 lambda]).
        let cfg = second_order_config();
        let a = dvector![-2.0, -4.0];
        let b = dvector![2.0];
        let theta = ideal_gains_of(&a, &b, &cfg).unwrap();
        let (k4, k1, k2, k3) = (theta[0], theta[1], theta[2], theta[3]);

        let r_poly = Polynomial::new(vec![-4.0, -2.0, 1.0]);
        let bm_z = Polynomial::new(vec![2.0]);
        let lambda = cfg.lambda.clone();
        let lambda_minus_k1 = Polynomial::new(
            lambda
                .coeffs()
                .iter()
                .enumerate()
                .map(|(j, c)| if j == 0 { c - k1 } else { *c })
                .collect(),
        );
        let k2_plus_k3_lambda = Polynomial::new(
            lambda
                .coeffs()
                .iter()
                .enumerate()
                .map(|(j, c)| c * k3 + if j == 0 { k2 } else { 0.0 })
                .collect(),
        );
        let den = Polynomial::new(
            lambda_minus_k1
                .mul(&r_poly)
                .coeffs()
                .iter()
                .zip(bm_z.mul(&k2_plus_k3_lambda).padded(4))
                .map(|(a, b)| a - b)
                .collect(),
        );
        let num = bm_z.mul(&lambda).scale(k4);
        // num / den == b_ref z_ref / r_ref  <=>  num * r_ref == b_ref z_ref * den
        let lhs = num.mul(&cfg.r_ref);
        let rhs = cfg.z_ref.scale(cfg.b_ref).mul(&den);
        for (l, r) in lhs.padded(5).iter().zip(rhs.padded(5).iter()) {
            assert_relative_eq!(l, r, epsilon = 1e-9);
        }
    }

    #[test]
    fn ideal_gains_when_plant_equals_reference() {
        let cfg = OutputFeedbackConfig::new(
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
        // Plant identical to the reference model.
        let theta = ideal_gains_of(&dvector![4.0, 8.0], &dvector![8.0], &cfg).unwrap();
        assert_relative_eq!(theta[0], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn matching_with_true_coefficients_is_nonsingular() {
        let cfg = second_order_config();
        let (m, _) = matching_system(1.0, &dvector![-2.0, -4.0], &dvector![2.0], &cfg).unwrap();
        assert!(det(&m).unwrap().abs() > 1e-6);
    }

    #[test]
    fn zero_mixing_products_give_zero_system() {
        let cfg = second_order_config();
        let (m, n) = matching_system(0.0, &Vector::zeros(2), &Vector::zeros(1), &cfg).unwrap();
        assert_eq!(m.norm(), 0.0);
        assert_eq!(n.norm(), 0.0);
        let y = adjugate(&m).unwrap() * n;
        assert_eq!(y.norm(), 0.0);
        assert_eq!(det(&m).unwrap(), 0.0);
    }

    #[test]
    fn zero_signals_keep_pipeline_zero() {
        let cfg = second_order_config();
        let mut p = OutputFeedbackPipeline::new(&cfg).unwrap();
        for k in 0..100 {
            let pair = p.process(0.0, 0.0, k as f64 * DT, DT).unwrap();
            assert_eq!(p.zbar(), 0.0);
            assert_eq!(p.phibar().rows(0, 4).norm(), 0.0);
            assert_eq!(pair.delta, 0.0);
        }
    }

    #[test]
    fn initial_state_block_starts_at_canonical_output() {
        let cfg = second_order_config();
        let mut p = OutputFeedbackPipeline::new(&cfg).unwrap();
        p.observe(0.0, 0.0, 0.0).unwrap();
        assert_eq!(p.initial_state_block(), &dvector![1.0, 0.0]);
        // In the balanced regressor the block appears through the common
        // normalization weight, here 1 / (1 + 1).
        assert_eq!(p.phibar().rows(4, 2), dvector![0.5, 0.0]);
    }

    /// Simulates the second-order plant in observer canonical form under the
    /// ideal controller and checks every identity in the chain per sample.
    #[test]
    fn ground_truth_oracle_along_closed_loop() {
        let cfg = second_order_config();
        let a = dvector![-2.0, -4.0];
        let b = dvector![2.0];
        let theta_star = ideal_gains_of(&a, &b, &cfg).unwrap();

        let a_o = dmatrix![2.0, 1.0; 4.0, 0.0];
        let b_o = dvector![0.0, 2.0];
        let x0 = dvector![0.5, 0.0];
        let mut x = x0.clone();
        let (lam, h) = cfg.controller_filter().unwrap();
        let mut v1 = Vector::zeros(1);
        let mut v2 = Vector::zeros(1);

        // With the balanced regressor the unknown vector is
        // [-a / s; B_o / s; x(0)], s the block scale.
        let s = 100.0;
        let mut theta_bar = Vector::zeros(6);
        theta_bar.rows_mut(0, 2).copy_from(&(-&a / s));
        theta_bar.rows_mut(2, 2).copy_from(&(&b_o / s));
        theta_bar.rows_mut(4, 2).copy_from(&x0);

        let mut p = OutputFeedbackPipeline::new(&cfg).unwrap();
        let mut t: f64 = 0.0;
        for k in 0..60_000 {
            let y = x[0];
            let r = 1.0 + 0.5 * (2.0 * t).sin();
            let u = theta_star[0] * r + theta_star[1] * v1[0] + theta_star[2] * v2[0] + theta_star[3] * y;

            p.observe(u, y, t).unwrap();
            p.mix().unwrap();
            p.match_gains().unwrap();

            let res = (p.zbar() - theta_bar.dot(p.phibar())).abs();
            assert!(
                res <= 1e-6 * (1.0 + p.phibar().norm()),
                "zbar residual {res:.3e} at step {k}"
            );

            let scale = 1.0 + p.phi().abs() * a.norm();
            assert!((p.z_a() - &a * p.phi()).norm() <= 1e-6 * scale, "z_a residual at step {k}");
            assert!((p.z_b() - &b * p.phi()).norm() <= 1e-6 * scale, "z_b residual at step {k}");
            assert!(p.phi() >= -1e-12 * (1.0 + p.phi().abs()), "phi negative at step {k}");

            let pair = p.regression();
            let res_y = (&pair.y - &theta_star * pair.delta).norm();
            assert!(
                res_y <= 1e-6 * (1.0 + pair.delta.abs()),
                "regression residual {res_y:.3e} at step {k}"
            );

            p.advance(u, y, DT).unwrap();
            x += (&a_o * &x + &b_o * u) * DT;
            v1 += (&lam * &v1 + &h * u) * DT;
            v2 += (&lam * &v2 + &h * y) * DT;
            t += DT;
        }
    }

    /// The filter-to-parameter pairing is the one the resolvent identity
    /// dictates; swapping the u- and y-driven blocks breaks the regression.
    #[test]
    fn swapped_filter_pairing_fails_the_oracle() {
        let cfg = second_order_config();
        let a = dvector![-2.0, -4.0];
        let b = dvector![2.0];
        let theta_star = ideal_gains_of(&a, &b, &cfg).unwrap();

        let a_o = dmatrix![2.0, 1.0; 4.0, 0.0];
        let b_o = dvector![0.0, 2.0];
        let mut x = Vector::zeros(2);
        let (lam, h) = cfg.controller_filter().unwrap();
        let mut v1 = Vector::zeros(1);
        let mut v2 = Vector::zeros(1);

        let mut theta_bar = Vector::zeros(6);
        theta_bar.rows_mut(0, 2).copy_from(&(-&a));
        theta_bar.rows_mut(2, 2).copy_from(&b_o);

        let mut p = OutputFeedbackPipeline::new(&cfg).unwrap();
        let mut t: f64 = 0.0;
        let mut worst = 0.0f64;
        for _ in 0..20_000 {
            let y = x[0];
            let r = 1.0;
            let u = theta_star[0] * r + theta_star[1] * v1[0] + theta_star[2] * v2[0] + theta_star[3] * y;
            p.observe(u, y, t).unwrap();

            // Rebuild the raw regression with the u- and y-driven blocks
            // swapped (the literal reading that pairs u-filters with the
            // first parameter block).
            let n = 2;
            let mut phi_swapped = Matrix::zeros(n, 2 * n);
            for i in 0..n {
                phi_swapped
                    .column_mut(i)
                    .copy_from(&(&cfg.t_mats[i] * p.filters().eta_f1()));
                phi_swapped
                    .column_mut(n + i)
                    .copy_from(&(&cfg.t_mats[i] * p.filters().eta_f2()));
            }
            let mut psi_part = 0.0;
            for i in 0..n {
                psi_part += phi_swapped[(0, i)] * cfg.psi[i];
            }
            let zbar_swapped = y - psi_part;
            let mut phibar_swapped = Vector::zeros(3 * n);
            for j in 0..2 * n {
                phibar_swapped[j] = phi_swapped[(0, j)];
            }
            phibar_swapped.rows_mut(2 * n, n).copy_from(p.initial_state_block());
            // Raw unknown vector (no block balance in this reconstruction).
            let mut theta_raw = theta_bar.clone();
            theta_raw.rows_mut(0, 4).copy_from(&(theta_bar.rows(0, 4) * 100.0));
            let res = (zbar_swapped - theta_raw.dot(&phibar_swapped)).abs();
            worst = worst.max(res / (1.0 + phibar_swapped.norm()));

            p.advance(u, y, DT).unwrap();
            x += (&a_o * &x + &b_o * u) * DT;
            v1 += (&lam * &v1 + &h * u) * DT;
            v2 += (&lam * &v2 + &h * y) * DT;
            t += DT;
        }
        assert!(worst > 1e-3, "swapped pairing unexpectedly satisfied the regression ({worst:.3e})");
    }

    #[test]
    fn config_rejects_degree_mismatches() {
        // Relative degree mismatch.
        assert!(OutputFeedbackConfig::new(
            2,
            0,
            8.0,
            Polynomial::one(),
            Polynomial::new(vec![2.0, 1.0]),
            None,
            dvector![20.0, 100.0],
            0.1,
        )
        .is_err());
        // Non-Hurwitz psi.
        assert!(OutputFeedbackConfig::new(
            2,
            0,
            8.0,
            Polynomial::one(),
            Polynomial::new(vec![8.0, 4.0, 1.0]),
            None,
            dvector![-20.0, 100.0],
            0.1,
        )
        .is_err());
        // Wrong lambda0 degree.
        assert!(OutputFeedbackConfig::new(
            2,
            0,
            8.0,
            Polynomial::one(),
            Polynomial::new(vec![8.0, 4.0, 1.0]),
            Some(Polynomial::new(vec![1.0, 2.0, 1.0])),
            dvector![20.0, 100.0],
            0.1,
        )
        .is_err());
    }
}
