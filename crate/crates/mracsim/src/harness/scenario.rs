//! JSON scenario files: a versioned, human-diffable description of one
//! closed-loop experiment, with validation that reports every failed check
//! together with its field path.

use std::path::Path;

use serde::{Deserialize, Serialize};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numerics::{is_hurwitz, IntegratorConfig, Matrix, Vector};
use crate::output_feedback::OutputFeedbackConfig;
use crate::polynomial::Polynomial;
use crate::signal::ReferenceSignal;
use crate::simulation::{
    LawConfig, LtiStatePlant, OfExperiment, SfExperiment, StateReference, TransferFunctionPlant,
    TransferReference,
};
use crate::state_feedback::{ExtensionScheme, StateFeedbackConfig};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    StateFeedback,
    OutputFeedback,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::StateFeedback => "state_feedback",
            Mode::OutputFeedback => "output_feedback",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlantSpec {
    /// `x' = A x + B u` with measurable state.
    State {
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        #[serde(default)]
        x0: Vec<f64>,
    },
    /// `y = gain * numerator_monic(p) / denominator_monic(p) * u`,
    /// polynomials in ascending coefficient order.
    Transfer {
        gain: f64,
        numerator_monic: Vec<f64>,
        denominator_monic: Vec<f64>,
        #[serde(default)]
        y0: f64,
    },
}

pub type ReferenceSpec = PlantSpec;

/// Either a scalar (meaning `scalar * I`) or a full matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainSpec {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

impl GainSpec {
    fn to_matrix(&self, dim: usize) -> Matrix {
        match self {
            GainSpec::Scalar(s) => Matrix::identity(dim, dim) * *s,
            GainSpec::Matrix(rows) => to_matrix(rows),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LawSpec {
    Normalized {
        gamma0: f64,
        gamma1: f64,
        sigma: f64,
        #[serde(default)]
        omega_floor: f64,
    },
    Baseline { gamma: GainSpec, q: GainSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiltersSpec {
    /// Measurement / extension filter constant.
    pub l: f64,
    /// State-feedback filter bank taps `(alpha_i, beta_i)`; defaults to
    /// `alpha_i = beta_i = i` for `i = 1..=n+2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bank: Option<Vec<(f64, f64)>>,
    /// State-feedback extension scheme (`filter_bank` by default).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extension: Option<ExtensionScheme>,
    /// Output-feedback observer filter coefficients.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<Vec<f64>>,
    /// Output-feedback auxiliary polynomial; defaults to roots at -1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda0: Option<Vec<f64>>,
    #[serde(default = "default_mix_stride")]
    pub mix_stride: usize,
}

fn default_mix_stride() -> usize {
    1
}

fn default_decimate() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    pub mode: Mode,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_decimate")]
    pub decimate: usize,
    pub plant: PlantSpec,
    pub reference_model: ReferenceSpec,
    pub reference_signal: ReferenceSignal,
    pub law: LawSpec,
    pub filters: FiltersSpec,
    pub theta0: Vec<f64>,
}

fn to_matrix(rows: &[Vec<f64>]) -> Matrix {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    DMatrix::from_fn(nrows, ncols, |r, c| rows[r][c])
}

fn to_vector(v: &[f64]) -> Vector {
    DVector::from_column_slice(v)
}

impl Scenario {
    /// Validates every invariant and returns the full list of violations.
    pub fn validate(&self) -> Result<()> {
        let mut errs: Vec<String> = Vec::new();

        if self.schema_version != SCHEMA_VERSION {
            errs.push(format!(
                "schema_version: expected {SCHEMA_VERSION}, got {}",
                self.schema_version
            ));
        }
        if !(self.dt > 0.0) {
            errs.push(format!("dt: must be > 0, got {}", self.dt));
        }
        if !(self.t_end > 0.0) {
            errs.push(format!("t_end: must be > 0, got {}", self.t_end));
        } else if self.dt > self.t_end {
            errs.push(format!("dt: dt = {} exceeds t_end = {}", self.dt, self.t_end));
        }
        if self.decimate == 0 {
            errs.push("decimate: must be >= 1".into());
        }
        if self.filters.mix_stride == 0 {
            errs.push("filters.mix_stride: must be >= 1".into());
        }
        if !(self.filters.l > 0.0) {
            errs.push(format!("filters.l: must be > 0, got {}", self.filters.l));
        }

        if let LawSpec::Normalized { gamma0, gamma1, sigma, omega_floor } = &self.law {
            if !(*gamma0 >= 1.0) {
                errs.push(format!("law.gamma0: must be >= 1, got {gamma0}"));
            }
            if !(*gamma1 >= 0.0) {
                errs.push(format!("law.gamma1: must be >= 0, got {gamma1}"));
            }
            if !(*sigma > 0.0) {
                errs.push(format!("law.sigma: must be > 0, got {sigma}"));
            }
            if !(*omega_floor >= 0.0) {
                errs.push(format!("law.omega_floor: must be >= 0, got {omega_floor}"));
            }
        }

        match self.mode {
            Mode::StateFeedback => self.validate_state_feedback(&mut errs),
            Mode::OutputFeedback => self.validate_output_feedback(&mut errs),
        }

        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    fn validate_state_feedback(&self, errs: &mut Vec<String>) {
        let (a, b, x0) = match &self.plant {
            PlantSpec::State { a, b, x0 } => (a, b, x0),
            PlantSpec::Transfer { .. } => {
                errs.push("plant.kind: state_feedback mode needs a state-space plant".into());
                return;
            }
        };
        let n = a.len();
        if n == 0 || a.iter().any(|r| r.len() != n) {
            errs.push("plant.a: must be a nonempty square matrix".into());
            return;
        }
        if b.len() != n {
            errs.push(format!("plant.b: expected {n} entries, got {}", b.len()));
        }
        if !x0.is_empty() && x0.len() != n {
            errs.push(format!("plant.x0: expected {n} entries, got {}", x0.len()));
        }
        match &self.reference_model {
            PlantSpec::State { a: a_ref, b: b_ref, x0: x0_ref } => {
                if a_ref.len() != n || a_ref.iter().any(|r| r.len() != n) {
                    errs.push(format!("reference_model.a: must be {n}x{n}"));
                } else if !is_hurwitz(&to_matrix(a_ref)) {
                    errs.push("reference_model.a: not Hurwitz".into());
                }
                if b_ref.len() != n {
                    errs.push(format!(
                        "reference_model.b: expected {n} entries, got {}",
                        b_ref.len()
                    ));
                }
                if !x0_ref.is_empty() && x0_ref.len() != n {
                    errs.push(format!(
                        "reference_model.x0: expected {n} entries, got {}",
                        x0_ref.len()
                    ));
                }
            }
            PlantSpec::Transfer { .. } => {
                errs.push(
                    "reference_model.kind: state_feedback mode needs a state-space reference".into(),
                );
            }
        }
        if self.theta0.len() != n + 1 {
            errs.push(format!(
                "theta0: expected n + 1 = {} entries, got {}",
                n + 1,
                self.theta0.len()
            ));
        } else if matches!(self.law, LawSpec::Normalized { .. }) && self.theta0[n] == 0.0 {
            errs.push("theta0: initial reference gain (last entry) must be nonzero".into());
        }
        if let Some(bank) = &self.filters.bank {
            if bank.len() != n + 2 {
                errs.push(format!(
                    "filters.bank: expected n + 2 = {} taps, got {}",
                    n + 2,
                    bank.len()
                ));
            }
        }
        if self.filters.psi.is_some() {
            errs.push("filters.psi: not used in state_feedback mode".into());
        }
    }

    fn validate_output_feedback(&self, errs: &mut Vec<String>) {
        let (gain, num, den) = match &self.plant {
            PlantSpec::Transfer { gain, numerator_monic, denominator_monic, .. } => {
                (gain, numerator_monic, denominator_monic)
            }
            PlantSpec::State { .. } => {
                errs.push("plant.kind: output_feedback mode needs a transfer-function plant".into());
                return;
            }
        };
        if *gain == 0.0 {
            errs.push("plant.gain: must be nonzero".into());
        }
        if num.is_empty() || den.len() < 2 {
            errs.push(
                "plant: polynomials must be nonempty and the denominator of degree >= 1".into(),
            );
            return;
        }
        let n = den.len() - 1;
        let m = num.len() - 1;
        if m >= n {
            errs.push(format!("plant: must be strictly proper (deg num = {m}, deg den = {n})"));
        }
        let z = Polynomial::new(num.clone());
        if !z.is_monic() {
            errs.push("plant.numerator_monic: leading coefficient must be 1".into());
        } else if !z.hurwitz() {
            errs.push("plant.numerator_monic: must be Hurwitz (minimum phase)".into());
        }
        if !Polynomial::new(den.clone()).is_monic() {
            errs.push("plant.denominator_monic: leading coefficient must be 1".into());
        }
        match &self.reference_model {
            PlantSpec::Transfer {
                gain: g_ref,
                numerator_monic: z_ref,
                denominator_monic: r_ref,
                ..
            } => {
                if *g_ref == 0.0 {
                    errs.push("reference_model.gain: must be nonzero".into());
                }
                if z_ref.is_empty() || r_ref.is_empty() {
                    errs.push("reference_model: polynomials must be nonempty".into());
                } else {
                    let zp = Polynomial::new(z_ref.clone());
                    let rp = Polynomial::new(r_ref.clone());
                    if !zp.hurwitz() || !rp.hurwitz() {
                        errs.push("reference_model: polynomials must be Hurwitz".into());
                    }
                    let (m_star, n_star) = (zp.degree(), rp.degree());
                    if n_star < m_star || n_star - m_star != n - m {
                        errs.push(format!(
                            "reference_model: relative degree {} does not match plant relative degree {}",
                            n_star as i64 - m_star as i64,
                            n - m
                        ));
                    }
                }
            }
            PlantSpec::State { .. } => {
                errs.push(
                    "reference_model.kind: output_feedback mode needs a transfer-function reference"
                        .into(),
                );
            }
        }
        match &self.filters.psi {
            None => errs.push("filters.psi: required in output_feedback mode".into()),
            Some(psi) => {
                if psi.len() != n {
                    errs.push(format!("filters.psi: expected {n} entries, got {}", psi.len()));
                } else {
                    let mut coeffs: Vec<f64> = psi.iter().rev().copied().collect();
                    coeffs.push(1.0);
                    if !Polynomial::new(coeffs).hurwitz() {
                        errs.push("filters.psi: does not define a Hurwitz filter matrix".into());
                    }
                }
            }
        }
        if self.filters.bank.is_some() {
            errs.push("filters.bank: not used in output_feedback mode".into());
        }
        if self.theta0.len() != 2 * n {
            errs.push(format!(
                "theta0: expected 2n = {} entries, got {}",
                2 * n,
                self.theta0.len()
            ));
        } else if matches!(self.law, LawSpec::Normalized { .. }) && self.theta0[0] == 0.0 {
            errs.push("theta0: initial reference gain (first entry) must be nonzero".into());
        }
    }

    fn law_config(&self, theta_dim: usize) -> LawConfig {
        match &self.law {
            LawSpec::Normalized { gamma0, gamma1, sigma, omega_floor } => LawConfig::Normalized {
                gamma0: *gamma0,
                gamma1: *gamma1,
                sigma: *sigma,
                omega_floor: *omega_floor,
            },
            LawSpec::Baseline { gamma, q } => {
                let state_dim = match &self.plant {
                    PlantSpec::State { a, .. } => a.len(),
                    PlantSpec::Transfer { denominator_monic, .. } => denominator_monic.len() - 1,
                };
                LawConfig::Baseline { gamma: gamma.to_matrix(theta_dim), q: q.to_matrix(state_dim) }
            }
        }
    }

    /// Builds the state-feedback experiment. Validation runs first.
    pub fn to_sf_experiment(&self) -> Result<SfExperiment> {
        self.validate()?;
        let (a, b, x0) = match &self.plant {
            PlantSpec::State { a, b, x0 } => (to_matrix(a), to_vector(b), x0.clone()),
            _ => unreachable!("validated"),
        };
        let n = a.nrows();
        let x0 = if x0.is_empty() { Vector::zeros(n) } else { to_vector(&x0) };
        let plant = LtiStatePlant::new(a, b, x0)?;
        let reference = match &self.reference_model {
            PlantSpec::State { a, b, x0 } => {
                let x0 = if x0.is_empty() { Vector::zeros(n) } else { to_vector(x0) };
                StateReference::new(to_matrix(a), to_vector(b), x0)?
            }
            _ => unreachable!("validated"),
        };
        let mut pipeline = StateFeedbackConfig::new(
            n,
            self.filters.l,
            reference.a_ref.clone(),
            reference.b_ref.clone(),
        );
        if let Some(bank) = &self.filters.bank {
            pipeline.bank = bank.clone();
        }
        if let Some(ext) = self.filters.extension {
            pipeline.extension = ext;
        }
        pipeline.mix_stride = self.filters.mix_stride;
        Ok(SfExperiment {
            plant,
            reference,
            signal: self.reference_signal.clone(),
            pipeline,
            law: self.law_config(n + 1),
            theta0: to_vector(&self.theta0),
            integrator: IntegratorConfig::new(self.dt, self.t_end)?,
            record_stride: self.decimate,
        })
    }

    /// Builds the output-feedback experiment. Validation runs first.
    pub fn to_of_experiment(&self) -> Result<OfExperiment> {
        self.validate()?;
        let (gain, num, den, y0) = match &self.plant {
            PlantSpec::Transfer { gain, numerator_monic, denominator_monic, y0 } => {
                (*gain, numerator_monic.clone(), denominator_monic.clone(), *y0)
            }
            _ => unreachable!("validated"),
        };
        let plant =
            TransferFunctionPlant::new(gain, Polynomial::new(num), Polynomial::new(den), y0)?;
        let n = plant.order();
        let m = plant.z.degree();
        let (b_ref, z_ref, r_ref, y0_ref) = match &self.reference_model {
            PlantSpec::Transfer { gain, numerator_monic, denominator_monic, y0 } => (
                *gain,
                Polynomial::new(numerator_monic.clone()),
                Polynomial::new(denominator_monic.clone()),
                *y0,
            ),
            _ => unreachable!("validated"),
        };
        let reference = TransferReference::new(b_ref, z_ref.clone(), r_ref.clone(), y0_ref)?;
        let psi = to_vector(self.filters.psi.as_ref().expect("validated"));
        let lambda0 = self.filters.lambda0.as_ref().map(|c| Polynomial::new(c.clone()));
        let mut pipeline =
            OutputFeedbackConfig::new(n, m, b_ref, z_ref, r_ref, lambda0, psi, self.filters.l)?;
        pipeline.mix_stride = self.filters.mix_stride;
        Ok(OfExperiment {
            plant,
            reference,
            signal: self.reference_signal.clone(),
            pipeline,
            law: self.law_config(2 * n),
            theta0: to_vector(&self.theta0),
            integrator: IntegratorConfig::new(self.dt, self.t_end)?,
            record_stride: self.decimate,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialization cannot fail")
    }
}

/// Loads and validates a scenario from a JSON file.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    parse_scenario(&text)
}

/// Parses and validates a scenario from JSON text.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let scenario: Scenario = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    scenario.validate()?;
    Ok(scenario)
}

macro_rules! presets {
    ($(($name:literal, $file:literal)),* $(,)?) => {
        /// Names of the shipped scenario presets.
        pub fn preset_names() -> &'static [&'static str] {
            &[$($name),*]
        }

        /// Returns a shipped preset by name.
        pub fn preset(name: &str) -> Result<Scenario> {
            let text = match name {
                $($name => include_str!(concat!("../../presets/", $file)),)*
                _ => {
                    return Err(Error::Config(format!(
                        "unknown preset '{name}' (available: {})",
                        preset_names().join(", ")
                    )))
                }
            };
            parse_scenario(text)
        }
    };
}

presets![
    ("sf_fig1", "sf_fig1.json"),
    ("sf_fig2", "sf_fig2.json"),
    ("sf_fig3", "sf_fig3.json"),
    ("sf_gamma1_10", "sf_gamma1_10.json"),
    ("sf_baseline", "sf_baseline.json"),
    ("of_fig6", "of_fig6.json"),
    ("of_fig7", "of_fig7.json"),
    ("of_fig8", "of_fig8.json"),
    ("of_gamma1_0", "of_gamma1_0.json"),
    ("of_gamma1_10", "of_gamma1_10.json"),
];

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn presets_parse_and_validate() {
        for name in preset_names() {
            let s = preset(name).unwrap_or_else(|e| panic!("preset {name}: {e}"));
            assert_eq!(s.name, *name);
        }
    }

    #[test]
    fn tracking_preset_matches_published_values() {
        let s = preset("sf_fig1").unwrap();
        match &s.plant {
            PlantSpec::State { a, b, .. } => {
                assert_eq!(a, &vec![vec![0.0, 1.0], vec![4.0, 2.0]]);
                assert_eq!(b, &vec![0.0, 2.0]);
            }
            _ => panic!("wrong plant kind"),
        }
        match &s.law {
            LawSpec::Normalized { gamma0, gamma1, sigma, .. } => {
                assert_relative_eq!(*gamma0, 1.0);
                assert_relative_eq!(*gamma1, 0.0);
                assert_relative_eq!(*sigma, 0.5);
            }
            _ => panic!("wrong law kind"),
        }
        assert_eq!(s.filters.l, 1.0);
        assert_eq!(s.theta0, vec![0.0, 0.0, 1.0]);
        assert_eq!(s.reference_signal, ReferenceSignal::Constant { amplitude: 1.0 });
        let exp = s.to_sf_experiment().unwrap();
        assert_eq!(exp.pipeline.bank, vec![(1.0, 1.0), (2.0, 2.0), (3.0, 3.0), (4.0, 4.0)]);
    }

    #[test]
    fn output_preset_matches_published_values() {
        let s = preset("of_fig6").unwrap();
        match &s.plant {
            PlantSpec::Transfer { gain, numerator_monic, denominator_monic, .. } => {
                assert_eq!(*gain, 2.0);
                assert_eq!(numerator_monic, &vec![1.0]);
                assert_eq!(denominator_monic, &vec![-4.0, -2.0, 1.0]);
            }
            _ => panic!("wrong plant kind"),
        }
        assert_eq!(s.filters.psi, Some(vec![20.0, 100.0]));
        assert_eq!(s.filters.l, 0.1);
        assert_eq!(s.theta0, vec![1.0, 0.0, 0.0, 0.0]);
        let exp = s.to_of_experiment().unwrap();
        // Lambda(p) = lambda0 * z_ref = p + 1, realized as the scalar -1.
        let (lam, h) = exp.pipeline.controller_filter().unwrap();
        assert_eq!(lam[(0, 0)], -1.0);
        assert_eq!(h[0], 1.0);
    }

    #[test]
    fn presets_round_trip_unchanged() {
        for name in preset_names() {
            let s = preset(name).unwrap();
            let reparsed = parse_scenario(&s.to_json()).unwrap();
            assert_eq!(s, reparsed, "round trip changed preset {name}");
        }
    }

    #[test]
    fn unstable_reference_is_rejected_with_field_path() {
        let mut s = preset("sf_fig1").unwrap();
        if let PlantSpec::State { a, .. } = &mut s.reference_model {
            a[1][0] = 8.0; // flips the sign of a stabilizing coefficient
        }
        let err = s.validate().unwrap_err();
        match err {
            Error::Validation(msgs) => {
                assert!(
                    msgs.iter().any(|m| m.contains("reference_model.a") && m.contains("Hurwitz")),
                    "messages: {msgs:?}"
                );
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn validation_collects_multiple_errors() {
        let mut s = preset("sf_fig1").unwrap();
        s.dt = -1.0;
        s.theta0 = vec![0.0, 0.0, 0.0];
        match s.validate().unwrap_err() {
            Error::Validation(msgs) => {
                assert!(msgs.len() >= 2, "messages: {msgs:?}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }
}
