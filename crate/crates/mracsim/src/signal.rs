//! Reference signals for the closed-loop experiments. The set is a small
//! named registry so scenario files stay declarative; new kinds are added by
//! extending the enum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinusoidComponent {
    pub amplitude: f64,
    pub angular_frequency: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReferenceSignal {
    /// `r(t) = amplitude`
    Constant { amplitude: f64 },
    /// `r(t) = amplitude * e^{-rate t}`
    Exponential { amplitude: f64, rate: f64 },
    /// `r(t) = amplitude * sin(angular_frequency t + phase)`
    Sinusoid {
        amplitude: f64,
        angular_frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    SumOfSinusoids { components: Vec<SinusoidComponent> },
}

impl ReferenceSignal {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Self::Constant { amplitude } => *amplitude,
            Self::Exponential { amplitude, rate } => amplitude * (-rate * t).exp(),
            Self::Sinusoid { amplitude, angular_frequency, phase } => {
                amplitude * (angular_frequency * t + phase).sin()
            }
            Self::SumOfSinusoids { components } => components
                .iter()
                .map(|c| c.amplitude * (c.angular_frequency * t + c.phase).sin())
                .sum(),
        }
    }

    /// Compact token form used by sweep value lists: `constant[:A]`,
    /// `sin[:A[:W]]`, `exp[:A[:RATE]]`.
    pub fn parse_token(token: &str) -> Result<Self> {
        let mut parts = token.split(':');
        let kind = parts.next().unwrap_or_default();
        let mut nums = Vec::new();
        for p in parts {
            nums.push(
                p.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad number '{p}' in signal token '{token}'")))?,
            );
        }
        let get = |i: usize, default: f64| nums.get(i).copied().unwrap_or(default);
        match kind {
            "constant" | "const" => Ok(Self::Constant { amplitude: get(0, 1.0) }),
            "sin" | "sinusoid" => Ok(Self::Sinusoid {
                amplitude: get(0, 1.0),
                angular_frequency: get(1, 1.0),
                phase: 0.0,
            }),
            "exp" | "exponential" => Ok(Self::Exponential { amplitude: get(0, 1.0), rate: get(1, 1.0) }),
            other => Err(Error::Parse(format!("unknown signal kind '{other}'"))),
        }
    }

    /// Short label used in output paths and sweep tables.
    pub fn label(&self) -> String {
        match self {
            Self::Constant { amplitude } => format!("constant_{amplitude}"),
            Self::Exponential { amplitude, rate } => format!("exp_{amplitude}_{rate}"),
            Self::Sinusoid { amplitude, angular_frequency, .. } => {
                format!("sin_{amplitude}_{angular_frequency}")
            }
            Self::SumOfSinusoids { components } => format!("sum{}", components.len()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn evaluation() {
        assert_eq!(ReferenceSignal::Constant { amplitude: 2.0 }.eval(7.0), 2.0);
        let e = ReferenceSignal::Exponential { amplitude: 1.0, rate: 1.0 };
        assert_relative_eq!(e.eval(1.0), (-1.0f64).exp());
        let s = ReferenceSignal::Sinusoid { amplitude: 2.0, angular_frequency: 3.0, phase: 0.0 };
        assert_relative_eq!(s.eval(0.5), 2.0 * 1.5f64.sin());
    }

    #[test]
    fn token_parsing() {
        assert_eq!(
            ReferenceSignal::parse_token("constant:1").unwrap(),
            ReferenceSignal::Constant { amplitude: 1.0 }
        );
        assert_eq!(
            ReferenceSignal::parse_token("sin:1:2").unwrap(),
            ReferenceSignal::Sinusoid { amplitude: 1.0, angular_frequency: 2.0, phase: 0.0 }
        );
        assert_eq!(
            ReferenceSignal::parse_token("exp").unwrap(),
            ReferenceSignal::Exponential { amplitude: 1.0, rate: 1.0 }
        );
        assert!(ReferenceSignal::parse_token("triangle").is_err());
    }
}
