use serde::{Deserialize, Serialize};

use super::system::{System, SystemSpec};

/// Task reward, before any failure penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RewardSpec {
    /// One on the grid node nearest `target`, zero elsewhere.
    Parsimonious { target: Vec<f64> },
    /// Identically zero.
    Degenerate,
    /// One when `|x1 - center| <= half_width`.
    PositiveProxy { center: f64, half_width: f64 },
    /// `-1 - u^2` when `|x2| >= speed_limit`, `-u^2` otherwise.
    NegativeProxy { speed_limit: f64 },
    /// Shelf running reward (-1 on the shelf, +1 while falling, 0 at the
    /// endpoints) integrated over one hold with discount rate `tau`.
    Shelf { tau: f64 },
}

impl RewardSpec {
    pub fn parsimonious() -> Self {
        Self::Parsimonious { target: vec![10.0, 0.0] }
    }

    pub fn positive_proxy() -> Self {
        Self::PositiveProxy { center: 10.0, half_width: 1.0 }
    }

    pub fn negative_proxy() -> Self {
        Self::NegativeProxy { speed_limit: 2.0 }
    }

    /// Reward for applying `u` at `x`. `at_target` tells whether `x` is the
    /// node the parsimonious reward is attached to.
    pub fn evaluate(&self, spec: &SystemSpec, x: &[f64], u: &[f64], at_target: bool) -> f64 {
        match self {
            Self::Parsimonious { .. } => {
                if at_target {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Degenerate => 0.0,
            Self::PositiveProxy { center, half_width } => {
                if (x[0] - center).abs() <= *half_width {
                    1.0
                } else {
                    0.0
                }
            }
            Self::NegativeProxy { speed_limit } => {
                let effort = u.iter().map(|v| v * v).sum::<f64>();
                if x[1].abs() >= *speed_limit {
                    -1.0 - effort
                } else {
                    -effort
                }
            }
            Self::Shelf { tau } => {
                let length = match spec.system {
                    System::Shelf { length, .. } => length,
                    _ => return 0.0,
                };
                let running = if x[0] <= -length || x[0] >= length {
                    0.0
                } else if x[0] < 0.0 {
                    1.0
                } else {
                    -1.0
                };
                running * tau * (1.0 - (-spec.dt / tau).exp())
            }
        }
    }

    /// Largest reward magnitude the scenario can produce with controls in
    /// `[-1, 1]`.
    pub fn magnitude_bound(&self, spec: &SystemSpec) -> f64 {
        match self {
            Self::Parsimonious { .. } | Self::PositiveProxy { .. } => 1.0,
            Self::Degenerate => 0.0,
            Self::NegativeProxy { .. } => 2.0,
            Self::Shelf { tau } => tau * (1.0 - (-spec.dt / tau).exp()),
        }
    }
}
