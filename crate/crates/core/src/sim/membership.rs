//! Fuzzy weather-category memberships over scenario state.
//!
//! Each category gets a handful of logistic gates on the scenario variables
//! (moisture store, temperature, fog density, precipitation) combined by
//! minimum, fuzzy-AND style. The min combination is what makes boundary
//! fixtures exact: when one gate sits at its midpoint and the others are
//! saturated, the membership is that gate's 0.5, not a product of
//! almost-ones.
//!
//! Memberships only steer which categories co-occur and with what raw
//! strength; the authoritative label of a rendered sample is always its
//! blend weight vector.

use serde::{Deserialize, Serialize};

use super::scenario::{fog_density, ScenarioState};
use super::{ProbabilityVector, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateVariable {
    Moisture,
    Temperature,
    Fog,
    Precipitation,
}

/// One logistic gate: rising gates open as the variable climbs past the
/// midpoint, falling gates close. `scale` sets the transition softness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gate {
    pub variable: GateVariable,
    pub midpoint: f64,
    pub scale: f64,
    pub rising: bool,
}

impl Gate {
    fn evaluate(&self, value: f64) -> f64 {
        let t = if self.rising {
            (value - self.midpoint) / self.scale
        } else {
            (self.midpoint - value) / self.scale
        };
        1.0 / (1.0 + (-t).exp())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoryGates {
    pub name: String,
    pub gates: Vec<Gate>,
}

/// Versioned membership definition, shipped alongside every dataset so a
/// sample's provenance is auditable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MembershipConfig {
    pub version: u32,
    /// Moisture value treated as saturation when deriving fog density.
    pub moisture_ceiling: f64,
    pub categories: Vec<CategoryGates>,
}

fn g(variable: GateVariable, rising: bool, midpoint: f64, scale: f64) -> Gate {
    Gate {
        variable,
        midpoint,
        scale,
        rising,
    }
}

impl Default for MembershipConfig {
    /// Hand-tuned gate table for the canonical fourteen categories.
    ///
    /// Anchors worth knowing: the sunny/rainy moisture boundary sits at 10
    /// (rain's rising moisture gate), the moisture ceiling is 20, and the
    /// neutral category is a band around moisture 10 / temperature 15 with
    /// no precipitation.
    fn default() -> Self {
        use GateVariable::{Fog, Moisture, Precipitation, Temperature};
        let cat = |name: &str, gates: Vec<Gate>| CategoryGates {
            name: name.to_string(),
            gates,
        };
        MembershipConfig {
            version: 1,
            moisture_ceiling: 20.0,
            categories: vec![
                cat(
                    "blizzard",
                    vec![
                        g(Precipitation, true, 2.2, 0.5),
                        g(Temperature, false, -8.0, 3.0),
                        g(Moisture, true, 12.0, 2.0),
                    ],
                ),
                cat(
                    "clear",
                    vec![g(Moisture, false, 6.0, 1.5), g(Precipitation, false, 0.4, 0.2)],
                ),
                cat(
                    "clearing",
                    vec![
                        g(Moisture, true, 5.0, 1.5),
                        g(Moisture, false, 11.0, 1.5),
                        g(Precipitation, false, 0.8, 0.3),
                    ],
                ),
                cat(
                    "cloudy",
                    vec![g(Moisture, true, 8.0, 2.0), g(Precipitation, false, 1.2, 0.5)],
                ),
                cat(
                    "extrasunny",
                    vec![
                        g(Moisture, false, 4.0, 1.2),
                        g(Temperature, true, 22.0, 4.0),
                        g(Precipitation, false, 0.3, 0.15),
                    ],
                ),
                cat(
                    "foggy",
                    vec![g(Fog, true, 1.1, 0.3), g(Precipitation, false, 1.0, 0.4)],
                ),
                cat(
                    "neutral",
                    vec![
                        g(Moisture, true, 7.0, 1.5),
                        g(Moisture, false, 13.0, 1.5),
                        g(Temperature, true, 5.0, 3.0),
                        g(Temperature, false, 25.0, 3.0),
                        g(Precipitation, false, 1.0, 0.4),
                    ],
                ),
                cat(
                    "overcast",
                    vec![g(Moisture, true, 11.0, 2.0), g(Precipitation, false, 1.0, 0.5)],
                ),
                cat(
                    "rain",
                    vec![
                        g(Moisture, true, 10.0, 1.5),
                        g(Temperature, true, 4.0, 2.0),
                        g(Precipitation, true, 1.0, 0.4),
                    ],
                ),
                cat(
                    "smog",
                    vec![
                        g(Fog, true, 0.4, 0.3),
                        g(Fog, false, 1.3, 0.3),
                        g(Temperature, true, 10.0, 3.0),
                        g(Precipitation, false, 0.5, 0.25),
                    ],
                ),
                cat(
                    "snow",
                    vec![
                        g(Precipitation, true, 0.8, 0.4),
                        g(Temperature, false, 0.0, 2.0),
                        g(Moisture, true, 8.0, 2.0),
                    ],
                ),
                cat(
                    "snowlight",
                    vec![
                        g(Precipitation, true, 0.3, 0.25),
                        g(Precipitation, false, 1.2, 0.4),
                        g(Temperature, false, 2.0, 2.0),
                        g(Moisture, true, 6.0, 2.0),
                    ],
                ),
                cat(
                    "thunder",
                    vec![
                        g(Precipitation, true, 2.5, 0.6),
                        g(Temperature, true, 18.0, 4.0),
                        g(Moisture, true, 12.0, 2.0),
                    ],
                ),
                cat(
                    "frozen",
                    vec![
                        g(Temperature, false, -6.0, 2.5),
                        g(Precipitation, false, 0.8, 0.4),
                    ],
                ),
            ],
        }
    }
}

impl MembershipConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.moisture_ceiling > 0.0) {
            return Err(SimError::Config(
                "membership moisture_ceiling must be positive".into(),
            ));
        }
        for cat in &self.categories {
            if cat.gates.is_empty() {
                return Err(SimError::Config(format!(
                    "category {:?} has no gates",
                    cat.name
                )));
            }
            for gate in &cat.gates {
                if !(gate.scale > 0.0) || !gate.scale.is_finite() || !gate.midpoint.is_finite() {
                    return Err(SimError::Config(format!(
                        "category {:?} has a malformed gate (midpoint {}, scale {})",
                        cat.name, gate.midpoint, gate.scale
                    )));
                }
            }
        }
        Ok(())
    }

    fn gates_for(&self, name: &str) -> Result<&[Gate], SimError> {
        self.categories
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.gates.as_slice())
            .ok_or_else(|| SimError::Config(format!("no membership gates for category {name:?}")))
    }
}

/// Raw fuzzy memberships in [0, 1] for the named categories, before any
/// normalization. The boundary fixtures in the tests read these.
pub fn memberships_raw(
    state: &ScenarioState,
    config: &MembershipConfig,
    names: &[String],
) -> Result<Vec<f64>, SimError> {
    state.validate()?;
    let s_rel = (state.moisture / config.moisture_ceiling).clamp(1e-6, 1.0);
    let fog = fog_density(state.temp_c, s_rel)?;
    let mut out = Vec::with_capacity(names.len());
    for name in names {
        let gates = config.gates_for(name)?;
        let mut membership = f64::INFINITY;
        for gate in gates {
            let value = match gate.variable {
                GateVariable::Moisture => state.moisture,
                GateVariable::Temperature => state.temp_c,
                GateVariable::Fog => fog,
                GateVariable::Precipitation => state.precip,
            };
            membership = membership.min(gate.evaluate(value));
        }
        out.push(membership);
    }
    Ok(out)
}

/// Memberships normalized by their maximum so the dominant category reads
/// 1.0. These steer blend-weight construction; they are not labels and need
/// not sum to one.
pub fn state_to_probabilities(
    state: &ScenarioState,
    config: &MembershipConfig,
    names: &[String],
) -> Result<ProbabilityVector, SimError> {
    let raw = memberships_raw(state, config, names)?;
    let max = raw.iter().cloned().fold(0.0f64, f64::max);
    let normalized: Vec<f64> = if max > 0.0 {
        raw.iter().map(|m| m / max).collect()
    } else {
        raw
    };
    ProbabilityVector::new(normalized)
}
