//! Moisture-balance scenario dynamics and the fog relation.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::SimError;

/// Magnus-Tetens saturation constants (dimensionless slope and the °C offset).
pub const MAGNUS_ALPHA: f64 = 17.27;
pub const MAGNUS_BETA: f64 = 237.7;

/// Temperature bounds the scenario is clamped to, in °C.
pub const TEMP_MIN: f64 = -30.0;
pub const TEMP_MAX: f64 = 50.0;

/// State of one weather scenario: a moisture store fed and drained by four
/// flux rates, plus air temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioState {
    /// Moisture storage, dimensionless, never negative.
    pub moisture: f64,
    /// Air temperature in °C, kept within [-30, 50].
    pub temp_c: f64,
    /// Moisture transport into the region.
    pub inflow: f64,
    /// Moisture transport out of the region.
    pub outflow: f64,
    /// Evapotranspiration contribution.
    pub evap: f64,
    /// Precipitation drain.
    pub precip: f64,
    /// Timestep index.
    pub step: u64,
}

impl ScenarioState {
    pub fn new(moisture: f64, temp_c: f64) -> Self {
        ScenarioState {
            moisture,
            temp_c,
            inflow: 0.0,
            outflow: 0.0,
            evap: 0.0,
            precip: 0.0,
            step: 0,
        }
    }

    fn fluxes(&self) -> [f64; 4] {
        [self.inflow, self.outflow, self.evap, self.precip]
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !self.moisture.is_finite()
            || !self.temp_c.is_finite()
            || self.fluxes().iter().any(|f| !f.is_finite())
        {
            return Err(SimError::NonFinite { op: "scenario_state" });
        }
        if self.moisture < 0.0 || self.fluxes().iter().any(|&f| f < 0.0) {
            return Err(SimError::InvalidInput {
                op: "scenario_state",
                detail: "moisture and flux rates must be non-negative".into(),
            });
        }
        Ok(())
    }
}

impl Default for ScenarioState {
    /// Mid-range resting state: moist but not saturated, mild temperature.
    fn default() -> Self {
        ScenarioState::new(10.0, 15.0)
    }
}

/// Mean-reverting noise model for the flux rates and temperature. With
/// `reversion = 0` and zero noise the fluxes stay constant, which is the
/// closed-form regime the tests integrate against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxDynamics {
    pub reversion: f64,
    pub mean_inflow: f64,
    pub mean_outflow: f64,
    pub mean_evap: f64,
    pub mean_precip: f64,
    pub mean_temp: f64,
    pub flux_noise: f64,
    pub temp_noise: f64,
}

impl Default for FluxDynamics {
    fn default() -> Self {
        FluxDynamics {
            reversion: 0.25,
            mean_inflow: 1.0,
            mean_outflow: 1.0,
            mean_evap: 0.5,
            mean_precip: 0.5,
            mean_temp: 12.0,
            flux_noise: 0.4,
            temp_noise: 1.2,
        }
    }
}

impl FluxDynamics {
    /// Dynamics with no drift and no noise: fluxes and temperature hold
    /// exactly constant across steps.
    pub fn still() -> Self {
        FluxDynamics {
            reversion: 0.0,
            flux_noise: 0.0,
            temp_noise: 0.0,
            ..FluxDynamics::default()
        }
    }

    /// Draw a per-scenario attractor so different samples settle into
    /// different weather regimes instead of all collapsing to one mean.
    pub fn sample(rng: &mut impl Rng) -> Self {
        FluxDynamics {
            reversion: 0.25,
            mean_inflow: rng.gen_range(0.0..2.5),
            mean_outflow: rng.gen_range(0.0..2.5),
            mean_evap: rng.gen_range(0.0..1.5),
            mean_precip: rng.gen_range(0.0..3.2),
            mean_temp: rng.gen_range(-20.0..38.0),
            flux_noise: 0.35,
            temp_noise: 1.0,
        }
    }
}

fn revert(x: f64, mean: f64, rate: f64, dt: f64, noise: f64, z: f64) -> f64 {
    x + rate * (mean - x) * dt + noise * dt.sqrt() * z
}

/// Advance the scenario by `dt`.
///
/// The moisture store integrates the current net flux and clamps at zero;
/// the fluxes and temperature then take one mean-reverting noise step.
/// Noise draws come from `rng` in a fixed order (inflow, outflow, evap,
/// precip, temperature), so a seeded stream reproduces the trajectory.
pub fn step_moisture(
    state: &ScenarioState,
    dt: f64,
    dynamics: &FluxDynamics,
    rng: &mut impl Rng,
) -> Result<ScenarioState, SimError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(SimError::InvalidInput {
            op: "step_moisture",
            detail: format!("dt must be positive and finite, got {dt}"),
        });
    }
    state.validate()?;

    let net = state.inflow + state.evap - state.outflow - state.precip;
    let moisture = (state.moisture + dt * net).max(0.0);

    let r = dynamics.reversion;
    let fnz = dynamics.flux_noise;
    let mut draw = || -> f64 { StandardNormal.sample(rng) };

    let inflow = revert(state.inflow, dynamics.mean_inflow, r, dt, fnz, draw()).max(0.0);
    let outflow = revert(state.outflow, dynamics.mean_outflow, r, dt, fnz, draw()).max(0.0);
    let evap = revert(state.evap, dynamics.mean_evap, r, dt, fnz, draw()).max(0.0);
    let precip = revert(state.precip, dynamics.mean_precip, r, dt, fnz, draw()).max(0.0);
    let temp_c = revert(
        state.temp_c,
        dynamics.mean_temp,
        r,
        dt,
        dynamics.temp_noise,
        draw(),
    )
    .clamp(TEMP_MIN, TEMP_MAX);

    let next = ScenarioState {
        moisture,
        temp_c,
        inflow,
        outflow,
        evap,
        precip,
        step: state.step + 1,
    };
    next.validate()?;
    Ok(next)
}

/// Fog density from temperature and relative moisture: the Magnus-Tetens
/// exponent plus the log of relative moisture, floored at zero for
/// rendering use. `s_rel` must lie in (0, 1]; `temp_c` must stay above the
/// -237.7 °C singularity of the Magnus denominator.
pub fn fog_density(temp_c: f64, s_rel: f64) -> Result<f64, SimError> {
    if !s_rel.is_finite() || s_rel <= 0.0 || s_rel > 1.0 {
        return Err(SimError::LogDomain { got: s_rel });
    }
    if !temp_c.is_finite() || temp_c <= -MAGNUS_BETA {
        return Err(SimError::MagnusDomain { got: temp_c });
    }
    let d = MAGNUS_ALPHA * temp_c / (MAGNUS_BETA + temp_c) + s_rel.ln();
    Ok(d.max(0.0))
}

/// First-order propagation of blend-weight noise into the squared-error
/// loss: a weight perturbation of std-dev `sigma_a` moves the loss by
/// sigma_a^2 per unit, so the propagated label variance is (sigma_a^2)^2.
/// A 10% weight error therefore lands at a 1% (1e-4 variance) impact.
pub fn label_error_propagation(sigma_a: f64) -> Result<f64, SimError> {
    if !sigma_a.is_finite() || !(0.0..=1.0).contains(&sigma_a) {
        return Err(SimError::InvalidInput {
            op: "label_error_propagation",
            detail: format!("sigma_a {sigma_a} outside [0, 1]"),
        });
    }
    let var = sigma_a * sigma_a;
    Ok(var * var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn moisture_integrates_net_flux() {
        let state = ScenarioState {
            moisture: 10.0,
            inflow: 2.0,
            evap: 1.0,
            outflow: 0.5,
            precip: 1.5,
            ..ScenarioState::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let next = step_moisture(&state, 1.0, &FluxDynamics::still(), &mut rng).unwrap();
        assert_eq!(next.moisture, 11.0);
        assert_eq!(next.step, 1);
    }

    #[test]
    fn zero_fluxes_hold_moisture() {
        let state = ScenarioState::new(7.5, 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut dynamics = FluxDynamics::still();
        dynamics.mean_temp = 10.0;
        let next = step_moisture(&state, 1.0, &dynamics, &mut rng).unwrap();
        assert_eq!(next.moisture, 7.5);
    }

    #[test]
    fn moisture_clamps_at_zero() {
        let state = ScenarioState {
            moisture: 0.2,
            outflow: 1.0,
            ..ScenarioState::new(0.2, 5.0)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let next = step_moisture(&state, 1.0, &FluxDynamics::still(), &mut rng).unwrap();
        assert_eq!(next.moisture, 0.0);
    }

    #[test]
    fn constant_fluxes_match_closed_form_over_many_steps() {
        let mut state = ScenarioState {
            moisture: 5.0,
            inflow: 1.2,
            evap: 0.3,
            outflow: 0.4,
            precip: 0.1,
            ..ScenarioState::new(5.0, 12.0)
        };
        let net = 1.2 + 0.3 - 0.4 - 0.1;
        let dt = 0.5;
        let steps = 40;
        let mut dynamics = FluxDynamics::still();
        dynamics.mean_temp = 12.0;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..steps {
            state = step_moisture(&state, dt, &dynamics, &mut rng).unwrap();
        }
        let closed = 5.0 + steps as f64 * dt * net;
        assert!((state.moisture - closed).abs() < 1e-9, "{} vs {closed}", state.moisture);
    }

    #[test]
    fn non_finite_flux_is_rejected() {
        let state = ScenarioState {
            inflow: f64::NAN,
            ..ScenarioState::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            step_moisture(&state, 1.0, &FluxDynamics::still(), &mut rng),
            Err(SimError::NonFinite { .. })
        ));
    }

    #[test]
    fn fog_density_vanishes_at_saturation_and_zero_celsius() {
        assert_eq!(fog_density(0.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn fog_density_matches_direct_evaluation() {
        // Oracle computed term by term, separate from the implementation.
        let t = 20.0f64;
        let s = 0.8f64;
        let expect = (17.27 * t / (237.7 + t) + s.ln()).max(0.0);
        assert!((fog_density(t, s).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn fog_density_monotone_in_relative_moisture() {
        let mut last = -1.0;
        for i in 1..=20 {
            let s = i as f64 / 20.0;
            let d = fog_density(25.0, s).unwrap();
            assert!(d >= last, "not monotone at s_rel={s}");
            last = d;
        }
    }

    #[test]
    fn fog_density_domain_errors() {
        assert!(matches!(fog_density(20.0, 0.0), Err(SimError::LogDomain { .. })));
        assert!(matches!(fog_density(20.0, -0.5), Err(SimError::LogDomain { .. })));
        assert!(matches!(fog_density(20.0, 1.5), Err(SimError::LogDomain { .. })));
        assert!(matches!(
            fog_density(-237.7, 0.5),
            Err(SimError::MagnusDomain { .. })
        ));
    }

    #[test]
    fn label_error_propagation_fixtures() {
        assert_eq!(label_error_propagation(0.0).unwrap(), 0.0);
        let at_ten_percent = label_error_propagation(0.1).unwrap();
        assert!((at_ten_percent - 1e-4).abs() < 1e-18);
        let at_twenty = label_error_propagation(0.2).unwrap();
        assert!((at_twenty - 1.6e-3).abs() < 1e-17);
        assert!(label_error_propagation(1.5).is_err());
    }
}
