//! Primary droop and secondary PI-on-ACE frequency control.

use serde::{Deserialize, Serialize};

use crate::grid::ModelError;

/// Gains in the per-unit frame of the area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConventionalParams {
    /// Droop S (Hz per p.u.).
    pub droop: f64,
    /// Integral time T_N (s).
    pub t_n: f64,
    /// Proportional gain C_P.
    pub c_p: f64,
    /// Frequency bias B (p.u. per Hz).
    pub bias: f64,
    /// Secondary output is clamped to `±secondary_limit` (p.u.).
    pub secondary_limit: f64,
    /// Whether the secondary loop runs at all.
    pub secondary: bool,
}

impl ConventionalParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let check = |name: &'static str, ok: bool, v: f64| {
            if ok {
                Ok(())
            } else {
                Err(ModelError::InvalidParameter {
                    name,
                    reason: format!("out of range: {v}"),
                })
            }
        };
        check("droop", self.droop.is_finite() && self.droop > 0.0, self.droop)?;
        check("t_n", self.t_n.is_finite() && self.t_n > 0.0, self.t_n)?;
        check("c_p", self.c_p.is_finite() && self.c_p >= 0.0, self.c_p)?;
        check("bias", self.bias.is_finite() && self.bias > 0.0, self.bias)?;
        check(
            "secondary_limit",
            self.secondary_limit.is_finite() && self.secondary_limit > 0.0,
            self.secondary_limit,
        )
    }

    /// Primary response in p.u. per Hz.
    pub fn droop_gain(&self) -> f64 {
        1.0 / self.droop
    }
}

/// Droop in Hz per p.u. from a rating given as `droop_hz` per `droop_mw`,
/// on an area base of `base_mw`.
pub fn droop_per_unit(droop_hz: f64, droop_mw: f64, base_mw: f64) -> f64 {
    droop_hz * base_mw / droop_mw
}

/// Bias `B = 1/D_l + 1/S` (p.u. per Hz).
pub fn natural_bias(load_damping: f64, droop: f64) -> f64 {
    1.0 / load_damping + 1.0 / droop
}

pub fn primary_power(delta_f: f64, params: &ConventionalParams) -> f64 {
    -delta_f / params.droop
}

/// `ACE = tie_deviation + B·Δf`, with the tie deviation positive when the
/// area exports more than scheduled.
pub fn area_control_error(delta_f: f64, tie_deviation: f64, params: &ConventionalParams) -> f64 {
    tie_deviation + params.bias * delta_f
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ConventionalState {
    /// ∫ACE dt (p.u.·s).
    pub ace_integral: f64,
}

/// Advances the PI integrator by `dt` and returns the secondary set-point.
///
/// While the output sits at its limit and the new error would push it
/// further out, the integrator is held.
pub fn secondary_step(state: &mut ConventionalState, ace: f64, dt: f64, params: &ConventionalParams) -> f64 {
    let output = |integral: f64| -params.c_p * ace - integral / params.t_n;
    let candidate = state.ace_integral + ace * dt;
    let raw = output(candidate);
    let limit = params.secondary_limit;
    if raw.abs() <= limit {
        state.ace_integral = candidate;
        return raw;
    }
    // integrating further would deepen the saturation
    let deepens = (raw > limit && ace < 0.0) || (raw < -limit && ace > 0.0);
    if !deepens {
        state.ace_integral = candidate;
    }
    output(state.ace_integral).clamp(-limit, limit)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ConventionalParams {
        let droop = droop_per_unit(0.2, 3000.0, 3000.0);
        ConventionalParams {
            droop,
            t_n: 240.0,
            c_p: 0.17,
            bias: natural_bias(66.67, droop),
            secondary_limit: 0.2,
            secondary: true,
        }
    }

    #[test]
    fn primary_sign_and_band() {
        let p = params();
        assert_eq!(primary_power(0.0, &p), 0.0);
        assert!((primary_power(-0.2, &p) - 1.0).abs() < 1e-15);
        assert!(primary_power(0.01, &p) < 0.0);
    }

    #[test]
    fn derived_bias() {
        let p = params();
        assert!((p.bias - (5.0 + 1.0 / 66.67)).abs() < 1e-12);
    }

    #[test]
    fn ace_terms() {
        let p = params();
        assert_eq!(area_control_error(0.0, 0.0, &p), 0.0);
        assert_eq!(area_control_error(0.0, 0.03, &p), 0.03);
        assert_eq!(area_control_error(0.01, 0.0, &p), p.bias * 0.01);
    }

    #[test]
    fn zero_error_keeps_output_zero() {
        let p = params();
        let mut s = ConventionalState::default();
        for _ in 0..100 {
            assert_eq!(secondary_step(&mut s, 0.0, 0.1, &p), 0.0);
        }
        assert_eq!(s.ace_integral, 0.0);
    }

    #[test]
    fn constant_error_ramps_linearly() {
        let p = params();
        let mut s = ConventionalState::default();
        let a = 0.004;
        let mut u = 0.0;
        for _ in 0..1000 {
            u = secondary_step(&mut s, a, 0.1, &p);
        }
        let t = 100.0;
        assert!((u - (-p.c_p * a - a * t / p.t_n)).abs() < 1e-12);
    }

    #[test]
    fn integrator_freezes_in_saturation() {
        let p = params();
        let mut s = ConventionalState::default();
        for _ in 0..100_000 {
            secondary_step(&mut s, 1.0, 0.1, &p);
        }
        let held = s.ace_integral;
        assert!(held <= (p.secondary_limit) * p.t_n + 1.0);
        // reversing the error leaves saturation promptly
        let u = secondary_step(&mut s, -1.0, 0.1, &p);
        assert!(u > -p.secondary_limit);
    }
}
