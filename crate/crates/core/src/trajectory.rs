//! Two-charge dipole trajectory.
//!
//! The electron cloud sits at `+z₋(τ)ẑ` and the nucleus at `−z₊(τ)ẑ`, both
//! measured from the centre of mass `d(τ) = cm_position + cm_velocity·τ`.
//! `z₋(τ) = a·E(τ)·sin(ω₀τ)` inside the emission window and zero outside it;
//! `z₊ = μ·z₋` keeps the centre of mass fixed.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::units::{Constants, UnitsMode};

pub type Vec3 = Vector3<f64>;

/// Causal switch: 0 for `tau <= 0`, 1 afterwards.
pub fn step_theta0(tau: f64) -> f64 {
    if tau > 0.0 {
        1.0
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Envelope {
    Rectangular,
    /// Half-cosine ramps of length `ramp_fraction·t₁` at both ends.
    RaisedCosine { ramp_fraction: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DipoleSpec {
    pub charge_e: f64,
    pub amp_minus: f64,
    pub mass_ratio: f64,
    pub omega0: f64,
    pub t_stop: f64,
    pub envelope: Envelope,
    pub cm_position: [f64; 3],
    pub cm_velocity: [f64; 3],
    pub units_mode: UnitsMode,
}

impl Default for DipoleSpec {
    fn default() -> Self {
        DipoleSpec {
            charge_e: 1.0,
            amp_minus: 0.01,
            mass_ratio: 1.0 / 1836.0,
            omega0: 1.0,
            t_stop: 20.0 * PI,
            envelope: Envelope::RaisedCosine { ramp_fraction: 0.2 },
            cm_position: [0.0; 3],
            cm_velocity: [0.0; 3],
            units_mode: UnitsMode::Natural,
        }
    }
}

impl DipoleSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if !(self.t_stop > 0.0 && self.t_stop.is_finite()) {
            return bad(format!("t_stop must be positive, got {}", self.t_stop));
        }
        if !(self.amp_minus >= 0.0 && self.amp_minus.is_finite()) {
            return bad(format!("amp_minus must be >= 0, got {}", self.amp_minus));
        }
        if !(self.mass_ratio > 0.0 && self.mass_ratio <= 1.0) {
            return bad(format!("mass_ratio must lie in (0, 1], got {}", self.mass_ratio));
        }
        if !(self.omega0 > 0.0 && self.omega0.is_finite()) {
            return bad(format!("omega0 must be positive, got {}", self.omega0));
        }
        if !self.charge_e.is_finite() {
            return bad("charge_e must be finite".into());
        }
        if let Envelope::RaisedCosine { ramp_fraction } = self.envelope {
            if !(ramp_fraction > 0.0 && ramp_fraction <= 0.5) {
                return bad(format!("ramp_fraction must lie in (0, 0.5], got {ramp_fraction}"));
            }
        }
        if self.cm_position.iter().chain(&self.cm_velocity).any(|x| !x.is_finite()) {
            return bad("cm_position and cm_velocity must be finite".into());
        }
        let c = self.constants().c;
        let speed = self.speed_bound();
        if speed >= c {
            return Err(Error::SuperluminalSpec { speed, c });
        }
        Ok(())
    }

    pub fn constants(&self) -> Constants {
        Constants::for_mode(self.units_mode)
    }

    pub fn cm_position(&self) -> Vec3 {
        Vec3::from(self.cm_position)
    }

    pub fn cm_velocity(&self) -> Vec3 {
        Vec3::from(self.cm_velocity)
    }

    pub fn is_stationary(&self) -> bool {
        self.cm_velocity == [0.0; 3]
    }

    /// Upper bound on the speed of either charge.
    pub fn speed_bound(&self) -> f64 {
        let env_rate = match self.envelope {
            Envelope::Rectangular => 0.0,
            Envelope::RaisedCosine { ramp_fraction } => PI / (2.0 * ramp_fraction * self.t_stop),
        };
        self.amp_minus * (self.omega0 + env_rate) + self.cm_velocity().norm()
    }

    /// Interior points where the envelope loses smoothness.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self.envelope {
            Envelope::Rectangular => Vec::new(),
            Envelope::RaisedCosine { ramp_fraction } => {
                let tr = ramp_fraction * self.t_stop;
                if ramp_fraction < 0.5 {
                    vec![tr, self.t_stop - tr]
                } else {
                    vec![tr]
                }
            }
        }
    }

    fn inside(&self, tau: f64) -> bool {
        tau > 0.0 && tau < self.t_stop
    }

    /// Envelope E(τ) and its derivative.
    pub fn envelope_and_rate(&self, tau: f64) -> (f64, f64) {
        if !self.inside(tau) {
            return (0.0, 0.0);
        }
        match self.envelope {
            Envelope::Rectangular => (1.0, 0.0),
            Envelope::RaisedCosine { ramp_fraction } => {
                let tr = ramp_fraction * self.t_stop;
                let w = PI / tr;
                if tau < tr {
                    (0.5 * (1.0 - (w * tau).cos()), 0.5 * w * (w * tau).sin())
                } else if tau > self.t_stop - tr {
                    let s = self.t_stop - tau;
                    (0.5 * (1.0 - (w * s).cos()), -0.5 * w * (w * s).sin())
                } else {
                    (1.0, 0.0)
                }
            }
        }
    }

    /// Scalar electron displacement z₋(τ) and its rate v₋(τ).
    pub fn displacement(&self, tau: f64) -> (f64, f64) {
        if !self.inside(tau) {
            return (0.0, 0.0);
        }
        let (env, rate) = self.envelope_and_rate(tau);
        let (s, c) = (self.omega0 * tau).sin_cos();
        (
            self.amp_minus * env * s,
            self.amp_minus * (rate * s + env * self.omega0 * c),
        )
    }

    /// `(zplus, zminus)`; the nucleus sits at `−zplus`, the electron at `+zminus`.
    pub fn charge_positions(&self, tau: f64) -> (Vec3, Vec3) {
        let (z, _) = self.displacement(tau);
        (Vec3::z() * (self.mass_ratio * z), Vec3::z() * z)
    }

    /// Time derivatives of [`charge_positions`](Self::charge_positions).
    pub fn charge_velocities(&self, tau: f64) -> (Vec3, Vec3) {
        let (_, v) = self.displacement(tau);
        (Vec3::z() * (self.mass_ratio * v), Vec3::z() * v)
    }

    /// Centre-of-mass location d(τ).
    pub fn cm_at(&self, tau: f64) -> Vec3 {
        self.cm_position() + self.cm_velocity() * tau
    }

    /// Lab-frame positions of the (positive, negative) charge.
    pub fn sites(&self, tau: f64) -> (Vec3, Vec3) {
        let (zp, zm) = self.charge_positions(tau);
        let d = self.cm_at(tau);
        (d - zp, d + zm)
    }

    /// Lab-frame velocities of the (positive, negative) charge.
    pub fn site_velocities(&self, tau: f64) -> (Vec3, Vec3) {
        let (vp, vm) = self.charge_velocities(tau);
        let vd = self.cm_velocity();
        (vd - vp, vd + vm)
    }

    /// Charge magnitude, with the natural-units default of 1 left to the spec.
    pub fn charge(&self) -> f64 {
        self.charge_e
    }
}
