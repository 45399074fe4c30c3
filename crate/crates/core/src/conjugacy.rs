//! Canonical coordinates of one post-emission mode and the Hamilton
//! equation residuals.
//!
//! q = C_q[𝒜e^{−iωt} + 𝒜*e^{iωt}], p = −iωC_p[𝒜e^{−iωt} − 𝒜*e^{iωt}],
//! with C_q = √(32π³ε/(mV)) and C_p = √(32π³εm/V). 𝒜 is the ẑ component,
//! frozen once emission has ended.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::kspace::{vector_amplitude, KPoint, TimeQuadrature};
use crate::trajectory::DipoleSpec;

/// Oscillator mass and quantization volume; both default to 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Oscillator {
    pub mass: f64,
    pub volume: f64,
}

impl Default for Oscillator {
    fn default() -> Self {
        Oscillator { mass: 1.0, volume: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CanonicalPair {
    pub q: f64,
    pub p: f64,
    pub m: f64,
    pub omega: f64,
}

impl CanonicalPair {
    /// p²/2m + ½mω²q².
    pub fn energy(&self) -> f64 {
        self.p * self.p / (2.0 * self.m) + 0.5 * self.m * self.omega * self.omega * self.q * self.q
    }
}

/// One mode with its frozen amplitude; evaluates q and p at any t > t₁.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CanonicalMode {
    pub amplitude: C64,
    pub omega: f64,
    pub c_q: f64,
    pub c_p: f64,
    pub m: f64,
    t_stop: f64,
}

impl CanonicalMode {
    pub fn new(spec: &DipoleSpec, kp: &KPoint, osc: Oscillator, quad: &TimeQuadrature) -> Result<Self> {
        if !(osc.mass > 0.0 && osc.volume > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "oscillator mass and volume must be positive, got {} and {}",
                osc.mass, osc.volume
            )));
        }
        let u = spec.constants();
        // any time at or after t₁ gives the frozen value
        let a = vector_amplitude(spec, kp, spec.t_stop, quad)?.z;
        let base = 32.0 * PI.powi(3) * u.eps0 / osc.volume;
        Ok(CanonicalMode {
            amplitude: a,
            omega: kp.k * u.c,
            c_q: (base / osc.mass).sqrt(),
            c_p: (base * osc.mass).sqrt(),
            m: osc.mass,
            t_stop: spec.t_stop,
        })
    }

    fn phased(&self, t: f64) -> Result<C64> {
        if t <= self.t_stop {
            return Err(Error::PreEmissionTime { t, t_stop: self.t_stop });
        }
        let (s, c) = (-self.omega * t).sin_cos();
        Ok(self.amplitude * C64::new(c, s))
    }

    pub fn q(&self, t: f64) -> Result<f64> {
        Ok(2.0 * self.c_q * self.phased(t)?.re)
    }

    pub fn p(&self, t: f64) -> Result<f64> {
        Ok(2.0 * self.omega * self.c_p * self.phased(t)?.im)
    }

    pub fn pair(&self, t: f64) -> Result<CanonicalPair> {
        Ok(CanonicalPair {
            q: self.q(t)?,
            p: self.p(t)?,
            m: self.m,
            omega: self.omega,
        })
    }

    /// Peak of |p/m| and |mω²q| over a period (the two coincide).
    pub fn scale(&self) -> f64 {
        2.0 * self.c_q * self.omega * self.amplitude.norm()
    }

    pub fn residuals(&self, t: f64, h: f64) -> Result<Residuals> {
        if !(h > 0.0) {
            return Err(Error::InvalidSpec(format!("step must be positive, got {h}")));
        }
        if t - 2.0 * h <= self.t_stop {
            return Err(Error::PreEmissionTime {
                t: t - 2.0 * h,
                t_stop: self.t_stop,
            });
        }
        let dq = |h: f64| -> Result<f64> { Ok((self.q(t + h)? - self.q(t - h)?) / (2.0 * h)) };
        let dp = |h: f64| -> Result<f64> { Ok((self.p(t + h)? - self.p(t - h)?) / (2.0 * h)) };
        let (dq1, dq2) = (dq(h)?, dq(0.5 * h)?);
        let (dp1, dp2) = (dp(h)?, dp(0.5 * h)?);
        let qdot = (4.0 * dq2 - dq1) / 3.0;
        let pdot = (4.0 * dp2 - dp1) / 3.0;
        let here = self.pair(t)?;
        let v = here.p / self.m;
        let f = -self.m * self.omega * self.omega * here.q;
        let eps = self.scale();
        let rel = |x: f64, target: f64| {
            let d = target.abs().max(eps);
            if d == 0.0 {
                0.0
            } else {
                (x - target).abs() / d
            }
        };
        Ok(Residuals {
            r1: rel(qdot, v),
            r2: rel(pdot, f),
            raw_r1: rel(dq1, v),
            raw_r2: rel(dp1, f),
        })
    }
}

/// Hamilton equation residuals; `raw_*` skip the Richardson step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Residuals {
    pub r1: f64,
    pub r2: f64,
    pub raw_r1: f64,
    pub raw_r2: f64,
}

pub fn canonical_pair(
    spec: &DipoleSpec,
    kp: &KPoint,
    t: f64,
    osc: Oscillator,
    quad: &TimeQuadrature,
) -> Result<CanonicalPair> {
    if t <= spec.t_stop {
        return Err(Error::PreEmissionTime { t, t_stop: spec.t_stop });
    }
    CanonicalMode::new(spec, kp, osc, quad)?.pair(t)
}

/// Relative residuals of q̇ = p/m and ṗ = −mω²q by central differences at
/// step h with Richardson extrapolation over {h, h/2}. Denominators are
/// floored at the oscillation amplitude so zero crossings stay finite.
pub fn hamilton_residuals(
    spec: &DipoleSpec,
    kp: &KPoint,
    t: f64,
    h: f64,
    osc: Oscillator,
    quad: &TimeQuadrature,
) -> Result<Residuals> {
    if t - 2.0 * h <= spec.t_stop {
        return Err(Error::PreEmissionTime {
            t: t - 2.0 * h,
            t_stop: spec.t_stop,
        });
    }
    CanonicalMode::new(spec, kp, osc, quad)?.residuals(t, h)
}
