//! Potentials and fields rebuilt from mode amplitudes, plus the
//! retarded-time (Liénard–Wiechert) oracle they are checked against.
//!
//! With ψ = k·R − kct every k-space quantity is a real part of a grid sum:
//!
//! ```text
//! A(r,t) = 2 Re Σ w 𝒜 e^{iψ}
//! φ(r,t) = 2 Re Σ w c k̂·(𝒜 + 𝒱) e^{iψ} + e/(4πεR₊) − e/(4πεR₋)
//! E(r,t) = 2 Σ w ω k̂×(k̂×ẑ) Im(𝒜 e^{iψ})
//! B(r,t) = −2 Σ w (k×ẑ) Im(𝒜 e^{iψ})
//! ```
//!
//! Weights carry a cosine taper over the top 10% of the radial range.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::ops::Add;

use crate::error::{Error, Result};
use crate::kspace::{AmplitudeGrid, GridParams, KGrid, TimeQuadrature};
use crate::quadrature::pairwise_sum;
use crate::trajectory::{DipoleSpec, Vec3};

/// Potentials and fields at one spacetime point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldSample {
    pub r: Vec3,
    pub t: f64,
    pub phi: f64,
    pub avec: Vec3,
    pub e: Vec3,
    pub b: Vec3,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldOptions {
    /// Radial nodes required per oscillation of e^{ikR}.
    pub nodes_per_oscillation: f64,
    /// Closest allowed approach to a point charge.
    pub min_charge_distance: f64,
}

impl Default for FieldOptions {
    fn default() -> Self {
        FieldOptions {
            nodes_per_oscillation: 8.0,
            min_charge_distance: 1e-9,
        }
    }
}

fn cis(x: f64) -> C64 {
    let (s, c) = x.sin_cos();
    C64::new(c, s)
}

/// Raw k-space sums at one point; see the module docs for what they feed.
#[derive(Clone, Copy, Debug, Default)]
pub struct KSums {
    /// Σ w F e^{iψ}
    pub f: C64,
    /// Σ w c k̂·𝒜 e^{iψ}
    pub ka: C64,
    /// Σ w c k̂·𝒱 e^{iψ}
    pub kv: C64,
    /// Σ w 𝒜 e^{iψ}
    pub a: [C64; 3],
    pub e: [f64; 3],
    pub b: [f64; 3],
    /// z-component of the small-dipole electric field
    pub e_small: f64,
}

impl Add for KSums {
    type Output = KSums;
    fn add(self, o: KSums) -> KSums {
        KSums {
            f: self.f + o.f,
            ka: self.ka + o.ka,
            kv: self.kv + o.kv,
            a: [self.a[0] + o.a[0], self.a[1] + o.a[1], self.a[2] + o.a[2]],
            e: [self.e[0] + o.e[0], self.e[1] + o.e[1], self.e[2] + o.e[2]],
            b: [self.b[0] + o.b[0], self.b[1] + o.b[1], self.b[2] + o.b[2]],
            e_small: self.e_small + o.e_small,
        }
    }
}

/// Evaluates fields from a precomputed amplitude grid.
///
/// Amplitudes are frozen once emission ends, so one grid computed at any
/// `t >= t₁` serves every later time (see [`FieldEvaluator::at_time`]).
pub struct FieldEvaluator<'a> {
    spec: &'a DipoleSpec,
    amps: &'a AmplitudeGrid,
    t: f64,
    opts: FieldOptions,
}

impl<'a> FieldEvaluator<'a> {
    pub fn new(spec: &'a DipoleSpec, amps: &'a AmplitudeGrid, opts: FieldOptions) -> Self {
        FieldEvaluator {
            spec,
            amps,
            t: amps.t,
            opts,
        }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// Same amplitudes, different observation time. Only valid while the
    /// amplitudes are unchanged, i.e. both times at or after t₁.
    pub fn at_time(&self, t: f64) -> Result<FieldEvaluator<'a>> {
        let t1 = self.spec.t_stop;
        if t.min(t1) != self.amps.t.min(t1) {
            return Err(Error::UnsupportedConfig(format!(
                "amplitudes computed at t = {} cannot be reused at t = {t} before emission ends",
                self.amps.t
            )));
        }
        Ok(FieldEvaluator {
            spec: self.spec,
            amps: self.amps,
            t,
            opts: self.opts,
        })
    }

    /// Resolution guards for a field point.
    pub fn check_point(&self, r: &Vec3) -> Result<()> {
        let g = &self.amps.grid;
        let spec = self.spec;
        let c = spec.constants().c;
        let drift = spec.cm_velocity().norm() * self.t.max(0.0);
        let rel = r - spec.cm_position();
        let reach = rel.norm() + spec.amp_minus + drift;
        let reach_perp = (rel.x * rel.x + rel.y * rel.y).sqrt() + drift;
        let gap = g.max_radial_gap();
        let limit = 2.0 * PI / self.opts.nodes_per_oscillation;
        if reach * gap > limit {
            return Err(Error::AliasingRisk {
                r: reach,
                detail: format!(
                    "|R|·Δk = {:.4} exceeds {:.4}; more radial nodes needed",
                    reach * gap,
                    limit
                ),
            });
        }
        // the amplitudes carry e^{-ikc(t-τ)}, so the k-integrand oscillates at
        // up to |R| + ct; a Gauss rule needs about half that many nodes per unit k
        let xr = 0.5 * (g.k_max - g.k_min) * (reach + c * self.t.max(0.0));
        if (g.n_k() as f64) < xr + 7.0 * xr.cbrt() {
            return Err(Error::AliasingRisk {
                r: reach,
                detail: format!(
                    "{} radial nodes cannot resolve (|R| + ct)·k_max/2 = {xr:.1}",
                    g.n_k()
                ),
            });
        }
        let x = g.k_max * reach;
        if 2.0 * (g.n_theta() as f64) < x + 7.0 * x.cbrt() {
            return Err(Error::AliasingRisk {
                r: reach,
                detail: format!("{} polar nodes cannot resolve k_max·|R| = {x:.1}", g.n_theta()),
            });
        }
        let xp = g.k_max * reach_perp;
        if xp > 0.0 && (g.n_phi as f64) < xp + 7.0 * xp.cbrt() {
            return Err(Error::AliasingRisk {
                r: reach,
                detail: format!("{} azimuthal nodes cannot resolve k_max·|R⊥| = {xp:.1}", g.n_phi),
            });
        }
        Ok(())
    }

    /// The grid sums at `r`.
    pub fn sums(&self, r: &Vec3) -> Result<KSums> {
        self.check_point(r)?;
        Ok(self.sums_unchecked(r))
    }

    fn sums_unchecked(&self, r: &Vec3) -> KSums {
        let g = &self.amps.grid;
        let c = self.spec.constants().c;
        let t = self.t;
        if self.amps.is_axisymmetric() {
            let rr = r - self.amps.cm_position();
            let nu = g.n_theta();
            let parts: Vec<KSums> = (0..g.n_k())
                .into_par_iter()
                .flat_map_iter(|ik| (0..nu).map(move |iu| (ik, iu)))
                .map(|(ik, iu)| axisymmetric_term(g, self.amps, ik, iu, &rr, t, c))
                .collect();
            pairwise_sum(&parts)
        } else {
            let parts: Vec<KSums> = (0..g.n_k())
                .into_par_iter()
                .flat_map_iter(|ik| (0..g.n_theta()).map(move |iu| (ik, iu)))
                .map(|(ik, iu)| {
                    let row: Vec<KSums> = (0..g.n_phi)
                        .map(|ip| general_term(g, self.amps, ik, iu, ip, r, t, c))
                        .collect();
                    pairwise_sum(&row)
                })
                .collect();
            pairwise_sum(&parts)
        }
    }

    /// e/(4πεR₊) − e/(4πεR₋) with present-time distances.
    pub fn coulomb_pair(&self, r: &Vec3) -> Result<f64> {
        coulomb_pair(self.spec, r, self.t, self.opts.min_charge_distance)
    }

    pub fn vector_potential(&self, r: &Vec3) -> Result<Vec3> {
        let s = self.sums(r)?;
        Ok(Vec3::new(2.0 * s.a[0].re, 2.0 * s.a[1].re, 2.0 * s.a[2].re))
    }

    /// Scalar potential from the separated form (𝒜 and 𝒱 terms plus the
    /// exact Coulomb pair).
    pub fn scalar_potential(&self, r: &Vec3) -> Result<f64> {
        let pair = self.coulomb_pair(r)?;
        let s = self.sums(r)?;
        Ok(2.0 * (s.ka + s.kv).re + pair)
    }

    /// Scalar potential straight from the F amplitudes.
    pub fn scalar_potential_direct(&self, r: &Vec3) -> Result<f64> {
        Ok(2.0 * self.sums(r)?.f.re)
    }

    fn require_stationary(&self) -> Result<()> {
        if self.spec.is_stationary() {
            Ok(())
        } else {
            Err(Error::UnsupportedConfig(
                "transverse E and B forms assume a stationary centre of mass".into(),
            ))
        }
    }

    pub fn electric_field(&self, r: &Vec3) -> Result<Vec3> {
        self.require_stationary()?;
        Ok(Vec3::from(self.sums(r)?.e))
    }

    pub fn magnetic_field(&self, r: &Vec3) -> Result<Vec3> {
        self.require_stationary()?;
        Ok(Vec3::from(self.sums(r)?.b))
    }

    /// The small-dipole forms: E ∥ ẑ, B as in the exact case.
    pub fn small_dipole_fields(&self, r: &Vec3) -> Result<(Vec3, Vec3)> {
        let s = self.sums(r)?;
        Ok((Vec3::new(0.0, 0.0, s.e_small), Vec3::from(s.b)))
    }

    /// Everything at once (one pass over the grid).
    pub fn sample(&self, r: &Vec3) -> Result<FieldSample> {
        self.require_stationary()?;
        let pair = self.coulomb_pair(r)?;
        let s = self.sums(r)?;
        Ok(FieldSample {
            r: *r,
            t: self.t,
            phi: 2.0 * (s.ka + s.kv).re + pair,
            avec: Vec3::new(2.0 * s.a[0].re, 2.0 * s.a[1].re, 2.0 * s.a[2].re),
            e: Vec3::from(s.e),
            b: Vec3::from(s.b),
        })
    }
}

fn axisymmetric_term(g: &KGrid, amps: &AmplitudeGrid, ik: usize, iu: usize, rr: &Vec3, t: f64, c: f64) -> KSums {
    let m = amps.base(ik, iu).expect("axisymmetric storage");
    let k = g.k_nodes[ik];
    let u = g.u_nodes[iu];
    let s = (1.0 - u * u).max(0.0).sqrt();
    let w = g.k_weights[ik] * k * k * g.u_weights[iu] * g.phi_weight() * g.taper[ik];
    let ks = k * s;
    let (mut q0, mut qc, mut qs) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0));
    for ip in 0..g.n_phi {
        let (cp, sp) = (g.cos_phi[ip], g.sin_phi[ip]);
        let e = cis(ks * (rr.x * cp + rr.y * sp));
        q0 += e;
        qc += e * cp;
        qs += e * sp;
    }
    let p = cis(k * u * rr.z - k * c * t) * w;
    let az = m.avec.z;
    let ax = m.avec.x;
    let ay = m.avec.y;
    let omega = k * c;
    let apz = az * p;
    let z0 = apz * q0;
    let zc = apz * qc;
    let zs = apz * qs;
    // 𝒜 is ẑ-directed here; the x, y slots stay for synthetic inputs
    KSums {
        f: m.f * p * q0,
        ka: (ax * qc * s + ay * qs * s + az * q0 * u) * p * c,
        kv: (m.vvec.x * qc * s + m.vvec.y * qs * s + m.vvec.z * q0 * u) * p * c,
        a: [ax * p * q0, ay * p * q0, z0],
        e: [
            2.0 * omega * s * u * zc.im,
            2.0 * omega * s * u * zs.im,
            2.0 * omega * (u * u - 1.0) * z0.im,
        ],
        b: [-2.0 * k * s * zs.im, 2.0 * k * s * zc.im, 0.0],
        e_small: -2.0 * omega * z0.im,
    }
}

#[allow(clippy::too_many_arguments)]
fn general_term(
    g: &KGrid,
    amps: &AmplitudeGrid,
    ik: usize,
    iu: usize,
    ip: usize,
    r: &Vec3,
    t: f64,
    c: f64,
) -> KSums {
    let m = amps.get(ik, iu, ip);
    let k = g.k_nodes[ik];
    let kh = g.khat(iu, ip);
    let u = kh.z;
    let w = g.k_weights[ik] * k * k * g.u_weights[iu] * g.phi_weight() * g.taper[ik];
    let p = cis(k * kh.dot(r) - k * c * t) * w;
    let omega = k * c;
    let khc = kh.map(|x| C64::new(x, 0.0));
    let z = m.avec.z * p;
    let trans = kh * u - Vec3::z();
    KSums {
        f: m.f * p,
        ka: khc.dot(&m.avec) * p * c,
        kv: khc.dot(&m.vvec) * p * c,
        a: [m.avec.x * p, m.avec.y * p, z],
        e: [
            2.0 * omega * trans.x * z.im,
            2.0 * omega * trans.y * z.im,
            2.0 * omega * trans.z * z.im,
        ],
        b: [-2.0 * k * kh.y * z.im, 2.0 * k * kh.x * z.im, 0.0],
        e_small: -2.0 * omega * z.im,
    }
}

/// Smallest grid whose guards accept every point in `points` at time `t`.
pub fn resolving_grid(spec: &DipoleSpec, points: &[Vec3], t: f64, k_max: f64, opts: &FieldOptions) -> GridParams {
    let c = spec.constants().c;
    let drift = spec.cm_velocity().norm() * t.max(0.0);
    let (mut reach, mut perp) = (0.0f64, 0.0f64);
    for p in points {
        let rel = p - spec.cm_position();
        reach = reach.max(rel.norm() + spec.amp_minus + drift);
        perp = perp.max((rel.x * rel.x + rel.y * rel.y).sqrt() + drift);
    }
    let need = |x: f64| (x + 7.0 * x.cbrt()).ceil() as usize + 2;
    let xr = 0.5 * k_max * (reach + c * t.max(0.0));
    // Gauss gaps peak near the middle of the range at about π·k_max/(2n)
    let by_gap = (k_max * reach * opts.nodes_per_oscillation / 4.0).ceil() as usize + 2;
    let n_phi = need(k_max * perp).max(8);
    GridParams {
        n_k: need(xr).max(by_gap),
        n_theta: need(k_max * reach).div_ceil(2).max(8),
        n_phi: n_phi + n_phi % 2,
        k_min: 0.0,
        k_max,
    }
}

/// Present-time Coulomb pair; zero before the charges exist.
pub fn coulomb_pair(spec: &DipoleSpec, r: &Vec3, t: f64, min_distance: f64) -> Result<f64> {
    if t <= 0.0 {
        return Ok(0.0);
    }
    let (p, m) = spec.sites(t);
    let rp = (r - p).norm();
    let rm = (r - m).norm();
    let closest = rp.min(rm);
    if closest < min_distance {
        return Err(Error::SingularPoint {
            distance: closest,
            min: min_distance,
        });
    }
    let k = spec.charge() / (4.0 * PI * spec.constants().eps0);
    if rp == rm {
        return Ok(0.0);
    }
    Ok(k / rp - k / rm)
}

/// Convenience wrappers that build the amplitude grid on the fly.
pub fn vector_potential(
    spec: &DipoleSpec,
    grid: &KGrid,
    r: &Vec3,
    t: f64,
    quad: &TimeQuadrature,
    opts: FieldOptions,
) -> Result<Vec3> {
    let amps = AmplitudeGrid::compute(spec, grid, t, quad)?;
    FieldEvaluator::new(spec, &amps, opts).vector_potential(r)
}

pub fn scalar_potential(
    spec: &DipoleSpec,
    grid: &KGrid,
    r: &Vec3,
    t: f64,
    quad: &TimeQuadrature,
    opts: FieldOptions,
) -> Result<f64> {
    let amps = AmplitudeGrid::compute(spec, grid, t, quad)?;
    FieldEvaluator::new(spec, &amps, opts).scalar_potential(r)
}

pub fn electric_field(
    spec: &DipoleSpec,
    grid: &KGrid,
    r: &Vec3,
    t: f64,
    quad: &TimeQuadrature,
    opts: FieldOptions,
) -> Result<Vec3> {
    if !spec.is_stationary() {
        return Err(Error::UnsupportedConfig(
            "transverse E and B forms assume a stationary centre of mass".into(),
        ));
    }
    let amps = AmplitudeGrid::compute(spec, grid, t, quad)?;
    FieldEvaluator::new(spec, &amps, opts).electric_field(r)
}

pub fn magnetic_field(
    spec: &DipoleSpec,
    grid: &KGrid,
    r: &Vec3,
    t: f64,
    quad: &TimeQuadrature,
    opts: FieldOptions,
) -> Result<Vec3> {
    if !spec.is_stationary() {
        return Err(Error::UnsupportedConfig(
            "transverse E and B forms assume a stationary centre of mass".into(),
        ));
    }
    let amps = AmplitudeGrid::compute(spec, grid, t, quad)?;
    FieldEvaluator::new(spec, &amps, opts).magnetic_field(r)
}

pub fn small_dipole_fields(
    spec: &DipoleSpec,
    grid: &KGrid,
    r: &Vec3,
    t: f64,
    quad: &TimeQuadrature,
    opts: FieldOptions,
) -> Result<(Vec3, Vec3)> {
    let amps = AmplitudeGrid::compute(spec, grid, t, quad)?;
    FieldEvaluator::new(spec, &amps, opts).small_dipole_fields(r)
}

/// Retarded emission time of one charge, or `None` when its signal has not
/// reached `r` by time `t` (no causal intersection).
fn retarded_time(
    spec: &DipoleSpec,
    site: impl Fn(f64) -> Vec3,
    r: &Vec3,
    t: f64,
) -> Option<f64> {
    if t <= 0.0 {
        return None;
    }
    let c = spec.constants().c;
    let g = |tau: f64| tau - t + (r - site(tau)).norm() / c;
    // g is strictly increasing for subluminal motion
    if g(0.0) >= 0.0 {
        return None;
    }
    let reach = (r - spec.cm_position()).norm() + spec.amp_minus;
    let mut lo = (t - reach / c - 2.0 * PI / spec.omega0).max(0.0);
    if g(lo) >= 0.0 {
        lo = 0.0;
    }
    let mut hi = t;
    let tol = 1e-12 * spec.t_stop;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Liénard–Wiechert potentials of both charges (retarded solution only).
pub fn retarded_potential_oracle(spec: &DipoleSpec, r: &Vec3, t: f64) -> Result<(f64, Vec3)> {
    spec.validate()?;
    let u = spec.constants();
    let e = spec.charge();
    let mut phi = 0.0;
    let mut a = Vec3::zeros();
    for (q, positive) in [(e, true), (-e, false)] {
        let site = |tau: f64| {
            let (p, m) = spec.sites(tau);
            if positive {
                p
            } else {
                m
            }
        };
        let Some(tau) = retarded_time(spec, site, r, t) else {
            continue;
        };
        let (vp, vm) = spec.site_velocities(tau);
        let v = if positive { vp } else { vm };
        let d = r - site(tau);
        let dist = d.norm();
        if dist == 0.0 {
            return Err(Error::SingularPoint {
                distance: 0.0,
                min: 0.0,
            });
        }
        let n = d / dist;
        let kappa = 1.0 - n.dot(&v) / u.c;
        phi += q / (4.0 * PI * u.eps0 * dist * kappa);
        a += v * (u.mu0 * q / (4.0 * PI * dist * kappa));
    }
    Ok((phi, a))
}
