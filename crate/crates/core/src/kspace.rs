//! Mode amplitudes F, 𝒜, 𝒱 on a spherical k-grid.
//!
//! Every amplitude is a time integral over the trajectory,
//!
//! ```text
//! F(k,t) = i e c /(16π³ ε k) ∫₀^{min(t,t₁)} e^{ikcτ − ik·d(τ)} [e^{−ik·z₊} − e^{−ik·z₋}] dτ
//! 𝒜(k,t) = i e c μ /(16π³ k)   ∫ …  [v₊ e^{−ik·z₊} − v₋ e^{−ik·z₋}] dτ
//! 𝒱(k,t) = i e c μ /(16π³ k)   ∫ …  v_d [e^{−ik·z₊} − e^{−ik·z₋}] dτ
//! ```
//!
//! with z₊, v₊ the position and velocity of the positive charge relative to
//! the centre of mass. Starred amplitudes are plain conjugates and never
//! stored.

use nalgebra::Vector3;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quadrature::{panel_edges, GaussLegendre};
use crate::trajectory::{DipoleSpec, Vec3};
use crate::units::Constants;

pub type C64 = Complex64;
pub type CVec3 = Vector3<C64>;

const I: C64 = C64::new(0.0, 1.0);

fn cis(x: f64) -> C64 {
    let (s, c) = x.sin_cos();
    C64::new(c, s)
}

/// One quadrature node of the d³k integral.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KPoint {
    pub k: f64,
    pub cos_theta: f64,
    pub phi: f64,
    /// Full d³k measure carried by the node (k² dk dcosθ dφ).
    pub weight: f64,
}

impl KPoint {
    pub fn new(k: f64, cos_theta: f64, phi: f64, weight: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::InvalidGrid(format!("k must be positive, got {k}")));
        }
        if !(cos_theta.abs() <= 1.0) {
            return Err(Error::InvalidGrid(format!("cos_theta out of range: {cos_theta}")));
        }
        if !(weight > 0.0) {
            return Err(Error::InvalidGrid(format!("weight must be positive, got {weight}")));
        }
        Ok(KPoint {
            k,
            cos_theta,
            phi,
            weight,
        })
    }

    /// Unit-weight point, handy for single-mode work.
    pub fn direction(k: f64, cos_theta: f64, phi: f64) -> Result<Self> {
        Self::new(k, cos_theta, phi, 1.0)
    }

    pub fn sin_theta(&self) -> f64 {
        (1.0 - self.cos_theta * self.cos_theta).max(0.0).sqrt()
    }

    pub fn sin2_theta(&self) -> f64 {
        (1.0 - self.cos_theta * self.cos_theta).max(0.0)
    }

    pub fn khat(&self) -> Vec3 {
        let s = self.sin_theta();
        Vec3::new(s * self.phi.cos(), s * self.phi.sin(), self.cos_theta)
    }

    pub fn kvec(&self) -> Vec3 {
        self.khat() * self.k
    }
}

/// Grid sizes and radial range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridParams {
    pub n_k: usize,
    pub n_theta: usize,
    pub n_phi: usize,
    pub k_min: f64,
    pub k_max: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        GridParams {
            n_k: 96,
            n_theta: 48,
            n_phi: 32,
            k_min: 0.0,
            k_max: 20.0,
        }
    }
}

/// Product grid: Gauss–Legendre in k, a polar rule in cosθ, uniform φ.
#[derive(Clone, Debug)]
pub struct KGrid {
    pub k_min: f64,
    pub k_max: f64,
    pub k_nodes: Vec<f64>,
    pub k_weights: Vec<f64>,
    /// Cosine-taper factor per radial node (1 below 90% of the range).
    pub taper: Vec<f64>,
    pub u_nodes: Vec<f64>,
    pub u_weights: Vec<f64>,
    pub n_phi: usize,
    pub cos_phi: Vec<f64>,
    pub sin_phi: Vec<f64>,
    /// θ-bin of each polar node, when the polar rule was built per bin.
    pub theta_bin: Option<(usize, Vec<usize>)>,
}

/// Fraction of the radial range covered by the taper.
pub const TAPER_FRACTION: f64 = 0.1;

impl KGrid {
    /// Gauss–Legendre in cosθ with `n_theta` nodes.
    pub fn new(p: &GridParams) -> Result<Self> {
        let g = GaussLegendre::new(p.n_theta.max(1));
        Self::with_polar(p, g.nodes, g.weights)
    }

    /// Polar rule made of `bins` equal θ-bins with `per_bin` Gauss nodes in
    /// cosθ each; `p.n_theta` is ignored.
    pub fn theta_binned(p: &GridParams, bins: usize, per_bin: usize) -> Result<Self> {
        if bins == 0 || per_bin == 0 {
            return Err(Error::InvalidGrid("theta bins need at least one node".into()));
        }
        let g = GaussLegendre::new(per_bin);
        // build θ < π/2 bins then mirror, so the rule is exactly symmetric
        let mut upper: Vec<(f64, f64, usize)> = Vec::new();
        let mut centre: Vec<(f64, f64, usize)> = Vec::new();
        for b in 0..bins {
            let th_lo = PI * b as f64 / bins as f64;
            let th_hi = PI * (b + 1) as f64 / bins as f64;
            if 2 * (b + 1) <= bins {
                let (x, w) = g.mapped(th_hi.cos(), th_lo.cos());
                for (xi, wi) in x.into_iter().zip(w) {
                    upper.push((xi, wi, b));
                }
            } else if 2 * b < bins {
                // odd bin count: the middle bin straddles the equator
                let h = (PI / bins as f64 * 0.5).sin();
                let (x, w) = g.mapped(-h, h);
                for (xi, wi) in x.into_iter().zip(w) {
                    centre.push((xi, wi, b));
                }
            }
        }
        let mut all: Vec<(f64, f64, usize)> = upper
            .iter()
            .map(|&(x, w, b)| (-x, w, bins - 1 - b))
            .chain(centre)
            .chain(upper.iter().copied())
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0));
        let nodes = all.iter().map(|a| a.0).collect();
        let weights = all.iter().map(|a| a.1).collect();
        let bin_of = all.iter().map(|a| a.2).collect();
        let mut grid = Self::with_polar(p, nodes, weights)?;
        grid.theta_bin = Some((bins, bin_of));
        Ok(grid)
    }

    /// Explicit polar nodes (cosθ) and weights.
    pub fn with_polar(p: &GridParams, u_nodes: Vec<f64>, u_weights: Vec<f64>) -> Result<Self> {
        if p.n_k == 0 || p.n_phi == 0 {
            return Err(Error::InvalidGrid("n_k and n_phi must be positive".into()));
        }
        if !(p.k_min >= 0.0 && p.k_max > p.k_min) {
            return Err(Error::InvalidGrid(format!(
                "need 0 <= k_min < k_max, got [{}, {}]",
                p.k_min, p.k_max
            )));
        }
        if u_nodes.is_empty() || u_nodes.len() != u_weights.len() {
            return Err(Error::InvalidGrid("polar nodes and weights must match".into()));
        }
        if u_nodes.iter().any(|u| !(u.abs() <= 1.0)) || u_weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::InvalidGrid("polar node out of range or weight not positive".into()));
        }
        let (k_nodes, k_weights) = GaussLegendre::new(p.n_k).mapped(p.k_min, p.k_max);
        let k0 = p.k_min + (1.0 - TAPER_FRACTION) * (p.k_max - p.k_min);
        let taper = k_nodes
            .iter()
            .map(|&k| {
                if k <= k0 {
                    1.0
                } else {
                    0.5 * (1.0 + (PI * (k - k0) / (p.k_max - k0)).cos())
                }
            })
            .collect();
        let n = p.n_phi;
        let mut cos_phi = vec![0.0; n];
        let mut sin_phi = vec![0.0; n];
        let half = if n.is_multiple_of(2) { n / 2 } else { n };
        for j in 0..half {
            let phi = 2.0 * PI * j as f64 / n as f64;
            let (s, c) = phi.sin_cos();
            cos_phi[j] = c;
            sin_phi[j] = s;
            if half < n {
                // φ + π is a node: make k → −k an exact symmetry
                cos_phi[j + half] = -c;
                sin_phi[j + half] = -s;
            }
        }
        Ok(KGrid {
            k_min: p.k_min,
            k_max: p.k_max,
            k_nodes,
            k_weights,
            taper,
            u_nodes,
            u_weights,
            n_phi: n,
            cos_phi,
            sin_phi,
            theta_bin: None,
        })
    }

    pub fn n_k(&self) -> usize {
        self.k_nodes.len()
    }

    pub fn n_theta(&self) -> usize {
        self.u_nodes.len()
    }

    pub fn len(&self) -> usize {
        self.n_k() * self.n_theta() * self.n_phi
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn phi_weight(&self) -> f64 {
        2.0 * PI / self.n_phi as f64
    }

    pub fn phi(&self, ip: usize) -> f64 {
        2.0 * PI * ip as f64 / self.n_phi as f64
    }

    pub fn index(&self, ik: usize, iu: usize, ip: usize) -> usize {
        (ik * self.n_theta() + iu) * self.n_phi + ip
    }

    /// Unit vector of node (iu, ip), built from the symmetric tables.
    pub fn khat(&self, iu: usize, ip: usize) -> Vec3 {
        let u = self.u_nodes[iu];
        let s = (1.0 - u * u).max(0.0).sqrt();
        Vec3::new(s * self.cos_phi[ip], s * self.sin_phi[ip], u)
    }

    pub fn point(&self, ik: usize, iu: usize, ip: usize) -> KPoint {
        let k = self.k_nodes[ik];
        KPoint {
            k,
            cos_theta: self.u_nodes[iu],
            phi: self.phi(ip),
            weight: self.k_weights[ik] * k * k * self.u_weights[iu] * self.phi_weight(),
        }
    }

    pub fn points(&self) -> impl Iterator<Item = KPoint> + '_ {
        (0..self.n_k()).flat_map(move |ik| {
            (0..self.n_theta()).flat_map(move |iu| (0..self.n_phi).map(move |ip| self.point(ik, iu, ip)))
        })
    }

    /// Largest spacing between neighbouring radial nodes (range ends included).
    pub fn max_radial_gap(&self) -> f64 {
        let mut gap: f64 = self.k_nodes[0] - self.k_min;
        for w in self.k_nodes.windows(2) {
            gap = gap.max(w[1] - w[0]);
        }
        gap.max(self.k_max - self.k_nodes[self.n_k() - 1])
    }

    /// Checks the `k_max >= 20·ω₀/c` requirement for a given source.
    pub fn check_resolves(&self, spec: &DipoleSpec) -> Result<()> {
        let need = 20.0 * spec.omega0 / spec.constants().c;
        if self.k_max < need * (1.0 - 1e-12) {
            return Err(Error::InvalidGrid(format!(
                "k_max = {} is below 20·omega0/c = {need}",
                self.k_max
            )));
        }
        Ok(())
    }
}

/// Time-quadrature controls.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeQuadrature {
    /// Gauss–Legendre order per panel.
    pub order: usize,
    /// Panels per shortest phase period.
    pub panels_per_period: f64,
    /// Allowed relative change between the coarse and refined pass.
    pub rel_tol: f64,
}

impl Default for TimeQuadrature {
    fn default() -> Self {
        TimeQuadrature {
            order: 6,
            panels_per_period: 8.0,
            rel_tol: 1e-8,
        }
    }
}

/// {F, 𝒜, 𝒱} at one k-vector and time.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ModeAmplitude {
    pub f: C64,
    pub avec: CVec3,
    pub vvec: CVec3,
}

impl ModeAmplitude {
    pub fn zero() -> Self {
        ModeAmplitude {
            f: C64::new(0.0, 0.0),
            avec: CVec3::zeros(),
            vvec: CVec3::zeros(),
        }
    }

    /// The starred set F*, 𝒜*, 𝒱*.
    pub fn conj(&self) -> Self {
        ModeAmplitude {
            f: self.f.conj(),
            avec: self.avec.map(|c| c.conj()),
            vvec: self.vvec.map(|c| c.conj()),
        }
    }

    pub fn scaled(&self, s: C64) -> Self {
        ModeAmplitude {
            f: self.f * s,
            avec: self.avec * s,
            vvec: self.vvec * s,
        }
    }

    /// |𝒜|² summed over components.
    pub fn a_norm_sqr(&self) -> f64 {
        self.avec.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// Which charges enter the velocity-weighted bracket.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Species {
    Both,
    ElectronOnly,
}

/// Bare time integrals for one direction.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Integrals {
    /// ∫ e^{iρτ}[e^{−ik·z₊} − e^{−ik·z₋}]
    pub bracket: C64,
    /// ∫ e^{iρτ}[v₊ e^{−ik·z₊} − v₋ e^{−ik·z₋}]·ẑ
    pub current: C64,
    l1_bracket: f64,
    l1_current: f64,
}

/// A direction sharing the radial node: cosθ and k·v_d.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Direction {
    pub cos_theta: f64,
    pub k_dot_vd: f64,
}

fn one_pass(
    spec: &DipoleSpec,
    k: f64,
    dirs: &[Direction],
    edges: &[(f64, f64)],
    rule: &GaussLegendre,
    species: Species,
) -> Vec<Integrals> {
    let c = spec.constants().c;
    let mu = spec.mass_ratio;
    let shared_phase = dirs.iter().all(|d| d.k_dot_vd == dirs[0].k_dot_vd);
    let mut acc = vec![Integrals::default(); dirs.len()];
    let nucleus = if species == Species::Both { 1.0 } else { 0.0 };
    for &(a, b) in edges {
        let (xs, ws) = rule.mapped(a, b);
        for (&tau, &w) in xs.iter().zip(&ws) {
            let (z, v) = spec.displacement(tau);
            let common = if shared_phase {
                cis((k * c - dirs[0].k_dot_vd) * tau)
            } else {
                C64::new(0.0, 0.0)
            };
            for (d, out) in dirs.iter().zip(acc.iter_mut()) {
                let e = if shared_phase {
                    common
                } else {
                    cis((k * c - d.k_dot_vd) * tau)
                };
                let kappa = k * d.cos_theta;
                // positive charge at −μz ẑ moving at −μv ẑ; electron at +z ẑ
                let ep = cis(kappa * mu * z);
                let em = cis(-kappa * z);
                let br = ep - em;
                let cu = ep * (-mu * v * nucleus) - em * v;
                out.bracket += e * br * w;
                out.current += e * cu * w;
                // roundoff scale of the terms before they cancel
                out.l1_bracket += 2.0 * w;
                out.l1_current += w * (mu * nucleus + 1.0) * v.abs();
            }
        }
    }
    acc
}

/// Integrates the bare brackets for all `dirs` at wavenumber `k`, running
/// a coarse and a 2× refined pass and returning the refined values.
pub(crate) fn integrate_directions(
    spec: &DipoleSpec,
    k: f64,
    dirs: &[Direction],
    t: f64,
    quad: &TimeQuadrature,
    species: Species,
) -> Result<Vec<Integrals>> {
    let upper = t.min(spec.t_stop);
    if upper <= 0.0 || dirs.is_empty() {
        return Ok(vec![Integrals::default(); dirs.len()]);
    }
    let c = spec.constants().c;
    let kvd_max = dirs.iter().map(|d| d.k_dot_vd.abs()).fold(0.0, f64::max);
    let rate = k * c + spec.omega0 * (1.0 + spec.amp_minus * k) + kvd_max;
    let max_len = 2.0 * PI / rate / quad.panels_per_period;
    let rule = GaussLegendre::new(quad.order.max(2));
    let breaks = spec.breakpoints();
    let coarse = one_pass(
        spec,
        k,
        dirs,
        &panel_edges(0.0, upper, &breaks, max_len, 1),
        &rule,
        species,
    );
    let fine = one_pass(
        spec,
        k,
        dirs,
        &panel_edges(0.0, upper, &breaks, max_len, 2),
        &rule,
        species,
    );
    for ((c1, c2), d) in coarse.iter().zip(&fine).zip(dirs) {
        for (x1, x2, l1) in [
            (c1.bracket, c2.bracket, c2.l1_bracket),
            (c1.current, c2.current, c2.l1_current),
        ] {
            let diff = (x2 - x1).norm();
            let allowed = quad.rel_tol * x2.norm() + 1e-13 * l1;
            if diff > allowed {
                return Err(Error::QuadratureNotConverged {
                    k,
                    cos_theta: d.cos_theta,
                    t,
                    diff,
                    allowed,
                });
            }
        }
    }
    Ok(fine)
}

struct Prefactors {
    scalar: C64,
    vector: C64,
}

fn prefactors(spec: &DipoleSpec, k: f64) -> Prefactors {
    let u = spec.constants();
    let e = spec.charge();
    let denom = 16.0 * PI.powi(3) * k;
    Prefactors {
        scalar: I * (e * u.c / (u.eps0 * denom)),
        vector: I * (e * u.c * u.mu0 / denom),
    }
}

fn assemble(spec: &DipoleSpec, kp: &KPoint, ints: &Integrals, with_cm_phase: bool) -> ModeAmplitude {
    let p = prefactors(spec, kp.k);
    let phase = if with_cm_phase {
        cis(-kp.kvec().dot(&spec.cm_position()))
    } else {
        C64::new(1.0, 0.0)
    };
    let vd = spec.cm_velocity();
    let f = p.scalar * ints.bracket * phase;
    let az = p.vector * ints.current * phase;
    let s = p.vector * ints.bracket * phase;
    ModeAmplitude {
        f,
        avec: CVec3::new(C64::new(0.0, 0.0), C64::new(0.0, 0.0), az),
        vvec: CVec3::new(s * vd.x, s * vd.y, s * vd.z),
    }
}

fn direction_of(spec: &DipoleSpec, kp: &KPoint) -> Direction {
    Direction {
        cos_theta: kp.cos_theta,
        k_dot_vd: kp.kvec().dot(&spec.cm_velocity()),
    }
}

/// All three amplitudes in one quadrature pass.
pub fn mode_amplitude(spec: &DipoleSpec, kp: &KPoint, t: f64, quad: &TimeQuadrature) -> Result<ModeAmplitude> {
    spec.validate()?;
    let ints = integrate_directions(spec, kp.k, &[direction_of(spec, kp)], t, quad, Species::Both)?;
    Ok(assemble(spec, kp, &ints[0], true))
}

/// F(k, t).
pub fn scalar_amplitude(spec: &DipoleSpec, kp: &KPoint, t: f64, quad: &TimeQuadrature) -> Result<C64> {
    Ok(mode_amplitude(spec, kp, t, quad)?.f)
}

/// 𝒜(k, t).
pub fn vector_amplitude(spec: &DipoleSpec, kp: &KPoint, t: f64, quad: &TimeQuadrature) -> Result<CVec3> {
    Ok(mode_amplitude(spec, kp, t, quad)?.avec)
}

/// 𝒱(k, t); exactly zero for a stationary centre of mass.
pub fn velocity_amplitude(spec: &DipoleSpec, kp: &KPoint, t: f64, quad: &TimeQuadrature) -> Result<CVec3> {
    Ok(mode_amplitude(spec, kp, t, quad)?.vvec)
}

/// 𝒜 with the nucleus term dropped from the current bracket.
pub fn vector_amplitude_electron(
    spec: &DipoleSpec,
    kp: &KPoint,
    t: f64,
    quad: &TimeQuadrature,
) -> Result<CVec3> {
    spec.validate()?;
    let ints = integrate_directions(spec, kp.k, &[direction_of(spec, kp)], t, quad, Species::ElectronOnly)?;
    Ok(assemble(spec, kp, &ints[0], true).avec)
}

/// The boundary term e/(16π³εk²)·e^{ikct − ik·d(t)}[e^{−ik·z₊(t)} − e^{−ik·z₋(t)}].
pub fn static_term(spec: &DipoleSpec, kp: &KPoint, t: f64) -> C64 {
    if t <= 0.0 {
        return C64::new(0.0, 0.0);
    }
    let u = spec.constants();
    let kv = kp.kvec();
    let (zp, zm) = spec.charge_positions(t);
    let bracket = cis(kv.dot(&zp)) - cis(-kv.dot(&zm));
    let pref = spec.charge() / (16.0 * PI.powi(3) * u.eps0 * kp.k * kp.k);
    cis(kp.k * u.c * t - kv.dot(&spec.cm_at(t))) * bracket * pref
}

/// Terms of the scalar-amplitude separation: F, c k̂·𝒜, static, c k̂·𝒱.
#[derive(Clone, Copy, Debug)]
pub struct Separation {
    pub f: C64,
    pub c_k_dot_a: C64,
    pub static_part: C64,
    pub c_k_dot_v: C64,
}

impl Separation {
    pub fn residual(&self) -> C64 {
        self.f - (self.c_k_dot_a + self.static_part + self.c_k_dot_v)
    }

    /// |residual| / (|F| + |static|).
    pub fn relative(&self) -> f64 {
        let scale = self.f.norm() + self.static_part.norm();
        if scale == 0.0 {
            self.residual().norm()
        } else {
            self.residual().norm() / scale
        }
    }
}

pub fn separation_terms(spec: &DipoleSpec, kp: &KPoint, t: f64, quad: &TimeQuadrature) -> Result<Separation> {
    let m = mode_amplitude(spec, kp, t, quad)?;
    let c = spec.constants().c;
    let kh = kp.khat().map(|x| C64::new(x, 0.0));
    Ok(Separation {
        f: m.f,
        c_k_dot_a: kh.dot(&m.avec) * c,
        static_part: static_term(spec, kp, t),
        c_k_dot_v: kh.dot(&m.vvec) * c,
    })
}

/// F − [c k̂·𝒜 + static + c k̂·𝒱].
///
/// The identity needs continuous charge positions, so with a rectangular
/// envelope `t_stop` should be a multiple of π/ω₀.
pub fn check_separation(spec: &DipoleSpec, kp: &KPoint, t: f64, quad: &TimeQuadrature) -> Result<C64> {
    Ok(separation_terms(spec, kp, t, quad)?.residual())
}

enum Storage {
    /// Stationary centre of mass: amplitudes depend on (k, cosθ) only,
    /// up to the fixed phase e^{−ik·d₀}.
    Axisymmetric(Vec<ModeAmplitude>),
    Full(Vec<ModeAmplitude>),
}

/// Amplitudes on every node of a grid at one time.
pub struct AmplitudeGrid {
    pub grid: KGrid,
    pub t: f64,
    pub constants: Constants,
    cm_position: Vec3,
    storage: Storage,
}

impl AmplitudeGrid {
    pub fn compute(spec: &DipoleSpec, grid: &KGrid, t: f64, quad: &TimeQuadrature) -> Result<Self> {
        spec.validate()?;
        grid.check_resolves(spec)?;
        let nu = grid.n_theta();
        if spec.is_stationary() {
            let dirs: Vec<Direction> = grid
                .u_nodes
                .iter()
                .map(|&u| Direction {
                    cos_theta: u,
                    k_dot_vd: 0.0,
                })
                .collect();
            let rows: Vec<Vec<ModeAmplitude>> = (0..grid.n_k())
                .into_par_iter()
                .map(|ik| {
                    let k = grid.k_nodes[ik];
                    let ints = integrate_directions(spec, k, &dirs, t, quad, Species::Both)?;
                    Ok(ints
                        .iter()
                        .zip(&grid.u_nodes)
                        .map(|(x, &u)| {
                            let kp = KPoint {
                                k,
                                cos_theta: u,
                                phi: 0.0,
                                weight: 1.0,
                            };
                            assemble(spec, &kp, x, false)
                        })
                        .collect())
                })
                .collect::<Result<_>>()?;
            let flat: Vec<ModeAmplitude> = rows.into_iter().flatten().collect();
            debug_assert_eq!(flat.len(), grid.n_k() * nu);
            Ok(AmplitudeGrid {
                grid: grid.clone(),
                t,
                constants: spec.constants(),
                cm_position: spec.cm_position(),
                storage: Storage::Axisymmetric(flat),
            })
        } else {
            let vd = spec.cm_velocity();
            let rows: Vec<Vec<ModeAmplitude>> = (0..grid.n_k())
                .into_par_iter()
                .map(|ik| {
                    let k = grid.k_nodes[ik];
                    let mut dirs = Vec::with_capacity(nu * grid.n_phi);
                    for iu in 0..nu {
                        for ip in 0..grid.n_phi {
                            dirs.push(Direction {
                                cos_theta: grid.u_nodes[iu],
                                k_dot_vd: k * grid.khat(iu, ip).dot(&vd),
                            });
                        }
                    }
                    let ints = integrate_directions(spec, k, &dirs, t, quad, Species::Both)?;
                    let mut row = Vec::with_capacity(ints.len());
                    for iu in 0..nu {
                        for ip in 0..grid.n_phi {
                            let kp = grid.point(ik, iu, ip);
                            row.push(assemble(spec, &kp, &ints[iu * grid.n_phi + ip], true));
                        }
                    }
                    Ok(row)
                })
                .collect::<Result<_>>()?;
            Ok(AmplitudeGrid {
                grid: grid.clone(),
                t,
                constants: spec.constants(),
                cm_position: spec.cm_position(),
                storage: Storage::Full(rows.into_iter().flatten().collect()),
            })
        }
    }

    /// Grid filled from a closure (synthetic amplitudes for testing laws
    /// that do not depend on the source).
    pub fn from_fn(grid: &KGrid, t: f64, constants: Constants, f: impl Fn(&KPoint) -> ModeAmplitude) -> Self {
        let data = grid.points().map(|kp| f(&kp)).collect();
        AmplitudeGrid {
            grid: grid.clone(),
            t,
            constants,
            cm_position: Vec3::zeros(),
            storage: Storage::Full(data),
        }
    }

    /// True when the amplitudes depend only on (k, cosθ) up to the
    /// centre-of-mass phase.
    pub fn is_axisymmetric(&self) -> bool {
        matches!(self.storage, Storage::Axisymmetric(_))
    }

    pub fn cm_position(&self) -> Vec3 {
        self.cm_position
    }

    /// Amplitude at (ik, iu) without the e^{−ik·d₀} phase; axisymmetric
    /// grids only.
    pub fn base(&self, ik: usize, iu: usize) -> Option<&ModeAmplitude> {
        match &self.storage {
            Storage::Axisymmetric(v) => Some(&v[ik * self.grid.n_theta() + iu]),
            Storage::Full(_) => None,
        }
    }

    pub fn get(&self, ik: usize, iu: usize, ip: usize) -> ModeAmplitude {
        match &self.storage {
            Storage::Axisymmetric(v) => {
                let m = v[ik * self.grid.n_theta() + iu];
                if self.cm_position == Vec3::zeros() {
                    m
                } else {
                    let kv = self.grid.khat(iu, ip) * self.grid.k_nodes[ik];
                    m.scaled(cis(-kv.dot(&self.cm_position)))
                }
            }
            Storage::Full(v) => v[self.grid.index(ik, iu, ip)],
        }
    }

    /// One row per grid node: k, cos_theta, phi, Re(F), Im(F), Re(Az), Im(Az).
    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let g = &self.grid;
        let mut out = String::from("k,cos_theta,phi,re_f,im_f,re_az,im_az\n");
        for ik in 0..g.n_k() {
            for iu in 0..g.n_theta() {
                for ip in 0..g.n_phi {
                    let m = self.get(ik, iu, ip);
                    let _ = writeln!(
                        out,
                        "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                        g.k_nodes[ik],
                        g.u_nodes[iu],
                        g.phi(ip),
                        m.f.re,
                        m.f.im,
                        m.avec.z.re,
                        m.avec.z.im
                    );
                }
            }
        }
        out
    }

    /// |𝒜|² at a node (phase-free).
    pub fn a_norm_sqr(&self, ik: usize, iu: usize, ip: usize) -> f64 {
        match &self.storage {
            Storage::Axisymmetric(v) => v[ik * self.grid.n_theta() + iu].a_norm_sqr(),
            Storage::Full(v) => v[self.grid.index(ik, iu, ip)].a_norm_sqr(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::Envelope;

    fn rect() -> DipoleSpec {
        DipoleSpec {
            envelope: Envelope::Rectangular,
            ..DipoleSpec::default()
        }
    }

    #[test]
    fn causal_and_empty() {
        let s = rect();
        let q = TimeQuadrature::default();
        let kp = KPoint::direction(1.0, 0.5, 0.3).unwrap();
        assert_eq!(scalar_amplitude(&s, &kp, 0.0, &q).unwrap(), C64::new(0.0, 0.0));
        assert_eq!(scalar_amplitude(&s, &kp, -3.0, &q).unwrap(), C64::new(0.0, 0.0));
        let still = DipoleSpec {
            amp_minus: 0.0,
            ..rect()
        };
        let m = mode_amplitude(&still, &kp, 10.0, &q).unwrap();
        assert_eq!(m, ModeAmplitude::zero());
    }

    #[test]
    fn z_dipole_structure() {
        let s = rect();
        let kp = KPoint::direction(1.3, 0.4, 1.1).unwrap();
        let m = mode_amplitude(&s, &kp, 15.0, &TimeQuadrature::default()).unwrap();
        assert_eq!(m.avec.x, C64::new(0.0, 0.0));
        assert_eq!(m.avec.y, C64::new(0.0, 0.0));
        assert_eq!(m.vvec, CVec3::zeros());
        assert!(m.avec.z.norm() > 0.0);
    }

    #[test]
    fn frozen_after_emission() {
        let s = rect();
        let q = TimeQuadrature::default();
        let kp = KPoint::direction(0.9, -0.3, 0.0).unwrap();
        let a = vector_amplitude(&s, &kp, 1.5 * s.t_stop, &q).unwrap();
        let b = vector_amplitude(&s, &kp, 2.0 * s.t_stop, &q).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn charge_linearity() {
        let s = rect();
        let s2 = DipoleSpec {
            charge_e: 2.0,
            ..rect()
        };
        let q = TimeQuadrature::default();
        let kp = KPoint::direction(2.0, 0.7, 0.0).unwrap();
        let a = mode_amplitude(&s, &kp, 30.0, &q).unwrap();
        let b = mode_amplitude(&s2, &kp, 30.0, &q).unwrap();
        assert_eq!(b.f, a.f * 2.0);
        assert_eq!(b.avec, a.avec * C64::new(2.0, 0.0));
    }

    #[test]
    fn separation_after_emission() {
        let s = rect();
        let kp = KPoint::direction(1.37, 0.6, 0.2).unwrap();
        let sep = separation_terms(&s, &kp, 1.1 * s.t_stop, &TimeQuadrature::default()).unwrap();
        assert_eq!(sep.static_part, C64::new(0.0, 0.0));
        assert!(sep.f.norm() > 1e-8);
        assert!(sep.relative() < 1e-6, "{:?}", sep);
    }

    #[test]
    fn grid_symmetry_and_weights() {
        let g = KGrid::new(&GridParams {
            n_k: 8,
            n_theta: 6,
            n_phi: 8,
            k_min: 0.0,
            k_max: 3.0,
        })
        .unwrap();
        assert_eq!(g.len(), 8 * 6 * 8);
        // Σ w = volume of the ball
        let vol: f64 = g.points().map(|p| p.weight).sum();
        assert!((vol - 4.0 / 3.0 * PI * 27.0).abs() < 1e-10);
        for ip in 0..4 {
            assert_eq!(g.khat(0, ip), -g.khat(5, ip + 4));
        }
    }

    #[test]
    fn binned_polar_rule() {
        let p = GridParams::default();
        for bins in [8, 9, 64] {
            let g = KGrid::theta_binned(&p, bins, 2).unwrap();
            let s: f64 = g.u_weights.iter().sum();
            assert!((s - 2.0).abs() < 1e-13);
            let n = g.n_theta();
            for i in 0..n {
                assert_eq!(g.u_nodes[i], -g.u_nodes[n - 1 - i]);
            }
            let (nb, of) = g.theta_bin.as_ref().unwrap();
            assert_eq!(*nb, bins);
            for (i, &b) in of.iter().enumerate() {
                let th = g.u_nodes[i].acos();
                assert!(th >= PI * b as f64 / bins as f64 - 1e-12);
                assert!(th <= PI * (b + 1) as f64 / bins as f64 + 1e-12);
            }
        }
    }

    #[test]
    fn csv_dump_shape() {
        let p = GridParams {
            n_k: 3,
            n_theta: 2,
            n_phi: 4,
            ..GridParams::default()
        };
        let g = KGrid::new(&p).unwrap();
        let a = AmplitudeGrid::compute(&DipoleSpec::default(), &g, 5.0, &TimeQuadrature::default()).unwrap();
        let csv = a.to_csv();
        assert_eq!(csv.lines().count(), 1 + 3 * 2 * 4);
        assert!(csv.lines().skip(1).all(|l| l.split(',').count() == 7));
    }

    #[test]
    fn taper_shape() {
        let g = KGrid::new(&GridParams::default()).unwrap();
        for (&k, &w) in g.k_nodes.iter().zip(&g.taper) {
            if k <= 18.0 {
                assert_eq!(w, 1.0);
            } else {
                assert!(w < 1.0 && w > 0.0);
            }
        }
    }

    #[test]
    fn coarse_grid_rejected() {
        let g = KGrid::new(&GridParams {
            k_max: 5.0,
            ..GridParams::default()
        })
        .unwrap();
        assert!(matches!(g.check_resolves(&rect()), Err(Error::InvalidGrid(_))));
    }
}
