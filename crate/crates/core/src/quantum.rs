//! Ladder operators on a truncated number basis |0⟩…|N−1⟩ and the
//! per-mode operators built from them.
//!
//! The per-mode Hamiltonian uses the symmetrized half-sum ½(aa† + a†a),
//! which equals N̂ + ½ below the truncation edge.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::kspace::KPoint;
use crate::quadrature::{panel_edges, GaussLegendre};
use crate::trajectory::{DipoleSpec, Vec3};
use crate::units::{Constants, UnitsMode};

#[derive(Clone, Debug, PartialEq)]
pub struct LadderOps {
    pub dim: usize,
    /// a, with a[n−1, n] = √n.
    pub lower: DMatrix<f64>,
    /// a†, the transpose of `lower`.
    pub raise: DMatrix<f64>,
    pub omega: f64,
    pub theta: f64,
    pub hbar: f64,
    pub c: f64,
}

impl LadderOps {
    /// sin²θ of the mode.
    pub fn sin2_theta(&self) -> f64 {
        self.theta.sin().powi(2)
    }

    /// ½(aa† + a†a).
    pub fn symmetric_number(&self) -> DMatrix<f64> {
        (&self.lower * &self.raise + &self.raise * &self.lower) * 0.5
    }
}

/// Natural-units ladder (ħ = c = 1).
pub fn build_ladder(dim: usize, omega: f64, theta: f64) -> Result<LadderOps> {
    build_ladder_in(dim, omega, theta, Constants::for_mode(UnitsMode::Natural))
}

pub fn build_ladder_in(dim: usize, omega: f64, theta: f64, constants: Constants) -> Result<LadderOps> {
    if dim < 2 {
        return Err(Error::DimensionTooSmall { dim });
    }
    let mut lower = DMatrix::zeros(dim, dim);
    for n in 1..dim {
        lower[(n - 1, n)] = (n as f64).sqrt();
    }
    let raise = lower.transpose();
    Ok(LadderOps {
        dim,
        lower,
        raise,
        omega,
        theta,
        hbar: constants.hbar,
        c: constants.c,
    })
}

pub fn commutator(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a * b - b * a
}

/// Matrix entries of the form Σ c·√r with integer c and square-free r.
/// Products of ladder matrices stay in this set, so the algebra can be
/// checked without rounding.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct Radical(BTreeMap<u64, i64>);

impl Radical {
    fn sqrt_of(n: u64) -> Self {
        let mut r = Radical::default();
        r.add_term(1, n);
        r
    }

    fn add_term(&mut self, coeff: i64, radicand: u64) {
        if coeff == 0 || radicand == 0 {
            return;
        }
        // pull square factors out of the radicand
        let (mut c, mut r) = (coeff, radicand);
        let mut f = 2u64;
        while f * f <= r {
            while r % (f * f) == 0 {
                r /= f * f;
                c *= f as i64;
            }
            f += 1;
        }
        let e = self.0.entry(r).or_insert(0);
        *e += c;
        if *e == 0 {
            self.0.remove(&r);
        }
    }

    fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    /// The integer value, if the entry is rational.
    fn as_integer(&self) -> Option<i64> {
        match self.0.len() {
            0 => Some(0),
            1 => self.0.get(&1).copied(),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
struct ExactMatrix {
    n: usize,
    entries: BTreeMap<(usize, usize), Radical>,
}

impl ExactMatrix {
    fn lowering(n: usize) -> Self {
        let entries = (1..n)
            .map(|j| ((j - 1, j), Radical::sqrt_of(j as u64)))
            .collect();
        ExactMatrix { n, entries }
    }

    fn transpose(&self) -> Self {
        ExactMatrix {
            n: self.n,
            entries: self.entries.iter().map(|(&(i, j), v)| ((j, i), v.clone())).collect(),
        }
    }

    fn mul(&self, o: &Self) -> Self {
        let mut out: BTreeMap<(usize, usize), Radical> = BTreeMap::new();
        for (&(i, m), x) in &self.entries {
            for (&(m2, j), y) in o.entries.range((m, 0)..(m + 1, 0)) {
                debug_assert_eq!(m, m2);
                let e = out.entry((i, j)).or_default();
                for (&rx, &cx) in &x.0 {
                    for (&ry, &cy) in &y.0 {
                        e.add_term(cx * cy, rx * ry);
                    }
                }
            }
        }
        out.retain(|_, v| !v.is_zero());
        ExactMatrix { n: self.n, entries: out }
    }

    fn sub(&self, o: &Self) -> Self {
        let mut out = self.entries.clone();
        for (&k, v) in &o.entries {
            let e = out.entry(k).or_default();
            for (&r, &c) in &v.0 {
                e.add_term(-c, r);
            }
        }
        out.retain(|_, v| !v.is_zero());
        ExactMatrix { n: self.n, entries: out }
    }
}

/// Outcome of the commutator checks.
#[derive(Clone, Debug, PartialEq)]
pub struct CommutatorReport {
    /// max |[a,a†] − I| over the levels below the truncation edge, in exact
    /// arithmetic (so 0 means exactly the identity there).
    pub restricted_norm_error: f64,
    /// |[a,a†]_{N−1,N−1} − 1| at the top level; equals N.
    pub top_level_defect: f64,
    /// [a,a] and [a†,a†] vanish identically.
    pub self_commutators_zero: bool,
    /// Same restricted error evaluated with the f64 matrices.
    pub float_restricted_error: f64,
}

pub fn commutator_check(ops: &LadderOps) -> CommutatorReport {
    let n = ops.dim;
    let a = ExactMatrix::lowering(n);
    let ad = a.transpose();
    let comm = a.mul(&ad).sub(&ad.mul(&a));
    let mut restricted = 0.0f64;
    let mut top = f64::NAN;
    for i in 0..n {
        for j in 0..n {
            let want = if i == j { 1 } else { 0 };
            let got = comm.entries.get(&(i, j)).cloned().unwrap_or_default();
            let dev = match got.as_integer() {
                Some(v) => (v - want).abs() as f64,
                None => f64::INFINITY,
            };
            if i == n - 1 && j == n - 1 {
                top = dev;
            } else if i < n - 1 && j < n - 1 {
                restricted = restricted.max(dev);
            } else if dev != 0.0 {
                // off-diagonal entries touching the top level should vanish too
                restricted = restricted.max(dev);
            }
        }
    }
    let aa = a.mul(&a);
    let self_zero = aa.sub(&aa).entries.is_empty() && {
        let dd = ad.mul(&ad);
        dd.sub(&dd).entries.is_empty()
    };
    let fc = commutator(&ops.lower, &ops.raise);
    let mut float_err = 0.0f64;
    for i in 0..n - 1 {
        for j in 0..n - 1 {
            let want = if i == j { 1.0 } else { 0.0 };
            float_err = float_err.max((fc[(i, j)] - want).abs());
        }
    }
    CommutatorReport {
        restricted_norm_error: restricted,
        top_level_defect: top,
        self_commutators_zero: self_zero
            && commutator(&ops.lower, &ops.lower).iter().all(|&x| x == 0.0)
            && commutator(&ops.raise, &ops.raise).iter().all(|&x| x == 0.0),
        float_restricted_error: float_err,
    }
}

/// ħω sin²θ · ½(aa† + a†a).
pub fn mode_hamiltonian(ops: &LadderOps) -> DMatrix<f64> {
    ops.symmetric_number() * (ops.hbar * ops.omega * ops.sin2_theta())
}

/// The form ħω sin²θ (aa† + ½), which is how the ordering is sometimes
/// written; kept for side-by-side reports.
pub fn mode_hamiltonian_as_printed(ops: &LadderOps) -> DMatrix<f64> {
    let n = ops.dim;
    (&ops.lower * &ops.raise + DMatrix::identity(n, n) * 0.5) * (ops.hbar * ops.omega * ops.sin2_theta())
}

/// Eigenvalues of a symmetric matrix restricted to |0⟩…|N−2⟩, ascending.
pub fn reliable_spectrum(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let sub = m.view((0, 0), (n - 1, n - 1)).into_owned();
    let mut ev: Vec<f64> = sub.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Eigenvalues of the full symmetric matrix, ascending.
pub fn full_spectrum(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Components (ħk k̂_i) sin²θ · ½(aa† + a†a), with k = ω/c.
pub fn mode_momentum(ops: &LadderOps, khat: &Vec3) -> Result<[DMatrix<f64>; 3]> {
    if (khat.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidSpec(format!("khat must be a unit vector, |khat| = {}", khat.norm())));
    }
    let s = ops.symmetric_number();
    let k = ops.omega / ops.c;
    let f = ops.hbar * k * ops.sin2_theta();
    Ok([&s * (f * khat.x), &s * (f * khat.y), &s * (f * khat.z)])
}

/// ħω_s sin²θ_s (aa† + a†a): level spacing 2ħω_s sin²θ_s.
pub fn stimulated_hamiltonian(omega_s: f64, theta_s: f64, dim: usize) -> Result<DMatrix<f64>> {
    let ops = build_ladder(dim, omega_s, theta_s)?;
    Ok((&ops.lower * &ops.raise + &ops.raise * &ops.lower) * (ops.hbar * omega_s * ops.sin2_theta()))
}

/// Closed-form level ħω sin²θ (n + ½) of [`mode_hamiltonian`].
pub fn mode_level(ops: &LadderOps, n: usize) -> f64 {
    ops.hbar * ops.omega * ops.sin2_theta() * (n as f64 + 0.5)
}

/// Closed-form level 2ħω_s sin²θ_s (n + ½) of [`stimulated_hamiltonian`]
/// (natural units).
pub fn stimulated_level(omega_s: f64, theta_s: f64, n: usize) -> f64 {
    2.0 * omega_s * theta_s.sin().powi(2) * (n as f64 + 0.5)
}

/// Quadrature settings for the drive integral; deliberately different from
/// the amplitude defaults so the two act as cross-checks.
const DRIVE_ORDER: usize = 10;
const DRIVE_PANELS_PER_PERIOD: f64 = 5.0;
const DRIVE_REL_TOL: f64 = 1e-11;

/// The c-number drive term of the Heisenberg lowering operator,
/// −ie(1/(16π³Vεħω))^{1/2} ∫ v₋ e^{iρτ} e^{−ik·z₋} dτ, for a quantization
/// volume `volume`. The vacuum operator is not included.
pub fn heisenberg_amplitude(spec: &DipoleSpec, kp: &KPoint, t: f64, volume: f64) -> Result<C64> {
    spec.validate()?;
    if !(volume > 0.0) {
        return Err(Error::InvalidSpec(format!("quantization volume must be positive, got {volume}")));
    }
    let u = spec.constants();
    let upper = t.min(spec.t_stop);
    if upper <= 0.0 {
        return Ok(C64::new(0.0, 0.0));
    }
    let kv = kp.kvec();
    let kz = kv.z;
    let rho = kp.k * u.c - kv.dot(&spec.cm_velocity());
    let rate = rho.abs() + spec.omega0 * (1.0 + spec.amp_minus * kp.k);
    let max_len = 2.0 * PI / rate / DRIVE_PANELS_PER_PERIOD;
    let rule = GaussLegendre::new(DRIVE_ORDER);
    let integrate = |refine: usize| {
        let mut acc = C64::new(0.0, 0.0);
        let mut scale = 0.0;
        for (a, b) in panel_edges(0.0, upper, &spec.breakpoints(), max_len, refine) {
            let (xs, ws) = rule.mapped(a, b);
            for (&tau, &w) in xs.iter().zip(&ws) {
                let (z, v) = spec.displacement(tau);
                let (s, c) = (rho * tau - kz * z).sin_cos();
                acc += C64::new(c, s) * (v * w);
                scale += (v * w).abs();
            }
        }
        (acc, scale)
    };
    let (coarse, _) = integrate(1);
    let (fine, scale) = integrate(2);
    let diff = (fine - coarse).norm();
    let allowed = DRIVE_REL_TOL * fine.norm() + 1e-14 * scale;
    if diff > allowed {
        return Err(Error::QuadratureNotConverged {
            k: kp.k,
            cos_theta: kp.cos_theta,
            t,
            diff,
            allowed,
        });
    }
    let omega = kp.k * u.c;
    let s = (1.0 / (16.0 * PI.powi(3) * volume * u.eps0 * u.hbar * omega)).sqrt();
    let (sd, cd) = (-kv.dot(&spec.cm_position())).sin_cos();
    Ok(C64::new(0.0, -spec.charge() * s) * fine * C64::new(cd, sd))
}

/// (16π³εω/(ħV))^{1/2}: maps the electron-only vector amplitude onto the
/// drive term.
pub fn drive_scale(spec: &DipoleSpec, kp: &KPoint, volume: f64) -> f64 {
    let u = spec.constants();
    (16.0 * PI.powi(3) * u.eps0 * kp.k * u.c / (u.hbar * volume)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_ladders() {
        let l = build_ladder(2, 1.0, 1.0).unwrap();
        assert_eq!(l.lower, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]));
        let l = build_ladder(3, 1.0, 1.0).unwrap();
        assert_eq!(l.lower[(1, 2)], 2f64.sqrt());
        assert_eq!(l.raise, l.lower.transpose());
        assert!(matches!(build_ladder(1, 1.0, 1.0), Err(Error::DimensionTooSmall { dim: 1 })));
    }

    #[test]
    fn commutators() {
        for dim in [2, 3, 8, 16] {
            let r = commutator_check(&build_ladder(dim, 1.0, 0.3).unwrap());
            assert_eq!(r.restricted_norm_error, 0.0);
            assert_eq!(r.top_level_defect, dim as f64);
            assert!(r.self_commutators_zero);
            assert!(r.float_restricted_error < 1e-14 * dim as f64);
        }
    }

    #[test]
    fn radicals_simplify() {
        let mut r = Radical::default();
        r.add_term(1, 8);
        assert_eq!(r.0.get(&2), Some(&2));
        r.add_term(-2, 2);
        assert!(r.is_zero());
    }

    #[test]
    fn hamiltonian_spectrum() {
        let ops = build_ladder(5, 1.0, PI / 2.0).unwrap();
        let h = mode_hamiltonian(&ops);
        let ev = reliable_spectrum(&h);
        for (e, want) in ev.iter().zip([0.5, 1.5, 2.5, 3.5]) {
            assert!((e - want).abs() < 1e-12 * want);
        }
        assert_eq!(ev.len(), 4);
        let zero = mode_hamiltonian(&build_ladder(5, 1.0, 0.0).unwrap());
        assert!(zero.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn printed_form_differs_by_one_quantum() {
        let ops = build_ladder(6, 1.0, PI / 2.0).unwrap();
        let a = reliable_spectrum(&mode_hamiltonian(&ops));
        let b = reliable_spectrum(&mode_hamiltonian_as_printed(&ops));
        for (x, y) in a.iter().zip(&b) {
            assert!((y - x - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_form_levels() {
        let ops = build_ladder(6, 1.4, 0.8).unwrap();
        let ev = reliable_spectrum(&mode_hamiltonian(&ops));
        for (n, e) in ev.iter().enumerate() {
            assert!((e - mode_level(&ops, n)).abs() < 1e-12 * e);
        }
        let ev = reliable_spectrum(&stimulated_hamiltonian(1.0, PI / 2.0, 4).unwrap());
        assert!((ev[0] - 1.0).abs() < 1e-15);
        assert!((ev[1] - stimulated_level(1.0, PI / 2.0, 1)).abs() < 1e-14);
    }

    #[test]
    fn stimulated_spacing() {
        let h = stimulated_hamiltonian(1.0, PI / 2.0, 6).unwrap();
        let ev = reliable_spectrum(&h);
        assert!((ev[0] - 1.0).abs() < 1e-12);
        for w in ev.windows(2) {
            assert!((w[1] - w[0] - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn momentum_components() {
        let ops = build_ladder(4, 2.0, 0.7).unwrap();
        let kh = Vec3::new(0.7f64.sin(), 0.0, 0.7f64.cos());
        let g = mode_momentum(&ops, &kh).unwrap();
        assert!(g[1].iter().all(|&x| x == 0.0));
        let h = mode_hamiltonian(&ops);
        for (x, y) in g[2].iter().zip(h.iter()) {
            // G_z/(ħk_z) against H/(ħω)
            assert!((x / (2.0 * kh.z) - y / 2.0).abs() <= 1e-15 * y.abs().max(1.0));
        }
        assert!(mode_momentum(&ops, &Vec3::new(1.0, 1.0, 0.0)).is_err());
    }

    #[test]
    fn drive_vanishes_without_motion() {
        let s = DipoleSpec {
            amp_minus: 0.0,
            ..DipoleSpec::default()
        };
        let kp = KPoint::direction(1.0, 0.3, 0.0).unwrap();
        assert_eq!(heisenberg_amplitude(&s, &kp, 10.0, 1.0).unwrap(), C64::new(0.0, 0.0));
        let s = DipoleSpec::default();
        assert_eq!(heisenberg_amplitude(&s, &kp, -1.0, 1.0).unwrap(), C64::new(0.0, 0.0));
    }
}
