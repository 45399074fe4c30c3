//! Numerical checks of the auxiliary identities the k-space construction
//! leans on: parity of the angular integral, Coulomb recovery from sinc
//! integrals, a few vector identities, and E/B against finite differences
//! of the potentials.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::f64::consts::PI;

use crate::error::Result;
use crate::fields::FieldEvaluator;
use crate::quadrature::{pairwise_sum, GaussLegendre};
use crate::trajectory::Vec3;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityReport {
    pub name: String,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub abs_err: f64,
    pub rel_err: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl IdentityReport {
    fn new(name: &str, lhs: Vec<f64>, rhs: Vec<f64>, abs_err: f64, rel_err: f64, tolerance: f64) -> Self {
        IdentityReport {
            name: name.to_string(),
            lhs,
            rhs,
            abs_err,
            rel_err,
            tolerance,
            pass: rel_err <= tolerance,
        }
    }
}

/// Sums f over the polar nodes, taking mirrored pairs together.
fn mirrored_sum(u: &[f64], f: impl Fn(usize) -> f64) -> f64 {
    let n = u.len();
    let mirrored = (0..n).all(|i| u[i] == -u[n - 1 - i]);
    if mirrored {
        let mut parts: Vec<f64> = (0..n / 2).map(|i| f(i) + f(n - 1 - i)).collect();
        if n % 2 == 1 {
            parts.push(f(n / 2));
        }
        pairwise_sum(&parts)
    } else {
        let parts: Vec<f64> = (0..n).map(f).collect();
        pairwise_sum(&parts)
    }
}

/// ∭d³k (1/k) sin(k·s) sin(kRu) and its cosine partner on a given polar
/// rule, with `s` standing for c(t − τ). Returns (odd, even).
pub fn odd_angular_integral(k_max: f64, r: f64, s: f64, n_k: usize, u: &[f64], w: &[f64]) -> (f64, f64) {
    let (ks, kw) = GaussLegendre::new(n_k).mapped(0.0, k_max);
    let mut odd = Vec::with_capacity(n_k);
    let mut even = Vec::with_capacity(n_k);
    for (&k, &wk) in ks.iter().zip(&kw) {
        let radial = 2.0 * PI * wk * k * (k * s).sin();
        odd.push(radial * mirrored_sum(u, |i| w[i] * (k * r * u[i]).sin()));
        even.push(radial * mirrored_sum(u, |i| w[i] * (k * r * u[i]).cos()));
    }
    (pairwise_sum(&odd), pairwise_sum(&even))
}

/// The odd angular integral on a symmetric Gauss rule vanishes exactly.
pub fn verify_odd_angular_integral(k_max: f64, r: f64, s: f64) -> IdentityReport {
    let g = GaussLegendre::new(48);
    let (odd, even) = odd_angular_integral(k_max, r, s, 96, &g.nodes, &g.weights);
    let rel = if even == 0.0 { odd.abs() } else { odd.abs() / even.abs() };
    IdentityReport::new("odd_angular_integral", vec![odd], vec![0.0], odd.abs(), rel, 0.0)
}

/// ∫₀^X sin(x)/x dx by composite Gauss rules on `panels` equal panels.
pub fn sinc_integral(x: f64, panels: usize) -> f64 {
    let g = GaussLegendre::new(10);
    let h = x / panels as f64;
    let parts: Vec<f64> = (0..panels)
        .map(|j| {
            let (xs, ws) = g.mapped(j as f64 * h, (j + 1) as f64 * h);
            xs.iter().zip(&ws).map(|(&t, &w)| w * t.sin() / t).sum()
        })
        .collect();
    pairwise_sum(&parts)
}

fn sinc_panels(x: f64) -> usize {
    ((x / 1.0).ceil() as usize).max(4)
}

/// ∫₀^∞ sin(x)/x dx as quadrature to X plus the leading tail term cos(X)/X.
pub fn sinc_to_infinity(x: f64) -> f64 {
    sinc_integral(x, sinc_panels(x)) + x.cos() / x
}

pub fn verify_sinc_limit(x: f64) -> IdentityReport {
    let v = sinc_to_infinity(x);
    let err = (v - PI / 2.0).abs();
    IdentityReport::new("sinc_limit", vec![v], vec![PI / 2.0], err, err / (PI / 2.0), 1e-4)
}

/// (e/2π²ε)[(1/R₊)∫₀^{k_max R₊} sinc − (1/R₋)∫₀^{k_max R₋} sinc] with the
/// tail correction, against e/(4πεR₊) − e/(4πεR₋); natural units (e = ε = 1).
pub fn coulomb_from_sinc(r_plus: f64, r_minus: f64, k_max: f64, panels_scale: usize) -> f64 {
    let term = |r: f64| {
        let x = k_max * r;
        (sinc_integral(x, sinc_panels(x) * panels_scale.max(1)) + x.cos() / x) / r
    };
    (term(r_plus) - term(r_minus)) / (2.0 * PI * PI)
}

pub fn verify_coulomb_recovery(r_plus: f64, r_minus: f64, k_max: f64) -> IdentityReport {
    let lhs = coulomb_from_sinc(r_plus, r_minus, k_max, 1);
    let rhs = 1.0 / (4.0 * PI * r_plus) - 1.0 / (4.0 * PI * r_minus);
    let err = (lhs - rhs).abs();
    let rel = if rhs == 0.0 { err } else { err / rhs.abs() };
    IdentityReport::new("coulomb_recovery", vec![lhs], vec![rhs], err, rel, 1e-4)
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    use rand::Rng;
    let u: f64 = 2.0 * rng.random::<f64>() - 1.0;
    let phi = 2.0 * PI * rng.random::<f64>();
    let s = (1.0 - u * u).sqrt();
    Vec3::new(s * phi.cos(), s * phi.sin(), u)
}

/// |(k̂·ẑ)k̂ − ẑ|² ∓ k̂·k̂ ± (k̂·ẑ)² against 0 and 2[1 − (k̂·ẑ)²], plus the
/// product identities (a×b)·(c×d) and a×(b×c), on random unit vectors.
pub fn vector_identity_errors(k: &Vec3, z: &Vec3, k1: &Vec3, d: &Vec3) -> [f64; 4] {
    let c = k.dot(z);
    let t = k * c - z;
    let e71 = t.dot(&t) - k.dot(k) + c * c;
    let e72 = t.dot(&t) + k.dot(k) - c * c - 2.0 * (1.0 - c * c);
    let lhs = k1.cross(k).dot(&z.cross(d));
    let rhs = k1.dot(z) * k.dot(d) - k1.dot(d) * k.dot(z);
    let bac = k1.cross(&k.cross(z)) - (k * k1.dot(z) - z * k1.dot(k));
    [e71.abs(), e72.abs(), (lhs - rhs).abs(), bac.norm()]
}

pub fn verify_vector_identities(n_random: usize, seed: u64) -> IdentityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = [0.0f64; 4];
    for _ in 0..n_random.max(1) {
        let k = random_unit(&mut rng);
        let z = random_unit(&mut rng);
        let k1 = random_unit(&mut rng);
        let d = random_unit(&mut rng);
        for (w, e) in worst.iter_mut().zip(vector_identity_errors(&k, &z, &k1, &d)) {
            *w = w.max(e);
        }
    }
    let m = worst.iter().copied().fold(0.0, f64::max);
    IdentityReport::new("vector_identities", worst.to_vec(), vec![0.0; 4], m, m, 1e-12)
}

/// Finite-difference steps in space and time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FdSteps {
    pub space: f64,
    pub time: f64,
}

impl Default for FdSteps {
    fn default() -> Self {
        FdSteps { space: 1e-3, time: 1e-3 }
    }
}

/// Worst relative errors of E and B at one point against −∇φ − ∂A/∂t and
/// ∇×A by central differences. The evaluator's amplitudes must be frozen
/// (t after emission) so that the time shift only moves the phase.
pub fn field_consistency_at(ev: &FieldEvaluator<'_>, r: &Vec3, steps: FdSteps) -> Result<(f64, f64)> {
    let e = ev.electric_field(r)?;
    let b = ev.magnetic_field(r)?;
    let h = steps.space;
    let mut grad = Vec3::zeros();
    let mut jac = [[0.0; 3]; 3]; // jac[i][j] = ∂_i A_j
    for i in 0..3 {
        let mut d = Vec3::zeros();
        d[i] = h;
        let (rp, rm) = (r + d, r - d);
        grad[i] = (ev.scalar_potential(&rp)? - ev.scalar_potential(&rm)?) / (2.0 * h);
        let da = (ev.vector_potential(&rp)? - ev.vector_potential(&rm)?) / (2.0 * h);
        for j in 0..3 {
            jac[i][j] = da[j];
        }
    }
    let ht = steps.time;
    let t = ev.t();
    let dadt = (ev.at_time(t + ht)?.vector_potential(r)? - ev.at_time(t - ht)?.vector_potential(r)?) / (2.0 * ht);
    let e_fd = -grad - dadt;
    let b_fd = Vec3::new(
        jac[1][2] - jac[2][1],
        jac[2][0] - jac[0][2],
        jac[0][1] - jac[1][0],
    );
    let rel = |x: Vec3, y: Vec3| {
        let n = y.norm();
        if n == 0.0 {
            x.norm()
        } else {
            (x - y).norm() / n
        }
    };
    Ok((rel(e, e_fd), rel(b, b_fd)))
}

pub fn verify_field_consistency(ev: &FieldEvaluator<'_>, points: &[Vec3], steps: FdSteps) -> Result<IdentityReport> {
    let mut lhs = Vec::new();
    let mut worst = 0.0f64;
    for p in points {
        let (re, rb) = field_consistency_at(ev, p, steps)?;
        lhs.push(re);
        lhs.push(rb);
        worst = worst.max(re).max(rb);
    }
    let n = lhs.len();
    Ok(IdentityReport::new("field_consistency", lhs, vec![0.0; n], worst, worst, 1e-3))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn odd_integral_exact_on_symmetric_rule() {
        for (k, r, s) in [(20.0, 3.0, 1.7), (5.0, 0.4, 9.0), (20.0, 0.0, 1.0)] {
            let rep = verify_odd_angular_integral(k, r, s);
            assert_eq!(rep.lhs[0], 0.0);
            assert!(rep.pass);
        }
    }

    #[test]
    fn odd_integral_shrinks_on_shifted_rules() {
        let mut last = f64::INFINITY;
        for n in [7, 15, 31] {
            // a midpoint rule shifted off the mirror
            let h = 2.0 / n as f64;
            let u: Vec<f64> = (0..n).map(|i| -1.0 + (i as f64 + 0.3) * h).collect();
            let w = vec![h; n];
            let (odd, even) = odd_angular_integral(4.0, 1.0, 1.0, 48, &u, &w);
            let rel = odd.abs() / even.abs();
            assert!(rel > 0.0 && rel < last, "n={n} rel={rel}");
            last = rel;
        }
    }

    #[test]
    fn sinc_and_coulomb() {
        assert!(verify_sinc_limit(200.0).pass);
        let rep = verify_coulomb_recovery(2.0, 1.0, 200.0);
        assert!(rep.pass, "{rep:?}");
        assert!((rep.rhs[0] - (1.0 / (8.0 * PI) - 1.0 / (4.0 * PI))).abs() < 1e-15);
        assert_eq!(verify_coulomb_recovery(1.5, 1.5, 200.0).lhs[0], 0.0);
    }

    #[test]
    fn coulomb_refinement_stable() {
        let exact = 1.0 / (4.0 * PI * 2.0) - 1.0 / (4.0 * PI);
        let e1 = (coulomb_from_sinc(2.0, 1.0, 200.0, 1) - exact).abs();
        let e2 = (coulomb_from_sinc(2.0, 1.0, 200.0, 2) - exact).abs();
        assert!(e2 <= 1.1 * e1);
    }

    #[test]
    fn vector_identities() {
        let rep = verify_vector_identities(1000, 3);
        assert!(rep.pass, "{rep:?}");
        let z = Vec3::z();
        let t = z * 1.0 - z;
        assert_eq!(t.dot(&t) + 1.0 - 1.0, 0.0);
        let k = Vec3::x();
        let c = k.dot(&z);
        let t = k * c - z;
        assert_eq!(t.dot(&t) + k.dot(&k) - c * c, 2.0);
    }
}
