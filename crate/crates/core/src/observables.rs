//! Energy and momentum functionals over the k-grid, the angular emission
//! density, and a sampler for emission directions.
//!
//! The radial taper used for field reconstruction is not applied here: these
//! are plain quadratures of the functionals.

use rand::Rng;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::kspace::AmplitudeGrid;
use crate::quadrature::pairwise_sum;
use crate::trajectory::Vec3;

/// Emitted energy resolved by polar angle, plus its wavenumber marginal.
#[derive(Clone, Debug, PartialEq)]
pub struct AngularSpectrum {
    /// Bin centres in θ.
    pub theta_bins: Vec<f64>,
    /// Energy per steradian in each bin.
    pub density: Vec<f64>,
    /// Radial nodes and dH/dk at each.
    pub k_nodes: Vec<f64>,
    pub k_marginal: Vec<f64>,
}

impl AngularSpectrum {
    pub fn n_bins(&self) -> usize {
        self.theta_bins.len()
    }

    /// Solid angle of bin `b`.
    pub fn solid_angle(&self, b: usize) -> f64 {
        let n = self.n_bins() as f64;
        let lo = PI * b as f64 / n;
        let hi = PI * (b + 1) as f64 / n;
        2.0 * PI * (lo.cos() - hi.cos())
    }

    /// Σ density·ΔΩ.
    pub fn total(&self) -> f64 {
        let parts: Vec<f64> = (0..self.n_bins()).map(|b| self.density[b] * self.solid_angle(b)).collect();
        pairwise_sum(&parts)
    }

    /// Linear interpolation between bin centres, clamped at the ends.
    pub fn density_at(&self, theta: f64) -> f64 {
        let n = self.n_bins();
        let x = theta / (PI / n as f64) - 0.5;
        if x <= 0.0 {
            return self.density[0];
        }
        let i = x.floor() as usize;
        if i + 1 >= n {
            return self.density[n - 1];
        }
        let f = x - i as f64;
        self.density[i] * (1.0 - f) + self.density[i + 1] * f
    }
}

/// A direction drawn from the sin²θ law.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmissionSample {
    pub theta: f64,
    pub phi: f64,
    pub direction: Vec3,
}

/// Σ_φ w_φ |𝒜|² and Σ_φ w_φ k̂_{x,y}|𝒜|² at (ik, iu). The mirrored φ
/// nodes are summed in pairs so the transverse moments of an axisymmetric
/// grid cancel exactly.
fn phi_sums(amps: &AmplitudeGrid, ik: usize, iu: usize) -> (f64, f64, f64) {
    let g = &amps.grid;
    let wphi = g.phi_weight();
    if amps.is_axisymmetric() {
        let a2 = amps.a_norm_sqr(ik, iu, 0);
        let n = g.n_phi;
        let (cx, cy) = if n.is_multiple_of(2) {
            let h = n / 2;
            let cx: Vec<f64> = (0..h).map(|j| g.cos_phi[j] + g.cos_phi[j + h]).collect();
            let cy: Vec<f64> = (0..h).map(|j| g.sin_phi[j] + g.sin_phi[j + h]).collect();
            (pairwise_sum(&cx), pairwise_sum(&cy))
        } else {
            (pairwise_sum(&g.cos_phi), pairwise_sum(&g.sin_phi))
        };
        (2.0 * PI * a2, wphi * cx * a2, wphi * cy * a2)
    } else {
        let vals: Vec<(f64, f64, f64)> = (0..g.n_phi)
            .map(|ip| {
                let a2 = amps.a_norm_sqr(ik, iu, ip);
                (wphi * a2, wphi * g.cos_phi[ip] * a2, wphi * g.sin_phi[ip] * a2)
            })
            .collect();
        let s0: Vec<f64> = vals.iter().map(|v| v.0).collect();
        let sx: Vec<f64> = vals.iter().map(|v| v.1).collect();
        let sy: Vec<f64> = vals.iter().map(|v| v.2).collect();
        (pairwise_sum(&s0), pairwise_sum(&sx), pairwise_sum(&sy))
    }
}

/// Sums `f(iu)` over the polar nodes, pairing each node with its mirror
/// first when the rule is symmetric.
fn polar_sum<T: Copy + Default + std::ops::Add<Output = T>>(amps: &AmplitudeGrid, f: impl Fn(usize) -> T) -> T {
    let u = &amps.grid.u_nodes;
    let n = u.len();
    let mirrored = (0..n).all(|i| u[i] == -u[n - 1 - i]);
    if mirrored {
        let mut parts: Vec<T> = (0..n / 2).map(|i| f(i) + f(n - 1 - i)).collect();
        if n % 2 == 1 {
            parts.push(f(n / 2));
        }
        pairwise_sum(&parts)
    } else {
        let parts: Vec<T> = (0..n).map(f).collect();
        pairwise_sum(&parts)
    }
}

fn energy_prefactor(amps: &AmplitudeGrid) -> f64 {
    8.0 * PI.powi(3) * amps.constants.eps0
}

fn hamiltonian(amps: &AmplitudeGrid, weighted: bool) -> f64 {
    let g = &amps.grid;
    let c = amps.constants.c;
    let per_k: Vec<f64> = (0..g.n_k())
        .map(|ik| {
            let k = g.k_nodes[ik];
            let omega = k * c;
            let inner = polar_sum(amps, |iu| {
                let u = g.u_nodes[iu];
                let s2 = if weighted { 1.0 - u * u } else { 1.0 };
                g.u_weights[iu] * s2 * phi_sums(amps, ik, iu).0
            });
            g.k_weights[ik] * k * k * omega * omega * 2.0 * inner
        })
        .collect();
    energy_prefactor(amps) * pairwise_sum(&per_k)
}

/// H with the sin²θ weight.
pub fn hamiltonian_exact(amps: &AmplitudeGrid) -> f64 {
    hamiltonian(amps, true)
}

/// H without the angular weight.
pub fn hamiltonian_standard(amps: &AmplitudeGrid) -> f64 {
    hamiltonian(amps, false)
}

#[derive(Clone, Copy, Default)]
struct V3(f64, f64, f64);

impl std::ops::Add for V3 {
    type Output = V3;
    fn add(self, o: V3) -> V3 {
        V3(self.0 + o.0, self.1 + o.1, self.2 + o.2)
    }
}

/// Total field momentum G with the sin²θ weight.
pub fn momentum_exact(amps: &AmplitudeGrid) -> Vec3 {
    let g = &amps.grid;
    let c = amps.constants.c;
    let per_k: Vec<V3> = (0..g.n_k())
        .map(|ik| {
            let k = g.k_nodes[ik];
            let omega = k * c;
            let inner = polar_sum(amps, |iu| {
                let u = g.u_nodes[iu];
                let s = (1.0 - u * u).max(0.0).sqrt();
                let w = g.u_weights[iu] * (1.0 - u * u);
                let (s0, sx, sy) = phi_sums(amps, ik, iu);
                V3(w * s * sx, w * s * sy, w * u * s0)
            });
            let f = g.k_weights[ik] * k * k * omega * k * 2.0;
            V3(f * inner.0, f * inner.1, f * inner.2)
        })
        .collect();
    let s = pairwise_sum(&per_k);
    Vec3::new(s.0, s.1, s.2) * energy_prefactor(amps)
}

/// Bins the sin²θ-weighted energy integrand by polar angle.
///
/// Each bin's energy is divided by its solid angle, so Σ density·ΔΩ
/// reproduces [`hamiltonian_exact`]. Grids built with
/// [`KGrid::theta_binned`](crate::kspace::KGrid::theta_binned) for the same
/// bin count give one quadrature rule per bin.
pub fn angular_density(amps: &AmplitudeGrid, n_theta_bins: usize) -> Result<AngularSpectrum> {
    if n_theta_bins < 8 {
        return Err(Error::InvalidGrid(format!(
            "need at least 8 theta bins, got {n_theta_bins}"
        )));
    }
    let g = &amps.grid;
    let c = amps.constants.c;
    let bin_of: Vec<usize> = match &g.theta_bin {
        Some((b, of)) if *b == n_theta_bins => of.clone(),
        _ => g
            .u_nodes
            .iter()
            .map(|&u| {
                let b = (u.clamp(-1.0, 1.0).acos() / PI * n_theta_bins as f64).floor() as usize;
                b.min(n_theta_bins - 1)
            })
            .collect(),
    };
    let mut count = vec![0usize; n_theta_bins];
    for &b in &bin_of {
        count[b] += 1;
    }
    if let Some(b) = count.iter().position(|&n| n == 0) {
        return Err(Error::EmptyBin { bin: b });
    }
    let pre = energy_prefactor(amps);
    // energy per (k, polar node)
    let table: Vec<Vec<f64>> = (0..g.n_k())
        .map(|ik| {
            let k = g.k_nodes[ik];
            let omega = k * c;
            (0..g.n_theta())
                .map(|iu| {
                    let u = g.u_nodes[iu];
                    pre * g.k_weights[ik] * k * k * omega * omega * 2.0 * g.u_weights[iu] * (1.0 - u * u)
                        * phi_sums(amps, ik, iu).0
                })
                .collect()
        })
        .collect();
    let mut spectrum = AngularSpectrum {
        theta_bins: (0..n_theta_bins)
            .map(|b| PI * (b as f64 + 0.5) / n_theta_bins as f64)
            .collect(),
        density: vec![0.0; n_theta_bins],
        k_nodes: g.k_nodes.clone(),
        k_marginal: table
            .iter()
            .zip(&g.k_weights)
            .map(|(row, &w)| pairwise_sum(row) / w)
            .collect(),
    };
    for b in 0..n_theta_bins {
        let parts: Vec<f64> = table
            .iter()
            .map(|row| {
                let v: Vec<f64> = (0..row.len()).filter(|&iu| bin_of[iu] == b).map(|iu| row[iu]).collect();
                pairwise_sum(&v)
            })
            .collect();
        spectrum.density[b] = pairwise_sum(&parts) / spectrum.solid_angle(b);
    }
    Ok(spectrum)
}

/// Inverse of the CDF (3/4)(u − u³/3) + 1/2 on [−1, 1].
///
/// Newton from u = 2x − 1, falling back to bisection whenever a step
/// leaves the current bracket.
pub fn invert_sin2_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        return -1.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let cdf = |u: f64| 0.75 * (u - u * u * u / 3.0) + 0.5;
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    let mut u = 2.0 * x - 1.0;
    for _ in 0..200 {
        let f = cdf(u) - x;
        if f == 0.0 {
            return u;
        }
        if f < 0.0 {
            lo = u;
        } else {
            hi = u;
        }
        let d = 0.75 * (1.0 - u * u);
        let mut next = if d > 0.0 { u - f / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - u).abs() <= 1e-12 {
            return next;
        }
        u = next;
    }
    u
}

/// One emission direction: cosθ from the sin²θ law, φ uniform.
pub fn sample_emission_direction<R: Rng + ?Sized>(rng: &mut R) -> EmissionSample {
    let u = invert_sin2_cdf(rng.random::<f64>());
    let phi = 2.0 * PI * rng.random::<f64>();
    let theta = u.acos();
    let s = (1.0 - u * u).max(0.0).sqrt();
    let (sp, cp) = phi.sin_cos();
    EmissionSample {
        theta,
        phi,
        direction: Vec3::new(s * cp, s * sp, u),
    }
}
