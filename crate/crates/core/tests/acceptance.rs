//! Acceptance run: one line per criterion, nonzero exit if any fails.
//!
//! Reference values are computed here from closed forms or independent
//! solvers, never from the code under test.

use dipole_lab::conjugacy::{CanonicalMode, Oscillator};
use dipole_lab::fields::{resolving_grid, retarded_potential_oracle, FieldEvaluator, FieldOptions};
use dipole_lab::kspace::{self, ModeAmplitude};
use dipole_lab::observables::{self, angular_density, hamiltonian_exact, hamiltonian_standard, momentum_exact};
use dipole_lab::{identities, quantum};
use dipole_lab::{AmplitudeGrid, Constants, DipoleSpec, Envelope, GridParams, KGrid, KPoint, TimeQuadrature, UnitsMode, Vec3};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn pattern_grid() -> GridParams {
    GridParams {
        n_k: 96,
        n_theta: 48,
        n_phi: 32,
        k_min: 0.0,
        k_max: 20.0,
    }
}

// ⟨sin²θ⟩ over a bin, by solid angle: 1 − (u_hi³ − u_lo³)/(3(u_hi − u_lo)).
fn bin_mean_sin2(b: usize, bins: usize) -> f64 {
    let u_hi = (PI * b as f64 / bins as f64).cos();
    let u_lo = (PI * (b + 1) as f64 / bins as f64).cos();
    1.0 - (u_hi.powi(3) - u_lo.powi(3)) / (3.0 * (u_hi - u_lo))
}

/// Criteria 1 and 2 share one grid.
fn angular_law() -> (Outcome, Outcome) {
    let spec = DipoleSpec::default();
    let bins = 96;
    let t0 = Instant::now();
    let grid = KGrid::theta_binned(&pattern_grid(), bins, 1).unwrap();
    let amps = AmplitudeGrid::compute(&spec, &grid, 1.01 * spec.t_stop, &TimeQuadrature::default()).unwrap();
    let s = angular_density(&amps, bins).unwrap();
    let elapsed = t0.elapsed().as_secs_f64();

    let refs: Vec<f64> = (0..bins).map(|b| bin_mean_sin2(b, bins)).collect();
    let (num, den) = refs
        .iter()
        .zip(&s.density)
        .fold((0.0, 0.0), |(n, d), (r, x)| (n + r * x, d + r * r));
    let a = num / den;
    let sup = refs
        .iter()
        .zip(&s.density)
        .map(|(r, x)| (x - a * r).abs())
        .fold(0.0, f64::max)
        / a;
    let peak = s.density_at(PI / 2.0);
    // sin²θ itself exceeds 1e-3 beyond θ ≈ 1.8°, so the bound is applied to
    // the polar bins; the other bins under 5° are held to the fit above
    let polar = (s.density[0] / peak).max(s.density[bins - 1] / peak);
    let under_5deg = s
        .theta_bins
        .iter()
        .zip(&s.density)
        .filter(|(th, _)| **th < 5f64.to_radians())
        .map(|(_, d)| d / peak)
        .fold(0.0, f64::max);
    let c1 = outcome(
        sup < 0.01 && polar < 1e-3 && elapsed < 60.0,
        format!(
            "sup deviation {sup:.2e}, polar bin/peak {polar:.2e} (largest below 5deg {under_5deg:.2e}, sin^2 law gives {:.2e}), {elapsed:.1} s",
            bin_mean_sin2(2, bins)
        ),
    );
    let q = s.density_at(PI / 4.0) / peak;
    let c2 = outcome((q - 0.5).abs() <= 0.005, format!("density(pi/4)/density(pi/2) = {q:.5}"));
    (c1, c2)
}

fn zero_momentum() -> Outcome {
    let grid = KGrid::theta_binned(&pattern_grid(), 96, 1).unwrap();
    let ratio = |mu: f64| {
        let spec = DipoleSpec {
            mass_ratio: mu,
            ..DipoleSpec::default()
        };
        let amps = AmplitudeGrid::compute(&spec, &grid, 1.01 * spec.t_stop, &TimeQuadrature::default()).unwrap();
        momentum_exact(&amps).norm() * amps.constants.c / hamiltonian_exact(&amps)
    };
    // equal masses give a parity-symmetric source; unequal masses add a
    // small quadrupole term that does carry momentum
    let sym = ratio(1.0);
    let hyd = ratio(1.0 / 1836.0);
    outcome(
        sym < 1e-8,
        format!("|G|c/H = {sym:.2e} (mass ratio 1); {hyd:.2e} at mass ratio 1/1836, not gated"),
    )
}

fn isotropic_ratio() -> Outcome {
    let grid = KGrid::new(&pattern_grid()).unwrap();
    // |𝒜| depends on k only
    let amps = AmplitudeGrid::from_fn(&grid, 1.0, Constants::for_mode(UnitsMode::Natural), |kp| ModeAmplitude {
        avec: nalgebra::Vector3::new(C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.3, 0.1) / (1.0 + kp.k * kp.k)),
        ..ModeAmplitude::zero()
    });
    let r = hamiltonian_exact(&amps) / hamiltonian_standard(&amps);
    outcome((r - 2.0 / 3.0).abs() <= 1e-3, format!("H/H_standard = {r:.12}, expected 2/3"))
}

fn oracle_equivalence() -> Outcome {
    let spec = DipoleSpec {
        t_stop: 6.0 * PI,
        envelope: Envelope::RaisedCosine { ramp_fraction: 0.25 },
        ..DipoleSpec::default()
    };
    let grid = KGrid::new(&GridParams {
        n_k: 320,
        n_theta: 96,
        n_phi: 176,
        k_min: 0.0,
        k_max: 20.0,
    })
    .unwrap();
    let quad = TimeQuadrature::default();
    let period = 2.0 * PI / spec.omega0;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut worst_phi, mut worst_a, mut n) = (0.0f64, 0.0f64, 0);
    for &t in &[8.0, 11.0, 14.0, 17.0] {
        let amps = AmplitudeGrid::compute(&spec, &grid, t, &quad).unwrap();
        let ev = FieldEvaluator::new(&spec, &amps, FieldOptions::default());
        let mut taken = 0;
        while taken < 5 {
            let r = 4.0 + 2.8 * rng.random::<f64>();
            let u = (0.15 + 0.8 * rng.random::<f64>()) * if rng.random::<bool>() { 1.0 } else { -1.0 };
            let ph = 2.0 * PI * rng.random::<f64>();
            let s = (1.0 - u * u).sqrt();
            let p = Vec3::new(r * s * ph.cos(), r * s * ph.sin(), r * u);
            // skip points sitting on a zero crossing of either potential,
            // judged from the oracle alone over one period
            let (po, ao) = retarded_potential_oracle(&spec, &p, t).unwrap();
            let (mut pm, mut am) = (0.0f64, 0.0f64);
            for j in 0..8 {
                let (pj, aj) = retarded_potential_oracle(&spec, &p, t + period * j as f64 / 8.0).unwrap();
                pm = pm.max(pj.abs());
                am = am.max(aj.norm());
            }
            if po.abs() < 0.25 * pm || ao.norm() < 0.25 * am {
                continue;
            }
            let f = ev.sample(&p).unwrap();
            worst_phi = worst_phi.max((f.phi - po).abs() / po.abs());
            worst_a = worst_a.max((f.avec - ao).norm() / ao.norm());
            taken += 1;
            n += 1;
        }
    }
    outcome(
        worst_phi < 1e-3 && worst_a < 1e-3,
        format!("{n} points, worst rel err phi {worst_phi:.2e}, A {worst_a:.2e}"),
    )
}

fn field_consistency() -> Outcome {
    let spec = DipoleSpec::default();
    let pts = [
        Vec3::new(1.2, 0.4, 1.5),
        Vec3::new(-0.8, 1.1, -1.3),
        Vec3::new(1.9, -0.5, 0.6),
        Vec3::new(0.3, -1.4, 0.2),
        Vec3::new(-1.0, -1.0, 1.0),
        Vec3::new(0.0, 0.7, -2.1),
    ];
    let t = spec.t_stop + 1.5;
    let h = 1e-3;
    let opts = FieldOptions::default();
    let gp = resolving_grid(&spec, &pts, t + h, 20.0, &opts);
    let amps = AmplitudeGrid::compute(&spec, &KGrid::new(&gp).unwrap(), t, &TimeQuadrature::default()).unwrap();
    let ev = FieldEvaluator::new(&spec, &amps, opts);
    let (before, after) = (ev.at_time(t - h).unwrap(), ev.at_time(t + h).unwrap());
    let mut worst = 0.0f64;
    for p in &pts {
        let e = ev.electric_field(p).unwrap();
        let b = ev.magnetic_field(p).unwrap();
        let mut grad = Vec3::zeros();
        let mut jac = [[0.0; 3]; 3];
        for i in 0..3 {
            let mut d = Vec3::zeros();
            d[i] = h;
            grad[i] = (ev.scalar_potential(&(p + d)).unwrap() - ev.scalar_potential(&(p - d)).unwrap()) / (2.0 * h);
            let da = (ev.vector_potential(&(p + d)).unwrap() - ev.vector_potential(&(p - d)).unwrap()) / (2.0 * h);
            for j in 0..3 {
                jac[i][j] = da[j];
            }
        }
        let dadt = (after.vector_potential(p).unwrap() - before.vector_potential(p).unwrap()) / (2.0 * h);
        let e_fd = -grad - dadt;
        let b_fd = Vec3::new(jac[1][2] - jac[2][1], jac[2][0] - jac[0][2], jac[0][1] - jac[1][0]);
        worst = worst.max((e - e_fd).norm() / e_fd.norm()).max((b - b_fd).norm() / b_fd.norm());
    }
    outcome(worst < 1e-3, format!("{} points at t = t1 + 1.5, worst rel err {worst:.2e}", pts.len()))
}

fn separation_and_coulomb() -> Outcome {
    let spec = DipoleSpec::default();
    let quad = TimeQuadrature::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let k = 0.05 + 19.95 * rng.random::<f64>();
        let u = 2.0 * rng.random::<f64>() - 1.0;
        let ph = 2.0 * PI * rng.random::<f64>();
        let t = 1.5 * spec.t_stop * rng.random::<f64>();
        let kp = KPoint::direction(k, u, ph).unwrap();
        let s = kspace::separation_terms(&spec, &kp, t, &quad).unwrap();
        // the boundary term rebuilt here from the charge positions
        let kv = kp.kvec();
        let (zp, zm) = spec.charge_positions(t);
        let cis = |x: f64| C64::new(x.cos(), x.sin());
        let boundary = if t > 0.0 {
            cis(k * t - kv.dot(&spec.cm_at(t))) * (cis(kv.dot(&zp)) - cis(-kv.dot(&zm))) / (16.0 * PI.powi(3) * k * k)
        } else {
            C64::new(0.0, 0.0)
        };
        let res = (s.f - s.c_k_dot_a - boundary - s.c_k_dot_v).norm() / (s.f.norm() + boundary.norm());
        worst = worst.max(res);
    }
    let (rp, rm) = (2.0, 1.0);
    let coulomb = identities::coulomb_from_sinc(rp, rm, 200.0, 1);
    let exact = 1.0 / (4.0 * PI * rp) - 1.0 / (4.0 * PI * rm);
    let c_err = ((coulomb - exact) / exact).abs();
    let sinc = identities::sinc_integral(200.0, 200);
    // ∫_0^X sin x/x dx = π/2 − cos X/X − O(1/X²)
    let s_err = (sinc - (PI / 2.0 - 200f64.cos() / 200.0)).abs() / (PI / 2.0);
    outcome(
        worst < 1e-6 && c_err < 1e-4 && s_err < 1e-4,
        format!("separation {worst:.2e}, Coulomb {c_err:.2e}, sinc limit {s_err:.2e}"),
    )
}

fn conjugacy() -> Outcome {
    let spec = DipoleSpec::default();
    let quad = TimeQuadrature::default();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let (mut worst, mut coarse, mut fine) = (0.0f64, 0.0, 0.0);
    for _ in 0..50 {
        let k = 0.2 + 4.8 * rng.random::<f64>();
        let u = 2.0 * rng.random::<f64>() - 1.0;
        let t = spec.t_stop * (1.05 + 1.9 * rng.random::<f64>());
        let kp = KPoint::direction(k, u, 0.0).unwrap();
        let m = CanonicalMode::new(&spec, &kp, Oscillator::default(), &quad).unwrap();
        let r = m.residuals(t, 1e-4 / m.omega).unwrap();
        worst = worst.max(r.r1).max(r.r2);
        // raw central differences at ωh = 1e-2 and 5e-3
        let a = m.residuals(t, 1e-2 / m.omega).unwrap();
        let b = m.residuals(t, 5e-3 / m.omega).unwrap();
        coarse += a.raw_r1 + a.raw_r2;
        fine += b.raw_r1 + b.raw_r2;
    }
    let order = (coarse / fine).log2();
    outcome(
        worst < 1e-6 && (order - 2.0).abs() < 0.1,
        format!("worst residual {worst:.2e}, observed order {order:.3}"),
    )
}

fn ladder_algebra() -> Outcome {
    let mut ok = true;
    let mut float_worst = 0.0f64;
    for dim in [2, 4, 8, 16, 32] {
        let ops = quantum::build_ladder(dim, 1.3, 0.7).unwrap();
        let r = quantum::commutator_check(&ops);
        ok &= r.restricted_norm_error == 0.0 && r.self_commutators_zero && r.top_level_defect == dim as f64;
        // independent float check: [a,a†] off the edge
        let c = quantum::commutator(&ops.lower, &ops.raise);
        for i in 0..dim - 1 {
            for j in 0..dim - 1 {
                let want = if i == j { 1.0 } else { 0.0 };
                float_worst = float_worst.max((c[(i, j)] - want).abs());
            }
        }
        ok &= quantum::commutator(&ops.lower, &ops.lower).iter().all(|&x| x == 0.0);
        ok &= quantum::commutator(&ops.raise, &ops.raise).iter().all(|&x| x == 0.0);
    }
    outcome(ok, format!("exact below the edge for dims 2..32; f64 residual {float_worst:.1e}"))
}

fn spectra() -> Outcome {
    let mut worst = 0.0f64;
    let (omega, theta) = (1.7f64, 0.9f64);
    for dim in [4, 8, 16, 32] {
        let ops = quantum::build_ladder(dim, omega, theta).unwrap();
        let ev = quantum::reliable_spectrum(&quantum::mode_hamiltonian(&ops));
        for (n, e) in ev.iter().enumerate() {
            let want = omega * theta.sin().powi(2) * (n as f64 + 0.5);
            worst = worst.max((e - want).abs() / want);
        }
    }
    let zero = quantum::build_ladder(8, omega, 0.0).unwrap();
    let is_zero = quantum::mode_hamiltonian(&zero).iter().all(|&x| x == 0.0);
    outcome(worst < 1e-12 && is_zero, format!("worst rel err {worst:.1e}; theta=0 zero operator: {is_zero}"))
}

fn stimulated() -> Outcome {
    let (omega_s, theta_s) = (2.1f64, 1.1f64);
    let want = 2.0 * omega_s * theta_s.sin().powi(2);
    let mut worst = 0.0f64;
    for dim in [4, 16, 32] {
        let ev = quantum::reliable_spectrum(&quantum::stimulated_hamiltonian(omega_s, theta_s, dim).unwrap());
        for w in ev.windows(2) {
            worst = worst.max((w[1] - w[0] - want).abs() / want);
        }
    }
    outcome(worst < 1e-12, format!("spacing rel err {worst:.1e}"))
}

fn heisenberg() -> Outcome {
    let spec = DipoleSpec::default();
    let quad = TimeQuadrature::default();
    let mut worst = 0.0f64;
    for &(k, u, ph, t) in &[
        (0.9, 0.3, 0.4, 0.7 * spec.t_stop),
        (1.0, -0.6, 1.0, 1.2 * spec.t_stop),
        (2.5, 0.1, 2.0, 0.3 * spec.t_stop),
        (4.0, 0.95, 5.0, 2.0 * spec.t_stop),
    ] {
        let kp = KPoint::direction(k, u, ph).unwrap();
        let d = quantum::heisenberg_amplitude(&spec, &kp, t, 1.0).unwrap();
        // (16π³ω/V)^{1/2} times the electron-only z amplitude, natural units
        let scale = (16.0 * PI.powi(3) * k).sqrt();
        let a = kspace::vector_amplitude_electron(&spec, &kp, t, &quad).unwrap().z * scale;
        worst = worst.max((d - a).norm() / a.norm());
    }
    outcome(worst < 1e-8, format!("worst rel err {worst:.1e}"))
}

fn sampler() -> Outcome {
    let n = 1_000_000;
    let bins = 50;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut counts = vec![0u64; bins];
    let mut u2 = 0.0;
    for _ in 0..n {
        let s = observables::sample_emission_direction(&mut rng);
        let u = s.theta.cos();
        u2 += u * u;
        counts[(((u + 1.0) / 2.0 * bins as f64) as usize).min(bins - 1)] += 1;
    }
    let cdf = |u: f64| (3.0 * u - u.powi(3) + 2.0) / 4.0;
    let chi2: f64 = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let lo = -1.0 + 2.0 * i as f64 / bins as f64;
            let hi = -1.0 + 2.0 * (i + 1) as f64 / bins as f64;
            let e = n as f64 * (cdf(hi) - cdf(lo));
            (c as f64 - e).powi(2) / e
        })
        .sum();
    let p = ChiSquared::new((bins - 1) as f64).unwrap().sf(chi2);
    let mean = u2 / n as f64;
    // Var(u²) = E[u⁴] − E[u²]² = 3/35 − 1/25
    let sigma = ((3.0 / 35.0 - 1.0 / 25.0) / n as f64).sqrt();
    outcome(
        p > 0.01 && (mean - 0.2).abs() <= 3.0 * sigma,
        format!("chi2 = {chi2:.1}, p = {p:.3}, <cos^2> = {mean:.5} (3 sigma = {:.1e})", 3.0 * sigma),
    )
}

const SMALL_CONFIG: &str = r#"
seed = 3
[pattern]
theta_bins = 32
[sample]
count = 20000
[conjugacy]
n_points = 10
[verify]
separation_points = 10
vector_draws = 100
"#;

fn run_all(dir: &Path, threads: &str) -> Vec<(String, Vec<u8>)> {
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, SMALL_CONFIG).unwrap();
    let out = dir.join("out");
    for sub in ["pattern", "fields", "verify", "sample", "quantum", "conjugacy"] {
        let st = Command::new(env!("CARGO_BIN_EXE_dipole-lab"))
            .arg("--config")
            .arg(&cfg)
            .arg("--output-dir")
            .arg(&out)
            .arg(sub)
            .env("DIPOLE_LAB_THREADS", threads)
            .output()
            .unwrap();
        assert!(st.status.success(), "{sub}: {}", String::from_utf8_lossy(&st.stderr));
    }
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let fa = run_all(a.path(), "1");
    let fb = run_all(b.path(), "3");
    let same = fa == fb && fa.len() == 6;
    outcome(same, format!("{} files compared across 1 and 3 worker threads", fa.len()))
}

fn main() {
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let (c1, c2) = angular_law();
    results.push((1, "angular law", c1));
    results.push((2, "half-power angle", c2));
    results.push((3, "zero net momentum", zero_momentum()));
    results.push((4, "isotropic amplitude ratio", isotropic_ratio()));
    results.push((5, "retarded-potential oracle", oracle_equivalence()));
    results.push((6, "field consistency", field_consistency()));
    results.push((7, "separation and Coulomb recovery", separation_and_coulomb()));
    results.push((8, "canonical conjugacy", conjugacy()));
    results.push((9, "ladder algebra", ladder_algebra()));
    results.push((10, "mode spectra", spectra()));
    results.push((11, "stimulated emission spacing", stimulated()));
    results.push((12, "Heisenberg amplitude map", heisenberg()));
    results.push((13, "emission sampler", sampler()));
    results.push((14, "determinism", determinism()));
    let mut failed = 0;
    for (n, name, o) in &results {
        println!("criterion {n:>2} {name}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
