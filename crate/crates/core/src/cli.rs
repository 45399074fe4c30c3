//! Command-line front end.
//!
//! Exit status: 0 on success, 1 when a check fails or a computation errors,
//! 2 when the configuration is unusable.

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::conjugacy::{CanonicalMode, Residuals};
use crate::error::{Error, Result};
use crate::fields::{resolving_grid, FieldEvaluator};
use crate::identities::{self, IdentityReport};
use crate::kspace::{self, AmplitudeGrid, KGrid, KPoint};
use crate::observables::{self, angular_density, hamiltonian_exact, hamiltonian_standard};
use crate::quantum::{self, build_ladder_in};
use crate::trajectory::{DipoleSpec, Vec3};

#[derive(Debug, Parser)]
#[command(name = "dipole-lab", version, about = "k-space radiation toolkit for an oscillating dipole")]
pub struct Cli {
    /// TOML configuration file; built-in defaults when omitted.
    #[arg(short, long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Angular emission density as CSV.
    Pattern {
        #[arg(long)]
        theta_bins: Option<usize>,
        #[arg(long)]
        nodes_per_bin: Option<usize>,
        #[arg(long)]
        time_factor: Option<f64>,
    },
    /// Potentials and fields at the configured points as CSV.
    Fields,
    /// Runs the identity suite and writes a JSON report.
    Verify,
    /// Draws emission directions from the sin²θ law.
    Sample {
        #[arg(long)]
        count: Option<usize>,
    },
    /// Ladder-operator spectra and commutator reports.
    Quantum,
    /// Hamilton-equation residual sweep.
    Conjugacy {
        #[arg(long)]
        n_points: Option<usize>,
    },
}

/// What a subcommand reports back.
#[derive(Debug)]
pub struct Outcome {
    pub passed: bool,
    pub summary: String,
    pub files: Vec<PathBuf>,
}

pub fn exit_code(r: &Result<Outcome>) -> i32 {
    match r {
        Ok(o) if o.passed => 0,
        Ok(_) => 1,
        Err(e) => match e {
            Error::Config(_)
            | Error::InvalidSpec(_)
            | Error::InvalidGrid(_)
            | Error::AliasingRisk { .. }
            | Error::UnsupportedConfig(_)
            | Error::SuperluminalSpec { .. }
            | Error::DimensionTooSmall { .. }
            | Error::PreEmissionTime { .. } => 2,
            _ => 1,
        },
    }
}

/// Loads the config and applies command-line overrides.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(d) = &cli.output_dir {
        cfg.output_dir = d.clone();
    }
    match &cli.command {
        Command::Pattern {
            theta_bins,
            nodes_per_bin,
            time_factor,
        } => {
            if let Some(b) = theta_bins {
                cfg.pattern.theta_bins = *b;
            }
            if let Some(n) = nodes_per_bin {
                cfg.pattern.nodes_per_bin = *n;
            }
            if let Some(f) = time_factor {
                cfg.pattern.time_factor = *f;
            }
        }
        Command::Sample { count: Some(c) } => cfg.sample.count = *c,
        Command::Conjugacy { n_points: Some(n) } => cfg.conjugacy.n_points = *n,
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    let cfg = resolve_config(cli)?;
    fs::create_dir_all(&cfg.output_dir)?;
    match cli.command {
        Command::Pattern { .. } => run_pattern(&cfg),
        Command::Fields => run_fields(&cfg),
        Command::Verify => run_verify(&cfg),
        Command::Sample { .. } => run_sample(&cfg),
        Command::Quantum => run_quantum(&cfg),
        Command::Conjugacy { .. } => run_conjugacy(&cfg),
    }
}

/// Caps the global rayon pool from DIPOLE_LAB_THREADS, if set.
pub fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("DIPOLE_LAB_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("DIPOLE_LAB_THREADS must be a positive integer, got {v:?}")))?;
        if n == 0 {
            return Err(Error::Config("DIPOLE_LAB_THREADS must be at least 1".into()));
        }
        // a second call (tests) finds the pool already built; that is fine
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_file(dir: &Path, name: &str, body: &str) -> Result<PathBuf> {
    let p = dir.join(name);
    fs::write(&p, body)?;
    Ok(p)
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn run_pattern(cfg: &RunConfig) -> Result<Outcome> {
    let spec = &cfg.dipole;
    let p = &cfg.pattern;
    let grid = KGrid::theta_binned(&cfg.grid, p.theta_bins, p.nodes_per_bin)?;
    let t = p.time_factor * spec.t_stop;
    let amps = AmplitudeGrid::compute(spec, &grid, t, &cfg.time_quadrature)?;
    let s = angular_density(&amps, p.theta_bins)?;
    // least-squares amplitude of A·sin²θ over the bin centres
    let (mut num_, mut den) = (0.0, 0.0);
    for (th, d) in s.theta_bins.iter().zip(&s.density) {
        let x = th.sin().powi(2);
        num_ += x * d;
        den += x * x;
    }
    let a = if den > 0.0 { num_ / den } else { 0.0 };
    let mut csv = String::from("theta,density,sin2_reference\n");
    for (th, d) in s.theta_bins.iter().zip(&s.density) {
        let _ = writeln!(csv, "{},{},{}", num(*th), num(*d), num(a * th.sin().powi(2)));
    }
    let mut files = vec![write_file(&cfg.output_dir, "pattern.csv", &csv)?];
    if p.dump_amplitudes {
        files.push(write_file(&cfg.output_dir, "amplitudes.csv", &amps.to_csv())?);
    }
    let h = hamiltonian_exact(&amps);
    let peak = s.density_at(PI / 2.0);
    Ok(Outcome {
        passed: true,
        summary: format!(
            "pattern: {} bins, H = {:.6e}, H_standard/H = {:.6}, density(pi/4)/density(pi/2) = {:.6}",
            p.theta_bins,
            h,
            hamiltonian_standard(&amps) / h,
            s.density_at(PI / 4.0) / peak
        ),
        files,
    })
}

fn run_fields(cfg: &RunConfig) -> Result<Outcome> {
    let spec = &cfg.dipole;
    let grid = KGrid::new(&cfg.grid)?;
    let mut csv = String::from("x,y,z,t,phi,Ax,Ay,Az,Ex,Ey,Ez,Bx,By,Bz\n");
    for &t in &cfg.fields.times {
        let amps = AmplitudeGrid::compute(spec, &grid, t, &cfg.time_quadrature)?;
        let ev = FieldEvaluator::new(spec, &amps, cfg.fields.options);
        for p in &cfg.fields.points {
            let f = ev.sample(&Vec3::from(*p))?;
            let vals = [
                f.r.x, f.r.y, f.r.z, f.t, f.phi, f.avec.x, f.avec.y, f.avec.z, f.e.x, f.e.y, f.e.z, f.b.x, f.b.y, f.b.z,
            ];
            let row: Vec<String> = vals.iter().map(|&v| num(v)).collect();
            csv.push_str(&row.join(","));
            csv.push('\n');
        }
    }
    let f = write_file(&cfg.output_dir, "fields.csv", &csv)?;
    Ok(Outcome {
        passed: true,
        summary: format!(
            "fields: {} points x {} times",
            cfg.fields.points.len(),
            cfg.fields.times.len()
        ),
        files: vec![f],
    })
}

fn run_sample(cfg: &RunConfig) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut csv = String::with_capacity(cfg.sample.count * 48 + 16);
    csv.push_str("theta,phi\n");
    let mut u2 = 0.0;
    for _ in 0..cfg.sample.count {
        let s = observables::sample_emission_direction(&mut rng);
        u2 += s.direction.z * s.direction.z;
        let _ = writeln!(csv, "{},{}", num(s.theta), num(s.phi));
    }
    let f = write_file(&cfg.output_dir, "samples.csv", &csv)?;
    Ok(Outcome {
        passed: true,
        summary: format!(
            "sample: {} draws, <cos^2 theta> = {:.6}",
            cfg.sample.count,
            u2 / cfg.sample.count.max(1) as f64
        ),
        files: vec![f],
    })
}

#[derive(Serialize)]
struct QuantumEntry {
    dim: usize,
    omega: f64,
    theta: f64,
    eigenvalues: Vec<f64>,
    printed_form_eigenvalues: Vec<f64>,
    restricted_commutator_error: f64,
    top_level_defect: f64,
    float_commutator_error: f64,
    self_commutators_zero: bool,
}

#[derive(Serialize)]
struct QuantumReport {
    modes: Vec<QuantumEntry>,
    stimulated: StimulatedEntry,
}

#[derive(Serialize)]
struct StimulatedEntry {
    dim: usize,
    omega_s: f64,
    theta_s: f64,
    eigenvalues: Vec<f64>,
    spacing: f64,
}

fn run_quantum(cfg: &RunConfig) -> Result<Outcome> {
    let q = &cfg.quantum;
    let consts = cfg.dipole.constants();
    let mut modes = Vec::new();
    let mut passed = true;
    for &dim in &q.dims {
        let ops = build_ladder_in(dim, q.omega, q.theta, consts)?;
        let comm = quantum::commutator_check(&ops);
        passed &= comm.restricted_norm_error == 0.0 && comm.self_commutators_zero;
        modes.push(QuantumEntry {
            dim,
            omega: q.omega,
            theta: q.theta,
            eigenvalues: quantum::reliable_spectrum(&quantum::mode_hamiltonian(&ops)),
            printed_form_eigenvalues: quantum::reliable_spectrum(&quantum::mode_hamiltonian_as_printed(&ops)),
            restricted_commutator_error: comm.restricted_norm_error,
            top_level_defect: comm.top_level_defect,
            float_commutator_error: comm.float_restricted_error,
            self_commutators_zero: comm.self_commutators_zero,
        });
    }
    let sdim = q.dims.iter().copied().max().unwrap_or(8);
    let hs = quantum::stimulated_hamiltonian(q.omega_s, q.theta_s, sdim)?;
    let report = QuantumReport {
        modes,
        stimulated: StimulatedEntry {
            dim: sdim,
            omega_s: q.omega_s,
            theta_s: q.theta_s,
            eigenvalues: quantum::reliable_spectrum(&hs),
            spacing: 2.0 * q.omega_s * q.theta_s.sin().powi(2),
        },
    };
    let f = write_file(&cfg.output_dir, "quantum.json", &to_json(&report)?)?;
    Ok(Outcome {
        passed,
        summary: format!(
            "quantum: {} truncations, commutators {}",
            q.dims.len(),
            if passed { "exact" } else { "FAILED" }
        ),
        files: vec![f],
    })
}

#[derive(Serialize)]
struct ConjugacyEntry {
    k: f64,
    cos_theta: f64,
    t: f64,
    r1: f64,
    r2: f64,
}

#[derive(Serialize)]
struct ConjugacyReport {
    points: Vec<ConjugacyEntry>,
    tolerance: f64,
    pass: bool,
}

/// Random post-emission sweep points (k, cosθ, t) with t in (t₁, 3t₁).
pub fn conjugacy_sweep(spec: &DipoleSpec, n: usize, k_range: [f64; 2], seed: u64) -> Vec<(f64, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let k = k_range[0] + (k_range[1] - k_range[0]) * rng.random::<f64>();
            let u = 2.0 * rng.random::<f64>() - 1.0;
            let t = spec.t_stop * (1.05 + 1.9 * rng.random::<f64>());
            (k, u, t)
        })
        .collect()
}

fn conjugacy_residuals(cfg: &RunConfig) -> Result<Vec<(f64, f64, f64, Residuals)>> {
    let c = &cfg.conjugacy;
    conjugacy_sweep(&cfg.dipole, c.n_points, c.k_range, cfg.seed)
        .into_iter()
        .map(|(k, u, t)| {
            let kp = KPoint::direction(k, u, 0.0)?;
            let m = CanonicalMode::new(&cfg.dipole, &kp, c.oscillator, &cfg.time_quadrature)?;
            Ok((k, u, t, m.residuals(t, c.step / m.omega)?))
        })
        .collect()
}

fn run_conjugacy(cfg: &RunConfig) -> Result<Outcome> {
    let tol = cfg.tolerance("hamilton", 1e-6);
    let rows = conjugacy_residuals(cfg)?;
    let points: Vec<ConjugacyEntry> = rows
        .iter()
        .map(|&(k, cos_theta, t, r)| ConjugacyEntry {
            k,
            cos_theta,
            t,
            r1: r.r1,
            r2: r.r2,
        })
        .collect();
    let worst = points.iter().map(|p| p.r1.max(p.r2)).fold(0.0, f64::max);
    let pass = worst < tol;
    let f = write_file(
        &cfg.output_dir,
        "conjugacy.json",
        &to_json(&ConjugacyReport { points, tolerance: tol, pass })?,
    )?;
    Ok(Outcome {
        passed: pass,
        summary: format!("conjugacy: worst residual {worst:.3e} (tolerance {tol:e})"),
        files: vec![f],
    })
}

fn report(name: &str, lhs: Vec<f64>, rhs: Vec<f64>, abs_err: f64, rel_err: f64, tolerance: f64) -> IdentityReport {
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

/// Random points for the separation sweep: (k, cosθ, φ, t) with t spanning
/// the emission window and beyond.
pub fn separation_sweep(spec: &DipoleSpec, n: usize, k_max: f64, seed: u64) -> Vec<(f64, f64, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5e9a_7a71);
    (0..n)
        .map(|_| {
            let k = 0.05 + (k_max - 0.05) * rng.random::<f64>();
            let u = 2.0 * rng.random::<f64>() - 1.0;
            let phi = 2.0 * PI * rng.random::<f64>();
            let t = 1.5 * spec.t_stop * rng.random::<f64>();
            (k, u, phi, t)
        })
        .collect()
}

/// The full identity suite used by `verify`.
pub fn verify_suite(cfg: &RunConfig) -> Result<Vec<IdentityReport>> {
    let spec = &cfg.dipole;
    let v = &cfg.verify;
    let quad = &cfg.time_quadrature;
    let mut out = vec![
        identities::verify_odd_angular_integral(cfg.grid.k_max, 3.0, 1.7),
        identities::verify_sinc_limit(200.0),
        identities::verify_coulomb_recovery(v.coulomb[0], v.coulomb[1], v.coulomb_k_max),
        identities::verify_vector_identities(v.vector_draws, cfg.seed),
    ];

    // scalar-amplitude separation
    let mut worst = 0.0f64;
    for (k, u, phi, t) in separation_sweep(spec, v.separation_points, cfg.grid.k_max, cfg.seed) {
        let kp = KPoint::direction(k, u, phi)?;
        worst = worst.max(kspace::separation_terms(spec, &kp, t, quad)?.relative());
    }
    out.push(report(
        "separation",
        vec![worst],
        vec![0.0],
        worst,
        worst,
        cfg.tolerance("separation", 1e-6),
    ));

    // E and B against finite differences, after the pulse has left the source
    if spec.is_stationary() && !v.field_points.is_empty() {
        let pts: Vec<Vec3> = v.field_points.iter().map(|p| Vec3::from(*p)).collect();
        let r_max = pts.iter().map(|p| (p - spec.cm_position()).norm()).fold(0.0, f64::max);
        let t = spec.t_stop + 0.5 * r_max / spec.constants().c;
        let opts = cfg.fields.options;
        let gp = resolving_grid(spec, &pts, t + v.fd_steps.time, cfg.grid.k_max, &opts);
        let amps = AmplitudeGrid::compute(spec, &KGrid::new(&gp)?, t, quad)?;
        let ev = FieldEvaluator::new(spec, &amps, opts);
        let mut rep = identities::verify_field_consistency(&ev, &pts, v.fd_steps)?;
        rep.tolerance = cfg.tolerance("field_consistency", rep.tolerance);
        rep.pass = rep.rel_err <= rep.tolerance;
        out.push(rep);
    }

    // small-dipole and transverse forms agree on equatorial modes
    {
        let small = DipoleSpec {
            amp_minus: 1e-3 / cfg.grid.k_max,
            ..spec.clone()
        };
        // one polar node only resolves points very close to the source
        let r = Vec3::new(8e-4, 0.0, 0.0);
        let t = 3.0;
        let gp = resolving_grid(&small, &[r], t, cfg.grid.k_max, &cfg.fields.options);
        let eq = KGrid::with_polar(&gp, vec![0.0], vec![2.0])?;
        let amps = AmplitudeGrid::compute(&small, &eq, t, quad)?;
        let ev = FieldEvaluator::new(&small, &amps, cfg.fields.options);
        let e63 = ev.sums(&r).map(|s| Vec3::from(s.e))?;
        let (e30, _) = ev.small_dipole_fields(&r)?;
        let err = (e63 - e30).norm();
        let rel = if e63.norm() > 0.0 { err / e63.norm() } else { err };
        out.push(report(
            "equatorial_small_dipole",
            e63.iter().copied().collect(),
            e30.iter().copied().collect(),
            err,
            rel,
            cfg.tolerance("equatorial_small_dipole", 1e-3),
        ));
    }

    // Hamilton equations
    let rows = conjugacy_residuals(cfg)?;
    let worst = rows.iter().map(|r| r.3.r1.max(r.3.r2)).fold(0.0, f64::max);
    out.push(report(
        "hamilton_equations",
        vec![worst],
        vec![0.0],
        worst,
        worst,
        cfg.tolerance("hamilton", 1e-6),
    ));

    // ladder algebra and spectra
    let consts = spec.constants();
    let mut comm_err = 0.0f64;
    let mut spec_err = 0.0f64;
    for &dim in &cfg.quantum.dims {
        let ops = build_ladder_in(dim, cfg.quantum.omega, cfg.quantum.theta, consts)?;
        let c = quantum::commutator_check(&ops);
        comm_err = comm_err.max(c.restricted_norm_error);
        if !c.self_commutators_zero {
            comm_err = f64::INFINITY;
        }
        let scale = ops.hbar * ops.omega * ops.sin2_theta();
        for (n, e) in quantum::reliable_spectrum(&quantum::mode_hamiltonian(&ops)).iter().enumerate() {
            let want = scale * (n as f64 + 0.5);
            let d = if want == 0.0 { e.abs() } else { (e - want).abs() / want.abs() };
            spec_err = spec_err.max(d);
        }
    }
    out.push(report("ladder_commutators", vec![comm_err], vec![0.0], comm_err, comm_err, 0.0));
    out.push(report(
        "mode_spectrum",
        vec![spec_err],
        vec![0.0],
        spec_err,
        spec_err,
        cfg.tolerance("spectrum", 1e-12),
    ));
    let sdim = cfg.quantum.dims.iter().copied().max().unwrap_or(8);
    let hs = quantum::stimulated_hamiltonian(cfg.quantum.omega_s, cfg.quantum.theta_s, sdim)?;
    // the stimulated form is built in natural units
    let want = 2.0 * cfg.quantum.omega_s * cfg.quantum.theta_s.sin().powi(2);
    let ev = quantum::reliable_spectrum(&hs);
    let spacing_err = ev
        .windows(2)
        .map(|w| if want == 0.0 { (w[1] - w[0]).abs() } else { (w[1] - w[0] - want).abs() / want })
        .fold(0.0, f64::max);
    out.push(report(
        "stimulated_spacing",
        vec![spacing_err],
        vec![0.0],
        spacing_err,
        spacing_err,
        cfg.tolerance("spectrum", 1e-12),
    ));

    // Heisenberg drive against the electron-only vector amplitude
    let mut drive_err = 0.0f64;
    for &(k, u) in &[(0.9, 0.3), (1.0, -0.6), (2.5, 0.1)] {
        let kp = KPoint::direction(k, u, 0.4)?;
        let t = 0.7 * spec.t_stop;
        let d = quantum::heisenberg_amplitude(spec, &kp, t, cfg.quantum.volume)?;
        let a = kspace::vector_amplitude_electron(spec, &kp, t, quad)?.z
            * quantum::drive_scale(spec, &kp, cfg.quantum.volume);
        let e = (d - a).norm() / a.norm().max(f64::MIN_POSITIVE);
        drive_err = drive_err.max(e);
    }
    out.push(report(
        "heisenberg_map",
        vec![drive_err],
        vec![0.0],
        drive_err,
        drive_err,
        cfg.tolerance("heisenberg", 1e-8),
    ));
    Ok(out)
}

fn run_verify(cfg: &RunConfig) -> Result<Outcome> {
    let reports = verify_suite(cfg)?;
    let passed = reports.iter().all(|r| r.pass);
    let f = write_file(&cfg.output_dir, "verify.json", &to_json(&reports)?)?;
    let failed: Vec<&str> = reports.iter().filter(|r| !r.pass).map(|r| r.name.as_str()).collect();
    Ok(Outcome {
        passed,
        summary: if passed {
            format!("verify: all {} checks passed", reports.len())
        } else {
            format!("verify: {} of {} failed: {}", failed.len(), reports.len(), failed.join(", "))
        },
        files: vec![f],
    })
}
