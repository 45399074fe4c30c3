//! Run configuration, read from TOML.
//!
//! ```toml
//! seed = 0
//! output_dir = "out"
//!
//! [dipole]
//! amp_minus = 0.01
//! envelope = { kind = "raised_cosine", ramp_fraction = 0.2 }
//!
//! [grid]
//! n_k = 96
//! n_theta = 48
//! n_phi = 32
//! ```

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use crate::conjugacy::Oscillator;
use crate::error::{Error, Result};
use crate::fields::FieldOptions;
use crate::identities::FdSteps;
use crate::kspace::{GridParams, TimeQuadrature};
use crate::trajectory::DipoleSpec;
use crate::units::UnitsMode;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Overrides `dipole.units_mode` when set.
    pub units_mode: Option<UnitsMode>,
    pub dipole: DipoleSpec,
    pub grid: GridParams,
    pub time_quadrature: TimeQuadrature,
    pub tolerances: BTreeMap<String, f64>,
    pub pattern: PatternConfig,
    pub fields: FieldsConfig,
    pub sample: SampleConfig,
    pub quantum: QuantumConfig,
    pub conjugacy: ConjugacyConfig,
    pub verify: VerifyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            output_dir: PathBuf::from("out"),
            units_mode: None,
            dipole: DipoleSpec::default(),
            grid: GridParams::default(),
            time_quadrature: TimeQuadrature::default(),
            tolerances: BTreeMap::new(),
            pattern: PatternConfig::default(),
            fields: FieldsConfig::default(),
            sample: SampleConfig::default(),
            quantum: QuantumConfig::default(),
            conjugacy: ConjugacyConfig::default(),
            verify: VerifyConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatternConfig {
    pub theta_bins: usize,
    /// Gauss nodes in cosθ per bin.
    pub nodes_per_bin: usize,
    /// Evaluation time as a multiple of t_stop.
    pub time_factor: f64,
    /// Also write every mode amplitude to amplitudes.csv.
    pub dump_amplitudes: bool,
}

impl Default for PatternConfig {
    fn default() -> Self {
        PatternConfig {
            theta_bins: 96,
            nodes_per_bin: 1,
            time_factor: 1.01,
            dump_amplitudes: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldsConfig {
    pub points: Vec<[f64; 3]>,
    pub times: Vec<f64>,
    pub options: FieldOptions,
}

impl Default for FieldsConfig {
    fn default() -> Self {
        FieldsConfig {
            points: vec![[0.3, 0.0, 0.2], [0.0, 0.25, -0.3], [0.2, 0.2, 0.0]],
            times: vec![3.0, 5.0],
            options: FieldOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    pub count: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig { count: 100_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantumConfig {
    pub dims: Vec<usize>,
    pub omega: f64,
    pub theta: f64,
    pub omega_s: f64,
    pub theta_s: f64,
    /// Quantization volume.
    pub volume: f64,
}

impl Default for QuantumConfig {
    fn default() -> Self {
        QuantumConfig {
            dims: vec![2, 4, 8, 16, 32],
            omega: 1.0,
            theta: PI / 2.0,
            omega_s: 1.0,
            theta_s: PI / 2.0,
            volume: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConjugacyConfig {
    pub n_points: usize,
    pub k_range: [f64; 2],
    /// Step as a multiple of 1/ω.
    pub step: f64,
    pub oscillator: Oscillator,
}

impl Default for ConjugacyConfig {
    fn default() -> Self {
        ConjugacyConfig {
            n_points: 50,
            k_range: [0.2, 5.0],
            step: 1e-4,
            oscillator: Oscillator::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub separation_points: usize,
    pub vector_draws: usize,
    pub coulomb: [f64; 2],
    pub coulomb_k_max: f64,
    /// Field-consistency points; evaluated once the pulse has passed the
    /// origin, with a grid sized to resolve them.
    pub field_points: Vec<[f64; 3]>,
    pub fd_steps: FdSteps,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            separation_points: 100,
            vector_draws: 1000,
            coulomb: [2.0, 1.0],
            coulomb_k_max: 200.0,
            field_points: vec![[1.2, 0.4, 1.5], [-0.8, 1.1, -1.3], [1.9, -0.5, 0.6]],
            fd_steps: FdSteps::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.normalize();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    fn normalize(&mut self) {
        if let Some(m) = self.units_mode {
            self.dipole.units_mode = m;
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in &self.tolerances {
            if !(*v > 0.0) {
                return Err(Error::Config(format!("tolerance {name} must be positive, got {v}")));
            }
        }
        self.dipole.validate()?;
        if self.pattern.theta_bins < 8 || self.pattern.nodes_per_bin == 0 {
            return Err(Error::Config("pattern needs theta_bins >= 8 and nodes_per_bin >= 1".into()));
        }
        if self.quantum.dims.iter().any(|&d| d < 2) {
            return Err(Error::Config("quantum dims must be >= 2".into()));
        }
        let [k0, k1] = self.conjugacy.k_range;
        if !(k0 > 0.0 && k1 > k0) || !(self.conjugacy.step > 0.0) {
            return Err(Error::Config("conjugacy needs 0 < k_range[0] < k_range[1] and step > 0".into()));
        }
        Ok(())
    }

    /// A tolerance by name, falling back to `default`.
    pub fn tolerance(&self, name: &str, default: f64) -> f64 {
        self.tolerances.get(name).copied().unwrap_or(default)
    }
}
