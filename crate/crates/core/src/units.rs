//! Physical constants for the two supported unit systems.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitsMode {
    #[serde(alias = "SI")]
    Si,
    #[default]
    Natural,
}

/// Vacuum constants (c, ε, μ, ħ) in the selected unit system.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Constants {
    pub c: f64,
    pub eps0: f64,
    pub mu0: f64,
    pub hbar: f64,
}

impl Constants {
    pub fn for_mode(mode: UnitsMode) -> Self {
        match mode {
            UnitsMode::Natural => Constants {
                c: 1.0,
                eps0: 1.0,
                mu0: 1.0,
                hbar: 1.0,
            },
            // CODATA 2022
            UnitsMode::Si => Constants {
                c: 299_792_458.0,
                eps0: 8.854_187_818_8e-12,
                mu0: 1.256_637_061_27e-6,
                hbar: 1.054_571_817e-34,
            },
        }
    }
}

/// Elementary charge in SI (exact since 2019).
pub const ELEMENTARY_CHARGE_SI: f64 = 1.602_176_634e-19;
