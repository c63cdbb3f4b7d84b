//! Physical constants used throughout the crate. SI units.

use serde::{Deserialize, Serialize};

/// Physical constants entering every CSL formula.
///
/// The CODATA values live only in [`PhysicalConstants::SI`]; everything else
/// reads them from an instance of this struct.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// Reduced Planck constant, J·s.
    pub hbar: f64,
    /// Boltzmann constant, J/K.
    pub k_b: f64,
    /// Reference nucleon mass, kg.
    pub m0: f64,
    /// Julian year, s.
    pub seconds_per_year: f64,
}

impl PhysicalConstants {
    pub const SI: PhysicalConstants = PhysicalConstants {
        hbar: 1.054_571_817e-34,
        k_b: 1.380_649e-23,
        m0: 1.672_62e-27,
        seconds_per_year: 3.155_76e7,
    };

    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("hbar", self.hbar),
            ("k_b", self.k_b),
            ("m0", self.m0),
            ("seconds_per_year", self.seconds_per_year),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("constant `{name}` must be finite and positive, got {v}"));
            }
        }
        Ok(())
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::SI
    }
}
