use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported number of tangential variables.
pub const MAX_K: usize = 3;

/// The weight exponent `a` and the tangential dimension `k` of
/// `L_a = d_rr + (a/r) d_r + Lap_y` on `R^+ x R^k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeinsteinParams {
    pub a: f64,
    pub k: usize,
}

impl WeinsteinParams {
    pub fn new(a: f64, k: usize) -> Result<Self> {
        let p = Self { a, k };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.a >= 0.0) {
            return Err(Error::InvalidParams(format!("a must be finite and >= 0, got {}", self.a)));
        }
        if self.k == 0 || self.k > MAX_K {
            return Err(Error::InvalidParams(format!("k must be in 1..={MAX_K}, got {}", self.k)));
        }
        Ok(())
    }

    /// Effective dimension `a + 1 + k`.
    pub fn dim_eff(&self) -> f64 {
        self.a + 1.0 + self.k as f64
    }

    /// Number of coordinates `(r, y_1..y_k)`.
    pub fn dim(&self) -> usize {
        self.k + 1
    }
}
