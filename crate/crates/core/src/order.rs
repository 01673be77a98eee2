use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

/// Which factor multiplies the Caputo derivative: `i` or `i^α`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// `i ∂^α y + 𝓛y = f`
    #[default]
    StandardI,
    /// `i^α ∂^α y + 𝓛y = f`
    PowerIAlpha,
}

/// Fractional order together with the phase convention.
///
/// Per mode the equation reads `∂^α c = e^{iφ}(λ c + f)` with `φ = −π/2` for
/// [`Phase::StandardI`] and `φ = −πα/2` for [`Phase::PowerIAlpha`]; every
/// kernel argument is `e^{iφ} λ t^α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FractionalOrder {
    alpha: f64,
    phase: Phase,
}

impl FractionalOrder {
    /// Order for the equation itself: `0 < α < 1`.
    pub fn new(alpha: f64, phase: Phase) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::invalid("alpha", format!("{alpha} not in (0, 1)")));
        }
        Ok(Self { alpha, phase })
    }

    pub fn standard(alpha: f64) -> Result<Self> {
        Self::new(alpha, Phase::StandardI)
    }

    /// Kernels alone also accept the classical limit `α = 1`.
    pub fn for_kernel(alpha: f64, phase: Phase) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::invalid("alpha", format!("{alpha} not in (0, 1]")));
        }
        Ok(Self { alpha, phase })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// The angle `φ` of the kernel argument.
    pub fn phase_angle(&self) -> f64 {
        match self.phase {
            Phase::StandardI => -FRAC_PI_2,
            Phase::PowerIAlpha => -FRAC_PI_2 * self.alpha,
        }
    }

    /// `e^{iφ}`: the inverse of the factor in front of `∂^α`.
    pub fn rotation(&self) -> C64 {
        match self.phase {
            Phase::StandardI => C64::new(0.0, -1.0),
            Phase::PowerIAlpha => C64::from_polar(1.0, self.phase_angle()),
        }
    }

    /// The factor in front of `∂^α`: `i` or `i^α`.
    pub fn derivative_factor(&self) -> C64 {
        self.rotation().conj()
    }
}
