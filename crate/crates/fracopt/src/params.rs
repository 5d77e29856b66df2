//! Scalar parameters shared by every equation: the fractional order and its
//! derived constants, the regularization weight, and the control box.

use crate::{Error, Result};
use statrs::function::gamma::gamma;

/// Parameter set for a fractional order `s ∈ (0, 1)` together with the
/// control-problem constants.
///
/// The cylinder extension carries the Muckenhoupt weight `y^α` with
/// `α = 1 - 2s ∈ (-1, 1)`, and the fractional operator is recovered from the
/// extension through the conormal derivative scaled by
/// `d_s = 2^α Γ(1-s) / Γ(s)`. The constant `c_s = 2^{1-s} / Γ(s)` normalizes
/// the Bessel profile of each spectral mode to one at `y = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FracParams {
    /// Fractional order `s`.
    pub s: f64,
    /// Weight exponent `α = 1 - 2s`.
    pub alpha: f64,
    /// Conormal normalization `d_s = 2^α Γ(1-s)/Γ(s)`; equals 1 at `s = 1/2`.
    pub d_s: f64,
    /// Mode profile normalization `c_s = 2^{1-s}/Γ(s)`.
    pub c_s: f64,
    /// Regularization weight `ϑ > 0` of the control cost.
    pub vartheta: f64,
    /// Lower control bound.
    pub a_bound: f64,
    /// Upper control bound; `a_bound < b_bound`.
    pub b_bound: f64,
}

impl FracParams {
    /// Parameters with the benchmark control setup `ϑ = 1`, box `[-1/2, 1/2]`.
    pub fn new(s: f64) -> Result<Self> {
        Self::with_control(s, 1.0, -0.5, 0.5)
    }

    /// Fully specified parameter set; rejects `s ∉ (0,1)`, `ϑ ≤ 0`, `a ≥ b`.
    pub fn with_control(s: f64, vartheta: f64, a_bound: f64, b_bound: f64) -> Result<Self> {
        if !s.is_finite() || s <= 0.0 || s >= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "fractional order s must lie strictly inside (0, 1), got {s}"
            )));
        }
        if !(vartheta > 0.0) || !vartheta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "regularization weight must be positive, got {vartheta}"
            )));
        }
        if !(a_bound < b_bound) {
            return Err(Error::InvalidParameter(format!(
                "control bounds must satisfy a < b, got [{a_bound}, {b_bound}]"
            )));
        }
        let alpha = 1.0 - 2.0 * s;
        // Exactly 1 at s = 1/2: 2^0 Γ(1/2)/Γ(1/2).
        let d_s = if s == 0.5 {
            1.0
        } else {
            alpha.exp2() * gamma(1.0 - s) / gamma(s)
        };
        let c_s = (1.0 - s).exp2() / gamma(s);
        Ok(FracParams {
            s,
            alpha,
            d_s,
            c_s,
            vartheta,
            a_bound,
            b_bound,
        })
    }
}
