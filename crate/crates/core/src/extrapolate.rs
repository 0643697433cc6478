//! Polynomial extrapolation of step-size sequences to zero step.
//!
//! Richardson extrapolation on an arbitrary (not necessarily geometric) set of
//! abscissae is Neville's scheme evaluated at `x = 0`. Callers choose the
//! abscissa: `h` when the error series has all powers, `h²` for even series.

use serde::Serialize;

use crate::error::{Error, Result};

/// Result of extrapolating one scalar sequence.
#[derive(Debug, Clone, Serialize)]
pub struct Extrapolation {
    /// Highest-order estimate.
    pub value: f64,
    /// Estimate one order lower (from all but the first sample).
    pub previous: f64,
}

impl Extrapolation {
    /// `|value - previous|`.
    pub fn residual(&self) -> f64 {
        (self.value - self.previous).abs()
    }

    /// Relative disagreement between the last two levels. Values below
    /// `floor` in magnitude are compared absolutely against `floor`.
    pub fn relative_residual(&self, floor: f64) -> f64 {
        let scale = self.value.abs().max(self.previous.abs()).max(floor);
        self.residual() / scale
    }
}

/// Neville extrapolation of `(x_i, y_i)` to `x = 0`.
///
/// `x` must hold distinct values. With a single sample both estimates equal it.
pub fn extrapolate_to_zero(x: &[f64], y: &[f64]) -> Result<Extrapolation> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "extrapolation needs matching non-empty samples ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    let n = x.len();
    if n == 1 {
        return Ok(Extrapolation {
            value: y[0],
            previous: y[0],
        });
    }
    let full = neville_at_zero(x, y)?;
    let previous = neville_at_zero(&x[1..], &y[1..])?;
    Ok(Extrapolation {
        value: full,
        previous,
    })
}

fn neville_at_zero(x: &[f64], y: &[f64]) -> Result<f64> {
    let mut p = y.to_vec();
    let n = x.len();
    for level in 1..n {
        for i in 0..n - level {
            let (xi, xj) = (x[i], x[i + level]);
            let denom = xi - xj;
            if denom == 0.0 {
                return Err(Error::InvalidArgument(
                    "repeated extrapolation abscissa".into(),
                ));
            }
            // Interpolant through points i..=i+level evaluated at 0.
            p[i] = (xi * p[i + 1] - xj * p[i]) / denom;
        }
    }
    Ok(p[0])
}

/// Extrapolates and fails when the last two levels disagree by more than
/// `rel_tol` relative (with absolute floor `floor`).
pub fn extrapolate_checked(
    x: &[f64],
    y: &[f64],
    rel_tol: f64,
    floor: f64,
    what: &str,
) -> Result<Extrapolation> {
    let e = extrapolate_to_zero(x, y)?;
    if !e.value.is_finite() || e.relative_residual(floor) > rel_tol {
        return Err(Error::ExtrapolationDiverged(format!(
            "{what}: last levels {} vs {}",
            e.value, e.previous
        )));
    }
    Ok(e)
}
