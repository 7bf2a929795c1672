//! Closed-form ground truth for the mean-drift problem on the real line:
//! `f(x, m, u) = u − mean(m)`, `U = [−1, 0]`, target `{m : mean(m) = 0}`.
//!
//! The mean obeys `ṁ = u − m̄`, so everything reduces to a scalar linear ODE.
//! The oracle accepts any one-dimensional measure and reads only its mean.

use crate::dynamics::{AffineMeanField, ControlGrid, RelaxedControl};
use crate::error::{Error, Result};
use crate::measures::{EmpiricalMeasure, L2Field};
use crate::target::TargetSet;
use crate::value::TimeValue;

pub const CONTROL_MIN: f64 = -1.0;
pub const CONTROL_MAX: f64 = 0.0;

/// The problem data. Has no free parameters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MeanDriftProblem;

impl MeanDriftProblem {
    pub fn new() -> Self {
        MeanDriftProblem
    }

    pub fn field(&self) -> AffineMeanField {
        AffineMeanField::mean_drift()
    }

    pub fn target(&self) -> TargetSet {
        TargetSet::zero_mean(1)
    }

    /// `count` equally spaced controls covering `[−1, 0]`.
    pub fn control_grid(&self, count: usize) -> Result<ControlGrid> {
        ControlGrid::uniform_1d(CONTROL_MIN, CONTROL_MAX, count)
    }
}

/// `ln(1 + m̄)` for `m̄ ≥ 0`, `+∞` otherwise.
pub fn analytic_value(mean: f64) -> TimeValue {
    if mean >= 0.0 {
        TimeValue::Finite(mean.ln_1p())
    } else {
        TimeValue::Infinite
    }
}

/// `m̄/(1 + m̄)` for `m̄ ≥ 0`, `1` otherwise.
pub fn analytic_phi(mean: f64) -> f64 {
    if mean >= 0.0 {
        mean / (1.0 + mean)
    } else {
        1.0
    }
}

/// Mean at time `t` under a piecewise-constant control given as
/// `(duration, u)` segments, evaluated segment by segment from
/// `m̄(t) = u + (m̄(t₀) − u) e^{−(t − t₀)}`.
pub fn analytic_mean(mean0: f64, segments: &[(f64, f64)], t: f64) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::InvalidTimeGrid(format!("negative time {t}")));
    }
    let mut mean = mean0;
    let mut elapsed = 0.0;
    for &(duration, u) in segments {
        if elapsed >= t {
            break;
        }
        let tau = duration.min(t - elapsed);
        mean = u + (mean - u) * (-tau).exp();
        elapsed += tau;
    }
    if elapsed < t - 1e-12 * t.max(1.0) {
        return Err(Error::InvalidControl(format!("control covers {elapsed} < {t}")));
    }
    Ok(mean)
}

/// [`analytic_mean`] for a relaxed control: the field is affine in `u`, so each
/// step acts through its mean control.
pub fn analytic_mean_relaxed(mean0: f64, xi: &RelaxedControl, t: f64) -> Result<f64> {
    let segments: Vec<(f64, f64)> = (0..xi.steps()).map(|k| (xi.dt(), xi.mean_control(k)[0])).collect();
    analytic_mean(mean0, &segments, t)
}

/// `(−1 − m̄)∫s dm` if `∫s dm > 0`, `−m̄ ∫s dm` otherwise.
pub fn analytic_hamiltonian(m: &EmpiricalMeasure, s: &L2Field) -> Result<f64> {
    if m.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, found: m.dim() });
    }
    if !s.is_based_on(m) {
        return Err(Error::BaseMismatch);
    }
    let mean = m.mean()[0];
    let integral = s.integral()[0];
    Ok(if integral > 0.0 { (-1.0 - mean) * integral } else { -mean * integral })
}

/// Derivative of `analytic_phi` as a constant field: `1/(1 + m̄)²` for `m̄ > 0`.
pub fn analytic_gradient(m: &EmpiricalMeasure) -> Result<L2Field> {
    let mean = m.mean()[0];
    L2Field::constant(m, &[1.0 / ((1.0 + mean) * (1.0 + mean))])
}
