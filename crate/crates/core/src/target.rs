//! Target sets in measure space, their dilations, and hitting times.
//!
//! Hyperplane and ball targets are described by a scalar coordinate `c(m)`
//! and a band `[lo, hi]`, with `dist(m, M) = max(0, lo − c, c − hi)`. Since
//! `c` is continuous along measure curves, a coordinate that jumps across the
//! band between two grid times certifies a crossing in between.

use std::fmt;
use std::ops::ControlFlow;
use std::sync::Arc;

use crate::dynamics::{integrate_with, RelaxedControl, Trajectory, VectorField};
use crate::error::{Error, Result};
use crate::measures::{dot, norm_sq, w2_distance, EmpiricalMeasure};

pub const DEFAULT_MEMBERSHIP_TOL: f64 = 1e-6;

type Predicate = dyn Fn(&EmpiricalMeasure) -> bool + Send + Sync;
type DistanceFn = dyn Fn(&EmpiricalMeasure) -> f64 + Send + Sync;

/// User-supplied target: a membership predicate and a lower bound on the
/// W₂-distance. Without a certified lower bound, reports mark it heuristic.
#[derive(Clone)]
pub struct CustomTarget {
    pub label: String,
    pub membership: Arc<Predicate>,
    pub distance: Arc<DistanceFn>,
    pub certified: bool,
}

impl fmt::Debug for CustomTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomTarget").field("label", &self.label).field("certified", &self.certified).finish()
    }
}

#[derive(Clone, Debug)]
pub enum TargetKind {
    /// `{m : ⟨a, mean(m)⟩ = b}`
    MomentHyperplane {
        direction: Vec<f64>,
        level: f64,
    },
    /// `{m : W₂(m, center) ≤ radius}`
    WassersteinBall {
        center: EmpiricalMeasure,
        radius: f64,
    },
    Custom(CustomTarget),
}

/// A closed target `M`, possibly dilated to `M^ε`, with membership tolerance η.
#[derive(Clone, Debug)]
pub struct TargetSet {
    kind: TargetKind,
    dilation: f64,
    eta: f64,
}

impl TargetSet {
    pub fn new(kind: TargetKind) -> Result<Self> {
        match &kind {
            TargetKind::MomentHyperplane { direction, level } => {
                if direction.is_empty() || norm_sq(direction) == 0.0 || !level.is_finite() {
                    return Err(Error::InvalidMeasure("hyperplane needs a nonzero direction".into()));
                }
            }
            TargetKind::WassersteinBall { radius, .. } => {
                if !(*radius >= 0.0 && radius.is_finite()) {
                    return Err(Error::InvalidMeasure(format!("invalid ball radius {radius}")));
                }
            }
            TargetKind::Custom(_) => {}
        }
        Ok(TargetSet { kind, dilation: 0.0, eta: DEFAULT_MEMBERSHIP_TOL })
    }

    pub fn moment_hyperplane(direction: Vec<f64>, level: f64) -> Result<Self> {
        Self::new(TargetKind::MomentHyperplane { direction, level })
    }

    /// Measures on R^dim whose mean has zero first coordinate (`a = e₁`, `b = 0`).
    pub fn zero_mean(dim: usize) -> Self {
        let mut direction = vec![0.0; dim];
        direction[0] = 1.0;
        Self::moment_hyperplane(direction, 0.0).expect("unit direction")
    }

    pub fn wasserstein_ball(center: EmpiricalMeasure, radius: f64) -> Result<Self> {
        Self::new(TargetKind::WassersteinBall { center, radius })
    }

    pub fn custom(
        label: impl Into<String>,
        membership: impl Fn(&EmpiricalMeasure) -> bool + Send + Sync + 'static,
        distance: impl Fn(&EmpiricalMeasure) -> f64 + Send + Sync + 'static,
        certified: bool,
    ) -> Self {
        TargetSet {
            kind: TargetKind::Custom(CustomTarget {
                label: label.into(),
                membership: Arc::new(membership),
                distance: Arc::new(distance),
                certified,
            }),
            dilation: 0.0,
            eta: DEFAULT_MEMBERSHIP_TOL,
        }
    }

    pub fn with_tolerance(mut self, eta: f64) -> Self {
        assert!(eta > 0.0, "membership tolerance must be positive");
        self.eta = eta;
        self
    }

    pub fn kind(&self) -> &TargetKind {
        &self.kind
    }

    pub fn dilation(&self) -> f64 {
        self.dilation
    }

    pub fn tolerance(&self) -> f64 {
        self.eta
    }

    /// Whether `distance` is an exact distance or certified lower bound.
    pub fn is_certified(&self) -> bool {
        match &self.kind {
            TargetKind::Custom(c) => c.certified,
            _ => true,
        }
    }

    pub fn label(&self) -> String {
        let base = match &self.kind {
            TargetKind::MomentHyperplane { direction, level } => {
                format!("moment_hyperplane(a={direction:?}, b={level})")
            }
            TargetKind::WassersteinBall { radius, .. } => format!("wasserstein_ball(r={radius})"),
            TargetKind::Custom(c) => format!("custom({})", c.label),
        };
        if self.dilation > 0.0 {
            format!("{base}^eps={}", self.dilation)
        } else {
            base
        }
    }

    /// Coordinate `c(m)` and band, for the kinds that have one.
    fn coordinate(&self, m: &EmpiricalMeasure) -> Result<Option<(f64, f64, f64)>> {
        let eps = self.dilation;
        Ok(match &self.kind {
            TargetKind::MomentHyperplane { direction, level } => {
                check_dim(direction.len(), m)?;
                let c = (dot(direction, &m.mean()) - level) / norm_sq(direction).sqrt();
                Some((c, -eps, eps))
            }
            TargetKind::WassersteinBall { center, radius } => {
                let (w, _) = w2_distance(m, center)?;
                Some((w, f64::NEG_INFINITY, radius + eps))
            }
            TargetKind::Custom(_) => None,
        })
    }

    /// Cheap lower bound on `distance(m)`.
    fn lower_bound(&self, m: &EmpiricalMeasure) -> Result<f64> {
        match &self.kind {
            TargetKind::WassersteinBall { center, radius } => {
                check_dim(center.dim(), m)?;
                let gap = m.mean().iter().zip(center.mean()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                Ok((gap - radius - self.dilation).max(0.0))
            }
            _ => self.distance(m),
        }
    }

    /// `dist(m, M^ε)`: exact for hyperplanes and balls, the supplied lower
    /// bound for custom targets.
    pub fn distance(&self, m: &EmpiricalMeasure) -> Result<f64> {
        match self.coordinate(m)? {
            Some((c, lo, hi)) => Ok((lo - c).max(c - hi).max(0.0)),
            None => {
                let TargetKind::Custom(custom) = &self.kind else { unreachable!() };
                Ok(((custom.distance)(m) - self.dilation).max(0.0))
            }
        }
    }

    /// Membership in `M^ε` up to η.
    pub fn contains(&self, m: &EmpiricalMeasure) -> Result<bool> {
        if let TargetKind::Custom(custom) = &self.kind {
            if self.dilation == 0.0 && (custom.membership)(m) {
                return Ok(true);
            }
        }
        Ok(self.distance(m)? <= self.eta)
    }

    /// `M^ε = cl{m : dist(m, M) ≤ ε}`; dilations compose additively.
    pub fn dilated(&self, eps: f64) -> Result<TargetSet> {
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(Error::InvalidMeasure(format!("dilation must be nonnegative, got {eps}")));
        }
        let mut out = self.clone();
        out.dilation += eps;
        Ok(out)
    }
}

fn check_dim(expected: usize, m: &EmpiricalMeasure) -> Result<()> {
    if expected != m.dim() {
        return Err(Error::DimensionMismatch { expected, found: m.dim() });
    }
    Ok(())
}

pub fn distance(target: &TargetSet, m: &EmpiricalMeasure) -> Result<f64> {
    target.distance(m)
}

pub fn dilated_target(target: &TargetSet, eps: f64) -> Result<TargetSet> {
    target.dilated(eps)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HitStatus {
    Hit,
    Censored,
}

/// First entrance into the target along a trajectory.
///
/// A hit is certified within the grid interval `bracket_times`; `time` is the
/// interpolated crossing inside it. Censored results carry the horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct HittingResult {
    pub status: HitStatus,
    pub time: f64,
    pub bracket: (usize, usize),
    pub bracket_times: (f64, f64),
}

impl HittingResult {
    pub fn is_hit(&self) -> bool {
        self.status == HitStatus::Hit
    }

    fn censored(steps: usize, horizon: f64) -> Self {
        HittingResult {
            status: HitStatus::Censored,
            time: horizon,
            bracket: (steps, steps),
            bracket_times: (horizon, horizon),
        }
    }
}

struct Frame {
    k: usize,
    t: f64,
    m: EmpiricalMeasure,
    coord: Option<f64>,
}

/// Incremental first-hit detection over grid frames in time order.
pub(crate) struct HitScanner<'a> {
    target: &'a TargetSet,
    prev: Option<Frame>,
}

impl<'a> HitScanner<'a> {
    pub(crate) fn new(target: &'a TargetSet) -> Self {
        HitScanner { target, prev: None }
    }

    pub(crate) fn push(&mut self, k: usize, t: f64, m: &EmpiricalMeasure) -> Result<Option<HittingResult>> {
        let target = self.target;
        let eta = target.eta;
        let Some(mut prev) = self.prev.take() else {
            if target.contains(m)? {
                return Ok(Some(HittingResult {
                    status: HitStatus::Hit,
                    time: t,
                    bracket: (k, k),
                    bracket_times: (t, t),
                }));
            }
            self.prev = Some(Frame { k, t, m: m.clone(), coord: None });
            return Ok(None);
        };

        let hit = |frac: f64| {
            let frac = frac.clamp(0.0, 1.0);
            Ok(Some(HittingResult {
                status: HitStatus::Hit,
                time: prev.t + frac * (t - prev.t),
                bracket: (prev.k, k),
                bracket_times: (prev.t, t),
            }))
        };

        match &target.kind {
            TargetKind::Custom(_) => {
                if target.contains(m)? {
                    let d0 = target.distance(&prev.m)?;
                    let d1 = target.distance(m)?;
                    let frac = if d0 > d1 { (d0 - eta) / (d0 - d1) } else { 1.0 };
                    return hit(frac);
                }
            }
            TargetKind::WassersteinBall { .. } if target.lower_bound(m)? > eta => {
                // The band is one-sided, so it cannot be jumped over.
            }
            _ => {
                let (c1, lo, hi) = target.coordinate(m)?.expect("coordinate target");
                let entered = (lo - c1).max(c1 - hi).max(0.0) <= eta;
                let c0 = match prev.coord {
                    Some(c) => c,
                    None => target.coordinate(&prev.m)?.expect("coordinate target").0,
                };
                let jumped = (c0 > hi && c1 < lo) || (c0 < lo && c1 > hi);
                if entered || jumped {
                    let frac = if c0 > hi {
                        let level = hi.max(c1);
                        (c0 - level) / (c0 - c1)
                    } else {
                        let level = lo.min(c1);
                        (level - c0) / (c1 - c0)
                    };
                    return hit(if frac.is_finite() { frac } else { 1.0 });
                }
                prev.coord = Some(c1);
                self.prev = Some(Frame { k, t, m: m.clone(), coord: Some(c1) });
                return Ok(None);
            }
        }
        self.prev = Some(Frame { k, t, m: m.clone(), coord: None });
        Ok(None)
    }
}

/// First grid crossing of `traj` into `target`, refined by linear
/// interpolation of the distance signal; censored at the horizon otherwise.
pub fn hitting_time(traj: &Trajectory, target: &TargetSet) -> Result<HittingResult> {
    let mut scanner = HitScanner::new(target);
    for (k, (&t, m)) in traj.times().iter().zip(traj.measures()).enumerate() {
        if let Some(hit) = scanner.push(k, t, m)? {
            return Ok(hit);
        }
    }
    Ok(HittingResult::censored(traj.steps(), traj.horizon()))
}

/// Integrates from `mu` only until the target is reached. Gives the same
/// result as [`hitting_time`] on the full trajectory.
pub fn first_hit(
    mu: &EmpiricalMeasure,
    xi: &RelaxedControl,
    f: &dyn VectorField,
    target: &TargetSet,
    horizon: f64,
    dt: f64,
) -> Result<HittingResult> {
    let mut scanner = HitScanner::new(target);
    let mut found = None;
    let mut failure = None;
    let mut last = (0usize, 0.0f64);
    integrate_with(mu, xi, f, horizon, dt, |k, t, m| {
        last = (k, t);
        match scanner.push(k, t, m) {
            Ok(Some(hit)) => {
                found = Some(hit);
                ControlFlow::Break(())
            }
            Ok(None) => ControlFlow::Continue(()),
            Err(e) => {
                failure = Some(e);
                ControlFlow::Break(())
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(found.unwrap_or_else(|| HittingResult::censored(last.0, last.1)))
}
