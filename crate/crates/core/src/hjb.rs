//! The Hamiltonian on measure space, Hadamard difference quotients along
//! push-forwards `(Id + hF)♯m`, sub/superdifferential membership tests and
//! viscosity residuals `H(m, s) + 1 − φ(m)`.
//!
//! Quotients use the fixed direction `F` only, so the lower estimate can only
//! be too large and the upper one too small.

use std::io::Write;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::dynamics::{ControlGrid, VectorField};
use crate::error::{Error, Result};
use crate::measures::{inner_product_l2, push_forward, EmpiricalMeasure, L2Field};

/// Number of trailing schedule entries that define lower/upper estimates.
pub const TAIL_LEN: usize = 4;
pub const MIN_SLACK: f64 = 1e-8;

type EvalFn = dyn Fn(&EmpiricalMeasure) -> f64 + Send + Sync;
type GuardFn = dyn Fn(&EmpiricalMeasure) -> bool + Send + Sync;

/// A real function on measures, optionally restricted to a guarded domain.
#[derive(Clone)]
pub struct MeasureFunctional {
    label: String,
    eval: Arc<EvalFn>,
    guard: Option<Arc<GuardFn>>,
}

impl std::fmt::Debug for MeasureFunctional {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MeasureFunctional").field("label", &self.label).finish()
    }
}

impl MeasureFunctional {
    pub fn new(label: impl Into<String>, eval: impl Fn(&EmpiricalMeasure) -> f64 + Send + Sync + 'static) -> Self {
        MeasureFunctional { label: label.into(), eval: Arc::new(eval), guard: None }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("constant {c}"), move |_| c)
    }

    pub fn with_guard(mut self, guard: impl Fn(&EmpiricalMeasure) -> bool + Send + Sync + 'static) -> Self {
        self.guard = Some(Arc::new(guard));
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// `None` outside the guarded domain or when the value is not finite.
    pub fn eval(&self, m: &EmpiricalMeasure) -> Option<f64> {
        if let Some(g) = &self.guard {
            if !g(m) {
                return None;
            }
        }
        Some((self.eval)(m)).filter(|v| v.is_finite())
    }

    /// `φ + ψ` on the intersection of the domains.
    pub fn sum(&self, other: &MeasureFunctional) -> MeasureFunctional {
        let (a, b) = (self.clone(), other.clone());
        MeasureFunctional {
            label: format!("{} + {}", self.label, other.label),
            eval: Arc::new(move |m| a.eval(m).zip(b.eval(m)).map_or(f64::NAN, |(x, y)| x + y)),
            guard: None,
        }
    }
}

/// `h_k = 0.1·2^{−k}` for `k = 0..=10`.
pub fn default_schedule() -> Vec<f64> {
    (0..=10).map(|k| 0.1 * 0.5f64.powi(k)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DerivativeEstimate {
    pub lower: f64,
    pub upper: f64,
    pub h_schedule: Vec<f64>,
    pub quotients: Vec<f64>,
}

impl DerivativeEstimate {
    pub fn spread(&self) -> f64 {
        self.upper - self.lower
    }

    /// Stand-in for the `o(h)` term: `max(10·spread, 1e-8)`.
    pub fn slack(&self) -> f64 {
        (10.0 * self.spread()).max(MIN_SLACK)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianValue {
    pub value: f64,
    pub argmin: usize,
    pub control: Vec<f64>,
}

/// `min_u Σᵢ wᵢ⟨sᵢ, f(xᵢ, m, u)⟩` over the grid; ties go to the lowest index.
pub fn hamiltonian(
    m: &EmpiricalMeasure,
    s: &L2Field,
    f: &dyn VectorField,
    grid: &ControlGrid,
) -> Result<HamiltonianValue> {
    if !s.is_based_on(m) {
        return Err(Error::BaseMismatch);
    }
    if f.dim() != m.dim() {
        return Err(Error::DimensionMismatch { expected: f.dim(), found: m.dim() });
    }
    let d = m.dim();
    let view = m.view();
    let mut vel = vec![0.0; m.points().len()];
    let mut best: Option<(f64, usize)> = None;
    for (j, u) in grid.iter().enumerate() {
        f.velocities(&view, u, &mut vel);
        let value: f64 = m
            .weights()
            .iter()
            .enumerate()
            .map(|(i, w)| w * (0..d).map(|k| s.vectors()[i * d + k] * vel[i * d + k]).sum::<f64>())
            .sum();
        if best.is_none_or(|(b, _)| value < b) {
            best = Some((value, j));
        }
    }
    let (value, argmin) = best.ok_or(Error::EmptyControlGrid)?;
    Ok(HamiltonianValue { value, argmin, control: grid.point(argmin).to_vec() })
}

fn check_schedule(schedule: &[f64]) -> Result<()> {
    let ok = !schedule.is_empty()
        && schedule.iter().all(|h| h.is_finite() && *h > 0.0)
        && schedule.windows(2).all(|w| w[1] < w[0]);
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidSearch("schedule must be positive and strictly decreasing".into()))
    }
}

/// Quotients `[φ((Id + hF)♯m) − φ(m)]/h` along `schedule`, with lower and upper
/// estimates taken over the last [`TAIL_LEN`] entries.
pub fn hadamard_derivative(
    phi: &MeasureFunctional,
    m: &EmpiricalMeasure,
    direction: &L2Field,
    schedule: &[f64],
) -> Result<DerivativeEstimate> {
    check_schedule(schedule)?;
    if !direction.is_based_on(m) {
        return Err(Error::BaseMismatch);
    }
    let base = phi.eval(m).ok_or(Error::Domain { h: 0.0 })?;
    let quotients = schedule
        .iter()
        .map(|&h| {
            let moved = push_forward(m, direction, h)?;
            let value = phi.eval(&moved).ok_or(Error::Domain { h })?;
            Ok((value - base) / h)
        })
        .collect::<Result<Vec<f64>>>()?;
    let tail = &quotients[quotients.len().saturating_sub(TAIL_LEN)..];
    let lower = tail.iter().copied().fold(f64::INFINITY, f64::min);
    let upper = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(DerivativeEstimate { lower, upper, h_schedule: schedule.to_vec(), quotients })
}

/// A labelled test direction.
#[derive(Clone, Debug)]
pub struct Direction {
    pub label: String,
    pub field: L2Field,
}

impl Direction {
    pub fn new(label: impl Into<String>, field: L2Field) -> Self {
        Direction { label: label.into(), field }
    }
}

/// Axis constants, `Id`, `−Id`, `f(·, m, u)` for every grid point and eight
/// seeded Gaussian fields.
pub fn default_directions(
    m: &EmpiricalMeasure,
    f: &dyn VectorField,
    grid: &ControlGrid,
    seed: u64,
) -> Result<Vec<Direction>> {
    let d = m.dim();
    let mut out = Vec::new();
    for k in 0..d {
        let mut e = vec![0.0; d];
        e[k] = 1.0;
        out.push(Direction::new(format!("axis {}", k + 1), L2Field::constant(m, &e)?));
    }
    out.push(Direction::new("id", L2Field::identity(m)));
    out.push(Direction::new("-id", L2Field::identity(m).scaled(-1.0)));
    let mut vel = vec![0.0; m.points().len()];
    for u in grid.iter() {
        f.velocities(&m.view(), u, &mut vel);
        let label = u.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        out.push(Direction::new(format!("f(u={label})"), L2Field::new(m, vel.clone())?));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for r in 0..8 {
        let v: Vec<f64> = (0..m.points().len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        out.push(Direction::new(format!("random {r}"), L2Field::new(m, v)?));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Differential {
    Sub,
    Super,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DirectionCheck {
    pub label: String,
    pub estimate: DerivativeEstimate,
    pub inner: f64,
    /// `lower − ⟨s, F⟩` for the subdifferential, `⟨s, F⟩ − upper` for the superdifferential.
    pub margin: f64,
    pub slack: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DifferentialReport {
    pub kind: Differential,
    pub checks: Vec<DirectionCheck>,
    pub worst_margin: f64,
    pub pass: bool,
}

fn differential_test(
    kind: Differential,
    phi: &MeasureFunctional,
    m: &EmpiricalMeasure,
    s: &L2Field,
    directions: &[Direction],
    schedule: &[f64],
) -> Result<DifferentialReport> {
    if !s.is_based_on(m) {
        return Err(Error::BaseMismatch);
    }
    let checks = directions
        .par_iter()
        .map(|dir| {
            let estimate = hadamard_derivative(phi, m, &dir.field, schedule)?;
            let inner = inner_product_l2(s, &dir.field)?;
            let margin = match kind {
                Differential::Sub => estimate.lower - inner,
                Differential::Super => inner - estimate.upper,
            };
            let slack = estimate.slack();
            Ok(DirectionCheck { label: dir.label.clone(), estimate, inner, margin, slack, pass: margin >= -slack })
        })
        .collect::<Result<Vec<_>>>()?;
    let worst_margin = checks.iter().map(|c| c.margin).fold(f64::INFINITY, f64::min);
    let pass = checks.iter().all(|c| c.pass);
    Ok(DifferentialReport { kind, checks, worst_margin, pass })
}

/// Checks `⟨s, F⟩_m ≤ d⁻φ(m; F) + slack` for every direction.
pub fn subdifferential_test(
    phi: &MeasureFunctional,
    m: &EmpiricalMeasure,
    s: &L2Field,
    directions: &[Direction],
    schedule: &[f64],
) -> Result<DifferentialReport> {
    differential_test(Differential::Sub, phi, m, s, directions, schedule)
}

/// Checks `⟨s, F⟩_m ≥ d⁺φ(m; F) − slack` for every direction.
pub fn superdifferential_test(
    phi: &MeasureFunctional,
    m: &EmpiricalMeasure,
    s: &L2Field,
    directions: &[Direction],
    schedule: &[f64],
) -> Result<DifferentialReport> {
    differential_test(Differential::Super, phi, m, s, directions, schedule)
}

fn residual(
    phi: &MeasureFunctional,
    m: &EmpiricalMeasure,
    s: &L2Field,
    f: &dyn VectorField,
    grid: &ControlGrid,
) -> Result<f64> {
    let value = phi.eval(m).ok_or(Error::Domain { h: 0.0 })?;
    Ok(hamiltonian(m, s, f, grid)?.value + 1.0 - value)
}

/// `H(m, s) + 1 − φ(m)`; a supersolution needs this `≤ 0` for `s` in the subdifferential.
pub fn supersolution_residual(
    phi: &MeasureFunctional,
    m: &EmpiricalMeasure,
    s: &L2Field,
    f: &dyn VectorField,
    grid: &ControlGrid,
) -> Result<f64> {
    residual(phi, m, s, f, grid)
}

/// `H(m, s) + 1 − φ(m)`; a subsolution needs this `≥ 0` for `s` in the superdifferential.
pub fn subsolution_residual(
    phi: &MeasureFunctional,
    m: &EmpiricalMeasure,
    s: &L2Field,
    f: &dyn VectorField,
    grid: &ControlGrid,
) -> Result<f64> {
    residual(phi, m, s, f, grid)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub mean: Vec<f64>,
    pub direction: String,
    pub lower: f64,
    pub upper: f64,
    pub inner: f64,
    pub residual: f64,
    pub pass: bool,
}

/// For each measure, takes `s = gradient(m)` and runs both membership tests
/// over the default directions plus the residual. A row passes when both
/// tests pass in its direction and `|residual| ≤ tol`.
#[allow(clippy::too_many_arguments)]
pub fn residual_sweep(
    phi: &MeasureFunctional,
    measures: &[EmpiricalMeasure],
    gradient: &(dyn Fn(&EmpiricalMeasure) -> Result<L2Field> + Sync),
    f: &dyn VectorField,
    grid: &ControlGrid,
    schedule: &[f64],
    tol: f64,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for m in measures {
        let s = gradient(m)?;
        let res = residual(phi, m, &s, f, grid)?;
        let directions = default_directions(m, f, grid, seed)?;
        let sub = subdifferential_test(phi, m, &s, &directions, schedule)?;
        let sup = superdifferential_test(phi, m, &s, &directions, schedule)?;
        for (a, b) in sub.checks.iter().zip(&sup.checks) {
            rows.push(SweepRow {
                mean: m.mean(),
                direction: a.label.clone(),
                lower: a.estimate.lower,
                upper: a.estimate.upper,
                inner: a.inner,
                residual: res,
                pass: a.pass && b.pass && res.abs() <= tol,
            });
        }
    }
    Ok(rows)
}

/// `mean,direction,lower,upper,inner,residual,pass`, coordinates of the mean space-separated.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> Result<()> {
    writeln!(out, "mean,direction,lower,upper,inner,residual,pass")?;
    for r in rows {
        let mean = r.mean.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ");
        writeln!(out, "{mean},{},{:e},{:e},{:e},{:e},{}", r.direction, r.lower, r.upper, r.inner, r.residual, r.pass)?;
    }
    Ok(())
}
