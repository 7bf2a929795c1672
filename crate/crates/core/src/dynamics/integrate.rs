use std::io::Write;
use std::ops::ControlFlow;

use super::{RelaxedControl, VectorField};
use crate::error::{Error, Result};
use crate::measures::{EmpiricalMeasure, L2Field, MeasureView};

/// Coordinates beyond this magnitude abort the integration.
pub const BLOW_UP_LIMIT: f64 = 1e12;

/// Measure curve `m(t)` on a uniform time grid together with the particle
/// paths it is made of. Every frame shares the weights of the initial measure.
#[derive(Clone, Debug)]
pub struct Trajectory {
    dt: f64,
    times: Vec<f64>,
    frames: Vec<EmpiricalMeasure>,
}

impl Trajectory {
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn measures(&self) -> &[EmpiricalMeasure] {
        &self.frames
    }

    pub fn measure(&self, k: usize) -> &EmpiricalMeasure {
        &self.frames[k]
    }

    pub fn initial(&self) -> &EmpiricalMeasure {
        &self.frames[0]
    }

    pub fn terminal(&self) -> &EmpiricalMeasure {
        self.frames.last().expect("trajectory has at least one frame")
    }

    pub fn steps(&self) -> usize {
        self.frames.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("nonempty")
    }

    pub fn dim(&self) -> usize {
        self.frames[0].dim()
    }

    pub fn particles(&self) -> usize {
        self.frames[0].len()
    }

    /// Positions of particle `i` at every grid time, `(K+1) × d`.
    pub fn path(&self, i: usize) -> Vec<f64> {
        self.frames.iter().flat_map(|m| m.point(i).to_vec()).collect()
    }

    /// All paths as an `N × (K+1) × d` array.
    pub fn paths(&self) -> Vec<f64> {
        (0..self.particles()).flat_map(|i| self.path(i)).collect()
    }

    /// Checks that the evaluation of the stored paths at each grid time is
    /// exactly the stored measure, with time-invariant weights.
    pub fn superposition_consistent(&self) -> bool {
        let (n, d, k1) = (self.particles(), self.dim(), self.frames.len());
        let paths = self.paths();
        let w0 = self.frames[0].weights();
        self.frames.iter().enumerate().all(|(k, m)| {
            m.weights() == w0
                && (0..n).all(|i| {
                    let at = &paths[(i * k1 + k) * d..(i * k1 + k + 1) * d];
                    at == m.point(i)
                })
        })
    }

    /// Columns `t,particle,x1..xd`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let cols: Vec<String> = (1..=self.dim()).map(|k| format!("x{k}")).collect();
        writeln!(out, "t,particle,{}", cols.join(","))?;
        for (t, m) in self.times.iter().zip(&self.frames) {
            for i in 0..m.len() {
                write!(out, "{t:e},{i}")?;
                for x in m.point(i) {
                    write!(out, ",{x:e}")?;
                }
                writeln!(out)?;
            }
        }
        Ok(())
    }
}

/// Number of steps of size `dt` that make up `horizon`.
pub(crate) fn step_count(horizon: f64, dt: f64) -> Result<usize> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidHorizon(horizon));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidTimeGrid(format!("time step must be positive, got {dt}")));
    }
    let k = (horizon / dt).round();
    if k < 1.0 || (k * dt - horizon).abs() > 1e-9 * horizon.max(1.0) {
        return Err(Error::InvalidTimeGrid(format!("dt = {dt} does not divide T = {horizon}")));
    }
    Ok(k as usize)
}

/// Classical RK4 for the coupled particle system, the measure argument of
/// each stage being the cloud at that stage's positions.
pub(crate) struct Rk4<'a> {
    f: &'a dyn VectorField,
    xi: &'a RelaxedControl,
    weights: &'a [f64],
    dim: usize,
    scratch: Vec<f64>,
    k: [Vec<f64>; 4],
    stage: Vec<f64>,
}

impl<'a> Rk4<'a> {
    pub(crate) fn new(f: &'a dyn VectorField, xi: &'a RelaxedControl, weights: &'a [f64]) -> Self {
        let len = weights.len() * f.dim();
        Rk4 {
            f,
            xi,
            weights,
            dim: f.dim(),
            scratch: vec![0.0; len],
            k: [vec![0.0; len], vec![0.0; len], vec![0.0; len], vec![0.0; len]],
            stage: vec![0.0; len],
        }
    }

    fn mixed_velocity(
        f: &dyn VectorField,
        xi: &RelaxedControl,
        row: &[f64],
        view: &MeasureView<'_>,
        scratch: &mut [f64],
        out: &mut [f64],
    ) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (j, &p) in row.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            f.velocities(view, xi.grid().point(j), scratch);
            for (o, s) in out.iter_mut().zip(scratch.iter()) {
                *o += p * s;
            }
        }
    }

    fn probe_velocity(&self, row: &[f64], y: &[f64], view: &MeasureView<'_>, out: &mut [f64]) {
        let mut tmp = vec![0.0; self.dim];
        out.iter_mut().for_each(|v| *v = 0.0);
        for (j, &p) in row.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            self.f.velocity(y, view, self.xi.grid().point(j), &mut tmp);
            for (o, s) in out.iter_mut().zip(&tmp) {
                *o += p * s;
            }
        }
    }

    /// Advances `state` (and optionally one probe particle that feels the
    /// cloud but does not act on it) from `t` to `t + dt`.
    pub(crate) fn step(&mut self, state: &mut [f64], probe: Option<&mut [f64]>, t: f64, dt: f64) -> Result<()> {
        let row = self
            .xi
            .row_for_step(t, dt)
            .ok_or_else(|| Error::InvalidControl(format!("control does not cover t = {t}")))?;
        let d = self.dim;
        let mut probe_k: [Vec<f64>; 4] = Default::default();
        let mut probe_stage = vec![0.0; d];
        let coeffs = [0.0, 0.5, 0.5, 1.0];
        for s in 0..4 {
            if s == 0 {
                self.stage.copy_from_slice(state);
            } else {
                let c = coeffs[s] * dt;
                for ((st, x), kv) in self.stage.iter_mut().zip(state.iter()).zip(&self.k[s - 1]) {
                    *st = x + c * kv;
                }
            }
            let view = MeasureView::new(d, &self.stage, self.weights);
            if let Some(y) = probe.as_deref() {
                if s == 0 {
                    probe_stage.copy_from_slice(y);
                } else {
                    let c = coeffs[s] * dt;
                    for ((st, x), kv) in probe_stage.iter_mut().zip(y).zip(&probe_k[s - 1]) {
                        *st = x + c * kv;
                    }
                }
                let mut out = vec![0.0; d];
                self.probe_velocity(row, &probe_stage, &view, &mut out);
                probe_k[s] = out;
            }
            let mut ks = std::mem::take(&mut self.k[s]);
            Self::mixed_velocity(self.f, self.xi, row, &view, &mut self.scratch, &mut ks);
            self.k[s] = ks;
        }
        let w = dt / 6.0;
        for (i, x) in state.iter_mut().enumerate() {
            *x += w * (self.k[0][i] + 2.0 * self.k[1][i] + 2.0 * self.k[2][i] + self.k[3][i]);
        }
        if let Some(y) = probe {
            for (i, x) in y.iter_mut().enumerate() {
                *x += w * (probe_k[0][i] + 2.0 * probe_k[1][i] + 2.0 * probe_k[2][i] + probe_k[3][i]);
            }
        }
        Ok(())
    }
}

fn blown_up(state: &[f64]) -> bool {
    state.iter().any(|x| !x.is_finite() || x.abs() > BLOW_UP_LIMIT)
}

fn validate(mu: &EmpiricalMeasure, xi: &RelaxedControl, f: &dyn VectorField, horizon: f64) -> Result<()> {
    if f.dim() != mu.dim() {
        return Err(Error::DimensionMismatch { expected: f.dim(), found: mu.dim() });
    }
    if xi.grid().dim() != f.control_dim() {
        return Err(Error::DimensionMismatch { expected: f.control_dim(), found: xi.grid().dim() });
    }
    if !xi.covers(horizon) {
        return Err(Error::InvalidControl(format!(
            "control covers [0, {}] but the horizon is {horizon}",
            xi.horizon()
        )));
    }
    Ok(())
}

/// Runs the particle system and hands every grid frame to `visit`, starting
/// with `(0, 0.0, mu)`. Stops early when `visit` breaks.
pub fn integrate_with(
    mu: &EmpiricalMeasure,
    xi: &RelaxedControl,
    f: &dyn VectorField,
    horizon: f64,
    dt: f64,
    mut visit: impl FnMut(usize, f64, &EmpiricalMeasure) -> ControlFlow<()>,
) -> Result<()> {
    let steps = step_count(horizon, dt)?;
    validate(mu, xi, f, horizon)?;
    if visit(0, 0.0, mu).is_break() {
        return Ok(());
    }
    let mut rk = Rk4::new(f, xi, mu.weights());
    let mut state = mu.points().to_vec();
    for k in 0..steps {
        let t = k as f64 * dt;
        rk.step(&mut state, None, t, dt)?;
        if blown_up(&state) {
            return Err(Error::BlowUp { step: k + 1, time: (k + 1) as f64 * dt });
        }
        let frame = mu.with_points_unchecked(state.clone());
        if visit(k + 1, (k + 1) as f64 * dt, &frame).is_break() {
            break;
        }
    }
    Ok(())
}

/// Solves the controlled nonlocal continuity equation from `mu` on `[0, horizon]`.
pub fn integrate(
    mu: &EmpiricalMeasure,
    xi: &RelaxedControl,
    f: &dyn VectorField,
    horizon: f64,
    dt: f64,
) -> Result<Trajectory> {
    let mut times = Vec::new();
    let mut frames = Vec::new();
    integrate_with(mu, xi, f, horizon, dt, |_, t, m| {
        times.push(t);
        frames.push(m.clone());
        ControlFlow::Continue(())
    })?;
    debug_assert!(frames.iter().all(|m| std::sync::Arc::ptr_eq(m.shared_weights(), mu.shared_weights())));
    Ok(Trajectory { dt, times, frames })
}

/// Path of one extra particle started at `y` and driven by the measure curve
/// of `traj`, `(K+1) × d`. Each step restarts the cloud from the stored frame,
/// so for `y` an atom of the initial measure the stored path is reproduced.
pub fn flow_map(y: &[f64], traj: &Trajectory, xi: &RelaxedControl, f: &dyn VectorField) -> Result<Vec<f64>> {
    if y.len() != traj.dim() {
        return Err(Error::DimensionMismatch { expected: traj.dim(), found: y.len() });
    }
    validate(traj.initial(), xi, f, traj.horizon())?;
    let dt = traj.dt();
    let mut rk = Rk4::new(f, xi, traj.initial().weights());
    let mut probe = y.to_vec();
    let mut path = Vec::with_capacity(traj.measures().len() * y.len());
    path.extend_from_slice(&probe);
    for k in 0..traj.steps() {
        let mut state = traj.measure(k).points().to_vec();
        rk.step(&mut state, Some(&mut probe), traj.times()[k], dt)?;
        if blown_up(&probe) {
            return Err(Error::BlowUp { step: k + 1, time: traj.times()[k + 1] });
        }
        path.extend_from_slice(&probe);
    }
    Ok(path)
}

/// `F_h(y) = (X(h; y, μ, ξ) − y) / h` on the atoms of `mu`. The run uses
/// `⌈h/dt⌉` equal steps.
pub fn averaged_velocity(
    mu: &EmpiricalMeasure,
    xi: &RelaxedControl,
    f: &dyn VectorField,
    h: f64,
    dt: f64,
) -> Result<L2Field> {
    if h.is_nan() || h <= 0.0 || h < dt {
        return Err(Error::BelowResolution { h, dt });
    }
    let steps = (h / dt - 1e-9).ceil().max(1.0);
    let traj = integrate(mu, xi, f, h, h / steps)?;
    let end = traj.terminal();
    let vectors = end.points().iter().zip(mu.points()).map(|(x, y)| (x - y) / h).collect();
    L2Field::new(mu, vectors)
}
