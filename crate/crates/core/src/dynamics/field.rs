use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ControlGrid;
use crate::measures::{norm_sq, w2_distance, EmpiricalMeasure, MeasureView};

/// A controlled nonlocal velocity `f(x, m, u)`.
///
/// Implementations declare a Lipschitz constant `L` (in `x` and in `m` for the
/// W₂ metric) and a sublinear growth constant `C′` with
/// `‖f(x, m, u)‖ ≤ C′ (1 + ‖x‖ + ς(m))` on the admissible controls.
pub trait VectorField: Send + Sync {
    /// State dimension `d`.
    fn dim(&self) -> usize;

    /// Dimension of a control point.
    fn control_dim(&self) -> usize {
        self.dim()
    }

    fn velocity(&self, x: &[f64], m: &MeasureView<'_>, u: &[f64], out: &mut [f64]);

    /// Velocities at every atom of `m`, row-major. Overrides must agree with
    /// [`VectorField::velocity`] evaluated atom by atom.
    fn velocities(&self, m: &MeasureView<'_>, u: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for (i, o) in out.chunks_exact_mut(d).enumerate() {
            self.velocity(m.point(i), m, u, o);
        }
    }

    fn lipschitz(&self) -> f64;

    fn growth(&self) -> f64;

    fn label(&self) -> String {
        "field".to_string()
    }
}

impl<T: VectorField + ?Sized> VectorField for Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn control_dim(&self) -> usize {
        (**self).control_dim()
    }
    fn velocity(&self, x: &[f64], m: &MeasureView<'_>, u: &[f64], out: &mut [f64]) {
        (**self).velocity(x, m, u, out)
    }
    fn velocities(&self, m: &MeasureView<'_>, u: &[f64], out: &mut [f64]) {
        (**self).velocities(m, u, out)
    }
    fn lipschitz(&self) -> f64 {
        (**self).lipschitz()
    }
    fn growth(&self) -> f64 {
        (**self).growth()
    }
    fn label(&self) -> String {
        (**self).label()
    }
}

/// `f(x, m, u) = g·u + a·x + b·mean(m) + c` with scalar `g, a, b` and `u ∈ R^d`.
///
/// The mean-drift problem is `g = 1, a = 0, b = −1, c = 0` on the real line.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMeanField {
    dim: usize,
    control_gain: f64,
    self_coeff: f64,
    mean_coeff: f64,
    drift: Vec<f64>,
    control_bound: f64,
}

impl AffineMeanField {
    /// `control_bound` bounds `‖u‖` over the admissible controls; it enters `C′`.
    pub fn new(control_gain: f64, self_coeff: f64, mean_coeff: f64, drift: Vec<f64>, control_bound: f64) -> Self {
        assert!(!drift.is_empty(), "drift fixes the dimension");
        AffineMeanField {
            dim: drift.len(),
            control_gain,
            self_coeff,
            mean_coeff,
            drift,
            control_bound: control_bound.abs(),
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(0.0, 0.0, 0.0, vec![0.0; dim], 0.0)
    }

    /// Pure transport with constant velocity `v`, control ignored.
    pub fn constant(v: Vec<f64>) -> Self {
        Self::new(0.0, 0.0, 0.0, v, 0.0)
    }

    /// `f(x, m, u) = u − mean(m)` on R with `|u| ≤ 1`.
    pub fn mean_drift() -> Self {
        Self::new(1.0, 0.0, -1.0, vec![0.0], 1.0)
    }

    /// Same field with the constant drift shifted by `offset` in every coordinate.
    pub fn with_offset(&self, offset: f64) -> Self {
        let mut out = self.clone();
        out.drift.iter_mut().for_each(|c| *c += offset);
        out
    }

    pub fn drift(&self) -> &[f64] {
        &self.drift
    }

    #[inline]
    fn eval(&self, x: &[f64], mean: &[f64], u: &[f64], out: &mut [f64]) {
        for k in 0..self.dim {
            out[k] = self.control_gain * u[k] + self.self_coeff * x[k] + self.mean_coeff * mean[k] + self.drift[k];
        }
    }
}

impl VectorField for AffineMeanField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn velocity(&self, x: &[f64], m: &MeasureView<'_>, u: &[f64], out: &mut [f64]) {
        let mean = m.mean();
        self.eval(x, &mean, u, out);
    }

    fn velocities(&self, m: &MeasureView<'_>, u: &[f64], out: &mut [f64]) {
        let mean = m.mean();
        for (i, o) in out.chunks_exact_mut(self.dim).enumerate() {
            self.eval(m.point(i), &mean, u, o);
        }
    }

    fn lipschitz(&self) -> f64 {
        self.self_coeff.abs().max(self.mean_coeff.abs())
    }

    fn growth(&self) -> f64 {
        let constant = self.control_gain.abs() * self.control_bound + norm_sq(&self.drift).sqrt();
        constant.max(self.self_coeff.abs()).max(self.mean_coeff.abs())
    }

    fn label(&self) -> String {
        format!("affine(g={}, a={}, b={}, c={:?})", self.control_gain, self.self_coeff, self.mean_coeff, self.drift)
    }
}

type FieldFn = dyn Fn(&[f64], &MeasureView<'_>, &[f64]) -> Vec<f64> + Send + Sync;

/// A field given by a closure, with declared constants.
#[derive(Clone)]
pub struct FnField {
    dim: usize,
    control_dim: usize,
    lipschitz: f64,
    growth: f64,
    label: String,
    f: Arc<FieldFn>,
}

impl FnField {
    pub fn new(
        dim: usize,
        control_dim: usize,
        lipschitz: f64,
        growth: f64,
        f: impl Fn(&[f64], &MeasureView<'_>, &[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        FnField { dim, control_dim, lipschitz, growth, label: "closure".into(), f: Arc::new(f) }
    }

    pub fn labeled(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}

impl fmt::Debug for FnField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnField")
            .field("dim", &self.dim)
            .field("lipschitz", &self.lipschitz)
            .field("growth", &self.growth)
            .field("label", &self.label)
            .finish()
    }
}

impl VectorField for FnField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn control_dim(&self) -> usize {
        self.control_dim
    }

    fn velocity(&self, x: &[f64], m: &MeasureView<'_>, u: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&(self.f)(x, m, u));
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn growth(&self) -> f64 {
        self.growth
    }

    fn label(&self) -> String {
        self.label.clone()
    }
}

/// Evaluates `f(x, m, u)` into a fresh vector.
pub fn eval_field(f: &dyn VectorField, x: &[f64], m: &EmpiricalMeasure, u: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; f.dim()];
    f.velocity(x, &m.view(), u, &mut out);
    out
}

/// Outcome of randomized spot checks of a field's declared constants.
#[derive(Clone, Debug)]
pub struct FieldCheck {
    /// Largest `‖f(x₁,m₁,u) − f(x₂,m₂,u)‖ / (L(‖x₁−x₂‖ + W₂(m₁,m₂)))` observed.
    pub worst_lipschitz_ratio: f64,
    /// Largest `‖f(x,m,u)‖ / (C′(1 + ‖x‖ + ς(m)))` observed.
    pub worst_growth_ratio: f64,
    pub samples: usize,
}

impl FieldCheck {
    pub const LIPSCHITZ_SLACK: f64 = 1.05;

    pub fn lipschitz_ok(&self) -> bool {
        self.worst_lipschitz_ratio <= Self::LIPSCHITZ_SLACK
    }

    pub fn growth_ok(&self) -> bool {
        self.worst_growth_ratio <= 1.0 + 1e-12
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if num <= 1e-14 {
        0.0
    } else if den <= 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

/// Samples random points in `[-radius, radius]^d`, random five-atom clouds and
/// grid controls, and reports the worst observed constant ratios.
pub fn check_field_constants(
    f: &dyn VectorField,
    grid: &ControlGrid,
    samples: usize,
    radius: f64,
    seed: u64,
) -> FieldCheck {
    let d = f.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cloud = |rng: &mut ChaCha8Rng| {
        let pts: Vec<f64> = (0..5 * d).map(|_| rng.gen_range(-radius..radius)).collect();
        EmpiricalMeasure::uniform(d, pts).expect("finite cloud")
    };
    let mut worst_l: f64 = 0.0;
    let mut worst_c: f64 = 0.0;
    for _ in 0..samples {
        let x1: Vec<f64> = (0..d).map(|_| rng.gen_range(-radius..radius)).collect();
        let x2: Vec<f64> = (0..d).map(|_| rng.gen_range(-radius..radius)).collect();
        let m1 = cloud(&mut rng);
        let m2 = cloud(&mut rng);
        let u = grid.point(rng.gen_range(0..grid.len()));
        let f1 = eval_field(f, &x1, &m1, u);
        let f2 = eval_field(f, &x2, &m2, u);
        let w2 = w2_distance(&m1, &m2).map(|(c, _)| c).unwrap_or(f64::INFINITY);
        let diff = f1.iter().zip(&f2).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let dx = x1.iter().zip(&x2).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        worst_l = worst_l.max(ratio(diff, f.lipschitz() * (dx + w2)));
        let growth_bound = f.growth() * (1.0 + norm_sq(&x1).sqrt() + m1.second_moment());
        worst_c = worst_c.max(ratio(norm_sq(&f1).sqrt(), growth_bound));
    }
    FieldCheck { worst_lipschitz_ratio: worst_l, worst_growth_ratio: worst_c, samples }
}
