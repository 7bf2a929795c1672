//! Finitely supported probability measures on R^d.
//!
//! An [`EmpiricalMeasure`] is a weighted particle cloud. Fields in `L²(m)` are
//! stored as one vector per support point and carry the measure they live on,
//! so operations between fields of different measures are rejected.

mod assignment;
mod io;
mod simplex;
mod transport;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};

pub use io::{read_measure_csv, write_measure_csv};
pub use transport::{barycentric_displacement, w2_distance, TransportPlan};

/// Weights must sum to one within this tolerance after construction.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;
/// Weight sums within this distance of one are renormalized; others are rejected.
pub const RENORMALIZE_TOL: f64 = 1e-9;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

/// Borrowed view of a particle cloud, used by vector fields and the integrator
/// so that intermediate stage clouds need not be allocated as full measures.
#[derive(Clone, Copy, Debug)]
pub struct MeasureView<'a> {
    dim: usize,
    points: &'a [f64],
    weights: &'a [f64],
}

impl<'a> MeasureView<'a> {
    pub fn new(dim: usize, points: &'a [f64], weights: &'a [f64]) -> Self {
        debug_assert_eq!(points.len(), dim * weights.len());
        MeasureView { dim, points, weights }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn points(&self) -> &'a [f64] {
        self.points
    }

    pub fn weights(&self) -> &'a [f64] {
        self.weights
    }

    pub fn point(&self, i: usize) -> &'a [f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for (x, &w) in self.points.chunks_exact(self.dim).zip(self.weights) {
            for (acc, &xi) in mean.iter_mut().zip(x) {
                *acc += w * xi;
            }
        }
        mean
    }

    /// `(Σ wᵢ‖xᵢ‖²)^{1/2}`
    pub fn second_moment(&self) -> f64 {
        self.points.chunks_exact(self.dim).zip(self.weights).map(|(x, &w)| w * norm_sq(x)).sum::<f64>().sqrt()
    }
}

/// A probability measure `Σ wᵢ δ_{xᵢ}` with finite support.
///
/// Points are stored row-major (`N × d`). Clones share storage and identity;
/// every constructor that changes points or weights yields a new identity.
#[derive(Clone, Debug)]
pub struct EmpiricalMeasure {
    id: u64,
    dim: usize,
    points: Arc<[f64]>,
    weights: Arc<[f64]>,
}

impl EmpiricalMeasure {
    pub fn new(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidMeasure("dimension must be at least 1".into()));
        }
        if weights.is_empty() {
            return Err(Error::InvalidMeasure("measure needs at least one atom".into()));
        }
        if points.len() != dim * weights.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} coordinates do not fit {} atoms of dimension {}",
                points.len(),
                weights.len(),
                dim
            )));
        }
        if let Some(x) = points.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidMeasure(format!("non-finite coordinate {x}")));
        }
        let weights = normalize_weights(weights)?;
        Ok(EmpiricalMeasure { id: fresh_id(), dim, points: points.into(), weights: weights.into() })
    }

    /// Equal weights on the given `N × d` points.
    pub fn uniform(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 || points.is_empty() || !points.len().is_multiple_of(dim) {
            return Err(Error::InvalidMeasure(format!(
                "{} coordinates do not form points of dimension {}",
                points.len(),
                dim
            )));
        }
        let n = points.len() / dim;
        Self::new(dim, points, vec![1.0 / n as f64; n])
    }

    pub fn dirac(point: &[f64]) -> Result<Self> {
        Self::new(point.len(), point.to_vec(), vec![1.0])
    }

    /// Same weights (shared), new positions. Positions must be finite.
    pub fn with_points(&self, points: Vec<f64>) -> Result<Self> {
        if points.len() != self.points.len() {
            return Err(Error::InvalidMeasure(format!(
                "expected {} coordinates, got {}",
                self.points.len(),
                points.len()
            )));
        }
        if let Some(x) = points.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidMeasure(format!("non-finite coordinate {x}")));
        }
        Ok(self.with_points_unchecked(points))
    }

    pub(crate) fn with_points_unchecked(&self, points: Vec<f64>) -> Self {
        EmpiricalMeasure { id: fresh_id(), dim: self.dim, points: points.into(), weights: Arc::clone(&self.weights) }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub(crate) fn shared_weights(&self) -> &Arc<[f64]> {
        &self.weights
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn view(&self) -> MeasureView<'_> {
        MeasureView::new(self.dim, &self.points, &self.weights)
    }

    pub fn mean(&self) -> Vec<f64> {
        self.view().mean()
    }

    pub fn second_moment(&self) -> f64 {
        self.view().second_moment()
    }

    /// Whether both measures have identical atoms and weights, compared as multisets.
    pub fn same_atoms(&self, other: &EmpiricalMeasure, tol: f64) -> bool {
        if self.dim != other.dim || self.len() != other.len() {
            return false;
        }
        let mut used = vec![false; other.len()];
        'outer: for i in 0..self.len() {
            for (j, taken) in used.iter_mut().enumerate() {
                if *taken || (self.weights[i] - other.weights[j]).abs() > tol {
                    continue;
                }
                let close = self.point(i).iter().zip(other.point(j)).all(|(a, b)| (a - b).abs() <= tol);
                if close {
                    *taken = true;
                    continue 'outer;
                }
            }
            return false;
        }
        true
    }
}

fn normalize_weights(mut weights: Vec<f64>) -> Result<Vec<f64>> {
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(Error::InvalidMeasure(format!("invalid weight {w}")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > RENORMALIZE_TOL {
        return Err(Error::InvalidMeasure(format!("weights sum to {total}, not 1")));
    }
    if (total - 1.0).abs() > WEIGHT_SUM_TOL {
        weights.iter_mut().for_each(|w| *w /= total);
    }
    let total: f64 = weights.iter().sum();
    debug_assert!((total - 1.0).abs() <= WEIGHT_SUM_TOL);
    Ok(weights)
}

pub(crate) fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// An element of `L²(m)`: one vector per support point of its base measure.
#[derive(Clone, Debug)]
pub struct L2Field {
    base: EmpiricalMeasure,
    vectors: Vec<f64>,
}

impl L2Field {
    pub fn new(base: &EmpiricalMeasure, vectors: Vec<f64>) -> Result<Self> {
        if vectors.len() != base.points().len() {
            return Err(Error::DimensionMismatch { expected: base.points().len(), found: vectors.len() });
        }
        if let Some(v) = vectors.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidMeasure(format!("non-finite field value {v}")));
        }
        Ok(L2Field { base: base.clone(), vectors })
    }

    pub fn zeros(base: &EmpiricalMeasure) -> Self {
        L2Field { base: base.clone(), vectors: vec![0.0; base.points().len()] }
    }

    pub fn constant(base: &EmpiricalMeasure, c: &[f64]) -> Result<Self> {
        if c.len() != base.dim() {
            return Err(Error::DimensionMismatch { expected: base.dim(), found: c.len() });
        }
        Self::new(base, c.repeat(base.len()))
    }

    pub fn identity(base: &EmpiricalMeasure) -> Self {
        L2Field { base: base.clone(), vectors: base.points().to_vec() }
    }

    /// Evaluates `g` at every support point.
    pub fn from_fn(base: &EmpiricalMeasure, mut g: impl FnMut(&[f64]) -> Vec<f64>) -> Result<Self> {
        let mut vectors = Vec::with_capacity(base.points().len());
        for i in 0..base.len() {
            let v = g(base.point(i));
            if v.len() != base.dim() {
                return Err(Error::DimensionMismatch { expected: base.dim(), found: v.len() });
            }
            vectors.extend(v);
        }
        Self::new(base, vectors)
    }

    pub fn base(&self) -> &EmpiricalMeasure {
        &self.base
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn vectors(&self) -> &[f64] {
        &self.vectors
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        let d = self.base.dim();
        &self.vectors[i * d..(i + 1) * d]
    }

    pub fn is_based_on(&self, m: &EmpiricalMeasure) -> bool {
        self.base.id() == m.id()
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        L2Field { base: self.base.clone(), vectors: self.vectors.iter().map(|v| alpha * v).collect() }
    }

    pub fn add(&self, other: &L2Field) -> Result<Self> {
        if self.base.id() != other.base.id() {
            return Err(Error::BaseMismatch);
        }
        Ok(L2Field {
            base: self.base.clone(),
            vectors: self.vectors.iter().zip(&other.vectors).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &L2Field) -> Result<Self> {
        self.add(&other.scaled(-1.0))
    }

    /// `‖s‖_{L²(m)}`
    pub fn norm(&self) -> f64 {
        let d = self.base.dim();
        self.vectors.chunks_exact(d).zip(self.base.weights()).map(|(v, &w)| w * norm_sq(v)).sum::<f64>().sqrt()
    }

    /// `∫ s dm`
    pub fn integral(&self) -> Vec<f64> {
        let d = self.base.dim();
        let mut acc = vec![0.0; d];
        for (v, &w) in self.vectors.chunks_exact(d).zip(self.base.weights()) {
            for (a, x) in acc.iter_mut().zip(v) {
                *a += w * x;
            }
        }
        acc
    }
}

pub fn second_moment(m: &EmpiricalMeasure) -> f64 {
    m.second_moment()
}

/// `(Id + step·F)♯m`: moves every atom along its field vector, weights unchanged.
pub fn push_forward(m: &EmpiricalMeasure, map: &L2Field, step: f64) -> Result<EmpiricalMeasure> {
    if !map.is_based_on(m) {
        return Err(Error::BaseMismatch);
    }
    if !step.is_finite() {
        return Err(Error::InvalidMeasure(format!("non-finite step {step}")));
    }
    let points = m.points().iter().zip(map.vectors()).map(|(x, f)| x + step * f).collect();
    m.with_points(points)
}

/// `⟨s₁, s₂⟩_m = Σ wᵢ ⟨s₁ᵢ, s₂ᵢ⟩`
pub fn inner_product_l2(s1: &L2Field, s2: &L2Field) -> Result<f64> {
    if s1.base.id() != s2.base.id() {
        return Err(Error::BaseMismatch);
    }
    let d = s1.dim();
    Ok(s1
        .vectors
        .chunks_exact(d)
        .zip(s2.vectors.chunks_exact(d))
        .zip(s1.base.weights())
        .map(|((a, b), &w)| w * dot(a, b))
        .sum())
}
