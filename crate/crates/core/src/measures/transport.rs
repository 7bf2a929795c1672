use super::{assignment, dist_sq, simplex, EmpiricalMeasure, L2Field};
use crate::error::{Error, Result};

/// Marginal tolerance for a coupling.
pub const PLAN_MARGINAL_TOL: f64 = 1e-10;

/// A coupling `π ∈ Π(source, target)` stored as a dense `N₁ × N₂` matrix.
#[derive(Clone, Debug)]
pub struct TransportPlan {
    matrix: Vec<f64>,
    source: EmpiricalMeasure,
    target: EmpiricalMeasure,
}

impl TransportPlan {
    pub fn new(source: &EmpiricalMeasure, target: &EmpiricalMeasure, matrix: Vec<f64>) -> Result<Self> {
        let (n1, n2) = (source.len(), target.len());
        if source.dim() != target.dim() {
            return Err(Error::DimensionMismatch { expected: source.dim(), found: target.dim() });
        }
        if matrix.len() != n1 * n2 {
            return Err(Error::InvalidPlan(format!("matrix has {} entries, expected {}x{}", matrix.len(), n1, n2)));
        }
        if let Some(x) = matrix.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(Error::InvalidPlan(format!("invalid mass {x}")));
        }
        for i in 0..n1 {
            let row: f64 = matrix[i * n2..(i + 1) * n2].iter().sum();
            if (row - source.weights()[i]).abs() > PLAN_MARGINAL_TOL {
                return Err(Error::InvalidPlan(format!("row {i} sums to {row}")));
            }
        }
        for j in 0..n2 {
            let col: f64 = (0..n1).map(|i| matrix[i * n2 + j]).sum();
            if (col - target.weights()[j]).abs() > PLAN_MARGINAL_TOL {
                return Err(Error::InvalidPlan(format!("column {j} sums to {col}")));
            }
        }
        Ok(TransportPlan { matrix, source: source.clone(), target: target.clone() })
    }

    /// The product coupling `source ⊗ target`.
    pub fn independent(source: &EmpiricalMeasure, target: &EmpiricalMeasure) -> Result<Self> {
        let matrix = source.weights().iter().flat_map(|&a| target.weights().iter().map(move |&b| a * b)).collect();
        Self::new(source, target, matrix)
    }

    pub fn source(&self) -> &EmpiricalMeasure {
        &self.source
    }

    pub fn target(&self) -> &EmpiricalMeasure {
        &self.target
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn mass(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.target.len() + j]
    }

    /// `∫ ‖x − y‖² dπ`
    pub fn cost(&self) -> f64 {
        let n2 = self.target.len();
        let mut total = 0.0;
        for i in 0..self.source.len() {
            for j in 0..n2 {
                let p = self.matrix[i * n2 + j];
                if p > 0.0 {
                    total += p * dist_sq(self.source.point(i), self.target.point(j));
                }
            }
        }
        total
    }
}

fn is_uniform(m: &EmpiricalMeasure) -> bool {
    let w = 1.0 / m.len() as f64;
    m.weights().iter().all(|&x| (x - w).abs() <= 1e-14)
}

/// Exact `W₂(m₁, m₂)` and an optimal plan.
///
/// Equal-cardinality uniform measures go through the assignment solver; all
/// other weightings through the transportation simplex.
pub fn w2_distance(m1: &EmpiricalMeasure, m2: &EmpiricalMeasure) -> Result<(f64, TransportPlan)> {
    if m1.dim() != m2.dim() {
        return Err(Error::DimensionMismatch { expected: m1.dim(), found: m2.dim() });
    }
    let (n1, n2) = (m1.len(), m2.len());
    let mut costs = Vec::with_capacity(n1 * n2);
    for i in 0..n1 {
        for j in 0..n2 {
            costs.push(dist_sq(m1.point(i), m2.point(j)));
        }
    }

    let matrix = if n1 == n2 && is_uniform(m1) && is_uniform(m2) {
        let assignment = assignment::solve(n1, &costs);
        let mut matrix = vec![0.0; n1 * n2];
        for (i, &j) in assignment.iter().enumerate() {
            matrix[i * n2 + j] = m1.weights()[i];
        }
        matrix
    } else {
        simplex::solve(m1.weights(), m2.weights(), &costs)?
    };

    let plan = TransportPlan::new(m1, m2, matrix)?;
    Ok((plan.cost().max(0.0).sqrt(), plan))
}

/// `ϑ̂(xᵢ) = xᵢ − (Σⱼ πᵢⱼ yⱼ) / (Σⱼ πᵢⱼ)`, zero on rows without mass.
pub fn barycentric_displacement(plan: &TransportPlan) -> L2Field {
    let (src, tgt) = (&plan.source, &plan.target);
    let d = src.dim();
    let n2 = tgt.len();
    let mut vectors = Vec::with_capacity(src.points().len());
    for i in 0..src.len() {
        let row = &plan.matrix[i * n2..(i + 1) * n2];
        let mass: f64 = row.iter().sum();
        if mass <= 0.0 {
            vectors.extend(std::iter::repeat_n(0.0, d));
            continue;
        }
        let mut bary = vec![0.0; d];
        for (j, &p) in row.iter().enumerate() {
            if p > 0.0 {
                for (b, y) in bary.iter_mut().zip(tgt.point(j)) {
                    *b += p * y;
                }
            }
        }
        for (x, b) in src.point(i).iter().zip(&bary) {
            vectors.push(x - b / mass);
        }
    }
    L2Field::new(src, vectors).expect("displacement has the source layout")
}
