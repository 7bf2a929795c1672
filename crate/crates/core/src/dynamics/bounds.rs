//! A priori bounds along trajectories, with constants obtained from the
//! declared growth constant `C′` and the horizon by Gronwall's inequality.
//! These are derived bounds, not sharp constants.

use super::{Trajectory, VectorField};
use crate::measures::{dist_sq, norm_sq, w2_distance, EmpiricalMeasure};

/// Relative slack on every comparison, for rounding.
const REL_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AprioriConstants {
    /// `ς(m(t)) ≤ c0` with `c0 = (ς(μ) + C′T) e^{2C′T}`.
    pub c0: f64,
    /// `W₂(m(t), μ) ≤ c1 t` with `c1 = C′(1 + 2 c0)`.
    pub c1: f64,
    /// `‖X(t; y)‖ ≤ c3 (1 + ‖y‖)` with `c3 = (1 + C′(1 + c0)T) e^{C′T}`.
    pub c3: f64,
    /// `‖X(t; y) − y‖ ≤ c4 (1 + ‖y‖) t` with `c4 = C′(1 + c0 + c3)`.
    pub c4: f64,
}

impl AprioriConstants {
    pub fn new(growth: f64, initial_moment: f64, horizon: f64) -> Self {
        let ct = growth * horizon;
        let c0 = (initial_moment + ct) * (2.0 * ct).exp();
        let c1 = growth * (1.0 + 2.0 * c0);
        let c3 = (1.0 + growth * (1.0 + c0) * horizon) * ct.exp();
        let c4 = growth * (1.0 + c0 + c3);
        AprioriConstants { c0, c1, c3, c4 }
    }
}

#[derive(Clone, Debug)]
pub struct BoundStep {
    pub t: f64,
    pub moment: f64,
    pub moment_bound: f64,
    /// Upper estimate of `W₂(m(t), μ)`: the path coupling cost, or the exact
    /// distance when the coupling alone does not certify the bound.
    pub w2: f64,
    pub w2_bound: f64,
    /// `max_i ‖X_i(t)‖ / (c3 (1 + ‖y_i‖))`
    pub position_ratio: f64,
    /// `max_i ‖X_i(t) − y_i‖ / (c4 (1 + ‖y_i‖) t)`, zero at `t = 0`.
    pub displacement_ratio: f64,
}

impl BoundStep {
    fn le(value: f64, bound: f64) -> bool {
        value <= bound * (1.0 + REL_TOL) + REL_TOL
    }

    pub fn moment_holds(&self) -> bool {
        Self::le(self.moment, self.moment_bound)
    }

    pub fn w2_holds(&self) -> bool {
        Self::le(self.w2, self.w2_bound)
    }

    pub fn position_holds(&self) -> bool {
        Self::le(self.position_ratio, 1.0)
    }

    pub fn displacement_holds(&self) -> bool {
        Self::le(self.displacement_ratio, 1.0)
    }

    pub fn all_hold(&self) -> bool {
        self.moment_holds() && self.w2_holds() && self.position_holds() && self.displacement_holds()
    }
}

#[derive(Clone, Debug)]
pub struct BoundReport {
    pub constants: AprioriConstants,
    pub steps: Vec<BoundStep>,
}

impl BoundReport {
    pub fn all_hold(&self) -> bool {
        self.steps.iter().all(BoundStep::all_hold)
    }

    /// Grid times at which at least one bound fails.
    pub fn violations(&self) -> Vec<f64> {
        self.steps.iter().filter(|s| !s.all_hold()).map(|s| s.t).collect()
    }

    /// Smallest relative slack `1 − value/bound` over all steps and bounds.
    pub fn min_slack(&self) -> f64 {
        let rel = |v: f64, b: f64| {
            if b > 0.0 {
                1.0 - v / b
            } else if v > 0.0 {
                f64::NEG_INFINITY
            } else {
                1.0
            }
        };
        self.steps
            .iter()
            .map(|s| {
                rel(s.moment, s.moment_bound)
                    .min(if s.t > 0.0 { rel(s.w2, s.w2_bound) } else { 1.0 })
                    .min(1.0 - s.position_ratio)
                    .min(1.0 - s.displacement_ratio)
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Checks the moment, W₂-displacement and pointwise bounds at every grid time
/// of `traj`, which must start from `mu`.
pub fn check_apriori_bounds(traj: &Trajectory, f: &dyn VectorField, mu: &EmpiricalMeasure) -> BoundReport {
    let constants = AprioriConstants::new(f.growth(), mu.second_moment(), traj.horizon());
    let start = traj.initial();
    let weights = start.weights();
    let mut steps = Vec::with_capacity(traj.measures().len());
    for (&t, m) in traj.times().iter().zip(traj.measures()) {
        let moment = m.second_moment();
        let w2_bound = constants.c1 * t;
        let coupling: f64 = (0..m.len()).map(|i| weights[i] * dist_sq(m.point(i), start.point(i))).sum::<f64>().sqrt();
        let w2 = if BoundStep::le(coupling, w2_bound) {
            coupling
        } else {
            w2_distance(m, mu).map(|(c, _)| c).unwrap_or(coupling)
        };
        let mut position_ratio: f64 = 0.0;
        let mut displacement_ratio: f64 = 0.0;
        for i in 0..m.len() {
            let y = start.point(i);
            let scale = 1.0 + norm_sq(y).sqrt();
            position_ratio = position_ratio.max(norm_sq(m.point(i)).sqrt() / (constants.c3 * scale));
            let moved = dist_sq(m.point(i), y).sqrt();
            if moved > 0.0 {
                let bound = constants.c4 * scale * t;
                displacement_ratio = displacement_ratio.max(if bound > 0.0 { moved / bound } else { f64::INFINITY });
            }
        }
        steps.push(BoundStep {
            t,
            moment,
            moment_bound: constants.c0,
            w2,
            w2_bound,
            position_ratio,
            displacement_ratio,
        });
    }
    BoundReport { constants, steps }
}
