use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{estimate_value, SearchConfig, TimeValue};
use crate::dynamics::{eval_field, VectorField};
use crate::error::{Error, Result};
use crate::measures::{norm_sq, EmpiricalMeasure};
use crate::target::TargetSet;

#[derive(Clone, Debug, PartialEq)]
pub struct GammaConfig {
    pub n_list: Vec<usize>,
    /// Allowed excess in both inequalities, to absorb search and time error.
    pub slack: f64,
    /// Random `(x, m, u)` triples used to estimate `sup ‖f_n − f‖`.
    pub premise_samples: usize,
    /// Sampled atoms and positions lie in `[−r, r]^d`.
    pub premise_radius: f64,
    pub seed: u64,
}

impl GammaConfig {
    pub fn new(n_list: Vec<usize>, slack: f64) -> Self {
        GammaConfig { n_list, slack, premise_samples: 256, premise_radius: 2.0, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GammaRow {
    pub n: usize,
    /// Sampled `sup ‖f_n − f‖` over the premise box.
    pub premise_sup: f64,
    /// `Val_n(μ)`, the constant recovery sequence.
    pub value_recovery: TimeValue,
    /// `Val_n(μ_n)` along the supplied sequence, or the recovery value.
    pub value_liminf: TimeValue,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GammaReport {
    pub limit_value: TimeValue,
    pub rows: Vec<GammaRow>,
    pub premise_ok: bool,
    pub liminf_pass: bool,
    pub recovery_pass: bool,
    pub slack: f64,
}

impl GammaReport {
    pub fn pass(&self) -> bool {
        self.premise_ok && self.liminf_pass && self.recovery_pass
    }
}

fn premise_sup(f_n: &dyn VectorField, f: &dyn VectorField, search: &SearchConfig, cfg: &GammaConfig) -> f64 {
    let d = f.dim();
    let r = cfg.premise_radius;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sup: f64 = 0.0;
    for _ in 0..cfg.premise_samples {
        let atoms: Vec<f64> = (0..4 * d).map(|_| rng.gen_range(-r..=r)).collect();
        let m = EmpiricalMeasure::uniform(d, atoms).expect("finite sample");
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-r..=r)).collect();
        let u = search.grid.point(rng.gen_range(0..search.grid.len()));
        let a = eval_field(f_n, &x, &m, u);
        let b = eval_field(f, &x, &m, u);
        let diff: Vec<f64> = a.iter().zip(&b).map(|(p, q)| p - q).collect();
        sup = sup.max(norm_sq(&diff).sqrt());
    }
    sup
}

/// Runs the value search for every `n` of `cfg.n_list` on the family
/// `family(n) → f_n` and checks the two Γ-inequalities at `mu` against the
/// limit problem `f`, up to `cfg.slack`.
///
/// The liminf check compares `Val(μ)` with the smallest value over the upper
/// half of `n_list`; for an infinite limit it requires those values to be
/// infinite or nondecreasing in `n`. The recovery check uses the constant
/// sequence `μ_n = μ` and compares its value at the largest `n` with `Val(μ)`.
pub fn gamma_convergence_experiment(
    family: &dyn Fn(usize) -> Arc<dyn VectorField>,
    f: &dyn VectorField,
    mu: &EmpiricalMeasure,
    sequence: Option<&dyn Fn(usize) -> EmpiricalMeasure>,
    target: &TargetSet,
    search: &SearchConfig,
    cfg: &GammaConfig,
) -> Result<GammaReport> {
    if cfg.n_list.is_empty() || cfg.n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidSearch("n_list must be nonempty and increasing".into()));
    }
    let limit_value = estimate_value(mu, f, target, search)?.upper_bound;
    let mut rows = Vec::with_capacity(cfg.n_list.len());
    for &n in &cfg.n_list {
        let f_n = family(n);
        let value_recovery = estimate_value(mu, f_n.as_ref(), target, search)?.upper_bound;
        let value_liminf = match sequence {
            Some(seq) => estimate_value(&seq(n), f_n.as_ref(), target, search)?.upper_bound,
            None => value_recovery,
        };
        rows.push(GammaRow { n, premise_sup: premise_sup(f_n.as_ref(), f, search, cfg), value_recovery, value_liminf });
    }

    let sups: Vec<f64> = rows.iter().map(|r| r.premise_sup).collect();
    let first = sups[0];
    let last = *sups.last().unwrap();
    let premise_ok = sups.windows(2).all(|w| w[1] <= w[0] + 1e-12) && (last <= 1e-12 || last < first);

    let tail = &rows[rows.len() / 2..];
    let liminf_pass = match limit_value {
        TimeValue::Finite(_) => {
            let low = tail.iter().map(|r| r.value_liminf).fold(TimeValue::Infinite, |a, b| if b < a { b } else { a });
            limit_value.le_within(&low, cfg.slack)
        }
        TimeValue::Infinite => tail.windows(2).all(|w| w[0].value_liminf <= w[1].value_liminf),
    };
    let recovery_pass = rows.last().unwrap().value_recovery.le_within(&limit_value, cfg.slack);

    Ok(GammaReport { limit_value, rows, premise_ok, liminf_pass, recovery_pass, slack: cfg.slack })
}
