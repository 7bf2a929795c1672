//! Upper-bound estimates of the minimal time function by searching finite
//! families of piecewise-constant controls, plus the Kruzhkov transform,
//! dilated-target values, a dynamic-programming residual and the
//! Γ-convergence experiment.

mod gamma;
mod report;

use std::cmp::Ordering;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dynamics::{integrate, step_count, ControlGrid, RelaxedControl, VectorField};
use crate::error::{Error, Result};
use crate::measures::EmpiricalMeasure;
use crate::target::{first_hit, HitStatus, HittingResult, TargetSet};

pub use gamma::{gamma_convergence_experiment, GammaConfig, GammaReport, GammaRow};
pub use report::{summary_json, write_candidates_csv, write_gamma_csv};

/// A minimal time, possibly `+∞`. Finite values order below `Infinite`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TimeValue {
    Finite(f64),
    Infinite,
}

impl TimeValue {
    pub fn is_finite(&self) -> bool {
        matches!(self, TimeValue::Finite(_))
    }

    pub fn finite(&self) -> Option<f64> {
        match self {
            TimeValue::Finite(v) => Some(*v),
            TimeValue::Infinite => None,
        }
    }

    /// The hit time, or `Infinite` for a censored search.
    pub fn from_hit(hit: &HittingResult) -> Self {
        match hit.status {
            HitStatus::Hit => TimeValue::Finite(hit.time),
            HitStatus::Censored => TimeValue::Infinite,
        }
    }

    /// `self ≤ other + slack`, with `∞ ≤ ∞`.
    pub fn le_within(&self, other: &TimeValue, slack: f64) -> bool {
        match (self, other) {
            (_, TimeValue::Infinite) => true,
            (TimeValue::Infinite, TimeValue::Finite(_)) => false,
            (TimeValue::Finite(a), TimeValue::Finite(b)) => *a <= b + slack,
        }
    }
}

impl PartialOrd for TimeValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (TimeValue::Finite(a), TimeValue::Finite(b)) => a.partial_cmp(b),
            (TimeValue::Finite(_), TimeValue::Infinite) => Some(Ordering::Less),
            (TimeValue::Infinite, TimeValue::Finite(_)) => Some(Ordering::Greater),
            (TimeValue::Infinite, TimeValue::Infinite) => Some(Ordering::Equal),
        }
    }
}

impl fmt::Display for TimeValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeValue::Finite(v) => fmt::Display::fmt(v, f),
            TimeValue::Infinite => f.write_str("inf"),
        }
    }
}

/// `1 − e^{−v}`, with `∞ ↦ 1`.
pub fn kruzhkov(v: TimeValue) -> Result<f64> {
    match v {
        TimeValue::Infinite => Ok(1.0),
        TimeValue::Finite(x) if x.is_nan() || x < 0.0 => Err(Error::NegativeValue(x)),
        TimeValue::Finite(x) => Ok(-(-x).exp_m1()),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SearchStrategy {
    /// Every constant control on the grid.
    ConstantGrid,
    /// `samples` random controls with `segments` equal pieces. Sample `i` comes
    /// from its own stream of the seeded generator, so smaller sample counts
    /// give nested candidate sets.
    PiecewiseShooting { samples: usize, segments: usize, seed: u64 },
    /// Coordinate descent over segment values, started from the best of the
    /// constant controls and `samples` shooting candidates.
    Refine { samples: usize, segments: usize, seed: u64, sweeps: usize },
}

impl SearchStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            SearchStrategy::ConstantGrid => "constant",
            SearchStrategy::PiecewiseShooting { .. } => "shooting",
            SearchStrategy::Refine { .. } => "refine",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            SearchStrategy::ConstantGrid => None,
            SearchStrategy::PiecewiseShooting { seed, .. } | SearchStrategy::Refine { seed, .. } => Some(*seed),
        }
    }

    pub fn segments(&self) -> usize {
        match self {
            SearchStrategy::ConstantGrid => 1,
            SearchStrategy::PiecewiseShooting { segments, .. } | SearchStrategy::Refine { segments, .. } => *segments,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SearchConfig {
    pub horizon: f64,
    pub dt: f64,
    pub grid: ControlGrid,
    pub strategy: SearchStrategy,
}

impl SearchConfig {
    pub fn new(horizon: f64, dt: f64, grid: ControlGrid, strategy: SearchStrategy) -> Self {
        SearchConfig { horizon, dt, grid, strategy }
    }

    pub fn constant_grid(horizon: f64, dt: f64, grid: ControlGrid) -> Self {
        Self::new(horizon, dt, grid, SearchStrategy::ConstantGrid)
    }

    pub fn with_strategy(mut self, strategy: SearchStrategy) -> Self {
        self.strategy = strategy;
        self
    }
}

/// One evaluated control.
#[derive(Clone, Debug)]
pub struct CandidateOutcome {
    pub id: usize,
    pub strategy: &'static str,
    /// Grid index held on each equal segment of `[0, T]`.
    pub segments: Vec<usize>,
    pub summary: String,
    pub hit: HittingResult,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchManifest {
    pub strategy: &'static str,
    pub candidates: usize,
    pub horizon: f64,
    pub dt: f64,
    pub grid_size: usize,
    pub segments: usize,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug)]
pub struct ValueEstimate {
    pub upper_bound: TimeValue,
    pub best_control: RelaxedControl,
    pub hit: HittingResult,
    /// Index into `candidates`, `None` when the initial measure is in the target.
    pub best: Option<usize>,
    pub candidates: Vec<CandidateOutcome>,
    pub manifest: SearchManifest,
}

impl ValueEstimate {
    /// Re-integrates `best_control` from `mu` and returns the hitting result.
    pub fn replay(&self, mu: &EmpiricalMeasure, f: &dyn VectorField, target: &TargetSet) -> Result<HittingResult> {
        if self.best_control.steps() == 0 {
            return Ok(self.hit.clone());
        }
        first_hit(mu, &self.best_control, f, target, self.manifest.horizon, self.manifest.dt)
    }
}

fn better(a: &HittingResult, b: &HittingResult) -> bool {
    match (a.is_hit(), b.is_hit()) {
        (true, false) => true,
        (true, true) => a.time < b.time,
        _ => false,
    }
}

fn control_for(grid: &ControlGrid, dt: f64, steps: usize, segments: &[usize]) -> Result<RelaxedControl> {
    let k = segments.len();
    let indices: Vec<usize> = (0..steps).map(|s| segments[s * k / steps]).collect();
    RelaxedControl::ordinary(grid.clone(), dt, &indices)
}

struct Search<'a> {
    mu: &'a EmpiricalMeasure,
    f: &'a dyn VectorField,
    target: &'a TargetSet,
    cfg: &'a SearchConfig,
    steps: usize,
    outcomes: Vec<CandidateOutcome>,
}

impl Search<'_> {
    fn evaluate(&mut self, strategy: &'static str, batch: Vec<Vec<usize>>) -> Result<Vec<usize>> {
        let cfg = self.cfg;
        let (mu, f, target, steps) = (self.mu, self.f, self.target, self.steps);
        let results: Vec<(String, HittingResult)> = batch
            .par_iter()
            .map(|segs| {
                let xi = control_for(&cfg.grid, cfg.dt, steps, segs)?;
                let hit = first_hit(mu, &xi, f, target, cfg.horizon, cfg.dt)?;
                Ok((xi.summary(), hit))
            })
            .collect::<Result<_>>()?;
        let first = self.outcomes.len();
        for (segments, (summary, hit)) in batch.into_iter().zip(results) {
            let id = self.outcomes.len();
            self.outcomes.push(CandidateOutcome { id, strategy, segments, summary, hit });
        }
        Ok((first..self.outcomes.len()).collect())
    }

    fn best_of(&self, ids: impl IntoIterator<Item = usize>, incumbent: Option<usize>) -> Option<usize> {
        let mut best = incumbent;
        for id in ids {
            match best {
                Some(b) if !better(&self.outcomes[id].hit, &self.outcomes[b].hit) => {}
                _ => best = Some(id),
            }
        }
        best
    }
}

fn shooting_batch(samples: usize, segments: usize, seed: u64, grid_size: usize) -> Vec<Vec<usize>> {
    (0..samples)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            (0..segments).map(|_| rng.gen_range(0..grid_size)).collect()
        })
        .collect()
}

/// Best hitting time over the candidate controls of `cfg.strategy`, which is
/// an upper bound for the minimal time up to time discretisation. All
/// candidates are kept with their outcomes; ties go to the lowest id.
pub fn estimate_value(
    mu: &EmpiricalMeasure,
    f: &dyn VectorField,
    target: &TargetSet,
    cfg: &SearchConfig,
) -> Result<ValueEstimate> {
    let steps = step_count(cfg.horizon, cfg.dt)?;
    let segments = cfg.strategy.segments();
    if segments == 0 || segments > steps {
        return Err(Error::InvalidSearch(format!("{segments} segments on {steps} time steps")));
    }
    if let SearchStrategy::PiecewiseShooting { samples: 0, .. } = cfg.strategy {
        return Err(Error::InvalidSearch("shooting needs at least one sample".into()));
    }
    if f.dim() != mu.dim() {
        return Err(Error::DimensionMismatch { expected: f.dim(), found: mu.dim() });
    }
    let manifest = |candidates: usize| SearchManifest {
        strategy: cfg.strategy.name(),
        candidates,
        horizon: cfg.horizon,
        dt: cfg.dt,
        grid_size: cfg.grid.len(),
        segments,
        seed: cfg.strategy.seed(),
    };

    if target.contains(mu)? {
        return Ok(ValueEstimate {
            upper_bound: TimeValue::Finite(0.0),
            best_control: RelaxedControl::new(cfg.grid.clone(), cfg.dt, Vec::new())?,
            hit: HittingResult { status: HitStatus::Hit, time: 0.0, bracket: (0, 0), bracket_times: (0.0, 0.0) },
            best: None,
            candidates: Vec::new(),
            manifest: manifest(0),
        });
    }

    let grid_size = cfg.grid.len();
    let mut search = Search { mu, f, target, cfg, steps, outcomes: Vec::new() };
    let best = match cfg.strategy {
        SearchStrategy::ConstantGrid => {
            let ids = search.evaluate("constant", (0..grid_size).map(|j| vec![j]).collect())?;
            search.best_of(ids, None)
        }
        SearchStrategy::PiecewiseShooting { samples, segments, seed } => {
            let ids = search.evaluate("shooting", shooting_batch(samples, segments, seed, grid_size))?;
            search.best_of(ids, None)
        }
        SearchStrategy::Refine { samples, segments, seed, sweeps } => {
            let start: Vec<Vec<usize>> = (0..grid_size)
                .map(|j| vec![j; segments])
                .chain(shooting_batch(samples, segments, seed, grid_size))
                .collect();
            let ids = search.evaluate("refine", start)?;
            let mut best = search.best_of(ids, None);
            for _ in 0..sweeps {
                let mut improved = false;
                for s in 0..segments {
                    let inc = best.expect("nonempty start set");
                    let hit = &search.outcomes[inc].hit;
                    let seg_start = (s * steps).div_ceil(segments) as f64 * cfg.dt;
                    if hit.is_hit() && seg_start >= hit.bracket_times.1 {
                        break;
                    }
                    let current = search.outcomes[inc].segments.clone();
                    let batch: Vec<Vec<usize>> = (0..grid_size)
                        .filter(|&j| j != current[s])
                        .map(|j| {
                            let mut v = current.clone();
                            v[s] = j;
                            v
                        })
                        .collect();
                    let ids = search.evaluate("refine", batch)?;
                    let next = search.best_of(ids, best);
                    if next != best {
                        best = next;
                        improved = true;
                    }
                }
                if !improved {
                    break;
                }
            }
            best
        }
    };
    let best = best.expect("at least one candidate");
    let outcome = &search.outcomes[best];
    let best_control = control_for(&cfg.grid, cfg.dt, steps, &outcome.segments)?;
    Ok(ValueEstimate {
        upper_bound: TimeValue::from_hit(&outcome.hit),
        best_control,
        hit: outcome.hit.clone(),
        best: Some(best),
        manifest: manifest(search.outcomes.len()),
        candidates: search.outcomes,
    })
}

/// Value for the target dilated by `eps ≥ 0`.
pub fn epsilon_value(
    mu: &EmpiricalMeasure,
    eps: f64,
    f: &dyn VectorField,
    target: &TargetSet,
    cfg: &SearchConfig,
) -> Result<ValueEstimate> {
    estimate_value(mu, f, &target.dilated(eps)?, cfg)
}

/// `V(μ) − (h + min_u V(m_u(h)))` where `m_u` follows the constant control `u`
/// of the grid on `[0, h]` and `V` is the estimate of `cfg`. Zero for `h = 0`.
pub fn dpp_residual(
    mu: &EmpiricalMeasure,
    h: f64,
    f: &dyn VectorField,
    target: &TargetSet,
    cfg: &SearchConfig,
) -> Result<f64> {
    if h == 0.0 {
        return Ok(0.0);
    }
    let value = match estimate_value(mu, f, target, cfg)?.upper_bound {
        TimeValue::Infinite => return Err(Error::InfiniteValue),
        TimeValue::Finite(v) => v,
    };
    if h > value + 1e-12 {
        return Err(Error::StepExceedsValue { h, value });
    }
    let steps = step_count(h, cfg.dt)?;
    let continuations: Vec<TimeValue> = (0..cfg.grid.len())
        .into_par_iter()
        .map(|j| {
            let xi = RelaxedControl::constant(cfg.grid.clone(), cfg.dt, steps, j)?;
            let traj = integrate(mu, &xi, f, h, cfg.dt)?;
            Ok(estimate_value(traj.terminal(), f, target, cfg)?.upper_bound)
        })
        .collect::<Result<_>>()?;
    let inner = continuations.into_iter().fold(TimeValue::Infinite, |a, b| if b < a { b } else { a });
    Ok(match inner {
        TimeValue::Finite(v) => value - (h + v),
        TimeValue::Infinite => f64::NEG_INFINITY,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::AffineMeanField;
    use crate::example::{analytic_value, MeanDriftProblem};
    use std::f64::consts::LN_2;

    fn mean_cloud(mean: f64) -> EmpiricalMeasure {
        EmpiricalMeasure::uniform(1, vec![mean - 0.5, mean, mean + 0.5]).unwrap()
    }

    fn cfg(strategy: SearchStrategy) -> SearchConfig {
        let grid = MeanDriftProblem.control_grid(11).unwrap();
        SearchConfig::new(2.0, 0.005, grid, strategy)
    }

    #[test]
    fn kruzhkov_values() {
        assert_eq!(kruzhkov(TimeValue::Finite(0.0)).unwrap(), 0.0);
        assert_eq!(kruzhkov(TimeValue::Infinite).unwrap(), 1.0);
        assert!((kruzhkov(TimeValue::Finite(LN_2)).unwrap() - 0.5).abs() < 1e-15);
        assert!(kruzhkov(TimeValue::Finite(-1.0)).is_err());
    }

    #[test]
    fn time_value_order() {
        assert!(TimeValue::Finite(1e300) < TimeValue::Infinite);
        assert!(TimeValue::Finite(1.0) < TimeValue::Finite(2.0));
        assert!(TimeValue::Infinite.le_within(&TimeValue::Infinite, 0.0));
        assert!(!TimeValue::Infinite.le_within(&TimeValue::Finite(3.0), 1.0));
        assert_eq!(TimeValue::Infinite.to_string(), "inf");
    }

    #[test]
    fn constant_grid_recovers_ln2() {
        let p = MeanDriftProblem;
        let est =
            estimate_value(&mean_cloud(1.0), &p.field(), &p.target(), &cfg(SearchStrategy::ConstantGrid)).unwrap();
        let v = est.upper_bound.finite().unwrap();
        assert!((v - LN_2).abs() < 2e-3, "{v}");
        assert_eq!(est.best_control.summary(), "constant -1");
        assert_eq!(est.candidates.len(), 11);
        assert_eq!(est.manifest.candidates, 11);
    }

    #[test]
    fn inside_target_is_zero() {
        let p = MeanDriftProblem;
        let est =
            estimate_value(&mean_cloud(0.0), &p.field(), &p.target(), &cfg(SearchStrategy::ConstantGrid)).unwrap();
        assert_eq!(est.upper_bound, TimeValue::Finite(0.0));
        assert_eq!(est.best_control.steps(), 0);
        assert!(est.candidates.is_empty());
    }

    #[test]
    fn unreachable_is_infinite() {
        let p = MeanDriftProblem;
        let est =
            estimate_value(&mean_cloud(-0.5), &p.field(), &p.target(), &cfg(SearchStrategy::ConstantGrid)).unwrap();
        assert_eq!(est.upper_bound, TimeValue::Infinite);
        assert_eq!(analytic_value(-0.5), TimeValue::Infinite);
    }

    #[test]
    fn invalid_configs() {
        let p = MeanDriftProblem;
        let mut c = cfg(SearchStrategy::ConstantGrid);
        c.horizon = 0.0;
        assert!(matches!(estimate_value(&mean_cloud(1.0), &p.field(), &p.target(), &c), Err(Error::InvalidHorizon(_))));
        let c = cfg(SearchStrategy::PiecewiseShooting { samples: 0, segments: 4, seed: 1 });
        assert!(estimate_value(&mean_cloud(1.0), &p.field(), &p.target(), &c).is_err());
    }

    #[test]
    fn shooting_is_deterministic_and_nested() {
        let p = MeanDriftProblem;
        let mu = mean_cloud(0.5);
        let run = |samples| {
            let c = cfg(SearchStrategy::PiecewiseShooting { samples, segments: 4, seed: 7 });
            estimate_value(&mu, &p.field(), &p.target(), &c).unwrap()
        };
        let small = run(8);
        let large = run(32);
        for (a, b) in small.candidates.iter().zip(&large.candidates) {
            assert_eq!(a.segments, b.segments);
            assert_eq!(a.hit, b.hit);
        }
        assert!(large.upper_bound <= small.upper_bound);
        let again = run(32);
        assert_eq!(again.upper_bound, large.upper_bound);
        assert_eq!(again.best, large.best);
    }

    #[test]
    fn refine_never_worse_than_constants() {
        let p = MeanDriftProblem;
        let mu = mean_cloud(0.8);
        let constant = estimate_value(&mu, &p.field(), &p.target(), &cfg(SearchStrategy::ConstantGrid)).unwrap();
        let refine = SearchStrategy::Refine { samples: 4, segments: 4, seed: 3, sweeps: 2 };
        let refined = estimate_value(&mu, &p.field(), &p.target(), &cfg(refine)).unwrap();
        assert!(refined.upper_bound <= constant.upper_bound);
    }

    #[test]
    fn replay_reproduces_hit() {
        let p = MeanDriftProblem;
        let mu = mean_cloud(0.6);
        let c = cfg(SearchStrategy::PiecewiseShooting { samples: 16, segments: 5, seed: 11 });
        let est = estimate_value(&mu, &p.field(), &p.target(), &c).unwrap();
        let replay = est.replay(&mu, &p.field(), &p.target()).unwrap();
        assert_eq!(replay, est.hit);
    }

    #[test]
    fn epsilon_value_is_monotone() {
        let p = MeanDriftProblem;
        let mu = mean_cloud(1.0);
        let c = cfg(SearchStrategy::ConstantGrid);
        let mut last = TimeValue::Finite(f64::INFINITY);
        for eps in [0.0, 0.05, 0.1, 0.3] {
            let v = epsilon_value(&mu, eps, &p.field(), &p.target(), &c).unwrap().upper_bound;
            assert!(v <= last);
            last = v;
        }
        let v = last.finite().unwrap();
        assert!((v - (2.0f64 / 1.3).ln()).abs() < 2e-3, "{v}");
    }

    #[test]
    fn dpp_residual_is_small_and_guards() {
        let p = MeanDriftProblem;
        let mu = mean_cloud(1.0);
        let c = cfg(SearchStrategy::ConstantGrid);
        assert_eq!(dpp_residual(&mu, 0.0, &p.field(), &p.target(), &c).unwrap(), 0.0);
        for h in [0.1, 0.3, 0.6] {
            let r = dpp_residual(&mu, h, &p.field(), &p.target(), &c).unwrap();
            assert!(r.abs() < 1e-2, "h={h}: {r}");
        }
        assert!(matches!(dpp_residual(&mu, 1.0, &p.field(), &p.target(), &c), Err(Error::StepExceedsValue { .. })));
        assert!(matches!(dpp_residual(&mean_cloud(-0.5), 0.1, &p.field(), &p.target(), &c), Err(Error::InfiniteValue)));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let m = EmpiricalMeasure::dirac(&[1.0, 1.0]).unwrap();
        let c = cfg(SearchStrategy::ConstantGrid);
        assert!(estimate_value(&m, &AffineMeanField::mean_drift(), &TargetSet::zero_mean(1), &c).is_err());
    }
}
