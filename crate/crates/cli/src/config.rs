use std::path::PathBuf;

use anyhow::{bail, ensure, Context, Result};
use measure_toc::dynamics::{AffineMeanField, ControlGrid};
use measure_toc::measures::EmpiricalMeasure;
use measure_toc::target::TargetSet;
use measure_toc::value::{SearchConfig, SearchStrategy};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub numerics: Numerics,
    pub search: Search,
    pub output: Output,
    pub simulate: Simulate,
    pub hjb: Hjb,
    pub gamma: Gamma,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Dynamics {
    MeanDrift,
    Affine,
    Zero,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum TargetKind {
    ZeroMean,
    Hyperplane,
    Ball,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Problem {
    pub dim: usize,
    pub dynamics: Dynamics,
    /// `f = g·u + a·x + b·mean(m) + c`, used when `dynamics = "affine"`.
    pub control_gain: f64,
    pub self_coeff: f64,
    pub mean_coeff: f64,
    pub drift: Vec<f64>,
    pub control_bound: f64,
    /// Constant added to every drift component.
    pub offset: f64,
    pub target: TargetKind,
    pub direction: Vec<f64>,
    pub level: f64,
    /// Flattened `N × d` atoms of the ball centre, uniform weights.
    pub ball_center: Vec<f64>,
    pub ball_radius: f64,
    pub initial: Initial,
}

impl Default for Problem {
    fn default() -> Self {
        Problem {
            dim: 1,
            dynamics: Dynamics::MeanDrift,
            control_gain: 1.0,
            self_coeff: 0.0,
            mean_coeff: -1.0,
            drift: vec![0.0],
            control_bound: 1.0,
            offset: 0.0,
            target: TargetKind::ZeroMean,
            direction: vec![1.0],
            level: 0.0,
            ball_center: Vec::new(),
            ball_radius: 0.0,
            initial: Initial::default(),
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Initial {
    /// Gaussian atoms shifted to this exact mean, unless `points` is given.
    pub mean: Vec<f64>,
    pub spread: f64,
    pub seed: u64,
    /// Explicit flattened atoms; overrides the Gaussian sample.
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Default for Initial {
    fn default() -> Self {
        Initial { mean: vec![1.0], spread: 0.5, seed: 0, points: Vec::new(), weights: Vec::new() }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Controls {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// Explicit control points; overrides `lo`, `hi`, `count`.
    pub points: Vec<Vec<f64>>,
}

impl Default for Controls {
    fn default() -> Self {
        Controls { lo: -1.0, hi: 0.0, count: 11, points: Vec::new() }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    pub particles: usize,
    pub dt: f64,
    pub horizon: f64,
    pub controls: Controls,
    /// Membership tolerance η of the target.
    pub eta: f64,
    pub dilation: f64,
    /// Residual tolerance for hjb-check and closed-form comparisons.
    pub tolerance: f64,
    /// Value tolerance for example-verify and the Γ-convergence slack.
    pub value_tolerance: f64,
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics {
            particles: 100,
            dt: 1e-3,
            horizon: 3.0,
            controls: Controls::default(),
            eta: measure_toc::target::DEFAULT_MEMBERSHIP_TOL,
            dilation: 0.0,
            tolerance: 1e-8,
            value_tolerance: 2e-2,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Constant,
    Shooting,
    Refine,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Search {
    pub strategy: Strategy,
    pub samples: usize,
    pub segments: usize,
    pub sweeps: usize,
    pub seed: Option<u64>,
}

impl Default for Search {
    fn default() -> Self {
        Search { strategy: Strategy::Constant, samples: 32, segments: 4, sweeps: 3, seed: None }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Output {
    pub dir: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for Output {
    fn default() -> Self {
        Output { dir: PathBuf::from("out"), formats: vec![Format::Csv, Format::Json] }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Simulate {
    /// Grid index held on each equal piece of `[0, horizon]`.
    pub segments: Vec<usize>,
    pub check_bounds: bool,
}

impl Default for Simulate {
    fn default() -> Self {
        Simulate { segments: vec![0], check_bounds: true }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Hjb {
    /// Means of the test measures, each a shifted copy of the initial sample.
    pub means: Vec<f64>,
    pub seed: u64,
}

impl Default for Hjb {
    fn default() -> Self {
        Hjb { means: vec![0.5, 1.0, 2.0, 3.0], seed: 0 }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Gamma {
    pub n_list: Vec<usize>,
}

impl Default for Gamma {
    fn default() -> Self {
        Gamma { n_list: vec![5, 10, 20, 40, 80] }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).context("invalid config")?;
        Ok(cfg)
    }

    pub fn apply_seed(&mut self, seed: u64) {
        self.search.seed = Some(seed);
        self.problem.initial.seed = seed;
        self.hjb.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        let n = &self.numerics;
        for (name, v) in [
            ("numerics.dt", n.dt),
            ("numerics.horizon", n.horizon),
            ("numerics.eta", n.eta),
            ("numerics.tolerance", n.tolerance),
            ("numerics.value_tolerance", n.value_tolerance),
        ] {
            ensure!(v > 0.0 && v.is_finite(), "{name} must be positive, got {v}");
        }
        ensure!(n.dilation >= 0.0 && n.dilation.is_finite(), "numerics.dilation must be nonnegative");
        ensure!(n.particles >= 1 || !self.problem.initial.points.is_empty(), "numerics.particles must be positive");
        ensure!(self.problem.dim >= 1, "problem.dim must be positive");
        if self.search.strategy != Strategy::Constant {
            ensure!(self.search.seed.is_some(), "search.seed is required for the {:?} strategy", self.search.strategy);
        }
        ensure!(!self.output.formats.is_empty(), "output.formats must not be empty");
        Ok(())
    }

    /// SHA-256 of the effective configuration in canonical TOML form.
    /// SHA-256 of the effective config. The output directory is left out so
    /// relocating a run does not change its artifacts.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output.dir = PathBuf::new();
        let text = toml::to_string(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn dynamics(&self) -> Result<AffineMeanField> {
        let p = &self.problem;
        let base = match p.dynamics {
            Dynamics::MeanDrift => {
                ensure!(p.dim == 1, "mean-drift dynamics live on the real line");
                AffineMeanField::mean_drift()
            }
            Dynamics::Affine => {
                ensure!(p.drift.len() == p.dim, "problem.drift must have {} entries", p.dim);
                AffineMeanField::new(p.control_gain, p.self_coeff, p.mean_coeff, p.drift.clone(), p.control_bound)
            }
            Dynamics::Zero => AffineMeanField::zero(p.dim),
        };
        Ok(base.with_offset(p.offset))
    }

    pub fn target(&self) -> Result<TargetSet> {
        let p = &self.problem;
        let target = match p.target {
            TargetKind::ZeroMean => TargetSet::zero_mean(p.dim),
            TargetKind::Hyperplane => {
                ensure!(p.direction.len() == p.dim, "problem.direction must have {} entries", p.dim);
                TargetSet::moment_hyperplane(p.direction.clone(), p.level)?
            }
            TargetKind::Ball => {
                let center = EmpiricalMeasure::uniform(p.dim, p.ball_center.clone()).context("problem.ball_center")?;
                TargetSet::wasserstein_ball(center, p.ball_radius)?
            }
        };
        Ok(target.with_tolerance(self.numerics.eta).dilated(self.numerics.dilation)?)
    }

    pub fn control_grid(&self) -> Result<ControlGrid> {
        let c = &self.numerics.controls;
        let grid = if c.points.is_empty() {
            ensure!(self.problem.dim == 1, "controls.lo/hi/count describe a 1-d grid; give controls.points");
            ControlGrid::uniform_1d(c.lo, c.hi, c.count)?
        } else {
            ControlGrid::new(c.points.clone())?
        };
        ensure!(grid.dim() == self.problem.dim, "control points must have dimension {}", self.problem.dim);
        Ok(grid)
    }

    /// The initial measure, or a copy shifted to the mean `mean` in every coordinate.
    pub fn initial_measure(&self, mean: Option<f64>) -> Result<EmpiricalMeasure> {
        let d = self.problem.dim;
        let init = &self.problem.initial;
        let (mut points, weights) = if init.points.is_empty() {
            ensure!(init.mean.len() == d, "initial.mean must have {d} entries");
            let n = self.numerics.particles;
            let mut rng = ChaCha8Rng::seed_from_u64(init.seed);
            let mut pts: Vec<f64> = (0..n * d)
                .map(|_| init.spread * Distribution::<f64>::sample(&StandardNormal, &mut rng))
                .collect::<Vec<f64>>();
            for k in 0..d {
                let avg = (0..n).map(|i| pts[i * d + k]).sum::<f64>() / n as f64;
                (0..n).for_each(|i| pts[i * d + k] += init.mean[k] - avg);
            }
            (pts, vec![1.0 / n as f64; n])
        } else {
            ensure!(init.points.len().is_multiple_of(d), "initial.points must hold whole atoms");
            let n = init.points.len() / d;
            let w = if init.weights.is_empty() { vec![1.0 / n as f64; n] } else { init.weights.clone() };
            (init.points.clone(), w)
        };
        if let Some(target) = mean {
            let m = EmpiricalMeasure::new(d, points.clone(), weights.clone())?.mean();
            for (i, x) in points.iter_mut().enumerate() {
                *x += target - m[i % d];
            }
        }
        Ok(EmpiricalMeasure::new(d, points, weights)?)
    }

    pub fn search(&self) -> Result<SearchConfig> {
        let s = &self.search;
        let strategy = match s.strategy {
            Strategy::Constant => SearchStrategy::ConstantGrid,
            Strategy::Shooting => SearchStrategy::PiecewiseShooting {
                samples: s.samples,
                segments: s.segments,
                seed: s.seed.unwrap_or_default(),
            },
            Strategy::Refine => SearchStrategy::Refine {
                samples: s.samples,
                segments: s.segments,
                seed: s.seed.unwrap_or_default(),
                sweeps: s.sweeps,
            },
        };
        Ok(SearchConfig::new(self.numerics.horizon, self.numerics.dt, self.control_grid()?, strategy))
    }

    pub fn wants(&self, format: Format) -> bool {
        self.output.formats.contains(&format)
    }

    pub fn require_mean_drift(&self, command: &str) -> Result<()> {
        if self.problem.dynamics != Dynamics::MeanDrift || self.problem.target != TargetKind::ZeroMean {
            bail!("{command} compares against the closed-form mean-drift problem; set dynamics = \"mean-drift\" and target = \"zero-mean\"");
        }
        Ok(())
    }
}
