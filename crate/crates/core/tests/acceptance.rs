//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use measure_toc::dynamics::{
    averaged_velocity, check_apriori_bounds, eval_field, integrate, AffineMeanField, ControlGrid, FnField,
    RelaxedControl, VectorField,
};
use measure_toc::example::{analytic_gradient, analytic_hamiltonian, analytic_phi, MeanDriftProblem};
use measure_toc::hjb::{
    default_directions, default_schedule, hamiltonian, subdifferential_test, superdifferential_test, Direction,
    MeasureFunctional,
};
use measure_toc::measures::{second_moment, w2_distance, EmpiricalMeasure, L2Field};
use measure_toc::value::{
    dpp_residual, epsilon_value, estimate_value, gamma_convergence_experiment, GammaConfig, SearchConfig, TimeValue,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Check = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// `n` Gaussian atoms shifted so the mean is `mean`.
fn cloud_with_mean(n: usize, mean: f64, rng: &mut ChaCha8Rng) -> EmpiricalMeasure {
    let raw: Vec<f64> = (0..n).map(|_| 0.5 * gaussian(rng)).collect();
    let avg = raw.iter().sum::<f64>() / n as f64;
    EmpiricalMeasure::uniform(1, raw.iter().map(|x| x - avg + mean).collect()).unwrap()
}

fn standard_search() -> SearchConfig {
    SearchConfig::constant_grid(3.0, 1e-3, MeanDriftProblem.control_grid(11).unwrap())
}

fn ln_time(start: f64, stop: f64, drive: f64) -> f64 {
    // ṁ = drive − m from `start` reaches `stop` after ln((start − drive)/(stop − drive))
    ((start - drive) / (stop - drive)).ln()
}

fn criterion_1() -> Check {
    let p = MeanDriftProblem;
    let mu = cloud_with_mean(100, 1.0, &mut ChaCha8Rng::seed_from_u64(1));
    let clock = Instant::now();
    let est = estimate_value(&mu, &p.field(), &p.target(), &standard_search()).map_err(|e| e.to_string())?;
    let elapsed = clock.elapsed().as_secs_f64();
    let v = est.upper_bound.finite().ok_or("censored")?;
    let exact = 2f64.ln();
    ensure((v - exact).abs() <= 2e-2, || format!("value {v} vs {exact}"))?;
    ensure(est.best_control.summary() == "constant -1", || format!("best control {}", est.best_control.summary()))?;
    ensure(elapsed < 10.0, || format!("took {elapsed:.2}s"))?;
    Ok(format!("value {v:.6} (ln 2 = {exact:.6}), control constant -1, {elapsed:.2}s"))
}

fn criterion_2() -> Check {
    let p = MeanDriftProblem;
    let mu = cloud_with_mean(100, -0.5, &mut ChaCha8Rng::seed_from_u64(2));
    let clock = Instant::now();
    let est = estimate_value(&mu, &p.field(), &p.target(), &standard_search()).map_err(|e| e.to_string())?;
    let elapsed = clock.elapsed().as_secs_f64();
    ensure(est.upper_bound == TimeValue::Infinite, || format!("value {}", est.upper_bound))?;
    ensure(est.candidates.len() == 11 && est.candidates.iter().all(|c| !c.hit.is_hit()), || "some control hit".into())?;
    ensure(elapsed < 10.0, || format!("took {elapsed:.2}s"))?;
    Ok(format!("all {} controls censored, {elapsed:.2}s", est.candidates.len()))
}

fn criterion_3() -> Check {
    let p = MeanDriftProblem;
    let fine = p.control_grid(101).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst_exact, mut worst_numeric) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let mean = 3.0 * (1.0 - rng.gen::<f64>());
        let n = rng.gen_range(1..40);
        let m = cloud_with_mean(n, mean, &mut rng);
        let s = analytic_gradient(&m).unwrap();
        let phi = analytic_phi(m.mean()[0]);
        let exact = analytic_hamiltonian(&m, &s).unwrap() + 1.0 - phi;
        let numeric = hamiltonian(&m, &s, &p.field(), &fine).unwrap().value + 1.0 - phi;
        worst_exact = worst_exact.max(exact.abs());
        worst_numeric = worst_numeric.max(numeric.abs());
    }
    ensure(worst_exact <= 1e-8, || format!("analytic residual {worst_exact:e}"))?;
    ensure(worst_numeric <= 1e-3, || format!("numeric residual {worst_numeric:e}"))?;
    Ok(format!("max |H+1-phi| analytic {worst_exact:.1e}, numeric {worst_numeric:.1e}"))
}

fn criterion_4() -> Check {
    let p = MeanDriftProblem;
    let mu = cloud_with_mean(100, 1.0, &mut ChaCha8Rng::seed_from_u64(4));
    let mut parts = Vec::new();
    for h in [0.05, 0.1, 0.2] {
        let r = dpp_residual(&mu, h, &p.field(), &p.target(), &standard_search()).map_err(|e| e.to_string())?;
        ensure(r.abs() <= 5e-3, || format!("h={h}: residual {r:e}"))?;
        parts.push(format!("h={h}: {r:.1e}"));
    }
    Ok(parts.join(", "))
}

fn criterion_5() -> Check {
    let p = MeanDriftProblem;
    let mu = cloud_with_mean(100, 1.0, &mut ChaCha8Rng::seed_from_u64(5));
    let cfg = standard_search();
    let v0 = estimate_value(&mu, &p.field(), &p.target(), &cfg).map_err(|e| e.to_string())?.upper_bound;
    let mut values = Vec::new();
    for eps in [0.2, 0.1, 0.05] {
        let v = epsilon_value(&mu, eps, &p.field(), &p.target(), &cfg).map_err(|e| e.to_string())?.upper_bound;
        let v = v.finite().ok_or(format!("eps={eps} censored"))?;
        let exact = ln_time(1.0, eps, -1.0);
        ensure((v - exact).abs() <= 2e-2, || format!("eps={eps}: {v} vs {exact}"))?;
        values.push(v);
    }
    ensure(values.windows(2).all(|w| w[0] <= w[1]), || format!("not monotone: {values:?}"))?;
    ensure(TimeValue::Finite(values[2]) <= v0, || format!("eps=0.05 value {} above eps=0 value {v0}", values[2]))?;
    Ok(format!("eps 0.2/0.1/0.05 -> {:.4}/{:.4}/{:.4}, eps=0 {v0:.4}", values[0], values[1], values[2]))
}

fn criterion_6() -> Check {
    let p = MeanDriftProblem;
    let mu = cloud_with_mean(100, 1.0, &mut ChaCha8Rng::seed_from_u64(6));
    let family =
        |n: usize| -> Arc<dyn VectorField> { Arc::new(AffineMeanField::mean_drift().with_offset(1.0 / n as f64)) };
    let cfg = GammaConfig::new(vec![5, 10, 20, 40, 80], 2e-2);
    let report = gamma_convergence_experiment(&family, &p.field(), &mu, None, &p.target(), &standard_search(), &cfg)
        .map_err(|e| e.to_string())?;
    let mut values = Vec::new();
    for row in &report.rows {
        let n = row.n as f64;
        let exact = ((2.0 * n - 1.0) / (n - 1.0)).ln();
        let v = row.value_recovery.finite().ok_or(format!("n={} censored", row.n))?;
        ensure((v - exact).abs() <= 2e-2, || format!("n={}: {v} vs {exact}", row.n))?;
        values.push(v);
    }
    let limit = report.limit_value.finite().ok_or("limit censored")?;
    ensure(values.windows(2).all(|w| w[1] < w[0]), || format!("not decreasing: {values:?}"))?;
    ensure(values.iter().all(|&v| v >= limit - 2e-2), || format!("below limit {limit}: {values:?}"))?;
    ensure(report.premise_ok, || "premise check failed".into())?;
    ensure(report.liminf_pass && report.recovery_pass, || {
        format!("liminf {} recovery {}", report.liminf_pass, report.recovery_pass)
    })?;
    let table: Vec<String> = report.rows.iter().zip(&values).map(|(r, v)| format!("{}:{v:.4}", r.n)).collect();
    Ok(format!("{} -> limit {limit:.4}, liminf and recovery pass", table.join(" ")))
}

fn brute_force_w2(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> f64 {
    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }
    let n = a.len();
    permutations(n)
        .iter()
        .map(|perm| {
            (0..n)
                .map(|i| a.point(i).iter().zip(b.point(perm[i])).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
                .sum::<f64>()
                / n as f64
        })
        .fold(f64::INFINITY, f64::min)
        .sqrt()
}

fn random_measure(rng: &mut ChaCha8Rng, dim: usize, uniform: bool) -> EmpiricalMeasure {
    let n = rng.gen_range(1..=6);
    let points: Vec<f64> = (0..n * dim).map(|_| gaussian(rng)).collect();
    if uniform {
        EmpiricalMeasure::uniform(dim, points).unwrap()
    } else {
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        EmpiricalMeasure::new(dim, points, raw.iter().map(|w| w / total).collect()).unwrap()
    }
}

fn criterion_7() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let dim = rng.gen_range(1..=3);
        let n = rng.gen_range(1..=6);
        let a = EmpiricalMeasure::uniform(dim, (0..n * dim).map(|_| gaussian(&mut rng)).collect()).unwrap();
        let b = EmpiricalMeasure::uniform(dim, (0..n * dim).map(|_| gaussian(&mut rng)).collect()).unwrap();
        let (w, _) = w2_distance(&a, &b).map_err(|e| e.to_string())?;
        worst = worst.max((w - brute_force_w2(&a, &b)).abs());
    }
    ensure(worst <= 1e-9, || format!("brute-force gap {worst:e}"))?;
    let mut worst_sym = 0.0f64;
    let mut worst_tri = f64::NEG_INFINITY;
    for _ in 0..100 {
        let dim = rng.gen_range(1..=2);
        let [a, b, c] = [(); 3].map(|_| random_measure(&mut rng, dim, false));
        let w = |x: &EmpiricalMeasure, y: &EmpiricalMeasure| w2_distance(x, y).unwrap().0;
        worst_sym = worst_sym.max((w(&a, &b) - w(&b, &a)).abs()).max(w(&a, &a));
        worst_tri = worst_tri.max(w(&a, &c) - w(&a, &b) - w(&b, &c));
    }
    ensure(worst_sym <= 1e-9, || format!("symmetry/identity gap {worst_sym:e}"))?;
    ensure(worst_tri <= 1e-9, || format!("triangle excess {worst_tri:e}"))?;
    Ok(format!("brute-force gap {worst:.1e}, symmetry {worst_sym:.1e}, triangle excess {worst_tri:.1e}"))
}

fn terminal_w2(
    mu: &EmpiricalMeasure,
    xi: &RelaxedControl,
    f: &dyn VectorField,
    dt: f64,
    reference: &EmpiricalMeasure,
) -> std::result::Result<(f64, bool), String> {
    let traj = integrate(mu, xi, f, 1.0, dt).map_err(|e| e.to_string())?;
    let (w, _) = w2_distance(traj.terminal(), reference).map_err(|e| e.to_string())?;
    Ok((w, traj.superposition_consistent()))
}

fn criterion_8() -> Check {
    let p = MeanDriftProblem;
    let f = p.field();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mu = EmpiricalMeasure::uniform(1, (0..50).map(|_| 1.0 + gaussian(&mut rng)).collect()).unwrap();
    let grid = p.control_grid(11).unwrap();
    let fine_dt = 0.05 / 8.0;
    let xi = RelaxedControl::segments(grid, fine_dt, &[0, 10], 80).unwrap();
    let reference = integrate(&mu, &xi, &f, 1.0, fine_dt).map_err(|e| e.to_string())?;
    ensure(reference.superposition_consistent(), || "reference not consistent".into())?;
    let (coarse, ok1) = terminal_w2(&mu, &xi, &f, 0.1, reference.terminal())?;
    let (half, ok2) = terminal_w2(&mu, &xi, &f, 0.05, reference.terminal())?;
    ensure(ok1 && ok2, || "superposition failed".into())?;
    let ratio = coarse / half;
    ensure(ratio >= 8.0, || format!("error ratio {ratio:.2} ({coarse:e} -> {half:e})"))?;
    Ok(format!("W2 error {coarse:.2e} -> {half:.2e}, ratio {ratio:.1}, superposition exact"))
}

fn criterion_9() -> Check {
    let p = MeanDriftProblem;
    let f = p.field();
    let grid = p.control_grid(11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut min_slack = f64::INFINITY;
    for case in 0..20 {
        let n = rng.gen_range(1..30);
        let center = rng.gen_range(-2.0..2.0);
        let spread = rng.gen_range(0.0..2.0);
        let mu = EmpiricalMeasure::uniform(1, (0..n).map(|_| center + spread * gaussian(&mut rng)).collect()).unwrap();
        let segments: Vec<usize> = (0..4).map(|_| rng.gen_range(0..grid.len())).collect();
        let xi = RelaxedControl::segments(grid.clone(), 0.01, &segments, 50).unwrap();
        let traj = integrate(&mu, &xi, &f, 2.0, 0.01).map_err(|e| e.to_string())?;
        let report = check_apriori_bounds(&traj, &f, &mu);
        ensure(report.all_hold(), || format!("case {case}: violations at {:?}", report.violations()))?;
        min_slack = min_slack.min(report.min_slack());
    }
    Ok(format!("20 instances, every grid time within bounds, min relative slack {min_slack:.3}"))
}

fn criterion_10() -> Check {
    let p = MeanDriftProblem;
    let f = p.field();
    let grid = p.control_grid(11).unwrap();
    let u0 = grid.len() - 1;
    let mu = cloud_with_mean(40, 0.1, &mut ChaCha8Rng::seed_from_u64(10));
    let xi = RelaxedControl::constant(grid.clone(), 1e-3, 100, u0).unwrap();
    let target = L2Field::from_fn(&mu, |x| eval_field(&f, x, &mu, grid.point(u0))).unwrap();
    let mut errors = Vec::new();
    for h in [0.1, 0.05, 0.025, 0.0125] {
        let fh = averaged_velocity(&mu, &xi, &f, h, 1e-3).map_err(|e| e.to_string())?;
        errors.push(fh.sub(&target).map_err(|e| e.to_string())?.norm());
    }
    ensure(errors.windows(2).all(|w| w[1] < w[0]), || format!("not decreasing: {errors:?}"))?;
    let last = *errors.last().unwrap();
    ensure(last < 1e-3, || format!("error {last:e} at h = 0.0125"))?;
    let shown: Vec<String> = errors.iter().map(|e| format!("{e:.2e}")).collect();
    Ok(format!("errors {} (mean 0.1, u0 = 0)", shown.join(" > ")))
}

fn criterion_11() -> Check {
    let p = MeanDriftProblem;
    let grid = p.control_grid(11).unwrap();
    let schedule = default_schedule();
    let m = EmpiricalMeasure::new(1, vec![0.2, 0.9, 1.6], vec![0.3, 0.5, 0.2]).unwrap();
    let dirs = default_directions(&m, &p.field(), &grid, 11).map_err(|e| e.to_string())?;

    let linear = MeasureFunctional::new("mean", |m| 1.5 * m.mean()[0]);
    let s = L2Field::constant(&m, &[1.5]).unwrap();
    let sub = subdifferential_test(&linear, &m, &s, &dirs, &schedule).map_err(|e| e.to_string())?;
    ensure(sub.pass && sub.worst_margin.abs() < 1e-9, || format!("linear: margin {}", sub.worst_margin))?;

    let half = MeasureFunctional::new("half moment", |m| 0.5 * second_moment(m).powi(2));
    let id = L2Field::identity(&m);
    let sub = subdifferential_test(&half, &m, &id, &dirs, &schedule).map_err(|e| e.to_string())?;
    let sup = superdifferential_test(&half, &m, &id, &dirs, &schedule).map_err(|e| e.to_string())?;
    ensure(sub.pass && sup.pass, || "half moment failed".into())?;

    let dirac = EmpiricalMeasure::dirac(&[0.0]).unwrap();
    let kink = MeasureFunctional::new("-sigma", |m| -second_moment(m));
    let c = vec![Direction::new("c", L2Field::constant(&dirac, &[0.7]).unwrap())];
    let report =
        subdifferential_test(&kink, &dirac, &L2Field::zeros(&dirac), &c, &schedule).map_err(|e| e.to_string())?;
    ensure(!report.pass, || "kink passed".into())?;

    let planar = FnField::new(2, 2, 1.0, 2.0, |x, m, u| {
        let mean = m.mean();
        vec![u[0] - mean[0] + 0.3 * x[1], u[1] * x[0] - mean[1]]
    });
    let planar_grid = ControlGrid::new(
        (0..5).flat_map(|i| (0..5).map(move |j| vec![-1.0 + 0.5 * i as f64, -1.0 + 0.5 * j as f64])).collect(),
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(111);
    let mut worst = 0.0f64;
    for k in 0..100 {
        let (m, s, f, grid): (EmpiricalMeasure, L2Field, &dyn VectorField, &ControlGrid) = if k % 2 == 0 {
            let m = cloud_with_mean(rng.gen_range(1..20), rng.gen_range(-2.0..2.0), &mut rng);
            let s = L2Field::new(&m, (0..m.len()).map(|_| gaussian(&mut rng)).collect()).unwrap();
            (m, s, &p.field() as &dyn VectorField, &grid)
        } else {
            let n = rng.gen_range(1..20);
            let m = EmpiricalMeasure::uniform(2, (0..2 * n).map(|_| gaussian(&mut rng)).collect()).unwrap();
            let s = L2Field::new(&m, (0..2 * n).map(|_| gaussian(&mut rng)).collect()).unwrap();
            (m, s, &planar as &dyn VectorField, &planar_grid)
        };
        let base = hamiltonian(&m, &s, f, grid).unwrap();
        let alpha = rng.gen_range(0.01..100.0);
        let scaled = hamiltonian(&m, &s.scaled(alpha), f, grid).unwrap();
        ensure(scaled.argmin == base.argmin, || format!("pair {k}: argmin moved"))?;
        let gap = (scaled.value - alpha * base.value).abs() / (1.0 + (alpha * base.value).abs());
        worst = worst.max(gap);
    }
    ensure(worst <= 1e-12, || format!("homogeneity gap {worst:e}"))?;
    Ok(format!("sub/super examples hold, homogeneity gap {worst:.1e} on 100 pairs"))
}

type Criterion = (&'static str, fn() -> Check);

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("value recovery at mean 1", criterion_1),
        ("infeasibility at mean -0.5", criterion_2),
        ("Dirichlet residuals on the oracle", criterion_3),
        ("dynamic programming residual", criterion_4),
        ("epsilon relaxation", criterion_5),
        ("Gamma-convergence of shifted dynamics", criterion_6),
        ("optimal transport correctness", criterion_7),
        ("superposition and integrator order", criterion_8),
        ("a priori bounds", criterion_9),
        ("averaged-velocity limit", criterion_10),
        ("nonsmooth-analysis suite", criterion_11),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failures += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
