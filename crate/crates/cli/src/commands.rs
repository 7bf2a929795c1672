use std::io::Write;
use std::sync::Arc;

use anyhow::{ensure, Result};
use measure_toc::dynamics::{check_apriori_bounds, integrate, AffineMeanField, RelaxedControl, VectorField};
use measure_toc::example::{
    analytic_gradient, analytic_hamiltonian, analytic_mean, analytic_phi, analytic_value, CONTROL_MIN,
};
use measure_toc::hjb::{
    default_schedule, hamiltonian, residual_sweep, supersolution_residual, write_sweep_csv, MeasureFunctional,
};
use measure_toc::measures::L2Field;
use measure_toc::target::{hitting_time, HitStatus, HittingResult};
use measure_toc::value::{
    dpp_residual, estimate_value, gamma_convergence_experiment, kruzhkov, summary_json, write_candidates_csv,
    write_gamma_csv, GammaConfig, TimeValue,
};
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, Format};
use crate::output::Artifacts;

pub struct Outcome {
    pub artifacts: Artifacts,
    pub summary: Vec<String>,
    pub pass: bool,
}

fn artifacts(cfg: &ExperimentConfig) -> Artifacts {
    Artifacts::new(&cfg.output.dir, cfg.hash())
}

fn hit_json(hit: &HittingResult) -> Value {
    json!({
        "status": match hit.status { HitStatus::Hit => "hit", HitStatus::Censored => "censored" },
        "time": hit.time,
        "bracket": [hit.bracket.0, hit.bracket.1],
        "bracket_times": [hit.bracket_times.0, hit.bracket_times.1],
    })
}

fn time_json(v: TimeValue) -> Value {
    match v {
        TimeValue::Finite(x) => json!(x),
        TimeValue::Infinite => json!("inf"),
    }
}

fn steps(cfg: &ExperimentConfig) -> Result<usize> {
    let (t, dt) = (cfg.numerics.horizon, cfg.numerics.dt);
    let k = (t / dt).round();
    ensure!(k >= 1.0 && (k * dt - t).abs() <= 1e-9 * t.max(1.0), "numerics.dt = {dt} does not divide horizon {t}");
    Ok(k as usize)
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<Outcome> {
    let f = cfg.dynamics()?;
    let target = cfg.target()?;
    let grid = cfg.control_grid()?;
    let mu = cfg.initial_measure(None)?;
    let segs = &cfg.simulate.segments;
    let steps = steps(cfg)?;
    ensure!(!segs.is_empty() && segs.len() <= steps, "simulate.segments must have between 1 and {steps} entries");
    let indices: Vec<usize> = (0..steps).map(|k| segs[k * segs.len() / steps]).collect();
    let xi = RelaxedControl::ordinary(grid, cfg.numerics.dt, &indices)?;
    let traj = integrate(&mu, &xi, &f, cfg.numerics.horizon, cfg.numerics.dt)?;
    let hit = hitting_time(&traj, &target)?;

    let mut out = artifacts(cfg);
    let mut summary = vec![
        format!("control: {}", xi.summary()),
        format!("hitting: {} at t = {}", if hit.is_hit() { "hit" } else { "censored" }, hit.time),
    ];
    let mut pass = true;
    let bounds = cfg.simulate.check_bounds.then(|| check_apriori_bounds(&traj, &f, &mu));
    if let Some(report) = &bounds {
        pass = report.all_hold();
        summary.push(format!(
            "a priori bounds: {} (min slack {:.3})",
            if pass { "hold" } else { "violated" },
            report.min_slack()
        ));
    }
    if cfg.wants(Format::Csv) {
        out.text("trajectory.csv", |w| traj.write_csv(w))?;
        out.text("control.txt", |w| xi.write_text(w))?;
        out.text("mean.csv", |w| {
            let cols: Vec<String> = (1..=traj.dim()).map(|k| format!("mean{k}")).collect();
            writeln!(w, "t,{}", cols.join(","))?;
            for (t, m) in traj.times().iter().zip(traj.measures()) {
                let mean: Vec<String> = m.mean().iter().map(|x| format!("{x:e}")).collect();
                writeln!(w, "{t:e},{}", mean.join(","))?;
            }
            Ok(())
        })?;
        if let Some(report) = &bounds {
            out.text("bounds.csv", |w| {
                writeln!(w, "t,moment,moment_bound,w2,w2_bound,position_ratio,displacement_ratio,pass")?;
                for s in &report.steps {
                    writeln!(
                        w,
                        "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{}",
                        s.t,
                        s.moment,
                        s.moment_bound,
                        s.w2,
                        s.w2_bound,
                        s.position_ratio,
                        s.displacement_ratio,
                        s.all_hold()
                    )?;
                }
                Ok(())
            })?;
        }
    }
    if cfg.wants(Format::Json) {
        let c = bounds.as_ref().map(|r| json!({"c0": r.constants.c0, "c1": r.constants.c1, "c3": r.constants.c3, "c4": r.constants.c4, "all_hold": r.all_hold()}));
        out.json(
            "hitting.json",
            json!({"control": xi.summary(), "target": target.label(), "hitting": hit_json(&hit), "bounds": c}),
        )?;
    }
    Ok(Outcome { artifacts: out, summary, pass })
}

pub fn value(cfg: &ExperimentConfig) -> Result<Outcome> {
    let f = cfg.dynamics()?;
    let target = cfg.target()?;
    let mu = cfg.initial_measure(None)?;
    let est = estimate_value(&mu, &f, &target, &cfg.search()?)?;
    let replay = est.replay(&mu, &f, &target)?;
    let reproduced = replay.status == est.hit.status && (replay.time - est.hit.time).abs() <= 1e-9;

    let mut out = artifacts(cfg);
    let summary = vec![
        format!("value estimate: {}", est.upper_bound),
        format!("best control: {}", est.best_control.summary()),
        format!("candidates: {} ({})", est.manifest.candidates, est.manifest.strategy),
        format!("replay: {}", if reproduced { "reproduced" } else { "mismatch" }),
    ];
    if cfg.wants(Format::Csv) {
        out.text("candidates.csv", |w| write_candidates_csv(&est, w))?;
        out.text("best_control.txt", |w| est.best_control.write_text(w))?;
    }
    if cfg.wants(Format::Json) {
        let mut js = summary_json(&est);
        js["replay_reproduced"] = json!(reproduced);
        out.json("value.json", js)?;
    }
    Ok(Outcome { artifacts: out, summary, pass: reproduced })
}

fn oracle_phi() -> MeasureFunctional {
    MeasureFunctional::new("closed-form phi", |m| analytic_phi(m.mean()[0])).with_guard(|m| m.mean()[0] >= 0.0)
}

pub fn hjb_check(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.require_mean_drift("hjb-check")?;
    let f = cfg.dynamics()?;
    let grid = cfg.control_grid()?;
    let measures = cfg
        .hjb
        .means
        .iter()
        .map(|&m| {
            ensure!(m > 0.0, "hjb.means must be positive, got {m}");
            cfg.initial_measure(Some(m))
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = residual_sweep(
        &oracle_phi(),
        &measures,
        &analytic_gradient,
        &f,
        &grid,
        &default_schedule(),
        cfg.numerics.tolerance,
        cfg.hjb.seed,
    )?;
    let failures = rows.iter().filter(|r| !r.pass).count();
    let worst = rows.iter().map(|r| r.residual.abs()).fold(0.0, f64::max);
    let mut out = artifacts(cfg);
    if cfg.wants(Format::Csv) {
        out.text("hjb_sweep.csv", |w| write_sweep_csv(&rows, w))?;
    }
    if cfg.wants(Format::Json) {
        out.json(
            "hjb.json",
            json!({"rows": rows.len(), "failures": failures, "max_abs_residual": worst, "tolerance": cfg.numerics.tolerance}),
        )?;
    }
    let summary = vec![format!(
        "{} rows over {} measures, {failures} failing, max |residual| {worst:.2e}",
        rows.len(),
        measures.len()
    )];
    Ok(Outcome { artifacts: out, summary, pass: failures == 0 })
}

pub fn gamma(cfg: &ExperimentConfig) -> Result<Outcome> {
    let f = cfg.dynamics()?;
    let target = cfg.target()?;
    let mu = cfg.initial_measure(None)?;
    let base = f.clone();
    let family = move |n: usize| -> Arc<dyn VectorField> { Arc::new(base.with_offset(1.0 / n as f64)) };
    let mut gcfg = GammaConfig::new(cfg.gamma.n_list.clone(), cfg.numerics.value_tolerance);
    gcfg.seed = cfg.search.seed.unwrap_or_default();
    let report = gamma_convergence_experiment(&family, &f, &mu, None, &target, &cfg.search()?, &gcfg)?;

    let mut out = artifacts(cfg);
    let mut summary: Vec<String> = report
        .rows
        .iter()
        .map(|r| format!("n = {:>4}: value {} (sup |f_n - f| = {:.3e})", r.n, r.value_recovery, r.premise_sup))
        .collect();
    summary.push(format!(
        "limit {}, premise {}, liminf {}, recovery {}",
        report.limit_value,
        verdict(report.premise_ok),
        verdict(report.liminf_pass),
        verdict(report.recovery_pass)
    ));
    if cfg.wants(Format::Csv) {
        out.text("gamma.csv", |w| write_gamma_csv(&report, w))?;
    }
    if cfg.wants(Format::Json) {
        let rows: Vec<Value> = report
            .rows
            .iter()
            .map(|r| json!({"n": r.n, "premise_sup": r.premise_sup, "value": time_json(r.value_recovery)}))
            .collect();
        out.json(
            "gamma.json",
            json!({
                "limit_value": time_json(report.limit_value),
                "rows": rows,
                "premise_ok": report.premise_ok,
                "liminf_pass": report.liminf_pass,
                "recovery_pass": report.recovery_pass,
                "slack": report.slack,
            }),
        )?;
    }
    Ok(Outcome { artifacts: out, summary, pass: report.pass() })
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "fail"
    }
}

struct Row {
    check: String,
    numeric: String,
    analytic: String,
    error: f64,
    tolerance: f64,
    pass: bool,
}

impl Row {
    fn close(check: String, numeric: f64, analytic: f64, tolerance: f64) -> Self {
        let error = (numeric - analytic).abs();
        Row {
            check,
            numeric: format!("{numeric:e}"),
            analytic: format!("{analytic:e}"),
            error,
            tolerance,
            pass: error <= tolerance,
        }
    }

    fn values(check: String, numeric: TimeValue, analytic: TimeValue, tolerance: f64) -> Self {
        match (numeric, analytic) {
            (TimeValue::Finite(a), TimeValue::Finite(b)) => Self::close(check, a, b, tolerance),
            (a, b) => Row {
                check,
                numeric: a.to_string(),
                analytic: b.to_string(),
                error: if a == b { 0.0 } else { f64::INFINITY },
                tolerance,
                pass: a == b,
            },
        }
    }
}

pub fn example_verify(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.require_mean_drift("example-verify")?;
    ensure!(cfg.numerics.dilation == 0.0, "example-verify needs numerics.dilation = 0");
    let f: AffineMeanField = cfg.dynamics()?;
    ensure!(cfg.problem.offset == 0.0, "example-verify needs problem.offset = 0");
    let target = cfg.target()?;
    let grid = cfg.control_grid()?;
    let search = cfg.search()?;
    let (tol, vtol) = (cfg.numerics.tolerance, cfg.numerics.value_tolerance);
    let lowest = grid.position(&[CONTROL_MIN]);
    let mut rows = Vec::new();

    for mean in [0.0, 0.5, 1.0, 2.0, -0.5] {
        let mu = cfg.initial_measure(Some(mean))?;
        let est = estimate_value(&mu, &f, &target, &search)?;
        let exact = analytic_value(mean);
        rows.push(Row::values(format!("value at mean {mean}"), est.upper_bound, exact, vtol));
        if mean > 0.0 {
            let optimal = est.best_control.ordinary_indices().is_some_and(|idx| idx.iter().all(|&i| Some(i) == lowest));
            rows.push(Row {
                check: format!("optimal control at mean {mean}"),
                numeric: est.best_control.summary(),
                analytic: format!("constant {CONTROL_MIN}"),
                error: if optimal { 0.0 } else { 1.0 },
                tolerance: 0.0,
                pass: optimal,
            });
            let phi = kruzhkov(est.upper_bound)?;
            rows.push(Row::close(format!("phi at mean {mean}"), phi, analytic_phi(mean), vtol));
        }
        if mean == -0.5 {
            let all = est.candidates.iter().all(|c| !c.hit.is_hit());
            rows.push(Row {
                check: "every control censored at mean -0.5".into(),
                numeric: format!(
                    "{} of {} censored",
                    est.candidates.iter().filter(|c| !c.hit.is_hit()).count(),
                    est.candidates.len()
                ),
                analytic: "all censored".into(),
                error: if all { 0.0 } else { 1.0 },
                tolerance: 0.0,
                pass: all,
            });
        }
    }

    let mu = cfg.initial_measure(Some(1.0))?;
    let dt = cfg.numerics.dt;
    let horizon = 1.0f64.min(cfg.numerics.horizon);
    let n_steps = (horizon / dt).round() as usize;
    if let Some(lo) = lowest {
        let half = n_steps / 2;
        let indices: Vec<usize> = (0..n_steps).map(|k| if k < half { lo } else { grid.len() - 1 }).collect();
        let xi = RelaxedControl::ordinary(grid.clone(), dt, &indices)?;
        let traj = integrate(&mu, &xi, &f, n_steps as f64 * dt, dt)?;
        let segments = [(half as f64 * dt, CONTROL_MIN), ((n_steps - half) as f64 * dt, grid.point(grid.len() - 1)[0])];
        for k in [n_steps / 4, half, n_steps] {
            let t = traj.times()[k];
            let exact = analytic_mean(1.0, &segments, t)?;
            rows.push(Row::close(format!("mean at t = {t:.4}"), traj.measure(k).mean()[0], exact, tol));
        }
    }

    for mean in [0.5, 1.0, 2.0] {
        let m = cfg.initial_measure(Some(mean))?;
        let s = analytic_gradient(&m)?;
        let numeric = hamiltonian(&m, &s, &f, &grid)?.value;
        rows.push(Row::close(format!("hamiltonian at mean {mean}"), numeric, analytic_hamiltonian(&m, &s)?, tol));
        let minus = L2Field::constant(&m, &[-1.0])?;
        let numeric = hamiltonian(&m, &minus, &f, &grid)?.value;
        rows.push(Row::close(
            format!("hamiltonian at mean {mean}, s = -1"),
            numeric,
            analytic_hamiltonian(&m, &minus)?,
            tol,
        ));
        let r = supersolution_residual(&oracle_phi(), &m, &s, &f, &grid)?;
        rows.push(Row::close(format!("HJ residual at mean {mean}"), r, 0.0, tol));
    }

    for h in [0.05, 0.1] {
        let r = dpp_residual(&mu, h, &f, &target, &search)?;
        rows.push(Row::close(format!("DPP residual at h = {h}"), r, 0.0, vtol));
    }

    let pass = rows.iter().all(|r| r.pass);
    let failing = rows.iter().filter(|r| !r.pass).count();
    let mut out = artifacts(cfg);
    if cfg.wants(Format::Csv) {
        out.text("example_verify.csv", |w| {
            writeln!(w, "check,numeric,analytic,error,tolerance,pass")?;
            for r in &rows {
                writeln!(w, "{},{},{},{:e},{:e},{}", r.check, r.numeric, r.analytic, r.error, r.tolerance, r.pass)?;
            }
            Ok(())
        })?;
    }
    if cfg.wants(Format::Json) {
        out.json("example_verify.json", json!({"checks": rows.len(), "failing": failing, "pass": pass}))?;
    }
    let mut summary: Vec<String> = rows
        .iter()
        .map(|r| format!("{} {}: {} vs {}", verdict(r.pass).to_uppercase(), r.check, r.numeric, r.analytic))
        .collect();
    summary.push(format!("{} of {} checks passed", rows.len() - failing, rows.len()));
    Ok(Outcome { artifacts: out, summary, pass })
}
