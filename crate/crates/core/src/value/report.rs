use std::io::Write;

use serde_json::{json, Value};

use super::{GammaReport, TimeValue, ValueEstimate};
use crate::error::Result;
use crate::target::HitStatus;

fn time_json(v: TimeValue) -> Value {
    match v {
        TimeValue::Finite(x) => json!(x),
        TimeValue::Infinite => json!("inf"),
    }
}

fn status(s: HitStatus) -> &'static str {
    match s {
        HitStatus::Hit => "hit",
        HitStatus::Censored => "censored",
    }
}

/// One line per candidate: `strategy,candidate,control,status,time`.
pub fn write_candidates_csv<W: Write>(estimate: &ValueEstimate, mut out: W) -> Result<()> {
    writeln!(out, "strategy,candidate,control,status,time")?;
    for c in &estimate.candidates {
        writeln!(out, "{},{},{},{},{:e}", c.strategy, c.id, c.summary, status(c.hit.status), c.hit.time)?;
    }
    Ok(())
}

pub fn summary_json(estimate: &ValueEstimate) -> Value {
    let m = &estimate.manifest;
    json!({
        "upper_bound": time_json(estimate.upper_bound),
        "status": status(estimate.hit.status),
        "hit_time": estimate.hit.time,
        "bracket": [estimate.hit.bracket.0, estimate.hit.bracket.1],
        "bracket_times": [estimate.hit.bracket_times.0, estimate.hit.bracket_times.1],
        "best_candidate": estimate.best,
        "best_control": estimate.best_control.summary(),
        "strategy": m.strategy,
        "candidates": m.candidates,
        "horizon": m.horizon,
        "dt": m.dt,
        "grid_size": m.grid_size,
        "segments": m.segments,
        "seed": m.seed,
    })
}

/// `n,premise_sup,value_recovery,value_liminf`, then a `# limit=` trailer line.
pub fn write_gamma_csv<W: Write>(report: &GammaReport, mut out: W) -> Result<()> {
    writeln!(out, "n,premise_sup,value_recovery,value_liminf")?;
    for r in &report.rows {
        writeln!(out, "{},{:e},{},{}", r.n, r.premise_sup, r.value_recovery, r.value_liminf)?;
    }
    writeln!(
        out,
        "# limit={} premise_ok={} liminf_pass={} recovery_pass={}",
        report.limit_value, report.premise_ok, report.liminf_pass, report.recovery_pass
    )?;
    Ok(())
}
