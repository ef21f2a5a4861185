//! JSON counterparts of the CSV tables, and writing results.

use std::io::Write;
use std::path::PathBuf;

use delaykit::continuation::{Branch, BranchKind, BranchPoint};
use delaykit::integrator::EventRecord;
use delaykit::lyapunov::{LyapunovSeries, SweepResult};
use serde_json::{json, Value};

use crate::failure::{CliResult, Staged, FAILURE};

/// Write to `path`, or to standard output.
pub fn emit(path: Option<&PathBuf>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| anyhow::anyhow!("{}: {e}", p.display()))
            .stage(FAILURE, "output"),
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .stage(FAILURE, "output"),
    }
}

pub fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialise");
    s.push('\n');
    s
}

pub fn trajectory_json(
    labels: &[String],
    extra_labels: &[String],
    times: &[f64],
    states: &[Vec<f64>],
    extra: &[Vec<f64>],
) -> Value {
    json!({
        "labels": labels,
        "reconstructed_labels": extra_labels,
        "t": times,
        "states": states,
        "reconstructed": extra,
    })
}

pub fn events_json(labels: &[String], events: &[EventRecord]) -> Value {
    let rows: Vec<Value> = events
        .iter()
        .map(|e| {
            json!({
                "t": e.t,
                "index": e.index,
                "sign": e.sign,
                "residual": e.residual,
                "state": e.y,
            })
        })
        .collect();
    json!({ "labels": labels, "events": rows })
}

fn point_json(pt: &BranchPoint) -> Value {
    json!({
        "param": pt.param,
        "period": pt.period,
        "n_unstable": pt.n_unstable,
        "tests": pt.tests,
        "state": pt.state,
    })
}

pub fn branch_json(b: &Branch, param_names: &[String]) -> Value {
    let kind = match b.kind {
        BranchKind::Equilibrium => "equilibrium",
        BranchKind::LimitCycle => "limit_cycle",
    };
    let params: serde_json::Map<String, Value> = param_names
        .iter()
        .zip(&b.params)
        .map(|(n, v)| (n.clone(), json!(v)))
        .collect();
    let points: Vec<Value> = b.points.iter().map(point_json).collect();
    let events: Vec<Value> = b
        .events
        .iter()
        .map(|e| {
            let mut v = point_json(&e.point);
            v["type"] = json!(e.kind.tag());
            v["after"] = json!(e.after);
            v["residual"] = json!(e.residual);
            v
        })
        .collect();
    json!({
        "kind": kind,
        "parameter": b.param_name,
        "parameters": params,
        "labels": b.labels,
        "stop": b.stop.as_str(),
        "points": points,
        "events": events,
        "neutral_saddles": b.neutral_saddles,
    })
}

fn top_k(k: usize, top: Option<usize>) -> usize {
    top.map_or(k, |t| t.min(k))
}

pub fn series_json(s: &LyapunovSeries, top: Option<usize>) -> Value {
    let k = top_k(s.final_exponents.len(), top);
    let est: Vec<&[f64]> = s.estimates.iter().map(|e| &e[..k]).collect();
    json!({
        "t": s.times,
        "estimates": est,
        "exponents": &s.final_exponents[..k],
    })
}

pub fn sweep_json(param: &str, s: &SweepResult, top: Option<usize>) -> Value {
    let rows: Vec<Value> = s
        .values
        .iter()
        .zip(&s.exponents)
        .zip(&s.errors)
        .map(|((v, e), err)| {
            let e = e.as_ref().map(|e| e[..top_k(e.len(), top)].to_vec());
            json!({ "value": v, "exponents": e, "error": err })
        })
        .collect();
    json!({ "parameter": param, "runs": rows })
}
