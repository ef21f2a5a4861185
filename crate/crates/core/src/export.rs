//! Plain-text tables. Floats are written with 17 significant digits so that
//! identical results produce identical files.

use crate::integrator::EventRecord;
use crate::lyapunov::{LyapunovSeries, SweepResult};

pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

fn line(fields: impl IntoIterator<Item = String>) -> String {
    let mut s = fields.into_iter().collect::<Vec<_>>().join(",");
    s.push('\n');
    s
}

/// `t,<labels...>[,<extra labels...>]`; `extra[i]` holds the extra
/// columns of row `i`.
pub fn trajectory_csv(
    labels: &[String],
    extra_labels: &[String],
    times: &[f64],
    states: &[Vec<f64>],
    extra: &[Vec<f64>],
) -> String {
    let mut out = line(
        std::iter::once("t".to_string())
            .chain(labels.iter().cloned())
            .chain(extra_labels.iter().cloned()),
    );
    for (i, (t, y)) in times.iter().zip(states).enumerate() {
        let ext = extra.get(i).map(|v| v.as_slice()).unwrap_or(&[]);
        out.push_str(&line(
            std::iter::once(float(*t))
                .chain(y.iter().map(|v| float(*v)))
                .chain(ext.iter().map(|v| float(*v))),
        ));
    }
    out
}

/// `t,index,sign,residual,<labels...>`.
pub fn events_csv(labels: &[String], events: &[EventRecord]) -> String {
    let head = ["t", "index", "sign", "residual"].map(String::from);
    let mut out = line(head.into_iter().chain(labels.iter().cloned()));
    for e in events {
        out.push_str(&line(
            [
                float(e.t),
                e.index.to_string(),
                e.sign.to_string(),
                float(e.residual),
            ]
            .into_iter()
            .chain(e.y.iter().map(|v| float(*v))),
        ));
    }
    out
}

fn lambda_header(first: &str, k: usize) -> String {
    line(std::iter::once(first.to_string()).chain((1..=k).map(|i| format!("lambda_{i}"))))
}

/// `t,lambda_1..lambda_k`, keeping the `top` largest exponents.
pub fn lyapunov_series_csv(series: &LyapunovSeries, top: Option<usize>) -> String {
    let k = series.final_exponents.len();
    let k = top.map_or(k, |t| t.min(k));
    let mut out = lambda_header("t", k);
    for (t, est) in series.times.iter().zip(&series.estimates) {
        out.push_str(&line(
            std::iter::once(float(*t)).chain(est[..k].iter().map(|v| float(*v))),
        ));
    }
    out
}

/// `param,lambda_1..lambda_k`; failed values are written as `nan`.
pub fn lyapunov_sweep_csv(sweep: &SweepResult, top: Option<usize>) -> String {
    let k = sweep
        .exponents
        .iter()
        .flatten()
        .map(|e| e.len())
        .next()
        .unwrap_or(0);
    let k = top.map_or(k, |t| t.min(k));
    let mut out = lambda_header("param", k);
    for (v, e) in sweep.values.iter().zip(&sweep.exponents) {
        let cells: Vec<String> = match e {
            Some(e) => e[..k].iter().map(|x| float(*x)).collect(),
            None => vec!["nan".to_string(); k],
        };
        out.push_str(&line(std::iter::once(float(*v)).chain(cells)));
    }
    out
}
