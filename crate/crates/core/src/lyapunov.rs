//! Lyapunov exponents by the discrete QR method: a basis propagated by the
//! variational equation is re-orthonormalised at fixed intervals and the
//! logarithms of the diagonal of `R` are accumulated.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::integrator::{
    pack_variational, unpack_variational, Dopri5, IntegrationError, IvpConfig, StepControl,
    VariationalEvaluator,
};
use crate::system::DynamicalSystem;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LyapunovError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("degenerate basis at t = {t}")]
    DegenerateBasis { t: f64 },
    #[error(transparent)]
    Integration(#[from] IntegrationError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovConfig {
    pub renorm_interval: f64,
    /// Time integrated before accumulation starts.
    pub transient: f64,
    /// Total integration time, transient included.
    pub horizon: f64,
    /// Number of exponents; `None` for all.
    pub k: Option<usize>,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        LyapunovConfig {
            renorm_interval: 1.0,
            transient: 100.0,
            horizon: 1000.0,
            k: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovSeries {
    /// Checkpoint times (after the transient).
    pub times: Vec<f64>,
    /// Running estimates at each checkpoint, sorted descending.
    pub estimates: Vec<Vec<f64>>,
    pub final_exponents: Vec<f64>,
    /// State at the horizon.
    pub final_state: Vec<f64>,
}

fn sorted_desc(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// QR of `y` with `diag(R) >= 0`; returns `Q` and `diag(R)`.
pub fn positive_qr(y: DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let qr = y.qr();
    let mut q = qr.q();
    let r = qr.r();
    let mut diag = Vec::with_capacity(r.ncols());
    for i in 0..r.ncols().min(r.nrows()) {
        let rii = r[(i, i)];
        if rii < 0.0 {
            q.column_mut(i).neg_mut();
        }
        diag.push(rii.abs());
    }
    (q, diag)
}

/// Running Lyapunov spectrum. Tolerances and step limits come from `ivp`;
/// its time span is ignored (integration runs over `[0, horizon]`).
pub fn lyapunov_spectrum(
    sys: &dyn DynamicalSystem,
    y0: &[f64],
    p: &[f64],
    cfg: &LyapunovConfig,
    ivp: &IvpConfig,
) -> Result<LyapunovSeries, LyapunovError> {
    let n = sys.dim();
    let k = cfg.k.unwrap_or(n);
    let bad = |m: &str| Err(LyapunovError::InvalidConfig(m.to_string()));
    if !(cfg.renorm_interval > 0.0) {
        return bad("renorm_interval must be positive");
    }
    if !(cfg.transient >= 0.0 && cfg.horizon > cfg.transient) {
        return bad("need horizon > transient >= 0");
    }
    if k < 1 || k > n {
        return bad("number of exponents must lie in 1..=N");
    }
    if y0.len() != n {
        return bad("initial state has the wrong dimension");
    }
    let control = StepControl {
        rel_tol: ivp.rel_tol,
        abs_tol: ivp.abs_tol,
        max_step: ivp.max_step.unwrap_or(f64::INFINITY),
        initial_step: ivp.initial_step,
    };
    let mut inner = sys.evaluator(p).map_err(IntegrationError::from)?;

    let mut y = y0.to_vec();
    if cfg.transient > 0.0 {
        let mut st = Dopri5::new(inner.as_mut(), 0.0, &y, control, 1.0)?;
        st.advance_to(cfg.transient, ivp.max_steps)?;
        y = st.y().to_vec();
    }

    let basis = DMatrix::<f64>::identity(n, k);
    let mut var = VariationalEvaluator::new(inner.as_mut(), n, k);
    let z0 = pack_variational(&y, &basis);
    let mut st = Dopri5::new(&mut var, cfg.transient, &z0, control, 1.0)?;
    let mut sums = vec![0.0; k];
    let mut series = LyapunovSeries {
        times: Vec::new(),
        estimates: Vec::new(),
        final_exponents: Vec::new(),
        final_state: Vec::new(),
    };
    let total = cfg.horizon - cfg.transient;
    let intervals = (total / cfg.renorm_interval).ceil().max(1.0) as usize;
    for j in 1..=intervals {
        let t = if j == intervals {
            cfg.horizon
        } else {
            cfg.transient + j as f64 * cfg.renorm_interval
        };
        st.advance_to(t, ivp.max_steps)?;
        let (ycur, ymat) = unpack_variational(st.y(), n);
        let (q, diag) = positive_qr(ymat);
        if diag.iter().any(|d| !(*d > f64::MIN_POSITIVE) || !d.is_finite()) {
            return Err(LyapunovError::DegenerateBasis { t });
        }
        for (s, d) in sums.iter_mut().zip(&diag) {
            *s += d.ln();
        }
        st.reset_state(&pack_variational(&ycur, &q))?;
        let elapsed = t - cfg.transient;
        series.times.push(t);
        series
            .estimates
            .push(sorted_desc(sums.iter().map(|s| s / elapsed).collect()));
    }
    series.final_exponents = series.estimates.last().cloned().unwrap_or_default();
    series.final_state = st.y()[..n].to_vec();
    Ok(series)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub values: Vec<f64>,
    /// Final exponents per value; `None` where the run failed.
    pub exponents: Vec<Option<Vec<f64>>>,
    pub final_states: Vec<Option<Vec<f64>>>,
    pub errors: Vec<Option<String>>,
}

/// Spectra over values of parameter `active`. With `carry_state`, the
/// final state of each successful run seeds the next.
#[allow(clippy::too_many_arguments)]
pub fn lyapunov_sweep(
    sys: &dyn DynamicalSystem,
    y0: &[f64],
    p: &[f64],
    active: usize,
    values: &[f64],
    cfg: &LyapunovConfig,
    ivp: &IvpConfig,
    carry_state: bool,
) -> SweepResult {
    let mut out = SweepResult {
        values: values.to_vec(),
        exponents: Vec::new(),
        final_states: Vec::new(),
        errors: Vec::new(),
    };
    let mut seed = y0.to_vec();
    let mut params = p.to_vec();
    for &v in values {
        params[active] = v;
        match lyapunov_spectrum(sys, &seed, &params, cfg, ivp) {
            Ok(s) => {
                if carry_state {
                    seed = s.final_state.clone();
                }
                out.exponents.push(Some(s.final_exponents));
                out.final_states.push(Some(s.final_state));
                out.errors.push(None);
            }
            Err(e) => {
                out.exponents.push(None);
                out.final_states.push(None);
                out.errors.push(Some(e.to_string()));
            }
        }
    }
    out
}
