//! Adaptive Dormand–Prince 5(4) integration with dense output, event
//! location and variational equations.
//!
//! Step-size control and dense output follow Hairer, Nørsett & Wanner,
//! *Solving ODEs I*, §II.4–II.6 (the DOPRI5 code).

use nalgebra::DMatrix;
use thiserror::Error;

use crate::system::{DynamicalSystem, Evaluator, SystemError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrationError {
    #[error("step size underflow at t = {t} (h = {h})")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("more than {max_steps} steps needed before t = {t}")]
    TooManySteps { t: f64, max_steps: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    System(#[from] SystemError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IvpConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// `None`: automatic initial step.
    pub initial_step: Option<f64>,
    /// `None`: the length of the interval.
    pub max_step: Option<f64>,
    pub t0: f64,
    pub t_end: f64,
    pub max_steps: usize,
    /// Keep every accepted step (otherwise only the end points).
    pub record_steps: bool,
    /// Keep dense-output segments.
    pub dense: bool,
}

impl Default for IvpConfig {
    fn default() -> Self {
        IvpConfig {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            initial_step: None,
            max_step: None,
            t0: 0.0,
            t_end: 1.0,
            max_steps: 10_000_000,
            record_steps: true,
            dense: false,
        }
    }
}

impl IvpConfig {
    pub fn span(t0: f64, t_end: f64) -> Self {
        IvpConfig {
            t0,
            t_end,
            ..Default::default()
        }
    }

    pub fn with_tolerances(mut self, rel_tol: f64, abs_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        self
    }

    fn validate(&self) -> Result<(), IntegrationError> {
        let bad = |m: &str| Err(IntegrationError::InvalidConfig(m.to_string()));
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.t0.is_finite() && self.t_end.is_finite()) {
            return bad("time span must be finite");
        }
        if matches!(self.max_step, Some(h) if !(h > 0.0)) {
            return bad("max_step must be positive");
        }
        if matches!(self.initial_step, Some(h) if !(h > 0.0)) {
            return bad("initial_step must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// Quartic interpolant on one accepted step.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSegment {
    pub t0: f64,
    pub h: f64,
    coeffs: [Vec<f64>; 5],
}

impl DenseSegment {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn contains(&self, t: f64) -> bool {
        let (a, b) = if self.h > 0.0 {
            (self.t0, self.t1())
        } else {
            (self.t1(), self.t0)
        };
        t >= a && t <= b
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        let [r1, r2, r3, r4, r5] = &self.coeffs;
        for i in 0..out.len() {
            out[i] = r1[i] + s * (r2[i] + s1 * (r3[i] + s * (r4[i] + s1 * r5[i])));
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.coeffs[0].len()];
        self.eval_into(t, &mut out);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub segments: Vec<DenseSegment>,
    pub stats: Stats,
}

impl Trajectory {
    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("nonempty trajectory")
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("nonempty trajectory")
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Dense-output value at `t` (requires `dense` segments).
    pub fn interpolate(&self, t: f64) -> Option<Vec<f64>> {
        self.segments.iter().find(|s| s.contains(t)).map(|s| s.eval(t))
    }
}

const A21: f64 = 0.2;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const FAC_MAX: f64 = 10.0;
const FAC_MIN: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    /// `None`: automatic.
    pub initial_step: Option<f64>,
}

impl StepControl {
    pub fn new(rel_tol: f64, abs_tol: f64) -> Self {
        StepControl {
            rel_tol,
            abs_tol,
            max_step: f64::INFINITY,
            initial_step: None,
        }
    }
}

/// Incremental DOPRI5 stepper over an evaluator.
pub struct Dopri5<'e> {
    ev: &'e mut dyn Evaluator,
    rel_tol: f64,
    abs_tol: f64,
    max_step: f64,
    t: f64,
    y: Vec<f64>,
    k: [Vec<f64>; 7],
    y1: Vec<f64>,
    ystage: Vec<f64>,
    h: f64,
    fac_old: f64,
    last_rejected: bool,
    pub stats: Stats,
}

impl<'e> Dopri5<'e> {
    /// Stepper at `(t0, y0)` heading in the direction of `direction`.
    pub fn new(
        ev: &'e mut dyn Evaluator,
        t0: f64,
        y0: &[f64],
        control: StepControl,
        direction: f64,
    ) -> Result<Self, IntegrationError> {
        let n = y0.len();
        let StepControl {
            rel_tol,
            abs_tol,
            max_step,
            initial_step: h0,
        } = control;
        let mut s = Dopri5 {
            ev,
            rel_tol,
            abs_tol,
            max_step,
            t: t0,
            y: y0.to_vec(),
            k: std::array::from_fn(|_| vec![0.0; n]),
            y1: vec![0.0; n],
            ystage: vec![0.0; n],
            h: 0.0,
            fac_old: 1e-4,
            last_rejected: false,
            stats: Stats::default(),
        };
        s.eval_k1()?;
        let dir = if direction < 0.0 { -1.0 } else { 1.0 };
        s.h = match h0 {
            Some(h) => dir * h.min(max_step),
            None => dir * s.initial_step(dir)?,
        };
        Ok(s)
    }

    fn eval_k1(&mut self) -> Result<(), IntegrationError> {
        let (y, k) = (&self.y, &mut self.k[0]);
        self.ev.rhs(y, k)?;
        self.stats.evaluations += 1;
        Ok(())
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn step_size(&self) -> f64 {
        self.h
    }

    pub fn evaluator(&mut self) -> &mut dyn Evaluator {
        &mut *self.ev
    }

    /// Replace the state (e.g. after renormalisation), keeping the step.
    pub fn reset_state(&mut self, y: &[f64]) -> Result<(), IntegrationError> {
        self.y.copy_from_slice(y);
        self.eval_k1()
    }

    fn scale(&self, a: f64, b: f64) -> f64 {
        self.abs_tol + self.rel_tol * a.abs().max(b.abs())
    }

    /// Starting step of Hairer's `hinit`.
    fn initial_step(&mut self, dir: f64) -> Result<f64, IntegrationError> {
        let n = self.y.len() as f64;
        let mut dnf = 0.0;
        let mut dny = 0.0;
        for i in 0..self.y.len() {
            let sk = self.abs_tol + self.rel_tol * self.y[i].abs();
            dnf += (self.k[0][i] / sk).powi(2);
            dny += (self.y[i] / sk).powi(2);
        }
        let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
            1e-6
        } else {
            (dny / dnf).sqrt() * 0.01
        };
        h = h.min(self.max_step);
        for i in 0..self.y.len() {
            self.ystage[i] = self.y[i] + dir * h * self.k[0][i];
        }
        let (ys, k2) = (&self.ystage, &mut self.k[1]);
        self.ev.rhs(ys, k2)?;
        self.stats.evaluations += 1;
        let mut der2 = 0.0;
        for i in 0..self.y.len() {
            let sk = self.abs_tol + self.rel_tol * self.y[i].abs();
            der2 += ((self.k[1][i] - self.k[0][i]) / sk).powi(2);
        }
        let der2 = (der2 / n).sqrt() / h;
        let der12 = der2.max((dnf / n).sqrt());
        let h1 = if der12 <= 1e-15 {
            1e-6_f64.max(h * 1e-3)
        } else {
            (0.01 / der12).powf(0.2)
        };
        Ok((100.0 * h).min(h1).min(self.max_step))
    }

    fn stage(&mut self, coeffs: &[(usize, f64)], h: f64) {
        let n = self.y.len();
        for i in 0..n {
            let mut acc = 0.0;
            for &(j, a) in coeffs {
                acc += a * self.k[j][i];
            }
            self.ystage[i] = self.y[i] + h * acc;
        }
    }

    fn eval_stage(&mut self, dst: usize) -> Result<(), IntegrationError> {
        let (ys, k) = (&self.ystage, &mut self.k[dst]);
        self.ev.rhs(ys, k)?;
        self.stats.evaluations += 1;
        Ok(())
    }

    /// One accepted step, not beyond `t_limit`. Returns the dense segment.
    pub fn step(&mut self, t_limit: f64) -> Result<DenseSegment, IntegrationError> {
        let n = self.y.len();
        let dir = if t_limit >= self.t { 1.0 } else { -1.0 };
        loop {
            let mut h = dir * self.h.abs().min(self.max_step);
            let remaining = t_limit - self.t;
            let last = (h.abs() >= remaining.abs() * (1.0 - 1e-12)) || remaining.abs() <= h.abs() * 1e-10;
            if last {
                h = remaining;
            }
            if h.abs() <= 16.0 * f64::EPSILON * self.t.abs().max(1e-300) || h == 0.0 {
                return Err(IntegrationError::StepSizeUnderflow { t: self.t, h });
            }
            let attempt = self.try_step(h, n);
            let err = match attempt {
                Ok(err) => err,
                // a non-finite stage counts as a failed step
                Err(IntegrationError::System(SystemError::NonFinite(_))) => f64::INFINITY,
                Err(e) => return Err(e),
            };
            let expo = 0.2 - BETA * 0.75;
            if err <= 1.0 {
                let fac11 = err.powf(expo);
                let mut fac = fac11 / self.fac_old.powf(BETA);
                fac = (1.0 / FAC_MAX).max((1.0 / FAC_MIN).min(fac / SAFETY));
                let mut h_new = h / fac;
                self.fac_old = err.max(1e-4);
                if self.last_rejected {
                    h_new = dir * h_new.abs().min(h.abs());
                }
                self.last_rejected = false;
                self.stats.accepted += 1;

                let hk7: Vec<f64> = self.k[6].iter().map(|v| v * h).collect();
                let mut r = std::array::from_fn::<Vec<f64>, 5, _>(|_| vec![0.0; n]);
                for i in 0..n {
                    let ydiff = self.y1[i] - self.y[i];
                    let bspl = h * self.k[0][i] - ydiff;
                    r[0][i] = self.y[i];
                    r[1][i] = ydiff;
                    r[2][i] = bspl;
                    r[3][i] = ydiff - hk7[i] - bspl;
                    r[4][i] = h
                        * (D1 * self.k[0][i]
                            + D3 * self.k[2][i]
                            + D4 * self.k[3][i]
                            + D5 * self.k[4][i]
                            + D6 * self.k[5][i]
                            + D7 * self.k[6][i]);
                }
                let seg = DenseSegment {
                    t0: self.t,
                    h,
                    coeffs: r,
                };
                // FSAL: k7 is f at the new point
                self.k.swap(0, 6);
                std::mem::swap(&mut self.y, &mut self.y1);
                self.t = if last { t_limit } else { self.t + h };
                self.h = if h_new.abs() > 0.0 { h_new } else { h };
                return Ok(seg);
            }
            self.stats.rejected += 1;
            self.last_rejected = true;
            let shrink = if err.is_finite() {
                (1.0 / FAC_MIN).min(err.powf(expo) / SAFETY)
            } else {
                10.0
            };
            self.h = h / shrink;
        }
    }

    /// Stages of a step of size `h`; returns the scaled error norm and
    /// leaves the fifth-order solution in `y1` and `f(y1)` in `k[6]`.
    fn try_step(&mut self, h: f64, n: usize) -> Result<f64, IntegrationError> {
        self.stage(&[(0, A21)], h);
        self.eval_stage(1)?;
        self.stage(&[(0, A31), (1, A32)], h);
        self.eval_stage(2)?;
        self.stage(&[(0, A41), (1, A42), (2, A43)], h);
        self.eval_stage(3)?;
        self.stage(&[(0, A51), (1, A52), (2, A53), (3, A54)], h);
        self.eval_stage(4)?;
        self.stage(&[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)], h);
        self.eval_stage(5)?;
        for i in 0..n {
            self.y1[i] = self.y[i]
                + h * (A71 * self.k[0][i]
                    + A73 * self.k[2][i]
                    + A74 * self.k[3][i]
                    + A75 * self.k[4][i]
                    + A76 * self.k[5][i]);
        }
        let (y1, k7) = (&self.y1, &mut self.k[6]);
        self.ev.rhs(y1, k7)?;
        self.stats.evaluations += 1;
        let mut err = 0.0;
        for i in 0..n {
            let e = h
                * (E1 * self.k[0][i]
                    + E3 * self.k[2][i]
                    + E4 * self.k[3][i]
                    + E5 * self.k[4][i]
                    + E6 * self.k[5][i]
                    + E7 * self.k[6][i]);
            let sk = self.scale(self.y[i], self.y1[i]);
            err += (e / sk).powi(2);
        }
        let err = (err / n as f64).sqrt();
        Ok(if err.is_finite() { err } else { f64::INFINITY })
    }

    /// Step until exactly `t_target`.
    pub fn advance_to(&mut self, t_target: f64, max_steps: usize) -> Result<(), IntegrationError> {
        let start = self.stats.accepted;
        while self.t != t_target {
            if self.stats.accepted - start >= max_steps {
                return Err(IntegrationError::TooManySteps {
                    t: self.t,
                    max_steps,
                });
            }
            self.step(t_target)?;
        }
        Ok(())
    }
}

fn stepper<'e>(
    ev: &'e mut dyn Evaluator,
    y0: &[f64],
    cfg: &IvpConfig,
) -> Result<Dopri5<'e>, IntegrationError> {
    let span = (cfg.t_end - cfg.t0).abs();
    let max_step = cfg.max_step.unwrap_or(span).min(span.max(f64::MIN_POSITIVE));
    let control = StepControl {
        rel_tol: cfg.rel_tol,
        abs_tol: cfg.abs_tol,
        max_step,
        initial_step: cfg.initial_step,
    };
    Dopri5::new(ev, cfg.t0, y0, control, cfg.t_end - cfg.t0)
}

fn check_initial(y0: &[f64], n: usize) -> Result<(), IntegrationError> {
    if y0.len() != n {
        return Err(IntegrationError::InvalidConfig(format!(
            "initial state has {} entries, system has {n}",
            y0.len()
        )));
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(SystemError::NonFinite("initial state").into());
    }
    Ok(())
}

pub fn integrate(
    sys: &dyn DynamicalSystem,
    y0: &[f64],
    p: &[f64],
    cfg: &IvpConfig,
) -> Result<Trajectory, IntegrationError> {
    integrate_with_events(sys, y0, p, cfg, &mut []).map(|(traj, _)| traj)
}

/// Scalar event function `g(t, y)`.
pub type EventFn<'a> = Box<dyn FnMut(f64, &[f64]) -> f64 + 'a>;

pub struct EventSpec<'a> {
    pub g: EventFn<'a>,
    /// `+1`: increasing crossings only, `-1`: decreasing only, `0`: both.
    pub direction: i8,
    pub terminal: bool,
}

impl<'a> EventSpec<'a> {
    pub fn new(g: impl FnMut(f64, &[f64]) -> f64 + 'a, direction: i8, terminal: bool) -> Self {
        EventSpec {
            g: Box::new(g),
            direction,
            terminal,
        }
    }

    /// Event `y[index] - level`.
    pub fn coordinate(index: usize, level: f64, direction: i8, terminal: bool) -> Self {
        EventSpec::new(move |_, y: &[f64]| y[index] - level, direction, terminal)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub t: f64,
    pub y: Vec<f64>,
    pub index: usize,
    /// `+1` for an increasing crossing, `-1` for a decreasing one.
    pub sign: i8,
    pub residual: f64,
}

pub const EVENT_TOL: f64 = 1e-10;

fn crossing(g0: f64, g1: f64, direction: i8) -> Option<i8> {
    let sign = if g0 < 0.0 && g1 >= 0.0 {
        1
    } else if g0 > 0.0 && g1 <= 0.0 {
        -1
    } else {
        return None;
    };
    (direction == 0 || direction == sign).then_some(sign)
}

/// Root of `g` on the segment between `ta` and `tb` by the Illinois
/// variant of regula falsi, with bisection safeguarding.
fn locate(
    seg: &DenseSegment,
    g: &mut EventFn<'_>,
    (mut ta, mut ga): (f64, f64),
    (mut tb, mut gb): (f64, f64),
) -> (f64, Vec<f64>, f64) {
    let mut y = vec![0.0; seg.coeffs[0].len()];
    let mut side = 0i8;
    let mut best = if ga.abs() < gb.abs() { (ta, ga) } else { (tb, gb) };
    for it in 0..200 {
        if best.1.abs() <= EVENT_TOL {
            break;
        }
        let mut t = if it % 8 == 7 {
            0.5 * (ta + tb)
        } else {
            (ta * gb - tb * ga) / (gb - ga)
        };
        if !t.is_finite() || t == ta || t == tb {
            t = 0.5 * (ta + tb);
        }
        if t == ta || t == tb {
            break;
        }
        seg.eval_into(t, &mut y);
        let gt = g(t, &y);
        if gt.abs() < best.1.abs() {
            best = (t, gt);
        }
        if (gt < 0.0) == (gb < 0.0) && gt != 0.0 {
            tb = t;
            gb = gt;
            if side == -1 {
                ga /= 2.0;
            }
            side = -1;
        } else {
            ta = t;
            ga = gt;
            if side == 1 {
                gb /= 2.0;
            }
            side = 1;
        }
        if gt == 0.0 {
            break;
        }
    }
    seg.eval_into(best.0, &mut y);
    (best.0, y, best.1)
}

pub fn integrate_with_events(
    sys: &dyn DynamicalSystem,
    y0: &[f64],
    p: &[f64],
    cfg: &IvpConfig,
    events: &mut [EventSpec<'_>],
) -> Result<(Trajectory, Vec<EventRecord>), IntegrationError> {
    cfg.validate()?;
    check_initial(y0, sys.dim())?;
    let mut ev = sys.evaluator(p)?;
    integrate_evaluator(ev.as_mut(), y0, cfg, events)
}

/// Integration over an existing evaluator.
pub fn integrate_evaluator(
    ev: &mut dyn Evaluator,
    y0: &[f64],
    cfg: &IvpConfig,
    events: &mut [EventSpec<'_>],
) -> Result<(Trajectory, Vec<EventRecord>), IntegrationError> {
    cfg.validate()?;
    let mut traj = Trajectory {
        times: vec![cfg.t0],
        states: vec![y0.to_vec()],
        ..Default::default()
    };
    let mut records = Vec::new();
    if cfg.t_end == cfg.t0 {
        return Ok((traj, records));
    }
    let mut st = stepper(ev, y0, cfg)?;
    let mut g_prev: Vec<f64> = events
        .iter_mut()
        .map(|e| (e.g)(cfg.t0, y0))
        .collect();
    while st.t() != cfg.t_end {
        if st.stats.accepted >= cfg.max_steps {
            return Err(IntegrationError::TooManySteps {
                t: st.t(),
                max_steps: cfg.max_steps,
            });
        }
        let seg = st.step(cfg.t_end)?;
        let (t1, y1) = (st.t(), st.y().to_vec());
        let mut found: Vec<EventRecord> = Vec::new();
        for (i, e) in events.iter_mut().enumerate() {
            let g1 = (e.g)(t1, &y1);
            if let Some(sign) = crossing(g_prev[i], g1, e.direction) {
                let (t, y, residual) = locate(&seg, &mut e.g, (seg.t0, g_prev[i]), (t1, g1));
                found.push(EventRecord {
                    t,
                    y,
                    index: i,
                    sign,
                    residual,
                });
            }
            g_prev[i] = g1;
        }
        let dir = seg.h.signum();
        found.sort_by(|a, b| (dir * a.t).total_cmp(&(dir * b.t)).then(a.index.cmp(&b.index)));
        let terminal = found.iter().position(|r| events[r.index].terminal);
        if let Some(k) = terminal {
            found.truncate(k + 1);
            let stop = &found[k];
            traj.times.push(stop.t);
            traj.states.push(stop.y.clone());
            if cfg.dense {
                traj.segments.push(seg);
            }
            records.extend(found);
            traj.stats = st.stats;
            return Ok((traj, records));
        }
        records.extend(found);
        if cfg.record_steps || t1 == cfg.t_end {
            traj.times.push(t1);
            traj.states.push(y1);
        }
        if cfg.dense {
            traj.segments.push(seg);
        }
    }
    traj.stats = st.stats;
    Ok((traj, records))
}

/// The augmented system `(y, Y)` with `Y' = J(y) Y`, `Y` stored column
/// by column after `y`.
pub struct VariationalEvaluator<'a> {
    inner: &'a mut dyn Evaluator,
    n: usize,
    k: usize,
}

impl<'a> VariationalEvaluator<'a> {
    pub fn new(inner: &'a mut dyn Evaluator, n: usize, k: usize) -> Self {
        VariationalEvaluator { inner, n, k }
    }
}

impl Evaluator for VariationalEvaluator<'_> {
    fn params(&self) -> &[f64] {
        self.inner.params()
    }

    fn rhs(&mut self, z: &[f64], out: &mut [f64]) -> Result<(), SystemError> {
        let n = self.n;
        let (y, basis) = z.split_at(n);
        self.inner.rhs(y, &mut out[..n])?;
        let jac = self.inner.jacobian(y)?;
        let yb = DMatrix::from_column_slice(n, self.k, basis);
        let prod = jac * yb;
        out[n..].copy_from_slice(prod.as_slice());
        Ok(())
    }
}

/// Pack `(y, Y)` into one vector.
pub fn pack_variational(y: &[f64], basis: &DMatrix<f64>) -> Vec<f64> {
    let mut z = y.to_vec();
    z.extend_from_slice(basis.as_slice());
    z
}

pub fn unpack_variational(z: &[f64], n: usize) -> (Vec<f64>, DMatrix<f64>) {
    let k = (z.len() - n) / n;
    (z[..n].to_vec(), DMatrix::from_column_slice(n, k, &z[n..]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariationalResult {
    pub trajectory: Trajectory,
    /// `(t, Y(t))` at `t0` and every checkpoint.
    pub basis: Vec<(f64, DMatrix<f64>)>,
}

/// Integrate `y` with the basis `Y` (`N x k`) under `Y' = J(y) Y`,
/// reporting `Y` at the checkpoints (which must lie in the span, ordered
/// in the direction of integration) and at `t_end`.
pub fn integrate_variational(
    sys: &dyn DynamicalSystem,
    y0: &[f64],
    p: &[f64],
    cfg: &IvpConfig,
    basis: &DMatrix<f64>,
    checkpoints: &[f64],
) -> Result<VariationalResult, IntegrationError> {
    cfg.validate()?;
    let n = sys.dim();
    check_initial(y0, n)?;
    if basis.nrows() != n || basis.ncols() < 1 || basis.ncols() > n {
        return Err(IntegrationError::InvalidConfig(format!(
            "basis must be {n} x k with 1 <= k <= {n}"
        )));
    }
    let mut inner = sys.evaluator(p)?;
    let mut var = VariationalEvaluator::new(inner.as_mut(), n, basis.ncols());
    let z0 = pack_variational(y0, basis);
    let mut traj = Trajectory {
        times: vec![cfg.t0],
        states: vec![y0.to_vec()],
        ..Default::default()
    };
    let mut out = vec![(cfg.t0, basis.clone())];
    if cfg.t_end == cfg.t0 {
        return Ok(VariationalResult {
            trajectory: traj,
            basis: out,
        });
    }
    let mut st = stepper(&mut var, &z0, cfg)?;
    let dir = (cfg.t_end - cfg.t0).signum();
    let mut targets: Vec<f64> = checkpoints
        .iter()
        .copied()
        .filter(|&t| dir * (t - cfg.t0) > 0.0 && dir * (cfg.t_end - t) > 0.0)
        .collect();
    targets.push(cfg.t_end);
    for target in targets {
        while st.t() != target {
            if st.stats.accepted >= cfg.max_steps {
                return Err(IntegrationError::TooManySteps {
                    t: st.t(),
                    max_steps: cfg.max_steps,
                });
            }
            st.step(target)?;
            if cfg.record_steps || st.t() == cfg.t_end {
                traj.times.push(st.t());
                traj.states.push(st.y()[..n].to_vec());
            }
        }
        let (_, yb) = unpack_variational(st.y(), n);
        out.push((target, yb));
    }
    traj.stats = st.stats;
    Ok(VariationalResult {
        trajectory: traj,
        basis: out,
    })
}
