//! Pseudo-arclength continuation of equilibria and periodic orbits, with
//! detection and localisation of folds, Hopf points, branch points, period
//! doublings and cycle folds.
//!
//! Equilibria are continued in `(y, p)`, periodic orbits by single shooting
//! in `(y0, T, p)`. Test functions are sign-corrected magnitudes:
//! `sign(prod) * min |factor|`, which share their zeros and sign changes
//! with the classical products but stay well scaled in high dimension.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::f64::consts::PI;
use thiserror::Error;

use crate::export::float;
use crate::integrator::{integrate_evaluator, IntegrationError, IvpConfig};
use crate::linalg::{
    cmp_by_magnitude, cmp_by_real_part, complex_eigenvector, det_sign, eigenvalues, null_vector,
    product_sign, real_eigenvector, smallest_singular_value,
};
use crate::system::{fd_step, param_derivative, DynamicalSystem, Evaluator, SystemError};

/// Complex eigenvalues with `|Im|` below this count as real.
pub const NEUTRAL_SADDLE_IM: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContinuationError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("Newton iteration did not converge in {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("singular Jacobian")]
    SingularJacobian,
    #[error("period must be positive, got {0}")]
    InvalidPeriod(f64),
    #[error("no complex eigenpair at the Hopf point")]
    NotHopf,
    #[error("no Floquet multiplier near -1")]
    NotPeriodDoubling,
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
}

impl ContinuationError {
    pub fn is_delay_violation(&self) -> bool {
        matches!(
            self,
            ContinuationError::System(SystemError::Delay { .. })
                | ContinuationError::Integration(IntegrationError::System(SystemError::Delay { .. }))
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuerConfig {
    pub init_stepsize: f64,
    pub min_stepsize: f64,
    pub max_stepsize: f64,
    pub max_points: usize,
    pub corrector_tol: f64,
    pub test_tol: f64,
    pub max_newton: usize,
    /// Sign of the initial change of the active parameter.
    pub direction: Direction,
    /// Stop (reason `user`) once the parameter leaves this interval.
    pub param_range: Option<(f64, f64)>,
    /// Integration tolerances for shooting.
    pub shooting_rel_tol: f64,
    pub shooting_abs_tol: f64,
}

impl Default for ContinuerConfig {
    fn default() -> Self {
        ContinuerConfig {
            init_stepsize: 0.01,
            min_stepsize: 1e-6,
            max_stepsize: 0.5,
            max_points: 100,
            corrector_tol: 1e-8,
            test_tol: 1e-8,
            max_newton: 10,
            direction: Direction::Forward,
            param_range: None,
            shooting_rel_tol: 1e-10,
            shooting_abs_tol: 1e-12,
        }
    }
}

impl ContinuerConfig {
    pub fn validate(&self) -> Result<(), ContinuationError> {
        let ok = 0.0 < self.min_stepsize
            && self.min_stepsize <= self.init_stepsize
            && self.init_stepsize <= self.max_stepsize
            && self.corrector_tol > 0.0
            && self.test_tol > 0.0
            && self.max_points >= 1
            && self.max_newton >= 1
            && self.shooting_rel_tol > 0.0
            && self.shooting_abs_tol > 0.0;
        if ok {
            Ok(())
        } else {
            Err(ContinuationError::InvalidConfig(
                "need 0 < min_stepsize <= init_stepsize <= max_stepsize and positive tolerances"
                    .into(),
            ))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxPoints,
    StepUnderflow,
    DelayGuard,
    User,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::MaxPoints => "max_points",
            StopReason::StepUnderflow => "step_underflow",
            StopReason::DelayGuard => "delay_guard",
            StopReason::User => "user",
        }
    }
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Fold,
    Hopf,
    BranchPoint,
    PeriodDoubling,
    CycleFold,
}

impl EventKind {
    pub fn tag(self) -> &'static str {
        match self {
            EventKind::Fold => "LP",
            EventKind::Hopf => "H",
            EventKind::BranchPoint => "BP",
            EventKind::PeriodDoubling => "PD",
            EventKind::CycleFold => "LPC",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        [
            EventKind::Fold,
            EventKind::Hopf,
            EventKind::BranchPoint,
            EventKind::PeriodDoubling,
            EventKind::CycleFold,
        ]
        .into_iter()
        .find(|k| k.tag() == tag)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchKind {
    Equilibrium,
    LimitCycle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchPoint {
    /// Value of the active parameter.
    pub param: f64,
    /// Equilibrium, or anchor state of the cycle.
    pub state: Vec<f64>,
    pub period: Option<f64>,
    /// Eigenvalues with positive real part, or nontrivial multipliers
    /// outside the unit circle.
    pub n_unstable: usize,
    /// `[fold, hopf, bp]` for equilibria, `[pd, lpc]` for cycles.
    pub tests: Vec<f64>,
    /// Eigenvalues (by real part) or multipliers (by magnitude).
    pub spectrum: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BifurcationEvent {
    pub kind: EventKind,
    /// Index of the branch point preceding the event.
    pub after: usize,
    pub point: BranchPoint,
    /// Test-function value at the located point.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub kind: BranchKind,
    pub active: usize,
    pub param_name: String,
    /// Full parameter vector; the active entry holds the start value.
    pub params: Vec<f64>,
    pub labels: Vec<String>,
    pub points: Vec<BranchPoint>,
    pub events: Vec<BifurcationEvent>,
    pub stop: StopReason,
    /// Parameter values of sign changes of the Hopf test caused by real
    /// eigenvalue pairs.
    pub neutral_saddles: Vec<f64>,
}

impl Branch {
    pub fn events_of(&self, kind: EventKind) -> impl Iterator<Item = &BifurcationEvent> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    /// Parameter vector at a point of the branch.
    pub fn params_at(&self, point: &BranchPoint) -> Vec<f64> {
        let mut p = self.params.clone();
        p[self.active] = point.param;
        p
    }

    fn csv_header(&self) -> Vec<String> {
        let mut h = vec!["index".to_string(), self.param_name.clone()];
        match self.kind {
            BranchKind::Equilibrium => {
                h.extend(self.labels.iter().cloned());
                h.extend(["n_unstable", "psi_fold", "psi_hopf", "psi_bp"].map(String::from));
            }
            BranchKind::LimitCycle => {
                h.extend(
                    ["period", "n_unstable_multipliers", "psi_pd", "psi_lpc"].map(String::from),
                );
                h.extend(self.labels.iter().cloned());
            }
        }
        h
    }

    fn csv_row(&self, index: String, pt: &BranchPoint) -> Vec<String> {
        let mut r = vec![index, float(pt.param)];
        let state = pt.state.iter().map(|v| float(*v));
        let tests = pt.tests.iter().map(|v| float(*v));
        match self.kind {
            BranchKind::Equilibrium => {
                r.extend(state);
                r.push(pt.n_unstable.to_string());
                r.extend(tests);
            }
            BranchKind::LimitCycle => {
                r.push(float(pt.period.unwrap_or(f64::NAN)));
                r.push(pt.n_unstable.to_string());
                r.extend(tests);
                r.extend(state);
            }
        }
        r
    }

    /// Points as numbered rows; each event as a row tagged `LP`, `H`,
    /// `BP`, `PD` or `LPC`, placed after the point preceding it.
    pub fn to_csv(&self) -> String {
        let mut out = self.csv_header().join(",");
        out.push('\n');
        for (i, pt) in self.points.iter().enumerate() {
            out.push_str(&self.csv_row(i.to_string(), pt).join(","));
            out.push('\n');
            for e in self.events.iter().filter(|e| e.after == i) {
                out.push_str(&self.csv_row(e.kind.tag().to_string(), &e.point).join(","));
                out.push('\n');
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenReport {
    /// Sorted by decreasing real part, possibly truncated.
    pub eigenvalues: Vec<Complex64>,
    /// Eigenvalues with positive real part (before truncation).
    pub unstable: usize,
    pub total: usize,
}

pub fn sorted_eigenvalues(jac: &DMatrix<f64>) -> Vec<Complex64> {
    let mut ev = eigenvalues(jac);
    ev.sort_by(cmp_by_real_part);
    ev
}

pub fn eigen_report(
    sys: &dyn DynamicalSystem,
    y: &[f64],
    p: &[f64],
    k: Option<usize>,
) -> Result<EigenReport, ContinuationError> {
    let jac = sys.evaluator(p)?.jacobian(y)?;
    let mut ev = sorted_eigenvalues(&jac);
    let unstable = ev.iter().filter(|l| l.re > 0.0).count();
    let total = ev.len();
    if let Some(k) = k {
        ev.truncate(k);
    }
    Ok(EigenReport {
        eigenvalues: ev,
        unstable,
        total,
    })
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Newton's method on `f(y, p) = 0` at fixed parameters.
pub fn find_equilibrium(
    sys: &dyn DynamicalSystem,
    y_guess: &[f64],
    p: &[f64],
) -> Result<Vec<f64>, ContinuationError> {
    const MAX_ITER: usize = 50;
    let tol = ContinuerConfig::default().corrector_tol;
    let n = sys.dim();
    if y_guess.len() != n {
        return Err(SystemError::IndexOutOfRange {
            index: y_guess.len(),
            dim: n,
        }
        .into());
    }
    let mut ev = sys.evaluator(p)?;
    let mut y = DVector::from_column_slice(y_guess);
    let mut f = vec![0.0; n];
    for _ in 0..MAX_ITER {
        ev.rhs(y.as_slice(), &mut f)?;
        if max_abs(&f) <= 1e-3 * tol {
            return Ok(y.as_slice().to_vec());
        }
        let jac = ev.jacobian(y.as_slice())?;
        let dy = jac
            .lu()
            .solve(&-DVector::from_column_slice(&f))
            .ok_or(ContinuationError::SingularJacobian)?;
        y += &dy;
        if !y.iter().all(|v| v.is_finite()) {
            return Err(SystemError::NonFinite("Newton iterate").into());
        }
        if dy.amax() <= 1e-13 * (1.0 + y.amax()) {
            ev.rhs(y.as_slice(), &mut f)?;
            if max_abs(&f) <= tol {
                return Ok(y.as_slice().to_vec());
            }
        }
    }
    ev.rhs(y.as_slice(), &mut f)?;
    let residual = max_abs(&f);
    if residual <= tol {
        return Ok(y.as_slice().to_vec());
    }
    Err(ContinuationError::NoConvergence {
        iterations: MAX_ITER,
        residual,
    })
}

/// Residual and Jacobian of the defining system at one point, plus the
/// matrix whose spectrum gives stability (Jacobian or monodromy).
struct Linearisation {
    f: DVector<f64>,
    g: DMatrix<f64>,
    core: DMatrix<f64>,
}

trait Problem {
    fn kind(&self) -> BranchKind;
    fn n(&self) -> usize;
    /// Position of the active parameter in the unknowns.
    fn param_slot(&self) -> usize;
    fn eval(&mut self, x: &DVector<f64>) -> Result<Linearisation, ContinuationError>;
    /// Called once a point is accepted.
    fn accept(&mut self, _x: &DVector<f64>) -> Result<(), ContinuationError> {
        Ok(())
    }
}

struct EquilibriumProblem<'a> {
    sys: &'a dyn DynamicalSystem,
    p: Vec<f64>,
    active: usize,
}

impl Problem for EquilibriumProblem<'_> {
    fn kind(&self) -> BranchKind {
        BranchKind::Equilibrium
    }

    fn n(&self) -> usize {
        self.sys.dim()
    }

    fn param_slot(&self) -> usize {
        self.n()
    }

    fn eval(&mut self, x: &DVector<f64>) -> Result<Linearisation, ContinuationError> {
        let n = self.n();
        self.p[self.active] = x[n];
        let y = &x.as_slice()[..n];
        let mut ev = self.sys.evaluator(&self.p)?;
        let mut f = DVector::zeros(n);
        ev.rhs(y, f.as_mut_slice())?;
        let jac = ev.jacobian(y)?;
        let fp = param_derivative(self.sys, y, &self.p, self.active)?;
        let mut g = DMatrix::zeros(n, n + 1);
        g.view_mut((0, 0), (n, n)).copy_from(&jac);
        g.set_column(n, &DVector::from_vec(fp));
        if !(f.iter().chain(g.iter()).all(|v| v.is_finite())) {
            return Err(SystemError::NonFinite("continuation system").into());
        }
        Ok(Linearisation { f, g, core: jac })
    }
}

/// Flow, monodromy and parameter sensitivity over one period:
/// `y' = f(y)`, `Y' = J Y`, `z' = J z + f_p`.
struct ShootingEvaluator<'s> {
    base: Box<dyn Evaluator + 's>,
    plus: Option<Box<dyn Evaluator + 's>>,
    minus: Option<Box<dyn Evaluator + 's>>,
    denom: f64,
    n: usize,
    fa: Vec<f64>,
    fb: Vec<f64>,
}

impl Evaluator for ShootingEvaluator<'_> {
    fn params(&self) -> &[f64] {
        self.base.params()
    }

    fn rhs(&mut self, z: &[f64], out: &mut [f64]) -> Result<(), SystemError> {
        let n = self.n;
        let y = &z[..n];
        self.base.rhs(y, &mut out[..n])?;
        let jac = self.base.jacobian(y)?;
        let ymat = DMatrix::from_column_slice(n, n, &z[n..n + n * n]);
        out[n..n + n * n].copy_from_slice((&jac * ymat).as_slice());
        let zp = DVector::from_column_slice(&z[n + n * n..]);
        match &mut self.plus {
            Some(e) => e.rhs(y, &mut self.fa)?,
            None => self.fa.copy_from_slice(&out[..n]),
        }
        match &mut self.minus {
            Some(e) => e.rhs(y, &mut self.fb)?,
            None => self.fb.copy_from_slice(&out[..n]),
        }
        let jz = &jac * zp;
        for i in 0..n {
            out[n + n * n + i] = jz[i] + (self.fa[i] - self.fb[i]) / self.denom;
        }
        Ok(())
    }
}

struct Shot {
    end: Vec<f64>,
    f_end: Vec<f64>,
    monodromy: DMatrix<f64>,
    phi_p: Vec<f64>,
}

fn shoot(
    sys: &dyn DynamicalSystem,
    y0: &[f64],
    period: f64,
    p: &[f64],
    active: usize,
    cfg: &ContinuerConfig,
) -> Result<Shot, ContinuationError> {
    if !(period > 0.0 && period.is_finite()) {
        return Err(ContinuationError::InvalidPeriod(period));
    }
    let n = sys.dim();
    let base = sys.evaluator(p)?;
    let h = fd_step(p[active]);
    let shifted = |d: f64| {
        let mut q = p.to_vec();
        q[active] += d;
        sys.evaluator(&q).ok()
    };
    let (plus, minus) = (shifted(h), shifted(-h));
    let denom = match (&plus, &minus) {
        (Some(_), Some(_)) => 2.0 * h,
        (None, None) => return Err(ContinuationError::SingularJacobian),
        _ => h,
    };
    let mut ev = ShootingEvaluator {
        base,
        plus,
        minus,
        denom,
        n,
        fa: vec![0.0; n],
        fb: vec![0.0; n],
    };
    let mut z0 = y0.to_vec();
    z0.extend_from_slice(DMatrix::<f64>::identity(n, n).as_slice());
    z0.extend(std::iter::repeat_n(0.0, n));
    let ivp = IvpConfig {
        rel_tol: cfg.shooting_rel_tol,
        abs_tol: cfg.shooting_abs_tol,
        t0: 0.0,
        t_end: period,
        record_steps: false,
        ..Default::default()
    };
    let (traj, _) = integrate_evaluator(&mut ev, &z0, &ivp, &mut [])?;
    let z = traj.final_state();
    let end = z[..n].to_vec();
    let monodromy = DMatrix::from_column_slice(n, n, &z[n..n + n * n]);
    let phi_p = z[n + n * n..].to_vec();
    let mut f_end = vec![0.0; n];
    ev.base.rhs(&end, &mut f_end)?;
    Ok(Shot {
        end,
        f_end,
        monodromy,
        phi_p,
    })
}

struct CycleProblem<'a> {
    sys: &'a dyn DynamicalSystem,
    p: Vec<f64>,
    active: usize,
    cfg: ContinuerConfig,
    ref_y: Vec<f64>,
    ref_f: Vec<f64>,
}

impl<'a> CycleProblem<'a> {
    fn new(
        sys: &'a dyn DynamicalSystem,
        y_ref: &[f64],
        p: &[f64],
        active: usize,
        cfg: &ContinuerConfig,
    ) -> Result<Self, ContinuationError> {
        let mut prob = CycleProblem {
            sys,
            p: p.to_vec(),
            active,
            cfg: cfg.clone(),
            ref_y: Vec::new(),
            ref_f: Vec::new(),
        };
        prob.set_reference(y_ref, p[active])?;
        Ok(prob)
    }

    fn set_reference(&mut self, y: &[f64], pa: f64) -> Result<(), ContinuationError> {
        self.p[self.active] = pa;
        let mut f = vec![0.0; y.len()];
        self.sys.evaluator(&self.p)?.rhs(y, &mut f)?;
        self.ref_y = y.to_vec();
        self.ref_f = f;
        Ok(())
    }
}

impl Problem for CycleProblem<'_> {
    fn kind(&self) -> BranchKind {
        BranchKind::LimitCycle
    }

    fn n(&self) -> usize {
        self.sys.dim()
    }

    fn param_slot(&self) -> usize {
        self.n() + 1
    }

    fn eval(&mut self, x: &DVector<f64>) -> Result<Linearisation, ContinuationError> {
        let n = self.n();
        self.p[self.active] = x[n + 1];
        let y0 = &x.as_slice()[..n];
        let shot = shoot(self.sys, y0, x[n], &self.p, self.active, &self.cfg)?;
        let mut f = DVector::zeros(n + 1);
        let mut g = DMatrix::zeros(n + 1, n + 2);
        for i in 0..n {
            f[i] = shot.end[i] - y0[i];
            f[n] += self.ref_f[i] * (y0[i] - self.ref_y[i]);
            for j in 0..n {
                g[(i, j)] = shot.monodromy[(i, j)];
            }
            g[(i, i)] -= 1.0;
            g[(i, n)] = shot.f_end[i];
            g[(i, n + 1)] = shot.phi_p[i];
            g[(n, i)] = self.ref_f[i];
        }
        if !(f.iter().chain(g.iter()).all(|v| v.is_finite())) {
            return Err(SystemError::NonFinite("shooting system").into());
        }
        Ok(Linearisation {
            f,
            g,
            core: shot.monodromy,
        })
    }

    fn accept(&mut self, x: &DVector<f64>) -> Result<(), ContinuationError> {
        let n = self.n();
        self.set_reference(&x.as_slice()[..n], x[n + 1])
    }
}

/// Bordered Newton corrector: `F(x) = 0`, `b·(x - x_pred) = 0`.
fn correct(
    prob: &mut dyn Problem,
    x_pred: &DVector<f64>,
    border: &DVector<f64>,
    cfg: &ContinuerConfig,
) -> Result<(DVector<f64>, Linearisation, usize), ContinuationError> {
    let dim = x_pred.len();
    let mut x = x_pred.clone();
    let mut last_dx = f64::INFINITY;
    let mut residual = f64::INFINITY;
    for it in 0..=cfg.max_newton {
        let lin = prob.eval(&x)?;
        residual = lin.f.amax();
        if residual <= cfg.corrector_tol && last_dx <= cfg.corrector_tol * (1.0 + x.amax()) {
            return Ok((x, lin, it));
        }
        if it == cfg.max_newton {
            break;
        }
        let m = lin.g.nrows();
        let mut a = DMatrix::zeros(m + 1, dim);
        a.view_mut((0, 0), (m, dim)).copy_from(&lin.g);
        a.set_row(m, &border.transpose());
        let mut rhs = DVector::zeros(m + 1);
        rhs.rows_mut(0, m).copy_from(&-&lin.f);
        rhs[m] = -border.dot(&(&x - x_pred));
        let dx = a.lu().solve(&rhs).ok_or(ContinuationError::SingularJacobian)?;
        x += &dx;
        last_dx = dx.amax();
        if !x.iter().all(|v| v.is_finite()) {
            return Err(SystemError::NonFinite("Newton iterate").into());
        }
    }
    Err(ContinuationError::NoConvergence {
        iterations: cfg.max_newton,
        residual,
    })
}

fn signed_min(factors: &[Complex64]) -> f64 {
    let m = factors.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    if factors.is_empty() {
        return 1.0;
    }
    product_sign(factors.iter().copied()) * m
}

fn pair_sums(ev: &[Complex64]) -> Vec<(usize, usize, Complex64)> {
    let mut out = Vec::with_capacity(ev.len() * ev.len().saturating_sub(1) / 2);
    for i in 0..ev.len() {
        for j in i + 1..ev.len() {
            out.push((i, j, ev[i] + ev[j]));
        }
    }
    out
}

fn trivial_multiplier(mult: &[Complex64]) -> Option<usize> {
    (0..mult.len()).min_by(|&a, &b| {
        (mult[a] - 1.0)
            .norm()
            .total_cmp(&(mult[b] - 1.0).norm())
    })
}

fn analyse(
    kind: BranchKind,
    x: &DVector<f64>,
    lin: &Linearisation,
    tangent: &DVector<f64>,
) -> BranchPoint {
    let n = lin.core.nrows();
    let state = x.as_slice()[..n].to_vec();
    match kind {
        BranchKind::Equilibrium => {
            let ev = sorted_eigenvalues(&lin.core);
            let n_unstable = ev.iter().filter(|l| l.re > 0.0).count();
            let fold = signed_min(&ev);
            let sums: Vec<Complex64> = pair_sums(&ev).into_iter().map(|s| s.2).collect();
            let hopf = signed_min(&sums);
            let mut ext = DMatrix::zeros(n + 1, n + 1);
            ext.view_mut((0, 0), (n, n + 1)).copy_from(&lin.g);
            ext.set_row(n, &tangent.transpose());
            let bp = det_sign(&ext) * smallest_singular_value(&ext);
            BranchPoint {
                param: x[n],
                state,
                period: None,
                n_unstable,
                tests: vec![fold, hopf, bp],
                spectrum: ev,
            }
        }
        BranchKind::LimitCycle => {
            let mut mult = eigenvalues(&lin.core);
            mult.sort_by(cmp_by_magnitude);
            let nontrivial: Vec<Complex64> = match trivial_multiplier(&mult) {
                Some(k) => mult
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != k)
                    .map(|(_, m)| *m)
                    .collect(),
                None => Vec::new(),
            };
            let n_unstable = nontrivial.iter().filter(|m| m.norm() > 1.0).count();
            let pd: Vec<Complex64> = nontrivial.iter().map(|m| m + 1.0).collect();
            let lpc: Vec<Complex64> = nontrivial.iter().map(|m| m - 1.0).collect();
            BranchPoint {
                param: x[n + 1],
                state,
                period: Some(x[n]),
                n_unstable,
                tests: vec![signed_min(&pd), signed_min(&lpc)],
                spectrum: mult,
            }
        }
    }
}

/// Whether the sign change of the Hopf test at this point comes from a
/// complex pair crossing the imaginary axis.
fn is_genuine_hopf(pt: &BranchPoint) -> bool {
    pair_sums(&pt.spectrum)
        .into_iter()
        .min_by(|a, b| a.2.norm().total_cmp(&b.2.norm()))
        .map(|(i, j, _)| {
            let (a, b) = (pt.spectrum[i], pt.spectrum[j]);
            a.im.abs() > NEUTRAL_SADDLE_IM && b.im.abs() > NEUTRAL_SADDLE_IM
        })
        .unwrap_or(false)
}

/// Whether the change in the unstable count between consecutive points is
/// more than one simple crossing (or, for equilibria, is not matched by
/// any test-function sign change).
fn crossings_hidden(kind: BranchKind, a: &BranchPoint, b: &BranchPoint) -> bool {
    let dn = a.n_unstable.abs_diff(b.n_unstable);
    if dn > 2 {
        return true;
    }
    let any_flip = a.tests.iter().zip(&b.tests).any(|(x, y)| changes_sign(*x, *y));
    kind == BranchKind::Equilibrium && dn > 0 && !any_flip
}

fn changes_sign(a: f64, b: f64) -> bool {
    (a < 0.0 && b >= 0.0) || (a > 0.0 && b <= 0.0) || (a == 0.0 && b != 0.0)
}

/// Root of test function `test` on the chord from `xa` to `xb`, by the
/// Illinois variant of regula falsi (with periodic bisection), each
/// trial point corrected back onto the branch.
fn localise(
    prob: &mut dyn Problem,
    xa: &DVector<f64>,
    xb: &DVector<f64>,
    test: usize,
    (fa, fb): (f64, f64),
    cfg: &ContinuerConfig,
) -> Result<(f64, BranchPoint, f64), ContinuationError> {
    const MAX_ITER: usize = 60;
    let chord = xb - xa;
    let len = chord.norm();
    let border = &chord / len;
    let kind = prob.kind();
    let (mut s0, mut f0, mut s1, mut f1) = (0.0, fa, 1.0, fb);
    let mut side = 0i8;
    let mut best: Option<(f64, BranchPoint, f64)> = None;
    for it in 1..=MAX_ITER {
        let s = if it % 8 == 0 || f1 == f0 {
            0.5 * (s0 + s1)
        } else {
            (s0 * f1 - s1 * f0) / (f1 - f0)
        };
        let pred = xa + &chord * s;
        let (x, lin, _) = correct(prob, &pred, &border, cfg)?;
        let pt = analyse(kind, &x, &lin, &border);
        let f = pt.tests[test];
        if best.as_ref().is_none_or(|b| f.abs() < b.2) {
            best = Some((s, pt, f.abs()));
        }
        let width = (s1 - s0).abs() * len;
        if f.abs() <= 1e-3 * cfg.test_tol || (f.abs() <= cfg.test_tol && width <= cfg.test_tol) {
            break;
        }
        if width <= 1e-15 * (1.0 + xa.amax()) {
            break;
        }
        if changes_sign(f0, f) {
            s1 = s;
            f1 = f;
            if side == -1 {
                f0 *= 0.5;
            }
            side = -1;
        } else {
            s0 = s;
            f0 = f;
            if side == 1 {
                f1 *= 0.5;
            }
            side = 1;
        }
    }
    Ok(best.expect("at least one iteration"))
}

fn check_param(n_params: usize, active: usize) -> Result<(), ContinuationError> {
    if active >= n_params {
        return Err(ContinuationError::InvalidConfig(format!(
            "active parameter index {active} out of range"
        )));
    }
    Ok(())
}

fn run(
    prob: &mut dyn Problem,
    sys: &dyn DynamicalSystem,
    x0: DVector<f64>,
    p: &[f64],
    active: usize,
    cfg: &ContinuerConfig,
) -> Result<Branch, ContinuationError> {
    cfg.validate()?;
    let kind = prob.kind();
    let slot = prob.param_slot();
    let mut branch = empty_branch(sys, kind, p, active);
    let lin0 = match prob.eval(&x0) {
        Ok(l) => l,
        Err(e) if e.is_delay_violation() => {
            branch.stop = StopReason::DelayGuard;
            return Ok(branch);
        }
        Err(e) => return Err(e),
    };
    let mut tangent = null_vector(&lin0.g);
    if tangent[slot] * cfg.direction.sign() < 0.0 {
        tangent = -tangent;
    }
    let (mut x, lin, _) = correct(prob, &x0, &tangent, cfg)?;
    let mut pt = analyse(kind, &x, &lin, &tangent);
    branch.points.push(pt.clone());
    prob.accept(&x)?;
    let mut h = cfg.init_stepsize;
    let out_of_range = |v: f64| cfg.param_range.is_some_and(|(lo, hi)| v < lo || v > hi);

    while branch.points.len() < cfg.max_points {
        let pred = &x + &tangent * h;
        let attempt = correct(prob, &pred, &tangent, cfg).and_then(|(xn, lin, it)| {
            let secant = (&xn - &x).normalize();
            let new_pt = analyse(kind, &xn, &lin, &secant);
            Ok((xn, secant, new_pt, it))
        });
        let (xn, secant, new_pt, iters) = match attempt {
            Ok(v) if v.1.iter().all(|c| c.is_finite()) => v,
            _ => {
                h *= 0.5;
                if h < cfg.min_stepsize {
                    branch.stop = StopReason::StepUnderflow;
                    break;
                }
                continue;
            }
        };
        // two crossings inside one step can cancel in the test functions;
        // the unstable count exposes them, so refine the step
        if h * 0.5 >= cfg.min_stepsize && crossings_hidden(kind, &pt, &new_pt) {
            h *= 0.5;
            continue;
        }
        let after = branch.points.len() - 1;
        let mut found = Vec::new();
        let bp_changed = kind == BranchKind::Equilibrium
            && changes_sign(pt.tests[2], new_pt.tests[2]);
        for test in 0..pt.tests.len() {
            let (fa, fb) = (pt.tests[test], new_pt.tests[test]);
            if !changes_sign(fa, fb) {
                continue;
            }
            let ek = match (kind, test) {
                (BranchKind::Equilibrium, 0) if bp_changed => continue,
                (BranchKind::Equilibrium, 0) => EventKind::Fold,
                (BranchKind::Equilibrium, 1) => EventKind::Hopf,
                (BranchKind::Equilibrium, _) => EventKind::BranchPoint,
                (BranchKind::LimitCycle, 0) => EventKind::PeriodDoubling,
                (BranchKind::LimitCycle, _) => EventKind::CycleFold,
            };
            let Ok((s, located, residual)) = localise(prob, &x, &xn, test, (fa, fb), cfg) else {
                continue;
            };
            if ek == EventKind::Hopf && !is_genuine_hopf(&located) {
                branch.neutral_saddles.push(located.param);
                continue;
            }
            found.push((
                s,
                BifurcationEvent {
                    kind: ek,
                    after,
                    point: located,
                    residual,
                },
            ));
        }
        found.sort_by(|a, b| a.0.total_cmp(&b.0));
        branch.events.extend(found.into_iter().map(|f| f.1));
        prob.accept(&xn)?;
        x = xn;
        tangent = secant;
        pt = new_pt;
        let param = pt.param;
        branch.points.push(pt.clone());
        if iters <= 3 {
            h = (h * 1.3).min(cfg.max_stepsize);
        }
        if out_of_range(param) {
            branch.stop = StopReason::User;
            break;
        }
    }
    Ok(branch)
}

/// Continue the equilibrium `start` (at parameters `p`) in parameter
/// `active`. Stops are reported in the branch; errors only for invalid
/// input or a start point the corrector cannot converge.
pub fn continue_equilibrium(
    sys: &dyn DynamicalSystem,
    start: &[f64],
    p: &[f64],
    active: usize,
    cfg: &ContinuerConfig,
) -> Result<Branch, ContinuationError> {
    check_param(p.len(), active)?;
    let n = sys.dim();
    if start.len() != n {
        return Err(ContinuationError::InvalidConfig(format!(
            "start state has length {}, expected {n}",
            start.len()
        )));
    }
    let mut x0 = DVector::zeros(n + 1);
    x0.rows_mut(0, n).copy_from_slice(start);
    x0[n] = p[active];
    let mut prob = EquilibriumProblem {
        sys,
        p: p.to_vec(),
        active,
    };
    run(&mut prob, sys, x0, p, active, cfg)
}

/// A periodic orbit computed by single shooting.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitCycleShooting {
    pub y0: Vec<f64>,
    pub period: f64,
    /// Full parameter vector.
    pub params: Vec<f64>,
    pub active: usize,
    pub monodromy: DMatrix<f64>,
    /// Sorted by decreasing magnitude.
    pub multipliers: Vec<Complex64>,
    /// `|phi_T(y0) - y0|_inf`.
    pub defect: f64,
}

impl LimitCycleShooting {
    pub fn param(&self) -> f64 {
        self.params[self.active]
    }

    /// Shoot from `y0` over `period` and record monodromy and multipliers.
    pub fn evaluate(
        sys: &dyn DynamicalSystem,
        y0: &[f64],
        period: f64,
        p: &[f64],
        active: usize,
        cfg: &ContinuerConfig,
    ) -> Result<Self, ContinuationError> {
        check_param(p.len(), active)?;
        let shot = shoot(sys, y0, period, p, active, cfg)?;
        let defect = shot
            .end
            .iter()
            .zip(y0)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let mut multipliers = eigenvalues(&shot.monodromy);
        multipliers.sort_by(cmp_by_magnitude);
        Ok(LimitCycleShooting {
            y0: y0.to_vec(),
            period,
            params: p.to_vec(),
            active,
            monodromy: shot.monodromy,
            multipliers,
            defect,
        })
    }

    /// Distance of the multiplier nearest to `+1` from `+1`.
    pub fn trivial_multiplier_defect(&self) -> f64 {
        trivial_multiplier(&self.multipliers)
            .map(|k| (self.multipliers[k] - 1.0).norm())
            .unwrap_or(f64::INFINITY)
    }
}

/// Shooting with the amplitude constraint `dir·(y0 - center) = amplitude`
/// and the parameter free; the phase is pinned at the initial guess.
#[allow(clippy::too_many_arguments)]
fn correct_with_amplitude(
    sys: &dyn DynamicalSystem,
    center: &[f64],
    dir: &[f64],
    amplitude: f64,
    y_guess: &[f64],
    period: f64,
    p: &[f64],
    active: usize,
    cfg: &ContinuerConfig,
) -> Result<LimitCycleShooting, ContinuationError> {
    const MAX_ITER: usize = 30;
    let n = sys.dim();
    let mut prob = CycleProblem::new(sys, y_guess, p, active, cfg)?;
    let mut x = DVector::zeros(n + 2);
    x.rows_mut(0, n).copy_from_slice(y_guess);
    x[n] = period;
    x[n + 1] = p[active];
    let dirv = DVector::from_column_slice(dir);
    let cv = DVector::from_column_slice(center);
    let mut last_dx = f64::INFINITY;
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_ITER {
        let lin = prob.eval(&x)?;
        let amp_res = dirv.dot(&(x.rows(0, n) - &cv)) - amplitude;
        residual = lin.f.amax().max(amp_res.abs());
        if residual <= cfg.corrector_tol && last_dx <= cfg.corrector_tol * (1.0 + x.amax()) {
            let mut params = p.to_vec();
            params[active] = x[n + 1];
            let y0 = x.as_slice()[..n].to_vec();
            let mut multipliers = eigenvalues(&lin.core);
            multipliers.sort_by(cmp_by_magnitude);
            return Ok(LimitCycleShooting {
                defect: lin.f.rows(0, n).amax(),
                y0,
                period: x[n],
                params,
                active,
                monodromy: lin.core,
                multipliers,
            });
        }
        let mut a = DMatrix::zeros(n + 2, n + 2);
        a.view_mut((0, 0), (n + 1, n + 2)).copy_from(&lin.g);
        for j in 0..n {
            a[(n + 1, j)] = dir[j];
        }
        let mut rhs = DVector::zeros(n + 2);
        rhs.rows_mut(0, n + 1).copy_from(&-&lin.f);
        rhs[n + 1] = -amp_res;
        let dx = a.lu().solve(&rhs).ok_or(ContinuationError::SingularJacobian)?;
        x += &dx;
        last_dx = dx.amax();
        if !x.iter().all(|v| v.is_finite()) {
            return Err(SystemError::NonFinite("Newton iterate").into());
        }
    }
    Err(ContinuationError::NoConvergence {
        iterations: MAX_ITER,
        residual,
    })
}

/// Periodic orbit born at the Hopf point `(y_hopf, p)`: started at
/// `y_hopf + amplitude·Re v` with period `2π/ω` and corrected with the
/// parameter free.
pub fn hopf_to_cycle(
    sys: &dyn DynamicalSystem,
    y_hopf: &[f64],
    p: &[f64],
    active: usize,
    amplitude: f64,
    cfg: &ContinuerConfig,
) -> Result<LimitCycleShooting, ContinuationError> {
    check_param(p.len(), active)?;
    let (dir, omega) = hopf_direction(sys, y_hopf, p)?;
    let guess: Vec<f64> = y_hopf
        .iter()
        .zip(&dir)
        .map(|(y, d)| y + amplitude * d)
        .collect();
    correct_with_amplitude(
        sys,
        y_hopf,
        &dir,
        amplitude,
        &guess,
        2.0 * PI / omega,
        p,
        active,
        cfg,
    )
}

/// Unit vector `Re v` of the critical eigenvector and the frequency `ω`.
pub fn hopf_direction(
    sys: &dyn DynamicalSystem,
    y: &[f64],
    p: &[f64],
) -> Result<(Vec<f64>, f64), ContinuationError> {
    let jac = sys.evaluator(p)?.jacobian(y)?;
    let lambda = sorted_eigenvalues(&jac)
        .into_iter()
        .filter(|l| l.im > NEUTRAL_SADDLE_IM)
        .min_by(|a, b| a.re.abs().total_cmp(&b.re.abs()))
        .ok_or(ContinuationError::NotHopf)?;
    let (x, _) = complex_eigenvector(&jac, lambda).ok_or(ContinuationError::NotHopf)?;
    Ok((x, lambda.im))
}

/// Doubled-period orbit at a period-doubling point: started along the
/// eigenvector of the multiplier near `-1` with period `2T`.
pub fn pd_to_doubled_cycle(
    sys: &dyn DynamicalSystem,
    pd: &LimitCycleShooting,
    amplitude: f64,
    cfg: &ContinuerConfig,
) -> Result<LimitCycleShooting, ContinuationError> {
    let mu = pd
        .multipliers
        .iter()
        .copied()
        .min_by(|a, b| (a + 1.0).norm().total_cmp(&(b + 1.0).norm()))
        .ok_or(ContinuationError::NotPeriodDoubling)?;
    if (mu + 1.0).norm() > 0.1 {
        return Err(ContinuationError::NotPeriodDoubling);
    }
    let w = real_eigenvector(&pd.monodromy, mu.re).ok_or(ContinuationError::NotPeriodDoubling)?;
    let mut f0 = vec![0.0; w.len()];
    sys.evaluator(&pd.params)?.rhs(&pd.y0, &mut f0)?;
    let (w, f0) = (DVector::from_vec(w), DVector::from_vec(f0));
    let w = (&w - &f0 * (w.dot(&f0) / f0.norm_squared())).normalize();
    let guess: Vec<f64> = pd
        .y0
        .iter()
        .zip(w.iter())
        .map(|(y, d)| y + amplitude * d)
        .collect();
    correct_with_amplitude(
        sys,
        &pd.y0,
        w.as_slice(),
        amplitude,
        &guess,
        2.0 * pd.period,
        &pd.params,
        pd.active,
        cfg,
    )
}

/// Continue a periodic orbit in its active parameter.
pub fn continue_limit_cycle(
    sys: &dyn DynamicalSystem,
    cycle: &LimitCycleShooting,
    cfg: &ContinuerConfig,
) -> Result<Branch, ContinuationError> {
    let n = sys.dim();
    let active = cycle.active;
    check_param(cycle.params.len(), active)?;
    if cycle.y0.len() != n {
        return Err(ContinuationError::InvalidConfig(format!(
            "anchor state has length {}, expected {n}",
            cycle.y0.len()
        )));
    }
    let mut x0 = DVector::zeros(n + 2);
    x0.rows_mut(0, n).copy_from_slice(&cycle.y0);
    x0[n] = cycle.period;
    x0[n + 1] = cycle.param();
    let mut prob = match CycleProblem::new(sys, &cycle.y0, &cycle.params, active, cfg) {
        Ok(p) => p,
        Err(e) if e.is_delay_violation() => {
            let mut b = empty_branch(sys, BranchKind::LimitCycle, &cycle.params, active);
            b.stop = StopReason::DelayGuard;
            return Ok(b);
        }
        Err(e) => return Err(e),
    };
    run(&mut prob, sys, x0, &cycle.params, active, cfg)
}

fn empty_branch(sys: &dyn DynamicalSystem, kind: BranchKind, p: &[f64], active: usize) -> Branch {
    Branch {
        kind,
        active,
        param_name: sys.param_names()[active].clone(),
        params: p.to_vec(),
        labels: sys.labels(),
        points: Vec::new(),
        events: Vec::new(),
        stop: StopReason::MaxPoints,
        neutral_saddles: Vec::new(),
    }
}

/// Orbit data at a point of a cycle branch.
pub fn cycle_at(
    sys: &dyn DynamicalSystem,
    branch: &Branch,
    point: &BranchPoint,
    cfg: &ContinuerConfig,
) -> Result<LimitCycleShooting, ContinuationError> {
    let period = point.period.ok_or_else(|| {
        ContinuationError::InvalidConfig("point does not belong to a cycle branch".into())
    })?;
    LimitCycleShooting::evaluate(
        sys,
        &point.state,
        period,
        &branch.params_at(point),
        branch.active,
        cfg,
    )
}

#[cfg(test)]
mod tests;
