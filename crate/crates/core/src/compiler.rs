//! Pseudospectral discretisation of a model into an ODE system.
//!
//! The history segment of every coordinate on `[-tau, 0]` is represented by
//! its values at `M + 1` Chebyshev nodes. State layout: the current values
//! of the DDE coordinates (head block), then `M` blocks `V_1..V_M`, each
//! holding one entry per coordinate in layout order (DDE coordinates first,
//! then RE coordinates).
//!
//! * DDE coordinate `c`: `V_k` holds `x_c(t + theta_k)`; the head obeys
//!   `x' = F(history)` and the aux rows `V' = D_c (x; V)`.
//! * RE coordinate `c`: `V_k` holds the primitive `int_0^{theta_k} x_c`; its
//!   history values are `D_r V`, and `V' = D_c (0; V) - F`.
//!
//! The right-hand side splits into a linear part (differentiation-matrix
//! rows, scaled by `1/tau`) plus `F` in the head rows and `-F` in every RE
//! aux row. Only the latter is differenced for the Jacobian.
//!
//! A model without delays or renewal equations compiles to the plain ODE
//! `y' = F(y)` with one entry per coordinate.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    collect_delays, BinOp, EquationKind, Expr, MathFn, ModelAst, ModelFile, ModelFileError,
};
use crate::spectral::{
    clenshaw_curtis, reference_lagrange_row, ChebyshevGrid, DiffMatrices, QuadRule, SpectralError,
};
use crate::system::{fd_step, DynamicalSystem, Evaluator, SystemError};

/// Relative slack for history points just outside `[-tau, 0]`.
const RANGE_SLACK: f64 = 1e-12;

/// Index map of the compiled state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct StateLayout {
    coords: Vec<String>,
    d_dde: usize,
    m: usize,
    labels: Vec<String>,
}

impl StateLayout {
    /// `coords` in layout order, the first `d_dde` of them DDE-defined;
    /// `m = 0` is a plain ODE.
    pub fn new(coords: Vec<String>, d_dde: usize, m: usize) -> Self {
        let d = coords.len();
        let mut labels: Vec<String> = coords[..d_dde].to_vec();
        for k in 1..=m {
            for c in &coords {
                labels.push(format!("{c}_aux{k:02}"));
            }
        }
        debug_assert_eq!(labels.len(), d_dde + d * m);
        StateLayout {
            coords,
            d_dde,
            m,
            labels,
        }
    }

    pub fn d(&self) -> usize {
        self.coords.len()
    }

    pub fn d_dde(&self) -> usize {
        self.d_dde
    }

    pub fn degree(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn coords(&self) -> &[String] {
        &self.coords
    }

    pub fn is_renewal(&self, c: usize) -> bool {
        c >= self.d_dde
    }

    pub fn head_index(&self, c: usize) -> Option<usize> {
        (c < self.d_dde).then_some(c)
    }

    /// Entry of `V_k` for coordinate `c`, `1 <= k <= M`.
    pub fn aux_index(&self, c: usize, k: usize) -> usize {
        debug_assert!(k >= 1 && k <= self.m);
        self.d_dde + (k - 1) * self.d() + c
    }

    /// State entry holding node `k` of coordinate `c` (`k = 0` is the head).
    fn node_index(&self, c: usize, k: usize) -> Option<usize> {
        if k == 0 {
            self.head_index(c)
        } else {
            Some(self.aux_index(c, k))
        }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> Result<&str, SystemError> {
        self.labels
            .get(index)
            .map(String::as_str)
            .ok_or(SystemError::IndexOutOfRange {
                index,
                dim: self.dim(),
            })
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Expression lowered to indices.
#[derive(Debug, Clone)]
enum Node {
    Const(f64),
    Param(usize),
    Slot(usize),
    Let(usize),
    /// Value at `theta = 0`.
    Current(usize),
    /// Value at a parameter-only offset, by index into the offset table.
    Delayed { coord: usize, delay: usize },
    /// Value at an offset depending on a bound variable.
    Shifted { coord: usize, offset: Box<Node> },
    Neg(Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
    Call(MathFn, Box<Node>),
    Apply { lambda: usize, args: Vec<Node> },
    Integral { slot: usize, rule: usize, body: Box<Node> },
}

#[derive(Debug, Clone)]
struct Lambda {
    slots: Vec<usize>,
    body: Node,
}

#[derive(Debug, Clone, Default)]
struct CoordUse {
    current: bool,
    delays: Vec<usize>,
    shifted: bool,
}

#[derive(Debug, Clone)]
struct Program {
    lets: Vec<Node>,
    lambdas: Vec<Lambda>,
    /// `F_c` per layout coordinate.
    outputs: Vec<Node>,
    offsets: Vec<Node>,
    bounds: Vec<(Node, Node)>,
    n_slots: usize,
    usage: Vec<CoordUse>,
}

struct Lowering<'a> {
    params: &'a [String],
    coord_index: HashMap<&'a str, usize>,
    let_index: HashMap<String, usize>,
    lambda_index: HashMap<String, usize>,
    scope: Vec<(String, usize)>,
    n_slots: usize,
    offset_exprs: Vec<Expr>,
    offsets: Vec<Node>,
    bounds: Vec<(Node, Node)>,
    usage: Vec<CoordUse>,
}

fn unsupported(what: impl Into<String>) -> SystemError {
    SystemError::Unsupported(what.into())
}

fn is_static(e: &Expr) -> bool {
    let mut ok = true;
    e.walk(&mut |n| {
        if matches!(
            n,
            Expr::Bound(_)
                | Expr::Let(_)
                | Expr::Coord { .. }
                | Expr::Apply { .. }
                | Expr::Integral { .. }
        ) {
            ok = false;
        }
    });
    ok
}

impl Lowering<'_> {
    fn new_slot(&mut self) -> usize {
        self.n_slots += 1;
        self.n_slots - 1
    }

    fn lower_static(&self, e: &Expr) -> Result<Node, SystemError> {
        if !is_static(e) {
            return Err(unsupported(format!(
                "`{e}` must depend on parameters only"
            )));
        }
        self.lower_pure(e)
    }

    /// Lowering of expressions without state access.
    fn lower_pure(&self, e: &Expr) -> Result<Node, SystemError> {
        Ok(match e {
            Expr::Num(v) => Node::Const(*v),
            Expr::Param(p) => Node::Param(
                self.params
                    .iter()
                    .position(|q| q == p)
                    .ok_or_else(|| unsupported(format!("unknown parameter `{p}`")))?,
            ),
            Expr::Neg(a) => Node::Neg(Box::new(self.lower_pure(a)?)),
            Expr::Binary { op, lhs, rhs } => Node::Binary(
                *op,
                Box::new(self.lower_pure(lhs)?),
                Box::new(self.lower_pure(rhs)?),
            ),
            Expr::Call { func, arg } => Node::Call(*func, Box::new(self.lower_pure(arg)?)),
            other => return Err(unsupported(format!("`{other}` in a constant expression"))),
        })
    }

    fn lower(&mut self, e: &Expr) -> Result<Node, SystemError> {
        Ok(match e {
            Expr::Num(_) | Expr::Param(_) => self.lower_pure(e)?,
            Expr::Bound(v) => Node::Slot(
                self.scope
                    .iter()
                    .rev()
                    .find(|(n, _)| n == v)
                    .map(|(_, s)| *s)
                    .ok_or_else(|| unsupported(format!("unbound variable `{v}`")))?,
            ),
            Expr::Let(v) => Node::Let(
                *self
                    .let_index
                    .get(v)
                    .ok_or_else(|| unsupported(format!("unknown value `{v}`")))?,
            ),
            Expr::Coord { name, offset } => {
                let coord = *self
                    .coord_index
                    .get(name.as_str())
                    .ok_or_else(|| unsupported(format!("unknown coordinate `{name}`")))?;
                match offset {
                    None => {
                        self.usage[coord].current = true;
                        Node::Current(coord)
                    }
                    Some(off) if is_static(off) => {
                        let folded = off.folded();
                        let delay = match self.offset_exprs.iter().position(|o| *o == folded) {
                            Some(i) => i,
                            None => {
                                let node = self.lower_pure(&folded)?;
                                self.offset_exprs.push(folded);
                                self.offsets.push(node);
                                self.offsets.len() - 1
                            }
                        };
                        if !self.usage[coord].delays.contains(&delay) {
                            self.usage[coord].delays.push(delay);
                        }
                        Node::Delayed { coord, delay }
                    }
                    Some(off) => {
                        self.usage[coord].shifted = true;
                        Node::Shifted {
                            coord,
                            offset: Box::new(self.lower(off)?),
                        }
                    }
                }
            }
            Expr::Neg(a) => Node::Neg(Box::new(self.lower(a)?)),
            Expr::Binary { op, lhs, rhs } => {
                Node::Binary(*op, Box::new(self.lower(lhs)?), Box::new(self.lower(rhs)?))
            }
            Expr::Call { func, arg } => Node::Call(*func, Box::new(self.lower(arg)?)),
            Expr::Apply { name, args } => {
                let lambda = *self
                    .lambda_index
                    .get(name)
                    .ok_or_else(|| unsupported(format!("unknown function `{name}`")))?;
                Node::Apply {
                    lambda,
                    args: args.iter().map(|a| self.lower(a)).collect::<Result<_, _>>()?,
                }
            }
            Expr::Integral {
                var,
                body,
                lower,
                upper,
            } => {
                let lo = self.lower_static(lower)?;
                let hi = self.lower_static(upper)?;
                self.bounds.push((lo, hi));
                let rule = self.bounds.len() - 1;
                let slot = self.new_slot();
                self.scope.push((var.clone(), slot));
                let body = self.lower(body);
                self.scope.pop();
                Node::Integral {
                    slot,
                    rule,
                    body: Box::new(body?),
                }
            }
        })
    }
}

fn build_program(ast: &ModelAst, layout: &StateLayout) -> Result<Program, SystemError> {
    let mut lw = Lowering {
        params: &ast.parameters,
        coord_index: layout
            .coords()
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect(),
        let_index: HashMap::new(),
        lambda_index: HashMap::new(),
        scope: Vec::new(),
        n_slots: 0,
        offset_exprs: Vec::new(),
        offsets: Vec::new(),
        bounds: Vec::new(),
        usage: vec![CoordUse::default(); layout.d()],
    };
    let mut lets = Vec::new();
    let mut lambdas = Vec::new();
    for eq in ast.intermediates() {
        match eq.kind {
            EquationKind::IntermediateValue => {
                let node = lw.lower(&eq.rhs)?;
                lw.let_index.insert(eq.target.clone(), lets.len());
                lets.push(node);
            }
            EquationKind::IntermediateLambda => {
                let names = eq.lambda_params.clone().unwrap_or_default();
                let slots: Vec<usize> = names.iter().map(|_| lw.new_slot()).collect();
                for (n, s) in names.iter().zip(&slots) {
                    lw.scope.push((n.clone(), *s));
                }
                let body = lw.lower(&eq.rhs);
                lw.scope.truncate(lw.scope.len() - names.len());
                lw.lambda_index.insert(eq.target.clone(), lambdas.len());
                lambdas.push(Lambda { slots, body: body? });
            }
            _ => unreachable!("intermediates only"),
        }
    }
    let outputs = layout
        .coords()
        .iter()
        .map(|c| {
            let eq = ast
                .equation_for(c)
                .ok_or_else(|| unsupported(format!("no equation for `{c}`")))?;
            lw.lower(&eq.rhs)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Program {
        lets,
        lambdas,
        outputs,
        offsets: lw.offsets,
        bounds: lw.bounds,
        n_slots: lw.n_slots,
        usage: lw.usage,
    })
}

fn eval_static(node: &Node, p: &[f64]) -> f64 {
    match node {
        Node::Const(v) => *v,
        Node::Param(i) => p[*i],
        Node::Neg(a) => -eval_static(a, p),
        Node::Binary(op, a, b) => op.apply(eval_static(a, p), eval_static(b, p)),
        Node::Call(f, a) => f.apply(eval_static(a, p)),
        _ => f64::NAN,
    }
}

/// A delay expression with its display text.
#[derive(Debug, Clone)]
struct Guard {
    text: String,
    node: Node,
}

/// One history segment per coordinate, in declaration order.
#[derive(Clone)]
pub enum History {
    Constant(f64),
    Function(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
    /// Expression in `theta` and the parameters.
    Expression(Expr),
}

impl std::fmt::Debug for History {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            History::Constant(v) => write!(f, "Constant({v})"),
            History::Function(_) => write!(f, "Function(..)"),
            History::Expression(e) => write!(f, "Expression({e})"),
        }
    }
}

fn eval_history_expr(e: &Expr, params: &[String], p: &[f64], theta: f64) -> Result<f64, SystemError> {
    let rec = |x: &Expr| eval_history_expr(x, params, p, theta);
    Ok(match e {
        Expr::Num(v) => *v,
        Expr::Param(n) => {
            let i = params
                .iter()
                .position(|q| q == n)
                .ok_or_else(|| SystemError::History(format!("unknown parameter `{n}`")))?;
            p[i]
        }
        Expr::Bound(v) if v == "theta" => theta,
        Expr::Neg(a) => -rec(a)?,
        Expr::Binary { op, lhs, rhs } => op.apply(rec(lhs)?, rec(rhs)?),
        Expr::Call { func, arg } => func.apply(rec(arg)?),
        other => {
            return Err(SystemError::History(format!(
                "`{other}` is not allowed in a history expression"
            )))
        }
    })
}

impl History {
    pub fn value(&self, theta: f64, params: &[String], p: &[f64]) -> Result<f64, SystemError> {
        let v = match self {
            History::Constant(c) => *c,
            History::Function(f) => f(theta),
            History::Expression(e) => eval_history_expr(e, params, p, theta)?,
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(SystemError::History(format!("non-finite value at theta = {theta}")))
        }
    }
}

/// Tooling description of a compiled system; `source` reproduces it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemDescription {
    pub format: String,
    pub name: String,
    pub dimension: usize,
    pub collocation_degree: usize,
    pub quadrature_degree: usize,
    pub coordinates: Vec<String>,
    pub dde_coordinates: Vec<String>,
    pub re_coordinates: Vec<String>,
    pub parameters: Vec<String>,
    pub defaults: Vec<Option<f64>>,
    pub labels: Vec<String>,
    pub delays: Vec<String>,
    pub max_delay: String,
    pub source: String,
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error(transparent)]
    Model(#[from] ModelFileError),
    #[error(transparent)]
    System(#[from] SystemError),
}

pub const DESCRIPTION_FORMAT: &str = "delaykit-compiled/1";

/// The approximating ODE system of a model at fixed `M` and `Q`.
#[derive(Debug, Clone)]
pub struct CompiledSystem {
    ast: ModelAst,
    layout: StateLayout,
    program: Program,
    guards: Vec<Guard>,
    max_delay: Vec<Guard>,
    max_delay_text: String,
    delay_texts: Vec<String>,
    /// Grid and matrices for delay 1.
    grid: Option<(ChebyshevGrid, DiffMatrices)>,
    quadrature: Option<QuadRule>,
}

/// Compile with the degrees recorded in the model.
pub fn compile_model(ast: &ModelAst) -> Result<CompiledSystem, SystemError> {
    compile(ast, ast.collocation_degree, ast.quadrature_degree)
}

pub fn compile(ast: &ModelAst, m: usize, q: usize) -> Result<CompiledSystem, SystemError> {
    if m < 1 {
        return Err(SpectralError::InvalidOrder(m).into());
    }
    if q < 1 {
        return Err(SpectralError::InvalidOrder(q).into());
    }
    let mut ast = ast.clone();
    ast.collocation_degree = m;
    ast.quadrature_degree = q;
    let ode = ast.is_ode();
    let layout = StateLayout::new(ast.layout_order(), ast.dde_coords.len(), if ode { 0 } else { m });
    let program = build_program(&ast, &layout)?;

    let lw = Lowering {
        params: &ast.parameters,
        coord_index: HashMap::new(),
        let_index: HashMap::new(),
        lambda_index: HashMap::new(),
        scope: Vec::new(),
        n_slots: 0,
        offset_exprs: Vec::new(),
        offsets: Vec::new(),
        bounds: Vec::new(),
        usage: Vec::new(),
    };
    let guard = |e: &Expr| -> Result<Guard, SystemError> {
        Ok(Guard {
            text: e.to_string(),
            node: lw.lower_static(e)?,
        })
    };
    let set = collect_delays(&ast);
    let mut guards = Vec::new();
    let mut delay_texts = Vec::new();
    for d in &set.delays {
        guards.push(guard(&d.magnitude)?);
        delay_texts.push(d.magnitude.to_string());
        if let Some(near) = &d.near {
            guards.push(guard(near)?);
        }
    }
    let max_delay = set.max_delay.iter().map(guard).collect::<Result<Vec<_>, _>>()?;
    let (grid, quadrature) = if ode {
        (None, None)
    } else {
        let g = ChebyshevGrid::new(m, 1.0)?;
        let dm = DiffMatrices::new(&g);
        (Some((g, dm)), Some(clenshaw_curtis(q, -1.0, 1.0)?))
    };
    Ok(CompiledSystem {
        max_delay_text: set.max_delay_display(),
        ast,
        layout,
        program,
        guards,
        max_delay,
        delay_texts,
        grid,
        quadrature,
    })
}

impl CompiledSystem {
    pub fn ast(&self) -> &ModelAst {
        &self.ast
    }

    pub fn layout(&self) -> &StateLayout {
        &self.layout
    }

    pub fn collocation_degree(&self) -> usize {
        self.ast.collocation_degree
    }

    pub fn quadrature_degree(&self) -> usize {
        self.ast.quadrature_degree
    }

    pub fn is_ode(&self) -> bool {
        self.layout.degree() == 0
    }

    pub fn label(&self, index: usize) -> Result<&str, SystemError> {
        self.layout.label(index)
    }

    /// Parameter defaults from the model, if all are given.
    pub fn default_params(&self) -> Option<Vec<f64>> {
        self.ast.defaults.iter().copied().collect()
    }

    /// Delay expressions, e.g. `["tau"]`.
    pub fn delay_expressions(&self) -> &[String] {
        &self.delay_texts
    }

    /// Maximal delay at `p`.
    pub fn max_delay(&self, p: &[f64]) -> f64 {
        self.max_delay
            .iter()
            .map(|g| eval_static(&g.node, p))
            .fold(0.0, f64::max)
    }

    fn check_params(&self, p: &[f64]) -> Result<(), SystemError> {
        if p.len() != self.ast.parameters.len() {
            return Err(SystemError::ParameterCount {
                expected: self.ast.parameters.len(),
                found: p.len(),
            });
        }
        Ok(())
    }

    /// Ok iff every delay is nonnegative, the maximal delay is positive
    /// and every integration interval is nonempty.
    pub fn delay_guard(&self, p: &[f64]) -> Result<(), SystemError> {
        self.check_params(p)?;
        if self.is_ode() {
            return Ok(());
        }
        for g in &self.guards {
            let v = eval_static(&g.node, p);
            if !(v >= 0.0) {
                return Err(SystemError::Delay {
                    expr: g.text.clone(),
                    value: v,
                });
            }
        }
        let tau = self.max_delay(p);
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(SystemError::Delay {
                expr: self.max_delay_text.clone(),
                value: tau,
            });
        }
        for (lo, hi) in &self.program.bounds {
            let (a, b) = (eval_static(lo, p), eval_static(hi, p));
            if !(a < b) {
                return Err(SystemError::Delay {
                    expr: format!("integration interval [{a}, {b}]"),
                    value: b - a,
                });
            }
        }
        Ok(())
    }

    /// Evaluation context at `p` (after the delay guard).
    pub fn context(&self, p: &[f64]) -> Result<CompiledEvaluator<'_>, SystemError> {
        self.delay_guard(p)?;
        let m = self.layout.degree();
        let n = self.layout.dim();
        let d = self.layout.d();
        let tau = if self.is_ode() { 0.0 } else { self.max_delay(p) };
        let mut dscaled = DMatrix::zeros(m + 1, m + 1);
        let mut delay_rows = Vec::new();
        let mut rules = Vec::new();
        if let Some((grid, dm)) = &self.grid {
            dscaled = dm.reference() / tau;
            for off in &self.program.offsets {
                let theta = eval_static(off, p);
                delay_rows.push(lagrange_row(grid, theta, tau)?);
            }
            let cc = self.quadrature.as_ref().expect("quadrature with grid");
            for (lo, hi) in &self.program.bounds {
                rules.push(cc.rescaled(eval_static(lo, p), eval_static(hi, p))?);
            }
        }

        let mut linear = DMatrix::zeros(n, n);
        for c in 0..d {
            let first = if self.layout.is_renewal(c) { 1 } else { 0 };
            for k in 1..=m {
                let row = self.layout.aux_index(c, k);
                for j in first..=m {
                    let col = self.layout.node_index(c, j).expect("node entry");
                    linear[(row, col)] = dscaled[(k, j)];
                }
            }
        }

        let mut read = vec![false; n];
        for (c, u) in self.program.usage.iter().enumerate() {
            let any = u.current || u.shifted || !u.delays.is_empty();
            if !any {
                continue;
            }
            let all = self.layout.is_renewal(c) || u.shifted;
            for k in 0..=m {
                let Some(idx) = self.layout.node_index(c, k) else {
                    continue;
                };
                let used = all
                    || (k == 0 && u.current)
                    || u.delays.iter().any(|&dl| delay_rows[dl][k] != 0.0);
                if used {
                    read[idx] = true;
                }
            }
        }
        let read_cols = (0..n).filter(|&i| read[i]).collect();

        Ok(CompiledEvaluator {
            sys: self,
            p: p.to_vec(),
            tau,
            dscaled,
            delay_rows,
            rules,
            linear,
            read_cols,
            scratch: Scratch {
                slots: vec![0.0; self.program.n_slots],
                lets: vec![0.0; self.program.lets.len()],
                u: vec![vec![0.0; m + 1]; d],
                f: vec![0.0; d],
                rows: HashMap::new(),
            },
        })
    }

    /// State vector from one history per coordinate (declaration order).
    pub fn initial_state_from_history(
        &self,
        history: &[History],
        p: &[f64],
    ) -> Result<Vec<f64>, SystemError> {
        if history.len() != self.ast.coordinates.len() {
            return Err(SystemError::History(format!(
                "expected {} history segments, got {}",
                self.ast.coordinates.len(),
                history.len()
            )));
        }
        let ctx = self.context(p)?;
        let names = &self.ast.parameters;
        let m = self.layout.degree();
        let nodes: Vec<f64> = match &self.grid {
            Some((g, _)) => g.reference_nodes().iter().map(|s| s * ctx.tau).collect(),
            None => vec![0.0],
        };
        let mut y = vec![0.0; self.layout.dim()];
        let d_m = (m > 0).then(|| ctx.dscaled.view((1, 1), (m, m)).into_owned().lu());
        for (c, name) in self.layout.coords().iter().enumerate() {
            let h = &history[self.ast.coordinates.iter().position(|x| x == name).expect("coord")];
            let values = nodes
                .iter()
                .map(|&th| h.value(th, names, p))
                .collect::<Result<Vec<_>, _>>()?;
            if self.layout.is_renewal(c) {
                let rhs = DVector::from_column_slice(&values[1..]);
                let v = d_m
                    .as_ref()
                    .expect("renewal needs aux nodes")
                    .solve(&rhs)
                    .ok_or_else(|| SystemError::History("singular differentiation block".into()))?;
                for k in 1..=m {
                    y[self.layout.aux_index(c, k)] = v[k - 1];
                }
            } else {
                for (k, v) in values.iter().enumerate() {
                    y[self.layout.node_index(c, k).expect("DDE node")] = *v;
                }
            }
        }
        Ok(y)
    }

    /// Current value of every coordinate (layout order): head entries for
    /// DDE coordinates, `F` on the history for RE coordinates.
    pub fn reconstruct_output(&self, y: &[f64], p: &[f64]) -> Result<Vec<f64>, SystemError> {
        let mut ctx = self.context(p)?;
        ctx.reconstruct(y)
    }

    /// Constant-in-state part of the right-hand side at `p`.
    pub fn linear_part(&self, p: &[f64]) -> Result<DMatrix<f64>, SystemError> {
        Ok(self.context(p)?.linear)
    }

    pub fn describe(&self) -> SystemDescription {
        SystemDescription {
            format: DESCRIPTION_FORMAT.to_string(),
            name: self.ast.name.clone(),
            dimension: self.layout.dim(),
            collocation_degree: self.collocation_degree(),
            quadrature_degree: self.quadrature_degree(),
            coordinates: self.layout.coords().to_vec(),
            dde_coordinates: self.ast.dde_coords.clone(),
            re_coordinates: self.ast.re_coords.clone(),
            parameters: self.ast.parameters.clone(),
            defaults: self.ast.defaults.clone(),
            labels: self.layout.labels().to_vec(),
            delays: self.delay_texts.clone(),
            max_delay: self.max_delay_text.clone(),
            source: self.ast.to_model_text(),
        }
    }

    /// Rebuild from a description (its embedded source and degrees).
    pub fn from_description(desc: &SystemDescription) -> Result<Self, LoadError> {
        let mut file = ModelFile::parse(&desc.source)?;
        file.set_degrees(Some(desc.collocation_degree), Some(desc.quadrature_degree));
        let ast = file.to_ast()?;
        Ok(compile(&ast, desc.collocation_degree, desc.quadrature_degree)?)
    }
}

fn lagrange_row(grid: &ChebyshevGrid, theta: f64, tau: f64) -> Result<Vec<f64>, SystemError> {
    let s = theta / tau;
    if !(s >= -1.0 - RANGE_SLACK && s <= RANGE_SLACK) {
        return Err(SpectralError::OutOfRange { theta, tau }.into());
    }
    let mut row = vec![0.0; grid.degree() + 1];
    reference_lagrange_row(
        grid.reference_nodes(),
        grid.barycentric_weights(),
        s.clamp(-1.0, 0.0),
        &mut row,
    );
    Ok(row)
}

#[derive(Debug, Clone)]
struct Scratch {
    slots: Vec<f64>,
    lets: Vec<f64>,
    /// History node values per coordinate.
    u: Vec<Vec<f64>>,
    /// `F` per coordinate.
    f: Vec<f64>,
    /// Lagrange rows for runtime offsets, keyed by the bits of theta.
    rows: HashMap<u64, Vec<f64>>,
}

/// Evaluator of a compiled system at fixed parameters.
pub struct CompiledEvaluator<'a> {
    sys: &'a CompiledSystem,
    p: Vec<f64>,
    tau: f64,
    /// `Dhat` for the current delay.
    dscaled: DMatrix<f64>,
    delay_rows: Vec<Vec<f64>>,
    rules: Vec<QuadRule>,
    linear: DMatrix<f64>,
    read_cols: Vec<usize>,
    scratch: Scratch,
}

struct Env<'e> {
    prog: &'e Program,
    p: &'e [f64],
    tau: f64,
    delay_rows: &'e [Vec<f64>],
    rules: &'e [QuadRule],
    grid: Option<&'e ChebyshevGrid>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn eval(node: &Node, env: &Env, s: &mut Scratch) -> Result<f64, SystemError> {
    Ok(match node {
        Node::Const(v) => *v,
        Node::Param(i) => env.p[*i],
        Node::Slot(i) => s.slots[*i],
        Node::Let(i) => s.lets[*i],
        Node::Current(c) => s.u[*c][0],
        Node::Delayed { coord, delay } => dot(&env.delay_rows[*delay], &s.u[*coord]),
        Node::Shifted { coord, offset } => {
            let theta = eval(offset, env, s)?;
            let key = theta.to_bits();
            if !s.rows.contains_key(&key) {
                let grid = env.grid.ok_or_else(|| unsupported("history access in an ODE"))?;
                let row = lagrange_row(grid, theta, env.tau)?;
                s.rows.insert(key, row);
            }
            dot(&s.rows[&key], &s.u[*coord])
        }
        Node::Neg(a) => -eval(a, env, s)?,
        Node::Binary(op, a, b) => {
            let x = eval(a, env, s)?;
            op.apply(x, eval(b, env, s)?)
        }
        Node::Call(f, a) => f.apply(eval(a, env, s)?),
        Node::Apply { lambda, args } => {
            let lam = &env.prog.lambdas[*lambda];
            let mut vals = Vec::with_capacity(args.len());
            for a in args {
                vals.push(eval(a, env, s)?);
            }
            for (slot, v) in lam.slots.iter().zip(vals) {
                s.slots[*slot] = v;
            }
            eval(&lam.body, env, s)?
        }
        Node::Integral { slot, rule, body } => {
            let rule = &env.rules[*rule];
            let mut acc = 0.0;
            for (&x, &w) in rule.nodes().iter().zip(rule.weights()) {
                s.slots[*slot] = x;
                acc += w * eval(body, env, s)?;
            }
            acc
        }
    })
}

impl CompiledEvaluator<'_> {
    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn linear(&self) -> &DMatrix<f64> {
        &self.linear
    }

    /// State entries the nonlinear part reads.
    pub fn read_columns(&self) -> &[usize] {
        &self.read_cols
    }

    /// Evaluate `F` for every coordinate into the scratch buffer.
    fn evaluate_f(&mut self, y: &[f64]) -> Result<(), SystemError> {
        let layout = &self.sys.layout;
        let m = layout.degree();
        let s = &mut self.scratch;
        for c in 0..layout.d() {
            if layout.is_renewal(c) {
                for i in 0..=m {
                    let mut z = 0.0;
                    for j in 1..=m {
                        z += self.dscaled[(i, j)] * y[layout.aux_index(c, j)];
                    }
                    s.u[c][i] = z;
                }
            } else {
                for k in 0..=m {
                    s.u[c][k] = y[layout.node_index(c, k).expect("DDE node")];
                }
            }
        }
        let env = Env {
            prog: &self.sys.program,
            p: &self.p,
            tau: self.tau,
            delay_rows: &self.delay_rows,
            rules: &self.rules,
            grid: self.sys.grid.as_ref().map(|(g, _)| g),
        };
        for (i, node) in env.prog.lets.iter().enumerate() {
            let v = eval(node, &env, s)?;
            s.lets[i] = v;
        }
        for (c, node) in env.prog.outputs.iter().enumerate() {
            let v = eval(node, &env, s)?;
            if !v.is_finite() {
                return Err(SystemError::NonFinite("right-hand side"));
            }
            s.f[c] = v;
        }
        Ok(())
    }

    /// The nonlinear part: `F` in DDE head rows, `-F` in RE aux rows.
    pub fn nonlinear(&mut self, y: &[f64], out: &mut [f64]) -> Result<(), SystemError> {
        self.evaluate_f(y)?;
        out.iter_mut().for_each(|o| *o = 0.0);
        self.scatter_f(&self.scratch.f.clone(), 1.0, |i, v| out[i] += v);
        Ok(())
    }

    fn scatter_f(&self, f: &[f64], scale: f64, mut put: impl FnMut(usize, f64)) {
        let layout = &self.sys.layout;
        for (c, &fc) in f.iter().enumerate() {
            if layout.is_renewal(c) {
                for k in 1..=layout.degree() {
                    put(layout.aux_index(c, k), -scale * fc);
                }
            } else {
                put(c, scale * fc);
            }
        }
    }

    pub fn reconstruct(&mut self, y: &[f64]) -> Result<Vec<f64>, SystemError> {
        self.evaluate_f(y)?;
        let layout = &self.sys.layout;
        Ok((0..layout.d())
            .map(|c| match layout.head_index(c) {
                Some(i) => y[i],
                None => self.scratch.f[c],
            })
            .collect())
    }
}

impl Evaluator for CompiledEvaluator<'_> {
    fn params(&self) -> &[f64] {
        &self.p
    }

    fn rhs(&mut self, y: &[f64], out: &mut [f64]) -> Result<(), SystemError> {
        self.evaluate_f(y)?;
        let layout = &self.sys.layout;
        let m = layout.degree();
        for c in 0..layout.d() {
            let renewal = layout.is_renewal(c);
            let fc = self.scratch.f[c];
            if let Some(h) = layout.head_index(c) {
                out[h] = fc;
            }
            for k in 1..=m {
                let mut acc = if renewal { -fc } else { 0.0 };
                for j in usize::from(renewal)..=m {
                    acc += self.dscaled[(k, j)] * y[layout.node_index(c, j).expect("node")];
                }
                out[layout.aux_index(c, k)] = acc;
            }
        }
        Ok(())
    }

    fn jacobian(&mut self, y: &[f64]) -> Result<DMatrix<f64>, SystemError> {
        let mut jac = self.linear.clone();
        let d = self.sys.layout.d();
        let mut yp = y.to_vec();
        let mut fp = vec![0.0; d];
        let cols = self.read_cols.clone();
        for j in cols {
            let h = fd_step(y[j]);
            yp[j] = y[j] + h;
            self.evaluate_f(&yp)?;
            fp.copy_from_slice(&self.scratch.f);
            yp[j] = y[j] - h;
            self.evaluate_f(&yp)?;
            yp[j] = y[j];
            let df: Vec<f64> = fp
                .iter()
                .zip(&self.scratch.f)
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect();
            self.scatter_f(&df, 1.0, |i, v| jac[(i, j)] += v);
        }
        Ok(jac)
    }
}

impl DynamicalSystem for CompiledSystem {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn labels(&self) -> Vec<String> {
        self.layout.labels().to_vec()
    }

    fn param_names(&self) -> Vec<String> {
        self.ast.parameters.clone()
    }

    fn evaluator(&self, p: &[f64]) -> Result<Box<dyn Evaluator + '_>, SystemError> {
        Ok(Box::new(self.context(p)?))
    }
}

#[cfg(test)]
mod tests;
