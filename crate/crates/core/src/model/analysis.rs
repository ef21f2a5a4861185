use std::fmt;

use super::ast::{DistributedSpec, EquationKind, Expr, ModelAst};
use super::error::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DelayKind {
    Discrete,
    Distributed,
}

/// A delay magnitude as a function of the parameters.
///
/// For distributed delays `magnitude` is the far end of the integration
/// window (the `b` in `[-b, -a]`) and `near` the other end.
#[derive(Debug, Clone, PartialEq)]
pub struct DelaySpec {
    pub kind: DelayKind,
    pub magnitude: Expr,
    pub near: Option<Expr>,
    /// Integration interval, for distributed delays.
    pub interval: Option<(Expr, Expr)>,
}

impl fmt::Display for DelaySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.magnitude)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelaySet {
    pub delays: Vec<DelaySpec>,
    /// `tau(p)` is the maximum of these terms.
    pub max_delay: Vec<Expr>,
}

impl DelaySet {
    pub fn max_delay_display(&self) -> String {
        match self.max_delay.as_slice() {
            [] => "0".to_string(),
            [one] => one.to_string(),
            many => {
                let parts: Vec<String> = many.iter().map(|e| e.to_string()).collect();
                format!("max({})", parts.join(","))
            }
        }
    }
}

pub fn collect_delays(ast: &ModelAst) -> DelaySet {
    let mut delays: Vec<DelaySpec> = ast
        .discrete_delays
        .iter()
        .map(|d| DelaySpec {
            kind: DelayKind::Discrete,
            magnitude: d.clone(),
            near: None,
            interval: None,
        })
        .collect();
    let mut distributed = Vec::new();
    for eq in &ast.equations {
        distributed_delays(&eq.rhs, None, &mut distributed);
    }
    for d in distributed {
        if !delays.contains(&d) {
            delays.push(d);
        }
    }
    let mut max_delay: Vec<Expr> = Vec::new();
    for d in &delays {
        let folded = d.magnitude.folded();
        if matches!(folded, Expr::Num(v) if v == 0.0) || max_delay.contains(&folded) {
            continue;
        }
        max_delay.push(folded);
    }
    // constant terms dominated by a larger constant are dropped
    let largest_const = max_delay
        .iter()
        .filter_map(|e| match e {
            Expr::Num(v) => Some(*v),
            _ => None,
        })
        .fold(f64::NEG_INFINITY, f64::max);
    max_delay.retain(|e| !matches!(e, Expr::Num(v) if *v < largest_const));
    DelaySet { delays, max_delay }
}

/// Coordinate references inside integrals whose offset runs with the
/// integration variable.
fn distributed_delays(
    e: &Expr,
    window: Option<(&str, &Expr, &Expr)>,
    out: &mut Vec<DelaySpec>,
) {
    match e {
        Expr::Integral {
            var,
            body,
            lower,
            upper,
        } => {
            distributed_delays(body, Some((var, lower, upper)), out);
        }
        Expr::Coord {
            offset: Some(offset),
            ..
        } => {
            if let Some((var, lower, upper)) = window {
                if offset.mentions_bound(var) {
                    let (far, near) = match offset.as_ref() {
                        Expr::Bound(v) if v == var => (lower.negated(), upper.negated()),
                        Expr::Neg(inner) if matches!(inner.as_ref(), Expr::Bound(v) if v == var) => {
                            (upper.clone(), lower.clone())
                        }
                        general => (
                            general.substitute(var, lower).negated(),
                            general.substitute(var, upper).negated(),
                        ),
                    };
                    let spec = DelaySpec {
                        kind: DelayKind::Distributed,
                        magnitude: far.folded(),
                        near: Some(near.folded()),
                        interval: Some((lower.clone(), upper.clone())),
                    };
                    if !out.contains(&spec) {
                        out.push(spec);
                    }
                }
            }
        }
        Expr::Neg(a) | Expr::Call { arg: a, .. } => distributed_delays(a, window, out),
        Expr::Binary { lhs, rhs, .. } => {
            distributed_delays(lhs, window, out);
            distributed_delays(rhs, window, out);
        }
        Expr::Apply { args, .. } => args.iter().for_each(|a| distributed_delays(a, window, out)),
        _ => {}
    }
}

/// Fills `discrete_delays` and `distributed_specs`.
pub(super) fn register_delays(ast: &mut ModelAst) -> Result<(), ModelError> {
    let mut discrete: Vec<Expr> = Vec::new();
    let mut specs: Vec<DistributedSpec> = Vec::new();
    for eq in &ast.equations {
        let lambda_args: &[String] = match eq.kind {
            EquationKind::IntermediateLambda => eq.lambda_params.as_deref().unwrap_or_default(),
            _ => &[],
        };
        scan(&eq.rhs, &mut Vec::new(), lambda_args, &mut discrete, &mut specs)?;
    }
    ast.discrete_delays = discrete;
    ast.distributed_specs = specs;
    Ok(())
}

fn scan(
    e: &Expr,
    integral_vars: &mut Vec<String>,
    lambda_args: &[String],
    discrete: &mut Vec<Expr>,
    specs: &mut Vec<DistributedSpec>,
) -> Result<(), ModelError> {
    match e {
        Expr::Integral {
            var,
            body,
            lower,
            upper,
        } => {
            let spec = DistributedSpec {
                var: var.clone(),
                lower: (**lower).clone(),
                upper: (**upper).clone(),
                integrand: (**body).clone(),
            };
            if !specs.contains(&spec) {
                specs.push(spec);
            }
            scan(lower, integral_vars, lambda_args, discrete, specs)?;
            scan(upper, integral_vars, lambda_args, discrete, specs)?;
            integral_vars.push(var.clone());
            let r = scan(body, integral_vars, lambda_args, discrete, specs);
            integral_vars.pop();
            r
        }
        Expr::Coord { name, offset } => {
            let Some(offset) = offset else { return Ok(()) };
            if let Some(arg) = lambda_args
                .iter()
                .find(|a| offset.mentions_bound(a) && !integral_vars.contains(a))
            {
                return Err(ModelError::InvalidDeclaration(format!(
                    "the delay of `{name}` depends on lambda argument `{arg}`"
                )));
            }
            if !integral_vars.iter().any(|v| offset.mentions_bound(v)) {
                let magnitude = offset.negated();
                if !discrete.contains(&magnitude) {
                    discrete.push(magnitude);
                }
            }
            scan(offset, integral_vars, lambda_args, discrete, specs)
        }
        Expr::Neg(a) | Expr::Call { arg: a, .. } => {
            scan(a, integral_vars, lambda_args, discrete, specs)
        }
        Expr::Binary { lhs, rhs, .. } => {
            scan(lhs, integral_vars, lambda_args, discrete, specs)?;
            scan(rhs, integral_vars, lambda_args, discrete, specs)
        }
        Expr::Apply { args, .. } => {
            for a in args {
                scan(a, integral_vars, lambda_args, discrete, specs)?;
            }
            Ok(())
        }
        Expr::Num(_) | Expr::Param(_) | Expr::Bound(_) | Expr::Let(_) => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Classification {
    pub d_dde: usize,
    pub d_re: usize,
    /// Coordinate names in compiled order: DDE-defined first.
    pub ordering: Vec<String>,
}

pub fn classify(ast: &ModelAst) -> Result<Classification, ModelError> {
    for c in &ast.coordinates {
        let kinds: Vec<EquationKind> = ast
            .equations
            .iter()
            .filter(|e| &e.target == c)
            .map(|e| e.kind)
            .collect();
        if kinds.contains(&EquationKind::Differential) && kinds.contains(&EquationKind::Renewal) {
            return Err(ModelError::MixedDefinition(c.clone()));
        }
    }
    Ok(Classification {
        d_dde: ast.dde_coords.len(),
        d_re: ast.re_coords.len(),
        ordering: ast.layout_order(),
    })
}
