//! Scalar functions of the state vector, written in the model expression
//! syntax over state labels and parameters (event functions, monitors).

use std::fmt;

use crate::model::{parse_state_expression, BinOp, Expr, MathFn, ModelError};

#[derive(Debug, Clone)]
enum Node {
    Num(f64),
    State(usize),
    Param(usize),
    Neg(Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
    Call(MathFn, Box<Node>),
}

/// `g(y, p)`, e.g. `x_aux02 + 0.2`.
#[derive(Debug, Clone)]
pub struct Observable {
    expr: Expr,
    node: Node,
}

impl Observable {
    pub fn parse(text: &str, labels: &[String], params: &[String]) -> Result<Self, ModelError> {
        let expr = parse_state_expression(labels, params, text)?;
        let node = lower(&expr, labels, params)?;
        Ok(Observable { expr, node })
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn eval(&self, y: &[f64], p: &[f64]) -> f64 {
        eval(&self.node, y, p)
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.expr)
    }
}

fn unsupported(what: String) -> ModelError {
    ModelError::Syntax {
        pos: Default::default(),
        msg: what,
    }
}

fn lower(e: &Expr, labels: &[String], params: &[String]) -> Result<Node, ModelError> {
    let rec = |x: &Expr| lower(x, labels, params).map(Box::new);
    Ok(match e {
        Expr::Num(v) => Node::Num(*v),
        Expr::Coord { name, offset: None } => {
            Node::State(labels.iter().position(|l| l == name).expect("label in scope"))
        }
        Expr::Coord { name, .. } => {
            return Err(unsupported(format!(
                "`{name}` must be used without a time argument: state labels refer to the current state"
            )))
        }
        Expr::Param(n) => Node::Param(params.iter().position(|q| q == n).expect("param in scope")),
        Expr::Neg(a) => Node::Neg(rec(a)?),
        Expr::Binary { op, lhs, rhs } => Node::Binary(*op, rec(lhs)?, rec(rhs)?),
        Expr::Call { func, arg } => Node::Call(*func, rec(arg)?),
        other => return Err(unsupported(format!("`{other}` is not allowed in a state expression"))),
    })
}

fn eval(n: &Node, y: &[f64], p: &[f64]) -> f64 {
    match n {
        Node::Num(v) => *v,
        Node::State(i) => y[*i],
        Node::Param(i) => p[*i],
        Node::Neg(a) => -eval(a, y, p),
        Node::Binary(op, a, b) => op.apply(eval(a, y, p), eval(b, y, p)),
        Node::Call(f, a) => f.apply(eval(a, y, p)),
    }
}
