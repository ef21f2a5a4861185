use std::f64::consts::PI;

/// Elementary functions accepted in expressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MathFn {
    Exp,
    Log,
    Sin,
    Cos,
    Tan,
    Tanh,
    Cosh,
    Sinh,
    Sqrt,
    Abs,
}

impl MathFn {
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "exp" => MathFn::Exp,
            "log" => MathFn::Log,
            "sin" => MathFn::Sin,
            "cos" => MathFn::Cos,
            "tan" => MathFn::Tan,
            "tanh" => MathFn::Tanh,
            "cosh" => MathFn::Cosh,
            "sinh" => MathFn::Sinh,
            "sqrt" => MathFn::Sqrt,
            "abs" => MathFn::Abs,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            MathFn::Exp => "exp",
            MathFn::Log => "log",
            MathFn::Sin => "sin",
            MathFn::Cos => "cos",
            MathFn::Tan => "tan",
            MathFn::Tanh => "tanh",
            MathFn::Cosh => "cosh",
            MathFn::Sinh => "sinh",
            MathFn::Sqrt => "sqrt",
            MathFn::Abs => "abs",
        }
    }

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            MathFn::Exp => x.exp(),
            MathFn::Log => x.ln(),
            MathFn::Sin => x.sin(),
            MathFn::Cos => x.cos(),
            MathFn::Tan => x.tan(),
            MathFn::Tanh => x.tanh(),
            MathFn::Cosh => x.cosh(),
            MathFn::Sinh => x.sinh(),
            MathFn::Sqrt => x.sqrt(),
            MathFn::Abs => x.abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    pub fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }

    pub(crate) fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
            BinOp::Pow => 4,
        }
    }

    #[inline]
    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
            BinOp::Div => a / b,
            BinOp::Pow => pow(a, b),
        }
    }
}

#[inline]
fn pow(a: f64, b: f64) -> f64 {
    if b == b.trunc() && b.abs() <= 64.0 {
        a.powi(b as i32)
    } else {
        a.powf(b)
    }
}

/// Expression tree with identifiers already resolved against the model's
/// declarations.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Param(String),
    /// Variable bound by an enclosing lambda (integration variable or
    /// argument of a user-defined function).
    Bound(String),
    /// Reference to an intermediate value defined earlier in the model.
    Let(String),
    /// `name[t + offset]`; `None` is the current time.
    Coord {
        name: String,
        offset: Option<Box<Expr>>,
    },
    Neg(Box<Expr>),
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Call {
        func: MathFn,
        arg: Box<Expr>,
    },
    /// Application of a user-defined lambda.
    Apply {
        name: String,
        args: Vec<Expr>,
    },
    /// `DE_int(@(var) body, lower, upper)`.
    Integral {
        var: String,
        body: Box<Expr>,
        lower: Box<Expr>,
        upper: Box<Expr>,
    },
}

impl Expr {
    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    pub fn pi() -> Expr {
        Expr::Num(PI)
    }

    /// Visit every node in pre-order.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Num(_) | Expr::Param(_) | Expr::Bound(_) | Expr::Let(_) => {}
            Expr::Coord { offset, .. } => {
                if let Some(o) = offset {
                    o.walk(f);
                }
            }
            Expr::Neg(e) => e.walk(f),
            Expr::Binary { lhs, rhs, .. } => {
                lhs.walk(f);
                rhs.walk(f);
            }
            Expr::Call { arg, .. } => arg.walk(f),
            Expr::Apply { args, .. } => args.iter().for_each(|a| a.walk(f)),
            Expr::Integral {
                body, lower, upper, ..
            } => {
                body.walk(f);
                lower.walk(f);
                upper.walk(f);
            }
        }
    }

    pub fn mentions_bound(&self, var: &str) -> bool {
        let mut found = false;
        self.walk(&mut |e| {
            if let Expr::Bound(v) = e {
                if v == var {
                    found = true;
                }
            }
        });
        found
    }

    pub fn has_coordinates(&self) -> bool {
        let mut found = false;
        self.walk(&mut |e| {
            if matches!(e, Expr::Coord { .. }) {
                found = true;
            }
        });
        found
    }

    /// Replace every `Bound(var)` with `value`.
    pub fn substitute(&self, var: &str, value: &Expr) -> Expr {
        let sub = |e: &Expr| Box::new(e.substitute(var, value));
        match self {
            Expr::Bound(v) if v == var => value.clone(),
            Expr::Num(_) | Expr::Param(_) | Expr::Bound(_) | Expr::Let(_) => self.clone(),
            Expr::Coord { name, offset } => Expr::Coord {
                name: name.clone(),
                offset: offset.as_deref().map(sub),
            },
            Expr::Neg(e) => Expr::Neg(sub(e)),
            Expr::Binary { op, lhs, rhs } => Expr::Binary {
                op: *op,
                lhs: sub(lhs),
                rhs: sub(rhs),
            },
            Expr::Call { func, arg } => Expr::Call {
                func: *func,
                arg: sub(arg),
            },
            Expr::Apply { name, args } => Expr::Apply {
                name: name.clone(),
                args: args.iter().map(|a| a.substitute(var, value)).collect(),
            },
            // an inner lambda rebinding `var` shadows it
            Expr::Integral {
                var: inner,
                body,
                lower,
                upper,
            } => Expr::Integral {
                var: inner.clone(),
                body: if inner == var { body.clone() } else { sub(body) },
                lower: sub(lower),
                upper: sub(upper),
            },
        }
    }

    /// Delay magnitude `-offset`, written without a double negation.
    pub fn negated(&self) -> Expr {
        match self {
            Expr::Neg(e) => (**e).clone(),
            Expr::Num(v) if *v < 0.0 => Expr::Num(-v),
            other => Expr::Neg(Box::new(other.clone())),
        }
    }

    /// Fold subtrees made only of literals. Used when reporting delays.
    pub fn folded(&self) -> Expr {
        match self {
            Expr::Neg(e) => match e.folded() {
                Expr::Num(v) => Expr::Num(-v),
                other => Expr::Neg(Box::new(other)),
            },
            Expr::Binary { op, lhs, rhs } => match (lhs.folded(), rhs.folded()) {
                (Expr::Num(a), Expr::Num(b)) => Expr::Num(op.apply(a, b)),
                (l, r) => Expr::binary(*op, l, r),
            },
            Expr::Call { func, arg } => match arg.folded() {
                Expr::Num(a) => Expr::Num(func.apply(a)),
                a => Expr::Call {
                    func: *func,
                    arg: Box::new(a),
                },
            },
            other => other.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EquationKind {
    Differential,
    Renewal,
    IntermediateValue,
    IntermediateLambda,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquationDef {
    pub kind: EquationKind,
    pub target: String,
    pub rhs: Expr,
    pub lambda_params: Option<Vec<String>>,
}

/// One `DE_int` occurrence.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributedSpec {
    pub var: String,
    pub lower: Expr,
    pub upper: Expr,
    pub integrand: Expr,
}

/// Validated model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelAst {
    pub name: String,
    /// Coordinates in declaration order.
    pub coordinates: Vec<String>,
    pub dde_coords: Vec<String>,
    pub re_coords: Vec<String>,
    pub parameters: Vec<String>,
    pub defaults: Vec<Option<f64>>,
    /// All definitions in source order, intermediates included.
    pub equations: Vec<EquationDef>,
    /// Distinct discrete delay magnitudes.
    pub discrete_delays: Vec<Expr>,
    pub distributed_specs: Vec<DistributedSpec>,
    pub collocation_degree: usize,
    pub quadrature_degree: usize,
}

impl ModelAst {
    pub fn equation_for(&self, coord: &str) -> Option<&EquationDef> {
        self.equations.iter().find(|e| {
            e.target == coord
                && matches!(e.kind, EquationKind::Differential | EquationKind::Renewal)
        })
    }

    pub fn intermediates(&self) -> impl Iterator<Item = &EquationDef> {
        self.equations.iter().filter(|e| {
            matches!(
                e.kind,
                EquationKind::IntermediateValue | EquationKind::IntermediateLambda
            )
        })
    }

    /// Coordinates in compiled-layout order: DDE-defined first.
    pub fn layout_order(&self) -> Vec<String> {
        self.dde_coords
            .iter()
            .chain(self.re_coords.iter())
            .cloned()
            .collect()
    }

    /// True when no equation looks at the past: a plain ODE system.
    pub fn is_ode(&self) -> bool {
        self.re_coords.is_empty()
            && self.discrete_delays.is_empty()
            && self.distributed_specs.is_empty()
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.parameters.iter().position(|p| p == name)
    }
}
