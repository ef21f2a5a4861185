//! DSL pretty-printer. Output re-parses to the same tree.

use std::fmt::{self, Display, Formatter, Write};

use super::ast::{EquationDef, EquationKind, Expr, ModelAst};

const PREC_MUL: u8 = 2;
const PREC_NEG: u8 = 3;
const PREC_POW: u8 = 4;
const PREC_ATOM: u8 = 5;

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Num(v) if *v < 0.0 || v.is_sign_negative() => PREC_NEG,
        Expr::Neg(_) => PREC_NEG,
        Expr::Binary { op, .. } => op.precedence(),
        _ => PREC_ATOM,
    }
}

fn write_prec(f: &mut Formatter<'_>, e: &Expr, min: u8) -> fmt::Result {
    if precedence(e) < min {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

fn write_num(f: &mut Formatter<'_>, v: f64) -> fmt::Result {
    // `{:?}` is the shortest representation that round-trips
    let s = format!("{v:?}");
    let s = s.strip_suffix(".0").unwrap_or(&s);
    f.write_str(s)
}

impl Display for Expr {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write_num(f, *v),
            Expr::Param(n) | Expr::Bound(n) | Expr::Let(n) => f.write_str(n),
            Expr::Coord { name, offset } => match offset.as_deref() {
                None => f.write_str(name),
                Some(Expr::Neg(inner)) => {
                    write!(f, "{name}[t-")?;
                    write_prec(f, inner, PREC_MUL)?;
                    f.write_char(']')
                }
                Some(o) => {
                    write!(f, "{name}[t+")?;
                    write_prec(f, o, PREC_MUL)?;
                    f.write_char(']')
                }
            },
            Expr::Neg(e) => {
                f.write_char('-')?;
                write_prec(f, e, PREC_NEG)
            }
            Expr::Binary { op, lhs, rhs } => {
                let p = op.precedence();
                if p == PREC_POW {
                    write_prec(f, lhs, PREC_POW)?;
                    f.write_char('^')?;
                    write_prec(f, rhs, PREC_ATOM)
                } else {
                    write_prec(f, lhs, p)?;
                    f.write_char(op.symbol())?;
                    // both levels are left associative
                    write_prec(f, rhs, p + 1)
                }
            }
            Expr::Call { func, arg } => write!(f, "{}({arg})", func.name()),
            Expr::Apply { name, args } => {
                write!(f, "{name}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_char(',')?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_char(')')
            }
            Expr::Integral {
                var,
                body,
                lower,
                upper,
            } => write!(f, "DE_int(@({var}){body},{lower},{upper})"),
        }
    }
}

impl Display for EquationDef {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self.kind {
            EquationKind::Differential => write!(f, "{}'[t]={}", self.target, self.rhs),
            EquationKind::Renewal => write!(f, "{}[t]={}", self.target, self.rhs),
            EquationKind::IntermediateValue => write!(f, "{}={}", self.target, self.rhs),
            EquationKind::IntermediateLambda => {
                let params = self.lambda_params.as_deref().unwrap_or_default().join(",");
                write!(f, "{}=@({params}){}", self.target, self.rhs)
            }
        }
    }
}

impl ModelAst {
    /// Render as a model file.
    pub fn to_model_text(&self) -> String {
        let mut s = String::new();
        let params: Vec<String> = self
            .parameters
            .iter()
            .zip(&self.defaults)
            .map(|(p, d)| match d {
                Some(v) => format!("{p}={v:?}"),
                None => p.clone(),
            })
            .collect();
        let _ = writeln!(s, "name: {}", self.name);
        let _ = writeln!(s, "coordinates: {}", self.coordinates.join(","));
        let _ = writeln!(s, "parameters: {}", params.join(","));
        let _ = writeln!(s, "M: {}", self.collocation_degree);
        let _ = writeln!(s, "Q: {}", self.quadrature_degree);
        let _ = writeln!(s, "equations:");
        for eq in &self.equations {
            let _ = writeln!(s, "{eq}");
        }
        s
    }
}
