//! Recursive-descent parser for equation lines.
//!
//! Precedence follows MATLAB, lowest first:
//!
//! ```text
//! additive := mul (('+' | '-') mul)*
//! mul      := unary (('*' | '/') unary)*
//! unary    := ('-' | '+') unary | power
//! power    := primary ('^' exponent)*        (left associative)
//! exponent := ('-' | '+') exponent | primary
//! primary  := number | '(' additive ')'
//!           | coord | coord '[' timearg ']'
//!           | param | bound | intermediate
//!           | mathfn '(' additive ')'
//!           | lambda '(' additive (',' additive)* ')'
//!           | 'DE_int' '(' '@' '(' ident ')' additive ',' additive ',' additive ')'
//! timearg  := 't' (('+' | '-') mul)*
//! ```
//!
//! Multiplication is never implicit.

use std::collections::{HashMap, HashSet};

use super::ast::{BinOp, EquationDef, EquationKind, Expr, MathFn};
use super::error::{ModelError, Pos};
use super::lexer::{tokenize, Tok, Token};

pub(crate) const INTEGRAL_NAME: &str = "DE_int";
pub(crate) const TIME_NAME: &str = "t";

pub(crate) fn is_reserved(name: &str) -> bool {
    name == INTEGRAL_NAME || name == TIME_NAME || name == "pi" || MathFn::from_name(name).is_some()
}

/// Names visible while parsing a line.
pub(crate) struct Scope<'a> {
    pub coords: &'a [String],
    pub params: &'a [String],
    pub values: &'a HashSet<String>,
    pub lambdas: &'a HashMap<String, usize>,
}

struct Parser<'a> {
    toks: Vec<Token>,
    i: usize,
    line: &'a str,
    scope: &'a Scope<'a>,
    bound: Vec<String>,
}

/// Parse one equation or definition line.
pub(crate) fn parse_line(
    line: &str,
    line_no: usize,
    scope: &Scope<'_>,
) -> Result<EquationDef, ModelError> {
    let toks = tokenize(line, line_no)?;
    let mut p = Parser {
        toks,
        i: 0,
        line,
        scope,
        bound: Vec::new(),
    };
    p.equation()
}

/// Parse a standalone expression in the given scope, with extra bound names
/// (used for history expressions in `theta`).
pub(crate) fn parse_expression(
    text: &str,
    scope: &Scope<'_>,
    bound: &[&str],
) -> Result<Expr, ModelError> {
    let toks = tokenize(text, 1)?;
    let mut p = Parser {
        toks,
        i: 0,
        line: text,
        scope,
        bound: bound.iter().map(|s| s.to_string()).collect(),
    };
    let e = p.additive()?;
    p.expect_eof()?;
    Ok(e)
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.toks[self.i].tok
    }

    fn pos(&self) -> Pos {
        self.toks[self.i].pos
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.i].clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.bump();
            true
        } else {
            false
        }
    }

    fn syntax<T>(&self, msg: impl Into<String>) -> Result<T, ModelError> {
        Err(ModelError::Syntax {
            pos: self.pos(),
            msg: msg.into(),
        })
    }

    fn expect(&mut self, tok: Tok) -> Result<(), ModelError> {
        if self.eat(&tok) {
            Ok(())
        } else {
            let found = self.peek().describe();
            self.syntax(format!("expected {}, found {found}", tok.describe()))
        }
    }

    fn expect_eof(&mut self) -> Result<(), ModelError> {
        match self.peek() {
            Tok::Eof => Ok(()),
            Tok::RParen | Tok::RBracket => self.syntax("unbalanced closing bracket"),
            other => {
                let found = other.describe();
                self.syntax(format!("unexpected {found} after expression"))
            }
        }
    }

    fn ident(&mut self) -> Result<(String, Pos), ModelError> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok((s, pos))
            }
            other => self.syntax(format!("expected identifier, found {}", other.describe())),
        }
    }

    fn equation(&mut self) -> Result<EquationDef, ModelError> {
        let (name, pos) = self.ident()?;
        if name == INTEGRAL_NAME || name == TIME_NAME {
            return Err(ModelError::ReservedName { pos, name });
        }
        let prime = self.eat(&Tok::Prime);
        if self.peek() == &Tok::LBracket {
            self.bump();
            let offset = self.time_argument()?;
            if offset.is_some() {
                return self.syntax("the left-hand side must be taken at the current time `t`");
            }
        }
        self.expect(Tok::Eq)?;

        if self.scope.coords.contains(&name) {
            let rhs = self.additive()?;
            self.expect_eof()?;
            let kind = if prime {
                EquationKind::Differential
            } else {
                EquationKind::Renewal
            };
            return Ok(EquationDef {
                kind,
                target: name,
                rhs,
                lambda_params: None,
            });
        }
        if prime {
            return Err(ModelError::UnknownIdentifier { pos, name });
        }
        if self.scope.params.contains(&name) {
            return Err(ModelError::InvalidDeclaration(format!(
                "parameter `{name}` cannot be redefined"
            )));
        }
        if self.scope.values.contains(&name) || self.scope.lambdas.contains_key(&name) {
            return Err(ModelError::DuplicateEquation(name));
        }
        if is_reserved(&name) {
            return Err(ModelError::ReservedName { pos, name });
        }

        if self.eat(&Tok::At) {
            let params = self.lambda_params()?;
            self.bound.extend(params.iter().cloned());
            let body = self.additive()?;
            self.bound.truncate(self.bound.len() - params.len());
            self.expect_eof()?;
            Ok(EquationDef {
                kind: EquationKind::IntermediateLambda,
                target: name,
                rhs: body,
                lambda_params: Some(params),
            })
        } else {
            let rhs = self.additive()?;
            self.expect_eof()?;
            Ok(EquationDef {
                kind: EquationKind::IntermediateValue,
                target: name,
                rhs,
                lambda_params: None,
            })
        }
    }

    fn lambda_params(&mut self) -> Result<Vec<String>, ModelError> {
        self.expect(Tok::LParen)?;
        let mut params = Vec::new();
        loop {
            let (p, pos) = self.ident()?;
            if is_reserved(&p) {
                return Err(ModelError::ReservedName { pos, name: p });
            }
            if params.contains(&p) {
                return Err(ModelError::Syntax {
                    pos,
                    msg: format!("repeated lambda argument `{p}`"),
                });
            }
            params.push(p);
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        self.expect(Tok::RParen)?;
        Ok(params)
    }

    fn additive(&mut self) -> Result<Expr, ModelError> {
        let mut lhs = self.mul()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.mul()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn mul(&mut self) -> Result<Expr, ModelError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expr, ModelError> {
        if self.eat(&Tok::Minus) {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat(&Tok::Plus) {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ModelError> {
        let mut base = self.primary()?;
        while self.eat(&Tok::Caret) {
            let exp = self.exponent()?;
            base = Expr::binary(BinOp::Pow, base, exp);
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<Expr, ModelError> {
        if self.eat(&Tok::Minus) {
            return Ok(Expr::Neg(Box::new(self.exponent()?)));
        }
        if self.eat(&Tok::Plus) {
            return self.exponent();
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, ModelError> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Num(v))
            }
            Tok::LParen => {
                self.bump();
                let e = self.additive()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                self.identifier(name, pos)
            }
            Tok::Prime => self.syntax("a prime may only mark the derivative on the left-hand side"),
            Tok::Eof => self.syntax("unexpected end of line"),
            other => self.syntax(format!("unexpected {}", other.describe())),
        }
    }

    fn identifier(&mut self, name: String, pos: Pos) -> Result<Expr, ModelError> {
        if name == INTEGRAL_NAME {
            return self.integral();
        }
        if self.bound.iter().rev().any(|b| *b == name) {
            if self.peek() == &Tok::LBracket {
                return self.syntax(format!("`{name}` is not a coordinate"));
            }
            return Ok(Expr::Bound(name));
        }
        if self.scope.coords.contains(&name) {
            return match self.peek() {
                Tok::LBracket => {
                    self.bump();
                    let offset = self.time_argument()?;
                    Ok(Expr::Coord {
                        name,
                        offset: offset.map(Box::new),
                    })
                }
                Tok::LParen => self.syntax(format!(
                    "time dependency of `{name}` is written with square brackets, e.g. {name}[t-1]"
                )),
                Tok::Prime => self.syntax("a prime may only mark the derivative on the left-hand side"),
                _ => Ok(Expr::Coord { name, offset: None }),
            };
        }
        if self.scope.params.contains(&name) {
            return Ok(Expr::Param(name));
        }
        if self.scope.values.contains(&name) {
            return Ok(Expr::Let(name));
        }
        if let Some(&arity) = self.scope.lambdas.get(&name) {
            self.expect(Tok::LParen)?;
            let args = self.arguments()?;
            if args.len() != arity {
                return Err(ModelError::Syntax {
                    pos,
                    msg: format!("`{name}` takes {arity} argument(s), got {}", args.len()),
                });
            }
            return Ok(Expr::Apply { name, args });
        }
        if let Some(func) = MathFn::from_name(&name) {
            if self.peek() != &Tok::LParen {
                return self.syntax(format!("`{name}` must be called with parentheses"));
            }
            self.bump();
            let args = self.arguments()?;
            if args.len() != 1 {
                return Err(ModelError::Syntax {
                    pos,
                    msg: format!("`{name}` takes exactly one argument"),
                });
            }
            let arg = args.into_iter().next().expect("one argument");
            return Ok(Expr::Call {
                func,
                arg: Box::new(arg),
            });
        }
        if name == "pi" {
            return Ok(Expr::pi());
        }
        if name == TIME_NAME {
            return Err(ModelError::Syntax {
                pos,
                msg: "the time variable `t` may only appear inside square brackets".into(),
            });
        }
        Err(ModelError::UnknownIdentifier { pos, name })
    }

    /// Comma-separated arguments up to and including the closing parenthesis.
    fn arguments(&mut self) -> Result<Vec<Expr>, ModelError> {
        let mut args = vec![self.additive()?];
        while self.eat(&Tok::Comma) {
            args.push(self.additive()?);
        }
        self.expect(Tok::RParen)?;
        Ok(args)
    }

    fn integral(&mut self) -> Result<Expr, ModelError> {
        self.expect(Tok::LParen)?;
        self.expect(Tok::At)?;
        self.expect(Tok::LParen)?;
        let (var, pos) = self.ident()?;
        if is_reserved(&var) {
            return Err(ModelError::ReservedName { pos, name: var });
        }
        self.expect(Tok::RParen)?;
        self.bound.push(var.clone());
        let body = self.additive()?;
        self.bound.pop();
        self.expect(Tok::Comma)?;
        let lower = self.bound_expression()?;
        self.expect(Tok::Comma)?;
        let upper = self.bound_expression()?;
        self.expect(Tok::RParen)?;
        Ok(Expr::Integral {
            var,
            body: Box::new(body),
            lower: Box::new(lower),
            upper: Box::new(upper),
        })
    }

    fn bound_expression(&mut self) -> Result<Expr, ModelError> {
        let pos = self.pos();
        let e = self.additive()?;
        if e.has_coordinates() {
            return Err(ModelError::Syntax {
                pos,
                msg: "integration bounds must not depend on the unknowns".into(),
            });
        }
        Ok(e)
    }

    /// Parses the inside of `[...]` including the closing bracket. Returns
    /// the offset relative to `t`, `None` for plain `t`.
    fn time_argument(&mut self) -> Result<Option<Expr>, ModelError> {
        let start_tok = self.i;
        let starts_with_t = matches!(self.peek(), Tok::Ident(s) if s == TIME_NAME);
        if !starts_with_t {
            return Err(ModelError::TimeArgument {
                pos: self.pos(),
                found: self.bracket_text(start_tok),
            });
        }
        self.bump();
        let mut offset: Option<Expr> = None;
        loop {
            let op = match self.peek() {
                Tok::RBracket => {
                    if offset.as_ref().is_some_and(Expr::has_coordinates) {
                        return self.syntax("state-dependent delays are not supported");
                    }
                    self.bump();
                    return Ok(offset);
                }
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                Tok::Eof => return self.syntax("unbalanced `[`: missing `]`"),
                _ => {
                    return Err(ModelError::TimeArgument {
                        pos: self.toks[start_tok].pos,
                        found: self.bracket_text(start_tok),
                    })
                }
            };
            self.bump();
            let term = self.mul()?;
            offset = Some(match (offset, op) {
                (None, BinOp::Add) => term,
                (None, _) => Expr::Neg(Box::new(term)),
                (Some(acc), op) => Expr::binary(op, acc, term),
            });
        }
    }

    /// Source text from token `from` up to the matching `]`.
    fn bracket_text(&self, from: usize) -> String {
        let mut depth = 0usize;
        let mut end = self.line.len();
        for t in &self.toks[from..] {
            match t.tok {
                Tok::LBracket => depth += 1,
                Tok::RBracket if depth == 0 => {
                    end = t.start;
                    break;
                }
                Tok::RBracket => depth -= 1,
                Tok::Eof => break,
                _ => {}
            }
        }
        let start = self.toks[from].start.min(end);
        self.line[start..end].trim().to_string()
    }
}
