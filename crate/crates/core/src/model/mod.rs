//! The delay-equation DSL: declarations, equations, and validation.
//!
//! Coordinates carry their time dependency in square brackets (`x[t-tau]`);
//! a bare `x` means `x[t]`. Derivatives are marked with a prime on the
//! left-hand side (`x'=...`, a DDE), while `x=...` for a declared
//! coordinate defines a renewal equation. Any other left-hand side name
//! introduces an intermediate, either a value (`S_int_b=...`) or a lambda
//! (`S=@(x)...`). Distributed delays use `DE_int(@(v) body, lower, upper)`.

mod analysis;
mod ast;
mod error;
mod file;
mod lexer;
mod parser;
mod printer;

use std::collections::{HashMap, HashSet};

pub use analysis::{classify, collect_delays, Classification, DelayKind, DelaySet, DelaySpec};
pub use ast::{
    BinOp, DistributedSpec, EquationDef, EquationKind, Expr, MathFn, ModelAst,
};
pub use error::{ModelError, Pos};
pub use file::{parse_model_file, read_model_file, ModelFile, ModelFileError};

use parser::{is_reserved, parse_line, Scope};

pub const DEFAULT_COLLOCATION_DEGREE: usize = 10;

/// Raw model declaration, as typed into a model file.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSource {
    pub name: String,
    pub coordinates: Vec<String>,
    pub parameters: Vec<String>,
    /// Default parameter values, aligned with `parameters`.
    pub defaults: Vec<Option<f64>>,
    pub equation_lines: Vec<String>,
    pub collocation_degree: usize,
    pub quadrature_degree: usize,
}

impl ModelSource {
    /// Source with `M = Q = 10` and no parameter defaults.
    pub fn new(
        name: &str,
        coordinates: &[&str],
        parameters: &[&str],
        equation_lines: &[&str],
    ) -> Self {
        ModelSource {
            name: name.to_string(),
            coordinates: coordinates.iter().map(|s| s.to_string()).collect(),
            parameters: parameters.iter().map(|s| s.to_string()).collect(),
            defaults: vec![None; parameters.len()],
            equation_lines: equation_lines.iter().map(|s| s.to_string()).collect(),
            collocation_degree: DEFAULT_COLLOCATION_DEGREE,
            quadrature_degree: DEFAULT_COLLOCATION_DEGREE,
        }
    }

    pub fn with_degrees(mut self, m: usize, q: usize) -> Self {
        self.collocation_degree = m;
        self.quadrature_degree = q;
        self
    }
}

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn check_declarations(source: &ModelSource) -> Result<(), ModelError> {
    let invalid = |msg: String| Err(ModelError::InvalidDeclaration(msg));
    if !is_identifier(&source.name) {
        return invalid(format!("model name `{}` is not an identifier", source.name));
    }
    if source.coordinates.is_empty() {
        return invalid("at least one coordinate is required".into());
    }
    if source.defaults.len() != source.parameters.len() {
        return invalid("parameter defaults do not match the parameter list".into());
    }
    if source.collocation_degree < 1 || source.quadrature_degree < 1 {
        return invalid("M and Q must be positive".into());
    }
    let mut seen = HashSet::new();
    for name in source.coordinates.iter().chain(&source.parameters) {
        if !is_identifier(name) {
            return invalid(format!("`{name}` is not a valid identifier"));
        }
        if is_reserved(name) {
            return invalid(format!("`{name}` is a reserved name"));
        }
        if !seen.insert(name.as_str()) {
            return invalid(format!("`{name}` is declared more than once"));
        }
    }
    Ok(())
}

/// Parse and validate a model.
pub fn parse_model(source: &ModelSource) -> Result<ModelAst, ModelError> {
    check_declarations(source)?;

    let mut values: HashSet<String> = HashSet::new();
    let mut lambdas: HashMap<String, usize> = HashMap::new();
    let mut equations: Vec<EquationDef> = Vec::new();
    let mut defined: HashMap<String, EquationKind> = HashMap::new();

    for (idx, line) in source.equation_lines.iter().enumerate() {
        let stripped = line.split('%').next().unwrap_or("");
        if stripped.trim().is_empty() {
            continue;
        }
        let scope = Scope {
            coords: &source.coordinates,
            params: &source.parameters,
            values: &values,
            lambdas: &lambdas,
        };
        let eq = parse_line(line, idx + 1, &scope)?;
        match eq.kind {
            EquationKind::Differential | EquationKind::Renewal => {
                if let Some(prev) = defined.insert(eq.target.clone(), eq.kind) {
                    return Err(if prev == eq.kind {
                        ModelError::DuplicateEquation(eq.target.clone())
                    } else {
                        ModelError::MixedDefinition(eq.target.clone())
                    });
                }
            }
            EquationKind::IntermediateValue => {
                values.insert(eq.target.clone());
            }
            EquationKind::IntermediateLambda => {
                let arity = eq.lambda_params.as_ref().map_or(0, Vec::len);
                lambdas.insert(eq.target.clone(), arity);
            }
        }
        equations.push(eq);
    }

    for c in &source.coordinates {
        if !defined.contains_key(c) {
            return Err(ModelError::MissingEquation(c.clone()));
        }
    }

    let (dde_coords, re_coords): (Vec<String>, Vec<String>) = source
        .coordinates
        .iter()
        .cloned()
        .partition(|c| defined[c] == EquationKind::Differential);

    let mut ast = ModelAst {
        name: source.name.clone(),
        coordinates: source.coordinates.clone(),
        dde_coords,
        re_coords,
        parameters: source.parameters.clone(),
        defaults: source.defaults.clone(),
        equations,
        discrete_delays: Vec::new(),
        distributed_specs: Vec::new(),
        collocation_degree: source.collocation_degree,
        quadrature_degree: source.quadrature_degree,
    };
    analysis::register_delays(&mut ast)?;
    Ok(ast)
}

/// Parse a standalone expression over the model's parameters, with
/// `theta` bound (history functions).
pub fn parse_history_expression(ast: &ModelAst, text: &str) -> Result<Expr, ModelError> {
    let values = HashSet::new();
    let lambdas = HashMap::new();
    let scope = Scope {
        coords: &[],
        params: &ast.parameters,
        values: &values,
        lambdas: &lambdas,
    };
    parser::parse_expression(text, &scope, &["theta"])
}

/// Parse an expression over the current state, with state labels as
/// coordinate names (event functions).
pub fn parse_state_expression(
    labels: &[String],
    params: &[String],
    text: &str,
) -> Result<Expr, ModelError> {
    let values = HashSet::new();
    let lambdas = HashMap::new();
    let scope = Scope {
        coords: labels,
        params,
        values: &values,
        lambdas: &lambdas,
    };
    parser::parse_expression(text, &scope, &[])
}

#[cfg(test)]
mod tests;
