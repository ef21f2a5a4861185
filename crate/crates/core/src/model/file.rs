//! Plain-text model files.
//!
//! ```text
//! name: MackeyGlass
//! coordinates: x
//! parameters: beta=2, gamma=1, n=6, tau=0.5
//! M: 10            % collocation degree, default 10
//! Q: 10            % quadrature degree, default M
//! equations:
//! x'[t]=beta*x[t-tau]/(1+x[t-tau]^n)-gamma*x[t]
//! ```
//!
//! A parameter may carry a default value with `name=value`.

use std::path::Path;

use thiserror::Error;

use super::{parse_model, ModelAst, ModelError, ModelSource, DEFAULT_COLLOCATION_DEGREE};

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("cannot read model file: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Header { line: usize, msg: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl ModelFileError {
    pub fn is_syntax(&self) -> bool {
        match self {
            ModelFileError::Io(_) => false,
            ModelFileError::Header { .. } => true,
            ModelFileError::Model(e) => e.is_syntax(),
        }
    }
}

/// Parsed model file: the source plus file line numbers of the equations.
#[derive(Debug, Clone)]
pub struct ModelFile {
    pub source: ModelSource,
    pub quadrature_explicit: bool,
    equation_file_lines: Vec<usize>,
}

impl ModelFile {
    pub fn parse(text: &str) -> Result<Self, ModelFileError> {
        let mut name = None;
        let mut coordinates = None;
        let mut parameters: Option<(Vec<String>, Vec<Option<f64>>)> = None;
        let mut m = None;
        let mut q = None;
        let mut equations = Vec::new();
        let mut equation_file_lines = Vec::new();
        let mut in_equations = false;

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let content = raw.split('%').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if in_equations {
                equations.push(content.to_string());
                equation_file_lines.push(line_no);
                continue;
            }
            let header = |msg: String| ModelFileError::Header { line: line_no, msg };
            let (key, value) = content
                .split_once(':')
                .ok_or_else(|| header(format!("expected `key: value`, found `{content}`")))?;
            let value = value.trim();
            match key.trim() {
                "name" => name = Some(value.to_string()),
                "coordinates" => coordinates = Some(split_list(value)),
                "parameters" => {
                    let mut names = Vec::new();
                    let mut defaults = Vec::new();
                    for item in split_list(value) {
                        match item.split_once('=') {
                            Some((n, v)) => {
                                let v: f64 = v.trim().parse().map_err(|_| {
                                    header(format!("invalid default value for `{}`", n.trim()))
                                })?;
                                names.push(n.trim().to_string());
                                defaults.push(Some(v));
                            }
                            None => {
                                names.push(item);
                                defaults.push(None);
                            }
                        }
                    }
                    parameters = Some((names, defaults));
                }
                "M" => m = Some(parse_degree(value).ok_or_else(|| header("M must be a positive integer".into()))?),
                "Q" => q = Some(parse_degree(value).ok_or_else(|| header("Q must be a positive integer".into()))?),
                "equations" => {
                    in_equations = true;
                    if !value.is_empty() {
                        equations.push(value.to_string());
                        equation_file_lines.push(line_no);
                    }
                }
                other => return Err(header(format!("unknown header `{other}`"))),
            }
        }

        let missing = |what: &str| ModelFileError::Header {
            line: 0,
            msg: format!("missing `{what}:` header"),
        };
        let name = name.ok_or_else(|| missing("name"))?;
        let coordinates = coordinates.ok_or_else(|| missing("coordinates"))?;
        let (parameters, defaults) = parameters.unwrap_or_default();
        if !in_equations {
            return Err(missing("equations"));
        }
        let m = m.unwrap_or(DEFAULT_COLLOCATION_DEGREE);
        Ok(ModelFile {
            source: ModelSource {
                name,
                coordinates,
                parameters,
                defaults,
                equation_lines: equations,
                collocation_degree: m,
                quadrature_degree: q.unwrap_or(m),
            },
            quadrature_explicit: q.is_some(),
            equation_file_lines,
        })
    }

    /// Override the degrees; `Q` follows `M` unless given explicitly.
    pub fn set_degrees(&mut self, m: Option<usize>, q: Option<usize>) {
        if let Some(m) = m {
            self.source.collocation_degree = m;
            if !self.quadrature_explicit {
                self.source.quadrature_degree = m;
            }
        }
        if let Some(q) = q {
            self.source.quadrature_degree = q;
            self.quadrature_explicit = true;
        }
    }

    pub fn to_ast(&self) -> Result<ModelAst, ModelFileError> {
        parse_model(&self.source).map_err(|e| {
            ModelFileError::Model(e.map_line(|l| {
                self.equation_file_lines.get(l.wrapping_sub(1)).copied().unwrap_or(l)
            }))
        })
    }
}

fn split_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn parse_degree(value: &str) -> Option<usize> {
    value.parse().ok().filter(|&v: &usize| v >= 1)
}

/// Parse model-file text into a validated AST.
pub fn parse_model_file(text: &str) -> Result<ModelAst, ModelFileError> {
    ModelFile::parse(text)?.to_ast()
}

pub fn read_model_file(path: impl AsRef<Path>) -> Result<ModelAst, ModelFileError> {
    parse_model_file(&std::fs::read_to_string(path)?)
}
