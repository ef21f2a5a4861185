//! From command-line arguments to a compiled system, a parameter vector and
//! an initial state.

use std::path::{Path, PathBuf};

use delaykit::compiler::{compile, CompiledSystem, History, LoadError, SystemDescription};
use delaykit::model::{parse_history_expression, ModelFile};
use delaykit::system::DynamicalSystem;

use crate::args::{ParamArgs, StateArgs};
use crate::failure::*;

pub fn model_path(model: &Option<PathBuf>) -> CliResult<&Path> {
    model
        .as_deref()
        .ok_or_else(|| Failure::validation("input", "--model is required"))
}

fn read(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Failure::new(FAILURE, "input", anyhow::anyhow!("{}: {e}", path.display())))
}

fn is_json(path: &Path, text: &str) -> bool {
    path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{')
}

/// A model file, or a compiled description when the input is JSON.
pub enum Input {
    Model(ModelFile),
    Compiled(SystemDescription),
}

pub fn read_input(path: &Path) -> CliResult<Input> {
    let text = read(path)?;
    if is_json(path, &text) {
        let desc = serde_json::from_str(&text).map_err(|e| {
            Failure::new(
                PARSE,
                "parse",
                anyhow::anyhow!("{}: invalid compiled-system JSON: {e}", path.display()),
            )
        })?;
        return Ok(Input::Compiled(desc));
    }
    ModelFile::parse(&text)
        .map(Input::Model)
        .map_err(|e| Failure::new(model_file_code(&e), "parse", anyhow::anyhow!("{}: {e}", path.display())))
}

pub fn compile_file(path: &Path, file: &ModelFile) -> CliResult<CompiledSystem> {
    let ast = file.to_ast().map_err(|e| {
        let stage = if e.is_syntax() { "parse" } else { "validation" };
        Failure::new(model_file_code(&e), stage, anyhow::anyhow!("{}: {e}", path.display()))
    })?;
    compile(&ast, ast.collocation_degree, ast.quadrature_degree).stage(VALIDATION, "compile")
}

pub fn from_description(desc: &SystemDescription) -> CliResult<CompiledSystem> {
    CompiledSystem::from_description(desc).map_err(|e| match e {
        LoadError::Model(m) => Failure::new(model_file_code(&m), "load", m),
        LoadError::System(s) => Failure::new(system_code(&s), "load", s),
    })
}

/// Compiled system with the degrees recorded in the input.
pub fn load_system(model: &Option<PathBuf>) -> CliResult<CompiledSystem> {
    let path = model_path(model)?;
    match read_input(path)? {
        Input::Model(file) => compile_file(path, &file),
        Input::Compiled(desc) => from_description(&desc),
    }
}

/// Model defaults overridden by `--set`; every parameter needs a value.
pub fn resolve_params(sys: &CompiledSystem, args: &ParamArgs) -> CliResult<Vec<f64>> {
    let names = &sys.ast().parameters;
    let mut values = sys.ast().defaults.clone();
    for spec in &args.set {
        let (name, value) = spec
            .split_once('=')
            .ok_or_else(|| Failure::validation("parameters", format!("`{spec}`: expected NAME=VALUE")))?;
        let name = name.trim();
        let i = names.iter().position(|n| n == name).ok_or_else(|| {
            Failure::validation(
                "parameters",
                format!("unknown parameter `{name}` (declared: {})", names.join(", ")),
            )
        })?;
        let v: f64 = value.trim().parse().map_err(|_| {
            Failure::validation("parameters", format!("`{spec}`: `{value}` is not a number"))
        })?;
        values[i] = Some(v);
    }
    names
        .iter()
        .zip(values)
        .map(|(n, v)| {
            v.ok_or_else(|| {
                Failure::validation(
                    "parameters",
                    format!("parameter `{n}` has no default; pass --set {n}=VALUE"),
                )
            })
        })
        .collect()
}

pub fn param_index(sys: &CompiledSystem, name: &str) -> CliResult<usize> {
    sys.param_index(name).ok_or_else(|| {
        Failure::validation(
            "parameters",
            format!(
                "unknown parameter `{name}` (declared: {})",
                sys.ast().parameters.join(", ")
            ),
        )
    })
}

fn history_of(sys: &CompiledSystem, coord: &str, text: &str) -> CliResult<History> {
    if let Ok(v) = text.trim().parse::<f64>() {
        return Ok(History::Constant(v));
    }
    parse_history_expression(sys.ast(), text)
        .map(History::Expression)
        .map_err(|e| {
            Failure::new(
                model_code(&e),
                "history",
                anyhow::anyhow!("--history {coord}={text}: {e}"),
            )
        })
}

/// Initial state from `--init` or one `--history` per coordinate, then
/// `--state` overrides.
pub fn initial_state(sys: &CompiledSystem, p: &[f64], args: &StateArgs) -> CliResult<Vec<f64>> {
    let mut y = match &args.init {
        Some(v) => {
            if v.len() != sys.dim() {
                return Err(Failure::validation(
                    "history",
                    format!("--init has {} entries, the state has {}", v.len(), sys.dim()),
                ));
            }
            v.clone()
        }
        None => {
            let coords = &sys.ast().coordinates;
            let mut hist: Vec<Option<History>> = vec![None; coords.len()];
            for spec in &args.history {
                let (name, text) = spec.split_once('=').ok_or_else(|| {
                    Failure::validation("history", format!("`{spec}`: expected COORD=EXPR"))
                })?;
                let name = name.trim();
                let c = coords.iter().position(|x| x == name).ok_or_else(|| {
                    Failure::validation(
                        "history",
                        format!("unknown coordinate `{name}` (declared: {})", coords.join(", ")),
                    )
                })?;
                if hist[c].is_some() {
                    return Err(Failure::validation(
                        "history",
                        format!("coordinate `{name}` has more than one history"),
                    ));
                }
                hist[c] = Some(history_of(sys, name, text)?);
            }
            let hist = hist
                .into_iter()
                .zip(coords)
                .map(|(h, c)| {
                    h.ok_or_else(|| {
                        Failure::validation(
                            "history",
                            format!("no history for coordinate `{c}`; pass --history {c}=EXPR or --init"),
                        )
                    })
                })
                .collect::<CliResult<Vec<_>>>()?;
            sys.initial_state_from_history(&hist, p)
                .map_err(|e| Failure::new(system_code(&e), "history", e))?
        }
    };
    for spec in &args.state {
        let (label, value) = spec
            .split_once('=')
            .ok_or_else(|| Failure::validation("history", format!("`{spec}`: expected LABEL=VALUE")))?;
        let i = sys.layout().index_of(label.trim()).ok_or_else(|| {
            Failure::validation("history", format!("unknown state label `{}`", label.trim()))
        })?;
        y[i] = value.trim().parse().map_err(|_| {
            Failure::validation("history", format!("`{spec}`: `{value}` is not a number"))
        })?;
    }
    Ok(y)
}
