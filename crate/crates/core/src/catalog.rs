//! Bundled model files.

use crate::model::{parse_model_file, ModelAst, ModelFile};

pub const MACKEY_GLASS: &str = include_str!("../models/mackey_glass.de");
pub const RE_QUADRATIC: &str = include_str!("../models/re_quadratic.de");
pub const DAPHNIA: &str = include_str!("../models/daphnia.de");
pub const REFRACTORY: &str = include_str!("../models/refractory.de");
pub const TWO_NODE: &str = include_str!("../models/two_node.de");
pub const LORENZ: &str = include_str!("../models/lorenz.de");

/// `(file stem, text)` for every bundled model.
pub const ALL: &[(&str, &str)] = &[
    ("mackey_glass", MACKEY_GLASS),
    ("re_quadratic", RE_QUADRATIC),
    ("daphnia", DAPHNIA),
    ("refractory", REFRACTORY),
    ("two_node", TWO_NODE),
    ("lorenz", LORENZ),
];

/// Parse a bundled model, optionally with another collocation degree.
pub fn load(text: &str, degree: Option<usize>) -> ModelAst {
    let mut file = ModelFile::parse(text).expect("bundled model file");
    file.set_degrees(degree, None);
    file.to_ast().expect("bundled model parses")
}

pub fn mackey_glass() -> ModelAst {
    parse_model_file(MACKEY_GLASS).expect("bundled model parses")
}

pub fn re_quadratic() -> ModelAst {
    parse_model_file(RE_QUADRATIC).expect("bundled model parses")
}

pub fn daphnia() -> ModelAst {
    parse_model_file(DAPHNIA).expect("bundled model parses")
}

pub fn refractory() -> ModelAst {
    parse_model_file(REFRACTORY).expect("bundled model parses")
}

pub fn two_node() -> ModelAst {
    parse_model_file(TWO_NODE).expect("bundled model parses")
}

pub fn lorenz() -> ModelAst {
    parse_model_file(LORENZ).expect("bundled model parses")
}
