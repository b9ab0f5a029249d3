//! Problem files (BAL, a g2o subset, native JSON) and experiment outputs (CSV).

mod bal;
mod g2o;
mod json;
mod results;

pub use bal::{parse_bal, parse_bal_bytes, parse_bal_with, write_bal, BalOptions};
pub use g2o::{parse_g2o_bytes, parse_g2o_subset, write_g2o, G2oProblem, QUATERNION_TOLERANCE};
pub use json::{parse_json, write_json, ProblemDocument};
pub use results::{
    read_calibration_csv, read_results_csv, write_calibration_csv, write_results_csv, ResultRecord,
    TimingSample,
};

use thiserror::Error;

use crate::graph::{BAGraph, Estimates, GraphError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Bal,
    G2o,
    Json,
}

impl Format {
    /// Guess from a file extension.
    pub fn from_extension(ext: &str) -> Option<Self> {
        match ext.to_ascii_lowercase().as_str() {
            "bal" | "txt" => Some(Format::Bal),
            "g2o" => Some(Format::G2o),
            "json" => Some(Format::Json),
            _ => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("count mismatch: header implies {expected} values, found {got}")]
    CountMismatch { expected: usize, got: usize },
    #[error("line {line}: cannot parse {token:?}")]
    Token { line: usize, token: String },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("input is not valid UTF-8")]
    Utf8,
    #[error("json: {0}")]
    Json(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WriteError {
    #[error("intrinsics #{0} cannot be expressed in this format")]
    Unrepresentable(usize),
}

/// A loaded problem: the graph (vertex states hold the initial estimates),
/// plus ground truth when the file carries it.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub graph: BAGraph,
    pub initial: Estimates,
    pub ground_truth: Option<Estimates>,
}

impl Problem {
    pub fn new(graph: BAGraph) -> Self {
        let initial = Estimates::from_graph(&graph);
        Self {
            graph,
            initial,
            ground_truth: None,
        }
    }
}

pub fn parse_problem(bytes: &[u8], format: Format) -> Result<Problem, ParseError> {
    match format {
        Format::Bal => parse_bal_bytes(bytes),
        Format::G2o => parse_g2o_bytes(bytes).map(|g| g.problem),
        Format::Json => {
            let text = std::str::from_utf8(bytes).map_err(|_| ParseError::Utf8)?;
            parse_json(text)
        }
    }
}

/// Whitespace tokens of `text` with their 1-based line numbers.
pub(crate) fn tokens(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .flat_map(|(i, l)| l.split_ascii_whitespace().map(move |t| (i + 1, t)))
}

pub(crate) fn parse_finite(line: usize, token: &str) -> Result<f64, ParseError> {
    match token.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(ParseError::Token {
            line,
            token: token.chars().take(32).collect(),
        }),
    }
}

pub(crate) fn parse_index(line: usize, token: &str) -> Result<u32, ParseError> {
    token.parse::<u32>().map_err(|_| ParseError::Token {
        line,
        token: token.chars().take(32).collect(),
    })
}
