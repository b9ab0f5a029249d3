//! CSV outputs: per-trial benchmark rows and solve-time calibration samples.

use serde::{Deserialize, Serialize};

use super::ParseError;

/// One benchmark trial. Column order follows field order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub method: String,
    /// Target subgraph size as a fraction of the camera count, in (0, 1].
    pub fraction: f64,
    pub k: usize,
    pub cameras_selected: usize,
    pub points_selected: usize,
    pub logdet: Option<f64>,
    pub selection_ms: f64,
    pub solve_ms: f64,
    pub total_ms: f64,
    pub iterations: usize,
    /// Point RMSE over every free point of the subproblem, meters.
    pub rmse_all: Option<f64>,
    /// Point RMSE over points shared by every method at this fraction, meters.
    pub rmse_int: Option<f64>,
    pub scene: usize,
    pub seed: u64,
}

/// A measured solve time for a given subgraph size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingSample {
    pub k: usize,
    pub ms: f64,
}

fn write_rows<T: Serialize>(rows: &[T], header: &[&str]) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
}

fn read_rows<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>, ParseError> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| ParseError::Csv(e.to_string()))
}

const RESULT_COLUMNS: [&str; 14] = [
    "method",
    "fraction",
    "k",
    "cameras_selected",
    "points_selected",
    "logdet",
    "selection_ms",
    "solve_ms",
    "total_ms",
    "iterations",
    "rmse_all",
    "rmse_int",
    "scene",
    "seed",
];

/// Header row plus one row per record. The header is written even for an
/// empty list.
pub fn write_results_csv(records: &[ResultRecord]) -> String {
    write_rows(records, &RESULT_COLUMNS)
}

pub fn read_results_csv(text: &str) -> Result<Vec<ResultRecord>, ParseError> {
    read_rows(text)
}

pub fn write_calibration_csv(samples: &[TimingSample]) -> String {
    write_rows(samples, &["k", "ms"])
}

pub fn read_calibration_csv(text: &str) -> Result<Vec<TimingSample>, ParseError> {
    read_rows(text)
}
