use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{bail, Error, Result};

pub const METRICS_HEADER: [&str; 10] = [
    "epoch",
    "phase",
    "lr",
    "beta",
    "gamma",
    "train_loss",
    "train_acc",
    "test_acc",
    "wall_ms",
    "seed",
];

/// One row per training epoch. Accuracies are percentages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub phase: usize,
    pub lr: f64,
    pub beta: f64,
    pub gamma: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    pub wall_ms: u64,
    pub seed: u64,
}

/// Six significant digits, `%g` style: fixed notation for exponents in
/// `-4..6`, scientific otherwise, trailing zeros dropped.
pub fn format_g6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{}", x);
    }
    let sci = format!("{:.5e}", x);
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, x))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", trim_zeros(mantissa.to_string()), sign, exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn write_metrics(records: &[MetricsRecord], path: &Path) -> Result<()> {
    if records.is_empty() {
        bail!(Argument, "refusing to write an empty metrics file");
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    w.write_record(METRICS_HEADER).map_err(|e| csv_error(path, e))?;
    for r in records {
        w.write_record([
            r.epoch.to_string(),
            r.phase.to_string(),
            format_g6(r.lr),
            format_g6(r.beta),
            format_g6(r.gamma),
            format_g6(r.train_loss),
            format_g6(r.train_acc),
            format_g6(r.test_acc),
            r.wall_ms.to_string(),
            r.seed.to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r.headers().map_err(|e| csv_error(path, e))?;
    if header.iter().ne(METRICS_HEADER) {
        bail!(Parse, "{}: unexpected header {:?}", path.display(), header);
    }
    r.deserialize()
        .collect::<std::result::Result<Vec<MetricsRecord>, _>>()
        .map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::Parse(format!("{}: {}", path.display(), e))
    }
}
