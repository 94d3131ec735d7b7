//! Metrics and transform-log CSV files.

use std::fmt::Write as _;
use std::path::Path;

use fidel_core::augment::{Transform, TransformLog};
use fidel_core::train::{MetricsRecord, SplitMetrics};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const METRICS_HEADER: &str = "epoch,split,total_loss,label_loss,row_loss,col_loss,label_acc,row_acc,col_acc,seconds";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub epoch: usize,
    pub split: String,
    pub total_loss: f64,
    pub label_loss: f64,
    pub row_loss: f64,
    pub col_loss: f64,
    pub label_acc: f64,
    pub row_acc: f64,
    pub col_acc: f64,
    pub seconds: f64,
}

impl MetricsRow {
    pub fn new(epoch: usize, split: &str, m: &SplitMetrics, seconds: f64) -> Self {
        Self {
            epoch,
            split: split.into(),
            total_loss: m.total_loss,
            label_loss: m.label_loss,
            row_loss: m.row_loss,
            col_loss: m.col_loss,
            label_acc: m.label_acc,
            row_acc: m.row_acc,
            col_acc: m.col_acc,
            seconds,
        }
    }

    pub fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            self.epoch,
            self.split,
            self.total_loss,
            self.label_loss,
            self.row_loss,
            self.col_loss,
            self.label_acc,
            self.row_acc,
            self.col_acc,
            self.seconds
        )
    }
}

/// One line for the training split and, when present, one for validation.
pub fn record_lines(record: &MetricsRecord) -> String {
    let mut out = MetricsRow::new(record.epoch, "train", &record.train, record.seconds).to_line();
    if let Some(val) = &record.val {
        out.push_str(&MetricsRow::new(record.epoch, "val", val, record.seconds).to_line());
    }
    out
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>().join(",") != METRICS_HEADER {
        return Err(fidel_core::Error::Validation(format!("{}: not a metrics CSV", path.display())).into());
    }
    reader
        .deserialize()
        .map(|row| row.map_err(|e| csv_error(path, e)))
        .collect()
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => fidel_core::Error::Parse {
            line: line as usize,
            message: format!("{}: {other:?}", path.display()),
        }
        .into(),
    }
}

pub const TRANSFORM_HEADER: &str = "class,sourceWriter,transforms,params";

/// `class,sourceWriter,transforms,params`, with transforms and their
/// parameters joined by `+` and `;`. Originals list `none`.
pub fn transform_log_csv(log: &[TransformLog]) -> String {
    let mut out = String::from(TRANSFORM_HEADER);
    out.push('\n');
    for entry in log {
        let (names, params): (Vec<&str>, Vec<String>) = entry
            .transforms
            .iter()
            .map(|t| match *t {
                Transform::Rotate(d) => ("rotate", d.to_string()),
                Transform::Shrink(f) => ("shrink", f.to_string()),
                Transform::Noise(p) => ("noise", p.to_string()),
            })
            .unzip();
        let names = if names.is_empty() { "none".to_string() } else { names.join("+") };
        let _ = writeln!(out, "{},{},{},{}", entry.class, entry.source_writer, names, params.join(";"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lines_follow_the_header() {
        let m = SplitMetrics {
            total_loss: 2.5,
            label_loss: 2.0,
            row_loss: 1.0,
            col_loss: 0.5,
            label_acc: 0.25,
            row_acc: 0.5,
            col_acc: 0.75,
            l2: 0.0,
        };
        let rec = MetricsRecord { epoch: 3, train: m, val: Some(m), seconds: 0.0 };
        assert_eq!(record_lines(&rec), "3,train,2.5,2,1,0.5,0.25,0.5,0.75,0\n3,val,2.5,2,1,0.5,0.25,0.5,0.75,0\n");
        assert_eq!(METRICS_HEADER.split(',').count(), 10);
    }

    #[test]
    fn transform_log_format() {
        let log = vec![
            TransformLog { class: 4, source_writer: "w1".into(), transforms: vec![] },
            TransformLog {
                class: 4,
                source_writer: "w1".into(),
                transforms: vec![Transform::Rotate(-3.5), Transform::Noise(0.02)],
            },
        ];
        assert_eq!(
            transform_log_csv(&log),
            "class,sourceWriter,transforms,params\n4,w1,none,\n4,w1,rotate+noise,-3.5;0.02\n"
        );
    }
}
