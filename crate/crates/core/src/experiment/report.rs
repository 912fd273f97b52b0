use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use super::{ExperimentError, ResultRecord};
use crate::features::stream_list;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Csv,
    /// One JSON record per line.
    Jsonl,
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Jsonl => "jsonl",
        })
    }
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "jsonl" | "json" => Ok(ReportFormat::Jsonl),
            other => Err(format!("unknown report format '{other}' (expected csv or jsonl)")),
        }
    }
}

fn json_error(path: &Path, e: impl fmt::Display) -> ExperimentError {
    ExperimentError::Json {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub(crate) fn write_records(path: &Path, records: &[ResultRecord]) -> Result<(), ExperimentError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(ExperimentError::io(dir))?;
    }
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r).map_err(|e| json_error(path, e))?);
        text.push('\n');
    }
    std::fs::write(path, text).map_err(ExperimentError::io(path))
}

/// Reads a JSON-lines results file. Blank lines are skipped.
pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<ResultRecord>, ExperimentError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(ExperimentError::io(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| json_error(path, format!("line {}: {e}", i + 1)))
        })
        .collect()
}

fn pct(x: f64) -> String {
    format!("{:.1}", x * 100.0)
}

fn secs(x: f64) -> String {
    format!("{x:.4}")
}

/// Writes one row per record. Timings are left out unless `timings` is set,
/// so that repeated runs give identical reports.
pub fn write_report<W: Write>(
    records: &[ResultRecord],
    format: ReportFormat,
    timings: bool,
    out: W,
) -> Result<(), ExperimentError> {
    match format {
        ReportFormat::Jsonl => write_jsonl(records, timings, out),
        ReportFormat::Csv => write_csv(records, timings, out),
    }
}

fn write_jsonl<W: Write>(records: &[ResultRecord], timings: bool, mut out: W) -> Result<(), ExperimentError> {
    for r in records {
        let mut value = serde_json::to_value(r).expect("record serializes");
        if !timings {
            if let Some(obj) = value.as_object_mut() {
                obj.remove("timing");
            }
        }
        writeln!(out, "{value}").map_err(ExperimentError::io("<report>"))?;
    }
    Ok(())
}

fn csv_error(e: csv::Error) -> ExperimentError {
    ExperimentError::Io {
        path: "<report>".into(),
        source: e.into(),
    }
}

fn write_csv<W: Write>(records: &[ResultRecord], timings: bool, out: W) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![
        "label",
        "streams",
        "layer",
        "aggregation",
        "splits",
        "accuracy",
        "accuracy_pct",
        "chosen_c",
        "split_accuracies_pct",
        "plan_hash",
    ];
    if timings {
        header.extend(["extraction_s", "training_s", "testing_s"]);
    }
    w.write_record(&header).map_err(csv_error)?;
    for r in records {
        let p = &r.plan;
        let mut row = vec![
            p.label.clone(),
            stream_list(&p.streams),
            p.layer.short_name().to_string(),
            p.aggregation.name().to_string(),
            r.splits.len().to_string(),
            format!("{:.6}", r.accuracy),
            r.accuracy_pct(),
            r.chosen_c.to_string(),
            r.splits
                .iter()
                .map(|s| pct(s.accuracy))
                .collect::<Vec<_>>()
                .join(";"),
            r.plan_hash.clone(),
        ];
        if timings {
            row.extend([
                secs(r.timing.extraction_s),
                secs(r.timing.training_s),
                secs(r.timing.testing_s),
            ]);
        }
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush().map_err(ExperimentError::io("<report>"))
}

/// Per-phase wall-clock table: extraction, training and testing time, each
/// in total and per item.
pub fn write_timing_table<W: Write>(records: &[ResultRecord], out: W) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "label",
        "feature_extraction_s",
        "feature_extraction_per_image_s",
        "training_s",
        "testing_s",
        "testing_per_sample_s",
    ])
    .map_err(csv_error)?;
    for r in records {
        let t = &r.timing;
        w.write_record([
            r.plan.label.clone(),
            secs(t.extraction_s),
            secs(t.extraction_per_image_s),
            secs(t.training_s),
            secs(t.testing_s),
            format!("{:.6}", t.testing_per_sample_s),
        ])
        .map_err(csv_error)?;
    }
    w.flush().map_err(ExperimentError::io("<report>"))
}
