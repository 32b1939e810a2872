//! CSV and JSON writers. Every number is printed with 17 significant digits,
//! so parsing the text back yields the exact `f64`; undefined values are an
//! empty CSV field or JSON `null`.
//!
//! CSV header (fixed):
//!
//! ```text
//! t,mean_obj,p25_obj,p75_obj,mean_obj_pbar,mean_regret,mean_relative_gain
//! ```

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::value::RawValue;

use super::config::{ExperimentConfig, OutputFormat};
use super::runner::{ResultBundle, RunMetadata};
use super::HarnessError;

pub const CSV_HEADER: &str =
    "t,mean_obj,p25_obj,p75_obj,mean_obj_pbar,mean_regret,mean_relative_gain";
pub const CSV_FILE: &str = "results.csv";
pub const JSON_FILE: &str = "results.json";

/// Exact decimal text for a finite value; `None` otherwise.
pub fn format_number(x: f64) -> Option<String> {
    x.is_finite().then(|| format!("{x:.16e}"))
}

fn csv_field(x: Option<f64>) -> String {
    x.and_then(format_number).unwrap_or_default()
}

fn json_number(x: Option<f64>) -> Box<RawValue> {
    let text = x
        .and_then(format_number)
        .unwrap_or_else(|| "null".to_string());
    RawValue::from_string(text).expect("formatted float is valid JSON")
}

pub fn write_csv<W: Write>(bundle: &ResultBundle, mut out: W) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for row in &bundle.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            row.t,
            csv_field(row.mean_obj),
            csv_field(row.p25_obj),
            csv_field(row.p75_obj),
            csv_field(row.mean_obj_pbar),
            csv_field(row.mean_regret),
            csv_field(row.mean_relative_gain),
        )?;
    }
    Ok(())
}

pub fn csv_string(bundle: &ResultBundle) -> String {
    let mut buf = Vec::new();
    write_csv(bundle, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

#[derive(Serialize)]
struct JsonRow {
    t: usize,
    mean_obj: Box<RawValue>,
    p25_obj: Box<RawValue>,
    p75_obj: Box<RawValue>,
    mean_obj_pbar: Box<RawValue>,
    mean_regret: Box<RawValue>,
    mean_relative_gain: Box<RawValue>,
}

#[derive(Serialize)]
struct JsonDocument<'a> {
    config: &'a ExperimentConfig,
    metadata: &'a RunMetadata,
    mean_final_p_bar: Vec<Box<RawValue>>,
    rows: Vec<JsonRow>,
}

pub fn json_string(bundle: &ResultBundle) -> String {
    let doc = JsonDocument {
        config: &bundle.config,
        metadata: &bundle.metadata,
        mean_final_p_bar: bundle
            .mean_final_p_bar
            .iter()
            .map(|&v| json_number(Some(v)))
            .collect(),
        rows: bundle
            .rows
            .iter()
            .map(|r| JsonRow {
                t: r.t,
                mean_obj: json_number(r.mean_obj),
                p25_obj: json_number(r.p25_obj),
                p75_obj: json_number(r.p75_obj),
                mean_obj_pbar: json_number(r.mean_obj_pbar),
                mean_regret: json_number(r.mean_regret),
                mean_relative_gain: json_number(r.mean_relative_gain),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("result document serializes");
    text.push('\n');
    text
}

/// Writes the requested files into `dir`, creating it if needed.
pub fn emit(
    bundle: &ResultBundle,
    format: OutputFormat,
    dir: &Path,
) -> Result<Vec<PathBuf>, HarnessError> {
    let io_err = |path: &Path, e: io::Error| HarnessError::Io(format!("{}: {e}", path.display()));
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut written = Vec::new();
    if matches!(format, OutputFormat::Csv | OutputFormat::Both) {
        let path = dir.join(CSV_FILE);
        fs::write(&path, csv_string(bundle)).map_err(|e| io_err(&path, e))?;
        written.push(path);
    }
    if matches!(format, OutputFormat::Json | OutputFormat::Both) {
        let path = dir.join(JSON_FILE);
        fs::write(&path, json_string(bundle)).map_err(|e| io_err(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
