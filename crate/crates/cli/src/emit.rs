//! CSV and JSON report files.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::value::RawValue;

use lclab::density::format::fmt17;
use lclab::VerificationReport;

use crate::config::Format;
use crate::CliError;

pub const CSV_COLUMNS: [&str; 9] = [
    "inequality_id",
    "lhs",
    "rhs",
    "constant_used",
    "margin",
    "best_constant_estimate",
    "tolerance",
    "status",
    "inputs_digest",
];

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn to_csv(reports: &[VerificationReport]) -> String {
    let mut out = CSV_COLUMNS.join(",");
    out.push('\n');
    for r in reports {
        let row = [
            csv_field(&r.inequality_id),
            fmt17(r.lhs),
            fmt17(r.rhs),
            fmt17(r.constant_used),
            fmt17(r.margin),
            fmt17(r.best_constant_estimate),
            fmt17(r.tolerance),
            r.status.to_string(),
            csv_field(&r.inputs_digest),
        ];
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// 17 significant digits; `null` for non-finite values.
fn num(x: f64) -> Box<RawValue> {
    let text = if x.is_finite() { fmt17(x) } else { "null".to_string() };
    RawValue::from_string(text).expect("valid JSON number")
}

#[derive(Serialize)]
struct Detail {
    name: String,
    value: Box<RawValue>,
}

#[derive(Serialize)]
struct JsonReport {
    inequality_id: String,
    lhs: Box<RawValue>,
    rhs: Box<RawValue>,
    constant_used: Box<RawValue>,
    margin: Box<RawValue>,
    best_constant_estimate: Box<RawValue>,
    tolerance: Box<RawValue>,
    status: String,
    inputs_digest: String,
    details: Vec<Detail>,
    notes: Vec<String>,
}

pub fn to_json(reports: &[VerificationReport]) -> String {
    let rows: Vec<JsonReport> = reports
        .iter()
        .map(|r| JsonReport {
            inequality_id: r.inequality_id.clone(),
            lhs: num(r.lhs),
            rhs: num(r.rhs),
            constant_used: num(r.constant_used),
            margin: num(r.margin),
            best_constant_estimate: num(r.best_constant_estimate),
            tolerance: num(r.tolerance),
            status: r.status.to_string(),
            inputs_digest: r.inputs_digest.clone(),
            details: r.details.iter().map(|(k, v)| Detail { name: k.clone(), value: num(*v) }).collect(),
            notes: r.notes.clone(),
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&rows).expect("serializable");
    s.push('\n');
    s
}

pub fn emit_report(reports: &[VerificationReport], format: Format, path: &Path) -> Result<(), CliError> {
    let text = match format {
        Format::Csv => to_csv(reports),
        Format::Json => to_json(reports),
    };
    let mut f = std::fs::File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    f.write_all(text.as_bytes()).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
