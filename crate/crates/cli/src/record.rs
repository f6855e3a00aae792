//! Result records and their CSV / JSON forms.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::Format;

/// One table cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Num(x) => format_float(*x),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(i: usize) -> Self {
        Cell::Int(i as i64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

/// Rows under named columns.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Table {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::csv).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// 17 significant digits, `.` as decimal separator.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub run_id: String,
    /// Seconds since the epoch, from `SOURCE_DATE_EPOCH` when set.
    pub timestamp: Option<u64>,
    pub config_hash: String,
    pub experiment: String,
    pub scalars: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Table>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub details: Option<Value>,
}

impl ResultRecord {
    pub fn new(experiment: &str, config_hash: &str) -> Self {
        let timestamp = std::env::var("SOURCE_DATE_EPOCH")
            .ok()
            .and_then(|v| v.trim().parse().ok());
        ResultRecord {
            run_id: format!("{experiment}-{}", &config_hash[..12.min(config_hash.len())]),
            timestamp,
            config_hash: config_hash.to_string(),
            experiment: experiment.to_string(),
            scalars: BTreeMap::new(),
            table: None,
            details: None,
        }
    }

    pub fn scalar(&mut self, name: &str, value: f64) {
        self.scalars.insert(name.to_string(), value);
    }

    /// CSV: the table when there is one, otherwise `name,value` rows.
    pub fn to_csv(&self) -> String {
        match &self.table {
            Some(t) => t.to_csv(),
            None => {
                let mut out = String::from("name,value\n");
                for (k, v) in &self.scalars {
                    let _ = writeln!(out, "{k},{}", format_float(*v));
                }
                out
            }
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("record serializes");
        s.push('\n');
        s
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => self.to_json(),
        }
    }
}

/// Write `record` to `path`, or to stdout when `path` is `None`.
pub fn emit(record: &ResultRecord, format: Format, path: Option<&Path>) -> std::io::Result<()> {
    let text = record.render(format);
    match path {
        Some(p) => std::fs::write(p, text),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(points: usize) -> ResultRecord {
        let mut r = ResultRecord::new("finite-rdf", "0123456789abcdef");
        let mut t = Table::new(["distortion", "rate_nats"]);
        for i in 0..points {
            t.push(vec![Cell::from(0.1 * i as f64), Cell::from(1.0 / (i + 1) as f64)]);
        }
        r.table = Some(t);
        r
    }

    #[test]
    fn empty_curve_is_header_only() {
        assert_eq!(curve(0).to_csv(), "distortion,rate_nats\n");
    }

    #[test]
    fn three_points_four_lines() {
        let csv = curve(3).to_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.lines().nth(2).unwrap().starts_with("1.0000000000000001e-1,"));
    }

    #[test]
    fn seventeen_significant_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, 2.0f64.ln(), -1e-300, 12345.678] {
            let s = format_float(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let mantissa = s.split('e').next().unwrap().trim_start_matches('-');
            assert_eq!(mantissa.chars().filter(|c| c.is_ascii_digit()).count(), 17);
        }
    }

    #[test]
    fn json_reload_is_exact() {
        let mut r = curve(3);
        r.scalar("rate_nats", 2.0 * std::f64::consts::LN_2);
        r.details = Some(serde_json::json!({"deltas": [0.1, 1.0 / 3.0]}));
        let back: ResultRecord = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }
}
