//! Machine-readable report records: JSON lines plus a CSV summary.

use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::Result;

/// One checked assertion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub experiment: String,
    pub instance: usize,
    pub metric: String,
    pub value: Value,
    pub pass: bool,
    /// Parameter echo.
    pub params: Value,
}

impl ReportRecord {
    pub fn new(experiment: &str, instance: usize, metric: &str, value: Value, pass: bool, params: Value) -> Self {
        Self {
            experiment: experiment.to_string(),
            instance,
            metric: metric.to_string(),
            value,
            pass,
            params,
        }
    }

    /// Record with a numeric value (non-finite values are kept as strings).
    pub fn number(experiment: &str, instance: usize, metric: &str, value: f64, pass: bool, params: Value) -> Self {
        Self::new(experiment, instance, metric, json_f64(value), pass, params)
    }
}

/// Non-finite numbers become the strings `"inf"`, `"-inf"`, `"nan"`.
pub fn json_f64(v: f64) -> Value {
    if v.is_finite() {
        Value::from(v)
    } else if v.is_nan() {
        Value::from("nan")
    } else if v > 0.0 {
        Value::from("inf")
    } else {
        Value::from("-inf")
    }
}

pub fn write_jsonl<W: Write>(out: &mut W, records: &[ReportRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut *out, r).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Per `(experiment, metric)`: count, failures, min and max of numeric values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub experiment: String,
    pub metric: String,
    pub count: usize,
    pub failures: usize,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

pub fn summarize(records: &[ReportRecord]) -> Vec<SummaryRow> {
    let mut rows: Vec<SummaryRow> = Vec::new();
    for r in records {
        let pos = rows
            .iter()
            .position(|row| row.experiment == r.experiment && row.metric == r.metric);
        let row = match pos {
            Some(i) => &mut rows[i],
            None => {
                rows.push(SummaryRow {
                    experiment: r.experiment.clone(),
                    metric: r.metric.clone(),
                    count: 0,
                    failures: 0,
                    min: None,
                    max: None,
                });
                rows.last_mut().expect("just pushed")
            }
        };
        row.count += 1;
        if !r.pass {
            row.failures += 1;
        }
        let v = match &r.value {
            Value::Number(n) => n.as_f64(),
            Value::String(s) if s == "inf" => Some(f64::INFINITY),
            Value::String(s) if s == "-inf" => Some(f64::NEG_INFINITY),
            _ => None,
        };
        if let Some(v) = v {
            row.min = Some(row.min.map_or(v, |m| m.min(v)));
            row.max = Some(row.max.map_or(v, |m| m.max(v)));
        }
    }
    rows
}

pub fn all_pass(records: &[ReportRecord]) -> bool {
    records.iter().all(|r| r.pass)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn summary_counts_failures() {
        let recs = vec![
            ReportRecord::number("a", 0, "m", 1.0, true, json!({})),
            ReportRecord::number("a", 1, "m", 3.0, false, json!({})),
            ReportRecord::number("a", 0, "n", f64::INFINITY, true, json!({})),
        ];
        let rows = summarize(&recs);
        assert_eq!(rows.len(), 2);
        assert_eq!((rows[0].count, rows[0].failures), (2, 1));
        assert_eq!((rows[0].min, rows[0].max), (Some(1.0), Some(3.0)));
        assert_eq!(rows[1].max, Some(f64::INFINITY));
        assert!(!all_pass(&recs));
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let back: ReportRecord = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(back, recs[0]);
    }
}
