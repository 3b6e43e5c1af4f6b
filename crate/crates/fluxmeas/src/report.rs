//! Scenario output: one report per run, serializable as a single JSON object
//! or as a CSV table.
//!
//! A report consists of named scalars, an optional rectangular table (the
//! plottable data: one record per time step, sample, or level), and extra
//! arrays that don't fit the table's row count. JSON carries everything;
//! CSV carries the table (or the scalars when a scenario has no table).
//! Serialization is fully deterministic: keys keep insertion order and
//! floats are printed with 12 fractional digits of scientific notation, so
//! identical runs produce byte-identical files.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub enum ScalarValue {
    Float(f64),
    Int(i64),
    Bool(bool),
    Text(String),
}

impl From<f64> for ScalarValue {
    fn from(v: f64) -> Self {
        Self::Float(v)
    }
}

impl From<i64> for ScalarValue {
    fn from(v: i64) -> Self {
        Self::Int(v)
    }
}

impl From<u64> for ScalarValue {
    fn from(v: u64) -> Self {
        Self::Int(v as i64)
    }
}

impl From<usize> for ScalarValue {
    fn from(v: usize) -> Self {
        Self::Int(v as i64)
    }
}

impl From<bool> for ScalarValue {
    fn from(v: bool) -> Self {
        Self::Bool(v)
    }
}

impl From<&str> for ScalarValue {
    fn from(v: &str) -> Self {
        Self::Text(v.to_string())
    }
}

/// Output format selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(format!("unknown format `{other}` (expected csv or json)")),
        }
    }
}

/// A scenario result: scalars, a plottable table, and JSON-only arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    scenario: String,
    scalars: Vec<(String, ScalarValue)>,
    table: Vec<(String, Vec<f64>)>,
    arrays: Vec<(String, Vec<f64>)>,
}

impl Report {
    pub fn new(scenario: &str) -> Self {
        Self {
            scenario: scenario.to_string(),
            scalars: Vec::new(),
            table: Vec::new(),
            arrays: Vec::new(),
        }
    }

    pub fn scenario(&self) -> &str {
        &self.scenario
    }

    /// Appends a named scalar (insertion order is serialization order).
    pub fn scalar(&mut self, name: &str, value: impl Into<ScalarValue>) -> &mut Self {
        self.scalars.push((name.to_string(), value.into()));
        self
    }

    /// Appends a table column; all columns must end up the same length.
    pub fn column(&mut self, name: &str, values: Vec<f64>) -> &mut Self {
        if let Some((first, v)) = self.table.first() {
            debug_assert_eq!(
                v.len(),
                values.len(),
                "column {name} length differs from {first}"
            );
        }
        self.table.push((name.to_string(), values));
        self
    }

    /// Appends a JSON-only array (for series that don't share the table's
    /// row count).
    pub fn array(&mut self, name: &str, values: Vec<f64>) -> &mut Self {
        self.arrays.push((name.to_string(), values));
        self
    }

    pub fn get_scalar(&self, name: &str) -> Option<&ScalarValue> {
        self.scalars
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v)
    }

    pub fn get_float(&self, name: &str) -> Option<f64> {
        match self.get_scalar(name) {
            Some(ScalarValue::Float(v)) => Some(*v),
            Some(ScalarValue::Int(v)) => Some(*v as f64),
            _ => None,
        }
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Json => self.to_json(),
            OutputFormat::Csv => self.to_csv(),
        }
    }

    /// Single JSON object with the scenario name, every scalar, every table
    /// column, and every extra array. Non-finite floats (which JSON cannot
    /// represent as numbers) become the strings "inf", "-inf", "nan".
    pub fn to_json(&self) -> String {
        let mut out = String::new();
        out.push('{');
        push_json_string(&mut out, "scenario");
        out.push(':');
        push_json_string(&mut out, &self.scenario);
        for (name, value) in &self.scalars {
            out.push(',');
            push_json_string(&mut out, name);
            out.push(':');
            match value {
                ScalarValue::Float(v) => push_json_float(&mut out, *v),
                ScalarValue::Int(v) => {
                    let _ = write!(out, "{v}");
                }
                ScalarValue::Bool(v) => {
                    let _ = write!(out, "{v}");
                }
                ScalarValue::Text(v) => push_json_string(&mut out, v),
            }
        }
        for (name, values) in self.table.iter().chain(self.arrays.iter()) {
            out.push(',');
            push_json_string(&mut out, name);
            out.push_str(":[");
            for (i, v) in values.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                push_json_float(&mut out, *v);
            }
            out.push(']');
        }
        out.push_str("}\n");
        out
    }

    /// Header row plus one record per table row; scenarios without a table
    /// emit their scalars as a `key,value` listing instead.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if self.table.is_empty() {
            out.push_str("key,value\n");
            for (name, value) in &self.scalars {
                let _ = match value {
                    ScalarValue::Float(v) => writeln!(out, "{name},{}", fmt_float(*v)),
                    ScalarValue::Int(v) => writeln!(out, "{name},{v}"),
                    ScalarValue::Bool(v) => writeln!(out, "{name},{v}"),
                    ScalarValue::Text(v) => writeln!(out, "{name},{v}"),
                };
            }
            return out;
        }
        let names: Vec<&str> = self.table.iter().map(|(n, _)| n.as_str()).collect();
        out.push_str(&names.join(","));
        out.push('\n');
        let rows = self.table[0].1.len();
        for r in 0..rows {
            for (c, (_, values)) in self.table.iter().enumerate() {
                if c > 0 {
                    out.push(',');
                }
                out.push_str(&fmt_float(values[r]));
            }
            out.push('\n');
        }
        out
    }

    /// Writes the rendered report atomically: the content lands in a
    /// temporary file in the same directory, then a rename moves it into
    /// place so readers never observe a partial file.
    pub fn write(&self, path: &Path, format: OutputFormat) -> io::Result<()> {
        let rendered = self.render(format);
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        std::fs::write(&tmp, rendered.as_bytes())?;
        std::fs::rename(&tmp, path)
    }
}

fn fmt_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.12e}")
    } else if v.is_nan() {
        "nan".to_string()
    } else if v > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

fn push_json_float(out: &mut String, v: f64) {
    if v.is_finite() {
        let _ = write!(out, "{v:.12e}");
    } else {
        push_json_string(out, &fmt_float(v));
    }
}

fn push_json_string(out: &mut String, s: &str) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
}
