//! Plain-text tables: one `#`-prefixed JSON manifest line, one line of
//! column names, then comma-separated rows.
//!
//! ```text
//! # {"kind":"sample_batch","alpha":1.5,...}
//! f0,f1
//! 0.12,-3.4
//! ```

use std::io::Write;
use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};

/// Shortest decimal text that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-5..1e16).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("not a number: {s:?}")))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub manifest: Value,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(manifest: Value, columns: Vec<String>) -> Self {
        Table {
            manifest,
            columns,
            rows: Vec::new(),
        }
    }

    /// Adds `key: value` to the manifest object.
    pub fn annotate(&mut self, key: &str, value: Value) {
        if let Value::Object(map) = &mut self.manifest {
            map.insert(key.to_string(), value);
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str("# ");
        out.push_str(&self.manifest.to_string());
        out.push('\n');
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(self.render().as_bytes())?;
        f.flush()?;
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Table> {
        let mut lines = text.lines();
        let first = lines.next().ok_or_else(|| Error::Parse("missing manifest line".into()))?;
        let json = first
            .strip_prefix('#')
            .ok_or_else(|| Error::Parse("manifest line must start with '#'".into()))?;
        let manifest: Value = serde_json::from_str(json.trim())?;
        let header = lines.next().ok_or_else(|| Error::Parse("missing column line".into()))?;
        let columns: Vec<String> = if header.is_empty() {
            Vec::new()
        } else {
            header.split(',').map(str::to_string).collect()
        };
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let row: Vec<String> = line.split(',').map(str::to_string).collect();
            if row.len() != columns.len() {
                return Err(Error::Parse(format!(
                    "row {} has {} fields, expected {}",
                    i + 1,
                    row.len(),
                    columns.len()
                )));
            }
            rows.push(row);
        }
        Ok(Table { manifest, columns, rows })
    }

    pub fn read_from(path: &Path) -> Result<Table> {
        Table::parse(&std::fs::read_to_string(path)?)
    }

    /// The JSON form: `{"manifest": …, "columns": […], "rows": [[…]]}` with
    /// finite numeric cells as JSON numbers.
    pub fn to_json(&self) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| {
                Value::Array(
                    r.iter()
                        .map(|c| match parse_f64(c) {
                            Ok(v) if v.is_finite() => Value::from(v),
                            _ => Value::String(c.clone()),
                        })
                        .collect(),
                )
            })
            .collect();
        serde_json::json!({ "manifest": self.manifest, "columns": self.columns, "rows": rows })
    }

    pub fn render_json(&self) -> String {
        let mut s = serde_json::to_string(&self.to_json()).expect("table serializes");
        s.push('\n');
        s
    }

    pub fn from_json(v: &Value) -> Result<Table> {
        let manifest = v.get("manifest").cloned().ok_or_else(|| Error::Parse("missing manifest".into()))?;
        let columns: Vec<String> = serde_json::from_value(v.get("columns").cloned().unwrap_or(Value::Null))?;
        let rows = v
            .get("rows")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Parse("missing rows".into()))?
            .iter()
            .map(|r| {
                let cells = r.as_array().ok_or_else(|| Error::Parse("row is not an array".into()))?;
                if cells.len() != columns.len() {
                    return Err(Error::Parse(format!("row has {} fields, expected {}", cells.len(), columns.len())));
                }
                cells
                    .iter()
                    .map(|c| match c {
                        Value::String(s) => Ok(s.clone()),
                        Value::Number(n) => n.as_f64().map(fmt_f64).ok_or_else(|| Error::Parse("bad number".into())),
                        other => Err(Error::Parse(format!("unexpected cell {other}"))),
                    })
                    .collect::<Result<Vec<String>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Table { manifest, columns, rows })
    }

    /// Reads either form, deciding by the first non-blank character.
    pub fn parse_any(text: &str) -> Result<Table> {
        if text.trim_start().starts_with('{') {
            Table::from_json(&serde_json::from_str(text)?)
        } else {
            Table::parse(text)
        }
    }

    pub fn kind(&self) -> Option<&str> {
        self.manifest.get("kind").and_then(Value::as_str)
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        match self.kind() {
            Some(k) if k == kind => Ok(()),
            other => Err(Error::Parse(format!("expected a {kind} table, found {other:?}"))),
        }
    }

    /// Manifest field deserialized into `T`.
    pub fn field<T: serde::de::DeserializeOwned>(&self, key: &str) -> Result<T> {
        let v = self
            .manifest
            .get(key)
            .ok_or_else(|| Error::Parse(format!("manifest lacks {key:?}")))?;
        Ok(serde_json::from_value(v.clone())?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for &x in &[0.0, -0.0, 1.0, 0.1, 1e-300, -2.5e-7, 123456.789, 1e20, f64::MIN_POSITIVE, std::f64::consts::FRAC_1_SQRT_2] {
            let s = fmt_f64(x);
            assert_eq!(parse_f64(&s).unwrap().to_bits(), x.to_bits(), "{s}");
        }
    }

    #[test]
    fn table_round_trip() {
        let mut t = Table::new(serde_json::json!({"kind": "demo", "h": 0.5}), vec!["k0".into(), "value".into()]);
        t.rows.push(vec!["0".into(), fmt_f64(0.25)]);
        t.annotate("seed", serde_json::json!(7));
        let back = Table::parse(&t.render()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.field::<f64>("h").unwrap(), 0.5);
        assert!(back.expect_kind("other").is_err());
        assert!(Table::parse("no manifest\n").is_err());
        assert!(Table::parse("# {}\na,b\n1\n").is_err());
    }
}
