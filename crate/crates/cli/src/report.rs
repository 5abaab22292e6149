//! Machine-readable reports.
//!
//! A report is a JSON document with fixed top-level keys: `command`,
//! `report_version`, `units`, `inputs`, `tolerances`, `outputs` and, last,
//! `wall_clock_seconds`. Every float in `outputs` is wrapped with the
//! tolerance it is known to: `{"value": v, "tol": t}` or
//! `{"values": [..], "tol": t}`. Floats are rounded to 12 significant
//! digits; non-finite values print as the strings `"inf"`, `"-inf"`, `"nan"`.

use serde_json::{json, Map, Value};

pub const REPORT_VERSION: &str = "1";

pub const SIG_DIGITS: usize = 12;

const LN_2: f64 = std::f64::consts::LN_2;

pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIG_DIGITS - 1, x)
        .parse()
        .expect("formatted float parses")
}

pub fn num(x: f64) -> Value {
    if x.is_nan() {
        Value::from("nan")
    } else if x.is_infinite() {
        Value::from(if x > 0.0 { "inf" } else { "-inf" })
    } else {
        // -0.0 would otherwise print as "-0.0".
        json!(round_sig(x) + 0.0)
    }
}

pub fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| num(x)).collect())
}

/// Unit handling: information quantities are computed in nats and only
/// converted for display.
#[derive(Debug, Clone, Copy)]
pub struct Units {
    pub bits: bool,
}

impl Units {
    pub fn name(&self) -> &'static str {
        if self.bits {
            "bits"
        } else {
            "nats"
        }
    }

    pub fn convert(&self, v: f64) -> f64 {
        v * self.scale()
    }

    fn scale(&self) -> f64 {
        if self.bits {
            1.0 / LN_2
        } else {
            1.0
        }
    }

    /// An information quantity (rate, entropy, log loss).
    pub fn info(&self, v: f64, tol: f64) -> Value {
        tagged(v * self.scale(), tol * self.scale())
    }

    pub fn info_vec(&self, v: &[f64], tol: f64) -> Value {
        let s = self.scale();
        let scaled: Vec<f64> = v.iter().map(|x| x * s).collect();
        tagged_vec(&scaled, tol * s)
    }
}

/// A quantity that does not change with the information unit.
pub fn plain(v: f64, tol: f64) -> Value {
    tagged(v, tol)
}

pub fn plain_vec(v: &[f64], tol: f64) -> Value {
    tagged_vec(v, tol)
}

fn tagged(v: f64, tol: f64) -> Value {
    json!({ "value": num(v), "tol": num(tol) })
}

fn tagged_vec(v: &[f64], tol: f64) -> Value {
    json!({ "values": nums(v), "tol": num(tol) })
}

pub fn matrix(rows: &[Vec<f64>], tol: f64) -> Value {
    json!({
        "rows": rows.iter().map(|r| nums(r)).collect::<Vec<_>>(),
        "tol": num(tol),
    })
}

/// Delimiter-separated rows with a header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for line in std::iter::once(&self.header).chain(&self.rows) {
            let cells: Vec<String> = line.iter().map(|c| escape(c)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// Flattens tagged outputs into `quantity,value,tol` rows.
    pub fn from_outputs(outputs: &Map<String, Value>) -> Self {
        let mut table = Table::new(&["quantity", "value", "tol"]);
        for (key, value) in outputs {
            flatten(key, value, &mut table);
        }
        table
    }
}

pub fn cell(x: f64) -> String {
    match num(x) {
        Value::String(s) => s,
        v => v.to_string(),
    }
}

fn scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn flatten(path: &str, value: &Value, table: &mut Table) {
    match value {
        Value::Object(obj) if obj.contains_key("tol") && obj.contains_key("value") => {
            table.push(vec![
                path.into(),
                scalar(&obj["value"]),
                scalar(&obj["tol"]),
            ]);
        }
        Value::Object(obj) if obj.contains_key("tol") && obj.contains_key("values") => {
            let tol = scalar(&obj["tol"]);
            if let Value::Array(items) = &obj["values"] {
                for (i, item) in items.iter().enumerate() {
                    table.push(vec![format!("{path}[{i}]"), scalar(item), tol.clone()]);
                }
            }
        }
        Value::Object(obj) if obj.contains_key("tol") && obj.contains_key("rows") => {
            let tol = scalar(&obj["tol"]);
            if let Value::Array(rows) = &obj["rows"] {
                for (i, row) in rows.iter().enumerate() {
                    if let Value::Array(items) = row {
                        for (j, item) in items.iter().enumerate() {
                            table.push(vec![
                                format!("{path}[{i}][{j}]"),
                                scalar(item),
                                tol.clone(),
                            ]);
                        }
                    }
                }
            }
        }
        Value::Object(obj) => {
            for (k, v) in obj {
                flatten(&format!("{path}.{k}"), v, table);
            }
        }
        Value::Array(items) => {
            for (i, v) in items.iter().enumerate() {
                flatten(&format!("{path}[{i}]"), v, table);
            }
        }
        other => table.push(vec![path.into(), scalar(other), String::new()]),
    }
}

fn escape(cell: &str) -> String {
    if cell.contains([',', '"', '\n']) {
        format!("\"{}\"", cell.replace('"', "\"\""))
    } else {
        cell.to_string()
    }
}

#[derive(Debug, Clone)]
pub struct Report {
    pub command: &'static str,
    pub units: Units,
    pub inputs: Map<String, Value>,
    pub tolerances: Map<String, Value>,
    pub outputs: Map<String, Value>,
    /// Preferred table view; defaults to the flattened outputs.
    pub table: Option<Table>,
}

impl Report {
    pub fn new(command: &'static str, units: Units) -> Self {
        Report {
            command,
            units,
            inputs: Map::new(),
            tolerances: Map::new(),
            outputs: Map::new(),
            table: None,
        }
    }

    pub fn input(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.inputs.insert(key.into(), value.into());
        self
    }

    pub fn tolerance(&mut self, key: &str, tol: f64) -> &mut Self {
        self.tolerances.insert(key.into(), num(tol));
        self
    }

    pub fn output(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.outputs.insert(key.into(), value.into());
        self
    }

    pub fn render_json(&self, wall_clock_seconds: f64) -> String {
        let doc = json!({
            "command": self.command,
            "report_version": REPORT_VERSION,
            "units": self.units.name(),
            "inputs": self.inputs,
            "tolerances": self.tolerances,
            "outputs": self.outputs,
            "wall_clock_seconds": (wall_clock_seconds * 1e3).round() / 1e3,
        });
        let mut text = serde_json::to_string_pretty(&doc).expect("report serializes");
        text.push('\n');
        text
    }

    pub fn render_table(&self) -> String {
        match &self.table {
            Some(t) => t.render(),
            None => Table::from_outputs(&self.outputs).render(),
        }
    }
}
