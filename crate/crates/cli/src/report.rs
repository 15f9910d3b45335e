//! CSV and JSON artifact formatting.
//!
//! CSV: comma-separated, `\n` line endings, header row, floats with 17
//! significant digits. JSON: keys in insertion order, floats in shortest
//! round-trip form.

use serde::Serialize;
use serde_json::{Map, Value};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

/// A CSV cell.
pub enum Cell {
    Int(u64),
    Float(f64),
    Text(String),
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

pub fn float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

#[derive(Debug, Clone)]
pub struct Csv {
    text: String,
    width: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self {
            text: format!("{}\n", header.join(",")),
            width: header.len(),
        }
    }

    pub fn row(&mut self, cells: Vec<Cell>) {
        assert_eq!(cells.len(), self.width, "row width must match the header");
        let parts: Vec<String> = cells
            .into_iter()
            .map(|c| match c {
                Cell::Int(v) => v.to_string(),
                Cell::Float(v) => float(v),
                Cell::Text(s) => s,
            })
            .collect();
        self.text.push_str(&parts.join(","));
        self.text.push('\n');
    }

    pub fn into_artifact(self, name: &str) -> Artifact {
        Artifact {
            name: name.to_string(),
            contents: self.text,
        }
    }
}

/// JSON object under construction; keys keep insertion order.
#[derive(Debug, Clone, Default)]
pub struct Summary(Map<String, Value>);

impl Summary {
    /// Starts with the command, seed and resolved section.
    pub fn new<C: Serialize>(command: &str, seed: u64, section: &C) -> Self {
        let mut s = Self::default();
        s.put("command", command);
        s.put("seed", seed);
        let mut config = Map::new();
        config.insert("seed".into(), Value::from(seed));
        config.insert(command.into(), to_value(section));
        s.0.insert("config".into(), Value::Object(config));
        s
    }

    pub fn put<V: Serialize>(&mut self, key: &str, value: V) -> &mut Self {
        self.0.insert(key.to_string(), to_value(&value));
        self
    }

    pub fn into_artifact(self, name: &str) -> Artifact {
        let mut text =
            serde_json::to_string_pretty(&Value::Object(self.0)).expect("json values serialize");
        text.push('\n');
        Artifact {
            name: name.to_string(),
            contents: text,
        }
    }
}

fn to_value<V: Serialize + ?Sized>(v: &V) -> Value {
    serde_json::to_value(v).expect("artifact values serialize")
}
