//! Report documents and their table / CSV / JSON renderings.

use std::fmt::Write as _;

use serde_json::{json, Map, Value};

/// Version of the CSV and JSON layouts.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Table,
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
    Ints(Vec<u32>),
    Bool(bool),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Num)
    }
}

/// Round to 12 significant digits; `-0` becomes `0`.
pub fn round12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return if x == 0.0 { 0.0 } else { x };
    }
    format!("{x:.11e}").parse().expect("formatted float parses")
}

pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{:?}", round12(x))
}

/// `a+bi` with both parts at 12 significant digits.
pub fn fmt_complex(re: f64, im: f64) -> String {
    let im = round12(im);
    if im < 0.0 {
        format!("{}-{}i", fmt_num(re), fmt_num(-im))
    } else {
        format!("{}+{}i", fmt_num(re), fmt_num(im))
    }
}

impl Cell {
    fn text(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Num(v) => fmt_num(*v),
            Cell::Text(s) => s.clone(),
            Cell::Ints(v) => format!(
                "[{}]",
                v.iter()
                    .map(|e| e.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            ),
            Cell::Bool(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(v) => json!(v),
            Cell::Num(v) if v.is_finite() => json!(round12(*v)),
            Cell::Num(v) => json!(fmt_num(*v)),
            Cell::Text(s) => json!(s),
            Cell::Ints(v) => json!(v),
            Cell::Bool(b) => json!(b),
            Cell::Empty => Value::Null,
        }
    }
}

/// Matrix-shaped human view of a table.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub corner: String,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub cells: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    /// Shown instead of the long form in table output.
    pub grid: Option<Grid>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            grid: None,
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub command: String,
    pub system: String,
    pub meta: Vec<(String, Cell)>,
    pub tables: Vec<Table>,
    pub warnings: Vec<String>,
}

impl Report {
    pub fn new(command: &str, system: &str) -> Self {
        Report {
            command: command.to_string(),
            system: system.to_string(),
            meta: Vec::new(),
            tables: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn meta(&mut self, key: &str, value: impl Into<Cell>) {
        self.meta.push((key.to_string(), value.into()));
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Table => self.render_table(),
            Format::Csv => self.render_csv(),
            Format::Json => self.render_json(),
        }
    }

    fn render_table(&self) -> String {
        let mut out = String::new();
        writeln!(out, "modalpf {}: {}", self.command, self.system).unwrap();
        let width = self.meta.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        for (k, v) in &self.meta {
            writeln!(out, "  {k:<width$}  {}", v.text()).unwrap();
        }
        for t in &self.tables {
            writeln!(out, "\n[{}]", t.name).unwrap();
            let (header, body): (Vec<String>, Vec<Vec<String>>) = match &t.grid {
                Some(g) => {
                    let mut header = vec![g.corner.clone()];
                    header.extend(g.col_labels.iter().cloned());
                    let body = g
                        .row_labels
                        .iter()
                        .zip(&g.cells)
                        .map(|(l, r)| {
                            std::iter::once(l.clone())
                                .chain(r.iter().cloned())
                                .collect()
                        })
                        .collect();
                    (header, body)
                }
                None => (
                    t.columns.clone(),
                    t.rows
                        .iter()
                        .map(|r| r.iter().map(Cell::text).collect())
                        .collect(),
                ),
            };
            let widths: Vec<usize> = (0..header.len())
                .map(|j| {
                    body.iter()
                        .map(|r| r[j].chars().count())
                        .chain(std::iter::once(header[j].chars().count()))
                        .max()
                        .unwrap_or(0)
                })
                .collect();
            for row in std::iter::once(&header).chain(body.iter()) {
                let line: Vec<String> = row
                    .iter()
                    .zip(&widths)
                    .map(|(c, w)| format!("{c:>w$}"))
                    .collect();
                writeln!(out, "  {}", line.join("  ").trim_end()).unwrap();
            }
        }
        for w in &self.warnings {
            writeln!(out, "\nwarning: {w}").unwrap();
        }
        out
    }

    fn render_csv(&self) -> String {
        let mut out = format!("# schema_version: {SCHEMA_VERSION}\n");
        let several = self.tables.len() > 1;
        for (i, t) in self.tables.iter().enumerate() {
            if several {
                if i > 0 {
                    out.push('\n');
                }
                writeln!(out, "# table: {}", t.name).unwrap();
            }
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&t.columns).expect("in-memory write");
            for r in &t.rows {
                w.write_record(r.iter().map(Cell::text))
                    .expect("in-memory write");
            }
            out.push_str(
                &String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells"),
            );
        }
        out
    }

    fn render_json(&self) -> String {
        let meta: Map<String, Value> = self
            .meta
            .iter()
            .map(|(k, v)| (k.clone(), v.json()))
            .collect();
        let tables: Vec<Value> = self
            .tables
            .iter()
            .map(|t| {
                json!({
                    "name": t.name,
                    "columns": t.columns,
                    "rows": t.rows.iter().map(|r| r.iter().map(Cell::json).collect::<Vec<_>>()).collect::<Vec<_>>(),
                })
            })
            .collect();
        let doc = json!({
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "system": self.system,
            "meta": meta,
            "tables": tables,
            "warnings": self.warnings,
        });
        let mut s = serde_json::to_string_pretty(&doc).expect("json values serialize");
        s.push('\n');
        s
    }
}
