//! Tabular experiment output with deterministic CSV rendering.

use std::io::Write;

use crate::error::{Error, Result};

/// One table cell: a number or an explicit error marker (degenerate cells
/// never silently become NaN).
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Err(String),
}

impl Cell {
    pub fn as_num(&self) -> Option<f64> {
        match self {
            Cell::Num(v) => Some(*v),
            Cell::Err(_) => None,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

/// Sweep output: one row per grid value, fixed column order.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl ResultTable {
    pub fn new(columns: Vec<String>) -> Self {
        Self {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: Vec<Cell>) {
        assert_eq!(
            row.len(),
            self.columns.len(),
            "row width must match the header"
        );
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// All numeric values of a named column.
    pub fn column_values(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.column_index(name)?;
        self.rows.iter().map(|r| r[idx].as_num()).collect()
    }

    pub fn has_errors(&self) -> bool {
        self.rows
            .iter()
            .any(|r| r.iter().any(|c| matches!(c, Cell::Err(_))))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let render = |cell: &Cell| -> String {
            match cell {
                // `{}` is shortest round-trip formatting: deterministic
                // and exact for f64.
                Cell::Num(v) => format!("{v}"),
                Cell::Err(msg) => format!("ERROR({})", msg.replace(',', ";")),
            }
        };
        let mut emit = |line: String| -> Result<()> {
            out.write_all(line.as_bytes())
                .and_then(|_| out.write_all(b"\n"))
                .map_err(|e| Error::Config(format!("csv write: {e}")))
        };
        emit(self.columns.join(","))?;
        for row in &self.rows {
            emit(row.iter().map(render).collect::<Vec<_>>().join(","))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}
