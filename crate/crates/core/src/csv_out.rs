//! Minimal CSV emission: UTF-8, LF line endings, `.` decimal separator and
//! 17 significant digits for every float so values round-trip exactly.

use std::fmt::Write as _;

/// Renders `x` with 17 significant digits.
pub fn num(x: f64) -> String {
    if x == 0.0 {
        // avoid "-0"
        return format!("{:.16e}", 0.0f64);
    }
    format!("{x:.16e}")
}

/// An in-memory CSV table with a fixed header.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: &[&'static str]) -> Self {
        Self { header: header.to_vec(), rows: Vec::new() }
    }

    pub fn header(&self) -> &[&'static str] {
        &self.header
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.header.join(","));
        for row in &self.rows {
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }
}
