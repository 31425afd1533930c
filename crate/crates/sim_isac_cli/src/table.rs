//! Fixed-header CSV tables with a locale-free numeric format.

use std::fmt::Write as _;

/// One cell. Reals are printed with 9 significant digits.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Real(f64),
    Int(i64),
    Flag(bool),
    Text(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Cell {
        Cell::Real(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Cell {
        Cell::Int(x as i64)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Cell {
        Cell::Int(x as i64)
    }
}

impl From<u32> for Cell {
    fn from(x: u32) -> Cell {
        Cell::Int(x as i64)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Cell {
        Cell::Flag(x)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Cell {
        Cell::Text(x.to_string())
    }
}

/// `x` with 9 significant digits in scientific notation, e.g. `-4.12345678e-1`.
pub fn format_real(x: f64) -> String {
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:.8e}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    /// File name inside the output directory.
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

#[derive(Debug, thiserror::Error)]
pub enum TableError {
    #[error("{table}: row {row} has {got} cells, header has {want}")]
    Width { table: String, row: usize, got: usize, want: usize },
    #[error("{table}: non-finite value in row {row}, column {column}")]
    NonFinite { table: String, row: usize, column: &'static str },
}

impl Table {
    pub fn new(name: &str, header: &[&'static str]) -> Table {
        Table { name: name.to_string(), header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        self.rows.push(row);
    }

    /// Index of a header column.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| *h == name)
    }

    /// Real values of one column (integers are widened).
    pub fn reals(&self, name: &str) -> Vec<f64> {
        let Some(i) = self.column(name) else { return Vec::new() };
        self.rows
            .iter()
            .filter_map(|r| match &r[i] {
                Cell::Real(x) => Some(*x),
                Cell::Int(x) => Some(*x as f64),
                Cell::Flag(b) => Some(*b as u8 as f64),
                Cell::Text(_) => None,
            })
            .collect()
    }

    /// Renders the table; NaN and ±∞ are rejected.
    pub fn render(&self) -> Result<String, TableError> {
        let mut out = self.header.join(",");
        out.push('\n');
        for (ri, row) in self.rows.iter().enumerate() {
            if row.len() != self.header.len() {
                return Err(TableError::Width {
                    table: self.name.clone(),
                    row: ri,
                    got: row.len(),
                    want: self.header.len(),
                });
            }
            for (ci, cell) in row.iter().enumerate() {
                if ci > 0 {
                    out.push(',');
                }
                match cell {
                    Cell::Real(x) if !x.is_finite() => {
                        return Err(TableError::NonFinite { table: self.name.clone(), row: ri, column: self.header[ci] })
                    }
                    Cell::Real(x) => out.push_str(&format_real(*x)),
                    Cell::Int(x) => {
                        let _ = write!(out, "{x}");
                    }
                    Cell::Flag(b) => out.push(if *b { '1' } else { '0' }),
                    Cell::Text(t) => out.push_str(t),
                }
            }
            out.push('\n');
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(format_real(1.0), "1.00000000e0");
        assert_eq!(format_real(-0.000123456789123), "-1.23456789e-4");
        assert_eq!(format_real(-0.0), "0.00000000e0");
    }

    #[test]
    fn nan_is_rejected() {
        let mut t = Table::new("t.csv", &["a", "b"]);
        t.push(vec![Cell::Int(1), Cell::Real(f64::NAN)]);
        assert!(matches!(t.render(), Err(TableError::NonFinite { column: "b", .. })));
    }

    #[test]
    fn width_is_checked() {
        let mut t = Table::new("t.csv", &["a"]);
        t.push(vec![Cell::Int(1), Cell::Flag(true)]);
        assert!(t.render().is_err());
    }
}
