//! Whitespace-separated column tables (`.dat`) for gnuplot-style tools.
//!
//! Layout: `#` comment lines carrying the resolved run configuration, one
//! `# columns: a b c` line naming the columns, then one row per line.

use std::fmt::Write as _;
use std::path::Path;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatTable {
    /// Free-form header lines, written as `# line`.
    pub comments: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl DatTable {
    pub fn new(columns: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            comments: Vec::new(),
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.comments {
            let _ = writeln!(out, "# {c}");
        }
        let _ = writeln!(out, "# columns: {}", self.columns.join(" "));
        for row in &self.rows {
            let mut first = true;
            for v in row {
                if !first {
                    out.push(' ');
                }
                first = false;
                let _ = write!(out, "{v:.9}");
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut table = DatTable::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(cols) = rest.strip_prefix("columns:") {
                    table.columns = cols.split_whitespace().map(String::from).collect();
                } else {
                    table.comments.push(rest.to_string());
                }
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(i + 1, format!("bad number: {e}")))?;
            if !table.columns.is_empty() && row.len() != table.columns.len() {
                return Err(Error::parse(
                    i + 1,
                    format!(
                        "expected {} columns, found {}",
                        table.columns.len(),
                        row.len()
                    ),
                ));
            }
            table.rows.push(row);
        }
        if table.columns.is_empty() {
            let width = table.rows.first().map_or(0, Vec::len);
            table.columns = (1..=width).map(|i| format!("c{i}")).collect();
        }
        Ok(table)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_and_parse() {
        let mut t = DatTable::new(["t", "Q"]);
        t.comments.push("seed=1".into());
        t.rows.push(vec![0.0, 1.5]);
        t.rows.push(vec![0.5, 2.25]);
        let text = t.render();
        assert!(text.starts_with("# seed=1\n# columns: t Q\n0.000000000 1.500000000\n"));
        assert_eq!(DatTable::parse(&text).unwrap(), t);
        assert_eq!(t.column("Q").unwrap(), vec![1.5, 2.25]);
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let err = DatTable::parse("# columns: a b\n1 2\n3\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
    }
}
