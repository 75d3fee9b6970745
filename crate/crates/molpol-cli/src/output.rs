//! Deterministic run artifacts: tabular CSV/JSON encoding and atomic file
//! writes.
//!
//! Every float in a CSV is printed with 17 significant digits (`{:.16e}`),
//! so values survive a round trip and repeated runs produce byte-identical
//! files. Files land via a temporary sibling plus rename, so readers never
//! observe a partially written artifact.

use std::fs;
use std::path::Path;

use crate::config::CliError;

/// One table cell; the encoding differs between CSV and JSON output.
#[derive(Debug, Clone)]
pub enum Cell {
    Num(f64),
    Text(String),
    Flag(bool),
}

/// A rectangular task result with a fixed column order.
#[derive(Debug, Clone)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Table {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// CSV bytes: header always present, comma separator, `\n` endings.
    pub fn csv(&self) -> Vec<u8> {
        let mut out = String::new();
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let fields: Vec<String> = row.iter().map(cell_csv).collect();
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out.into_bytes()
    }

    /// JSON bytes: `{"columns": [...], "rows": [[...]]}`.
    pub fn json(&self) -> Vec<u8> {
        let rows: Vec<Vec<serde_json::Value>> = self
            .rows
            .iter()
            .map(|row| row.iter().map(cell_json).collect())
            .collect();
        let doc = serde_json::json!({
            "columns": self.columns,
            "rows": rows,
        });
        let mut bytes = serde_json::to_vec_pretty(&doc).expect("table serialization");
        bytes.push(b'\n');
        bytes
    }
}

/// 17-significant-digit float formatting used for all CSV numbers.
pub fn format_num(x: f64) -> String {
    format!("{x:.16e}")
}

fn cell_csv(cell: &Cell) -> String {
    match cell {
        Cell::Num(x) => format_num(*x),
        Cell::Text(s) => s.clone(),
        Cell::Flag(b) => b.to_string(),
    }
}

fn cell_json(cell: &Cell) -> serde_json::Value {
    match cell {
        Cell::Num(x) => serde_json::json!(x),
        Cell::Text(s) => serde_json::json!(s),
        Cell::Flag(b) => serde_json::json!(b),
    }
}

/// Write every artifact under `dir`, each through a temporary sibling and a
/// rename so no partial file is ever visible.
pub fn write_all(dir: &Path, files: &[(String, Vec<u8>)]) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    for (name, bytes) in files {
        let target = dir.join(name);
        let tmp = dir.join(format!(".{name}.tmp"));
        fs::write(&tmp, bytes)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", tmp.display())))?;
        fs::rename(&tmp, &target).map_err(|e| {
            CliError::Io(format!("cannot move {} into place: {e}", target.display()))
        })?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_header_and_unix_endings() {
        let mut t = Table::new(&["sweep_value", "rate"]);
        t.push(vec![Cell::Num(0.5), Cell::Num(1.0 / 3.0)]);
        let text = String::from_utf8(t.csv()).unwrap();
        assert_eq!(
            text,
            "sweep_value,rate\n5.0000000000000000e-1,3.3333333333333331e-1\n"
        );
        assert!(!text.contains('\r'));
    }

    #[test]
    fn empty_table_still_has_a_header() {
        let t = Table::new(&["name", "measured"]);
        assert_eq!(String::from_utf8(t.csv()).unwrap(), "name,measured\n");
    }

    #[test]
    fn numbers_round_trip_through_csv() {
        for &x in &[0.1, 1.0 / 3.0, 2.5e-17, 123456.789, -0.0015] {
            let s = format_num(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "formatted as {s}");
        }
    }

    #[test]
    fn json_table_carries_mixed_cells() {
        let mut t = Table::new(&["name", "measured", "pass"]);
        t.push(vec![
            Cell::Text("check".into()),
            Cell::Num(1e-12),
            Cell::Flag(true),
        ]);
        let doc: serde_json::Value = serde_json::from_slice(&t.json()).unwrap();
        assert_eq!(doc["columns"][2], "pass");
        assert_eq!(doc["rows"][0][2], serde_json::json!(true));
    }

    #[test]
    fn write_all_is_atomic_per_file() {
        let dir = tempfile::tempdir().unwrap();
        let files = vec![("a.csv".to_string(), b"x\n".to_vec())];
        write_all(dir.path(), &files).unwrap();
        assert_eq!(fs::read(dir.path().join("a.csv")).unwrap(), b"x\n");
        // No stray temporaries once the write completes.
        let leftovers: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .filter(|n| n.to_string_lossy().ends_with(".tmp"))
            .collect();
        assert!(leftovers.is_empty());
    }
}
