//! CSV and JSON report writers. CSV output always carries a header row and
//! uses RFC 4180 quoting.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

pub fn csv_string(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        if r.len() != header.len() {
            return Err(Error::Shape(format!("CSV row has {} fields, header has {}", r.len(), header.len())));
        }
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv writer emits UTF-8"))
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let s = csv_string(header, rows)?;
    super::ensure_parent(path)?;
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    super::ensure_parent(path)?;
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Format a float for reports: shortest round-trip representation.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quotes_fields_and_keeps_header() {
        let s = csv_string(&["name", "value"], &[vec!["a,b".into(), "0.5".into()]]).unwrap();
        assert_eq!(s, "name,value\n\"a,b\",0.5\n");
        assert_eq!(csv_string(&["x"], &[]).unwrap(), "x\n");
    }
}
