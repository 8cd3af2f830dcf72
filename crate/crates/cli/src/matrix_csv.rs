//! Headerless numeric CSV for dense matrices, one row per line.

use std::path::Path;

use nalgebra::DMatrix;

use ncs_redteam::{Error, Result};

pub fn write(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    let err = |reason: String| Error::Parse {
        what: path.display().to_string(),
        reason,
    };
    for r in 0..m.nrows() {
        w.write_record(m.row(r).iter().map(|v| v.to_string()))
            .map_err(|e| err(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| err(e.to_string()))?;
    std::fs::write(path, bytes).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn read(path: &Path) -> Result<DMatrix<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    parse(&text).map_err(|reason| Error::Parse {
        what: path.display().to_string(),
        reason,
    })
}

fn parse(text: &str) -> std::result::Result<DMatrix<f64>, String> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| format!("row {}: bad number `{f}`", i + 1)))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    let n = rows.len();
    if n == 0 {
        return Err("empty matrix".into());
    }
    let m = rows[0].len();
    if let Some(i) = rows.iter().position(|r| r.len() != m) {
        return Err(format!("row {} has {} entries, expected {m}", i + 1, rows[i].len()));
    }
    Ok(DMatrix::from_fn(n, m, |r, c| rows[r][c]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let m = DMatrix::from_fn(3, 2, |r, c| (r as f64 + 0.1) / (c as f64 + 3.0));
        write(&p, &m).unwrap();
        assert_eq!(read(&p).unwrap(), m);
    }

    #[test]
    fn ragged_rows_are_rejected() {
        assert!(parse("1,2\n3\n").is_err());
        assert!(parse("").is_err());
        assert!(parse("1,x\n").is_err());
    }
}
