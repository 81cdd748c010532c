//! CSV formatting and atomic file output.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Fixed 17-significant-digit scientific formatting used in every CSV.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Joins a row of numbers with commas using [`fmt17`].
pub fn csv_row(values: &[f64]) -> String {
    let mut s = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        s.push_str(&fmt17(*v));
    }
    s.push('\n');
    s
}

/// Writes `contents` to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)
}

/// Reads the named numeric columns of CSV `text` (header required, other
/// columns ignored). Errors are configuration errors.
pub fn read_columns(text: &str, names: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| Error::Config(format!("csv header: {e}")))?.clone();
    let idx: Vec<usize> = names
        .iter()
        .map(|n| {
            header
                .iter()
                .position(|h| h == *n)
                .ok_or_else(|| Error::Config(format!("csv is missing column `{n}`")))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (ln, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Config(format!("csv row {}: {e}", ln + 2)))?;
        let row = idx
            .iter()
            .map(|&i| {
                let field = rec.get(i).unwrap_or("");
                field.parse::<f64>().map_err(|e| Error::Config(format!("csv row {} `{field}`: {e}", ln + 2)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(fmt17(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt17(-2.5), "-2.5000000000000000e0");
        let back: f64 = fmt17(std::f64::consts::PI).parse().unwrap();
        assert_eq!(back, std::f64::consts::PI);
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/a.csv");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn reads_named_columns_in_any_order() {
        let rows = read_columns("s, q1, q2\n0, 1, 2\n1, 3, 4\n", &["q2", "q1"]).unwrap();
        assert_eq!(rows, vec![vec![2.0, 1.0], vec![4.0, 3.0]]);
        assert!(read_columns("a,b\n1,2\n", &["q1"]).is_err());
        assert!(read_columns("q1\nx\n", &["q1"]).is_err());
    }
}
