//! CSV/JSON conventions shared by all artifacts: header row, `.` decimal
//! separator, 17 significant digits so every float round-trips exactly.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Short provenance tag for the parameter vector a matrix was evaluated at.
pub fn theta_hash(theta: &[f64]) -> String {
    let bytes: Vec<u8> = theta.iter().flat_map(|t| t.to_le_bytes()).collect();
    sha256_hex(&bytes)[..16].to_string()
}

/// Matrix CSV: first line `rows,cols,symbol,theta_hash`, then one line per row.
pub fn write_matrix_csv(path: &Path, m: &Mat, symbol: &str, theta: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{},{},{},{}", m.nrows(), m.ncols(), symbol, theta_hash(theta))?;
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| fmt_f64(m[(r, c)])).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFile {
    pub symbol: String,
    pub theta_hash: String,
    pub matrix: Mat,
}

pub fn read_matrix_csv(path: &Path) -> Result<MatrixFile> {
    let fmt_err = |reason: String| Error::Format { path: path.to_path_buf(), reason };
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| fmt_err("empty file".into()))?.split(',').collect();
    if header.len() != 4 {
        return Err(fmt_err("header must be rows,cols,symbol,theta_hash".into()));
    }
    let rows: usize = header[0].parse().map_err(|_| fmt_err("bad row count".into()))?;
    let cols: usize = header[1].parse().map_err(|_| fmt_err("bad column count".into()))?;
    let mut data = Vec::with_capacity(rows * cols);
    for line in lines.filter(|l| !l.trim().is_empty()) {
        for field in line.split(',') {
            data.push(field.trim().parse::<f64>().map_err(|e| fmt_err(e.to_string()))?);
        }
    }
    if data.len() != rows * cols {
        return Err(fmt_err(format!("expected {} values, found {}", rows * cols, data.len())));
    }
    Ok(MatrixFile {
        symbol: header[2].to_string(),
        theta_hash: header[3].to_string(),
        matrix: Mat::from_row_slice(rows, cols, &data),
    })
}

/// Plain table with a header row.
pub fn write_table(path: &Path, headers: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", headers.join(","))?;
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let fmt_err = |reason: String| Error::Format { path: path.to_path_buf(), reason };
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let headers: Vec<String> =
        lines.next().ok_or_else(|| fmt_err("empty file".into()))?.split(',').map(str::to_string).collect();
    let mut rows = Vec::new();
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let row: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| fmt_err(e.to_string()))?;
        if row.len() != headers.len() {
            return Err(fmt_err("row width differs from header".into()));
        }
        rows.push(row);
    }
    Ok((headers, rows))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Serde adapter: matrices as row-major nested arrays.
pub mod mat_rows {
    use super::*;

    pub fn serialize<S: Serializer>(m: &Mat, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Mat, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        let nr = rows.len();
        let nc = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != nc) {
            return Err(serde::de::Error::custom("ragged matrix rows"));
        }
        Ok(Mat::from_row_iterator(nr, nc, rows.into_iter().flatten()))
    }
}

/// Serde adapter: vectors as plain arrays.
pub mod vec_plain {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Vector, s: S) -> std::result::Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vector, D::Error> {
        let v: Vec<f64> = Vec::deserialize(d)?;
        Ok(Vector::from_vec(v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_csv_round_trip_is_bit_exact() {
        let m = Mat::from_row_slice(2, 3, &[1.0 / 3.0, -2.5e-300, 7.0, f64::MIN_POSITIVE, 0.1 + 0.2, -0.0]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write_matrix_csv(&p, &m, "sigma", &[1.0, 2.0]).unwrap();
        let back = read_matrix_csv(&p).unwrap();
        assert_eq!(back.symbol, "sigma");
        assert_eq!(back.theta_hash, theta_hash(&[1.0, 2.0]));
        for (a, b) in back.matrix.iter().zip(m.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_table(&p, &["a", "b"], &[vec![1.0, 2.0], vec![std::f64::consts::PI, -1e-20]]).unwrap();
        let (h, rows) = read_table(&p).unwrap();
        assert_eq!(h, vec!["a", "b"]);
        assert_eq!(rows[1][0], std::f64::consts::PI);
    }
}
