//! In-memory trajectories and their file formats.
//!
//! Binary layout, all integers and floats little-endian:
//! `b"SGDTRAJ1"`, u64 N, u64 record count, u64 header length, a JSON header
//! holding the engine config and final θ, then the step column followed by one
//! column per parameter, each as f64.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EngineConfig, TrajectorySink};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SGDTRAJ1";

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub config: EngineConfig,
    pub theta_final: Vec<f64>,
    n_params: usize,
    steps: Vec<u64>,
    thetas: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: EngineConfig,
    theta_final: Vec<f64>,
}

impl TrajectorySink for Trajectory {
    fn record(&mut self, step: u64, theta: &[f64]) {
        debug_assert_eq!(theta.len(), self.n_params);
        self.steps.push(step);
        self.thetas.extend_from_slice(theta);
    }
}

impl Trajectory {
    pub fn new(n_params: usize, config: EngineConfig) -> Self {
        Self { config, theta_final: Vec::new(), n_params, steps: Vec::new(), thetas: Vec::new() }
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn steps(&self) -> &[u64] {
        &self.steps
    }

    pub fn theta(&self, k: usize) -> &[f64] {
        &self.thetas[k * self.n_params..(k + 1) * self.n_params]
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &[f64])> + '_ {
        self.steps.iter().copied().zip(self.thetas.chunks_exact(self.n_params.max(1)))
    }

    /// Replays the records into another sink.
    pub fn replay<S: TrajectorySink>(&self, sink: &mut S) {
        for (s, th) in self.iter() {
            sink.record(s, th);
        }
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let header = serde_json::to_vec(&Header { config: self.config.clone(), theta_final: self.theta_final.clone() })?;
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        for v in [self.n_params as u64, self.len() as u64, header.len() as u64] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&header)?;
        for &s in &self.steps {
            w.write_all(&(s as f64).to_le_bytes())?;
        }
        for j in 0..self.n_params {
            for k in 0..self.len() {
                w.write_all(&self.thetas[k * self.n_params + j].to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let bad = |reason: &str| Error::Format { path: path.to_path_buf(), reason: reason.into() };
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != MAGIC {
            return Err(bad("not a trajectory file"));
        }
        let mut word = || -> Result<u64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b).map_err(|_| bad("truncated header"))?;
            Ok(u64::from_le_bytes(b))
        };
        let (n, count, hlen) = (word()? as usize, word()? as usize, word()? as usize);
        let mut hbuf = vec![0u8; hlen];
        r.read_exact(&mut hbuf).map_err(|_| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(&hbuf).map_err(|e| bad(&format!("bad header: {e}")))?;
        let mut body = Vec::new();
        r.read_to_end(&mut body)?;
        if body.len() != 8 * count * (n + 1) {
            return Err(bad(&format!("expected {} body bytes, found {}", 8 * count * (n + 1), body.len())));
        }
        let col: Vec<f64> = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let steps = col[..count].iter().map(|&s| s as u64).collect();
        let mut thetas = vec![0.0; n * count];
        for j in 0..n {
            for k in 0..count {
                thetas[k * n + j] = col[(j + 1) * count + k];
            }
        }
        Ok(Self { config: header.config, theta_final: header.theta_final, n_params: n, steps, thetas })
    }

    /// `step,theta0,…` with full-precision floats.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        let cols: Vec<String> = (0..self.n_params).map(|j| format!("theta{j}")).collect();
        writeln!(w, "step,{}", cols.join(","))?;
        for (s, th) in self.iter() {
            let vals: Vec<String> = th.iter().map(|v| crate::io::fmt_f64(*v)).collect();
            writeln!(w, "{s},{}", vals.join(","))?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engines::Mode;

    fn sample() -> Trajectory {
        let mut t = Trajectory::new(3, EngineConfig::new(Mode::SgdWr, 0.1, 2, 5, 7));
        for k in 0..5u64 {
            t.record(k, &[k as f64, -(k as f64) / 3.0, 1e-300 * k as f64]);
        }
        t.theta_final = vec![4.0, -4.0 / 3.0, 4e-300];
        t
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.bin");
        let t = sample();
        t.write_binary(&p).unwrap();
        assert_eq!(Trajectory::read_binary(&p).unwrap(), t);
    }

    #[test]
    fn truncated_binary_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.bin");
        sample().write_binary(&p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(Trajectory::read_binary(&p), Err(Error::Format { .. })));
        std::fs::write(&p, b"garbage!").unwrap();
        assert!(matches!(Trajectory::read_binary(&p), Err(Error::Format { .. })));
    }

    #[test]
    fn csv_has_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        sample().write_csv(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "step,theta0,theta1,theta2");
        assert_eq!(lines.len(), 6);
        let last: Vec<f64> = lines[5].split(',').skip(1).map(|v| v.parse().unwrap()).collect();
        assert_eq!(last, sample().theta(4));
    }
}
