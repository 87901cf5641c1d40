use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::rng;

/// `M` input/output pairs stored as flat sample-major buffers: sample `i`
/// occupies `inputs[i*d_in..(i+1)*d_in]`, so one sample's features are
/// contiguous for the per-sample gradient loop.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    d_in: usize,
    d_out: usize,
    inputs: Vec<f64>,
    outputs: Vec<f64>,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, outputs: Vec<Vec<f64>>) -> Result<Self> {
        if inputs.is_empty() || inputs.len() != outputs.len() {
            return Err(invalid(format!(
                "dataset needs equal, non-zero input/output counts (got {} and {})",
                inputs.len(),
                outputs.len()
            )));
        }
        let d_in = inputs[0].len();
        let d_out = outputs[0].len();
        if inputs.iter().any(|x| x.len() != d_in) || outputs.iter().any(|y| y.len() != d_out) {
            return Err(invalid("ragged dataset rows"));
        }
        Ok(Self {
            d_in,
            d_out,
            inputs: inputs.concat(),
            outputs: outputs.concat(),
        })
    }

    pub fn from_flat(d_in: usize, d_out: usize, inputs: Vec<f64>, outputs: Vec<f64>) -> Result<Self> {
        if d_in == 0 || d_out == 0 || inputs.is_empty() {
            return Err(invalid("empty dataset"));
        }
        if !inputs.len().is_multiple_of(d_in) || !outputs.len().is_multiple_of(d_out) || inputs.len() / d_in != outputs.len() / d_out {
            return Err(invalid("flat buffers do not describe the same number of samples"));
        }
        Ok(Self { d_in, d_out, inputs, outputs })
    }

    /// Number of samples `M`.
    pub fn len(&self) -> usize {
        self.inputs.len() / self.d_in
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.d_in..(i + 1) * self.d_in]
    }

    pub fn output(&self, i: usize) -> &[f64] {
        &self.outputs[i * self.d_out..(i + 1) * self.d_out]
    }

    /// Keep only the listed samples, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.iter().any(|&i| i >= self.len()) {
            return Err(invalid("subset index out of range"));
        }
        let inputs = indices.iter().flat_map(|&i| self.input(i).iter().copied()).collect();
        let outputs = indices.iter().flat_map(|&i| self.output(i).iter().copied()).collect();
        Self::from_flat(self.d_in, self.d_out, inputs, outputs)
    }

    /// One row per sample: inputs `x0..`, then outputs `y0..`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        let header: Vec<String> = (0..self.d_in)
            .map(|k| format!("x{k}"))
            .chain((0..self.d_out).map(|k| format!("y{k}")))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.len() {
            let row: Vec<String> = self
                .input(i)
                .iter()
                .chain(self.output(i))
                .map(|v| crate::io::fmt_f64(*v))
                .collect();
            writeln!(w, "{}", row.join(","))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let fmt_err = |reason: String| Error::Format { path: path.to_path_buf(), reason };
        let reader = BufReader::new(File::open(path)?);
        let mut lines = reader.lines();
        let header = lines.next().ok_or_else(|| fmt_err("empty file".into()))??;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let d_in = cols.iter().filter(|c| c.starts_with('x')).count();
        let d_out = cols.iter().filter(|c| c.starts_with('y')).count();
        if d_in + d_out != cols.len() || d_in == 0 || d_out == 0 {
            return Err(fmt_err(format!("unexpected header {header:?}")));
        }
        let mut inputs = Vec::new();
        let mut outputs = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| fmt_err(format!("line {}: {e}", lineno + 2)))?;
            if vals.len() != cols.len() {
                return Err(fmt_err(format!("line {}: expected {} fields", lineno + 2, cols.len())));
            }
            inputs.extend_from_slice(&vals[..d_in]);
            outputs.extend_from_slice(&vals[d_in..]);
        }
        Self::from_flat(d_in, d_out, inputs, outputs)
    }
}

/// The 1-D regression set: `x_i = -3 + 0.03 i` (0-based), `y_i = exp(-x_i²) + ε z_i`.
pub fn gen_regression_dataset(m: usize, epsilon: f64, seed: u64) -> Result<Dataset> {
    if m == 0 {
        return Err(invalid("regression dataset needs M >= 1"));
    }
    if !(epsilon >= 0.0) {
        return Err(invalid("noise sd must be non-negative"));
    }
    let mut rng = rng::run_rng(seed, 0);
    let mut xs = Vec::with_capacity(m);
    let mut ys = Vec::with_capacity(m);
    for i in 0..m {
        let x = -3.0 + 0.03 * i as f64;
        let z: f64 = StandardNormal.sample(&mut rng);
        xs.push(x);
        ys.push((-x * x).exp() + epsilon * z);
    }
    Dataset::from_flat(1, 1, xs, ys)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_endpoints() {
        let d = gen_regression_dataset(200, 0.1, 1).unwrap();
        assert_eq!(d.len(), 200);
        assert!((d.input(0)[0] + 3.0).abs() < 1e-15);
        assert!((d.input(199)[0] - 2.97).abs() < 1e-12);
    }

    #[test]
    fn single_noiseless_point() {
        let d = gen_regression_dataset(1, 0.0, 99).unwrap();
        assert_eq!(d.input(0), &[-3.0]);
        assert_eq!(d.output(0), &[(-9.0f64).exp()]);
    }

    #[test]
    fn noise_sd_near_epsilon() {
        let d = gen_regression_dataset(200, 0.1, 5).unwrap();
        let r: Vec<f64> = (0..200).map(|i| d.output(i)[0] - (-d.input(i)[0].powi(2)).exp()).collect();
        let mean = r.iter().sum::<f64>() / 200.0;
        let sd = (r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 199.0).sqrt();
        assert!((0.08..=0.12).contains(&sd), "sd = {sd}");
    }

    #[test]
    fn zero_count_rejected() {
        assert!(matches!(gen_regression_dataset(0, 0.1, 1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn deterministic_given_seed() {
        assert_eq!(gen_regression_dataset(50, 0.1, 3).unwrap(), gen_regression_dataset(50, 0.1, 3).unwrap());
        assert_ne!(gen_regression_dataset(50, 0.1, 3).unwrap(), gen_regression_dataset(50, 0.1, 4).unwrap());
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let d = gen_regression_dataset(20, 0.1, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        d.write_csv(&p).unwrap();
        assert_eq!(Dataset::read_csv(&p).unwrap(), d);
    }
}
