//! IDX reader for the MNIST training files with 4×4 average pooling.

use std::fs;
use std::path::{Path, PathBuf};

use super::Dataset;
use crate::error::{Error, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;
pub const SIDE: usize = 28;
pub const POOL: usize = 4;
pub const POOLED_SIDE: usize = SIDE / POOL;
pub const CLASSES: usize = 10;

fn be_u32(bytes: &[u8], at: usize) -> Option<u32> {
    bytes.get(at..at + 4).map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
}

fn format_error(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format { path: path.to_path_buf(), reason: reason.into() }
}

/// Raw `u8` images as `(count, rows, cols, pixels)`.
pub fn read_idx_images(path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let bytes = fs::read(path)?;
    let magic = be_u32(&bytes, 0).ok_or_else(|| format_error(path, "truncated header"))?;
    if magic != IMAGES_MAGIC {
        return Err(format_error(path, format!("bad image magic {magic:#010x}")));
    }
    let dims: Vec<usize> = (1..4)
        .map(|k| be_u32(&bytes, 4 * k).map(|v| v as usize))
        .collect::<Option<_>>()
        .ok_or_else(|| format_error(path, "truncated header"))?;
    let (count, rows, cols) = (dims[0], dims[1], dims[2]);
    let body = &bytes[16..];
    if body.len() != count * rows * cols {
        return Err(format_error(path, format!("expected {} pixel bytes, found {}", count * rows * cols, body.len())));
    }
    Ok((count, rows, cols, body.to_vec()))
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = fs::read(path)?;
    let magic = be_u32(&bytes, 0).ok_or_else(|| format_error(path, "truncated header"))?;
    if magic != LABELS_MAGIC {
        return Err(format_error(path, format!("bad label magic {magic:#010x}")));
    }
    let count = be_u32(&bytes, 4).ok_or_else(|| format_error(path, "truncated header"))? as usize;
    let body = &bytes[8..];
    if body.len() != count {
        return Err(format_error(path, format!("expected {count} labels, found {}", body.len())));
    }
    if let Some(bad) = body.iter().find(|&&l| l as usize >= CLASSES) {
        return Err(format_error(path, format!("label {bad} out of range")));
    }
    Ok(body.to_vec())
}

/// Average a 28×28 image over 4×4 blocks and scale to [0, 1].
pub fn pool_image(pixels: &[u8]) -> Vec<f64> {
    let mut out = vec![0.0; POOLED_SIDE * POOLED_SIDE];
    for r in 0..SIDE {
        for c in 0..SIDE {
            out[(r / POOL) * POOLED_SIDE + c / POOL] += pixels[r * SIDE + c] as f64;
        }
    }
    let scale = 1.0 / (255.0 * (POOL * POOL) as f64);
    out.iter_mut().for_each(|v| *v *= scale);
    out
}

pub fn one_hot(label: u8) -> Vec<f64> {
    let mut y = vec![0.0; CLASSES];
    y[label as usize] = 1.0;
    y
}

pub fn load_mnist(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let (count, rows, cols, pixels) = read_idx_images(images_path)?;
    if rows != SIDE || cols != SIDE {
        return Err(format_error(images_path, format!("expected 28x28 images, found {rows}x{cols}")));
    }
    let labels = read_idx_labels(labels_path)?;
    if labels.len() != count {
        return Err(Error::InconsistentData(format!("{count} images but {} labels", labels.len())));
    }
    let mut inputs = Vec::with_capacity(count * POOLED_SIDE * POOLED_SIDE);
    let mut outputs = Vec::with_capacity(count * CLASSES);
    for (k, &label) in labels.iter().enumerate() {
        inputs.extend(pool_image(&pixels[k * SIDE * SIDE..(k + 1) * SIDE * SIDE]));
        outputs.extend(one_hot(label));
    }
    Dataset::from_flat(POOLED_SIDE * POOLED_SIDE, CLASSES, inputs, outputs)
}

/// Training-file paths inside `dir` (the usual uncompressed file names).
pub fn train_files(dir: &Path) -> (PathBuf, PathBuf) {
    (dir.join("train-images-idx3-ubyte"), dir.join("train-labels-idx1-ubyte"))
}

/// Write IDX files; used to build small fixtures.
pub fn write_idx(images_path: &Path, labels_path: &Path, images: &[Vec<u8>], labels: &[u8]) -> Result<()> {
    let mut img = Vec::new();
    img.extend(IMAGES_MAGIC.to_be_bytes());
    img.extend((images.len() as u32).to_be_bytes());
    img.extend((SIDE as u32).to_be_bytes());
    img.extend((SIDE as u32).to_be_bytes());
    for im in images {
        img.extend_from_slice(im);
    }
    fs::write(images_path, img)?;
    let mut lab = Vec::new();
    lab.extend(LABELS_MAGIC.to_be_bytes());
    lab.extend((labels.len() as u32).to_be_bytes());
    lab.extend_from_slice(labels);
    fs::write(labels_path, lab)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(dir: &Path, images: &[Vec<u8>], labels: &[u8]) -> (PathBuf, PathBuf) {
        let (i, l) = (dir.join("img"), dir.join("lab"));
        write_idx(&i, &l, images, labels).unwrap();
        (i, l)
    }

    #[test]
    fn constant_zero_image_and_one_hot() {
        let dir = tempfile::tempdir().unwrap();
        let (i, l) = fixture(dir.path(), &[vec![0; SIDE * SIDE]], &[3]);
        let d = load_mnist(&i, &l).unwrap();
        assert_eq!((d.len(), d.d_in(), d.d_out()), (1, 49, 10));
        assert!(d.input(0).iter().all(|&v| v == 0.0));
        assert_eq!(d.output(0).iter().position(|&v| v == 1.0), Some(3));
        assert_eq!(d.output(0).iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn pooling_preserves_mean() {
        let img: Vec<u8> = (0..SIDE * SIDE).map(|k| ((k * 37 + k / 5) % 256) as u8).collect();
        let pooled = pool_image(&img);
        let mean_orig = img.iter().map(|&v| v as f64 / 255.0).sum::<f64>() / (SIDE * SIDE) as f64;
        let mean_pooled = pooled.iter().sum::<f64>() / pooled.len() as f64;
        assert!((mean_orig - mean_pooled).abs() < 1e-12);
        assert!(pooled.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn wrong_label_magic_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let (i, l) = fixture(dir.path(), &[vec![0; SIDE * SIDE]], &[1]);
        let mut bytes = fs::read(&l).unwrap();
        bytes[3] = 0x03;
        fs::write(&l, bytes).unwrap();
        assert!(matches!(load_mnist(&i, &l), Err(Error::Format { .. })));
    }

    #[test]
    fn count_mismatch_is_inconsistent() {
        let dir = tempfile::tempdir().unwrap();
        let (i, l) = fixture(dir.path(), &vec![vec![0; SIDE * SIDE]; 2], &[1]);
        assert!(matches!(load_mnist(&i, &l), Err(Error::InconsistentData(_))));
    }
}
