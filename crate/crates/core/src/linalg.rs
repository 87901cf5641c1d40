//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// `(A + Aᵀ)/2`.
pub fn symmetrize(a: &Mat) -> Mat {
    (a + a.transpose()) * 0.5
}

/// Eigen-decomposition of the symmetric part of `a`, eigenvalues ascending.
pub fn sym_eigen(a: &Mat) -> (Vector, Mat) {
    let eig = SymmetricEigen::new(symmetrize(a));
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = Vector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = Mat::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

/// Pseudo-inverse of a symmetric PSD matrix; eigenvalues below
/// `rel_cutoff * λ_max` are dropped. Returns the inverse and the number of
/// dropped directions.
pub fn pinv_sym(a: &Mat, rel_cutoff: f64) -> (Mat, usize) {
    let (values, vectors) = sym_eigen(a);
    let n = values.len();
    let lmax = values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let mut inv_diag = Vector::zeros(n);
    let mut dropped = 0;
    for k in 0..n {
        if lmax > 0.0 && values[k] > rel_cutoff * lmax {
            inv_diag[k] = 1.0 / values[k];
        } else {
            dropped += 1;
        }
    }
    let inv = &vectors * Mat::from_diagonal(&inv_diag) * vectors.transpose();
    (symmetrize(&inv), dropped)
}

pub fn min_eigenvalue(a: &Mat) -> f64 {
    sym_eigen(a).0[0]
}

/// Frobenius-norm relative difference `‖a − b‖/‖b‖` (absolute if `b = 0`).
pub fn rel_diff(a: &Mat, b: &Mat) -> f64 {
    let nb = b.norm();
    let d = (a - b).norm();
    if nb == 0.0 {
        d
    } else {
        d / nb
    }
}

pub fn max_abs(a: &Mat) -> f64 {
    a.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

/// Neumaier compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Element-wise compensated accumulator for matrices.
#[derive(Debug, Clone)]
pub struct CompensatedMatrix {
    rows: usize,
    cols: usize,
    cells: Vec<CompensatedSum>,
}

impl CompensatedMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, cells: vec![CompensatedSum::default(); rows * cols] }
    }

    pub fn add(&mut self, r: usize, c: usize, x: f64) {
        self.cells[c * self.rows + r].add(x);
    }

    pub fn value(&self) -> Mat {
        Mat::from_fn(self.rows, self.cols, |r, c| self.cells[c * self.rows + r].value())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinv_drops_null_direction() {
        let a = Mat::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let (inv, dropped) = pinv_sym(&a, 1e-12);
        assert_eq!(dropped, 1);
        // A·A⁺·A = A
        assert!(rel_diff(&(&a * &inv * &a), &a) < 1e-12);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::default();
        s.add(1e16);
        for _ in 0..1000 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 1000.0);
    }

    #[test]
    fn eigen_sorted_ascending() {
        let a = Mat::from_row_slice(3, 3, &[3.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0]);
        let (v, o) = sym_eigen(&a);
        assert_eq!(v.as_slice(), &[1.0, 2.0, 3.0]);
        assert!(rel_diff(&(&o * Mat::from_diagonal(&v) * o.transpose()), &a) < 1e-14);
    }
}
