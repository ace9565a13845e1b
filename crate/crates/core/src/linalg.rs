//! Small dense helpers shared by the predictor and the solvers.

use nalgebra::{DMatrix, DVector};

/// Relative singular-value cutoff used for every pseudo-inverse.
pub const PINV_RCOND: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct Pinv {
    pub matrix: DMatrix<f64>,
    pub rank: usize,
    pub singular_values: Vec<f64>,
}

impl Pinv {
    pub fn condition_number(&self) -> f64 {
        let max = self.singular_values.iter().cloned().fold(0.0, f64::max);
        let min = self
            .singular_values
            .iter()
            .cloned()
            .filter(|s| *s > max * PINV_RCOND)
            .fold(f64::INFINITY, f64::min);
        if min.is_finite() && min > 0.0 {
            max / min
        } else {
            f64::INFINITY
        }
    }
}

/// SVD-based minimum-norm pseudo-inverse; singular values below
/// `σ_max · PINV_RCOND` are treated as zero.
pub fn pinv(m: &DMatrix<f64>) -> Pinv {
    if m.nrows() < m.ncols() {
        let t = pinv(&m.transpose());
        return Pinv {
            matrix: t.matrix.transpose(),
            rank: t.rank,
            singular_values: t.singular_values,
        };
    }
    if m.nrows() > m.ncols() {
        // Householder QR first; the SVD then only sees the square factor,
        // which sidesteps convergence trouble on long thin matrices.
        let qr = m.clone().qr();
        let (q, r) = (qr.q(), qr.r());
        let inner = pinv(&r);
        return Pinv {
            matrix: inner.matrix * q.transpose(),
            rank: inner.rank,
            singular_values: inner.singular_values,
        };
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let sv: Vec<f64> = svd.singular_values.iter().cloned().collect();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let cutoff = smax * PINV_RCOND;
    let mut rank = 0;
    let mut s_inv = DVector::zeros(sv.len());
    for (i, s) in sv.iter().enumerate() {
        if *s > cutoff && *s > 0.0 {
            s_inv[i] = 1.0 / s;
            rank += 1;
        }
    }
    // pinv = V Σ⁺ Uᵀ
    let mut vs = v_t.transpose();
    for (j, mut col) in vs.column_iter_mut().enumerate() {
        col *= s_inv[j];
    }
    Pinv {
        matrix: vs * u.transpose(),
        rank,
        singular_values: sv,
    }
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinv_of_full_rank_square_is_inverse() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let p = pinv(&m);
        assert_eq!(p.rank, 2);
        let eye = &m * &p.matrix;
        assert!((eye - DMatrix::identity(2, 2)).amax() < 1e-14);
    }

    #[test]
    fn pinv_handles_rank_deficiency_and_wide_shapes() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        let p = pinv(&m);
        assert_eq!(p.rank, 1);
        assert_eq!(p.matrix.shape(), (3, 2));
        // Moore-Penrose: M P M = M
        let back = &m * &p.matrix * &m;
        assert!((back - &m).amax() < 1e-12);
        assert!(p.condition_number().is_finite());
    }

    #[test]
    fn tall_matrices_go_through_qr() {
        let m = DMatrix::from_fn(40, 3, |i, j| ((i * 7 + j * 3) % 11) as f64 - 5.0 + (j as f64) * 0.1);
        let p = pinv(&m);
        assert_eq!(p.rank, 3);
        let eye = &p.matrix * &m;
        assert!((eye - DMatrix::identity(3, 3)).amax() < 1e-12);
    }
}
