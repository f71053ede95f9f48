//! Small dense linear-algebra kernels shared across the crate.
//!
//! Everything here works on `nalgebra::DMatrix<f64>`; the matrices in this
//! problem class are at most ~10x10, so clarity wins over blocking tricks.

use nalgebra::{DMatrix, DVector};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// `(M + Mᵀ)/2`.
pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

pub fn all_finite(m: &Mat) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &Mat) -> Vec<f64> {
    match m.nrows() {
        0 => return Vec::new(),
        1 => return vec![m[(0, 0)]],
        // closed form; the sampling checks evaluate millions of 2x2 forms
        2 => {
            let (a, d) = (m[(0, 0)], m[(1, 1)]);
            let b = 0.5 * (m[(0, 1)] + m[(1, 0)]);
            let mid = 0.5 * (a + d);
            let r = (0.5 * (a - d)).hypot(b);
            return vec![mid - r, mid + r];
        }
        _ => {}
    }
    let eig = symmetrize(m).symmetric_eigen();
    let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn max_eigenvalue(m: &Mat) -> f64 {
    sym_eigenvalues(m).last().copied().unwrap_or(f64::NEG_INFINITY)
}

pub fn min_eigenvalue(m: &Mat) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(f64::INFINITY)
}

/// Strict negative definiteness, decided by eigenvalues.
pub fn is_negative_definite(m: &Mat) -> bool {
    max_eigenvalue(m) < 0.0
}

pub fn is_positive_definite(m: &Mat) -> bool {
    m.is_square() && m.nrows() > 0 && min_eigenvalue(m) > 0.0
}

/// Induced 2-norm (largest singular value).
pub fn spectral_norm(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Symmetric positive definite square root via eigendecomposition.
pub fn spd_sqrt(m: &Mat) -> Option<Mat> {
    let eig = symmetrize(m).symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return None;
    }
    let d = Mat::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    Some(symmetrize(&(&eig.eigenvectors * d * eig.eigenvectors.transpose())))
}

/// Inverse of the SPD square root.
pub fn spd_inv_sqrt(m: &Mat) -> Option<Mat> {
    let eig = symmetrize(m).symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return None;
    }
    let d = Mat::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    Some(symmetrize(&(&eig.eigenvectors * d * eig.eigenvectors.transpose())))
}

/// Inverse of an SPD matrix, re-projected onto the symmetric subspace.
pub fn spd_inverse(m: &Mat) -> Option<Mat> {
    let chol = symmetrize(m).cholesky()?;
    Some(symmetrize(&chol.inverse()))
}

/// `log det` of an SPD matrix, `None` if the Cholesky factorization fails.
pub fn logdet_spd(m: &Mat) -> Option<f64> {
    let chol = symmetrize(m).cholesky()?;
    let l = chol.l_dirty();
    Some(2.0 * (0..m.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>())
}

/// Assemble a symmetric matrix from a square grid of blocks given in the
/// upper triangle (row-major); `None` entries are zero. Lower blocks are
/// filled with transposes.
pub fn assemble_symmetric(sizes: &[usize], upper: &[Vec<Option<Mat>>]) -> Mat {
    let dim: usize = sizes.iter().sum();
    let offsets: Vec<usize> = sizes
        .iter()
        .scan(0, |acc, &s| {
            let o = *acc;
            *acc += s;
            Some(o)
        })
        .collect();
    let mut out = Mat::zeros(dim, dim);
    for (i, row) in upper.iter().enumerate() {
        for (j, blk) in row.iter().enumerate() {
            if j < i {
                continue;
            }
            let Some(b) = blk else { continue };
            assert_eq!(b.shape(), (sizes[i], sizes[j]), "block ({i},{j}) has wrong shape");
            out.view_mut((offsets[i], offsets[j]), b.shape()).copy_from(b);
            if i != j {
                out.view_mut((offsets[j], offsets[i]), (sizes[j], sizes[i]))
                    .copy_from(&b.transpose());
            }
        }
    }
    out
}

/// Row-major nested vectors.
pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Build a matrix from row-major nested vectors. Ragged input yields `None`.
pub fn from_rows(rows: &[Vec<f64>]) -> Option<Mat> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return None;
    }
    Some(Mat::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn sqrt_squares_back() {
        let q = dmatrix![4.0, 1.0; 1.0, 3.0];
        let r = spd_sqrt(&q).unwrap();
        assert!((&r * &r - &q).norm() < 1e-12);
        let ri = spd_inv_sqrt(&q).unwrap();
        assert!((&ri * &r - Mat::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn closed_form_2x2_matches_iterative() {
        for m in [
            dmatrix![4.0, 1.0; 1.0, 3.0],
            dmatrix![-1e-3, 7.0; 7.0, 2e5],
            dmatrix![1.0, 0.0; 0.0, 1.0],
            dmatrix![108.38, 186.47; 186.47, 321.82],
        ] {
            let ours = sym_eigenvalues(&m);
            let mut reference: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
            reference.sort_by(f64::total_cmp);
            let scale = m.amax();
            for (a, b) in ours.iter().zip(&reference) {
                assert!((a - b).abs() <= 1e-13 * scale, "{ours:?} vs {reference:?}");
            }
        }
    }

    #[test]
    fn sqrt_rejects_indefinite() {
        assert!(spd_sqrt(&dmatrix![1.0, 0.0; 0.0, -1.0]).is_none());
    }

    #[test]
    fn assemble_mirrors_upper_blocks() {
        let a = dmatrix![1.0];
        let b = dmatrix![2.0, 3.0];
        let c = Mat::identity(2, 2);
        let m = assemble_symmetric(
            &[1, 2],
            &[vec![Some(a), Some(b)], vec![None, Some(c)]],
        );
        assert_eq!(m, dmatrix![1.0, 2.0, 3.0; 2.0, 1.0, 0.0; 3.0, 0.0, 1.0]);
    }

    #[test]
    fn spectral_norm_of_example_d() {
        let d = dmatrix![0.45, 0.45; 0.3, -0.3];
        assert!((spectral_norm(&d) - 0.6364).abs() < 1e-4);
    }

    #[test]
    fn logdet_matches_det() {
        let p = dmatrix![3.0, 1.0; 1.0, 2.0];
        assert!((logdet_spd(&p).unwrap() - 5.0f64.ln()).abs() < 1e-14);
        assert!(logdet_spd(&dmatrix![-1.0]).is_none());
    }
}
