//! Numeric evaluation of the intermediate matrix inequalities, used to audit
//! a solved design independently of the parametric LMI.

use crate::closed_loop::ClosedLoopData;
use crate::error::{dim_err, invalid, Result};
use crate::linalg::{assemble_symmetric, spd_inverse, spectral_norm, Mat};

fn check_q(cl: &ClosedLoopData, q: &Mat, tau: f64) -> Result<Mat> {
    let n = cl.n();
    if q.shape() != (n, n) {
        return Err(dim_err(format!("Q must be {n}x{n}")));
    }
    if !(tau > 0.0) {
        return Err(invalid(format!("tau must be > 0, got {tau}")));
    }
    spd_inverse(q).ok_or_else(|| invalid("Q must be positive definite"))
}

/// Known-`D` certificate, `(3n+1)`-square:
///
/// ```text
/// ⎡ −Q    0     Kcᵀ    (Ac + D H)ᵀ ⎤
/// ⎢  ·  −τQ     0          Dᵀ      ⎥
/// ⎢  ·    ·   −τ⁻¹I        0       ⎥
/// ⎣  ·    ·     ·        −Q⁻¹      ⎦
/// ```
///
/// Negative definiteness implies `N_D(x) ≺ 0` on `{xᵀQx ≤ 1}`.
pub fn build_mi_with_d(cl: &ClosedLoopData, q: &Mat, tau: f64, d: &Mat) -> Result<Mat> {
    let q_inv = check_q(cl, q, tau)?;
    let n = cl.n();
    if d.shape() != (n, n) {
        return Err(dim_err(format!("D must be {n}x{n}")));
    }
    let m = cl.linear_part(d);
    Ok(assemble_symmetric(
        &[n, n, 1, n],
        &[
            vec![Some(-q), None, Some(cl.kc.transpose()), Some(m.transpose())],
            vec![None, Some(q * -tau), None, Some(d.transpose())],
            vec![None, None, Some(Mat::from_element(1, 1, -1.0 / tau)), None],
            vec![None, None, None, Some(-q_inv)],
        ],
    ))
}

/// `D`-free certificate, `(4n+1)`-square:
///
/// ```text
/// ⎡ −Q    0     Kcᵀ      Acᵀ       δHᵀ  ⎤
/// ⎢  ·  −τQ     0         0        δI   ⎥
/// ⎢  ·    ·   −τ⁻¹I       0         0   ⎥
/// ⎢  ·    ·     ·    −Q⁻¹ + ε₂I     0   ⎥
/// ⎣  ·    ·     ·         ·       −ε₂I  ⎦
/// ```
///
/// Negative definiteness implies [`build_mi_with_d`] is negative definite for
/// every `‖D‖ ≤ δ`.
pub fn build_mi_without_d(cl: &ClosedLoopData, q: &Mat, tau: f64, eps2: f64, delta: f64) -> Result<Mat> {
    let q_inv = check_q(cl, q, tau)?;
    let n = cl.n();
    let i = Mat::identity(n, n);
    Ok(assemble_symmetric(
        &[n, n, 1, n, n],
        &[
            vec![Some(-q), None, Some(cl.kc.transpose()), Some(cl.ac.transpose()), Some(cl.h.transpose() * delta)],
            vec![None, Some(q * -tau), None, None, Some(&i * delta)],
            vec![None, None, Some(Mat::from_element(1, 1, -1.0 / tau)), None, None],
            vec![None, None, None, Some(-q_inv + &i * eps2), None],
            vec![None, None, None, None, Some(&i * -eps2)],
        ],
    ))
}

fn check_petersen(g: &Mat, m: &Mat, n: &Mat) -> Result<()> {
    let k = g.nrows();
    if !g.is_square() || m.nrows() != k || n.nrows() != k {
        return Err(dim_err("G must be square and share its row count with M and N"));
    }
    Ok(())
}

/// `[G + e M Mᵀ, N; Nᵀ, −e I]`.
pub fn petersen_certificate_matrix(g: &Mat, m: &Mat, n: &Mat, e: f64) -> Result<Mat> {
    check_petersen(g, m, n)?;
    let (k, q) = (g.nrows(), n.ncols());
    Ok(assemble_symmetric(
        &[k, q],
        &[vec![Some(g + m * m.transpose() * e), Some(n.clone())], vec![None, Some(Mat::identity(q, q) * -e)]],
    ))
}

/// `G + M D̂ Nᵀ + N D̂ᵀ Mᵀ` for `‖D̂‖ ≤ 1`.
pub fn petersen_lhs(g: &Mat, m: &Mat, n: &Mat, dhat: &Mat) -> Result<Mat> {
    check_petersen(g, m, n)?;
    if dhat.shape() != (m.ncols(), n.ncols()) {
        return Err(dim_err(format!("D̂ must be {}x{}", m.ncols(), n.ncols())));
    }
    let norm = spectral_norm(dhat);
    if norm > 1.0 + 1e-12 {
        return Err(invalid(format!("‖D̂‖ = {norm} exceeds 1")));
    }
    let t = m * dhat * n.transpose();
    Ok(g + &t + t.transpose())
}

/// Smallest `e` on a 25-point log grid over `[1e−4, 1e4]` for which the
/// Petersen certificate is negative definite.
pub fn find_petersen_multiplier(g: &Mat, m: &Mat, n: &Mat) -> Option<f64> {
    (0..25)
        .map(|k| 10f64.powf(-4.0 + 8.0 * k as f64 / 24.0))
        .find(|&e| {
            petersen_certificate_matrix(g, m, n, e)
                .map(|c| crate::linalg::is_negative_definite(&c))
                .unwrap_or(false)
        })
}
