//! Equality elimination and removal of directions no constraint can see.

use crate::lmi::{AffineSymmetricForm, MaxDetProblem};
use crate::linalg::{Mat, Vector};

use super::barrier::PdForm;

/// `x = x0 + basis · w`.
#[derive(Debug, Clone)]
pub(crate) struct Reduction {
    pub x0: Vector,
    pub basis: Mat,
}

pub(crate) enum EqualityOutcome {
    Ok(Reduction),
    Inconsistent { residual: f64 },
}

/// Right singular vectors of `a` (rows ≥ cols after zero padding) split by
/// `σ > tol·σ_max`.
fn svd_split(a: &Mat, rel_tol: f64) -> (Vec<(f64, Vector, Vector)>, Vec<Vector>) {
    let (p, m) = a.shape();
    let padded = if p < m {
        let mut z = Mat::zeros(m, m);
        z.view_mut((0, 0), (p, m)).copy_from(a);
        z
    } else {
        a.clone()
    };
    let svd = padded.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let tol = rel_tol * smax * (p.max(m) as f64);
    let mut range = Vec::new();
    let mut null = Vec::new();
    for (i, &s) in svd.singular_values.iter().enumerate() {
        let v = v_t.row(i).transpose();
        if s > tol && s > 0.0 {
            let ui = u.column(i).rows(0, p).into_owned();
            range.push((s, ui, v));
        } else {
            null.push(v);
        }
    }
    (range, null)
}

fn columns_to_mat(rows: usize, cols: &[Vector]) -> Mat {
    let mut out = Mat::zeros(rows, cols.len());
    for (j, c) in cols.iter().enumerate() {
        out.set_column(j, c);
    }
    out
}

/// Minimum-norm particular solution plus null-space basis of `A x = b`.
/// Dependent rows are absorbed by the rank decision; inconsistent systems
/// are reported with their least-squares residual.
pub(crate) fn eliminate_equalities(problem: &MaxDetProblem) -> EqualityOutcome {
    let m = problem.num_vars();
    if problem.equalities.is_empty() {
        return EqualityOutcome::Ok(Reduction { x0: Vector::zeros(m), basis: Mat::identity(m, m) });
    }
    let (a, b) = problem.equality_system();
    let b = Vector::from_vec(b);
    let (range, null) = svd_split(&a, 1e-13);
    let mut x0 = Vector::zeros(m);
    for (s, u, v) in &range {
        x0 += v * (u.dot(&b) / s);
    }
    let residual = (&a * &x0 - &b).norm();
    if residual > 1e-9 * (1.0 + b.norm()) {
        return EqualityOutcome::Inconsistent { residual };
    }
    EqualityOutcome::Ok(Reduction { x0, basis: columns_to_mat(m, &null) })
}

/// Restrict an affine form to `x = x0 + basis·w`.
pub(crate) fn restrict(form: &AffineSymmetricForm, red: &Reduction) -> (Mat, Vec<Mat>) {
    let c = form.evaluate(red.x0.as_slice());
    let k = red.basis.ncols();
    let dim = form.dim();
    let mut coeffs = vec![Mat::zeros(dim, dim); k];
    for (v, fv) in form.terms() {
        for (j, cj) in coeffs.iter_mut().enumerate() {
            let w = red.basis[(v, j)];
            if w != 0.0 {
                *cj += fv * w;
            }
        }
    }
    (c, coeffs)
}

/// Drop directions of `w` that change neither the constraints nor the
/// objective block; the barrier Hessian is singular along them.
pub(crate) fn drop_invisible(red: Reduction, forms: &[(Mat, Vec<Mat>)]) -> (Reduction, Mat) {
    let k = red.basis.ncols();
    let rows: usize = forms.iter().map(|(c, _)| c.len()).sum();
    if k == 0 || rows == 0 {
        return (red, Mat::identity(k, k));
    }
    let mut w = Mat::zeros(rows, k);
    let mut r0 = 0;
    for (c, coeffs) in forms {
        for (j, cj) in coeffs.iter().enumerate() {
            w.view_mut((r0, j), (cj.len(), 1)).copy_from_slice(cj.as_slice());
        }
        r0 += c.len();
    }
    // scale columns so that the rank decision is not driven by units
    let norms: Vec<f64> = (0..k).map(|j| w.column(j).norm()).collect();
    for (j, &nj) in norms.iter().enumerate() {
        if nj > 0.0 {
            w.column_mut(j).scale_mut(1.0 / nj);
        }
    }
    let (range, _) = svd_split(&w, 1e-12);
    let mut keep = Mat::zeros(k, range.len());
    for (j, (_, _, v)) in range.iter().enumerate() {
        // undo the column scaling: w_scaled·v = w·(D⁻¹v)
        let col = Vector::from_fn(k, |i, _| if norms[i] > 0.0 { v[i] / norms[i] } else { 0.0 });
        keep.set_column(j, &col);
    }
    let basis = &red.basis * &keep;
    (Reduction { x0: red.x0, basis }, keep)
}

/// `form` restricted to the reduced variables, negated so that the
/// requirement `F ≺ 0` reads `S ≻ 0`, with `shift` added to `F`.
pub(crate) fn negated(c: &Mat, coeffs: &[Mat], shift: f64) -> PdForm {
    let dim = c.nrows();
    PdForm { c: -(c + Mat::identity(dim, dim) * shift), coeffs: coeffs.iter().map(|a| -a).collect() }
}

pub(crate) fn restricted_by(c: &Mat, coeffs: &[Mat], keep: &Mat) -> (Mat, Vec<Mat>) {
    let r = keep.ncols();
    let dim = c.nrows();
    let mut out = vec![Mat::zeros(dim, dim); r];
    for (j, o) in out.iter_mut().enumerate() {
        for (i, a) in coeffs.iter().enumerate() {
            let w = keep[(i, j)];
            if w != 0.0 {
                *o += a * w;
            }
        }
    }
    (c.clone(), out)
}
