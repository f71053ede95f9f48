//! Log-det barrier terms `−w·log det S(v)` for affine `S(v) = C + Σ v_j A_j`.

use nalgebra::Cholesky;

use crate::linalg::{Mat, Vector};

/// Affine symmetric matrix required to stay positive definite.
#[derive(Debug, Clone)]
pub(crate) struct PdForm {
    pub c: Mat,
    pub coeffs: Vec<Mat>,
}

impl PdForm {
    pub fn dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn eval(&self, v: &Vector) -> Mat {
        let mut s = self.c.clone();
        for (a, &vj) in self.coeffs.iter().zip(v.iter()) {
            if vj != 0.0 {
                s += a * vj;
            }
        }
        s
    }

    fn chol(&self, v: &Vector) -> Option<Cholesky<f64, nalgebra::Dyn>> {
        let s = self.eval(v);
        if !s.iter().all(|x| x.is_finite()) {
            return None;
        }
        s.cholesky()
    }
}

/// `f(v) = t·lin·v + t·(−log det S_obj(v)) − Σ log det S_i(v)`.
#[derive(Debug, Clone)]
pub(crate) struct Barrier {
    pub forms: Vec<PdForm>,
    pub objective: Option<PdForm>,
    pub linear: Option<Vector>,
}

fn neg_logdet(ch: &Cholesky<f64, nalgebra::Dyn>) -> f64 {
    let l = ch.l_dirty();
    -2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
}

impl Barrier {
    /// Total rows of the barrier constraints (the duality-gap numerator).
    pub fn rows(&self) -> usize {
        self.forms.iter().map(PdForm::dim).sum()
    }

    pub fn is_feasible(&self, v: &Vector) -> bool {
        self.forms.iter().chain(self.objective.iter()).all(|f| f.chol(v).is_some())
    }

    pub fn value(&self, v: &Vector, t: f64) -> Option<f64> {
        let mut f = self.linear.as_ref().map_or(0.0, |c| t * c.dot(v));
        if let Some(obj) = &self.objective {
            f += t * neg_logdet(&obj.chol(v)?);
        }
        for form in &self.forms {
            f += neg_logdet(&form.chol(v)?);
        }
        Some(f)
    }

    /// Value, gradient and Hessian; `None` outside the domain.
    pub fn derivatives(&self, v: &Vector, t: f64) -> Option<(f64, Vector, Mat)> {
        let d = v.len();
        let mut value = 0.0;
        let mut grad = Vector::zeros(d);
        let mut hess = Mat::zeros(d, d);
        if let Some(c) = &self.linear {
            value += t * c.dot(v);
            grad += c * t;
        }
        let terms = self.objective.iter().map(|f| (f, t)).chain(self.forms.iter().map(|f| (f, 1.0)));
        for (form, weight) in terms {
            let ch = form.chol(v)?;
            value += weight * neg_logdet(&ch);
            let l = ch.l();
            // W_j = L⁻¹ A_j L⁻ᵀ, so tr(S⁻¹A_j) = tr W_j and
            // tr(S⁻¹A_j S⁻¹A_k) = ⟨W_j, W_k⟩
            let scaled: Vec<Mat> = form
                .coeffs
                .iter()
                .map(|a| {
                    let x = l.solve_lower_triangular(a).expect("nonsingular factor");
                    let w = l.solve_lower_triangular(&x.transpose()).expect("nonsingular factor");
                    (&w + w.transpose()) * 0.5
                })
                .collect();
            for j in 0..d {
                grad[j] -= weight * scaled[j].trace();
                for k in 0..=j {
                    let h = weight * scaled[j].dot(&scaled[k]);
                    hess[(j, k)] += h;
                    if k != j {
                        hess[(k, j)] += h;
                    }
                }
            }
        }
        Some((value, grad, hess))
    }
}
