//! Closed loop under `u = K x` written from data:
//! `x⁺ = (Ac + D H + D x Kc) x` with `Ac = X1 G_K`, `H = −V0 G_K`,
//! `Kc = U0 G_K`, valid whenever `X0 G_K = I`.

use serde::{Deserialize, Serialize};

use crate::ellipsoid::Ellipsoid;
use crate::error::{dim_err, Error, Result};
use crate::experiment::DataRecord;
use crate::linalg::{symmetrize, Mat, Vector};
use crate::system::BilinearSystem;

/// Tolerance on `‖X0 G_K − I‖_F` for a record of length `t`.
pub fn consistency_tolerance(t: usize) -> f64 {
    1e-8 * (t as f64).sqrt()
}

/// `‖X0 G_K − I‖_F`.
pub fn gk_residual(data: &DataRecord, g_k: &Mat) -> f64 {
    (data.x0() * g_k - Mat::identity(data.n(), data.n())).norm()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedLoopData {
    #[serde(rename = "Ac", with = "crate::io::matrix")]
    pub ac: Mat,
    #[serde(rename = "H", with = "crate::io::matrix")]
    pub h: Mat,
    #[serde(rename = "Kc", with = "crate::io::matrix")]
    pub kc: Mat,
    #[serde(rename = "G_K", default, with = "crate::io::opt_matrix", skip_serializing_if = "Option::is_none")]
    pub g_k: Option<Mat>,
}

impl ClosedLoopData {
    /// Data form. Fails if `X0 G_K = I` does not hold to the consistency tolerance.
    pub fn from_data(data: &DataRecord, g_k: &Mat) -> Result<Self> {
        if g_k.shape() != (data.t(), data.n()) {
            return Err(dim_err(format!(
                "G_K must be {}x{}, got {:?}",
                data.t(),
                data.n(),
                g_k.shape()
            )));
        }
        let residual = gk_residual(data, g_k);
        let tolerance = consistency_tolerance(data.t());
        if !(residual <= tolerance) {
            return Err(Error::CertificateViolation { residual, tolerance });
        }
        Ok(Self {
            ac: data.x1() * g_k,
            h: -(data.v0() * g_k),
            kc: data.u0() * g_k,
            g_k: Some(g_k.clone()),
        })
    }

    /// Model form: `Ac = A + B K`, `H = 0`, `Kc = K`. With the true `D` this
    /// reproduces `A + BK + DxK` exactly.
    pub fn from_model(sys: &BilinearSystem, k: &Mat) -> Result<Self> {
        let n = sys.n();
        if k.shape() != (1, n) {
            return Err(dim_err(format!("K must be 1x{n}, got {:?}", k.shape())));
        }
        Ok(Self { ac: sys.a() + sys.b() * k, h: Mat::zeros(n, n), kc: k.clone(), g_k: None })
    }

    pub fn n(&self) -> usize {
        self.ac.nrows()
    }

    fn check(&self, d: &Mat, x: &Vector) -> Result<()> {
        let n = self.n();
        if d.shape() != (n, n) || x.len() != n {
            return Err(dim_err(format!("expected D {n}x{n} and x of length {n}")));
        }
        Ok(())
    }

    /// `Ac + D H`, the state-independent part for a given `D`.
    pub fn linear_part(&self, d: &Mat) -> Mat {
        &self.ac + d * &self.h
    }

    /// `g_D(x) = Ac + D H + D x Kc`.
    pub fn matrix_at(&self, d: &Mat, x: &Vector) -> Result<Mat> {
        self.check(d, x)?;
        Ok(self.linear_part(d) + (d * x) * &self.kc)
    }

    /// `x⁺ = g_D(x) x`.
    pub fn step(&self, d: &Mat, x: &Vector) -> Result<Vector> {
        Ok(self.matrix_at(d, x)? * x)
    }
}

/// `(X1 − D V0 + D x U0) G_K` evaluated directly from the record.
pub fn closed_loop_matrix_data(data: &DataRecord, g_k: &Mat, d: &Mat, x: &Vector) -> Result<Mat> {
    let n = data.n();
    if d.shape() != (n, n) || x.len() != n {
        return Err(dim_err(format!("expected D {n}x{n} and x of length {n}")));
    }
    if g_k.shape() != (data.t(), n) {
        return Err(dim_err(format!("G_K must be {}x{n}", data.t())));
    }
    let residual = gk_residual(data, g_k);
    let tolerance = consistency_tolerance(data.t());
    if !(residual <= tolerance) {
        return Err(Error::CertificateViolation { residual, tolerance });
    }
    Ok((data.x1() - d * data.v0() + (d * x) * data.u0()) * g_k)
}

/// Matrix `N_D(x)` with `xᵀ N_D(x) x = V(g_D(x) x) − V(x)`:
///
/// `MᵀQM − Q + MᵀQ(Dx)Kc + Kcᵀ(Dx)ᵀQM + Kcᵀ(Dx)ᵀQ(Dx)Kc`, `M = Ac + D H`.
///
/// The result is symmetrized.
pub fn nd_matrix(cl: &ClosedLoopData, e: &Ellipsoid, d: &Mat, x: &Vector) -> Result<Mat> {
    cl.check(d, x)?;
    NdEvaluator::new(cl, e, d)?.at(x)
}

/// [`nd_matrix`] for one `(cl, Q, D)` at many `x`. With `M = Ac + D H`,
/// `w = MᵀQ(Dx)` and `s = (Dx)ᵀQ(Dx)` the state-dependent part is
/// `w Kc + Kcᵀ wᵀ + s KcᵀKc`, so only `MᵀQM − Q` is formed up front.
pub struct NdEvaluator<'a> {
    d: &'a Mat,
    q: &'a Mat,
    kc: &'a Mat,
    mt_q: Mat,
    base: Mat,
    kk: Mat,
}

impl<'a> NdEvaluator<'a> {
    pub fn new(cl: &'a ClosedLoopData, e: &'a Ellipsoid, d: &'a Mat) -> Result<Self> {
        let n = cl.n();
        if e.n() != n {
            return Err(dim_err("ellipsoid and closed loop have different dimensions"));
        }
        if d.shape() != (n, n) {
            return Err(dim_err(format!("expected D {n}x{n}")));
        }
        let q = e.q();
        let m = cl.linear_part(d);
        let mt_q = m.transpose() * q;
        let base = &mt_q * &m - q;
        let kk = cl.kc.transpose() * &cl.kc;
        Ok(Self { d, q, kc: &cl.kc, mt_q, base, kk })
    }

    pub fn at(&self, x: &Vector) -> Result<Mat> {
        if x.len() != self.base.nrows() {
            return Err(dim_err(format!("expected x of length {}", self.base.nrows())));
        }
        let dx = self.d * x;
        let w = &self.mt_q * &dx;
        let s = dx.dot(&(self.q * &dx));
        let wk = &w * self.kc;
        let n = &self.base + &wk + wk.transpose() + &self.kk * s;
        Ok(symmetrize(&n))
    }
}
