//! Single-input discrete-time bilinear dynamics `x⁺ = A x + B u + D x u`.

use nalgebra::dmatrix;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, invalid, Error, Result};
use crate::linalg::{all_finite, spectral_norm, Mat, Vector};

/// Ground-truth system matrices. Only the simulator, the model-based
/// baseline and the verification oracles look at these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SystemFile", into = "SystemFile")]
pub struct BilinearSystem {
    a: Mat,
    b: Mat,
    d: Mat,
}

#[derive(Serialize, Deserialize)]
struct SystemFile {
    #[serde(rename = "A", with = "crate::io::matrix")]
    a: Mat,
    #[serde(rename = "B", with = "crate::io::matrix")]
    b: Mat,
    #[serde(rename = "D", with = "crate::io::matrix")]
    d: Mat,
}

impl TryFrom<SystemFile> for BilinearSystem {
    type Error = Error;
    fn try_from(f: SystemFile) -> Result<Self> {
        BilinearSystem::new(f.a, f.b, f.d)
    }
}

impl From<BilinearSystem> for SystemFile {
    fn from(s: BilinearSystem) -> Self {
        SystemFile { a: s.a, b: s.b, d: s.d }
    }
}

impl BilinearSystem {
    pub fn new(a: Mat, b: Mat, d: Mat) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || !a.is_square() {
            return Err(dim_err(format!("A must be square with n >= 1, got {:?}", a.shape())));
        }
        if b.shape() != (n, 1) {
            return Err(dim_err(format!("B must be {n}x1, got {:?}", b.shape())));
        }
        if d.shape() != (n, n) {
            return Err(dim_err(format!("D must be {n}x{n}, got {:?}", d.shape())));
        }
        if !(all_finite(&a) && all_finite(&b) && all_finite(&d)) {
            return Err(invalid("system matrices must be finite"));
        }
        Ok(Self { a, b, d })
    }

    /// The two-state example with unstable open loop used throughout the
    /// numerical study (originally from Bitsoris & Athanasopoulos, IFAC 2008).
    pub fn example() -> Self {
        Self {
            a: dmatrix![0.8, 0.5; 0.4, 1.2],
            b: dmatrix![1.0; 2.0],
            d: dmatrix![0.45, 0.45; 0.3, -0.3],
        }
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    pub fn a(&self) -> &Mat {
        &self.a
    }
    pub fn b(&self) -> &Mat {
        &self.b
    }
    pub fn d(&self) -> &Mat {
        &self.d
    }

    /// Same `A`, `B` with a different bilinear map.
    pub fn with_d(&self, d: Mat) -> Result<Self> {
        Self::new(self.a.clone(), self.b.clone(), d)
    }

    fn check_state(&self, x: &Vector) -> Result<()> {
        if x.len() != self.n() {
            return Err(dim_err(format!("state has length {}, expected {}", x.len(), self.n())));
        }
        Ok(())
    }

    /// One step of the dynamics.
    pub fn step(&self, x: &Vector, u: f64) -> Result<Vector> {
        self.check_state(x)?;
        Ok(&self.a * x + self.b.column(0) * u + (&self.d * x) * u)
    }

    /// Iterate [`step`](Self::step) over `inputs`; the returned trajectory has
    /// `inputs.len() + 1` states.
    pub fn simulate(&self, x0: &Vector, inputs: &[f64]) -> Result<Vec<Vector>> {
        self.check_state(x0)?;
        if inputs.iter().any(|u| !u.is_finite()) {
            return Err(invalid("inputs must be finite"));
        }
        let mut traj = Vec::with_capacity(inputs.len() + 1);
        traj.push(x0.clone());
        for (k, &u) in inputs.iter().enumerate() {
            let next = self.step(&traj[k], u)?;
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::Overflow { step: k + 1 });
            }
            traj.push(next);
        }
        Ok(traj)
    }

    /// `A + B K + (D x) K`, the state-dependent closed-loop matrix under `u = K x`.
    pub fn closed_loop_matrix(&self, k: &Mat, x: &Vector) -> Result<Mat> {
        self.check_state(x)?;
        if k.shape() != (1, self.n()) {
            return Err(dim_err(format!("K must be 1x{}, got {:?}", self.n(), k.shape())));
        }
        let dx = &self.d * x;
        Ok(&self.a + &self.b * k + dx * k)
    }

    /// `‖D‖₂`.
    pub fn d_norm(&self) -> f64 {
        spectral_norm(&self.d)
    }
}

/// Norm bound on `D` with a 20% overestimate, for use when the true system
/// is available (tests and the built-in example).
pub fn delta_from_system(sys: &BilinearSystem) -> f64 {
    1.2 * sys.d_norm()
}

/// Norm bound used with the built-in example: 1.2·‖D‖ rounded to 4 digits.
pub const EXAMPLE_DELTA: f64 = 0.7637;
/// Experiment length used with the built-in example.
pub const EXAMPLE_T: usize = 10;

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn close(a: &Vector, b: &Vector) -> bool {
        (a - b).amax() < 1e-12
    }

    #[test]
    fn step_examples() {
        let sys = BilinearSystem::example();
        assert_eq!(sys.step(&dvector![0.0, 0.0], 0.0).unwrap(), dvector![0.0, 0.0]);
        assert!(close(&sys.step(&dvector![1.0, 0.0], 0.0).unwrap(), &dvector![0.8, 0.4]));
        assert!(close(&sys.step(&dvector![1.0, 0.0], 1.0).unwrap(), &dvector![2.25, 2.70]));
    }

    #[test]
    fn step_rejects_wrong_length() {
        let sys = BilinearSystem::example();
        assert!(matches!(sys.step(&dvector![1.0], 0.0), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn simulate_examples() {
        let sys = BilinearSystem::example();
        let zero = sys.simulate(&dvector![0.0, 0.0], &[0.0; 5]).unwrap();
        assert_eq!(zero.len(), 6);
        assert!(zero.iter().all(|x| x.norm() == 0.0));

        let t = sys.simulate(&dvector![1.0, 0.0], &[0.0]).unwrap();
        assert!(close(&t[1], &dvector![0.8, 0.4]));

        let t = sys.simulate(&dvector![1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert_eq!(t.len(), 3);
        assert!(close(&t[1], &dvector![2.25, 2.70]));
        assert!(close(&t[2], &dvector![3.15, 4.14]));
    }

    #[test]
    fn simulate_reports_overflow_step() {
        let sys = BilinearSystem::new(dmatrix![1e200], dmatrix![0.0], dmatrix![0.0]).unwrap();
        let err = sys.simulate(&dvector![1e200], &[0.0, 0.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::Overflow { step: 1 }));
    }

    #[test]
    fn closed_loop_matrix_examples() {
        let sys = BilinearSystem::example();
        let zero_k = Mat::zeros(1, 2);
        assert_eq!(sys.closed_loop_matrix(&zero_k, &dvector![0.3, -2.0]).unwrap(), *sys.a());

        let k = dmatrix![-0.3572, -0.5738];
        let at_origin = sys.closed_loop_matrix(&k, &dvector![0.0, 0.0]).unwrap();
        assert!((at_origin - (sys.a() + sys.b() * &k)).amax() < 1e-15);

        // hand evaluation at x = (1, 1): D x = (0.9, 0)
        let m = sys.closed_loop_matrix(&k, &dvector![1.0, 1.0]).unwrap();
        let expected = dmatrix![
            0.8 - 0.3572 + 0.9 * -0.3572, 0.5 - 0.5738 + 0.9 * -0.5738;
            0.4 - 2.0 * 0.3572,           1.2 - 2.0 * 0.5738
        ];
        assert!((m - expected).amax() < 1e-14);
    }

    #[test]
    fn example_delta_is_twenty_percent_over() {
        let sys = BilinearSystem::example();
        assert!((delta_from_system(&sys) - EXAMPLE_DELTA).abs() < 5e-5);
    }

    #[test]
    fn json_uses_named_row_major_matrices() {
        let sys = BilinearSystem::example();
        let text = serde_json::to_string(&sys).unwrap();
        assert!(text.contains("\"A\":[[0.8,0.5],[0.4,1.2]]"));
        let back: BilinearSystem = serde_json::from_str(&text).unwrap();
        assert_eq!(back, sys);
        let bad = r#"{"A":[[1.0]],"B":[[1.0],[2.0]],"D":[[0.0]]}"#;
        assert!(serde_json::from_str::<BilinearSystem>(bad).is_err());
    }
}
