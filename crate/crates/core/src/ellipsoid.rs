//! Quadratic Lyapunov function `V(x) = xᵀQx` and its unit sublevel set.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, invalid, Result};
use crate::linalg::{is_positive_definite, spd_inv_sqrt, symmetrize, Mat, Vector};

/// Generator behind every sampled check. ChaCha8 gives identical streams on
/// every platform for a given 64-bit seed.
pub type SampleRng = ChaCha8Rng;

pub fn sample_rng(seed: u64) -> SampleRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `{x : xᵀQx ≤ 1}` with `Q` symmetric positive definite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    #[serde(rename = "Q", with = "crate::io::matrix")]
    q: Mat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleMode {
    Boundary,
    Interior,
}

impl Ellipsoid {
    pub fn new(q: Mat) -> Result<Self> {
        if !q.is_square() || q.nrows() == 0 {
            return Err(dim_err(format!("Q must be square, got {:?}", q.shape())));
        }
        let q = symmetrize(&q);
        if !is_positive_definite(&q) {
            return Err(invalid("Q must be positive definite"));
        }
        Ok(Self { q })
    }

    pub fn q(&self) -> &Mat {
        &self.q
    }

    pub fn n(&self) -> usize {
        self.q.nrows()
    }

    /// `V(x) = xᵀQx`.
    pub fn value(&self, x: &Vector) -> f64 {
        x.dot(&(&self.q * x))
    }

    pub fn contains(&self, x: &Vector) -> bool {
        self.value(x) <= 1.0
    }

    /// Points of the ellipsoid built as `Q^{-1/2}·s` with `s` uniform on the
    /// unit sphere; interior samples are additionally scaled by `r^{1/n}`,
    /// `r ~ U(0, 1]`, which is uniform in volume.
    pub fn sample(&self, count: usize, mode: SampleMode, rng: &mut SampleRng) -> Result<Vec<Vector>> {
        if count == 0 {
            return Err(invalid("sample count must be >= 1"));
        }
        let n = self.n();
        let root = spd_inv_sqrt(&self.q).ok_or_else(|| invalid("Q must be positive definite"))?;
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let s = Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let norm = s.norm();
            if norm < 1e-300 {
                continue;
            }
            let mut x = &root * (s / norm);
            // pull the point exactly onto the level set, then just inside it
            x /= self.value(&x).sqrt();
            // V carries rounding noise far above eps when Q is ill conditioned,
            // so the shrink doubles until the point is inside
            let mut shrink = 4.0 * f64::EPSILON;
            while self.value(&x) > 1.0 {
                x *= 1.0 - shrink;
                shrink *= 2.0;
            }
            if mode == SampleMode::Interior {
                let r: f64 = 1.0 - rng.random::<f64>(); // (0, 1]
                x *= r.powf(1.0 / n as f64);
            }
            out.push(x);
        }
        Ok(out)
    }

    /// `count` samples split 70% boundary / 30% interior, origin excluded.
    pub fn sample_mixed(&self, count: usize, rng: &mut SampleRng) -> Result<Vec<Vector>> {
        if count == 0 {
            return Err(invalid("sample count must be >= 1"));
        }
        let boundary = (count * 7).div_ceil(10);
        let mut pts = self.sample(boundary, SampleMode::Boundary, rng)?;
        if count > boundary {
            pts.extend(
                self.sample(count - boundary, SampleMode::Interior, rng)?
                    .into_iter()
                    .filter(|x| x.norm() > 0.0),
            );
        }
        Ok(pts)
    }
}

/// Convenience wrapper with an explicit seed.
pub fn sample_ellipsoid(e: &Ellipsoid, count: usize, mode: SampleMode, seed: u64) -> Result<Vec<Vector>> {
    e.sample(count, mode, &mut sample_rng(seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};
    use proptest::prelude::*;

    #[test]
    fn value_examples() {
        let e = Ellipsoid::new(Mat::identity(2, 2)).unwrap();
        assert_eq!(e.value(&dvector![3.0, 4.0]), 25.0);
        assert_eq!(e.value(&dvector![0.0, 0.0]), 0.0);

        // Q = P⁻¹ for the reported model-based P, inverted by the 2x2 formula
        let (a, b, d) = (8.5623, -4.7253, 6.3616);
        let det = a * d - b * b;
        let q = dmatrix![d / det, -b / det; -b / det, a / det];
        let e = Ellipsoid::new(q).unwrap();
        assert!((e.value(&dvector![1.0, 0.0]) - d / det).abs() < 1e-15);
    }

    #[test]
    fn boundary_samples_of_ill_conditioned_q_terminate() {
        // V has cancellation noise near 1e-13 here; nudging by eps alone stalled
        let q = dmatrix![108.3804740748169, 186.46928662012942; 186.46928662012942, 321.81645988585524];
        let e = Ellipsoid::new(q).unwrap();
        let pts = e.sample(2000, SampleMode::Boundary, &mut sample_rng(1)).unwrap();
        assert!(pts.iter().all(|x| e.value(x) <= 1.0 && e.value(x) > 1.0 - 1e-9));
    }

    #[test]
    fn contains_examples() {
        let e = Ellipsoid::new(Mat::identity(2, 2)).unwrap();
        assert!(e.contains(&dvector![0.0, 0.0]));
        assert!(e.contains(&dvector![1.0, 0.0]));
        assert!(!e.contains(&dvector![1.001, 0.0]));
    }

    #[test]
    fn rejects_indefinite() {
        assert!(Ellipsoid::new(dmatrix![1.0, 0.0; 0.0, 0.0]).is_err());
        assert!(Ellipsoid::new(dmatrix![1.0, 2.0]).is_err());
    }

    #[test]
    fn boundary_samples_of_scaled_identity() {
        let e = Ellipsoid::new(Mat::identity(3, 3)).unwrap();
        for x in sample_ellipsoid(&e, 200, SampleMode::Boundary, 7).unwrap() {
            assert!((x.norm() - 1.0).abs() < 1e-12);
        }
        let e = Ellipsoid::new(Mat::identity(2, 2) * 4.0).unwrap();
        for x in sample_ellipsoid(&e, 200, SampleMode::Boundary, 7).unwrap() {
            assert!((x.norm() - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_count_is_rejected() {
        let e = Ellipsoid::new(Mat::identity(2, 2)).unwrap();
        assert!(sample_ellipsoid(&e, 0, SampleMode::Interior, 0).is_err());
    }

    #[test]
    fn mixed_split() {
        let e = Ellipsoid::new(Mat::identity(2, 2)).unwrap();
        let pts = e.sample_mixed(1000, &mut sample_rng(3)).unwrap();
        let on_boundary = pts.iter().filter(|x| (e.value(x) - 1.0).abs() < 1e-12).count();
        assert_eq!(pts.len(), 1000);
        assert!(on_boundary >= 700);
    }

    proptest! {
        #[test]
        fn samples_lie_in_ellipsoid(
            l in proptest::collection::vec(-2.0f64..2.0, 9),
            seed in any::<u64>(),
            interior in any::<bool>(),
        ) {
            let l = Mat::from_row_slice(3, 3, &l);
            let q = &l * l.transpose() + Mat::identity(3, 3) * 0.05;
            let e = Ellipsoid::new(q).unwrap();
            let mode = if interior { SampleMode::Interior } else { SampleMode::Boundary };
            for x in sample_ellipsoid(&e, 50, mode, seed).unwrap() {
                prop_assert!(e.contains(&x));
                if !interior {
                    prop_assert!((e.value(&x) - 1.0).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn sampling_is_reproducible(seed in any::<u64>()) {
            let e = Ellipsoid::new(dmatrix![2.0, 0.3; 0.3, 1.0]).unwrap();
            let a = sample_ellipsoid(&e, 20, SampleMode::Interior, seed).unwrap();
            let b = sample_ellipsoid(&e, 20, SampleMode::Interior, seed).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
