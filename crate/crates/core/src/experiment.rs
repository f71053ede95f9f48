//! Offline open-loop experiment and the data matrices `U0, X0, X1, V0`.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ellipsoid::{sample_rng, SampleRng};
use crate::error::{dim_err, invalid, Error, Result};
use crate::io;
use crate::linalg::{all_finite, Mat, Vector};
use crate::system::BilinearSystem;

/// Stacked samples of one experiment of length `T`:
/// `U0 = [u(0) … u(T-1)]`, `X0 = [x(0) … x(T-1)]`, `X1 = [x(1) … x(T)]` and
/// `V0 = [x(0)u(0) … x(T-1)u(T-1)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RecordFile", into = "RecordFile")]
pub struct DataRecord {
    u0: Mat,
    x0: Mat,
    x1: Mat,
    v0: Mat,
}

#[derive(Serialize, Deserialize)]
struct RecordFile {
    #[serde(rename = "T")]
    t: usize,
    n: usize,
    #[serde(rename = "U0", with = "crate::io::matrix")]
    u0: Mat,
    #[serde(rename = "X0", with = "crate::io::matrix")]
    x0: Mat,
    #[serde(rename = "X1", with = "crate::io::matrix")]
    x1: Mat,
    #[serde(rename = "V0", with = "crate::io::matrix")]
    v0: Mat,
}

impl TryFrom<RecordFile> for DataRecord {
    type Error = Error;
    fn try_from(f: RecordFile) -> Result<Self> {
        let field_err = |field: &str, reason: String| Error::Validation { field: field.into(), reason };
        if f.x0.shape() != (f.n, f.t) {
            return Err(field_err("X0", format!("expected {}x{}, got {:?}", f.n, f.t, f.x0.shape())));
        }
        if f.u0.shape() != (1, f.t) {
            return Err(field_err("U0", format!("expected 1x{}, got {:?}", f.t, f.u0.shape())));
        }
        if f.x1.shape() != (f.n, f.t) {
            return Err(field_err("X1", format!("expected {}x{}, got {:?}", f.n, f.t, f.x1.shape())));
        }
        if f.v0.shape() != (f.n, f.t) {
            return Err(field_err("V0", format!("expected {}x{}, got {:?}", f.n, f.t, f.v0.shape())));
        }
        DataRecord::from_parts(f.u0, f.x0, f.x1, f.v0).map_err(|e| match e {
            Error::Validation { .. } => e,
            other => field_err("record", other.to_string()),
        })
    }
}

impl From<DataRecord> for RecordFile {
    fn from(r: DataRecord) -> Self {
        RecordFile { t: r.t(), n: r.n(), u0: r.u0, x0: r.x0, x1: r.x1, v0: r.v0 }
    }
}

impl DataRecord {
    /// Build from `U0`, `X0`, `X1`, computing `V0`.
    pub fn new(u0: Mat, x0: Mat, x1: Mat) -> Result<Self> {
        let v0 = assemble_v0(&u0, &x0)?;
        Self::from_parts(u0, x0, x1, v0)
    }

    /// Build from all four matrices; `V0` must equal the columnwise product
    /// of `X0` and `U0` exactly.
    pub fn from_parts(u0: Mat, x0: Mat, x1: Mat, v0: Mat) -> Result<Self> {
        let (n, t) = x0.shape();
        if n == 0 || t == 0 {
            return Err(dim_err("data record needs n >= 1 and T >= 1"));
        }
        if u0.shape() != (1, t) || x1.shape() != (n, t) || v0.shape() != (n, t) {
            return Err(dim_err(format!(
                "inconsistent shapes: U0 {:?}, X0 {:?}, X1 {:?}, V0 {:?}",
                u0.shape(),
                x0.shape(),
                x1.shape(),
                v0.shape()
            )));
        }
        for (name, m) in [("U0", &u0), ("X0", &x0), ("X1", &x1), ("V0", &v0)] {
            if !all_finite(m) {
                return Err(Error::Validation { field: name.into(), reason: "non-finite entry".into() });
            }
        }
        let expected = assemble_v0(&u0, &x0)?;
        if let Some(k) = (0..t).find(|&k| expected.column(k) != v0.column(k)) {
            return Err(Error::Validation {
                field: "V0".into(),
                reason: format!("column {k} differs from X0[:, {k}] * U0[{k}]"),
            });
        }
        Ok(Self { u0, x0, x1, v0 })
    }

    pub fn n(&self) -> usize {
        self.x0.nrows()
    }
    pub fn t(&self) -> usize {
        self.x0.ncols()
    }
    pub fn u0(&self) -> &Mat {
        &self.u0
    }
    pub fn x0(&self) -> &Mat {
        &self.x0
    }
    pub fn x1(&self) -> &Mat {
        &self.x1
    }
    pub fn v0(&self) -> &Mat {
        &self.v0
    }

    /// Copy with `X1` replaced (for perturbation studies).
    pub fn with_x1(&self, x1: Mat) -> Result<Self> {
        Self::from_parts(self.u0.clone(), self.x0.clone(), x1, self.v0.clone())
    }

    /// Apply the same column permutation to all four matrices.
    pub fn permute_columns(&self, perm: &[usize]) -> Result<Self> {
        let t = self.t();
        let mut seen = vec![false; t];
        if perm.len() != t || perm.iter().any(|&p| p >= t || std::mem::replace(&mut seen[p], true)) {
            return Err(invalid("not a permutation of the sample columns"));
        }
        let pick = |m: &Mat| Mat::from_fn(m.nrows(), t, |i, j| m[(i, perm[j])]);
        Self::from_parts(pick(&self.u0), pick(&self.x0), pick(&self.x1), pick(&self.v0))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        io::read_json(path)
    }
}

/// Column `k` of the result is `X0[:, k] · U0[k]`.
pub fn assemble_v0(u0: &Mat, x0: &Mat) -> Result<Mat> {
    if u0.nrows() != 1 || u0.ncols() != x0.ncols() {
        return Err(dim_err(format!(
            "U0 must be 1x{} to match X0, got {:?}",
            x0.ncols(),
            u0.shape()
        )));
    }
    Ok(Mat::from_fn(x0.nrows(), x0.ncols(), |i, k| x0[(i, k)] * u0[(0, k)]))
}

/// Run the open-loop experiment for `t` steps, drawing `u(k)` from `inputs`.
pub fn run_experiment(
    sys: &BilinearSystem,
    x0: &Vector,
    inputs: impl IntoIterator<Item = f64>,
    t: usize,
) -> Result<DataRecord> {
    if t == 0 {
        return Err(invalid("experiment length T must be >= 1"));
    }
    let us: Vec<f64> = inputs.into_iter().take(t).collect();
    if us.len() < t {
        return Err(invalid(format!("input source produced {} of {t} samples", us.len())));
    }
    let traj = sys.simulate(x0, &us).map_err(|e| match e {
        Error::Overflow { step } => Error::ExperimentDiverged { step },
        other => other,
    })?;
    let n = sys.n();
    let u0 = Mat::from_row_slice(1, t, &us);
    let x_0 = Mat::from_fn(n, t, |i, k| traj[k][i]);
    let x_1 = Mat::from_fn(n, t, |i, k| traj[k + 1][i]);
    DataRecord::new(u0, x_0, x_1)
}

/// I.i.d. uniform inputs on `[lo, hi)` drawn from `rng`.
pub fn uniform_inputs(rng: &mut SampleRng, lo: f64, hi: f64) -> impl Iterator<Item = f64> + '_ {
    std::iter::repeat_with(move || rng.random_range(lo..hi))
}

/// Default experiment: `x(0)` uniform on `[-0.5, 0.5]ⁿ` unless given, then
/// i.i.d. uniform inputs on `[-1, 1]`, all from one seeded stream.
pub fn run_seeded_experiment(
    sys: &BilinearSystem,
    t: usize,
    seed: u64,
    x0: Option<Vector>,
) -> Result<DataRecord> {
    let mut rng = sample_rng(seed);
    let x0 = match x0 {
        Some(x) => x,
        None => Vector::from_fn(sys.n(), |_, _| rng.random_range(-0.5..=0.5)),
    };
    run_experiment(sys, &x0, uniform_inputs(&mut rng, -1.0, 1.0), t)
}

/// Richness diagnostics of `X0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataDiagnostics {
    pub rank_x0: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub cond_x0: f64,
    pub max_state_norm: f64,
    pub full_row_rank: bool,
    pub ill_conditioned: bool,
}

impl DataDiagnostics {
    pub fn has_warning(&self) -> bool {
        !self.full_row_rank || self.ill_conditioned
    }
}

/// Condition number above which the diagnostics warn.
pub const COND_WARNING: f64 = 1e8;

pub fn diagnose(data: &DataRecord) -> DataDiagnostics {
    let (n, t) = (data.n(), data.t());
    let sv = data.x0.singular_values();
    let sigma_max = sv.iter().copied().fold(0.0, f64::max);
    // there are min(n, T) singular values; when T < n the rest are zero
    let sigma_min = if t < n { 0.0 } else { sv.iter().copied().fold(f64::INFINITY, f64::min) };
    let threshold = n.max(t) as f64 * sigma_max * 1e-12;
    let rank_x0 = sv.iter().filter(|&&s| s > threshold).count();
    let cond_x0 = if sigma_min > 0.0 { sigma_max / sigma_min } else { f64::INFINITY };
    let max_state_norm = data
        .x0
        .column_iter()
        .chain(data.x1.column_iter())
        .map(|c| c.norm())
        .fold(0.0, f64::max);
    DataDiagnostics {
        rank_x0,
        sigma_min,
        sigma_max,
        cond_x0,
        max_state_norm,
        full_row_rank: rank_x0 == n,
        ill_conditioned: cond_x0 > COND_WARNING,
    }
}

/// `‖X1 − A X0 − B U0 − D V0‖_F`. Needs the true system, so it is a test oracle.
pub fn consistency_residual(data: &DataRecord, sys: &BilinearSystem) -> Result<f64> {
    if data.n() != sys.n() {
        return Err(dim_err(format!("record has n = {}, system has n = {}", data.n(), sys.n())));
    }
    let r = &data.x1 - sys.a() * &data.x0 - sys.b() * &data.u0 - sys.d() * &data.v0;
    Ok(r.norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::EXAMPLE_T;
    use nalgebra::{dmatrix, dvector};

    fn example_record(seed: u64) -> DataRecord {
        run_seeded_experiment(&BilinearSystem::example(), EXAMPLE_T, seed, None).unwrap()
    }

    #[test]
    fn assemble_v0_examples() {
        let x0 = dmatrix![1.0, 3.0; 0.0, 4.0];
        assert_eq!(assemble_v0(&dmatrix![0.0, 0.0], &x0).unwrap(), Mat::zeros(2, 2));
        assert_eq!(assemble_v0(&dmatrix![1.0, 1.0], &x0).unwrap(), x0);
        assert_eq!(assemble_v0(&dmatrix![2.0, -1.0], &x0).unwrap(), dmatrix![2.0, -3.0; 0.0, -4.0]);
        assert!(assemble_v0(&dmatrix![1.0], &x0).is_err());
    }

    #[test]
    fn example_experiment_shape_and_identity() {
        let sys = BilinearSystem::example();
        let rec = run_experiment(
            &sys,
            &dvector![0.5, -0.5],
            uniform_inputs(&mut sample_rng(11), -1.0, 1.0),
            10,
        )
        .unwrap();
        assert_eq!((rec.t(), rec.n()), (10, 2));
        let r = consistency_residual(&rec, &sys).unwrap();
        assert!(r <= 1e-12 * (1.0 + rec.x1().norm()), "residual {r}");
    }

    #[test]
    fn zero_experiment_is_degenerate() {
        let sys = BilinearSystem::example();
        let rec = run_experiment(&sys, &dvector![0.0, 0.0], std::iter::repeat(0.0), 5).unwrap();
        assert_eq!(rec.x0().norm() + rec.x1().norm() + rec.v0().norm(), 0.0);
        assert_eq!(diagnose(&rec).rank_x0, 0);
    }

    #[test]
    fn experiment_rejects_zero_length_and_short_inputs() {
        let sys = BilinearSystem::example();
        assert!(run_experiment(&sys, &dvector![1.0, 0.0], std::iter::repeat(0.0), 0).is_err());
        assert!(run_experiment(&sys, &dvector![1.0, 0.0], [0.0, 1.0], 3).is_err());
    }

    #[test]
    fn experiment_divergence_reports_step() {
        let sys = BilinearSystem::new(dmatrix![1e300], dmatrix![0.0], dmatrix![0.0]).unwrap();
        let err = run_experiment(&sys, &dvector![1e10], std::iter::repeat(0.0), 4).unwrap_err();
        assert!(matches!(err, Error::ExperimentDiverged { step: 1 }));
    }

    #[test]
    fn diagnose_examples() {
        let x0 = dmatrix![1.0, 0.0, 0.0; 0.0, 1.0, 0.0];
        let rec = DataRecord::new(dmatrix![1.0, 1.0, 1.0], x0.clone(), x0).unwrap();
        let d = diagnose(&rec);
        assert_eq!(d.rank_x0, 2);
        assert!((d.sigma_min - 1.0).abs() < 1e-14);
        assert!(!d.has_warning());

        let d = diagnose(&example_record(1));
        assert_eq!(d.rank_x0, 2);
    }

    #[test]
    fn residual_of_perturbed_x1() {
        let sys = BilinearSystem::example();
        let rec = example_record(4);
        let bumped = rec.with_x1(rec.x1().add_scalar(1e-3)).unwrap();
        let r = consistency_residual(&bumped, &sys).unwrap();
        let expected = 1e-3 * ((rec.n() * rec.t()) as f64).sqrt();
        assert!((r - expected).abs() < 1e-9 * (1.0 + rec.x1().norm()), "{r} vs {expected}");

        let zero_sys = BilinearSystem::new(Mat::zeros(2, 2), Mat::zeros(2, 1), Mat::zeros(2, 2)).unwrap();
        let zero = DataRecord::new(Mat::zeros(1, 3), Mat::zeros(2, 3), Mat::zeros(2, 3)).unwrap();
        assert_eq!(consistency_residual(&zero, &zero_sys).unwrap(), 0.0);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.json");
        let rec = example_record(2);
        rec.save(&path).unwrap();
        let back = DataRecord::load(&path).unwrap();
        assert!(back
            .x1()
            .iter()
            .zip(rec.x1().iter())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(back, rec);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"T\": 10") && text.contains("\"n\": 2"));
    }

    #[test]
    fn load_rejects_inconsistent_v0() {
        let text = r#"{"T":2,"n":1,"U0":[[1.0,2.0]],"X0":[[1.0,1.0]],"X1":[[1.0,1.0]],"V0":[[1.0,1.0]]}"#;
        let err = serde_json::from_str::<DataRecord>(text).unwrap_err().to_string();
        assert!(err.contains("V0"), "{err}");
        let text = r#"{"T":3,"n":1,"U0":[[1.0,2.0]],"X0":[[1.0,1.0]],"X1":[[1.0,1.0]],"V0":[[1.0,2.0]]}"#;
        let err = serde_json::from_str::<DataRecord>(text).unwrap_err().to_string();
        assert!(err.contains("X0"), "{err}");
    }

    #[test]
    fn short_records_load_with_rank_warning() {
        let text = r#"{"T":1,"n":2,"U0":[[1.0]],"X0":[[1.0],[2.0]],"X1":[[0.5],[0.5]],"V0":[[1.0],[2.0]]}"#;
        let rec: DataRecord = serde_json::from_str(text).unwrap();
        let d = diagnose(&rec);
        assert!(d.rank_x0 < rec.n());
        assert!(d.has_warning());
    }

    #[test]
    fn generated_records_are_rich() {
        let sys = BilinearSystem::example();
        let full = (0..100u64)
            .filter(|&s| {
                let rec = run_seeded_experiment(&sys, EXAMPLE_T, s, None).unwrap();
                assert!(consistency_residual(&rec, &sys).unwrap() <= 1e-12 * (1.0 + rec.x1().norm()));
                diagnose(&rec).rank_x0 == 2
            })
            .count();
        assert!(full >= 99, "{full}/100 records had full row rank");
    }

    #[test]
    fn diagnose_ignores_column_order() {
        let rec = example_record(5);
        let perm: Vec<usize> = (0..rec.t()).rev().collect();
        let a = diagnose(&rec);
        let b = diagnose(&rec.permute_columns(&perm).unwrap());
        assert_eq!(a.rank_x0, b.rank_x0);
        assert!((a.sigma_min - b.sigma_min).abs() <= 1e-12 * a.sigma_max);
    }
}
