//! Sampling checks of a design's certificate: Lyapunov decrease on the
//! ellipsoid for a given `D`, the same over random `D` in the `δ`-ball, and
//! closed-loop simulation from inside the ellipsoid.
//!
//! These are bug-catching oracles, not proofs; the LMI is the proof.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed_loop::{ClosedLoopData, NdEvaluator};
use crate::design::DesignResult;
use crate::ellipsoid::{sample_rng, Ellipsoid, SampleMode, SampleRng};
use crate::error::{dim_err, invalid, Error, Result};
use crate::linalg::{max_eigenvalue, spectral_norm, Mat, Vector};
use crate::system::BilinearSystem;

/// Relative tolerance between `xᵀN x` and the simulated increment.
pub const AGREEMENT_TOL: f64 = 1e-9;
/// Slack on `V ≤ 1` and on monotone decrease along simulated trajectories.
pub const LEVEL_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    /// Ellipsoid samples per `D`.
    pub samples: usize,
    /// Number of sampled `D` matrices for the robustness check.
    pub num_d: usize,
    /// Simulated starts for the basin check.
    pub basin_starts: usize,
    pub horizon: usize,
    /// Convergence threshold relative to `max(1, ‖x(0)‖)`.
    pub conv_tol: f64,
    pub seed: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { samples: 1000, num_d: 50, basin_starts: 100, horizon: 200, conv_tol: 1e-8, seed: 0 }
    }
}

/// Worst values seen by the sampling checks. Each check fills its own
/// fields; [`VerificationReport::merge`] combines partial reports.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub mu: f64,
    pub seed: u64,
    /// Max over samples of `λ_max(N_D(x) + (1 − μ)Q)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worst_nd_eig: Option<f64>,
    /// Max over samples of `(V(x⁺) − μV(x)) / V(x)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worst_decrease: Option<f64>,
    #[serde(default)]
    pub decrease_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robust_worst_nd_eig: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robust_worst_decrease: Option<f64>,
    /// Largest `‖D‖` among the sampled matrices.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robust_max_d_norm: Option<f64>,
    #[serde(default)]
    pub robust_num_d: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basin_converged_fraction: Option<f64>,
    #[serde(default)]
    pub basin_starts: usize,
    #[serde(default)]
    pub basin_horizon: usize,
    /// Trajectories that left the ellipsoid.
    #[serde(default)]
    pub basin_exits: usize,
    /// Steps where `V` failed to drop by the factor `μ`.
    #[serde(default)]
    pub basin_monotonicity_violations: usize,
}

impl VerificationReport {
    pub fn merge(mut self, other: VerificationReport) -> Self {
        fn pick(a: Option<f64>, b: Option<f64>) -> Option<f64> {
            match (a, b) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, None) => x,
                (None, y) => y,
            }
        }
        self.worst_nd_eig = pick(self.worst_nd_eig, other.worst_nd_eig);
        self.worst_decrease = pick(self.worst_decrease, other.worst_decrease);
        self.decrease_samples += other.decrease_samples;
        self.robust_worst_nd_eig = pick(self.robust_worst_nd_eig, other.robust_worst_nd_eig);
        self.robust_worst_decrease = pick(self.robust_worst_decrease, other.robust_worst_decrease);
        self.robust_max_d_norm = pick(self.robust_max_d_norm, other.robust_max_d_norm);
        self.robust_num_d += other.robust_num_d;
        if other.basin_converged_fraction.is_some() {
            self.basin_converged_fraction = other.basin_converged_fraction;
            self.basin_starts = other.basin_starts;
            self.basin_horizon = other.basin_horizon;
            self.basin_exits = other.basin_exits;
            self.basin_monotonicity_violations = other.basin_monotonicity_violations;
        }
        self
    }

    /// One line per check that ran: `(name, passed, detail)`.
    pub fn checks(&self) -> Vec<(&'static str, bool, String)> {
        let mut out = Vec::new();
        if let (Some(e), Some(d)) = (self.worst_nd_eig, self.worst_decrease) {
            out.push(("decrease", e < 0.0 && d < 0.0, format!("worst eig {e:.3e}, worst relative decrease {d:.3e}")));
        }
        if let (Some(e), Some(d)) = (self.robust_worst_nd_eig, self.robust_worst_decrease) {
            out.push((
                "robust",
                e < 0.0 && d < 0.0,
                format!("{} D matrices, worst eig {e:.3e}, worst relative decrease {d:.3e}", self.robust_num_d),
            ));
        }
        if let Some(f) = self.basin_converged_fraction {
            out.push((
                "basin",
                f == 1.0 && self.basin_exits == 0 && self.basin_monotonicity_violations == 0,
                format!(
                    "converged {:.3}, exits {}, non-monotone steps {}",
                    f, self.basin_exits, self.basin_monotonicity_violations
                ),
            ));
        }
        out
    }

    /// True when at least one check ran and all that ran passed.
    pub fn passed(&self) -> bool {
        let checks = self.checks();
        !checks.is_empty() && checks.iter().all(|c| c.1)
    }
}

fn usable(result: &DesignResult) -> Result<(&ClosedLoopData, Ellipsoid)> {
    if !result.is_optimal() {
        return Err(invalid(format!("design status is {}, expected optimal", result.status)));
    }
    let cl = result.closed_loop.as_ref().ok_or_else(|| invalid("design has no closed-loop data"))?;
    let q = result.q.as_ref().ok_or_else(|| invalid("design has no Q"))?;
    let e = Ellipsoid::new(q.clone())?;
    if e.n() != cl.n() {
        return Err(dim_err("Q and closed loop have different dimensions"));
    }
    Ok((cl, e))
}

/// `(λ_max, relative increment)` at one sample; checks that the quadratic
/// form and the simulated step agree.
fn decrease_at(
    nd: &NdEvaluator<'_>,
    cl: &ClosedLoopData,
    e: &Ellipsoid,
    d: &Mat,
    mu: f64,
    x: &Vector,
) -> Result<(f64, f64)> {
    let n = nd.at(x)? + e.q() * (1.0 - mu);
    let vx = e.value(x);
    let x_next = cl.step(d, x)?;
    let v_next = e.value(&x_next);
    let direct = v_next - mu * vx;
    let quad = x.dot(&(&n * x));
    let scale = v_next + vx;
    if (direct - quad).abs() > AGREEMENT_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Internal(format!(
            "xᵀN x = {quad:e} but simulated increment = {direct:e} at x = {:?}",
            x.as_slice()
        )));
    }
    if direct.signum() != quad.signum() && direct.abs().max(quad.abs()) > AGREEMENT_TOL * scale {
        return Err(Error::Internal(format!("sign disagreement: {quad:e} vs {direct:e}")));
    }
    Ok((max_eigenvalue(&n), direct / vx))
}

fn decrease_over(
    cl: &ClosedLoopData,
    e: &Ellipsoid,
    d: &Mat,
    mu: f64,
    points: &[Vector],
) -> Result<(f64, f64)> {
    let nd = NdEvaluator::new(cl, e, d)?;
    points
        .par_iter()
        .map(|x| decrease_at(&nd, cl, e, d, mu, x))
        .try_reduce(|| (f64::NEG_INFINITY, f64::NEG_INFINITY), |a, b| Ok((a.0.max(b.0), a.1.max(b.1))))
}

/// Decrease of `V` for one `D` over `samples` points of the ellipsoid (70%
/// boundary, 30% interior, origin excluded).
pub fn verify_decrease(result: &DesignResult, d: &Mat, samples: usize, seed: u64) -> Result<VerificationReport> {
    let (cl, e) = usable(result)?;
    if d.shape() != (cl.n(), cl.n()) {
        return Err(dim_err(format!("D must be {0}x{0}", cl.n())));
    }
    let points = e.sample_mixed(samples, &mut sample_rng(seed))?;
    let (eig, dec) = decrease_over(cl, &e, d, result.mu, &points)?;
    Ok(VerificationReport {
        mu: result.mu,
        seed,
        worst_nd_eig: Some(eig),
        worst_decrease: Some(dec),
        decrease_samples: points.len(),
        ..Default::default()
    })
}

/// Random `n×n` matrix with spectral norm exactly `radius`.
pub fn sample_d_on_sphere(n: usize, radius: f64, rng: &mut SampleRng) -> Mat {
    if radius == 0.0 {
        return Mat::zeros(n, n);
    }
    loop {
        let g = Mat::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let s = spectral_norm(&g);
        if s > 1e-12 {
            return g * (radius / s);
        }
    }
}

/// `count` matrices with `‖D‖ ≤ δ`: every fifth draw (starting with the first)
/// sits on the boundary `‖D‖ = δ`, the rest have radius uniform in `[0, δ]`.
/// With `δ = 0` the single matrix `D = 0` is returned.
pub fn sample_d_ball(n: usize, delta: f64, count: usize, rng: &mut SampleRng) -> Vec<Mat> {
    if delta == 0.0 {
        return vec![Mat::zeros(n, n)];
    }
    (0..count)
        .map(|i| {
            let radius = if i % 5 == 0 { delta } else { delta * rng.random::<f64>() };
            sample_d_on_sphere(n, radius, rng)
        })
        .collect()
}

/// [`verify_decrease`] for `num_d` matrices drawn from the `δ`-ball.
pub fn verify_robust(
    result: &DesignResult,
    delta: f64,
    num_d: usize,
    samples: usize,
    seed: u64,
) -> Result<VerificationReport> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(invalid(format!("delta must be >= 0, got {delta}")));
    }
    if num_d == 0 {
        return Err(invalid("number of D samples must be >= 1"));
    }
    let (cl, e) = usable(result)?;
    let mut rng = sample_rng(seed);
    let ds = sample_d_ball(cl.n(), delta, num_d, &mut rng);
    let points = e.sample_mixed(samples, &mut rng)?;
    let mut eig = f64::NEG_INFINITY;
    let mut dec = f64::NEG_INFINITY;
    let mut max_norm: f64 = 0.0;
    for d in &ds {
        let (a, b) = decrease_over(cl, &e, d, result.mu, &points)?;
        eig = eig.max(a);
        dec = dec.max(b);
        max_norm = max_norm.max(spectral_norm(d));
    }
    Ok(VerificationReport {
        mu: result.mu,
        seed,
        robust_worst_nd_eig: Some(eig),
        robust_worst_decrease: Some(dec),
        robust_max_d_norm: Some(max_norm),
        robust_num_d: ds.len(),
        ..Default::default()
    })
}

struct Trajectory {
    converged: bool,
    exited: bool,
    violations: usize,
}

fn simulate_from(sys: &BilinearSystem, k: &Mat, e: &Ellipsoid, mu: f64, x0: &Vector, horizon: usize, tol: f64) -> Trajectory {
    let mut x = x0.clone();
    let mut v = e.value(&x);
    let mut out = Trajectory { converged: false, exited: v > 1.0 + LEVEL_SLACK, violations: 0 };
    for _ in 0..horizon {
        let u = (k * &x)[0];
        x = match sys.step(&x, u) {
            Ok(x) => x,
            Err(_) => return Trajectory { converged: false, exited: true, ..out },
        };
        let v_next = e.value(&x);
        if v_next > 1.0 + LEVEL_SLACK {
            out.exited = true;
        }
        if v > 0.0 && v_next >= mu * v + LEVEL_SLACK * v.max(1e-300) && v_next > 0.0 {
            out.violations += 1;
        }
        v = v_next;
    }
    out.converged = x.norm() <= tol * x0.norm().max(1.0);
    out
}

/// Closed-loop simulation of the true system under `u = K x` from `starts`
/// interior points of the ellipsoid.
pub fn verify_basin(
    sys: &BilinearSystem,
    result: &DesignResult,
    starts: usize,
    horizon: usize,
    seed: u64,
) -> Result<VerificationReport> {
    verify_basin_with(sys, result, starts, horizon, VerifyConfig::default().conv_tol, seed)
}

pub fn verify_basin_with(
    sys: &BilinearSystem,
    result: &DesignResult,
    starts: usize,
    horizon: usize,
    conv_tol: f64,
    seed: u64,
) -> Result<VerificationReport> {
    let (_, e) = usable(result)?;
    let k = result.k.as_ref().ok_or_else(|| invalid("design has no gain"))?;
    if k.shape() != (1, sys.n()) || e.n() != sys.n() {
        return Err(dim_err("design and system dimensions differ"));
    }
    if !(conv_tol > 0.0) {
        return Err(invalid("convergence tolerance must be > 0"));
    }
    let points = e.sample(starts, SampleMode::Interior, &mut sample_rng(seed))?;
    Ok(basin_report(sys, k, &e, result.mu, &points, horizon, conv_tol, seed))
}

#[allow(clippy::too_many_arguments)]
fn basin_report(
    sys: &BilinearSystem,
    k: &Mat,
    e: &Ellipsoid,
    mu: f64,
    points: &[Vector],
    horizon: usize,
    conv_tol: f64,
    seed: u64,
) -> VerificationReport {
    let runs: Vec<Trajectory> =
        points.par_iter().map(|x0| simulate_from(sys, k, e, mu, x0, horizon, conv_tol)).collect();
    let converged = runs.iter().filter(|r| r.converged).count();
    VerificationReport {
        mu,
        seed,
        basin_converged_fraction: Some(converged as f64 / runs.len() as f64),
        basin_starts: runs.len(),
        basin_horizon: horizon,
        basin_exits: runs.iter().filter(|r| r.exited).count(),
        basin_monotonicity_violations: runs.iter().map(|r| r.violations).sum(),
        ..Default::default()
    }
}

/// Decrease with the true `D`, robustness over the `δ`-ball and the basin
/// simulation, merged. Sub-checks use seeds `seed`, `seed + 1`, `seed + 2`.
pub fn verify_all(sys: &BilinearSystem, result: &DesignResult, delta: f64, cfg: &VerifyConfig) -> Result<VerificationReport> {
    if cfg.samples == 0 || cfg.num_d == 0 || cfg.basin_starts == 0 {
        return Err(invalid("sample counts must be >= 1"));
    }
    let s = cfg.seed;
    let report = verify_decrease(result, sys.d(), cfg.samples, s)?
        .merge(verify_robust(result, delta, cfg.num_d, cfg.samples, s.wrapping_add(1))?)
        .merge(verify_basin_with(sys, result, cfg.basin_starts, cfg.horizon, cfg.conv_tol, s.wrapping_add(2))?);
    Ok(VerificationReport { seed: s, ..report })
}
