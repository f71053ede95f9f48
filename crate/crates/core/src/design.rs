//! Controller design: the data-based pipeline, the model-based baseline and
//! the `ε₁` line search over both.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed_loop::ClosedLoopData;
use crate::error::{invalid, Error, Result};
use crate::experiment::{diagnose, DataRecord};
use crate::io::format_f64;
use crate::linalg::{logdet_spd, spd_inverse, symmetrize, Mat};
use crate::lmi::{build_data_lmi, build_model_lmi, DesignIneqInputs, MaxDetProblem};
use crate::solver::{solve, Solution, SolveStatus, SolverOptions, TraceRow};
use crate::system::BilinearSystem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignConfig {
    /// Known bound on `‖D‖`.
    pub delta: f64,
    /// Multiplier used by single designs.
    pub eps1: f64,
    /// Grid used by sweeps; strictly increasing and positive.
    pub grid: Vec<f64>,
    /// Required contraction `V(x⁺) < μ V(x)`; `1` for plain decrease.
    pub mu: f64,
    pub solver: SolverOptions,
}

impl DesignConfig {
    pub fn new(delta: f64, eps1: f64) -> Self {
        Self { delta, eps1, grid: default_eps1_grid(), mu: 1.0, solver: SolverOptions::default() }
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    pub fn with_grid(mut self, grid: Vec<f64>) -> Self {
        self.grid = grid;
        self
    }

    pub fn validate(&self) -> Result<()> {
        DesignIneqInputs::new(self.delta, self.eps1, self.mu)?;
        validate_grid(&self.grid)?;
        self.solver.validate()
    }
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(invalid("eps1 grid is empty"));
    }
    if grid.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
        return Err(invalid("eps1 grid entries must be positive and finite"));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("eps1 grid must be strictly increasing"));
    }
    Ok(())
}

/// `points` values spaced logarithmically over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) || points == 0 || (points == 1 && hi != lo) {
        return Err(invalid(format!("bad grid {lo}:{hi}:{points}")));
    }
    if points == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    let step = (b - a) / (points - 1) as f64;
    let mut g: Vec<f64> = (0..points).map(|i| (a + step * i as f64).exp()).collect();
    g[0] = lo;
    g[points - 1] = hi;
    validate_grid(&g)?;
    Ok(g)
}

/// 50 points, log-spaced over `[1e-3, 1e2]`.
pub fn default_eps1_grid() -> Vec<f64> {
    log_grid(1e-3, 1e2, 50).expect("valid constant grid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    DataBased,
    ModelBased,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Provenance::DataBased => "data-based",
            Provenance::ModelBased => "model-based",
        })
    }
}

/// Solver bookkeeping carried along with a design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub newton_steps: usize,
    pub outer_iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worst_margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equality_residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

/// Outcome of one design. Matrices are present only when `status` is optimal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignResult {
    pub provenance: Provenance,
    pub status: SolveStatus,
    pub eps1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps2: Option<f64>,
    pub mu: f64,
    /// Bound on `‖D‖` the design was certified for (data-based only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(rename = "K", default, with = "crate::io::opt_matrix", skip_serializing_if = "Option::is_none")]
    pub k: Option<Mat>,
    #[serde(rename = "G_K", default, with = "crate::io::opt_matrix", skip_serializing_if = "Option::is_none")]
    pub g_k: Option<Mat>,
    #[serde(rename = "P", default, with = "crate::io::opt_matrix", skip_serializing_if = "Option::is_none")]
    pub p: Option<Mat>,
    #[serde(rename = "Q", default, with = "crate::io::opt_matrix", skip_serializing_if = "Option::is_none")]
    pub q: Option<Mat>,
    #[serde(rename = "logdetP", default, skip_serializing_if = "Option::is_none")]
    pub logdet_p: Option<f64>,
    /// Closed-loop matrices used by the verification step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closed_loop: Option<ClosedLoopData>,
    pub solve: SolveSummary,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TraceRow>,
}

impl DesignResult {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    /// `det P`, when available.
    pub fn det_p(&self) -> Option<f64> {
        self.logdet_p.map(f64::exp)
    }

    fn failed(provenance: Provenance, eps1: f64, mu: f64, delta: Option<f64>, sol: &Solution) -> Self {
        Self {
            provenance,
            status: sol.status,
            eps1,
            eps2: None,
            mu,
            delta,
            k: None,
            g_k: None,
            p: None,
            q: None,
            logdet_p: None,
            closed_loop: None,
            solve: summary(sol),
            trace: sol.trace.clone(),
        }
    }

    fn demote(mut self, reason: String) -> Self {
        self.status = SolveStatus::NumericalTrouble;
        self.k = None;
        self.g_k = None;
        self.p = None;
        self.q = None;
        self.logdet_p = None;
        self.closed_loop = None;
        self.eps2 = None;
        self.solve.message = Some(reason);
        self
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        crate::io::write_json(path, self)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        crate::io::read_json(path)
    }
}

fn summary(sol: &Solution) -> SolveSummary {
    SolveSummary {
        newton_steps: sol.newton_steps,
        outer_iterations: sol.outer_iterations,
        worst_margin: Some(sol.worst_margin()).filter(|v| v.is_finite()),
        equality_residual: Some(sol.equality_residual).filter(|v| v.is_finite()),
        message: sol.message.clone(),
    }
}

/// `Q = P⁻¹` with a symmetry re-projection, plus the checks every design
/// must pass. Returns `(Q, log det P)`.
fn invert_p(p: &Mat) -> std::result::Result<(Mat, f64), String> {
    let q = spd_inverse(p).ok_or("P is not positive definite")?;
    let q = symmetrize(&q);
    let n = p.nrows();
    let qp_err = (&q * p - Mat::identity(n, n)).amax();
    if qp_err > 1e-9 {
        return Err(format!("Q·P deviates from I by {qp_err:e}"));
    }
    let logdet = logdet_spd(p).ok_or("P is not positive definite")?;
    Ok((q, logdet))
}

fn solve_with(problem: &MaxDetProblem, options: &SolverOptions) -> Solution {
    solve(problem, options)
}

/// Data-based design for the fixed `cfg.eps1`.
pub fn design_data_based(data: &DataRecord, cfg: &DesignConfig) -> Result<DesignResult> {
    let inputs = DesignIneqInputs::new(cfg.delta, cfg.eps1, cfg.mu)?;
    cfg.solver.validate()?;
    let diag = diagnose(data);
    if !diag.full_row_rank {
        return Err(Error::RankDeficient { rank: diag.rank_x0, n: data.n() });
    }
    let (problem, vars) = build_data_lmi(data, &inputs)?;
    let sol = solve_with(&problem, &cfg.solver);
    let base = DesignResult::failed(Provenance::DataBased, cfg.eps1, cfg.mu, Some(cfg.delta), &sol);
    if sol.status != SolveStatus::Optimal {
        return Ok(base);
    }
    let p = symmetrize(&vars.p.read(&sol.x));
    let y = vars.y.read(&sol.x);
    let (q, logdet) = match invert_p(&p) {
        Ok(v) => v,
        Err(e) => return Ok(base.demote(e)),
    };
    let g_k = y.transpose() * &q;
    let closed_loop = match ClosedLoopData::from_data(data, &g_k) {
        Ok(cl) => cl,
        Err(e) => return Ok(base.demote(e.to_string())),
    };
    let k = data.u0() * &g_k;
    Ok(DesignResult {
        eps2: Some(sol.x[vars.eps2]),
        k: Some(k),
        g_k: Some(g_k),
        p: Some(p),
        q: Some(q),
        logdet_p: Some(logdet),
        closed_loop: Some(closed_loop),
        ..base
    })
}

/// Model-based baseline using the true `(A, B, D)`.
pub fn design_model_based(sys: &BilinearSystem, eps1: f64, options: &SolverOptions) -> Result<DesignResult> {
    options.validate()?;
    let (problem, vars) = build_model_lmi(sys, eps1)?;
    let sol = solve_with(&problem, options);
    let base = DesignResult::failed(Provenance::ModelBased, eps1, 1.0, None, &sol);
    if sol.status != SolveStatus::Optimal {
        return Ok(base);
    }
    let p = symmetrize(&vars.p.read(&sol.x));
    let y = vars.y.read(&sol.x);
    let (q, logdet) = match invert_p(&p) {
        Ok(v) => v,
        Err(e) => return Ok(base.demote(e)),
    };
    let k = y.transpose() * &q;
    let closed_loop = ClosedLoopData::from_model(sys, &k)?;
    Ok(DesignResult {
        k: Some(k),
        p: Some(p),
        q: Some(q),
        logdet_p: Some(logdet),
        closed_loop: Some(closed_loop),
        ..base
    })
}

/// What a sweep designs for.
#[derive(Debug, Clone, Copy)]
pub enum SweepTarget<'a> {
    Data(&'a DataRecord),
    Model(&'a BilinearSystem),
    Both { data: &'a DataRecord, sys: &'a BilinearSystem },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eps1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_based: Option<DesignResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_based: Option<DesignResult>,
    /// `‖K_DB − K_MB‖ / ‖K_MB‖`, present only when both designs succeeded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_gain_diff: Option<f64>,
}

impl SweepRow {
    pub fn result(&self, provenance: Provenance) -> Option<&DesignResult> {
        match provenance {
            Provenance::DataBased => self.data_based.as_ref(),
            Provenance::ModelBased => self.model_based.as_ref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

/// Sentinel for designs that could not even be attempted (e.g. rank-deficient
/// data); stored as a row with `NumericalTrouble` status and the error text.
fn errored(provenance: Provenance, eps1: f64, mu: f64, err: &Error) -> DesignResult {
    DesignResult {
        provenance,
        status: SolveStatus::NumericalTrouble,
        eps1,
        eps2: None,
        mu,
        delta: None,
        k: None,
        g_k: None,
        p: None,
        q: None,
        logdet_p: None,
        closed_loop: None,
        solve: SolveSummary {
            newton_steps: 0,
            outer_iterations: 0,
            worst_margin: None,
            equality_residual: None,
            message: Some(err.to_string()),
        },
        trace: Vec::new(),
    }
}

fn rel_gain_diff(db: Option<&DesignResult>, mb: Option<&DesignResult>) -> Option<f64> {
    let kd = db.filter(|r| r.is_optimal())?.k.as_ref()?;
    let km = mb.filter(|r| r.is_optimal())?.k.as_ref()?;
    let denom = km.norm();
    (denom > 0.0).then(|| (kd - km).norm() / denom)
}

/// One design per grid point of `cfg.grid`, in grid order. Failures are
/// recorded in the rows, never raised; only a malformed configuration errors.
pub fn sweep_eps1(target: SweepTarget<'_>, cfg: &DesignConfig) -> Result<SweepTable> {
    validate_grid(&cfg.grid)?;
    cfg.solver.validate()?;
    if !(cfg.delta > 0.0) || !(cfg.mu > 0.0 && cfg.mu <= 1.0) {
        return Err(invalid("delta must be > 0 and mu in (0, 1]"));
    }
    let (data, sys) = match target {
        SweepTarget::Data(d) => (Some(d), None),
        SweepTarget::Model(s) => (None, Some(s)),
        SweepTarget::Both { data, sys } => (Some(data), Some(sys)),
    };
    let rows = cfg
        .grid
        .par_iter()
        .map(|&eps1| {
            let data_based = data.map(|d| {
                let c = DesignConfig { eps1, ..cfg.clone() };
                design_data_based(d, &c).unwrap_or_else(|e| errored(Provenance::DataBased, eps1, cfg.mu, &e))
            });
            let model_based = sys.map(|s| {
                design_model_based(s, eps1, &cfg.solver)
                    .unwrap_or_else(|e| errored(Provenance::ModelBased, eps1, 1.0, &e))
            });
            let rel = rel_gain_diff(data_based.as_ref(), model_based.as_ref());
            SweepRow { eps1, data_based, model_based, rel_gain_diff: rel }
        })
        .collect();
    Ok(SweepTable { rows })
}

impl SweepTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Optimal results of one pipeline, in grid order.
    pub fn feasible(&self, provenance: Provenance) -> impl Iterator<Item = &DesignResult> {
        self.rows.iter().filter_map(move |r| r.result(provenance)).filter(|r| r.is_optimal())
    }

    pub fn pipelines(&self) -> Vec<Provenance> {
        let mut out = Vec::new();
        if self.rows.iter().any(|r| r.data_based.is_some()) {
            out.push(Provenance::DataBased);
        }
        if self.rows.iter().any(|r| r.model_based.is_some()) {
            out.push(Provenance::ModelBased);
        }
        out
    }

    /// Long-format CSV, one line per (grid point, pipeline):
    /// `eps1,pipeline,status,detP,logdetP,K1..Kn,rel_gain_diff`. Missing
    /// values are empty cells.
    pub fn to_csv(&self) -> String {
        let n = self
            .rows
            .iter()
            .flat_map(|r| [r.data_based.as_ref(), r.model_based.as_ref()])
            .flatten()
            .find_map(|r| r.k.as_ref().map(|k| k.ncols()))
            .unwrap_or(0);
        let mut out = String::from("eps1,pipeline,status,detP,logdetP");
        for i in 1..=n {
            out.push_str(&format!(",K{i}"));
        }
        out.push_str(",rel_gain_diff\n");
        let opt = |v: Option<f64>| v.map(format_f64).unwrap_or_default();
        for row in &self.rows {
            for res in [row.data_based.as_ref(), row.model_based.as_ref()].into_iter().flatten() {
                out.push_str(&format!(
                    "{},{},{},{},{}",
                    format_f64(row.eps1),
                    res.provenance,
                    res.status,
                    opt(res.det_p()),
                    opt(res.logdet_p)
                ));
                for i in 0..n {
                    out.push(',');
                    out.push_str(&opt(res.k.as_ref().map(|k| k[(0, i)])));
                }
                out.push(',');
                out.push_str(&opt(row.rel_gain_diff));
                out.push('\n');
            }
        }
        out
    }
}

/// Feasible design of `provenance` maximizing `det P`; ties go to the smaller `ε₁`.
pub fn best_design_for(table: &SweepTable, provenance: Provenance) -> Result<DesignResult> {
    let mut best: Option<&DesignResult> = None;
    for r in table.feasible(provenance) {
        let Some(l) = r.logdet_p else { continue };
        match best {
            Some(b) if b.logdet_p.unwrap_or(f64::NEG_INFINITY) > l => {}
            Some(b) if b.logdet_p == Some(l) && b.eps1 <= r.eps1 => {}
            _ => best = Some(r),
        }
    }
    best.cloned().ok_or(Error::NotFound)
}

/// [`best_design_for`] on the data-based column when the table has one,
/// otherwise on the model-based column.
pub fn best_design(table: &SweepTable) -> Result<DesignResult> {
    let provenance = table.pipelines().first().copied().ok_or(Error::NotFound)?;
    best_design_for(table, provenance)
}
