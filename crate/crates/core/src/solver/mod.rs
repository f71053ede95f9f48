//! Determinant maximization under LMI and linear equality constraints.
//!
//! minimize `−log det P(x)` s.t. `F_i(x) ≺ 0`, `A x = b`.
//!
//! Strict inequalities are enforced with a margin: `F_i(x) ⪯ −σ_i I`.
//! Equalities are eliminated by a null-space parametrization, directions that
//! no constraint sees are dropped, and the remaining problem is solved by a
//! barrier path-following method: a phase I (`min s` s.t. `F_i + σ_i I ⪯ sI`,
//! `P ⪰ −sI`) finds a strictly feasible start, then `t·(−log det P) −
//! Σ log det(−F_i − σ_i I)` is centered for `t = t0, 10·t0, …` until the
//! duality-gap bound `rows/t` drops below tolerance.

mod barrier;
mod newton;
mod reduce;

use serde::{Deserialize, Serialize};

use crate::lmi::MaxDetProblem;
use crate::linalg::{logdet_spd, sym_eigenvalues, Mat, Vector};

use barrier::{Barrier, PdForm};
use newton::{center, CenterOutcome, Trouble};
use reduce::{drop_invisible, eliminate_equalities, negated, restrict, restricted_by, EqualityOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Overrides every constraint's default strict-inequality margin.
    pub margin: Option<f64>,
    pub t_init: f64,
    pub t_growth: f64,
    /// Tolerance on half the squared Newton decrement.
    pub newton_tol: f64,
    /// Stop when `rows / t` falls below this.
    pub gap_tol: f64,
    pub max_outer_iterations: usize,
    pub max_newton_steps: usize,
    pub ls_slope: f64,
    pub ls_shrink: f64,
    /// Keep a per-centering trace in the solution.
    pub trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            margin: None,
            t_init: 1.0,
            t_growth: 10.0,
            newton_tol: 1e-10,
            gap_tol: 1e-7,
            max_outer_iterations: 60,
            max_newton_steps: 100,
            ls_slope: 0.25,
            ls_shrink: 0.5,
            trace: false,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> crate::Result<()> {
        let positive = [self.t_init, self.newton_tol, self.gap_tol, self.ls_slope, self.ls_shrink];
        if positive.iter().any(|v| !(*v > 0.0)) || self.margin.is_some_and(|m| !(m > 0.0)) {
            return Err(crate::error::invalid("solver options must be positive"));
        }
        if !(self.t_growth > 1.0) || self.ls_shrink >= 1.0 || self.ls_slope >= 0.5 {
            return Err(crate::error::invalid("need t_growth > 1, ls_shrink < 1, ls_slope < 0.5"));
        }
        if self.max_outer_iterations == 0 || self.max_newton_steps == 0 {
            return Err(crate::error::invalid("iteration limits must be >= 1"));
        }
        Ok(())
    }

    fn margin_for(&self, form: &crate::lmi::AffineSymmetricForm) -> f64 {
        self.margin.unwrap_or_else(|| form.default_margin())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    NumericalTrouble,
    IterationLimit,
}

impl SolveStatus {
    pub fn is_optimal(self) -> bool {
        self == SolveStatus::Optimal
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::NumericalTrouble => "numerical-trouble",
            SolveStatus::IterationLimit => "iteration-limit",
        })
    }
}

/// Extreme eigenvalues of one constraint at a point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintMargin {
    pub label: String,
    /// Least negative eigenvalue; the constraint holds iff this is `< 0`.
    pub max_eig: f64,
    pub min_eig: f64,
    /// Margin the solver enforced.
    pub required: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Feasibility,
    Optimality,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub phase: Phase,
    pub outer: usize,
    pub t: f64,
    /// `s` in phase I, `−log det P` in phase II.
    pub objective: f64,
    pub worst_margin: f64,
    pub newton_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub status: SolveStatus,
    pub variables: Vec<String>,
    pub x: Vec<f64>,
    /// `−log det P` at `x` (infinite if `P` is not positive definite).
    pub objective: f64,
    pub margins: Vec<ConstraintMargin>,
    pub equality_residual: f64,
    pub newton_steps: usize,
    pub outer_iterations: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TraceRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl Solution {
    pub fn value(&self, name: &str) -> Option<f64> {
        self.variables.iter().position(|n| n == name).map(|i| self.x[i])
    }

    /// Largest eigenvalue over all constraints.
    pub fn worst_margin(&self) -> f64 {
        self.margins.iter().map(|m| m.max_eig).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Iteration trace as CSV.
    pub fn trace_csv(&self) -> String {
        trace_csv(&self.trace)
    }
}

/// `phase,outer,t,objective,worst_margin,newton_steps`, one line per centering.
pub fn trace_csv(trace: &[TraceRow]) -> String {
    let mut out = String::from("phase,outer,t,objective,worst_margin,newton_steps\n");
    for r in trace {
        let phase = match r.phase {
            Phase::Feasibility => "feasibility",
            Phase::Optimality => "optimality",
        };
        out.push_str(&format!(
            "{phase},{},{},{},{},{}\n",
            r.outer,
            crate::io::format_f64(r.t),
            crate::io::format_f64(r.objective),
            crate::io::format_f64(r.worst_margin),
            r.newton_steps
        ));
    }
    out
}

/// Exact evaluation of every constraint and equality at `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionCheck {
    pub margins: Vec<ConstraintMargin>,
    pub equality_residuals: Vec<f64>,
    pub equality_residual_norm: f64,
}

impl SolutionCheck {
    pub fn all_negative(&self) -> bool {
        self.margins.iter().all(|m| m.max_eig < 0.0)
    }
}

pub fn check_solution(problem: &MaxDetProblem, x: &[f64], options: &SolverOptions) -> SolutionCheck {
    assert_eq!(x.len(), problem.num_vars(), "assignment must cover every variable");
    let margins = problem
        .constraints
        .iter()
        .map(|f| {
            let ev = sym_eigenvalues(&f.evaluate(x));
            ConstraintMargin {
                label: f.label().to_string(),
                max_eig: ev.last().copied().unwrap_or(f64::NEG_INFINITY),
                min_eig: ev.first().copied().unwrap_or(f64::INFINITY),
                required: options.margin_for(f),
            }
        })
        .collect();
    let equality_residuals: Vec<f64> = problem.equalities.iter().map(|e| e.residual(x)).collect();
    let equality_residual_norm = equality_residuals.iter().map(|r| r * r).sum::<f64>().sqrt();
    SolutionCheck { margins, equality_residuals, equality_residual_norm }
}

fn objective_value(problem: &MaxDetProblem, x: &[f64]) -> f64 {
    let p: Mat = problem.objective.read(x);
    logdet_spd(&p).map_or(f64::INFINITY, |l| -l)
}

/// `P` with geometric-mean eigenvalue beyond this is taken as evidence that
/// the objective is unbounded (the feasible set contains a ray along which
/// `P` grows).
const UNBOUNDED_EIG: f64 = 1e12;

/// Problem restricted to the free directions, ready for the barrier.
struct Prepared {
    x0: Vector,
    basis: Mat,
    /// `(F_i + σ_i I)` in reduced variables.
    constraints: Vec<(Mat, Vec<Mat>)>,
    objective: (Mat, Vec<Mat>),
}

impl Prepared {
    fn new(problem: &MaxDetProblem, options: &SolverOptions) -> Result<Self, f64> {
        let red = match eliminate_equalities(problem) {
            EqualityOutcome::Ok(r) => r,
            EqualityOutcome::Inconsistent { residual } => return Err(residual),
        };
        let obj_form = problem.objective_form();
        let mut all: Vec<(Mat, Vec<Mat>)> = problem.constraints.iter().map(|f| restrict(f, &red)).collect();
        all.push(restrict(&obj_form, &red));
        let (red, keep) = drop_invisible(red, &all);
        let mut all: Vec<(Mat, Vec<Mat>)> = all.iter().map(|(c, a)| restricted_by(c, a, &keep)).collect();
        let objective = all.pop().expect("objective present");
        let constraints = all
            .into_iter()
            .zip(&problem.constraints)
            .map(|((c, a), f)| {
                let dim = c.nrows();
                (c + Mat::identity(dim, dim) * options.margin_for(f), a)
            })
            .collect();
        Ok(Self { x0: red.x0, basis: red.basis, constraints, objective })
    }

    fn nvars(&self) -> usize {
        self.basis.ncols()
    }

    fn full_point(&self, w: &Vector) -> Vec<f64> {
        (&self.x0 + &self.basis * w).iter().copied().collect()
    }

    /// Largest eigenvalue of the shifted constraints at `w`.
    fn worst_shifted(&self, w: &Vector) -> f64 {
        self.constraints
            .iter()
            .map(|(c, a)| {
                let mut m = c.clone();
                for (aj, &wj) in a.iter().zip(w.iter()) {
                    m += aj * wj;
                }
                crate::linalg::max_eigenvalue(&m)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn objective_matrix(&self, w: &Vector) -> Mat {
        let (c, a) = &self.objective;
        let mut m = c.clone();
        for (aj, &wj) in a.iter().zip(w.iter()) {
            m += aj * wj;
        }
        m
    }

    /// Phase II barrier over `w`.
    fn optimality_barrier(&self) -> Barrier {
        Barrier {
            forms: self.constraints.iter().map(|(c, a)| negated(c, a, 0.0)).collect(),
            objective: Some(PdForm { c: self.objective.0.clone(), coeffs: self.objective.1.clone() }),
            linear: None,
        }
    }

    /// Phase I barrier over `(w, s)` with `s` last.
    fn feasibility_barrier(&self, s_floor: f64) -> Barrier {
        let r = self.nvars();
        let with_s = |c: &Mat, a: &[Mat], s_coeff: f64| {
            let dim = c.nrows();
            let mut coeffs = a.to_vec();
            coeffs.push(Mat::identity(dim, dim) * s_coeff);
            (c.clone(), coeffs)
        };
        let mut forms: Vec<PdForm> = self
            .constraints
            .iter()
            .map(|(c, a)| {
                // −(F(w) − sI) ≻ 0
                let (c, coeffs) = with_s(c, a, -1.0);
                negated(&c, &coeffs, 0.0)
            })
            .collect();
        // P(w) + sI ≻ 0
        let (c, coeffs) = with_s(&self.objective.0, &self.objective.1, 1.0);
        forms.push(PdForm { c, coeffs });
        // s − s_floor > 0
        let mut floor_coeffs = vec![Mat::zeros(1, 1); r];
        floor_coeffs.push(Mat::from_element(1, 1, 1.0));
        forms.push(PdForm { c: Mat::from_element(1, 1, -s_floor), coeffs: floor_coeffs });
        let mut linear = Vector::zeros(r + 1);
        linear[r] = 1.0;
        Barrier { forms, objective: None, linear: Some(linear) }
    }
}

/// Outcome of the feasibility phase.
#[derive(Debug, Clone, PartialEq)]
pub enum Phase1Outcome {
    /// Every constraint holds with its margin at `x`.
    Feasible { x: Vec<f64>, s: f64 },
    /// The phase-I optimum is provably above `−σ`.
    Infeasible { lower_bound: f64, equality_residual: Option<f64> },
    NumericalTrouble(String),
    IterationLimit,
}

struct Phase1Run {
    outcome: Phase1Outcome,
    w: Option<Vector>,
}

fn run_phase1(prep: &Prepared, options: &SolverOptions, steps: &mut usize, trace: &mut Vec<TraceRow>) -> Phase1Run {
    let r = prep.nvars();
    let w0 = Vector::zeros(r);
    let start_worst = prep.worst_shifted(&w0).max(crate::linalg::max_eigenvalue(&-prep.objective_matrix(&w0)));
    if start_worst < 0.0 && prep.worst_shifted(&w0) < 0.0 {
        return Phase1Run { outcome: Phase1Outcome::Feasible { x: prep.full_point(&w0), s: start_worst }, w: Some(w0) };
    }
    let s0 = 1.0 + start_worst.max(0.0);
    let s_floor = -(1.0 + s0.abs());
    let barrier = prep.feasibility_barrier(s_floor);
    let rows = barrier.rows() as f64;
    let mut v = w0.clone().insert_row(r, s0);
    let mut t = options.t_init / s0;
    let done = |v: &Vector| v[r] < 0.0;
    for outer in 0..options.max_outer_iterations {
        let before = *steps;
        let outcome = match center(&barrier, &mut v, t, options, steps, done) {
            Ok(o) => o,
            Err(Trouble(msg)) => return Phase1Run { outcome: Phase1Outcome::NumericalTrouble(msg), w: None },
        };
        let s = v[r];
        if options.trace {
            trace.push(TraceRow {
                phase: Phase::Feasibility,
                outer,
                t,
                objective: s,
                worst_margin: prep.worst_shifted(&v.rows(0, r).into_owned()),
                newton_steps: *steps - before,
            });
        }
        let w = v.rows(0, r).into_owned();
        if s < 0.0 {
            return Phase1Run { outcome: Phase1Outcome::Feasible { x: prep.full_point(&w), s }, w: Some(w) };
        }
        if outcome == CenterOutcome::Centered {
            let lower_bound = s - rows / t;
            if lower_bound > 0.0 || rows / t < options.gap_tol {
                return Phase1Run {
                    outcome: Phase1Outcome::Infeasible { lower_bound, equality_residual: None },
                    w: None,
                };
            }
        }
        t *= options.t_growth;
    }
    Phase1Run { outcome: Phase1Outcome::IterationLimit, w: None }
}

/// Find a point where every constraint holds with its margin.
pub fn phase1(problem: &MaxDetProblem, options: &SolverOptions) -> Phase1Outcome {
    let prep = match Prepared::new(problem, options) {
        Ok(p) => p,
        Err(residual) => {
            return Phase1Outcome::Infeasible { lower_bound: f64::INFINITY, equality_residual: Some(residual) }
        }
    };
    run_phase1(&prep, options, &mut 0, &mut Vec::new()).outcome
}

/// Solve the maxdet problem.
pub fn solve(problem: &MaxDetProblem, options: &SolverOptions) -> Solution {
    let variables = problem.variables.names().to_vec();
    let m = problem.num_vars();
    let fail = |status: SolveStatus, x: Vec<f64>, steps: usize, outer: usize, trace: Vec<TraceRow>, msg: String| {
        let check = check_solution(problem, &x, options);
        Solution {
            status,
            variables: variables.clone(),
            objective: objective_value(problem, &x),
            x,
            margins: check.margins,
            equality_residual: check.equality_residual_norm,
            newton_steps: steps,
            outer_iterations: outer,
            trace,
            message: Some(msg),
        }
    };
    if let Err(e) = options.validate() {
        return fail(SolveStatus::NumericalTrouble, vec![0.0; m], 0, 0, Vec::new(), e.to_string());
    }
    let prep = match Prepared::new(problem, options) {
        Ok(p) => p,
        Err(residual) => {
            return fail(
                SolveStatus::Infeasible,
                vec![0.0; m],
                0,
                0,
                Vec::new(),
                format!("equality constraints are inconsistent (least-squares residual {residual:e})"),
            )
        }
    };

    let mut steps = 0;
    let mut trace = Vec::new();
    let p1 = run_phase1(&prep, options, &mut steps, &mut trace);
    let mut w = match (p1.outcome, p1.w) {
        (Phase1Outcome::Feasible { .. }, Some(w)) => w,
        (Phase1Outcome::Infeasible { lower_bound, .. }, _) => {
            return fail(
                SolveStatus::Infeasible,
                prep.full_point(&Vector::zeros(prep.nvars())),
                steps,
                0,
                trace,
                format!("phase I optimum bounded below by {lower_bound:e} (needs < 0 after margin shift)"),
            )
        }
        (Phase1Outcome::NumericalTrouble(msg), _) => {
            return fail(SolveStatus::NumericalTrouble, prep.full_point(&Vector::zeros(prep.nvars())), steps, 0, trace, msg)
        }
        _ => {
            return fail(
                SolveStatus::IterationLimit,
                prep.full_point(&Vector::zeros(prep.nvars())),
                steps,
                0,
                trace,
                "phase I did not terminate".into(),
            )
        }
    };

    let barrier = prep.optimality_barrier();
    let rows = barrier.rows() as f64;
    let mut t = options.t_init;
    let mut status = SolveStatus::IterationLimit;
    let mut message = None;
    let mut outer_done = 0;
    for outer in 0..options.max_outer_iterations {
        outer_done = outer + 1;
        let before = steps;
        let outcome = match center(&barrier, &mut w, t, options, &mut steps, |_| false) {
            Ok(o) => o,
            Err(Trouble(msg)) => {
                status = SolveStatus::NumericalTrouble;
                message = Some(msg);
                break;
            }
        };
        if options.trace {
            let obj = logdet_spd(&prep.objective_matrix(&w)).map_or(f64::INFINITY, |l| -l);
            trace.push(TraceRow {
                phase: Phase::Optimality,
                outer,
                t,
                objective: obj,
                worst_margin: prep.worst_shifted(&w),
                newton_steps: steps - before,
            });
        }
        let logdet = logdet_spd(&prep.objective_matrix(&w)).unwrap_or(f64::NEG_INFINITY);
        if logdet > problem.objective.n as f64 * UNBOUNDED_EIG.ln() {
            message = Some(format!("objective appears unbounded: log det P = {logdet:.1}"));
            break;
        }
        if rows / t < options.gap_tol {
            if outcome == CenterOutcome::StepLimit {
                message = Some("final centering hit the Newton step limit".into());
            } else {
                status = SolveStatus::Optimal;
            }
            break;
        }
        t *= options.t_growth;
    }

    let x = polish_equalities(problem, prep.full_point(&w), options);
    let check = check_solution(problem, &x, options);
    let (_, b) = problem.equality_system();
    let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if status == SolveStatus::Optimal {
        let margins_ok = check.margins.iter().all(|m| m.max_eig <= -m.required / 2.0);
        let eq_ok = check.equality_residual_norm <= 1e-9 * (1.0 + b_norm);
        if !(margins_ok && eq_ok) {
            status = SolveStatus::NumericalTrouble;
            message = Some(format!(
                "postcondition failed: worst eigenvalue {:e}, equality residual {:e}",
                check.margins.iter().map(|m| m.max_eig).fold(f64::NEG_INFINITY, f64::max),
                check.equality_residual_norm
            ));
        }
    }
    Solution {
        status,
        variables,
        objective: objective_value(problem, &x),
        x,
        margins: check.margins,
        equality_residual: check.equality_residual_norm,
        newton_steps: steps,
        outer_iterations: outer_done,
        trace,
        message,
    }
}

/// One least-squares correction `x ← x − A⁺(Ax − b)` to remove the rounding
/// the null-space parametrization accumulates at large iterates. Kept only if
/// it lowers the residual without breaking any constraint margin.
fn polish_equalities(problem: &MaxDetProblem, x: Vec<f64>, options: &SolverOptions) -> Vec<f64> {
    if problem.equalities.is_empty() {
        return x;
    }
    let (a, b) = problem.equality_system();
    let xv = Vector::from_column_slice(&x);
    let r = &a * &xv - Vector::from_vec(b);
    if r.norm() == 0.0 {
        return x;
    }
    let Ok(dx) = a.svd(true, true).solve(&r, 1e-13) else { return x };
    let polished: Vec<f64> = (xv - dx).iter().copied().collect();
    let before = check_solution(problem, &x, options);
    let after = check_solution(problem, &polished, options);
    let margins_hold = after.margins.iter().all(|m| m.max_eig <= -m.required / 2.0);
    if after.equality_residual_norm < before.equality_residual_norm && margins_hold {
        polished
    } else {
        x
    }
}

/// Barrier value, gradient and Hessian over the full variable vector:
/// `t·(−log det P(x)) − Σ log det(−F_i(x) − σ_i I)`. Exposed for
/// derivative checks; `None` outside the domain.
pub fn barrier_derivatives(
    problem: &MaxDetProblem,
    x: &[f64],
    t: f64,
    options: &SolverOptions,
) -> Option<(f64, Vec<f64>, Mat)> {
    let m = problem.num_vars();
    let to_pd = |f: &crate::lmi::AffineSymmetricForm, sign: f64, shift: f64| {
        let dim = f.dim();
        let mut coeffs = vec![Mat::zeros(dim, dim); m];
        for (v, a) in f.terms() {
            coeffs[v] = a * sign;
        }
        PdForm { c: (f.constant() + Mat::identity(dim, dim) * shift) * sign, coeffs }
    };
    let barrier = Barrier {
        forms: problem.constraints.iter().map(|f| to_pd(f, -1.0, options.margin_for(f))).collect(),
        objective: Some(to_pd(&problem.objective_form(), 1.0, 0.0)),
        linear: None,
    };
    let (f, g, h) = barrier.derivatives(&Vector::from_column_slice(x), t)?;
    Some((f, g.iter().copied().collect(), h))
}

/// Barrier value only (see [`barrier_derivatives`]).
pub fn barrier_value(problem: &MaxDetProblem, x: &[f64], t: f64, options: &SolverOptions) -> Option<f64> {
    barrier_derivatives(problem, x, t, options).map(|(f, _, _)| f)
}
