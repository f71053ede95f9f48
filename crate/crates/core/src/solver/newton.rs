//! Damped Newton centering on a barrier.

use crate::linalg::{Mat, Vector};

use super::barrier::Barrier;
use super::SolverOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum CenterOutcome {
    /// Newton decrement below tolerance (or no further progress possible).
    Centered,
    /// `stop` returned true.
    Stopped,
    /// Step budget exhausted before centering.
    StepLimit,
}

#[derive(Debug)]
pub(crate) struct Trouble(pub String);

/// Solve `H Δ = −g` on the Jacobi-scaled system `(S H S) S⁻¹Δ = −S g`,
/// `S = diag(H)^{-1/2}`, regularizing at most three times before giving up.
fn newton_direction(h: &Mat, g: &Vector) -> Result<Vector, Trouble> {
    let n = h.nrows();
    let s = Vector::from_fn(n, |i, _| {
        let d = h[(i, i)];
        if d > 0.0 && d.is_finite() { 1.0 / d.sqrt() } else { 1.0 }
    });
    let hs = Mat::from_fn(n, n, |i, j| h[(i, j)] * s[i] * s[j]);
    let gs = g.component_mul(&s);
    let unscale = |z: Vector| -z.component_mul(&s);
    if let Some(ch) = hs.clone().cholesky() {
        return Ok(unscale(ch.solve(&gs)));
    }
    let scale = hs.diagonal().amax().max(1.0);
    let mut reg = 1e-12 * scale;
    for _ in 0..3 {
        let shifted = &hs + Mat::identity(n, n) * reg;
        if let Some(ch) = shifted.cholesky() {
            return Ok(unscale(ch.solve(&gs)));
        }
        reg *= 10.0;
    }
    Err(Trouble("Hessian factorization failed after regularization".into()))
}

/// Minimize `barrier(·, t)` from `v` (modified in place). `stop` is checked
/// after every accepted step.
pub(crate) fn center(
    barrier: &Barrier,
    v: &mut Vector,
    t: f64,
    opts: &SolverOptions,
    steps: &mut usize,
    mut stop: impl FnMut(&Vector) -> bool,
) -> Result<CenterOutcome, Trouble> {
    for _ in 0..opts.max_newton_steps {
        let (f, g, h) = barrier
            .derivatives(v, t)
            .ok_or_else(|| Trouble("iterate left the barrier domain".into()))?;
        if !(f.is_finite() && g.iter().all(|x| x.is_finite())) {
            return Err(Trouble("non-finite barrier derivatives".into()));
        }
        let dir = newton_direction(&h, &g)?;
        let slope = g.dot(&dir);
        let decrement_sq = -slope;
        if decrement_sq / 2.0 <= opts.newton_tol {
            return Ok(CenterOutcome::Centered);
        }
        let mut alpha = 1.0;
        while !barrier.is_feasible(&(&*v + &dir * alpha)) {
            alpha *= opts.ls_shrink;
            if alpha < 1e-18 {
                return Err(Trouble("line search could not stay strictly feasible".into()));
            }
        }
        let accepted = loop {
            let trial = &*v + &dir * alpha;
            match barrier.value(&trial, t) {
                // `ft < f` rejects steps lost entirely to rounding
                Some(ft) if ft <= f + opts.ls_slope * alpha * slope && ft < f => break Some(trial),
                _ => {}
            }
            alpha *= opts.ls_shrink;
            if alpha < 1e-14 {
                break None;
            }
        };
        *steps += 1;
        match accepted {
            Some(trial) => *v = trial,
            // round-off floor: no descent available along the Newton direction
            None => return Ok(CenterOutcome::Centered),
        }
        if stop(v) {
            return Ok(CenterOutcome::Stopped);
        }
    }
    Ok(CenterOutcome::StepLimit)
}
