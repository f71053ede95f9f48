//! Random instance generators shared by the integration tests.
#![allow(dead_code)]

use bilinear_dd::linalg::{spectral_norm, Mat, Vector};
use bilinear_dd::lmi::{AffineSymmetricForm, LinearEquality, MaxDetProblem, Variables};
use bilinear_dd::{BilinearSystem, DataRecord};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> Mat {
    let a = gaussian(rng, n, n);
    &a * a.transpose() + Mat::identity(n, n) * 0.1
}

/// Random orthogonal matrix from the QR factor of a Gaussian matrix.
pub fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> Mat {
    gaussian(rng, n, n).qr().q()
}

/// `p×q` matrix with singular values `s` (padded with zeros).
pub fn with_singular_values(rng: &mut ChaCha8Rng, p: usize, q: usize, s: &[f64]) -> Mat {
    let u = random_orthogonal(rng, p);
    let v = random_orthogonal(rng, q);
    let mut sig = Mat::zeros(p, q);
    for (i, &si) in s.iter().enumerate().take(p.min(q)) {
        sig[(i, i)] = si;
    }
    u * sig * v.transpose()
}

pub fn scale_to_norm(m: Mat, radius: f64) -> Mat {
    let s = spectral_norm(&m);
    if s == 0.0 {
        m
    } else {
        m * (radius / s)
    }
}

/// Random single-input bilinear system of size `n`.
pub fn random_system(rng: &mut ChaCha8Rng, n: usize) -> BilinearSystem {
    let a = gaussian(rng, n, n) * 0.5;
    let b = gaussian(rng, n, 1);
    let d = gaussian(rng, n, n) * 0.3;
    BilinearSystem::new(a, b, d).unwrap()
}

/// Data record built from independent random states and inputs (not a
/// trajectory), consistent with `sys`: `X1 = A X0 + B U0 + D V0`.
pub fn random_record(rng: &mut ChaCha8Rng, sys: &BilinearSystem, t: usize) -> DataRecord {
    let n = sys.n();
    let x0 = gaussian(rng, n, t);
    let u0 = gaussian(rng, 1, t);
    let v0 = bilinear_dd::experiment::assemble_v0(&u0, &x0).unwrap();
    let x1 = sys.a() * &x0 + sys.b() * &u0 + sys.d() * &v0;
    DataRecord::new(u0, x0, x1).unwrap()
}

/// A right inverse of `X0`: the minimum-norm one plus a random null-space part.
pub fn random_right_inverse(rng: &mut ChaCha8Rng, x0: &Mat) -> Mat {
    let (n, t) = x0.shape();
    let pinv = x0.transpose() * (x0 * x0.transpose()).try_inverse().unwrap();
    let proj = Mat::identity(t, t) - &pinv * x0;
    pinv + proj * gaussian(rng, t, n)
}

/// `P` symmetric `k×k` with two scalar variables and two random LMIs,
/// strictly feasible at the returned point.
pub fn random_maxdet_instance(rng: &mut ChaCha8Rng) -> (MaxDetProblem, Vec<f64>) {
    let k = rng.random_range(1..=3);
    let mut vars = Variables::default();
    let p = vars.symmetric("P", k);
    let s1 = vars.scalar("a");
    let s2 = vars.scalar("b");
    let m = vars.len();
    let mut x: Vec<f64> = (0..m).map(|_| rng.random_range(-0.3..0.3)).collect();
    for i in 0..k {
        x[p.id(i, i)] = 1.0 + rng.random::<f64>();
    }
    let mut constraints = Vec::new();
    for c in 0..2 {
        let dim = rng.random_range(k..=k + 2);
        let mut f = AffineSymmetricForm::square(format!("random {c}"), dim);
        let mut rand_sym = |scale: f64| {
            let a = Mat::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0) * scale);
            (&a + a.transpose()) * 0.5
        };
        for (v, (i, j)) in p.entries() {
            let mut e = rand_sym(0.3);
            let mut top = e.view_mut((0, 0), (k, k));
            top += p.basis(i, j);
            f.add_term_full(v, &e);
        }
        f.add_term_full(s1, &rand_sym(1.0));
        f.add_term_full(s2, &rand_sym(1.0));
        let lam = bilinear_dd::linalg::max_eigenvalue(&f.evaluate(&x));
        f.add_constant_full(&(Mat::identity(dim, dim) * -(lam + 1.0)));
        constraints.push(f);
    }
    (MaxDetProblem { variables: vars, constraints, equalities: Vec::new(), objective: p }, x)
}

/// `diag(p1, p2)` with `p1 C1 + p2 C2 ≺ B`, `C1, C2, B` random positive definite.
pub struct DiagonalInstance {
    pub c1: Mat,
    pub c2: Mat,
    pub bound: Mat,
    pub problem: MaxDetProblem,
}

pub fn random_diagonal_instance(rng: &mut ChaCha8Rng) -> DiagonalInstance {
    let dim = 2;
    let rand_pd = |rng: &mut ChaCha8Rng| {
        let a = Mat::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose() + Mat::identity(dim, dim) * 0.2
    };
    let c1 = rand_pd(rng);
    let c2 = rand_pd(rng);
    let bound = rand_pd(rng) * 2.0;
    let mut vars = Variables::default();
    let p = vars.symmetric("P", 2);
    let mut f = AffineSymmetricForm::square("p1 C1 + p2 C2 - B", dim);
    f.add_term_full(p.id(0, 0), &c1);
    f.add_term_full(p.id(1, 1), &c2);
    f.add_constant_full(&-&bound);
    let equalities = vec![LinearEquality { coeffs: vec![(p.id(0, 1), 1.0)], rhs: 0.0 }];
    let problem = MaxDetProblem { variables: vars, constraints: vec![f], equalities, objective: p };
    DiagonalInstance { c1, c2, bound, problem }
}

/// Best `log(p1 p2)` over the grid `p_k ∈ {h, 2h, …}` with `h = 1e-3`.
pub fn grid_search_logdet(inst: &DiagonalInstance) -> f64 {
    let h = 1e-3;
    let feasible = |a: f64, b: f64| {
        bilinear_dd::linalg::max_eigenvalue(&(&inst.c1 * a + &inst.c2 * b - &inst.bound)) < 0.0
    };
    let mut best = f64::NEG_INFINITY;
    let mut i = 1usize;
    while feasible(i as f64 * h, 0.0) {
        let a = i as f64 * h;
        // feasibility in b is an interval starting at 0, so bisect over grid indices
        let (mut lo, mut hi) = (0usize, 1usize);
        while feasible(a, hi as f64 * h) {
            hi *= 2;
        }
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if feasible(a, mid as f64 * h) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if lo > 0 {
            best = best.max((a * lo as f64 * h).ln());
        }
        i += 1;
    }
    best
}

/// Max relative entrywise error of central-difference derivatives against
/// the analytic barrier gradient and Hessian at a random instance.
pub fn barrier_fd_errors(problem: &MaxDetProblem, x: &[f64], t: f64) -> (f64, f64) {
    use bilinear_dd::solver::{barrier_derivatives, barrier_value, SolverOptions};
    let opts = SolverOptions::default();
    let h = 1e-6;
    let (_, g, hess) = barrier_derivatives(problem, x, t, &opts).expect("strictly feasible point");
    let hscale = hess.amax().max(1.0);
    let (mut eg, mut eh) = (0.0f64, 0.0f64);
    for j in 0..x.len() {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[j] += h;
        xm[j] -= h;
        let fd = (barrier_value(problem, &xp, t, &opts).unwrap() - barrier_value(problem, &xm, t, &opts).unwrap())
            / (2.0 * h);
        eg = eg.max((fd - g[j]).abs() / g[j].abs().max(1.0));
        let (_, gp, _) = barrier_derivatives(problem, &xp, t, &opts).unwrap();
        let (_, gm, _) = barrier_derivatives(problem, &xm, t, &opts).unwrap();
        for i in 0..x.len() {
            let fd = (gp[i] - gm[i]) / (2.0 * h);
            eh = eh.max((fd - hess[(i, j)]).abs() / hess[(i, j)].abs().max(1e-3 * hscale).max(1.0));
        }
    }
    (eg, eh)
}
