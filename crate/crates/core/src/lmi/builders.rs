//! Parametric LMIs handed to the maxdet solver.

use serde::{Deserialize, Serialize};

use super::form::{AffineSymmetricForm, Block};
use super::problem::{LinearEquality, MatVar, MaxDetProblem, SymMatVar, Variables};
use crate::error::{dim_err, invalid, Result};
use crate::experiment::DataRecord;
use crate::linalg::Mat;
use crate::system::BilinearSystem;

/// Scalars fixed before the data-based LMI is assembled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignIneqInputs {
    /// Bound on `‖D‖`.
    pub delta: f64,
    /// S-procedure multiplier, fixed outside the LMI.
    pub eps1: f64,
    /// Contraction rate; `1` asks for plain Lyapunov decrease.
    pub mu: f64,
}

impl DesignIneqInputs {
    pub fn new(delta: f64, eps1: f64, mu: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(invalid(format!("delta must be > 0, got {delta}")));
        }
        if !(eps1 > 0.0 && eps1.is_finite()) {
            return Err(invalid(format!("eps1 must be > 0, got {eps1}")));
        }
        if !(mu > 0.0 && mu <= 1.0) {
            return Err(invalid(format!("mu must lie in (0, 1], got {mu}")));
        }
        Ok(Self { delta, eps1, mu })
    }
}

/// Handles to the variables of the data-based problem.
#[derive(Debug, Clone)]
pub struct DataLmiVars {
    pub p: SymMatVar,
    pub y: MatVar,
    pub eps2: usize,
}

/// Index of each diagonal block in the data-based LMI.
pub mod data_blocks {
    pub const STATE: usize = 0;
    pub const MULTIPLIER: usize = 1;
    pub const GAIN: usize = 2;
    pub const SUCCESSOR: usize = 3;
    pub const UNCERTAINTY: usize = 4;
}

/// Robust decrease LMI in `(P, Y, ε₂)` for fixed `ε₁`, with `P = X0 Yᵀ`:
///
/// ```text
/// ⎡ −μP      0       Y U0ᵀ   Y X1ᵀ     −δ Y V0ᵀ ⎤
/// ⎢  ·     −ε₁P      0        0        δ ε₁ P   ⎥
/// ⎢  ·       ·     −ε₁ I      0          0      ⎥ ≺ 0
/// ⎢  ·       ·       ·     −P + ε₂I      0      ⎥
/// ⎣  ·       ·       ·        ·        −ε₂ I    ⎦
/// ```
pub fn build_data_lmi(data: &DataRecord, cfg: &DesignIneqInputs) -> Result<(MaxDetProblem, DataLmiVars)> {
    use data_blocks::*;
    let (n, t) = (data.n(), data.t());
    let (u0, x0, x1, v0) = (data.u0(), data.x0(), data.x1(), data.v0());
    if u0.shape() != (1, t) || x1.shape() != (n, t) || v0.shape() != (n, t) {
        return Err(dim_err("data record fields have inconsistent shapes"));
    }
    let DesignIneqInputs { delta, eps1, mu } = *cfg;

    let mut vars = Variables::default();
    let p = vars.symmetric("P", n);
    let y = vars.matrix("Y", n, t);
    let eps2 = vars.scalar("eps2");

    let blocks = vec![
        Block::new("-mu*P", n),
        Block::new("-eps1*P", n),
        Block::new("-eps1*I", 1),
        Block::new("-P+eps2*I", n),
        Block::new("-eps2*I", n),
    ];
    let mut f = AffineSymmetricForm::new("robust decrease (data-based)", blocks);

    for (v, (i, j)) in p.entries() {
        let e = p.basis(i, j);
        f.add_term(v, STATE, STATE, &(&e * -mu));
        f.add_term(v, MULTIPLIER, MULTIPLIER, &(&e * -eps1));
        f.add_term(v, MULTIPLIER, UNCERTAINTY, &(&e * (delta * eps1)));
        f.add_term(v, SUCCESSOR, SUCCESSOR, &-e);
    }
    for i in 0..n {
        for k in 0..t {
            let v = y.id(i, k);
            // Y·Mᵀ has (i, j) entry Σ_k Y[i,k] M[j,k]; the Y[i,k] coefficient is
            // row i equal to M[:, k]ᵀ
            let row_block = |m: &Mat, scale: f64| {
                let mut c = Mat::zeros(n, m.nrows());
                for j in 0..m.nrows() {
                    c[(i, j)] = scale * m[(j, k)];
                }
                c
            };
            f.add_term(v, STATE, GAIN, &row_block(u0, 1.0));
            f.add_term(v, STATE, SUCCESSOR, &row_block(x1, 1.0));
            f.add_term(v, STATE, UNCERTAINTY, &row_block(v0, -delta));
        }
    }
    f.add_term(eps2, SUCCESSOR, SUCCESSOR, &Mat::identity(n, n));
    f.add_term(eps2, UNCERTAINTY, UNCERTAINTY, &-Mat::identity(n, n));
    f.add_constant(GAIN, GAIN, &Mat::from_element(1, 1, -eps1));

    // P = X0 Yᵀ, all n² entries
    let mut equalities = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut coeffs = vec![(p.id(i, j), 1.0)];
            coeffs.extend((0..t).map(|k| (y.id(j, k), -x0[(i, k)])));
            equalities.push(LinearEquality { coeffs, rhs: 0.0 });
        }
    }

    let problem = MaxDetProblem { variables: vars, constraints: vec![f], equalities, objective: p.clone() };
    Ok((problem, DataLmiVars { p, y, eps2 }))
}

/// Which `(3,3)` block the model-based LMI uses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelGainBlock {
    /// `−(1/ε₁)·I`: the S-procedure certificate with multiplier `ε₁`.
    #[default]
    InverseEps1,
    /// `−ε₁·I`. Only a valid certificate at `ε₁ = 1`; its optimal `P` is
    /// `ε₁²` times the `InverseEps1` optimum with the same gain. Kept for
    /// comparison runs.
    Eps1,
}

#[derive(Debug, Clone)]
pub struct ModelLmiVars {
    pub p: SymMatVar,
    pub y: MatVar,
}

/// Model-based LMI in `(P, y)` for fixed `ε₁`:
///
/// ```text
/// ⎡ −P     0      y     P Aᵀ + y Bᵀ ⎤
/// ⎢  ·   −ε₁P     0       P Dᵀ      ⎥ ≺ 0,   P ≻ 0
/// ⎢  ·     ·   −ε₁⁻¹I      0        ⎥
/// ⎣  ·     ·      ·       −P        ⎦
/// ```
pub fn build_model_lmi(sys: &BilinearSystem, eps1: f64) -> Result<(MaxDetProblem, ModelLmiVars)> {
    build_model_lmi_with(sys, eps1, ModelGainBlock::default())
}

pub fn build_model_lmi_with(
    sys: &BilinearSystem,
    eps1: f64,
    gain_block: ModelGainBlock,
) -> Result<(MaxDetProblem, ModelLmiVars)> {
    if !(eps1 > 0.0 && eps1.is_finite()) {
        return Err(invalid(format!("eps1 must be > 0, got {eps1}")));
    }
    let n = sys.n();
    let (a, b, d) = (sys.a(), sys.b(), sys.d());
    let mut vars = Variables::default();
    let p = vars.symmetric("P", n);
    let y = vars.matrix("y", n, 1);

    let blocks = vec![
        Block::new("-P", n),
        Block::new("-eps1*P", n),
        Block::new("gain multiplier", 1),
        Block::new("-P (successor)", n),
    ];
    let mut f = AffineSymmetricForm::new("robust decrease (model-based)", blocks);
    for (v, (i, j)) in p.entries() {
        let e = p.basis(i, j);
        f.add_term(v, 0, 0, &-&e);
        f.add_term(v, 0, 3, &(&e * a.transpose()));
        f.add_term(v, 1, 1, &(&e * -eps1));
        f.add_term(v, 1, 3, &(&e * d.transpose()));
        f.add_term(v, 3, 3, &-&e);
    }
    for i in 0..n {
        let v = y.id(i, 0);
        let mut col = Mat::zeros(n, 1);
        col[(i, 0)] = 1.0;
        f.add_term(v, 0, 2, &col);
        f.add_term(v, 0, 3, &(&col * b.transpose()));
    }
    let corner = match gain_block {
        ModelGainBlock::InverseEps1 => -1.0 / eps1,
        ModelGainBlock::Eps1 => -eps1,
    };
    f.add_constant(2, 2, &Mat::from_element(1, 1, corner));

    let mut positivity = AffineSymmetricForm::square("-P", n);
    for (v, (i, j)) in p.entries() {
        positivity.add_term(v, 0, 0, &-p.basis(i, j));
    }

    let problem = MaxDetProblem {
        variables: vars,
        constraints: vec![f, positivity],
        equalities: Vec::new(),
        objective: p.clone(),
    };
    Ok((problem, ModelLmiVars { p, y }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::run_seeded_experiment;
    use crate::linalg::is_negative_definite;
    use nalgebra::dmatrix;

    fn example_data() -> DataRecord {
        run_seeded_experiment(&BilinearSystem::example(), 10, 1, None).unwrap()
    }

    #[test]
    fn data_lmi_dimensions() {
        let cfg = DesignIneqInputs::new(0.7637, 0.8, 1.0).unwrap();
        let (prob, vars) = build_data_lmi(&example_data(), &cfg).unwrap();
        assert_eq!(prob.constraints[0].dim(), 9);
        assert_eq!(prob.num_vars(), 3 + 20 + 1);
        assert_eq!(prob.equalities.len(), 4);
        assert_eq!(vars.eps2, 23);
    }

    #[test]
    fn data_lmi_state_block_is_minus_mu_p() {
        let data = example_data();
        for mu in [1.0, 0.9] {
            let cfg = DesignIneqInputs::new(0.7637, 0.8, mu).unwrap();
            let (prob, vars) = build_data_lmi(&data, &cfg).unwrap();
            let f = &prob.constraints[0];
            let r = f.block_range(data_blocks::STATE);
            for (v, (i, j)) in vars.p.entries() {
                let c = f.coefficient(v).unwrap();
                let blk = c.view((r.start, r.start), (2, 2)).into_owned();
                assert_eq!(blk, vars.p.basis(i, j) * -mu);
            }
        }
    }

    #[test]
    fn data_lmi_evaluates_to_block_formula() {
        let data = example_data();
        let cfg = DesignIneqInputs::new(0.7637, 0.8, 0.95).unwrap();
        let (prob, vars) = build_data_lmi(&data, &cfg).unwrap();
        let x: Vec<f64> = (0..prob.num_vars()).map(|i| ((i * 37 % 11) as f64 - 5.0) / 7.0).collect();
        let p = vars.p.read(&x);
        let y = vars.y.read(&x);
        let e2 = x[vars.eps2];
        let (u0, x1, v0) = (data.u0(), data.x1(), data.v0());
        let (d, e1, mu) = (cfg.delta, cfg.eps1, cfg.mu);
        let i2 = Mat::identity(2, 2);
        let expected = crate::linalg::assemble_symmetric(
            &[2, 2, 1, 2, 2],
            &[
                vec![Some(&p * -mu), None, Some(&y * u0.transpose()), Some(&y * x1.transpose()), Some(&y * v0.transpose() * -d)],
                vec![None, Some(&p * -e1), None, None, Some(&p * (d * e1))],
                vec![None, None, Some(dmatrix![-e1]), None, None],
                vec![None, None, None, Some(-&p + &i2 * e2), None],
                vec![None, None, None, None, Some(&i2 * -e2)],
            ],
        );
        assert!((prob.constraints[0].evaluate(&x) - expected).amax() < 1e-12);
        // equalities encode P = X0 Yᵀ
        let res = &p - data.x0() * y.transpose();
        let eq_res: Vec<f64> = prob.equalities.iter().map(|e| e.residual(&x)).collect();
        for (k, r) in eq_res.iter().enumerate() {
            assert!((r - res[(k / 2, k % 2)]).abs() < 1e-12);
        }
    }

    #[test]
    fn model_lmi_dimensions_and_unstable_open_loop() {
        let sys = BilinearSystem::example();
        let (prob, vars) = build_model_lmi(&sys, 0.8).unwrap();
        assert_eq!(prob.constraints[0].dim(), 7);
        let mut x = vec![0.0; prob.num_vars()];
        for (v, (i, j)) in vars.p.entries() {
            x[v] = if i == j { 1.0 } else { 0.0 };
        }
        assert!(!is_negative_definite(&prob.constraints[0].evaluate(&x)));
        assert!(build_model_lmi(&sys, -1.0).is_err());
    }

    #[test]
    fn model_lmi_accepts_reported_design() {
        let sys = BilinearSystem::example();
        let (prob, vars) = build_model_lmi(&sys, 0.8).unwrap();
        // the published four-digit values sit on the boundary of the feasible
        // set (max eigenvalue about 1.5e-5); 0.1% inside it they are strictly feasible
        let p = dmatrix![8.5623, -4.7253; -4.7253, 6.3616] * 0.999;
        let k = dmatrix![-0.3572, -0.5738];
        let y = &p * k.transpose();
        let mut x = vec![0.0; prob.num_vars()];
        for (v, (i, j)) in vars.p.entries() {
            x[v] = p[(i, j)];
        }
        x[vars.y.id(0, 0)] = y[(0, 0)];
        x[vars.y.id(1, 0)] = y[(1, 0)];
        for f in &prob.constraints {
            assert!(is_negative_definite(&f.evaluate(&x)), "{}", f.label());
        }
    }

    #[test]
    fn inputs_are_validated() {
        assert!(DesignIneqInputs::new(0.0, 1.0, 1.0).is_err());
        assert!(DesignIneqInputs::new(1.0, 0.0, 1.0).is_err());
        assert!(DesignIneqInputs::new(1.0, 1.0, 1.5).is_err());
        assert!(DesignIneqInputs::new(1.0, 1.0, 0.0).is_err());
    }
}
