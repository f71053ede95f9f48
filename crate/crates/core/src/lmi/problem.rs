use serde::Serialize;

use super::form::{AffineSymmetricForm, FormDump};
use crate::linalg::Mat;

/// Symmetric matrix variable stored as its upper triangle (row-major).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SymMatVar {
    pub name: String,
    pub n: usize,
    pub first: usize,
}

impl SymMatVar {
    pub fn len(&self) -> usize {
        self.n * (self.n + 1) / 2
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Variable index of entry `(i, j)`; `(i, j)` and `(j, i)` share one.
    pub fn id(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        // row i starts after n + (n-1) + … + (n-i+1) entries
        let row_start = i * self.n - i * i.saturating_sub(1) / 2;
        self.first + row_start + (j - i)
    }

    /// `(variable, (i, j))` for every upper-triangular entry.
    pub fn entries(&self) -> Vec<(usize, (usize, usize))> {
        let mut out = Vec::with_capacity(self.len());
        for i in 0..self.n {
            for j in i..self.n {
                out.push((self.id(i, j), (i, j)));
            }
        }
        out
    }

    /// Symmetric basis matrix of the variable at `(i, j)`.
    pub fn basis(&self, i: usize, j: usize) -> Mat {
        let mut e = Mat::zeros(self.n, self.n);
        e[(i, j)] = 1.0;
        e[(j, i)] = 1.0;
        e
    }

    pub fn read(&self, x: &[f64]) -> Mat {
        Mat::from_fn(self.n, self.n, |i, j| x[self.id(i, j)])
    }
}

/// Dense `rows × cols` matrix variable (row-major ids).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MatVar {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub first: usize,
}

impl MatVar {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn id(&self, i: usize, j: usize) -> usize {
        self.first + i * self.cols + j
    }
    pub fn read(&self, x: &[f64]) -> Mat {
        Mat::from_fn(self.rows, self.cols, |i, j| x[self.id(i, j)])
    }
}

/// Scalar variable registry.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Variables {
    names: Vec<String>,
}

impl Variables {
    pub fn len(&self) -> usize {
        self.names.len()
    }
    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
    pub fn names(&self) -> &[String] {
        &self.names
    }
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn scalar(&mut self, name: &str) -> usize {
        self.names.push(name.to_string());
        self.names.len() - 1
    }

    pub fn symmetric(&mut self, name: &str, n: usize) -> SymMatVar {
        let v = SymMatVar { name: name.to_string(), n, first: self.names.len() };
        for i in 0..n {
            for j in i..n {
                self.names.push(format!("{name}[{i},{j}]"));
            }
        }
        v
    }

    pub fn matrix(&mut self, name: &str, rows: usize, cols: usize) -> MatVar {
        let v = MatVar { name: name.to_string(), rows, cols, first: self.names.len() };
        for i in 0..rows {
            for j in 0..cols {
                self.names.push(format!("{name}[{i},{j}]"));
            }
        }
        v
    }
}

/// `Σ coeffs · x = rhs`, sparse.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearEquality {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl LinearEquality {
    pub fn residual(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(v, c)| c * x[v]).sum::<f64>() - self.rhs
    }
}

/// minimize `−log det P(x)` subject to `F_i(x) ≺ 0` and `A x = b`, where
/// `P` is a symmetric block of the declared variables.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxDetProblem {
    pub variables: Variables,
    pub constraints: Vec<AffineSymmetricForm>,
    pub equalities: Vec<LinearEquality>,
    pub objective: SymMatVar,
}

impl MaxDetProblem {
    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    /// The objective block as an affine form in the problem's variables.
    pub fn objective_form(&self) -> AffineSymmetricForm {
        let p = &self.objective;
        let mut f = AffineSymmetricForm::square(p.name.clone(), p.n);
        for (v, (i, j)) in p.entries() {
            f.add_term_full(v, &p.basis(i, j));
        }
        f
    }

    /// Total rows over all matrix constraints.
    pub fn constraint_rows(&self) -> usize {
        self.constraints.iter().map(AffineSymmetricForm::dim).sum()
    }

    /// Equality rows as a dense `(A, b)` pair.
    pub fn equality_system(&self) -> (Mat, Vec<f64>) {
        let mut a = Mat::zeros(self.equalities.len(), self.num_vars());
        for (r, eq) in self.equalities.iter().enumerate() {
            for &(v, c) in &eq.coeffs {
                a[(r, v)] += c;
            }
        }
        (a, self.equalities.iter().map(|e| e.rhs).collect())
    }

    /// Copy with every constraint's constant term multiplied by `c`.
    pub fn with_scaled_constants(&self, c: f64) -> Self {
        let mut out = self.clone();
        for f in &mut out.constraints {
            f.scale_constant(c);
        }
        for eq in &mut out.equalities {
            eq.rhs *= c;
        }
        out
    }

    /// JSON debug dump: variable names, dense coefficient matrices, dense
    /// equality rows and the objective variable ids.
    pub fn to_debug_json(&self) -> serde_json::Value {
        let (a, b) = self.equality_system();
        let dump = ProblemDump {
            format: "bilinear-dd/maxdet-dump/v1",
            variables: self.variables.names(),
            constraints: self.constraints.iter().map(AffineSymmetricForm::dump).collect(),
            equalities: EqualityDump { rows: crate::linalg::to_rows(&a), rhs: b },
            objective: ObjectiveDump {
                sense: "minimize -log det",
                block: &self.objective.name,
                dim: self.objective.n,
                upper_triangle_variables: self.objective.entries().into_iter().map(|(v, _)| v).collect(),
            },
        };
        serde_json::to_value(dump).expect("dump is plain data")
    }
}

#[derive(Serialize)]
struct ProblemDump<'a> {
    format: &'static str,
    variables: &'a [String],
    constraints: Vec<FormDump>,
    equalities: EqualityDump,
    objective: ObjectiveDump<'a>,
}

#[derive(Serialize)]
struct EqualityDump {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
}

#[derive(Serialize)]
struct ObjectiveDump<'a> {
    sense: &'static str,
    block: &'a str,
    dim: usize,
    upper_triangle_variables: Vec<usize>,
}
