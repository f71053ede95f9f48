use std::collections::BTreeMap;

use serde::Serialize;

use crate::linalg::{symmetrize, to_rows, Mat};

/// Named diagonal block of a structured symmetric matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Block {
    pub name: String,
    pub size: usize,
}

impl Block {
    pub fn new(name: impl Into<String>, size: usize) -> Self {
        Self { name: name.into(), size }
    }
}

/// `F(x) = F0 + Σ_v x_v F_v` with every `F_v` symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineSymmetricForm {
    label: String,
    blocks: Vec<Block>,
    offsets: Vec<usize>,
    constant: Mat,
    terms: BTreeMap<usize, Mat>,
}

impl AffineSymmetricForm {
    pub fn new(label: impl Into<String>, blocks: Vec<Block>) -> Self {
        let mut offsets = Vec::with_capacity(blocks.len());
        let mut dim = 0;
        for b in &blocks {
            offsets.push(dim);
            dim += b.size;
        }
        Self {
            label: label.into(),
            blocks,
            offsets,
            constant: Mat::zeros(dim, dim),
            terms: BTreeMap::new(),
        }
    }

    /// Single-block form.
    pub fn square(label: impl Into<String>, dim: usize) -> Self {
        let label = label.into();
        Self::new(label.clone(), vec![Block::new(label, dim)])
    }

    pub fn label(&self) -> &str {
        &self.label
    }
    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }
    pub fn dim(&self) -> usize {
        self.constant.nrows()
    }
    pub fn constant(&self) -> &Mat {
        &self.constant
    }
    pub fn terms(&self) -> impl Iterator<Item = (usize, &Mat)> {
        self.terms.iter().map(|(&v, m)| (v, m))
    }
    pub fn coefficient(&self, var: usize) -> Option<&Mat> {
        self.terms.get(&var)
    }

    /// Row/column range of block `i`.
    pub fn block_range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i] + self.blocks[i].size
    }

    fn place(target: &mut Mat, offsets: &[usize], sizes: (usize, usize), (bi, bj): (usize, usize), m: &Mat) {
        assert_eq!(m.shape(), sizes, "block ({bi},{bj}) has wrong shape");
        let (r, c) = (offsets[bi], offsets[bj]);
        if bi == bj {
            let s = symmetrize(m);
            let mut v = target.view_mut((r, c), sizes);
            v += s;
        } else {
            let mut v = target.view_mut((r, c), sizes);
            v += m;
            let mut vt = target.view_mut((c, r), (sizes.1, sizes.0));
            vt += m.transpose();
        }
    }

    fn sizes(&self, bi: usize, bj: usize) -> (usize, usize) {
        (self.blocks[bi].size, self.blocks[bj].size)
    }

    /// Add `m` to block `(bi, bj)` of the constant term (and `mᵀ` to `(bj, bi)`).
    pub fn add_constant(&mut self, bi: usize, bj: usize, m: &Mat) {
        let sizes = self.sizes(bi, bj);
        Self::place(&mut self.constant, &self.offsets, sizes, (bi, bj), m);
    }

    /// Add `x_var · m` to block `(bi, bj)` (and its transpose to `(bj, bi)`).
    pub fn add_term(&mut self, var: usize, bi: usize, bj: usize, m: &Mat) {
        let sizes = self.sizes(bi, bj);
        let dim = self.dim();
        let target = self.terms.entry(var).or_insert_with(|| Mat::zeros(dim, dim));
        Self::place(target, &self.offsets, sizes, (bi, bj), m);
    }

    /// Add a full-size coefficient matrix (symmetrized).
    pub fn add_term_full(&mut self, var: usize, m: &Mat) {
        let dim = self.dim();
        assert_eq!(m.shape(), (dim, dim));
        let target = self.terms.entry(var).or_insert_with(|| Mat::zeros(dim, dim));
        *target += symmetrize(m);
    }

    pub fn add_constant_full(&mut self, m: &Mat) {
        assert_eq!(m.shape(), (self.dim(), self.dim()));
        self.constant += symmetrize(m);
    }

    /// Evaluate at a full assignment of the problem's variables.
    pub fn evaluate(&self, x: &[f64]) -> Mat {
        let mut out = self.constant.clone();
        for (&v, m) in &self.terms {
            if x[v] != 0.0 {
                out += m * x[v];
            }
        }
        out
    }

    /// Strict-to-nonstrict shift: `1e−7·(1 + max |F0_ij|)`.
    pub fn default_margin(&self) -> f64 {
        1e-7 * (1.0 + self.constant.amax())
    }

    /// Multiply the constant term by `c`.
    pub fn scale_constant(&mut self, c: f64) {
        self.constant *= c;
    }

    /// Name of the diagonal block holding row `row`.
    pub fn block_of_row(&self, row: usize) -> Option<&str> {
        (0..self.blocks.len())
            .find(|&i| self.block_range(i).contains(&row))
            .map(|i| self.blocks[i].name.as_str())
    }

    pub(crate) fn dump(&self) -> FormDump {
        FormDump {
            label: self.label.clone(),
            dim: self.dim(),
            blocks: self.blocks.clone(),
            constant: to_rows(&self.constant),
            coefficients: self
                .terms
                .iter()
                .map(|(&variable, m)| CoefficientDump { variable, matrix: to_rows(m) })
                .collect(),
        }
    }
}

#[derive(Debug, Serialize)]
pub(crate) struct FormDump {
    label: String,
    dim: usize,
    blocks: Vec<Block>,
    constant: Vec<Vec<f64>>,
    coefficients: Vec<CoefficientDump>,
}

#[derive(Debug, Serialize)]
pub(crate) struct CoefficientDump {
    variable: usize,
    matrix: Vec<Vec<f64>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn off_diagonal_blocks_are_mirrored() {
        let mut f = AffineSymmetricForm::new("t", vec![Block::new("a", 1), Block::new("b", 2)]);
        f.add_term(0, 0, 1, &dmatrix![1.0, 2.0]);
        f.add_constant(1, 1, &dmatrix![-1.0, 0.0; 0.0, -1.0]);
        let m = f.evaluate(&[3.0]);
        assert_eq!(m, dmatrix![0.0, 3.0, 6.0; 3.0, -1.0, 0.0; 6.0, 0.0, -1.0]);
        assert_eq!(f.block_of_row(2), Some("b"));
    }

    #[test]
    fn terms_accumulate() {
        let mut f = AffineSymmetricForm::square("s", 2);
        f.add_term(4, 0, 0, &Mat::identity(2, 2));
        f.add_term(4, 0, 0, &Mat::identity(2, 2));
        let x = [0.0, 0.0, 0.0, 0.0, 0.5];
        assert_eq!(f.evaluate(&x), Mat::identity(2, 2));
    }
}
