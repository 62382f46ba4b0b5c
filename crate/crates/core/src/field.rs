//! Fields on the periodic grid.
//!
//! Storage is component-major: component `c` occupies the contiguous slab
//! `vals[c*nodes .. (c+1)*nodes]`, nodes in row-major order. A `TensorField`
//! may declare one symmetric slot pair; the packed representation stores only
//! `i <= j` and reads of either order return the same value.

use crate::error::{CoreError, Result};
use crate::grid::{sym_index, TorusGrid};
use crate::linalg;
use crate::reduce;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variance {
    Co,
    Contra,
}

// ---------------------------------------------------------------------------
// scalar

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: TorusGrid,
    vals: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: TorusGrid) -> Self {
        Self { grid, vals: vec![0.0; grid.nodes()] }
    }

    pub fn constant(grid: TorusGrid, c: f64) -> Self {
        Self { grid, vals: vec![c; grid.nodes()] }
    }

    pub fn from_fn(grid: TorusGrid, f: impl Fn(&[f64; 3]) -> f64) -> Self {
        let vals = (0..grid.nodes()).map(|i| f(&grid.position(i))).collect();
        Self { grid, vals }
    }

    pub fn from_vals(grid: TorusGrid, vals: Vec<f64>) -> Self {
        assert_eq!(vals.len(), grid.nodes());
        Self { grid, vals }
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn vals(&self) -> &[f64] {
        &self.vals
    }

    pub fn vals_mut(&mut self) -> &mut [f64] {
        &mut self.vals
    }

    pub fn max_abs(&self) -> f64 {
        reduce::max_abs(&self.vals)
    }

    pub fn min(&self) -> f64 {
        reduce::min_all(&self.vals)
    }

    pub fn max(&self) -> f64 {
        reduce::max_all(&self.vals)
    }

    pub fn is_finite(&self) -> bool {
        self.vals.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid, vals: self.vals.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.grid, other.grid);
        let vals = self.vals.iter().zip(&other.vals).map(|(&a, &b)| f(a, b)).collect();
        Self { grid: self.grid, vals }
    }
}

// ---------------------------------------------------------------------------
// vector

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: TorusGrid,
    vals: Vec<f64>,
}

impl VectorField {
    pub fn zeros(grid: TorusGrid) -> Self {
        Self { grid, vals: vec![0.0; grid.dim() * grid.nodes()] }
    }

    pub fn from_fn(grid: TorusGrid, f: impl Fn(&[f64; 3], usize) -> f64) -> Self {
        let nn = grid.nodes();
        let mut vals = vec![0.0; grid.dim() * nn];
        for a in 0..grid.dim() {
            for i in 0..nn {
                vals[a * nn + i] = f(&grid.position(i), a);
            }
        }
        Self { grid, vals }
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn comp(&self, a: usize) -> &[f64] {
        let nn = self.grid.nodes();
        &self.vals[a * nn..(a + 1) * nn]
    }

    pub fn comp_mut(&mut self, a: usize) -> &mut [f64] {
        let nn = self.grid.nodes();
        &mut self.vals[a * nn..(a + 1) * nn]
    }

    pub fn get(&self, node: usize, a: usize) -> f64 {
        self.vals[a * self.grid.nodes() + node]
    }

    pub fn vals(&self) -> &[f64] {
        &self.vals
    }

    pub fn vals_mut(&mut self) -> &mut [f64] {
        &mut self.vals
    }

    pub fn max_abs(&self) -> f64 {
        reduce::max_abs(&self.vals)
    }
}

// ---------------------------------------------------------------------------
// general tensor

#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    grid: TorusGrid,
    variance: Vec<Variance>,
    sym: Option<(usize, usize)>,
    /// full multi-index code (base-n integer) -> storage component
    code_to_comp: Vec<usize>,
    /// storage component -> representative multi-index
    comp_repr: Vec<[u8; 8]>,
    ncomp: usize,
    vals: Vec<f64>,
}

impl TensorField {
    pub fn zeros(grid: TorusGrid, variance: Vec<Variance>, sym: Option<(usize, usize)>) -> Self {
        let rank = variance.len();
        assert!(rank <= 8, "tensor rank too large");
        if let Some((p, q)) = sym {
            assert!(p < q && q < rank, "invalid symmetric pair");
        }
        let n = grid.dim();
        let codes = n.pow(rank as u32);
        let mut code_to_comp = vec![usize::MAX; codes.max(1)];
        let mut comp_repr = Vec::new();
        for code in 0..codes.max(1) {
            let idx = decode(code, n, rank);
            let canon = match sym {
                Some((p, q)) if idx[p] > idx[q] => {
                    let mut c = idx;
                    c.swap(p, q);
                    encode(&c, n, rank)
                }
                _ => code,
            };
            if canon == code {
                code_to_comp[code] = comp_repr.len();
                comp_repr.push(idx);
            }
        }
        for code in 0..codes.max(1) {
            if code_to_comp[code] == usize::MAX {
                let idx = decode(code, n, rank);
                let (p, q) = sym.unwrap();
                let mut c = idx;
                c.swap(p, q);
                code_to_comp[code] = code_to_comp[encode(&c, n, rank)];
            }
        }
        let ncomp = comp_repr.len();
        let vals = vec![0.0; ncomp * grid.nodes()];
        Self { grid, variance, sym, code_to_comp, comp_repr, ncomp, vals }
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn rank(&self) -> usize {
        self.variance.len()
    }

    pub fn variance(&self) -> &[Variance] {
        &self.variance
    }

    pub fn sym(&self) -> Option<(usize, usize)> {
        self.sym
    }

    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    /// Representative multi-index of a storage component.
    pub fn comp_index(&self, comp: usize) -> &[u8] {
        &self.comp_repr[comp][..self.rank()]
    }

    #[inline]
    pub fn comp_of(&self, idx: &[usize]) -> usize {
        self.code_to_comp[encode_usize(idx, self.grid.dim())]
    }

    #[inline]
    pub fn get(&self, node: usize, idx: &[usize]) -> f64 {
        self.vals[self.comp_of(idx) * self.grid.nodes() + node]
    }

    #[inline]
    pub fn set(&mut self, node: usize, idx: &[usize], v: f64) {
        let c = self.comp_of(idx);
        let nn = self.grid.nodes();
        self.vals[c * nn + node] = v;
    }

    pub fn comp_slice(&self, comp: usize) -> &[f64] {
        let nn = self.grid.nodes();
        &self.vals[comp * nn..(comp + 1) * nn]
    }

    pub fn comp_slice_mut(&mut self, comp: usize) -> &mut [f64] {
        let nn = self.grid.nodes();
        &mut self.vals[comp * nn..(comp + 1) * nn]
    }

    pub fn vals(&self) -> &[f64] {
        &self.vals
    }

    pub fn vals_mut(&mut self) -> &mut [f64] {
        &mut self.vals
    }

    pub fn max_abs(&self) -> f64 {
        reduce::max_abs(&self.vals)
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.vals {
            *v *= c;
        }
    }

    pub fn add_scaled(&mut self, other: &Self, c: f64) {
        assert_eq!(self.vals.len(), other.vals.len());
        for (a, b) in self.vals.iter_mut().zip(&other.vals) {
            *a += c * b;
        }
    }
}

fn decode(mut code: usize, n: usize, rank: usize) -> [u8; 8] {
    let mut idx = [0u8; 8];
    for s in (0..rank).rev() {
        idx[s] = (code % n) as u8;
        code /= n;
    }
    idx
}

fn encode(idx: &[u8; 8], n: usize, rank: usize) -> usize {
    let mut code = 0;
    for s in 0..rank {
        code = code * n + idx[s] as usize;
    }
    code
}

#[inline]
fn encode_usize(idx: &[usize], n: usize) -> usize {
    let mut code = 0;
    for &i in idx {
        debug_assert!(i < n);
        code = code * n + i;
    }
    code
}

// ---------------------------------------------------------------------------
// metric

/// Symmetric positive-definite covariant 2-tensor, packed storage.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricField {
    grid: TorusGrid,
    vals: Vec<f64>,
}

impl MetricField {
    pub fn zeros(grid: TorusGrid) -> Self {
        Self { grid, vals: vec![0.0; grid.sym_comps() * grid.nodes()] }
    }

    /// The flat metric delta_ij.
    pub fn flat(grid: TorusGrid) -> Self {
        let mut m = Self::zeros(grid);
        let nn = grid.nodes();
        for i in 0..grid.dim() {
            let c = sym_index(grid.dim(), i, i);
            m.vals[c * nn..(c + 1) * nn].fill(1.0);
        }
        m
    }

    pub fn from_fn(grid: TorusGrid, f: impl Fn(&[f64; 3], usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(grid);
        let nn = grid.nodes();
        for i in 0..grid.dim() {
            for j in i..grid.dim() {
                let c = sym_index(grid.dim(), i, j);
                for node in 0..nn {
                    m.vals[c * nn + node] = f(&grid.position(node), i, j);
                }
            }
        }
        m
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn ncomp(&self) -> usize {
        self.grid.sym_comps()
    }

    #[inline]
    pub fn comp_of(&self, i: usize, j: usize) -> usize {
        sym_index(self.grid.dim(), i, j)
    }

    #[inline]
    pub fn get(&self, node: usize, i: usize, j: usize) -> f64 {
        self.vals[self.comp_of(i, j) * self.grid.nodes() + node]
    }

    #[inline]
    pub fn set(&mut self, node: usize, i: usize, j: usize, v: f64) {
        let c = self.comp_of(i, j);
        let nn = self.grid.nodes();
        self.vals[c * nn + node] = v;
    }

    /// Packed matrix at one node, in sym_index order.
    #[inline]
    pub fn at_node(&self, node: usize) -> [f64; 6] {
        let nn = self.grid.nodes();
        let m = self.ncomp();
        let mut out = [0.0; 6];
        for c in 0..m {
            out[c] = self.vals[c * nn + node];
        }
        out
    }

    pub fn comp_slice(&self, comp: usize) -> &[f64] {
        let nn = self.grid.nodes();
        &self.vals[comp * nn..(comp + 1) * nn]
    }

    pub fn comp_slice_mut(&mut self, comp: usize) -> &mut [f64] {
        let nn = self.grid.nodes();
        &mut self.vals[comp * nn..(comp + 1) * nn]
    }

    pub fn vals(&self) -> &[f64] {
        &self.vals
    }

    pub fn vals_mut(&mut self) -> &mut [f64] {
        &mut self.vals
    }

    /// View as a covariant symmetric TensorField (copies the packed data).
    pub fn to_tensor(&self) -> TensorField {
        let mut t =
            TensorField::zeros(self.grid, vec![Variance::Co, Variance::Co], Some((0, 1)));
        t.vals_mut().copy_from_slice(&self.vals);
        t
    }

    pub fn from_tensor(t: &TensorField) -> Self {
        assert_eq!(t.rank(), 2);
        assert_eq!(t.sym(), Some((0, 1)));
        Self { grid: t.grid(), vals: t.vals().to_vec() }
    }

    pub fn smallest_eigenvalue_at(&self, node: usize) -> f64 {
        let a = self.at_node(node);
        linalg::sym_min_eigenvalue(self.grid.dim(), &a[..self.ncomp()])
    }

    /// SPD check: smallest eigenvalue must exceed 1e-10 * trace/n at every node.
    pub fn check_spd(&self) -> Result<()> {
        let n = self.grid.dim();
        for node in 0..self.grid.nodes() {
            let a = self.at_node(node);
            let lam = linalg::sym_min_eigenvalue(n, &a[..self.ncomp()]);
            let scale = linalg::sym_trace(n, &a[..self.ncomp()]) / n as f64;
            if !(lam > 1e-10 * scale.abs()) || !lam.is_finite() {
                return Err(CoreError::NotPositiveDefinite { node, lambda_min: lam });
            }
        }
        Ok(())
    }

    /// Nodewise inverse as a contravariant symmetric tensor.
    pub fn inverse(&self) -> Result<TensorField> {
        let n = self.grid.dim();
        let m = self.ncomp();
        let nn = self.grid.nodes();
        let mut out =
            TensorField::zeros(self.grid, vec![Variance::Contra, Variance::Contra], Some((0, 1)));
        let mut buf = [0.0; 6];
        for node in 0..nn {
            let a = self.at_node(node);
            let lam = linalg::sym_min_eigenvalue(n, &a[..m]);
            if !(lam > 0.0) {
                return Err(CoreError::NotPositiveDefinite { node, lambda_min: lam });
            }
            linalg::sym_invert(n, &a[..m], &mut buf[..m]);
            for c in 0..m {
                out.vals_mut()[c * nn + node] = buf[c];
            }
        }
        Ok(out)
    }

    pub fn determinant(&self) -> ScalarField {
        let n = self.grid.dim();
        let m = self.ncomp();
        let vals = (0..self.grid.nodes())
            .map(|node| {
                let a = self.at_node(node);
                linalg::sym_det(n, &a[..m])
            })
            .collect();
        ScalarField::from_vals(self.grid, vals)
    }

    /// Largest |eig(h^{-1} self) - 1| over all nodes: the pinning excess.
    pub fn pinning_excess(&self, h: &MetricField) -> f64 {
        assert_eq!(self.grid, h.grid);
        let n = self.grid.dim();
        let m = self.ncomp();
        let mut worst = 0.0f64;
        for node in 0..self.grid.nodes() {
            let a = self.at_node(node);
            let b = h.at_node(node);
            let ev = linalg::generalized_eigenvalues(n, &a[..m], &b[..m])
                .unwrap_or([f64::INFINITY; 3]);
            for &lam in ev.iter().take(n) {
                let d = (lam - 1.0).abs();
                if d > worst {
                    worst = d;
                }
            }
        }
        worst
    }

    /// True when (1-eps) h <= g <= (1+eps) h at every node.
    pub fn is_pinned(&self, h: &MetricField, eps: f64) -> bool {
        self.pinning_excess(h) <= eps
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.vals {
            *v *= c;
        }
    }

    pub fn add_scaled(&mut self, other: &Self, c: f64) {
        assert_eq!(self.grid, other.grid);
        for (a, b) in self.vals.iter_mut().zip(&other.vals) {
            *a += c * b;
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.grid, other.grid);
        let mut m = 0.0f64;
        for (a, b) in self.vals.iter().zip(&other.vals) {
            let d = (a - b).abs();
            if d > m {
                m = d;
            }
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        self.vals.iter().all(|v| v.is_finite())
    }
}
