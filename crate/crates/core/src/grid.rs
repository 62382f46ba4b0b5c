//! Periodic structured grid on the flat n-torus.

use crate::error::{CoreError, Result};
use serde::{Deserialize, Serialize};

/// Uniform periodic grid on `[0, L)^n` with the same resolution per axis.
///
/// Node indices are row-major: axis 0 is the slowest, axis `n-1` the fastest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusGrid {
    dim: usize,
    res: usize,
    len: f64,
}

impl TorusGrid {
    pub fn new(dim: usize, res: usize, len: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(CoreError::InvalidGrid(format!("dim must be 1..=3, got {dim}")));
        }
        if res < 8 || !res.is_power_of_two() {
            return Err(CoreError::InvalidGrid(format!(
                "resolution must be a power of two >= 8, got {res}"
            )));
        }
        if !(len > 0.0) || !len.is_finite() {
            return Err(CoreError::InvalidGrid(format!("period must be positive, got {len}")));
        }
        Ok(Self { dim, res, len })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn res(&self) -> usize {
        self.res
    }

    pub fn len(&self) -> f64 {
        self.len
    }

    pub fn spacing(&self) -> f64 {
        self.len / self.res as f64
    }

    pub fn nodes(&self) -> usize {
        self.res.pow(self.dim as u32)
    }

    /// Stride of `axis` in the flat node index.
    pub fn stride(&self, axis: usize) -> usize {
        self.res.pow((self.dim - 1 - axis) as u32)
    }

    /// Number of stored components of a packed symmetric 2-tensor.
    pub fn sym_comps(&self) -> usize {
        self.dim * (self.dim + 1) / 2
    }

    pub fn node_index(&self, coords: &[usize]) -> usize {
        let mut idx = 0;
        for (a, &c) in coords.iter().enumerate().take(self.dim) {
            idx += (c % self.res) * self.stride(a);
        }
        idx
    }

    pub fn node_coords(&self, mut node: usize) -> [usize; 3] {
        let mut out = [0usize; 3];
        for a in (0..self.dim).rev() {
            out[a] = node % self.res;
            node /= self.res;
        }
        out
    }

    /// Physical position of a node, in `[0, L)^n`.
    pub fn position(&self, node: usize) -> [f64; 3] {
        let c = self.node_coords(node);
        let dx = self.spacing();
        let mut p = [0.0; 3];
        for a in 0..self.dim {
            p[a] = c[a] as f64 * dx;
        }
        p
    }

    /// Shortest signed periodic difference `a - b` per axis.
    pub fn periodic_delta(&self, a: f64, b: f64) -> f64 {
        let mut d = (a - b) % self.len;
        if d > 0.5 * self.len {
            d -= self.len;
        } else if d < -0.5 * self.len {
            d += self.len;
        }
        d
    }

    /// Periodic Euclidean distance between two points.
    pub fn distance(&self, p: &[f64], q: &[f64]) -> f64 {
        let mut s = 0.0;
        for a in 0..self.dim {
            let d = self.periodic_delta(p[a], q[a]);
            s += d * d;
        }
        s.sqrt()
    }

    /// Integration weight of one node, `dx^n`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }
}

/// Packed index of the (i, j) entry of a symmetric n x n matrix, i <= j order.
#[inline]
pub fn sym_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * n - i * (i + 1) / 2 + j
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        assert!(TorusGrid::new(2, 32, 1.0).is_ok());
        assert!(TorusGrid::new(0, 32, 1.0).is_err());
        assert!(TorusGrid::new(4, 32, 1.0).is_err());
        assert!(TorusGrid::new(2, 12, 1.0).is_err());
        assert!(TorusGrid::new(2, 4, 1.0).is_err());
        assert!(TorusGrid::new(2, 32, 0.0).is_err());
    }

    #[test]
    fn index_round_trip() {
        let g = TorusGrid::new(3, 8, 1.0).unwrap();
        for node in 0..g.nodes() {
            let c = g.node_coords(node);
            assert_eq!(g.node_index(&c[..3]), node);
        }
    }

    #[test]
    fn sym_index_packing() {
        assert_eq!(sym_index(2, 0, 0), 0);
        assert_eq!(sym_index(2, 0, 1), 1);
        assert_eq!(sym_index(2, 1, 0), 1);
        assert_eq!(sym_index(2, 1, 1), 2);
        assert_eq!(sym_index(3, 2, 2), 5);
        assert_eq!(sym_index(3, 1, 2), 4);
    }

    #[test]
    fn periodic_distance_wraps() {
        let g = TorusGrid::new(2, 16, 2.0).unwrap();
        let d = g.distance(&[0.1, 0.0], &[1.9, 0.0]);
        assert!((d - 0.2).abs() < 1e-14);
    }
}
