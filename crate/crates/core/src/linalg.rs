//! Closed-form linear algebra for packed symmetric matrices, n <= 3.
//!
//! Packed layout is row-major upper triangle: n=2 -> [a00, a01, a11],
//! n=3 -> [a00, a01, a02, a11, a12, a22].

use crate::grid::sym_index;

#[inline]
pub fn sym_get(n: usize, a: &[f64], i: usize, j: usize) -> f64 {
    a[sym_index(n, i, j)]
}

pub fn sym_det(n: usize, a: &[f64]) -> f64 {
    match n {
        1 => a[0],
        2 => a[0] * a[2] - a[1] * a[1],
        3 => {
            a[0] * (a[3] * a[5] - a[4] * a[4]) - a[1] * (a[1] * a[5] - a[4] * a[2])
                + a[2] * (a[1] * a[4] - a[3] * a[2])
        }
        _ => unreachable!("dim <= 3"),
    }
}

pub fn sym_trace(n: usize, a: &[f64]) -> f64 {
    match n {
        1 => a[0],
        2 => a[0] + a[2],
        3 => a[0] + a[3] + a[5],
        _ => unreachable!(),
    }
}

/// Inverse of a packed symmetric matrix; returns the determinant.
pub fn sym_invert(n: usize, a: &[f64], out: &mut [f64]) -> f64 {
    let det = sym_det(n, a);
    match n {
        1 => out[0] = 1.0 / a[0],
        2 => {
            let inv = 1.0 / det;
            out[0] = a[2] * inv;
            out[1] = -a[1] * inv;
            out[2] = a[0] * inv;
        }
        3 => {
            let inv = 1.0 / det;
            out[0] = (a[3] * a[5] - a[4] * a[4]) * inv;
            out[1] = (a[2] * a[4] - a[1] * a[5]) * inv;
            out[2] = (a[1] * a[4] - a[2] * a[3]) * inv;
            out[3] = (a[0] * a[5] - a[2] * a[2]) * inv;
            out[4] = (a[1] * a[2] - a[0] * a[4]) * inv;
            out[5] = (a[0] * a[3] - a[1] * a[1]) * inv;
        }
        _ => unreachable!(),
    }
    det
}

/// Eigenvalues in ascending order; only the first n entries are meaningful.
pub fn sym_eigenvalues(n: usize, a: &[f64]) -> [f64; 3] {
    match n {
        1 => [a[0], 0.0, 0.0],
        2 => {
            let mean = 0.5 * (a[0] + a[2]);
            let half = 0.5 * (a[0] - a[2]);
            let r = (half * half + a[1] * a[1]).sqrt();
            [mean - r, mean + r, 0.0]
        }
        3 => {
            let off = a[1] * a[1] + a[2] * a[2] + a[4] * a[4];
            if off == 0.0 {
                let mut d = [a[0], a[3], a[5]];
                d.sort_by(|x, y| x.partial_cmp(y).unwrap());
                return d;
            }
            let q = sym_trace(3, a) / 3.0;
            let p2 = (a[0] - q).powi(2) + (a[3] - q).powi(2) + (a[5] - q).powi(2) + 2.0 * off;
            let p = (p2 / 6.0).sqrt();
            let b = [
                (a[0] - q) / p,
                a[1] / p,
                a[2] / p,
                (a[3] - q) / p,
                a[4] / p,
                (a[5] - q) / p,
            ];
            let r = (sym_det(3, &b) / 2.0).clamp(-1.0, 1.0);
            let phi = r.acos() / 3.0;
            let hi = q + 2.0 * p * phi.cos();
            let lo = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
            let mid = 3.0 * q - hi - lo;
            [lo, mid, hi]
        }
        _ => unreachable!(),
    }
}

pub fn sym_min_eigenvalue(n: usize, a: &[f64]) -> f64 {
    sym_eigenvalues(n, a)[0]
}

pub fn sym_max_eigenvalue(n: usize, a: &[f64]) -> f64 {
    sym_eigenvalues(n, a)[n - 1]
}

/// Cholesky factor L (lower, row-major dense [l00, l10, l11, l20, l21, l22])
/// of a packed SPD matrix. Returns None if a pivot is nonpositive.
pub fn sym_cholesky(n: usize, a: &[f64]) -> Option<[f64; 6]> {
    let mut l = [0.0; 6];
    // dense lower indices: (0,0)=0 (1,0)=1 (1,1)=2 (2,0)=3 (2,1)=4 (2,2)=5
    let get = |i: usize, j: usize| sym_get(n, a, i, j);
    if get(0, 0) <= 0.0 {
        return None;
    }
    l[0] = get(0, 0).sqrt();
    if n >= 2 {
        l[1] = get(1, 0) / l[0];
        let d = get(1, 1) - l[1] * l[1];
        if d <= 0.0 {
            return None;
        }
        l[2] = d.sqrt();
    }
    if n >= 3 {
        l[3] = get(2, 0) / l[0];
        l[4] = (get(2, 1) - l[3] * l[1]) / l[2];
        let d = get(2, 2) - l[3] * l[3] - l[4] * l[4];
        if d <= 0.0 {
            return None;
        }
        l[5] = d.sqrt();
    }
    Some(l)
}

/// Eigenvalues of h^{-1} g for packed symmetric g and SPD h, ascending.
///
/// Computed as the ordinary eigenvalues of L^{-1} g L^{-T} with h = L L^T.
pub fn generalized_eigenvalues(n: usize, g: &[f64], h: &[f64]) -> Option<[f64; 3]> {
    let l = sym_cholesky(n, h)?;
    // B = L^{-1} G: solve L B = G column by column (G dense from packed).
    let mut gd = [[0.0f64; 3]; 3];
    for i in 0..n {
        for j in 0..n {
            gd[i][j] = sym_get(n, g, i, j);
        }
    }
    let lad = [[l[0], 0.0, 0.0], [l[1], l[2], 0.0], [l[3], l[4], l[5]]];
    let mut b = [[0.0f64; 3]; 3];
    for col in 0..n {
        for i in 0..n {
            let mut s = gd[i][col];
            for k in 0..i {
                s -= lad[i][k] * b[k][col];
            }
            b[i][col] = s / lad[i][i];
        }
    }
    // M = B L^{-T}: solve M L^T = B, i.e. row-wise forward substitution.
    let mut m = [[0.0f64; 3]; 3];
    for row in 0..n {
        for j in 0..n {
            let mut s = b[row][j];
            for k in 0..j {
                s -= m[row][k] * lad[j][k];
            }
            m[row][j] = s / lad[j][j];
        }
    }
    let mut packed = [0.0f64; 6];
    for i in 0..n {
        for j in i..n {
            // symmetrize against roundoff
            packed[sym_index(n, i, j)] = 0.5 * (m[i][j] + m[j][i]);
        }
    }
    Some(sym_eigenvalues(n, &packed[..n * (n + 1) / 2]))
}
