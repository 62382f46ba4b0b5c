//! Periodic cubic (4-point Lagrange) interpolation, tensor-product per axis.

use crate::grid::TorusGrid;

/// Cubic Lagrange weights at fractional offset u in [0,1) for the stencil
/// points i0-1, i0, i0+1, i0+2.
#[inline]
fn weights(u: f64) -> [f64; 4] {
    [
        -u * (u - 1.0) * (u - 2.0) / 6.0,
        (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0,
        -(u + 1.0) * u * (u - 2.0) / 2.0,
        (u + 1.0) * u * (u - 1.0) / 6.0,
    ]
}

/// Interpolate one component slab at an arbitrary point (periodic wrap).
pub fn sample(grid: TorusGrid, comp: &[f64], pos: &[f64; 3]) -> f64 {
    let n = grid.dim();
    let r = grid.res();
    let dx = grid.spacing();
    let mut base = [0usize; 3];
    let mut w = [[0.0f64; 4]; 3];
    for a in 0..n {
        let xi = pos[a] / dx;
        let mut i0 = xi.floor();
        let mut u = xi - i0;
        // snap to the node when within roundoff, so on-node samples are exact
        if u < 1e-12 {
            u = 0.0;
        } else if u > 1.0 - 1e-12 {
            i0 += 1.0;
            u = 0.0;
        }
        let i0 = (i0 as i64).rem_euclid(r as i64) as usize;
        base[a] = i0;
        w[a] = if u == 0.0 { [0.0, 1.0, 0.0, 0.0] } else { weights(u) };
    }
    let mut acc = 0.0;
    let mut offs = [0usize; 3];
    let count = 4usize.pow(n as u32);
    for c in 0..count {
        let mut cc = c;
        let mut weight = 1.0;
        for a in 0..n {
            offs[a] = cc % 4;
            cc /= 4;
            weight *= w[a][offs[a]];
        }
        let mut idx = 0usize;
        for a in 0..n {
            let i = (base[a] + r + offs[a] - 1) % r;
            idx += i * grid.stride(a);
        }
        acc += weight * comp[idx];
    }
    acc
}
