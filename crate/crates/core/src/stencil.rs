//! Fourth-order centered finite differences with periodic wrap.
//!
//! Lines along `axis` live inside contiguous blocks of `stride * res`
//! elements, so blocks can be processed in parallel with disjoint output.
//! Every output element is a pure function of the input, which keeps results
//! bit-identical for any thread count.

use crate::grid::TorusGrid;
use rayon::prelude::*;

/// First derivative along `axis`: (f[-2] - 8 f[-1] + 8 f[+1] - f[+2]) / (12 dx).
pub fn deriv1(grid: TorusGrid, axis: usize, src: &[f64], dst: &mut [f64]) {
    let r = grid.res();
    let s = grid.stride(axis);
    let inv = 1.0 / (12.0 * grid.spacing());
    let block = s * r;
    dst.par_chunks_mut(block).zip(src.par_chunks(block)).for_each(|(d, f)| {
        for lo in 0..s {
            for t in 2..r - 2 {
                let i = lo + t * s;
                // grouped so equal neighbors cancel exactly
                d[i] = (8.0 * (f[i + s] - f[i - s]) + (f[i - 2 * s] - f[i + 2 * s])) * inv;
            }
            for &t in &[0, 1, r - 2, r - 1] {
                let at = |k: isize| {
                    let tt = (t as isize + k).rem_euclid(r as isize) as usize;
                    f[lo + tt * s]
                };
                d[lo + t * s] = (8.0 * (at(1) - at(-1)) + (at(-2) - at(2))) * inv;
            }
        }
    });
}

/// Second derivative along `axis`:
/// (-f[-2] + 16 f[-1] - 30 f[0] + 16 f[+1] - f[+2]) / (12 dx^2).
pub fn deriv2(grid: TorusGrid, axis: usize, src: &[f64], dst: &mut [f64]) {
    let r = grid.res();
    let s = grid.stride(axis);
    let dx = grid.spacing();
    let inv = 1.0 / (12.0 * dx * dx);
    let block = s * r;
    dst.par_chunks_mut(block).zip(src.par_chunks(block)).for_each(|(d, f)| {
        for lo in 0..s {
            for t in 2..r - 2 {
                let i = lo + t * s;
                // 16(f[-1]+f[+1]) - (f[-2]+f[+2]) rounds to the same value as
                // 30 f[0] when the line is constant, so constants map to zero
                d[i] = ((16.0 * (f[i - s] + f[i + s]) - (f[i - 2 * s] + f[i + 2 * s]))
                    - 30.0 * f[i])
                    * inv;
            }
            for &t in &[0, 1, r - 2, r - 1] {
                let at = |k: isize| {
                    let tt = (t as isize + k).rem_euclid(r as isize) as usize;
                    f[lo + tt * s]
                };
                d[lo + t * s] =
                    ((16.0 * (at(-1) + at(1)) - (at(-2) + at(2))) - 30.0 * at(0)) * inv;
            }
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reduce::{max_abs, pairwise_sum};

    fn field(grid: TorusGrid, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        (0..grid.nodes())
            .map(|i| {
                let p = grid.position(i);
                f(p[0], p[1])
            })
            .collect()
    }

    #[test]
    fn derivative_of_constant_is_exactly_zero() {
        let g = TorusGrid::new(2, 16, 2.0).unwrap();
        let src = vec![3.7; g.nodes()];
        let mut dst = vec![1.0; g.nodes()];
        deriv1(g, 0, &src, &mut dst);
        assert!(dst.iter().all(|&v| v == 0.0));
        deriv2(g, 1, &src, &mut dst);
        assert!(dst.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fourth_order_convergence_on_sine() {
        let tau = std::f64::consts::TAU;
        let mut errs = Vec::new();
        for res in [16usize, 32, 64] {
            let g = TorusGrid::new(2, res, 1.0).unwrap();
            let src = field(g, |x, _| (tau * x).sin());
            let exact = field(g, |x, _| tau * (tau * x).cos());
            let mut dst = vec![0.0; g.nodes()];
            deriv1(g, 0, &src, &mut dst);
            let err = dst.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            errs.push(err);
        }
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!(ratio > 14.0 && ratio < 18.0, "ratio {ratio}");
        }
    }

    #[test]
    fn second_derivative_fourth_order() {
        let tau = std::f64::consts::TAU;
        let mut errs = Vec::new();
        for res in [16usize, 32, 64] {
            let g = TorusGrid::new(1, res, 1.0).unwrap();
            let src: Vec<f64> = (0..res).map(|i| (tau * i as f64 / res as f64).sin()).collect();
            let mut dst = vec![0.0; res];
            deriv2(g, 0, &src, &mut dst);
            let err = (0..res)
                .map(|i| {
                    let x = i as f64 / res as f64;
                    (dst[i] + tau * tau * (tau * x).sin()).abs()
                })
                .fold(0.0, f64::max);
            errs.push(err);
        }
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!(ratio > 14.0 && ratio < 18.0, "ratio {ratio}");
        }
    }

    #[test]
    fn cross_axis_matches_axis0() {
        // symmetry: derivative along axis 1 of f(y) equals derivative along
        // axis 0 of f(x) transposed
        let g = TorusGrid::new(2, 16, 1.0).unwrap();
        let tau = std::f64::consts::TAU;
        let fx = field(g, |x, _| (tau * x).sin() + 0.3 * (2.0 * tau * x).cos());
        let fy = field(g, |_, y| (tau * y).sin() + 0.3 * (2.0 * tau * y).cos());
        let mut dx = vec![0.0; g.nodes()];
        let mut dy = vec![0.0; g.nodes()];
        deriv1(g, 0, &fx, &mut dx);
        deriv1(g, 1, &fy, &mut dy);
        for i in 0..16 {
            for j in 0..16 {
                let a = dx[g.node_index(&[i, j])];
                let b = dy[g.node_index(&[j, i])];
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn summation_by_parts_is_exact() {
        // centered stencils are antisymmetric circulants: sum f (D g) = -sum (D f) g
        let g = TorusGrid::new(2, 32, 2.0).unwrap();
        let tau = std::f64::consts::TAU;
        let f = field(g, |x, y| (tau * x).sin() * (2.0 * tau * y / 2.0).cos() + 0.2);
        let x = field(g, |x, y| (2.0 * tau * x / 2.0).cos() + (tau * y).sin());
        let mut df = vec![0.0; g.nodes()];
        let mut dx = vec![0.0; g.nodes()];
        deriv1(g, 0, &f, &mut df);
        deriv1(g, 0, &x, &mut dx);
        let a = pairwise_sum(&f.iter().zip(&dx).map(|(u, v)| u * v).collect::<Vec<_>>());
        let b = pairwise_sum(&df.iter().zip(&x).map(|(u, v)| u * v).collect::<Vec<_>>());
        let scale = max_abs(&f) * max_abs(&dx) * g.nodes() as f64;
        assert!((a + b).abs() <= 1e-13 * scale.max(1.0));
    }

    #[test]
    fn linearity_to_machine_precision() {
        let g = TorusGrid::new(2, 16, 1.0).unwrap();
        let tau = std::f64::consts::TAU;
        let t1 = field(g, |x, y| (tau * x).sin() * (tau * y).cos());
        let t2 = field(g, |x, y| (2.0 * tau * x).cos() + (tau * y).sin());
        let (a, b) = (2.5, -1.25);
        let combo: Vec<f64> = t1.iter().zip(&t2).map(|(u, v)| a * u + b * v).collect();
        let mut d_combo = vec![0.0; g.nodes()];
        let mut d1 = vec![0.0; g.nodes()];
        let mut d2 = vec![0.0; g.nodes()];
        deriv1(g, 1, &combo, &mut d_combo);
        deriv1(g, 1, &t1, &mut d1);
        deriv1(g, 1, &t2, &mut d2);
        for i in 0..g.nodes() {
            let lin = a * d1[i] + b * d2[i];
            assert!((d_combo[i] - lin).abs() <= 1e-12 * lin.abs().max(1.0));
        }
    }
}
