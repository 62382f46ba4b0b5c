//! Radix-2 FFT for the power-of-two periodic grid.
//!
//! Used only for initial-data generation, mollification, and spectral
//! diagnostics; all flow derivatives are finite differences.

use crate::grid::TorusGrid;

/// In-place complex FFT, length a power of two. `inverse` applies the 1/n
/// normalization.
pub fn fft(re: &mut [f64], im: &mut [f64], inverse: bool) {
    let n = re.len();
    assert_eq!(n, im.len());
    assert!(n.is_power_of_two());
    // bit reversal
    let mut j = 0usize;
    for i in 0..n {
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
        let mut mask = n >> 1;
        while mask > 0 && j & mask != 0 {
            j ^= mask;
            mask >>= 1;
        }
        j |= mask;
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let ang = sign * std::f64::consts::TAU / len as f64;
        let (ws, wc) = ang.sin_cos();
        for start in (0..n).step_by(len) {
            let mut wr = 1.0;
            let mut wi = 0.0;
            for k in 0..len / 2 {
                let a = start + k;
                let b = a + len / 2;
                let tr = re[b] * wr - im[b] * wi;
                let ti = re[b] * wi + im[b] * wr;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
                let nwr = wr * wc - wi * ws;
                wi = wr * ws + wi * wc;
                wr = nwr;
            }
        }
        len <<= 1;
    }
    if inverse {
        let s = 1.0 / n as f64;
        for v in re.iter_mut() {
            *v *= s;
        }
        for v in im.iter_mut() {
            *v *= s;
        }
    }
}

/// n-dimensional FFT over the grid, applied axis by axis.
pub fn fft_nd(grid: TorusGrid, re: &mut [f64], im: &mut [f64], inverse: bool) {
    let r = grid.res();
    let nn = grid.nodes();
    assert_eq!(re.len(), nn);
    let mut lre = vec![0.0; r];
    let mut lim = vec![0.0; r];
    for axis in 0..grid.dim() {
        let s = grid.stride(axis);
        let block = s * r;
        for hi in 0..nn / block {
            for lo in 0..s {
                let base = hi * block + lo;
                for t in 0..r {
                    lre[t] = re[base + t * s];
                    lim[t] = im[base + t * s];
                }
                fft(&mut lre, &mut lim, inverse);
                for t in 0..r {
                    re[base + t * s] = lre[t];
                    im[base + t * s] = lim[t];
                }
            }
        }
    }
}

/// Signed integer mode number of frequency bin `k` on an axis of length `res`.
pub fn mode_number(k: usize, res: usize) -> i64 {
    if k <= res / 2 {
        k as i64
    } else {
        k as i64 - res as i64
    }
}
