//! Rough initial metrics of prescribed spectral decay, the spectral Gaussian
//! mollifier, and pinned pullbacks of the flat metric by rough
//! diffeomorphisms.
//!
//! Random phases are a pure function of (seed, component, mode), so the mode
//! sets nest under grid refinement and identical seeds give bit-identical
//! fields.

use crate::background::BackgroundMetric;
use crate::calculus;
use crate::error::{CoreError, Result};
use crate::fft::{fft_nd, mode_number};
use crate::field::{MetricField, ScalarField};
use crate::grid::TorusGrid;

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentPattern {
    All,
    Diagonal,
    List(Vec<(usize, usize)>),
}

impl ComponentPattern {
    fn contains(&self, i: usize, j: usize) -> bool {
        match self {
            Self::All => true,
            Self::Diagonal => i == j,
            Self::List(l) => l.iter().any(|&(a, b)| (a, b) == (i, j) || (a, b) == (j, i)),
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct RoughMetricSpec {
    /// Fourier amplitude law |k|^{-alpha}
    pub decay_exponent: f64,
    /// target max-node |g0 - h|_h; zero means g0 = h exactly
    pub amplitude_cap: f64,
    pub seed: u64,
    /// modes with |k|_2 <= mode_cutoff participate (capped below Nyquist)
    pub mode_cutoff: usize,
    pub pattern: ComponentPattern,
}

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Uniform phase in [0, 2pi), a pure function of (seed, channel, mode).
fn mode_phase(seed: u64, channel: u64, m: &[i64; 3]) -> f64 {
    let mut h = mix64(seed ^ 0x6a09e667f3bcc908);
    h = mix64(h ^ channel);
    for &c in m {
        h = mix64(h ^ (c as u64));
    }
    (h >> 11) as f64 / (1u64 << 53) as f64 * std::f64::consts::TAU
}

/// Real band-limited field with random phases and |m|^{-alpha} amplitudes,
/// built in spectral space and inverse transformed. `deriv_axis` of Some(a)
/// returns the exact spectral derivative along axis a instead.
fn rough_field(
    grid: TorusGrid,
    alpha: f64,
    cutoff: usize,
    seed: u64,
    channel: u64,
    deriv_axis: Option<usize>,
) -> ScalarField {
    let n = grid.dim();
    let r = grid.res();
    let nn = grid.nodes();
    let kmax = cutoff.min(r / 2 - 1);
    let mut re = vec![0.0; nn];
    let mut im = vec![0.0; nn];
    let k_unit = std::f64::consts::TAU / grid.len();
    let km = kmax as i64;
    let mut m = [0i64; 3];
    let lo = |a: usize| if a < n { -km } else { 0 };
    let hi = |a: usize| if a < n { km } else { 0 };
    for m0 in lo(0)..=hi(0) {
        m[0] = m0;
        for m1 in lo(1)..=hi(1) {
            m[1] = m1;
            for m2 in lo(2)..=hi(2) {
                m[2] = m2;
                let norm_sq = (m0 * m0 + m1 * m1 + m2 * m2) as f64;
                if norm_sq == 0.0 || norm_sq > (km * km) as f64 {
                    continue;
                }
                // canonical representative: first nonzero component positive
                let first = [m0, m1, m2].into_iter().find(|&v| v != 0).unwrap();
                if first < 0 {
                    continue;
                }
                let amp = norm_sq.sqrt().powf(-alpha) / 2.0;
                let theta = mode_phase(seed, channel, &m);
                let (mut cr, mut ci) = (amp * theta.cos(), amp * theta.sin());
                if let Some(a) = deriv_axis {
                    // multiply by i k_a
                    let ka = m[a] as f64 * k_unit;
                    let (nr, ni) = (-ka * ci, ka * cr);
                    cr = nr;
                    ci = ni;
                }
                let mut idx = 0;
                let mut cidx = 0;
                for a in 0..n {
                    idx += (m[a].rem_euclid(r as i64) as usize) * grid.stride(a);
                    cidx += ((-m[a]).rem_euclid(r as i64) as usize) * grid.stride(a);
                }
                re[idx] += cr;
                im[idx] += ci;
                re[cidx] += cr;
                im[cidx] -= ci;
            }
        }
    }
    // spectral coefficients are per-mode amplitudes: inverse transform without
    // the 1/N^n normalization, i.e. forward transform with conjugate trick
    let mut fre = re;
    let mut fim = im;
    fft_nd(grid, &mut fre, &mut fim, true);
    let scale = nn as f64;
    let vals = fre.iter().map(|v| v * scale).collect();
    ScalarField::from_vals(grid, vals)
}

/// Real random-phase band-limited field with |k|^{-alpha} amplitudes,
/// deterministic in (seed, channel). Used for test functions and synthetic
/// data; the metric generators below build on the same spectral machinery.
pub fn band_limited_field(
    grid: TorusGrid,
    alpha: f64,
    cutoff: usize,
    seed: u64,
    channel: u64,
) -> ScalarField {
    rough_field(grid, alpha, cutoff, seed, channel, None)
}

/// g0 = h + P: random-phase symmetric perturbation with |k|^{-alpha}
/// spectral magnitudes, rescaled so max-node |P|_h equals the amplitude cap.
pub fn generate_rough_metric(spec: &RoughMetricSpec, bg: &BackgroundMetric) -> Result<MetricField> {
    let grid = bg.grid();
    let n = grid.dim();
    if spec.amplitude_cap < 0.0 {
        return Err(CoreError::InvalidParameter("amplitude_cap must be >= 0".into()));
    }
    if spec.amplitude_cap == 0.0 {
        return Ok(bg.h().clone());
    }
    if spec.decay_exponent <= 0.0 {
        return Err(CoreError::InvalidParameter("decay_exponent must be > 0".into()));
    }
    if spec.mode_cutoff > grid.res() / 2 {
        return Err(CoreError::InvalidParameter(format!(
            "mode_cutoff {} above Nyquist {}",
            spec.mode_cutoff,
            grid.res() / 2
        )));
    }
    let mut pert = MetricField::zeros(grid);
    let mut any = false;
    for i in 0..n {
        for j in i..n {
            if !spec.pattern.contains(i, j) {
                continue;
            }
            any = true;
            let channel = (i * 3 + j) as u64;
            let f = rough_field(grid, spec.decay_exponent, spec.mode_cutoff, spec.seed, channel, None);
            pert.comp_slice_mut(pert.comp_of(i, j)).copy_from_slice(f.vals());
        }
    }
    if !any {
        return Err(CoreError::EmptyPerturbation);
    }
    let norm = calculus::tensor_norm(&pert.to_tensor(), bg);
    let max = norm.max();
    if !(max > 0.0) {
        return Err(CoreError::EmptyPerturbation);
    }
    pert.scale(spec.amplitude_cap / max);
    let mut g0 = bg.h().clone();
    g0.add_scaled(&pert, 1.0);
    Ok(g0)
}

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct MollifierParams {
    /// Gaussian spectral filter width, length units; 0 is the identity
    pub scale: f64,
}

/// Componentwise spectral Gaussian filter: the coefficient at physical mode k
/// is multiplied by exp(-s^2 |k|^2 / 2).
pub fn mollify(g: &MetricField, params: &MollifierParams) -> MetricField {
    let s = params.scale;
    assert!(s >= 0.0, "mollifier scale must be nonnegative");
    if s == 0.0 {
        return g.clone();
    }
    let grid = g.grid();
    let n = grid.dim();
    let r = grid.res();
    let nn = grid.nodes();
    let k_unit = std::f64::consts::TAU / grid.len();
    // per-axis factors exp(-s^2 k_a^2/2) multiply to the full filter
    let axis_factor: Vec<f64> = (0..r)
        .map(|k| {
            let ka = mode_number(k, r) as f64 * k_unit;
            (-0.5 * s * s * ka * ka).exp()
        })
        .collect();
    let mut out = g.clone();
    for c in 0..g.ncomp() {
        let mut re = g.comp_slice(c).to_vec();
        let mut im = vec![0.0; nn];
        fft_nd(grid, &mut re, &mut im, false);
        for node in 0..nn {
            let coords = grid.node_coords(node);
            let mut f = 1.0;
            for a in 0..n {
                f *= axis_factor[coords[a]];
            }
            re[node] *= f;
            im[node] *= f;
        }
        fft_nd(grid, &mut re, &mut im, true);
        out.comp_slice_mut(c).copy_from_slice(&re);
    }
    out
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct PullbackFlatSpec {
    /// spectral decay of the displacement components
    pub decay_exponent: f64,
    /// pinning target: the result satisfies (1-eps) delta <= g <= (1+eps) delta
    pub pinning: f64,
    pub seed: u64,
    pub mode_cutoff: usize,
}

/// Pullback of the flat metric by a rough-but-smooth diffeomorphism
/// Psi(x) = x + u(x): g = (D Psi)^T (D Psi). Its distributional scalar
/// curvature vanishes identically, so it tests lower-bound propagation with
/// b = 0. The displacement derivatives are exact spectral derivatives of the
/// band-limited u, not finite differences.
pub fn generate_pullback_flat(spec: &PullbackFlatSpec, grid: TorusGrid) -> Result<MetricField> {
    if !(spec.pinning > 0.0) {
        return Err(CoreError::InvalidParameter("pinning must be > 0".into()));
    }
    let n = grid.dim();
    let nn = grid.nodes();
    let h = MetricField::flat(grid);
    // exact derivative fields d_i u^a at unit amplitude
    let mut du = vec![vec![0.0; nn]; n * n];
    for a in 0..n {
        for i in 0..n {
            let f = rough_field(
                grid,
                spec.decay_exponent,
                spec.mode_cutoff,
                spec.seed,
                1000 + a as u64,
                Some(i),
            );
            du[a * n + i].copy_from_slice(f.vals());
        }
    }
    let build = |scale: f64| -> MetricField {
        let mut g = MetricField::zeros(grid);
        for i in 0..n {
            for j in i..n {
                let c = g.comp_of(i, j);
                let mut vals = vec![0.0; nn];
                for node in 0..nn {
                    // J_{a i} = delta_{a i} + scale * d_i u^a
                    let mut s = 0.0;
                    for a in 0..n {
                        let jai = (if a == i { 1.0 } else { 0.0 }) + scale * du[a * n + i][node];
                        let jaj = (if a == j { 1.0 } else { 0.0 }) + scale * du[a * n + j][node];
                        s += jai * jaj;
                    }
                    vals[node] = s;
                }
                g.comp_slice_mut(c).copy_from_slice(&vals);
            }
        }
        g
    };
    // fixed-point rescale to land on the pinning target (deterministic
    // iteration count)
    let mut scale = spec.pinning;
    let mut g = build(scale);
    for _ in 0..4 {
        let excess = g.pinning_excess(&h);
        if !(excess > 0.0) {
            return Err(CoreError::EmptyPerturbation);
        }
        scale *= spec.pinning / excess;
        g = build(scale);
    }
    let excess = g.pinning_excess(&h);
    if excess > spec.pinning {
        scale *= spec.pinning / excess * 0.999;
        g = build(scale);
    }
    g.check_spd()?;
    Ok(g)
}
