//! Conjugate heat equation along a (related) Ricci flow trajectory, solved
//! backward from smooth final data, with the mass-monotonicity series and the
//! sup/p-norm bounds it is tested against.
//!
//! The Laplacian is in divergence form, which makes it exactly self-adjoint
//! against the sqrt(det l) quadrature weight at the discrete level.

use crate::calculus::integrate;
use crate::curvature::{ricci, ricci_norm_sq, scalar_curvature};
use crate::error::{CoreError, Result};
use crate::field::{MetricField, ScalarField};
use crate::grid::{sym_index, TorusGrid};
use crate::linalg;
use crate::report::NormReport;
use crate::stencil;

/// Precomputed divergence-form coefficients of one metric snapshot:
/// weight w = sqrt(det l), flux matrix a^{ij} = w l^{ij}, curvature r = R_l.
#[derive(Debug, Clone)]
pub struct ConjCoeffs {
    pub weight: ScalarField,
    /// packed symmetric contravariant flux coefficients, comp-major
    pub flux: Vec<Vec<f64>>,
    pub scalar_curv: ScalarField,
}

impl ConjCoeffs {
    pub fn build(ell: &MetricField) -> Result<Self> {
        let grid = ell.grid();
        let n = grid.dim();
        let nn = grid.nodes();
        let det = ell.determinant();
        for (node, &d) in det.vals().iter().enumerate() {
            if !(d > 0.0) {
                return Err(CoreError::DegenerateMetric { node, det: d });
            }
        }
        let weight = det.map(f64::sqrt);
        let inv = ell.inverse()?;
        let m = grid.sym_comps();
        let mut flux = vec![vec![0.0; nn]; m];
        for i in 0..n {
            for j in i..n {
                let c = sym_index(n, i, j);
                let sl = inv.comp_slice(inv.comp_of(&[i, j]));
                for node in 0..nn {
                    flux[c][node] = weight.vals()[node] * sl[node];
                }
            }
        }
        Ok(Self { weight, flux, scalar_curv: scalar_curvature(ell)? })
    }

    fn lerp(a: &Self, b: &Self, w: f64, grid: TorusGrid) -> Self {
        let mix = |x: &[f64], y: &[f64]| -> Vec<f64> {
            x.iter().zip(y).map(|(u, v)| (1.0 - w) * u + w * v).collect()
        };
        Self {
            weight: ScalarField::from_vals(grid, mix(a.weight.vals(), b.weight.vals())),
            flux: a.flux.iter().zip(&b.flux).map(|(x, y)| mix(x, y)).collect(),
            scalar_curv: ScalarField::from_vals(
                grid,
                mix(a.scalar_curv.vals(), b.scalar_curv.vals()),
            ),
        }
    }
}

/// Divergence-form Laplacian: (1/w) d_i ( a^{ij} d_j psi ).
fn div_form_laplacian(psi: &[f64], coeffs: &ConjCoeffs, grid: TorusGrid) -> Vec<f64> {
    let n = grid.dim();
    let nn = grid.nodes();
    let mut dpsi = vec![vec![0.0; nn]; n];
    for (j, d) in dpsi.iter_mut().enumerate() {
        stencil::deriv1(grid, j, psi, d);
    }
    let mut out = vec![0.0; nn];
    let mut flux = vec![0.0; nn];
    let mut dflux = vec![0.0; nn];
    for i in 0..n {
        for node in 0..nn {
            let mut f = 0.0;
            for (j, d) in dpsi.iter().enumerate() {
                f += coeffs.flux[sym_index(n, i, j)][node] * d[node];
            }
            flux[node] = f;
        }
        stencil::deriv1(grid, i, &flux, &mut dflux);
        for node in 0..nn {
            out[node] += dflux[node];
        }
    }
    for node in 0..nn {
        out[node] /= coeffs.weight.vals()[node];
    }
    out
}

/// Right side of the tau-form conjugate equation,
/// Laplace_l psi - R_l psi, for a single metric.
pub fn conjugate_rhs(psi: &ScalarField, ell: &MetricField) -> Result<ScalarField> {
    if psi.grid() != ell.grid() {
        return Err(CoreError::GridMismatch("conjugate_rhs".into()));
    }
    let grid = ell.grid();
    let coeffs = ConjCoeffs::build(ell)?;
    let lap = div_form_laplacian(psi.vals(), &coeffs, grid);
    let vals = lap
        .iter()
        .zip(psi.vals())
        .zip(coeffs.scalar_curv.vals())
        .map(|((l, p), r)| l - r * p)
        .collect();
    Ok(ScalarField::from_vals(grid, vals))
}

#[derive(Debug, Clone)]
pub struct ConjugateRun {
    pub y_time: f64,
    pub t_min: f64,
    pub phi_final: ScalarField,
    /// phi at the trajectory snapshot times inside [t_min, Y], ascending in t
    pub samples: Vec<(f64, ScalarField)>,
    pub clamp_count: usize,
}

fn stability_limit(ell: &MetricField, c_cfl: f64) -> Result<f64> {
    let grid = ell.grid();
    let n = grid.dim();
    let m = grid.sym_comps();
    let mut lam = 0.0f64;
    let eye = MetricField::flat(grid);
    for node in 0..grid.nodes() {
        let e = eye.at_node(node);
        let l = ell.at_node(node);
        let ev = linalg::generalized_eigenvalues(n, &e[..m], &l[..m])
            .ok_or(CoreError::NotPositiveDefinite { node, lambda_min: f64::NAN })?;
        lam = lam.max(ev[n - 1]);
    }
    Ok(c_cfl * grid.spacing().powi(2) / (2.0 * n as f64 * lam))
}

/// Solve the conjugate heat equation backward in t (forward in tau = Y - t)
/// by RK2, with metric coefficients interpolated linearly between snapshots.
/// Y and t_min snap to the nearest trajectory snapshots. Tiny negative
/// values (explicit schemes are not positivity preserving) are clamped and
/// counted; negativity beyond 1e-10 * max phi_Y aborts.
pub fn solve_conjugate(
    ell: &[(f64, MetricField)],
    phi_final: &ScalarField,
    y_time: f64,
    t_min: f64,
    c_cfl: f64,
) -> Result<ConjugateRun> {
    if ell.len() < 2 {
        return Err(CoreError::InsufficientSnapshots { needed: 2, got: ell.len() });
    }
    let grid = ell[0].1.grid();
    if phi_final.grid() != grid {
        return Err(CoreError::GridMismatch("solve_conjugate".into()));
    }
    for (node, &v) in phi_final.vals().iter().enumerate() {
        if v < 0.0 {
            return Err(CoreError::NegativeTestFunction { node, value: v });
        }
    }
    let nearest = |t: f64| -> usize {
        let mut best = 0;
        let mut d = f64::INFINITY;
        for (k, (tk, _)) in ell.iter().enumerate() {
            if (tk - t).abs() < d {
                d = (tk - t).abs();
                best = k;
            }
        }
        best
    };
    let iy = nearest(y_time);
    let imin = nearest(t_min);
    if imin >= iy {
        return Err(CoreError::InvalidParameter(format!(
            "t_min {t_min} must select an earlier snapshot than Y {y_time}"
        )));
    }

    let coeffs: Vec<ConjCoeffs> =
        ell[imin..=iy].iter().map(|(_, m)| ConjCoeffs::build(m)).collect::<Result<_>>()?;
    let off = imin;
    let floor = -1e-10 * crate::reduce::max_all(phi_final.vals()).max(0.0);

    let mut psi = phi_final.vals().to_vec();
    let mut clamp_count = 0usize;
    let mut samples: Vec<(f64, ScalarField)> = Vec::with_capacity(iy - imin + 1);
    samples.push((ell[iy].0, phi_final.clone()));

    // march down the intervals [t_{k-1}, t_k], k = iy .. imin+1
    for k in ((imin + 1)..=iy).rev() {
        let (t_hi, _) = ell[k];
        let (t_lo, _) = ell[k - 1];
        let span = t_hi - t_lo;
        let c_hi = &coeffs[k - off];
        let c_lo = &coeffs[k - 1 - off];
        let limit = stability_limit(&ell[k].1, c_cfl)?.min(stability_limit(&ell[k - 1].1, c_cfl)?);
        let steps = (span / limit).ceil().max(1.0) as usize;
        let dt = span / steps as f64;
        for s in 0..steps {
            let t = t_hi - s as f64 * dt;
            // coefficients at t and t - dt/2 (lerp weight measured from t_lo)
            let at = |tt: f64| ConjCoeffs::lerp(c_lo, c_hi, ((tt - t_lo) / span).clamp(0.0, 1.0), grid);
            let ca = at(t);
            let cb = at(t - 0.5 * dt);
            // tau-form rhs: F(psi) = Laplace psi - R psi; step in tau by +dt
            let f1 = {
                let lap = div_form_laplacian(&psi, &ca, grid);
                lap.iter()
                    .zip(&psi)
                    .zip(ca.scalar_curv.vals())
                    .map(|((l, p), r)| l - r * p)
                    .collect::<Vec<f64>>()
            };
            let mid: Vec<f64> =
                psi.iter().zip(&f1).map(|(p, f)| p + 0.5 * dt * f).collect();
            let f2 = {
                let lap = div_form_laplacian(&mid, &cb, grid);
                lap.iter()
                    .zip(&mid)
                    .zip(cb.scalar_curv.vals())
                    .map(|((l, p), r)| l - r * p)
                    .collect::<Vec<f64>>()
            };
            for (p, f) in psi.iter_mut().zip(&f2) {
                *p += dt * f;
            }
            let min = crate::reduce::min_all(&psi);
            if min < floor {
                return Err(CoreError::NegativityExceeded { min, t: t - dt });
            }
            if min < 0.0 {
                for p in psi.iter_mut() {
                    if *p < 0.0 {
                        *p = 0.0;
                        clamp_count += 1;
                    }
                }
            }
        }
        samples.push((t_lo, ScalarField::from_vals(grid, psi.clone())));
    }
    samples.reverse();
    Ok(ConjugateRun {
        y_time: ell[iy].0,
        t_min: ell[imin].0,
        phi_final: phi_final.clone(),
        samples,
        clamp_count,
    })
}

/// Forward heat flow d_t u = Laplace_l u on the same snapshots (used by the
/// conjugacy/duality check).
pub fn solve_forward_heat(
    ell: &[(f64, MetricField)],
    u0: &ScalarField,
    t_start: f64,
    t_end: f64,
    c_cfl: f64,
) -> Result<Vec<(f64, ScalarField)>> {
    let grid = ell[0].1.grid();
    let nearest = |t: f64| -> usize {
        let mut best = 0;
        let mut d = f64::INFINITY;
        for (k, (tk, _)) in ell.iter().enumerate() {
            if (tk - t).abs() < d {
                d = (tk - t).abs();
                best = k;
            }
        }
        best
    };
    let i0 = nearest(t_start);
    let i1 = nearest(t_end);
    if i0 >= i1 {
        return Err(CoreError::InvalidParameter("forward heat needs t_start < t_end".into()));
    }
    let coeffs: Vec<ConjCoeffs> =
        ell[i0..=i1].iter().map(|(_, m)| ConjCoeffs::build(m)).collect::<Result<_>>()?;
    let mut u = u0.vals().to_vec();
    let mut out = vec![(ell[i0].0, u0.clone())];
    for k in i0..i1 {
        let (t_lo, _) = ell[k];
        let (t_hi, _) = ell[k + 1];
        let span = t_hi - t_lo;
        let c_lo = &coeffs[k - i0];
        let c_hi = &coeffs[k + 1 - i0];
        let limit =
            stability_limit(&ell[k].1, c_cfl)?.min(stability_limit(&ell[k + 1].1, c_cfl)?);
        let steps = (span / limit).ceil().max(1.0) as usize;
        let dt = span / steps as f64;
        for s in 0..steps {
            let t = t_lo + s as f64 * dt;
            let at = |tt: f64| ConjCoeffs::lerp(c_lo, c_hi, ((tt - t_lo) / span).clamp(0.0, 1.0), grid);
            let f1 = div_form_laplacian(&u, &at(t), grid);
            let mid: Vec<f64> = u.iter().zip(&f1).map(|(p, f)| p + 0.5 * dt * f).collect();
            let f2 = div_form_laplacian(&mid, &at(t + 0.5 * dt), grid);
            for (p, f) in u.iter_mut().zip(&f2) {
                *p += dt * f;
            }
        }
        out.push((t_hi, ScalarField::from_vals(grid, u.clone())));
    }
    Ok(out)
}

/// ∫ f dl over the torus with the metric volume sqrt(det l).
pub fn integral_dl(f: &ScalarField, ell: &MetricField) -> f64 {
    let w = ell.determinant().map(f64::sqrt);
    integrate(f, &w)
}

/// The mass series M(t) = ∫ (R_l + b) phi dl at the stored sample times,
/// its companion ∫ 2 phi |Ric|^2 dl, and the worst monotonicity violation
/// max_{t < t'} (M(t) - M(t'))^+.
pub fn scalar_mass_series(
    run: &ConjugateRun,
    ell: &[(f64, MetricField)],
    b: f64,
) -> Result<NormReport> {
    let mut ts = Vec::new();
    let mut mass = Vec::new();
    let mut companion = Vec::new();
    for (t, phi) in &run.samples {
        let k = ell
            .iter()
            .position(|(tk, _)| (tk - t).abs() < 1e-14 * (1.0 + t.abs()))
            .ok_or_else(|| CoreError::InvalidParameter(format!("no metric snapshot at t={t}")))?;
        let metric = &ell[k].1;
        let r = scalar_curvature(metric)?;
        let integrand = r.zip(phi, |rv, pv| (rv + b) * pv);
        mass.push(integral_dl(&integrand, metric));
        let ric = ricci(metric)?;
        let rsq = ricci_norm_sq(metric, &ric)?;
        let comp = rsq.zip(phi, |a, p| 2.0 * a * p);
        companion.push(integral_dl(&comp, metric));
        ts.push(*t);
    }
    // worst violation of monotone nondecrease
    let mut viol = 0.0f64;
    let mut suffix_min = f64::INFINITY;
    for k in (0..mass.len()).rev() {
        if suffix_min.is_finite() {
            viol = viol.max(mass[k] - suffix_min);
        }
        suffix_min = suffix_min.min(mass[k]);
    }
    let mut rep = NormReport::new();
    let m_final = *mass.last().unwrap_or(&0.0);
    rep.series("mass", ts.clone(), mass)
        .series("ricci_companion", ts, companion)
        .scalar("max_monotonicity_violation", viol)
        .scalar("violation_scale", 1.0 + m_final.abs());
    Ok(rep)
}

/// A-priori bounds on the backward solution: the sup bound
/// sup phi(t) * t^eps <= Y^eps sup phi_Y under R_l(t) >= -eps/t, and the
/// p-norm series. If the curvature hypothesis fails for the given eps the
/// verdict is reported as inapplicable rather than failed.
pub fn check_conjugate_bounds(
    run: &ConjugateRun,
    ell: &[(f64, MetricField)],
    eps: f64,
    p_list: &[f64],
) -> Result<NormReport> {
    let mut rep = NormReport::new();
    let sup_final = crate::reduce::max_all(run.phi_final.vals());
    let mut hypothesis = true;
    let mut ratio = 0.0f64;
    let mut ts = Vec::new();
    let mut sups = Vec::new();
    let mut eps_needed = 0.0f64;
    for (t, phi) in &run.samples {
        let k = ell
            .iter()
            .position(|(tk, _)| (tk - t).abs() < 1e-14 * (1.0 + t.abs()))
            .ok_or_else(|| CoreError::InvalidParameter(format!("no metric snapshot at t={t}")))?;
        let metric = &ell[k].1;
        let r = scalar_curvature(metric)?;
        let min_r = r.min();
        eps_needed = eps_needed.max(-min_r * t);
        if min_r < -eps / t {
            hypothesis = false;
        }
        let sup = crate::reduce::max_all(phi.vals());
        ts.push(*t);
        sups.push(sup);
        if sup_final > 0.0 {
            ratio = ratio.max(sup * t.powf(eps) / (run.y_time.powf(eps) * sup_final));
        }
    }
    rep.series("sup_phi", ts.clone(), sups);
    rep.scalar("eps", eps)
        .scalar("eps_needed", eps_needed)
        .scalar("sup_bound_ratio", ratio)
        .verdict("hypothesis_holds", hypothesis);
    rep.meta(
        "sup_bound_status",
        if hypothesis { "checked" } else { "inapplicable: R_l(t) >= -eps/t fails" },
    );
    for &p in p_list {
        let mut series = Vec::new();
        for (t, phi) in &run.samples {
            let k = ell.iter().position(|(tk, _)| (tk - t).abs() < 1e-14 * (1.0 + t.abs()));
            let metric = &ell[k.unwrap()].1;
            series.push(integral_dl(&phi.map(|v| v.max(0.0).powf(p)), metric));
        }
        rep.series(&format!("p_norm_{p}"), ts.clone(), series);
    }
    // integrability inputs of the p-norm bound, reported for reference
    let mut l_alpha = 0.0;
    let mut vol_sup = 0.0f64;
    let mut prev: Option<(f64, f64)> = None;
    for (t, _) in &run.samples {
        let k = ell
            .iter()
            .position(|(tk, _)| (tk - t).abs() < 1e-14 * (1.0 + t.abs()))
            .unwrap();
        let metric = &ell[k].1;
        let r = scalar_curvature(metric)?;
        let neg_sq = r.map(|v| {
            let neg = (-v).max(0.0);
            neg * neg
        });
        let v = integral_dl(&neg_sq, metric);
        if let Some((tp, vp)) = prev {
            l_alpha += 0.5 * (v + vp) * (t - tp);
        }
        prev = Some((*t, v));
        vol_sup = vol_sup.max(integral_dl(&ScalarField::constant(metric.grid(), 1.0), metric));
    }
    rep.scalar("l_alpha_2", l_alpha).scalar("volume_sup", vol_sup);
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TAU: f64 = std::f64::consts::TAU;

    fn static_flat(grid: TorusGrid, t0: f64, t1: f64, k: usize) -> Vec<(f64, MetricField)> {
        (0..=k)
            .map(|i| {
                let t = t0 + (t1 - t0) * i as f64 / k as f64;
                (t, MetricField::flat(grid))
            })
            .collect()
    }

    #[test]
    fn constant_on_flat_is_stationary() {
        let grid = TorusGrid::new(2, 16, TAU).unwrap();
        let flat = MetricField::flat(grid);
        let psi = ScalarField::constant(grid, 3.0);
        let rhs = conjugate_rhs(&psi, &flat).unwrap();
        assert!(rhs.max_abs() < 1e-12);
    }

    #[test]
    fn laplacian_of_sine_on_flat() {
        let grid = TorusGrid::new(2, 64, TAU).unwrap();
        let flat = MetricField::flat(grid);
        let psi = ScalarField::from_fn(grid, |p| p[0].sin());
        let rhs = conjugate_rhs(&psi, &flat).unwrap();
        let mut max_err: f64 = 0.0;
        for node in 0..grid.nodes() {
            let x = grid.position(node)[0];
            max_err = max_err.max((rhs.vals()[node] + x.sin()).abs());
        }
        assert!(max_err < 2e-5, "max_err {max_err}");
    }

    #[test]
    fn constant_psi_on_curved_metric_gives_minus_r_psi() {
        let grid = TorusGrid::new(2, 64, TAU).unwrap();
        let ell = MetricField::from_fn(grid, |p, i, j| {
            if i == j {
                (2.0 * 0.05 * p[0].sin() * p[1].cos()).exp()
            } else {
                0.0
            }
        });
        let c = 2.5;
        let psi = ScalarField::constant(grid, c);
        let rhs = conjugate_rhs(&psi, &ell).unwrap();
        let r = scalar_curvature(&ell).unwrap();
        let mut max_err: f64 = 0.0;
        for node in 0..grid.nodes() {
            max_err = max_err.max((rhs.vals()[node] + c * r.vals()[node]).abs());
        }
        assert!(max_err < 1e-8, "max_err {max_err}");
    }

    #[test]
    fn constant_data_static_flat_stays_constant() {
        let grid = TorusGrid::new(2, 16, TAU).unwrap();
        let ell = static_flat(grid, 0.01, 0.05, 4);
        let phi_y = ScalarField::constant(grid, 2.0);
        let run = solve_conjugate(&ell, &phi_y, 0.05, 0.01, 0.2).unwrap();
        for (_, phi) in &run.samples {
            for &v in phi.vals() {
                assert!((v - 2.0).abs() < 1e-12);
            }
        }
        assert_eq!(run.clamp_count, 0);
    }

    #[test]
    fn backward_heat_mode_amplitude_matches_analytic() {
        // static flat: phi(x, t) = 1 + A e^{-k^2 (Y - t)} sin(k x) for the
        // backward equation d_tau phi = Laplace phi
        let grid = TorusGrid::new(2, 32, TAU).unwrap();
        let ell = static_flat(grid, 0.0, 0.1, 8);
        let phi_y = ScalarField::from_fn(grid, |p| 1.0 + 0.5 * p[0].sin());
        let run = solve_conjugate(&ell, &phi_y, 0.1, 0.0, 0.2).unwrap();
        for (t, phi) in &run.samples {
            let decay = (-(0.1 - t)).exp();
            let mut max_err: f64 = 0.0;
            for node in 0..grid.nodes() {
                let x = grid.position(node)[0];
                let expect = 1.0 + 0.5 * decay * x.sin();
                max_err = max_err.max((phi.vals()[node] - expect).abs());
            }
            // discrete symbol deficit ~2e-6 relative at k=1, N=32, over t~0.1
            assert!(max_err < 5e-5, "t={t} max_err {max_err}");
        }
    }

    #[test]
    fn mass_conservation_static_flat() {
        let grid = TorusGrid::new(2, 32, TAU).unwrap();
        let ell = static_flat(grid, 0.0, 0.08, 6);
        let phi_y = ScalarField::from_fn(grid, |p| 1.0 + 0.4 * p[0].sin() * p[1].cos());
        let run = solve_conjugate(&ell, &phi_y, 0.08, 0.0, 0.2).unwrap();
        let m_final = integral_dl(&phi_y, &ell[0].1);
        for (t, phi) in &run.samples {
            let m = integral_dl(phi, &ell[0].1);
            assert!((m - m_final).abs() < 1e-6 * m_final.abs(), "t={t}: {m} vs {m_final}");
        }
    }

    #[test]
    fn maximum_principle_static_flat() {
        let grid = TorusGrid::new(2, 32, TAU).unwrap();
        let ell = static_flat(grid, 0.0, 0.06, 5);
        let phi_y = ScalarField::from_fn(grid, |p| 1.0 + 0.9 * (2.0 * p[0]).sin());
        let run = solve_conjugate(&ell, &phi_y, 0.06, 0.0, 0.2).unwrap();
        let (lo, hi) = (0.1 - 1e-9, 1.9 + 1e-9);
        for (_, phi) in &run.samples {
            assert!(phi.min() >= lo && phi.max() <= hi);
        }
    }

    #[test]
    fn duality_with_forward_heat_static_flat() {
        let grid = TorusGrid::new(2, 32, TAU).unwrap();
        let ell = static_flat(grid, 0.0, 0.06, 6);
        let phi_y = ScalarField::from_fn(grid, |p| 1.0 + 0.5 * p[0].sin());
        let run = solve_conjugate(&ell, &phi_y, 0.06, 0.0, 0.2).unwrap();
        let u0 = ScalarField::from_fn(grid, |p| 1.0 + 0.3 * (p[1] * 2.0).cos() + 0.2 * p[0].cos());
        let fwd = solve_forward_heat(&ell, &u0, 0.0, 0.06, 0.2).unwrap();
        let mut pairings = Vec::new();
        for ((t, phi), (tf, u)) in run.samples.iter().zip(&fwd) {
            assert!((t - tf).abs() < 1e-14);
            let prod = phi.zip(u, |a, b| a * b);
            pairings.push(integral_dl(&prod, &ell[0].1));
        }
        let p0 = pairings[0];
        for p in &pairings {
            assert!((p - p0).abs() < 1e-6 * p0.abs(), "{pairings:?}");
        }
    }

    #[test]
    fn mass_series_trivial_and_constant_cases() {
        let grid = TorusGrid::new(2, 16, TAU).unwrap();
        let ell = static_flat(grid, 0.0, 0.04, 4);
        let phi_y = ScalarField::constant(grid, 1.5);
        let run = solve_conjugate(&ell, &phi_y, 0.04, 0.0, 0.2).unwrap();
        // b = 0: M = 0
        let r0 = scalar_mass_series(&run, &ell, 0.0).unwrap();
        assert!(r0.series["mass"].v.iter().all(|v| v.abs() < 1e-12));
        assert!(r0.scalars["max_monotonicity_violation"] < 1e-12);
        // b = 1, constant phi: M = vol * 1.5 constant
        let r1 = scalar_mass_series(&run, &ell, 1.0).unwrap();
        let expect = TAU * TAU * 1.5;
        for v in &r1.series["mass"].v {
            assert!((v - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn sup_bound_holds_on_static_flat() {
        let grid = TorusGrid::new(2, 32, TAU).unwrap();
        let ell = static_flat(grid, 0.01, 0.05, 4);
        let phi_y = ScalarField::from_fn(grid, |p| 1.0 + 0.8 * p[0].sin());
        let run = solve_conjugate(&ell, &phi_y, 0.05, 0.01, 0.2).unwrap();
        for eps in [0.0, 0.3] {
            let rep = check_conjugate_bounds(&run, &ell, eps, &[2.0]).unwrap();
            assert!(rep.verdicts["hypothesis_holds"]);
            assert!(rep.scalars["sup_bound_ratio"] <= 1.0 + 1e-10, "eps={eps}");
        }
    }

    #[test]
    fn negative_final_data_rejected() {
        let grid = TorusGrid::new(2, 16, TAU).unwrap();
        let ell = static_flat(grid, 0.0, 0.02, 2);
        let phi_y = ScalarField::from_fn(grid, |p| p[0].sin());
        assert!(solve_conjugate(&ell, &phi_y, 0.02, 0.0, 0.2).is_err());
    }
}
