//! End-to-end flow behavior: smoothing bounds, pinning persistence, the
//! related Ricci flow, and the conjugate-heat monotonicity mechanism, at
//! reduced desk scale.

use rdtf_core::background::BackgroundMetric;
use rdtf_core::calculus::{integrate, tensor_norm_sq};
use rdtf_core::conjugate::{integral_dl, scalar_mass_series, solve_conjugate};
use rdtf_core::curvature::{scalar_curvature, vol_ratio};
use rdtf_core::deturck::{integrate_diffeo, pullback_metric, ricci_flow_residual};
use rdtf_core::field::{MetricField, ScalarField};
use rdtf_core::flow::{evolve, omega_monitor, rdtf_rhs, EvolveParams, Scheme};
use rdtf_core::grid::TorusGrid;
use rdtf_core::harness::resolved_t_min;
use rdtf_core::initial_data::{generate_rough_metric, ComponentPattern, RoughMetricSpec};

const TAU: f64 = std::f64::consts::TAU;

fn rough_setup(res: usize, len: f64, cap: f64) -> (BackgroundMetric, MetricField) {
    let grid = TorusGrid::new(2, res, len).unwrap();
    let bg = BackgroundMetric::flat(grid);
    let spec = RoughMetricSpec {
        decay_exponent: 2.5,
        amplitude_cap: cap,
        seed: 2024,
        mode_cutoff: res / 2,
        pattern: ComponentPattern::All,
    };
    let g0 = generate_rough_metric(&spec, &bg).unwrap();
    (bg, g0)
}

fn snapshot_times(t_min: f64, t_final: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| t_min + (t_final - t_min) * k as f64 / (count - 1) as f64).collect()
}

#[test]
fn rough_flow_smoothing_and_pinning() {
    let (bg, g0) = rough_setup(64, std::f64::consts::PI, 0.1);
    let grid = bg.grid();
    let t_min = resolved_t_min(grid);
    let t_final = 8.0 * t_min;
    let params = EvolveParams {
        t_final,
        scheme: Scheme::Rk4,
        c_cfl: 0.2,
        eps0: 0.1,
        snapshot_times: snapshot_times(t_min, t_final, 7),
    };
    let (traj, stop) = evolve(g0.clone(), &bg, &params);
    assert!(stop.is_none(), "{stop:?}");
    assert!(traj.len() >= 8);
    // strictly increasing times, uniform grid
    for w in traj.snaps.windows(2) {
        assert!(w[1].t > w[0].t);
        assert_eq!(w[1].g.grid(), grid);
    }
    // pinning persistence: (1 - 2 eps0) h <= g(t) <= (1 + 2 eps0) h
    for s in &traj.snaps {
        assert!(s.g.is_pinned(bg.h(), 0.2), "pinning lost at t={}", s.t);
    }
    // smoothing bounds: t |grad g|^2, t^2 |hess g|^2 bounded on the window
    let mut c1: f64 = 0.0;
    let mut c2: f64 = 0.0;
    for (s, gb) in traj.snaps.iter().zip(&traj.grad_bounds) {
        if s.t >= t_min {
            c1 = c1.max(s.t * gb.max_grad_sq);
            c2 = c2.max(s.t * s.t * gb.max_hess_sq);
        }
    }
    assert!(c1.is_finite() && c1 > 0.0 && c1 < 1.0, "t |grad g|^2 sup = {c1}");
    assert!(c2.is_finite() && c2 > 0.0 && c2 < 1.0, "t^2 |hess g|^2 sup = {c2}");
}

#[test]
fn evolve_time_derivative_matches_rhs() {
    // smooth band-limited data near h: (g(t+dt) - g(t))/dt tracks the rhs
    let grid = TorusGrid::new(2, 32, TAU).unwrap();
    let bg = BackgroundMetric::flat(grid);
    let g0 = MetricField::from_fn(grid, |p, i, j| {
        let base = if i == j { 1.0 } else { 0.0 };
        base + 0.05 * match (i, j) {
            (0, 0) => p[0].sin(),
            (0, 1) => 0.5 * (p[0] + p[1]).cos(),
            _ => (2.0 * p[1]).sin() * 0.7,
        }
    });
    let params = EvolveParams {
        t_final: 0.004,
        scheme: Scheme::Rk4,
        c_cfl: 0.2,
        eps0: 0.1,
        snapshot_times: vec![],
    };
    let (traj, stop) = evolve(g0, &bg, &params);
    assert!(stop.is_none());
    let a = &traj.snaps[0];
    let b = traj.snaps.last().unwrap();
    let rhs = rdtf_rhs(&a.g, &bg).unwrap();
    let dt = b.t - a.t;
    let mut max_err: f64 = 0.0;
    for (c, (x, y)) in b.g.vals().iter().zip(a.g.vals()).enumerate() {
        let fd = (x - y) / dt;
        max_err = max_err.max((fd - rhs.vals()[c]).abs());
    }
    // forward quotient differs from the instantaneous rhs at O(dt)
    assert!(max_err < 2.0 * dt.sqrt(), "max_err {max_err}, dt {dt}");
    assert!(max_err < 0.1);
}

#[test]
fn omega_residual_stabilizes_under_refinement() {
    let mut maxima = Vec::new();
    for res in [32usize, 64] {
        let grid = TorusGrid::new(2, res, TAU).unwrap();
        let bg = BackgroundMetric::flat(grid);
        let g0 = MetricField::from_fn(grid, |p, i, j| {
            if i == j {
                (2.0 * 0.04 * p[0].sin() * p[1].cos()).exp()
            } else {
                0.0
            }
        });
        let params = EvolveParams {
            t_final: 2e-4,
            scheme: Scheme::Rk4,
            c_cfl: 0.2,
            eps0: 0.2,
            snapshot_times: vec![],
        };
        let (traj, stop) = evolve(g0, &bg, &params);
        assert!(stop.is_none());
        let l_const = 1.0 / 0.1f64.sqrt();
        let k = traj.len() - 1;
        let d = omega_monitor(&traj.snaps[k - 1], &traj.snaps[k], &bg, l_const).unwrap();
        assert!(d.omega.min() >= 0.0);
        maxima.push(d.max_residual);
    }
    // grid-converged: the max residual settles
    let rel = (maxima[1] - maxima[0]).abs() / maxima[0].abs().max(1e-12);
    assert!(rel < 0.3, "omega residual maxima {maxima:?}");
}

#[test]
fn related_flow_scalar_curvature_integral_is_diffeo_invariant() {
    let grid = TorusGrid::new(2, 64, TAU).unwrap();
    let bg = BackgroundMetric::flat(grid);
    let g0 = MetricField::from_fn(grid, |p, i, j| {
        let base = if i == j { 1.0 } else { 0.0 };
        base + 0.06 * match (i, j) {
            (0, 0) => p[0].sin() * p[1].cos(),
            (0, 1) => 0.5 * (2.0 * p[1]).sin(),
            _ => (p[0] + p[1]).cos(),
        }
    });
    let params = EvolveParams {
        t_final: 0.01,
        scheme: Scheme::Rk4,
        c_cfl: 0.2,
        eps0: 0.2,
        snapshot_times: vec![0.002, 0.004, 0.006, 0.008],
    };
    let (traj, stop) = evolve(g0, &bg, &params);
    assert!(stop.is_none());
    let phis = integrate_diffeo(&traj, &bg, traj.snaps.last().unwrap().t, 4).unwrap();
    assert!(phis.last().unwrap().is_identity());
    let mut ell = Vec::new();
    for (s, phi) in traj.snaps.iter().zip(&phis) {
        let pb = pullback_metric(&s.g, phi).unwrap();
        ell.push((s.t, pb.metric));
    }
    // diffeomorphism invariance of the integrated scalar curvature
    for (k, s) in traj.snaps.iter().enumerate() {
        let r_g = scalar_curvature(&s.g).unwrap();
        let int_g = integrate(&r_g, &vol_ratio(&s.g, &bg).zip(bg.sqrt_det_h(), |a, b| a * b));
        let r_l = scalar_curvature(&ell[k].1).unwrap();
        let int_l = integral_dl(&r_l, &ell[k].1);
        let scale = integrate(
            &r_g.map(f64::abs),
            &vol_ratio(&s.g, &bg).zip(bg.sqrt_det_h(), |a, b| a * b),
        );
        assert!(
            (int_g - int_l).abs() <= 1e-3 * scale.max(1e-12),
            "t={}: {int_g} vs {int_l} (scale {scale})",
            s.t
        );
    }
    // the residual report exists and interior snapshots are covered
    let rep = ricci_flow_residual(&ell).unwrap();
    assert_eq!(rep.series["residual_l2"].v.len(), ell.len() - 2);
}

#[test]
fn conjugate_mass_monotone_along_related_flow() {
    let grid = TorusGrid::new(2, 32, TAU).unwrap();
    let bg = BackgroundMetric::flat(grid);
    let g0 = MetricField::from_fn(grid, |p, i, j| {
        let base = if i == j { 1.0 } else { 0.0 };
        base + 0.05 * match (i, j) {
            (0, 0) => p[0].sin(),
            (0, 1) => 0.4 * (p[0] - p[1]).cos(),
            _ => 0.8 * p[1].cos(),
        }
    });
    let t_final = 0.02;
    let snaps: Vec<f64> = (1..=9).map(|k| t_final * k as f64 / 10.0).collect();
    let params = EvolveParams {
        t_final,
        scheme: Scheme::Rk4,
        c_cfl: 0.2,
        eps0: 0.2,
        snapshot_times: snaps,
    };
    let (traj, stop) = evolve(g0, &bg, &params);
    assert!(stop.is_none());
    let s_time = traj.snaps.last().unwrap().t;
    let phis = integrate_diffeo(&traj, &bg, s_time, 4).unwrap();
    let ell: Vec<(f64, MetricField)> = traj
        .snaps
        .iter()
        .zip(&phis)
        .map(|(s, phi)| (s.t, pullback_metric(&s.g, phi).unwrap().metric))
        .collect();
    let phi_y = ScalarField::from_fn(grid, |p| 1.0 + 0.5 * p[0].sin() * p[1].cos());
    let y = ell.last().unwrap().0;
    let t_lo = ell[1].0;
    let run = solve_conjugate(&ell, &phi_y, y, t_lo, 0.2).unwrap();
    let rep = scalar_mass_series(&run, &ell, 0.15).unwrap();
    let mass = &rep.series["mass"].v;
    let m_final = mass.last().unwrap();
    let tol = 1e-4 * (1.0 + m_final.abs());
    assert!(
        rep.scalars["max_monotonicity_violation"] <= tol,
        "violation {} tol {tol}",
        rep.scalars["max_monotonicity_violation"]
    );
    // companion series nonnegative
    assert!(rep.series["ricci_companion"].v.iter().all(|&v| v >= -1e-12));
}

#[test]
fn rough_data_dirichlet_quantities_scale() {
    // grid-W^{1,2} control: the Dirichlet integral of the initial data is
    // finite and of order one, and the flow immediately reduces it
    let (bg, g0) = rough_setup(64, std::f64::consts::PI, 0.1);
    let grid = bg.grid();
    let one = ScalarField::constant(grid, 1.0);
    let dirichlet = |g: &MetricField| {
        let dg = rdtf_core::calculus::covariant_deriv(&g.to_tensor(), &bg).unwrap();
        integrate(&tensor_norm_sq(&dg, &bg), &one)
    };
    let e0 = dirichlet(&g0);
    assert!(e0.is_finite() && e0 > 0.0);
    let params = EvolveParams {
        t_final: resolved_t_min(grid),
        scheme: Scheme::Rk4,
        c_cfl: 0.2,
        eps0: 0.1,
        snapshot_times: vec![],
    };
    let (traj, stop) = evolve(g0, &bg, &params);
    assert!(stop.is_none());
    let e1 = dirichlet(&traj.snaps.last().unwrap().g);
    assert!(e1 < e0, "flow must dissipate rough gradient energy: {e1} vs {e0}");
}
