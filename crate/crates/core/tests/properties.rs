//! Property-based invariants of the grid calculus.

use proptest::prelude::*;
use rdtf_core::background::BackgroundMetric;
use rdtf_core::calculus::{integrate, tensor_norm_sq};
use rdtf_core::field::{MetricField, ScalarField, TensorField, Variance};
use rdtf_core::grid::TorusGrid;
use rdtf_core::harness::fit_power_law;
use rdtf_core::initial_data::{
    generate_rough_metric, mollify, ComponentPattern, MollifierParams, RoughMetricSpec,
};
use rdtf_core::linalg::{generalized_eigenvalues, sym_det, sym_eigenvalues, sym_trace};
use rdtf_core::stencil;

fn grid16() -> TorusGrid {
    TorusGrid::new(2, 16, std::f64::consts::TAU).unwrap()
}

proptest! {
    /// Eigenvalues of a symmetric 3x3 matrix reproduce trace and determinant.
    #[test]
    fn eigenvalues_satisfy_invariants(
        a in -2.0f64..2.0, b in -1.0f64..1.0, c in -1.0f64..1.0,
        d in -2.0f64..2.0, e in -1.0f64..1.0, f in -2.0f64..2.0,
    ) {
        let m = [a, b, c, d, e, f];
        let ev = sym_eigenvalues(3, &m);
        let tr: f64 = ev.iter().sum();
        prop_assert!((tr - sym_trace(3, &m)).abs() < 1e-10);
        let det = ev[0] * ev[1] * ev[2];
        prop_assert!((det - sym_det(3, &m)).abs() < 1e-9 * (1.0 + det.abs()));
        prop_assert!(ev[0] <= ev[1] && ev[1] <= ev[2]);
    }

    /// Generalized eigenvalues against c*Id scale like eigenvalues / c.
    #[test]
    fn generalized_eigenvalues_scale(c in 0.2f64..5.0, a in 0.5f64..2.0, b in -0.3f64..0.3) {
        let g = [a, b, 1.0];
        let h = [c, 0.0, c];
        let ge = generalized_eigenvalues(2, &g, &h).unwrap();
        let pe = sym_eigenvalues(2, &g);
        prop_assert!((ge[0] - pe[0] / c).abs() < 1e-10);
        prop_assert!((ge[1] - pe[1] / c).abs() < 1e-10);
    }

    /// The stencil is linear to machine precision.
    #[test]
    fn stencil_linearity(alpha in -3.0f64..3.0, beta in -3.0f64..3.0, axis in 0usize..2) {
        let g = grid16();
        let f1: Vec<f64> = (0..g.nodes()).map(|i| {
            let p = g.position(i);
            (p[0] + 2.0 * p[1]).sin()
        }).collect();
        let f2: Vec<f64> = (0..g.nodes()).map(|i| {
            let p = g.position(i);
            (2.0 * p[0]).cos() * p[1].sin()
        }).collect();
        let combo: Vec<f64> = f1.iter().zip(&f2).map(|(x, y)| alpha * x + beta * y).collect();
        let mut dc = vec![0.0; g.nodes()];
        let mut d1 = vec![0.0; g.nodes()];
        let mut d2 = vec![0.0; g.nodes()];
        stencil::deriv1(g, axis, &combo, &mut dc);
        stencil::deriv1(g, axis, &f1, &mut d1);
        stencil::deriv1(g, axis, &f2, &mut d2);
        for i in 0..g.nodes() {
            let lin = alpha * d1[i] + beta * d2[i];
            prop_assert!((dc[i] - lin).abs() <= 1e-11 * (1.0 + lin.abs()));
        }
    }

    /// Quadrature is linear and positive on nonnegative integrands.
    #[test]
    fn quadrature_linearity(alpha in -2.0f64..2.0, beta in -2.0f64..2.0) {
        let g = grid16();
        let one = ScalarField::constant(g, 1.0);
        let f1 = ScalarField::from_fn(g, |p| p[0].sin() + 0.5);
        let f2 = ScalarField::from_fn(g, |p| (p[1] * 2.0).cos());
        let combo = f1.zip(&f2, |a, b| alpha * a + beta * b);
        let lhs = integrate(&combo, &one);
        let rhs = alpha * integrate(&f1, &one) + beta * integrate(&f2, &one);
        prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + rhs.abs()));
    }

    /// Symmetric-slot storage round-trips for any index order.
    #[test]
    fn tensor_symmetry_round_trip(i in 0usize..3, j in 0usize..3, v in -5.0f64..5.0) {
        let g = TorusGrid::new(3, 8, 1.0).unwrap();
        let mut t = TensorField::zeros(
            g,
            vec![Variance::Contra, Variance::Co, Variance::Co],
            Some((1, 2)),
        );
        t.set(3, &[1, i, j], v);
        prop_assert_eq!(t.get(3, &[1, i, j]), v);
        prop_assert_eq!(t.get(3, &[1, j, i]), v);
    }

    /// Rough metrics are pinned at their amplitude cap and deterministic.
    #[test]
    fn rough_metric_pinned(seed in 0u64..500, cap in 0.01f64..0.15) {
        let g = grid16();
        let bg = BackgroundMetric::flat(g);
        let spec = RoughMetricSpec {
            decay_exponent: 2.0,
            amplitude_cap: cap,
            seed,
            mode_cutoff: 8,
            pattern: ComponentPattern::All,
        };
        let m = generate_rough_metric(&spec, &bg).unwrap();
        prop_assert!(m.pinning_excess(bg.h()) <= cap + 1e-12);
        let m2 = generate_rough_metric(&spec, &bg).unwrap();
        prop_assert_eq!(m.vals(), m2.vals());
    }

    /// Mollification never worsens the pinning and shrinks gradient energy.
    #[test]
    fn mollify_contracts(seed in 0u64..200, scale in 0.05f64..1.0) {
        let g = grid16();
        let bg = BackgroundMetric::flat(g);
        let spec = RoughMetricSpec {
            decay_exponent: 2.0,
            amplitude_cap: 0.1,
            seed,
            mode_cutoff: 8,
            pattern: ComponentPattern::All,
        };
        let m = generate_rough_metric(&spec, &bg).unwrap();
        let sm = mollify(&m, &MollifierParams { scale });
        prop_assert!(sm.pinning_excess(bg.h()) <= m.pinning_excess(bg.h()) * (1.0 + 1e-6));
        let energy = |x: &MetricField| {
            let mut p = x.to_tensor();
            p.add_scaled(&bg.h().to_tensor(), -1.0);
            let dp = rdtf_core::calculus::partial_deriv(&p);
            let one = ScalarField::constant(g, 1.0);
            integrate(&tensor_norm_sq(&dp, &bg), &one)
        };
        prop_assert!(energy(&sm) <= energy(&m) * (1.0 + 1e-9));
    }

    /// Power-law fits recover exact synthetic inputs.
    #[test]
    fn fit_recovers_exact_power_laws(q in -1.5f64..2.5, logc in -3.0f64..3.0) {
        let c = logc.exp();
        let ts: Vec<f64> = (1..=9).map(|k| 0.02 * k as f64).collect();
        let ys: Vec<f64> = ts.iter().map(|t| c * t.powf(q)).collect();
        let fit = fit_power_law(&ts, &ys).unwrap();
        prop_assert!((fit.exponent - q).abs() < 1e-6 * (1.0 + q.abs()));
        prop_assert!((fit.coeff - c).abs() < 1e-6 * c);
    }

    /// Metric inverse is an involution on SPD fields.
    #[test]
    fn inverse_involution(a in 0.6f64..1.6, b in -0.25f64..0.25, c in 0.6f64..1.6) {
        let g = grid16();
        let m = MetricField::from_fn(g, |p, i, j| {
            match (i, j) {
                (0, 0) => a + 0.1 * p[0].sin(),
                (1, 1) => c + 0.1 * p[1].cos(),
                _ => b,
            }
        });
        prop_assume!(m.check_spd().is_ok());
        let back = MetricField::from_tensor(&m.inverse().unwrap()).inverse().unwrap();
        for (x, y) in m.vals().iter().zip(back.vals()) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
    }
}
