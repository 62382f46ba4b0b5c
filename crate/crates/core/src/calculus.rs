//! Tensor calculus with respect to the background metric: covariant
//! derivatives, Hessians, norms, Christoffel symbols, and quadrature.

use crate::background::BackgroundMetric;
use crate::error::{CoreError, Result};
use crate::field::{MetricField, ScalarField, TensorField, Variance, VectorField};
use crate::grid::TorusGrid;
use crate::reduce::pairwise_sum_by;
use crate::stencil;

fn check_grid(a: TorusGrid, b: TorusGrid, what: &str) -> Result<()> {
    if a != b {
        return Err(CoreError::GridMismatch(format!(
            "{what}: {}x{}^{} vs {}x{}^{}",
            a.len(),
            a.res(),
            a.dim(),
            b.len(),
            b.res(),
            b.dim()
        )));
    }
    Ok(())
}

fn shift_sym(sym: Option<(usize, usize)>, by: usize) -> Option<(usize, usize)> {
    sym.map(|(p, q)| (p + by, q + by))
}

/// Pure partial derivative, new covariant slot prepended.
pub fn partial_deriv(t: &TensorField) -> TensorField {
    let grid = t.grid();
    let mut variance = vec![Variance::Co];
    variance.extend_from_slice(t.variance());
    let mut out = TensorField::zeros(grid, variance, shift_sym(t.sym(), 1));
    for oc in 0..out.ncomp() {
        let idx = out.comp_index(oc).to_vec();
        let axis = idx[0] as usize;
        let src_idx: Vec<usize> = idx[1..].iter().map(|&v| v as usize).collect();
        let src = t.comp_slice(t.comp_of(&src_idx)).to_vec();
        stencil::deriv1(grid, axis, &src, out.comp_slice_mut(oc));
    }
    out
}

/// Pure second partials, two covariant slots prepended (filled for all
/// ordered pairs; the dedicated same-axis stencil is used on the diagonal).
pub fn partial_hessian(t: &TensorField) -> TensorField {
    let grid = t.grid();
    let n = grid.dim();
    let mut variance = vec![Variance::Co, Variance::Co];
    variance.extend_from_slice(t.variance());
    let mut out = TensorField::zeros(grid, variance, shift_sym(t.sym(), 2));
    let nn = grid.nodes();
    let mut tmp = vec![0.0; nn];
    let mut tmp2 = vec![0.0; nn];
    for sc in 0..t.ncomp() {
        let src_idx: Vec<usize> = t.comp_index(sc).iter().map(|&v| v as usize).collect();
        let src = t.comp_slice(sc).to_vec();
        for a in 0..n {
            for b in a..n {
                if a == b {
                    stencil::deriv2(grid, a, &src, &mut tmp2);
                } else {
                    stencil::deriv1(grid, b, &src, &mut tmp);
                    stencil::deriv1(grid, a, &tmp, &mut tmp2);
                }
                let mut idx = vec![a, b];
                idx.extend_from_slice(&src_idx);
                let oc = out.comp_of(&idx);
                out.comp_slice_mut(oc).copy_from_slice(&tmp2);
                if a != b {
                    idx[0] = b;
                    idx[1] = a;
                    let oc2 = out.comp_of(&idx);
                    if oc2 != oc {
                        out.comp_slice_mut(oc2).copy_from_slice(&tmp2);
                    }
                }
            }
        }
    }
    out
}

/// Only the Christoffel correction terms of the covariant derivative:
/// +Gamma^{i_s}_{a m} T[..m..] for contravariant slots,
/// -Gamma^{m}_{a j_s} T[..m..] for covariant slots.
pub fn gamma_terms(t: &TensorField, gamma: &TensorField) -> TensorField {
    let grid = t.grid();
    let n = grid.dim();
    let nn = grid.nodes();
    let mut variance = vec![Variance::Co];
    variance.extend_from_slice(t.variance());
    let mut out = TensorField::zeros(grid, variance, shift_sym(t.sym(), 1));
    for oc in 0..out.ncomp() {
        let idx: Vec<usize> = out.comp_index(oc).iter().map(|&v| v as usize).collect();
        let a = idx[0];
        let tidx: Vec<usize> = idx[1..].to_vec();
        let mut acc = vec![0.0; nn];
        for (s, var) in t.variance().iter().enumerate() {
            for m in 0..n {
                let mut src_idx = tidx.clone();
                let slot_val = src_idx[s];
                src_idx[s] = m;
                let tsl = t.comp_slice(t.comp_of(&src_idx));
                match var {
                    Variance::Contra => {
                        // +Gamma^{slot}_{a m} T^{..m..}
                        let gsl = gamma.comp_slice(gamma.comp_of(&[slot_val, a, m]));
                        for i in 0..nn {
                            acc[i] += gsl[i] * tsl[i];
                        }
                    }
                    Variance::Co => {
                        // -Gamma^{m}_{a slot} T_{..m..}
                        let gsl = gamma.comp_slice(gamma.comp_of(&[m, a, slot_val]));
                        for i in 0..nn {
                            acc[i] -= gsl[i] * tsl[i];
                        }
                    }
                }
            }
        }
        out.comp_slice_mut(oc).copy_from_slice(&acc);
    }
    out
}

/// Covariant derivative with respect to the background metric; the new
/// covariant slot is prepended. On the flat background this reduces to pure
/// partial derivatives.
pub fn covariant_deriv(t: &TensorField, bg: &BackgroundMetric) -> Result<TensorField> {
    check_grid(t.grid(), bg.grid(), "covariant_deriv")?;
    let mut out = partial_deriv(t);
    if let Some(gamma) = bg.christoffel() {
        let corr = gamma_terms(t, gamma);
        out.add_scaled(&corr, 1.0);
    }
    Ok(out)
}

/// Second covariant derivative, slots (a, b) prepended, all ordered pairs.
pub fn covariant_hessian(t: &TensorField, bg: &BackgroundMetric) -> Result<TensorField> {
    check_grid(t.grid(), bg.grid(), "covariant_hessian")?;
    let mut out = partial_hessian(t);
    if let Some(gamma) = bg.christoffel() {
        let c = gamma_terms(t, gamma);
        // d_a of the correction part of nabla_b t
        out.add_scaled(&partial_deriv(&c), 1.0);
        // Christoffel corrections applied to nabla t as a rank+1 tensor
        let mut u = partial_deriv(t);
        u.add_scaled(&c, 1.0);
        out.add_scaled(&gamma_terms(&u, gamma), 1.0);
    }
    Ok(out)
}

/// Christoffel symbols of a metric from fourth-order partial derivatives,
/// Gamma^a_{bc} = 1/2 g^{ad} (d_b g_dc + d_c g_bd - d_d g_bc).
pub fn christoffel(g: &MetricField) -> Result<TensorField> {
    let grid = g.grid();
    let n = grid.dim();
    let nn = grid.nodes();
    let ginv = g.inverse()?;
    let dg = partial_deriv(&g.to_tensor());
    let mut out = TensorField::zeros(
        grid,
        vec![Variance::Contra, Variance::Co, Variance::Co],
        Some((1, 2)),
    );
    for oc in 0..out.ncomp() {
        let idx = out.comp_index(oc).to_vec();
        let (a, b, c) = (idx[0] as usize, idx[1] as usize, idx[2] as usize);
        let mut acc = vec![0.0; nn];
        for d in 0..n {
            let gi = ginv.comp_slice(ginv.comp_of(&[a, d]));
            let t1 = dg.comp_slice(dg.comp_of(&[b, d, c]));
            let t2 = dg.comp_slice(dg.comp_of(&[c, b, d]));
            let t3 = dg.comp_slice(dg.comp_of(&[d, b, c]));
            for i in 0..nn {
                acc[i] += 0.5 * gi[i] * (t1[i] + t2[i] - t3[i]);
            }
        }
        out.comp_slice_mut(oc).copy_from_slice(&acc);
    }
    Ok(out)
}

/// Pointwise |T|^2 with every slot contracted against h (raising covariant
/// slots) or h^{-1}-lowering for contravariant ones. Flat fast path is the
/// plain component sum of squares.
pub fn tensor_norm_sq(t: &TensorField, bg: &BackgroundMetric) -> ScalarField {
    if bg.is_flat() {
        return flat_norm_sq(t);
    }
    tensor_norm_sq_with(t, bg.h(), bg.h_inv())
}

fn flat_norm_sq(t: &TensorField) -> ScalarField {
    let grid = t.grid();
    let nn = grid.nodes();
    let n = grid.dim();
    let rank = t.rank();
    let codes = n.pow(rank as u32).max(1);
    let mut mult = vec![0usize; t.ncomp()];
    for code in 0..codes {
        // decode into multiplicity count via comp_of on the decoded index
        let mut idx = vec![0usize; rank];
        let mut c = code;
        for s in (0..rank).rev() {
            idx[s] = c % n;
            c /= n;
        }
        mult[t.comp_of(&idx)] += 1;
    }
    let mut vals = vec![0.0; nn];
    for comp in 0..t.ncomp() {
        let w = mult[comp] as f64;
        let sl = t.comp_slice(comp);
        for i in 0..nn {
            vals[i] += w * sl[i] * sl[i];
        }
    }
    ScalarField::from_vals(grid, vals)
}

/// |T|^2 against explicit metric fields (used while building a background).
pub fn tensor_norm_sq_with(t: &TensorField, h: &MetricField, h_inv: &TensorField) -> ScalarField {
    let grid = t.grid();
    let nn = grid.nodes();
    let n = grid.dim();
    let rank = t.rank();
    let codes = n.pow(rank as u32).max(1);
    let mut vals = vec![0.0; nn];
    let mut idx = vec![0usize; rank];
    let mut jdx = vec![0usize; rank];
    for node in 0..nn {
        // transform every slot of t by the metric, then contract with t
        let mut acc = 0.0;
        for code_i in 0..codes {
            decode_into(code_i, n, &mut idx);
            let ti = t.get(node, &idx);
            if ti == 0.0 {
                continue;
            }
            for code_j in 0..codes {
                decode_into(code_j, n, &mut jdx);
                let mut w = 1.0;
                for s in 0..rank {
                    w *= match t.variance()[s] {
                        Variance::Co => h_inv.get(node, &[idx[s], jdx[s]]),
                        Variance::Contra => h.get(node, idx[s], jdx[s]),
                    };
                    if w == 0.0 {
                        break;
                    }
                }
                if w != 0.0 {
                    acc += w * ti * t.get(node, &jdx);
                }
            }
        }
        vals[node] = acc;
    }
    ScalarField::from_vals(grid, vals)
}

fn decode_into(mut code: usize, n: usize, idx: &mut [usize]) {
    for s in (0..idx.len()).rev() {
        idx[s] = code % n;
        code /= n;
    }
}

pub fn tensor_norm(t: &TensorField, bg: &BackgroundMetric) -> ScalarField {
    tensor_norm_sq(t, bg).map(|v| v.max(0.0).sqrt())
}

/// Divergence of a vector field with respect to the background.
pub fn divergence(x: &VectorField, bg: &BackgroundMetric) -> Result<ScalarField> {
    check_grid(x.grid(), bg.grid(), "divergence")?;
    let grid = x.grid();
    let nn = grid.nodes();
    let mut vals = vec![0.0; nn];
    let mut tmp = vec![0.0; nn];
    for a in 0..grid.dim() {
        stencil::deriv1(grid, a, x.comp(a), &mut tmp);
        for i in 0..nn {
            vals[i] += tmp[i];
        }
    }
    if let Some(gamma) = bg.christoffel() {
        for a in 0..grid.dim() {
            for m in 0..grid.dim() {
                let gsl = gamma.comp_slice(gamma.comp_of(&[a, a, m]));
                let xm = x.comp(m);
                for i in 0..nn {
                    vals[i] += gsl[i] * xm[i];
                }
            }
        }
    }
    Ok(ScalarField::from_vals(grid, vals))
}

/// Fixed-order quadrature: sum of f * vol * dx^n through the deterministic
/// pairwise tree. Exact for trigonometric polynomials below Nyquist.
pub fn integrate(f: &ScalarField, vol: &ScalarField) -> f64 {
    assert_eq!(f.grid(), vol.grid());
    let w = f.grid().cell_volume();
    let fv = f.vals();
    let vv = vol.vals();
    w * pairwise_sum_by(fv.len(), &|i| fv[i] * vv[i])
}

/// Integral against the background volume, ∫ f dh.
pub fn integrate_h(f: &ScalarField, bg: &BackgroundMetric) -> f64 {
    integrate(f, bg.sqrt_det_h())
}

/// Gradient of a scalar (covariant derivative is the plain partial).
pub fn gradient(f: &ScalarField) -> VectorFieldCo {
    let grid = f.grid();
    let nn = grid.nodes();
    let mut vals = vec![0.0; grid.dim() * nn];
    for a in 0..grid.dim() {
        let (lo, hi) = (a * nn, (a + 1) * nn);
        stencil::deriv1(grid, a, f.vals(), &mut vals[lo..hi]);
    }
    VectorFieldCo { grid, vals }
}

/// Covector field (gradient components); thin wrapper to keep variance clear.
#[derive(Debug, Clone)]
pub struct VectorFieldCo {
    grid: TorusGrid,
    vals: Vec<f64>,
}

impl VectorFieldCo {
    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn comp(&self, a: usize) -> &[f64] {
        let nn = self.grid.nodes();
        &self.vals[a * nn..(a + 1) * nn]
    }

    pub fn get(&self, node: usize, a: usize) -> f64 {
        self.vals[a * self.grid.nodes() + node]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::BackgroundMetric;

    fn flat2(res: usize) -> (TorusGrid, BackgroundMetric) {
        let g = TorusGrid::new(2, res, std::f64::consts::TAU).unwrap();
        (g, BackgroundMetric::flat(g))
    }

    #[test]
    fn constant_tensor_has_zero_derivative() {
        let (g, bg) = flat2(16);
        let mut t = TensorField::zeros(g, vec![Variance::Co, Variance::Co], Some((0, 1)));
        for c in 0..t.ncomp() {
            t.comp_slice_mut(c).fill(2.5);
        }
        let d = covariant_deriv(&t, &bg).unwrap();
        assert_eq!(d.max_abs(), 0.0);
    }

    #[test]
    fn scalar_gradient_matches_analytic() {
        let (g, bg) = flat2(64);
        let f = ScalarField::from_fn(g, |p| p[0].sin());
        let t = {
            let mut t = TensorField::zeros(g, vec![], None);
            t.vals_mut().copy_from_slice(f.vals());
            t
        };
        let d = covariant_deriv(&t, &bg).unwrap();
        let mut max_err: f64 = 0.0;
        for node in 0..g.nodes() {
            let p = g.position(node);
            let err = (d.get(node, &[0]) - p[0].cos()).abs();
            max_err = max_err.max(err);
            assert!(d.get(node, &[1]).abs() < 1e-12);
        }
        // fourth order at N=64, wavenumber 1: (dx)^4/30 ~ 3e-7
        assert!(max_err < 1e-5, "max_err {max_err}");
    }

    #[test]
    fn hessian_diagonal_uses_dedicated_stencil_and_is_symmetric() {
        let (g, bg) = flat2(32);
        let f = ScalarField::from_fn(g, |p| (p[0] + 2.0 * p[1]).sin());
        let mut t = TensorField::zeros(g, vec![], None);
        t.vals_mut().copy_from_slice(f.vals());
        let h = covariant_hessian(&t, &bg).unwrap();
        for node in (0..g.nodes()).step_by(17) {
            assert_eq!(h.get(node, &[0, 1]), h.get(node, &[1, 0]));
            let p = g.position(node);
            let exact = -(p[0] + 2.0 * p[1]).sin();
            assert!((h.get(node, &[0, 0]) - exact).abs() < 1e-2);
            assert!((h.get(node, &[0, 1]) - 2.0 * exact).abs() < 1e-2);
            assert!((h.get(node, &[1, 1]) - 4.0 * exact).abs() < 1e-2);
        }
    }

    #[test]
    fn metric_compatibility_on_curved_background() {
        // nabla h = 0 and nabla h^{-1} = 0 pin the Christoffel corrections of
        // both covariant and contravariant slots
        let mut errs_co = Vec::new();
        let mut errs_contra = Vec::new();
        for res in [32usize, 64] {
            let g = TorusGrid::new(2, res, std::f64::consts::TAU).unwrap();
            let h = MetricField::from_fn(g, |p, i, j| {
                if i == j {
                    1.0 + 0.05 * p[0].sin() + 0.03 * p[1].cos()
                } else {
                    0.02 * (p[0] + p[1]).sin()
                }
            });
            let bg = crate::background::BackgroundMetric::from_metric(h.clone()).unwrap();
            let raw = partial_deriv(&h.to_tensor()).max_abs();
            let dcov = covariant_deriv(&h.to_tensor(), &bg).unwrap().max_abs();
            // the correction is built from the same discrete derivatives, so
            // the cancellation is algebraic, not just fourth order
            assert!(dcov < 1e-13 * raw.max(1.0), "metric compatibility: {dcov} vs raw {raw}");
            errs_co.push(dcov);
            let dinv = covariant_deriv(bg.h_inv(), &bg).unwrap().max_abs();
            errs_contra.push(dinv);
        }
        assert!(errs_contra[0] > 1e-12, "contravariant path must exercise truncation error");
        assert!(errs_contra[0] / errs_contra[1] > 12.0, "{errs_contra:?}");
    }

    #[test]
    fn flat_norm_counts_off_diagonal_twice() {
        let (g, bg) = flat2(8);
        let mut t = TensorField::zeros(g, vec![Variance::Co, Variance::Co], Some((0, 1)));
        t.set(3, &[0, 1], 2.0);
        let nsq = tensor_norm_sq(&t, &bg);
        assert_eq!(nsq.vals()[3], 8.0); // T_01 = T_10 = 2 -> 2*4
        // single diagonal perturbation has norm 1
        let mut t2 = TensorField::zeros(g, vec![Variance::Co, Variance::Co], Some((0, 1)));
        t2.set(3, &[0, 0], 1.0);
        assert_eq!(tensor_norm_sq(&t2, &bg).vals()[3], 1.0);
    }

    #[test]
    fn norm_scaling_homogeneous() {
        let (g, bg) = flat2(8);
        let mut t = TensorField::zeros(g, vec![Variance::Co], None);
        for c in 0..t.ncomp() {
            for (i, v) in t.comp_slice_mut(c).iter_mut().enumerate() {
                *v = (i as f64 * 0.1 + c as f64).sin();
            }
        }
        let n1 = tensor_norm(&t, &bg);
        let mut t2 = t.clone();
        t2.scale(-3.0);
        let n2 = tensor_norm(&t2, &bg);
        for i in 0..g.nodes() {
            assert!((n2.vals()[i] - 3.0 * n1.vals()[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn curved_norm_reduces_to_flat_on_identity_metric() {
        let (g, _) = flat2(8);
        let h = MetricField::flat(g);
        let hinv = h.inverse().unwrap();
        let mut t = TensorField::zeros(g, vec![Variance::Co, Variance::Co], Some((0, 1)));
        t.set(5, &[0, 1], 1.5);
        t.set(5, &[1, 1], -0.5);
        let a = flat_norm_sq(&t);
        let b = tensor_norm_sq_with(&t, &h, &hinv);
        assert!((a.vals()[5] - b.vals()[5]).abs() < 1e-14);
    }

    #[test]
    fn quadrature_exact_for_torus_volume() {
        let g = TorusGrid::new(2, 16, std::f64::consts::TAU).unwrap();
        let one = ScalarField::constant(g, 1.0);
        let v = integrate(&one, &one);
        assert!((v - std::f64::consts::TAU.powi(2)).abs() < 1e-12);
    }

    #[test]
    fn quadrature_kills_mean_zero_mode() {
        let g = TorusGrid::new(2, 16, std::f64::consts::TAU).unwrap();
        let f = ScalarField::from_fn(g, |p| p[0].sin());
        let one = ScalarField::constant(g, 1.0);
        assert!(integrate(&f, &one).abs() < 1e-13);
    }

    #[test]
    fn quadrature_sin_squared() {
        let g = TorusGrid::new(1, 16, std::f64::consts::TAU).unwrap();
        let f = ScalarField::from_fn(g, |p| p[0].sin().powi(2));
        let one = ScalarField::constant(g, 1.0);
        assert!((integrate(&f, &one) - std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn discrete_integration_by_parts() {
        let (g, bg) = flat2(32);
        let f = ScalarField::from_fn(g, |p| p[0].sin() * (2.0 * p[1]).cos() + 0.3);
        let x = VectorField::from_fn(g, |p, a| {
            if a == 0 {
                (2.0 * p[0]).cos()
            } else {
                p[1].sin() * p[0].cos()
            }
        });
        let div = divergence(&x, &bg).unwrap();
        let grad = gradient(&f);
        let one = ScalarField::constant(g, 1.0);
        let lhs = integrate(&f.zip(&div, |a, b| a * b), &one);
        let inner = ScalarField::from_vals(
            g,
            (0..g.nodes())
                .map(|i| grad.get(i, 0) * x.get(i, 0) + grad.get(i, 1) * x.get(i, 1))
                .collect(),
        );
        let rhs = integrate(&inner, &one);
        let f_norm = integrate(&f.map(|v| v * v), &one).sqrt();
        let x_norm = integrate(
            &ScalarField::from_vals(
                g,
                (0..g.nodes()).map(|i| x.get(i, 0).powi(2) + x.get(i, 1).powi(2)).collect(),
            ),
            &one,
        )
        .sqrt();
        assert!((lhs + rhs).abs() <= 1e-10 * f_norm * x_norm, "{}", (lhs + rhs).abs());
    }
}
