//! The fixed background metric h with its precomputed connection and
//! curvature data. The default is the exactly flat torus where every
//! correction term vanishes identically.

use crate::calculus;
use crate::error::Result;
use crate::field::{MetricField, ScalarField, TensorField, Variance};
use crate::grid::TorusGrid;
use crate::reduce::max_all;

#[derive(Debug, Clone)]
pub struct BackgroundMetric {
    grid: TorusGrid,
    h: MetricField,
    h_inv: TensorField,
    sqrt_det_h: ScalarField,
    /// None means exactly flat: Gamma(h) = 0, Rm(h) = 0 by construction.
    christoffel: Option<TensorField>,
    riemann: Option<TensorField>,
    riemann_grad: Option<TensorField>,
    scalar_h: ScalarField,
    k0: f64,
    k1: f64,
}

impl BackgroundMetric {
    /// The flat torus background, h = delta.
    pub fn flat(grid: TorusGrid) -> Self {
        let h = MetricField::flat(grid);
        let h_inv = h.inverse().expect("flat metric is SPD");
        Self {
            grid,
            h,
            h_inv,
            sqrt_det_h: ScalarField::constant(grid, 1.0),
            christoffel: None,
            riemann: None,
            riemann_grad: None,
            scalar_h: ScalarField::zeros(grid),
            k0: 0.0,
            k1: 0.0,
        }
    }

    /// Build from a smooth (band-limited) metric: Christoffel symbols from
    /// fourth-order differences, Riemann from the coordinate formula, and
    /// K0, K1 as max-node h-norms of Rm and its covariant derivative.
    pub fn from_metric(h: MetricField) -> Result<Self> {
        let grid = h.grid();
        h.check_spd()?;
        let h_inv = h.inverse()?;
        let sqrt_det_h = h.determinant().map(|d| d.sqrt());
        let gamma = calculus::christoffel(&h)?;
        let riemann = riemann_lowered(&h, &gamma)?;
        let k0 = max_all(
            calculus::tensor_norm_sq_with(&riemann, &h, &h_inv).map(|v| v.max(0.0).sqrt()).vals(),
        );
        // nabla Rm needs the background's own connection
        let mut drm = calculus::partial_deriv(&riemann);
        drm.add_scaled(&calculus::gamma_terms(&riemann, &gamma), 1.0);
        let k1 = max_all(
            calculus::tensor_norm_sq_with(&drm, &h, &h_inv).map(|v| v.max(0.0).sqrt()).vals(),
        );
        let ricci = ricci_from_riemann(&riemann, &h_inv);
        let nn = grid.nodes();
        let mut scal = vec![0.0; nn];
        for i in 0..grid.dim() {
            for j in 0..grid.dim() {
                let hi = h_inv.comp_slice(h_inv.comp_of(&[i, j]));
                let rc = ricci.comp_slice(ricci.comp_of(&[i, j]));
                for node in 0..nn {
                    scal[node] += hi[node] * rc[node];
                }
            }
        }
        Ok(Self {
            grid,
            h,
            h_inv,
            sqrt_det_h,
            christoffel: Some(gamma),
            riemann: Some(riemann),
            riemann_grad: Some(drm),
            scalar_h: ScalarField::from_vals(grid, scal),
            k0,
            k1,
        })
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn is_flat(&self) -> bool {
        self.christoffel.is_none()
    }

    pub fn h(&self) -> &MetricField {
        &self.h
    }

    pub fn h_inv(&self) -> &TensorField {
        &self.h_inv
    }

    pub fn sqrt_det_h(&self) -> &ScalarField {
        &self.sqrt_det_h
    }

    pub fn christoffel(&self) -> Option<&TensorField> {
        self.christoffel.as_ref()
    }

    /// Lowered Riemann tensor Rm_{abcd} of h; None on the flat background.
    pub fn riemann(&self) -> Option<&TensorField> {
        self.riemann.as_ref()
    }

    pub fn riemann_grad(&self) -> Option<&TensorField> {
        self.riemann_grad.as_ref()
    }

    /// Scalar curvature of h (identically zero for the flat background).
    pub fn scalar_h(&self) -> &ScalarField {
        &self.scalar_h
    }

    pub fn k0(&self) -> f64 {
        self.k0
    }

    pub fn k1(&self) -> f64 {
        self.k1
    }
}

/// R^a_{bcd} = d_c Gamma^a_{db} - d_d Gamma^a_{cb}
///           + Gamma^a_{ce} Gamma^e_{db} - Gamma^a_{de} Gamma^e_{cb},
/// lowered to Rm_{abcd} = h_{ae} R^e_{bcd}.
fn riemann_lowered(h: &MetricField, gamma: &TensorField) -> Result<TensorField> {
    let grid = h.grid();
    let n = grid.dim();
    let nn = grid.nodes();
    let dgamma = calculus::partial_deriv(gamma); // [e, a, b, c] = d_e Gamma^a_{bc}
    let mut upper = TensorField::zeros(
        grid,
        vec![Variance::Contra, Variance::Co, Variance::Co, Variance::Co],
        None,
    );
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    let mut acc = dgamma.comp_slice(dgamma.comp_of(&[c, a, d, b])).to_vec();
                    let t2 = dgamma.comp_slice(dgamma.comp_of(&[d, a, c, b]));
                    for i in 0..nn {
                        acc[i] -= t2[i];
                    }
                    for e in 0..n {
                        let g1 = gamma.comp_slice(gamma.comp_of(&[a, c, e]));
                        let g2 = gamma.comp_slice(gamma.comp_of(&[e, d, b]));
                        let g3 = gamma.comp_slice(gamma.comp_of(&[a, d, e]));
                        let g4 = gamma.comp_slice(gamma.comp_of(&[e, c, b]));
                        for i in 0..nn {
                            acc[i] += g1[i] * g2[i] - g3[i] * g4[i];
                        }
                    }
                    let oc = upper.comp_of(&[a, b, c, d]);
                    upper.comp_slice_mut(oc).copy_from_slice(&acc);
                }
            }
        }
    }
    let mut lowered = TensorField::zeros(grid, vec![Variance::Co; 4], None);
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    let mut acc = vec![0.0; nn];
                    for e in 0..n {
                        let he = h.comp_slice(h.comp_of(a, e));
                        let ru = upper.comp_slice(upper.comp_of(&[e, b, c, d]));
                        for i in 0..nn {
                            acc[i] += he[i] * ru[i];
                        }
                    }
                    let oc = lowered.comp_of(&[a, b, c, d]);
                    lowered.comp_slice_mut(oc).copy_from_slice(&acc);
                }
            }
        }
    }
    Ok(lowered)
}

/// Ric_{ij} = h^{kl} Rm_{ikjl}.
fn ricci_from_riemann(rm: &TensorField, h_inv: &TensorField) -> TensorField {
    let grid = rm.grid();
    let n = grid.dim();
    let nn = grid.nodes();
    let mut out = TensorField::zeros(grid, vec![Variance::Co, Variance::Co], Some((0, 1)));
    for i in 0..n {
        for j in i..n {
            let mut acc = vec![0.0; nn];
            for k in 0..n {
                for l in 0..n {
                    let hi = h_inv.comp_slice(h_inv.comp_of(&[k, l]));
                    let r = rm.comp_slice(rm.comp_of(&[i, k, j, l]));
                    for node in 0..nn {
                        acc[node] += hi[node] * r[node];
                    }
                }
            }
            let oc = out.comp_of(&[i, j]);
            out.comp_slice_mut(oc).copy_from_slice(&acc);
        }
    }
    out
}
