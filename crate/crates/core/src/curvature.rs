//! Smooth curvature of an evolving metric, the volume ratio, and the
//! distributional scalar curvature pairing built from first derivatives only.

use crate::background::BackgroundMetric;
use crate::calculus::{self, christoffel, gradient, integrate, partial_deriv};
use crate::error::{CoreError, Result};
use crate::field::{MetricField, ScalarField, TensorField, Variance, VectorField};

/// Ricci tensor from the coordinate formula
/// Ric_{bd} = d_a Gamma^a_{db} - d_d Gamma^a_{ab}
///          + Gamma^a_{ae} Gamma^e_{db} - Gamma^a_{de} Gamma^e_{ab},
/// symmetrized against the discretization's off-diagonal noise.
pub fn ricci(g: &MetricField) -> Result<TensorField> {
    let grid = g.grid();
    let n = grid.dim();
    let nn = grid.nodes();
    let gamma = christoffel(g)?;
    let dgamma = partial_deriv(&gamma); // [e, a, b, c] = d_e Gamma^a_{bc}
    let mut out = TensorField::zeros(grid, vec![Variance::Co, Variance::Co], Some((0, 1)));
    for b in 0..n {
        for d in b..n {
            let mut acc = vec![0.0; nn];
            for (x, y) in [(b, d), (d, b)] {
                for a in 0..n {
                    let t1 = dgamma.comp_slice(dgamma.comp_of(&[a, a, y, x]));
                    let t2 = dgamma.comp_slice(dgamma.comp_of(&[y, a, a, x]));
                    for i in 0..nn {
                        acc[i] += 0.5 * (t1[i] - t2[i]);
                    }
                    for e in 0..n {
                        let g1 = gamma.comp_slice(gamma.comp_of(&[a, a, e]));
                        let g2 = gamma.comp_slice(gamma.comp_of(&[e, y, x]));
                        let g3 = gamma.comp_slice(gamma.comp_of(&[a, y, e]));
                        let g4 = gamma.comp_slice(gamma.comp_of(&[e, a, x]));
                        for i in 0..nn {
                            acc[i] += 0.5 * (g1[i] * g2[i] - g3[i] * g4[i]);
                        }
                    }
                }
            }
            let oc = out.comp_of(&[b, d]);
            out.comp_slice_mut(oc).copy_from_slice(&acc);
        }
    }
    Ok(out)
}

/// R = g^{bd} Ric_{bd}.
pub fn scalar_curvature(g: &MetricField) -> Result<ScalarField> {
    let grid = g.grid();
    let n = grid.dim();
    let nn = grid.nodes();
    let ric = ricci(g)?;
    let ginv = g.inverse()?;
    let mut vals = vec![0.0; nn];
    for b in 0..n {
        for d in 0..n {
            let gi = ginv.comp_slice(ginv.comp_of(&[b, d]));
            let rc = ric.comp_slice(ric.comp_of(&[b, d]));
            for i in 0..nn {
                vals[i] += gi[i] * rc[i];
            }
        }
    }
    Ok(ScalarField::from_vals(grid, vals))
}

/// dg/dh = sqrt(det g)/sqrt(det h), pointwise.
pub fn vol_ratio(g: &MetricField, bg: &BackgroundMetric) -> ScalarField {
    let det_g = g.determinant();
    let det_h = bg.h().determinant();
    det_g.zip(&det_h, |a, b| (a / b).sqrt())
}

/// The first-derivative building blocks of the distributional scalar
/// curvature: the difference tensor T(g,h), the scalar L(g,h), the vector
/// Z(g,h), and the volume ratio.
#[derive(Debug, Clone)]
pub struct LeeLeFlochTerms {
    /// T(g,h)^i_{jk}, symmetric in (j,k)
    pub t_tensor: TensorField,
    pub l_scalar: ScalarField,
    pub z_vector: VectorField,
    pub vol_ratio: ScalarField,
}

/// T^i_{jk} = 1/2 g^{il} (nabla_j g_kl + nabla_k g_jl - nabla_l g_jk),
/// L = R_h - (nabla_k g^{ij}) T^k_{ij} + (nabla_k g^{ik}) T^j_{ji}
///   + g^{ij} (T^k_{kl} T^l_{ij} - T^k_{jl} T^l_{ik}),
/// Z^k = g^{ik} T^j_{ji} - g^{ij} T^k_{ij},
/// with nabla the background covariant derivative and
/// nabla_k g^{ij} = -g^{ia} g^{jb} nabla_k g_{ab}. The orientation of Z is
/// fixed by the smooth-case identity R_g = R_h - div_h(Z) + L, which makes
/// the pairing below reduce to the ordinary scalar curvature integral.
pub fn lee_lefloch_terms(g: &MetricField, bg: &BackgroundMetric) -> Result<LeeLeFlochTerms> {
    if g.grid() != bg.grid() {
        return Err(CoreError::GridMismatch("lee_lefloch_terms".into()));
    }
    let grid = g.grid();
    let n = grid.dim();
    let nn = grid.nodes();
    let ginv = g.inverse()?;
    let dg = calculus::covariant_deriv(&g.to_tensor(), bg)?; // [k, i, j]

    let mut t_tensor = TensorField::zeros(
        grid,
        vec![Variance::Contra, Variance::Co, Variance::Co],
        Some((1, 2)),
    );
    for i in 0..n {
        for j in 0..n {
            for k in j..n {
                let mut acc = vec![0.0; nn];
                for l in 0..n {
                    let gi = ginv.comp_slice(ginv.comp_of(&[i, l]));
                    let a1 = dg.comp_slice(dg.comp_of(&[j, k, l]));
                    let a2 = dg.comp_slice(dg.comp_of(&[k, j, l]));
                    let a3 = dg.comp_slice(dg.comp_of(&[l, j, k]));
                    for node in 0..nn {
                        acc[node] += 0.5 * gi[node] * (a1[node] + a2[node] - a3[node]);
                    }
                }
                let oc = t_tensor.comp_of(&[i, j, k]);
                t_tensor.comp_slice_mut(oc).copy_from_slice(&acc);
            }
        }
    }

    // nabla_k g^{ij} = -g^{ia} g^{jb} nabla_k g_{ab}
    let mut dginv = TensorField::zeros(
        grid,
        vec![Variance::Co, Variance::Contra, Variance::Contra],
        Some((1, 2)),
    );
    for k in 0..n {
        for i in 0..n {
            for j in i..n {
                let mut acc = vec![0.0; nn];
                for a in 0..n {
                    for b in 0..n {
                        let gia = ginv.comp_slice(ginv.comp_of(&[i, a]));
                        let gjb = ginv.comp_slice(ginv.comp_of(&[j, b]));
                        let d = dg.comp_slice(dg.comp_of(&[k, a, b]));
                        for node in 0..nn {
                            acc[node] -= gia[node] * gjb[node] * d[node];
                        }
                    }
                }
                let oc = dginv.comp_of(&[k, i, j]);
                dginv.comp_slice_mut(oc).copy_from_slice(&acc);
            }
        }
    }

    let r_h = bg.scalar_h();
    let mut l_vals = r_h.vals().to_vec();
    // - (nabla_k g^{ij}) T^k_{ij}
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let dgi = dginv.comp_slice(dginv.comp_of(&[k, i, j]));
                let t = t_tensor.comp_slice(t_tensor.comp_of(&[k, i, j]));
                for node in 0..nn {
                    l_vals[node] -= dgi[node] * t[node];
                }
            }
        }
    }
    // + (nabla_k g^{ik}) T^j_{ji}
    for k in 0..n {
        for i in 0..n {
            let dgi = dginv.comp_slice(dginv.comp_of(&[k, i, k]));
            for j in 0..n {
                let t = t_tensor.comp_slice(t_tensor.comp_of(&[j, j, i]));
                for node in 0..nn {
                    l_vals[node] += dgi[node] * t[node];
                }
            }
        }
    }
    // + g^{ij} (T^k_{kl} T^l_{ij} - T^k_{jl} T^l_{ik})
    for i in 0..n {
        for j in 0..n {
            let gi = ginv.comp_slice(ginv.comp_of(&[i, j]));
            for l in 0..n {
                for k in 0..n {
                    let t1 = t_tensor.comp_slice(t_tensor.comp_of(&[k, k, l]));
                    let t2 = t_tensor.comp_slice(t_tensor.comp_of(&[l, i, j]));
                    let t3 = t_tensor.comp_slice(t_tensor.comp_of(&[k, j, l]));
                    let t4 = t_tensor.comp_slice(t_tensor.comp_of(&[l, i, k]));
                    for node in 0..nn {
                        l_vals[node] += gi[node] * (t1[node] * t2[node] - t3[node] * t4[node]);
                    }
                }
            }
        }
    }

    let mut z_vector = VectorField::zeros(grid);
    for k in 0..n {
        let mut acc = vec![0.0; nn];
        for i in 0..n {
            for j in 0..n {
                let gi = ginv.comp_slice(ginv.comp_of(&[i, j]));
                let t = t_tensor.comp_slice(t_tensor.comp_of(&[k, i, j]));
                for node in 0..nn {
                    acc[node] -= gi[node] * t[node];
                }
            }
            let gik = ginv.comp_slice(ginv.comp_of(&[i, k]));
            for j in 0..n {
                let t = t_tensor.comp_slice(t_tensor.comp_of(&[j, j, i]));
                for node in 0..nn {
                    acc[node] += gik[node] * t[node];
                }
            }
        }
        z_vector.comp_mut(k).copy_from_slice(&acc);
    }

    Ok(LeeLeFlochTerms {
        t_tensor,
        l_scalar: ScalarField::from_vals(grid, l_vals),
        z_vector,
        vol_ratio: vol_ratio(g, bg),
    })
}

/// The Lee-LeFloch pairing
/// ∫ ( L(g,h) w + h(Z(g,h), nabla w) + b w ) dh  with  w = phi dg/dh.
/// Uses only first derivatives of g; the sign of the result is the
/// distributional verdict for this test function.
pub fn distributional_pairing(
    g: &MetricField,
    bg: &BackgroundMetric,
    phi: &ScalarField,
    b: f64,
) -> Result<f64> {
    for (node, &v) in phi.vals().iter().enumerate() {
        if v < 0.0 {
            return Err(CoreError::NegativeTestFunction { node, value: v });
        }
    }
    let terms = lee_lefloch_terms(g, bg)?;
    let grid = g.grid();
    let nn = grid.nodes();
    let w = phi.zip(&terms.vol_ratio, |p, r| p * r);
    let dw = gradient(&w);
    let mut integrand = vec![0.0; nn];
    for node in 0..nn {
        let mut zdw = 0.0;
        for k in 0..grid.dim() {
            zdw += terms.z_vector.get(node, k) * dw.get(node, k);
        }
        integrand[node] =
            terms.l_scalar.vals()[node] * w.vals()[node] + zdw + b * w.vals()[node];
    }
    Ok(integrate(&ScalarField::from_vals(grid, integrand), bg.sqrt_det_h()))
}

/// ∫ (R_g + b) phi dg for metrics smooth at grid scale.
pub fn smooth_pairing(
    g: &MetricField,
    bg: &BackgroundMetric,
    phi: &ScalarField,
    b: f64,
) -> Result<f64> {
    let r = scalar_curvature(g)?;
    let ratio = vol_ratio(g, bg);
    let integrand = r.zip(phi, |rv, pv| (rv + b) * pv);
    let weight = ratio.zip(bg.sqrt_det_h(), |a, b| a * b);
    Ok(integrate(&integrand, &weight))
}

/// |Ric|^2_g = g^{ik} g^{jl} Ric_ij Ric_kl, pointwise.
pub fn ricci_norm_sq(g: &MetricField, ric: &TensorField) -> Result<ScalarField> {
    let grid = g.grid();
    let n = grid.dim();
    let nn = grid.nodes();
    let ginv = g.inverse()?;
    let mut vals = vec![0.0; nn];
    for node in 0..nn {
        let mut gi = [[0.0f64; 3]; 3];
        for i in 0..n {
            for j in 0..n {
                gi[i][j] = ginv.comp_slice(ginv.comp_of(&[i, j]))[node];
            }
        }
        let mut rc = [[0.0f64; 3]; 3];
        for i in 0..n {
            for j in 0..n {
                rc[i][j] = ric.comp_slice(ric.comp_of(&[i, j]))[node];
            }
        }
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        acc += gi[i][k] * gi[j][l] * rc[i][j] * rc[k][l];
                    }
                }
            }
        }
        vals[node] = acc;
    }
    Ok(ScalarField::from_vals(grid, vals))
}
