//! The related Ricci flow: DeTurck vector field, the diffeomorphism ODE
//! integrated per node, pullback of the metric, and the Ricci flow residual.

use crate::background::BackgroundMetric;
use crate::calculus::{christoffel, integrate, tensor_norm_sq};
use crate::curvature::ricci;
use crate::error::{CoreError, Result};
use crate::field::{MetricField, ScalarField, TensorField, VectorField};
use crate::flow::FlowTrajectory;
use crate::grid::TorusGrid;
use crate::interp;
use crate::report::NormReport;
use crate::stencil;
use rayon::prelude::*;

/// Periodic displacement map Phi(x) = x + u(x) at a fixed time.
#[derive(Debug, Clone)]
pub struct DiffeoField {
    pub t: f64,
    disp: VectorField,
}

impl DiffeoField {
    pub fn identity(grid: TorusGrid, t: f64) -> Self {
        Self { t, disp: VectorField::zeros(grid) }
    }

    pub fn grid(&self) -> TorusGrid {
        self.disp.grid()
    }

    pub fn displacement(&self) -> &VectorField {
        &self.disp
    }

    pub fn is_identity(&self) -> bool {
        self.disp.vals().iter().all(|&v| v == 0.0)
    }

    /// Image of node x under Phi (not wrapped).
    pub fn position(&self, node: usize) -> [f64; 3] {
        let grid = self.grid();
        let mut p = grid.position(node);
        for a in 0..grid.dim() {
            p[a] += self.disp.get(node, a);
        }
        p
    }

    /// Jacobian determinant field of Phi by finite differences.
    pub fn jacobian_det(&self) -> ScalarField {
        let grid = self.grid();
        let n = grid.dim();
        let nn = grid.nodes();
        let mut du = vec![vec![0.0; nn]; n * n];
        for a in 0..n {
            for i in 0..n {
                stencil::deriv1(grid, i, self.disp.comp(a), &mut du[a * n + i]);
            }
        }
        let vals = (0..nn)
            .map(|node| {
                let mut j = [[0.0f64; 3]; 3];
                for a in 0..n {
                    for i in 0..n {
                        j[a][i] = (if a == i { 1.0 } else { 0.0 }) + du[a * n + i][node];
                    }
                }
                match n {
                    1 => j[0][0],
                    2 => j[0][0] * j[1][1] - j[0][1] * j[1][0],
                    _ => {
                        j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1])
                            - j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0])
                            + j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0])
                    }
                }
            })
            .collect();
        ScalarField::from_vals(grid, vals)
    }

    /// Errors unless det(D Phi) > 0 at every node.
    pub fn check_orientation(&self) -> Result<()> {
        let det = self.jacobian_det();
        for (node, &d) in det.vals().iter().enumerate() {
            if !(d > 0.0) {
                return Err(CoreError::DiffeoDegenerate { node, t: self.t, det: d });
            }
        }
        Ok(())
    }
}

/// V^alpha = -g^{beta gamma} (Gamma(g) - Gamma(h))^alpha_{beta gamma}.
pub fn deturck_vector(g: &MetricField, bg: &BackgroundMetric) -> Result<VectorField> {
    if g.grid() != bg.grid() {
        return Err(CoreError::GridMismatch("deturck_vector".into()));
    }
    let grid = g.grid();
    let n = grid.dim();
    let nn = grid.nodes();
    let ginv = g.inverse()?;
    let gam_g = christoffel(g)?;
    let gam_h = bg.christoffel();
    let mut out = VectorField::zeros(grid);
    for alpha in 0..n {
        let mut acc = vec![0.0; nn];
        for b in 0..n {
            for c in 0..n {
                let gi = ginv.comp_slice(ginv.comp_of(&[b, c]));
                let gg = gam_g.comp_slice(gam_g.comp_of(&[alpha, b, c]));
                match gam_h {
                    Some(gh) => {
                        let ghs = gh.comp_slice(gh.comp_of(&[alpha, b, c]));
                        for i in 0..nn {
                            acc[i] -= gi[i] * (gg[i] - ghs[i]);
                        }
                    }
                    None => {
                        for i in 0..nn {
                            acc[i] -= gi[i] * gg[i];
                        }
                    }
                }
            }
        }
        out.comp_mut(alpha).copy_from_slice(&acc);
    }
    Ok(out)
}

fn sample_velocity(
    grid: TorusGrid,
    v0: &VectorField,
    v1: &VectorField,
    w: f64,
    pos: &[f64; 3],
    out: &mut [f64; 3],
) {
    for a in 0..grid.dim() {
        let a0 = interp::sample(grid, v0.comp(a), pos);
        let a1 = interp::sample(grid, v1.comp(a), pos);
        out[a] = (1.0 - w) * a0 + w * a1;
    }
}

/// Integrate the flow map of a time-dependent velocity given at snapshot
/// times, forward and backward from the snapshot at `s_idx`, with `substeps`
/// RK4 steps per snapshot interval. Velocity is interpolated linearly in
/// time and by periodic cubics in space. The map at `s_idx` is the identity
/// exactly.
pub fn flow_map_from_velocity(
    times: &[f64],
    velocities: &[VectorField],
    grid: TorusGrid,
    s_idx: usize,
    substeps: usize,
) -> Result<Vec<DiffeoField>> {
    if times.len() != velocities.len() || times.is_empty() {
        return Err(CoreError::InvalidParameter("times/velocities length mismatch".into()));
    }
    if s_idx >= times.len() {
        return Err(CoreError::InvalidParameter("anchor index out of range".into()));
    }
    if substeps == 0 {
        return Err(CoreError::InvalidParameter("substeps must be positive".into()));
    }
    let n = grid.dim();
    let nn = grid.nodes();
    let mut maps: Vec<Option<DiffeoField>> = vec![None; times.len()];
    maps[s_idx] = Some(DiffeoField::identity(grid, times[s_idx]));

    // march a full field of positions across one snapshot interval
    let advance = |pos: &mut Vec<[f64; 3]>, k_from: usize, k_to: usize| {
        let (t0, t1) = (times[k_from], times[k_to]);
        let dt = (t1 - t0) / substeps as f64;
        // velocity data spans [min,max] of the two snapshots
        let (vl, vr, tl, tr) = if k_from < k_to {
            (&velocities[k_from], &velocities[k_to], t0, t1)
        } else {
            (&velocities[k_to], &velocities[k_from], t1, t0)
        };
        let span = tr - tl;
        for s in 0..substeps {
            let t = t0 + s as f64 * dt;
            pos.par_iter_mut().for_each(|y| {
                let wt = |tt: f64| if span == 0.0 { 0.0 } else { (tt - tl) / span };
                let mut k1 = [0.0; 3];
                sample_velocity(grid, vl, vr, wt(t), y, &mut k1);
                let mut y2 = *y;
                for a in 0..n {
                    y2[a] += 0.5 * dt * k1[a];
                }
                let mut k2 = [0.0; 3];
                sample_velocity(grid, vl, vr, wt(t + 0.5 * dt), &y2, &mut k2);
                let mut y3 = *y;
                for a in 0..n {
                    y3[a] += 0.5 * dt * k2[a];
                }
                let mut k3 = [0.0; 3];
                sample_velocity(grid, vl, vr, wt(t + 0.5 * dt), &y3, &mut k3);
                let mut y4 = *y;
                for a in 0..n {
                    y4[a] += dt * k3[a];
                }
                let mut k4 = [0.0; 3];
                sample_velocity(grid, vl, vr, wt(t + dt), &y4, &mut k4);
                for a in 0..n {
                    y[a] += dt / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]);
                }
            });
        }
    };

    let to_diffeo = |pos: &[[f64; 3]], t: f64| -> DiffeoField {
        let mut disp = VectorField::zeros(grid);
        for a in 0..n {
            let sl = disp.comp_mut(a);
            for node in 0..nn {
                sl[node] = pos[node][a] - grid.position(node)[a];
            }
        }
        DiffeoField { t, disp }
    };

    // forward sweep
    let mut pos: Vec<[f64; 3]> = (0..nn).map(|i| grid.position(i)).collect();
    for k in s_idx..times.len() - 1 {
        advance(&mut pos, k, k + 1);
        maps[k + 1] = Some(to_diffeo(&pos, times[k + 1]));
    }
    // backward sweep
    let mut pos: Vec<[f64; 3]> = (0..nn).map(|i| grid.position(i)).collect();
    for k in (1..=s_idx).rev() {
        advance(&mut pos, k, k - 1);
        maps[k - 1] = Some(to_diffeo(&pos, times[k - 1]));
    }

    let maps: Vec<DiffeoField> = maps.into_iter().map(|m| m.expect("all filled")).collect();
    for m in &maps {
        m.check_orientation()?;
    }
    Ok(maps)
}

/// The diffeomorphism family of a Ricci-DeTurck trajectory, anchored at the
/// snapshot closest to `s_time`.
pub fn integrate_diffeo(
    traj: &FlowTrajectory,
    bg: &BackgroundMetric,
    s_time: f64,
    substeps: usize,
) -> Result<Vec<DiffeoField>> {
    let times = traj.times();
    let velocities: Vec<VectorField> =
        traj.snaps.iter().map(|s| deturck_vector(&s.g, bg)).collect::<Result<_>>()?;
    let s_idx = traj.nearest(s_time);
    flow_map_from_velocity(&times, &velocities, traj.grid, s_idx, substeps)
}

#[derive(Debug, Clone)]
pub struct Pullback {
    pub metric: MetricField,
    /// fraction of non-constant spectral energy at the Nyquist planes of g;
    /// large values mean the interpolation is out of band
    pub nyquist_fraction: f64,
}

/// ell_ij(x) = d_i Phi^a d_j Phi^b g_ab(Phi(x)), with D Phi by fourth-order
/// differences of the displacement and g(Phi(x)) by periodic cubics.
pub fn pullback_metric(g: &MetricField, phi: &DiffeoField) -> Result<Pullback> {
    if g.grid() != phi.grid() {
        return Err(CoreError::GridMismatch("pullback_metric".into()));
    }
    let grid = g.grid();
    let n = grid.dim();
    let nn = grid.nodes();
    let mut du = vec![vec![0.0; nn]; n * n];
    for a in 0..n {
        for i in 0..n {
            stencil::deriv1(grid, i, phi.displacement().comp(a), &mut du[a * n + i]);
        }
    }
    let g_comps: Vec<&[f64]> = (0..g.ncomp()).map(|c| g.comp_slice(c)).collect();
    let m = g.ncomp();
    let mut buf = vec![0.0f64; nn * m];
    buf.par_chunks_mut(m).enumerate().for_each(|(node, out)| {
        let pos = phi.position(node);
        let mut gphi = [[0.0f64; 3]; 3];
        for i in 0..n {
            for j in i..n {
                let v = interp::sample(grid, g_comps[crate::grid::sym_index(n, i, j)], &pos);
                gphi[i][j] = v;
                gphi[j][i] = v;
            }
        }
        let mut jac = [[0.0f64; 3]; 3];
        for a in 0..n {
            for i in 0..n {
                jac[a][i] = (if a == i { 1.0 } else { 0.0 }) + du[a * n + i][node];
            }
        }
        for i in 0..n {
            for j in i..n {
                let mut acc = 0.0;
                for a in 0..n {
                    for b in 0..n {
                        acc += jac[a][i] * jac[b][j] * gphi[a][b];
                    }
                }
                out[crate::grid::sym_index(n, i, j)] = acc;
            }
        }
    });
    let mut metric = MetricField::zeros(grid);
    for c in 0..m {
        let sl = metric.comp_slice_mut(c);
        for node in 0..nn {
            sl[node] = buf[node * m + c];
        }
    }
    Ok(Pullback { metric, nyquist_fraction: nyquist_fraction(g) })
}

/// Fraction of non-DC spectral energy living on the Nyquist planes.
fn nyquist_fraction(g: &MetricField) -> f64 {
    let grid = g.grid();
    let r = grid.res();
    let nn = grid.nodes();
    let mut total = 0.0;
    let mut nyq = 0.0;
    for c in 0..g.ncomp() {
        let mut re = g.comp_slice(c).to_vec();
        let mut im = vec![0.0; nn];
        crate::fft::fft_nd(grid, &mut re, &mut im, false);
        for node in 0..nn {
            if node == 0 {
                continue;
            }
            let coords = grid.node_coords(node);
            let e = re[node] * re[node] + im[node] * im[node];
            total += e;
            if (0..grid.dim()).any(|a| coords[a] == r / 2) {
                nyq += e;
            }
        }
    }
    if total > 0.0 {
        nyq / total
    } else {
        0.0
    }
}

/// Numerically invert the map on the grid by fixed-point iteration.
pub fn invert_diffeo(phi: &DiffeoField) -> Result<DiffeoField> {
    phi.check_orientation()?;
    let grid = phi.grid();
    let n = grid.dim();
    let nn = grid.nodes();
    let mut disp = VectorField::zeros(grid);
    let u: Vec<&[f64]> = (0..n).map(|a| phi.displacement().comp(a)).collect();
    let mut buf = vec![0.0f64; nn * n];
    buf.par_chunks_mut(n).enumerate().for_each(|(node, out)| {
        let x = grid.position(node);
        let mut y = x;
        for _ in 0..60 {
            let mut next = x;
            let mut delta = 0.0f64;
            for a in 0..n {
                next[a] = x[a] - interp::sample(grid, u[a], &y);
            }
            for a in 0..n {
                delta = delta.max((next[a] - y[a]).abs());
            }
            y = next;
            if delta < 1e-14 {
                break;
            }
        }
        for a in 0..n {
            out[a] = y[a] - x[a];
        }
    });
    for a in 0..n {
        let sl = disp.comp_mut(a);
        for node in 0..nn {
            sl[node] = buf[node * n + a];
        }
    }
    Ok(DiffeoField { t: phi.t, disp })
}

/// Central-difference Ricci flow residual d_t ell + 2 Ric(ell) at interior
/// snapshots, reported as max-node and L2 norms.
pub fn ricci_flow_residual(ell: &[(f64, MetricField)]) -> Result<NormReport> {
    if ell.len() < 3 {
        return Err(CoreError::InsufficientSnapshots { needed: 3, got: ell.len() });
    }
    let grid = ell[0].1.grid();
    let bg_flat = crate::background::BackgroundMetric::flat(grid);
    let one = ScalarField::constant(grid, 1.0);
    let mut ts = Vec::new();
    let mut max_series = Vec::new();
    let mut l2_series = Vec::new();
    for k in 1..ell.len() - 1 {
        let (t0, ref g0) = ell[k - 1];
        let (t1, ref g1) = ell[k];
        let (t2, ref g2) = ell[k + 1];
        let ric = ricci(g1)?;
        let mut resid = TensorField::zeros(
            grid,
            vec![crate::field::Variance::Co, crate::field::Variance::Co],
            Some((0, 1)),
        );
        let denom = t2 - t0;
        for c in 0..resid.ncomp() {
            let r = resid.comp_slice_mut(c);
            let a = g0.comp_slice(c);
            let b = g2.comp_slice(c);
            let rc = ric.comp_slice(c);
            for i in 0..r.len() {
                r[i] = (b[i] - a[i]) / denom + 2.0 * rc[i];
            }
        }
        let nsq = tensor_norm_sq(&resid, &bg_flat);
        ts.push(t1);
        max_series.push(nsq.max().max(0.0).sqrt());
        l2_series.push(integrate(&nsq, &one).max(0.0).sqrt());
    }
    let mut report = NormReport::new();
    report
        .series("residual_max", ts.clone(), max_series)
        .series("residual_l2", ts, l2_series);
    Ok(report)
}
