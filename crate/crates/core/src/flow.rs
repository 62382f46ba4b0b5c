//! Ricci-DeTurck evolution: right-hand side, explicit time stepping with a
//! parabolic CFL limit, trajectory recording, and the omega monitor.

use crate::background::BackgroundMetric;
use crate::calculus;
use crate::error::{CoreError, Result};
use crate::field::{MetricField, ScalarField, TensorField, Variance};
use crate::grid::{sym_index, TorusGrid};
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Euler,
    Rk2,
    Rk4,
}

#[derive(Debug, Clone)]
pub struct FlowState {
    pub t: f64,
    pub g: MetricField,
    pub step_count: usize,
}

/// Max-node gradient bounds recorded at snapshots, for checking the
/// t^{-j} smoothing estimates.
#[derive(Debug, Clone, Copy)]
pub struct GradBounds {
    pub max_grad_sq: f64,
    pub max_hess_sq: f64,
}

#[derive(Debug, Clone)]
pub struct FlowTrajectory {
    pub grid: TorusGrid,
    pub snaps: Vec<FlowState>,
    pub grad_bounds: Vec<GradBounds>,
    pub dt_schedule: Vec<f64>,
}

impl FlowTrajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snaps.iter().map(|s| s.t).collect()
    }

    pub fn len(&self) -> usize {
        self.snaps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snaps.is_empty()
    }

    /// Snapshot index closest to time t.
    pub fn nearest(&self, t: f64) -> usize {
        let mut best = 0;
        let mut d = f64::INFINITY;
        for (k, s) in self.snaps.iter().enumerate() {
            let dd = (s.t - t).abs();
            if dd < d {
                d = dd;
                best = k;
            }
        }
        best
    }
}

/// Why an evolve run stopped early.
#[derive(Debug, Clone)]
pub struct FlowStop {
    pub t: f64,
    pub step: usize,
    pub reason: String,
}

/// Every term of the evolution equation, evaluated literally:
/// g^{ab} nabla_a nabla_b g_ij, the two Rm(h) contractions, and the five
/// quadratic gradient terms with their exact coefficients.
pub fn rdtf_rhs(g: &MetricField, bg: &BackgroundMetric) -> Result<TensorField> {
    if g.grid() != bg.grid() {
        return Err(CoreError::GridMismatch("rdtf_rhs".into()));
    }
    let grid = g.grid();
    let n = grid.dim();
    let m = grid.sym_comps();
    let nn = grid.nodes();
    let gt = g.to_tensor();
    let ginv = g.inverse()?;
    let dg = calculus::covariant_deriv(&gt, bg)?;
    let ddg = calculus::covariant_hessian(&gt, bg)?;

    // slice tables for the hot loop
    let g_sl: Vec<&[f64]> = (0..m).map(|c| g.comp_slice(c)).collect();
    let gi_sl: Vec<&[f64]> = (0..m).map(|c| ginv.comp_slice(c)).collect();
    let mut dg_sl: Vec<&[f64]> = Vec::with_capacity(n * m);
    for a in 0..n {
        for i in 0..n {
            for j in i..n {
                dg_sl.push(dg.comp_slice(dg.comp_of(&[a, i, j])));
            }
        }
    }
    let mut dd_sl: Vec<&[f64]> = Vec::with_capacity(n * n * m);
    for a in 0..n {
        for b in 0..n {
            for i in 0..n {
                for j in i..n {
                    dd_sl.push(ddg.comp_slice(ddg.comp_of(&[a, b, i, j])));
                }
            }
        }
    }
    let curved = if bg.is_flat() {
        None
    } else {
        let rm = bg.riemann().expect("curved background carries Rm");
        let mut rm_sl: Vec<&[f64]> = Vec::with_capacity(n * n * n * n);
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for d in 0..n {
                        rm_sl.push(rm.comp_slice(rm.comp_of(&[a, b, c, d])));
                    }
                }
            }
        }
        let hi_sl: Vec<&[f64]> = (0..m).map(|c| bg.h_inv().comp_slice(c)).collect();
        Some((rm_sl, hi_sl))
    };

    const BLOCK: usize = 1024;
    let mut buf = vec![0.0f64; nn * m]; // node-major
    buf.par_chunks_mut(BLOCK * m).enumerate().for_each(|(blk, out)| {
        let start = blk * BLOCK;
        let mut gm = [[0.0f64; 3]; 3];
        let mut gi = [[0.0f64; 3]; 3];
        let mut d = [[[0.0f64; 3]; 3]; 3];
        let mut dd = [[[[0.0f64; 3]; 3]; 3]; 3];
        for (local, node) in (start..(start + out.len() / m)).enumerate() {
            for i in 0..n {
                for j in 0..n {
                    let c = sym_index(n, i, j);
                    gm[i][j] = g_sl[c][node];
                    gi[i][j] = gi_sl[c][node];
                }
            }
            for a in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        let c = sym_index(n, i, j);
                        d[a][i][j] = dg_sl[a * m + c][node];
                    }
                }
            }
            for a in 0..n {
                for b in 0..n {
                    for i in 0..n {
                        for j in 0..n {
                            let c = sym_index(n, i, j);
                            dd[a][b][i][j] = dd_sl[(a * n + b) * m + c][node];
                        }
                    }
                }
            }
            for i in 0..n {
                for j in i..n {
                    // principal term
                    let mut t1 = 0.0;
                    for a in 0..n {
                        for b in 0..n {
                            t1 += gi[a][b] * dd[a][b][i][j];
                        }
                    }
                    // quadratic gradient terms
                    let mut quad = 0.0;
                    for a in 0..n {
                        for b in 0..n {
                            let gab = gi[a][b];
                            if gab == 0.0 {
                                continue;
                            }
                            for p in 0..n {
                                for q in 0..n {
                                    let w = gab * gi[p][q];
                                    quad += w
                                        * (d[i][p][a] * d[j][q][b]
                                            + 2.0 * d[a][j][p] * d[q][i][b]
                                            - 2.0 * d[a][j][p] * d[b][i][q]
                                            - 2.0 * d[j][p][a] * d[b][i][q]
                                            - 2.0 * d[i][p][a] * d[b][j][q]);
                                }
                            }
                        }
                    }
                    let mut val = t1 + 0.5 * quad;
                    // curvature terms of the background
                    if let Some((rm_sl, hi_sl)) = &curved {
                        let mut cur = 0.0;
                        for k in 0..n {
                            for l in 0..n {
                                let gkl = gi[k][l];
                                for p in 0..n {
                                    for q in 0..n {
                                        let hpq = hi_sl[sym_index(n, p, q)][node];
                                        if hpq == 0.0 {
                                            continue;
                                        }
                                        let rm_j = rm_sl[((j * n + k) * n + q) * n + l][node];
                                        let rm_i = rm_sl[((i * n + k) * n + q) * n + l][node];
                                        cur -= gkl * hpq * (gm[i][p] * rm_j + gm[j][p] * rm_i);
                                    }
                                }
                            }
                        }
                        val += cur;
                    }
                    out[local * m + sym_index(n, i, j)] = val;
                }
            }
        }
    });

    // transpose node-major buffer into the component-major tensor
    let mut out = TensorField::zeros(grid, vec![Variance::Co, Variance::Co], Some((0, 1)));
    for c in 0..m {
        let sl = out.comp_slice_mut(c);
        for node in 0..nn {
            sl[node] = buf[node * m + c];
        }
    }
    Ok(out)
}

/// Parabolic stability limit: c_cfl * dx^2 / (2 n max_node lambda_max(g^{-1} h)).
pub fn cfl_limit(g: &MetricField, bg: &BackgroundMetric, c_cfl: f64) -> Result<f64> {
    let grid = g.grid();
    let n = grid.dim();
    let m = grid.sym_comps();
    let mut lam_max = 0.0f64;
    for node in 0..grid.nodes() {
        let gp = g.at_node(node);
        let hp = bg.h().at_node(node);
        let ev = crate::linalg::generalized_eigenvalues(n, &hp[..m], &gp[..m]).ok_or(
            CoreError::NotPositiveDefinite { node, lambda_min: f64::NAN },
        )?;
        if ev[n - 1] > lam_max {
            lam_max = ev[n - 1];
        }
    }
    if !(lam_max > 0.0) || !lam_max.is_finite() {
        return Err(CoreError::NotPositiveDefinite { node: 0, lambda_min: lam_max });
    }
    Ok(c_cfl * grid.spacing().powi(2) / (2.0 * n as f64 * lam_max))
}

fn advanced(g: &MetricField, k: &TensorField, dt: f64) -> MetricField {
    let mut out = g.clone();
    for (o, r) in out.vals_mut().iter_mut().zip(k.vals()) {
        *o += dt * r;
    }
    out
}

fn rhs_combined(g: &MetricField, parts: &[(&TensorField, f64)]) -> MetricField {
    let mut out = g.clone();
    for (k, w) in parts {
        for (o, r) in out.vals_mut().iter_mut().zip(k.vals()) {
            *o += w * r;
        }
    }
    out
}

/// One explicit step. Refuses dt above the CFL limit; detects SPD loss.
pub fn step(
    state: &FlowState,
    dt: f64,
    bg: &BackgroundMetric,
    scheme: Scheme,
    c_cfl: f64,
) -> Result<FlowState> {
    let limit = cfl_limit(&state.g, bg, c_cfl)?;
    if dt > limit * (1.0 + 1e-12) {
        return Err(CoreError::CflViolation { dt, limit });
    }
    let g = &state.g;
    let g_new = match scheme {
        Scheme::Euler => {
            let k1 = rdtf_rhs(g, bg)?;
            advanced(g, &k1, dt)
        }
        Scheme::Rk2 => {
            let k1 = rdtf_rhs(g, bg)?;
            let mid = advanced(g, &k1, 0.5 * dt);
            let k2 = rdtf_rhs(&mid, bg)?;
            advanced(g, &k2, dt)
        }
        Scheme::Rk4 => {
            let k1 = rdtf_rhs(g, bg)?;
            let k2 = rdtf_rhs(&advanced(g, &k1, 0.5 * dt), bg)?;
            let k3 = rdtf_rhs(&advanced(g, &k2, 0.5 * dt), bg)?;
            let k4 = rdtf_rhs(&advanced(g, &k3, dt), bg)?;
            rhs_combined(
                g,
                &[(&k1, dt / 6.0), (&k2, dt / 3.0), (&k3, dt / 3.0), (&k4, dt / 6.0)],
            )
        }
    };
    if let Err(CoreError::NotPositiveDefinite { node, lambda_min }) = g_new.check_spd() {
        return Err(CoreError::BlowUp {
            t: state.t + dt,
            step: state.step_count + 1,
            reason: format!("SPD lost at node {node} (lambda_min {lambda_min:e})"),
        });
    }
    Ok(FlowState { t: state.t + dt, g: g_new, step_count: state.step_count + 1 })
}

#[derive(Debug, Clone)]
pub struct EvolveParams {
    pub t_final: f64,
    pub scheme: Scheme,
    pub c_cfl: f64,
    /// pinning budget: stop when max |g - h|_h exceeds 3 eps0
    pub eps0: f64,
    pub snapshot_times: Vec<f64>,
}

impl Default for EvolveParams {
    fn default() -> Self {
        Self { t_final: 0.1, scheme: Scheme::Rk4, c_cfl: 0.2, eps0: 0.1, snapshot_times: vec![] }
    }
}

/// |g - h|_h as a scalar field.
pub fn metric_deviation(g: &MetricField, bg: &BackgroundMetric) -> ScalarField {
    let mut diff = g.to_tensor();
    diff.add_scaled(&bg.h().to_tensor(), -1.0);
    calculus::tensor_norm(&diff, bg)
}

fn grad_bounds(g: &MetricField, bg: &BackgroundMetric) -> Result<GradBounds> {
    let gt = g.to_tensor();
    let dg = calculus::covariant_deriv(&gt, bg)?;
    let ddg = calculus::covariant_hessian(&gt, bg)?;
    Ok(GradBounds {
        max_grad_sq: calculus::tensor_norm_sq(&dg, bg).max(),
        max_hess_sq: calculus::tensor_norm_sq(&ddg, bg).max(),
    })
}

/// Integrate from t = 0 with CFL-driven steps, recording snapshots at the
/// requested times (nearest step) plus the initial and final states. A
/// blow-up or pinning loss truncates the trajectory and is returned as a
/// diagnostic instead of an error.
pub fn evolve(
    g0: MetricField,
    bg: &BackgroundMetric,
    params: &EvolveParams,
) -> (FlowTrajectory, Option<FlowStop>) {
    let grid = g0.grid();
    let mut targets: Vec<f64> = params
        .snapshot_times
        .iter()
        .copied()
        .filter(|&t| t > 0.0 && t < params.t_final)
        .collect();
    targets.sort_by(|a, b| a.partial_cmp(b).unwrap());
    targets.dedup();

    let mut traj = FlowTrajectory {
        grid,
        snaps: Vec::with_capacity(targets.len() + 2),
        grad_bounds: Vec::new(),
        dt_schedule: Vec::new(),
    };
    let record = |traj: &mut FlowTrajectory, s: &FlowState| {
        if let Some(last) = traj.snaps.last() {
            if last.step_count == s.step_count {
                return;
            }
        }
        let gb = grad_bounds(&s.g, bg)
            .unwrap_or(GradBounds { max_grad_sq: f64::NAN, max_hess_sq: f64::NAN });
        traj.snaps.push(s.clone());
        traj.grad_bounds.push(gb);
    };

    let mut state = FlowState { t: 0.0, g: g0, step_count: 0 };
    record(&mut traj, &state);
    let mut next_target = 0usize;
    let mut stop = None;

    while state.t < params.t_final * (1.0 - 1e-12) {
        let limit = match cfl_limit(&state.g, bg, params.c_cfl) {
            Ok(l) => l,
            Err(e) => {
                stop = Some(FlowStop {
                    t: state.t,
                    step: state.step_count,
                    reason: format!("CFL evaluation failed: {e}"),
                });
                break;
            }
        };
        let dt = limit.min(params.t_final - state.t);
        let prev = state.clone();
        state = match step(&state, dt, bg, params.scheme, params.c_cfl) {
            Ok(s) => s,
            Err(e) => {
                stop = Some(FlowStop {
                    t: prev.t,
                    step: prev.step_count,
                    reason: e.to_string(),
                });
                break;
            }
        };
        traj.dt_schedule.push(dt);

        let dev = metric_deviation(&state.g, bg).max();
        if !dev.is_finite() || dev > 3.0 * params.eps0 {
            record(&mut traj, &state);
            stop = Some(FlowStop {
                t: state.t,
                step: state.step_count,
                reason: format!("pinning lost: max |g-h| = {dev:e} > 3 eps0 = {:e}", 3.0 * params.eps0),
            });
            break;
        }
        while next_target < targets.len() && state.t >= targets[next_target] - 1e-12 {
            let tgt = targets[next_target];
            if (prev.t - tgt).abs() < (state.t - tgt).abs() {
                record(&mut traj, &prev);
            } else {
                record(&mut traj, &state);
            }
            next_target += 1;
        }
    }
    if stop.is_none() {
        record(&mut traj, &state);
    }
    (traj, stop)
}

/// The monitored quantity omega = |nabla g|^2 (1 + L |g - h|^2).
pub fn omega_field(g: &MetricField, bg: &BackgroundMetric, l_const: f64) -> Result<ScalarField> {
    let gt = g.to_tensor();
    let dg = calculus::covariant_deriv(&gt, bg)?;
    let grad_sq = calculus::tensor_norm_sq(&dg, bg);
    let dev_sq = metric_deviation(g, bg).map(|v| v * v);
    Ok(grad_sq.zip(&dev_sq, |a, b| a * (1.0 + l_const * b)))
}

#[derive(Debug, Clone)]
pub struct OmegaDiagnostic {
    pub l_const: f64,
    pub omega: ScalarField,
    /// c_eff = d_t omega - g^{ab} nabla^2_{ab} omega
    ///         + (8/7) |nabla^2 g|^2 + (3/4) L |nabla g|^4
    pub residual: ScalarField,
    pub max_residual: f64,
}

/// Discrete check of the omega evolution inequality between two consecutive
/// states; the reported residual should stay below a moderate constant.
pub fn omega_monitor(
    state: &FlowState,
    next: &FlowState,
    bg: &BackgroundMetric,
    l_const: f64,
) -> Result<OmegaDiagnostic> {
    let dt = next.t - state.t;
    if !(dt > 0.0) {
        return Err(CoreError::InvalidParameter("omega_monitor needs consecutive states".into()));
    }
    let omega0 = omega_field(&state.g, bg, l_const)?;
    let omega1 = omega_field(&next.g, bg, l_const)?;

    let mut omega_t = TensorField::zeros(state.g.grid(), vec![], None);
    omega_t.vals_mut().copy_from_slice(omega0.vals());
    let hess = calculus::covariant_hessian(&omega_t, bg)?;
    let ginv = state.g.inverse()?;
    let grid = state.g.grid();
    let n = grid.dim();
    let nn = grid.nodes();

    let gt = state.g.to_tensor();
    let dg = calculus::covariant_deriv(&gt, bg)?;
    let ddg = calculus::covariant_hessian(&gt, bg)?;
    let grad_sq = calculus::tensor_norm_sq(&dg, bg);
    let hess_sq = calculus::tensor_norm_sq(&ddg, bg);

    let mut resid = vec![0.0; nn];
    for node in 0..nn {
        let dt_omega = (omega1.vals()[node] - omega0.vals()[node]) / dt;
        let mut elliptic = 0.0;
        for a in 0..n {
            for b in 0..n {
                elliptic += ginv.get(node, &[a, b]) * hess.get(node, &[a, b]);
            }
        }
        resid[node] = dt_omega - elliptic
            + (8.0 / 7.0) * hess_sq.vals()[node]
            + 0.75 * l_const * grad_sq.vals()[node].powi(2);
    }
    let residual = ScalarField::from_vals(grid, resid);
    let max_residual = residual.max();
    Ok(OmegaDiagnostic { l_const, omega: omega0, residual, max_residual })
}
