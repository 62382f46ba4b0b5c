//! Versioned binary trajectory format "RDTL": little-endian, symmetric-packed
//! metric components, component-major with nodes in row-major order.
//!
//! Layout:
//!   magic   4 bytes  "RDTL"
//!   version u32      1
//!   dim     u32
//!   res     u32
//!   period  f64
//!   ncomp   u32      dim (dim+1) / 2
//!   nsnap   u32
//!   per snapshot: t f64, step u64, ncomp * res^dim component values f64

use anyhow::{bail, Context, Result};
use rdtf_core::field::MetricField;
use rdtf_core::flow::{FlowState, FlowTrajectory};
use rdtf_core::grid::TorusGrid;
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"RDTL";
pub const VERSION: u32 = 1;

pub struct Snapshot {
    pub t: f64,
    pub step: u64,
    pub metric: MetricField,
}

pub fn write_snapshots(path: &Path, grid: TorusGrid, snaps: &[Snapshot]) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(grid.dim() as u32).to_le_bytes());
    buf.extend_from_slice(&(grid.res() as u32).to_le_bytes());
    buf.extend_from_slice(&grid.len().to_le_bytes());
    buf.extend_from_slice(&(grid.sym_comps() as u32).to_le_bytes());
    buf.extend_from_slice(&(snaps.len() as u32).to_le_bytes());
    for s in snaps {
        if s.metric.grid() != grid {
            bail!("snapshot grid mismatch");
        }
        buf.extend_from_slice(&s.t.to_le_bytes());
        buf.extend_from_slice(&s.step.to_le_bytes());
        for v in s.metric.vals() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path)
        .with_context(|| format!("creating {}", path.display()))?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_snapshots(path: &Path) -> Result<(TorusGrid, Vec<Snapshot>)> {
    let mut data = Vec::new();
    std::fs::File::open(path)
        .with_context(|| format!("opening {}", path.display()))?
        .read_to_end(&mut data)?;
    let mut off = 0usize;
    let take = |off: &mut usize, k: usize| -> Result<&[u8]> {
        if *off + k > data.len() {
            bail!("truncated trajectory file {}", path.display());
        }
        let s = &data[*off..*off + k];
        *off += k;
        Ok(s)
    };
    let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().unwrap());
    let f64_at = |s: &[u8]| f64::from_le_bytes(s.try_into().unwrap());
    if take(&mut off, 4)? != MAGIC {
        bail!("bad magic in {}", path.display());
    }
    let version = u32_at(take(&mut off, 4)?);
    if version != VERSION {
        bail!("unsupported trajectory version {version}");
    }
    let dim = u32_at(take(&mut off, 4)?) as usize;
    let res = u32_at(take(&mut off, 4)?) as usize;
    let period = f64_at(take(&mut off, 8)?);
    let ncomp = u32_at(take(&mut off, 4)?) as usize;
    let nsnap = u32_at(take(&mut off, 4)?) as usize;
    let grid = TorusGrid::new(dim, res, period).map_err(|e| anyhow::anyhow!("{e}"))?;
    if ncomp != grid.sym_comps() {
        bail!("component count {ncomp} does not match grid");
    }
    let per = grid.nodes() * ncomp;
    let mut snaps = Vec::with_capacity(nsnap);
    for _ in 0..nsnap {
        let t = f64_at(take(&mut off, 8)?);
        let step = u64::from_le_bytes(take(&mut off, 8)?.try_into().unwrap());
        let mut m = MetricField::zeros(grid);
        {
            let vals = m.vals_mut();
            let raw = take(&mut off, per * 8)?;
            for (i, chunk) in raw.chunks_exact(8).enumerate() {
                vals[i] = f64::from_le_bytes(chunk.try_into().unwrap());
            }
        }
        snaps.push(Snapshot { t, step, metric: m });
    }
    if off != data.len() {
        bail!("trailing bytes in {}", path.display());
    }
    Ok((grid, snaps))
}

pub fn trajectory_to_snapshots(traj: &FlowTrajectory) -> Vec<Snapshot> {
    traj.snaps
        .iter()
        .map(|s| Snapshot { t: s.t, step: s.step_count as u64, metric: s.g.clone() })
        .collect()
}

pub fn snapshots_to_trajectory(grid: TorusGrid, snaps: &[Snapshot]) -> FlowTrajectory {
    FlowTrajectory {
        grid,
        snaps: snaps
            .iter()
            .map(|s| FlowState { t: s.t, g: s.metric.clone(), step_count: s.step as usize })
            .collect(),
        grad_bounds: Vec::new(),
        dt_schedule: Vec::new(),
    }
}
