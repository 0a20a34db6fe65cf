//! Particle solver for the inhomogeneous two-lane kinetic system.
//!
//! One step is `reconstruct → collide → transport → switch` with the local
//! densities frozen at the reconstruction. Collisions use a Nanbu-type
//! scheme with one-sided pair updates, transport is free streaming with
//! outflow, and lane changes flip particle labels.

mod rng;
mod run;
mod steps;

pub use rng::{Purpose, StepKey};
pub use run::{
    homogeneous_relaxation, run_dsmc, DsmcDiagnostics, DsmcRun, HomogeneousRun, Snapshot,
};
pub use steps::{
    collide_group, collision_step, collision_substeps, lane_switch_step, switch_rates,
    transport_step, velocity_dependent_betas, CollisionStats, GroupIndex,
};

use rand::Rng;
use rayon::prelude::*;

use crate::config::{DiscretizationSpec, InitialCondition};
use crate::error::DsmcError;
pub use crate::grid::Grid;

/// Sequential reference mode or a rayon worker pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Sequential,
    Parallel,
}

impl Execution {
    /// `0` is the sequential reference mode.
    pub fn from_threads(threads: usize) -> Self {
        if threads == 0 {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }

    pub(crate) fn map_collect<T, U, F>(self, items: Vec<T>, f: F) -> Vec<U>
    where
        T: Send,
        U: Send,
        F: Fn(T) -> U + Sync + Send,
    {
        match self {
            Execution::Sequential => items.into_iter().map(f).collect(),
            Execution::Parallel => items.into_par_iter().map(f).collect(),
        }
    }
}

/// Labelled particles `(x, v, lane)` with a common weight.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    /// Lane index, 0 or 1.
    pub lane: Vec<u8>,
    /// Mass carried by each particle.
    pub weight: f64,
    pub rejections: u64,
    /// Flips out of lane 1 and out of lane 2.
    pub switches: [u64; 2],
    pub outflow: u64,
}

impl ParticleEnsemble {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn lane_count(&self, lane: usize) -> usize {
        self.lane
            .iter()
            .filter(|&&l| usize::from(l) == lane)
            .count()
    }

    pub fn lane_mass(&self, lane: usize) -> f64 {
        self.weight * self.lane_count(lane) as f64
    }
}

/// Splits `n` proportionally to `masses` by largest remainders; ties go to
/// the earlier entry.
pub fn apportion(n: usize, masses: &[f64]) -> Vec<usize> {
    let total: f64 = masses.iter().sum();
    let quotas: Vec<f64> = masses.iter().map(|m| n as f64 * m / total).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..masses.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Samples `disc.particles` particles uniformly inside the initial boxes with
/// counts proportional to the box masses.
pub fn init_ensemble(
    ic: &InitialCondition,
    disc: &DiscretizationSpec,
    seed: u64,
) -> Result<ParticleEnsemble, DsmcError> {
    let boxes = ic.boxes();
    for (index, b) in boxes.iter().enumerate() {
        if b.x[1] <= b.x[0] {
            return Err(DsmcError::EmptyBox { index });
        }
    }
    let masses: Vec<f64> = boxes.iter().map(|b| b.mass()).collect();
    let total: f64 = masses.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(DsmcError::ZeroMass);
    }
    let n = disc.particles;
    let counts = apportion(n, &masses);
    let key = StepKey::new(seed, u64::MAX, 0);
    let mut ens = ParticleEnsemble {
        x: Vec::with_capacity(n),
        v: Vec::with_capacity(n),
        lane: Vec::with_capacity(n),
        weight: total / n as f64,
        rejections: 0,
        switches: [0, 0],
        outflow: 0,
    };
    for (b_idx, (b, &count)) in boxes.iter().zip(&counts).enumerate() {
        let mut rng = key.stream(b_idx as u64, Purpose::Init);
        for _ in 0..count {
            let ux: f64 = rng.random();
            let uv: f64 = rng.random();
            ens.x.push(b.x[0] + (b.x[1] - b.x[0]) * ux);
            ens.v.push(b.v[0] + (b.v[1] - b.v[0]) * uv);
            ens.lane.push(b.lane - 1);
        }
    }
    Ok(ens)
}

/// Gridded per-lane densities and mean speeds.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroField {
    pub grid: Grid,
    pub rho: [Vec<f64>; 2],
    /// Mean speed per cell, 0 where the lane is empty.
    pub m: [Vec<f64>; 2],
    pub counts: [Vec<usize>; 2],
    /// Speed bins of the phase histogram, if requested.
    pub nv: usize,
    /// Row-major `nx × nv` phase-space densities `f_i(x,v)` per lane.
    pub histogram: Option<[Vec<f64>; 2]>,
}

impl MacroField {
    /// Mass of `lane`: `Σ_c ρ_c Δx`.
    pub fn lane_mass(&self, lane: usize) -> f64 {
        self.rho[lane].iter().sum::<f64>() * self.grid.dx()
    }

    /// Local density clamped into `[0,1]`.
    #[inline]
    pub fn rho_hat(&self, lane: usize, cell: usize) -> f64 {
        self.rho[lane][cell].clamp(0.0, 1.0)
    }
}

/// Histogram reconstruction of densities, mean speeds and optionally the
/// phase-space density on an `nv`-bin speed grid.
pub fn reconstruct_moments(ens: &ParticleEnsemble, grid: Grid, nv: Option<usize>) -> MacroField {
    let nx = grid.nx;
    let mut counts = [vec![0usize; nx], vec![0usize; nx]];
    let mut vsum = [vec![0.0; nx], vec![0.0; nx]];
    let mut hist = nv.map(|nv| [vec![0usize; nx * nv], vec![0usize; nx * nv]]);
    for ((&x, &v), &l) in ens.x.iter().zip(&ens.v).zip(&ens.lane) {
        let c = grid.cell(x);
        let l = usize::from(l);
        counts[l][c] += 1;
        vsum[l][c] += v;
        if let (Some(h), Some(nv)) = (hist.as_mut(), nv) {
            let b = ((v * nv as f64) as usize).min(nv - 1);
            h[l][c * nv + b] += 1;
        }
    }
    let dx = grid.dx();
    let rho = [0, 1].map(|l| {
        counts[l]
            .iter()
            .map(|&n| ens.weight * n as f64 / dx)
            .collect::<Vec<_>>()
    });
    let m = [0, 1].map(|l| {
        counts[l]
            .iter()
            .zip(&vsum[l])
            .map(|(&n, &s)| if n == 0 { 0.0 } else { s / n as f64 })
            .collect::<Vec<_>>()
    });
    let nv_val = nv.unwrap_or(0);
    let histogram = hist.map(|h| {
        let scale = ens.weight * nv_val as f64 / dx;
        h.map(|c| c.into_iter().map(|n| n as f64 * scale).collect::<Vec<_>>())
    });
    MacroField {
        grid,
        rho,
        m,
        counts,
        nv: nv_val,
        histogram,
    }
}
