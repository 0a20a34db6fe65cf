//! The three operators of one splitting step.

use rand::Rng;
use rand_distr::{Binomial, Distribution};

use super::{Execution, Grid, MacroField, ParticleEnsemble, Purpose, StepKey};
use crate::config::{ModelParams, SwitchingScaling, SwitchingSpec};
use crate::micro::{FrozenKernel, InteractionKernel, Outcome};

/// Particles grouped by `(lane, cell)`, group id `lane·nx + cell`, with
/// members in increasing particle index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupIndex {
    pub nx: usize,
    pub order: Vec<u32>,
    pub offsets: Vec<usize>,
}

impl GroupIndex {
    pub fn build(ens: &ParticleEnsemble, grid: Grid) -> Self {
        let nx = grid.nx;
        let groups: Vec<usize> = ens
            .x
            .iter()
            .zip(&ens.lane)
            .map(|(&x, &l)| usize::from(l) * nx + grid.cell(x))
            .collect();
        let mut offsets = vec![0usize; 2 * nx + 1];
        for &g in &groups {
            offsets[g + 1] += 1;
        }
        for g in 0..2 * nx {
            offsets[g + 1] += offsets[g];
        }
        let mut next = offsets.clone();
        let mut order = vec![0u32; groups.len()];
        for (i, &g) in groups.iter().enumerate() {
            order[next[g]] = i as u32;
            next[g] += 1;
        }
        Self { nx, order, offsets }
    }

    pub fn groups(&self) -> usize {
        2 * self.nx
    }

    pub fn members(&self, g: usize) -> &[u32] {
        &self.order[self.offsets[g]..self.offsets[g + 1]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CollisionStats {
    pub interactions: u64,
    pub rejections: u64,
}

impl std::ops::AddAssign for CollisionStats {
    fn add_assign(&mut self, o: Self) {
        self.interactions += o.interactions;
        self.rejections += o.rejections;
    }
}

/// Number of collision sub-steps keeping each sub-step within one mean
/// interaction time: `⌈dt/ε⌉`.
pub fn collision_substeps(dt: f64, epsilon: f64) -> usize {
    let r = dt / epsilon;
    if r.is_finite() {
        ((r * (1.0 - 1e-12)).ceil() as usize).max(1)
    } else {
        1
    }
}

/// One Nanbu sub-step inside a single `(lane, cell)` group.
///
/// `scratch` must hold a permutation of `0..vs.len()`. A binomial number of
/// particles is selected by partial Fisher–Yates, consecutive selections are
/// paired and the first member of each pair is updated against the second.
pub fn collide_group<R: Rng + ?Sized>(
    vs: &mut [f64],
    scratch: &mut [u32],
    kernel: &FrozenKernel,
    prob: f64,
    rng: &mut R,
) -> CollisionStats {
    let n = vs.len();
    let mut stats = CollisionStats::default();
    if n < 2 || prob <= 0.0 {
        return stats;
    }
    let k = if prob >= 1.0 {
        n
    } else {
        Binomial::new(n as u64, prob)
            .expect("probability in (0,1)")
            .sample(rng) as usize
    };
    for j in 0..k {
        let r = rng.random_range(j..n);
        scratch.swap(j, r);
    }
    for pair in scratch[..k].chunks_exact(2) {
        let (c, f) = (pair[0] as usize, pair[1] as usize);
        let draw = kernel.draw(rng);
        stats.interactions += 1;
        match kernel.apply(vs[c], vs[f], draw) {
            Outcome::Accepted(v) => vs[c] = v,
            Outcome::Rejected => stats.rejections += 1,
        }
    }
    stats
}

/// Collision operator over `dt`, split into `substeps` equal sub-steps in
/// which each particle is selected with probability `1 − exp(−ρ̂ dt_sub/ε)`.
#[allow(clippy::too_many_arguments)]
pub fn collision_step(
    ens: &mut ParticleEnsemble,
    dt: f64,
    epsilon: f64,
    substeps: usize,
    params: &ModelParams,
    field: &MacroField,
    key: (u64, u64),
    exec: Execution,
) -> CollisionStats {
    let index = GroupIndex::build(ens, field.grid);
    let kernels = [
        InteractionKernel::new(params, 0),
        InteractionKernel::new(params, 1),
    ];
    let mut gathered: Vec<f64> = index.order.iter().map(|&i| ens.v[i as usize]).collect();
    let mut items = Vec::with_capacity(index.groups());
    let mut rest: &mut [f64] = &mut gathered;
    for g in 0..index.groups() {
        let (head, tail) = rest.split_at_mut(index.offsets[g + 1] - index.offsets[g]);
        items.push((g, head));
        rest = tail;
    }
    let nx = index.nx;
    let dt_sub = dt / substeps as f64;
    let (seed, step) = key;
    let stats = exec.map_collect(items, |(g, vs)| {
        let mut s = CollisionStats::default();
        if vs.len() < 2 {
            return s;
        }
        let (lane, cell) = (g / nx, g % nx);
        let rho = field.rho_hat(lane, cell);
        let kernel = kernels[lane].at_density(rho);
        let prob = 1.0 - (-rho * dt_sub / epsilon).exp();
        let mut scratch: Vec<u32> = (0..vs.len() as u32).collect();
        for sub in 0..substeps {
            let mut rng = StepKey::new(seed, step, sub as u64).stream(g as u64, Purpose::Collision);
            s += collide_group(vs, &mut scratch, &kernel, prob, &mut rng);
        }
        s
    });
    for (pos, &i) in index.order.iter().enumerate() {
        ens.v[i as usize] = gathered[pos];
    }
    let mut total = CollisionStats::default();
    for s in stats {
        total += s;
    }
    ens.rejections += total.rejections;
    total
}

/// Free streaming `x ← x + v dt`; particles leaving the domain are removed.
/// Returns the number removed.
pub fn transport_step(ens: &mut ParticleEnsemble, dt: f64, grid: Grid) -> u64 {
    let mut kept = 0;
    for i in 0..ens.len() {
        let x = ens.x[i] + ens.v[i] * dt;
        if grid.contains(x) {
            ens.x[kept] = x;
            ens.v[kept] = ens.v[i];
            ens.lane[kept] = ens.lane[i];
            kept += 1;
        }
    }
    let removed = (ens.len() - kept) as u64;
    ens.x.truncate(kept);
    ens.v.truncate(kept);
    ens.lane.truncate(kept);
    ens.outflow += removed;
    removed
}

/// Per-cell `β = ε/(|m₁ − m₂| + a)`, identical for both lanes, and the
/// number of occupied cells where one lane is empty (mean speed taken as 0).
pub fn velocity_dependent_betas(
    field: &MacroField,
    epsilon: f64,
    a_offset: f64,
) -> (Vec<f64>, u64) {
    let mut flagged = 0;
    let betas = (0..field.grid.nx)
        .map(|c| {
            let (n1, n2) = (field.counts[0][c], field.counts[1][c]);
            if (n1 == 0) != (n2 == 0) {
                flagged += 1;
            }
            epsilon / ((field.m[0][c] - field.m[1][c]).abs() + a_offset)
        })
        .collect();
    (betas, flagged)
}

/// Base flip rates per lane and cell, before the `(1−ρ̂_other)^α` factor.
pub fn switch_rates(
    field: &MacroField,
    switching: &SwitchingSpec,
    epsilon: f64,
    scaling: SwitchingScaling,
) -> ([Vec<f64>; 2], u64) {
    let nx = field.grid.nx;
    let (raw, flagged) = match &switching.velocity_coupling {
        Some(vc) => {
            let (b, flagged) = velocity_dependent_betas(field, epsilon, vc.a_offset);
            ([b.clone(), b], flagged)
        }
        None => (switching.beta.map(|b| vec![b; nx]), 0),
    };
    let scale = match scaling {
        SwitchingScaling::Hyperbolic => 1.0 / epsilon,
        SwitchingScaling::Unscaled => 1.0,
    };
    (
        raw.map(|r| r.into_iter().map(|b| b * scale).collect()),
        flagged,
    )
}

/// Flips the label of each particle in lane `ℓ`, cell `c` with probability
/// `1 − exp(−r_ℓ,c (1−ρ̂_m,c)^α dt)`, `m ≠ ℓ`, using the frozen field.
/// Returns the flips out of each lane.
#[allow(clippy::too_many_arguments)]
pub fn lane_switch_step(
    ens: &mut ParticleEnsemble,
    dt: f64,
    rates: &[Vec<f64>; 2],
    alpha: f64,
    field: &MacroField,
    key: (u64, u64),
    exec: Execution,
) -> [u64; 2] {
    let index = GroupIndex::build(ens, field.grid);
    let nx = index.nx;
    let step_key = StepKey::new(key.0, key.1, 0);
    let flips = exec.map_collect((0..index.groups()).collect(), |g| {
        let members = index.members(g);
        let (lane, cell) = (g / nx, g % nx);
        let rate = rates[lane][cell] * (1.0 - field.rho_hat(1 - lane, cell)).powf(alpha);
        let prob = 1.0 - (-rate * dt).exp();
        if members.is_empty() || prob.is_nan() || prob <= 0.0 {
            return Vec::new();
        }
        let mut rng = step_key.stream(g as u64, Purpose::Switch);
        members
            .iter()
            .copied()
            .filter(|_| rng.random::<f64>() < prob)
            .collect::<Vec<u32>>()
    });
    let mut out = [0u64; 2];
    for i in flips.into_iter().flatten() {
        let l = &mut ens.lane[i as usize];
        out[usize::from(*l)] += 1;
        *l = 1 - *l;
    }
    ens.switches[0] += out[0];
    ens.switches[1] += out[1];
    out
}
