//! Splitting loop and the space-homogeneous relaxation driver.

use std::time::Instant;

use rand::Rng;
use serde::Serialize;

use super::{
    collide_group, collision_step, collision_substeps, init_ensemble, lane_switch_step,
    reconstruct_moments, switch_rates, transport_step, CollisionStats, Execution, Grid, MacroField,
    Purpose, StepKey,
};
use crate::config::{CollisionScaling, ExperimentSpec, ModelParams};
use crate::error::{DsmcError, Error, Result};
use crate::micro::InteractionKernel;

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub field: MacroField,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DsmcDiagnostics {
    pub epsilon: f64,
    pub dt: f64,
    /// Scale entering the collision probability (`εγ` or `ε`).
    pub collision_epsilon: f64,
    pub substeps_per_step: usize,
    pub steps: u64,
    pub particles_initial: usize,
    pub particles_final: usize,
    pub interactions: u64,
    pub rejections: u64,
    pub rejection_rate: f64,
    /// Flips out of lane 1 and out of lane 2.
    pub switches: [u64; 2],
    pub outflow: u64,
    /// Cell-steps where one lane was empty and its mean speed was taken as 0.
    pub empty_cell_events: u64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DsmcRun {
    pub snapshots: Vec<Snapshot>,
    pub diagnostics: DsmcDiagnostics,
}

impl DsmcRun {
    pub fn final_field(&self) -> &MacroField {
        &self.snapshots.last().expect("final snapshot").field
    }
}

/// Runs the splitting loop `reconstruct → collide → transport → switch` up
/// to `final_time` with `Δt` from the experiment (default `ε`).
///
/// Snapshots are taken at the first step boundary at or after each requested
/// time and always at the final time.
pub fn run_dsmc(
    exp: &ExperimentSpec,
    params: &ModelParams,
    epsilon: f64,
    exec: Execution,
) -> Result<DsmcRun> {
    let started = Instant::now();
    let dt = exp.kinetic_dt(epsilon);
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Experiment(format!(
            "kinetic time step must be finite and positive, got {dt}"
        )));
    }
    let disc = &exp.discretization;
    let grid = Grid::new(disc.domain, disc.nx);
    let mut ens = init_ensemble(&exp.initial_condition, disc, exp.seed)?;
    let particles_initial = ens.len();
    let collision_epsilon = match exp.dsmc.collision_scaling {
        CollisionScaling::QuasiInvariant => epsilon * params.gamma,
        CollisionScaling::Kinetic => epsilon,
    };
    let mut times: Vec<f64> = exp.snapshots.clone();
    times.push(exp.final_time);
    times.sort_by(f64::total_cmp);
    times.dedup();

    let n_steps = (exp.final_time / dt * (1.0 - 1e-12)).ceil() as u64;
    let time_at = |k: u64| (k as f64 * dt).min(exp.final_time);
    let hist_bins = exp.phase_histogram.then_some(disc.nv);
    let mut snapshots = Vec::new();
    let mut next = 0;
    let mut stats = CollisionStats::default();
    let mut empty_cell_events = 0;
    let mut substeps_per_step = 0;
    for step in 0..=n_steps {
        let t = time_at(step);
        let field = reconstruct_moments(&ens, grid, None);
        while next < times.len() && (times[next] <= t + 1e-9 * dt || step == n_steps) {
            let f = match hist_bins {
                Some(_) => reconstruct_moments(&ens, grid, hist_bins),
                None => field.clone(),
            };
            snapshots.push(Snapshot { t, field: f });
            next += 1;
        }
        if step == n_steps {
            break;
        }
        let h = time_at(step + 1) - t;
        let substeps = collision_substeps(h, collision_epsilon);
        substeps_per_step = substeps_per_step.max(substeps);
        stats += collision_step(
            &mut ens,
            h,
            collision_epsilon,
            substeps,
            params,
            &field,
            (exp.seed, step),
            exec,
        );
        transport_step(&mut ens, h, grid);
        let (rates, flagged) = switch_rates(
            &field,
            &params.switching,
            epsilon,
            exp.dsmc.switching_scaling,
        );
        empty_cell_events += flagged;
        lane_switch_step(
            &mut ens,
            h,
            &rates,
            params.switching.alpha,
            &field,
            (exp.seed, step),
            exec,
        );
    }
    let diagnostics = DsmcDiagnostics {
        epsilon,
        dt,
        collision_epsilon,
        substeps_per_step,
        steps: n_steps,
        particles_initial,
        particles_final: ens.len(),
        interactions: stats.interactions,
        rejections: stats.rejections,
        rejection_rate: if stats.interactions == 0 {
            0.0
        } else {
            stats.rejections as f64 / stats.interactions as f64
        },
        switches: ens.switches,
        outflow: ens.outflow,
        empty_cell_events,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    Ok(DsmcRun {
        snapshots,
        diagnostics,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomogeneousRun {
    pub speeds: Vec<f64>,
    pub interactions: u64,
    pub rejections: u64,
}

/// Space-homogeneous single-lane collision dynamics at frozen density `rho`.
///
/// `n` particles start uniform on `[0,1]`; each of `steps` steps selects
/// particles with probability `1 − exp(−ρ·dt/ε)` given `dt_over_epsilon`.
pub fn homogeneous_relaxation(
    params: &ModelParams,
    lane: usize,
    rho: f64,
    n: usize,
    steps: u64,
    dt_over_epsilon: f64,
    seed: u64,
) -> Result<HomogeneousRun> {
    if n < 2 {
        return Err(DsmcError::TooFewParticles(n).into());
    }
    let mut init = StepKey::new(seed, u64::MAX, 0).stream(0, Purpose::Init);
    let mut speeds: Vec<f64> = (0..n).map(|_| init.random()).collect();
    let rho = rho.clamp(0.0, 1.0);
    let kernel = InteractionKernel::new(params, lane).at_density(rho);
    let prob = 1.0 - (-rho * dt_over_epsilon).exp();
    let mut scratch: Vec<u32> = (0..n as u32).collect();
    let mut stats = CollisionStats::default();
    for step in 0..steps {
        let mut rng = StepKey::new(seed, step, 0).stream(0, Purpose::Homogeneous);
        stats += collide_group(&mut speeds, &mut scratch, &kernel, prob, &mut rng);
    }
    Ok(HomogeneousRun {
        speeds,
        interactions: stats.interactions,
        rejections: stats.rejections,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{BuiltinInitial, InitialCondition};

    fn exp() -> ExperimentSpec {
        let mut e = ExperimentSpec::default();
        e.discretization.particles = 20_000;
        e.final_time = 0.2;
        e
    }

    fn params() -> ModelParams {
        serde_json::from_str(
            r#"{ "gamma": 0.05, "mu": 2,
                 "control": { "p": 0.05, "kappa": [0.01, 0.01], "recommended_speed": ["linear", "linear"] },
                 "switching": { "beta": [0.02, 0.02], "alpha": 2 } }"#,
        )
        .unwrap()
    }

    #[test]
    fn pure_transport_without_collisions_or_switching() {
        let mut e = exp();
        e.discretization.dt = Some(0.01);
        let mut p = params();
        p.switching.beta = [0.0, 0.0];
        let run = run_dsmc(&e, &p, f64::INFINITY, Execution::Sequential).unwrap();
        let d = &run.diagnostics;
        assert_eq!((d.interactions, d.switches, d.outflow), (0, [0, 0], 0));
        let ens0 = init_ensemble(&e.initial_condition, &e.discretization, e.seed).unwrap();
        let mut moved = ens0.clone();
        transport_step(&mut moved, 0.2, Grid::new(e.discretization.domain, 21));
        let expect = reconstruct_moments(&moved, Grid::new(e.discretization.domain, 21), None);
        for l in 0..2 {
            for c in 0..21 {
                assert!((run.final_field().rho[l][c] - expect.rho[l][c]).abs() < 0.02);
            }
        }
    }

    #[test]
    fn snapshots_and_mass() {
        let mut e = exp();
        e.snapshots = vec![0.0, 0.1];
        let run = run_dsmc(&e, &params(), 0.01, Execution::Sequential).unwrap();
        let ts: Vec<f64> = run.snapshots.iter().map(|s| s.t).collect();
        assert_eq!(ts.len(), 3);
        assert!((ts[1] - 0.1).abs() < 1e-12 && (ts[2] - 0.2).abs() < 1e-12);
        assert_eq!(run.diagnostics.steps, 20);
        assert_eq!(run.diagnostics.outflow, 0);
        for s in &run.snapshots {
            let m = s.field.lane_mass(0) + s.field.lane_mass(1);
            assert!((m - 2.0).abs() < 1e-12);
        }
        assert!(run.diagnostics.switches[0] + run.diagnostics.switches[1] > 0);
    }

    #[test]
    fn deterministic_across_execution_modes() {
        let mut e = exp();
        e.initial_condition = InitialCondition::Builtin(BuiltinInitial::Test2);
        let mut p = params();
        p.switching.velocity_coupling = Some(crate::config::VelocityCoupling { a_offset: 0.2 });
        let a = run_dsmc(&e, &p, 0.02, Execution::Sequential).unwrap();
        let b = run_dsmc(&e, &p, 0.02, Execution::Sequential).unwrap();
        let c = run_dsmc(&e, &p, 0.02, Execution::Parallel).unwrap();
        assert_eq!(a.snapshots, b.snapshots);
        assert_eq!(a.snapshots, c.snapshots);
    }

    #[test]
    fn homogeneous_requires_two_particles() {
        assert!(homogeneous_relaxation(&params(), 0, 0.5, 1, 1, 1.0, 0).is_err());
    }
}
