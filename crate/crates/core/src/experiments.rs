//! Experiment drivers behind the command-line subcommands. Each driver
//! returns its data; [`execute`] runs the configured one and writes the
//! plot-ready files.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::config::{
    ConfigDocument, ExperimentKind, ExperimentSpec, HydroRegime, InitialCondition, ModelParams,
    Penalization, SwitchingScaling,
};
use crate::dsmc::{run_dsmc, DsmcDiagnostics, DsmcRun, Execution, MacroField};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::hydro::{fv_advance, ClosureTable, FluxModel, FvDiagnostics, FvScheme, HydroState};
use crate::moments::{
    asymptotic_mean_speeds, density_ode_limit, equilibrium_densities, fundamental_diagram,
    integrate_moments_with, AsymptoticMethod, DiagramRow, LaneMomentState,
};
use crate::output;

/// Absolute drift of `ρ₁ + ρ₂` tolerated by the homogeneous run.
pub const MASS_TOLERANCE: f64 = 1e-10;
/// Largest accepted gap between the algebraic density split and the
/// long-time density ODE in a diagram.
pub const SPLIT_TOLERANCE: f64 = 1e-6;

/// Outcome of one internal consistency check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timing {
    pub label: String,
    pub seconds: f64,
}

/// Files written and checks performed by [`execute`].
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunReport {
    pub outputs: Vec<PathBuf>,
    pub checks: Vec<Check>,
    pub timings: Vec<Timing>,
    pub steps: u64,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn time(&mut self, label: impl Into<String>, started: Instant) {
        self.timings.push(Timing {
            label: label.into(),
            seconds: started.elapsed().as_secs_f64(),
        });
    }
}

/// Moment trajectory with optional closed-form large-time speeds.
#[derive(Debug, Clone, PartialEq)]
pub struct HomogeneousResult {
    pub states: Vec<LaneMomentState>,
    pub asymptotes: Option<[f64; 2]>,
    /// `max_t |ρ₁ + ρ₂ − (ρ₁ + ρ₂)(0)|` over every integrator step.
    pub mass_drift: f64,
    pub steps: u64,
}

/// Large-time mean speeds at the equilibrium densities reached from `rho0`.
pub fn homogeneous_asymptotes(params: &ModelParams, rho0: [f64; 2]) -> Result<[f64; 2]> {
    let total = rho0[0] + rho0[1];
    if total <= 0.0 {
        return Ok([0.0; 2]);
    }
    let (r1, r2) = equilibrium_densities(total, rho0[0] / total, &params.switching)?;
    let m = asymptotic_mean_speeds(r1, r2, params, AsymptoticMethod::ClosedForm)?;
    Ok([
        if r1 > 0.0 { m[0] } else { 0.0 },
        if r2 > 0.0 { m[1] } else { 0.0 },
    ])
}

/// Integrates the homogeneous moment system of the experiment up to its
/// final time, keeping every `sample_every`-th step and the last one.
pub fn homogeneous_trajectory(
    params: &ModelParams,
    exp: &ExperimentSpec,
) -> Result<HomogeneousResult> {
    let h = &exp.homogeneous;
    let state0 = LaneMomentState::new(h.rho0, h.m0, h.e0, h.system);
    let mass0 = h.rho0[0] + h.rho0[1];
    let mut states = Vec::new();
    let mut drift: f64 = 0.0;
    let mut k = 0usize;
    let last = integrate_moments_with(&state0, params, exp.final_time, h.dt, |s| {
        drift = drift.max((s.rho[0] + s.rho[1] - mass0).abs());
        if k.is_multiple_of(h.sample_every) {
            states.push(*s);
        }
        k += 1;
    })?;
    if states.last() != Some(&last) {
        states.push(last);
    }
    let asymptotes = if h.asymptotes {
        Some(homogeneous_asymptotes(params, h.rho0)?)
    } else {
        None
    };
    Ok(HomogeneousResult {
        states,
        asymptotes,
        mass_drift: drift,
        steps: k.saturating_sub(1) as u64,
    })
}

/// Diagram rows for one control penalization.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagramFamily {
    pub kappa: Penalization,
    pub rows: Vec<DiagramRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagramResult {
    pub families: Vec<DiagramFamily>,
    /// Largest gap between the algebraic split and the long-time ODE.
    pub ode_deviation: Option<f64>,
}

/// Uniform grid of `points` total densities on `[0,1]`.
pub fn diagram_grid(points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![0.0];
    }
    (0..points)
        .map(|k| k as f64 / (points - 1) as f64)
        .collect()
}

/// Integrates the density ODE in chunks until it is stationary to `1e−13`
/// per chunk (or a horizon of `1e4`) and returns the final split.
fn long_time_split(total: f64, initial_split: f64, params: &ModelParams) -> [f64; 2] {
    let sw = &params.switching;
    let rate = sw.beta[0].max(sw.beta[1]);
    if rate == 0.0 {
        return [total * initial_split, total * (1.0 - initial_split)];
    }
    let dt = (0.1 / rate).min(0.05);
    let chunk = 100.0;
    let mut rho = [total * initial_split, total * (1.0 - initial_split)];
    let mut t = 0.0;
    while t < 1e4 {
        let split = if total > 0.0 { rho[0] / total } else { 0.5 };
        let next = density_ode_limit(total, split, sw, chunk, dt);
        let change = (next[0] - rho[0]).abs().max((next[1] - rho[1]).abs());
        rho = next;
        t += chunk;
        if change < 1e-13 {
            break;
        }
    }
    rho
}

/// Fundamental diagrams for every configured penalization, optionally
/// cross-checking the density split against the density ODE.
pub fn diagram(params: &ModelParams, exp: &ExperimentSpec) -> Result<DiagramResult> {
    let spec = &exp.diagram;
    let grid = diagram_grid(spec.points);
    let families = spec
        .kappas
        .iter()
        .map(|&kappa| {
            let mut p = params.clone();
            p.control.kappa = [kappa; 2];
            Ok(DiagramFamily {
                kappa,
                rows: fundamental_diagram(&p, &grid, spec.initial_split)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ode_deviation = if spec.ode_cross_check {
        let mut worst: f64 = 0.0;
        if let Some(family) = families.first() {
            for row in family.rows.iter().filter(|r| r.rho_total > 0.0) {
                let ode = long_time_split(row.rho_total, spec.initial_split, params);
                worst = worst
                    .max((ode[0] - row.rho_inf[0]).abs())
                    .max((ode[1] - row.rho_inf[1]).abs());
            }
        }
        Some(worst)
    } else {
        None
    };
    Ok(DiagramResult {
        families,
        ode_deviation,
    })
}

/// Exact cell averages of the piecewise-constant initial densities.
pub fn initial_cell_averages(ic: &InitialCondition, grid: Grid) -> [Vec<f64>; 2] {
    let dx = grid.dx();
    let mut rho = [vec![0.0; grid.nx], vec![0.0; grid.nx]];
    for b in ic.boxes() {
        let lane = usize::from(b.lane) - 1;
        for (c, x) in grid.centers().into_iter().enumerate() {
            let lo = (x - 0.5 * dx).max(b.x[0]);
            let hi = (x + 0.5 * dx).min(b.x[1]);
            if hi > lo {
                rho[lane][c] += b.density * (hi - lo) / dx;
            }
        }
    }
    rho
}

/// Hydrodynamic snapshots and solver diagnostics.
#[derive(Debug, Clone)]
pub struct HydroRun {
    pub regime: HydroRegime,
    pub scheme: FvScheme,
    pub snapshots: Vec<HydroState>,
    /// Closure used to recover lanes in the fast regime.
    pub table: Option<ClosureTable>,
    pub diagnostics: FvDiagnostics,
}

fn snapshot_times(exp: &ExperimentSpec, include_zero: bool) -> Vec<f64> {
    let mut times = exp.snapshots.clone();
    if include_zero {
        times.push(0.0);
    }
    times.push(exp.final_time);
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
}

/// Runs the configured hydrodynamic regime on `grid` from the experiment's
/// initial condition and records the state at every snapshot time.
pub fn hydro_on_grid(
    params: &ModelParams,
    exp: &ExperimentSpec,
    regime: HydroRegime,
    grid: Grid,
) -> Result<HydroRun> {
    let h = &exp.hydro;
    let model = FluxModel::build(regime, params, h.flux, h.fast_flux, h.table_nodes)?;
    let lanes = initial_cell_averages(&exp.initial_condition, grid);
    let u = match regime {
        HydroRegime::Fast => vec![lanes[0].iter().zip(&lanes[1]).map(|(a, b)| a + b).collect()],
        _ => lanes.to_vec(),
    };
    let mut state = HydroState { grid, t: 0.0, u };
    let scheme = FvScheme::new(exp.discretization.order, exp.discretization.cfl);
    let mut diagnostics = FvDiagnostics::default();
    let mut snapshots = Vec::new();
    for t in snapshot_times(exp, false) {
        diagnostics.absorb(fv_advance(&mut state, &model, &scheme, t)?);
        snapshots.push(state.clone());
    }
    let table = match model {
        FluxModel::Fast { table } => Some(table),
        _ => None,
    };
    Ok(HydroRun {
        regime,
        scheme,
        snapshots,
        table,
        diagnostics,
    })
}

/// Hydrodynamic run on the experiment grid.
pub fn hydro(params: &ModelParams, exp: &ExperimentSpec) -> Result<HydroRun> {
    let d = &exp.discretization;
    hydro_on_grid(params, exp, exp.hydro_regime, Grid::new(d.domain, d.nx))
}

/// Particle run at the experiment's `ε`.
pub fn dsmc(params: &ModelParams, exp: &ExperimentSpec, exec: Execution) -> Result<DsmcRun> {
    let eps = exp
        .epsilon
        .ok_or_else(|| Error::Experiment("dsmc needs experiment.epsilon".into()))?;
    run_dsmc(exp, params, eps, exec)
}

/// `Σ_c |a_c − b_c| Δx`.
pub fn l1_distance(a: &[f64], b: &[f64], dx: f64) -> f64 {
    assert_eq!(a.len(), b.len(), "fields must share a grid");
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() * dx
}

/// Averages `fine[offset .. offset + factor·n]` over consecutive blocks of
/// `factor` cells.
pub fn coarsen(fine: &[f64], offset: usize, factor: usize, n: usize) -> Vec<f64> {
    (0..n)
        .map(|c| {
            let s = offset + c * factor;
            fine[s..s + factor].iter().sum::<f64>() / factor as f64
        })
        .collect()
}

/// Slow-switching reference averaged onto the comparison grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub rates: [f64; 2],
    pub rho: [Vec<f64>; 2],
    pub diagnostics: FvDiagnostics,
}

/// One row of the kinetic-to-hydrodynamic convergence table.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub epsilon: f64,
    pub l1: [f64; 2],
    pub field: MacroField,
    pub reference: usize,
    pub diagnostics: DsmcDiagnostics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareResult {
    pub rows: Vec<CompareRow>,
    pub references: Vec<Reference>,
}

impl CompareResult {
    /// Whether both lane errors strictly decrease as `ε` decreases.
    pub fn strictly_decreasing(&self) -> bool {
        let mut rows: Vec<&CompareRow> = self.rows.iter().collect();
        rows.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
        rows.windows(2)
            .all(|w| (0..2).all(|l| w[1].l1[l] < w[0].l1[l]))
    }
}

/// Switching rates seen by the particles when `β = c ε`.
fn kinetic_rates(params: &ModelParams, exp: &ExperimentSpec, eps: f64) -> [f64; 2] {
    let c = params.switching.regime_rates;
    match exp.dsmc.switching_scaling {
        SwitchingScaling::Hyperbolic => c,
        SwitchingScaling::Unscaled => [c[0] * eps, c[1] * eps],
    }
}

/// Slow-switching reference on a grid `reference_nx / nx` times finer than
/// the comparison grid, padded by a quarter of the domain on each side so
/// that the empty road beyond the ends supplies no inflow (particles only
/// leave the domain).
pub fn slow_reference(
    params: &ModelParams,
    exp: &ExperimentSpec,
    rates: [f64; 2],
) -> Result<Reference> {
    let d = &exp.discretization;
    let fine = exp.hydro.reference_nx;
    if !fine.is_multiple_of(d.nx) {
        return Err(Error::Experiment(format!(
            "hydro.reference_nx = {fine} must be a multiple of nx = {}",
            d.nx
        )));
    }
    let dx = (d.domain[1] - d.domain[0]) / fine as f64;
    let pad = fine / 4;
    let grid = Grid::new(
        [d.domain[0] - pad as f64 * dx, d.domain[1] + pad as f64 * dx],
        fine + 2 * pad,
    );
    let mut p = params.clone();
    p.switching.regime_rates = rates;
    let mut e = exp.clone();
    e.snapshots.clear();
    let run = hydro_on_grid(&p, &e, HydroRegime::Slow, grid)?;
    let last = run.snapshots.last().expect("final snapshot");
    let factor = fine / d.nx;
    Ok(Reference {
        rates,
        rho: [0, 1].map(|l| coarsen(&last.u[l], pad, factor, d.nx)),
        diagnostics: run.diagnostics,
    })
}

/// For each `ε`, runs the particle solver with `β = c ε` (`c` from
/// `switching.regime_rates`) and `Δt = ε` unless a step is configured, and
/// measures the per-lane `L¹` distance to the slow-switching reference at the
/// final time on the particle grid.
pub fn compare(
    params: &ModelParams,
    exp: &ExperimentSpec,
    exec: Execution,
) -> Result<CompareResult> {
    if params.switching.velocity_coupling.is_some() {
        return Err(Error::Experiment(
            "compare has no hydrodynamic reference for velocity-coupled switching".into(),
        ));
    }
    let d = &exp.discretization;
    let grid = Grid::new(d.domain, d.nx);
    let mut references: Vec<Reference> = Vec::new();
    let mut rows = Vec::new();
    for &eps in &exp.epsilons {
        let rates = kinetic_rates(params, exp, eps);
        let reference = match references.iter().position(|r| r.rates == rates) {
            Some(k) => k,
            None => {
                references.push(slow_reference(params, exp, rates)?);
                references.len() - 1
            }
        };
        let mut p = params.clone();
        let c = params.switching.regime_rates;
        p.switching.beta = [c[0] * eps, c[1] * eps];
        let mut e = exp.clone();
        e.epsilon = Some(eps);
        e.snapshots.clear();
        let run = run_dsmc(&e, &p, eps, exec)?;
        let field = run.final_field().clone();
        let refr = &references[reference];
        let l1 = [0, 1].map(|l| l1_distance(&field.rho[l], &refr.rho[l], grid.dx()));
        rows.push(CompareRow {
            epsilon: eps,
            l1,
            field,
            reference,
            diagnostics: run.diagnostics,
        });
    }
    Ok(CompareResult { rows, references })
}

fn time_tag(t: f64) -> String {
    format!("t{t}")
}

fn kappa_tag(k: Penalization) -> String {
    if k.is_uncontrolled() {
        "kappa_inf".into()
    } else {
        format!("kappa_{}", k.0)
    }
}

#[derive(Serialize)]
struct HydroMetadata<'a> {
    regime: HydroRegime,
    order: u8,
    cfl: f64,
    nx: usize,
    domain: [f64; 2],
    mass_initial: f64,
    mass_final: f64,
    diagnostics: &'a FvDiagnostics,
}

#[derive(Serialize)]
struct CompareMetadata<'a> {
    epsilons: Vec<f64>,
    reference_rates: Vec<[f64; 2]>,
    reference_diagnostics: Vec<&'a FvDiagnostics>,
    dsmc: Vec<&'a DsmcDiagnostics>,
}

/// Runs the experiment of `doc` and writes its files into `out_dir`, which
/// must exist.
pub fn execute(doc: &ConfigDocument, out_dir: &Path, exec: Execution) -> Result<RunReport> {
    let (params, exp) = (&doc.model, &doc.experiment);
    let mut report = RunReport::default();
    let started = Instant::now();
    let path = |name: String| out_dir.join(name);
    match exp.kind {
        ExperimentKind::Homogeneous => {
            let res = homogeneous_trajectory(params, exp)?;
            report.time("integrate", started);
            report.steps = res.steps;
            report.checks.push(Check::new(
                "mass_conservation",
                res.mass_drift <= MASS_TOLERANCE,
                format!("max |rho1 + rho2 - initial| = {:e}", res.mass_drift),
            ));
            let file = path("trajectory.csv".into());
            output::write_trajectory(&file, &res.states, res.asymptotes)?;
            report.outputs.push(file);
        }
        ExperimentKind::Diagram => {
            let res = diagram(params, exp)?;
            report.time("diagram", started);
            if let Some(dev) = res.ode_deviation {
                report.checks.push(Check::new(
                    "density_split_vs_ode",
                    dev <= SPLIT_TOLERANCE,
                    format!("max deviation {dev:e}"),
                ));
            }
            for fam in &res.families {
                let file = path(format!("diagram_{}.csv", kappa_tag(fam.kappa)));
                output::write_diagram(&file, &fam.rows)?;
                report.outputs.push(file);
            }
        }
        ExperimentKind::Dsmc => {
            let run = dsmc(params, exp, exec)?;
            report.time("dsmc", started);
            let d = &run.diagnostics;
            report.steps = d.steps;
            report.checks.push(Check::new(
                "particle_accounting",
                d.particles_final as u64 + d.outflow == d.particles_initial as u64,
                format!(
                    "initial {} = final {} + outflow {}",
                    d.particles_initial, d.particles_final, d.outflow
                ),
            ));
            for snap in &run.snapshots {
                let file = path(format!("dsmc_{}.csv", time_tag(snap.t)));
                output::write_snapshot(&file, &snap.field)?;
                report.outputs.push(file);
                let phase = path(format!("dsmc_phase_{}.csv", time_tag(snap.t)));
                if output::write_phase(&phase, &snap.field)? {
                    report.outputs.push(phase);
                }
            }
            let file = path("dsmc_diagnostics.json".into());
            output::write_json(&file, d)?;
            report.outputs.push(file);
        }
        ExperimentKind::Hydro => {
            let run = hydro(params, exp)?;
            report.time("hydro", started);
            report.steps = run.diagnostics.steps;
            let first = run.snapshots.first().expect("snapshot");
            let d = &exp.discretization;
            let mass0 = HydroState {
                grid: first.grid,
                t: 0.0,
                u: match run.regime {
                    HydroRegime::Fast => {
                        let l = initial_cell_averages(&exp.initial_condition, first.grid);
                        vec![l[0].iter().zip(&l[1]).map(|(a, b)| a + b).collect()]
                    }
                    _ => initial_cell_averages(&exp.initial_condition, first.grid).to_vec(),
                },
            }
            .total_mass();
            report.checks.push(Check::new(
                "upper_bound",
                run.diagnostics.bound_violations == 0,
                format!(
                    "{} values above the admissible maximum",
                    run.diagnostics.bound_violations
                ),
            ));
            for s in &run.snapshots {
                let file = path(format!("hydro_{}.csv", time_tag(s.t)));
                output::write_hydro(&file, s, run.table.as_ref())?;
                report.outputs.push(file);
            }
            let meta = HydroMetadata {
                regime: run.regime,
                order: run.scheme.order,
                cfl: run.scheme.cfl,
                nx: d.nx,
                domain: d.domain,
                mass_initial: mass0,
                mass_final: run.snapshots.last().expect("snapshot").total_mass(),
                diagnostics: &run.diagnostics,
            };
            let file = path("hydro_metadata.json".into());
            output::write_json(&file, &meta)?;
            report.outputs.push(file);
        }
        ExperimentKind::Compare => {
            let res = compare(params, exp, exec)?;
            report.time("compare", started);
            if res.rows.len() > 1 {
                report.checks.push(Check::new(
                    "l1_strictly_decreasing",
                    res.strictly_decreasing(),
                    res.rows
                        .iter()
                        .map(|r| format!("eps {}: {:.4e} / {:.4e}", r.epsilon, r.l1[0], r.l1[1]))
                        .collect::<Vec<_>>()
                        .join("; "),
                ));
            }
            let table: Vec<(f64, [f64; 2])> = res.rows.iter().map(|r| (r.epsilon, r.l1)).collect();
            let file = path("compare.csv".into());
            output::write_compare(&file, &table)?;
            report.outputs.push(file);
            for row in &res.rows {
                let file = path(format!("compare_dsmc_eps{}.csv", row.epsilon));
                output::write_snapshot(&file, &row.field)?;
                report.outputs.push(file);
            }
            let grid = Grid::new(exp.discretization.domain, exp.discretization.nx);
            for (k, r) in res.references.iter().enumerate() {
                let file = path(format!("compare_reference_{k}.csv"));
                let state = HydroState {
                    grid,
                    t: exp.final_time,
                    u: r.rho.to_vec(),
                };
                output::write_hydro(&file, &state, None)?;
                report.outputs.push(file);
            }
            let meta = CompareMetadata {
                epsilons: exp.epsilons.clone(),
                reference_rates: res.references.iter().map(|r| r.rates).collect(),
                reference_diagnostics: res.references.iter().map(|r| &r.diagnostics).collect(),
                dsmc: res.rows.iter().map(|r| &r.diagnostics).collect(),
            };
            let file = path("compare_metadata.json".into());
            output::write_json(&file, &meta)?;
            report.outputs.push(file);
        }
    }
    report.time("total", started);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ModelParams {
        serde_json::from_str(
            r#"{ "gamma": 0.05, "mu": 2,
                 "control": { "p": 0.05, "kappa": [0.01, 0.01], "recommended_speed": ["linear", "linear"] },
                 "switching": { "beta": [0.1, 0.2], "alpha": 1, "regime_rates": [2, 2] } }"#,
        )
        .unwrap()
    }

    #[test]
    fn coarsen_and_l1() {
        let fine = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        assert_eq!(coarsen(&fine, 2, 2, 3), vec![2.5, 4.5, 6.5]);
        assert_eq!(l1_distance(&[1.0, 2.0], &[1.5, 1.0], 0.5), 0.75);
        assert_eq!(l1_distance(&[0.3, 0.7], &[0.3, 0.7], 0.1), 0.0);
    }

    #[test]
    fn cell_averages_of_boxes_are_exact() {
        let grid = Grid::new([-2.0, 2.0], 21);
        let rho = initial_cell_averages(&InitialCondition::default(), grid);
        let dx = grid.dx();
        assert!((rho[0].iter().sum::<f64>() * dx - 1.0).abs() < 1e-14);
        assert!((rho[1].iter().sum::<f64>() * dx - 1.0).abs() < 1e-14);
        assert!((rho[1][0] - 1.0).abs() < 1e-14);
        assert_eq!(rho[0][20], 0.0);
    }

    #[test]
    fn homogeneous_keeps_first_and_last_states() {
        let mut e = ExperimentSpec {
            final_time: 1.0,
            ..Default::default()
        };
        e.homogeneous.dt = 0.01;
        e.homogeneous.sample_every = 30;
        e.homogeneous.asymptotes = true;
        let res = homogeneous_trajectory(&params(), &e).unwrap();
        let ts: Vec<f64> = res.states.iter().map(|s| s.t).collect();
        assert_eq!(ts.len(), 5);
        assert_eq!(ts[0], 0.0);
        assert!((ts[4] - 1.0).abs() < 1e-12);
        assert_eq!(res.steps, 100);
        assert!(res.mass_drift < 1e-12);
        assert!(res.asymptotes.is_some());
    }

    #[test]
    fn diagram_split_matches_ode() {
        let mut e = ExperimentSpec::default();
        e.diagram.points = 11;
        let res = diagram(&params(), &e).unwrap();
        assert_eq!(res.families.len(), 2);
        assert!(res.ode_deviation.unwrap() < SPLIT_TOLERANCE);
        assert_eq!(res.families[0].rows[0].flux, [0.0, 0.0]);
    }

    #[test]
    fn reference_grid_must_nest() {
        let mut e = ExperimentSpec::default();
        e.hydro.reference_nx = 100;
        assert!(slow_reference(&params(), &e, [1.0, 1.0]).is_err());
    }
}
