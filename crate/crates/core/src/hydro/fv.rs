//! Finite-volume solver: global Lax–Friedrichs flux splitting, component-wise
//! reconstruction of the split fluxes and SSP Runge–Kutta time stepping.

use serde::Serialize;

use super::FluxModel;
use crate::error::HydroError;
use crate::grid::Grid;

/// Ghost cells per side.
const GHOSTS: usize = 3;
/// Flux samples used to estimate `max|f′|`.
const LAMBDA_SAMPLES: usize = 2001;
const WENO_EPS: f64 = 1e-6;
/// Negative values smaller than this are rounding noise and not counted.
const ROUNDOFF: f64 = 1e-14;

/// Spatial order (1, 2 or 5), CFL number and an optional fixed time step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FvScheme {
    pub order: u8,
    pub cfl: f64,
    pub fixed_dt: Option<f64>,
}

impl FvScheme {
    pub fn new(order: u8, cfl: f64) -> Self {
        Self {
            order,
            cfl,
            fixed_dt: None,
        }
    }
}

/// Cell averages of each component on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct HydroState {
    pub grid: Grid,
    pub t: f64,
    /// `u[component][cell]`.
    pub u: Vec<Vec<f64>>,
}

impl HydroState {
    /// Cell averages of `f(component, x)` by five-point Gauss–Legendre
    /// quadrature on each cell.
    pub fn from_fn(grid: Grid, components: usize, f: impl Fn(usize, f64) -> f64) -> Self {
        const NODES: [f64; 5] = [
            -0.906_179_845_938_664,
            -0.538_469_310_105_683,
            0.0,
            0.538_469_310_105_683,
            0.906_179_845_938_664,
        ];
        const WEIGHTS: [f64; 5] = [
            0.236_926_885_056_189,
            0.478_628_670_499_366,
            0.568_888_888_888_889,
            0.478_628_670_499_366,
            0.236_926_885_056_189,
        ];
        let dx = grid.dx();
        let u = (0..components)
            .map(|k| {
                grid.centers()
                    .into_iter()
                    .map(|c| {
                        NODES
                            .iter()
                            .zip(WEIGHTS)
                            .map(|(&s, w)| w * f(k, c + 0.5 * dx * s))
                            .sum::<f64>()
                            / 2.0
                    })
                    .collect()
            })
            .collect();
        Self { grid, t: 0.0, u }
    }

    /// Point values of `f(component, x)` at cell centres. The flux-split
    /// WENO update is fifth-order accurate for these; cell averages limit
    /// smooth solutions to second order but keep piecewise-constant data
    /// exact in mass.
    pub fn from_points(grid: Grid, components: usize, f: impl Fn(usize, f64) -> f64) -> Self {
        let centers = grid.centers();
        let u = (0..components)
            .map(|k| centers.iter().map(|&c| f(k, c)).collect())
            .collect();
        Self { grid, t: 0.0, u }
    }

    pub fn mass(&self, component: usize) -> f64 {
        self.u[component].iter().sum::<f64>() * self.grid.dx()
    }

    pub fn total_mass(&self) -> f64 {
        (0..self.u.len()).map(|k| self.mass(k)).sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FvDiagnostics {
    pub steps: u64,
    /// Estimated `max|f′|` at every step.
    pub lambda_max: Vec<f64>,
    /// Negative values below `−1e−14` reset to zero after a step.
    pub positivity_floors: u64,
    /// Values above the admissible maximum by more than `1e−10`.
    pub bound_violations: u64,
}

impl FvDiagnostics {
    pub fn absorb(&mut self, other: FvDiagnostics) {
        self.steps += other.steps;
        self.lambda_max.extend(other.lambda_max);
        self.positivity_floors += other.positivity_floors;
        self.bound_violations += other.bound_violations;
    }
}

/// `max|f′|` of each component from finite differences of the flux on a
/// dense grid over the current data range.
fn lambda_max(model: &FluxModel, state: &HydroState) -> Vec<f64> {
    let top = model.max_value();
    (0..model.components())
        .map(|k| {
            let u = &state.u[k];
            let lo = u
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min)
                .clamp(0.0, top);
            let hi = u
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max)
                .clamp(0.0, top);
            let (lo, hi) = if hi - lo < 1e-6 {
                ((lo - 1e-6).max(0.0), (hi + 1e-6).min(top))
            } else {
                (lo, hi)
            };
            let h = (hi - lo) / (LAMBDA_SAMPLES - 1) as f64;
            let f: Vec<f64> = (0..LAMBDA_SAMPLES)
                .map(|j| model.flux(k, lo + j as f64 * h))
                .collect();
            let last = LAMBDA_SAMPLES - 1;
            // Second-order differences: one-sided at the ends, central inside.
            let mut best = ((-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h))
                .abs()
                .max(((3.0 * f[last] - 4.0 * f[last - 1] + f[last - 2]) / (2.0 * h)).abs());
            for j in 1..last {
                best = best.max(((f[j + 1] - f[j - 1]) / (2.0 * h)).abs());
            }
            best
        })
        .collect()
}

#[inline]
fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

/// Fifth-order WENO value at the right edge of the centre cell `c`, using
/// the upwind-biased stencil `(a, b, c, d, e)`.
#[inline]
fn weno5(a: f64, b: f64, c: f64, d: f64, e: f64) -> f64 {
    let q0 = (2.0 * a - 7.0 * b + 11.0 * c) / 6.0;
    let q1 = (-b + 5.0 * c + 2.0 * d) / 6.0;
    let q2 = (2.0 * c + 5.0 * d - e) / 6.0;
    let s0 = 13.0 / 12.0 * (a - 2.0 * b + c).powi(2) + 0.25 * (a - 4.0 * b + 3.0 * c).powi(2);
    let s1 = 13.0 / 12.0 * (b - 2.0 * c + d).powi(2) + 0.25 * (b - d).powi(2);
    let s2 = 13.0 / 12.0 * (c - 2.0 * d + e).powi(2) + 0.25 * (3.0 * c - 4.0 * d + e).powi(2);
    let w0 = 0.1 / (WENO_EPS + s0).powi(2);
    let w1 = 0.6 / (WENO_EPS + s1).powi(2);
    let w2 = 0.3 / (WENO_EPS + s2).powi(2);
    (w0 * q0 + w1 * q1 + w2 * q2) / (w0 + w1 + w2)
}

struct Workspace {
    ghosted: Vec<f64>,
    fp: Vec<f64>,
    fm: Vec<f64>,
    interface: Vec<f64>,
    low: Vec<f64>,
    /// Admissible correction factors per cell for its left and right face.
    theta: Vec<[f64; 2]>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self {
            ghosted: vec![0.0; n + 2 * GHOSTS],
            fp: vec![0.0; n + 2 * GHOSTS],
            fm: vec![0.0; n + 2 * GHOSTS],
            interface: vec![0.0; n + 1],
            low: vec![0.0; n + 1],
            theta: vec![[1.0; 2]; n],
        }
    }
}

/// Largest fractions `[left, right]` of the high-minus-low flux corrections
/// `d_left`, `d_right` of one cell that keep its forward-Euler update inside
/// `[0, top]`, given the first-order update `first` (already in range).
#[inline]
fn correction_factors(first: f64, d_left: f64, d_right: f64, ratio: f64, top: f64) -> [f64; 2] {
    let mut theta = [1.0_f64; 2];
    let fall = ratio * (d_right.max(0.0) - d_left.min(0.0));
    if fall > first.max(0.0) {
        let s = first.max(0.0) / fall;
        if d_left < 0.0 {
            theta[0] = s;
        }
        if d_right > 0.0 {
            theta[1] = s;
        }
    }
    let room = (top - first).max(0.0);
    let rise = ratio * (d_left.max(0.0) - d_right.min(0.0));
    if rise > room {
        let s = room / rise;
        if d_left > 0.0 {
            theta[0] = theta[0].min(s);
        }
        if d_right < 0.0 {
            theta[1] = theta[1].min(s);
        }
    }
    theta
}

/// Semi-discrete right-hand side `−(F_{i+½} − F_{i−½})/Δx + S(uᵢ)`.
///
/// With `ratio = Δt/Δx`, the high-order corrections to the first-order
/// fluxes are scaled down where a forward-Euler stage would otherwise leave
/// `[0, top]`. The first-order stage stays in range under `CFL ≤ 1/2` and
/// `Δt · source rate ≤ 1/2`, so the scaled update does too.
#[allow(clippy::too_many_arguments)]
fn rhs(
    model: &FluxModel,
    u: &[Vec<f64>],
    alpha: &[f64],
    order: u8,
    dx: f64,
    ratio: f64,
    ws: &mut Workspace,
    out: &mut [Vec<f64>],
) {
    let n = u[0].len();
    for o in out.iter_mut() {
        o.fill(0.0);
    }
    if model.has_source() {
        for i in 0..n {
            let s = model.source([u[0][i], u[1][i]]);
            out[0][i] = s[0];
            out[1][i] = s[1];
        }
    }
    let dt = ratio * dx;
    let top = model.max_value();
    for (k, uk) in u.iter().enumerate() {
        let g = &mut ws.ghosted;
        g[GHOSTS..GHOSTS + n].copy_from_slice(uk);
        for j in 0..GHOSTS {
            g[j] = uk[0];
            g[GHOSTS + n + j] = uk[n - 1];
        }
        for ((&v, p), m) in g.iter().zip(ws.fp.iter_mut()).zip(ws.fm.iter_mut()) {
            let f = model.flux(k, v);
            *p = 0.5 * (f + alpha[k] * v);
            *m = 0.5 * (f - alpha[k] * v);
        }
        let (fp, fm) = (&ws.fp, &ws.fm);
        for i in 0..=n {
            // Interface between ghosted cells l and r = l + 1.
            let l = GHOSTS + i - 1;
            let r = l + 1;
            ws.low[i] = fp[l] + fm[r];
            ws.interface[i] = match order {
                1 => ws.low[i],
                2 => {
                    let plus = fp[l] + 0.5 * minmod(fp[l] - fp[l - 1], fp[r] - fp[l]);
                    let minus = fm[r] - 0.5 * minmod(fm[r] - fm[l], fm[r + 1] - fm[r]);
                    plus + minus
                }
                _ => {
                    weno5(fp[l - 2], fp[l - 1], fp[l], fp[r], fp[r + 1])
                        + weno5(fm[r + 2], fm[r + 1], fm[r], fm[l], fm[l - 1])
                }
            };
        }
        if order != 1 {
            for i in 0..n {
                let first = uk[i] + dt * out[k][i] - ratio * (ws.low[i + 1] - ws.low[i]);
                let d_left = ws.interface[i] - ws.low[i];
                let d_right = ws.interface[i + 1] - ws.low[i + 1];
                ws.theta[i] = correction_factors(first, d_left, d_right, ratio, top);
            }
            for i in 0..=n {
                let mut theta = 1.0_f64;
                if i > 0 {
                    theta = theta.min(ws.theta[i - 1][1]);
                }
                if i < n {
                    theta = theta.min(ws.theta[i][0]);
                }
                ws.interface[i] = ws.low[i] + theta * (ws.interface[i] - ws.low[i]);
            }
        }
        for (o, w) in out[k].iter_mut().zip(ws.interface.windows(2)) {
            *o -= (w[1] - w[0]) / dx;
        }
    }
}

fn check_components(state: &HydroState, model: &FluxModel) -> Result<(), HydroError> {
    if state.u.len() == model.components() {
        Ok(())
    } else {
        Err(HydroError::Components {
            expected: model.components(),
            found: state.u.len(),
        })
    }
}

/// One SSP-RK step (RK1, RK2 or RK3 for orders 1, 2 and 5) of size `dt`,
/// checked against the CFL bound. Returns the `max|f′|` used.
pub fn fv_step(
    state: &mut HydroState,
    model: &FluxModel,
    scheme: &FvScheme,
    dt: f64,
    diag: &mut FvDiagnostics,
) -> Result<f64, HydroError> {
    check_components(state, model)?;
    let lambdas = lambda_max(model, state);
    let lambda = lambdas.iter().copied().fold(0.0, f64::max);
    let dx = state.grid.dx();
    let bound = if lambda > 0.0 {
        scheme.cfl * dx / lambda
    } else {
        f64::INFINITY
    };
    if dt > bound * (1.0 + 1e-12) {
        return Err(HydroError::Cfl { dt, bound });
    }
    let n = state.grid.nx;
    let comps = model.components();
    let mut ws = Workspace::new(n);
    let mut k1 = vec![vec![0.0; n]; comps];
    let u0 = state.u.clone();
    rhs(
        model,
        &u0,
        &lambdas,
        scheme.order,
        dx,
        dt / dx,
        &mut ws,
        &mut k1,
    );
    let mut u1: Vec<Vec<f64>> = (0..comps)
        .map(|c| (0..n).map(|i| u0[c][i] + dt * k1[c][i]).collect())
        .collect();
    match scheme.order {
        1 => state.u = u1,
        2 => {
            rhs(
                model,
                &u1,
                &lambdas,
                scheme.order,
                dx,
                dt / dx,
                &mut ws,
                &mut k1,
            );
            for c in 0..comps {
                for i in 0..n {
                    state.u[c][i] = 0.5 * u0[c][i] + 0.5 * (u1[c][i] + dt * k1[c][i]);
                }
            }
        }
        _ => {
            rhs(
                model,
                &u1,
                &lambdas,
                scheme.order,
                dx,
                dt / dx,
                &mut ws,
                &mut k1,
            );
            for c in 0..comps {
                for i in 0..n {
                    u1[c][i] = 0.75 * u0[c][i] + 0.25 * (u1[c][i] + dt * k1[c][i]);
                }
            }
            rhs(
                model,
                &u1,
                &lambdas,
                scheme.order,
                dx,
                dt / dx,
                &mut ws,
                &mut k1,
            );
            for c in 0..comps {
                for i in 0..n {
                    state.u[c][i] = u0[c][i] / 3.0 + 2.0 / 3.0 * (u1[c][i] + dt * k1[c][i]);
                }
            }
        }
    }
    state.t += dt;
    let top = model.max_value();
    for c in 0..comps {
        for (i, v) in state.u[c].iter_mut().enumerate() {
            if !v.is_finite() {
                return Err(HydroError::NotFinite {
                    cell: i,
                    t: state.t,
                });
            }
            if *v < 0.0 {
                if *v < -ROUNDOFF {
                    diag.positivity_floors += 1;
                }
                *v = 0.0;
            } else if *v > top + 1e-10 {
                diag.bound_violations += 1;
            }
        }
    }
    diag.steps += 1;
    diag.lambda_max.push(lambda);
    Ok(lambda)
}

/// One step of the slow-switching balance laws.
pub fn slow_switching_step(
    state: &mut HydroState,
    model: &FluxModel,
    scheme: &FvScheme,
    dt: f64,
    diag: &mut FvDiagnostics,
) -> Result<f64, HydroError> {
    debug_assert!(matches!(model, FluxModel::Slow { .. }));
    fv_step(state, model, scheme, dt, diag)
}

/// Advances `state` to time `until` with CFL-limited steps (or the fixed
/// step of the scheme, truncated to land on `until`).
pub fn fv_advance(
    state: &mut HydroState,
    model: &FluxModel,
    scheme: &FvScheme,
    until: f64,
) -> Result<FvDiagnostics, HydroError> {
    check_components(state, model)?;
    let mut diag = FvDiagnostics::default();
    let dx = state.grid.dx();
    let tol = 1e-12 * until.abs().max(1.0);
    while state.t < until - tol {
        let dt = match scheme.fixed_dt {
            Some(dt) => dt,
            None => {
                let lambda = lambda_max(model, state).into_iter().fold(0.0, f64::max);
                let mut dt = if lambda > 0.0 {
                    scheme.cfl * dx / lambda
                } else {
                    f64::INFINITY
                };
                if model.has_source() {
                    dt = dt.min(0.5 / model.source_rate());
                }
                dt
            }
        };
        let dt = dt.min(until - state.t);
        fv_step(state, model, scheme, dt, &mut diag)?;
    }
    state.t = state.t.max(until);
    Ok(diag)
}
