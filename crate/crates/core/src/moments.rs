//! Space-homogeneous moment dynamics of the two-lane system.
//!
//! Densities obey a switching ODE; mean speeds and energies follow from the
//! weak form of the collision operator. The scaled system is written in the
//! quasi-invariant time `τ = t/γ` with `β → βγ` and `ν = κγ`, so the rates
//! stored in [`SwitchingSpec::beta`] are read as `τ`-rates there and as
//! `t`-rates in the general system.

use serde::Serialize;

use crate::config::{ModelParams, MomentSystem, SwitchingSpec};
use crate::error::ModelError;
use crate::micro::accel_prob;

/// Densities are clamped into `[CLAMP, 1 − CLAMP]` before evaluating the
/// asymptotic coefficients, which keeps `Cᵢ` finite.
pub const CLAMP: f64 = 1e-12;

/// Tolerance for the integrator's state check.
pub const STATE_TOLERANCE: f64 = 1e-9;

/// Threshold on `|A₁A₂C₁C₂ − 1|` below which the system is singular.
pub const SINGULAR_TOLERANCE: f64 = 1e-14;

/// Homogeneous moments of both lanes at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LaneMomentState {
    /// Time in the units of `system` (`t` for general, `τ` for scaled).
    pub t: f64,
    pub rho: [f64; 2],
    pub m: [f64; 2],
    pub e: [f64; 2],
    pub system: MomentSystem,
}

impl LaneMomentState {
    pub fn new(rho: [f64; 2], m: [f64; 2], e: [f64; 2], system: MomentSystem) -> Self {
        Self {
            t: 0.0,
            rho,
            m,
            e,
            system,
        }
    }

    fn check(&self) -> Result<(), ModelError> {
        for i in 0..2 {
            check_unit("rho", self.rho[i])?;
            check_unit("m", self.m[i])?;
            check_unit("E", self.e[i])?;
        }
        Ok(())
    }
}

fn check_unit(name: &'static str, value: f64) -> Result<(), ModelError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(ModelError::Domain { name, value })
    }
}

/// `Q(ρ) = P + (1−P)²`.
#[inline]
fn q_of(p: f64) -> f64 {
    p + (1.0 - p) * (1.0 - p)
}

/// Per-capita switching rates `(β₁(1−ρ₂)^α, β₂(1−ρ₁)^α)`.
#[inline]
fn switch_rates(rho: [f64; 2], sw: &SwitchingSpec) -> [f64; 2] {
    [
        sw.beta[0] * (1.0 - rho[1]).powf(sw.alpha),
        sw.beta[1] * (1.0 - rho[0]).powf(sw.alpha),
    ]
}

/// Exchange term for a lane-wise density of some quantity `x` (e.g. `ρm`).
#[inline]
fn exchange(rho: [f64; 2], x: [f64; 2], sw: &SwitchingSpec) -> [f64; 2] {
    let r = switch_rates(rho, sw);
    let net = -r[0] * x[0] + r[1] * x[1];
    [net, -net]
}

/// Right-hand side of the density system in its general form.
pub fn density_rhs(
    rho1: f64,
    rho2: f64,
    switching: &SwitchingSpec,
) -> Result<[f64; 2], ModelError> {
    check_unit("rho1", rho1)?;
    check_unit("rho2", rho2)?;
    Ok(exchange([rho1, rho2], [rho1, rho2], switching))
}

/// Collision part of `d(ρm)/dτ` in terms of `q = ρm`, so that an empty lane
/// contributes exactly zero.
#[inline]
fn speed_collision_scaled(rho: f64, q: f64, params: &ModelParams, lane: usize) -> f64 {
    let p = accel_prob(rho, params.mu);
    let ps = params.pstar(lane);
    let vbar = params.vbar(lane, rho);
    0.5 * rho * (p * rho - q_of(p) * q + ps * (vbar * rho - q))
}

/// Collision part of `d(ρm)/dt` in the general system.
#[inline]
fn speed_collision_general(rho: f64, q: f64, params: &ModelParams, lane: usize) -> f64 {
    let g = params.gamma;
    let p_pen = params.control.p;
    let nu = params.nu(lane);
    let (w_int, w_ctl) = if nu.is_infinite() {
        (1.0, 0.0)
    } else {
        let d = nu + g * g;
        ((nu + (1.0 - p_pen) * g * g) / d, g * p_pen / d)
    };
    let p = accel_prob(rho, params.mu);
    let vbar = params.vbar(lane, rho);
    0.5 * g * rho * (w_int * (p * rho - q_of(p) * q) + w_ctl * (vbar * rho - q))
}

/// Collision part of `d(ρE)/dτ` in terms of `q = ρm`, `e = ρE`.
#[inline]
fn energy_collision_scaled(rho: f64, q: f64, e: f64, params: &ModelParams, lane: usize) -> f64 {
    let p = accel_prob(rho, params.mu);
    let ps = params.pstar(lane);
    let vbar = params.vbar(lane, rho);
    p * rho * (q - e) + (1.0 - p) * (1.0 - p) * (q * q - e * e) + ps * rho * (vbar * q - e)
}

/// `d(ρᵢmᵢ)/dt` of the general (unscaled) system.
pub fn mean_speed_rhs_general(
    state: &LaneMomentState,
    params: &ModelParams,
) -> Result<[f64; 2], ModelError> {
    state.check()?;
    let q = [state.rho[0] * state.m[0], state.rho[1] * state.m[1]];
    let x = exchange(state.rho, q, &params.switching);
    Ok([
        speed_collision_general(state.rho[0], q[0], params, 0) + x[0],
        speed_collision_general(state.rho[1], q[1], params, 1) + x[1],
    ])
}

/// `d(ρᵢmᵢ)/dτ` of the scaled system.
pub fn mean_speed_rhs_scaled(
    state: &LaneMomentState,
    params: &ModelParams,
) -> Result<[f64; 2], ModelError> {
    state.check()?;
    let q = [state.rho[0] * state.m[0], state.rho[1] * state.m[1]];
    let x = exchange(state.rho, q, &params.switching);
    Ok([
        speed_collision_scaled(state.rho[0], q[0], params, 0) + x[0],
        speed_collision_scaled(state.rho[1], q[1], params, 1) + x[1],
    ])
}

/// `d(ρᵢEᵢ)/dτ` of the scaled system without diffusion.
pub fn energy_rhs_scaled(
    state: &LaneMomentState,
    params: &ModelParams,
) -> Result<[f64; 2], ModelError> {
    state.check()?;
    let q = [state.rho[0] * state.m[0], state.rho[1] * state.m[1]];
    let e = [state.rho[0] * state.e[0], state.rho[1] * state.e[1]];
    let x = exchange(state.rho, e, &params.switching);
    Ok([
        energy_collision_scaled(state.rho[0], q[0], e[0], params, 0) + x[0],
        energy_collision_scaled(state.rho[1], q[1], e[1], params, 1) + x[1],
    ])
}

/// Conserved-form state `(ρ₁, ρ₂, ρ₁m₁, ρ₂m₂, ρ₁E₁, ρ₂E₂)`.
type Vector = [f64; 6];

fn full_rhs(u: &Vector, params: &ModelParams, system: MomentSystem) -> Vector {
    let rho = [u[0], u[1]];
    let q = [u[2], u[3]];
    let e = [u[4], u[5]];
    let sw = &params.switching;
    let dr = exchange(rho, rho, sw);
    let dq = exchange(rho, q, sw);
    let de = exchange(rho, e, sw);
    let scale = match system {
        MomentSystem::Scaled => 1.0,
        MomentSystem::General => params.gamma,
    };
    let mut out = [dr[0], dr[1], dq[0], dq[1], de[0], de[1]];
    for i in 0..2 {
        out[2 + i] += match system {
            MomentSystem::Scaled => speed_collision_scaled(rho[i], q[i], params, i),
            MomentSystem::General => speed_collision_general(rho[i], q[i], params, i),
        };
        out[4 + i] += scale * energy_collision_scaled(rho[i], q[i], e[i], params, i);
    }
    out
}

fn to_vector(s: &LaneMomentState) -> Vector {
    [
        s.rho[0],
        s.rho[1],
        s.rho[0] * s.m[0],
        s.rho[1] * s.m[1],
        s.rho[0] * s.e[0],
        s.rho[1] * s.e[1],
    ]
}

fn from_vector(
    u: &Vector,
    t: f64,
    system: MomentSystem,
    prev: &LaneMomentState,
) -> LaneMomentState {
    let ratio = |x: f64, r: f64, old: f64| if r > 0.0 { x / r } else { old };
    LaneMomentState {
        t,
        rho: [u[0], u[1]],
        m: [ratio(u[2], u[0], prev.m[0]), ratio(u[3], u[1], prev.m[1])],
        e: [ratio(u[4], u[0], prev.e[0]), ratio(u[5], u[1], prev.e[1])],
        system,
    }
}

fn rk4_step(u: &Vector, dt: f64, params: &ModelParams, system: MomentSystem) -> Vector {
    let add = |a: &Vector, b: &Vector, h: f64| {
        let mut out = *a;
        for k in 0..6 {
            out[k] += h * b[k];
        }
        out
    };
    let k1 = full_rhs(u, params, system);
    let k2 = full_rhs(&add(u, &k1, 0.5 * dt), params, system);
    let k3 = full_rhs(&add(u, &k2, 0.5 * dt), params, system);
    let k4 = full_rhs(&add(u, &k3, dt), params, system);
    let mut out = *u;
    for k in 0..6 {
        out[k] += dt / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
    }
    out
}

/// Fixed-step RK4 integration that hands every state, including the
/// initial one, to `visit`. The state's `system` selects the equations.
///
/// Densities and mean speeds must stay in `[0,1]` up to
/// [`STATE_TOLERANCE`]; energies are not checked because their equation is
/// integrated as written and is only asserted to stay in `[0,1]` by callers.
pub fn integrate_moments_with<F: FnMut(&LaneMomentState)>(
    state0: &LaneMomentState,
    params: &ModelParams,
    final_time: f64,
    dt: f64,
    mut visit: F,
) -> Result<LaneMomentState, ModelError> {
    assert!(dt > 0.0 && final_time >= 0.0, "need dt > 0 and T >= 0");
    state0.check()?;
    let system = state0.system;
    let steps = (final_time / dt).round() as usize;
    let mut u = to_vector(state0);
    let mut state = *state0;
    visit(&state);
    for k in 1..=steps {
        u = rk4_step(&u, dt, params, system);
        let t = state0.t + k as f64 * dt;
        state = from_vector(&u, t, system, &state);
        let bad = |x: f64| !(-STATE_TOLERANCE..=1.0 + STATE_TOLERANCE).contains(&x);
        if state.rho.iter().chain(state.m.iter()).any(|&x| bad(x)) {
            return Err(ModelError::StateLeftDomain {
                t,
                rho: state.rho,
                m: state.m,
            });
        }
        visit(&state);
    }
    Ok(state)
}

/// Fixed-step RK4 integration returning every step.
pub fn integrate_moments(
    state0: &LaneMomentState,
    params: &ModelParams,
    final_time: f64,
    dt: f64,
) -> Result<Vec<LaneMomentState>, ModelError> {
    let mut out = Vec::with_capacity((final_time / dt) as usize + 2);
    integrate_moments_with(state0, params, final_time, dt, |s| out.push(*s))?;
    Ok(out)
}

/// Coefficients of the stationary mean-speed system
/// `Bᵢ − Aᵢmᵢ + mⱼ/Cᵢ = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymptoticCoefficients {
    pub a: [f64; 2],
    pub b: [f64; 2],
    /// `Cᵢ`, infinite when the opposite lane never switches into lane `i`.
    pub c: [f64; 2],
}

impl AsymptoticCoefficients {
    pub fn new(rho1: f64, rho2: f64, params: &ModelParams) -> Self {
        let rho = [
            rho1.clamp(CLAMP, 1.0 - CLAMP),
            rho2.clamp(CLAMP, 1.0 - CLAMP),
        ];
        let sw = &params.switching;
        let mut a = [0.0; 2];
        let mut b = [0.0; 2];
        let mut c = [0.0; 2];
        for i in 0..2 {
            let j = 1 - i;
            let p = accel_prob(rho[i], params.mu);
            let ps = params.pstar(i);
            a[i] = q_of(p) + ps + 2.0 * sw.beta[i] / rho[i] * (1.0 - rho[j]).powf(sw.alpha);
            b[i] = p + ps * params.vbar(i, rho[i]);
            let denom = 2.0 * sw.beta[j] * rho[j] * (1.0 - rho[i]).powf(sw.alpha);
            c[i] = if denom == 0.0 {
                f64::INFINITY
            } else {
                rho[i] * rho[i] / denom
            };
        }
        Self { a, b, c }
    }

    /// `1/Cᵢ`, exactly zero when `Cᵢ` is infinite.
    pub fn inv_c(&self) -> [f64; 2] {
        [1.0 / self.c[0], 1.0 / self.c[1]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AsymptoticMethod {
    #[default]
    ClosedForm,
    LinearSolve,
}

/// Large-time mean speeds at fixed densities.
pub fn asymptotic_mean_speeds(
    rho1: f64,
    rho2: f64,
    params: &ModelParams,
    method: AsymptoticMethod,
) -> Result<[f64; 2], ModelError> {
    let co = AsymptoticCoefficients::new(rho1, rho2, params);
    match method {
        AsymptoticMethod::ClosedForm => closed_form(&co),
        AsymptoticMethod::LinearSolve => linear_solve(&co),
    }
}

fn closed_form(co: &AsymptoticCoefficients) -> Result<[f64; 2], ModelError> {
    let [a1, a2] = co.a;
    let [b1, b2] = co.b;
    let [c1, c2] = co.c;
    if c1.is_finite() && c2.is_finite() {
        let det = a1 * a2 * c1 * c2 - 1.0;
        if det.abs() < SINGULAR_TOLERANCE {
            return Err(ModelError::Singular { det });
        }
        Ok([
            (a2 * b1 * c1 * c2 + c2 * b2) / det,
            (a1 * b2 * c1 * c2 + c1 * b1) / det,
        ])
    } else {
        // Same expression with numerator and denominator divided by C₁C₂.
        let [i1, i2] = co.inv_c();
        let det = a1 * a2 - i1 * i2;
        if det.abs() < SINGULAR_TOLERANCE {
            return Err(ModelError::Singular { det });
        }
        Ok([(a2 * b1 + i1 * b2) / det, (a1 * b2 + i2 * b1) / det])
    }
}

/// Gaussian elimination with partial pivoting on
/// `[A₁ −1/C₁; −1/C₂ A₂] m = B`.
fn linear_solve(co: &AsymptoticCoefficients) -> Result<[f64; 2], ModelError> {
    let [i1, i2] = co.inv_c();
    let mut m = [[co.a[0], -i1, co.b[0]], [-i2, co.a[1], co.b[1]]];
    if m[1][0].abs() > m[0][0].abs() {
        m.swap(0, 1);
    }
    if m[0][0] == 0.0 {
        return Err(ModelError::Singular { det: 0.0 });
    }
    let f = m[1][0] / m[0][0];
    let r11 = m[1][1] - f * m[0][1];
    let rb = m[1][2] - f * m[0][2];
    if r11.abs() < SINGULAR_TOLERANCE {
        return Err(ModelError::Singular { det: r11 });
    }
    let x2 = rb / r11;
    let x1 = (m[0][2] - m[0][1] * x2) / m[0][0];
    Ok([x1, x2])
}

/// Decoupled single-lane large-time speed `(P + p*v̄)/(P + (1−P)² + p*)`.
pub fn single_lane_asymptotic_speed(rho: f64, pstar: f64, mu: f64, vbar: f64) -> f64 {
    let p = accel_prob(rho, mu);
    let denom = q_of(p) + pstar;
    debug_assert!(denom > 0.0);
    (p + pstar * vbar) / denom
}

/// `m̃∞` of `lane` using the configured control and recommended speed.
pub fn lane_asymptotic_speed(rho: f64, params: &ModelParams, lane: usize) -> f64 {
    single_lane_asymptotic_speed(rho, params.pstar(lane), params.mu, params.vbar(lane, rho))
}

/// Absolute tolerance of the outer bisection for the density split.
pub const SPLIT_TOLERANCE: f64 = 1e-12;

/// `f(x) = (1−x)^α / x`, decreasing from `+∞` to `0` on `(0,1]`.
#[inline]
fn split_f(x: f64, alpha: f64) -> f64 {
    (1.0 - x).powf(alpha) / x
}

/// Inverse of `f` on `[0,1]` by bisection to machine resolution.
fn split_f_inv(y: f64, alpha: f64) -> f64 {
    if y.is_infinite() {
        return 0.0;
    }
    if y <= 0.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if split_f(mid, alpha) > y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `g(x) = f⁻¹((β₁/β₂) f(x)) + x`, the total density whose lane-2 share is `x`.
pub fn split_g(x: f64, ratio: f64, alpha: f64) -> f64 {
    let fx = if x <= 0.0 {
        f64::INFINITY
    } else {
        split_f(x, alpha)
    };
    let target = if fx.is_infinite() {
        if ratio > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    } else {
        ratio * fx
    };
    split_f_inv(target, alpha) + x
}

/// Stationary lane densities with total `ρ₁ + ρ₂ = rho_total`, i.e. the
/// root of `β₁(1−ρ₂)^α ρ₁ = β₂(1−ρ₁)^α ρ₂`.
pub fn equilibrium_density_split(
    rho_total: f64,
    switching: &SwitchingSpec,
) -> Result<(f64, f64), ModelError> {
    if !(0.0..=2.0).contains(&rho_total) {
        return Err(ModelError::Domain {
            name: "rho_total",
            value: rho_total / 2.0,
        });
    }
    let [b1, b2] = switching.beta;
    if b2 == 0.0 {
        return Err(ModelError::Degenerate("beta2 = 0"));
    }
    if rho_total == 0.0 {
        return Ok((0.0, 0.0));
    }
    if rho_total == 2.0 {
        return Ok((1.0, 1.0));
    }
    if b1 == 0.0 {
        // Lane 1 only gains vehicles: it fills up before lane 2 keeps any.
        return Ok((rho_total.min(1.0), (rho_total - 1.0).max(0.0)));
    }
    let ratio = b1 / b2;
    let alpha = switching.alpha;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while hi - lo > SPLIT_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if split_g(mid, ratio, alpha) < rho_total {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let rho2 = 0.5 * (lo + hi);
    Ok((rho_total - rho2, rho2))
}

/// Stationary densities reached from any initial split with the given total,
/// covering the cases the closure leaves undefined.
pub fn equilibrium_densities(
    rho_total: f64,
    initial_split: f64,
    switching: &SwitchingSpec,
) -> Result<(f64, f64), ModelError> {
    let [b1, b2] = switching.beta;
    match (b1 == 0.0, b2 == 0.0) {
        (true, true) => Ok((rho_total * initial_split, rho_total * (1.0 - initial_split))),
        (false, true) => Ok(((rho_total - 1.0).max(0.0), rho_total.min(1.0))),
        _ => equilibrium_density_split(rho_total, switching),
    }
}

/// One point of a fundamental diagram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagramRow {
    pub rho_total: f64,
    pub rho_inf: [f64; 2],
    pub m_inf: [f64; 2],
    pub flux: [f64; 2],
}

impl DiagramRow {
    fn zero(rho_total: f64) -> Self {
        Self {
            rho_total,
            rho_inf: [0.0; 2],
            m_inf: [0.0; 2],
            flux: [0.0; 2],
        }
    }
}

/// Equilibrium densities, mean speeds and lane fluxes for every total
/// density on `rho_grid`.
pub fn fundamental_diagram(
    params: &ModelParams,
    rho_grid: &[f64],
    initial_split: f64,
) -> Result<Vec<DiagramRow>, ModelError> {
    rho_grid
        .iter()
        .map(|&rho| {
            if rho == 0.0 {
                return Ok(DiagramRow::zero(0.0));
            }
            let (r1, r2) = equilibrium_densities(rho, initial_split, &params.switching)?;
            let m = asymptotic_mean_speeds(r1, r2, params, AsymptoticMethod::ClosedForm)?;
            // An empty lane carries no flux; its speed is reported as zero.
            let m = [
                if r1 > 0.0 { m[0] } else { 0.0 },
                if r2 > 0.0 { m[1] } else { 0.0 },
            ];
            Ok(DiagramRow {
                rho_total: rho,
                rho_inf: [r1, r2],
                m_inf: m,
                flux: [r1 * m[0], r2 * m[1]],
            })
        })
        .collect()
}

/// Integrates the density system from the initial split until `t_end` and
/// returns the final densities, to cross-check the algebraic split.
pub fn density_ode_limit(
    rho_total: f64,
    initial_split: f64,
    switching: &SwitchingSpec,
    t_end: f64,
    dt: f64,
) -> [f64; 2] {
    let mut rho = [rho_total * initial_split, rho_total * (1.0 - initial_split)];
    let f = |r: [f64; 2]| exchange(r, r, switching);
    let steps = (t_end / dt).ceil() as usize;
    for _ in 0..steps {
        let k1 = f(rho);
        let k2 = f([rho[0] + 0.5 * dt * k1[0], rho[1] + 0.5 * dt * k1[1]]);
        let k3 = f([rho[0] + 0.5 * dt * k2[0], rho[1] + 0.5 * dt * k2[1]]);
        let k4 = f([rho[0] + dt * k3[0], rho[1] + dt * k3[1]]);
        for i in 0..2 {
            rho[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    rho
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ControlSpec, Penalization, SpeedProfile};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(p: f64, kappa: f64, beta: [f64; 2], alpha: f64) -> ModelParams {
        ModelParams {
            gamma: 1e-3,
            mu: 2.0,
            control: ControlSpec {
                p,
                kappa: [Penalization(kappa); 2],
                recommended_speed: [SpeedProfile::Linear; 2],
            },
            noise: Default::default(),
            switching: SwitchingSpec {
                beta,
                alpha,
                ..Default::default()
            },
        }
    }

    fn sw(beta: [f64; 2], alpha: f64) -> SwitchingSpec {
        SwitchingSpec {
            beta,
            alpha,
            ..Default::default()
        }
    }

    #[test]
    fn density_rhs_values() {
        assert_eq!(
            density_rhs(0.3, 0.6, &sw([0.0, 0.0], 1.0)).unwrap(),
            [0.0, 0.0]
        );
        assert_eq!(
            density_rhs(0.4, 0.4, &sw([0.3, 0.3], 2.0)).unwrap(),
            [0.0, 0.0]
        );
        let r = density_rhs(0.2, 0.8, &sw([0.1, 0.2], 1.0)).unwrap();
        let expected: f64 = -0.1 * 0.2 * 0.2 + 0.2 * 0.8 * 0.8;
        assert!((expected - 0.124).abs() < 1e-15);
        assert!((r[0] - 0.124).abs() < 1e-15 && (r[1] + 0.124).abs() < 1e-15);
        assert!(density_rhs(1.1, 0.0, &sw([0.1, 0.1], 1.0)).is_err());
    }

    #[test]
    fn uncontrolled_speed_rhs_reduces_to_single_lane_drift() {
        let p = params(0.0, f64::INFINITY, [0.0, 0.0], 1.0);
        let s = LaneMomentState::new([0.3, 0.7], [0.4, 0.2], [0.2, 0.1], MomentSystem::General);
        let r = mean_speed_rhs_general(&s, &p).unwrap();
        for (i, ri) in r.iter().enumerate() {
            let pa = accel_prob(s.rho[i], 2.0);
            let expected =
                p.gamma * s.rho[i].powi(2) / 2.0 * (pa - (pa + (1.0 - pa).powi(2)) * s.m[i]);
            assert!((ri - expected).abs() < 1e-16);
        }
    }

    #[test]
    fn scaled_speed_rhs_vanishes_at_single_lane_limit() {
        let p = params(0.05, 0.1, [0.0, 0.0], 1.0);
        let rho = [0.6, 0.3];
        let m = [
            lane_asymptotic_speed(rho[0], &p, 0),
            lane_asymptotic_speed(rho[1], &p, 1),
        ];
        let s = LaneMomentState::new(rho, m, [0.5, 0.5], MomentSystem::Scaled);
        let r = mean_speed_rhs_scaled(&s, &p).unwrap();
        assert!(r[0].abs() < 1e-16 && r[1].abs() < 1e-16);
    }

    #[test]
    fn general_and_scaled_forms_agree_as_gamma_vanishes() {
        // The general weights differ from the scaled ones by O(p γ/κ); at
        // γ = 1e-5 the relative gap is below 1e-3, and it shrinks linearly.
        let gap = |gamma: f64| {
            let mut p = params(0.05, 0.01, [0.1, 0.2], 1.0);
            p.control.recommended_speed = [SpeedProfile::Constant(0.5); 2];
            p.gamma = gamma;
            let s = LaneMomentState::new([0.5, 0.5], [0.5, 0.5], [0.3, 0.3], MomentSystem::General);
            let mut pg = p.clone();
            pg.switching.beta = [0.1 * gamma, 0.2 * gamma];
            let g = mean_speed_rhs_general(&s, &pg).unwrap();
            let sc = mean_speed_rhs_scaled(&s, &p).unwrap();
            assert!(g.iter().all(|x| x.is_finite()));
            ((g[0] - gamma * sc[0]) / (gamma * sc[0])).abs()
        };
        assert!(gap(1e-5) < 1e-3);
        let ratio = gap(1e-4) / gap(1e-5);
        assert!((ratio - 10.0).abs() < 0.5, "ratio {ratio}");
    }

    #[test]
    fn energy_rhs_reductions() {
        // Free flow without switching: d(ρE)/dτ = ρ²(m − E).
        let p = params(0.0, f64::INFINITY, [0.0, 0.0], 1.0);
        let s = LaneMomentState::new([0.0, 0.0], [0.4, 0.6], [0.2, 0.5], MomentSystem::Scaled);
        assert_eq!(energy_rhs_scaled(&s, &p).unwrap(), [0.0, 0.0]);
        let rho = 1e-6;
        let s = LaneMomentState::new([rho, rho], [0.4, 0.6], [0.2, 0.5], MomentSystem::Scaled);
        let r = energy_rhs_scaled(&s, &p).unwrap();
        assert!((r[0] / (rho * rho) - (0.4 - 0.2)).abs() < 1e-5);
        assert!((r[1] / (rho * rho) - (0.6 - 0.5)).abs() < 1e-5);
        // Control fixed point: E = v̄m with m = v̄ zeroes the control term.
        let p3 = params(0.05, 1e-6, [0.0, 0.0], 1.0);
        let rho = 0.4;
        let vbar = 0.6;
        let s = LaneMomentState::new(
            [rho, rho],
            [vbar, vbar],
            [vbar * vbar; 2],
            MomentSystem::Scaled,
        );
        let r = energy_rhs_scaled(&s, &p3).unwrap();
        let pa = accel_prob(rho, 2.0);
        let residual = rho
            * rho
            * (pa * (vbar - vbar * vbar) + (1.0 - pa).powi(2) * (vbar * vbar - vbar.powi(4)));
        assert!((r[0] - residual).abs() < 1e-12);
    }

    #[test]
    fn energy_rhs_matches_independent_expansion() {
        let p = params(0.05, 0.1, [0.1, 0.2], 2.0);
        let s = LaneMomentState::new([0.8, 0.2], [0.45, 0.7], [0.25, 0.55], MomentSystem::Scaled);
        let r = energy_rhs_scaled(&s, &p).unwrap();
        let lane = |i: usize, j: usize| {
            let (rho, m, e) = (s.rho[i], s.m[i], s.e[i]);
            let pa = (1.0 - rho) * (1.0 - rho);
            let vbar = 1.0 - rho;
            let ps = 0.5;
            let coll = rho
                * rho
                * (pa * (m - e) + (1.0 - pa).powi(2) * (m * m - e * e) + ps * (vbar * m - e));
            let out = [0.1, 0.2][i] * (1.0 - s.rho[j]).powi(2) * rho * e;
            let inn = [0.1, 0.2][j] * (1.0 - rho).powi(2) * s.rho[j] * s.e[j];
            coll - out + inn
        };
        assert!((r[0] - lane(0, 1)).abs() < 1e-15);
        assert!((r[1] - lane(1, 0)).abs() < 1e-15);
    }

    #[test]
    fn rk4_conserves_mass_and_reaches_fixed_point() {
        let p = params(0.0, f64::INFINITY, [0.1, 0.2], 1.0);
        let s0 = LaneMomentState::new([0.2, 0.8], [0.5, 0.5], [0.3, 0.3], MomentSystem::Scaled);
        let mut drift: f64 = 0.0;
        let last = integrate_moments_with(&s0, &p, 200.0, 1e-3, |s| {
            drift = drift.max((s.rho[0] + s.rho[1] - 1.0).abs());
        })
        .unwrap();
        assert!(drift <= 1e-10, "drift {drift}");
        let target = 2f64.sqrt() / (1.0 + 2f64.sqrt());
        assert!((last.rho[0] - target).abs() < 1e-6);
        assert!((target - 0.585_786).abs() < 1e-6);
    }

    #[test]
    fn symmetric_switching_equalizes() {
        let p = params(0.0, f64::INFINITY, [0.2, 0.2], 1.0);
        let s0 = LaneMomentState::new([0.2, 0.8], [0.5, 0.5], [0.3, 0.3], MomentSystem::Scaled);
        let last = integrate_moments_with(&s0, &p, 200.0, 1e-3, |_| {}).unwrap();
        assert!((last.rho[0] - 0.5).abs() < 1e-8 && (last.rho[1] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn no_switching_keeps_density() {
        let p = params(0.05, 0.1, [0.0, 0.0], 1.0);
        let s0 = LaneMomentState::new([0.3, 0.6], [0.5, 0.5], [0.3, 0.3], MomentSystem::General);
        let traj = integrate_moments(&s0, &p, 5.0, 1e-2).unwrap();
        assert_eq!(traj.len(), 501);
        assert!(traj.iter().all(|s| s.rho == [0.3, 0.6]));
    }

    #[test]
    fn closed_form_matches_linear_solve_on_random_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..100 {
            let r1 = rng.random_range(0.05..0.95);
            let r2 = rng.random_range(0.05..0.95);
            let b = [rng.random_range(0.01..1.0), rng.random_range(0.01..1.0)];
            let alpha = [1.0, 2.0, 3.0][rng.random_range(0..3)];
            let pstar = rng.random_range(0.0..100.0);
            let p = params(pstar, 1.0, b, alpha);
            let a = asymptotic_mean_speeds(r1, r2, &p, AsymptoticMethod::ClosedForm).unwrap();
            let l = asymptotic_mean_speeds(r1, r2, &p, AsymptoticMethod::LinearSolve).unwrap();
            assert!((a[0] - l[0]).abs() < 1e-12 && (a[1] - l[1]).abs() < 1e-12);
            // Residual of Bᵢ − Aᵢmᵢ + mⱼ/Cᵢ. Random densities are generally not
            // a density equilibrium, so m∞ need not lie in [0,1] here.
            let co = AsymptoticCoefficients::new(r1, r2, &p);
            let inv = co.inv_c();
            for i in 0..2 {
                let res = co.b[i] - co.a[i] * a[i] + a[1 - i] * inv[i];
                assert!(res.abs() < 1e-10 * (1.0 + co.a[i]));
            }
        }
    }

    #[test]
    fn worked_coupled_example() {
        let mut p = params(5.0, 1.0, [0.1, 0.2], 2.0);
        p.control.recommended_speed = [SpeedProfile::Constant(0.6); 2];
        let a = asymptotic_mean_speeds(0.4, 0.4, &p, AsymptoticMethod::ClosedForm).unwrap();
        let l = asymptotic_mean_speeds(0.4, 0.4, &p, AsymptoticMethod::LinearSolve).unwrap();
        assert!((a[0] - l[0]).abs() < 1e-12 && (a[1] - l[1]).abs() < 1e-12);
    }

    #[test]
    fn decoupled_limit_and_alignment() {
        let p = params(0.05, f64::INFINITY, [0.0, 0.0], 1.0);
        let m = asymptotic_mean_speeds(0.3, 0.7, &p, AsymptoticMethod::ClosedForm).unwrap();
        assert!((m[0] - single_lane_asymptotic_speed(0.3, 0.0, 2.0, 0.7)).abs() < 1e-15);
        assert!((m[1] - single_lane_asymptotic_speed(0.7, 0.0, 2.0, 0.3)).abs() < 1e-15);
        let p = params(1.0, 1e-8, [0.1, 0.2], 2.0);
        let m = asymptotic_mean_speeds(0.3, 0.7, &p, AsymptoticMethod::ClosedForm).unwrap();
        assert!((m[0] - 0.7).abs() < 1e-6 && (m[1] - 0.3).abs() < 1e-6);
    }

    fn alignment_gaps(r1: f64, r2: f64, beta: [f64; 2]) -> Vec<[f64; 2]> {
        (0..20)
            .map(|k| {
                let pstar = 10f64.powf(-2.0 + 0.3 * k as f64);
                let p = params(pstar, 1.0, beta, 2.0);
                let m = asymptotic_mean_speeds(r1, r2, &p, AsymptoticMethod::ClosedForm).unwrap();
                [(m[0] - (1.0 - r1)).abs(), (m[1] - (1.0 - r2)).abs()]
            })
            .collect()
    }

    #[test]
    fn alignment_is_monotone_for_decoupled_lanes() {
        for &(r1, r2) in &[(0.1, 0.9), (0.3, 0.6), (0.8, 0.15)] {
            let gaps = alignment_gaps(r1, r2, [0.0, 0.0]);
            for w in gaps.windows(2) {
                assert!(w[1][0] <= w[0][0] + 1e-15 && w[1][1] <= w[0][1] + 1e-15);
            }
        }
    }

    #[test]
    fn coupled_lane_can_overshoot_its_target() {
        // With switching, lane 2 is dragged through its own target by the
        // faster lane 1 before both align; only the large-p* tail is monotone.
        let (r1, r2) = equilibrium_density_split(0.3, &sw([0.1, 0.2], 2.0)).unwrap();
        let gaps = alignment_gaps(r1, r2, [0.1, 0.2]);
        assert!(gaps.windows(2).any(|w| w[1][1] > w[0][1]));
        for w in gaps[9..].windows(2) {
            assert!(w[1][0] <= w[0][0] && w[1][1] <= w[0][1]);
        }
        assert!(gaps.windows(2).all(|w| w[1][0] <= w[0][0]));
    }

    #[test]
    fn single_lane_speed_values() {
        assert_eq!(single_lane_asymptotic_speed(0.0, 0.0, 2.0, 1.0), 1.0);
        assert_eq!(single_lane_asymptotic_speed(1.0, 3.0, 2.0, 0.0), 0.0);
        let v = single_lane_asymptotic_speed(0.5, 0.0, 2.0, 0.5);
        assert!((v - 4.0 / 13.0).abs() < 1e-15);
    }

    #[test]
    fn density_split_symmetric_and_quadratic() {
        for &alpha in &[0.5, 1.0, 2.0, 4.0] {
            for &rho in &[0.1, 0.6, 1.0, 1.7] {
                let (r1, r2) = equilibrium_density_split(rho, &sw([0.3, 0.3], alpha)).unwrap();
                assert!((r2 - rho / 2.0).abs() < 1e-10 && (r1 - rho / 2.0).abs() < 1e-10);
            }
        }
        let (r1, r2) = equilibrium_density_split(1.0, &sw([0.1, 0.2], 1.0)).unwrap();
        assert!((r2 - 0.414_214).abs() < 1e-6 && (r1 - 0.585_786).abs() < 1e-6);
        assert!((0.1 * (1.0 - r2) * r1 - 0.2 * (1.0 - r1) * r2).abs() < 1e-8);
        assert_eq!(
            equilibrium_density_split(0.0, &sw([0.1, 0.2], 1.0)).unwrap(),
            (0.0, 0.0)
        );
        assert_eq!(
            equilibrium_density_split(2.0, &sw([0.1, 0.2], 1.0)).unwrap(),
            (1.0, 1.0)
        );
        assert!(matches!(
            equilibrium_density_split(1.0, &sw([0.1, 0.0], 1.0)),
            Err(ModelError::Degenerate(_))
        ));
    }

    #[test]
    fn split_g_is_monotone() {
        for &alpha in &[0.5, 1.0, 2.0, 4.0] {
            let mut prev = -1.0;
            for k in 0..=1000 {
                let x = k as f64 / 1000.0;
                let g = split_g(x, 0.5, alpha);
                assert!(g >= prev, "alpha {alpha} x {x}");
                prev = g;
            }
            assert_eq!(split_g(0.0, 0.5, alpha), 0.0);
            assert_eq!(split_g(1.0, 0.5, alpha), 2.0);
        }
    }

    #[test]
    fn diagram_endpoints_and_mass() {
        let p = params(0.05, 0.01, [0.1, 0.2], 2.0);
        let grid: Vec<f64> = (0..=20).map(|k| k as f64 / 20.0).collect();
        let rows = fundamental_diagram(&p, &grid, 0.5).unwrap();
        assert_eq!(rows[0], DiagramRow::zero(0.0));
        for r in &rows {
            assert!((r.rho_inf[0] + r.rho_inf[1] - r.rho_total).abs() < 1e-9);
            assert!(r.flux.iter().all(|q| (0.0..=1.0).contains(q)));
        }
    }

    #[test]
    fn equilibrium_split_is_independent_of_initial_split() {
        let s = sw([0.1, 0.2], 2.0);
        for &rho in &[0.2, 0.5, 0.9] {
            let (r1, r2) = equilibrium_density_split(rho, &s).unwrap();
            for &split in &[0.0, 0.3, 0.5, 1.0] {
                let lim = density_ode_limit(rho, split, &s, 400.0, 0.01);
                assert!((lim[0] - r1).abs() < 1e-8 && (lim[1] - r2).abs() < 1e-8);
            }
        }
    }
}
