//! First-order hydrodynamic limits and their finite-volume solver.
//!
//! Three regimes share one solver: decoupled lane conservation laws
//! (collision-dominated), lane balance laws with reaction sources (slow
//! switching) and a scalar law for the total density with a tabulated
//! algebraic closure (fast switching).

mod fv;

pub use fv::{fv_advance, fv_step, slow_switching_step, FvDiagnostics, FvScheme, HydroState};

use serde::Serialize;

use crate::config::{FastFluxVariant, HydroRegime, LaneFluxKind, ModelParams};
use crate::error::{HydroError, ModelError};
use crate::moments::{
    asymptotic_mean_speeds, equilibrium_densities, lane_asymptotic_speed, AsymptoticMethod,
};

/// Collision-dominated flux `ρ m̃∞(ρ)` of `lane`.
pub fn flux_collision_dominated(rho: f64, lane: usize, params: &ModelParams) -> f64 {
    if rho <= 0.0 {
        return 0.0;
    }
    rho * lane_asymptotic_speed(rho.min(1.0), params, lane)
}

/// Flux of one lane as a function of its own density.
#[derive(Debug, Clone)]
pub struct LaneFlux {
    kind: LaneFluxKind,
    params: ModelParams,
    lane: usize,
}

impl LaneFlux {
    pub fn new(kind: LaneFluxKind, params: &ModelParams, lane: usize) -> Self {
        Self {
            kind,
            params: params.clone(),
            lane,
        }
    }

    /// Flux value; densities are clamped into `[0,1]` inside the speed law.
    #[inline]
    pub fn eval(&self, rho: f64) -> f64 {
        match self.kind {
            LaneFluxKind::Controlled => flux_collision_dominated(rho, self.lane, &self.params),
            LaneFluxKind::Aligned => {
                if rho <= 0.0 {
                    0.0
                } else {
                    rho * self.params.vbar(self.lane, rho.min(1.0))
                }
            }
        }
    }
}

/// Stationary lane state at total density `ρ̄` in the fast-switching limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Closure {
    pub rho_bar: f64,
    pub rho: [f64; 2],
    pub m: [f64; 2],
    /// Total flux under the configured variant.
    pub flux: f64,
}

/// Direct evaluation of the fast-switching closure: equilibrium split, then
/// the stationary mean-speed system by pivoted elimination.
pub fn fast_switching_closure(
    rho_bar: f64,
    params: &ModelParams,
    variant: FastFluxVariant,
) -> Result<Closure, ModelError> {
    if rho_bar <= 0.0 {
        return Ok(Closure {
            rho_bar: 0.0,
            rho: [0.0; 2],
            m: [0.0; 2],
            flux: 0.0,
        });
    }
    let rho_bar = rho_bar.min(2.0);
    let (r1, r2) = equilibrium_densities(rho_bar, 0.5, &params.switching)?;
    let m = asymptotic_mean_speeds(r1, r2, params, AsymptoticMethod::LinearSolve)?;
    let m = [
        if r1 > 0.0 { m[0] } else { 0.0 },
        if r2 > 0.0 { m[1] } else { 0.0 },
    ];
    let flux = match variant {
        FastFluxVariant::Weighted => r1 * m[0] + r2 * m[1],
        FastFluxVariant::LiteralSum => m[0] + m[1],
    };
    Ok(Closure {
        rho_bar,
        rho: [r1, r2],
        m,
        flux,
    })
}

/// Fast-switching closure tabulated on a uniform `ρ̄` grid over `[0,2]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosureTable {
    pub nodes: Vec<Closure>,
    pub variant: FastFluxVariant,
}

impl ClosureTable {
    pub fn build(
        params: &ModelParams,
        nodes: usize,
        variant: FastFluxVariant,
    ) -> Result<Self, HydroError> {
        let nodes = nodes.max(2);
        let table = (0..nodes)
            .map(|k| {
                let rho_bar = 2.0 * k as f64 / (nodes - 1) as f64;
                fast_switching_closure(rho_bar, params, variant)
                    .map_err(|source| HydroError::Closure { rho_bar, source })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            nodes: table,
            variant,
        })
    }

    /// Linear interpolation of every closure quantity at `ρ̄`.
    pub fn eval(&self, rho_bar: f64) -> Closure {
        let n = self.nodes.len();
        let s = (rho_bar.clamp(0.0, 2.0) / 2.0) * (n - 1) as f64;
        let k = (s.floor() as usize).min(n - 2);
        let w = s - k as f64;
        let (a, b) = (&self.nodes[k], &self.nodes[k + 1]);
        let lerp = |x: f64, y: f64| x + w * (y - x);
        Closure {
            rho_bar: rho_bar.clamp(0.0, 2.0),
            rho: [lerp(a.rho[0], b.rho[0]), lerp(a.rho[1], b.rho[1])],
            m: [lerp(a.m[0], b.m[0]), lerp(a.m[1], b.m[1])],
            flux: lerp(a.flux, b.flux),
        }
    }

    pub fn flux(&self, rho_bar: f64) -> f64 {
        if rho_bar <= 0.0 {
            0.0
        } else {
            self.eval(rho_bar).flux
        }
    }
}

/// Flux and source definition of one hydrodynamic regime.
#[derive(Debug, Clone)]
pub enum FluxModel {
    /// `∂tρᵢ + ∂x qᵢ(ρᵢ) = 0`.
    Collision { lanes: [LaneFlux; 2] },
    /// `∂tρᵢ + ∂x qᵢ(ρᵢ) = ∓(c₁(1−ρ₂)^α ρ₁ − c₂(1−ρ₁)^α ρ₂)`.
    Slow {
        lanes: [LaneFlux; 2],
        rates: [f64; 2],
        alpha: f64,
    },
    /// `∂tρ̄ + ∂x F(ρ̄) = 0` with the closure table.
    Fast { table: ClosureTable },
}

impl FluxModel {
    /// Builds the model of `regime` from the configured parameters. The slow
    /// regime uses the rescaled rates `cᵢ` from `switching.regime_rates`.
    pub fn build(
        regime: HydroRegime,
        params: &ModelParams,
        flux: LaneFluxKind,
        fast_flux: FastFluxVariant,
        table_nodes: usize,
    ) -> Result<Self, HydroError> {
        let lanes = [
            LaneFlux::new(flux, params, 0),
            LaneFlux::new(flux, params, 1),
        ];
        Ok(match regime {
            HydroRegime::Collision => FluxModel::Collision { lanes },
            HydroRegime::Slow => FluxModel::Slow {
                lanes,
                rates: params.switching.regime_rates,
                alpha: params.switching.alpha,
            },
            HydroRegime::Fast => FluxModel::Fast {
                table: ClosureTable::build(params, table_nodes, fast_flux)?,
            },
        })
    }

    pub fn components(&self) -> usize {
        match self {
            FluxModel::Fast { .. } => 1,
            _ => 2,
        }
    }

    /// Upper end of the admissible range of component values.
    pub fn max_value(&self) -> f64 {
        match self {
            FluxModel::Fast { .. } => 2.0,
            _ => 1.0,
        }
    }

    #[inline]
    pub fn flux(&self, component: usize, u: f64) -> f64 {
        match self {
            FluxModel::Collision { lanes } | FluxModel::Slow { lanes, .. } => {
                lanes[component].eval(u)
            }
            FluxModel::Fast { table } => table.flux(u),
        }
    }

    pub fn has_source(&self) -> bool {
        matches!(self, FluxModel::Slow { rates, .. } if rates.iter().any(|&c| c != 0.0))
    }

    /// Reaction source at one cell; antisymmetric between lanes.
    #[inline]
    pub fn source(&self, u: [f64; 2]) -> [f64; 2] {
        match self {
            FluxModel::Slow { rates, alpha, .. } => {
                let free = |r: f64| (1.0 - r).max(0.0).powf(*alpha);
                let r1 = rates[0] * free(u[1]) * u[0].max(0.0);
                let r2 = rates[1] * free(u[0]) * u[1].max(0.0);
                [r2 - r1, r1 - r2]
            }
            _ => [0.0, 0.0],
        }
    }

    /// Bound on the source relaxation rate, used to cap the time step.
    pub fn source_rate(&self) -> f64 {
        match self {
            FluxModel::Slow { rates, .. } => rates[0] + rates[1],
            _ => 0.0,
        }
    }
}
