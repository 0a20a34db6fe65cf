//! Advisory check that the controlled interaction keeps speeds in `[0,1]`.
//!
//! Speeds stay admissible when the noise is bounded by
//! `|η| ≤ c(1 − ((ν+γ)/ν)γ)` and `c·D(v,ρ) ≤ min{v, 1−v}`. Violations are
//! reported, not enforced; the particle solver rejects offending updates.

use serde::Serialize;

use crate::config::ModelParams;

/// Points per axis of the `(v,ρ)` grid.
pub const GRID_POINTS: usize = 101;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LaneAdmissibility {
    /// Upper bound on `|η|`.
    pub noise_bound: f64,
    /// Half-width of the configured noise support.
    pub noise_radius: f64,
    pub noise_ok: bool,
    /// Grid points `(v,ρ)` with `c·D(v,ρ) > min{v,1−v}`.
    pub diffusion_violations: Vec<(f64, f64)>,
}

impl LaneAdmissibility {
    pub fn passes(&self) -> bool {
        self.noise_ok && self.diffusion_violations.is_empty()
    }

    /// Smallest and largest violating speed, if any.
    pub fn violating_speed_range(&self) -> Option<(f64, f64)> {
        let mut it = self.diffusion_violations.iter().map(|p| p.0);
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v))))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdmissibilityReport {
    pub c: [f64; 2],
    pub lanes: [LaneAdmissibility; 2],
}

impl AdmissibilityReport {
    pub fn passes(&self) -> bool {
        self.lanes.iter().all(LaneAdmissibility::passes)
    }
}

/// Noise bound `c(1 − ((ν+γ)/ν)γ)`; the uncontrolled limit is `c(1−γ)`.
pub fn noise_bound(c: f64, gamma: f64, nu: f64) -> f64 {
    if nu.is_infinite() {
        c * (1.0 - gamma)
    } else {
        c * (1.0 - (nu + gamma) / nu * gamma)
    }
}

/// Builds the report for user-supplied constants `c = (c₁, c₂)`.
pub fn validate_admissibility(params: &ModelParams, c: [f64; 2]) -> AdmissibilityReport {
    let lane = |i: usize| {
        let bound = noise_bound(c[i], params.gamma, params.nu(i));
        let radius = params.noise.law.support_radius(params.noise_variance(i));
        let mut violations = Vec::new();
        let n = (GRID_POINTS - 1) as f64;
        for kr in 0..GRID_POINTS {
            let rho = kr as f64 / n;
            for kv in 0..GRID_POINTS {
                let v = kv as f64 / n;
                if c[i] * params.noise.diffusion(v, rho) > v.min(1.0 - v) {
                    violations.push((v, rho));
                }
            }
        }
        LaneAdmissibility {
            noise_bound: bound,
            noise_radius: radius,
            noise_ok: radius <= bound,
            diffusion_violations: violations,
        }
    };
    AdmissibilityReport {
        c,
        lanes: [lane(0), lane(1)],
    }
}
