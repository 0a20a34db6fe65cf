//! Microscopic layer: acceleration probability, interaction rule, optimal
//! feedback control and the controlled post-interaction speed.

use rand::Rng;

use crate::config::{ModelParams, NoiseLaw};
use crate::error::ModelError;

/// Post-interaction speeds within this distance of `[0,1]` are snapped onto
/// the interval instead of being rejected. This only absorbs rounding.
pub const SNAP_TOLERANCE: f64 = 1e-12;

/// One realisation of the random ingredients of a binary interaction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteractionDraw {
    /// Driver-assist indicator, 0 or 1.
    pub theta: u8,
    pub eta: f64,
}

impl InteractionDraw {
    pub const NONE: InteractionDraw = InteractionDraw { theta: 0, eta: 0.0 };

    pub fn new(theta: u8, eta: f64) -> Self {
        assert!(theta <= 1, "theta must be 0 or 1");
        Self { theta, eta }
    }
}

/// Result of a controlled update. A rejected update leaves the speed as it
/// was and is counted by the caller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    Accepted(f64),
    Rejected,
}

impl Outcome {
    pub fn speed_or(self, fallback: f64) -> f64 {
        match self {
            Outcome::Accepted(v) => v,
            Outcome::Rejected => fallback,
        }
    }
}

fn unit(name: &'static str, value: f64) -> Result<f64, ModelError> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(ModelError::Domain { name, value })
    }
}

/// `P(ρ) = (1−ρ)^μ` without domain checks.
#[inline]
pub fn accel_prob(rho: f64, mu: f64) -> f64 {
    (1.0 - rho).powf(mu)
}

/// `I(v,w;ρ) = P(1−v) + (1−P)(Pw − v)` given `P` directly.
#[inline]
pub fn interaction_with_p(v: f64, w: f64, p: f64) -> f64 {
    p * (1.0 - v) + (1.0 - p) * (p * w - v)
}

/// Probability of accelerating at density `ρ`.
pub fn acceleration_probability(rho: f64, mu: f64) -> Result<f64, ModelError> {
    unit("rho", rho)?;
    Ok(accel_prob(rho, mu))
}

/// Speed change of the candidate vehicle `v` meeting a field vehicle `w`.
pub fn interaction_rule(v: f64, w: f64, rho: f64, mu: f64) -> Result<f64, ModelError> {
    unit("v", v)?;
    unit("w", w)?;
    let p = acceleration_probability(rho, mu)?;
    Ok(interaction_with_p(v, w, p))
}

/// Interaction and control weights `(νγ/(ν+γ²Θ²), γ²Θ²/(ν+γ²Θ²))`.
/// An infinite `ν` gives the uncontrolled pair `(γ, 0)`.
#[inline]
pub fn update_weights(theta: u8, gamma: f64, nu: f64) -> (f64, f64) {
    let t = f64::from(theta);
    if nu.is_infinite() {
        return (gamma, 0.0);
    }
    let denom = nu + gamma * gamma * t * t;
    (nu * gamma / denom, gamma * gamma * t * t / denom)
}

/// Optimal feedback control of the binary problem.
#[allow(clippy::too_many_arguments)]
pub fn optimal_control(
    v: f64,
    w: f64,
    rho: f64,
    mu: f64,
    draw: InteractionDraw,
    gamma: f64,
    nu: f64,
    vbar: f64,
) -> Result<f64, ModelError> {
    let i = interaction_rule(v, w, rho, mu)?;
    if nu.is_infinite() {
        return Ok(0.0);
    }
    let t = f64::from(draw.theta);
    let denom = nu + gamma * gamma * t * t;
    Ok(gamma * t / denom * (vbar - v) - gamma * gamma * t / denom * i)
}

#[inline]
fn admit(v: f64) -> Outcome {
    if (0.0..=1.0).contains(&v) {
        Outcome::Accepted(v)
    } else if v > -SNAP_TOLERANCE && v < 0.0 {
        Outcome::Accepted(0.0)
    } else if v > 1.0 && v < 1.0 + SNAP_TOLERANCE {
        Outcome::Accepted(1.0)
    } else {
        Outcome::Rejected
    }
}

/// Controlled post-interaction speed of the candidate vehicle on `lane`
/// (0-based). The field vehicle never changes.
pub fn post_interaction_speed(
    v: f64,
    w: f64,
    rho: f64,
    draw: InteractionDraw,
    params: &ModelParams,
    lane: usize,
) -> Result<Outcome, ModelError> {
    let i = interaction_rule(v, w, rho, params.mu)?;
    let (a_int, a_ctl) = update_weights(draw.theta, params.gamma, params.nu(lane));
    let vbar = params.vbar(lane, rho);
    let diff = params.noise.diffusion(v, rho);
    Ok(admit(v + a_int * i + a_ctl * (vbar - v) + diff * draw.eta))
}

/// Per-lane interaction kernel with the `Θ`-dependent weights cached.
///
/// Used in the hot loop of the particle solver, where the density is
/// already known to lie in `[0,1]`.
#[derive(Debug, Clone)]
pub struct InteractionKernel {
    mu: f64,
    penetration: f64,
    weights: [(f64, f64); 2],
    noise_radius: f64,
    noise_law: NoiseLaw,
    params: ModelParams,
    lane: usize,
}

impl InteractionKernel {
    pub fn new(params: &ModelParams, lane: usize) -> Self {
        let gamma = params.gamma;
        let nu = params.nu(lane);
        let law = params.noise.law;
        Self {
            mu: params.mu,
            penetration: params.control.p,
            weights: [update_weights(0, gamma, nu), update_weights(1, gamma, nu)],
            noise_radius: law.support_radius(params.noise_variance(lane)),
            noise_law: law,
            params: params.clone(),
            lane,
        }
    }

    /// Draws `Θ ~ Bernoulli(p)` and the noise sample.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> InteractionDraw {
        let theta = u8::from(self.penetration > 0.0 && rng.random::<f64>() < self.penetration);
        let eta = if self.noise_radius == 0.0 {
            0.0
        } else {
            match self.noise_law {
                NoiseLaw::Uniform => self.noise_radius * (2.0 * rng.random::<f64>() - 1.0),
                NoiseLaw::TwoPoint => {
                    if rng.random::<bool>() {
                        self.noise_radius
                    } else {
                        -self.noise_radius
                    }
                }
            }
        };
        InteractionDraw { theta, eta }
    }

    /// Controlled update given a density already clamped into `[0,1]`.
    #[inline]
    pub fn apply(&self, v: f64, w: f64, rho: f64, draw: InteractionDraw) -> Outcome {
        let p = accel_prob(rho, self.mu);
        let i = interaction_with_p(v, w, p);
        let (a_int, a_ctl) = self.weights[usize::from(draw.theta)];
        let mut vp = v + a_int * i;
        if a_ctl != 0.0 {
            vp += a_ctl * (self.params.vbar(self.lane, rho) - v);
        }
        if draw.eta != 0.0 {
            vp += self.params.noise.diffusion(v, rho) * draw.eta;
        }
        admit(vp)
    }

    /// Kernel with every density-dependent factor evaluated once at `rho`.
    pub fn at_density(&self, rho: f64) -> FrozenKernel {
        FrozenKernel {
            accel: accel_prob(rho, self.mu),
            vbar: self.params.vbar(self.lane, rho),
            amplitude: self.params.noise.amplitude.eval(rho),
            penetration: self.penetration,
            weights: self.weights,
            noise_radius: self.noise_radius,
            noise_law: self.noise_law,
        }
    }
}

/// [`InteractionKernel`] specialised to one frozen local density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrozenKernel {
    accel: f64,
    vbar: f64,
    amplitude: f64,
    penetration: f64,
    weights: [(f64, f64); 2],
    noise_radius: f64,
    noise_law: NoiseLaw,
}

impl FrozenKernel {
    #[inline]
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> InteractionDraw {
        let theta = u8::from(self.penetration > 0.0 && rng.random::<f64>() < self.penetration);
        let eta = if self.noise_radius == 0.0 || self.amplitude == 0.0 {
            0.0
        } else {
            match self.noise_law {
                NoiseLaw::Uniform => self.noise_radius * (2.0 * rng.random::<f64>() - 1.0),
                NoiseLaw::TwoPoint => {
                    if rng.random::<bool>() {
                        self.noise_radius
                    } else {
                        -self.noise_radius
                    }
                }
            }
        };
        InteractionDraw { theta, eta }
    }

    #[inline]
    pub fn apply(&self, v: f64, w: f64, draw: InteractionDraw) -> Outcome {
        let i = interaction_with_p(v, w, self.accel);
        let (a_int, a_ctl) = self.weights[usize::from(draw.theta)];
        let mut vp = v + a_int * i;
        if a_ctl != 0.0 {
            vp += a_ctl * (self.vbar - v);
        }
        if draw.eta != 0.0 {
            vp += self.amplitude * (v * (1.0 - v)).max(0.0).sqrt() * draw.eta;
        }
        admit(vp)
    }
}
