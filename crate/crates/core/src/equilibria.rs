//! Stationary speed law of the quasi-invariant Fokker–Planck limit.
//!
//! With `D(v,ρ) = a(ρ)√(v(1−v))` the stationary profile of each lane is a
//! Beta law with mean `m̃∞(ρ)` and total shape `I + J = 2(1+p*)/(λa²)`.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::Serialize;
use statrs::function::beta::beta_reg;
use statrs::function::gamma::ln_gamma;

use crate::config::ModelParams;
use crate::error::ModelError;
use crate::moments::lane_asymptotic_speed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BetaEquilibrium {
    pub shape_i: f64,
    pub shape_j: f64,
    pub m_inf: f64,
    pub lane: usize,
}

/// Stationary law of one lane: a Beta profile or, without diffusion or at a
/// degenerate mean, a point mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SpeedEquilibrium {
    Beta(BetaEquilibrium),
    Dirac { at: f64, lane: usize },
}

impl SpeedEquilibrium {
    pub fn mean(&self) -> f64 {
        match self {
            SpeedEquilibrium::Beta(b) => b.mean(),
            SpeedEquilibrium::Dirac { at, .. } => *at,
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            SpeedEquilibrium::Beta(b) => equilibrium_variance(b),
            SpeedEquilibrium::Dirac { .. } => 0.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        match self {
            SpeedEquilibrium::Beta(b) => sample_equilibrium(n, b, rng),
            SpeedEquilibrium::Dirac { at, .. } => vec![*at; n],
        }
    }
}

impl BetaEquilibrium {
    /// Builds the law from its shapes, deriving the mean.
    pub fn from_shapes(shape_i: f64, shape_j: f64, lane: usize) -> Self {
        assert!(
            shape_i > 0.0 && shape_j > 0.0,
            "Beta shapes must be positive"
        );
        Self {
            shape_i,
            shape_j,
            m_inf: shape_i / (shape_i + shape_j),
            lane,
        }
    }

    pub fn mean(&self) -> f64 {
        self.shape_i / (self.shape_i + self.shape_j)
    }

    fn ln_beta(&self) -> f64 {
        ln_gamma(self.shape_i) + ln_gamma(self.shape_j) - ln_gamma(self.shape_i + self.shape_j)
    }
}

/// `λa²` of `lane` at density `ρ`.
fn spread(rho: f64, params: &ModelParams, lane: usize) -> f64 {
    let a = params.noise.amplitude.eval(rho);
    params.noise.lambda[lane] * a * a
}

/// Shape parameters `I = 2(1+p*)m̃∞/(λa²)`, `J = 2(1+p*)(1−m̃∞)/(λa²)`.
pub fn beta_parameters(
    rho: f64,
    params: &ModelParams,
    lane: usize,
) -> Result<BetaEquilibrium, ModelError> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(ModelError::Domain {
            name: "rho",
            value: rho,
        });
    }
    let s = spread(rho, params, lane);
    if s == 0.0 {
        return Err(ModelError::DiracEquilibrium);
    }
    let m = lane_asymptotic_speed(rho, params, lane);
    let scale = 2.0 * (1.0 + params.pstar(lane)) / s;
    Ok(BetaEquilibrium {
        shape_i: scale * m,
        shape_j: scale * (1.0 - m),
        m_inf: m,
        lane,
    })
}

/// Stationary law of `lane`, falling back to a point mass at `m̃∞` when the
/// diffusion vanishes or the mean sits on an endpoint.
pub fn lane_equilibrium(
    rho: f64,
    params: &ModelParams,
    lane: usize,
) -> Result<SpeedEquilibrium, ModelError> {
    match beta_parameters(rho, params, lane) {
        Ok(b) if b.shape_i > 0.0 && b.shape_j > 0.0 => Ok(SpeedEquilibrium::Beta(b)),
        Ok(b) => Ok(SpeedEquilibrium::Dirac { at: b.m_inf, lane }),
        Err(ModelError::DiracEquilibrium) => Ok(SpeedEquilibrium::Dirac {
            at: lane_asymptotic_speed(rho, params, lane),
            lane,
        }),
        Err(e) => Err(e),
    }
}

/// Beta density from `v` and `1 − v` supplied separately, so that both
/// endpoints can be approached without cancellation.
pub fn equilibrium_pdf_split(v: f64, one_minus_v: f64, eq: &BetaEquilibrium) -> f64 {
    let (i, j) = (eq.shape_i, eq.shape_j);
    let endpoint = |x: f64, shape: f64| -> Option<f64> {
        if x > 0.0 {
            return None;
        }
        Some(if shape < 1.0 {
            f64::INFINITY
        } else if shape > 1.0 {
            0.0
        } else {
            f64::NAN
        })
    };
    match (endpoint(v, i), endpoint(one_minus_v, j)) {
        (Some(x), _) if !x.is_nan() => return x,
        (_, Some(y)) if !y.is_nan() => return y,
        _ => {}
    }
    let lv = if v > 0.0 { (i - 1.0) * v.ln() } else { 0.0 };
    let lw = if one_minus_v > 0.0 {
        (j - 1.0) * one_minus_v.ln()
    } else {
        0.0
    };
    (lv + lw - eq.ln_beta()).exp()
}

/// Beta density `v^{I−1}(1−v)^{J−1}/B(I,J)`. At an endpoint with a negative
/// exponent the value is `+∞`.
pub fn equilibrium_pdf(v: f64, eq: &BetaEquilibrium) -> f64 {
    equilibrium_pdf_split(v, 1.0 - v, eq)
}

/// `IJ/((I+J)²(I+J+1))`.
pub fn equilibrium_variance(eq: &BetaEquilibrium) -> f64 {
    let (i, j) = (eq.shape_i, eq.shape_j);
    let s = i + j;
    i * j / (s * s * (s + 1.0))
}

/// `λa²m(1−m)/(2 + λa² + 2p*)`, the variance written in model parameters.
pub fn model_variance(rho: f64, params: &ModelParams, lane: usize) -> f64 {
    let s = spread(rho, params, lane);
    let m = lane_asymptotic_speed(rho, params, lane);
    s * m * (1.0 - m) / (2.0 + s + 2.0 * params.pstar(lane))
}

/// I.i.d. Beta samples from the ratio of two Gamma draws.
pub fn sample_equilibrium<R: Rng + ?Sized>(
    n: usize,
    eq: &BetaEquilibrium,
    rng: &mut R,
) -> Vec<f64> {
    let gi = Gamma::new(eq.shape_i, 1.0).expect("positive shape");
    let gj = Gamma::new(eq.shape_j, 1.0).expect("positive shape");
    (0..n)
        .map(|_| loop {
            let x: f64 = gi.sample(rng);
            let y: f64 = gj.sample(rng);
            if x + y > 0.0 {
                break x / (x + y);
            }
        })
        .collect()
}

/// Probability mass of each of `nbins` equal bins on `[0,1]`.
pub fn bin_probabilities(eq: &BetaEquilibrium, nbins: usize) -> Vec<f64> {
    let cdf = |x: f64| {
        if x <= 0.0 {
            0.0
        } else if x >= 1.0 {
            1.0
        } else {
            beta_reg(eq.shape_i, eq.shape_j, x)
        }
    };
    (0..nbins)
        .map(|k| {
            let lo = k as f64 / nbins as f64;
            let hi = (k + 1) as f64 / nbins as f64;
            (cdf(hi) - cdf(lo)).max(0.0)
        })
        .collect()
}

/// Normalized histogram of `samples` on `nbins` equal bins (values sum to 1).
pub fn histogram(samples: &[f64], nbins: usize) -> Vec<f64> {
    let mut h = vec![0.0; nbins];
    for &v in samples {
        let k = ((v * nbins as f64) as usize).min(nbins - 1);
        h[k] += 1.0;
    }
    let n = samples.len().max(1) as f64;
    h.iter_mut().for_each(|x| *x /= n);
    h
}

/// `∫|f_emp − f|dv` between a normalized histogram and the Beta law, using
/// exact bin masses for the Beta side.
pub fn l1_histogram_distance(bin_mass: &[f64], eq: &BetaEquilibrium) -> f64 {
    let exact = bin_probabilities(eq, bin_mass.len());
    bin_mass
        .iter()
        .zip(&exact)
        .map(|(a, b)| (a - b).abs())
        .sum()
}

/// Rows `(v, pdf, empirical density)` at bin centres, for plotting.
pub fn histogram_table(bin_mass: &[f64], eq: &BetaEquilibrium) -> Vec<(f64, f64, f64)> {
    let n = bin_mass.len() as f64;
    bin_mass
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let v = (k as f64 + 0.5) / n;
            (v, equilibrium_pdf(v, eq), m * n)
        })
        .collect()
}
