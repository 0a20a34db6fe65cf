//! Model parameters, experiment descriptions and their validation.
//!
//! Configuration lives in a single JSON document with two sections,
//! `model` and `experiment`. Every struct rejects unknown keys so that a
//! typo in a parameter sweep fails loudly instead of silently falling back
//! to a default.

use serde::de::{self, Deserializer, Visitor};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::ConfigError;

/// Number of points used when checking that a recommended speed maps
/// `[0,1]` into `[0,1]`.
const PROFILE_CHECK_POINTS: usize = 1001;

/// Control penalization `κ`. `+∞` means the lane is uncontrolled.
///
/// In JSON a finite value is a number; the uncontrolled case is the
/// string `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Penalization(pub f64);

impl Penalization {
    pub const UNCONTROLLED: Penalization = Penalization(f64::INFINITY);

    pub fn is_uncontrolled(self) -> bool {
        self.0.is_infinite()
    }
}

impl Default for Penalization {
    fn default() -> Self {
        Self::UNCONTROLLED
    }
}

impl fmt::Display for Penalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_uncontrolled() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl Serialize for Penalization {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.is_uncontrolled() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Penalization {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct PenVisitor;
        impl Visitor<'_> for PenVisitor {
            type Value = Penalization;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a positive number or the string \"inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Penalization, E> {
                Ok(Penalization(v))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Penalization, E> {
                Ok(Penalization(v as f64))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Penalization, E> {
                Ok(Penalization(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Penalization, E> {
                match v {
                    "inf" | "+inf" | "infinity" => Ok(Penalization::UNCONTROLLED),
                    other => other
                        .parse::<f64>()
                        .map(Penalization)
                        .map_err(|_| E::invalid_value(de::Unexpected::Str(other), &self)),
                }
            }
        }
        d.deserialize_any(PenVisitor)
    }
}

/// Recommended speed `v̄(ρ)` prescribed to driver-assist vehicles.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SpeedProfile {
    /// `v̄(ρ) = c`
    Constant(f64),
    /// `v̄(ρ) = 1 − ρ`
    #[default]
    Linear,
}

impl SpeedProfile {
    #[inline]
    pub fn eval(&self, rho: f64) -> f64 {
        match *self {
            SpeedProfile::Constant(c) => c,
            SpeedProfile::Linear => 1.0 - rho,
        }
    }
}

/// Diffusion amplitude `a(ρ)` in `D(v,ρ) = a(ρ)√(v(1−v))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Amplitude {
    Constant(f64),
    /// Piecewise-linear table, constant extrapolation outside the nodes.
    Table {
        rho: Vec<f64>,
        a: Vec<f64>,
    },
}

impl Default for Amplitude {
    fn default() -> Self {
        Amplitude::Constant(1.0)
    }
}

impl Amplitude {
    pub fn eval(&self, rho: f64) -> f64 {
        match self {
            Amplitude::Constant(a) => *a,
            Amplitude::Table { rho: xs, a: ys } => {
                if rho <= xs[0] {
                    return ys[0];
                }
                let last = xs.len() - 1;
                if rho >= xs[last] {
                    return ys[last];
                }
                let k = xs.partition_point(|&x| x <= rho) - 1;
                let s = (rho - xs[k]) / (xs[k + 1] - xs[k]);
                ys[k] + s * (ys[k + 1] - ys[k])
            }
        }
    }
}

/// Law of the zero-mean noise `η`. Both laws are bounded and symmetric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseLaw {
    /// Uniform on `[−√3σ, √3σ]`.
    #[default]
    Uniform,
    /// `±σ` with probability one half each.
    TwoPoint,
}

impl NoiseLaw {
    /// Half-width of the support for a given variance.
    pub fn support_radius(self, variance: f64) -> f64 {
        match self {
            NoiseLaw::Uniform => (3.0 * variance).sqrt(),
            NoiseLaw::TwoPoint => variance.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSpec {
    #[serde(default)]
    pub p: f64,
    #[serde(default)]
    pub kappa: [Penalization; 2],
    #[serde(default)]
    pub recommended_speed: [SpeedProfile; 2],
}

impl Default for ControlSpec {
    fn default() -> Self {
        Self {
            p: 0.0,
            kappa: [Penalization::UNCONTROLLED; 2],
            recommended_speed: [SpeedProfile::Linear; 2],
        }
    }
}

impl ControlSpec {
    /// Effective penetration `p* = p/κ`, zero for an uncontrolled lane.
    pub fn effective_penetration(&self, lane: usize) -> f64 {
        let kappa = self.kappa[lane];
        if kappa.is_uncontrolled() || self.p == 0.0 {
            0.0
        } else {
            self.p / kappa.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// Scaled variances `λᵢ`; the noise variance is `σᵢ² = γλᵢ`.
    #[serde(default)]
    pub lambda: [f64; 2],
    #[serde(default)]
    pub amplitude: Amplitude,
    #[serde(default)]
    pub law: NoiseLaw,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            lambda: [0.0; 2],
            amplitude: Amplitude::default(),
            law: NoiseLaw::default(),
        }
    }
}

impl NoiseSpec {
    /// Diffusion coefficient `D(v,ρ) = a(ρ)√(v(1−v))`.
    #[inline]
    pub fn diffusion(&self, v: f64, rho: f64) -> f64 {
        self.amplitude.eval(rho) * (v * (1.0 - v)).max(0.0).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VelocityCoupling {
    pub a_offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchingSpec {
    #[serde(default)]
    pub beta: [f64; 2],
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Rescaled rates `cᵢ = βᵢ/ε` of the slow-switching regime.
    #[serde(default)]
    pub regime_rates: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity_coupling: Option<VelocityCoupling>,
}

fn default_alpha() -> f64 {
    1.0
}

impl Default for SwitchingSpec {
    fn default() -> Self {
        Self {
            beta: [0.0; 2],
            alpha: 1.0,
            regime_rates: [0.0; 2],
            velocity_coupling: None,
        }
    }
}

impl SwitchingSpec {
    /// Same spec with the base rates replaced.
    pub fn with_beta(&self, beta: [f64; 2]) -> Self {
        Self {
            beta,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub gamma: f64,
    pub mu: f64,
    #[serde(default)]
    pub control: ControlSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub switching: SwitchingSpec,
}

impl ModelParams {
    /// Control penalty weight `νᵢ = κᵢγ` (infinite when uncontrolled).
    pub fn nu(&self, lane: usize) -> f64 {
        self.control.kappa[lane].0 * self.gamma
    }

    pub fn pstar(&self, lane: usize) -> f64 {
        self.control.effective_penetration(lane)
    }

    pub fn vbar(&self, lane: usize, rho: f64) -> f64 {
        self.control.recommended_speed[lane].eval(rho)
    }

    /// Noise variance `σᵢ² = γλᵢ`.
    pub fn noise_variance(&self, lane: usize) -> f64 {
        self.gamma * self.noise.lambda[lane]
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        check(
            self.gamma > 0.0 && self.gamma <= 1.0,
            "model.gamma",
            "must lie in (0,1]",
        )?;
        check(
            self.mu > 0.0 && self.mu.is_finite(),
            "model.mu",
            "must be > 0",
        )?;

        let c = &self.control;
        check(
            (0.0..=1.0).contains(&c.p),
            "model.control.p",
            "must lie in [0,1]",
        )?;
        for (i, k) in c.kappa.iter().enumerate() {
            check(
                k.0 > 0.0,
                &format!("model.control.kappa[{i}]"),
                "must be > 0 or \"inf\"",
            )?;
        }
        for (i, prof) in c.recommended_speed.iter().enumerate() {
            let ok = (0..PROFILE_CHECK_POINTS).all(|k| {
                let rho = k as f64 / (PROFILE_CHECK_POINTS - 1) as f64;
                let v = prof.eval(rho);
                (0.0..=1.0).contains(&v)
            });
            check(
                ok,
                &format!("model.control.recommended_speed[{i}]"),
                "must map [0,1] into [0,1]",
            )?;
        }

        let n = &self.noise;
        for (i, l) in n.lambda.iter().enumerate() {
            check(
                *l >= 0.0 && l.is_finite(),
                &format!("model.noise.lambda[{i}]"),
                "must be >= 0",
            )?;
        }
        match &n.amplitude {
            Amplitude::Constant(a) => check(
                *a >= 0.0 && a.is_finite(),
                "model.noise.amplitude",
                "must be >= 0",
            )?,
            Amplitude::Table { rho, a } => {
                check(
                    rho.len() >= 2 && rho.len() == a.len(),
                    "model.noise.amplitude.table",
                    "needs at least two nodes and equal-length rho/a",
                )?;
                check(
                    rho.windows(2).all(|w| w[0] < w[1])
                        && rho.iter().all(|r| (0.0..=1.0).contains(r)),
                    "model.noise.amplitude.table.rho",
                    "must be strictly increasing within [0,1]",
                )?;
                check(
                    a.iter().all(|v| *v >= 0.0 && v.is_finite()),
                    "model.noise.amplitude.table.a",
                    "must be >= 0",
                )?;
            }
        }

        let s = &self.switching;
        for (i, b) in s.beta.iter().enumerate() {
            check(
                *b >= 0.0 && b.is_finite(),
                &format!("model.switching.beta[{i}]"),
                "must be >= 0",
            )?;
        }
        for (i, r) in s.regime_rates.iter().enumerate() {
            check(
                *r >= 0.0 && r.is_finite(),
                &format!("model.switching.regime_rates[{i}]"),
                "must be >= 0",
            )?;
        }
        check(
            s.alpha > 0.0 && s.alpha.is_finite(),
            "model.switching.alpha",
            "must be > 0",
        )?;
        if let Some(vc) = s.velocity_coupling {
            check(
                vc.a_offset > 0.0 && vc.a_offset < 1.0,
                "model.switching.velocity_coupling.a_offset",
                "must lie in (0,1)",
            )?;
        }
        Ok(())
    }
}

fn check(ok: bool, field: &str, constraint: &str) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::Invalid {
            field: field.to_string(),
            constraint: constraint.to_string(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    #[default]
    Homogeneous,
    Diagram,
    Dsmc,
    Hydro,
    Compare,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Homogeneous => "homogeneous",
            ExperimentKind::Diagram => "diagram",
            ExperimentKind::Dsmc => "dsmc",
            ExperimentKind::Hydro => "hydro",
            ExperimentKind::Compare => "compare",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HydroRegime {
    Collision,
    Fast,
    #[default]
    Slow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationSpec {
    #[serde(default = "default_domain")]
    pub domain: [f64; 2],
    #[serde(default = "default_nx")]
    pub nx: usize,
    #[serde(default = "default_nv")]
    pub nv: usize,
    /// Kinetic time step; `None` means `Δt = ε`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Total particle count over both lanes.
    #[serde(default = "default_particles")]
    pub particles: usize,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default = "default_order")]
    pub order: u8,
}

fn default_domain() -> [f64; 2] {
    [-2.0, 2.0]
}
fn default_nx() -> usize {
    21
}
fn default_nv() -> usize {
    128
}
fn default_particles() -> usize {
    100_000
}
fn default_cfl() -> f64 {
    0.4
}
fn default_order() -> u8 {
    2
}

impl Default for DiscretizationSpec {
    fn default() -> Self {
        Self {
            domain: default_domain(),
            nx: default_nx(),
            nv: default_nv(),
            dt: None,
            particles: default_particles(),
            cfl: default_cfl(),
            order: default_order(),
        }
    }
}

/// A rectangle in phase space `[x₀,x₁] × [v₀,v₁]` carrying uniform
/// macroscopic density `density` (so `f = density/(v₁−v₀)` inside).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseBox {
    /// Lane label, 1 or 2.
    pub lane: u8,
    pub x: [f64; 2],
    pub v: [f64; 2],
    pub density: f64,
}

impl PhaseBox {
    pub fn mass(&self) -> f64 {
        self.density * (self.x[1] - self.x[0])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinInitial {
    Test1,
    Test2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialCondition {
    Builtin(BuiltinInitial),
    Boxes { boxes: Vec<PhaseBox> },
}

impl Default for InitialCondition {
    fn default() -> Self {
        InitialCondition::Builtin(BuiltinInitial::Test1)
    }
}

impl InitialCondition {
    pub const RHO_LEFT: f64 = 0.8;
    pub const RHO_RIGHT: f64 = 0.2;

    /// Expands built-ins into their phase-space boxes.
    pub fn boxes(&self) -> Vec<PhaseBox> {
        let b = |lane, x: [f64; 2], v: [f64; 2], density| PhaseBox {
            lane,
            x,
            v,
            density,
        };
        match self {
            InitialCondition::Builtin(BuiltinInitial::Test1) => vec![
                b(1, [-1.0, 0.0], [0.0, 0.5], 1.0),
                b(2, [-2.0, -1.0], [0.0, 0.5], 1.0),
            ],
            InitialCondition::Builtin(BuiltinInitial::Test2) => vec![
                b(1, [-1.0, 0.0], [0.0, 0.5], Self::RHO_LEFT),
                b(1, [0.0, 1.0], [0.0, 0.5], Self::RHO_RIGHT),
                b(2, [-2.0, -1.0], [0.5, 1.0], Self::RHO_LEFT),
                b(2, [-1.0, 0.0], [0.5, 1.0], Self::RHO_RIGHT),
            ],
            InitialCondition::Boxes { boxes } => boxes.clone(),
        }
    }

    /// Macroscopic density of `lane` (0-based) at `x`.
    pub fn density_at(&self, lane: usize, x: f64) -> f64 {
        self.boxes()
            .iter()
            .filter(|b| b.lane as usize == lane + 1 && x >= b.x[0] && x < b.x[1])
            .map(|b| b.density)
            .sum()
    }

    fn validate(&self, domain: [f64; 2]) -> Result<(), ConfigError> {
        for (i, b) in self.boxes().iter().enumerate() {
            let field = format!("experiment.initial_condition.boxes[{i}]");
            check(b.lane == 1 || b.lane == 2, &field, "lane must be 1 or 2")?;
            check(b.density >= 0.0, &field, "density must be >= 0")?;
            check(
                b.x[0] >= domain[0] && b.x[1] <= domain[1] && b.x[0] <= b.x[1],
                &field,
                "x-interval must be ordered and inside the domain",
            )?;
            check(
                b.v[0] >= 0.0 && b.v[1] <= 1.0 && b.v[0] <= b.v[1],
                &field,
                "v-interval must be ordered and inside [0,1]",
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentSystem {
    /// Quasi-invariant scaled system in time `τ = t/γ`.
    #[default]
    Scaled,
    /// Unscaled system in time `t`, with `ν = κγ`.
    General,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomogeneousSpec {
    #[serde(default = "default_rho0")]
    pub rho0: [f64; 2],
    #[serde(default = "default_m0")]
    pub m0: [f64; 2],
    #[serde(default = "default_e0")]
    pub e0: [f64; 2],
    #[serde(default)]
    pub system: MomentSystem,
    #[serde(default = "default_moment_dt")]
    pub dt: f64,
    /// Write every n-th integrator step.
    #[serde(default = "default_one")]
    pub sample_every: usize,
    /// Append closed-form large-time mean speeds as extra columns.
    #[serde(default)]
    pub asymptotes: bool,
}

fn default_rho0() -> [f64; 2] {
    [0.8, 0.2]
}
fn default_m0() -> [f64; 2] {
    [0.5, 0.5]
}
fn default_e0() -> [f64; 2] {
    [0.3, 0.3]
}
fn default_moment_dt() -> f64 {
    1e-3
}
fn default_one() -> usize {
    1
}

impl Default for HomogeneousSpec {
    fn default() -> Self {
        Self {
            rho0: default_rho0(),
            m0: default_m0(),
            e0: default_e0(),
            system: MomentSystem::default(),
            dt: default_moment_dt(),
            sample_every: 1,
            asymptotes: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagramSpec {
    #[serde(default = "default_diagram_points")]
    pub points: usize,
    /// One diagram family per entry; `"inf"` yields the uncontrolled baseline.
    #[serde(default = "default_diagram_kappas")]
    pub kappas: Vec<Penalization>,
    /// Fraction of the total density initially placed in lane 1.
    #[serde(default = "default_half")]
    pub initial_split: f64,
    #[serde(default = "default_true")]
    pub ode_cross_check: bool,
}

fn default_diagram_points() -> usize {
    101
}
fn default_diagram_kappas() -> Vec<Penalization> {
    vec![Penalization::UNCONTROLLED, Penalization(1e-2)]
}
fn default_half() -> f64 {
    0.5
}
fn default_true() -> bool {
    true
}

impl Default for DiagramSpec {
    fn default() -> Self {
        Self {
            points: default_diagram_points(),
            kappas: default_diagram_kappas(),
            initial_split: 0.5,
            ode_cross_check: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaneFluxKind {
    /// `ρ m̃∞(ρ)` with the configured control.
    #[default]
    Controlled,
    /// `ρ v̄(ρ)`, the full-authority limit of the control.
    Aligned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FastFluxVariant {
    /// `F = ρ₁m₁ + ρ₂m₂`, the sum of the lane fluxes.
    #[default]
    Weighted,
    /// `F = m₁ + m₂`, kept for comparison only.
    LiteralSum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HydroSpec {
    #[serde(default)]
    pub flux: LaneFluxKind,
    #[serde(default)]
    pub fast_flux: FastFluxVariant,
    #[serde(default = "default_table_nodes")]
    pub table_nodes: usize,
    /// Fine grid used for the hydrodynamic reference in `compare`.
    #[serde(default = "default_reference_nx")]
    pub reference_nx: usize,
}

fn default_table_nodes() -> usize {
    1025
}
fn default_reference_nx() -> usize {
    420
}

impl Default for HydroSpec {
    fn default() -> Self {
        Self {
            flux: LaneFluxKind::default(),
            fast_flux: FastFluxVariant::default(),
            table_nodes: default_table_nodes(),
            reference_nx: default_reference_nx(),
        }
    }
}

/// How the collision step scales with the interaction strength `γ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollisionScaling {
    /// Interaction frequency `1/(εγ)`: relaxation happens on the `ε` scale for
    /// any `γ`, and the particle dynamics approach the Fokker–Planck limit as
    /// `γ → 0`. Steps are sub-cycled so that `Δt_sub ≤ εγ`.
    #[default]
    QuasiInvariant,
    /// Interaction frequency `1/ε` with kicks of size `γ`.
    Kinetic,
}

/// How configured switching rates enter the particle solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchingScaling {
    /// Flip rate `β/ε`, the hyperbolically scaled kinetic system.
    #[default]
    Hyperbolic,
    /// Flip rate `β` as written.
    Unscaled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DsmcSpec {
    #[serde(default)]
    pub collision_scaling: CollisionScaling,
    #[serde(default)]
    pub switching_scaling: SwitchingScaling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub kind: ExperimentKind,
    #[serde(default = "default_final_time")]
    pub final_time: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Kinetic scales swept by `compare`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub hydro_regime: HydroRegime,
    #[serde(default)]
    pub discretization: DiscretizationSpec,
    #[serde(default)]
    pub initial_condition: InitialCondition,
    /// Snapshot times; the final time is always written.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub snapshots: Vec<f64>,
    #[serde(default)]
    pub homogeneous: HomogeneousSpec,
    #[serde(default)]
    pub diagram: DiagramSpec,
    #[serde(default)]
    pub hydro: HydroSpec,
    #[serde(default)]
    pub dsmc: DsmcSpec,
    /// Also write the `x,v,f1,f2` phase-space histogram for DSMC snapshots.
    #[serde(default)]
    pub phase_histogram: bool,
}

fn default_final_time() -> f64 {
    1.0
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::default(),
            final_time: default_final_time(),
            seed: 0,
            epsilon: None,
            epsilons: Vec::new(),
            hydro_regime: HydroRegime::default(),
            discretization: DiscretizationSpec::default(),
            initial_condition: InitialCondition::default(),
            snapshots: Vec::new(),
            homogeneous: HomogeneousSpec::default(),
            diagram: DiagramSpec::default(),
            hydro: HydroSpec::default(),
            dsmc: DsmcSpec::default(),
            phase_histogram: false,
        }
    }
}

impl ExperimentSpec {
    /// Kinetic time step, defaulting to `Δt = ε`.
    pub fn kinetic_dt(&self, epsilon: f64) -> f64 {
        self.discretization.dt.unwrap_or(epsilon)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        check(
            self.final_time > 0.0 && self.final_time.is_finite(),
            "experiment.final_time",
            "must be > 0",
        )?;
        let d = &self.discretization;
        check(
            d.domain[0] < d.domain[1],
            "experiment.discretization.domain",
            "x_min must be < x_max",
        )?;
        check(d.nx >= 1, "experiment.discretization.nx", "must be >= 1")?;
        check(d.nv >= 1, "experiment.discretization.nv", "must be >= 1")?;
        check(
            d.particles >= 1,
            "experiment.discretization.particles",
            "must be >= 1",
        )?;
        if let Some(dt) = d.dt {
            check(dt > 0.0, "experiment.discretization.dt", "must be > 0")?;
        }
        check(
            d.cfl > 0.0 && d.cfl < 1.0,
            "experiment.discretization.cfl",
            "must lie in (0,1)",
        )?;
        check(
            matches!(d.order, 1 | 2 | 5),
            "experiment.discretization.order",
            "must be 1, 2 or 5",
        )?;
        if let Some(eps) = self.epsilon {
            check(eps > 0.0, "experiment.epsilon", "must be > 0")?;
        }
        match self.kind {
            ExperimentKind::Dsmc => check(
                self.epsilon.is_some(),
                "experiment.epsilon",
                "is required for dsmc runs",
            )?,
            ExperimentKind::Compare => check(
                !self.epsilons.is_empty() && self.epsilons.iter().all(|e| *e > 0.0),
                "experiment.epsilons",
                "compare needs a non-empty list of positive values",
            )?,
            _ => {}
        }
        self.initial_condition.validate(d.domain)?;
        for (i, t) in self.snapshots.iter().enumerate() {
            check(
                *t >= 0.0 && *t <= self.final_time,
                &format!("experiment.snapshots[{i}]"),
                "must lie in [0, final_time]",
            )?;
        }
        let h = &self.homogeneous;
        for (name, pair) in [("rho0", h.rho0), ("m0", h.m0), ("e0", h.e0)] {
            check(
                pair.iter().all(|x| (0.0..=1.0).contains(x)),
                &format!("experiment.homogeneous.{name}"),
                "entries must lie in [0,1]",
            )?;
        }
        check(h.dt > 0.0, "experiment.homogeneous.dt", "must be > 0")?;
        check(
            h.sample_every >= 1,
            "experiment.homogeneous.sample_every",
            "must be >= 1",
        )?;
        let g = &self.diagram;
        check(g.points >= 1, "experiment.diagram.points", "must be >= 1")?;
        check(
            g.kappas.iter().all(|k| k.0 > 0.0),
            "experiment.diagram.kappas",
            "entries must be > 0 or \"inf\"",
        )?;
        check(
            (0.0..=1.0).contains(&g.initial_split),
            "experiment.diagram.initial_split",
            "must lie in [0,1]",
        )?;
        check(
            self.hydro.table_nodes >= 2,
            "experiment.hydro.table_nodes",
            "must be >= 2",
        )?;
        check(
            self.hydro.reference_nx >= 1,
            "experiment.hydro.reference_nx",
            "must be >= 1",
        )?;
        Ok(())
    }
}

/// Top-level configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    pub model: ModelParams,
    #[serde(default)]
    pub experiment: ExperimentSpec,
}

impl ConfigDocument {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model.validate()?;
        self.experiment.validate()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Parses and validates a JSON configuration document.
pub fn load_config(text: &str) -> Result<(ModelParams, ExperimentSpec), ConfigError> {
    let doc = parse_document(text)?;
    Ok((doc.model, doc.experiment))
}

/// Like [`load_config`] but keeps the document together.
pub fn parse_document(text: &str) -> Result<ConfigDocument, ConfigError> {
    let doc: ConfigDocument = serde_json::from_str(text).map_err(ConfigError::Parse)?;
    doc.validate()?;
    Ok(doc)
}

/// Parses a document after applying `key=value` overrides, where `key` is a
/// dotted path such as `model.control.p` and `value` is JSON (bare strings
/// are accepted as strings).
pub fn parse_with_overrides(
    text: &str,
    overrides: &[String],
) -> Result<ConfigDocument, ConfigError> {
    let mut value: serde_json::Value = serde_json::from_str(text).map_err(ConfigError::Parse)?;
    for ov in overrides {
        let (key, raw) = ov.split_once('=').ok_or_else(|| ConfigError::Override {
            entry: ov.clone(),
            reason: "expected KEY=VALUE".into(),
        })?;
        let parsed: serde_json::Value = serde_json::from_str(raw)
            .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
        set_path(&mut value, key, parsed).map_err(|reason| ConfigError::Override {
            entry: ov.clone(),
            reason,
        })?;
    }
    let doc: ConfigDocument = serde_json::from_value(value).map_err(ConfigError::Parse)?;
    doc.validate()?;
    Ok(doc)
}

fn set_path(root: &mut serde_json::Value, key: &str, val: serde_json::Value) -> Result<(), String> {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (depth, part) in parts.iter().enumerate() {
        let last = depth + 1 == parts.len();
        if let Ok(idx) = part.parse::<usize>() {
            let arr = cur
                .as_array_mut()
                .ok_or_else(|| format!("`{part}` indexes a non-array"))?;
            let slot = arr
                .get_mut(idx)
                .ok_or_else(|| format!("index {idx} out of range"))?;
            if last {
                *slot = val;
                return Ok(());
            }
            cur = slot;
        } else {
            let obj = cur
                .as_object_mut()
                .ok_or_else(|| format!("`{part}` addresses a non-object"))?;
            if last {
                obj.insert(part.to_string(), val);
                return Ok(());
            }
            cur = obj
                .entry(part.to_string())
                .or_insert_with(|| serde_json::Value::Object(Default::default()));
        }
    }
    Err("empty key".into())
}
