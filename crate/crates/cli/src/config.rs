//! Experiment configuration: one TOML document per experiment kind.
//!
//! Top-level keys shared by every kind are `kind`, `seed` and `[output]`.
//! Everything else belongs to the kind's own schema and unknown keys are
//! rejected.

use std::fmt;
use std::path::{Path, PathBuf};

use ougap::{PotentialKind, Preset, Space};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Sigma1,
    Identities,
    Semiclassical,
    Simulate,
    Bounds,
    KernelAsymptotics,
}

impl Kind {
    pub fn name(&self) -> &'static str {
        match self {
            Kind::Sigma1 => "sigma1",
            Kind::Identities => "identities",
            Kind::Semiclassical => "semiclassical",
            Kind::Simulate => "simulate",
            Kind::Bounds => "bounds",
            Kind::KernelAsymptotics => "kernel_asymptotics",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    pub dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Body {
    Sigma1(Sigma1Config),
    Identities(IdentitiesConfig),
    Semiclassical(SemiclassicalConfig),
    Simulate(SimulateConfig),
    Bounds(BoundsConfig),
    KernelAsymptotics(KernelConfig),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub seed: u64,
    pub output: Output,
    pub body: Body,
}

// ---- shared blocks ----

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum GeometrySpec {
    /// sectional curvature κ on the orthogonal directions
    Constant { n: usize, d: f64, kappa: f64 },
    /// geodesic of length d ending at the pole of a rotationally symmetric metric
    Radial { n: usize, d: f64, profile: Preset },
}

impl GeometrySpec {
    pub fn tag(&self) -> String {
        match self {
            GeometrySpec::Constant { kappa, .. } => format!("constant({kappa})"),
            GeometrySpec::Radial { profile, .. } => format!("radial:{}", profile.tag()),
        }
    }

    pub fn d(&self) -> f64 {
        match self {
            GeometrySpec::Constant { d, .. } | GeometrySpec::Radial { d, .. } => *d,
        }
    }

    fn validate(&self) -> Result<(), String> {
        let (n, d) = match self {
            GeometrySpec::Constant { n, d, .. } | GeometrySpec::Radial { n, d, .. } => (*n, *d),
        };
        if n < 2 {
            return Err("geometry.n must be at least 2".into());
        }
        positive("geometry.d", d)?;
        match self {
            GeometrySpec::Constant { kappa, .. } => {
                finite("geometry.kappa", *kappa)?;
                if kappa * d * d >= std::f64::consts::PI.powi(2) {
                    return Err("geometry: kappa·d² must stay below π² (no conjugate points)".into());
                }
                Ok(())
            }
            GeometrySpec::Radial { profile, .. } => ougap::radial::build_profile(profile).map(|_| ()).map_err(|e| e.to_string()),
        }
    }
}

fn default_steps() -> usize {
    4096
}
fn default_grading() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorNumeric {
    pub m: Vec<usize>,
    /// Jacobi integration steps
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// grid exponent p in t = 1 − (1−u)^p
    #[serde(default = "default_grading")]
    pub grading: f64,
}

impl OperatorNumeric {
    fn validate(&self) -> Result<(), String> {
        nonempty("numeric.m", &self.m)?;
        if self.m.iter().any(|m| *m < 4) {
            return Err("numeric.m entries must be at least 4".into());
        }
        if self.steps < 128 {
            return Err("numeric.steps must be at least 128".into());
        }
        if !(self.grading >= 1.0) {
            return Err("numeric.grading must be at least 1".into());
        }
        Ok(())
    }
}

// ---- sigma1 ----

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sigma1Tolerance {
    /// |σ₁ − closed form| for constant curvature
    #[serde(default = "d_closed_form")]
    pub closed_form: f64,
    /// |via_eig − via_opnorm|
    #[serde(default = "d_agree")]
    pub agree: f64,
    /// max_t ‖A − Aᵀ‖, for the Riccati A and for tW′W⁻¹
    #[serde(default = "d_symmetry")]
    pub symmetry: f64,
    /// Riccati against direct A = tW′W⁻¹
    #[serde(default = "d_riccati")]
    pub riccati: f64,
}
fn d_symmetry() -> f64 {
    1e-8
}
fn d_riccati() -> f64 {
    1e-6
}
fn d_closed_form() -> f64 {
    2e-3
}
fn d_agree() -> f64 {
    5e-3
}

impl Default for Sigma1Tolerance {
    fn default() -> Self {
        Sigma1Tolerance { closed_form: d_closed_form(), agree: d_agree(), symmetry: d_symmetry(), riccati: d_riccati() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sigma1Config {
    pub geometry: Vec<GeometrySpec>,
    pub numeric: OperatorNumeric,
    #[serde(default)]
    pub tolerance: Sigma1Tolerance,
}

// ---- identities ----

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentityNumeric {
    pub m: Vec<usize>,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "identity_grading")]
    pub grading: f64,
}
fn identity_grading() -> f64 {
    ougap::operators::IDENTITY_GRADING
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentityTolerance {
    #[serde(default = "d_residual")]
    pub residual: f64,
    /// each residual must shrink by at least this factor between consecutive m
    #[serde(default = "d_decay")]
    pub decay: f64,
    /// residuals already below this are at roundoff level and exempt from the decay test
    #[serde(default = "d_floor")]
    pub floor: f64,
}
fn d_floor() -> f64 {
    1e-9
}
fn d_residual() -> f64 {
    1e-3
}
fn d_decay() -> f64 {
    2.0
}

impl Default for IdentityTolerance {
    fn default() -> Self {
        IdentityTolerance { residual: d_residual(), decay: d_decay(), floor: d_floor() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbSpec {
    pub geometry: GeometrySpec,
    pub eps: Vec<f64>,
    pub delta: f64,
    #[serde(default = "d_perturb_m")]
    pub m: usize,
    #[serde(default = "d_perturb_steps")]
    pub steps: usize,
    /// accepted range of the log-log slope
    #[serde(default = "d_slope")]
    pub slope: [f64; 2],
}
fn d_perturb_m() -> usize {
    128
}
fn d_perturb_steps() -> usize {
    2048
}
fn d_slope() -> [f64; 2] {
    [0.9, 1.1]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardySpec {
    /// random inputs on uniform grids
    pub cases: usize,
    #[serde(default = "d_hardy_min")]
    pub m_min: usize,
    #[serde(default = "d_hardy_max")]
    pub m_max: usize,
    /// near-extremal (1−t)^{−a} on a graded grid
    #[serde(default = "d_ext_m")]
    pub extremal_m: usize,
    #[serde(default = "d_ext_grading")]
    pub extremal_grading: f64,
    #[serde(default = "d_ext_a")]
    pub extremal_exponent: f64,
    /// the near-extremal ratio must exceed this
    #[serde(default = "d_ext_floor")]
    pub extremal_floor: f64,
}
fn d_hardy_min() -> usize {
    16
}
fn d_hardy_max() -> usize {
    400
}
fn d_ext_m() -> usize {
    4096
}
fn d_ext_grading() -> f64 {
    6.0
}
fn d_ext_a() -> f64 {
    0.49
}
fn d_ext_floor() -> f64 {
    3.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentitiesConfig {
    pub geometry: Vec<GeometrySpec>,
    pub numeric: IdentityNumeric,
    #[serde(default)]
    pub tolerance: IdentityTolerance,
    pub perturb: Option<PerturbSpec>,
    pub hardy: Option<HardySpec>,
}

// ---- semiclassical ----

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RealizationChoice {
    Divergence,
    Schrodinger,
    Both,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemiNumeric {
    pub lambda: Vec<f64>,
    #[serde(default = "d_realization")]
    pub realization: RealizationChoice,
    /// box half-width in Gaussian widths
    pub widths: Option<f64>,
    pub points_per_width: Option<f64>,
}
fn d_realization() -> RealizationChoice {
    RealizationChoice::Both
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemiTolerance {
    /// relative error of e₂/λ against the bottom Hessian eigenvalue
    #[serde(default = "d_gap")]
    pub gap: f64,
    /// relative difference between the two realizations
    #[serde(default = "d_realization_agree")]
    pub agree: f64,
}
fn d_gap() -> f64 {
    0.01
}
fn d_realization_agree() -> f64 {
    5e-3
}

impl Default for SemiTolerance {
    fn default() -> Self {
        SemiTolerance { gap: d_gap(), agree: d_realization_agree() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaplaceSpec {
    pub lambda: Vec<f64>,
    #[serde(default = "d_laplace_tol")]
    pub tol: f64,
}
fn d_laplace_tol() -> f64 {
    0.02
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemiclassicalConfig {
    pub potential: PotentialKind,
    pub numeric: SemiNumeric,
    #[serde(default)]
    pub tolerance: SemiTolerance,
    pub laplace: Option<LaplaceSpec>,
}

// ---- simulate ----

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailSpec {
    #[serde(default = "d_span")]
    pub span: f64,
    #[serde(default = "d_count")]
    pub count: usize,
}
fn d_span() -> f64 {
    2.5
}
fn d_count() -> usize {
    101
}

impl Default for TailSpec {
    fn default() -> Self {
        TailSpec { span: d_span(), count: d_count() }
    }
}

fn d_n() -> usize {
    3
}
fn d_start() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadialSim {
    pub profile: Preset,
    #[serde(default = "d_n")]
    pub n: usize,
    pub lambda: Vec<f64>,
    #[serde(default = "d_start")]
    pub start: f64,
    pub steps: usize,
    pub paths: usize,
    #[serde(default)]
    pub tail: TailSpec,
    /// write paths.bin with every Y and Z̃ path
    #[serde(default)]
    pub raw: bool,
}

fn d_bridge_m() -> usize {
    64
}
fn d_thin() -> usize {
    3
}
fn d_burnin() -> usize {
    300
}
fn d_trial_eps() -> f64 {
    1e-3
}
fn d_op_m() -> usize {
    128
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BridgeSim {
    pub space: Space,
    pub lambda: Vec<f64>,
    #[serde(default = "d_bridge_m")]
    pub m: usize,
    #[serde(default = "d_start")]
    pub d: f64,
    pub chains: usize,
    pub samples: usize,
    #[serde(default = "d_thin")]
    pub thin: usize,
    #[serde(default = "d_burnin")]
    pub burnin: usize,
    /// certification slack for the discrete trial mode
    #[serde(default = "d_trial_eps")]
    pub trial_eps: f64,
    /// grid size of the operator discretization behind the trial mode
    #[serde(default = "d_op_m")]
    pub op_m: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimTolerance {
    /// |slope ratio / λ ratio − 1| for the tail fit
    #[serde(default = "d_tail_ratio")]
    pub tail_ratio: f64,
    /// |quotient/λ − σ₁| ≤ se_mult · SE when no explicit range is given
    #[serde(default = "d_se_mult")]
    pub se_mult: f64,
    pub quotient: Option<[f64; 2]>,
    pub min_ess: Option<f64>,
}
fn d_tail_ratio() -> f64 {
    0.25
}
fn d_se_mult() -> f64 {
    3.0
}

impl Default for SimTolerance {
    fn default() -> Self {
        SimTolerance { tail_ratio: d_tail_ratio(), se_mult: d_se_mult(), quotient: None, min_ess: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub radial: Option<RadialSim>,
    pub bridge: Option<BridgeSim>,
    #[serde(default)]
    pub tolerance: SimTolerance,
}

// ---- bounds ----

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundPoint {
    pub alpha: f64,
    pub beta: f64,
    pub r0: f64,
    pub expected: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub c1: f64,
    pub c2: f64,
    pub r0: f64,
    pub lambda: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundTolerance {
    /// relative error against `expected`
    #[serde(default = "d_exact")]
    pub exact: f64,
    /// relative distance of bound/λ to its limit at the largest λ
    #[serde(default = "d_limit")]
    pub limit: f64,
}
fn d_exact() -> f64 {
    1e-12
}
fn d_limit() -> f64 {
    0.01
}

impl Default for BoundTolerance {
    fn default() -> Self {
        BoundTolerance { exact: d_exact(), limit: d_limit() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    #[serde(default)]
    pub point: Vec<BoundPoint>,
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub tolerance: BoundTolerance,
}

// ---- kernel asymptotics ----

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelTolerance {
    #[serde(default = "d_norm")]
    pub normalization: f64,
    /// accepted range of successive residual ratios
    #[serde(default = "d_ratio")]
    pub ratio: [f64; 2],
}
fn d_norm() -> f64 {
    1e-8
}
fn d_ratio() -> [f64; 2] {
    [1.7, 2.3]
}

impl Default for KernelTolerance {
    fn default() -> Self {
        KernelTolerance { normalization: d_norm(), ratio: d_ratio() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub t: Vec<f64>,
    pub r: Vec<f64>,
    #[serde(default)]
    pub tolerance: KernelTolerance,
}

// ---- parsing and validation ----

fn schema(msg: impl Into<String>) -> CliError {
    CliError::Schema(msg.into())
}

fn positive(name: &str, x: f64) -> Result<(), String> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(format!("{name} must be positive and finite, got {x}"))
    }
}

fn finite(name: &str, x: f64) -> Result<(), String> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(format!("{name} must be finite"))
    }
}

fn nonempty<T>(name: &str, v: &[T]) -> Result<(), String> {
    if v.is_empty() {
        Err(format!("{name} must not be empty"))
    } else {
        Ok(())
    }
}

fn all_positive(name: &str, v: &[f64]) -> Result<(), String> {
    nonempty(name, v)?;
    v.iter().try_for_each(|x| positive(name, *x))
}

fn range(name: &str, r: [f64; 2]) -> Result<(), String> {
    if r[0].is_finite() && r[1].is_finite() && r[0] < r[1] {
        Ok(())
    } else {
        Err(format!("{name} must be an increasing pair"))
    }
}

fn body<T: DeserializeOwned>(table: toml::Table) -> Result<T, CliError> {
    toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| schema(e.to_string()))
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Parses and validates; nothing is computed here.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| schema(e.to_string()))?;
        let kind: Kind = match table.remove("kind") {
            Some(v) => v.try_into().map_err(|e: toml::de::Error| schema(format!("kind: {e}")))?,
            None => return Err(schema("missing field `kind`")),
        };
        let seed = match table.remove("seed") {
            Some(toml::Value::Integer(s)) if s >= 0 => s as u64,
            Some(_) => return Err(schema("seed must be a non-negative integer")),
            None => 0,
        };
        let output: Output = match table.remove("output") {
            Some(v) => v.try_into().map_err(|e: toml::de::Error| schema(format!("output: {e}")))?,
            None => Output::default(),
        };
        let body = match kind {
            Kind::Sigma1 => Body::Sigma1(body(table)?),
            Kind::Identities => Body::Identities(body(table)?),
            Kind::Semiclassical => Body::Semiclassical(body(table)?),
            Kind::Simulate => Body::Simulate(body(table)?),
            Kind::Bounds => Body::Bounds(body(table)?),
            Kind::KernelAsymptotics => Body::KernelAsymptotics(body(table)?),
        };
        let cfg = ExperimentConfig { kind, seed, output, body };
        cfg.validate().map_err(CliError::Schema)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        match &self.body {
            Body::Sigma1(c) => {
                nonempty("geometry", &c.geometry)?;
                c.geometry.iter().try_for_each(|g| g.validate())?;
                c.numeric.validate()?;
                positive("tolerance.closed_form", c.tolerance.closed_form)?;
                positive("tolerance.agree", c.tolerance.agree)?;
                positive("tolerance.symmetry", c.tolerance.symmetry)?;
                positive("tolerance.riccati", c.tolerance.riccati)
            }
            Body::Identities(c) => {
                nonempty("geometry", &c.geometry)?;
                c.geometry.iter().try_for_each(|g| g.validate())?;
                let n = &c.numeric;
                OperatorNumeric { m: n.m.clone(), steps: n.steps, grading: n.grading }.validate()?;
                positive("tolerance.residual", c.tolerance.residual)?;
                positive("tolerance.decay", c.tolerance.decay)?;
                positive("tolerance.floor", c.tolerance.floor)?;
                if let Some(p) = &c.perturb {
                    p.geometry.validate()?;
                    nonempty("perturb.eps", &p.eps)?;
                    if p.eps.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
                        return Err("perturb.eps entries must be non-negative".into());
                    }
                    if !(p.delta > 0.0 && p.delta < 1.0) {
                        return Err("perturb.delta must lie in (0, 1)".into());
                    }
                    if p.m < 4 || p.steps < 128 {
                        return Err("perturb.m must be at least 4 and perturb.steps at least 128".into());
                    }
                    range("perturb.slope", p.slope)?;
                }
                if let Some(h) = &c.hardy {
                    if h.cases == 0 || h.m_min < 2 || h.m_max < h.m_min || h.extremal_m < 2 {
                        return Err("hardy: need cases > 0 and 2 <= m_min <= m_max".into());
                    }
                    if !(h.extremal_exponent > 0.0 && h.extremal_exponent < 0.5) {
                        return Err("hardy.extremal_exponent must lie in (0, 1/2)".into());
                    }
                    if !(h.extremal_grading >= 1.0) {
                        return Err("hardy.extremal_grading must be at least 1".into());
                    }
                    finite("hardy.extremal_floor", h.extremal_floor)?;
                }
                Ok(())
            }
            Body::Semiclassical(c) => {
                ougap::WeightedPotential::new(c.potential.clone()).map_err(|e| e.to_string())?;
                all_positive("numeric.lambda", &c.numeric.lambda)?;
                if let Some(w) = c.numeric.widths {
                    positive("numeric.widths", w)?;
                }
                if let Some(p) = c.numeric.points_per_width {
                    positive("numeric.points_per_width", p)?;
                }
                positive("tolerance.gap", c.tolerance.gap)?;
                positive("tolerance.agree", c.tolerance.agree)?;
                if let Some(l) = &c.laplace {
                    all_positive("laplace.lambda", &l.lambda)?;
                    positive("laplace.tol", l.tol)?;
                }
                Ok(())
            }
            Body::Simulate(c) => {
                match (&c.radial, &c.bridge) {
                    (Some(r), None) => {
                        ougap::radial::build_profile(&r.profile).map_err(|e| e.to_string())?;
                        all_positive("radial.lambda", &r.lambda)?;
                        positive("radial.start", r.start)?;
                        if r.n < 3 {
                            return Err("radial.n must be at least 3".into());
                        }
                        if r.steps == 0 || r.paths == 0 {
                            return Err("radial.steps and radial.paths must be positive".into());
                        }
                        positive("radial.tail.span", r.tail.span)?;
                        if r.tail.count < 2 {
                            return Err("radial.tail.count must be at least 2".into());
                        }
                    }
                    (None, Some(b)) => {
                        all_positive("bridge.lambda", &b.lambda)?;
                        for &lambda in &b.lambda {
                            ougap::BridgeConfig {
                                space: b.space,
                                lambda,
                                m: b.m,
                                d: b.d,
                                chains: b.chains,
                                samples: b.samples,
                                thin: b.thin,
                                burnin: b.burnin,
                                seed: 0,
                            }
                            .validate()
                            .map_err(|e| format!("bridge: {e}"))?;
                        }
                        positive("bridge.trial_eps", b.trial_eps)?;
                        if b.op_m < 4 {
                            return Err("bridge.op_m must be at least 4".into());
                        }
                    }
                    _ => return Err("simulate needs exactly one of [radial] or [bridge]".into()),
                }
                let t = &c.tolerance;
                positive("tolerance.tail_ratio", t.tail_ratio)?;
                positive("tolerance.se_mult", t.se_mult)?;
                if let Some(q) = t.quotient {
                    range("tolerance.quotient", q)?;
                }
                if let Some(e) = t.min_ess {
                    positive("tolerance.min_ess", e)?;
                }
                Ok(())
            }
            Body::Bounds(c) => {
                if c.point.is_empty() && c.sweep.is_none() {
                    return Err("bounds needs at least one [[point]] or a [sweep]".into());
                }
                for p in &c.point {
                    positive("point.alpha", p.alpha)?;
                    positive("point.beta", p.beta)?;
                    positive("point.r0", p.r0)?;
                    if let Some(e) = p.expected {
                        finite("point.expected", e)?;
                    }
                }
                if let Some(s) = &c.sweep {
                    positive("sweep.c1", s.c1)?;
                    positive("sweep.c2", s.c2)?;
                    positive("sweep.r0", s.r0)?;
                    all_positive("sweep.lambda", &s.lambda)?;
                }
                positive("tolerance.exact", c.tolerance.exact)?;
                positive("tolerance.limit", c.tolerance.limit)
            }
            Body::KernelAsymptotics(c) => {
                all_positive("t", &c.t)?;
                if c.t.iter().any(|t| *t > 1.0) {
                    return Err("t entries must lie in (0, 1]".into());
                }
                all_positive("r", &c.r)?;
                positive("tolerance.normalization", c.tolerance.normalization)?;
                range("tolerance.ratio", c.tolerance.ratio)
            }
        }
    }

    /// SHA-256 of the canonical re-serialization of kind and body.
    /// Output location and seed are excluded; the seed is reported next to it.
    pub fn digest(&self) -> String {
        #[derive(Serialize)]
        struct Canonical<'a> {
            kind: Kind,
            body: &'a Body,
        }
        let text = toml::to_string(&Canonical { kind: self.kind, body: &self.body }).expect("config serializes");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}
