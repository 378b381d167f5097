//! Scenario configuration (TOML).
//!
//! See the README for the full schema. Parsing is strict: unknown keys are
//! rejected, and semantic checks report the offending field.

use std::path::Path;

use serde::Deserialize;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub spectrum: SpectrumConfig,
    pub hat: SideConfig,
    pub check: SideConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub transmission: TransmissionConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub output: OutputConfig,
    pub semilinear: Option<SemilinearConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    pub kind: SpectrumKind,
    pub cutoff: f64,
    pub periods: Option<Vec<f64>>,
    pub dimension: Option<usize>,
    pub radius: Option<f64>,
    pub eigenvalues: Option<Vec<(f64, usize)>>,
    pub scalar_curvature: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumKind {
    FlatTorus,
    RoundSphere,
    Explicit,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SideConfig {
    pub factor: FactorConfig,
    #[serde(default)]
    pub mass: MassConfig,
    /// Data time, for factors given directly in conformal time.
    pub tau: Option<f64>,
    /// Cosmic time `t₋` or `t₊`, for factors given as a scale factor.
    pub t: Option<f64>,
    /// Hat side only: upper limit of the tabulated clock.
    pub cut: Option<f64>,
    #[serde(default = "one")]
    pub sign: f64,
    #[serde(default)]
    pub horizon: Horizon,
    #[serde(default)]
    pub source: Vec<SourceTable>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FactorConfig {
    Constant { value: f64 },
    /// `coeff·|τ|^exponent`.
    Power { coeff: f64, exponent: f64 },
    Tabulated { tau: Vec<f64>, omega: Vec<f64> },
    DeSitter { c: f64, h: f64 },
    Cosh { c: f64, h: f64 },
    PowerLaw { c: f64, eta: f64 },
    Unit,
}

impl FactorConfig {
    pub fn is_scale_factor(&self) -> bool {
        matches!(
            self,
            FactorConfig::DeSitter { .. } | FactorConfig::Cosh { .. } | FactorConfig::PowerLaw { .. } | FactorConfig::Unit
        )
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MassConfig {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    /// `coeff·|τ|^{−power}`.
    InversePower {
        coeff: f64,
        power: f64,
    },
    Fuchsian {
        c2: f64,
        #[serde(default)]
        poly: Vec<f64>,
    },
    /// `q = m(τ)²Ω(τ)²` with a physical mass profile.
    Physical {
        profile: MassProfileConfig,
    },
    Tabulated {
        tau: Vec<f64>,
        q: Vec<f64>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MassProfileConfig {
    Constant { value: f64 },
    Power { coeff: f64, exponent: f64 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    #[default]
    Infinite,
    Truncated,
}

/// Tabulated source `g(τ)` for one mode; zero outside the table.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceTable {
    pub mode: usize,
    pub tau: Vec<f64>,
    pub re: Vec<f64>,
    #[serde(default)]
    pub im: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol: f64,
    pub riccati_tol: f64,
    pub layer_order: usize,
    pub layer_ratio: f64,
    pub layer_floor: f64,
    pub window_factor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-12,
            riccati_tol: 1e-12,
            layer_order: 16,
            layer_ratio: 0.5,
            layer_floor: 1e-12,
            window_factor: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    #[default]
    Simple,
    Riccati,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorKind {
    /// Picard solutions shifted by `alpha_*` in their limit.
    #[default]
    Picard,
    /// Solutions with `A(0) = alpha_*`; needs integrable masses.
    Ivp,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransmissionConfig {
    pub path: PathKind,
    pub anchors: AnchorKind,
    pub epsilon: f64,
    pub alpha_hat: f64,
    pub alpha_check: f64,
    /// Shorthand for `alpha_hat = 0`, `alpha_check = −delta` on Picard anchors.
    pub delta: Option<f64>,
    pub half_width: Option<f64>,
}

impl Default for TransmissionConfig {
    fn default() -> Self {
        TransmissionConfig {
            path: PathKind::Simple,
            anchors: AnchorKind::Picard,
            epsilon: 1.0,
            alpha_hat: 0.0,
            alpha_check: 0.0,
            delta: None,
            half_width: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    #[default]
    Random,
    Mode,
    Zero,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub kind: DataKind,
    /// Number of modes carried (all modes under the cutoff when absent).
    pub modes: Option<usize>,
    pub amplitude: f64,
    /// Random data: coefficient scale `(1+λ)^{−decay}`.
    pub decay: f64,
    pub index: Option<usize>,
    pub u: [f64; 2],
    pub du: [f64; 2],
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            kind: DataKind::Random,
            modes: None,
            amplitude: 1.0,
            decay: 1.0,
            index: None,
            u: [1.0, 0.0],
            du: [0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Modes whose trajectories are dumped.
    pub trajectory_modes: Vec<usize>,
    pub trajectory_samples: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { trajectory_modes: vec![0], trajectory_samples: 64 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemilinearConfig {
    pub n: usize,
    pub kappa: f64,
    #[serde(default)]
    pub rho: f64,
    #[serde(default = "half")]
    pub amplitude: f64,
    /// Gaussian decay `exp(−width·|m|²)` of the random data.
    #[serde(default = "half")]
    pub width: f64,
    #[serde(default = "semilinear_tol")]
    pub tol: f64,
    #[serde(default)]
    pub zetas: Vec<f64>,
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

fn semilinear_tol() -> f64 {
    1e-11
}

impl Scenario {
    pub fn from_toml(text: &str, origin: &str) -> Result<Scenario> {
        let s: Scenario = toml::from_str(text).map_err(|e| HarnessError::Parse {
            origin: origin.to_string(),
            message: e.to_string().trim_end().to_string(),
        })?;
        s.validate(origin)?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<(Scenario, String)> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })?;
        let s = Scenario::from_toml(&text, &path.display().to_string())?;
        Ok((s, text))
    }

    /// Field-level checks that do not need numerics.
    pub fn validate(&self, origin: &str) -> Result<()> {
        let bad = |field: &str, message: String| {
            Err(HarnessError::Field { origin: origin.to_string(), field: field.to_string(), message })
        };
        if self.name.trim().is_empty() {
            return bad("name", "must not be empty".into());
        }
        let sp = &self.spectrum;
        if !(sp.cutoff.is_finite() && sp.cutoff >= 0.0) {
            return bad("spectrum.cutoff", format!("must be a finite nonnegative number, got {}", sp.cutoff));
        }
        match sp.kind {
            SpectrumKind::FlatTorus => {
                let Some(p) = &sp.periods else {
                    return bad("spectrum.periods", "required for kind = \"flat_torus\"".into());
                };
                if p.is_empty() || p.iter().any(|v| !(*v > 0.0)) {
                    return bad("spectrum.periods", "must be a nonempty list of positive periods".into());
                }
            }
            SpectrumKind::RoundSphere => {
                if sp.dimension.is_none() {
                    return bad("spectrum.dimension", "required for kind = \"round_sphere\"".into());
                }
                if !(sp.radius.unwrap_or(f64::NAN) > 0.0) {
                    return bad("spectrum.radius", "required and positive for kind = \"round_sphere\"".into());
                }
            }
            SpectrumKind::Explicit => {
                if sp.dimension.is_none() {
                    return bad("spectrum.dimension", "required for kind = \"explicit\"".into());
                }
                if sp.eigenvalues.as_ref().is_none_or(|e| e.is_empty()) {
                    return bad("spectrum.eigenvalues", "required for kind = \"explicit\"".into());
                }
            }
        }
        for (name, side) in [("hat", &self.hat), ("check", &self.check)] {
            side.validate(name, origin)?;
        }
        let so = &self.solver;
        for (field, v) in [("solver.tol", so.tol), ("solver.riccati_tol", so.riccati_tol), ("solver.layer_floor", so.layer_floor)] {
            if !(v > 0.0 && v < 1.0) {
                return bad(field, format!("must lie in (0, 1), got {v}"));
            }
        }
        if !(so.layer_ratio > 0.0 && so.layer_ratio < 1.0) {
            return bad("solver.layer_ratio", format!("must lie in (0, 1), got {}", so.layer_ratio));
        }
        if !(so.window_factor > 0.0 && so.window_factor < 1.0) {
            return bad("solver.window_factor", format!("must lie in (0, 1), got {}", so.window_factor));
        }
        if so.layer_order < 2 {
            return bad("solver.layer_order", "must be at least 2".into());
        }
        let tr = &self.transmission;
        if !(tr.epsilon > 0.0) {
            return bad("transmission.epsilon", format!("must be positive, got {}", tr.epsilon));
        }
        if tr.delta.is_some() && (tr.alpha_hat != 0.0 || tr.alpha_check != 0.0) {
            return bad("transmission.delta", "give either delta or alpha_hat/alpha_check, not both".into());
        }
        if tr.path == PathKind::Simple && (tr.delta.is_some() || tr.alpha_hat != 0.0 || tr.alpha_check != 0.0) {
            return bad("transmission.path", "Riccati anchors given but path = \"simple\"".into());
        }
        if tr.anchors == AnchorKind::Ivp && tr.delta.is_some() {
            return bad("transmission.delta", "delta shorthand applies to Picard anchors only".into());
        }
        if let Some(h) = tr.half_width {
            if !(h > 0.0) {
                return bad("transmission.half_width", format!("must be positive, got {h}"));
            }
        }
        let d = &self.data;
        if d.kind == DataKind::Mode && d.index.is_none() {
            return bad("data.index", "required for kind = \"mode\"".into());
        }
        if d.modes == Some(0) {
            return bad("data.modes", "must be at least 1".into());
        }
        if !(d.amplitude.is_finite() && d.decay.is_finite()) {
            return bad("data", "amplitude and decay must be finite".into());
        }
        if self.output.trajectory_samples < 2 {
            return bad("output.trajectory_samples", "must be at least 2".into());
        }
        if let Some(sl) = &self.semilinear {
            if sp.kind != SpectrumKind::FlatTorus || sp.periods.as_ref().is_some_and(|p| p.len() != 3) {
                return bad("semilinear", "the semilinear crossing runs on a three-dimensional flat torus spectrum".into());
            }
            if sl.n < 8 || !sl.n.is_power_of_two() {
                return bad("semilinear.n", format!("must be a power of two ≥ 8, got {}", sl.n));
            }
            if !(sl.kappa >= 0.0) {
                return bad("semilinear.kappa", format!("must be nonnegative, got {}", sl.kappa));
            }
            if sl.zetas.iter().any(|z| !(*z > 0.0)) {
                return bad("semilinear.zetas", "must be positive".into());
            }
        }
        Ok(())
    }
}

impl SideConfig {
    fn validate(&self, name: &str, origin: &str) -> Result<()> {
        let bad = |field: &str, message: String| {
            Err(HarnessError::Field { origin: origin.to_string(), field: format!("{name}.{field}"), message })
        };
        let hat = name == "hat";
        if self.factor.is_scale_factor() {
            if self.tau.is_some() {
                return bad("tau", "conformal time follows from `t` for scale-factor profiles".into());
            }
            let Some(t) = self.t else {
                return bad("t", "cosmic time is required for scale-factor profiles".into());
            };
            if !hat && !(t > 0.0) {
                return bad("t", format!("t₊ must be positive, got {t}"));
            }
            if hat {
                let cut = self.cut.unwrap_or(t + 40.0);
                if !(cut > t) {
                    return bad("cut", format!("must exceed t = {t}"));
                }
            }
        } else {
            if self.t.is_some() || self.cut.is_some() {
                return bad("t", "only scale-factor profiles take cosmic times".into());
            }
            let Some(tau) = self.tau else {
                return bad("tau", "data time is required".into());
            };
            if (hat && !(tau < 0.0)) || (!hat && !(tau > 0.0)) {
                return bad("tau", format!("must lie on the {name} side of 0, got {tau}"));
            }
        }
        if self.sign.abs() != 1.0 {
            return bad("sign", format!("must be +1 or -1, got {}", self.sign));
        }
        if !hat && self.sign != 1.0 && self.factor.is_scale_factor() {
            return bad("sign", "the present-aeon factor is positive".into());
        }
        if let FactorConfig::Tabulated { tau, omega } = &self.factor {
            if tau.len() != omega.len() || tau.len() < 2 {
                return bad("factor", "tabulated tau and omega need equal lengths ≥ 2".into());
            }
        }
        match &self.mass {
            MassConfig::Constant { value } if *value < 0.0 => {
                return bad("mass.value", "effective mass must be nonnegative".into());
            }
            MassConfig::Fuchsian { c2, .. } if *c2 < 0.0 => {
                return bad("mass.c2", "must be nonnegative".into());
            }
            MassConfig::InversePower { coeff, .. } if *coeff < 0.0 => {
                return bad("mass.coeff", "must be nonnegative".into());
            }
            MassConfig::Tabulated { tau, q } if tau.len() != q.len() || tau.len() < 2 => {
                return bad("mass", "tabulated tau and q need equal lengths ≥ 2".into());
            }
            _ => {}
        }
        for (i, s) in self.source.iter().enumerate() {
            if s.tau.len() != s.re.len() || (!s.im.is_empty() && s.im.len() != s.tau.len()) || s.tau.len() < 2 {
                return bad(&format!("source[{i}]"), "tau, re and im need equal lengths ≥ 2".into());
            }
        }
        Ok(())
    }
}
