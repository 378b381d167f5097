//! Build core objects from a validated scenario.

use std::f64::consts::PI;
use std::sync::Arc;

use bangcross::evolver::LayerOptions;
use bangcross::numerics::MonotoneCubic;
use bangcross::profiles::{
    conformal_time_check, conformal_time_hat, ConformalFactor, EffectiveMassSq, HatHorizon, MassProfile, MassShape,
    ScaleFactor, Side,
};
use bangcross::riccati::{ivp_solve, picard_construct, shift_to_alpha, RiccatiOptions, RiccatiSolution};
use bangcross::semilinear::{SemilinearSpec, SpectralState, TorusGrid3};
use bangcross::spectrum::SpectrumSpec;
use bangcross::transmission::{FieldData, ModeSource, Path, SideProfile, TransmissionSpec};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{
    AnchorKind, DataKind, FactorConfig, Horizon, MassConfig, MassProfileConfig, PathKind, Scenario, SideConfig,
    SpectrumKind,
};
use crate::error::{numerical, HarnessError, Result};

/// Name of the seeded generator, recorded in output metadata.
pub const PRNG: &str = "ChaCha8";

pub struct Setup {
    pub scenario: Scenario,
    pub spec: TransmissionSpec,
    pub tau_minus: f64,
    pub tau_plus: f64,
    pub data: FieldData,
    pub riccati: Option<(Arc<RiccatiSolution>, Arc<RiccatiSolution>)>,
    pub seed: u64,
}

fn field(origin: &str, field: &str, message: impl Into<String>) -> HarnessError {
    HarnessError::Field { origin: origin.to_string(), field: field.to_string(), message: message.into() }
}

pub fn spectrum(s: &Scenario) -> Result<SpectrumSpec> {
    let sp = &s.spectrum;
    let built = match sp.kind {
        SpectrumKind::FlatTorus => SpectrumSpec::flat_torus(sp.periods.clone().unwrap_or_default()),
        SpectrumKind::RoundSphere => SpectrumSpec::round_sphere(sp.dimension.unwrap_or(0), sp.radius.unwrap_or(0.0)),
        SpectrumKind::Explicit => SpectrumSpec::explicit(
            sp.dimension.unwrap_or(0),
            sp.eigenvalues.clone().unwrap_or_default(),
            sp.scalar_curvature.unwrap_or(0.0),
        ),
    };
    built.map_err(numerical("spectrum"))
}

fn factor(cfg: &SideConfig, side: Side) -> Result<(f64, ConformalFactor)> {
    let scale = match &cfg.factor {
        FactorConfig::Constant { value } => {
            return Ok((cfg.tau.unwrap_or(0.0), ConformalFactor::constant(side, *value)));
        }
        FactorConfig::Power { coeff, exponent } => {
            return Ok((cfg.tau.unwrap_or(0.0), ConformalFactor::power(side, *coeff, *exponent)));
        }
        FactorConfig::Tabulated { tau, omega } => {
            let f = ConformalFactor::samples(side, tau.clone(), omega.clone()).map_err(numerical("profiles"))?;
            return Ok((cfg.tau.unwrap_or(0.0), f));
        }
        FactorConfig::DeSitter { c, h } => ScaleFactor::DeSitter { c: *c, h: *h },
        FactorConfig::Cosh { c, h } => ScaleFactor::Cosh { c: *c, h: *h },
        FactorConfig::PowerLaw { c, eta } => ScaleFactor::PowerLaw { c: *c, eta: *eta },
        FactorConfig::Unit => ScaleFactor::Unit,
    };
    let t = cfg.t.unwrap_or(0.0);
    match side {
        Side::Hat => {
            let horizon = match cfg.horizon {
                Horizon::Infinite => HatHorizon::Infinite,
                Horizon::Truncated => HatHorizon::Truncated,
            };
            conformal_time_hat(&scale, t, cfg.cut.unwrap_or(t + 40.0), horizon, cfg.sign)
        }
        Side::Check => conformal_time_check(&scale, t),
    }
    .map_err(numerical("profiles"))
}

fn mass(cfg: &MassConfig, side: Side, omega: &ConformalFactor, width: f64) -> Result<EffectiveMassSq> {
    let q = match cfg {
        MassConfig::Zero => EffectiveMassSq::zero(side),
        MassConfig::Constant { value } => EffectiveMassSq::constant(side, *value),
        MassConfig::InversePower { coeff, power } => EffectiveMassSq::inverse_power(side, *coeff, *power),
        MassConfig::Fuchsian { c2, poly } => {
            EffectiveMassSq::new(side, MassShape::Fuchsian { c2: *c2, poly: poly.clone() })
        }
        MassConfig::Physical { profile } => {
            let m = match profile {
                MassProfileConfig::Constant { value } => MassProfile::Constant(*value),
                MassProfileConfig::Power { coeff, exponent } => MassProfile::Power { coeff: *coeff, exponent: *exponent },
            };
            EffectiveMassSq::product(side, m, omega.clone())
        }
        MassConfig::Tabulated { tau, q } => {
            return EffectiveMassSq::samples(side, tau.clone(), q.clone()).map_err(numerical("profiles"));
        }
    };
    Ok(q.with_half_width(width))
}

fn source(tables: &[crate::config::SourceTable]) -> Result<Option<ModeSource>> {
    if tables.is_empty() {
        return Ok(None);
    }
    let mut by_mode: Vec<(usize, MonotoneCubic, Option<MonotoneCubic>)> = Vec::new();
    for t in tables {
        let re = MonotoneCubic::new(t.tau.clone(), t.re.clone()).map_err(numerical("profiles"))?;
        let im = if t.im.is_empty() {
            None
        } else {
            Some(MonotoneCubic::new(t.tau.clone(), t.im.clone()).map_err(numerical("profiles"))?)
        };
        by_mode.push((t.mode, re, im));
    }
    let g: ModeSource = Arc::new(move |mode, tau| {
        let mut acc = Complex64::new(0.0, 0.0);
        for (m, re, im) in &by_mode {
            let (a, b) = re.range();
            if *m != mode || tau < a || tau > b {
                continue;
            }
            acc += Complex64::new(re.eval(tau), im.as_ref().map_or(0.0, |f| f.eval(tau)));
        }
        acc
    });
    Ok(Some(g))
}

fn side_profile(cfg: &SideConfig, side: Side) -> Result<(f64, SideProfile)> {
    let (tau, omega) = factor(cfg, side)?;
    let q = mass(&cfg.mass, side, &omega, tau.abs())?;
    let mut p = SideProfile::new(omega, q);
    if let Some(g) = source(&cfg.source)? {
        p = p.with_source(g);
    }
    Ok((tau, p))
}

/// Riccati pair for the configured anchors.
pub fn riccati_pair(
    s: &Scenario,
    hat: &EffectiveMassSq,
    check: &EffectiveMassSq,
) -> Result<(Arc<RiccatiSolution>, Arc<RiccatiSolution>)> {
    let tr = &s.transmission;
    let opts = RiccatiOptions { epsilon: tr.epsilon, tol: s.solver.riccati_tol, ..Default::default() };
    let (alpha_hat, alpha_check) = match tr.delta {
        Some(d) => (0.0, -d),
        None => (tr.alpha_hat, tr.alpha_check),
    };
    let build = |q: &EffectiveMassSq, alpha: f64| -> Result<RiccatiSolution> {
        match tr.anchors {
            AnchorKind::Picard => {
                let base = picard_construct(q, &opts).map_err(numerical("riccati"))?;
                shift_to_alpha(&base, alpha).map_err(numerical("riccati"))
            }
            AnchorKind::Ivp => ivp_solve(q, alpha, &opts).map_err(numerical("riccati")),
        }
    };
    Ok((Arc::new(build(hat, alpha_hat)?), Arc::new(build(check, alpha_check)?)))
}

pub fn layer_options(s: &Scenario) -> LayerOptions {
    LayerOptions {
        order: s.solver.layer_order,
        ratio: s.solver.layer_ratio,
        floor: s.solver.layer_floor,
        window_factor: s.solver.window_factor,
        ..Default::default()
    }
}

/// Seeded initial data at `τ₋`.
pub fn initial_data(s: &Scenario, spectrum: &SpectrumSpec, tau_minus: f64, seed: u64, origin: &str) -> Result<FieldData> {
    let available = spectrum.eigenvalue_list(s.spectrum.cutoff).map_err(numerical("spectrum"))?.len();
    if available == 0 {
        return Err(field(origin, "spectrum.cutoff", "no modes below the cutoff"));
    }
    let count = s.data.modes.unwrap_or(available);
    if count > available {
        return Err(field(
            origin,
            "data.modes",
            format!("{count} modes requested but only {available} lie below the cutoff"),
        ));
    }
    let mut data = FieldData::zeros(spectrum, s.spectrum.cutoff, tau_minus, Some(count)).map_err(numerical("transmission"))?;
    let d = &s.data;
    match d.kind {
        DataKind::Zero => {}
        DataKind::Mode => {
            let i = d.index.unwrap_or(0);
            let m = data
                .modes
                .get_mut(i)
                .ok_or_else(|| field(origin, "data.index", format!("mode {i} is not among the {count} carried modes")))?;
            m.u = Complex64::new(d.u[0], d.u[1]);
            m.du = Complex64::new(d.du[0], d.du[1]);
        }
        DataKind::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for m in &mut data.modes {
                let w = d.amplitude * (1.0 + m.lambda).powf(-d.decay);
                m.u = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * w;
                m.du = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * w;
            }
        }
    }
    for side in [&s.hat, &s.check] {
        for (i, t) in side.source.iter().enumerate() {
            if t.mode >= count {
                let name = if std::ptr::eq(side, &s.hat) { "hat" } else { "check" };
                return Err(field(
                    origin,
                    &format!("{name}.source[{i}].mode"),
                    format!("mode {} is beyond the {count} carried modes", t.mode),
                ));
            }
        }
    }
    for &i in &s.output.trajectory_modes {
        if i >= count {
            return Err(field(origin, "output.trajectory_modes", format!("mode {i} is beyond the {count} carried modes")));
        }
    }
    Ok(data)
}

impl Setup {
    pub fn build(scenario: &Scenario, seed_override: Option<u64>, origin: &str) -> Result<Setup> {
        let spectrum = spectrum(scenario)?;
        let (tau_minus, hat) = side_profile(&scenario.hat, Side::Hat)?;
        let (tau_plus, check) = side_profile(&scenario.check, Side::Check)?;
        if !(tau_minus < 0.0 && tau_plus > 0.0) {
            return Err(field(origin, "hat.t", format!("conformal times {tau_minus}, {tau_plus} do not straddle 0")));
        }
        let riccati = match scenario.transmission.path {
            PathKind::Simple => None,
            PathKind::Riccati => Some(riccati_pair(scenario, &hat.q, &check.q)?),
        };
        let path = match &riccati {
            None => Path::Simple,
            Some((a, b)) => Path::Riccati { hat: a.clone(), check: b.clone() },
        };
        let mut spec = TransmissionSpec::new(spectrum.clone(), hat, check, scenario.spectrum.cutoff, path)
            .map_err(|e| match e {
                bangcross::Error::PathMismatch(m) => field(origin, "transmission.path", m),
                other => numerical("transmission")(other),
            })?;
        spec.tol = scenario.solver.tol;
        spec.layer = layer_options(scenario);
        if let Some(h) = scenario.transmission.half_width {
            spec = spec.with_half_width(h);
        }
        let seed = seed_override.unwrap_or(scenario.seed);
        let data = initial_data(scenario, &spectrum, tau_minus, seed, origin)?;
        Ok(Setup { scenario: scenario.clone(), spec, tau_minus, tau_plus, data, riccati, seed })
    }

    pub fn half_width(&self) -> f64 {
        self.spec.half_width(self.tau_minus, self.tau_plus)
    }

    /// Semilinear crossing problem and its seeded initial data, if configured.
    pub fn semilinear(&self) -> Result<Option<(SemilinearSpec, SpectralState)>> {
        let Some(cfg) = &self.scenario.semilinear else {
            return Ok(None);
        };
        let periods = self.scenario.spectrum.periods.clone().unwrap_or_else(|| vec![2.0 * PI; 3]);
        let grid = TorusGrid3::new(cfg.n, [periods[0], periods[1], periods[2]]).map_err(numerical("semilinear"))?;
        let spec = SemilinearSpec {
            grid,
            hat: self.spec.hat.clone(),
            check: self.spec.check.clone(),
            path: self.spec.path.clone(),
            kappa: cfg.kappa,
            rho: cfg.rho,
            h: self.half_width(),
            tol: cfg.tol,
        };
        let data = smooth_field(&spec.grid, self.tau_minus, self.seed, cfg.amplitude, cfg.width);
        Ok(Some((spec, data)))
    }
}

/// Random kept-mode data with Gaussian decay `amp·exp(−width·|m|²)`.
pub fn smooth_field(grid: &TorusGrid3, tau: f64, seed: u64, amp: f64, width: f64) -> SpectralState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = SpectralState::zeros(grid, tau);
    for (i, m) in grid.modes().iter().enumerate() {
        let w = amp * (-width * (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]) as f64).exp();
        s.phi[i] = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * w;
        s.chi[i] = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * w;
    }
    s
}
