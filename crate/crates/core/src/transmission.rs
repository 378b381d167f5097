//! Crossing maps through the bang surface.
//!
//! The crossing itself is the identity on renormalized pairs
//! `(lim φ, lim(∂τφ + Aφ))`; everything else happens in the interior
//! evolutions and the damped layers on either side.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::evolver::{
    evolve_regular, inverse_w, limit_w, BangPair, Layer, LayerOptions, ModeProblem, ModeState,
};
use crate::profiles::{
    classify_integrability, liouville_scale, liouville_unscale, ConformalFactor, EffectiveMassSq,
    IntegrabilityClass, Side,
};
use crate::riccati::{limit_difference, picard_construct, RiccatiOptions, RiccatiSolution};
use crate::spectrum::SpectrumSpec;

/// Mode coefficient `g(i, τ)` of the renormalized source.
pub type ModeSource = Arc<dyn Fn(usize, f64) -> Complex64 + Send + Sync>;

#[derive(Clone)]
pub struct SideProfile {
    pub omega: ConformalFactor,
    pub q: EffectiveMassSq,
    pub source: Option<ModeSource>,
}

impl std::fmt::Debug for SideProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SideProfile")
            .field("omega", &self.omega)
            .field("q", &self.q)
            .field("source", &self.source.is_some())
            .finish()
    }
}

impl SideProfile {
    pub fn new(omega: ConformalFactor, q: EffectiveMassSq) -> Self {
        SideProfile { omega, q, source: None }
    }

    pub fn with_source(mut self, g: ModeSource) -> Self {
        self.source = Some(g);
        self
    }
}

#[derive(Debug, Clone)]
pub enum Path {
    Simple,
    Riccati { hat: Arc<RiccatiSolution>, check: Arc<RiccatiSolution> },
}

impl Path {
    pub fn name(&self) -> &'static str {
        match self {
            Path::Simple => "simple",
            Path::Riccati { .. } => "riccati",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TransmissionSpec {
    pub spectrum: SpectrumSpec,
    pub hat: SideProfile,
    pub check: SideProfile,
    pub cutoff: f64,
    pub path: Path,
    /// Damped-layer half-width; defaults to `min(0.1, |τ₋|/4, τ₊/4)`.
    pub h: Option<f64>,
    pub tol: f64,
    pub layer: LayerOptions,
}

impl TransmissionSpec {
    pub fn new(spectrum: SpectrumSpec, hat: SideProfile, check: SideProfile, cutoff: f64, path: Path) -> Result<Self> {
        let spec = TransmissionSpec {
            spectrum,
            hat,
            check,
            cutoff,
            path,
            h: None,
            tol: 1e-12,
            layer: LayerOptions::default(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_half_width(mut self, h: f64) -> Self {
        self.h = Some(h);
        self
    }

    pub fn dimension(&self) -> usize {
        self.spectrum.dimension()
    }

    pub fn validate(&self) -> Result<()> {
        if self.hat.omega.side != Side::Hat || self.hat.q.side != Side::Hat {
            return Err(Error::Validation("hat profiles must live on τ < 0".into()));
        }
        if self.check.omega.side != Side::Check || self.check.q.side != Side::Check {
            return Err(Error::Validation("check profiles must live on τ > 0".into()));
        }
        let hat = classify_integrability(&self.hat.q, 1e-12).class;
        let check = classify_integrability(&self.check.q, 1e-12).class;
        match &self.path {
            Path::Simple => {
                if hat != IntegrabilityClass::L1 || check != IntegrabilityClass::L1 {
                    return Err(Error::PathMismatch(format!(
                        "simple transmission needs both masses in L1 (hat {hat:?}, check {check:?})"
                    )));
                }
            }
            Path::Riccati { hat: a, check: b } => {
                if !hat.at_least_weighted() || !check.at_least_weighted() {
                    return Err(Error::PathMismatch(format!(
                        "Riccati transmission needs |τ|q integrable (hat {hat:?}, check {check:?})"
                    )));
                }
                if a.side() != Side::Hat || b.side() != Side::Check {
                    return Err(Error::PathMismatch("Riccati solutions on the wrong sides".into()));
                }
            }
        }
        Ok(())
    }

    pub fn half_width(&self, tau_minus: f64, tau_plus: f64) -> f64 {
        let mut h = self.h.unwrap_or_else(|| 0.1f64.min(tau_minus.abs() / 4.0).min(tau_plus / 4.0));
        if let Path::Riccati { hat, check } = &self.path {
            h = h.min(hat.half_width()).min(check.half_width());
        }
        h
    }

    /// Mode problem of one side, with the mode's source attached.
    pub fn problem(&self, side: Side, index: usize, lambda: f64) -> ModeProblem {
        let prof = match side {
            Side::Hat => &self.hat,
            Side::Check => &self.check,
        };
        let mut p = ModeProblem::new(lambda, self.spectrum.curvature_potential(), prof.q.clone());
        if let Some(g) = &prof.source {
            let g = g.clone();
            p = p.with_source(Arc::new(move |t| g(index, t)));
        }
        p
    }

    fn riccati(&self, side: Side) -> Option<Arc<RiccatiSolution>> {
        match (&self.path, side) {
            (Path::Simple, _) => None,
            (Path::Riccati { hat, .. }, Side::Hat) => Some(hat.clone()),
            (Path::Riccati { check, .. }, Side::Check) => Some(check.clone()),
        }
    }

    /// Damped layers `(hat, check)` of half-width `h`.
    pub fn layers(&self, h: f64, omega_max: f64) -> Result<(Layer, Layer)> {
        let hat = Layer::new(Side::Hat, h, &self.hat.q, self.riccati(Side::Hat), omega_max, self.layer.clone())?;
        let check = Layer::new(Side::Check, h, &self.check.q, self.riccati(Side::Check), omega_max, self.layer.clone())?;
        Ok((hat, check))
    }
}

/// One spectral coefficient pair `(u, ∂τu)`; `index` refers to the
/// eigenvalue list of the spectrum expanded by multiplicity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeEntry {
    pub index: usize,
    pub lambda: f64,
    pub u: Complex64,
    pub du: Complex64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldData {
    pub tau: f64,
    pub modes: Vec<ModeEntry>,
}

impl FieldData {
    /// Zero data on the first `count` modes of the spectrum (all when `None`).
    pub fn zeros(spectrum: &SpectrumSpec, cutoff: f64, tau: f64, count: Option<usize>) -> Result<Self> {
        let list = spectrum.eigenvalue_list(cutoff)?;
        let n = count.unwrap_or(list.len()).min(list.len());
        let zero = Complex64::new(0.0, 0.0);
        Ok(FieldData {
            tau,
            modes: list[..n]
                .iter()
                .enumerate()
                .map(|(index, &lambda)| ModeEntry { index, lambda, u: zero, du: zero })
                .collect(),
        })
    }

    fn check_against(&self, spectrum: &SpectrumSpec, cutoff: f64) -> Result<()> {
        let list = spectrum.eigenvalue_list(cutoff)?;
        for m in &self.modes {
            let expected = list.get(m.index).ok_or_else(|| {
                Error::Validation(format!("mode index {} beyond the cutoff", m.index))
            })?;
            if (expected - m.lambda).abs() > 1e-12 * expected.max(1.0) {
                return Err(Error::Validation(format!(
                    "mode {} has eigenvalue {} but the spectrum says {expected}",
                    m.index, m.lambda
                )));
            }
            if !(m.u.re.is_finite() && m.u.im.is_finite() && m.du.re.is_finite() && m.du.im.is_finite()) {
                return Err(Error::Validation(format!("mode {} has non-finite data", m.index)));
            }
        }
        Ok(())
    }

    /// `sqrt(Σ (λ+1)|u|² + |∂τu|²)`.
    pub fn norm_h1_l2(&self) -> f64 {
        self.modes
            .iter()
            .map(|m| (m.lambda + 1.0) * m.u.norm_sqr() + m.du.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Largest per-mode difference `max(|Δu|, |Δ∂τu|)`.
    pub fn max_difference(&self, other: &FieldData) -> f64 {
        self.modes
            .iter()
            .zip(&other.modes)
            .map(|(a, b)| (a.u - b.u).norm().max((a.du - b.du).norm()))
            .fold(0.0, f64::max)
    }

    pub fn scaled(&self, k: Complex64) -> FieldData {
        FieldData {
            tau: self.tau,
            modes: self.modes.iter().map(|m| ModeEntry { u: m.u * k, du: m.du * k, ..*m }).collect(),
        }
    }

    pub fn add(&self, other: &FieldData) -> FieldData {
        FieldData {
            tau: self.tau,
            modes: self
                .modes
                .iter()
                .zip(&other.modes)
                .map(|(a, b)| ModeEntry { u: a.u + b.u, du: a.du + b.du, ..*a })
                .collect(),
        }
    }
}

/// Continuity transmission: the pair is handed over unchanged.
pub fn cross_simple(spec: &TransmissionSpec, hat: &[BangPair]) -> Result<Vec<BangPair>> {
    match spec.path {
        Path::Simple => Ok(hat.to_vec()),
        _ => Err(Error::PathMismatch("cross_simple on a Riccati transmission".into())),
    }
}

/// Riccati transmission: `(lim φ, lim(∂τφ + Âφ))` equals
/// `(lim φ, lim(∂τφ + Ǎφ))` across the surface.
pub fn cross_riccati(spec: &TransmissionSpec, hat: &[BangPair]) -> Result<Vec<BangPair>> {
    match spec.path {
        Path::Riccati { .. } => Ok(hat.to_vec()),
        _ => Err(Error::PathMismatch("cross_riccati on a simple transmission".into())),
    }
}

fn cross(spec: &TransmissionSpec, bang: BangPair) -> Result<BangPair> {
    let v = match spec.path {
        Path::Simple => cross_simple(spec, &[bang])?,
        Path::Riccati { .. } => cross_riccati(spec, &[bang])?,
    };
    Ok(v[0])
}

/// Per-mode record of a crossing.
#[derive(Debug, Clone)]
pub struct Crossing {
    pub data: FieldData,
    pub h: f64,
    /// Bang pairs on the side the crossing started from.
    pub bangs: Vec<BangPair>,
}

fn check_times(spec: &TransmissionSpec, tau_minus: f64, tau_plus: f64, h: f64) -> Result<()> {
    if !(tau_minus < 0.0 && tau_plus > 0.0) {
        return Err(Error::Validation(format!(
            "need τ₋ < 0 < τ₊, got {tau_minus} and {tau_plus}"
        )));
    }
    if tau_minus > -h || tau_plus < h {
        return Err(Error::Validation(format!(
            "the data times {tau_minus}, {tau_plus} lie inside the damped layer of half-width {h}"
        )));
    }
    if spec.hat.omega.omega(tau_minus) == 0.0 || spec.check.omega.omega(tau_plus) == 0.0 {
        return Err(Error::SingularScaling { tau: if spec.hat.omega.omega(tau_minus) == 0.0 { tau_minus } else { tau_plus } });
    }
    Ok(())
}

/// Largest damped-layer frequency `√(λ+1)` over the carried modes (at least 1).
pub fn omega_max(data: &FieldData) -> f64 {
    data.modes.iter().map(|m| (m.lambda + 1.0).sqrt()).fold(1.0, f64::max)
}

#[allow(clippy::too_many_arguments)]
fn one_way(
    spec: &TransmissionSpec,
    entry: &ModeEntry,
    from: Side,
    tau_from: f64,
    tau_to: f64,
    layers: (&Layer, &Layer),
) -> Result<(ModeEntry, BangPair)> {
    let n = spec.dimension();
    let to = match from {
        Side::Hat => Side::Check,
        Side::Check => Side::Hat,
    };
    let (prof_from, prof_to) = match from {
        Side::Hat => (&spec.hat, &spec.check),
        Side::Check => (&spec.check, &spec.hat),
    };
    let (layer_from, layer_to) = layers;
    let pf = spec.problem(from, entry.index, entry.lambda);
    let pt = spec.problem(to, entry.index, entry.lambda);
    let (phi, chi) = liouville_scale(n, &prof_from.omega, (entry.u, entry.du), tau_from)?;
    let mut state = ModeState::new(tau_from, phi, chi);
    let edge = layer_from.edge();
    if state.tau != edge {
        state = evolve_regular(&pf, state, edge, spec.tol)?;
    }
    let bang = limit_w(&pf, layer_from, state)?;
    let crossed = cross(spec, bang)?;
    let mut out = inverse_w(&pt, layer_to, crossed)?;
    if tau_to != out.tau {
        out = evolve_regular(&pt, out, tau_to, spec.tol)?;
    }
    let (u, du) = liouville_unscale(n, &prof_to.omega, (out.phi, out.chi), tau_to)?;
    Ok((ModeEntry { u, du, ..*entry }, bang))
}

fn run(spec: &TransmissionSpec, data: &FieldData, from: Side, tau_to: f64) -> Result<Crossing> {
    spec.validate()?;
    data.check_against(&spec.spectrum, spec.cutoff)?;
    let (tm, tp) = match from {
        Side::Hat => (data.tau, tau_to),
        Side::Check => (tau_to, data.tau),
    };
    let h = spec.half_width(tm, tp);
    check_times(spec, tm, tp, h)?;
    let (hat, check) = spec.layers(h, omega_max(data))?;
    let layers = match from {
        Side::Hat => (&hat, &check),
        Side::Check => (&check, &hat),
    };
    let results: Vec<(ModeEntry, BangPair)> = data
        .modes
        .par_iter()
        .map(|m| one_way(spec, m, from, data.tau, tau_to, layers).map_err(|e| e.in_mode(m.index)))
        .collect::<Result<_>>()?;
    let (modes, bangs) = results.into_iter().unzip();
    Ok(Crossing { data: FieldData { tau: tau_to, modes }, h, bangs })
}

/// The crossing from `τ₋` to `τ₊` with its per-mode bang pairs.
pub fn crossing(spec: &TransmissionSpec, data: &FieldData, tau_plus: f64) -> Result<Crossing> {
    run(spec, data, Side::Hat, tau_plus)
}

/// `𝔖`: field data at `τ₋` → field data at `τ₊`.
pub fn full_map_s(spec: &TransmissionSpec, data: &FieldData, tau_plus: f64) -> Result<FieldData> {
    Ok(run(spec, data, Side::Hat, tau_plus)?.data)
}

/// `𝔖⁻¹`: field data at `τ₊` → field data at `τ₋`.
pub fn invert_full_map(spec: &TransmissionSpec, data: &FieldData, tau_minus: f64) -> Result<FieldData> {
    Ok(run(spec, data, Side::Check, tau_minus)?.data)
}

/// Riccati pair for the δ-family comparison.
#[derive(Debug, Clone)]
pub struct RiccatiPair {
    pub hat: Arc<RiccatiSolution>,
    pub check: Arc<RiccatiSolution>,
}

#[derive(Debug, Clone)]
pub struct DeltaReport {
    pub delta1: f64,
    pub delta2: f64,
    /// `max|𝔖₁X − 𝔖₂X|` over the modes.
    pub discrepancy: f64,
    /// Relative deviation of `𝔖₂X − 𝔖₁X` from `(δ₂ − δ₁)·ψ₀·Y`, where `Y` is
    /// the check solution with bang pair `(0, 1)`.
    pub rule_error: f64,
}

/// `δ = lim(Â − Â_ε) − lim(Ǎ − Ǎ_ε)` against the Picard anchors of the spec.
pub fn delta_of(spec: &TransmissionSpec, pair: &RiccatiPair) -> Result<f64> {
    let opts = RiccatiOptions::default();
    let ah = picard_construct(&spec.hat.q, &opts)?;
    let ac = picard_construct(&spec.check.q, &opts)?;
    Ok(limit_difference(&pair.hat, &ah)? - limit_difference(&pair.check, &ac)?)
}

pub fn delta_family_check(
    spec: &TransmissionSpec,
    first: &RiccatiPair,
    second: &RiccatiPair,
    data: &FieldData,
    tau_plus: f64,
) -> Result<DeltaReport> {
    let delta1 = delta_of(spec, first)?;
    let delta2 = delta_of(spec, second)?;
    let with = |p: &RiccatiPair| TransmissionSpec {
        path: Path::Riccati { hat: p.hat.clone(), check: p.check.clone() },
        ..spec.clone()
    };
    let s1 = with(first);
    let s2 = with(second);
    // Shared layer width so the two runs differ only through A.
    let h = s1.half_width(data.tau, tau_plus).min(s2.half_width(data.tau, tau_plus));
    let s1 = s1.with_half_width(h);
    let s2 = s2.with_half_width(h);
    let r1 = crossing(&s1, data, tau_plus)?;
    let r2 = full_map_s(&s2, data, tau_plus)?;
    let discrepancy = r1.data.max_difference(&r2);

    // Predicted change: the check solution with pair (0, Δδ·ψ₀).
    let n = spec.dimension();
    let (_, check) = s1.layers(h, omega_max(data))?;
    let dd = delta2 - delta1;
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for ((m, bang), (a, b)) in data.modes.iter().zip(&r1.bangs).zip(r1.data.modes.iter().zip(&r2.modes)) {
        let mut p = s1.problem(Side::Check, m.index, m.lambda);
        p.source = None;
        let mut y = inverse_w(&p, &check, BangPair::new(Complex64::new(0.0, 0.0), bang.psi0 * dd))
            .map_err(|e| e.in_mode(m.index))?;
        if y.tau != tau_plus {
            y = evolve_regular(&p, y, tau_plus, spec.tol)?;
        }
        let (u, du) = liouville_unscale(n, &spec.check.omega, (y.phi, y.chi), tau_plus)?;
        let (eu, edu) = (b.u - a.u, b.du - a.du);
        num = num.max((eu - u).norm()).max((edu - du).norm());
        den = den.max(u.norm()).max(du.norm());
    }
    let rule_error = if den > 0.0 { num / den } else { num };
    Ok(DeltaReport { delta1, delta2, discrepancy, rule_error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::ConformalFactor;
    use crate::riccati::{ivp_solve, shift_to_alpha};

    fn torus() -> SpectrumSpec {
        SpectrumSpec::flat_torus(vec![2.0 * std::f64::consts::PI; 3]).unwrap()
    }

    fn unit(side: Side) -> ConformalFactor {
        ConformalFactor::constant(side, 1.0)
    }

    fn sample(spectrum: &SpectrumSpec, count: usize, tau: f64) -> FieldData {
        let mut d = FieldData::zeros(spectrum, 4.0, tau, Some(count)).unwrap();
        for (k, m) in d.modes.iter_mut().enumerate() {
            let x = k as f64;
            m.u = Complex64::new((1.3 * x).sin(), (0.7 * x).cos());
            m.du = Complex64::new((0.4 * x + 1.0).cos(), -(0.9 * x).sin());
        }
        d
    }

    #[test]
    fn massless_map_is_free_evolution() {
        let sp = torus();
        let spec = TransmissionSpec::new(
            sp.clone(),
            SideProfile::new(unit(Side::Hat), EffectiveMassSq::zero(Side::Hat)),
            SideProfile::new(unit(Side::Check), EffectiveMassSq::zero(Side::Check)),
            4.0,
            Path::Simple,
        )
        .unwrap();
        let d = sample(&sp, 8, -0.4);
        let out = full_map_s(&spec, &d, 0.5).unwrap();
        for (a, b) in d.modes.iter().zip(&out.modes) {
            let w = a.lambda.sqrt();
            let (s, c) = (w * 0.9).sin_cos();
            let (u, du) = if w == 0.0 {
                (a.u + a.du * 0.9, a.du)
            } else {
                (a.u * c + a.du * (s / w), -a.u * (w * s) + a.du * c)
            };
            assert!((b.u - u).norm() < 1e-8 && (b.du - du).norm() < 1e-8);
        }
        assert!(matches!(cross_riccati(&spec, &[]), Err(Error::PathMismatch(_))));
    }

    #[test]
    fn riccati_and_simple_paths_agree_for_integrable_masses() {
        let sp = torus();
        let qh = EffectiveMassSq::inverse_power(Side::Hat, 0.5, 0.5);
        let qc = EffectiveMassSq::inverse_power(Side::Check, 0.8, 0.5);
        let hat = SideProfile::new(unit(Side::Hat), qh.clone());
        let check = SideProfile::new(unit(Side::Check), qc.clone());
        let simple = TransmissionSpec::new(sp.clone(), hat.clone(), check.clone(), 4.0, Path::Simple).unwrap();
        let opts = RiccatiOptions::default();
        let path = Path::Riccati {
            hat: Arc::new(ivp_solve(&qh, 0.0, &opts).unwrap()),
            check: Arc::new(ivp_solve(&qc, 0.0, &opts).unwrap()),
        };
        let ric = TransmissionSpec::new(sp.clone(), hat, check, 4.0, path).unwrap();
        let d = sample(&sp, 7, -0.4);
        let a = full_map_s(&simple, &d, 0.4).unwrap();
        let b = full_map_s(&ric.with_half_width(a_h(&simple, &d)), &d, 0.4).unwrap();
        assert!(a.max_difference(&b) < 1e-6, "{}", a.max_difference(&b));
    }

    fn a_h(spec: &TransmissionSpec, d: &FieldData) -> f64 {
        spec.half_width(d.tau, 0.4)
    }

    #[test]
    fn fuchsian_round_trip_and_delta_invariance() {
        let sp = torus();
        let qh = EffectiveMassSq::fuchsian(Side::Hat, 1.0);
        let qc = EffectiveMassSq::fuchsian(Side::Check, 0.25);
        let opts = RiccatiOptions { tol: 1e-13, ..Default::default() };
        let ah = Arc::new(picard_construct(&qh, &opts).unwrap());
        let ac = Arc::new(picard_construct(&qc, &opts).unwrap());
        let spec = TransmissionSpec::new(
            sp.clone(),
            SideProfile::new(unit(Side::Hat), qh),
            SideProfile::new(unit(Side::Check), qc),
            4.0,
            Path::Riccati { hat: ah.clone(), check: ac.clone() },
        )
        .unwrap();
        let d = sample(&sp, 7, -0.3);
        let fwd = full_map_s(&spec, &d, 0.3).unwrap();
        let back = invert_full_map(&spec, &fwd, -0.3).unwrap();
        assert!(back.max_difference(&d) < 1e-6, "{}", back.max_difference(&d));

        let base = RiccatiPair { hat: ah.clone(), check: ac.clone() };
        let same = RiccatiPair {
            hat: Arc::new(shift_to_alpha(&ah, 0.3).unwrap()),
            check: Arc::new(shift_to_alpha(&ac, 0.3).unwrap()),
        };
        let r = delta_family_check(&spec, &base, &same, &d, 0.3).unwrap();
        assert!((r.delta1 - r.delta2).abs() < 1e-6, "{r:?}");
        assert!(r.discrepancy < 1e-6, "{r:?}");
        let other = RiccatiPair { hat: Arc::new(shift_to_alpha(&ah, 1.0).unwrap()), check: ac };
        let r = delta_family_check(&spec, &base, &other, &d, 0.3).unwrap();
        assert!((r.delta2 - r.delta1 - 1.0).abs() < 1e-6, "{r:?}");
        assert!(r.discrepancy > 1e-3 && r.rule_error < 1e-4, "{r:?}");
    }
}
