//! Acceptance checks run by `verify`, each reducing to measurements compared
//! against a pinned tolerance.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use bangcross::evolver::{
    damped_evolve, energy_identity_residual, evolve_regular, gronwall_check, inverse_w, limit_w, sample_regular, Layer,
    LayerOptions, ModeProblem, ModeState,
};
use bangcross::numerics::fit::{extrapolate_to_zero, line};
use bangcross::profiles::{
    conformal_time_check, conformal_time_hat, reciprocal_residual, ConformalFactor, EffectiveMassSq, HatHorizon,
    ScaleFactor, Side,
};
use bangcross::riccati::{
    divergence_probe, ivp_solve, picard_bounds_violation, picard_construct, residual, shift_to_alpha, RiccatiOptions,
    RiccatiSolution,
};
use bangcross::semilinear::{
    cross_semilinear, evolve_semilinear, lipschitz_probe, one_sided_limit, SemilinearProblem, SemilinearSpec,
    SpectralState, TorusGrid3,
};
use bangcross::spectrum::SpectrumSpec;
use bangcross::transmission::{
    delta_family_check, full_map_s, invert_full_map, FieldData, Path, RiccatiPair, SideProfile, TransmissionSpec,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::error::{numerical, HarnessError, Result};
use crate::oracle::{oracle_comparison, OracleConfig, OracleSide};
use crate::output::{csv_table, num, Metadata, OutputSet};
use crate::setup::smooth_field;

pub const DEFAULT_SEED: u64 = 20240611;

const DEFAULTS: &[(&str, f64)] = &[
    ("c1.linear_error", 1e-8),
    ("c1.seconds", 1.0),
    ("c2.tan_error", 1e-8),
    ("c2.residual", 1e-6),
    ("c2.l1_slack", 1e-8),
    ("c2.seconds", 5.0),
    ("c3.rel_error", 1e-4),
    ("c3.seconds", 30.0),
    ("c4.equal_delta", 1e-6),
    ("c4.affine_rule", 1e-4),
    ("c5.path_difference", 1e-6),
    ("c6.linearity", 1e-10),
    ("c6.round_trip", 1e-6),
    ("c7.log_ratio_drift", 0.01),
    ("c7.phi_limit", 1e-6),
    ("c7.probe_coefficient", 0.02),
    ("c8.identity_residual", 1e-7),
    ("c8.first_integral", 1e-8),
    ("c9.kappa_zero", 1e-6),
    ("c9.constant_data", 1e-7),
    ("c9.two_sided", 1e-5),
    ("c9.lipschitz_spread", 0.05),
    ("c9.seconds", 120.0),
    ("c10.de_sitter", 1e-6),
    ("c10.penrose_limit", 1e-4),
];

/// Tolerances keyed `check.measurement`; overrides may only touch known keys.
#[derive(Debug, Clone)]
pub struct Tolerances(BTreeMap<String, f64>);

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances(DEFAULTS.iter().map(|(k, v)| (k.to_string(), *v)).collect())
    }
}

impl Tolerances {
    pub fn get(&self, key: &str) -> f64 {
        self.0[key]
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Defaults overridden by a TOML table of `"c4.affine_rule" = 1e-5` lines.
    pub fn with_overrides(text: &str, origin: &str) -> Result<Tolerances> {
        let table: BTreeMap<String, f64> = toml::from_str(text).map_err(|e| HarnessError::Parse {
            origin: origin.to_string(),
            message: e.to_string().trim_end().to_string(),
        })?;
        let mut t = Tolerances::default();
        for (k, v) in table {
            let field = |message: &str| HarnessError::Field { origin: origin.to_string(), field: k.clone(), message: message.into() };
            let Some(slot) = t.0.get_mut(&k) else {
                return Err(field("unknown tolerance key"));
            };
            if !(v.is_finite() && v >= 0.0) {
                return Err(field("tolerance must be finite and nonnegative"));
            }
            *slot = v;
        }
        Ok(t)
    }
}

#[derive(Debug, Clone)]
pub struct Measurement {
    pub key: String,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
    /// Wall-clock measurements are reported but never written to files.
    pub timing: bool,
}

#[derive(Debug, Clone)]
pub struct CheckReport {
    pub id: &'static str,
    pub name: &'static str,
    pub tags: &'static [&'static str],
    pub measurements: Vec<Measurement>,
    pub error: Option<String>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.measurements.iter().all(|m| m.pass)
    }

    pub fn failures(&self) -> Vec<&Measurement> {
        self.measurements.iter().filter(|m| !m.pass).collect()
    }

    /// `PASS c1 closed-form modes` or `FAIL c4 delta family: affine_rule=… > …`.
    pub fn line(&self) -> String {
        if let Some(e) = &self.error {
            return format!("FAIL {} {}: error: {e}", self.id, self.name);
        }
        let detail: Vec<String> = self
            .measurements
            .iter()
            .map(|m| format!("{}={:.3e} (≤ {:e})", m.key, m.value, m.limit))
            .collect();
        if self.passed() {
            format!("PASS {} {}: {}", self.id, self.name, detail.join(", "))
        } else {
            let bad: Vec<String> =
                self.failures().iter().map(|m| format!("{}={:.3e} > {:e}", m.key, m.value, m.limit)).collect();
            format!("FAIL {} {}: {}", self.id, self.name, bad.join(", "))
        }
    }
}

struct Probe<'a> {
    id: &'static str,
    tol: &'a Tolerances,
    seed: u64,
    out: Vec<Measurement>,
}

impl Probe<'_> {
    fn push(&mut self, key: &str, value: f64, limit: f64, timing: bool) {
        self.out.push(Measurement { key: key.into(), value, limit, pass: value <= limit, timing });
    }

    /// `value ≤ tolerance[id.key]`; NaN fails.
    fn le(&mut self, key: &str, value: f64) {
        let limit = self.tol.get(&format!("{}.{key}", self.id));
        self.push(key, value, limit, false);
    }

    /// A structural condition with a fixed bound.
    fn le_fixed(&mut self, key: &str, value: f64, limit: f64) {
        self.push(key, value, limit, false);
    }

    fn seconds(&mut self, start: Instant) {
        let limit = self.tol.get(&format!("{}.seconds", self.id));
        self.push("seconds", start.elapsed().as_secs_f64(), limit, true);
    }
}

type CheckFn = fn(&mut Probe) -> Result<()>;

pub struct Check {
    pub id: &'static str,
    pub name: &'static str,
    pub tags: &'static [&'static str],
    run: CheckFn,
}

pub fn checks() -> &'static [Check] {
    const CHECKS: &[Check] = &[
        Check { id: "c1", name: "closed-form modes", tags: &["c1", "linear", "oracle"], run: c1_closed_form },
        Check { id: "c2", name: "Riccati construction", tags: &["c2", "riccati"], run: c2_riccati },
        Check {
            id: "c3",
            name: "Frobenius cross-validation",
            tags: &["c3", "frobenius", "oracle", "transmission"],
            run: c3_frobenius,
        },
        Check { id: "c4", name: "delta family", tags: &["c4", "delta", "transmission"], run: c4_delta },
        Check { id: "c5", name: "integrable paths agree", tags: &["c5", "riccati", "transmission"], run: c5_paths },
        Check {
            id: "c6",
            name: "linear homeomorphism",
            tags: &["c6", "transmission", "homeomorphism"],
            run: c6_homeomorphism,
        },
        Check { id: "c7", name: "logarithmic blow-up", tags: &["c7", "blowup", "riccati"], run: c7_blowup },
        Check { id: "c8", name: "energy identities", tags: &["c8", "energy"], run: c8_energy },
        Check { id: "c9", name: "semilinear crossing", tags: &["c9", "semilinear", "slow"], run: c9_semilinear },
        Check { id: "c10", name: "conformal profiles", tags: &["c10", "profiles"], run: c10_profiles },
    ];
    CHECKS
}

/// Checks carrying any of `tags` (all of them when empty).
pub fn select(tags: &[String]) -> Result<Vec<&'static Check>> {
    for t in tags {
        if !checks().iter().any(|c| c.tags.contains(&t.as_str())) {
            return Err(HarnessError::UnknownTag(t.clone()));
        }
    }
    Ok(checks().iter().filter(|c| tags.is_empty() || tags.iter().any(|t| c.tags.contains(&t.as_str()))).collect())
}

pub fn run_check(check: &Check, tol: &Tolerances, seed: u64) -> CheckReport {
    let mut probe = Probe { id: check.id, tol, seed, out: Vec::new() };
    let error = (check.run)(&mut probe).err().map(|e| e.to_string());
    CheckReport { id: check.id, name: check.name, tags: check.tags, measurements: probe.out, error }
}

pub fn run_checks(tags: &[String], tol: &Tolerances, seed: u64) -> Result<Vec<CheckReport>> {
    Ok(select(tags)?.into_iter().map(|c| run_check(c, tol, seed)).collect())
}

/// `verify.csv` (one row per measurement) and `verify.json`.
pub fn verify_files(reports: &[CheckReport], tol: &Tolerances, seed: u64, tol_text: &str) -> Result<OutputSet> {
    let mut meta = Metadata::new(tol_text, seed, crate::setup::PRNG);
    meta.push("omega_sign_hat", "per-check");
    meta.push("omega_sign_check", "per-check");
    let mut rows = Vec::new();
    for r in reports {
        let status = if r.passed() { "PASS" } else { "FAIL" };
        if let Some(e) = &r.error {
            rows.push(vec![r.id.into(), r.name.into(), r.tags.join(" "), "error".into(), e.clone(), String::new(), status.into()]);
        }
        for m in r.measurements.iter().filter(|m| !m.timing) {
            let pass = if m.pass { "PASS" } else { "FAIL" };
            rows.push(vec![r.id.into(), r.name.into(), r.tags.join(" "), m.key.clone(), num(m.value), num(m.limit), pass.into()]);
        }
    }
    let mut files = OutputSet::default();
    files.add("verify.csv", csv_table(&meta, &["check", "name", "tags", "measurement", "value", "tolerance", "status"], &rows)?);
    let checks: Vec<_> = reports
        .iter()
        .map(|r| {
            json!({
                "id": r.id,
                "name": r.name,
                "tags": r.tags,
                "passed": r.passed(),
                "error": r.error,
                "measurements": r.measurements.iter().filter(|m| !m.timing).map(|m| json!({
                    "key": m.key, "value": m.value, "tolerance": m.limit, "pass": m.pass,
                })).collect::<Vec<_>>(),
            })
        })
        .collect();
    let tolerances: serde_json::Map<String, serde_json::Value> = tol.entries().map(|(k, v)| (k.to_string(), json!(v))).collect();
    let doc = json!({
        "metadata": meta.to_json(),
        "all_passed": reports.iter().all(|r| r.passed()),
        "checks": checks,
        "tolerances": tolerances,
    });
    files.add("verify.json", serde_json::to_vec_pretty(&doc)?);
    Ok(files)
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// `φ'' = −k²φ` advanced by `dt` from `(u, u')`.
fn harmonic(k2: f64, u: Complex64, du: Complex64, dt: f64) -> (Complex64, Complex64) {
    if k2 > 0.0 {
        let w = k2.sqrt();
        let (s, co) = (w * dt).sin_cos();
        (u * co + du * (s / w), -u * (w * s) + du * co)
    } else if k2 < 0.0 {
        let w = (-k2).sqrt();
        let (s, co) = ((w * dt).sinh(), (w * dt).cosh());
        (u * co + du * (s / w), u * (w * s) + du * co)
    } else {
        (u + du * dt, du)
    }
}

fn unit(side: Side) -> ConformalFactor {
    ConformalFactor::constant(side, 1.0)
}

fn torus() -> Result<SpectrumSpec> {
    SpectrumSpec::flat_torus(vec![2.0 * std::f64::consts::PI; 3]).map_err(numerical("spectrum"))
}

/// The first `count` torus modes with uniform random coefficients.
fn random_data(spectrum: &SpectrumSpec, count: usize, tau: f64, seed: u64) -> Result<FieldData> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d = FieldData::zeros(spectrum, 4.0, tau, Some(count)).map_err(numerical("transmission"))?;
    for m in d.modes.iter_mut() {
        m.u = c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        m.du = c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    }
    Ok(d)
}

fn picard(q: &EffectiveMassSq) -> Result<RiccatiSolution> {
    picard_construct(q, &RiccatiOptions { tol: 1e-13, ..Default::default() }).map_err(numerical("riccati"))
}

fn riccati_spec(spectrum: SpectrumSpec, qh: EffectiveMassSq, qc: EffectiveMassSq) -> Result<(TransmissionSpec, RiccatiPair)> {
    let pair = RiccatiPair { hat: Arc::new(picard(&qh)?), check: Arc::new(picard(&qc)?) };
    let spec = TransmissionSpec::new(
        spectrum,
        SideProfile::new(unit(Side::Hat), qh),
        SideProfile::new(unit(Side::Check), qc),
        4.0,
        Path::Riccati { hat: pair.hat.clone(), check: pair.check.clone() },
    )
    .map_err(numerical("transmission"))?;
    Ok((spec, pair))
}

fn c1_closed_form(p: &mut Probe) -> Result<()> {
    let start = Instant::now();
    let lambdas = [0.0, 1.0, 4.0, 9.0];
    let spectrum =
        SpectrumSpec::explicit(3, lambdas.iter().map(|l| (*l, 1)).collect(), 0.0).map_err(numerical("spectrum"))?;
    let mut worst = 0.0f64;
    for q0 in [0.0, 0.75] {
        // Each side on a unit interval away from the surface.
        for (side, a, b) in [(Side::Hat, -1.5, -0.5), (Side::Check, 0.5, 1.5)] {
            let q = EffectiveMassSq::constant(side, q0);
            for &l in &lambdas {
                let (u, du) = (c(0.8, -0.3), c(-0.4, 1.1));
                let s = evolve_regular(&ModeProblem::new(l, 0.0, q.clone()), ModeState::new(a, u, du), b, 1e-12)
                    .map_err(numerical("mode_evolver"))?;
                let (eu, edu) = harmonic(l + q0, u, du, b - a);
                worst = worst.max((s.phi - eu).norm()).max((s.chi - edu).norm());
            }
        }
        // Across the surface, where both masses are integrable.
        let spec = TransmissionSpec::new(
            spectrum.clone(),
            SideProfile::new(unit(Side::Hat), EffectiveMassSq::constant(Side::Hat, q0)),
            SideProfile::new(unit(Side::Check), EffectiveMassSq::constant(Side::Check, q0)),
            9.0,
            Path::Simple,
        )
        .map_err(numerical("transmission"))?;
        let mut data = FieldData::zeros(&spectrum, 9.0, -0.5, None).map_err(numerical("transmission"))?;
        for (k, m) in data.modes.iter_mut().enumerate() {
            m.u = c(1.0 - 0.2 * k as f64, 0.3);
            m.du = c(0.5, -0.1 * k as f64);
        }
        let out = full_map_s(&spec, &data, 0.5).map_err(numerical("transmission"))?;
        for (a, b) in data.modes.iter().zip(&out.modes) {
            let (eu, edu) = harmonic(a.lambda + q0, a.u, a.du, 1.0);
            worst = worst.max((b.u - eu).norm()).max((b.du - edu).norm());
        }
    }
    p.le("linear_error", worst);
    p.seconds(start);
    Ok(())
}

fn c2_riccati(p: &mut Probe) -> Result<()> {
    let start = Instant::now();
    let q = EffectiveMassSq::constant(Side::Check, 1.0);
    let a = picard(&q)?;
    let te = std::f64::consts::FRAC_1_SQRT_2;
    let tan_error = a.table().iter().map(|(t, v, _)| (v - (t - te).tan()).abs()).fold(0.0, f64::max);
    p.le("tan_error", tan_error);
    let (mut res, mut viol, mut slack) = (0.0f64, 0.0f64, f64::NEG_INFINITY);
    for side in [Side::Hat, Side::Check] {
        for c2 in [0.25, 1.0] {
            let q = EffectiveMassSq::fuchsian(side, c2);
            let a = picard(&q)?;
            // Stay clear of the table edge, where the difference stencil leaves the domain.
            let h = 0.5 * a.half_width();
            for k in 0..=40 {
                let s = h * (1e-4 / h).powf(k as f64 / 40.0);
                res = res.max(residual(&a, &q, side.sign() * s).abs());
            }
            viol = viol.max(picard_bounds_violation(&a, &q));
            slack = slack.max(a.l1_norm() - 0.5);
        }
    }
    p.le("residual", res);
    p.le_fixed("picard_bounds_violation", viol, 0.0);
    p.le("l1_slack", slack);
    p.seconds(start);
    Ok(())
}

fn c3_frobenius(p: &mut Probe) -> Result<()> {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for c2h in [0.25, 1.0] {
        for c2c in [0.25, 1.0] {
            let cfg = OracleConfig {
                name: "acceptance".into(),
                lambdas: vec![1.0, 4.0],
                n: 20,
                half_width: 0.1,
                tau_minus: -0.3,
                tau_plus: 0.3,
                constants: vec![(0.7, -1.2), (-0.4, 0.9)],
                hat: OracleSide { c2: c2h, poly: Vec::new(), d: None },
                check: OracleSide { c2: c2c, poly: Vec::new(), d: None },
            };
            for r in oracle_comparison(&cfg)? {
                worst = worst.max(r.rel_error);
            }
        }
    }
    p.le("rel_error", worst);
    p.seconds(start);
    Ok(())
}

fn shifted(a: &RiccatiSolution, alpha: f64) -> Result<Arc<RiccatiSolution>> {
    Ok(Arc::new(shift_to_alpha(a, alpha).map_err(numerical("riccati"))?))
}

fn c4_delta(p: &mut Probe) -> Result<()> {
    let sp = torus()?;
    let (spec, base) =
        riccati_spec(sp.clone(), EffectiveMassSq::fuchsian(Side::Hat, 1.0), EffectiveMassSq::fuchsian(Side::Check, 0.25))?;
    let data = random_data(&sp, 10, -0.3, p.seed)?;
    let same = RiccatiPair { hat: shifted(&base.hat, 0.3)?, check: shifted(&base.check, 0.3)? };
    let r = delta_family_check(&spec, &base, &same, &data, 0.3).map_err(numerical("transmission"))?;
    p.le("equal_delta", r.discrepancy);
    let other = RiccatiPair { hat: shifted(&base.hat, 1.0)?, check: base.check.clone() };
    let r = delta_family_check(&spec, &base, &other, &data, 0.3).map_err(numerical("transmission"))?;
    p.le("affine_rule", r.rule_error);
    Ok(())
}

fn c5_paths(p: &mut Probe) -> Result<()> {
    let sp = torus()?;
    let qh = EffectiveMassSq::inverse_power(Side::Hat, 0.5, 0.5);
    let qc = EffectiveMassSq::inverse_power(Side::Check, 0.8, 0.5);
    let hat = SideProfile::new(unit(Side::Hat), qh.clone());
    let check = SideProfile::new(unit(Side::Check), qc.clone());
    let simple = TransmissionSpec::new(sp.clone(), hat.clone(), check.clone(), 4.0, Path::Simple)
        .map_err(numerical("transmission"))?;
    let opts = RiccatiOptions::default();
    let path = Path::Riccati {
        hat: Arc::new(ivp_solve(&qh, 0.0, &opts).map_err(numerical("riccati"))?),
        check: Arc::new(ivp_solve(&qc, 0.0, &opts).map_err(numerical("riccati"))?),
    };
    let data = random_data(&sp, 10, -0.4, p.seed)?;
    let h = simple.half_width(-0.4, 0.4);
    let ric = TransmissionSpec::new(sp, hat, check, 4.0, path).map_err(numerical("transmission"))?.with_half_width(h);
    let a = full_map_s(&simple, &data, 0.4).map_err(numerical("transmission"))?;
    let b = full_map_s(&ric, &data, 0.4).map_err(numerical("transmission"))?;
    p.le("path_difference", a.max_difference(&b));
    Ok(())
}

fn c6_homeomorphism(p: &mut Probe) -> Result<()> {
    let sp = torus()?;
    let (spec, _) =
        riccati_spec(sp.clone(), EffectiveMassSq::fuchsian(Side::Hat, 1.0), EffectiveMassSq::fuchsian(Side::Check, 0.25))?;
    let x = random_data(&sp, 20, -0.3, p.seed)?;
    let y = random_data(&sp, 20, -0.3, p.seed.wrapping_add(1))?;
    let (a, b) = (c(0.7, -0.2), c(-1.3, 0.5));
    let map = |d: &FieldData| full_map_s(&spec, d, 0.3).map_err(numerical("transmission"));
    let (sx, sy) = (map(&x)?, map(&y)?);
    let combined = map(&x.scaled(a).add(&y.scaled(b)))?;
    let expected = sx.scaled(a).add(&sy.scaled(b));
    let scale = expected.modes.iter().map(|m| m.u.norm().max(m.du.norm())).fold(1.0, f64::max);
    p.le("linearity", combined.max_difference(&expected) / scale);
    let back = invert_full_map(&spec, &sx, -0.3).map_err(numerical("transmission"))?;
    let scale = x.modes.iter().map(|m| m.u.norm().max(m.du.norm())).fold(1.0, f64::max);
    p.le("round_trip", back.max_difference(&x) / scale);
    Ok(())
}

fn c7_blowup(p: &mut Probe) -> Result<()> {
    let (mut drift, mut phi_err, mut coeff) = (0.0f64, 0.0f64, 0.0f64);
    for c2 in [0.25, 1.0] {
        let q = EffectiveMassSq::fuchsian(Side::Hat, c2);
        let a = Arc::new(picard(&q)?);
        let report = divergence_probe(&a).map_err(numerical("riccati"))?;
        coeff = coeff.max((report.log_coefficient - c2).abs() / c2);

        let h = 0.1f64.min(a.half_width());
        let problem = ModeProblem::new(1.0, 0.0, q.clone());
        let layer = Layer::new(Side::Hat, h, &q, Some(a), 2.0f64.sqrt(), LayerOptions::default())
            .map_err(numerical("mode_evolver"))?;
        let run = damped_evolve(&problem, &layer, layer.psi_of(ModeState::real(-h, 1.0, 0.5)))
            .map_err(numerical("mode_evolver"))?;
        let states: Vec<ModeState> = run.samples.iter().map(|s| layer.state_of(*s)).collect();
        // Slope of χ against ln|τ| on successive decades toward the surface.
        let mut slopes = Vec::new();
        for d in 2..=9 {
            let (hi, lo) = (10f64.powi(-d), 10f64.powi(-d - 1));
            let pts: Vec<&ModeState> = states.iter().filter(|s| s.tau.abs() <= hi && s.tau.abs() >= lo).collect();
            if pts.len() < 4 {
                return Err(HarnessError::Ladder { ladder: "c7".into(), reason: format!("too few samples in decade {d}") });
            }
            let xs: Vec<f64> = pts.iter().map(|s| s.tau.abs().ln()).collect();
            let ys: Vec<f64> = pts.iter().map(|s| s.chi.re).collect();
            slopes.push(line(&xs, &ys).map_err(numerical("numerics"))?.1);
        }
        let (x, y) = (slopes[slopes.len() - 2], slopes[slopes.len() - 1]);
        drift = drift.max((x - y).abs() / y.abs());
        let psi0 = run.end.psi;
        let nearest = states.iter().min_by(|a, b| a.tau.abs().total_cmp(&b.tau.abs())).copied();
        if let Some(s) = nearest {
            phi_err = phi_err.max((s.phi - psi0).norm() / psi0.norm());
        }
    }
    p.le("log_ratio_drift", drift);
    p.le("phi_limit", phi_err);
    p.le("probe_coefficient", coeff);
    Ok(())
}

fn c8_energy(p: &mut Probe) -> Result<()> {
    let q = EffectiveMassSq::inverse_power(Side::Hat, 0.5, 0.5);
    let forced = ModeProblem::new(4.0, 0.0, q).with_source(Arc::new(|t: f64| c(t.sin(), 0.3 * t.cos())));
    let start = ModeState::new(-1.0, c(0.4, 0.1), c(-0.2, 0.5));
    let traj = sample_regular(&forced, start, -0.05, 16, 16, 1e-12).map_err(numerical("mode_evolver"))?;
    p.le("identity_residual", energy_identity_residual(&forced, &traj));
    let (lhs, rhs) = gronwall_check(&forced, &traj);
    p.le_fixed("gronwall_ratio", lhs / rhs, 1.0);

    let (lambda, q0) = (4.0, 0.75);
    let free = ModeProblem::new(lambda, 0.0, EffectiveMassSq::constant(Side::Check, q0));
    let traj = sample_regular(&free, ModeState::new(0.2, c(0.4, 0.1), c(-0.2, 0.5)), 2.2, 16, 16, 1e-12)
        .map_err(numerical("mode_evolver"))?;
    let first = |s: &ModeState| s.chi.norm_sqr() + (lambda + q0) * s.phi.norm_sqr();
    let i0 = first(&traj.start);
    p.le("first_integral", traj.states.iter().map(|s| (first(s) - i0).abs() / i0).fold(0.0, f64::max));

    let grid = TorusGrid3::new(8, [2.0 * std::f64::consts::PI; 3]).map_err(numerical("semilinear"))?;
    let problem = SemilinearProblem { q: EffectiveMassSq::fuchsian(Side::Check, 1.0), rho: 0.0, kappa: 1.0 };
    let data = smooth_field(&grid, 0.1, p.seed, 0.5, 0.5);
    let (_, log) = evolve_semilinear(&grid, &problem, &data, 1.0, 1e-11).map_err(numerical("semilinear"))?;
    p.le_fixed("energy_log_violations", if log.violated() { 1.0 } else { 0.0 }, 0.0);
    Ok(())
}

/// Scalar `φ'' = −(q + κ|φ|²)φ` across the surface with `q` switching sides
/// at 0, by classical RK4 on a fine fixed step.
fn scalar_oracle(qh: f64, qc: f64, kappa: f64, tm: f64, tp: f64, y0: [f64; 4]) -> [f64; 4] {
    let f = |q: f64, y: [f64; 4]| {
        let k = q + kappa * (y[0] * y[0] + y[1] * y[1]);
        [y[2], y[3], -k * y[0], -k * y[1]]
    };
    let leg = |q: f64, mut y: [f64; 4], a: f64, b: f64| {
        let n = 20_000;
        let h = (b - a) / n as f64;
        let add = |y: [f64; 4], k: [f64; 4], s: f64| std::array::from_fn(|i| y[i] + s * k[i]);
        for _ in 0..n {
            let k1 = f(q, y);
            let k2 = f(q, add(y, k1, 0.5 * h));
            let k3 = f(q, add(y, k2, 0.5 * h));
            let k4 = f(q, add(y, k3, h));
            y = std::array::from_fn(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
        }
        y
    };
    leg(qc, leg(qh, y0, tm, 0.0), 0.0, tp)
}

fn fuchsian_semilinear(kappa: f64) -> Result<SemilinearSpec> {
    let grid = TorusGrid3::new(16, [2.0 * std::f64::consts::PI; 3]).map_err(numerical("semilinear"))?;
    let qh = EffectiveMassSq::fuchsian(Side::Hat, 0.25);
    let qc = EffectiveMassSq::fuchsian(Side::Check, 1.0);
    let (ah, ac) = (Arc::new(picard(&qh)?), Arc::new(picard(&qc)?));
    Ok(SemilinearSpec {
        grid,
        hat: SideProfile::new(unit(Side::Hat), qh),
        check: SideProfile::new(unit(Side::Check), qc),
        path: Path::Riccati { hat: ah, check: ac },
        kappa,
        rho: 0.0,
        h: 0.1,
        tol: 1e-11,
    })
}

fn c9_semilinear(p: &mut Probe) -> Result<()> {
    let start = Instant::now();
    let lin = fuchsian_semilinear(0.0)?;
    let data = smooth_field(&lin.grid, -0.3, p.seed, 0.5, 0.5);
    let out = cross_semilinear(&lin, &data, 0.3, false).map_err(numerical("semilinear"))?;
    let Path::Riccati { hat, check } = &lin.path else { unreachable!("built with the Riccati path") };
    let wmax = lin.grid.eigenvalues().iter().fold(0.0f64, |m, k| m.max((k + 1.0).sqrt()));
    let lh = Layer::new(Side::Hat, lin.h, &lin.hat.q, Some(hat.clone()), wmax, LayerOptions::default())
        .map_err(numerical("mode_evolver"))?;
    let lc = Layer::new(Side::Check, lin.h, &lin.check.q, Some(check.clone()), wmax, LayerOptions::default())
        .map_err(numerical("mode_evolver"))?;
    let mut worst = 0.0f64;
    for (i, lam) in lin.grid.eigenvalues().iter().enumerate() {
        let ph = ModeProblem::new(*lam, 0.0, lin.hat.q.clone());
        let pc = ModeProblem::new(*lam, 0.0, lin.check.q.clone());
        let step = || -> bangcross::Result<ModeState> {
            let s = evolve_regular(&ph, ModeState::new(-0.3, data.phi[i], data.chi[i]), -lin.h, 1e-12)?;
            let s = inverse_w(&pc, &lc, limit_w(&ph, &lh, s)?)?;
            evolve_regular(&pc, s, 0.3, 1e-12)
        };
        let s = step().map_err(numerical("mode_evolver"))?;
        worst = worst.max((s.phi - out.out.phi[i]).norm()).max((s.chi - out.out.chi[i]).norm());
    }
    p.le("kappa_zero", worst);

    // Spatially constant data stays constant and follows the scalar equation.
    let grid = TorusGrid3::new(8, [2.0 * std::f64::consts::PI; 3]).map_err(numerical("semilinear"))?;
    let (qh, qc, kappa) = (0.5, 1.0, 1.5);
    let simple = SemilinearSpec {
        grid: grid.clone(),
        hat: SideProfile::new(unit(Side::Hat), EffectiveMassSq::constant(Side::Hat, qh)),
        check: SideProfile::new(unit(Side::Check), EffectiveMassSq::constant(Side::Check, qc)),
        path: Path::Simple,
        kappa,
        rho: 0.0,
        h: 0.1,
        tol: 1e-12,
    };
    let zero = grid.mode_index([0, 0, 0]).expect("zero mode is kept");
    let mut s = SpectralState::zeros(&grid, -0.3);
    s.phi[zero] = c(0.6, 0.2);
    s.chi[zero] = c(-0.1, 0.3);
    let crossed = cross_semilinear(&simple, &s, 0.3, false).map_err(numerical("semilinear"))?.out;
    let y = scalar_oracle(qh, qc, kappa, -0.3, 0.3, [0.6, 0.2, -0.1, 0.3]);
    let mut err = (crossed.phi[zero] - c(y[0], y[1])).norm().max((crossed.chi[zero] - c(y[2], y[3])).norm());
    err = crossed.phi.iter().enumerate().filter(|(i, _)| *i != zero).fold(err, |m, (_, z)| m.max(z.norm()));
    p.le("constant_data", err);

    let nl = fuchsian_semilinear(1.0)?;
    let res = cross_semilinear(&nl, &data, 0.3, true).map_err(numerical("semilinear"))?;
    let a = one_sided_limit(&res.hat_samples, 1e-7, 1e-3).map_err(numerical("semilinear"))?;
    let b = one_sided_limit(&res.check_samples, 1e-7, 1e-3).map_err(numerical("semilinear"))?;
    let gap = (0..a.psi.len())
        .map(|k| (a.psi[k] - b.psi[k]).norm().max((a.dpsi[k] - b.dpsi[k]).norm()))
        .fold(0.0, f64::max);
    p.le("two_sided", gap);

    let dir = smooth_field(&nl.grid, -0.3, p.seed.wrapping_add(4), 1.0, 0.5);
    let rep = lipschitz_probe(&nl, &data, &dir, &[1e-2, 1e-3, 1e-4], 0.3).map_err(numerical("semilinear"))?;
    let bad = rep.ratios.iter().filter(|r| !(r.is_finite() && **r > 0.0)).count();
    p.le_fixed("nonfinite_ratios", bad as f64, 0.0);
    p.le("lipschitz_spread", rep.spread());
    p.seconds(start);
    Ok(())
}

fn c10_profiles(p: &mut Probe) -> Result<()> {
    let (mut ds, mut penrose) = (0.0f64, 0.0f64);
    for h in [1.0, 2.5] {
        for sign in [1.0, -1.0] {
            let (_, omega) = conformal_time_hat(&ScaleFactor::DeSitter { c: 1.0, h }, 0.0, 40.0, HatHorizon::Infinite, sign)
                .map_err(numerical("profiles"))?;
            for k in 2..=8 {
                let tau = -(10f64.powi(-k));
                ds = ds.max((sign * omega.omega(tau) * (-h * tau) - 1.0).abs());
            }
        }
        let (_, hat) = conformal_time_hat(&ScaleFactor::DeSitter { c: 1.0, h }, 0.0, 40.0, HatHorizon::Infinite, -1.0)
            .map_err(numerical("profiles"))?;
        let (_, check) = conformal_time_check(&ScaleFactor::PowerLaw { c: (2.0 * h).sqrt(), eta: 0.5 }, 1.0)
            .map_err(numerical("profiles"))?;
        let xs: Vec<f64> = (0..20).map(|k| 0.1 * 10f64.powf(-3.0 * k as f64 / 19.0)).collect();
        let ys = xs
            .iter()
            .map(|t| reciprocal_residual(&hat, &check, *t))
            .collect::<bangcross::Result<Vec<f64>>>()
            .map_err(numerical("profiles"))?;
        penrose = penrose.max(extrapolate_to_zero(&xs, &ys, 2).map_err(numerical("numerics"))?.abs());
    }
    p.le("de_sitter", ds);
    p.le("penrose_limit", penrose);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_reject_unknown_keys() {
        let t = Tolerances::with_overrides("\"c4.affine_rule\" = 1e-5", "t.toml").unwrap();
        assert_eq!(t.get("c4.affine_rule"), 1e-5);
        assert_eq!(t.get("c1.linear_error"), 1e-8);
        let e = Tolerances::with_overrides("\"c4.nope\" = 1.0", "t.toml").unwrap_err();
        assert!(e.to_string().contains("c4.nope"));
        assert!(Tolerances::with_overrides("\"c4.affine_rule\" = -1.0", "t.toml").is_err());
    }

    #[test]
    fn tags_select_subsets() {
        let all = select(&[]).unwrap();
        assert_eq!(all.len(), 10);
        let ids: Vec<&str> = select(&["oracle".into()]).unwrap().iter().map(|c| c.id).collect();
        assert_eq!(ids, ["c1", "c3"]);
        assert!(matches!(select(&["bogus".into()]), Err(HarnessError::UnknownTag(_))));
    }

    #[test]
    fn harmonic_matches_its_limits() {
        let (u, du) = (c(1.0, 0.0), c(0.0, 1.0));
        let (a, b) = harmonic(1e-14, u, du, 0.5);
        let (x, y) = harmonic(0.0, u, du, 0.5);
        assert!((a - x).norm() < 1e-12 && (b - y).norm() < 1e-12);
        let (a, _) = harmonic(-1.0, u, c(0.0, 0.0), 1.0);
        assert!((a.re - 1f64.cosh()).abs() < 1e-15);
    }
}
