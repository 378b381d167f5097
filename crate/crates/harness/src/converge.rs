//! `converge`: rerun parts of a scenario over a resolution ladder.

use bangcross::evolver::{evolve_regular, limit_w, BangPair, LayerOptions, ModeState};
use bangcross::frobenius::{eval_solution, extract_constants, FuchsProblem};
use bangcross::profiles::{liouville_scale, MassShape, Side};
use bangcross::transmission::{full_map_s, omega_max, TransmissionSpec};

use crate::config::Scenario;
use crate::error::{numerical, HarnessError, Result};
use crate::output::{csv_table, num, Metadata, OutputSet};
use crate::run::free_reference;
use crate::setup::{Setup, PRNG};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ladder {
    /// Graded-mesh ratio of the damped layer, at low Gauss order.
    Ratio,
    /// Regular-evolution tolerance of the full map.
    Tol,
    /// Frobenius truncation order for constant extraction.
    Series,
    /// Per-eigenvalue error against the free wave (massless scenarios).
    Lambda,
}

impl std::str::FromStr for Ladder {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ratio" => Ok(Ladder::Ratio),
            "tol" => Ok(Ladder::Tol),
            "series" => Ok(Ladder::Series),
            "lambda" => Ok(Ladder::Lambda),
            other => Err(HarnessError::UnknownLadder(other.to_string())),
        }
    }
}

impl Ladder {
    pub fn name(self) -> &'static str {
        match self {
            Ladder::Ratio => "ratio",
            Ladder::Tol => "tol",
            Ladder::Series => "series",
            Ladder::Lambda => "lambda",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    pub parameter: f64,
    /// Resolution measure the observed order refers to.
    pub resolution: f64,
    pub error: f64,
}

#[derive(Debug, Clone)]
pub struct ConvergenceTable {
    pub ladder: Ladder,
    pub levels: Vec<Level>,
}

impl ConvergenceTable {
    /// `ln(e_k/e_{k+1}) / ln(r_{k+1}/r_k)` between consecutive levels.
    pub fn observed_orders(&self) -> Vec<Option<f64>> {
        let mut out = vec![None];
        for w in self.levels.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            let ok = a.error > 0.0 && b.error > 0.0 && a.resolution != b.resolution;
            out.push(ok.then(|| (a.error / b.error).ln() / (b.resolution / a.resolution).ln()));
        }
        out
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.levels.windows(2).all(|w| w[1].error < w[0].error)
    }

    /// Largest over smallest error; 1 for a perfectly flat table.
    pub fn spread(&self) -> f64 {
        let hi = self.levels.iter().map(|l| l.error).fold(0.0, f64::max);
        let lo = self.levels.iter().map(|l| l.error).fold(f64::INFINITY, f64::min);
        hi / lo.max(1e-300)
    }
}

fn not_applicable(ladder: Ladder, reason: &str) -> HarnessError {
    HarnessError::Ladder { ladder: ladder.name().into(), reason: reason.into() }
}

fn edge_states(setup: &Setup, h: f64) -> Result<Vec<ModeState>> {
    let spec = &setup.spec;
    setup
        .data
        .modes
        .iter()
        .map(|m| {
            let (phi, chi) = liouville_scale(spec.dimension(), &spec.hat.omega, (m.u, m.du), setup.tau_minus)
                .map_err(numerical("profiles"))?;
            let p = spec.problem(Side::Hat, m.index, m.lambda);
            evolve_regular(&p, ModeState::new(setup.tau_minus, phi, chi), -h, spec.tol).map_err(numerical("mode_evolver"))
        })
        .collect()
}

fn bangs(setup: &Setup, edges: &[ModeState], h: f64, opts: LayerOptions) -> Result<(Vec<BangPair>, usize)> {
    let spec = TransmissionSpec { layer: opts, ..setup.spec.clone() };
    let (layer, _) = spec.layers(h, omega_max(&setup.data)).map_err(numerical("mode_evolver"))?;
    let out = setup
        .data
        .modes
        .iter()
        .zip(edges)
        .map(|(m, s)| limit_w(&spec.problem(Side::Hat, m.index, m.lambda), &layer, *s).map_err(numerical("mode_evolver")))
        .collect::<Result<Vec<_>>>()?;
    Ok((out, layer.mesh().n_nodes()))
}

fn ratio_ladder(setup: &Setup) -> Result<Vec<Level>> {
    let h = setup.half_width();
    let edges = edge_states(setup, h)?;
    let base = setup.spec.layer.clone();
    let (reference, _) = bangs(setup, &edges, h, LayerOptions { ratio: 0.8, order: 16, ..base.clone() })?;
    let mut levels = Vec::new();
    for ratio in [0.1, 0.2, 0.35, 0.5, 0.65] {
        let (b, nodes) = bangs(setup, &edges, h, LayerOptions { ratio, order: 4, ..base.clone() })?;
        let error = b
            .iter()
            .zip(&reference)
            .map(|(x, r)| (x.psi0 - r.psi0).norm().max((x.psi1 - r.psi1).norm()) / r.psi0.norm().max(r.psi1.norm()).max(1.0))
            .fold(0.0, f64::max);
        levels.push(Level { parameter: ratio, resolution: nodes as f64, error });
    }
    Ok(levels)
}

fn tol_ladder(setup: &Setup) -> Result<Vec<Level>> {
    let run = |tol: f64| {
        let spec = TransmissionSpec { tol, ..setup.spec.clone() };
        full_map_s(&spec, &setup.data, setup.tau_plus).map_err(numerical("transmission"))
    };
    let reference = run(1e-13)?;
    let scale = reference.norm_h1_l2().max(1.0);
    let mut levels = Vec::new();
    for tol in [1e-4, 1e-6, 1e-8, 1e-10] {
        let error = run(tol)?.max_difference(&reference) / scale;
        levels.push(Level { parameter: tol, resolution: 1.0 / tol, error });
    }
    Ok(levels)
}

fn series_ladder(setup: &Setup) -> Result<Vec<Level>> {
    let spec = &setup.spec;
    let MassShape::Fuchsian { c2, poly } = &spec.hat.q.shape else {
        return Err(not_applicable(Ladder::Series, "the hat effective mass is not Fuchsian"));
    };
    let rho = spec.spectrum.curvature_potential();
    let (c1_true, c2_true) = (0.7, -1.2);
    // Wide enough that truncation, not roundoff, dominates at N = 20.
    let tm = -1.0;
    let mut errors = [0.0f64; 3];
    for m in &setup.data.modes {
        let exact = FuchsProblem::new(m.lambda + rho, *c2, Side::Hat).with_polynomial(poly.clone()).with_truncation(80);
        let exact = FuchsProblem { radius_guard: 1.0, ..exact };
        // Samples on [−1, −1/3], from the ODE started at −0.1 with series data.
        let t0 = tm / 10.0;
        let (phi, dphi) = eval_solution(&exact, c1_true, c2_true, t0).map_err(numerical("frobenius"))?;
        let p = spec.problem(Side::Hat, m.index, m.lambda);
        let mut state = ModeState::real(t0, phi, dphi);
        let mut samples = Vec::new();
        for k in 0..24 {
            let t = tm / 3.0 + (tm - tm / 3.0) * k as f64 / 23.0;
            state = evolve_regular(&p, state, t, 1e-13).map_err(numerical("mode_evolver"))?;
            samples.push((t, state.phi.re, state.chi.re));
        }
        for (e, n) in errors.iter_mut().zip([10, 20, 40]) {
            let fp = FuchsProblem { n, ..exact.clone() };
            let fit = extract_constants(&fp, &samples).map_err(numerical("frobenius"))?;
            *e = e.max((fit.c1 - c1_true).abs().max((fit.c2 - c2_true).abs()) / c1_true.abs().max(c2_true.abs()));
        }
    }
    Ok([10, 20, 40].iter().zip(errors).map(|(n, error)| Level { parameter: *n as f64, resolution: *n as f64, error }).collect())
}

fn lambda_ladder(setup: &Setup) -> Result<Vec<Level>> {
    let Some(reference) = free_reference(setup)? else {
        return Err(not_applicable(Ladder::Lambda, "needs m ≡ 0 on both sides and no sources"));
    };
    let out = full_map_s(&setup.spec, &setup.data, setup.tau_plus).map_err(numerical("transmission"))?;
    let mut by_lambda: Vec<Level> = Vec::new();
    for (a, b) in out.modes.iter().zip(&reference.modes) {
        let e = (a.u - b.u).norm().max((a.du - b.du).norm()) / b.u.norm().max(b.du.norm()).max(1.0);
        match by_lambda.iter_mut().find(|l| l.parameter == a.lambda) {
            Some(l) => l.error = l.error.max(e),
            None => by_lambda.push(Level { parameter: a.lambda, resolution: 1.0, error: e }),
        }
    }
    by_lambda.sort_by(|a, b| a.parameter.total_cmp(&b.parameter));
    Ok(by_lambda)
}

pub fn convergence_study(setup: &Setup, ladder: Ladder) -> Result<ConvergenceTable> {
    let levels = match ladder {
        Ladder::Ratio => ratio_ladder(setup)?,
        Ladder::Tol => tol_ladder(setup)?,
        Ladder::Series => series_ladder(setup)?,
        Ladder::Lambda => lambda_ladder(setup)?,
    };
    Ok(ConvergenceTable { ladder, levels })
}

/// Parse, run the ladder and render `converge_<ladder>.csv`.
pub fn converge_files(scenario: &Scenario, text: &str, origin: &str, seed: Option<u64>, ladder: Ladder) -> Result<(ConvergenceTable, OutputSet)> {
    let setup = Setup::build(scenario, seed, origin)?;
    let table = convergence_study(&setup, ladder)?;
    let mut meta = Metadata::new(text, setup.seed, PRNG);
    meta.push("scenario", &scenario.name);
    meta.push("ladder", ladder.name());
    meta.push("omega_sign_hat", setup.spec.hat.omega.sign());
    meta.push("omega_sign_check", setup.spec.check.omega.sign());
    let rows: Vec<Vec<String>> = table
        .levels
        .iter()
        .zip(table.observed_orders())
        .enumerate()
        .map(|(k, (l, o))| vec![k.to_string(), num(l.parameter), num(l.resolution), num(l.error), o.map_or(String::new(), num)])
        .collect();
    let mut files = OutputSet::default();
    files.add(
        &format!("converge_{}.csv", ladder.name()),
        csv_table(&meta, &["level", "parameter", "resolution", "error", "observed_order"], &rows)?,
    );
    Ok((table, files))
}
