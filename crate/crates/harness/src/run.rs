//! `run`: execute a scenario and collect its output files.

use bangcross::evolver::{damped_evolve, evolve_regular, sample_regular, energy_identity_residual, gronwall_check, BangPair, ModeState, PsiState};
use bangcross::frobenius::{constants_at, delta_from_series, identify_d_ratio, oracle_transmission, series, FuchsProblem};
use bangcross::profiles::{liouville_scale, liouville_unscale, FactorShape, MassShape, Side};
use bangcross::riccati::{divergence_probe, RiccatiSolution};
use bangcross::semilinear::{cross_semilinear, lipschitz_probe, one_sided_limit, SemilinearCrossing};
use bangcross::transmission::{crossing, delta_of, omega_max, FieldData, Path, RiccatiPair};
use num_complex::Complex64;
use serde_json::json;

use crate::config::Scenario;
use crate::error::{numerical, Result};
use crate::output::{csv_table, field_snapshot, num, Metadata, OutputSet};
use crate::setup::{smooth_field, Setup, PRNG};

pub struct RunReport {
    pub files: OutputSet,
    pub summary: serde_json::Value,
}

fn field_rows(d: &FieldData) -> Vec<Vec<String>> {
    d.modes
        .iter()
        .map(|m| vec![m.index.to_string(), num(m.lambda), num(m.u.re), num(m.u.im), num(m.du.re), num(m.du.im)])
        .collect()
}

const FIELD_HEADER: [&str; 6] = ["mode", "lambda", "re_u", "im_u", "re_du", "im_du"];

fn state_row(s: &ModeState, psi: Option<&PsiState>) -> Vec<String> {
    let mut r = vec![num(s.tau), num(s.phi.re), num(s.phi.im), num(s.chi.re), num(s.chi.im)];
    match psi {
        Some(p) => r.extend([num(p.psi.re), num(p.psi.im), num(p.dpsi.re), num(p.dpsi.im)]),
        None => r.extend(std::iter::repeat_n(String::new(), 4)),
    }
    r
}

fn riccati_rows(a: &RiccatiSolution) -> Vec<Vec<String>> {
    a.table().iter().map(|(t, v, i)| vec![num(*t), num(*v), num(*i)]).collect()
}

struct Lanes<'a> {
    setup: &'a Setup,
    h: f64,
    wmax: f64,
}

impl Lanes<'_> {
    fn phi_minus(&self, i: usize) -> Result<ModeState> {
        let s = self.setup;
        let m = &s.data.modes[i];
        let (phi, chi) = liouville_scale(s.spec.dimension(), &s.spec.hat.omega, (m.u, m.du), s.tau_minus)
            .map_err(numerical("profiles"))?;
        Ok(ModeState::new(s.tau_minus, phi, chi))
    }

    /// Hat regular samples, damped samples on both sides, check regular samples.
    fn trajectory(&self, i: usize, bang: BangPair, samples: usize) -> Result<Vec<Vec<String>>> {
        let s = self.setup;
        let m = &s.data.modes[i];
        let spec = &s.spec;
        let ph = spec.problem(Side::Hat, m.index, m.lambda);
        let pc = spec.problem(Side::Check, m.index, m.lambda);
        let (lh, lc) = spec.layers(self.h, self.wmax).map_err(numerical("mode_evolver"))?;
        let cells = (samples / 4).max(1);
        let mut rows = Vec::new();
        let start = self.phi_minus(i)?;
        let hat = sample_regular(&ph, start, -self.h, cells, 4, spec.tol).map_err(numerical("mode_evolver"))?;
        rows.push(state_row(&start, None));
        rows.extend(hat.states.iter().map(|st| state_row(st, None)));
        let edge = evolve_regular(&ph, start, -self.h, spec.tol).map_err(numerical("mode_evolver"))?;
        let run = damped_evolve(&ph, &lh, lh.psi_of(edge)).map_err(numerical("mode_evolver"))?;
        let mut damped: Vec<PsiState> = run.samples;
        let back = damped_evolve(&pc, &lc, PsiState { tau: 0.0, psi: bang.psi0, dpsi: bang.psi1 })
            .map_err(numerical("mode_evolver"))?;
        let check_edge = lc.state_of(back.end);
        damped.extend(back.samples);
        damped.sort_by(|a, b| a.tau.total_cmp(&b.tau));
        for p in &damped {
            let st = if p.tau < 0.0 { lh.state_of(*p) } else if p.tau > 0.0 { lc.state_of(*p) } else { continue };
            rows.push(state_row(&st, Some(p)));
        }
        let check = sample_regular(&pc, check_edge, s.tau_plus, cells, 4, spec.tol).map_err(numerical("mode_evolver"))?;
        rows.extend(check.states.iter().map(|st| state_row(st, None)));
        Ok(rows)
    }

    /// `(side, identity residual, Gronwall lhs, Gronwall rhs)` on both regular segments.
    fn energy(&self, i: usize, bang: BangPair) -> Result<Vec<(Side, f64, f64, f64)>> {
        let s = self.setup;
        let m = &s.data.modes[i];
        let spec = &s.spec;
        let ph = spec.problem(Side::Hat, m.index, m.lambda);
        let pc = spec.problem(Side::Check, m.index, m.lambda);
        let (_, lc) = spec.layers(self.h, self.wmax).map_err(numerical("mode_evolver"))?;
        let hat = sample_regular(&ph, self.phi_minus(i)?, -self.h, 8, 8, spec.tol).map_err(numerical("mode_evolver"))?;
        let back = damped_evolve(&pc, &lc, PsiState { tau: 0.0, psi: bang.psi0, dpsi: bang.psi1 })
            .map_err(numerical("mode_evolver"))?;
        let check = sample_regular(&pc, lc.state_of(back.end), s.tau_plus, 8, 8, spec.tol).map_err(numerical("mode_evolver"))?;
        let (gh, gc) = (gronwall_check(&ph, &hat), gronwall_check(&pc, &check));
        Ok(vec![
            (Side::Hat, energy_identity_residual(&ph, &hat), gh.0, gh.1),
            (Side::Check, energy_identity_residual(&pc, &check), gc.0, gc.1),
        ])
    }
}

/// Closed-form massless evolution of every mode, when both masses vanish and
/// no sources are present.
pub(crate) fn free_reference(setup: &Setup) -> Result<Option<FieldData>> {
    let spec = &setup.spec;
    if !(spec.hat.q.is_identically_zero() && spec.check.q.is_identically_zero())
        || spec.hat.source.is_some()
        || spec.check.source.is_some()
    {
        return Ok(None);
    }
    let n = spec.dimension();
    let rho = spec.spectrum.curvature_potential();
    let dt = setup.tau_plus - setup.tau_minus;
    let mut out = setup.data.clone();
    out.tau = setup.tau_plus;
    for m in &mut out.modes {
        let (phi, chi) = liouville_scale(n, &spec.hat.omega, (m.u, m.du), setup.tau_minus).map_err(numerical("profiles"))?;
        let k = m.lambda + rho;
        let (p, c) = if k > 0.0 {
            let w = k.sqrt();
            let (sn, cs) = (w * dt).sin_cos();
            (phi * cs + chi * (sn / w), -phi * (w * sn) + chi * cs)
        } else if k == 0.0 {
            (phi + chi * dt, chi)
        } else {
            let w = (-k).sqrt();
            let (sh, ch) = ((w * dt).sinh(), (w * dt).cosh());
            (phi * ch + chi * (sh / w), phi * (w * sh) + chi * ch)
        };
        let (u, du) = liouville_unscale(n, &spec.check.omega, (p, c), setup.tau_plus).map_err(numerical("profiles"))?;
        m.u = u;
        m.du = du;
    }
    Ok(Some(out))
}

struct FrobeniusRow {
    index: usize,
    lambda: f64,
    delta: f64,
    /// `[re, im]` parts: predicted and measured `(Č₁, Č₂)`.
    predicted: [(f64, f64); 2],
    measured: [(f64, f64); 2],
    rel_error: f64,
}

/// Series-oracle comparison, available when both masses are Fuchsian, both
/// factors constant, and no sources are present.
fn frobenius_comparison(setup: &Setup, out: &FieldData) -> Result<Option<Vec<FrobeniusRow>>> {
    let spec = &setup.spec;
    let Path::Riccati { hat: ah, check: ac } = &spec.path else {
        return Ok(None);
    };
    let (MassShape::Fuchsian { c2: ch2, poly: hp }, MassShape::Fuchsian { c2: cc2, poly: cp }) =
        (&spec.hat.q.shape, &spec.check.q.shape)
    else {
        return Ok(None);
    };
    let constant = |s: &FactorShape| matches!(s, FactorShape::Constant(_));
    if !constant(&spec.hat.omega.shape) || !constant(&spec.check.omega.shape) || spec.hat.source.is_some() || spec.check.source.is_some() {
        return Ok(None);
    }
    let n = spec.dimension();
    let rho = spec.spectrum.curvature_potential();
    let h = spec.half_width(setup.tau_minus, setup.tau_plus);
    let mut rows = Vec::new();
    for (m, o) in setup.data.modes.iter().zip(&out.modes) {
        let fh = FuchsProblem::new(m.lambda + rho, *ch2, Side::Hat).with_polynomial(hp.clone());
        let fc = FuchsProblem::new(m.lambda + rho, *cc2, Side::Check).with_polynomial(cp.clone());
        let rh = identify_d_ratio(&fh, ah, -0.5 * h).map_err(numerical("frobenius"))?;
        let rc = identify_d_ratio(&fc, ac, 0.5 * h).map_err(numerical("frobenius"))?;
        let delta = delta_from_series(&fh, &fc, (rh, 1.0), (rc, 1.0)).map_err(numerical("frobenius"))?;
        let (sh, sc) = (series(&fh).map_err(numerical("frobenius"))?, series(&fc).map_err(numerical("frobenius"))?);
        let (pi, ci) = liouville_scale(n, &spec.hat.omega, (m.u, m.du), setup.tau_minus).map_err(numerical("profiles"))?;
        let (po, co) = liouville_scale(n, &spec.check.omega, (o.u, o.du), setup.tau_plus).map_err(numerical("profiles"))?;
        let mut predicted = [(0.0, 0.0); 2];
        let mut measured = [(0.0, 0.0); 2];
        let mut err = 0.0f64;
        let mut scale = 0.0f64;
        for (k, part) in [|z: Complex64| z.re, |z: Complex64| z.im].into_iter().enumerate() {
            let (c1, c2) = constants_at(&fh, &sh, setup.tau_minus, part(pi), part(ci)).map_err(numerical("frobenius"))?;
            predicted[k] = oracle_transmission(c1, c2, delta);
            measured[k] = constants_at(&fc, &sc, setup.tau_plus, part(po), part(co)).map_err(numerical("frobenius"))?;
            err = err.max((predicted[k].0 - measured[k].0).abs()).max((predicted[k].1 - measured[k].1).abs());
            scale = scale.max(predicted[k].0.abs()).max(predicted[k].1.abs());
        }
        rows.push(FrobeniusRow {
            index: m.index,
            lambda: m.lambda,
            delta,
            predicted,
            measured,
            rel_error: if scale > 0.0 { err / scale } else { err },
        });
    }
    Ok(Some(rows))
}

fn semilinear_files(setup: &Setup, meta: &Metadata, files: &mut OutputSet) -> Result<Option<serde_json::Value>> {
    let Some((spec, data)) = setup.semilinear()? else {
        return Ok(None);
    };
    let cfg = setup.scenario.semilinear.as_ref().expect("semilinear section present");
    let res: SemilinearCrossing = cross_semilinear(&spec, &data, setup.tau_plus, true).map_err(numerical("semilinear"))?;
    let hi = 1e-3f64.min(0.1 * spec.h);
    let a = one_sided_limit(&res.hat_samples, 1e-7, hi).map_err(numerical("semilinear"))?;
    let b = one_sided_limit(&res.check_samples, 1e-7, hi).map_err(numerical("semilinear"))?;
    let gap = a
        .psi
        .iter()
        .zip(&b.psi)
        .map(|(x, y)| (x - y).norm())
        .chain(a.dpsi.iter().zip(&b.dpsi).map(|(x, y)| (x - y).norm()))
        .fold(0.0, f64::max);
    let grid = &spec.grid;
    let meta = meta.with("kappa", cfg.kappa).with("grid_n", cfg.n);
    let (fin, fout) = (data.to_field(grid), res.out.to_field(grid));
    files.add(
        "semilinear_field_in.bin",
        field_snapshot(&meta, grid.n(), grid.periods(), fin.tau, &[("u", &fin.phi), ("du", &fin.chi)]),
    );
    files.add(
        "semilinear_field_out.bin",
        field_snapshot(&meta, grid.n(), grid.periods(), fout.tau, &[("u", &fout.phi), ("du", &fout.chi)]),
    );
    let mut rows = Vec::new();
    for (seg, log) in res.energy.iter().enumerate() {
        for k in 0..log.tau.len() {
            rows.push(vec![seg.to_string(), num(log.tau[k]), num(log.energy[k]), num(log.envelope[k])]);
        }
    }
    files.add("semilinear_energy.csv", csv_table(&meta, &["segment", "tau", "energy", "envelope"], &rows)?);
    let mut lipschitz = serde_json::Value::Null;
    if !cfg.zetas.is_empty() {
        let dir = smooth_field(grid, setup.tau_minus, setup.seed.wrapping_add(1), cfg.amplitude, cfg.width);
        let rep = lipschitz_probe(&spec, &data, &dir, &cfg.zetas, setup.tau_plus).map_err(numerical("semilinear"))?;
        let rows: Vec<Vec<String>> = rep.zetas.iter().zip(&rep.ratios).map(|(z, r)| vec![num(*z), num(*r)]).collect();
        files.add("semilinear_lipschitz.csv", csv_table(&meta, &["zeta", "ratio"], &rows)?);
        lipschitz = json!({ "ratios": rep.ratios, "spread": rep.spread() });
    }
    Ok(Some(json!({
        "modes": grid.modes().len(),
        "output_norm": res.out.norm_h1_l2(grid),
        "two_sided_gap": gap,
        "envelope_violated": res.energy.iter().any(|l| l.violated()),
        "lipschitz": lipschitz,
    })))
}

/// Run a parsed scenario; nothing is written until [`OutputSet::commit`].
pub fn run_scenario(scenario: &Scenario, config_text: &str, origin: &str, seed: Option<u64>) -> Result<RunReport> {
    let setup = Setup::build(scenario, seed, origin)?;
    let spec = &setup.spec;
    let h = setup.half_width();
    let mut meta = Metadata::new(config_text, setup.seed, PRNG);
    meta.push("scenario", &scenario.name);
    meta.push("path", spec.path.name());
    meta.push("omega_sign_hat", spec.hat.omega.sign());
    meta.push("omega_sign_check", spec.check.omega.sign());
    meta.push("tau_minus", num(setup.tau_minus));
    meta.push("tau_plus", num(setup.tau_plus));
    meta.push("half_width", num(h));
    meta.push("tol", num(spec.tol));
    let delta = match &setup.riccati {
        Some((a, b)) => Some(delta_of(spec, &RiccatiPair { hat: a.clone(), check: b.clone() }).map_err(numerical("transmission"))?),
        None => None,
    };
    meta.push("delta", delta.map_or("none".to_string(), num));

    let cr = crossing(spec, &setup.data, setup.tau_plus).map_err(numerical("transmission"))?;
    let mut files = OutputSet::default();
    files.add("data_in.csv", csv_table(&meta, &FIELD_HEADER, &field_rows(&setup.data))?);
    files.add("data_out.csv", csv_table(&meta, &FIELD_HEADER, &field_rows(&cr.data))?);
    let bang_rows: Vec<Vec<String>> = setup
        .data
        .modes
        .iter()
        .zip(&cr.bangs)
        .map(|(m, b)| vec![m.index.to_string(), num(m.lambda), num(b.psi0.re), num(b.psi0.im), num(b.psi1.re), num(b.psi1.im)])
        .collect();
    files.add("bang.csv", csv_table(&meta, &["mode", "lambda", "re_psi0", "im_psi0", "re_psi1", "im_psi1"], &bang_rows)?);

    let tr = &scenario.transmission;
    let mut delta_rows = vec![
        vec!["path".to_string(), spec.path.name().to_string()],
        vec!["delta".to_string(), delta.map_or(String::new(), num)],
    ];
    if let Some((a, b)) = &setup.riccati {
        delta_rows.push(vec!["epsilon".into(), num(tr.epsilon)]);
        delta_rows.push(vec!["alpha_hat".into(), num(tr.delta.map_or(tr.alpha_hat, |_| 0.0))]);
        delta_rows.push(vec!["alpha_check".into(), num(tr.delta.map_or(tr.alpha_check, |d| -d))]);
        for (name, r) in [("hat", a), ("check", b)] {
            let probe = divergence_probe(r).map_err(numerical("riccati"))?;
            delta_rows.push(vec![format!("{name}_half_width"), num(r.half_width())]);
            delta_rows.push(vec![format!("{name}_l1_norm"), num(r.l1_norm())]);
            delta_rows.push(vec![format!("{name}_log_coefficient"), num(probe.log_coefficient)]);
            delta_rows.push(vec![format!("{name}_growth"), probe.growth.to_string()]);
        }
        files.add("riccati_hat.csv", csv_table(&meta, &["tau", "A", "int0_A"], &riccati_rows(a))?);
        files.add("riccati_check.csv", csv_table(&meta, &["tau", "A", "int0_A"], &riccati_rows(b))?);
    }
    files.add("delta.csv", csv_table(&meta, &["quantity", "value"], &delta_rows)?);

    let lanes = Lanes { setup: &setup, h, wmax: omega_max(&setup.data) };
    for &i in &scenario.output.trajectory_modes {
        let rows = lanes.trajectory(i, cr.bangs[i], scenario.output.trajectory_samples)?;
        let header = ["tau", "re_phi", "im_phi", "re_chi", "im_chi", "re_psi", "im_psi", "re_dpsi", "im_dpsi"];
        files.add(&format!("trajectory_mode{i}.csv"), csv_table(&meta.with("mode", i), &header, &rows)?);
    }
    let mut energy_rows = Vec::new();
    let mut worst_identity = 0.0f64;
    let mut gronwall_ok = true;
    for (i, m) in setup.data.modes.iter().enumerate() {
        for (side, res, lhs, rhs) in lanes.energy(i, cr.bangs[i])? {
            worst_identity = worst_identity.max(res);
            gronwall_ok &= lhs <= rhs;
            energy_rows.push(vec![m.index.to_string(), num(m.lambda), side.name().to_string(), num(res), num(lhs), num(rhs)]);
        }
    }
    files.add(
        "energy.csv",
        csv_table(&meta, &["mode", "lambda", "side", "identity_residual", "gronwall_sup", "gronwall_bound"], &energy_rows)?,
    );

    let free_error = free_reference(&setup)?.map(|r| r.max_difference(&cr.data) / r.norm_h1_l2().max(1.0));
    let frob = frobenius_comparison(&setup, &cr.data)?;
    let mut frob_error = None;
    if let Some(rows) = &frob {
        let table: Vec<Vec<String>> = rows
            .iter()
            .map(|r| {
                let mut v = vec![r.index.to_string(), num(r.lambda), num(r.delta)];
                for k in 0..2 {
                    v.extend([num(r.predicted[k].0), num(r.predicted[k].1), num(r.measured[k].0), num(r.measured[k].1)]);
                }
                v.push(num(r.rel_error));
                v
            })
            .collect();
        let header = [
            "mode", "lambda", "delta", "re_c1_oracle", "re_c2_oracle", "re_c1", "re_c2", "im_c1_oracle", "im_c2_oracle",
            "im_c1", "im_c2", "rel_error",
        ];
        files.add("frobenius.csv", csv_table(&meta, &header, &table)?);
        frob_error = Some(rows.iter().map(|r| r.rel_error).fold(0.0, f64::max));
    }
    let semilinear = semilinear_files(&setup, &meta, &mut files)?;

    let mut names: Vec<String> = files.names().iter().map(|s| s.to_string()).collect();
    names.push("summary.json".into());
    let summary = json!({
        "scenario": scenario.name,
        "metadata": meta.to_json(),
        "tau_minus": setup.tau_minus,
        "tau_plus": setup.tau_plus,
        "half_width": h,
        "path": spec.path.name(),
        "delta": delta,
        "modes": setup.data.modes.len(),
        "input_norm": setup.data.norm_h1_l2(),
        "output_norm": cr.data.norm_h1_l2(),
        "max_energy_identity_residual": worst_identity,
        "gronwall_envelopes_hold": gronwall_ok,
        "free_reference_error": free_error,
        "frobenius_max_rel_error": frob_error,
        "semilinear": semilinear,
        "files": names,
    });
    files.add("summary.json", serde_json::to_vec_pretty(&summary)?);
    Ok(RunReport { files, summary })
}
