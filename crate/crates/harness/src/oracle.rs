//! `oracle`: Frobenius series oracle for `q = c²/|τ| + F(τ)` on both sides,
//! compared against the full transmission pipeline.

use std::sync::Arc;

use bangcross::frobenius::{
    constants_at, delta_from_series, eval_solution, identify_d_ratio, oracle_transmission, riccati_closed_form, series,
    FuchsProblem,
};
use bangcross::profiles::{ConformalFactor, EffectiveMassSq, Side};
use bangcross::riccati::{picard_construct, RiccatiOptions, RiccatiSolution};
use bangcross::spectrum::SpectrumSpec;
use bangcross::transmission::{full_map_s, FieldData, Path, SideProfile, TransmissionSpec};
use num_complex::Complex64;
use serde::Deserialize;
use serde_json::json;

use crate::error::{numerical, HarnessError, Result};
use crate::output::{csv_table, num, Metadata, OutputSet};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub name: String,
    pub lambdas: Vec<f64>,
    #[serde(default = "default_order")]
    pub n: usize,
    #[serde(default = "default_h")]
    pub half_width: f64,
    #[serde(default = "default_tau_minus")]
    pub tau_minus: f64,
    #[serde(default = "default_tau_plus")]
    pub tau_plus: f64,
    /// Hat-side `(C₁, C₂)`, cycled over the eigenvalues.
    pub constants: Vec<(f64, f64)>,
    pub hat: OracleSide,
    pub check: OracleSide,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSide {
    pub c2: f64,
    #[serde(default)]
    pub poly: Vec<f64>,
    /// `(D₁, D₂)` of the Riccati solution; the Picard solution when absent.
    pub d: Option<(f64, f64)>,
}

fn default_order() -> usize {
    20
}

fn default_h() -> f64 {
    0.1
}

fn default_tau_minus() -> f64 {
    -0.3
}

fn default_tau_plus() -> f64 {
    0.3
}

impl OracleConfig {
    pub fn load(path: &std::path::Path) -> Result<(OracleConfig, String)> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })?;
        let c = OracleConfig::from_toml(&text, &path.display().to_string())?;
        Ok((c, text))
    }

    pub fn from_toml(text: &str, origin: &str) -> Result<OracleConfig> {
        let c: OracleConfig = toml::from_str(text).map_err(|e| HarnessError::Parse {
            origin: origin.to_string(),
            message: e.to_string().trim_end().to_string(),
        })?;
        let bad = |field: &str, message: &str| {
            Err(HarnessError::Field { origin: origin.to_string(), field: field.into(), message: message.into() })
        };
        if c.lambdas.is_empty() || c.lambdas.windows(2).any(|w| w[1] <= w[0]) || c.lambdas[0] < 0.0 {
            return bad("lambdas", "must be a nonempty, strictly increasing list of nonnegative eigenvalues");
        }
        if c.constants.is_empty() {
            return bad("constants", "must list at least one (C1, C2) pair");
        }
        if c.n < 2 {
            return bad("n", "series order must be at least 2");
        }
        if !(c.half_width > 0.0 && c.tau_minus <= -c.half_width && c.tau_plus >= c.half_width) {
            return bad("half_width", "need tau_minus ≤ −half_width < 0 < half_width ≤ tau_plus");
        }
        for (name, s) in [("hat", &c.hat), ("check", &c.check)] {
            if s.c2 < 0.0 {
                return bad(&format!("{name}.c2"), "must be nonnegative");
            }
            if s.d.is_some_and(|(_, d2)| d2 == 0.0) {
                return bad(&format!("{name}.d"), "D₂ = 0 gives a non-integrable Riccati branch");
            }
        }
        Ok(c)
    }
}

pub struct OracleRow {
    pub lambda: f64,
    pub delta: f64,
    pub hat: (f64, f64),
    pub oracle: (f64, f64),
    pub pipeline: (f64, f64),
    pub rel_error: f64,
}

fn fuchs(c: &OracleConfig, s: &OracleSide, lambda: f64, side: Side) -> FuchsProblem {
    FuchsProblem::new(lambda, s.c2, side).with_polynomial(s.poly.clone()).with_truncation(c.n)
}

fn riccati(c: &OracleConfig, s: &OracleSide, side: Side) -> Result<(Arc<RiccatiSolution>, EffectiveMassSq)> {
    let p = fuchs(c, s, 0.0, side);
    let q = p.effective_mass();
    let a = match s.d {
        Some((d1, d2)) => riccati_closed_form(&p, d1, d2, c.half_width).map_err(numerical("frobenius"))?,
        None => {
            let opts = RiccatiOptions { tol: 1e-13, ..Default::default() };
            picard_construct(&q, &opts).map_err(numerical("riccati"))?
        }
    };
    Ok((Arc::new(a), q))
}

pub fn oracle_comparison(c: &OracleConfig) -> Result<Vec<OracleRow>> {
    let (ah, qh) = riccati(c, &c.hat, Side::Hat)?;
    let (ac, qc) = riccati(c, &c.check, Side::Check)?;
    let eig: Vec<(f64, usize)> = c.lambdas.iter().map(|l| (*l, 1)).collect();
    let cutoff = *c.lambdas.last().unwrap_or(&0.0);
    let spectrum = SpectrumSpec::explicit(3, eig, 0.0).map_err(numerical("spectrum"))?;
    let spec = TransmissionSpec::new(
        spectrum.clone(),
        SideProfile::new(ConformalFactor::constant(Side::Hat, 1.0), qh),
        SideProfile::new(ConformalFactor::constant(Side::Check, 1.0), qc),
        cutoff,
        Path::Riccati { hat: ah.clone(), check: ac.clone() },
    )
    .map_err(numerical("transmission"))?
    .with_half_width(c.half_width);
    let mut data = FieldData::zeros(&spectrum, cutoff, c.tau_minus, None).map_err(numerical("transmission"))?;
    let mut expected = Vec::new();
    for (k, m) in data.modes.iter_mut().enumerate() {
        let (c1, c2) = c.constants[k % c.constants.len()];
        let fh = fuchs(c, &c.hat, m.lambda, Side::Hat);
        let fc = fuchs(c, &c.check, m.lambda, Side::Check);
        let dh = match c.hat.d {
            Some((d1, d2)) => (d1, d2),
            None => (identify_d_ratio(&fh, &ah, -0.5 * c.half_width).map_err(numerical("frobenius"))?, 1.0),
        };
        let dc = match c.check.d {
            Some((d1, d2)) => (d1, d2),
            None => (identify_d_ratio(&fc, &ac, 0.5 * c.half_width).map_err(numerical("frobenius"))?, 1.0),
        };
        let delta = delta_from_series(&fh, &fc, dh, dc).map_err(numerical("frobenius"))?;
        let (u, du) = eval_solution(&fh, c1, c2, c.tau_minus).map_err(numerical("frobenius"))?;
        m.u = Complex64::new(u, 0.0);
        m.du = Complex64::new(du, 0.0);
        expected.push((fc, (c1, c2), delta, oracle_transmission(c1, c2, delta)));
    }
    let out = full_map_s(&spec, &data, c.tau_plus).map_err(numerical("transmission"))?;
    let mut rows = Vec::new();
    for (m, (fc, hat, delta, oracle)) in out.modes.iter().zip(expected) {
        let sp = series(&fc).map_err(numerical("frobenius"))?;
        let pipeline = constants_at(&fc, &sp, c.tau_plus, m.u.re, m.du.re).map_err(numerical("frobenius"))?;
        let scale = oracle.0.abs().max(oracle.1.abs());
        let err = (pipeline.0 - oracle.0).abs().max((pipeline.1 - oracle.1).abs());
        rows.push(OracleRow {
            lambda: m.lambda,
            delta,
            hat,
            oracle,
            pipeline,
            rel_error: if scale > 0.0 { err / scale } else { err },
        });
    }
    Ok(rows)
}

/// Series coefficient tables and the oracle/pipeline comparison.
pub fn oracle_files(c: &OracleConfig, text: &str) -> Result<(Vec<OracleRow>, OutputSet)> {
    let rows = oracle_comparison(c)?;
    let mut meta = Metadata::new(text, 0, "none");
    meta.push("oracle", &c.name);
    meta.push("series_order", c.n);
    meta.push("omega_sign_hat", 1);
    meta.push("omega_sign_check", 1);
    let mut files = OutputSet::default();
    for (name, s, side) in [("hat", &c.hat, Side::Hat), ("check", &c.check, Side::Check)] {
        let mut table = Vec::new();
        for &l in &c.lambdas {
            let sp = series(&fuchs(c, s, l, side)).map_err(numerical("frobenius"))?;
            for (k, (a, b)) in sp.a.iter().zip(&sp.b).enumerate() {
                table.push(vec![num(l), k.to_string(), num(*a), num(*b), num(sp.log_coupling)]);
            }
        }
        files.add(&format!("series_{name}.csv"), csv_table(&meta, &["lambda", "k", "a_k", "b_k", "log_coupling"], &table)?);
    }
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                num(r.lambda),
                num(r.delta),
                num(r.hat.0),
                num(r.hat.1),
                num(r.oracle.0),
                num(r.oracle.1),
                num(r.pipeline.0),
                num(r.pipeline.1),
                num(r.rel_error),
            ]
        })
        .collect();
    let header = ["lambda", "delta", "c1_hat", "c2_hat", "c1_oracle", "c2_oracle", "c1_pipeline", "c2_pipeline", "rel_error"];
    files.add("oracle.csv", csv_table(&meta, &header, &table)?);
    let summary = json!({
        "oracle": c.name,
        "metadata": meta.to_json(),
        "max_rel_error": rows.iter().map(|r| r.rel_error).fold(0.0, f64::max),
    });
    files.add("oracle_summary.json", serde_json::to_vec_pretty(&summary)?);
    Ok((rows, files))
}
