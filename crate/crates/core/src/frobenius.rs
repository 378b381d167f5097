//! Frobenius solutions of `φ″ + (λ + c²/|τ| + F(τ))φ = 0` near `τ = 0`.
//!
//! The general solution is `C₁τh₁ + C₂[h₂ − c²|τ|h₁ln|τ|]` with `h₁`, `h₂`
//! analytic, `h₁(0) = h₂(0) = 1`. The second solution is normalized by
//! `h₂′(0) = 0`. The `k` series are the same construction at `λ = 0`; they
//! give the Riccati solutions `A = −α′/α` in closed form.

use crate::error::{Error, Result};
use crate::numerics::{fit, GaussRule, Mesh};
use crate::profiles::{EffectiveMassSq, MassShape, Side};
use crate::riccati::{Provenance, RiccatiSolution};

#[derive(Debug, Clone, PartialEq)]
pub struct FuchsProblem {
    pub lambda: f64,
    pub c2: f64,
    /// Coefficients of the polynomial `F(τ) = Σ F_k τ^k`.
    pub f: Vec<f64>,
    pub side: Side,
    pub n: usize,
    pub radius_guard: f64,
}

impl FuchsProblem {
    pub fn new(lambda: f64, c2: f64, side: Side) -> Self {
        FuchsProblem { lambda, c2, f: Vec::new(), side, n: 20, radius_guard: 0.5 }
    }

    pub fn with_polynomial(mut self, f: Vec<f64>) -> Self {
        self.f = f;
        self
    }

    pub fn with_truncation(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    /// The same problem with `λ = 0`, whose solutions are the `k` series.
    pub fn massless(&self) -> Self {
        FuchsProblem { lambda: 0.0, ..self.clone() }
    }

    fn s(&self) -> f64 {
        self.side.sign()
    }

    /// `λ + c²/|τ| + F(τ)`.
    pub fn potential(&self, tau: f64) -> f64 {
        self.lambda + self.c2 / tau.abs() + poly(&self.f, tau)
    }

    /// The effective mass `c²/|τ| + F(τ)` as a profile.
    pub fn effective_mass(&self) -> EffectiveMassSq {
        EffectiveMassSq::new(self.side, MassShape::Fuchsian { c2: self.c2, poly: self.f.clone() })
    }

    fn check(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Validation("series truncation must be at least 2".into()));
        }
        if !(self.c2 > 0.0) && self.c2 != 0.0 {
            return Err(Error::Validation("c² must be non-negative".into()));
        }
        Ok(())
    }
}

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, k| acc * x + k)
}

/// Coefficients of `h₁` and `h₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPair {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub log_coupling: f64,
    pub h2_prime0: f64,
}

/// `j(j+1)a_j = −s c² a_{j−1} − λ a_{j−2} − Σ F_k a_{j−2−k}`, `a₀ = 1`.
pub fn h1_series(p: &FuchsProblem) -> Result<Vec<f64>> {
    p.check()?;
    let s = p.s();
    let mut a = vec![0.0; p.n + 1];
    a[0] = 1.0;
    for j in 1..=p.n {
        let mut rhs = -s * p.c2 * a[j - 1];
        if j >= 2 {
            rhs -= p.lambda * a[j - 2];
            for (k, fk) in p.f.iter().enumerate() {
                if j >= 2 + k {
                    rhs -= fk * a[j - 2 - k];
                }
            }
        }
        a[j] = rhs / (j * (j + 1)) as f64;
    }
    Ok(a)
}

/// Coefficients of `h₂` from
/// `(j+1)j b_{j+1} = s c²(2j+1)a_j − s c² b_j − λ b_{j−1} − Σ F_k b_{j−1−k}`,
/// `b₀ = 1`, `b₁ = 0`.
pub fn h2_series(p: &FuchsProblem, a: &[f64]) -> Result<SeriesPair> {
    p.check()?;
    let s = p.s();
    let mut b = vec![0.0; p.n + 1];
    b[0] = 1.0;
    for j in 1..p.n {
        let mut rhs = s * p.c2 * ((2 * j + 1) as f64 * a[j] - b[j]) - p.lambda * b[j - 1];
        for (k, fk) in p.f.iter().enumerate() {
            if j >= 1 + k {
                rhs -= fk * b[j - 1 - k];
            }
        }
        b[j + 1] = rhs / ((j + 1) * j) as f64;
    }
    Ok(SeriesPair { a: a.to_vec(), b, log_coupling: p.c2, h2_prime0: 0.0 })
}

pub fn series(p: &FuchsProblem) -> Result<SeriesPair> {
    let a = h1_series(p)?;
    h2_series(p, &a)
}

fn eval_poly3(c: &[f64], x: f64) -> (f64, f64, f64) {
    let (mut v, mut d, mut dd) = (0.0, 0.0, 0.0);
    for k in c.iter().rev() {
        dd = dd * x + 2.0 * d;
        d = d * x + v;
        v = v * x + k;
    }
    (v, d, dd)
}

/// Values, first and second derivatives of the two basis solutions at `τ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Basis {
    pub y1: [f64; 3],
    pub y2: [f64; 3],
}

impl Basis {
    pub fn wronskian(&self) -> f64 {
        self.y1[0] * self.y2[1] - self.y1[1] * self.y2[0]
    }
}

pub fn basis(p: &FuchsProblem, sp: &SeriesPair, tau: f64) -> Result<Basis> {
    if tau == 0.0 || !p.side.contains(tau) {
        return Err(Error::Domain(format!("tau = {tau} is not on the {} side", p.side.name())));
    }
    if tau.abs() > p.radius_guard {
        return Err(Error::RadiusExceeded { tau, guard: p.radius_guard });
    }
    let s = p.s();
    let (h1, d1, dd1) = eval_poly3(&sp.a, tau);
    let (h2, d2, dd2) = eval_poly3(&sp.b, tau);
    let y1 = [tau * h1, h1 + tau * d1, 2.0 * d1 + tau * dd1];
    let l = tau.abs().ln();
    let k = s * sp.log_coupling;
    let y2 = [
        h2 - k * y1[0] * l,
        d2 - k * (y1[1] * l + h1),
        dd2 - k * (y1[2] * l + y1[1] / tau + d1),
    ];
    Ok(Basis { y1, y2 })
}

/// `(φ, φ′)` for `φ = C₁τh₁ + C₂[h₂ − c²|τ|h₁ln|τ|]`.
pub fn eval_solution(p: &FuchsProblem, c1: f64, c2: f64, tau: f64) -> Result<(f64, f64)> {
    let sp = series(p)?;
    let b = basis(p, &sp, tau)?;
    Ok((c1 * b.y1[0] + c2 * b.y2[0], c1 * b.y1[1] + c2 * b.y2[1]))
}

/// `|φ″ + (λ + c²/|τ| + F)φ|` for the assembled solution.
pub fn series_residual(p: &FuchsProblem, c1: f64, c2: f64, tau: f64) -> Result<f64> {
    let sp = series(p)?;
    let b = basis(p, &sp, tau)?;
    let phi = c1 * b.y1[0] + c2 * b.y2[0];
    let dd = c1 * b.y1[2] + c2 * b.y2[2];
    Ok((dd + p.potential(tau) * phi).abs())
}

/// Constants of a solution known at a single point.
pub fn constants_at(p: &FuchsProblem, sp: &SeriesPair, tau: f64, phi: f64, dphi: f64) -> Result<(f64, f64)> {
    let b = basis(p, sp, tau)?;
    let w = b.wronskian();
    Ok(((phi * b.y2[1] - dphi * b.y2[0]) / w, (b.y1[0] * dphi - b.y1[1] * phi) / w))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantsFit {
    pub c1: f64,
    pub c2: f64,
    /// Largest reconstruction error on the held-out samples.
    pub residual: f64,
}

/// Least-squares `(C₁, C₂)` from samples `(τ, φ, φ′)`; every third sample is
/// held out to measure the reconstruction error.
pub fn extract_constants(p: &FuchsProblem, samples: &[(f64, f64, f64)]) -> Result<ConstantsFit> {
    if samples.len() < 3 {
        return Err(Error::FitFailed("need at least three samples".into()));
    }
    let sp = series(p)?;
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    let mut held = Vec::new();
    for (i, &(t, phi, dphi)) in samples.iter().enumerate() {
        let b = basis(p, &sp, t)?;
        if i % 3 == 2 {
            held.push((b, phi, dphi));
            continue;
        }
        rows.push(vec![b.y1[0], b.y2[0]]);
        rhs.push(phi);
        rows.push(vec![b.y1[1], b.y2[1]]);
        rhs.push(dphi);
    }
    let c = fit::least_squares(&rows, &rhs)?;
    let residual = held
        .iter()
        .map(|(b, phi, dphi)| {
            let e0 = (c[0] * b.y1[0] + c[1] * b.y2[0] - phi).abs();
            let e1 = (c[0] * b.y1[1] + c[1] * b.y2[1] - dphi).abs();
            e0.max(e1)
        })
        .fold(0.0, f64::max);
    if !c[0].is_finite() || !c[1].is_finite() {
        return Err(Error::FitFailed("non-finite constants".into()));
    }
    Ok(ConstantsFit { c1: c[0], c2: c[1], residual })
}

/// `A = −α′/α`, `α = D₁τk₁ + D₂[k₂ − c²|τ|k₁ln|τ|]`, tabulated on `(0, h]` or
/// `[−h, 0)`.
pub fn riccati_closed_form(p: &FuchsProblem, d1: f64, d2: f64, h: f64) -> Result<RiccatiSolution> {
    if d2 == 0.0 {
        return Err(Error::NonIntegrable("D₂ = 0 gives A ~ −1/τ".into()));
    }
    if h > p.radius_guard {
        return Err(Error::RadiusExceeded { tau: p.side.sign() * h, guard: p.radius_guard });
    }
    let k = p.massless();
    let sp = series(&k)?;
    let mesh = Mesh::graded(p.side.sign() * h, 0.5, 1e-12, GaussRule::shared(16));
    let mut values = Vec::with_capacity(mesh.n_nodes());
    let mut int0 = Vec::with_capacity(mesh.n_nodes());
    for t in mesh.nodes() {
        let b = basis(&k, &sp, t)?;
        let alpha = d1 * b.y1[0] + d2 * b.y2[0];
        let dalpha = d1 * b.y1[1] + d2 * b.y2[1];
        if alpha / d2 <= 0.0 {
            return Err(Error::Domain(format!("α vanishes before τ = {t}; reduce h")));
        }
        values.push(-dalpha / alpha);
        int0.push(-(alpha / d2).ln());
    }
    RiccatiSolution::from_samples(p.side, mesh, values, Some(int0), Provenance::Series { d1, d2 }, p.side.sign() * h)
}

/// The non-integrable closed form `D₂ = 0`: `A = −(τk₁)′/(τk₁)`.
pub fn riccati_critical(p: &FuchsProblem, tau: f64) -> Result<f64> {
    let k = p.massless();
    let sp = series(&k)?;
    let b = basis(&k, &sp, tau)?;
    Ok(-b.y1[1] / b.y1[0])
}

/// `D₁/D₂` of the closed-form member through the value `A(τ₀)`.
pub fn identify_d_ratio(p: &FuchsProblem, a: &RiccatiSolution, tau0: f64) -> Result<f64> {
    let k = p.massless();
    let sp = series(&k)?;
    let b = basis(&k, &sp, tau0)?;
    let av = a.a(tau0);
    Ok(-(b.y2[1] + av * b.y2[0]) / (b.y1[1] + av * b.y1[0]))
}

/// `(Ĉ₁, Ĉ₂, δ) ↦ (Ĉ₁ + δĈ₂, Ĉ₂)`.
pub fn oracle_transmission(c1: f64, c2: f64, delta: f64) -> (f64, f64) {
    (c1 + delta * c2, c2)
}

/// `δ = ĥ₂′(0) − ȟ₂′(0) + ǩ₂′(0) − k̂₂′(0) + Ď₁/Ď₂ − D̂₁/D̂₂`.
pub fn delta_from_series(hat: &FuchsProblem, check: &FuchsProblem, d_hat: (f64, f64), d_check: (f64, f64)) -> Result<f64> {
    if d_hat.1 == 0.0 || d_check.1 == 0.0 {
        return Err(Error::NonIntegrable("D₂ = 0".into()));
    }
    let hh = series(hat)?.h2_prime0;
    let hc = series(check)?.h2_prime0;
    let kh = series(&hat.massless())?.h2_prime0;
    let kc = series(&check.massless())?.h2_prime0;
    Ok(hh - hc + kc - kh + d_check.0 / d_check.1 - d_hat.0 / d_hat.1)
}

/// `lim(φ′ + Aφ)` for the solution `(C₁, C₂)` and the closed-form `A` with
/// ratio `D₁/D₂`: `C₁ + C₂(h₂′(0) − k₂′(0) − D₁/D₂)`.
pub fn psi1_limit(p: &FuchsProblem, c1: f64, c2: f64, d_ratio: f64) -> Result<f64> {
    let h = series(p)?.h2_prime0;
    let k = series(&p.massless())?.h2_prime0;
    Ok(c1 + c2 * (h - k - d_ratio))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Dopri;
    use crate::riccati::residual;
    use approx::assert_relative_eq;

    #[test]
    fn recurrence_examples() {
        let a = h1_series(&FuchsProblem::new(1.0, 1.0, Side::Check)).unwrap();
        assert_relative_eq!(a[1], -0.5, epsilon = 1e-15);
        assert_relative_eq!(a[2], -1.0 / 12.0, epsilon = 1e-15);
        let a = h1_series(&FuchsProblem::new(1.0, 1.0, Side::Hat)).unwrap();
        assert_relative_eq!(a[1], 0.5, epsilon = 1e-15);
        let a = h1_series(&FuchsProblem::new(3.0, 0.0, Side::Check)).unwrap();
        assert_eq!(a[1], 0.0);
        assert_relative_eq!(a[2], -0.5, epsilon = 1e-15);
        let p = FuchsProblem::new(2.0, 0.0, Side::Check);
        let sp = series(&p).unwrap();
        assert_eq!(sp.b[1], 0.0);
        // c² = 0: h₂ = cos(√λ τ).
        assert_relative_eq!(sp.b[2], -1.0, epsilon = 1e-15);
        assert_eq!(h1_series(&p.massless()).unwrap(), h1_series(&FuchsProblem::new(0.0, 0.0, Side::Check)).unwrap());
    }

    #[test]
    fn assembled_solutions_solve_the_equation() {
        for side in [Side::Hat, Side::Check] {
            for f in [vec![], vec![0.3, -1.0]] {
                let p = FuchsProblem::new(1.0, 1.0, side).with_polynomial(f);
                let t = side.sign() * 1e-2;
                for (c1, c2) in [(1.0, 0.0), (0.0, 1.0), (0.7, -1.2)] {
                    let r = series_residual(&p, c1, c2, t).unwrap();
                    assert!(r <= 1e-2 * 1e-2f64.powi(19) + 1e-13, "{side:?} {r}");
                }
                let sp = series(&p).unwrap();
                let w1 = basis(&p, &sp, side.sign() * 1e-4).unwrap().wronskian();
                let w2 = basis(&p, &sp, side.sign() * 1e-6).unwrap().wronskian();
                assert!(w1.abs() > 0.5 && (w1 - w2).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn series_matches_independent_integration() {
        let p = FuchsProblem::new(1.0, 1.0, Side::Check);
        let (c1, c2) = (0.7, -1.2);
        let t0 = 1e-6;
        let (phi0, dphi0) = eval_solution(&p, c1, c2, t0).unwrap();
        let solver = Dopri::with_tol(1e-13, 1e-13);
        let y = solver
            .integrate(
                |t, y, dy| {
                    dy[0] = y[1];
                    dy[1] = -(1.0 + 1.0 / t) * y[0];
                },
                t0,
                &[phi0, dphi0],
                0.05,
                |_, _| {},
            )
            .unwrap();
        let (phi, dphi) = eval_solution(&p, c1, c2, 0.05).unwrap();
        assert!((y[0] - phi).abs() < 1e-8 && (y[1] - dphi).abs() < 1e-8);
    }

    #[test]
    fn asymptotics_and_constants() {
        let p = FuchsProblem::new(4.0, 0.25, Side::Hat);
        let (c1, c2) = (0.7, -1.2);
        let t = -1e-9;
        let (phi, dphi) = eval_solution(&p, c1, c2, t).unwrap();
        assert!((phi - c2).abs() < 1e-7);
        let eta = p.side.eta();
        let lim = dphi - eta * c2 * p.c2 * t.abs().ln();
        assert!((lim - (c1 + c2 * eta * p.c2)).abs() < 1e-6);
        let (_, d) = eval_solution(&p, 1.0, 0.0, -1e-12).unwrap();
        assert!((d - 1.0).abs() < 1e-10);

        let samples: Vec<(f64, f64, f64)> = (0..12)
            .map(|k| {
                let t = -0.2 * 0.5f64.powi(k);
                let (a, b) = eval_solution(&p, c1, c2, t).unwrap();
                (t, a, b)
            })
            .collect();
        let fit = extract_constants(&p, &samples).unwrap();
        assert!((fit.c1 - c1).abs() < 1e-8 && (fit.c2 - c2).abs() < 1e-8 && fit.residual < 1e-6);
        let pure: Vec<(f64, f64, f64)> =
            samples.iter().map(|&(t, _, _)| { let (a, b) = eval_solution(&p, 0.0, 1.0, t).unwrap(); (t, a, b) }).collect();
        assert!(extract_constants(&p, &pure).unwrap().c1.abs() < 1e-10);
        assert!(matches!(eval_solution(&p, 1.0, 1.0, -0.6), Err(Error::RadiusExceeded { .. })));
    }

    #[test]
    fn closed_form_riccati() {
        for side in [Side::Hat, Side::Check] {
            let p = FuchsProblem::new(1.0, 1.0, side);
            let q = p.effective_mass();
            let a = riccati_closed_form(&p, 0.4, 1.0, 0.1).unwrap();
            assert!(residual(&a, &q, side.sign() * 0.05).abs() < 1e-6);
            let t = side.sign() * 1e-10;
            let eta = side.eta();
            let expect = -eta * p.c2 * t.abs().ln() - 0.4 - eta * p.c2;
            assert!((a.a(t) - expect).abs() < 1e-6);
            assert!((identify_d_ratio(&p, &a, side.sign() * 0.03).unwrap() - 0.4).abs() < 1e-10);
            let tc = side.sign() * 1e-8;
            assert!((tc * riccati_critical(&p, tc).unwrap() + 1.0).abs() < 1e-6);
        }
        let p = FuchsProblem::new(1.0, 1.0, Side::Check);
        assert!(matches!(riccati_closed_form(&p, 1.0, 0.0, 0.1), Err(Error::NonIntegrable(_))));
    }

    #[test]
    fn transmission_rule() {
        assert_eq!(oracle_transmission(0.0, 1.0, 2.0), (2.0, 1.0));
        assert_eq!(oracle_transmission(0.3, -0.4, 0.0), (0.3, -0.4));
        assert_eq!(oracle_transmission(1.0, 0.0, 7.0), (1.0, 0.0));
        let h = FuchsProblem::new(1.0, 1.0, Side::Hat);
        let c = FuchsProblem::new(1.0, 1.0, Side::Check);
        assert_eq!(delta_from_series(&h, &c, (0.3, 1.0), (0.3, 1.0)).unwrap(), 0.0);
        assert_relative_eq!(delta_from_series(&h, &c, (0.3, 1.0), (1.3, 1.0)).unwrap(), 1.0, epsilon = 1e-15);
        assert!(delta_from_series(&h, &c, (0.3, 0.0), (1.3, 1.0)).is_err());
    }

    #[test]
    fn psi1_limit_matches_the_gauge_sum() {
        let p = FuchsProblem::new(4.0, 1.0, Side::Check);
        let a = riccati_closed_form(&p, -0.3, 2.0, 0.1).unwrap();
        let (c1, c2) = (0.5, 1.5);
        let t = 1e-9;
        let (phi, dphi) = eval_solution(&p, c1, c2, t).unwrap();
        let lim = psi1_limit(&p, c1, c2, -0.15).unwrap();
        assert!((dphi + a.a(t) * phi - lim).abs() < 1e-6);
    }
}
