//! Integrable solutions of `A′ − A² = q` near `τ = 0`.
//!
//! Every solution is stored as a tabulation on a mesh graded toward 0 in
//! `ln|τ|`, together with its antiderivative `∫₀^τ A`. Below the innermost
//! tabulated point the solution is continued by the fitted law `a + b ln|τ|`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::{fit, GaussRule, Mesh};
use crate::profiles::{classify_integrability, EffectiveMassSq, IntegrabilityClass, Side};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Provenance {
    Picard { epsilon: f64 },
    Ivp { alpha: f64 },
    /// Shift of a Picard anchor so that `lim (A − A_ε) = alpha`.
    Family { alpha: f64, epsilon: f64 },
    Series { d1: f64, d2: f64 },
}

#[derive(Debug, Clone)]
pub struct RiccatiOptions {
    pub epsilon: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub order: usize,
    pub ratio: f64,
    pub floor: f64,
    /// Cap on the domain half-width (defaults to the profile's half-width).
    pub max_half_width: Option<f64>,
}

impl Default for RiccatiOptions {
    fn default() -> Self {
        RiccatiOptions {
            epsilon: 1.0,
            tol: 1e-10,
            max_iter: 2000,
            order: 16,
            ratio: 0.5,
            floor: 1e-12,
            max_half_width: None,
        }
    }
}

/// `A ≈ a + b ln|τ|` below the tabulated range.
#[derive(Debug, Clone, Copy, PartialEq)]
struct GapLaw {
    a: f64,
    b: f64,
}

impl GapLaw {
    fn eval(&self, tau: f64) -> f64 {
        if self.b == 0.0 {
            return self.a;
        }
        self.a + self.b * tau.abs().ln()
    }

    /// `∫₀^τ (a + b ln|σ|) dσ`.
    fn int0(&self, tau: f64) -> f64 {
        if tau == 0.0 {
            return 0.0;
        }
        self.a * tau + self.b * tau * (tau.abs().ln() - 1.0)
    }
}

#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    side: Side,
    h: f64,
    tau_eps: f64,
    provenance: Provenance,
    mesh: Mesh,
    values: Vec<f64>,
    int0: Vec<f64>,
    /// Signed τ of the tabulated end nearest 0 (0 when the mesh reaches 0).
    inner: f64,
    gap: GapLaw,
}

impl RiccatiSolution {
    /// Build from values at the nodes of `mesh`. When `int0` is omitted the
    /// antiderivative is accumulated on the mesh.
    pub fn from_samples(
        side: Side,
        mesh: Mesh,
        values: Vec<f64>,
        int0: Option<Vec<f64>>,
        provenance: Provenance,
        tau_eps: f64,
    ) -> Result<Self> {
        if values.len() != mesh.n_nodes() {
            return Err(Error::Validation("Riccati samples do not match the mesh".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonIntegrable("non-finite Riccati samples".into()));
        }
        let (inner, outer) = match side {
            Side::Hat => (mesh.end(), mesh.start()),
            Side::Check => (mesh.start(), mesh.end()),
        };
        let gap = if inner == 0.0 {
            GapLaw { a: values[if side == Side::Hat { values.len() - 1 } else { 0 }], b: 0.0 }
        } else {
            fit_gap_law(&mesh, &values, side)?
        };
        let int0 = match int0 {
            Some(v) => v,
            None => {
                let (cum, bounds) = mesh.cumulative(&values);
                let at_inner = if side == Side::Hat { *bounds.last().unwrap() } else { 0.0 };
                let g = gap.int0(inner);
                cum.iter().map(|c| g + c - at_inner).collect()
            }
        };
        Ok(RiccatiSolution {
            side,
            h: outer.abs(),
            tau_eps,
            provenance,
            mesh,
            values,
            int0,
            inner,
            gap,
        })
    }

    pub fn side(&self) -> Side {
        self.side
    }

    /// Domain half-width: the solution lives on `(0, h]` or `[−h, 0)`.
    pub fn half_width(&self) -> f64 {
        self.h
    }

    pub fn tau_eps(&self) -> f64 {
        self.tau_eps
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    fn check_domain(&self, tau: f64) -> Result<()> {
        if tau != 0.0 && (!self.side.contains(tau) || tau.abs() > self.h * (1.0 + 1e-12)) {
            return Err(Error::Domain(format!(
                "tau = {tau} for a {} Riccati solution on half-width {}",
                self.side.name(),
                self.h
            )));
        }
        Ok(())
    }

    fn clamp(&self, tau: f64) -> f64 {
        tau.clamp(self.mesh.start(), self.mesh.end())
    }

    fn in_gap(&self, tau: f64) -> bool {
        self.inner != 0.0 && tau.abs() < self.inner.abs()
    }

    /// `A(τ)`; `τ` must lie in the side domain (`0` is not a point of it
    /// unless the solution is continuous there).
    pub fn a(&self, tau: f64) -> f64 {
        if self.in_gap(tau) || (tau == 0.0 && self.inner != 0.0) {
            return self.gap.eval(tau);
        }
        let t = self.clamp(tau);
        self.mesh.interpolate(&self.values, t).unwrap_or(f64::NAN)
    }

    /// `∫₀^τ A(σ) dσ`.
    pub fn int0(&self, tau: f64) -> f64 {
        if tau == 0.0 {
            return 0.0;
        }
        if self.in_gap(tau) {
            return self.gap.int0(tau);
        }
        let t = self.clamp(tau);
        self.mesh.interpolate(&self.int0, t).unwrap_or(f64::NAN)
    }

    /// Tabulation `(τ, A, ∫₀^τ A)` at the mesh nodes.
    pub fn table(&self) -> Vec<(f64, f64, f64)> {
        self.mesh
            .nodes()
            .into_iter()
            .zip(&self.values)
            .zip(&self.int0)
            .map(|((t, a), i)| (t, *a, *i))
            .collect()
    }

    /// `∫_{τ₁}^{τ₂} A`.
    pub fn integrate(&self, tau1: f64, tau2: f64) -> Result<f64> {
        self.check_domain(tau1)?;
        self.check_domain(tau2)?;
        Ok(self.int0(tau2) - self.int0(tau1))
    }

    /// `∫ |A|` over the whole side domain.
    pub fn l1_norm(&self) -> f64 {
        let abs: Vec<f64> = self.values.iter().map(|v| v.abs()).collect();
        let mut total = self.mesh.integrate(&abs);
        if self.inner != 0.0 {
            // |a + b ln r| on (0, |inner|), integrated on a fine log grid.
            let r0 = self.inner.abs();
            let n = 400;
            let (lo, hi) = ((r0 * 1e-30f64.max(f64::MIN_POSITIVE)).ln().max(-700.0), r0.ln());
            let du = (hi - lo) / n as f64;
            let f = |u: f64| (self.gap.a + self.gap.b * u).abs() * u.exp();
            let mut s = 0.5 * (f(lo) + f(hi));
            for k in 1..n {
                s += f(lo + k as f64 * du);
            }
            total += s * du;
        }
        total
    }

    /// Value at `τ` of the non-integrable member `A_ε + E/∫_τ^0 E` of the
    /// family generated by this solution (the `α → ∞` limit).
    pub fn critical_branch(&self, tau: f64) -> f64 {
        let e = |s: f64| (2.0 * self.int0(s)).exp();
        let j = weight_integral(self, tau);
        self.a(tau) + e(tau) / j
    }
}

/// `∫_τ^0 e^{2∫₀^σ A} dσ`.
fn weight_integral(a: &RiccatiSolution, tau: f64) -> f64 {
    let r = tau.abs();
    let s = a.side.sign();
    // Graded substitution σ = s·r·e^{−u}.
    let n_dec = 34.0;
    let n = 64 * n_dec as usize;
    let umax = n_dec * std::f64::consts::LN_10;
    let du = umax / n as f64;
    let g = |u: f64| {
        let sigma = s * r * (-u).exp();
        (2.0 * a.int0(sigma)).exp() * r * (-u).exp()
    };
    let mut acc = 0.5 * (g(0.0) + g(umax));
    for k in 1..n {
        acc += g(k as f64 * du);
    }
    -s * acc * du
}

fn fit_gap_law(mesh: &Mesh, values: &[f64], side: Side) -> Result<GapLaw> {
    let p = mesh.order();
    let ncell = mesh.cells().len();
    let take = ncell.min(4);
    let nodes = mesh.nodes();
    let idx: Vec<usize> = match side {
        Side::Hat => ((ncell - take) * p..ncell * p).collect(),
        Side::Check => (0..take * p).collect(),
    };
    let xs: Vec<f64> = idx.iter().map(|&i| nodes[i].abs().ln()).collect();
    let ys: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
    let (a, b) = fit::line(&xs, &ys)?;
    Ok(GapLaw { a, b })
}

fn weighted_tail(q: &EffectiveMassSq, s: f64) -> f64 {
    let sign = q.side.sign();
    if s == 0.0 {
        return 0.0;
    }
    quadrature::integrate(|x| q.eval(sign * x).abs() * x, 0.0, s, 1e-14).integral
}

/// `τ_ε`: the largest `s` not exceeding `limit` with `∫_0^s |q|σ dσ ≤ ε/(1+ε)²`.
pub fn anchor_for(q: &EffectiveMassSq, epsilon: f64, limit: f64) -> f64 {
    let target = epsilon / ((1.0 + epsilon) * (1.0 + epsilon));
    let sign = q.side.sign();
    if weighted_tail(q, limit) <= target {
        return sign * limit;
    }
    let (mut lo, mut hi) = (0.0, limit);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if weighted_tail(q, mid) <= target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    sign * lo
}

fn graded(side: Side, h: f64, opts: &RiccatiOptions, reach_zero: bool) -> Mesh {
    let rule = GaussRule::shared(opts.order);
    let edge = side.sign() * h;
    if reach_zero {
        Mesh::toward_zero(edge, opts.ratio, opts.floor, rule)
    } else {
        Mesh::graded(edge, opts.ratio, opts.floor, rule)
    }
}

/// Iterate `A ↦ A₀ + ∫_{start}^τ (q + A²)` on `mesh` until the sup-change is
/// below `tol·max(1, sup|A|)`.
fn picard_iterate(
    mesh: &Mesh,
    qv: &[f64],
    base: f64,
    from_zero: bool,
    side: Side,
    opts: &RiccatiOptions,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = mesh.n_nodes();
    let mut a = vec![0.0; n];
    let mut history = Vec::new();
    let mut integrand = vec![0.0; n];
    for _ in 0..opts.max_iter {
        for i in 0..n {
            integrand[i] = qv[i] + a[i] * a[i];
        }
        let (cum, bounds) = mesh.cumulative(&integrand);
        let total = *bounds.last().unwrap();
        // The integral is anchored at the mesh end that is τ_ε (or 0).
        let anchored_at_end = match (side, from_zero) {
            (Side::Hat, true) | (Side::Check, false) => true,
            (Side::Hat, false) | (Side::Check, true) => false,
        };
        let next: Vec<f64> = cum
            .iter()
            .map(|c| base + if anchored_at_end { c - total } else { *c })
            .collect();
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonConvergence {
                iterations: history.len(),
                last_change: f64::INFINITY,
            });
        }
        let change = next.iter().zip(&a).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        let scale = next.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        a = next;
        history.push(change);
        if change <= opts.tol * scale {
            return Ok((a, history));
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        last_change: history.last().copied().unwrap_or(f64::NAN),
    })
}

/// Picard construction of `A_ε` with `A_ε(τ_ε) = 0` and `∫|A_ε| ≤ ε/(1+ε)`.
pub fn picard_construct(q: &EffectiveMassSq, opts: &RiccatiOptions) -> Result<RiccatiSolution> {
    if !(opts.epsilon > 0.0) {
        return Err(Error::Validation("epsilon must be positive".into()));
    }
    let class = classify_integrability(q, 1e-10);
    if class.class == IntegrabilityClass::Neither {
        return Err(Error::Refused(format!(
            "effective mass is neither integrable nor |τ|-weighted integrable ({q:?})"
        )));
    }
    let limit = opts.max_half_width.unwrap_or(q.half_width).min(q.half_width);
    let tau_eps = anchor_for(q, opts.epsilon, limit);
    let side = q.side;
    if q.is_identically_zero() {
        let mesh = graded(side, limit, opts, false);
        let n = mesh.n_nodes();
        return RiccatiSolution::from_samples(
            side,
            mesh,
            vec![0.0; n],
            Some(vec![0.0; n]),
            Provenance::Picard { epsilon: opts.epsilon },
            tau_eps,
        );
    }
    let mesh = graded(side, tau_eps.abs(), opts, false);
    let qv: Vec<f64> = mesh.nodes().iter().map(|t| q.eval(*t)).collect();
    let (a, _) = picard_iterate(&mesh, &qv, 0.0, false, side, opts)?;
    RiccatiSolution::from_samples(side, mesh, a, None, Provenance::Picard { epsilon: opts.epsilon }, tau_eps)
}

/// Successive sup-changes of the Picard iteration, for diagnostics.
pub fn picard_history(q: &EffectiveMassSq, opts: &RiccatiOptions) -> Result<Vec<f64>> {
    let limit = opts.max_half_width.unwrap_or(q.half_width).min(q.half_width);
    let tau_eps = anchor_for(q, opts.epsilon, limit);
    let mesh = graded(q.side, tau_eps.abs(), opts, false);
    let qv: Vec<f64> = mesh.nodes().iter().map(|t| q.eval(*t)).collect();
    Ok(picard_iterate(&mesh, &qv, 0.0, false, q.side, opts)?.1)
}

/// The solution continuous at 0 with `A(0) = α`, for `q ∈ L¹`.
pub fn ivp_solve(q: &EffectiveMassSq, alpha: f64, opts: &RiccatiOptions) -> Result<RiccatiSolution> {
    let class = classify_integrability(q, 1e-10);
    if class.class != IntegrabilityClass::L1 {
        return Err(Error::Refused(format!(
            "Riccati initial value at 0 needs an integrable effective mass ({q:?})"
        )));
    }
    let side = q.side;
    let mut h = opts.max_half_width.unwrap_or(q.half_width).min(q.half_width);
    h = h.min(0.99 / ((2.0 + alpha.abs()) * (2.0 + alpha.abs())));
    let sign = side.sign();
    let l1 = |s: f64| quadrature::integrate(|x| q.eval(sign * x).abs(), 0.0, s, 1e-14).integral;
    if l1(h) > 1.0 {
        let (mut lo, mut hi) = (0.0, h);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if l1(mid) <= 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        h = lo;
    }
    let ivp_opts = RiccatiOptions { floor: opts.floor.min(1e-15), ..opts.clone() };
    let mesh = graded(side, h, &ivp_opts, true);
    let qv: Vec<f64> = mesh.nodes().iter().map(|t| q.eval(*t)).collect();
    let (a, _) = picard_iterate(&mesh, &qv, alpha, true, side, opts)?;
    RiccatiSolution::from_samples(side, mesh, a, None, Provenance::Ivp { alpha }, 0.0)
}

/// The unique integrable solution with `lim (A − A_ε) = α`.
pub fn shift_to_alpha(base: &RiccatiSolution, alpha: f64) -> Result<RiccatiSolution> {
    let epsilon = match base.provenance {
        Provenance::Picard { epsilon } | Provenance::Family { epsilon, .. } => epsilon,
        _ => f64::NAN,
    };
    let prior = match base.provenance {
        Provenance::Family { alpha, .. } => alpha,
        _ => 0.0,
    };
    if alpha == 0.0 {
        return Ok(base.clone());
    }
    let side = base.side;
    let mut h = base.h;
    for _ in 0..60 {
        let mesh = if h == base.h {
            base.mesh.clone()
        } else {
            Mesh::graded(side.sign() * h, 0.5, base.inner.abs().max(1e-300), base.mesh.rule().clone())
        };
        let nodes = mesh.nodes();
        let a_eps: Vec<f64> = nodes.iter().map(|t| base.a(*t)).collect();
        let i_eps: Vec<f64> = nodes.iter().map(|t| base.int0(*t)).collect();
        let e: Vec<f64> = i_eps.iter().map(|i| (2.0 * i).exp()).collect();
        // J(τ) = ∫_τ^0 E = −(∫_0^{inner} E + ∫_{inner}^τ E).
        let (cum, bounds) = mesh.cumulative(&e);
        let inner = if side == Side::Hat { mesh.end() } else { mesh.start() };
        let at_inner = if side == Side::Hat { *bounds.last().unwrap() } else { 0.0 };
        let gap = inner * (2.0 * base.int0(inner)).exp();
        let j: Vec<f64> = cum.iter().map(|c| -(gap + c - at_inner)).collect();
        let den: Vec<f64> = j.iter().map(|v| 1.0 + alpha * v).collect();
        if let Some(bad) = den.iter().position(|d| *d <= 0.0) {
            let zero = bisect_zero(&mesh, &den, bad, side);
            h = 0.5 * zero.abs();
            if h < 1e-8 {
                return Err(Error::Domain(format!(
                    "shift by alpha = {alpha} leaves no admissible domain"
                )));
            }
            continue;
        }
        let values: Vec<f64> =
            (0..nodes.len()).map(|i| a_eps[i] + alpha * e[i] / den[i]).collect();
        let int0: Vec<f64> = (0..nodes.len()).map(|i| i_eps[i] - den[i].ln()).collect();
        return RiccatiSolution::from_samples(
            side,
            mesh,
            values,
            Some(int0),
            Provenance::Family { alpha: prior + alpha, epsilon },
            base.tau_eps,
        );
    }
    Err(Error::Domain("no admissible domain for the shifted solution".into()))
}

/// Locate where the sampled `den` first crosses zero, scanning from 0 outward.
fn bisect_zero(mesh: &Mesh, den: &[f64], _bad: usize, side: Side) -> f64 {
    let nodes = mesh.nodes();
    let mut order: Vec<usize> = (0..nodes.len()).collect();
    order.sort_by(|&i, &j| nodes[i].abs().total_cmp(&nodes[j].abs()));
    let mut prev = order[0];
    for &i in &order {
        if den[i] <= 0.0 {
            let (mut lo, mut hi) = (nodes[prev].abs(), nodes[i].abs());
            let eval = |r: f64| mesh.interpolate(den, side.sign() * r).unwrap_or(-1.0);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if eval(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return side.sign() * lo;
        }
        prev = i;
    }
    side.sign() * mesh.end().abs().max(mesh.start().abs())
}

/// `A′(τ) − A(τ)² − q(τ)`, with `A′` from centered differences in `ln|τ|`
/// refined by Richardson extrapolation.
pub fn residual(a: &RiccatiSolution, q: &EffectiveMassSq, tau: f64) -> f64 {
    derivative(|t| a.a(t), tau) - a.a(tau).powi(2) - q.eval(tau)
}

/// Derivative of `f` at `τ ≠ 0` by Ridders' extrapolation of centered
/// differences in `u = ln|τ|`, starting from a step of 1/16 (i.e. `|τ|/16`).
pub fn derivative(f: impl Fn(f64) -> f64, tau: f64) -> f64 {
    let s = tau.signum();
    let u0 = tau.abs().ln();
    let g = |u: f64| f(s * u.exp());
    let mut h = 1.0 / 16.0;
    let con = 1.4;
    let con2 = con * con;
    let n = 10;
    let mut tab = vec![vec![0.0; n]; n];
    tab[0][0] = (g(u0 + h) - g(u0 - h)) / (2.0 * h);
    let mut best = tab[0][0];
    let mut err = f64::INFINITY;
    for i in 1..n {
        h /= con;
        tab[0][i] = (g(u0 + h) - g(u0 - h)) / (2.0 * h);
        let mut fac = con2;
        for j in 1..=i {
            tab[j][i] = (tab[j - 1][i] * fac - tab[j - 1][i - 1]) / (fac - 1.0);
            fac *= con2;
            let e = (tab[j][i] - tab[j - 1][i]).abs().max((tab[j][i] - tab[j - 1][i - 1]).abs());
            if e <= err {
                err = e;
                best = tab[j][i];
            }
        }
        if (tab[i][i] - tab[i - 1][i - 1]).abs() >= 2.0 * err {
            break;
        }
    }
    // d/dτ = (1/τ) d/du
    best / tau
}

/// `lim_{τ→0} (A − B)` by a least-squares fit of `c₀ + τ(c₁ln|τ| + c₂) +
/// τ²(c₃ln²|τ| + c₄ln|τ| + c₅)` on a geometric sample of the common domain.
pub fn limit_difference(a: &RiccatiSolution, b: &RiccatiSolution) -> Result<f64> {
    if a.side != b.side {
        return Err(Error::Validation("Riccati solutions on different sides".into()));
    }
    let h = a.h.min(b.h);
    let s = a.side.sign();
    let taus: Vec<f64> = (0..80).map(|k| s * h * 1e-2 * 10f64.powf(-(k as f64) * 7.0 / 79.0)).collect();
    let rows: Vec<Vec<f64>> = taus
        .iter()
        .map(|t| {
            let (x, l) = (t / h, t.abs().ln());
            vec![1.0, x * l, x, x * x * l * l, x * x * l, x * x]
        })
        .collect();
    let ys: Vec<f64> = taus.iter().map(|t| a.a(*t) - b.a(*t)).collect();
    let c = fit::least_squares(&rows, &ys)?;
    Ok(c[0])
}

#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceReport {
    /// Fitted `b` in `A ≈ a + b ln(1/|τ|)`.
    pub log_coefficient: f64,
    pub offset: f64,
    /// `+1` if `A → +∞`, `−1` if `A → −∞`, `0` if bounded.
    pub growth: i8,
}

/// Fit `A ≈ a + b ln(1/|τ|)` on a geometric sample toward 0.
pub fn divergence_probe(a: &RiccatiSolution) -> Result<DivergenceReport> {
    let s = a.side.sign();
    let taus: Vec<f64> = (0..50).map(|k| s * a.h * 10f64.powf(-3.0 - 6.0 * k as f64 / 49.0)).collect();
    let xs: Vec<f64> = taus.iter().map(|t| (1.0 / t.abs()).ln()).collect();
    let ys: Vec<f64> = taus.iter().map(|t| a.a(*t)).collect();
    let (offset, b) = fit::line(&xs, &ys)?;
    let scale = ys.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let growth = if b.abs() <= 1e-6 * scale {
        0
    } else if b > 0.0 {
        1
    } else {
        -1
    };
    Ok(DivergenceReport { log_coefficient: b, offset, growth })
}

/// Largest violation of the Picard bounds `η∫_{τ_ε}^τ q ≤ ηA ≤ η(1+ε)∫_{τ_ε}^τ q`
/// over the tabulation nodes (0 when they hold).
pub fn picard_bounds_violation(a: &RiccatiSolution, q: &EffectiveMassSq) -> f64 {
    let epsilon = match a.provenance {
        Provenance::Picard { epsilon } => epsilon,
        _ => return f64::NAN,
    };
    let mesh = &a.mesh;
    let qv: Vec<f64> = mesh.nodes().iter().map(|t| q.eval(*t)).collect();
    let (cum, bounds) = mesh.cumulative(&qv);
    let total = *bounds.last().unwrap();
    let eta = a.side.eta();
    let mut worst = 0.0f64;
    for (i, c) in cum.iter().enumerate() {
        let qq = match a.side {
            Side::Hat => *c,
            Side::Check => c - total,
        };
        let v = a.values[i];
        let tol = 1e-12 * (1.0 + v.abs());
        worst = worst.max(eta * (qq - v) - tol);
        worst = worst.max(eta * (v - (1.0 + epsilon) * qq) - tol);
    }
    worst.max(0.0)
}

/// Shared handle used by evolvers.
pub type SharedRiccati = Arc<RiccatiSolution>;

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> RiccatiOptions {
        RiccatiOptions { tol: 1e-13, ..Default::default() }
    }

    #[test]
    fn zero_mass_gives_zero_solution() {
        let a = picard_construct(&EffectiveMassSq::zero(Side::Hat), &opts()).unwrap();
        assert!(a.table().iter().all(|(_, v, i)| *v == 0.0 && *i == 0.0));
        assert_eq!(residual(&a, &EffectiveMassSq::zero(Side::Hat), -0.3), 0.0);
    }

    #[test]
    fn constant_mass_check_side_is_a_tangent() {
        let q = EffectiveMassSq::constant(Side::Check, 1.0);
        let a = picard_construct(&q, &opts()).unwrap();
        let te = 0.5f64.sqrt();
        assert!((a.tau_eps() - te).abs() < 1e-12);
        for tau in [1e-9, 1e-4, 0.1, 0.3, 0.6, 0.7] {
            assert!((a.a(tau) - (tau - te).tan()).abs() < 1e-8, "tau={tau}");
        }
        assert!(residual(&a, &q, 0.3).abs() < 1e-7);
        assert_eq!(picard_bounds_violation(&a, &q), 0.0);
    }

    #[test]
    fn inverse_mass_has_logarithmic_asymptotics() {
        for (side, c2) in [(Side::Hat, 1.0), (Side::Check, 0.25)] {
            let q = EffectiveMassSq::fuchsian(side, c2);
            let a = picard_construct(&q, &opts()).unwrap();
            assert!((a.tau_eps().abs() - (1.0f64 / (4.0 * c2)).min(1.0)).abs() < 1e-10);
            for k in 1..=4 {
                let tau = side.sign() * 10f64.powi(-k);
                assert!(residual(&a, &q, tau).abs() < 1e-6, "tau={tau}");
            }
            assert_eq!(picard_bounds_violation(&a, &q), 0.0);
            assert!(a.l1_norm() <= 0.5 + 1e-8);
            let report = divergence_probe(&a).unwrap();
            assert!((report.log_coefficient - side.eta() * c2).abs() < 0.02 * c2);
        }
    }

    #[test]
    fn ivp_examples() {
        let q0 = EffectiveMassSq::zero(Side::Check);
        let a = ivp_solve(&q0, 0.0, &opts()).unwrap();
        assert!(a.a(0.05).abs() < 1e-15);
        let a = ivp_solve(&q0, 1.0, &opts()).unwrap();
        for tau in [0.0, 1e-6, 0.05, 0.1] {
            assert!((a.a(tau) - 1.0 / (1.0 - tau)).abs() < 1e-11, "tau={tau}");
        }
        let q1 = EffectiveMassSq::constant(Side::Hat, 1.0);
        let a = ivp_solve(&q1, 0.0, &opts()).unwrap();
        for tau in [-1e-3, -0.1, -0.2] {
            assert!((a.a(tau) - tau.tan()).abs() < 1e-12);
            assert!((a.int0(tau) + tau.cos().ln()).abs() < 1e-12);
        }
        assert!(ivp_solve(&EffectiveMassSq::fuchsian(Side::Hat, 1.0), 0.0, &opts()).is_err());
    }

    #[test]
    fn shift_reproduces_closed_form_and_limit() {
        let q0 = EffectiveMassSq::zero(Side::Check);
        let base = picard_construct(&q0, &opts()).unwrap();
        assert_eq!(shift_to_alpha(&base, 0.0).unwrap().table(), base.table());
        let a = shift_to_alpha(&base, 1.0).unwrap();
        for tau in [1e-8, 0.2, 0.5] {
            assert!((a.a(tau) - 1.0 / (1.0 - tau)).abs() < 1e-10, "tau={tau}");
        }
        // 2/(1 − 2τ) has its pole inside the domain: the domain shrinks.
        let b = shift_to_alpha(&base, 2.0).unwrap();
        assert!((b.half_width() - 0.25).abs() < 1e-9);
        assert!((b.a(0.2) - 2.0 / (1.0 - 2.0 * 0.2)).abs() < 1e-9, "{}", b.a(0.2));
        let q = EffectiveMassSq::fuchsian(Side::Hat, 1.0);
        let pe = picard_construct(&q, &opts()).unwrap();
        let shifted = shift_to_alpha(&pe, 0.7).unwrap();
        let lim = limit_difference(&shifted, &pe).unwrap();
        assert!((lim - 0.7).abs() < 1e-8, "{lim}");
        assert!(residual(&shifted, &q, -1e-3).abs() < 1e-6);
    }

    #[test]
    fn critical_branch_behaves_like_inverse_time() {
        let q = EffectiveMassSq::fuchsian(Side::Check, 1.0);
        let pe = picard_construct(&q, &opts()).unwrap();
        for tau in [1e-5, 1e-7] {
            assert!((tau * pe.critical_branch(tau) + 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn integrals_of_logarithm() {
        let c2: f64 = 0.8;
        let coarse = |ratio: f64| {
            let mesh = Mesh::graded(0.5, ratio, 1e-12, GaussRule::shared(16));
            let values = mesh.nodes().iter().map(|t| -c2 * t.ln()).collect();
            RiccatiSolution::from_samples(Side::Check, mesh, values, None, Provenance::Series { d1: 0.0, d2: 1.0 }, 0.5)
                .unwrap()
        };
        let a = coarse(0.5);
        for t in [1e-13f64, 1e-6, 0.1, 0.5] {
            let exact = -c2 * (t * t.ln() - t);
            assert!((a.integrate(0.0, t).unwrap() - exact).abs() < 1e-12 * (1.0 + exact.abs()), "t={t}");
        }
        let b = coarse(0.25);
        assert!((a.integrate(0.0, 0.3).unwrap() - b.integrate(0.0, 0.3).unwrap()).abs() < 1e-9);
        assert!(a.integrate(0.0, -0.1).is_err());
        let zero = picard_construct(&EffectiveMassSq::zero(Side::Check), &opts()).unwrap();
        assert_eq!(zero.integrate(0.0, 0.4).unwrap(), 0.0);
    }
}
