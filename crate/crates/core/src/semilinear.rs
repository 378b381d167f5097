//! Cubic Klein–Gordon `φ″ − Δφ + (ρ + q)φ = −κ|φ|²φ` on the flat 3-torus.
//!
//! Fields are carried as Fourier coefficients on the modes kept by the
//! two-thirds rule (`|m_i| ≤ N/3`). The cubic term is formed on a padded grid
//! large enough that the product of kept modes does not alias back onto them,
//! then truncated to the kept set.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::evolver::Layer;
use crate::numerics::{fit, Dopri};
use crate::profiles::{liouville_scale, liouville_unscale, EffectiveMassSq, Side};
use crate::spectrum::SpectrumSpec;
use crate::transmission::{Path, SideProfile};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Clone)]
struct Plans {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Plans {
    fn new(n: usize) -> Self {
        let mut p = FftPlanner::new();
        Plans { fwd: p.plan_fft_forward(n), inv: p.plan_fft_inverse(n) }
    }
}

#[derive(Clone)]
pub struct TorusGrid3 {
    n: usize,
    periods: [f64; 3],
    /// Kept wave numbers `|m_i| ≤ N/3`.
    modes: Vec<[i64; 3]>,
    k2: Vec<f64>,
    pad: usize,
    grid_plans: Plans,
    pad_plans: Plans,
}

impl std::fmt::Debug for TorusGrid3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TorusGrid3")
            .field("n", &self.n)
            .field("periods", &self.periods)
            .field("modes", &self.modes.len())
            .field("pad", &self.pad)
            .finish()
    }
}

fn fft3(buf: &mut [Complex64], m: usize, plan: &Arc<dyn Fft<f64>>) {
    // Last axis is contiguous.
    plan.process(buf);
    let mut lines = vec![ZERO; buf.len()];
    for axis_stride in [m, m * m] {
        let mut k = 0;
        for outer in 0..m {
            for inner in 0..m {
                let base = if axis_stride == m { outer * m * m + inner } else { outer * m + inner };
                for j in 0..m {
                    lines[k] = buf[base + j * axis_stride];
                    k += 1;
                }
            }
        }
        plan.process(&mut lines);
        let mut k = 0;
        for outer in 0..m {
            for inner in 0..m {
                let base = if axis_stride == m { outer * m * m + inner } else { outer * m + inner };
                for j in 0..m {
                    buf[base + j * axis_stride] = lines[k];
                    k += 1;
                }
            }
        }
    }
}

impl TorusGrid3 {
    pub fn new(n: usize, periods: [f64; 3]) -> Result<Self> {
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::Validation(format!("grid size must be a power of two >= 8, got {n}")));
        }
        if periods.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::Validation("torus periods must be positive".into()));
        }
        let k = (n / 3) as i64;
        let mut modes = Vec::new();
        for a in -k..=k {
            for b in -k..=k {
                for c in -k..=k {
                    modes.push([a, b, c]);
                }
            }
        }
        let k2 = modes
            .iter()
            .map(|m| {
                (0..3)
                    .map(|i| (2.0 * std::f64::consts::PI * m[i] as f64 / periods[i]).powi(2))
                    .sum()
            })
            .collect();
        // The cubic of modes with |m| ≤ K reaches 3K; it aliases onto the kept
        // set unless the padded size exceeds 4K.
        let pad = (4 * k as usize + 1).max(n);
        let pad = pad + (pad % 2);
        Ok(TorusGrid3 {
            n,
            periods,
            modes,
            k2,
            pad,
            grid_plans: Plans::new(n),
            pad_plans: Plans::new(pad),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn periods(&self) -> [f64; 3] {
        self.periods
    }

    pub fn volume(&self) -> f64 {
        self.periods.iter().product()
    }

    pub fn modes(&self) -> &[[i64; 3]] {
        &self.modes
    }

    /// `|k|²` of each kept mode.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.k2
    }

    pub fn spectrum(&self) -> SpectrumSpec {
        SpectrumSpec::flat_torus(self.periods.to_vec()).expect("periods validated")
    }

    pub fn mode_index(&self, m: [i64; 3]) -> Option<usize> {
        self.modes.iter().position(|x| *x == m)
    }

    fn slot(m: [i64; 3], size: usize) -> usize {
        let w = |x: i64| x.rem_euclid(size as i64) as usize;
        (w(m[0]) * size + w(m[1])) * size + w(m[2])
    }

    fn synthesize_on(&self, coeffs: &[Complex64], size: usize, plans: &Plans) -> Vec<Complex64> {
        let mut buf = vec![ZERO; size * size * size];
        for (m, c) in self.modes.iter().zip(coeffs) {
            buf[Self::slot(*m, size)] = *c;
        }
        fft3(&mut buf, size, &plans.inv);
        buf
    }

    fn analyze_on(&self, mut values: Vec<Complex64>, size: usize, plans: &Plans) -> Vec<Complex64> {
        fft3(&mut values, size, &plans.fwd);
        let norm = 1.0 / (size * size * size) as f64;
        self.modes.iter().map(|m| values[Self::slot(*m, size)] * norm).collect()
    }

    /// Grid values `φ(x_j)` of the kept modes, row-major `(x, y, z)`.
    pub fn synthesize(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        self.synthesize_on(coeffs, self.n, &self.grid_plans)
    }

    /// Coefficients of the kept modes; higher modes are discarded.
    pub fn analyze(&self, values: &[Complex64]) -> Result<Vec<Complex64>> {
        if values.len() != self.n * self.n * self.n {
            return Err(Error::Validation("field array does not match the grid".into()));
        }
        Ok(self.analyze_on(values.to_vec(), self.n, &self.grid_plans))
    }

    /// Kept-mode coefficients of `|φ|²φ`, exact for kept-mode input.
    pub fn cubic(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        let mut v = self.synthesize_on(coeffs, self.pad, &self.pad_plans);
        for z in v.iter_mut() {
            *z *= z.norm_sqr();
        }
        self.analyze_on(v, self.pad, &self.pad_plans)
    }

    /// `sup_x |φ|` sampled on the padded grid.
    pub fn sup(&self, coeffs: &[Complex64]) -> f64 {
        self.synthesize_on(coeffs, self.pad, &self.pad_plans)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// `‖φ‖⁴_{L⁴}`, exact for kept-mode input.
    pub fn l4_pow4(&self, coeffs: &[Complex64]) -> f64 {
        let v = self.synthesize_on(coeffs, self.pad, &self.pad_plans);
        let s: f64 = v.iter().map(|z| z.norm_sqr().powi(2)).sum();
        s * self.volume() / v.len() as f64
    }

    /// `Σ w(|k|²)|c|²·V`.
    fn weighted(&self, coeffs: &[Complex64], w: impl Fn(f64) -> f64) -> f64 {
        self.k2.iter().zip(coeffs).map(|(k, c)| w(*k) * c.norm_sqr()).sum::<f64>() * self.volume()
    }
}

/// `−κ|φ|²φ` on the grid, restricted to the kept modes.
pub fn nonlinearity(grid: &TorusGrid3, phi: &[Complex64], kappa: f64) -> Result<Vec<Complex64>> {
    if !(kappa >= 0.0) {
        return Err(Error::Validation("κ must be nonnegative".into()));
    }
    let c = grid.analyze(phi)?;
    let nl: Vec<Complex64> = grid.cubic(&c).into_iter().map(|z| z * -kappa).collect();
    Ok(grid.synthesize(&nl))
}

/// Field on the grid in physical space.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState3 {
    pub tau: f64,
    pub phi: Vec<Complex64>,
    pub chi: Vec<Complex64>,
}

/// Field as kept-mode coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralState {
    pub tau: f64,
    pub phi: Vec<Complex64>,
    pub chi: Vec<Complex64>,
}

impl SpectralState {
    pub fn zeros(grid: &TorusGrid3, tau: f64) -> Self {
        let n = grid.modes.len();
        SpectralState { tau, phi: vec![ZERO; n], chi: vec![ZERO; n] }
    }

    pub fn from_field(grid: &TorusGrid3, f: &FieldState3) -> Result<Self> {
        Ok(SpectralState { tau: f.tau, phi: grid.analyze(&f.phi)?, chi: grid.analyze(&f.chi)? })
    }

    pub fn to_field(&self, grid: &TorusGrid3) -> FieldState3 {
        FieldState3 { tau: self.tau, phi: grid.synthesize(&self.phi), chi: grid.synthesize(&self.chi) }
    }

    /// `sqrt(‖φ‖²_{H¹} + ‖χ‖²_{L²})`.
    pub fn norm_h1_l2(&self, grid: &TorusGrid3) -> f64 {
        (grid.weighted(&self.phi, |k| 1.0 + k) + grid.weighted(&self.chi, |_| 1.0)).sqrt()
    }

    /// Largest coefficient difference.
    pub fn max_difference(&self, other: &SpectralState) -> f64 {
        self.phi
            .iter()
            .zip(&other.phi)
            .chain(self.chi.iter().zip(&other.chi))
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn axpy(&self, k: f64, other: &SpectralState) -> SpectralState {
        SpectralState {
            tau: self.tau,
            phi: self.phi.iter().zip(&other.phi).map(|(a, b)| a + b * k).collect(),
            chi: self.chi.iter().zip(&other.chi).map(|(a, b)| a + b * k).collect(),
        }
    }
}

/// `E = ‖φ‖²_{H¹} + ‖χ‖²_{L²} + (κ/2)‖φ‖⁴_{L⁴}`.
pub fn energy_functional(grid: &TorusGrid3, state: &SpectralState, kappa: f64) -> f64 {
    grid.weighted(&state.phi, |k| 1.0 + k)
        + grid.weighted(&state.chi, |_| 1.0)
        + 0.5 * kappa * grid.l4_pow4(&state.phi)
}

#[derive(Debug, Clone)]
pub struct SemilinearProblem {
    pub q: EffectiveMassSq,
    /// `R_γ/6`.
    pub rho: f64,
    pub kappa: f64,
}

/// Energies recorded at the accepted steps of a regular run, with the
/// Gronwall envelope `E(τ₀)·exp∫(1 + 6|ρ| + |q|)`.
#[derive(Debug, Clone, Default)]
pub struct EnergyLog {
    pub tau: Vec<f64>,
    pub energy: Vec<f64>,
    pub envelope: Vec<f64>,
}

impl EnergyLog {
    pub fn violated(&self) -> bool {
        self.energy.iter().zip(&self.envelope).any(|(e, b)| *e > b * (1.0 + 1e-9))
    }
}

fn pack(s: &SpectralState) -> Vec<f64> {
    let mut y = Vec::with_capacity(4 * s.phi.len());
    for z in s.phi.iter().chain(&s.chi) {
        y.push(z.re);
        y.push(z.im);
    }
    y
}

fn unpack_into(y: &[f64], phi: &mut [Complex64], chi: &mut [Complex64]) {
    let n = phi.len();
    for i in 0..n {
        phi[i] = Complex64::new(y[2 * i], y[2 * i + 1]);
        chi[i] = Complex64::new(y[2 * (n + i)], y[2 * (n + i) + 1]);
    }
}

/// Method-of-lines evolution away from `τ = 0`.
pub fn evolve_semilinear(
    grid: &TorusGrid3,
    problem: &SemilinearProblem,
    state: &SpectralState,
    tau_b: f64,
    tol: f64,
) -> Result<(SpectralState, EnergyLog)> {
    let (a, b) = (state.tau.min(tau_b), state.tau.max(tau_b));
    if a <= 0.0 && b >= 0.0 {
        return Err(Error::Domain(format!("semilinear regular run on [{a}, {b}] touches τ = 0")));
    }
    let n = grid.modes.len();
    let mut phi = vec![ZERO; n];
    let mut chi = vec![ZERO; n];
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
        let mut phi = vec![ZERO; n];
        let mut chi = vec![ZERO; n];
        unpack_into(y, &mut phi, &mut chi);
        let base = problem.rho + problem.q.eval(t);
        let nl = if problem.kappa != 0.0 { grid.cubic(&phi) } else { vec![ZERO; n] };
        for i in 0..n {
            let acc = -phi[i] * (grid.k2[i] + base) - nl[i] * problem.kappa;
            dy[2 * i] = chi[i].re;
            dy[2 * i + 1] = chi[i].im;
            dy[2 * (n + i)] = acc.re;
            dy[2 * (n + i) + 1] = acc.im;
        }
    };
    let mut log = EnergyLog::default();
    let e0 = energy_functional(grid, state, problem.kappa);
    let mut last = state.tau;
    let mut growth = 0.0;
    let weight = |t: f64| 1.0 + 6.0 * problem.rho.abs() + problem.q.eval(t).abs();
    let y = Dopri::with_tol(tol, tol).integrate(rhs, state.tau, &pack(state), tau_b, |t, y| {
        let mut p = vec![ZERO; n];
        let mut c = vec![ZERO; n];
        unpack_into(y, &mut p, &mut c);
        let s = SpectralState { tau: t, phi: p, chi: c };
        // Simpson on each accepted step.
        let h = (t - last).abs();
        growth += h / 6.0 * (weight(last) + 4.0 * weight(0.5 * (t + last)) + weight(t));
        last = t;
        log.tau.push(t);
        log.energy.push(energy_functional(grid, &s, problem.kappa));
        log.envelope.push(e0 * f64::exp(growth));
    })?;
    unpack_into(&y, &mut phi, &mut chi);
    Ok((SpectralState { tau: tau_b, phi, chi }, log))
}

/// Damped variables for every kept mode.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiField {
    pub tau: f64,
    pub psi: Vec<Complex64>,
    pub dpsi: Vec<Complex64>,
}

#[derive(Debug, Clone)]
pub struct DampedField {
    pub end: PsiField,
    /// Node samples in evolution order (only when requested).
    pub samples: Vec<PsiField>,
    pub windows: usize,
    pub changes: Vec<Vec<f64>>,
}

/// Picard–Duhamel crossing of the layer in damped variables with load
/// `(1 − ρ − V)ψ + 2Aψ′ − κ e^{−2∫₀^τ A} |ψ|²ψ`.
pub fn damped_evolve_semilinear(
    grid: &TorusGrid3,
    problem: &SemilinearProblem,
    layer: &Layer,
    start: &PsiField,
    keep_samples: bool,
) -> Result<DampedField> {
    let edge = layer.edge();
    let target = if start.tau == 0.0 {
        edge
    } else if (start.tau - edge).abs() <= 1e-14 * layer.half_width() {
        0.0
    } else {
        return Err(Error::Domain(format!("damped run must start at 0 or at {edge}")));
    };
    // Refine so every cell contracts with the cubic term at the data amplitude.
    let amp = 1.25 * grid.sup(&start.psi).max(grid.sup(&start.dpsi));
    let refined;
    let layer = if problem.kappa != 0.0 || problem.rho != 0.0 {
        let k = 3.0 * problem.kappa * amp * amp;
        refined = layer.refined_for(&|t| problem.rho.abs() + k * (-2.0 * layer.int0_at(t)).exp())?;
        &refined
    } else {
        layer
    };
    let mesh = layer.mesh();
    let p = mesh.order();
    let ncell = mesh.cells().len();
    let nodes = mesh.nodes();
    let (a_n, v_n, i_n) = layer.coefficients();
    let opts = layer.options();
    let rightward = target > start.tau;
    let nm = grid.modes.len();
    let omega: Vec<f64> = grid.k2.iter().map(|k| (k + 1.0).sqrt()).collect();
    let rho = problem.rho;
    let kappa = problem.kappa;
    let order: Vec<usize> = if rightward { (0..ncell).collect() } else { (0..ncell).rev().collect() };
    let lin: Vec<f64> = (0..nodes.len()).map(|j| 1.0 + rho.abs() + v_n[j].abs() + 2.0 * a_n[j].abs()).collect();

    let mut cur = start.clone();
    let mut samples = Vec::new();
    let mut changes = Vec::new();
    let mut windows = 0;
    let mut pos = 0;
    while pos < order.len() {
        // Nonlinear Lipschitz estimate from the current amplitude, with margin.
        let amp = 1.25 * grid.sup(&cur.psi);
        let mut win = Vec::new();
        let mut acc = 0.0;
        while pos < order.len() {
            let c = order[pos];
            let s = mesh.slice(c..c + 1);
            let k: Vec<f64> = (c * p..(c + 1) * p)
                .map(|j| lin[j] + 3.0 * kappa * amp * amp * (-2.0 * i_n[j]).exp())
                .collect();
            let f = s.integrate(&k);
            if !win.is_empty() && acc + f > opts.window_factor {
                break;
            }
            acc += f;
            win.push(c);
            pos += 1;
        }
        if acc >= 1.0 {
            let c = mesh.cells()[win[0]];
            return Err(Error::ContractionUnattainable { a: c.a, b: c.b });
        }
        windows += 1;
        let lo = *win.iter().min().unwrap();
        let hi = *win.iter().max().unwrap();
        let sub = mesh.slice(lo..hi + 1);
        let range = lo * p..(hi + 1) * p;
        let wn = &nodes[range.clone()];
        let n = wn.len();
        let ts = cur.tau;
        // trig[k][j] = (cos, sin) of ω_k(τ_j − τ_s).
        let trig: Vec<Vec<(f64, f64)>> = omega
            .par_iter()
            .map(|w| wn.iter().map(|t| { let (s, c) = (w * (t - ts)).sin_cos(); (c, s) }).collect())
            .collect();
        // Node-major storage: psi[j][k].
        let mut psi: Vec<Vec<Complex64>> = (0..n)
            .map(|j| (0..nm).map(|k| cur.psi[k] * trig[k][j].0 + cur.dpsi[k] * (trig[k][j].1 / omega[k])).collect())
            .collect();
        let mut dpsi: Vec<Vec<Complex64>> = (0..n)
            .map(|j| (0..nm).map(|k| -cur.psi[k] * (omega[k] * trig[k][j].1) + cur.dpsi[k] * trig[k][j].0).collect())
            .collect();
        let mut hist = Vec::new();
        let mut converged = false;
        let mut end = (vec![ZERO; nm], vec![ZERO; nm]);
        for _ in 0..opts.max_iter {
            let loads: Vec<Vec<Complex64>> = (0..n)
                .into_par_iter()
                .map(|j| {
                    let g = range.start + j;
                    let nl = if kappa != 0.0 { grid.cubic(&psi[j]) } else { vec![ZERO; nm] };
                    let damp = kappa * (-2.0 * i_n[g]).exp();
                    (0..nm)
                        .map(|k| psi[j][k] * (1.0 - rho - v_n[g]) + dpsi[j][k] * (2.0 * a_n[g]) - nl[k] * damp)
                        .collect()
                })
                .collect();
            let updated: Vec<(Vec<Complex64>, Vec<Complex64>, Complex64, Complex64, f64, f64)> = (0..nm)
                .into_par_iter()
                .map(|k| {
                    let w = omega[k];
                    let lc: Vec<Complex64> = (0..n).map(|j| loads[j][k] * trig[k][j].0).collect();
                    let ls: Vec<Complex64> = (0..n).map(|j| loads[j][k] * trig[k][j].1).collect();
                    let (ic, icb) = sub.cumulative(&lc);
                    let (is, isb) = sub.cumulative(&ls);
                    let (bc, bs) = if rightward { (ZERO, ZERO) } else { (*icb.last().unwrap(), *isb.last().unwrap()) };
                    let mut np = Vec::with_capacity(n);
                    let mut nd = Vec::with_capacity(n);
                    let mut change = 0.0f64;
                    let mut scale = 0.0f64;
                    for j in 0..n {
                        let (c, s) = trig[k][j];
                        let ci = ic[j] - bc;
                        let si = is[j] - bs;
                        let x = cur.psi[k] * c + cur.dpsi[k] * (s / w) + (ci * s - si * c) / w;
                        let y = -cur.psi[k] * (w * s) + cur.dpsi[k] * c + ci * c + si * s;
                        change = change.max((x - psi[j][k]).norm() * w).max((y - dpsi[j][k]).norm());
                        scale = scale.max(x.norm() * w).max(y.norm());
                        np.push(x);
                        nd.push(y);
                    }
                    let (ec, es) = if rightward {
                        (*icb.last().unwrap(), *isb.last().unwrap())
                    } else {
                        (ZERO - bc, ZERO - bs)
                    };
                    (np, nd, ec, es, change, scale)
                })
                .collect();
            let mut change = 0.0f64;
            let mut scale = 1e-300f64;
            for (k, (np, nd, ec, es, ch, sc)) in updated.into_iter().enumerate() {
                for j in 0..n {
                    psi[j][k] = np[j];
                    dpsi[j][k] = nd[j];
                }
                end.0[k] = ec;
                end.1[k] = es;
                change = change.max(ch);
                scale = scale.max(sc);
            }
            hist.push(change);
            if change <= opts.tol * scale.max(1e-300) || scale == 1e-300 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NonConvergence {
                iterations: opts.max_iter,
                last_change: hist.last().copied().unwrap_or(f64::NAN),
            });
        }
        let te = if rightward { sub.end() } else { sub.start() };
        let mut next = PsiField { tau: te, psi: vec![ZERO; nm], dpsi: vec![ZERO; nm] };
        for k in 0..nm {
            let w = omega[k];
            let (s, c) = (w * (te - ts)).sin_cos();
            let (ic, is) = (end.0[k], end.1[k]);
            next.psi[k] = cur.psi[k] * c + cur.dpsi[k] * (s / w) + (ic * s - is * c) / w;
            next.dpsi[k] = -cur.psi[k] * (w * s) + cur.dpsi[k] * c + ic * c + is * s;
        }
        if keep_samples {
            let idx: Vec<usize> = if rightward { (0..n).collect() } else { (0..n).rev().collect() };
            for j in idx {
                samples.push(PsiField { tau: wn[j], psi: psi[j].clone(), dpsi: dpsi[j].clone() });
            }
        }
        changes.push(hist);
        cur = next;
    }
    cur.tau = target;
    Ok(DampedField { end: cur, samples, windows, changes })
}

/// Semilinear crossing problem.
#[derive(Debug, Clone)]
pub struct SemilinearSpec {
    pub grid: TorusGrid3,
    pub hat: SideProfile,
    pub check: SideProfile,
    pub path: Path,
    pub kappa: f64,
    pub rho: f64,
    pub h: f64,
    pub tol: f64,
}

impl SemilinearSpec {
    fn problem(&self, side: Side) -> SemilinearProblem {
        let q = match side {
            Side::Hat => self.hat.q.clone(),
            Side::Check => self.check.q.clone(),
        };
        SemilinearProblem { q, rho: self.rho, kappa: self.kappa }
    }

    fn layer(&self, side: Side) -> Result<Layer> {
        let (q, a) = match (side, &self.path) {
            (Side::Hat, Path::Riccati { hat, .. }) => (&self.hat.q, Some(hat.clone())),
            (Side::Check, Path::Riccati { check, .. }) => (&self.check.q, Some(check.clone())),
            (Side::Hat, Path::Simple) => (&self.hat.q, None),
            (Side::Check, Path::Simple) => (&self.check.q, None),
        };
        let wmax = self.grid.k2.iter().fold(0.0f64, |m, k| m.max((k + 1.0).sqrt()));
        let opts = crate::evolver::LayerOptions { tol: 1e-13, ..Default::default() };
        Layer::new(side, self.h, q, a, wmax, opts)
    }
}

/// Record of a semilinear crossing.
#[derive(Debug, Clone)]
pub struct SemilinearCrossing {
    pub out: SpectralState,
    /// `(ψ₀, ψ₁)` per kept mode.
    pub bang: PsiField,
    pub hat_samples: Vec<PsiField>,
    pub check_samples: Vec<PsiField>,
    pub energy: Vec<EnergyLog>,
}

fn scale_field(
    omega: &crate::profiles::ConformalFactor,
    s: &SpectralState,
    unscale: bool,
) -> Result<SpectralState> {
    let mut out = s.clone();
    for i in 0..s.phi.len() {
        let (a, b) = if unscale {
            liouville_unscale(3, omega, (s.phi[i], s.chi[i]), s.tau)?
        } else {
            liouville_scale(3, omega, (s.phi[i], s.chi[i]), s.tau)?
        };
        out.phi[i] = a;
        out.chi[i] = b;
    }
    Ok(out)
}

fn to_psi(layer: &Layer, s: &SpectralState) -> PsiField {
    let w = layer.int0_at(s.tau).exp();
    let a = layer.a_at(s.tau);
    PsiField {
        tau: s.tau,
        psi: s.phi.iter().map(|p| p * w).collect(),
        dpsi: s.phi.iter().zip(&s.chi).map(|(p, c)| (c + p * a) * w).collect(),
    }
}

fn from_psi(layer: &Layer, p: &PsiField) -> SpectralState {
    let w = layer.int0_at(p.tau).exp();
    let a = layer.a_at(p.tau);
    let phi: Vec<Complex64> = p.psi.iter().map(|x| x / w).collect();
    let chi = p.dpsi.iter().zip(&phi).map(|(d, f)| d / w - f * a).collect();
    SpectralState { tau: p.tau, phi, chi }
}

/// Data `(u, ∂τu)` at `τ₋` (as kept-mode coefficients) → data at `τ₊`.
pub fn cross_semilinear(
    spec: &SemilinearSpec,
    data: &SpectralState,
    tau_plus: f64,
    keep_samples: bool,
) -> Result<SemilinearCrossing> {
    let tau_minus = data.tau;
    if !(tau_minus <= -spec.h && tau_plus >= spec.h) {
        return Err(Error::Validation(format!(
            "need τ₋ ≤ −h < 0 < h ≤ τ₊ with h = {}, got {tau_minus}, {tau_plus}",
            spec.h
        )));
    }
    let hat_layer = spec.layer(Side::Hat)?;
    let check_layer = spec.layer(Side::Check)?;
    let ph = spec.problem(Side::Hat);
    let pc = spec.problem(Side::Check);
    let mut energy = Vec::new();
    let mut s = scale_field(&spec.hat.omega, data, false)?;
    if s.tau != -spec.h {
        let (e, log) = evolve_semilinear(&spec.grid, &ph, &s, -spec.h, spec.tol)?;
        s = e;
        energy.push(log);
    }
    let hat = damped_evolve_semilinear(&spec.grid, &ph, &hat_layer, &to_psi(&hat_layer, &s), keep_samples)?;
    let bang = hat.end.clone();
    let check = damped_evolve_semilinear(&spec.grid, &pc, &check_layer, &bang, keep_samples)?;
    let mut s = from_psi(&check_layer, &check.end);
    if tau_plus != s.tau {
        let (e, log) = evolve_semilinear(&spec.grid, &pc, &s, tau_plus, spec.tol)?;
        s = e;
        energy.push(log);
    }
    let out = scale_field(&spec.check.omega, &s, true)?;
    Ok(SemilinearCrossing { out, bang, hat_samples: hat.samples, check_samples: check.samples, energy })
}

/// One-sided limits of `ψ̃` and `∂τψ̃` at 0 from node samples with
/// `|τ| ∈ [lo, hi]`, fitted per mode by `c₀ + c₁τ + τ²(c₂ ln|τ| + c₃)` and
/// `d₀ + τ(d₁ ln|τ| + d₂)`.
pub fn one_sided_limit(samples: &[PsiField], lo: f64, hi: f64) -> Result<PsiField> {
    let pick: Vec<&PsiField> = samples.iter().filter(|s| s.tau.abs() >= lo && s.tau.abs() <= hi).collect();
    if pick.len() < 6 {
        return Err(Error::FitFailed("too few samples near τ = 0".into()));
    }
    let nm = pick[0].psi.len();
    let rows0: Vec<Vec<f64>> = pick
        .iter()
        .map(|s| { let (t, l) = (s.tau, s.tau.abs().ln()); vec![1.0, t, t * t * l, t * t] })
        .collect();
    let rows1: Vec<Vec<f64>> = pick
        .iter()
        .map(|s| { let (t, l) = (s.tau, s.tau.abs().ln()); vec![1.0, t * l, t] })
        .collect();
    let mut out = PsiField { tau: 0.0, psi: vec![ZERO; nm], dpsi: vec![ZERO; nm] };
    for k in 0..nm {
        for (rows, dst, get) in [
            (&rows0, &mut out.psi, (|s: &PsiField, k: usize| s.psi[k]) as fn(&PsiField, usize) -> Complex64),
            (&rows1, &mut out.dpsi, |s: &PsiField, k: usize| s.dpsi[k]),
        ] {
            let re: Vec<f64> = pick.iter().map(|s| get(s, k).re).collect();
            let im: Vec<f64> = pick.iter().map(|s| get(s, k).im).collect();
            let cr = fit::least_squares(rows, &re)?;
            let ci = fit::least_squares(rows, &im)?;
            dst[k] = Complex64::new(cr[0], ci[0]);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct LipschitzReport {
    pub zetas: Vec<f64>,
    pub ratios: Vec<f64>,
}

impl LipschitzReport {
    /// Largest relative deviation of the ratios from the smallest-`ζ` ratio.
    pub fn spread(&self) -> f64 {
        let last = *self.ratios.last().unwrap_or(&0.0);
        self.ratios.iter().map(|r| (r - last).abs() / last.abs().max(1e-300)).fold(0.0, f64::max)
    }
}

/// `‖𝔖(X + ζP) − 𝔖X‖ / ‖ζP‖` in `H¹ × L²` for each `ζ`.
pub fn lipschitz_probe(
    spec: &SemilinearSpec,
    data: &SpectralState,
    direction: &SpectralState,
    zetas: &[f64],
    tau_plus: f64,
) -> Result<LipschitzReport> {
    if zetas.iter().any(|z| !(*z > 0.0)) {
        return Err(Error::Validation("perturbation scales must be positive".into()));
    }
    let base = cross_semilinear(spec, data, tau_plus, false)?.out;
    let dn = direction.norm_h1_l2(&spec.grid);
    let mut ratios = Vec::new();
    for &z in zetas {
        let pert = data.axpy(z, direction);
        let out = cross_semilinear(spec, &pert, tau_plus, false)?.out;
        let diff = out.axpy(-1.0, &base);
        ratios.push(diff.norm_h1_l2(&spec.grid) / (z * dn));
    }
    Ok(LipschitzReport { zetas: zetas.to_vec(), ratios })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid8() -> TorusGrid3 {
        TorusGrid3::new(8, [2.0 * std::f64::consts::PI; 3]).unwrap()
    }

    #[test]
    fn grid_round_trip_and_norms() {
        let g = grid8();
        assert_eq!(g.modes().len(), 125);
        let c: Vec<Complex64> = (0..g.modes().len()).map(|i| Complex64::new((i as f64).sin(), 0.1 * i as f64 % 1.0)).collect();
        let back = g.analyze(&g.synthesize(&c)).unwrap();
        assert!(c.iter().zip(&back).all(|(a, b)| (a - b).norm() < 1e-13));
        let one = vec![Complex64::new(1.0, 0.0); 512];
        let s = SpectralState { tau: 1.0, phi: g.analyze(&one).unwrap(), chi: vec![ZERO; 125] };
        let v = g.volume();
        assert_relative_eq!(energy_functional(&g, &s, 2.0), 2.0 * v, max_relative = 1e-13);
        assert_eq!(energy_functional(&g, &SpectralState::zeros(&g, 1.0), 2.0), 0.0);
        assert!(TorusGrid3::new(12, [1.0; 3]).is_err());
    }

    #[test]
    fn nonlinearity_examples() {
        let g = grid8();
        let one = vec![Complex64::new(1.0, 0.0); 512];
        assert!(nonlinearity(&g, &one, 0.0).unwrap().iter().all(|z| z.norm() == 0.0));
        let nl = nonlinearity(&g, &one, 2.0).unwrap();
        assert!(nl.iter().all(|z| (z - Complex64::new(-2.0, 0.0)).norm() < 1e-13));
    }

    /// Exact cubic convolution over the kept modes, truncated to them.
    fn cubic_by_enumeration(g: &TorusGrid3, c: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![ZERO; c.len()];
        let nz: Vec<usize> = (0..c.len()).filter(|i| c[*i].norm() > 0.0).collect();
        for &a in &nz {
            for &b in &nz {
                for &d in &nz {
                    let (ma, mb, md) = (g.modes[a], g.modes[b], g.modes[d]);
                    let m = [ma[0] + mb[0] - md[0], ma[1] + mb[1] - md[1], ma[2] + mb[2] - md[2]];
                    if let Some(i) = g.mode_index(m) {
                        out[i] += c[a] * c[b] * c[d].conj();
                    }
                }
            }
        }
        out
    }

    #[test]
    fn dealiased_cubic_matches_enumeration() {
        let g = grid8();
        for (idx, m) in g.modes().iter().enumerate() {
            let mut c = vec![ZERO; g.modes().len()];
            c[idx] = Complex64::new(0.8, -0.3);
            let fast = g.cubic(&c);
            let exact = cubic_by_enumeration(&g, &c);
            for (i, (a, b)) in fast.iter().zip(&exact).enumerate() {
                assert!((a - b).norm() < 1e-13, "mode {m:?} → {:?}", g.modes()[i]);
            }
        }
        let c: Vec<Complex64> = (0..g.modes().len())
            .map(|i| Complex64::new(((i * 7) % 11) as f64 / 11.0 - 0.5, ((i * 3) % 5) as f64 / 5.0 - 0.4))
            .collect();
        let fast = g.cubic(&c);
        let exact = cubic_by_enumeration(&g, &c);
        assert!(fast.iter().zip(&exact).all(|(a, b)| (a - b).norm() < 1e-11));
    }

    #[test]
    fn constant_data_follows_the_scalar_ode() {
        let g = grid8();
        let q0 = 0.5;
        let kappa = 1.5;
        let p = SemilinearProblem { q: EffectiveMassSq::constant(Side::Check, q0), rho: 0.0, kappa };
        let mut s = SpectralState::zeros(&g, 0.2);
        let zero = g.mode_index([0, 0, 0]).unwrap();
        s.phi[zero] = Complex64::new(0.6, 0.2);
        s.chi[zero] = Complex64::new(-0.1, 0.3);
        let (out, log) = evolve_semilinear(&g, &p, &s, 1.2, 1e-12).unwrap();
        let y = Dopri::with_tol(1e-13, 1e-13)
            .integrate(
                |_, y, dy| {
                    let m2 = y[0] * y[0] + y[1] * y[1];
                    dy[0] = y[2];
                    dy[1] = y[3];
                    dy[2] = -(q0 + kappa * m2) * y[0];
                    dy[3] = -(q0 + kappa * m2) * y[1];
                },
                0.2,
                &[0.6, 0.2, -0.1, 0.3],
                1.2,
                |_, _| {},
            )
            .unwrap();
        assert!((out.phi[zero] - Complex64::new(y[0], y[1])).norm() < 1e-9);
        assert!(!log.violated());
        assert!(out.phi.iter().enumerate().all(|(i, z)| i == zero || z.norm() < 1e-14));
    }
}
