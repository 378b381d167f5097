//! Single-mode evolution of the renormalized field `φ″ + (λ + ρ + q)φ = g`.
//!
//! Away from `τ = 0` the mode is integrated with an adaptive Runge–Kutta pair.
//! Inside the singular layer the damped variable `ψ = φ·e^{∫₀^τ A}` solves
//! `ψ″ + ω²ψ = (1 − ρ − V)ψ + 2Aψ′ + F` with `ω² = λ + 1`, whose coefficients
//! are integrable; it is solved by Picard iteration on the Duhamel formula over
//! windows short enough for the iteration to contract.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::{Dopri, GaussRule, Mesh};
use crate::profiles::{EffectiveMassSq, Side};
use crate::riccati::RiccatiSolution;

pub type Source = Arc<dyn Fn(f64) -> Complex64 + Send + Sync>;

#[derive(Clone)]
pub struct ModeProblem {
    pub lambda: f64,
    pub rho: f64,
    pub q: EffectiveMassSq,
    pub source: Option<Source>,
}

impl std::fmt::Debug for ModeProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModeProblem")
            .field("lambda", &self.lambda)
            .field("rho", &self.rho)
            .field("q", &self.q)
            .field("source", &self.source.is_some())
            .finish()
    }
}

impl ModeProblem {
    pub fn new(lambda: f64, rho: f64, q: EffectiveMassSq) -> Self {
        ModeProblem { lambda, rho, q, source: None }
    }

    pub fn with_source(mut self, g: Source) -> Self {
        self.source = Some(g);
        self
    }

    pub fn omega(&self) -> f64 {
        (self.lambda + 1.0).sqrt()
    }

    pub fn g(&self, tau: f64) -> Complex64 {
        self.source.as_ref().map_or(Complex64::new(0.0, 0.0), |g| g(tau))
    }

    /// Same problem with the effective mass of the other side.
    pub fn on(&self, q: EffectiveMassSq) -> Self {
        ModeProblem { q, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeState {
    pub tau: f64,
    pub phi: Complex64,
    pub chi: Complex64,
}

impl ModeState {
    pub fn new(tau: f64, phi: Complex64, chi: Complex64) -> Self {
        ModeState { tau, phi, chi }
    }

    pub fn real(tau: f64, phi: f64, chi: f64) -> Self {
        ModeState { tau, phi: Complex64::new(phi, 0.0), chi: Complex64::new(chi, 0.0) }
    }

    /// `sqrt((λ+1)|φ|² + |χ|²)`.
    pub fn norm(&self, lambda: f64) -> f64 {
        ((lambda + 1.0) * self.phi.norm_sqr() + self.chi.norm_sqr()).sqrt()
    }
}

/// Damped variables `(ψ, ∂τψ)` at time `tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiState {
    pub tau: f64,
    pub psi: Complex64,
    pub dpsi: Complex64,
}

impl PsiState {
    pub fn norm(&self, lambda: f64) -> f64 {
        ((lambda + 1.0) * self.psi.norm_sqr() + self.dpsi.norm_sqr()).sqrt()
    }
}

/// Limits `(lim φ, lim(∂τφ + Aφ))` on the bang surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BangPair {
    pub psi0: Complex64,
    pub psi1: Complex64,
}

impl BangPair {
    pub fn new(psi0: Complex64, psi1: Complex64) -> Self {
        BangPair { psi0, psi1 }
    }
}

/// Exact evolution of `φ″ + (λ+1)φ = 0` over `Δτ`.
pub fn free_propagate(lambda: f64, state: ModeState, dt: f64) -> ModeState {
    let w = (lambda + 1.0).sqrt();
    let (s, c) = (w * dt).sin_cos();
    ModeState {
        tau: state.tau + dt,
        phi: state.phi * c + state.chi * (s / w),
        chi: -state.phi * (w * s) + state.chi * c,
    }
}

fn pack(s: &ModeState) -> [f64; 4] {
    [s.phi.re, s.phi.im, s.chi.re, s.chi.im]
}

fn unpack(tau: f64, y: &[f64]) -> ModeState {
    ModeState { tau, phi: Complex64::new(y[0], y[1]), chi: Complex64::new(y[2], y[3]) }
}

fn rhs(problem: &ModeProblem) -> impl FnMut(f64, &[f64], &mut [f64]) + '_ {
    move |t, y, dy| {
        let k = problem.lambda + problem.rho + problem.q.eval(t);
        let g = problem.g(t);
        dy[0] = y[2];
        dy[1] = y[3];
        dy[2] = g.re - k * y[0];
        dy[3] = g.im - k * y[1];
    }
}

fn regular_solver(tol: f64) -> Dopri {
    Dopri::with_tol(tol, tol)
}

fn check_regular(a: f64, b: f64) -> Result<()> {
    if a.min(b) <= 0.0 && a.max(b) >= 0.0 {
        return Err(Error::Domain(format!(
            "regular evolution on [{}, {}] touches the bang surface",
            a.min(b),
            a.max(b)
        )));
    }
    Ok(())
}

/// Adaptive integration of the mode equation from `state.tau` to `tau_b`.
pub fn evolve_regular(problem: &ModeProblem, state: ModeState, tau_b: f64, tol: f64) -> Result<ModeState> {
    check_regular(state.tau, tau_b)?;
    let y = regular_solver(tol).integrate(rhs(problem), state.tau, &pack(&state), tau_b, |_, _| {})?;
    Ok(unpack(tau_b, &y))
}

/// A solution sampled at the Gauss nodes of a uniform mesh.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub mesh: Mesh,
    pub start: ModeState,
    pub states: Vec<ModeState>,
}

/// Evolve from `state` to `tau_b`, recording the solution on `cells` uniform
/// cells (Gauss nodes of the given order).
pub fn sample_regular(
    problem: &ModeProblem,
    state: ModeState,
    tau_b: f64,
    cells: usize,
    order: usize,
    tol: f64,
) -> Result<Trajectory> {
    check_regular(state.tau, tau_b)?;
    let (lo, hi) = (state.tau.min(tau_b), state.tau.max(tau_b));
    let mesh = Mesh::uniform(lo, hi, cells, GaussRule::shared(order));
    let mut nodes: Vec<(usize, f64)> = mesh.nodes().into_iter().enumerate().collect();
    if tau_b < state.tau {
        nodes.reverse();
    }
    let mut states = vec![state; mesh.n_nodes()];
    let mut cur = state;
    for (i, t) in nodes {
        cur = evolve_regular(problem, cur, t, tol)?;
        states[i] = cur;
    }
    Ok(Trajectory { mesh, start: state, states })
}

/// Largest deviation from `d/dτ[(λ+1)|φ|² + |χ|²] = 2Re(F·χ̄)`,
/// `F = (1 − ρ − q)φ + g`, in integrated form along the trajectory, relative to
/// `max(1, energy)`.
pub fn energy_identity_residual(problem: &ModeProblem, traj: &Trajectory) -> f64 {
    let nodes = traj.mesh.nodes();
    let energy = |s: &ModeState| (problem.lambda + 1.0) * s.phi.norm_sqr() + s.chi.norm_sqr();
    let rate: Vec<f64> = traj
        .states
        .iter()
        .zip(&nodes)
        .map(|(s, &t)| {
            let f = s.phi * (1.0 - problem.rho - problem.q.eval(t)) + problem.g(t);
            2.0 * (f * s.chi.conj()).re
        })
        .collect();
    let (cum, bounds) = traj.mesh.cumulative(&rate);
    // Reference at the left end of the mesh.
    let forward = traj.start.tau <= traj.mesh.start();
    let e0 = energy(&traj.start);
    let offset = if forward { 0.0 } else { *bounds.last().unwrap() };
    let scale = traj.states.iter().map(energy).fold(e0.max(1.0), f64::max);
    traj.states
        .iter()
        .zip(&cum)
        .map(|(s, c)| (energy(s) - e0 - (c - offset)).abs() / scale)
        .fold(0.0, f64::max)
}

/// `(sup‖Y‖, (‖Y₀‖ + ∫|g|)·exp∫(1 + |ρ| + q))` along a trajectory.
pub fn gronwall_check(problem: &ModeProblem, traj: &Trajectory) -> (f64, f64) {
    let nodes = traj.mesh.nodes();
    let g: Vec<f64> = nodes.iter().map(|t| problem.g(*t).norm()).collect();
    let k: Vec<f64> = nodes.iter().map(|t| 1.0 + problem.rho.abs() + problem.q.eval(*t).abs()).collect();
    let lhs = traj.states.iter().map(|s| s.norm(problem.lambda)).fold(traj.start.norm(problem.lambda), f64::max);
    let rhs = (traj.start.norm(problem.lambda) + traj.mesh.integrate(&g)) * traj.mesh.integrate(&k).exp();
    (lhs, rhs)
}

/// Damped variables in the gauge anchored at `anchor`:
/// `ψ = φ·w`, `∂τψ = (χ + Aφ)·w`, `w = e^{∫_anchor^τ A}`.
pub fn to_psi(state: ModeState, a: &RiccatiSolution, anchor: f64) -> PsiState {
    let w = (a.int0(state.tau) - a.int0(anchor)).exp();
    PsiState {
        tau: state.tau,
        psi: state.phi * w,
        dpsi: (state.chi + state.phi * a.a(state.tau)) * w,
    }
}

pub fn from_psi(psi: PsiState, a: &RiccatiSolution, anchor: f64) -> ModeState {
    let w = (a.int0(psi.tau) - a.int0(anchor)).exp();
    let phi = psi.psi / w;
    ModeState { tau: psi.tau, phi, chi: psi.dpsi / w - phi * a.a(psi.tau) }
}

#[derive(Debug, Clone)]
pub struct LayerOptions {
    pub order: usize,
    pub ratio: f64,
    pub floor: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Target contraction factor of one window.
    pub window_factor: f64,
    /// Smallest cell width the window splitter may produce.
    pub min_width: f64,
}

impl Default for LayerOptions {
    fn default() -> Self {
        LayerOptions {
            order: 16,
            ratio: 0.5,
            floor: 1e-12,
            tol: 1e-13,
            max_iter: 400,
            window_factor: 0.5,
            min_width: 1e-14,
        }
    }
}

/// Coefficients of the damped equation on `[−h, 0]` or `[0, h]`, tabulated on
/// a graded mesh. With no Riccati solution (`A ≡ 0`) the potential is `V = q`.
#[derive(Debug, Clone)]
pub struct Layer {
    side: Side,
    h: f64,
    mesh: Mesh,
    a: Vec<f64>,
    v: Vec<f64>,
    int0: Vec<f64>,
    riccati: Option<Arc<RiccatiSolution>>,
    q: EffectiveMassSq,
    omega_max: f64,
    opts: LayerOptions,
}

impl Layer {
    pub fn new(
        side: Side,
        h: f64,
        q: &EffectiveMassSq,
        riccati: Option<Arc<RiccatiSolution>>,
        omega_max: f64,
        opts: LayerOptions,
    ) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::Validation("damped layer needs a positive half-width".into()));
        }
        if let Some(r) = &riccati {
            if r.side() != side {
                return Err(Error::Validation("Riccati solution on the wrong side".into()));
            }
            if r.half_width() < h * (1.0 - 1e-12) {
                return Err(Error::Domain(format!(
                    "damped layer half-width {h} exceeds the Riccati domain {}",
                    r.half_width()
                )));
            }
        }
        let rule = GaussRule::shared(opts.order);
        let mesh = Mesh::toward_zero(side.sign() * h, opts.ratio, opts.floor, rule);
        Self::tabulate(side, h, q.clone(), riccati, omega_max, opts, mesh, &|_| 0.0)
    }

    #[allow(clippy::too_many_arguments)]
    fn tabulate(
        side: Side,
        h: f64,
        q: EffectiveMassSq,
        riccati: Option<Arc<RiccatiSolution>>,
        omega_max: f64,
        opts: LayerOptions,
        mut mesh: Mesh,
        extra: &dyn Fn(f64) -> f64,
    ) -> Result<Self> {
        let coeff = |t: f64| -> (f64, f64, f64) {
            match &riccati {
                Some(r) => (r.a(t), 0.0, r.int0(t)),
                None => (0.0, q.eval(t), 0.0),
            }
        };
        // Split cells until each is resolved for ω_max and contracts on its own.
        let mut i = 0;
        while i < mesh.cells().len() {
            let cell = mesh.cells()[i];
            let single = mesh.slice(i..i + 1);
            let nodes = single.nodes();
            let k: Vec<f64> = nodes
                .iter()
                .map(|t| {
                    let (a, v, _) = coeff(*t);
                    1.0 + v.abs() + 2.0 * a.abs() + extra(*t)
                })
                .collect();
            let factor = single.integrate(&k);
            let too_wide = omega_max * cell.width() > 1.5;
            if factor > opts.window_factor || too_wide {
                if cell.width() < opts.min_width {
                    return Err(Error::ContractionUnattainable { a: cell.a, b: cell.b });
                }
                mesh.split_cell(i);
                continue;
            }
            i += 1;
        }
        let nodes = mesh.nodes();
        let mut a = Vec::with_capacity(nodes.len());
        let mut v = Vec::with_capacity(nodes.len());
        let mut int0 = Vec::with_capacity(nodes.len());
        for t in &nodes {
            let (ai, vi, ii) = coeff(*t);
            a.push(ai);
            v.push(vi);
            int0.push(ii);
        }
        Ok(Layer { side, h, mesh, a, v, int0, riccati, q, omega_max, opts })
    }

    /// The same layer with cells split until `∫(1 + |V| + 2|A| + extra)`
    /// stays below the window factor on every cell.
    pub fn refined_for(&self, extra: &dyn Fn(f64) -> f64) -> Result<Layer> {
        Self::tabulate(
            self.side,
            self.h,
            self.q.clone(),
            self.riccati.clone(),
            self.omega_max,
            self.opts.clone(),
            self.mesh.clone(),
            extra,
        )
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn half_width(&self) -> f64 {
        self.h
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn riccati(&self) -> Option<&RiccatiSolution> {
        self.riccati.as_deref()
    }

    pub fn options(&self) -> &LayerOptions {
        &self.opts
    }

    /// `(A, V, ∫₀^τ A)` at the mesh nodes.
    pub fn coefficients(&self) -> (&[f64], &[f64], &[f64]) {
        (&self.a, &self.v, &self.int0)
    }

    /// Outer edge of the layer (`∓h`).
    pub fn edge(&self) -> f64 {
        self.side.sign() * self.h
    }

    pub fn a_at(&self, tau: f64) -> f64 {
        self.riccati.as_ref().map_or(0.0, |r| r.a(tau))
    }

    pub fn int0_at(&self, tau: f64) -> f64 {
        self.riccati.as_ref().map_or(0.0, |r| r.int0(tau))
    }

    /// Interior state at the layer edge → `ψ` in the `∫₀` gauge.
    pub fn psi_of(&self, state: ModeState) -> PsiState {
        let w = self.int0_at(state.tau).exp();
        PsiState {
            tau: state.tau,
            psi: state.phi * w,
            dpsi: (state.chi + state.phi * self.a_at(state.tau)) * w,
        }
    }

    pub fn state_of(&self, psi: PsiState) -> ModeState {
        let w = self.int0_at(psi.tau).exp();
        let phi = psi.psi / w;
        ModeState { tau: psi.tau, phi, chi: psi.dpsi / w - phi * self.a_at(psi.tau) }
    }
}

/// Record of a damped evolution.
#[derive(Debug, Clone)]
pub struct DampedRun {
    pub end: PsiState,
    /// Solution at every node visited, in evolution order.
    pub samples: Vec<PsiState>,
    /// Contraction factor `∫(1 + |ρ| + |V| + 2|A|)` of each window.
    pub factors: Vec<f64>,
    /// Successive Picard sup-changes of each window.
    pub changes: Vec<Vec<f64>>,
    /// `∫|F|` and `∫(1 + |ρ| + |V| + 2|A|)` over the run.
    pub source_l1: f64,
    pub coefficient_l1: f64,
}

/// Evolve damped variables between the layer edge and 0 (either direction).
/// `start.tau` must be the edge or 0; the run ends at the other one.
pub fn damped_evolve(problem: &ModeProblem, layer: &Layer, start: PsiState) -> Result<DampedRun> {
    let edge = layer.edge();
    let target = if start.tau == 0.0 {
        edge
    } else if (start.tau - edge).abs() <= 1e-14 * layer.h {
        0.0
    } else {
        return Err(Error::Domain(format!(
            "damped evolution must start at 0 or at the layer edge {edge}, not {}",
            start.tau
        )));
    };
    let mesh = &layer.mesh;
    let p = mesh.order();
    let ncell = mesh.cells().len();
    let omega = problem.omega();
    let rho = problem.rho;
    let nodes = mesh.nodes();
    let rightward = target > start.tau;
    let order: Vec<usize> = if rightward { (0..ncell).collect() } else { (0..ncell).rev().collect() };

    // Per-node load coefficients.
    let f_nodes: Vec<Complex64> = nodes
        .iter()
        .zip(&layer.int0)
        .map(|(t, i)| problem.g(*t) * i.exp())
        .collect();
    let kappa: Vec<f64> = (0..nodes.len())
        .map(|j| 1.0 + rho.abs() + layer.v[j].abs() + 2.0 * layer.a[j].abs())
        .collect();

    // Group cells into windows along the direction of evolution.
    let cell_factor: Vec<f64> = (0..ncell)
        .map(|c| {
            let s = mesh.slice(c..c + 1);
            s.integrate(&kappa[c * p..(c + 1) * p])
        })
        .collect();
    let mut windows: Vec<Vec<usize>> = Vec::new();
    let mut acc = f64::INFINITY;
    for &c in &order {
        if acc + cell_factor[c] > layer.opts.window_factor {
            windows.push(Vec::new());
            acc = 0.0;
        }
        acc += cell_factor[c];
        windows.last_mut().unwrap().push(c);
    }

    let mut cur = start;
    let mut samples = Vec::with_capacity(nodes.len());
    let mut factors = Vec::new();
    let mut changes = Vec::new();
    let zero = Complex64::new(0.0, 0.0);
    for win in windows {
        let lo = *win.iter().min().unwrap();
        let hi = *win.iter().max().unwrap();
        let sub = mesh.slice(lo..hi + 1);
        let range = lo * p..(hi + 1) * p;
        let wn = &nodes[range.clone()];
        let a = &layer.a[range.clone()];
        let v = &layer.v[range.clone()];
        let f = &f_nodes[range.clone()];
        factors.push(sub.integrate(&kappa[range.clone()]));
        let ts = cur.tau;
        let n = wn.len();
        let (cos_n, sin_n): (Vec<f64>, Vec<f64>) =
            wn.iter().map(|t| { let (s, c) = (omega * (t - ts)).sin_cos(); (c, s) }).unzip();
        // Free evolution as the initial guess.
        let mut psi: Vec<Complex64> =
            (0..n).map(|j| cur.psi * cos_n[j] + cur.dpsi * (sin_n[j] / omega)).collect();
        let mut dpsi: Vec<Complex64> =
            (0..n).map(|j| -cur.psi * (omega * sin_n[j]) + cur.dpsi * cos_n[j]).collect();
        let mut hist = Vec::new();
        let mut load_c = vec![zero; n];
        let mut load_s = vec![zero; n];
        let mut end_ic = zero;
        let mut end_is = zero;
        let mut converged = false;
        for _ in 0..layer.opts.max_iter {
            for j in 0..n {
                let l = psi[j] * (1.0 - rho - v[j]) + dpsi[j] * (2.0 * a[j]) + f[j];
                load_c[j] = l * cos_n[j];
                load_s[j] = l * sin_n[j];
            }
            let (ic, icb) = sub.cumulative(&load_c);
            let (is, isb) = sub.cumulative(&load_s);
            let (base_c, base_s, fin_c, fin_s) = if rightward {
                (zero, zero, *icb.last().unwrap(), *isb.last().unwrap())
            } else {
                (*icb.last().unwrap(), *isb.last().unwrap(), zero, zero)
            };
            let mut change = 0.0f64;
            let mut scale = 1.0f64;
            for j in 0..n {
                let c_int = ic[j] - base_c;
                let s_int = is[j] - base_s;
                let np = cur.psi * cos_n[j] + cur.dpsi * (sin_n[j] / omega)
                    + (c_int * sin_n[j] - s_int * cos_n[j]) / omega;
                let nd = -cur.psi * (omega * sin_n[j]) + cur.dpsi * cos_n[j]
                    + c_int * cos_n[j] + s_int * sin_n[j];
                change = change.max((np - psi[j]).norm() * omega).max((nd - dpsi[j]).norm());
                scale = scale.max(np.norm() * omega).max(nd.norm());
                psi[j] = np;
                dpsi[j] = nd;
            }
            end_ic = fin_c - base_c;
            end_is = fin_s - base_s;
            hist.push(change);
            if change <= layer.opts.tol * scale {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NonConvergence {
                iterations: layer.opts.max_iter,
                last_change: hist.last().copied().unwrap_or(f64::NAN),
            });
        }
        let te = if rightward { sub.end() } else { sub.start() };
        let (s, c) = (omega * (te - ts)).sin_cos();
        let next = PsiState {
            tau: te,
            psi: cur.psi * c + cur.dpsi * (s / omega) + (end_ic * s - end_is * c) / omega,
            dpsi: -cur.psi * (omega * s) + cur.dpsi * c + end_ic * c + end_is * s,
        };
        let idx: Vec<usize> = if rightward { (0..n).collect() } else { (0..n).rev().collect() };
        for j in idx {
            samples.push(PsiState { tau: wn[j], psi: psi[j], dpsi: dpsi[j] });
        }
        changes.push(hist);
        cur = next;
    }
    cur.tau = target;
    let f_abs: Vec<f64> = f_nodes.iter().map(|z| z.norm()).collect();
    Ok(DampedRun {
        end: cur,
        samples,
        factors,
        changes,
        source_l1: mesh.integrate(&f_abs),
        coefficient_l1: mesh.integrate(&kappa),
    })
}

/// `W_A`: interior state at the layer edge → limits on the bang surface.
pub fn limit_w(problem: &ModeProblem, layer: &Layer, state: ModeState) -> Result<BangPair> {
    let run = damped_evolve(problem, layer, layer.psi_of(state))?;
    Ok(BangPair { psi0: run.end.psi, psi1: run.end.dpsi })
}

/// `W_A` computed in the gauge anchored at the layer edge, then rescaled by
/// `e^{−∫_edge^0 A}` to the `∫₀` normalization. Agrees with [`limit_w`].
pub fn limit_w_anchored(problem: &ModeProblem, layer: &Layer, state: ModeState) -> Result<BangPair> {
    let Some(r) = layer.riccati() else {
        return limit_w(problem, layer, state);
    };
    let anchor = state.tau;
    let shift = r.int0(anchor);
    // In the anchored gauge the forcing carries the extra factor e^{−∫₀^anchor A}.
    let anchored = match &problem.source {
        Some(g) => {
            let g = g.clone();
            let k = (-shift).exp();
            problem.clone().with_source(Arc::new(move |t| g(t) * k))
        }
        None => problem.clone(),
    };
    let run = damped_evolve(&anchored, layer, to_psi(state, r, anchor))?;
    let back = shift.exp();
    Ok(BangPair { psi0: run.end.psi * back, psi1: run.end.dpsi * back })
}

/// `W_A⁻¹`: limits on the bang surface → interior state at the layer edge.
pub fn inverse_w(problem: &ModeProblem, layer: &Layer, bang: BangPair) -> Result<ModeState> {
    let run = damped_evolve(problem, layer, PsiState { tau: 0.0, psi: bang.psi0, dpsi: bang.psi1 })?;
    Ok(layer.state_of(run.end))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riccati::{picard_construct, RiccatiOptions};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn free_rotation_examples() {
        let s = ModeState::real(0.0, 1.0, 0.0);
        assert_eq!(free_propagate(2.0, s, 0.0), s);
        let r = free_propagate(0.0, s, std::f64::consts::FRAC_PI_2);
        assert!(r.phi.norm() < 1e-15 && (r.chi - c(-1.0)).norm() < 1e-15);
        let t = ModeState::new(0.0, Complex64::new(0.3, -1.0), Complex64::new(2.0, 0.5));
        let u = free_propagate(5.0, t, 1.234);
        assert!((u.norm(5.0) - t.norm(5.0)).abs() < 1e-13);
    }

    #[test]
    fn regular_evolution_matches_oscillators() {
        let p = ModeProblem::new(4.0, 0.0, EffectiveMassSq::zero(Side::Check));
        let s = ModeState::real(0.1, (0.2f64).cos(), -2.0 * (0.2f64).sin());
        let e = evolve_regular(&p, s, 1.1, 1e-12).unwrap();
        assert!((e.phi.re - (2.2f64).cos()).abs() < 1e-8);
        let q0 = 2.5;
        let p = ModeProblem::new(1.0, 0.0, EffectiveMassSq::constant(Side::Check, q0));
        let w = (1.0 + q0).sqrt();
        let e = evolve_regular(&p, ModeState::real(0.2, 1.0, 0.0), 1.2, 1e-12).unwrap();
        assert!((e.phi.re - w.cos()).abs() < 1e-8 && (e.chi.re + w * w.sin()).abs() < 1e-8);
        assert!(evolve_regular(&p, ModeState::real(-0.2, 1.0, 0.0), 0.3, 1e-12).is_err());
    }

    #[test]
    fn steady_forcing_and_energy_identity() {
        let g0 = 0.7;
        let p = ModeProblem::new(0.0, 0.0, EffectiveMassSq::zero(Side::Check))
            .with_source(Arc::new(move |_| Complex64::new(g0, 0.0)));
        // φ = g₀ is the particular solution of φ″ = g₀ − 0·φ only for λ + ρ + q = 0;
        // with λ = ρ = q = 0 the exact solution is φ = 1 + g₀τ²/2 from (1, 0) at 0.
        let t = sample_regular(&p, ModeState::real(0.5, 1.0 + g0 * 0.125, g0 * 0.5), 1.5, 8, 12, 1e-12).unwrap();
        let last = t.states[t.states.len() - 1];
        let tt = t.mesh.nodes()[t.states.len() - 1];
        assert!((last.phi.re - (1.0 + 0.5 * g0 * tt * tt)).abs() < 1e-9);
        assert!(energy_identity_residual(&p, &t) < 1e-9);
        let (lhs, rhs) = gronwall_check(&p, &t);
        assert!(lhs <= rhs);
    }

    #[test]
    fn psi_gauge_round_trip() {
        let q = EffectiveMassSq::fuchsian(Side::Hat, 1.0);
        let a = picard_construct(&q, &RiccatiOptions::default()).unwrap();
        let s = ModeState::new(-0.05, Complex64::new(0.4, 0.1), Complex64::new(-1.0, 2.0));
        let psi = to_psi(s, &a, -0.05);
        assert_eq!(psi.psi, s.phi);
        assert!((psi.dpsi - (s.chi + s.phi * a.a(-0.05))).norm() < 1e-15);
        let back = from_psi(to_psi(s, &a, -0.1), &a, -0.1);
        assert!((back.phi - s.phi).norm() < 1e-14 && (back.chi - s.chi).norm() < 1e-13);
    }

    #[test]
    fn undamped_layer_reproduces_cosine() {
        let p = ModeProblem::new(4.0, 0.0, EffectiveMassSq::zero(Side::Hat));
        let q = EffectiveMassSq::zero(Side::Hat);
        let layer = Layer::new(Side::Hat, 0.1, &q, None, p.omega(), LayerOptions::default()).unwrap();
        let s = ModeState::real(-0.1, (-0.2f64).cos(), -2.0 * (-0.2f64).sin());
        let bang = limit_w(&p, &layer, s).unwrap();
        assert!((bang.psi0 - c(1.0)).norm() < 1e-8 && bang.psi1.norm() < 1e-8);
        let back = inverse_w(&p, &layer, bang).unwrap();
        assert!((back.phi - s.phi).norm() < 1e-12 && (back.chi - s.chi).norm() < 1e-12);
    }

    #[test]
    fn damped_layer_is_linear_invertible_and_contracting() {
        let q = EffectiveMassSq::fuchsian(Side::Hat, 1.0);
        let a = Arc::new(picard_construct(&q, &RiccatiOptions { tol: 1e-14, ..Default::default() }).unwrap());
        let p = ModeProblem::new(4.0, 0.0, q.clone());
        let layer = Layer::new(Side::Hat, 0.1, &q, Some(a), p.omega(), LayerOptions::default()).unwrap();
        let x = ModeState::new(-0.1, Complex64::new(0.3, 0.2), Complex64::new(-1.0, 0.4));
        let y = ModeState::new(-0.1, Complex64::new(-0.7, 1.0), Complex64::new(0.5, 0.0));
        let (al, be) = (Complex64::new(0.3, -1.2), Complex64::new(2.0, 0.1));
        let comb = ModeState::new(-0.1, x.phi * al + y.phi * be, x.chi * al + y.chi * be);
        let wx = limit_w(&p, &layer, x).unwrap();
        let wy = limit_w(&p, &layer, y).unwrap();
        let wc = limit_w(&p, &layer, comb).unwrap();
        assert!((wc.psi0 - (wx.psi0 * al + wy.psi0 * be)).norm() < 1e-10);
        assert!((wc.psi1 - (wx.psi1 * al + wy.psi1 * be)).norm() < 1e-10);
        let back = inverse_w(&p, &layer, wx).unwrap();
        assert!((back.phi - x.phi).norm() < 1e-9 && (back.chi - x.chi).norm() < 1e-9);
        let anchored = limit_w_anchored(&p, &layer, x).unwrap();
        assert!((anchored.psi0 - wx.psi0).norm() < 1e-12 && (anchored.psi1 - wx.psi1).norm() < 1e-12);
        let run = damped_evolve(&p, &layer, layer.psi_of(x)).unwrap();
        for h in &run.changes {
            let k = h.len().min(6);
            assert!(h[1..k].iter().zip(&h[..k - 1]).all(|(b, a)| b < a));
        }
        assert!(run.factors.iter().all(|f| *f <= 0.5 + 1e-12));
    }
}
