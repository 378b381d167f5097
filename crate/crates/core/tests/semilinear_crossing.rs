use std::sync::Arc;
use std::time::Instant;

use bangcross::evolver::{evolve_regular, inverse_w, limit_w, Layer, LayerOptions, ModeProblem, ModeState};
use bangcross::profiles::{ConformalFactor, EffectiveMassSq, Side};
use bangcross::riccati::{picard_construct, RiccatiOptions};
use bangcross::semilinear::{cross_semilinear, lipschitz_probe, one_sided_limit, SemilinearSpec, SpectralState, TorusGrid3};
use bangcross::transmission::{Path, SideProfile};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn setup(kappa: f64) -> SemilinearSpec {
    let grid = TorusGrid3::new(16, [2.0 * std::f64::consts::PI; 3]).unwrap();
    let qh = EffectiveMassSq::fuchsian(Side::Hat, 0.25);
    let qc = EffectiveMassSq::fuchsian(Side::Check, 1.0);
    let opts = RiccatiOptions { tol: 1e-13, ..Default::default() };
    let ah = Arc::new(picard_construct(&qh, &opts).unwrap());
    let ac = Arc::new(picard_construct(&qc, &opts).unwrap());
    SemilinearSpec {
        grid,
        hat: SideProfile::new(ConformalFactor::constant(Side::Hat, 1.0), qh),
        check: SideProfile::new(ConformalFactor::constant(Side::Check, 1.0), qc),
        path: Path::Riccati { hat: ah, check: ac },
        kappa,
        rho: 0.0,
        h: 0.1,
        tol: 1e-11,
    }
}

fn smooth_data(grid: &TorusGrid3, tau: f64, seed: u64, amp: f64) -> SpectralState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = SpectralState::zeros(grid, tau);
    for (i, m) in grid.modes().iter().enumerate() {
        let w = amp * (-0.5 * (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]) as f64).exp();
        s.phi[i] = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * w;
        s.chi[i] = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * w;
    }
    s
}

#[test]
fn semilinear_crossing_checks() {
    let t0 = Instant::now();
    let lin = setup(0.0);
    let data = smooth_data(&lin.grid, -0.3, 7, 0.5);
    let out = cross_semilinear(&lin, &data, 0.3, false).unwrap();
    // Per-mode linear stack.
    let wmax = lin.grid.eigenvalues().iter().fold(0.0f64, |m, k| m.max((k + 1.0).sqrt()));
    let Path::Riccati { hat, check } = &lin.path else { unreachable!() };
    let lo = LayerOptions::default();
    let lh = Layer::new(Side::Hat, 0.1, &lin.hat.q, Some(hat.clone()), wmax, lo.clone()).unwrap();
    let lc = Layer::new(Side::Check, 0.1, &lin.check.q, Some(check.clone()), wmax, lo).unwrap();
    let mut worst = 0.0f64;
    for (i, lam) in lin.grid.eigenvalues().iter().enumerate() {
        let ph = ModeProblem::new(*lam, 0.0, lin.hat.q.clone());
        let pc = ModeProblem::new(*lam, 0.0, lin.check.q.clone());
        let s = evolve_regular(&ph, ModeState::new(-0.3, data.phi[i], data.chi[i]), -0.1, 1e-12).unwrap();
        let b = limit_w(&ph, &lh, s).unwrap();
        let s = inverse_w(&pc, &lc, b).unwrap();
        let s = evolve_regular(&pc, s, 0.3, 1e-12).unwrap();
        worst = worst.max((s.phi - out.out.phi[i]).norm()).max((s.chi - out.out.chi[i]).norm());
    }
    eprintln!("kappa=0 vs linear {worst:e} {:?}", t0.elapsed());
    assert!(worst < 1e-6);

    let t1 = Instant::now();
    let nl = setup(1.0);
    let res = cross_semilinear(&nl, &data, 0.3, true).unwrap();
    eprintln!("kappa=1 crossing {:?}", t1.elapsed());
    let a = one_sided_limit(&res.hat_samples, 1e-7, 1e-3).unwrap();
    let b = one_sided_limit(&res.check_samples, 1e-7, 1e-3).unwrap();
    let mut d = 0.0f64;
    for k in 0..a.psi.len() {
        d = d.max((a.psi[k] - b.psi[k]).norm()).max((a.dpsi[k] - b.dpsi[k]).norm());
    }
    eprintln!("two-sided {d:e}");
    assert!(d < 1e-5);
    assert!(res.energy.iter().all(|l| !l.violated()));

    let t2 = Instant::now();
    let dir = smooth_data(&nl.grid, -0.3, 11, 1.0);
    let rep = lipschitz_probe(&nl, &data, &dir, &[1e-2, 1e-3, 1e-4], 0.3).unwrap();
    eprintln!("lipschitz {:?} spread {:e} {:?}", rep.ratios, rep.spread(), t2.elapsed());
    assert!(rep.ratios.iter().all(|r| r.is_finite() && *r > 0.0));
    assert!(rep.spread() <= 0.05);
}
