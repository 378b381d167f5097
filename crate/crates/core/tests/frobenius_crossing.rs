use std::sync::Arc;

use bangcross::frobenius::{constants_at, delta_from_series, eval_solution, identify_d_ratio, oracle_transmission, series, FuchsProblem};
use bangcross::profiles::{ConformalFactor, EffectiveMassSq, Side};
use bangcross::riccati::{picard_construct, RiccatiOptions};
use bangcross::spectrum::SpectrumSpec;
use bangcross::transmission::{full_map_s, FieldData, Path, SideProfile, TransmissionSpec};
use num_complex::Complex64;

fn worst_error(c2_hat: f64, c2_check: f64) -> f64 {
    let spectrum = SpectrumSpec::explicit(3, vec![(1.0, 1), (4.0, 1)], 0.0).unwrap();
    let qh = EffectiveMassSq::fuchsian(Side::Hat, c2_hat);
    let qc = EffectiveMassSq::fuchsian(Side::Check, c2_check);
    let opts = RiccatiOptions { tol: 1e-13, ..Default::default() };
    let ah = Arc::new(picard_construct(&qh, &opts).unwrap());
    let ac = Arc::new(picard_construct(&qc, &opts).unwrap());
    let spec = TransmissionSpec::new(
        spectrum.clone(),
        SideProfile::new(ConformalFactor::constant(Side::Hat, 1.0), qh),
        SideProfile::new(ConformalFactor::constant(Side::Check, 1.0), qc),
        4.0,
        Path::Riccati { hat: ah.clone(), check: ac.clone() },
    )
    .unwrap()
    .with_half_width(0.1);
    let constants = [(0.7, -1.2), (-0.4, 0.9)];
    let (tm, tp) = (-0.3, 0.3);
    let mut data = FieldData::zeros(&spectrum, 4.0, tm, None).unwrap();
    let mut expected = Vec::new();
    for (m, &(c1, c2)) in data.modes.iter_mut().zip(&constants) {
        let fh = FuchsProblem::new(m.lambda, c2_hat, Side::Hat);
        let fc = FuchsProblem::new(m.lambda, c2_check, Side::Check);
        let rh = identify_d_ratio(&fh, &ah, -0.05).unwrap();
        let rc = identify_d_ratio(&fc, &ac, 0.05).unwrap();
        let delta = delta_from_series(&fh, &fc, (rh, 1.0), (rc, 1.0)).unwrap();
        let (u, du) = eval_solution(&fh, c1, c2, tm).unwrap();
        m.u = Complex64::new(u, 0.0);
        m.du = Complex64::new(du, 0.0);
        expected.push((fc, oracle_transmission(c1, c2, delta)));
    }
    let out = full_map_s(&spec, &data, tp).unwrap();
    let mut worst = 0.0f64;
    for (m, (fc, (e1, e2))) in out.modes.iter().zip(&expected) {
        let sp = series(fc).unwrap();
        let (k1, k2) = constants_at(fc, &sp, tp, m.u.re, m.du.re).unwrap();
        let scale = e1.abs().max(e2.abs());
        worst = worst.max((k1 - e1).abs() / scale).max((k2 - e2).abs() / scale);
    }
    worst
}

#[test]
fn crossing_reproduces_the_series_rule() {
    for c2h in [0.25, 1.0] {
        for c2c in [0.25, 1.0] {
            let e = worst_error(c2h, c2c);
            assert!(e <= 1e-4, "c²=({c2h}, {c2c}) error {e}");
        }
    }
}
