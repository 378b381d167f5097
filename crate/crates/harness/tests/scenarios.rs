use std::path::Path;

use bangcross_harness::config::Scenario;
use bangcross_harness::converge::{converge_files, Ladder};
use bangcross_harness::run::run_scenario;

fn load(name: &str) -> (Scenario, String) {
    Scenario::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)).unwrap()
}

fn ladder(name: &str, l: Ladder) -> Vec<f64> {
    let (s, text) = load(name);
    let (table, files) = converge_files(&s, &text, name, None, l).unwrap();
    assert_eq!(files.names(), [format!("converge_{}.csv", l.name())]);
    table.levels.iter().map(|l| l.error).collect()
}

#[test]
fn massless_smoke_matches_the_free_wave() {
    let (s, text) = load("massless_smoke.toml");
    let r = run_scenario(&s, &text, "massless_smoke", None).unwrap();
    let e = r.summary["free_reference_error"].as_f64().unwrap();
    assert!(e <= 1e-8, "{e}");
}

#[test]
fn fuchsian_bounce_agrees_with_the_series() {
    let (s, text) = load("fuchsian_bounce.toml");
    let r = run_scenario(&s, &text, "fuchsian_bounce", None).unwrap();
    let e = r.summary["frobenius_max_rel_error"].as_f64().unwrap();
    assert!(e <= 1e-4, "{e}");
    assert!(r.files.get("frobenius.csv").is_some());
}

#[test]
fn desitter_energy_bookkeeping() {
    let (s, text) = load("desitter_to_powerlaw.toml");
    let r = run_scenario(&s, &text, "desitter", None).unwrap();
    assert!(r.summary["max_energy_identity_residual"].as_f64().unwrap() <= 1e-7);
    assert_eq!(r.summary["gronwall_envelopes_hold"], true);
    assert!((r.summary["delta"].as_f64().unwrap() - 0.25).abs() < 1e-6);
}

#[test]
fn ratio_ladder_decreases() {
    let e = ladder("desitter_to_powerlaw.toml", Ladder::Ratio);
    assert!(e.windows(2).all(|w| w[1] < w[0]), "{e:?}");
}

#[test]
fn tolerance_ladder_decreases() {
    let e = ladder("desitter_to_powerlaw.toml", Ladder::Tol);
    assert!(e.windows(2).all(|w| w[1] < w[0]), "{e:?}");
}

#[test]
fn series_ladder_decreases_over_truncation_orders() {
    let e = ladder("fuchsian_bounce.toml", Ladder::Series);
    assert_eq!(e.len(), 3);
    assert!(e.windows(2).all(|w| w[1] < w[0]), "{e:?}");
}

#[test]
fn lambda_ladder_is_flat() {
    let e = ladder("massless_smoke.toml", Ladder::Lambda);
    assert!(e.len() >= 3);
    assert!(e.iter().all(|x| *x <= 1e-10), "{e:?}");
}

#[test]
fn ladders_refuse_scenarios_they_do_not_fit() {
    let (s, text) = load("desitter_to_powerlaw.toml");
    assert!(converge_files(&s, &text, "d", None, Ladder::Lambda).is_err());
    assert!(converge_files(&s, &text, "d", None, Ladder::Series).is_err());
}
