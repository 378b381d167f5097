//! One PASS/FAIL line per acceptance criterion; exits nonzero on any failure.

use std::process::ExitCode;

use bangcross_harness::acceptance::{checks, run_check, Tolerances, DEFAULT_SEED};

fn main() -> ExitCode {
    let tol = Tolerances::default();
    let mut failed = Vec::new();
    for c in checks() {
        let r = run_check(c, &tol, DEFAULT_SEED);
        println!("{}", r.line());
        if !r.passed() {
            failed.push(r.id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", checks().len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed {failed:?}");
        ExitCode::FAILURE
    }
}
