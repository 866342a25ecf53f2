//! Every acceptance criterion at its stated tolerance, one PASS/FAIL line each.
//! Runs without the libtest harness so the verdicts always reach the log.

use std::process::ExitCode;
use std::time::Instant;

use padic_heat::verify::{run_check, VerifyOptions, CHECK_NAMES};

fn main() -> ExitCode {
    let opts = VerifyOptions::default();
    let mut failed = Vec::new();
    for (i, name) in CHECK_NAMES.iter().enumerate() {
        let start = Instant::now();
        let r = match run_check(name, &opts) {
            Ok(r) => r,
            Err(e) => {
                println!("FAIL criterion {} {name}: error {e}", i + 1);
                failed.push(name.to_string());
                continue;
            }
        };
        println!(
            "{} criterion {} {name}: metric {:.3e} (threshold {:.1e}) [{:.1}s]",
            if r.passed { "PASS" } else { "FAIL" },
            i + 1,
            r.metric,
            r.threshold,
            start.elapsed().as_secs_f64()
        );
        for line in r.detail.lines() {
            println!("    {line}");
        }
        if !r.passed {
            failed.push(name.to_string());
        }
    }

    // A certificate missing one class must break normalization.
    let faulty = VerifyOptions {
        corrupt_certificate: true,
        ..VerifyOptions::default()
    };
    match run_check("normalization", &faulty) {
        Ok(r) if !r.passed && r.metric > 1e-3 => {
            println!("PASS fault injection: corrupted certificate gives |mass - 1| = {:.3e}", r.metric)
        }
        other => {
            println!("FAIL fault injection: corrupted certificate went undetected: {other:?}");
            failed.push("fault_injection".into());
        }
    }

    if failed.is_empty() {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed {failed:?}");
        ExitCode::FAILURE
    }
}
