//! Acceptance suite. Runs every criterion sequentially (criterion 1 is timed)
//! and prints one PASS/FAIL line each. Set `ACCEPTANCE_ONLY=6,7` to run a subset.

use std::process::ExitCode;

use infobridge::suite::{run_criterion, SuiteOptions, CRITERIA};

fn main() -> ExitCode {
    let ids: Vec<u32> = match std::env::var("ACCEPTANCE_ONLY") {
        Ok(list) => list.split(',').filter_map(|s| s.trim().parse().ok()).collect(),
        Err(_) => CRITERIA.to_vec(),
    };
    let opts = SuiteOptions::default();
    let mut failed = 0;
    for id in ids {
        match run_criterion(id, &opts) {
            Ok(result) => {
                let verdict = if result.pass { "PASS" } else { "FAIL" };
                println!("criterion {:>2} {verdict} ({}, {:.1} s)", id, result.title, result.seconds);
                for r in &result.reports {
                    println!(
                        "    {} {}: statistic {:.4e} threshold {:.4e} n {} retries {} {}",
                        if r.pass { "ok  " } else { "FAIL" },
                        r.name,
                        r.statistic,
                        r.threshold,
                        r.n,
                        r.retries,
                        r.detail
                    );
                }
                if !result.pass {
                    failed += 1;
                }
            }
            Err(e) => {
                println!("criterion {:>2} FAIL (error: {e})", id);
                failed += 1;
            }
        }
    }
    if failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    }
}
