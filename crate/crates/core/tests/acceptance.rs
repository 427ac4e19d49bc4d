//! Acceptance suite: one line per criterion, every criterion must pass.

use std::process::ExitCode;

use clonesim::verify::{run_criterion, VerifyOptions, CRITERIA};

fn main() -> ExitCode {
    let opts = VerifyOptions::default();
    let mut failed = Vec::new();
    for (id, _, _) in CRITERIA {
        let result = run_criterion(id, &opts);
        println!("{}", result.line());
        if !result.passed {
            failed.push(result.name);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", CRITERIA.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria: {}", failed.join(", "));
        ExitCode::FAILURE
    }
}
