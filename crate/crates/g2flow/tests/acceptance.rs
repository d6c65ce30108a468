//! Acceptance gate: one pass/fail line per criterion.

use g2flow::verify::{run_all, VerifyOptions};

fn main() {
    let quick = std::env::args().any(|a| a == "--quick");
    let results = run_all(&VerifyOptions { quick, ..VerifyOptions::default() });
    for r in &results {
        println!("{}", r.line());
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} of {} checks passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
