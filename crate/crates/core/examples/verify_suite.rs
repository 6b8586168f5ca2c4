//! Runs the property suite and prints one line per check.

use geoscatter::training_bench::verify_suite;

fn main() -> geoscatter::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let report = verify_suite(seed)?;
    for c in &report.checks {
        println!(
            "{:<6} {:<36} measured {:>12.3e}  threshold {:>9.1e} ({:?})  {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.measured,
            c.threshold,
            c.expect,
            c.detail
        );
    }
    println!("all passed: {}", report.all_passed);
    Ok(())
}
