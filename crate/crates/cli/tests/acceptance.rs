//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use pathlab::config::VerifyConfig;
use pathlab::verify::{line, run_suite};

fn main() {
    let reports = run_suite(&VerifyConfig::default(), 0, |r, secs| {
        println!("{}", line(r, secs));
        for c in r.checks.iter().filter(|c| !c.passed) {
            println!("    {} = {:e} (needs {} {:e})", c.name, c.value, c.comparison, c.threshold);
        }
        for n in &r.notes {
            println!("    {n}");
        }
    })
    .expect("suite runs");
    let failed = reports.iter().filter(|r| !r.passed).count();
    println!("{} of {} criteria passed", reports.len() - failed, reports.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
