//! Acceptance suite as a test target: one line per criterion, nonzero exit on any failure.
//!
//! Runs at the full resolutions; `TKRL_ACCEPT_LEVEL=quick` selects the quick level.

use std::process::ExitCode;
use std::time::Instant;

use lab_cli::accept::{acceptance_suite_with, tap_line, Level};

fn main() -> ExitCode {
    let level: Level = match std::env::var("TKRL_ACCEPT_LEVEL") {
        Ok(s) => match s.parse() {
            Ok(l) => l,
            Err(e) => {
                eprintln!("{e}");
                return ExitCode::from(2);
            }
        },
        Err(_) => Level::Full,
    };
    // Libtest flags such as `--list` are not filters of this target; listing prints nothing.
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let root = tempfile::tempdir().expect("temporary output root");
    let start = Instant::now();
    println!("acceptance ({level:?})");
    println!("1..14");
    let table = acceptance_suite_with(level, root.path(), &(1..=14).collect::<Vec<_>>(), |r| {
        println!("{}", tap_line(r));
    });
    let failed: Vec<usize> = table.results.iter().filter(|r| !r.pass).map(|r| r.id).collect();
    println!(
        "acceptance: {} of 14 criteria pass in {:.0} s",
        14 - failed.len(),
        start.elapsed().as_secs_f64()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed: {failed:?}");
        ExitCode::FAILURE
    }
}
