//! Every acceptance criterion at its stated tolerance, one line each.
//!
//! Runs as a plain binary (`harness = false`). A failure listed in
//! `KNOWN_DEVIATIONS` is printed as a FAIL and explained, but does not fail
//! the target; any other failure does.

use std::process::ExitCode;

use stokpp::acceptance::{self, Status, CRITERIA, KNOWN_DEVIATIONS};
use stokpp::Runner;

const SEED: u64 = 1;

fn main() -> ExitCode {
    let runner = Runner::new(None).expect("thread pool");
    let ids: Vec<u8> = CRITERIA.iter().map(|c| c.id).collect();
    println!("acceptance suite: {} criteria, seed {SEED}", ids.len());
    let results = acceptance::run_suite(&ids, SEED, &runner, |r| println!("{}", r.line()));

    let known = |id: u8| KNOWN_DEVIATIONS.iter().find(|(k, _)| *k == id).map(|(_, why)| *why);
    let mut unexpected = Vec::new();
    for r in &results {
        match (r.status, known(r.id)) {
            (Status::Fail, Some(why)) => println!("  known deviation [{}]: {why}", r.id),
            (Status::Fail, None) => unexpected.push(r.id),
            (_, Some(_)) => println!("  note [{}]: listed as a known deviation but passed", r.id),
            _ => {}
        }
    }
    let passed = results.iter().filter(|r| r.status == Status::Pass).count();
    let warned = results.iter().filter(|r| r.status == Status::Warn).count();
    let failed = results.len() - passed - warned;
    println!("{passed} passed, {warned} warned, {failed} failed");
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {unexpected:?}");
        ExitCode::FAILURE
    }
}
