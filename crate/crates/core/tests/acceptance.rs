//! Runs the ten acceptance criteria at full size and prints one line per criterion.

use calderon::suite::{run_criterion, tol, SuiteConfig, SuiteScale, CRITERIA};

const SEED: u64 = 20_240_601;

#[test]
fn acceptance() {
    let cfg = SuiteConfig::new(SEED, SuiteScale::Full);
    let mut failed = Vec::new();
    let mut total = 0.0;
    for (id, _) in CRITERIA {
        let outcome = run_criterion(id, &cfg).expect("known criterion");
        println!("{outcome}");
        for r in outcome.records.iter().filter(|r| !r.pass).take(5) {
            println!("    failing record: {}", serde_json::to_string(r).expect("serializable"));
        }
        total += outcome.elapsed_s;
        if !outcome.pass {
            failed.push(id);
        }
        match id {
            1 => assert!(outcome.elapsed_s < tol::HOLDER_RUNTIME_S),
            6 => assert!(outcome.elapsed_s < tol::AP_RUNTIME_S),
            _ => {}
        }
    }
    println!("acceptance total {total:.1}s");
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}

#[test]
fn quick_suite_is_reproducible() {
    let cfg = SuiteConfig::new(7, SuiteScale::Quick);
    for id in [2u8, 4, 10] {
        let a = run_criterion(id, &cfg).unwrap();
        let b = run_criterion(id, &cfg).unwrap();
        assert!(a.pass, "{a}");
        assert_eq!(a.records, b.records);
    }
}
