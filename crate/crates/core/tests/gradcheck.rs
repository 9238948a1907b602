mod common;

use common::gradcheck::{loss_checks, objective_check, op_checks, GradCheck, CASES};

fn assert_all(checks: Vec<GradCheck>) {
    let mut failed = Vec::new();
    for c in &checks {
        assert_eq!(c.cases, CASES, "{}", c.name);
        println!("{:<28} max rel err {:.3e}", c.name, c.max_rel_err);
        if !c.passed() {
            failed.push(format!("{} ({:.3e})", c.name, c.max_rel_err));
        }
    }
    assert!(failed.is_empty(), "gradient mismatch: {failed:?}");
}

#[test]
fn every_tape_op_matches_finite_differences() {
    assert_all(op_checks());
}

#[test]
fn loss_terms_match_finite_differences() {
    assert_all(loss_checks());
}

#[test]
fn composite_objective_matches_finite_differences() {
    assert_all(vec![objective_check(CASES)]);
}
