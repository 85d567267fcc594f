#[path = "support/mode_oracle.rs"]
mod mode_oracle;

use degenop::{Complex64 as C, ModelParams};
use mode_oracle::compare;

#[test]
fn decoupled_solve_matches_monolithic_system_for_the_laplacian() {
    let gap = compare(ModelParams::new(vec![0.0], 0.0, 0.0, 0.0, 2.0).unwrap(), C::new(1.0, 0.0));
    assert!(gap <= 1e-8, "gap {gap:e}");
}

#[test]
fn decoupled_solve_matches_monolithic_system_with_mixed_term() {
    let gap = compare(ModelParams::new(vec![0.4], 0.5, 1.0, 0.0, 2.0).unwrap(), C::new(0.5, 2.0));
    assert!(gap <= 1e-8, "gap {gap:e}");
}
