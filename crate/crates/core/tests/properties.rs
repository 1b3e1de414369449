use opcraft::harness::properties::{self, PropertyOutcome};

fn assert_passes(p: PropertyOutcome, min_cases: usize) {
    assert!(p.cases >= min_cases, "{}: only {} cases", p.name, p.cases);
    assert!(
        p.passed(),
        "{}: {} of {} failed: {:?}",
        p.name,
        p.failed,
        p.cases,
        p.examples
    );
}

#[test]
fn backchain_soundness_on_random_micro_instances() {
    assert_passes(properties::backchain_soundness(200, 0), 200);
}

#[test]
fn backchain_matches_exhaustive_search_on_short_demos() {
    assert_passes(properties::coverage_oracle(200, 0), 200);
}

#[test]
fn hill_climbing_objective_strictly_decreases() {
    assert_passes(properties::hill_climb_monotone(50, 0), 50);
}

#[test]
fn successor_semantics_on_random_pairs() {
    assert_passes(properties::successor_semantics(1000, 0), 1000);
}

#[test]
fn every_generated_demo_replays() {
    assert_passes(properties::demo_replay(50, 0), 200);
}

#[test]
fn generator_recovers_constant_parameters() {
    assert_passes(properties::sampler_mean_recovery(20, 0), 20);
}

#[test]
fn repeated_experiments_give_identical_reports() {
    assert_passes(properties::deterministic_reports("cluttered1d", 0), 2);
}

#[test]
fn suites_hold_for_other_seeds() {
    for seed in [1, 2] {
        assert_passes(properties::backchain_soundness(100, seed), 100);
        assert_passes(properties::coverage_oracle(100, seed), 100);
        assert_passes(properties::successor_semantics(500, seed), 500);
    }
}
