mod support;

use gridmarl::market::{check_power_balance, Market};
use rand::Rng;
use support::*;

#[test]
fn worked_cases() {
    let m = Market::default();
    assert!((m.dispatch(20.0, 0.0, None).unwrap().lmp - 18.5).abs() < 1e-9);
    assert!((m.dispatch(10.0, 0.0, None).unwrap().lmp - 14.0).abs() < 1e-9);
    assert!((m.dispatch(30.0, 40.0, None).unwrap().lmp - 5.0).abs() < 1e-9);
}

#[test]
fn random_cases_match_grid_search() {
    let m = Market::default();
    let mut r = rng(2024);
    for case in 0..200 {
        let demand = r.random_range(0.0..=115.0);
        let wind = r.random_range(0.0..=50.0);
        let d = m.dispatch(demand, wind, None).unwrap();
        assert!(check_power_balance(&d, demand, 1e-9), "case {case}");
        let cost = grid_cost(&m, demand, wind).unwrap();
        assert!(
            (d.total_variable_cost - cost).abs() < 1e-3,
            "case {case}: {} vs {cost}",
            d.total_variable_cost
        );
        let (lo, hi) = grid_lmp_bracket(&m, demand, wind);
        assert!(
            d.lmp > lo - 1e-3 && d.lmp < hi + 1e-3,
            "case {case}: lmp {} outside [{lo}, {hi}]",
            d.lmp
        );
    }
}
