mod common;

use common::constant_paths;
use decum_core::eval::Controller;
use decum_core::mbg::{load_factor, price_with, DeathSchedule, MbgPricingConfig};
use decum_core::mortality::DeathProbPaths;
use decum_core::tontine::ScenarioConfig;
use proptest::prelude::*;

fn config(n: usize) -> MbgPricingConfig {
    MbgPricingConfig {
        n_price_paths: n,
        ..MbgPricingConfig::default()
    }
}

proptest! {
    #[test]
    fn fixed_schedule_closed_form(deaths in proptest::collection::vec(proptest::option::of(1usize..=30), 1..40)) {
        let n = deaths.len();
        let scen = ScenarioConfig::validation();
        let paths = constant_paths(n, 30, &["stock", "bond"], &[1.05, 1.02]);
        let rule = Controller::Constant { q: 40.0, weights: vec![0.5, 0.5] };
        let res = price_with(&rule, &paths, &scen, &config(n), &DeathSchedule::Fixed(deaths.clone())).unwrap();
        for (z, d) in res.payouts.iter().zip(&deaths) {
            let want = d.map_or(0.0, |m| (1000.0 - 40.0 * m as f64).max(0.0));
            prop_assert_eq!(*z, want);
        }
    }
}

#[test]
fn certain_death_in_first_year() {
    let scen = ScenarioConfig::validation();
    let paths = constant_paths(16, 30, &["stock", "bond"], &[1.0, 1.0])
        .attach_mortality(DeathProbPaths::replicate(&[0.999_999_999; 30], 16, 65, 2022))
        .unwrap();
    let rule = Controller::Constant { q: 40.0, weights: vec![0.0, 1.0] };
    let res = price_with(&rule, &paths, &scen, &config(16), &DeathSchedule::Bernoulli).unwrap();
    assert!(res.death_index.iter().all(|d| *d == Some(1)));
    assert!(res.payouts.iter().all(|z| *z == 960.0));
    assert_eq!(res.quote.trigger_rate, 1.0);
}

#[test]
fn bernoulli_without_mortality_is_rejected() {
    let scen = ScenarioConfig::validation();
    let paths = constant_paths(4, 30, &["stock", "bond"], &[1.0, 1.0]);
    let rule = Controller::Constant { q: 40.0, weights: vec![0.0, 1.0] };
    assert!(price_with(&rule, &paths, &scen, &config(4), &DeathSchedule::Bernoulli).is_err());
}

#[test]
fn load_identity() {
    let f = load_factor(70.69, 758.28, 0.5, 1000.0);
    assert!((f - 0.44983).abs() < 1e-12);
    assert_eq!((f * 100.0).round() / 100.0, 0.45);
}
