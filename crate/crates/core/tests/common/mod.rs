#![allow(dead_code)]

use decum_core::market::PathSet;
use decum_core::mortality::DeathProbPaths;
use decum_core::policy::{init_params, Activation, Policy, PolicySpec};
use decum_core::rng::{self, Stream};
use decum_core::tontine::ScenarioConfig;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn constant_paths(n: usize, m: usize, names: &[&str], gross: &[f64]) -> PathSet {
    let mut g = Vec::with_capacity(n * m * gross.len());
    for _ in 0..n * m {
        g.extend_from_slice(gross);
    }
    PathSet::new(
        n,
        m,
        names.iter().map(|s| s.to_string()).collect(),
        g,
        vec![1.0; n * (m + 1)],
        0,
        "constant".into(),
    )
    .unwrap()
}

/// A small random problem: up to 8 paths, 3 periods and 4-unit hidden layers.
pub struct Instance {
    pub scen: ScenarioConfig,
    pub policy: Policy,
    pub paths: PathSet,
    pub gamma: f64,
    pub alpha: f64,
    pub epsilon: f64,
}

pub fn random_instance(seed: u64) -> Instance {
    let mut r = rng::stream(seed, Stream::Init, 99);
    let m = r.random_range(1..=3usize);
    let n = r.random_range(1..=8usize);
    let k = r.random_range(2..=3usize);
    let layers = r.random_range(1..=2usize);
    let hidden: Vec<usize> = (0..layers).map(|_| r.random_range(1..=4usize)).collect();
    let scen = ScenarioConfig {
        w0: r.random_range(60.0..400.0),
        t: m as f64,
        m,
        asset_count: k,
        ..ScenarioConfig::validation()
    };
    let spec = PolicySpec::new(&hidden, Activation::Tanh, k, scen.w0, scen.t).unwrap();
    let mut params = init_params(&spec, seed, 0.5).unwrap();
    let scale = r.random_range(1.0..4.0);
    params.theta_q.iter_mut().for_each(|v| *v = *v * scale + r.random_range(-0.3..0.3));
    params.theta_p.iter_mut().for_each(|v| *v = *v * scale + r.random_range(-0.3..0.3));
    let gross: Vec<f64> = (0..n * m * k)
        .map(|_| (0.03 + 0.2 * r.sample::<f64, _>(StandardNormal)).exp())
        .collect();
    let deltas: Vec<f64> = (0..n * m).map(|_| r.random_range(0.005..0.2)).collect();
    let names = (0..k).map(|a| format!("a{a}")).collect();
    let paths = PathSet::new(n, m, names, gross, vec![1.0; n * (m + 1)], seed, "random".into())
        .unwrap()
        .attach_mortality(DeathProbPaths {
            delta: deltas,
            k_paths: n,
            horizon: m,
            x0: 65,
            y0: 2022,
            clamped: 0,
        })
        .unwrap();
    params.w_star = scen.w0 * r.random_range(0.2..1.5);
    Instance {
        scen,
        policy: Policy { spec, params },
        paths,
        gamma: r.random_range(0.1..2.0),
        alpha: r.random_range(0.05..0.5),
        epsilon: -1e-4,
    }
}
