//! Empirical EW-CVaR objective, Adam training of the control networks and
//! the gamma sweep that traces the efficient frontier.

use std::io::Write;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{check_dims, empirical_var_cvar, rollout, Controller};
use crate::market::PathSet;
use crate::policy::{backward_path, init_params, path_objective, run_path, Gradients, PathTape, Policy, PolicySpec};
use crate::rng::{self, Stream};
use crate::tontine::ScenarioConfig;

/// Paths per work unit in gradient reductions; fixes the summation order.
const CHUNK: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub n_train_paths: usize,
    pub minibatch_size: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    /// Fraction of iterations after which the rate is multiplied by
    /// `decay_factor`.
    #[serde(default = "default_decay_at")]
    pub decay_at: f64,
    #[serde(default = "default_decay_factor")]
    pub decay_factor: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps_adam")]
    pub eps_adam: f64,
    #[serde(default)]
    pub seed: u64,
    /// Overrides of the scenario values.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default = "default_hidden")]
    pub hidden_layers: Vec<usize>,
    /// Initial `W*` as a multiple of `W0`.
    #[serde(default = "default_w_star_fraction")]
    pub w_star_fraction: f64,
}

fn default_decay_at() -> f64 {
    0.8
}
fn default_decay_factor() -> f64 {
    0.1
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps_adam() -> f64 {
    1e-8
}
fn default_hidden() -> Vec<usize> {
    vec![8, 8]
}
fn default_w_star_fraction() -> f64 {
    0.5
}

impl Default for TrainConfig {
    /// Desk scale: 4096 training paths.
    fn default() -> Self {
        Self {
            n_train_paths: 1 << 12,
            minibatch_size: 512,
            iterations: 3000,
            learning_rate: 0.01,
            decay_at: default_decay_at(),
            decay_factor: default_decay_factor(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps_adam: default_eps_adam(),
            seed: 1,
            gamma: None,
            alpha: None,
            epsilon: None,
            hidden_layers: default_hidden(),
            w_star_fraction: default_w_star_fraction(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, msg: String| Err(Error::Validation(format!("train.{field}: {msg}")));
        if self.n_train_paths == 0 {
            return fail("n_train_paths", "must be positive".into());
        }
        if self.minibatch_size == 0 || self.minibatch_size > self.n_train_paths {
            return fail(
                "minibatch_size",
                format!("{} must be in 1..={}", self.minibatch_size, self.n_train_paths),
            );
        }
        if self.iterations == 0 {
            return fail("iterations", "must be at least 1".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate", format!("{} must be nonnegative", self.learning_rate));
        }
        if !(0.0..=1.0).contains(&self.decay_at) || !(self.decay_factor >= 0.0) {
            return fail("decay_at", "need decay_at in [0, 1] and decay_factor >= 0".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps_adam > 0.0) {
            return fail("beta1", "need beta1, beta2 in [0, 1) and eps_adam > 0".into());
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0 && a <= 1.0) {
                return fail("alpha", format!("{a} outside (0, 1]"));
            }
        }
        Ok(())
    }

    /// `(gamma, alpha, epsilon)` after applying overrides to `scen`.
    pub fn weights(&self, scen: &ScenarioConfig) -> (f64, f64, f64) {
        (
            self.gamma.unwrap_or(scen.gamma),
            self.alpha.unwrap_or(scen.alpha),
            self.epsilon.unwrap_or(scen.epsilon),
        )
    }

    pub fn learning_rate_at(&self, iteration: usize) -> f64 {
        if (iteration as f64) < self.decay_at * self.iterations as f64 {
            self.learning_rate
        } else {
            self.learning_rate * self.decay_factor
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveValue {
    pub mean: f64,
    pub per_path: Vec<f64>,
    pub terminal_wealth: Vec<f64>,
    pub sum_q: Vec<f64>,
}

/// Empirical objective `mean_n [sum q + gamma (W* + min(W_T - W*, 0) / alpha) + epsilon W_T]`.
pub fn objective(
    policy: &Policy,
    paths: &PathSet,
    scen: &ScenarioConfig,
    gamma: f64,
    alpha: f64,
    epsilon: f64,
) -> Result<ObjectiveValue> {
    check_dims(paths, scen, policy.spec.asset_count())?;
    if paths.n_paths == 0 {
        return Err(Error::Dimension("objective over an empty path set".into()));
    }
    let mk = scen.m * paths.n_assets;
    let rows: Vec<(f64, f64, f64)> = (0..paths.n_paths)
        .into_par_iter()
        .map_init(
            || PathTape::new(&policy.spec, scen.m),
            |tape, n| {
                run_path(&policy.spec, &policy.params, scen, &paths.gross[n * mk..(n + 1) * mk], paths.delta_path(n), tape);
                let j = path_objective(tape.sum_q, tape.terminal_wealth, policy.params.w_star, gamma, alpha, epsilon);
                (j, tape.terminal_wealth, tape.sum_q)
            },
        )
        .collect();
    let per_path: Vec<f64> = rows.iter().map(|r| r.0).collect();
    Ok(ObjectiveValue {
        mean: per_path.iter().sum::<f64>() / paths.n_paths as f64,
        per_path,
        terminal_wealth: rows.iter().map(|r| r.1).collect(),
        sum_q: rows.iter().map(|r| r.2).collect(),
    })
}

/// Mean objective and its gradient over the paths in `batch`.
#[allow(clippy::too_many_arguments)]
pub fn objective_and_gradient(
    policy: &Policy,
    paths: &PathSet,
    scen: &ScenarioConfig,
    batch: &[usize],
    gamma: f64,
    alpha: f64,
    epsilon: f64,
) -> Result<(f64, Gradients)> {
    check_dims(paths, scen, policy.spec.asset_count())?;
    if batch.is_empty() {
        return Err(Error::Dimension("empty minibatch".into()));
    }
    let mk = scen.m * paths.n_assets;
    let weight = 1.0 / batch.len() as f64;
    let partial: Vec<(f64, Gradients)> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut tape = PathTape::new(&policy.spec, scen.m);
            let mut grad = policy.params.zeros_like();
            let mut scratch = Vec::new();
            let mut value = 0.0;
            for &n in chunk {
                let gross = &paths.gross[n * mk..(n + 1) * mk];
                run_path(&policy.spec, &policy.params, scen, gross, paths.delta_path(n), &mut tape);
                value += path_objective(tape.sum_q, tape.terminal_wealth, policy.params.w_star, gamma, alpha, epsilon);
                backward_path(
                    &policy.spec,
                    &policy.params,
                    scen,
                    gross,
                    &tape,
                    gamma,
                    alpha,
                    epsilon,
                    weight,
                    &mut grad,
                    &mut scratch,
                );
            }
            (value, grad)
        })
        .collect();
    let mut total = 0.0;
    let mut grad = policy.params.zeros_like();
    for (v, g) in partial {
        total += v;
        grad.theta_q.iter_mut().zip(&g.theta_q).for_each(|(a, b)| *a += b);
        grad.theta_p.iter_mut().zip(&g.theta_p).for_each(|(a, b)| *a += b);
        grad.w_star += g.w_star;
    }
    Ok((total * weight, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeldOutMetrics {
    pub ew_annualized: f64,
    pub cvar: f64,
    pub var: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub scenario: ScenarioConfig,
    pub gamma: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub train_paths_sha256: String,
    /// Minibatch objective before each update.
    pub objective_trace: Vec<f64>,
    pub final_train_objective: f64,
    pub held_out: Option<HeldOutMetrics>,
}

/// Ascends the objective with Adam on `(theta_q, theta_p, W*)`. `W*` is
/// stepped in units of the wealth scale. Minibatches are drawn without
/// replacement from the first `n_train_paths` paths.
pub fn train(
    config: &TrainConfig,
    scen: &ScenarioConfig,
    paths: &PathSet,
    eval_paths: Option<&PathSet>,
) -> Result<(Policy, TrainReport)> {
    config.validate()?;
    scen.validate()?;
    if paths.n_paths < config.n_train_paths {
        return Err(Error::Dimension(format!(
            "{} training paths requested, path set has {}",
            config.n_train_paths, paths.n_paths
        )));
    }
    let spec = PolicySpec::new(
        &config.hidden_layers,
        Default::default(),
        scen.asset_count,
        scen.w0,
        scen.t,
    )?;
    let params = init_params(&spec, config.seed, config.w_star_fraction)?;
    let mut policy = Policy { spec, params };
    train_from(config, scen, paths, eval_paths, &mut policy)
}

/// As [`train`], starting from the parameters already in `policy`.
pub fn train_from(
    config: &TrainConfig,
    scen: &ScenarioConfig,
    paths: &PathSet,
    eval_paths: Option<&PathSet>,
    policy: &mut Policy,
) -> Result<(Policy, TrainReport)> {
    config.validate()?;
    check_dims(paths, scen, policy.spec.asset_count())?;
    let (gamma, alpha, epsilon) = config.weights(scen);
    let dim = policy.params.len();
    let mut theta = policy.params.flatten();
    let mut m1 = vec![0.0; dim];
    let mut m2 = vec![0.0; dim];
    let w_scale = policy.spec.wealth_scale;
    let mut trace = Vec::with_capacity(config.iterations);
    let full = config.minibatch_size == config.n_train_paths;
    let all: Vec<usize> = (0..config.n_train_paths).collect();

    for it in 0..config.iterations {
        let batch: Vec<usize> = if full {
            all.clone()
        } else {
            let mut r = rng::stream(config.seed, Stream::Minibatch, it as u64);
            let mut b = sample(&mut r, config.n_train_paths, config.minibatch_size).into_vec();
            b.sort_unstable();
            b
        };
        let (value, grad) = objective_and_gradient(policy, paths, scen, &batch, gamma, alpha, epsilon)?;
        if !value.is_finite() {
            return Err(Error::Training { iteration: it, value });
        }
        grad.check_finite()?;
        trace.push(value);

        let g = grad.flatten();
        let lr = config.learning_rate_at(it);
        let b1t = 1.0 - config.beta1.powi(it as i32 + 1);
        let b2t = 1.0 - config.beta2.powi(it as i32 + 1);
        for i in 0..dim {
            m1[i] = config.beta1 * m1[i] + (1.0 - config.beta1) * g[i];
            m2[i] = config.beta2 * m2[i] + (1.0 - config.beta2) * g[i] * g[i];
            let step = lr * (m1[i] / b1t) / ((m2[i] / b2t).sqrt() + config.eps_adam);
            theta[i] += if i + 1 == dim { step * w_scale } else { step };
        }
        policy.params.unflatten_into(&theta);
    }

    let train_set = paths.slice_paths(0..config.n_train_paths)?;
    let final_train_objective = objective(policy, &train_set, scen, gamma, alpha, epsilon)?.mean;
    if !final_train_objective.is_finite() {
        return Err(Error::Training {
            iteration: config.iterations,
            value: final_train_objective,
        });
    }
    let held_out = eval_paths
        .map(|ep| held_out_metrics(policy, ep, scen, gamma, alpha, epsilon))
        .transpose()?;
    let report = TrainReport {
        config: config.clone(),
        scenario: scen.clone(),
        gamma,
        alpha,
        epsilon,
        train_paths_sha256: paths.content_hash(),
        objective_trace: trace,
        final_train_objective,
        held_out,
    };
    Ok((policy.clone(), report))
}

pub fn held_out_metrics(
    policy: &Policy,
    paths: &PathSet,
    scen: &ScenarioConfig,
    gamma: f64,
    alpha: f64,
    epsilon: f64,
) -> Result<HeldOutMetrics> {
    let r = rollout(&Controller::Neural(policy), paths, scen)?;
    let (var, cvar) = empirical_var_cvar(&r.terminal_wealth, alpha)?;
    let obj = objective(policy, paths, scen, gamma, alpha, epsilon)?;
    Ok(HeldOutMetrics {
        ew_annualized: r.ew_annualized(scen.t),
        cvar,
        var,
        objective: obj.mean,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub gamma: f64,
    pub ew_annualized: f64,
    pub cvar_alpha: f64,
    pub w_star: f64,
    /// Name of the persisted policy snapshot.
    pub params_ref: String,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    /// Sorted by CVaR.
    pub points: Vec<FrontierPoint>,
    pub policies: Vec<(f64, Policy, TrainReport)>,
    pub failures: Vec<(f64, String)>,
}

pub fn policy_ref(gamma: f64) -> String {
    format!("policy_gamma_{gamma}.json")
}

/// Trains one policy per `gamma` on `train_paths` and measures it on
/// `eval_paths`. A failed gamma is recorded and the sweep continues.
pub fn sweep_frontier(
    gammas: &[f64],
    config: &TrainConfig,
    scen: &ScenarioConfig,
    train_paths: &PathSet,
    eval_paths: &PathSet,
) -> Result<SweepOutcome> {
    if train_paths.seed == eval_paths.seed && train_paths.content_hash() == eval_paths.content_hash() {
        return Err(Error::Validation("training and evaluation paths must come from different seeds".into()));
    }
    let mut out = SweepOutcome {
        points: Vec::new(),
        policies: Vec::new(),
        failures: Vec::new(),
    };
    for &gamma in gammas {
        let cfg = TrainConfig {
            gamma: Some(gamma),
            ..config.clone()
        };
        match train(&cfg, scen, train_paths, Some(eval_paths)) {
            Ok((policy, report)) => {
                let h = report.held_out.as_ref().expect("held-out metrics requested");
                out.points.push(FrontierPoint {
                    gamma,
                    ew_annualized: h.ew_annualized,
                    cvar_alpha: h.cvar,
                    w_star: policy.params.w_star,
                    params_ref: policy_ref(gamma),
                });
                out.policies.push((gamma, policy, report));
            }
            Err(e) => out.failures.push((gamma, e.to_string())),
        }
    }
    out.points.sort_by(|a, b| a.cvar_alpha.total_cmp(&b.cvar_alpha));
    Ok(out)
}

pub fn write_frontier_csv(points: &[FrontierPoint], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["gamma", "ew_annualized", "cvar", "w_star"])?;
    for p in points {
        w.write_record([p.gamma, p.ew_annualized, p.cvar_alpha, p.w_star].map(|v| format!("{v}")))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{simulate_kou, KouMarket};

    fn one_period() -> ScenarioConfig {
        ScenarioConfig {
            w0: 100.0,
            t: 1.0,
            m: 1,
            q_min: 40.0,
            q_max: 40.0,
            varrho: 0.0,
            mu_bc: 0.0,
            gamma: 0.0,
            epsilon: 0.0,
            ..ScenarioConfig::validation()
        }
    }

    fn unit_paths(n: usize, m: usize) -> PathSet {
        PathSet::new(n, m, vec!["s".into(), "b".into()], vec![1.0; n * m * 2], vec![1.0; n * (m + 1)], 0, String::new()).unwrap()
    }

    fn small_config(iterations: usize, lr: f64) -> TrainConfig {
        TrainConfig {
            n_train_paths: 64,
            minibatch_size: 16,
            iterations,
            learning_rate: lr,
            hidden_layers: vec![4],
            ..TrainConfig::default()
        }
    }

    #[test]
    fn single_period_hand_example() {
        let scen = one_period();
        let spec = PolicySpec::default_for(2, scen.w0, scen.t).unwrap();
        let pol = Policy::init(spec, 0).unwrap();
        let o = objective(&pol, &unit_paths(3, 1), &scen, 0.0, 0.05, 0.0).unwrap();
        assert_eq!(o.mean, 40.0);
        assert_eq!(o.terminal_wealth, vec![60.0; 3]);
    }

    #[test]
    fn gamma_term_at_terminal_wealth() {
        let scen = one_period();
        let spec = PolicySpec::default_for(2, scen.w0, scen.t).unwrap();
        let mut pol = Policy::init(spec, 0).unwrap();
        pol.params.w_star = 60.0;
        let o = objective(&pol, &unit_paths(2, 1), &scen, 2.0, 0.05, 0.0).unwrap();
        assert_eq!(o.mean, 40.0 + 2.0 * 60.0);
    }

    #[test]
    fn zero_learning_rate_leaves_params() {
        let scen = ScenarioConfig::validation();
        let ps = simulate_kou(&KouMarket::calibrated(), 30, 64, 2).unwrap();
        let cfg = small_config(5, 0.0);
        let spec = PolicySpec::new(&cfg.hidden_layers, Default::default(), 2, scen.w0, scen.t).unwrap();
        let init = init_params(&spec, cfg.seed, cfg.w_star_fraction).unwrap();
        let (pol, rep) = train(&cfg, &scen, &ps, None).unwrap();
        assert_eq!(pol.params, init);
        assert_eq!(rep.objective_trace.len(), 5);
    }

    #[test]
    fn deterministic_for_a_seed() {
        let scen = ScenarioConfig::validation();
        let ps = simulate_kou(&KouMarket::calibrated(), 30, 64, 2).unwrap();
        let cfg = small_config(20, 0.01);
        let a = train(&cfg, &scen, &ps, None).unwrap();
        let b = train(&cfg, &scen, &ps, None).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn toy_problem_reaches_upper_bound() {
        let scen = ScenarioConfig {
            q_min: 0.0,
            q_max: 1.0,
            ..one_period()
        };
        let cfg = TrainConfig {
            n_train_paths: 1,
            minibatch_size: 1,
            iterations: 2000,
            hidden_layers: vec![4],
            ..TrainConfig::default()
        };
        let (pol, _) = train(&cfg, &scen, &unit_paths(1, 1), None).unwrap();
        let q = pol.forward_q(100.0, 0.0, 0.0, 1.0);
        assert!((q - 1.0).abs() < 1e-3, "{q}");
    }

    #[test]
    fn frontier_csv_layout() {
        let pts = vec![FrontierPoint {
            gamma: 0.2,
            ew_annualized: 55.0,
            cvar_alpha: -10.0,
            w_star: 120.0,
            params_ref: policy_ref(0.2),
        }];
        let mut buf = Vec::new();
        write_frontier_csv(&pts, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "gamma,ew_annualized,cvar,w_star\n0.2,55,-10,120\n");
    }

    #[test]
    fn sweep_requires_distinct_sets() {
        let scen = ScenarioConfig::validation();
        let ps = simulate_kou(&KouMarket::calibrated(), 30, 64, 2).unwrap();
        assert!(sweep_frontier(&[1.0], &small_config(1, 0.01), &scen, &ps, &ps).is_err());
    }

    #[test]
    fn sweep_records_points_sorted() {
        let scen = ScenarioConfig::validation();
        let tr = simulate_kou(&KouMarket::calibrated(), 30, 64, 2).unwrap();
        let ev = simulate_kou(&KouMarket::calibrated(), 30, 64, 3).unwrap();
        let out = sweep_frontier(&[1.5, 0.2], &small_config(10, 0.01), &scen, &tr, &ev).unwrap();
        assert_eq!(out.points.len(), 2);
        assert!(out.failures.is_empty());
        assert!(out.points[0].cvar_alpha <= out.points[1].cvar_alpha);
        for p in &out.points {
            assert!(p.ew_annualized >= 40.0 && p.ew_annualized <= 80.0);
        }
    }
}
