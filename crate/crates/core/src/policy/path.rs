use super::{q_from_z, softmax_in_place, Gradients, PolicyParams, PolicySpec};
use crate::mortality::logistic;
use crate::tontine::{apply_credit_and_fee, effective_gain, ScenarioConfig};

/// Forward record of one path under a neural policy, reused across paths.
#[derive(Debug, Clone, Default)]
pub struct PathTape {
    pub horizon: usize,
    pub k: usize,
    /// Gross wealth `G_m` before credit and fee, `m = 0..=M`.
    pub gross_wealth: Vec<f64>,
    /// `dW(m-)/dG_m`.
    pub multiplier: Vec<f64>,
    /// Wealth after credit and fee, `m = 0..=M`; the last entry is `W_T`.
    pub wealth_pre: Vec<f64>,
    pub q: Vec<f64>,
    pub wealth_post: Vec<f64>,
    /// Allocations, `M x k`; the bond indicator on insolvent periods.
    pub p: Vec<f64>,
    sigma: Vec<f64>,
    range: Vec<f64>,
    d_range: Vec<f64>,
    dq_feature: Vec<f64>,
    dp_feature: Vec<f64>,
    q_cache: Vec<f64>,
    p_cache: Vec<f64>,
    pub sum_q: f64,
    pub terminal_wealth: f64,
    /// Smallest distance in wealth units from any kink of the recursion.
    pub kink_margin: f64,
}

impl PathTape {
    pub fn new(spec: &PolicySpec, horizon: usize) -> Self {
        let k = spec.asset_count();
        Self {
            horizon,
            k,
            gross_wealth: vec![0.0; horizon + 1],
            multiplier: vec![0.0; horizon + 1],
            wealth_pre: vec![0.0; horizon + 1],
            q: vec![0.0; horizon],
            wealth_post: vec![0.0; horizon],
            p: vec![0.0; horizon * k],
            sigma: vec![0.0; horizon],
            range: vec![0.0; horizon],
            d_range: vec![0.0; horizon],
            dq_feature: vec![0.0; horizon],
            dp_feature: vec![0.0; horizon],
            q_cache: vec![0.0; horizon * spec.q_net.cache_len()],
            p_cache: vec![0.0; horizon * spec.p_net.cache_len()],
            sum_q: 0.0,
            terminal_wealth: 0.0,
            kink_margin: f64::INFINITY,
        }
    }
}

/// Runs the account recursion on one path: credit and fee, withdrawal from the
/// withdrawal network, allocation from the allocation network, evolution over
/// the period. `gross` holds the path's `M x k` gross returns and `deltas` its
/// `M` death probabilities (no credits when absent).
pub fn run_path(
    spec: &PolicySpec,
    params: &PolicyParams,
    scen: &ScenarioConfig,
    gross: &[f64],
    deltas: Option<&[f64]>,
    tape: &mut PathTape,
) {
    let big_m = scen.m;
    let k = spec.asset_count();
    debug_assert_eq!(gross.len(), big_m * k);
    if tape.horizon != big_m || tape.k != k {
        *tape = PathTape::new(spec, big_m);
    }
    let qc = spec.q_net.cache_len();
    let pc = spec.p_net.cache_len();
    let (lo, hi) = spec.wealth_clip;
    let scale = spec.wealth_scale;
    let mut margin = f64::INFINITY;
    let clip_margin = |w: f64| {
        let x = w / scale;
        ((x - lo).abs() * scale).min((x - hi).abs() * scale)
    };

    let mut g = scen.w0;
    let mut sum_q = 0.0;
    for m in 0..=big_m {
        tape.gross_wealth[m] = g;
        let delta = if m >= 1 { deltas.map_or(0.0, |d| d[m - 1]) } else { 0.0 };
        let w_pre = apply_credit_and_fee(m, delta, g, scen.varrho);
        tape.multiplier[m] = if m >= 1 && g > 0.0 {
            (1.0 + effective_gain(m, delta, g)) * (1.0 - scen.varrho)
        } else {
            1.0
        };
        tape.wealth_pre[m] = w_pre;
        if m >= 1 {
            margin = margin.min(g.abs());
        }
        if m == big_m {
            break;
        }
        let t = m as f64 * scen.dt();

        let (x, dx) = spec.features(w_pre, t);
        margin = margin.min(clip_margin(w_pre));
        let cache = &mut tape.q_cache[m * qc..(m + 1) * qc];
        spec.q_net.forward(&params.theta_q, &x, cache);
        let z = cache[qc - 1];
        let s = logistic(z);
        let capped = scen.q_max.min(w_pre);
        let r = (capped - scen.q_min).max(0.0);
        let q = q_from_z(z, w_pre, scen.q_min, scen.q_max);
        margin = margin.min((w_pre - scen.q_max).abs()).min((w_pre - scen.q_min).abs());
        tape.sigma[m] = s;
        tape.range[m] = r;
        tape.d_range[m] = if w_pre < scen.q_max && capped - scen.q_min > 0.0 { 1.0 } else { 0.0 };
        tape.dq_feature[m] = dx;
        tape.q[m] = q;
        sum_q += q;

        let w_post = w_pre - q;
        tape.wealth_post[m] = w_post;
        margin = margin.min(w_post.abs());
        let r_m = &gross[m * k..(m + 1) * k];
        let p = &mut tape.p[m * k..(m + 1) * k];
        if w_post > 0.0 {
            let (x, dx) = spec.features(w_post, t);
            margin = margin.min(clip_margin(w_post));
            let cache = &mut tape.p_cache[m * pc..(m + 1) * pc];
            spec.p_net.forward(&params.theta_p, &x, cache);
            p.copy_from_slice(&cache[pc - k..]);
            softmax_in_place(p);
            tape.dp_feature[m] = dx;
            g = w_post * p.iter().zip(r_m).map(|(a, b)| a * b).sum::<f64>();
        } else {
            p.iter_mut().for_each(|v| *v = 0.0);
            p[scen.bond_index] = 1.0;
            tape.dp_feature[m] = 0.0;
            g = w_post * r_m[scen.bond_index] * scen.mu_bc.exp();
        }
    }
    tape.sum_q = sum_q;
    tape.terminal_wealth = tape.wealth_pre[big_m];
    tape.kink_margin = margin.min((tape.terminal_wealth - params.w_star).abs());
}

/// Path objective `sum q + gamma (W + min(W_T - W, 0) / alpha) + epsilon W_T`.
#[inline]
pub fn path_objective(sum_q: f64, terminal_wealth: f64, w_star: f64, gamma: f64, alpha: f64, epsilon: f64) -> f64 {
    sum_q + gamma * (w_star + (terminal_wealth - w_star).min(0.0) / alpha) + epsilon * terminal_wealth
}

/// Adds `weight * dJ/d(theta_q, theta_p, W)` for the path recorded in `tape`.
#[allow(clippy::too_many_arguments)]
pub fn backward_path(
    spec: &PolicySpec,
    params: &PolicyParams,
    scen: &ScenarioConfig,
    gross: &[f64],
    tape: &PathTape,
    gamma: f64,
    alpha: f64,
    epsilon: f64,
    weight: f64,
    grad: &mut Gradients,
    scratch: &mut Vec<f64>,
) {
    let big_m = scen.m;
    let k = spec.asset_count();
    let qc = spec.q_net.cache_len();
    let pc = spec.p_net.cache_len();
    let below = tape.terminal_wealth < params.w_star;
    grad.w_star += weight * gamma * (1.0 - if below { 1.0 / alpha } else { 0.0 });
    let d_wt = weight * (epsilon + if below { gamma / alpha } else { 0.0 });

    let mut d_in = [0.0; 2];
    let mut d_logits = vec![0.0; k];
    // adjoint of G_{m+1}
    let mut a_g = d_wt * tape.multiplier[big_m];
    for m in (0..big_m).rev() {
        let w_post = tape.wealth_post[m];
        let r_m = &gross[m * k..(m + 1) * k];
        let mut a_post;
        if w_post > 0.0 {
            let p = &tape.p[m * k..(m + 1) * k];
            let r_bar: f64 = p.iter().zip(r_m).map(|(a, b)| a * b).sum();
            a_post = a_g * r_bar;
            for b in 0..k {
                d_logits[b] = a_g * w_post * p[b] * (r_m[b] - r_bar);
            }
            let cache = &tape.p_cache[m * pc..(m + 1) * pc];
            spec.p_net.backward(&params.theta_p, cache, &d_logits, &mut grad.theta_p, &mut d_in, scratch);
            a_post += d_in[0] * tape.dp_feature[m];
        } else {
            a_post = a_g * r_m[scen.bond_index] * scen.mu_bc.exp();
        }
        let a_q = weight - a_post;
        let s = tape.sigma[m];
        let d_z = a_q * tape.range[m] * s * (1.0 - s);
        let mut a_pre = a_post + a_q * s * tape.d_range[m];
        if d_z != 0.0 {
            let cache = &tape.q_cache[m * qc..(m + 1) * qc];
            spec.q_net.backward(&params.theta_q, cache, &[d_z], &mut grad.theta_q, &mut d_in, scratch);
            a_pre += d_in[0] * tape.dq_feature[m];
        }
        a_g = a_pre * tape.multiplier[m];
    }
}
