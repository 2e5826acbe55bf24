//! Withdrawal and allocation networks.
//!
//! Both networks read the same two features, wealth scaled by `W0` and clipped
//! to [`PolicySpec::wealth_clip`], and time scaled to `[0, 1]`. The withdrawal
//! head maps its scalar output `z` to
//! `q_min + max(min(q_max, W) - q_min, 0) * sigmoid(z)`; the allocation head is
//! a softmax over one logit per asset.

mod net;
mod path;

pub use net::{Activation, NetSpec};
pub use path::{backward_path, path_objective, run_path, PathTape};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mortality::logistic;
use crate::rng::{self, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub q_net: NetSpec,
    pub p_net: NetSpec,
    /// Wealth feature is `clamp(W / wealth_scale, clip.0, clip.1)`.
    pub wealth_scale: f64,
    pub wealth_clip: (f64, f64),
    /// Time feature is `t / horizon`.
    pub horizon: f64,
}

impl PolicySpec {
    pub fn new(hidden: &[usize], activation: Activation, asset_count: usize, w0: f64, horizon: f64) -> Result<Self> {
        if asset_count < 1 {
            return Err(Error::Spec("allocation head needs at least one asset".into()));
        }
        let spec = Self {
            q_net: NetSpec::new(2, hidden.to_vec(), activation, 1)?,
            p_net: NetSpec::new(2, hidden.to_vec(), activation, asset_count)?,
            wealth_scale: w0,
            wealth_clip: (-2.0, 5.0),
            horizon,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Two hidden layers of eight tanh units.
    pub fn default_for(asset_count: usize, w0: f64, horizon: f64) -> Result<Self> {
        Self::new(&[8, 8], Activation::Tanh, asset_count, w0, horizon)
    }

    pub fn validate(&self) -> Result<()> {
        self.q_net.validate()?;
        self.p_net.validate()?;
        if self.q_net.input_dim != 2 || self.p_net.input_dim != 2 || self.q_net.output_dim != 1 {
            return Err(Error::Spec("networks take 2 features; the withdrawal head has 1 output".into()));
        }
        if !(self.wealth_scale > 0.0 && self.horizon > 0.0 && self.wealth_clip.0 < self.wealth_clip.1) {
            return Err(Error::Spec("feature scaling must be positive with clip.0 < clip.1".into()));
        }
        Ok(())
    }

    pub fn asset_count(&self) -> usize {
        self.p_net.output_dim
    }

    /// Features and the derivative of the wealth feature with respect to
    /// wealth (zero when clipped).
    #[inline]
    pub fn features(&self, wealth: f64, t: f64) -> ([f64; 2], f64) {
        let raw = wealth / self.wealth_scale;
        let (lo, hi) = self.wealth_clip;
        let (x, d) = if raw < lo {
            (lo, 0.0)
        } else if raw > hi {
            (hi, 0.0)
        } else {
            (raw, 1.0 / self.wealth_scale)
        };
        ([x, t / self.horizon], d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub theta_q: Vec<f64>,
    pub theta_p: Vec<f64>,
    pub w_star: f64,
}

impl PolicyParams {
    pub fn zeros_like(&self) -> Self {
        Self {
            theta_q: vec![0.0; self.theta_q.len()],
            theta_p: vec![0.0; self.theta_p.len()],
            w_star: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.theta_q.len() + self.theta_p.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// All parameters as one vector: `theta_q`, `theta_p`, `w_star`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.extend(&self.theta_q);
        v.extend(&self.theta_p);
        v.push(self.w_star);
        v
    }

    pub fn unflatten_into(&mut self, flat: &[f64]) {
        let (nq, np) = (self.theta_q.len(), self.theta_p.len());
        self.theta_q.copy_from_slice(&flat[..nq]);
        self.theta_p.copy_from_slice(&flat[nq..nq + np]);
        self.w_star = flat[nq + np];
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.theta_q.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient { block: "theta_q" });
        }
        if self.theta_p.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient { block: "theta_p" });
        }
        if !self.w_star.is_finite() {
            return Err(Error::NonFiniteGradient { block: "w_star" });
        }
        Ok(())
    }
}

/// Gradients share the parameter layout.
pub type Gradients = PolicyParams;

/// A network specification together with its parameters; the unit persisted
/// as a JSON snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub spec: PolicySpec,
    pub params: PolicyParams,
}

/// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` weights, zero biases, and
/// `w_star = w_star_fraction * wealth_scale`.
pub fn init_params(spec: &PolicySpec, seed: u64, w_star_fraction: f64) -> Result<PolicyParams> {
    spec.validate()?;
    let draw = |net: &NetSpec, stream: u64| -> Vec<f64> {
        let mut rng = rng::stream(seed, Stream::Init, stream);
        net.fan_in_per_param()
            .into_iter()
            .map(|(fan_in, is_weight)| {
                if is_weight {
                    let r = 1.0 / (fan_in as f64).sqrt();
                    rng.random_range(-r..=r)
                } else {
                    0.0
                }
            })
            .collect()
    };
    Ok(PolicyParams {
        theta_q: draw(&spec.q_net, 0),
        theta_p: draw(&spec.p_net, 1),
        w_star: w_star_fraction * spec.wealth_scale,
    })
}

impl Policy {
    pub fn init(spec: PolicySpec, seed: u64) -> Result<Self> {
        let params = init_params(&spec, seed, 0.5)?;
        Ok(Self { spec, params })
    }

    /// Withdrawal at decision time `t` given pre-withdrawal wealth.
    pub fn forward_q(&self, wealth_pre: f64, t: f64, q_min: f64, q_max: f64) -> f64 {
        forward_q(&self.spec, &self.params.theta_q, wealth_pre, t, q_min, q_max)
    }

    pub fn forward_p(&self, wealth_post: f64, t: f64) -> Vec<f64> {
        forward_p(&self.spec, &self.params.theta_p, wealth_post, t)
    }
}

#[inline]
pub(crate) fn q_from_z(z: f64, wealth_pre: f64, q_min: f64, q_max: f64) -> f64 {
    q_min + (q_max.min(wealth_pre) - q_min).max(0.0) * logistic(z)
}

pub fn forward_q(spec: &PolicySpec, theta_q: &[f64], wealth_pre: f64, t: f64, q_min: f64, q_max: f64) -> f64 {
    let (x, _) = spec.features(wealth_pre, t);
    let mut cache = vec![0.0; spec.q_net.cache_len()];
    spec.q_net.forward(theta_q, &x, &mut cache);
    q_from_z(cache[cache.len() - 1], wealth_pre, q_min, q_max)
}

pub fn forward_p(spec: &PolicySpec, theta_p: &[f64], wealth_post: f64, t: f64) -> Vec<f64> {
    let (x, _) = spec.features(wealth_post, t);
    let mut cache = vec![0.0; spec.p_net.cache_len()];
    spec.p_net.forward(theta_p, &x, &mut cache);
    let k = spec.p_net.output_dim;
    let mut p = cache[cache.len() - k..].to_vec();
    softmax_in_place(&mut p);
    p
}

/// Numerically stable softmax, renormalised so the entries sum to 1.
#[inline]
pub fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}
