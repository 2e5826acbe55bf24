//! Money-back guarantee: the death-benefit payout under a fixed policy and its
//! Monte Carlo load.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{rollout, upper_tail_mean, Controller, RolloutResult};
use crate::market::PathSet;
use crate::policy::Policy;
use crate::rng::{self, Stream};
use crate::tontine::ScenarioConfig;

/// Real value at inception of the shortfall `max(L0 - cum, 0)`, where `cum` is
/// the nominal withdrawal total and `cpi_ratio = CPI(death) / CPI_0`.
pub fn payout(l0: f64, nominal_withdrawals_cum: f64, cpi_ratio: f64) -> Result<f64> {
    if !(cpi_ratio > 0.0) {
        return Err(Error::Domain(format!("cpi ratio {cpi_ratio} must be positive")));
    }
    Ok((l0 - nominal_withdrawals_cum).max(0.0) / cpi_ratio)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MbgPricingConfig {
    pub l0: f64,
    pub alpha_g: f64,
    pub lambda: f64,
    /// Notional starting payment rate used to express the load as a rate.
    pub beta0: f64,
    pub n_price_paths: usize,
    pub seed: u64,
}

impl Default for MbgPricingConfig {
    fn default() -> Self {
        Self {
            l0: 1000.0,
            alpha_g: 0.05,
            lambda: 0.5,
            beta0: 0.05,
            n_price_paths: 1 << 12,
            seed: 3,
        }
    }
}

impl MbgPricingConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, msg: String| Err(Error::Validation(format!("pricing.{field}: {msg}")));
        if !(self.l0 > 0.0 && self.l0.is_finite()) {
            return fail("l0", format!("{} must be positive", self.l0));
        }
        if !(self.alpha_g > 0.0 && self.alpha_g < 1.0) {
            return fail("alpha_g", format!("{} outside (0, 1)", self.alpha_g));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return fail("lambda", format!("{} must be nonnegative", self.lambda));
        }
        if !self.beta0.is_finite() {
            return fail("beta0", "must be finite".into());
        }
        if self.n_price_paths == 0 {
            return fail("n_price_paths", "K must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MbgQuote {
    pub e_hat: f64,
    pub cvar_hat: f64,
    pub f_hat: f64,
    pub post_load_rate: f64,
    pub trigger_rate: f64,
}

/// `f = (E + lambda CVaR) / L0`.
pub fn load_factor(e_hat: f64, cvar_hat: f64, lambda: f64, l0: f64) -> f64 {
    (e_hat + lambda * cvar_hat) / l0
}

pub fn quote_from_payouts(payouts: &[f64], cfg: &MbgPricingConfig) -> Result<MbgQuote> {
    if payouts.is_empty() {
        return Err(Error::Validation("no payouts to summarise".into()));
    }
    let e_hat = payouts.iter().sum::<f64>() / payouts.len() as f64;
    let cvar_hat = upper_tail_mean(payouts, cfg.alpha_g)?;
    let f_hat = load_factor(e_hat, cvar_hat, cfg.lambda, cfg.l0);
    Ok(MbgQuote {
        e_hat,
        cvar_hat,
        f_hat,
        post_load_rate: (1.0 - f_hat) * cfg.beta0,
        trigger_rate: payouts.iter().filter(|&&z| z > 0.0).count() as f64 / payouts.len() as f64,
    })
}

/// How the priced member's death time is determined.
#[derive(Debug, Clone)]
pub enum DeathSchedule {
    /// One uniform per year from the death stream; death in `(t_m, t_{m+1}]`
    /// when it falls below the path's `delta_m`.
    Bernoulli,
    /// Death index `m_tau` per path (`None` survives).
    Fixed(Vec<Option<usize>>),
}

#[derive(Debug, Clone)]
pub struct MbgPricing {
    pub quote: MbgQuote,
    pub payouts: Vec<f64>,
    /// Decision index `m_tau` at whose start the death is recognised.
    pub death_index: Vec<Option<usize>>,
    pub rollout: RolloutResult,
}

/// Prices the guarantee on the first `n_price_paths` paths under a trained
/// policy with Bernoulli death draws.
pub fn price(policy: &Policy, paths: &PathSet, scen: &ScenarioConfig, cfg: &MbgPricingConfig) -> Result<MbgPricing> {
    price_with(&Controller::Neural(policy), paths, scen, cfg, &DeathSchedule::Bernoulli)
}

pub fn price_with(
    controller: &Controller,
    paths: &PathSet,
    scen: &ScenarioConfig,
    cfg: &MbgPricingConfig,
    schedule: &DeathSchedule,
) -> Result<MbgPricing> {
    cfg.validate()?;
    let k_paths = cfg.n_price_paths;
    if k_paths > paths.n_paths {
        return Err(Error::Dimension(format!(
            "{k_paths} pricing paths requested, path set has {}",
            paths.n_paths
        )));
    }
    let big_m = scen.m;
    match schedule {
        DeathSchedule::Bernoulli if paths.deltas.is_none() => {
            return Err(Error::Validation("pricing needs death probabilities on the path set".into()))
        }
        DeathSchedule::Fixed(v) if v.len() != k_paths => {
            return Err(Error::Dimension(format!("{} death indices for {k_paths} paths", v.len())))
        }
        _ => {}
    }
    let subset = paths.slice_paths(0..k_paths)?;
    let roll = rollout(controller, &subset, scen)?;

    let results: Vec<Result<(f64, Option<usize>)>> = (0..k_paths)
        .into_par_iter()
        .map(|k| {
            let q = roll.withdrawals_of(k);
            let cpi = subset.cpi_path(k);
            let death = match schedule {
                DeathSchedule::Bernoulli => {
                    let delta = subset.delta_path(k).expect("checked above");
                    let mut r = rng::stream(cfg.seed, Stream::Death, k as u64);
                    (0..big_m).find(|&m| r.random::<f64>() < delta[m]).map(|m| m + 1)
                }
                DeathSchedule::Fixed(v) => v[k].filter(|&m| (1..=big_m).contains(&m)),
            };
            let Some(m_tau) = death else { return Ok((0.0, None)) };
            let cum: f64 = (0..m_tau).map(|l| q[l] * cpi[l] / cpi[0]).sum();
            Ok((payout(cfg.l0, cum, cpi[m_tau] / cpi[0])?, Some(m_tau)))
        })
        .collect();
    let mut payouts = Vec::with_capacity(k_paths);
    let mut death_index = Vec::with_capacity(k_paths);
    for r in results {
        let (z, d) = r?;
        payouts.push(z);
        death_index.push(d);
    }
    Ok(MbgPricing {
        quote: quote_from_payouts(&payouts, cfg)?,
        payouts,
        death_index,
        rollout: roll,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub gamma: f64,
    pub alpha_g: f64,
    pub e_hat: f64,
    pub cvar_hat: f64,
    pub lambdas: Vec<f64>,
    pub f_hat: Vec<f64>,
    pub post_load_rate: Vec<f64>,
}

/// One pricing run per policy; every `alpha_g` tail is read from the same
/// payout sample and `f` is tabulated linearly in `lambda`.
pub fn sensitivity_grid(
    policies: &[(f64, Policy)],
    paths: &PathSet,
    scen: &ScenarioConfig,
    cfg: &MbgPricingConfig,
    lambdas: &[f64],
    alpha_gs: &[f64],
) -> Result<Vec<SensitivityRow>> {
    if policies.is_empty() {
        return Err(Error::Validation("sensitivity grid needs at least one policy".into()));
    }
    let mut rows = Vec::new();
    for (gamma, policy) in policies {
        let run = price(policy, paths, scen, cfg)?;
        for &alpha_g in alpha_gs {
            let c = MbgPricingConfig { alpha_g, ..cfg.clone() };
            c.validate()?;
            let q = quote_from_payouts(&run.payouts, &c)?;
            let f_hat: Vec<f64> = lambdas.iter().map(|&l| load_factor(q.e_hat, q.cvar_hat, l, cfg.l0)).collect();
            rows.push(SensitivityRow {
                gamma: *gamma,
                alpha_g,
                e_hat: q.e_hat,
                cvar_hat: q.cvar_hat,
                lambdas: lambdas.to_vec(),
                post_load_rate: f_hat.iter().map(|f| (1.0 - f) * cfg.beta0).collect(),
                f_hat,
            });
        }
    }
    Ok(rows)
}

pub fn write_sensitivity_csv(rows: &[SensitivityRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let lambdas = rows.first().map(|r| r.lambdas.clone()).unwrap_or_default();
    let mut header = vec!["gamma".to_string(), "alpha_g".into(), "e_hat".into(), "cvar_hat".into()];
    header.extend(lambdas.iter().map(|l| format!("f_lambda_{l}")));
    header.extend(lambdas.iter().map(|l| format!("rate_lambda_{l}")));
    w.write_record(&header)?;
    for r in rows {
        let mut rec: Vec<String> = [r.gamma, r.alpha_g, r.e_hat, r.cvar_hat].iter().map(|v| format!("{v}")).collect();
        rec.extend(r.f_hat.iter().chain(&r.post_load_rate).map(|v| format!("{v}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Equal-width histogram of `payouts` over `[0, max]`; the last bin is closed.
pub fn payout_histogram(payouts: &[f64], bins: usize) -> Vec<(f64, f64, usize)> {
    let max = payouts.iter().copied().fold(0.0, f64::max);
    if bins == 0 || payouts.is_empty() {
        return Vec::new();
    }
    if max == 0.0 {
        return vec![(0.0, 0.0, payouts.len())];
    }
    let width = max / bins as f64;
    let mut counts = vec![0usize; bins];
    for &z in payouts {
        counts[((z / width) as usize).min(bins - 1)] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (i as f64 * width, if i + 1 == bins { max } else { (i + 1) as f64 * width }, c))
        .collect()
}

pub fn write_histogram_csv(hist: &[(f64, f64, usize)], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["bin_lo", "bin_hi", "count"])?;
    for (lo, hi, c) in hist {
        w.write_record([format!("{lo}"), format!("{hi}"), format!("{c}")])?;
    }
    w.flush()?;
    Ok(())
}
