use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use decum_core::eval::{
    benchmark_search, decision_times, default_wealth_grid, empirical_var_cvar, export_heatmap, rollout,
    wealth_percentiles, write_benchmark_csv, write_percentiles_csv, Controller,
};
use decum_core::market::{path_stats, PathSet};
use decum_core::mbg::{payout_histogram, price, sensitivity_grid, write_histogram_csv, write_sensitivity_csv};
use decum_core::mortality::simulate_deltas;
use decum_core::policy::Policy;
use decum_core::train::{policy_ref, sweep_frontier, train, write_frontier_csv, FrontierPoint, TrainReport};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Resolved;
use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Simulate,
    Train,
    Frontier,
    Eval,
    Price,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Simulate, Stage::Train, Stage::Frontier, Stage::Eval, Stage::Price];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::Train => "train",
            Stage::Frontier => "frontier",
            Stage::Eval => "eval",
            Stage::Price => "price",
        }
    }
}

impl FromStr for Stage {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| CliError::config(format!("unknown stage `{s}` (simulate, train, frontier, eval, price)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: String,
    pub kind: String,
    pub message: String,
}

/// Record of a run: the resolved configuration, stage status and the SHA-256
/// of every produced file, keyed by path relative to the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: serde_json::Value,
    pub stages: BTreeMap<String, String>,
    pub files: BTreeMap<String, String>,
    pub failure: Option<StageFailure>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrontierArtifact {
    pub points: Vec<FrontierPoint>,
    pub failures: Vec<(f64, String)>,
    pub reports: Vec<TrainReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalArtifact {
    pub ew_annualized: f64,
    pub var: f64,
    pub cvar: f64,
    pub mean_terminal_wealth: f64,
    pub n_paths: usize,
}

pub fn sha256_file(p: &Path) -> Result<String, CliError> {
    let bytes = fs::read(p).map_err(|e| CliError::file(format!("cannot read {}: {e}", p.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub struct Pipeline {
    pub cfg: Resolved,
    pub out: PathBuf,
    pub manifest: Manifest,
}

impl Pipeline {
    /// Opens `cfg.output_dir`, keeping an earlier manifest when it was
    /// produced by the same configuration.
    pub fn open(cfg: Resolved) -> Result<Self, CliError> {
        let out = cfg.output_dir.clone();
        fs::create_dir_all(&out)
            .map_err(|e| CliError::file(format!("cannot create {}: {e}", out.display())))?;
        let config = serde_json::to_value(&cfg)?;
        let fresh = Manifest {
            config: config.clone(),
            stages: BTreeMap::new(),
            files: BTreeMap::new(),
            failure: None,
        };
        let manifest = match fs::read_to_string(out.join(MANIFEST)) {
            Ok(text) => match serde_json::from_str::<Manifest>(&text) {
                Ok(m) if m.config == config => Manifest { failure: None, ..m },
                _ => fresh,
            },
            Err(_) => fresh,
        };
        Ok(Self { cfg, out, manifest })
    }

    fn record(&mut self, p: &Path) -> Result<(), CliError> {
        let rel = p.strip_prefix(&self.out).unwrap_or(p).to_string_lossy().replace('\\', "/");
        self.manifest.files.insert(rel, sha256_file(p)?);
        Ok(())
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let p = self.out.join(name);
        fs::write(&p, bytes).map_err(|e| CliError::file(format!("cannot write {}: {e}", p.display())))?;
        self.record(&p)
    }

    fn write_json<T: Serialize>(&mut self, name: &str, v: &T) -> Result<(), CliError> {
        let mut s = serde_json::to_string_pretty(v)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    fn write_manifest(&self) -> Result<(), CliError> {
        let mut s = serde_json::to_string_pretty(&self.manifest)?;
        s.push('\n');
        let p = self.out.join(MANIFEST);
        fs::write(&p, s).map_err(|e| CliError::file(format!("cannot write {}: {e}", p.display())))
    }

    fn require(&self, name: &str, stage: Stage, producer: &str) -> Result<PathBuf, CliError> {
        let p = self.out.join(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(CliError::stage(format!(
                "stage {} needs {} from the {producer} stage (run `decum {producer}` first)",
                stage.name(),
                p.display()
            )))
        }
    }

    fn load_paths(&self, role: &str, stage: Stage) -> Result<PathSet, CliError> {
        self.require(&format!("paths_{role}.json"), stage, "simulate")?;
        Ok(PathSet::load(&self.out.join(format!("paths_{role}")))?)
    }

    fn load_policy(&self, name: &str, stage: Stage) -> Result<Policy, CliError> {
        let p = self.require(name, stage, "train")?;
        Ok(serde_json::from_str(&fs::read_to_string(p)?)?)
    }

    /// Runs `stages` in pipeline order, updating the manifest after each one.
    /// A failing stage stops the run; the manifest records the failure and
    /// keeps the completed stages so the run can resume.
    pub fn run(&mut self, stages: &[Stage]) -> Result<(), CliError> {
        let mut ordered = stages.to_vec();
        ordered.sort();
        ordered.dedup();
        for st in ordered {
            let res = match st {
                Stage::Simulate => self.simulate(),
                Stage::Train => self.train(),
                Stage::Frontier => self.frontier(),
                Stage::Eval => self.eval(),
                Stage::Price => self.price(),
            };
            match res {
                Ok(()) => {
                    self.manifest.stages.insert(st.name().into(), "done".into());
                    self.write_manifest()?;
                }
                Err(e) => {
                    self.manifest.stages.insert(st.name().into(), "failed".into());
                    self.manifest.failure = Some(StageFailure {
                        stage: st.name().into(),
                        kind: e.kind.clone(),
                        message: e.message.clone(),
                    });
                    self.write_manifest()?;
                    return Err(e);
                }
            }
        }
        Ok(())
    }

    fn simulate(&mut self) -> Result<(), CliError> {
        let market = self.cfg.market_model()?;
        let mortality = self.cfg.mortality_model()?;
        let s = &self.cfg.scenario;
        let (x0, y0, m) = (s.x0, s.y0, s.m);
        let roles = [
            ("train", self.cfg.train.n_train_paths, self.cfg.seeds.train),
            ("eval", self.cfg.paths.n_eval, self.cfg.seeds.eval),
            ("price", self.cfg.paths.n_price, self.cfg.seeds.price),
        ];
        let mut stats = BTreeMap::new();
        for (role, n, seed) in roles {
            let mut ps = market.simulate(m, n, seed)?;
            if let Some(model) = &mortality {
                ps = ps.attach_mortality(simulate_deltas(model, x0, y0, m, n, seed)?)?;
            }
            let (bin, json) = ps.save(&self.out.join(format!("paths_{role}")))?;
            self.record(&bin)?;
            self.record(&json)?;
            stats.insert(role, path_stats(&ps)?);
        }
        self.write_json("path_stats.json", &stats)
    }

    fn train(&mut self) -> Result<(), CliError> {
        let tr = self.load_paths("train", Stage::Train)?;
        let ev = self.load_paths("eval", Stage::Train)?;
        let (policy, report) = train(&self.cfg.train, &self.cfg.scenario, &tr, Some(&ev))?;
        self.write_json("policy.json", &policy)?;
        self.write_json("train_report.json", &report)
    }

    fn frontier(&mut self) -> Result<(), CliError> {
        let tr = self.load_paths("train", Stage::Frontier)?;
        let ev = self.load_paths("eval", Stage::Frontier)?;
        let out = sweep_frontier(&self.cfg.frontier.gammas, &self.cfg.train, &self.cfg.scenario, &tr, &ev)?;
        for (gamma, policy, _) in &out.policies {
            self.write_json(&policy_ref(*gamma), policy)?;
        }
        let mut csv = Vec::new();
        write_frontier_csv(&out.points, &mut csv)?;
        self.write("frontier.csv", &csv)?;
        let artifact = FrontierArtifact {
            points: out.points,
            failures: out.failures,
            reports: out.policies.into_iter().map(|(_, _, r)| r).collect(),
        };
        self.write_json("frontier.json", &artifact)
    }

    fn eval(&mut self) -> Result<(), CliError> {
        let ev = self.load_paths("eval", Stage::Eval)?;
        let policy = self.load_policy("policy.json", Stage::Eval)?;
        let scen = self.cfg.scenario.clone();
        let bench = benchmark_search(
            &ev,
            &scen,
            self.cfg.eval.grid_step,
            self.cfg.benchmark_q(),
            self.cfg.eval.benchmark_tontine,
        )?;
        let mut csv = Vec::new();
        write_benchmark_csv(&bench, &ev.asset_names, &mut csv)?;
        self.write("benchmark.csv", &csv)?;
        self.write_json("benchmark.json", &bench)?;

        let r = rollout(&Controller::Neural(&policy), &ev, &scen)?;
        let (var, cvar) = empirical_var_cvar(&r.terminal_wealth, scen.alpha)?;
        self.write_json(
            "eval.json",
            &EvalArtifact {
                ew_annualized: r.ew_annualized(scen.t),
                var,
                cvar,
                mean_terminal_wealth: r.terminal_wealth.iter().sum::<f64>() / r.n_paths as f64,
                n_paths: r.n_paths,
            },
        )?;
        let pct = wealth_percentiles(&r, scen.dt())?;
        let mut csv = Vec::new();
        write_percentiles_csv(&pct, &mut csv)?;
        self.write("percentiles.csv", &csv)?;

        let heat = export_heatmap(
            &policy,
            &scen,
            &ev.asset_names,
            &default_wealth_grid(scen.w0),
            &decision_times(&scen),
        )?;
        for p in heat.write_csvs(&self.out)? {
            self.record(&p)?;
        }
        Ok(())
    }

    fn price(&mut self) -> Result<(), CliError> {
        let ps = self.load_paths("price", Stage::Price)?;
        let policy = self.load_policy("policy.json", Stage::Price)?;
        let scen = self.cfg.scenario.clone();
        let pcfg = self.cfg.pricing_config();
        let run = price(&policy, &ps, &scen, &pcfg)?;
        self.write_json("quote.json", &serde_json::json!({ "quote": run.quote, "config": pcfg }))?;
        let mut csv = Vec::new();
        write_histogram_csv(&payout_histogram(&run.payouts, self.cfg.pricing.histogram_bins), &mut csv)?;
        self.write("payout_histogram.csv", &csv)?;

        let frontier = self.out.join("frontier.json");
        if frontier.is_file() {
            let art: FrontierArtifact = serde_json::from_str(&fs::read_to_string(&frontier)?)?;
            let mut gammas: Vec<f64> = art.points.iter().map(|p| p.gamma).collect();
            gammas.sort_by(f64::total_cmp);
            let mut policies = Vec::new();
            for g in gammas {
                policies.push((g, self.load_policy(&policy_ref(g), Stage::Price)?));
            }
            if !policies.is_empty() {
                let rows = sensitivity_grid(
                    &policies,
                    &ps,
                    &scen,
                    &pcfg,
                    &self.cfg.pricing.lambdas,
                    &self.cfg.pricing.alpha_gs,
                )?;
                let mut csv = Vec::new();
                write_sensitivity_csv(&rows, &mut csv)?;
                self.write("sensitivity.csv", &csv)?;
            }
        }
        Ok(())
    }
}

/// Human-readable summary of the artifacts in `out`.
pub fn report(out: &Path, only: &[Stage]) -> Result<String, CliError> {
    let text = fs::read_to_string(out.join(MANIFEST))
        .map_err(|_| CliError::stage(format!("no manifest in {} (run a stage first)", out.display())))?;
    let m: Manifest = serde_json::from_str(&text)?;
    let show = |s: Stage| only.is_empty() || only.contains(&s);
    let mut lines = Vec::new();
    for (stage, status) in &m.stages {
        lines.push(format!("stage {stage}: {status}"));
    }
    if let Some(f) = &m.failure {
        lines.push(format!("failed at {}: {} ({})", f.stage, f.message, f.kind));
    }
    let read = |name: &str| fs::read_to_string(out.join(name)).ok();
    if show(Stage::Train) {
        if let Some(t) = read("train_report.json") {
            let r: TrainReport = serde_json::from_str(&t)?;
            if let Some(h) = r.held_out {
                lines.push(format!(
                    "train: gamma {} objective {:.4} held-out EW/T {:.4} CVaR {:.4}",
                    r.gamma, r.final_train_objective, h.ew_annualized, h.cvar
                ));
            }
        }
    }
    if show(Stage::Frontier) {
        if let Some(t) = read("frontier.json") {
            let a: FrontierArtifact = serde_json::from_str(&t)?;
            for p in &a.points {
                lines.push(format!(
                    "frontier: gamma {} EW/T {:.4} CVaR {:.4} W* {:.4}",
                    p.gamma, p.ew_annualized, p.cvar_alpha, p.w_star
                ));
            }
            for (g, e) in &a.failures {
                lines.push(format!("frontier: gamma {g} failed: {e}"));
            }
        }
    }
    if show(Stage::Eval) {
        if let Some(t) = read("benchmark.json") {
            let b: decum_core::eval::BenchmarkResult = serde_json::from_str(&t)?;
            lines.push(format!(
                "benchmark: weights {:?} q {} CVaR {:.4} over {} candidates",
                b.weights, b.q, b.cvar, b.candidates
            ));
        }
        if let Some(t) = read("eval.json") {
            let e: EvalArtifact = serde_json::from_str(&t)?;
            lines.push(format!("eval: EW/T {:.4} VaR {:.4} CVaR {:.4}", e.ew_annualized, e.var, e.cvar));
        }
    }
    if show(Stage::Price) {
        if let Some(t) = read("quote.json") {
            let v: serde_json::Value = serde_json::from_str(&t)?;
            let q = &v["quote"];
            lines.push(format!(
                "price: E {:.4} CVaR {:.4} load {:.5} rate {:.5} trigger {:.4}",
                q["e_hat"].as_f64().unwrap_or(f64::NAN),
                q["cvar_hat"].as_f64().unwrap_or(f64::NAN),
                q["f_hat"].as_f64().unwrap_or(f64::NAN),
                q["post_load_rate"].as_f64().unwrap_or(f64::NAN),
                q["trigger_rate"].as_f64().unwrap_or(f64::NAN),
            ));
        }
    }
    lines.push(format!("{} files recorded in {}", m.files.len(), out.join(MANIFEST).display()));
    Ok(lines.join("\n"))
}
