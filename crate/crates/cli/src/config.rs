use std::fs;
use std::path::{Path, PathBuf};

use decum_core::market::{load_panel, AssetPanel, KouMarket, KouParams, MarketModel};
use decum_core::mortality::{
    fit_cbd, fit_lc, gompertz_table, load_history, load_life_table, LcLink, MortalityHistory, MortalityModel,
};
use decum_core::tontine::ScenarioConfig;
use decum_core::train::TrainConfig;
use decum_core::mbg::MbgPricingConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Preset name under `preset` plus any scenario field as an override.
    pub scenario: toml::Table,
    pub market: MarketSection,
    pub mortality: MortalitySection,
    pub train: TrainConfig,
    #[serde(default)]
    pub frontier: FrontierSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub pricing: PricingSection,
    #[serde(default)]
    pub paths: PathsSection,
    #[serde(default)]
    pub seeds: Seeds,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MarketSection {
    Kou {
        #[serde(default)]
        stock: Option<KouParams>,
        #[serde(default)]
        bond: Option<KouParams>,
        #[serde(default)]
        rho: Option<f64>,
        #[serde(default)]
        steps_per_year: Option<usize>,
    },
    Bootstrap {
        panel: PathBuf,
        /// Mean block length in months.
        expected_block_len: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MortalitySection {
    None,
    Gompertz {
        modal_age: f64,
        dispersion: f64,
    },
    Table {
        path: PathBuf,
    },
    LeeCarter {
        history: PathBuf,
        #[serde(default)]
        link: LcLink,
    },
    Cbd {
        history: PathBuf,
        #[serde(default)]
        xbar: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrontierSection {
    pub gammas: Vec<f64>,
}

impl Default for FrontierSection {
    fn default() -> Self {
        Self { gammas: vec![0.2, 1.5] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    /// Benchmark withdrawal; the scenario's `q_min` when absent.
    #[serde(default)]
    pub benchmark_q: Option<f64>,
    #[serde(default = "default_grid_step")]
    pub grid_step: f64,
    /// Run the benchmark with the tontine overlay.
    #[serde(default)]
    pub benchmark_tontine: bool,
}

fn default_grid_step() -> f64 {
    0.1
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            benchmark_q: None,
            grid_step: default_grid_step(),
            benchmark_tontine: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PricingSection {
    pub alpha_g: f64,
    pub lambda: f64,
    pub beta0: f64,
    pub lambdas: Vec<f64>,
    pub alpha_gs: Vec<f64>,
    pub histogram_bins: usize,
}

impl Default for PricingSection {
    fn default() -> Self {
        Self {
            alpha_g: 0.05,
            lambda: 0.5,
            beta0: 0.05,
            lambdas: vec![0.0, 0.5, 1.0],
            alpha_gs: vec![0.01, 0.05, 0.10],
            histogram_bins: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    pub n_eval: usize,
    pub n_price: usize,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self {
            n_eval: 1 << 12,
            n_price: 1 << 12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub train: u64,
    pub eval: u64,
    pub price: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            train: 1,
            eval: 2,
            price: 3,
        }
    }
}

impl Seeds {
    /// `train = s`, `eval = s + 1`, `price = s + 2`.
    pub fn from_base(s: u64) -> Self {
        Self {
            train: s,
            eval: s.wrapping_add(1),
            price: s.wrapping_add(2),
        }
    }
}

/// A configuration with presets applied, paths made absolute and every
/// section validated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolved {
    pub preset: Option<String>,
    pub scenario: ScenarioConfig,
    pub market: MarketSection,
    pub mortality: MortalitySection,
    pub train: TrainConfig,
    pub frontier: FrontierSection,
    pub eval: EvalSection,
    pub pricing: PricingSection,
    pub paths: PathsSection,
    pub seeds: Seeds,
    #[serde(skip)]
    pub output_dir: PathBuf,
}

pub fn scenario_preset(name: &str) -> Result<ScenarioConfig, CliError> {
    match name {
        "validation" => Ok(ScenarioConfig::validation()),
        "australia" => Ok(ScenarioConfig::australia()),
        other => Err(CliError::config(format!(
            "scenario.preset: unknown preset `{other}` (expected validation or australia)"
        ))),
    }
}

fn resolve_scenario(table: &toml::Table) -> Result<(Option<String>, ScenarioConfig), CliError> {
    let mut overrides = table.clone();
    let preset = match overrides.remove("preset") {
        Some(toml::Value::String(s)) => Some(s),
        Some(_) => return Err(CliError::config("scenario.preset: must be a string")),
        None => None,
    };
    let mut merged = match &preset {
        Some(p) => toml::Table::try_from(scenario_preset(p)?).map_err(|e| CliError::config(e.to_string()))?,
        None => toml::Table::new(),
    };
    merged.extend(overrides);
    let scen: ScenarioConfig = merged
        .try_into()
        .map_err(|e: toml::de::Error| CliError::config(format!("scenario: {}", e.message())))?;
    Ok((preset, scen))
}

fn absolutize(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn require_file(p: &Path, field: &str) -> Result<(), CliError> {
    if p.is_file() {
        Ok(())
    } else {
        Err(CliError::file(format!("{field}: file not found: {}", p.display())))
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<(Self, PathBuf), CliError> {
        let text =
            fs::read_to_string(path).map_err(|e| CliError::file(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let base = fs::canonicalize(if base.as_os_str().is_empty() { Path::new(".") } else { &base })
            .map_err(|e| CliError::file(format!("cannot resolve {}: {e}", base.display())))?;
        Ok((Self::parse(&text)?, base))
    }

    /// Applies presets and overrides, resolves relative paths against `base`
    /// and validates everything that can be checked without running a stage.
    pub fn resolve(
        &self,
        base: &Path,
        out_override: Option<&Path>,
        seed_override: Option<u64>,
    ) -> Result<Resolved, CliError> {
        let (preset, scenario) = resolve_scenario(&self.scenario)?;
        scenario.validate()?;
        let mut market = self.market.clone();
        if let MarketSection::Bootstrap { panel, .. } = &mut market {
            *panel = absolutize(base, panel);
            require_file(panel, "market.panel")?;
        }
        let mut mortality = self.mortality.clone();
        match &mut mortality {
            MortalitySection::Table { path } => {
                *path = absolutize(base, path);
                require_file(path, "mortality.path")?;
            }
            MortalitySection::LeeCarter { history, .. } | MortalitySection::Cbd { history, .. } => {
                *history = absolutize(base, history);
                require_file(history, "mortality.history")?;
            }
            _ => {}
        }
        let seeds = seed_override.map(Seeds::from_base).unwrap_or(self.seeds);
        if seeds.train == seeds.eval || seeds.train == seeds.price || seeds.eval == seeds.price {
            return Err(CliError::config(format!(
                "seeds: train, eval and price must be distinct, got {}, {}, {}",
                seeds.train, seeds.eval, seeds.price
            )));
        }
        let mut train = self.train.clone();
        train.seed = seeds.train;
        train.validate()?;
        let r = Resolved {
            preset,
            scenario,
            market,
            mortality,
            train,
            frontier: self.frontier.clone(),
            eval: self.eval.clone(),
            pricing: self.pricing.clone(),
            paths: self.paths.clone(),
            seeds,
            output_dir: out_override
                .map(Path::to_path_buf)
                .unwrap_or_else(|| absolutize(base, &self.output_dir)),
        };
        r.check()?;
        Ok(r)
    }
}

impl Resolved {
    fn check(&self) -> Result<(), CliError> {
        if self.frontier.gammas.is_empty() || self.frontier.gammas.iter().any(|g| !(*g >= 0.0)) {
            return Err(CliError::config("frontier.gammas: need at least one nonnegative value"));
        }
        if self.paths.n_eval == 0 || self.paths.n_price == 0 {
            return Err(CliError::config("paths: n_eval and n_price must be positive"));
        }
        self.pricing_config().validate()?;
        for &a in &self.pricing.alpha_gs {
            MbgPricingConfig { alpha_g: a, ..self.pricing_config() }.validate()?;
        }
        if self.pricing.histogram_bins == 0 {
            return Err(CliError::config("pricing.histogram_bins: must be positive"));
        }
        let k = match &self.market {
            MarketSection::Kou { .. } => 2,
            MarketSection::Bootstrap { .. } => self.panel()?.map_or(0, |p| p.asset_names.len()),
        };
        if k != self.scenario.asset_count {
            return Err(CliError::config(format!(
                "scenario.asset_count: {} but the market has {k} assets",
                self.scenario.asset_count
            )));
        }
        Ok(())
    }

    pub fn pricing_config(&self) -> MbgPricingConfig {
        MbgPricingConfig {
            l0: self.scenario.l0,
            alpha_g: self.pricing.alpha_g,
            lambda: self.pricing.lambda,
            beta0: self.pricing.beta0,
            n_price_paths: self.paths.n_price,
            seed: self.seeds.price,
        }
    }

    pub fn benchmark_q(&self) -> f64 {
        self.eval.benchmark_q.unwrap_or(self.scenario.q_min)
    }

    fn panel(&self) -> Result<Option<AssetPanel>, CliError> {
        match &self.market {
            MarketSection::Bootstrap { panel, .. } => {
                let f = fs::File::open(panel)
                    .map_err(|e| CliError::file(format!("cannot open {}: {e}", panel.display())))?;
                Ok(Some(load_panel(f)?))
            }
            MarketSection::Kou { .. } => Ok(None),
        }
    }

    pub fn market_model(&self) -> Result<MarketModel, CliError> {
        Ok(match &self.market {
            MarketSection::Kou {
                stock,
                bond,
                rho,
                steps_per_year,
            } => {
                let base = KouMarket::calibrated();
                MarketModel::Kou(KouMarket::stock_bond(
                    stock.unwrap_or(base.assets[0]),
                    bond.unwrap_or(base.assets[1]),
                    rho.unwrap_or(base.corr[0][1]),
                    steps_per_year.unwrap_or(base.steps_per_year),
                ))
            }
            MarketSection::Bootstrap { expected_block_len, .. } => MarketModel::Bootstrap {
                panel: self.panel()?.expect("bootstrap market has a panel"),
                expected_block_len: *expected_block_len,
            },
        })
    }

    fn history(path: &Path) -> Result<MortalityHistory, CliError> {
        let f = fs::File::open(path).map_err(|e| CliError::file(format!("cannot open {}: {e}", path.display())))?;
        Ok(load_history(f)?)
    }

    /// `None` when the tontine runs without mortality credits.
    pub fn mortality_model(&self) -> Result<Option<MortalityModel>, CliError> {
        let s = &self.scenario;
        let last_age = s.x0 + s.m as i32;
        let last_year = s.y0 + s.m as i32;
        Ok(match &self.mortality {
            MortalitySection::None => None,
            MortalitySection::Gompertz { modal_age, dispersion } => Some(MortalityModel::Table(gompertz_table(
                *modal_age,
                *dispersion,
                s.x0..=last_age,
                s.y0..=last_year,
            )?)),
            MortalitySection::Table { path } => {
                let f = fs::File::open(path)
                    .map_err(|e| CliError::file(format!("cannot open {}: {e}", path.display())))?;
                Some(MortalityModel::Table(load_life_table(f)?))
            }
            MortalitySection::LeeCarter { history, link } => {
                Some(MortalityModel::LeeCarter(fit_lc(&Self::history(history)?, *link)?))
            }
            MortalitySection::Cbd { history, xbar } => {
                let h = Self::history(history)?;
                let xbar = xbar.unwrap_or_else(|| h.ages.iter().map(|&a| a as f64).sum::<f64>() / h.ages.len() as f64);
                Some(MortalityModel::Cbd(fit_cbd(&h, xbar)?))
            }
        })
    }
}
