use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDateTime};
use serde::Deserialize;
use stlf_dms::backtest::WindowConfig;
use stlf_dms::dataio::{Dataset, LoadOptions, SplitSpec, SynthConfig};
use stlf_dms::pool::Hyperparameters;
use stlf_dms::qdms::{AgentConfig, RewardStrategy};

use crate::CliError;

/// Where the load series comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// Generated from `[data.synth]` and cached as `dataset.csv` in the output directory.
    Synthetic,
    /// Read from `data.path`.
    File,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    pub path: Option<PathBuf>,
    #[serde(default = "default_max_gap")]
    pub max_gap_hours: i64,
    #[serde(default)]
    pub synth: SynthConfig,
}

fn default_max_gap() -> i64 {
    LoadOptions::default().max_gap_hours
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub lags: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig { lags: 24 }
    }
}

/// Test = the last `test_hours` of the series, validation = the `valid_hours`
/// before it, training = everything earlier. Explicit timestamps win.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub valid_start: Option<NaiveDateTime>,
    pub test_start: Option<NaiveDateTime>,
    pub valid_hours: i64,
    pub test_hours: i64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            valid_start: None,
            test_start: None,
            valid_hours: 1464,
            test_hours: 8760,
        }
    }
}

impl SplitConfig {
    pub fn resolve(&self, dataset: &Dataset) -> stlf_dms::Result<SplitSpec> {
        let end = dataset
            .end()
            .map(|t| t + Duration::hours(1))
            .ok_or_else(|| stlf_dms::Error::InvalidSplit("empty dataset".into()))?;
        let test_start = self.test_start.unwrap_or(end - Duration::hours(self.test_hours));
        let valid_start = self
            .valid_start
            .unwrap_or(test_start - Duration::hours(self.valid_hours));
        SplitSpec::at_boundaries(dataset, valid_start, test_start)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoolConfig {
    pub seed: u64,
    pub hyper: Hyperparameters,
}

impl Default for PoolConfig {
    fn default() -> Self {
        PoolConfig {
            seed: 7,
            hyper: Hyperparameters::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSection {
    pub alpha: f64,
    pub gamma: f64,
    pub episodes: usize,
    /// `rank`, `error` or `error_reduction`.
    pub reward: String,
    pub seed: u64,
}

impl Default for AgentSection {
    fn default() -> Self {
        let a = AgentConfig::<f64>::default();
        AgentSection {
            alpha: a.alpha,
            gamma: a.gamma,
            episodes: a.episodes,
            reward: "rank".into(),
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    /// kW used to normalize nMAE; defaults to the peak actual load of the test period.
    pub capacity: Option<f64>,
}

/// Everything one run needs. Only `data.source` (and `data.path` for file
/// input) is required.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub pool: PoolConfig,
    #[serde(default)]
    pub agent: AgentSection,
    #[serde(default)]
    pub window: WindowConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub reward: Option<String>,
}

const REQUIRED: [&str; 2] = ["data", "source"];

impl RunConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, overrides)
    }

    pub fn parse(text: &str, overrides: &Overrides) -> Result<Self, CliError> {
        let table: toml::Table = text
            .parse()
            .map_err(|e| CliError::Usage(format!("config is not valid TOML: {e}")))?;
        check_required(&table)?;
        let mut cfg: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Usage(format!("config: {}", e.message())))?;
        if let Some(seed) = overrides.seed {
            cfg.data.synth.seed = seed;
            cfg.pool.seed = seed;
            cfg.agent.seed = seed;
        }
        if let Some(out) = &overrides.out {
            cfg.output.dir = out.clone();
        }
        if let Some(r) = &overrides.reward {
            cfg.agent.reward = r.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |e: stlf_dms::Error| CliError::Usage(e.to_string());
        self.data.synth.validate().map_err(usage)?;
        self.agent_config()?.validate().map_err(usage)?;
        if self.data.max_gap_hours < 0 {
            return Err(CliError::Usage("data.max_gap_hours must not be negative".into()));
        }
        if self.features.lags == 0 {
            return Err(CliError::Usage("features.lags must be at least 1".into()));
        }
        if self.split.valid_hours <= 0 || self.split.test_hours <= 0 {
            return Err(CliError::Usage("split.valid_hours and split.test_hours must be positive".into()));
        }
        if matches!(self.evaluation.capacity, Some(c) if !(c > 0.0 && c.is_finite())) {
            return Err(CliError::Usage("evaluation.capacity must be positive".into()));
        }
        if self.window.horizon == 0 || self.window.candidates < 2 || self.window.history < 2 {
            return Err(CliError::Usage(
                "window needs horizon >= 1, candidates >= 2 and history >= 2".into(),
            ));
        }
        Ok(())
    }

    pub fn reward(&self) -> Result<RewardStrategy, CliError> {
        self.agent
            .reward
            .parse()
            .map_err(|e: stlf_dms::Error| CliError::Usage(format!("agent.reward: {e}")))
    }

    pub fn agent_config(&self) -> Result<AgentConfig<f64>, CliError> {
        Ok(AgentConfig {
            alpha: self.agent.alpha,
            gamma: self.agent.gamma,
            episodes: self.agent.episodes,
            reward: self.reward()?,
            seed: self.agent.seed,
        })
    }

    pub fn load_options(&self) -> LoadOptions {
        LoadOptions {
            max_gap_hours: self.data.max_gap_hours,
        }
    }
}

fn check_required(table: &toml::Table) -> Result<(), CliError> {
    let missing = |key: &str| CliError::Usage(format!("missing config key `{key}`"));
    let data = table
        .get(REQUIRED[0])
        .and_then(|v| v.as_table())
        .ok_or_else(|| missing("data.source"))?;
    let source = data.get(REQUIRED[1]).ok_or_else(|| missing("data.source"))?;
    if source.as_str() == Some("file") && !data.contains_key("path") {
        return Err(missing("data.path"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, CliError> {
        RunConfig::parse(text, &Overrides::default())
    }

    #[test]
    fn bare_config_takes_protocol_defaults() {
        let c = parse("[data]\nsource = \"synthetic\"\n").unwrap();
        assert_eq!(c.window, WindowConfig { history: 72, horizon: 4, candidates: 4 });
        let a = c.agent_config().unwrap();
        assert_eq!((a.alpha, a.gamma, a.episodes), (0.1, 0.8, 100));
        assert_eq!(a.reward, RewardStrategy::RankImprovement);
        assert_eq!(c.features.lags, 24);
        assert_eq!(c.data.synth, SynthConfig::default());
        assert_eq!(c.pool.hyper, Hyperparameters::standard());
    }

    #[test]
    fn missing_keys_are_named() {
        for (text, key) in [
            ("", "data.source"),
            ("[data]\n", "data.source"),
            ("[data]\nsource = \"file\"\n", "data.path"),
        ] {
            match parse(text) {
                Err(CliError::Usage(m)) => assert!(m.contains(key), "{m}"),
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn unknown_keys_and_bad_values_are_usage_errors() {
        for text in [
            "[data]\nsource = \"synthetic\"\n[agent]\nalfa = 0.2\n",
            "[data]\nsource = \"synthetic\"\n[agent]\nalpha = 1.5\n",
            "[data]\nsource = \"synthetic\"\n[agent]\nreward = \"regret\"\n",
            "[data]\nsource = \"satellite\"\n",
            "[data]\nsource = \"synthetic\"\n[pool.hyper]\nt_dof = 4.0\nextra = 1\n",
        ] {
            assert!(matches!(parse(text), Err(CliError::Usage(_))), "{text}");
        }
    }

    #[test]
    fn overrides_apply_to_every_seed() {
        let o = Overrides {
            seed: Some(99),
            out: Some("elsewhere".into()),
            reward: Some("error_reduction".into()),
        };
        let c = RunConfig::parse("[data]\nsource = \"synthetic\"\n", &o).unwrap();
        assert_eq!((c.data.synth.seed, c.pool.seed, c.agent.seed), (99, 99, 99));
        assert_eq!(c.output.dir, PathBuf::from("elsewhere"));
        assert_eq!(c.reward().unwrap(), RewardStrategy::ErrorReduction);
    }

    #[test]
    fn split_defaults_count_back_from_the_end() {
        let synth = SynthConfig {
            n_hours: 2000,
            ..SynthConfig::default()
        };
        let ds = stlf_dms::dataio::generate_synthetic(&synth).unwrap();
        let s = SplitConfig {
            valid_hours: 200,
            test_hours: 500,
            ..Default::default()
        };
        let spec = s.resolve(&ds).unwrap();
        assert_eq!(spec.test.hours(), 500);
        assert_eq!(spec.valid.hours(), 200);
        assert_eq!(spec.train.hours(), 1300);
    }
}
