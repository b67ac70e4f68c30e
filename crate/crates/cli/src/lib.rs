//! Subcommands of the `stlf-dms` binary. Each one reads its inputs from and
//! writes its outputs to the run's output directory, so any stage can be
//! rerun on its own.

pub mod config;

use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use log::info;
use stlf_dms::backtest::{run_dms, DmsOutcome, SelectionLog};
use stlf_dms::dataio::{build_features, generate_synthetic, load_dataset, write_dataset, Dataset, FeatureSplits};
use stlf_dms::metrics::{evaluate, EvalReport};
use stlf_dms::pool::{forecast_matrix, read_pool, train_pool, write_pool, ForecastMatrix, ModelPool, ModelSpec};

pub use config::{DataSource, Overrides, RunConfig};

pub const DATASET_FILE: &str = "dataset.csv";
pub const POOL_FILE: &str = "pool.json";
pub const VALIDATION_FILE: &str = "validation.csv";
pub const VALID_FORECASTS_FILE: &str = "forecasts_valid.csv";
pub const FORECASTS_FILE: &str = "forecasts.csv";
pub const SELECTION_LOG_FILE: &str = "selection_log.csv";
pub const DMS_FORECAST_FILE: &str = "dms_forecast.csv";
pub const CURVES_FILE: &str = "learning_curves.csv";
pub const REPORT_CSV_FILE: &str = "report.csv";
pub const REPORT_JSON_FILE: &str = "report.json";
pub const RANK_COUNTS_FILE: &str = "rank_counts.csv";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad config or arguments; exit code 2.
    #[error("{0}")]
    Usage(String),
    /// Anything that failed while doing the work; exit code 1.
    #[error(transparent)]
    Runtime(stlf_dms::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<stlf_dms::Error> for CliError {
    fn from(e: stlf_dms::Error) -> Self {
        match e {
            stlf_dms::Error::InvalidConfig(m) => CliError::Usage(m),
            other => CliError::Runtime(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// A loaded config plus output conventions.
#[derive(Debug, Clone)]
pub struct Run {
    pub config: RunConfig,
    /// Prepend a `# ... written <time>` line to CSV outputs.
    pub header_timestamp: bool,
}

impl Run {
    pub fn new(config: RunConfig, header_timestamp: bool) -> Self {
        Run {
            config,
            header_timestamp,
        }
    }

    pub fn out_dir(&self) -> &Path {
        &self.config.output.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir().join(name)
    }

    fn write_csv(&self, name: &str, body: impl FnOnce(&mut Vec<u8>) -> stlf_dms::Result<()>) -> CliResult<PathBuf> {
        let mut buf = Vec::new();
        if self.header_timestamp {
            writeln!(
                buf,
                "# stlf-dms {} written {}",
                env!("CARGO_PKG_VERSION"),
                chrono::Utc::now().format("%Y-%m-%dT%H:%M:%SZ")
            )?;
        }
        body(&mut buf)?;
        self.write_file(name, &buf)
    }

    fn write_file(&self, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        fs::create_dir_all(self.out_dir())?;
        let path = self.path(name);
        fs::write(&path, bytes)?;
        info!("wrote {}", path.display());
        Ok(path)
    }

    fn open(&self, name: &str, hint: &str) -> CliResult<BufReader<File>> {
        let path = self.path(name);
        File::open(&path).map(BufReader::new).map_err(|e| {
            CliError::Runtime(stlf_dms::Error::InvalidInput(format!(
                "cannot open {}: {e} (run `{hint}` first)",
                path.display()
            )))
        })
    }

    /// The series every later stage works on.
    pub fn dataset(&self) -> CliResult<Dataset> {
        let data = &self.config.data;
        match data.source {
            DataSource::File => {
                let path = data.path.as_ref().expect("checked when the config was parsed");
                Ok(load_dataset(path, &self.config.load_options())?)
            }
            DataSource::Synthetic => {
                let cached = self.path(DATASET_FILE);
                if cached.exists() {
                    Ok(load_dataset(&cached, &self.config.load_options())?)
                } else {
                    Ok(self.cmd_synth()?.dataset)
                }
            }
        }
    }

    pub fn features(&self, dataset: &Dataset) -> CliResult<FeatureSplits<f64>> {
        let split = self.config.split.resolve(dataset)?;
        Ok(build_features(dataset, self.config.features.lags, &split)?)
    }

    pub fn cmd_synth(&self) -> CliResult<SynthSummary> {
        if self.config.data.source != DataSource::Synthetic {
            return Err(CliError::Usage("`synth` needs data.source = \"synthetic\"".into()));
        }
        let dataset = generate_synthetic(&self.config.data.synth)?;
        let path = self.write_csv(DATASET_FILE, |b| write_dataset(&dataset, b))?;
        Ok(SynthSummary { path, dataset })
    }

    pub fn cmd_train(&self) -> CliResult<ModelPool<f64>> {
        let dataset = self.dataset()?;
        let fs = self.features(&dataset)?;
        info!(
            "training on {} rows, validating on {}",
            fs.train.n_rows(),
            fs.valid.n_rows()
        );
        let specs = ModelSpec::default_pool(&self.config.pool.hyper);
        let pool = train_pool(&specs, &fs.train, &fs.valid, self.config.pool.seed)?;
        let mut json = Vec::new();
        write_pool(&pool, &mut json)?;
        self.write_file(POOL_FILE, &json)?;
        self.write_csv(VALIDATION_FILE, |b| write_validation(&pool, b))?;
        Ok(pool)
    }

    pub fn load_pool(&self) -> CliResult<ModelPool<f64>> {
        Ok(read_pool(self.open(POOL_FILE, "train")?)?)
    }

    /// Forecasts of every member over the validation and test periods.
    pub fn cmd_forecast(&self) -> CliResult<(ForecastMatrix<f64>, ForecastMatrix<f64>)> {
        let pool = self.load_pool()?;
        let dataset = self.dataset()?;
        let fs = self.features(&dataset)?;
        let valid = forecast_matrix(&pool, &fs.valid)?;
        let test = forecast_matrix(&pool, &fs.test)?;
        self.write_csv(VALID_FORECASTS_FILE, |b| valid.write_csv(b))?;
        self.write_csv(FORECASTS_FILE, |b| test.write_csv(b))?;
        Ok((valid, test))
    }

    pub fn load_forecasts(&self) -> CliResult<(ForecastMatrix<f64>, ForecastMatrix<f64>)> {
        let valid = ForecastMatrix::read_csv(self.open(VALID_FORECASTS_FILE, "forecast")?)?;
        let test = ForecastMatrix::read_csv(self.open(FORECASTS_FILE, "forecast")?)?;
        Ok((valid, test))
    }

    /// Moving-window selection over the test period, with the validation
    /// forecasts as the first windows' history.
    pub fn cmd_dms(&self) -> CliResult<DmsOutcome<f64>> {
        let (valid, test) = self.load_forecasts()?;
        let fm = valid.concat(&test)?;
        let outcome = run_dms(&fm, valid.len(), &self.config.window, &self.config.agent_config()?)?;
        self.write_csv(SELECTION_LOG_FILE, |b| outcome.log.write_csv(b))?;
        self.write_csv(DMS_FORECAST_FILE, |b| outcome.write_forecast_csv(b))?;
        self.write_csv(CURVES_FILE, |b| outcome.write_curves_csv(b))?;
        Ok(outcome)
    }

    /// Scores the pool over the test period, plus the selection when a log exists.
    pub fn cmd_evaluate(&self) -> CliResult<EvalReport> {
        let test = ForecastMatrix::read_csv(self.open(FORECASTS_FILE, "forecast")?)?;
        let log_path = self.path(SELECTION_LOG_FILE);
        let log = if log_path.exists() {
            Some(SelectionLog::read_csv(File::open(&log_path)?, test.model_ids())?)
        } else {
            info!("no {} found, scoring the pool only", log_path.display());
            None
        };
        let capacity = self
            .config
            .evaluation
            .capacity
            .unwrap_or_else(|| test.actuals().iter().copied().fold(0.0, f64::max));
        let report = evaluate(&test, log.as_ref(), capacity)?;
        self.write_csv(REPORT_CSV_FILE, |b| report.write_csv(b))?;
        let mut json = Vec::new();
        report.write_json(&mut json)?;
        self.write_file(REPORT_JSON_FILE, &json)?;
        self.write_csv(RANK_COUNTS_FILE, |b| report.rank_counts.write_csv(b))?;
        Ok(report)
    }

    /// Every stage in order: synthesis (for synthetic data), training,
    /// forecasting, selection and evaluation.
    pub fn cmd_report(&self) -> CliResult<EvalReport> {
        if self.config.data.source == DataSource::Synthetic {
            self.cmd_synth()?;
        }
        self.cmd_train()?;
        self.cmd_forecast()?;
        self.cmd_dms()?;
        self.cmd_evaluate()
    }
}

pub struct SynthSummary {
    pub path: PathBuf,
    pub dataset: Dataset,
}

fn write_validation<W: Write>(pool: &ModelPool<f64>, mut w: W) -> stlf_dms::Result<()> {
    writeln!(w, "model,kind,valid_mape,iterations,selected")?;
    for m in &pool.models {
        let selected: Vec<String> = m.meta.selected.iter().map(|(k, v)| format!("{k}={v}")).collect();
        writeln!(
            w,
            "{},{},{},{},{}",
            m.spec.id,
            m.spec.kind.description().replace(',', ";"),
            m.meta.valid_mape,
            m.meta.iterations,
            selected.join(";")
        )?;
    }
    Ok(())
}
