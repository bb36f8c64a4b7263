use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::Args;
use ovdmine::simulator::WorldConfig;
use ovdmine::{MiningConfig, ReliabilityIndicator};
use serde::{Deserialize, Serialize};

use crate::{CliError, Result};

/// Output root used when `--output-dir` is not given.
pub const OUTPUT_ROOT_ENV: &str = "OVDMINE_OUTPUT_ROOT";

/// Everything a run needs. Missing keys take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub world: WorldConfig,
    pub mining: MiningConfig,
    pub indicator: ReliabilityIndicator,
    pub iterations: u64,
    pub log_stride: u64,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            world: WorldConfig::default(),
            mining: MiningConfig::default(),
            indicator: ReliabilityIndicator::default(),
            iterations: 3000,
            log_stride: 100,
            seeds: vec![0],
            output_dir: PathBuf::from("runs"),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(CliError::Validation("iterations must be positive".into()));
        }
        if self.log_stride == 0 {
            return Err(CliError::Validation("log_stride must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(CliError::Validation("seeds must not be empty".into()));
        }
        let unique: BTreeSet<_> = self.seeds.iter().collect();
        if unique.len() != self.seeds.len() {
            return Err(CliError::Validation("seeds contains duplicates".into()));
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(CliError::Validation("output_dir must not be empty".into()));
        }
        self.world.validate()?;
        self.mining.validate()?;
        Ok(())
    }

    /// Parses and validates a config file's text. Errors carry `origin` and
    /// the line of the offending key when it can be found.
    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| CliError::Validation(format!("{origin}:{}:{}: {e}", e.line(), e.column())))?;
        cfg.validate().map_err(|e| locate(e, text, origin))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        Self::from_json(&text, &path.display().to_string())
    }

    /// File (or defaults) with flags and the environment applied on top.
    pub fn resolve(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        overrides.apply(&mut cfg, std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Prefixes a validation message with the line of the key it names.
fn locate(err: CliError, text: &str, origin: &str) -> CliError {
    let CliError::Validation(msg) = err else { return err };
    let body = msg.strip_prefix("configuration error: ").or(msg.strip_prefix("validation error: ")).unwrap_or(&msg);
    let key: String = body.chars().take_while(|c| c.is_ascii_alphanumeric() || *c == '_').collect();
    let needle = format!("\"{key}\"");
    match text.lines().position(|l| !key.is_empty() && l.contains(&needle)) {
        Some(i) => CliError::Validation(format!("{origin}:{}: {msg}", i + 1)),
        None => CliError::Validation(format!("{origin}: {msg}")),
    }
}

/// Command-line overrides of config-file values.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub lambda_prime: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub burnin_steps: Option<u64>,
    /// ONE_MINUS_BG, PSEUDO_CONF, IOU_TO_PSEUDO or NOVELTY.
    #[arg(long)]
    pub indicator: Option<String>,
    #[arg(long)]
    pub iterations: Option<u64>,
    #[arg(long)]
    pub log_stride: Option<u64>,
    /// Comma-separated list.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

impl Overrides {
    /// `env_root` replaces the output directory only when `--output-dir`
    /// is absent.
    pub fn apply(&self, cfg: &mut ExperimentConfig, env_root: Option<PathBuf>) -> Result<()> {
        let m = &mut cfg.mining;
        if let Some(v) = self.lambda {
            m.lambda = v;
        }
        if let Some(v) = self.lambda_prime {
            m.lambda_prime = v;
        }
        if let Some(v) = self.delta {
            m.delta = v;
        }
        if let Some(v) = self.gamma {
            m.gamma = v;
        }
        if let Some(v) = self.burnin_steps {
            m.burnin_steps = v;
        }
        if let Some(s) = &self.indicator {
            cfg.indicator = s.parse()?;
        }
        if let Some(v) = self.iterations {
            cfg.iterations = v;
        }
        if let Some(v) = self.log_stride {
            cfg.log_stride = v;
        }
        if let Some(v) = &self.seeds {
            cfg.seeds = v.clone();
        }
        match (&self.output_dir, env_root) {
            (Some(d), _) => cfg.output_dir = d.clone(),
            (None, Some(d)) if !d.as_os_str().is_empty() => cfg.output_dir = d,
            _ => {}
        }
        Ok(())
    }
}
