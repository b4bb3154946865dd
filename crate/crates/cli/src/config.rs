//! Run configuration: a TOML file overlaid by command-line flags.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use vidclaim::scorer::{DnConfig, ScorerConfig, TextMeanPopulation, DEFAULT_LAMBDA};

use crate::error::CliError;

/// Keys accepted in `--config` files. Relative paths resolve against the
/// file's directory.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub store: Option<PathBuf>,
    pub backends: Option<Vec<String>>,
    pub lambda: Option<f64>,
    pub dn: Option<bool>,
    pub text_mean: Option<TextMeanPopulation>,
    pub transform_endpoint: Option<String>,
    pub embed_endpoint: Option<String>,
    pub offline: Option<bool>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub embeddings: Option<Vec<PathBuf>>,
    pub transcript: Option<PathBuf>,
    pub timeout_secs: Option<u64>,
    pub retries: Option<usize>,
    pub max_in_flight: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))?;
        let mut cfg: FileConfig = toml::from_str(&text)
            .map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.store.as_mut().map(rebase);
        cfg.out.as_mut().map(rebase);
        cfg.transcript.as_mut().map(rebase);
        if let Some(list) = cfg.embeddings.as_mut() {
            list.iter_mut().for_each(rebase);
        }
        Ok(cfg)
    }
}

/// Flag values; `None` defers to the config file, then to defaults.
#[derive(Debug, Clone, Default)]
pub struct FlagOverrides {
    pub store: Option<PathBuf>,
    pub backends: Option<Vec<String>>,
    pub lambda: Option<f64>,
    pub no_dn: bool,
    pub transform_endpoint: Option<String>,
    pub embed_endpoint: Option<String>,
    pub offline: bool,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub embeddings: Vec<PathBuf>,
    pub transcript: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub store_root: Option<PathBuf>,
    pub scorer: ScorerConfig,
    pub transform_endpoint: Option<String>,
    pub embed_endpoint: Option<String>,
    pub offline: bool,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub jobs: usize,
    pub embeddings: Vec<PathBuf>,
    pub transcript: Option<PathBuf>,
    #[cfg_attr(not(feature = "remote"), allow(dead_code))]
    pub timeout: Duration,
    #[cfg_attr(not(feature = "remote"), allow(dead_code))]
    pub retries: usize,
    #[cfg_attr(not(feature = "remote"), allow(dead_code))]
    pub max_in_flight: usize,
}

impl RunConfig {
    pub fn resolve(flags: FlagOverrides, file: FileConfig) -> Result<Self, CliError> {
        let offline = flags.offline || file.offline.unwrap_or(false);
        let lambda = flags.lambda.or(file.lambda).unwrap_or(DEFAULT_LAMBDA);
        let population = file.text_mean.unwrap_or(TextMeanPopulation::CurrentQueryActions);
        let dn = DnConfig::new(lambda, population).map_err(|e| CliError::Input(e.to_string()))?;
        let mut scorer = ScorerConfig::default().with_dn(dn);
        if let Some(b) = flags.backends.or(file.backends) {
            if b.is_empty() {
                return Err(CliError::Input("--backends needs at least one name".into()));
            }
            scorer = scorer.with_backends(b);
        }
        if flags.no_dn || file.dn == Some(false) {
            scorer = scorer.without_dn();
        }
        let mut embeddings = file.embeddings.unwrap_or_default();
        embeddings.extend(flags.embeddings);
        let endpoint = |flag: Option<String>, file: Option<String>| {
            if offline {
                None
            } else {
                flag.or(file)
            }
        };
        Ok(Self {
            store_root: flags.store.or(file.store),
            scorer,
            transform_endpoint: endpoint(flags.transform_endpoint, file.transform_endpoint),
            embed_endpoint: endpoint(flags.embed_endpoint, file.embed_endpoint),
            offline,
            seed: flags.seed.or(file.seed).unwrap_or(0),
            output_dir: flags.out.or(file.out).unwrap_or_else(|| PathBuf::from("vidclaim-out")),
            jobs: flags.jobs.or(file.jobs).unwrap_or(0),
            embeddings,
            transcript: flags.transcript.or(file.transcript),
            timeout: Duration::from_secs(file.timeout_secs.unwrap_or(60)),
            retries: file.retries.unwrap_or(2),
            max_in_flight: file.max_in_flight.unwrap_or(8),
        })
    }

    pub fn store(&self) -> Result<&Path, CliError> {
        self.store_root
            .as_deref()
            .ok_or_else(|| CliError::Input("no embedding store given (--store)".into()))
    }
}
