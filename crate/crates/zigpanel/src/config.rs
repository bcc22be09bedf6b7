//! Run configuration: JSON file + flag overrides, precedence flags > file >
//! defaults. A run's effective config is copied into its output directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{default_windows, DayWindow};
use crate::bootstrap::{BootstrapOptions, CurveKind};
use crate::fit::FitOptions;
use crate::ingest::{Stream, TransferFormat};
use crate::model::Variant;
use crate::{Error, Result, Scalar};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "ZIGPANEL_OUT";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Exported transfer records (CSV or JSONL).
    pub transfers: Option<PathBuf>,
    /// `csv` or `jsonl`; inferred from the file extension when omitted.
    pub transfer_format: Option<String>,
    /// Daily covariate file (day_index, ETHPRICE, RF6M).
    pub covariates: Option<PathBuf>,
    /// Stablecoin registry JSON; the built-in 2022 registry when omitted.
    pub registry: Option<PathBuf>,
    /// Output directory for all artifacts.
    pub out_dir: PathBuf,

    pub n_days: usize,
    pub activity_threshold: usize,

    pub df: usize,
    pub variants: Vec<String>,
    pub streams: Vec<String>,

    pub fit: FitOptions<Scalar>,

    pub bootstrap_replicates: usize,
    pub alpha: Scalar,
    pub seed: u64,
    /// `mean` (f) or `zero` (g).
    pub curve: String,

    pub windows: Vec<DayWindow>,
    /// Moving-average window for the activity series.
    pub ma_window: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            transfers: None,
            transfer_format: None,
            covariates: None,
            registry: None,
            out_dir: default_out_dir(),
            n_days: 276,
            activity_threshold: 5,
            df: 10,
            variants: vec!["A".into(), "B".into(), "full".into()],
            streams: Stream::ALL.iter().map(|s| s.label().to_string()).collect(),
            fit: FitOptions::default(),
            bootstrap_replicates: 1000,
            alpha: 0.05,
            seed: 0,
            curve: "mean".into(),
            windows: default_windows(),
            ma_window: 7,
        }
    }
}

fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out"))
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(Error::from)
    }

    pub fn parsed_streams(&self) -> Result<Vec<Stream>> {
        self.streams.iter().map(|s| s.parse()).collect()
    }

    pub fn parsed_variants(&self) -> Result<Vec<Variant>> {
        self.variants.iter().map(|v| v.parse()).collect()
    }

    pub fn parsed_curve(&self) -> Result<CurveKind> {
        self.curve.parse()
    }

    pub fn transfer_format(&self) -> Result<TransferFormat> {
        if let Some(f) = &self.transfer_format {
            return match f.as_str() {
                "csv" => Ok(TransferFormat::Csv),
                "jsonl" => Ok(TransferFormat::Jsonl),
                other => Err(Error::Invalid(format!("unknown transfer format `{other}`"))),
            };
        }
        let path = self.transfers.as_deref().ok_or_else(|| {
            Error::MissingArtifact("transfers path (config field `transfers`)".into())
        })?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("ndjson") => Ok(TransferFormat::Jsonl),
            _ => Ok(TransferFormat::Csv),
        }
    }

    pub fn bootstrap_options(&self) -> Result<BootstrapOptions<Scalar>> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Invalid(format!("alpha must be in (0, 1), got {}", self.alpha)));
        }
        Ok(BootstrapOptions {
            replicates: self.bootstrap_replicates,
            alpha: self.alpha,
            seed: self.seed,
            curve: self.parsed_curve()?,
        })
    }

    /// Canonical JSON serialization, used both for the copied config artifact
    /// and the manifest hash.
    pub fn canonical_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(Error::from)
    }

    pub fn hash(&self) -> Result<String> {
        let mut h = Sha256::new();
        h.update(self.canonical_json()?.as_bytes());
        Ok(format!("{:x}", h.finalize()))
    }
}

/// Written once per command invocation, next to the artifacts it describes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub crate_version: String,
}

pub fn write_run_artifacts(config: &RunConfig, command: &str) -> Result<()> {
    fs::create_dir_all(&config.out_dir).map_err(|e| Error::io(&config.out_dir, e))?;
    let cfg_path = config.out_dir.join("config.json");
    fs::write(&cfg_path, config.canonical_json()?).map_err(|e| Error::io(&cfg_path, e))?;
    let manifest = RunManifest {
        command: command.to_string(),
        config_sha256: config.hash()?,
        seed: config.seed,
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    let man_path = config.out_dir.join(format!("manifest_{command}.json"));
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&man_path, text).map_err(|e| Error::io(&man_path, e))?;
    Ok(())
}
