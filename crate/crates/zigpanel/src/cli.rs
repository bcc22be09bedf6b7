//! Command-line orchestration: `ingest`, `fit`, `bootstrap`, `summarize`,
//! `simulate`. All commands are config-driven, deterministic for a fixed
//! seed, and write a manifest beside their artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::analysis::{
    activity_series, export_activity_csv, export_band_csv, export_covariates_csv,
    export_curves_csv, export_intercept_scatter, export_skewness_csv, export_window_summary_csv,
    require_artifact, window_summary,
};
use crate::basis::SplineBasis;
use crate::bootstrap::simultaneous_band;
use crate::config::{write_run_artifacts, RunConfig};
use crate::fit::{coef_table, embed, fit_from, initial_parameters, FitResult};
use crate::ingest::{
    build_panel, parse_transfers, read_panel, write_panel, write_rejects, StablecoinRegistry,
    Stream,
};
use crate::model::{ModelSpec, Variant};
use crate::{Error, Result, Scalar};

/// Daily wallet panels and zero-inflated Gamma panel models for Ethereum
/// transfer data.
#[derive(Debug, Parser)]
#[command(name = "zigpanel", version, about)]
pub struct Cli {
    /// JSON config file; omitted fields fall back to defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Master seed override; all randomness derives from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads (0 = one per logical CPU).
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    /// Restrict to one stream (eth_sale, eth_purchase, stable_sale,
    /// stable_purchase).
    #[arg(long, global = true)]
    pub stream: Option<String>,

    /// Restrict to one variant (A, B, full).
    #[arg(long, global = true)]
    pub variant: Option<String>,

    /// Bootstrap replicate count override.
    #[arg(long = "B", global = true)]
    pub replicates: Option<usize>,

    /// Band level override.
    #[arg(long, global = true)]
    pub alpha: Option<Scalar>,

    /// Output directory override (default: $ZIGPANEL_OUT or ./out).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse transfer exports and build the daily wallet panel.
    Ingest,
    /// Fit the configured model variants to each configured stream.
    Fit,
    /// Parametric-bootstrap simultaneous confidence bands.
    Bootstrap,
    /// Descriptive statistics, intercept summaries, and window reports.
    Summarize,
    /// Simulate a synthetic panel from a fitted model file.
    Simulate {
        /// FitResult JSON written by `fit`.
        #[arg(long)]
        phi_file: PathBuf,
    },
}

/// Process exit codes: 0 success, 1 crash/invalid input, 2 model
/// non-convergence (reported, distinct from a crash).
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NONCONVERGENCE: i32 = 2;

pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::NonConvergence(_) | Error::BootstrapInstability { .. } => EXIT_NONCONVERGENCE,
        _ => EXIT_ERROR,
    }
}

/// Merge precedence: flags > config file > defaults.
pub fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(stream) = &cli.stream {
        let s: Stream = stream.parse()?;
        cfg.streams = vec![s.label().to_string()];
    }
    if let Some(variant) = &cli.variant {
        let v: Variant = variant.parse()?;
        cfg.variants = vec![v.label().to_string()];
    }
    if let Some(b) = cli.replicates {
        cfg.bootstrap_replicates = b;
    }
    if let Some(alpha) = cli.alpha {
        cfg.alpha = alpha;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    // validate the enumerations up front
    cfg.parsed_streams()?;
    cfg.parsed_variants()?;
    cfg.parsed_curve()?;
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = effective_config(cli)?;
    // workers stays an execution detail outside RunConfig so artifacts do
    // not depend on it; replicate batching keeps results worker-count
    // invariant. A pre-existing global pool (repeated calls in tests) is
    // fine to reuse.
    if let Some(workers) = cli.workers {
        if workers > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
        }
    }
    match &cli.command {
        Command::Ingest => cmd_ingest(&cfg),
        Command::Fit => cmd_fit(&cfg),
        Command::Bootstrap => cmd_bootstrap(&cfg),
        Command::Summarize => cmd_summarize(&cfg),
        Command::Simulate { phi_file } => cmd_simulate(&cfg, phi_file),
    }
}

fn panel_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir.join("panel")
}

fn fit_path(cfg: &RunConfig, stream: Stream, variant: Variant) -> PathBuf {
    cfg.out_dir.join(format!("fit_{}_{}.json", stream.label(), variant.label()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_fit(path: &Path) -> Result<FitResult<Scalar>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(Error::from)
}

pub fn cmd_ingest(cfg: &RunConfig) -> Result<()> {
    let transfers = cfg
        .transfers
        .as_deref()
        .ok_or_else(|| Error::MissingArtifact("transfers path (config field `transfers`)".into()))?;
    require_artifact(transfers, "transfer export")?;
    let covariates = cfg
        .covariates
        .as_deref()
        .ok_or_else(|| Error::MissingArtifact("covariates path (config field `covariates`)".into()))?;
    require_artifact(covariates, "covariate file")?;
    let registry = match &cfg.registry {
        Some(path) => StablecoinRegistry::from_json_file(path)?,
        None => StablecoinRegistry::default_2022(),
    };

    let outcome = parse_transfers(transfers, cfg.transfer_format()?)?;
    let mut panel =
        build_panel::<Scalar>(&outcome.records, cfg.n_days, cfg.activity_threshold, &registry)?;
    let (cov, stats) = crate::ingest::load_covariates(covariates, cfg.n_days)?;
    panel.covariates = cov;
    panel.covariate_stats = stats;

    write_run_artifacts(cfg, "ingest")?;
    write_panel(&panel_dir(cfg), &panel)?;
    write_rejects(&cfg.out_dir.join("rejected_rows.csv"), &outcome.rejects)?;
    eprintln!(
        "ingest: {} wallets x {} days, {} records, {} rejected",
        panel.n_wallets(),
        panel.n_days,
        outcome.records.len(),
        outcome.rejects.len()
    );
    Ok(())
}

pub fn cmd_fit(cfg: &RunConfig) -> Result<()> {
    let dir = panel_dir(cfg);
    require_artifact(&dir.join("manifest.json"), "panel (run `ingest` first)")?;
    let panel = read_panel::<Scalar>(&dir)?;
    let basis = SplineBasis::for_days(panel.n_days, cfg.df)?;
    write_run_artifacts(cfg, "fit")?;

    let variants = cfg.parsed_variants()?;
    let mut any_unconverged = Vec::new();
    for stream in cfg.parsed_streams()? {
        // warm-start path A -> B -> Full regardless of which variants are
        // requested; only the requested ones are written
        let mut warm: Option<FitResult<Scalar>> = None;
        for variant in [Variant::A, Variant::B, Variant::Full] {
            let needed = variants.contains(&variant)
                || variants.iter().any(|v| *v > variant);
            if !needed {
                continue;
            }
            let spec = ModelSpec::new(variant, stream, basis.clone());
            let init = match &warm {
                Some(prev) => {
                    let mut phi =
                        embed(&prev.phi_hat, variant, panel.n_wallets(), panel.n_covariates());
                    if variant == Variant::Full {
                        // per-wallet intercepts from the data, shared terms warm
                        let data_init = initial_parameters(&spec, &panel)?;
                        phi.alpha = data_init.alpha;
                        phi.gamma = data_init.gamma;
                    }
                    phi
                }
                None => initial_parameters(&spec, &panel)?,
            };
            let result = fit_from(&spec, &panel, &cfg.fit, &init)?;
            if variants.contains(&variant) {
                write_json(&fit_path(cfg, stream, variant), &result)?;
                let coef_path = cfg
                    .out_dir
                    .join(format!("coef_{}_{}.csv", stream.label(), variant.label()));
                let mut wtr = csv::Writer::from_path(&coef_path)?;
                wtr.write_record(["name", "estimate", "se", "z"])?;
                for row in coef_table(&result) {
                    wtr.write_record([
                        row.name,
                        format!("{}", row.estimate),
                        row.se.map(|v| format!("{v}")).unwrap_or_default(),
                        row.z.map(|v| format!("{v}")).unwrap_or_default(),
                    ])?;
                }
                wtr.flush().map_err(|e| Error::io(&coef_path, e))?;
                eprintln!(
                    "fit: {} variant {} nll {:.4} aic {:.4} bic {:.4} converged {}",
                    stream.label(),
                    variant.label(),
                    result.nll,
                    result.aic,
                    result.bic,
                    result.converged
                );
            }
            if !result.converged && variants.contains(&variant) {
                any_unconverged.push(format!("{}/{}", stream.label(), variant.label()));
            }
            warm = Some(result);
        }
    }
    if !any_unconverged.is_empty() {
        return Err(Error::NonConvergence(format!(
            "fits did not converge: {}",
            any_unconverged.join(", ")
        )));
    }
    Ok(())
}

pub fn cmd_bootstrap(cfg: &RunConfig) -> Result<()> {
    let dir = panel_dir(cfg);
    require_artifact(&dir.join("manifest.json"), "panel (run `ingest` first)")?;
    let panel = read_panel::<Scalar>(&dir)?;
    write_run_artifacts(cfg, "bootstrap")?;
    let opts = cfg.bootstrap_options()?;

    for stream in cfg.parsed_streams()? {
        for variant in cfg.parsed_variants()? {
            let path = fit_path(cfg, stream, variant);
            require_artifact(&path, "fitted model (run `fit` first)")?;
            let fitted = read_fit(&path)?;
            let band = simultaneous_band(&fitted.spec, &fitted, &panel, &cfg.fit, &opts)?;
            let stem = format!("band_{}_{}_{}", stream.label(), variant.label(), cfg.curve);
            write_json(&cfg.out_dir.join(format!("{stem}.json")), &band)?;
            export_band_csv(&cfg.out_dir.join(format!("{stem}.csv")), &band)?;
            eprintln!(
                "bootstrap: {} variant {} curve {} c_alpha {:.6} ({} replicates, {} failed)",
                stream.label(),
                variant.label(),
                cfg.curve,
                band.c_alpha,
                band.replicates,
                band.n_failed
            );
        }
    }
    Ok(())
}

pub fn cmd_summarize(cfg: &RunConfig) -> Result<()> {
    let dir = panel_dir(cfg);
    require_artifact(&dir.join("manifest.json"), "panel (run `ingest` first)")?;
    let panel = read_panel::<Scalar>(&dir)?;
    write_run_artifacts(cfg, "summarize")?;

    let series = activity_series(&panel, cfg.ma_window)?;
    export_activity_csv(&cfg.out_dir.join("activity.csv"), &series)?;
    if panel.n_covariates() > 0 {
        export_covariates_csv(&cfg.out_dir.join("covariate_series.csv"), &panel)?;
    }

    // model-based reports for whichever fits exist
    let mut fits: Vec<FitResult<Scalar>> = Vec::new();
    for stream in cfg.parsed_streams()? {
        for variant in cfg.parsed_variants()? {
            let path = fit_path(cfg, stream, variant);
            if path.exists() {
                fits.push(read_fit(&path)?);
            }
        }
    }
    let mut summaries = Vec::new();
    for f in &fits {
        summaries.push((f.spec.stream, window_summary(f, &panel, &cfg.windows)?));
        export_curves_csv(
            &cfg.out_dir.join(format!(
                "curves_{}_{}.csv",
                f.spec.stream.label(),
                f.spec.variant.label()
            )),
            f,
        )?;
    }
    if !summaries.is_empty() {
        export_window_summary_csv(&cfg.out_dir.join("window_summary.csv"), &summaries)?;
    }
    let full_fits: Vec<&FitResult<Scalar>> =
        fits.iter().filter(|f| f.spec.variant == Variant::Full).collect();
    if !full_fits.is_empty() {
        export_skewness_csv(&cfg.out_dir.join("intercept_skewness.csv"), &full_fits)?;
        export_intercept_scatter(
            &cfg.out_dir.join("intercepts.csv"),
            &panel.wallet_ids,
            &full_fits,
        )?;
    }
    eprintln!("summarize: {} fits summarized", fits.len());
    Ok(())
}

pub fn cmd_simulate(cfg: &RunConfig, phi_file: &Path) -> Result<()> {
    require_artifact(phi_file, "fitted model file")?;
    let fitted = read_fit(phi_file)?;
    let dir = panel_dir(cfg);
    let mut template = if dir.join("manifest.json").exists() {
        read_panel::<Scalar>(&dir)?
    } else {
        let m = fitted.phi_hat.alpha.len().max(1);
        let n = fitted.spec.basis.boundary_knots().1 as usize;
        let p = fitted.phi_hat.zeta.len();
        crate::ingest::Panel::synthetic(m, n, crate::ingest::Matrix::zeros(n, p))
    };
    write_run_artifacts(cfg, "simulate")?;
    let sim = crate::bootstrap::simulate(&fitted.spec, &fitted.phi_hat, &template, cfg.seed)?;
    *template.stream_mut(fitted.spec.stream) = sim;
    template.txn_counts = None;
    let out = cfg.out_dir.join("simulated_panel");
    write_panel(&out, &template)?;
    eprintln!(
        "simulate: wrote {} x {} panel ({} stream) to {}",
        template.n_wallets(),
        template.n_days,
        fitted.spec.stream.label(),
        out.display()
    );
    Ok(())
}
