//! Transfer-record parsing, asset classification, and daily panel aggregation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::real::Real;
use crate::{Error, Result};

pub const NATIVE_ETH: &str = "ETH";

/// Dust filter: stream values below this are treated as structural zeros.
pub const DUST: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Buy,
    Sell,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    External,
    Internal,
    Erc20,
    Erc721,
    Erc1155,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssetClass {
    Eth,
    Stablecoin,
    Other,
}

/// One of the four daily response streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stream {
    EthSale,
    EthPurchase,
    StableSale,
    StablePurchase,
}

impl Stream {
    pub const ALL: [Stream; 4] =
        [Stream::EthSale, Stream::EthPurchase, Stream::StableSale, Stream::StablePurchase];

    pub fn label(self) -> &'static str {
        match self {
            Stream::EthSale => "eth_sale",
            Stream::EthPurchase => "eth_purchase",
            Stream::StableSale => "stable_sale",
            Stream::StablePurchase => "stable_purchase",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Stream::EthSale => "Ethereum Sale",
            Stream::EthPurchase => "Ethereum Purchase",
            Stream::StableSale => "Stablecoin Sale",
            Stream::StablePurchase => "Stablecoin Purchase",
        }
    }
}

impl FromStr for Stream {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eth_sale" => Ok(Stream::EthSale),
            "eth_purchase" => Ok(Stream::EthPurchase),
            "stable_sale" => Ok(Stream::StableSale),
            "stable_purchase" => Ok(Stream::StablePurchase),
            other => Err(Error::Invalid(format!("unknown stream `{other}`"))),
        }
    }
}

impl fmt::Display for Stream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One raw on-chain transfer, day index precomputed upstream (UTC days,
/// 1-based from the study start).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferRecord {
    pub wallet_id: String,
    pub day_index: usize,
    pub direction: Direction,
    pub category: Category,
    pub token_id: String,
    pub amount: f64,
}

/// Map from lowercase token contract address to symbol.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StablecoinRegistry(pub BTreeMap<String, String>);

impl StablecoinRegistry {
    /// The seven principal 2022 stablecoins (mainnet contract addresses).
    pub fn default_2022() -> Self {
        let pairs = [
            ("0xa0b86991c6218b36c1d19d4a2e9eb0ce3606eb48", "USDC"),
            ("0xdac17f958d2ee523a2206206994597c13d831ec7", "USDT"),
            ("0x4fabb145d64652a948d72533023f6e7a623c7c53", "BUSD"),
            ("0x0000000000085d4780b73119b644ae5ecd22b376", "TUSD"),
            ("0x056fd409e1d7a124bd7017459dfea2f387b6d5cd", "GUSD"),
            ("0x6b175474e89094c44da98b954eedeac495271d0f", "DAI"),
            ("0x853d955acef822db058eb8505911ed77f175b99e", "FRAX"),
        ];
        Self(pairs.iter().map(|(a, s)| (a.to_string(), s.to_string())).collect())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw: BTreeMap<String, String> = serde_json::from_str(&text)?;
        if raw.is_empty() {
            return Err(Error::Invalid(format!("empty stablecoin registry {}", path.display())));
        }
        Ok(Self(raw.into_iter().map(|(k, v)| (k.to_lowercase(), v)).collect()))
    }

    pub fn contains(&self, token_id: &str) -> bool {
        self.0.contains_key(&token_id.to_lowercase())
    }
}

/// Native-ETH categories map to `Eth`; registry ERC-20 tokens to
/// `Stablecoin`; everything else (NFTs, unregistered ERC-20) to `Other`.
pub fn classify_asset(token_id: &str, category: Category, registry: &StablecoinRegistry) -> AssetClass {
    match category {
        Category::External | Category::Internal => AssetClass::Eth,
        Category::Erc20 => {
            if registry.contains(token_id) {
                AssetClass::Stablecoin
            } else {
                AssetClass::Other
            }
        }
        Category::Erc721 | Category::Erc1155 => AssetClass::Other,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferFormat {
    Csv,
    Jsonl,
}

impl FromStr for TransferFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(TransferFormat::Csv),
            "jsonl" => Ok(TransferFormat::Jsonl),
            other => Err(Error::Invalid(format!("unknown transfer format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RejectedRow {
    pub line: usize,
    pub reason: String,
    pub raw: String,
}

#[derive(Debug, Clone)]
pub struct ParseOutcome {
    pub records: Vec<TransferRecord>,
    pub rejects: Vec<RejectedRow>,
}

#[derive(Debug, Deserialize)]
struct RawTransferRow {
    wallet_id: String,
    day_index: i64,
    direction: String,
    category: String,
    token_id: String,
    amount: f64,
}

fn validate_row(raw: RawTransferRow) -> std::result::Result<TransferRecord, String> {
    if raw.wallet_id.trim().is_empty() {
        return Err("empty wallet_id".into());
    }
    if raw.day_index < 1 {
        return Err(format!("day_index {} out of range", raw.day_index));
    }
    let direction = match raw.direction.as_str() {
        "buy" => Direction::Buy,
        "sell" => Direction::Sell,
        other => return Err(format!("unknown direction `{other}`")),
    };
    let category = match raw.category.as_str() {
        "external" => Category::External,
        "internal" => Category::Internal,
        "erc20" => Category::Erc20,
        "erc721" => Category::Erc721,
        "erc1155" => Category::Erc1155,
        other => return Err(format!("unknown category `{other}`")),
    };
    if !raw.amount.is_finite() {
        return Err("non-finite amount".into());
    }
    if raw.amount < 0.0 {
        return Err("negative amount".into());
    }
    Ok(TransferRecord {
        wallet_id: raw.wallet_id,
        day_index: raw.day_index as usize,
        direction,
        category,
        token_id: raw.token_id,
        amount: raw.amount,
    })
}

/// Parse exported transfer records. Malformed rows are collected into the
/// rejects report, never silently dropped.
pub fn parse_transfers(path: &Path, format: TransferFormat) -> Result<ParseOutcome> {
    let mut records = Vec::new();
    let mut rejects = Vec::new();
    match format {
        TransferFormat::Csv => {
            let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
            let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
            let headers = reader.headers()?.clone();
            for (idx, row) in reader.records().enumerate() {
                let line = idx + 2; // header is line 1
                let row = match row {
                    Ok(r) => r,
                    Err(e) => {
                        rejects.push(RejectedRow { line, reason: e.to_string(), raw: String::new() });
                        continue;
                    }
                };
                let raw_text = row.iter().collect::<Vec<_>>().join(",");
                match row.deserialize::<RawTransferRow>(Some(&headers)) {
                    Ok(raw) => match validate_row(raw) {
                        Ok(rec) => records.push(rec),
                        Err(reason) => rejects.push(RejectedRow { line, reason, raw: raw_text }),
                    },
                    Err(e) => rejects.push(RejectedRow { line, reason: e.to_string(), raw: raw_text }),
                }
            }
        }
        TransferFormat::Jsonl => {
            let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
            for (idx, line_res) in BufReader::new(file).lines().enumerate() {
                let line = idx + 1;
                let text = line_res.map_err(|e| Error::io(path, e))?;
                if text.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<RawTransferRow>(&text) {
                    Ok(raw) => match validate_row(raw) {
                        Ok(rec) => records.push(rec),
                        Err(reason) => rejects.push(RejectedRow { line, reason, raw: text }),
                    },
                    Err(e) => rejects.push(RejectedRow { line, reason: e.to_string(), raw: text }),
                }
            }
        }
    }
    Ok(ParseOutcome { records, rejects })
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Clone + Default> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::default(); rows * cols] }
    }
}

impl<T> Matrix<T> {
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> &T {
        &self.data[i * self.cols + j]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut T {
        &mut self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// Per-column standardization statistics (sample standard deviation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats<R> {
    pub name: String,
    pub mean: R,
    pub sd: R,
}

/// Daily wallet panel: the four response streams plus standardized covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "R: Real")]
pub struct Panel<R> {
    pub wallet_ids: Vec<String>,
    pub n_days: usize,
    pub eth_sale: Matrix<R>,
    pub eth_purchase: Matrix<R>,
    pub stable_sale: Matrix<R>,
    pub stable_purchase: Matrix<R>,
    /// n_days × p, standardized.
    pub covariates: Matrix<R>,
    pub covariate_stats: Vec<ColumnStats<R>>,
    /// Raw transfer counts per wallet-day (all asset classes), when known.
    pub txn_counts: Option<Matrix<u32>>,
}

impl<R: Real> Panel<R> {
    pub fn n_wallets(&self) -> usize {
        self.wallet_ids.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates.cols
    }

    pub fn stream(&self, s: Stream) -> &Matrix<R> {
        match s {
            Stream::EthSale => &self.eth_sale,
            Stream::EthPurchase => &self.eth_purchase,
            Stream::StableSale => &self.stable_sale,
            Stream::StablePurchase => &self.stable_purchase,
        }
    }

    pub fn stream_mut(&mut self, s: Stream) -> &mut Matrix<R> {
        match s {
            Stream::EthSale => &mut self.eth_sale,
            Stream::EthPurchase => &mut self.eth_purchase,
            Stream::StableSale => &mut self.stable_sale,
            Stream::StablePurchase => &mut self.stable_purchase,
        }
    }

    /// Covariate row X_t for a 1-based day.
    pub fn covariate_row(&self, day: usize) -> &[R] {
        self.covariates.row(day - 1)
    }

    /// Minimal panel for simulation studies: empty covariates, no counts.
    pub fn synthetic(m: usize, n_days: usize, covariates: Matrix<R>) -> Self {
        let wallet_ids = (0..m).map(|i| format!("w{i:04}")).collect();
        Panel {
            wallet_ids,
            n_days,
            eth_sale: Matrix::zeros(m, n_days),
            eth_purchase: Matrix::zeros(m, n_days),
            stable_sale: Matrix::zeros(m, n_days),
            stable_purchase: Matrix::zeros(m, n_days),
            covariates,
            covariate_stats: Vec::new(),
            txn_counts: None,
        }
    }
}

/// Aggregate transfer records to the daily wallet panel.
///
/// Wallets with fewer than `activity_threshold` transfers (any asset class)
/// are excluded. `Other`-class transfers count toward the threshold but
/// contribute to no stream.
pub fn build_panel<R: Real>(
    records: &[TransferRecord],
    n_days: usize,
    activity_threshold: usize,
    registry: &StablecoinRegistry,
) -> Result<Panel<R>> {
    if n_days < 1 {
        return Err(Error::Invalid("n_days must be >= 1".into()));
    }
    for rec in records {
        if rec.day_index > n_days {
            return Err(Error::Invalid(format!(
                "record for wallet {} has day_index {} beyond n_days {}",
                rec.wallet_id, rec.day_index, n_days
            )));
        }
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for rec in records {
        *counts.entry(rec.wallet_id.as_str()).or_insert(0) += 1;
    }
    let surviving: BTreeSet<&str> = counts
        .iter()
        .filter(|(_, &c)| c >= activity_threshold)
        .map(|(&w, _)| w)
        .collect();
    if surviving.is_empty() {
        return Err(Error::EmptyPanel { below_threshold: counts.len(), threshold: activity_threshold });
    }
    let wallet_ids: Vec<String> = surviving.iter().map(|w| w.to_string()).collect();
    let index: BTreeMap<&str, usize> =
        surviving.iter().enumerate().map(|(i, &w)| (w, i)).collect();

    let m = wallet_ids.len();
    let mut panel = Panel::<R>::synthetic(m, n_days, Matrix::zeros(n_days, 0));
    panel.wallet_ids = wallet_ids;
    let mut txn_counts = Matrix::<u32>::zeros(m, n_days);

    for rec in records {
        let Some(&i) = index.get(rec.wallet_id.as_str()) else { continue };
        let t = rec.day_index - 1;
        *txn_counts.at_mut(i, t) += 1;
        let class = classify_asset(&rec.token_id, rec.category, registry);
        let stream = match (class, rec.direction) {
            (AssetClass::Eth, Direction::Sell) => Stream::EthSale,
            (AssetClass::Eth, Direction::Buy) => Stream::EthPurchase,
            (AssetClass::Stablecoin, Direction::Sell) => Stream::StableSale,
            (AssetClass::Stablecoin, Direction::Buy) => Stream::StablePurchase,
            (AssetClass::Other, _) => continue,
        };
        let cell = panel.stream_mut(stream).at_mut(i, t);
        *cell = *cell + R::c(rec.amount);
    }
    panel.txn_counts = Some(txn_counts);
    Ok(panel)
}

#[derive(Debug, Deserialize)]
struct RawCovariateRow {
    day_index: usize,
    ethprice: Option<f64>,
    rf6m: Option<f64>,
}

/// Load the covariate file, forward-fill RF6M gaps, and z-score both
/// columns. A gap in ETHPRICE is fatal; so is a zero-variance column.
pub fn load_covariates<R: Real>(path: &Path, n_days: usize) -> Result<(Matrix<R>, Vec<ColumnStats<R>>)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let mut ethprice: Vec<Option<f64>> = vec![None; n_days];
    let mut rf6m: Vec<Option<f64>> = vec![None; n_days];
    for row in reader.deserialize::<RawCovariateRow>() {
        let row = row?;
        if row.day_index < 1 || row.day_index > n_days {
            return Err(Error::Parse {
                path: path.into(),
                message: format!("day_index {} outside [1, {}]", row.day_index, n_days),
            });
        }
        ethprice[row.day_index - 1] = row.ethprice;
        rf6m[row.day_index - 1] = row.rf6m;
    }
    let eth: Vec<f64> = ethprice
        .iter()
        .enumerate()
        .map(|(t, v)| {
            v.ok_or_else(|| Error::Parse {
                path: path.into(),
                message: format!("ETHPRICE missing on day {}", t + 1),
            })
        })
        .collect::<Result<_>>()?;
    // RF6M is published on business days only: forward-fill, leading gap
    // filled from the first observed value.
    let first = rf6m
        .iter()
        .flatten()
        .next()
        .copied()
        .ok_or_else(|| Error::Parse { path: path.into(), message: "RF6M has no values".into() })?;
    let mut filled = Vec::with_capacity(n_days);
    let mut last = first;
    for v in &rf6m {
        if let Some(x) = v {
            last = *x;
        }
        filled.push(last);
    }

    let columns = [("ETHPRICE", eth), ("RF6M", filled)];
    let mut matrix = Matrix::<R>::zeros(n_days, 2);
    let mut stats = Vec::with_capacity(2);
    for (j, (name, col)) in columns.iter().enumerate() {
        let n = col.len() as f64;
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        let sd = var.sqrt();
        if sd <= 0.0 {
            return Err(Error::DegenerateCovariate(name.to_string()));
        }
        for (t, v) in col.iter().enumerate() {
            *matrix.at_mut(t, j) = R::c((v - mean) / sd);
        }
        stats.push(ColumnStats { name: name.to_string(), mean: R::c(mean), sd: R::c(sd) });
    }
    Ok((matrix, stats))
}

// ---------------------------------------------------------------------------
// Panel serialization: one CSV per stream plus a JSON manifest.
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct PanelManifest<R> {
    m: usize,
    n_days: usize,
    wallet_ids: Vec<String>,
    covariate_stats: Vec<ColumnStats<R>>,
    has_counts: bool,
}

fn write_stream_csv<R: Real>(path: &Path, ids: &[String], mat: &Matrix<R>) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path).map_err(Error::from)?;
    let mut header = vec!["wallet_id".to_string()];
    header.extend((1..=mat.cols).map(|t| format!("day_{t}")));
    wtr.write_record(&header)?;
    for (i, id) in ids.iter().enumerate() {
        let mut row = vec![id.clone()];
        row.extend(mat.row(i).iter().map(|v| format!("{v}")));
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn read_stream_csv<R: Real>(path: &Path, m: usize, n: usize) -> Result<Matrix<R>> {
    let mut rdr = csv::Reader::from_path(path).map_err(Error::from)?;
    let mut mat = Matrix::<R>::zeros(m, n);
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        for t in 0..n {
            let raw = &row[t + 1];
            let v: f64 = raw.parse().map_err(|_| Error::Parse {
                path: path.into(),
                message: format!("bad value `{raw}` at row {i}"),
            })?;
            *mat.at_mut(i, t) = R::c(v);
        }
    }
    Ok(mat)
}

pub fn write_panel<R: Real>(dir: &Path, panel: &Panel<R>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = PanelManifest {
        m: panel.n_wallets(),
        n_days: panel.n_days,
        wallet_ids: panel.wallet_ids.clone(),
        covariate_stats: panel.covariate_stats.clone(),
        has_counts: panel.txn_counts.is_some(),
    };
    let manifest_path = dir.join("manifest.json");
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)
        .map_err(|e| Error::io(&manifest_path, e))?;
    for s in Stream::ALL {
        write_stream_csv(&dir.join(format!("{}.csv", s.label())), &panel.wallet_ids, panel.stream(s))?;
    }
    // covariates, standardized
    let cov_path = dir.join("covariates.csv");
    let mut wtr = csv::Writer::from_path(&cov_path).map_err(Error::from)?;
    let mut header = vec!["day_index".to_string()];
    header.extend(panel.covariate_stats.iter().map(|s| s.name.to_lowercase()));
    wtr.write_record(&header)?;
    for t in 0..panel.n_days {
        let mut row = vec![(t + 1).to_string()];
        row.extend(panel.covariates.row(t).iter().map(|v| format!("{v}")));
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| Error::io(&cov_path, e))?;
    if let Some(counts) = &panel.txn_counts {
        let path = dir.join("txn_counts.csv");
        let mut wtr = csv::Writer::from_path(&path).map_err(Error::from)?;
        let mut header = vec!["wallet_id".to_string()];
        header.extend((1..=panel.n_days).map(|t| format!("day_{t}")));
        wtr.write_record(&header)?;
        for (i, id) in panel.wallet_ids.iter().enumerate() {
            let mut row = vec![id.clone()];
            row.extend(counts.row(i).iter().map(|v| v.to_string()));
            wtr.write_record(&row)?;
        }
        wtr.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

pub fn read_panel<R: Real>(dir: &Path) -> Result<Panel<R>> {
    let manifest_path = dir.join("manifest.json");
    let text = fs::read_to_string(&manifest_path)
        .map_err(|_| Error::MissingArtifact(format!("panel manifest {}", manifest_path.display())))?;
    let manifest: PanelManifest<R> = serde_json::from_str(&text)?;
    let (m, n) = (manifest.m, manifest.n_days);
    let mut panel = Panel::<R>::synthetic(m, n, Matrix::zeros(n, manifest.covariate_stats.len()));
    panel.wallet_ids = manifest.wallet_ids;
    for s in Stream::ALL {
        *panel.stream_mut(s) = read_stream_csv(&dir.join(format!("{}.csv", s.label())), m, n)?;
    }
    let cov_path = dir.join("covariates.csv");
    let mut rdr = csv::Reader::from_path(&cov_path).map_err(Error::from)?;
    for (t, row) in rdr.records().enumerate() {
        let row = row?;
        for j in 0..manifest.covariate_stats.len() {
            let v: f64 = row[j + 1].parse().map_err(|_| Error::Parse {
                path: cov_path.clone(),
                message: format!("bad covariate value at day {}", t + 1),
            })?;
            *panel.covariates.at_mut(t, j) = R::c(v);
        }
    }
    panel.covariate_stats = manifest.covariate_stats;
    if manifest.has_counts {
        let path = dir.join("txn_counts.csv");
        let mut rdr = csv::Reader::from_path(&path).map_err(Error::from)?;
        let mut counts = Matrix::<u32>::zeros(m, n);
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            for t in 0..n {
                *counts.at_mut(i, t) = row[t + 1].parse().map_err(|_| Error::Parse {
                    path: path.clone(),
                    message: format!("bad count at row {i}"),
                })?;
            }
        }
        panel.txn_counts = Some(counts);
    }
    Ok(panel)
}

pub fn write_rejects(path: &Path, rejects: &[RejectedRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path).map_err(Error::from)?;
    wtr.write_record(["line", "reason", "raw"])?;
    for r in rejects {
        wtr.write_record([r.line.to_string(), r.reason.clone(), r.raw.clone()])?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
