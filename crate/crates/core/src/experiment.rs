//! Config-driven experiment orchestration: load a market, replay a strategy,
//! and write the ledger, weight series, match tally and summary to disk.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diffusion::{simulate_local_time_profile, DiffusionSpec, LocalTimeProfile};
use crate::error::{Error, Result};
use crate::format::fmt_f64;
use crate::io::{ingest_csv, to_market_path, PriceTable, ValueMode};
use crate::ledger::{build_ledger, DecompositionLedger, MarketPath};
use crate::simplex::SimplexVector;
use crate::strategies::{InitialWeightsConfig, StrategyConfig};
use crate::synthetic::SyntheticMarket;
use crate::two_asset::{discretize_to_grid, tally_matches, BinaryPath, MatchTally};
use crate::variational::{variational_report, ConstraintSet, VariationalReport, WeightSpec, DEFAULT_ETA};

/// Grid spacing used to discretize two-asset runs when none is configured.
pub const DEFAULT_SIGMA: f64 = 0.1;
/// Largest accepted `|log V − D − H(π(0)|μ(0)) + H(π(T)|μ(T))|`.
pub const SUMMARY_TOLERANCE: f64 = 1e-9;
/// Largest accepted one-step decomposition residual.
pub const STEP_TOLERANCE: f64 = 1e-10;

/// Everything needed to replay one experiment.
///
/// Exactly one of `input` and `synthetic` must be set. A relative `input`
/// is resolved against the directory of the config file by [`RunConfig::load`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticMarket>,
    #[serde(default)]
    pub mode: ValueMode,
    /// `"equal"` or an explicit array. Defaults to equal weights for price
    /// data, the first-date capitalizations for capitalization data, and
    /// the generator's own weights for synthetic markets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_weights: Option<InitialWeightsConfig>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Grid spacing for the two-asset match tally.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    pub strategy: StrategyConfig,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    /// A config with default settings and no market source yet.
    pub fn new(strategy: StrategyConfig) -> Self {
        Self {
            input: None,
            synthetic: None,
            mode: ValueMode::default(),
            initial_weights: None,
            out: default_out(),
            seed: 0,
            sigma: None,
            strategy,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text)?;
        if let (Some(input), Some(dir)) = (&config.input, path.parent()) {
            if input.is_relative() {
                config.input = Some(dir.join(input));
            }
        }
        Ok(config)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma.unwrap_or(DEFAULT_SIGMA)
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.input, &self.synthetic) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidParameter(
                    "set either `input` or `[synthetic]`, not both".into(),
                ))
            }
            (None, None) => {
                return Err(Error::InvalidParameter(
                    "one of `input` or `[synthetic]` is required".into(),
                ))
            }
            (Some(p), None) if !p.is_file() => {
                return Err(Error::Data(format!("input file {} does not exist", p.display())))
            }
            _ => {}
        }
        let sigma = self.sigma();
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma = {sigma} must be positive")));
        }
        self.strategy.to_spec()?;
        Ok(())
    }

    /// Loads or generates the price table named by the config.
    pub fn table(&self) -> Result<PriceTable> {
        match (&self.input, &self.synthetic) {
            (Some(path), None) => ingest_csv(path, self.mode),
            (None, Some(market)) => market.generate(self.seed),
            _ => {
                self.validate()?;
                unreachable!("validate rejects every other combination")
            }
        }
    }

    /// Builds the market path, applying the configured initial weights.
    pub fn market_path(&self) -> Result<(PriceTable, MarketPath)> {
        let table = self.table()?;
        let weights = match &self.initial_weights {
            Some(InitialWeightsConfig::Explicit(w)) => Some(SimplexVector::new(w.clone())?),
            Some(InitialWeightsConfig::Named(name)) if name == "equal" => {
                Some(SimplexVector::uniform(table.n_tickers())?)
            }
            Some(InitialWeightsConfig::Named(name)) => {
                return Err(Error::InvalidParameter(format!(
                    "unknown initial_weights `{name}` (expected \"equal\" or an array)"
                )))
            }
            None => match &self.synthetic {
                Some(market) => Some(market.initial_weights()?),
                None => None,
            },
        };
        let path = to_market_path(&table, weights.as_ref())?;
        Ok((table, path))
    }
}

/// Headline numbers of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub strategy: StrategyConfig,
    pub n_assets: usize,
    pub n_steps: usize,
    pub dropped_dates: usize,
    pub log_v: f64,
    pub drift: f64,
    pub initial_entropy: f64,
    pub final_entropy: f64,
    pub cumulative_free_energy: f64,
    /// `log V(T) − D(T) − H(π(0)|μ(0)) + H(π(T)|μ(T))`
    pub residual: f64,
    pub max_step_residual: f64,
    pub is_energy_entropy: bool,
    pub is_greedy_entropy: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub two_asset: Option<TwoAssetSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoAssetSummary {
    pub sigma: f64,
    pub y_start: f64,
    pub y_end: f64,
    pub total_matches: usize,
    pub unmatched: usize,
}

/// In-memory results of a run, alongside the files written.
#[derive(Debug, Clone)]
pub struct RunBundle {
    pub ledger: DecompositionLedger,
    pub pi_series: Vec<SimplexVector>,
    pub summary: RunSummary,
    pub tally: Option<MatchTally>,
    pub files: Vec<PathBuf>,
}

/// What a run writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Artifacts {
    /// Ledger, weights, series, match tally (two assets) and summary.
    Full,
    /// Ledger and summary only.
    LedgerOnly,
}

/// Runs the experiment and writes the full artifact bundle to `config.out`.
pub fn run_experiment(config: &RunConfig) -> Result<RunBundle> {
    execute(config, Artifacts::Full)
}

/// Runs the experiment and writes only the ledger and the summary.
pub fn decompose(config: &RunConfig) -> Result<RunBundle> {
    execute(config, Artifacts::LedgerOnly)
}

pub fn execute(config: &RunConfig, artifacts: Artifacts) -> Result<RunBundle> {
    config.validate()?;
    let (table, path) = config.market_path()?;
    let spec = config.strategy.to_spec()?;
    let pi_series = spec.run(&path)?;
    let ledger = build_ledger(&path, &pi_series)?;

    let tally = if path.n_assets() == 2 && artifacts == Artifacts::Full {
        let y = log_ratio_series(&path)?;
        let binary = discretize_to_grid(&y, config.sigma())?;
        Some((tally_matches(&binary), y[0], y[y.len() - 1]))
    } else {
        None
    };

    let summary = RunSummary {
        strategy: config.strategy.clone(),
        n_assets: path.n_assets(),
        n_steps: ledger.rows.len(),
        dropped_dates: table.dropped_dates,
        log_v: ledger.log_v(),
        drift: ledger.drift(),
        initial_entropy: ledger.initial_entropy,
        final_entropy: ledger.final_entropy(),
        cumulative_free_energy: ledger.cumulative_energy(),
        residual: ledger.summary_residual(),
        max_step_residual: ledger.max_step_residual(),
        is_energy_entropy: ledger.is_energy_entropy,
        is_greedy_entropy: ledger.is_greedy_entropy,
        two_asset: tally.as_ref().map(|(t, y0, y1)| TwoAssetSummary {
            sigma: config.sigma(),
            y_start: *y0,
            y_end: *y1,
            total_matches: t.total_matches,
            unmatched: t.unmatched_count,
        }),
    };

    let out = &config.out;
    std::fs::create_dir_all(out)?;
    let mut files = Vec::new();
    files.push(write_with(out, "ledger.csv", |w| ledger.write_csv(w))?);
    files.push(write_with(out, "ledger.jsonl", |w| ledger.write_jsonl(w))?);
    if artifacts == Artifacts::Full {
        files.push(write_with(out, "weights.csv", |w| {
            write_weights(w, &table, &path, &pi_series)
        })?);
        files.push(write_with(out, "series.csv", |w| write_series(w, &path, &ledger))?);
        if let Some((t, _, _)) = &tally {
            files.push(write_with(out, "match_tally.csv", |w| t.write_csv(w))?);
        }
    }
    files.push(write_with(out, "summary.json", |mut w| {
        serde_json::to_writer_pretty(&mut w, &summary)?;
        w.write_all(b"\n")?;
        Ok(())
    })?);

    if !(summary.residual.abs() <= SUMMARY_TOLERANCE) {
        return Err(Error::IdentityCheck(format!(
            "summary residual {:e} exceeds {SUMMARY_TOLERANCE:e}",
            summary.residual
        )));
    }
    if !(summary.max_step_residual <= STEP_TOLERANCE) {
        return Err(Error::IdentityCheck(format!(
            "one-step residual {:e} exceeds {STEP_TOLERANCE:e}",
            summary.max_step_residual
        )));
    }
    log::info!(
        "log V(T) = {:.6}, D(T) = {:.6}, residual = {:e}",
        summary.log_v,
        summary.drift,
        summary.residual
    );
    Ok(RunBundle {
        ledger,
        pi_series,
        summary,
        tally: tally.map(|(t, _, _)| t),
        files,
    })
}

/// `Y(t) = log(μ₁(t)/μ₂(t))` of a two-asset market.
pub fn log_ratio_series(path: &MarketPath) -> Result<Vec<f64>> {
    if path.n_assets() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: path.n_assets(),
        });
    }
    Ok(path.weights().iter().map(|w| (w[0] / w[1]).ln()).collect())
}

/// Grid path of a two-asset market's log ratio at spacing `sigma`.
pub fn binary_path_from_market(path: &MarketPath, sigma: f64) -> Result<BinaryPath> {
    discretize_to_grid(&log_ratio_series(path)?, sigma)
}

fn write_with<F>(dir: &Path, name: &str, f: F) -> Result<PathBuf>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    let path = dir.join(name);
    let mut w = BufWriter::new(File::create(&path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(path)
}

/// `t,date,pi_<ticker>…,mu_<ticker>…` for every observation time.
fn write_weights<W: Write>(writer: W, table: &PriceTable, path: &MarketPath, pi: &[SimplexVector]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["t".to_string(), "date".to_string()];
    header.extend(table.tickers.iter().map(|t| format!("pi_{t}")));
    header.extend(table.tickers.iter().map(|t| format!("mu_{t}")));
    w.write_record(&header)?;
    for (t, (p, m)) in pi.iter().zip(path.weights()).enumerate() {
        let mut row = vec![t.to_string(), path.labels()[t].clone()];
        row.extend(p.iter().map(|&x| fmt_f64(x)));
        row.extend(m.iter().map(|&x| fmt_f64(x)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `t,date,log_v,drift,entropy` for every observation time.
fn write_series<W: Write>(writer: W, path: &MarketPath, ledger: &DecompositionLedger) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "date", "log_v", "drift", "entropy"])?;
    let entropy = std::iter::once(ledger.initial_entropy).chain(ledger.rows.iter().map(|r| r.entropy_level));
    for (t, ((lv, d), h)) in ledger
        .log_v_series()
        .into_iter()
        .zip(ledger.drift_series())
        .zip(entropy)
        .enumerate()
    {
        w.write_record([
            t.to_string(),
            path.labels()[t].clone(),
            fmt_f64(lv),
            fmt_f64(d),
            fmt_f64(h),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Input of the `optimize` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeConfig {
    pub weight: WeightSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraints: Option<ConstraintSet>,
    #[serde(default = "default_eta")]
    pub eta: f64,
}

fn default_eta() -> f64 {
    DEFAULT_ETA
}

impl OptimizeConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn run(&self) -> Result<VariationalReport> {
        let w = self.weight.build()?;
        let constraints = match self.constraints {
            Some(c) => Some(ConstraintSet::new(c.floor, c.ratio_bounds)?),
            None => None,
        };
        variational_report(&w, constraints.as_ref(), self.eta)
    }
}

/// Input of the `localtime` command.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalTimeConfig {
    pub diffusion: DiffusionSpec,
    pub levels: Vec<f64>,
    #[serde(default = "default_n_paths")]
    pub n_paths: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_n_paths() -> usize {
    10_000
}

impl LocalTimeConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn run(&self) -> Result<LocalTimeProfile> {
        simulate_local_time_profile(&self.diffusion, &self.levels, self.n_paths, self.seed)
    }
}
