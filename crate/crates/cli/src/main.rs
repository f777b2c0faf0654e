use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use eeport::diffusion::{DiffusionKind, DiffusionSpec};
use eeport::experiment::{
    binary_path_from_market, decompose, run_experiment, LocalTimeConfig, OptimizeConfig, RunBundle, RunConfig,
    DEFAULT_SIGMA,
};
use eeport::io::{ingest_csv, to_market_path, ValueMode};
use eeport::strategies::{InitialWeightsConfig, StrategyConfig};
use eeport::two_asset::{constant_weight_decomposition, tally_matches, BinaryPath};
use eeport::variational::{ConstraintSet, WeightSpec, DEFAULT_ETA};
use eeport::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "eeport",
    version,
    about = "Free-energy and entropy ledgers for portfolios relative to the market"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Replay a strategy and write the full artifact bundle.
    Run(RunArgs),
    /// Replay a strategy and write only the ledger and summary.
    Decompose(RunArgs),
    /// Tally matched and unmatched moves of a two-asset path.
    Match(MatchArgs),
    /// Solve the weight-curve variational problem.
    Optimize(OptimizeArgs),
    /// Estimate expected local times by Monte Carlo.
    Localtime(LocalTimeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Price,
    Capitalization,
}

impl From<Mode> for ValueMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Price => ValueMode::Price,
            Mode::Capitalization => ValueMode::Capitalization,
        }
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Run config (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Price CSV (`date,ticker,value`); replaces the config's market.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Overrides the strategy's λ. Without a config, selects the λ-strategy.
    #[arg(long)]
    lambda: Option<f64>,
    /// Grid spacing for the two-asset match tally.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MatchArgs {
    /// Binary path text file, or a two-ticker price CSV (`.csv`).
    #[arg(long)]
    input: PathBuf,
    /// Grid spacing; required to discretize CSV input.
    #[arg(long)]
    sigma: Option<f64>,
    /// Constant weight on the first asset, for the log-value decomposition.
    #[arg(long)]
    q: Option<f64>,
    #[arg(long, value_enum, default_value = "price")]
    mode: Mode,
    /// Output directory for `match_tally.csv` and `match.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum WeightKind {
    #[value(name = "bang_bang")]
    BangBang,
    Ou,
}

#[derive(Debug, Args)]
struct OptimizeArgs {
    /// Optimize config (TOML); otherwise use --kind and --gamma.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    kind: Option<WeightKind>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Lower bound δ on q.
    #[arg(long)]
    floor: Option<f64>,
    /// Weight-ratio bounds `A,B`.
    #[arg(long, value_parser = parse_pair)]
    ratio_bounds: Option<(f64, f64)>,
    #[arg(long)]
    eta: Option<f64>,
    /// Report file (JSON); printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DiffusionName {
    #[value(name = "bang_bang")]
    BangBang,
    Ou,
}

#[derive(Debug, Args)]
struct LocalTimeArgs {
    /// Local-time config (TOML); otherwise use --kind, --alpha and --vol.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    kind: Option<DiffusionName>,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long = "vol", default_value_t = 1.0)]
    vol: f64,
    #[arg(long, default_value_t = 1e-4)]
    h: f64,
    #[arg(long, default_value_t = 0.02)]
    eps: f64,
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<f64>>,
    #[arg(long)]
    n_paths: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Profile CSV; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run_command(args, false),
        Command::Decompose(args) => run_command(args, true),
        Command::Match(args) => match_command(args),
        Command::Optimize(args) => optimize_command(args),
        Command::Localtime(args) => localtime_command(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn parse_pair(text: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = text.split_once(',').ok_or("expected `A,B`")?;
    let num = |s: &str| s.trim().parse::<f64>().map_err(|e| format!("`{s}`: {e}"));
    Ok((num(a)?, num(b)?))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))
}

fn run_config(args: &RunArgs) -> Result<RunConfig> {
    let mut config = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => {
            if args.input.is_none() {
                return Err(Error::InvalidParameter("either --config or --input is required".into()));
            }
            let strategy = match args.lambda {
                Some(lambda) => StrategyConfig {
                    kind: "lambda".into(),
                    lambda: Some(lambda),
                    pi0: Some(InitialWeightsConfig::Named("market".into())),
                    ..StrategyConfig::default()
                },
                None => StrategyConfig {
                    kind: "constant".into(),
                    pi0: Some(InitialWeightsConfig::Named("equal".into())),
                    ..StrategyConfig::default()
                },
            };
            RunConfig::new(strategy)
        }
    };
    if let Some(input) = &args.input {
        config.input = Some(input.clone());
        config.synthetic = None;
    }
    if let Some(mode) = args.mode {
        config.mode = mode.into();
    }
    if let Some(lambda) = args.lambda {
        if !matches!(config.strategy.kind.as_str(), "lambda" | "flow") {
            log::warn!("--lambda has no effect on a `{}` strategy", config.strategy.kind);
        }
        config.strategy.lambda = Some(lambda);
    }
    if let Some(sigma) = args.sigma {
        config.sigma = Some(sigma);
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = &args.out {
        config.out = out.clone();
    }
    Ok(config)
}

fn run_command(args: RunArgs, ledger_only: bool) -> Result<()> {
    let config = run_config(&args)?;
    let bundle: RunBundle = if ledger_only {
        decompose(&config)?
    } else {
        run_experiment(&config)?
    };
    let s = &bundle.summary;
    println!(
        "log_v={:.10} drift={:.10} h0={:.10} hT={:.10} residual={:.3e} energy_entropy={} greedy_entropy={}",
        s.log_v, s.drift, s.initial_entropy, s.final_entropy, s.residual, s.is_energy_entropy, s.is_greedy_entropy
    );
    for f in &bundle.files {
        log::info!("wrote {}", f.display());
    }
    Ok(())
}

fn match_command(args: MatchArgs) -> Result<()> {
    let is_csv = args.input.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let path = if is_csv {
        let table = ingest_csv(&args.input, args.mode.into())?;
        let market = to_market_path(&table, None)?;
        binary_path_from_market(&market, args.sigma.unwrap_or(DEFAULT_SIGMA))?
    } else {
        let path = BinaryPath::from_text(&read_text(&args.input)?)?;
        match args.sigma {
            Some(s) if s != path.sigma() => BinaryPath::new(path.y0(), s, path.steps().to_vec())?,
            _ => path,
        }
    };
    let tally = tally_matches(&path);
    let decomposition = args.q.map(|q| constant_weight_decomposition(&path, q)).transpose()?;
    println!(
        "steps={} matches={} unmatched={} net_level={}",
        path.len(),
        tally.total_matches,
        tally.unmatched_count,
        path.net_level()
    );
    if let Some(d) = &decomposition {
        println!(
            "match_term={:.12} unmatched_term={:.12} concentration_term={:.12} log_rel_value={:.12}",
            d.match_term, d.unmatched_term, d.concentration_term, d.log_rel_value
        );
        if d.residual().abs() > 1e-10 {
            return Err(Error::IdentityCheck(format!(
                "decomposition residual {:e}",
                d.residual()
            )));
        }
    }
    if let Some(out) = &args.out {
        std::fs::create_dir_all(out)?;
        tally.write_csv(BufWriter::new(File::create(out.join("match_tally.csv"))?))?;
        let report = serde_json::json!({
            "signs": path.signs(),
            "y0": path.y0(),
            "sigma": path.sigma(),
            "net_level": path.net_level(),
            "tally": tally,
            "decomposition": decomposition,
        });
        write_json(&out.join("match.json"), &report)?;
    }
    Ok(())
}

fn optimize_command(args: OptimizeArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => OptimizeConfig::from_toml(&read_text(path)?)?,
        None => {
            let gamma = args
                .gamma
                .ok_or_else(|| Error::InvalidParameter("--gamma is required without --config".into()))?;
            let weight = match args.kind.unwrap_or(WeightKind::BangBang) {
                WeightKind::BangBang => WeightSpec::BangBang { gamma },
                WeightKind::Ou => WeightSpec::Ou { gamma },
            };
            OptimizeConfig {
                weight,
                constraints: None,
                eta: DEFAULT_ETA,
            }
        }
    };
    if args.floor.is_some() || args.ratio_bounds.is_some() {
        let base = config.constraints.unwrap_or_default();
        config.constraints = Some(ConstraintSet {
            floor: args.floor.unwrap_or(base.floor),
            ratio_bounds: args.ratio_bounds.or(base.ratio_bounds),
        });
    }
    if let Some(eta) = args.eta {
        config.eta = eta;
    }
    let report = config.run()?;
    match &args.out {
        Some(out) => {
            write_json(out, &report)?;
            println!(
                "lambda_eq_weight={:.10} lambda_optimal={:.10} lambda_supremum={:.10}",
                report.lambda_eq_weight, report.lambda_optimal, report.lambda_supremum
            );
        }
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(())
}

fn localtime_command(args: LocalTimeArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => LocalTimeConfig::from_toml(&read_text(path)?)?,
        None => {
            let kind = match args.kind.unwrap_or(DiffusionName::BangBang) {
                DiffusionName::BangBang => DiffusionKind::BangBang {
                    alpha: args.alpha,
                    sigma: args.vol,
                },
                DiffusionName::Ou => DiffusionKind::Ou {
                    alpha: args.alpha,
                    sigma: args.vol,
                },
            };
            LocalTimeConfig {
                diffusion: DiffusionSpec::new(kind, args.h, args.eps)?,
                levels: vec![0.25, 0.5, 1.0],
                n_paths: 10_000,
                seed: 0,
            }
        }
    };
    if let Some(levels) = args.levels {
        config.levels = levels;
    }
    if let Some(n) = args.n_paths {
        config.n_paths = n;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let profile = config.run()?;
    match &args.out {
        Some(out) => {
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            let mut w = BufWriter::new(File::create(out)?);
            profile.write_csv(&mut w)?;
            w.flush()?;
        }
        None => profile.write_csv(std::io::stdout().lock())?,
    }
    if profile.discarded > 0 {
        log::warn!("{} paths hit the time limit and were discarded", profile.discarded);
    }
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}
