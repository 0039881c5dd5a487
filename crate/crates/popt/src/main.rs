//! Command-line front end: single mechanism runs, config-driven replication
//! sweeps, the exact tiny-market oracle, and the misreport experiment.
//!
//! Exit codes: 0 = success, 1 = the mechanism or its verification failed,
//! 2 = bad input (file, schema, or configuration). The `POPT_OUT_DIR`
//! environment variable overrides any other choice of output directory.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use popt::auction::{AuctionInstance, MechanismConfig};
use popt::harness::io::{instance_to_text, parse_input, InputFormat, ParsedInput};
use popt::harness::oracle::ip_oracle_instance;
use popt::harness::{
    misreport_gain, run_experiment, ExperimentConfig, MechanismOutcome, TypedPopulation,
};
use popt::spectrum;
use popt::{Error, Result};

#[derive(Parser)]
#[command(
    name = "popt",
    version,
    about = "Randomized combinatorial auctions with posted supply prices"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the mechanism once on one market and print the outcome as JSON.
    Solve(SolveArgs),
    /// Run a config-driven replication sweep and emit one CSV per figure.
    Experiment(ExperimentArgs),
    /// Solve a tiny market exactly by guarded exhaustive search.
    Oracle(OracleArgs),
    /// Estimate the expected payoff delta from misreporting one's type.
    SpTest(SpTestArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Json,
    Text,
}

impl From<FormatArg> for InputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => InputFormat::Json,
            FormatArg::Text => InputFormat::Text,
        }
    }
}

#[derive(Parser)]
struct SolveArgs {
    /// Market file: a JSON market, a JSON grid recipe, or a text market.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
    /// Mechanism parameters as a JSON file (defaults apply when absent).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides every other seed source.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for solution.json and the market rendered as text.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Parser)]
struct ExperimentArgs {
    /// Experiment description as a JSON file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Overrides the config's replication count.
    #[arg(long)]
    replications: Option<usize>,
}

#[derive(Parser)]
struct OracleArgs {
    /// Market file; grid recipes are generated first using their own seed.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
}

#[derive(Parser)]
struct SpTestArgs {
    /// Misreport experiment description as a JSON file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's replication count.
    #[arg(long)]
    replications: Option<usize>,
}

/// JSON schema of the `sp-test` config file.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpTestConfig {
    population: TypedPopulation,
    #[serde(default)]
    mechanism: MechanismConfig,
    /// True type of the deviating agent.
    xi: usize,
    /// Type the deviator reports instead.
    zeta: usize,
    #[serde(default)]
    rng_seed: u64,
    replications: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(args) => solve(args),
        Command::Experiment(args) => experiment(args),
        Command::Oracle(args) => oracle(args),
        Command::SpTest(args) => sp_test(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Schema { .. }
        | Error::Io(_)
        | Error::InvalidConfig(_)
        | Error::BundleSpaceTooLarge { .. }
        | Error::OracleTooLarge(_) => 2,
        Error::NumericalFailure(_)
        | Error::RoundingStall(_)
        | Error::LotteryDivergence(_)
        | Error::VerificationFailure(_) => 1,
    }
}

/// Print to stdout, shrugging off a closed pipe (e.g. `popt ... | head`).
fn emit(text: &str) {
    use std::io::Write as _;
    let _ = writeln!(std::io::stdout(), "{text}");
}

/// `POPT_OUT_DIR` beats the flag, which beats the config file.
fn effective_out_dir(flag: Option<PathBuf>, config: Option<PathBuf>) -> Option<PathBuf> {
    if let Ok(dir) = std::env::var("POPT_OUT_DIR") {
        if !dir.is_empty() {
            return Some(PathBuf::from(dir));
        }
    }
    flag.or(config)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let label = path.display().to_string();
    let text = std::fs::read_to_string(path)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{label}: {e}")))?;
    serde_json::from_str(&text).map_err(|e| Error::Schema { path: label, message: e.to_string() })
}

/// Turn a parsed input into a concrete market, generating grids with `seed`
/// (flag-provided seeds win over the recipe's own).
fn realize_instance(
    parsed: ParsedInput,
    seed_flag: Option<u64>,
    fallback_seed: u64,
) -> Result<(AuctionInstance, u64)> {
    match parsed {
        ParsedInput::Instance(instance) => Ok((instance, seed_flag.unwrap_or(fallback_seed))),
        ParsedInput::Grid(grid) => {
            let seed = seed_flag.unwrap_or(grid.rng_seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let instance = spectrum::generate(&grid, &mut rng)?;
            Ok((instance, seed))
        }
    }
}

fn solve(args: SolveArgs) -> Result<()> {
    let mechanism: MechanismConfig = match &args.config {
        Some(path) => read_json(path)?,
        None => MechanismConfig::default(),
    };
    let parsed = parse_input(&args.input, args.format.into())?;
    let (instance, seed) = realize_instance(parsed, args.seed, mechanism.rng_seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let outcome = popt::harness::run_mechanism(&instance, &mechanism, &mut rng)?;
    let doc = outcome_json(&instance, &outcome, seed);
    emit(&serde_json::to_string_pretty(&doc).expect("plain data"));
    if let Some(dir) = effective_out_dir(args.out_dir, None) {
        std::fs::create_dir_all(&dir)?;
        std::fs::write(
            dir.join("solution.json"),
            format!("{}\n", serde_json::to_string_pretty(&doc).expect("plain data")),
        )?;
        std::fs::write(dir.join("instance.txt"), instance_to_text(&instance))?;
    }
    Ok(())
}

fn outcome_json(
    instance: &AuctionInstance,
    outcome: &MechanismOutcome,
    seed: u64,
) -> serde_json::Value {
    let ctx = &outcome.perturbed;
    let point = outcome.sampled_point();
    let allocation: Vec<Option<Vec<u32>>> = (0..instance.n_agents)
        .map(|i| ctx.allocated_bundle(point, i).map(|b| ctx.bundles[b].counts.clone()))
        .collect();
    serde_json::json!({
        "seed": seed,
        "epsilon_u": outcome.epsilon_u,
        "relaxation_value": outcome.lp_solution.objective_value,
        "expected_utility": outcome.lottery.expected_value(&outcome.raw_values()),
        "prices": outcome.prices.per_good,
        "lottery_weights": outcome.lottery.weights,
        "sampled_index": outcome.sampled_index,
        "sampled_allocation": allocation,
        "reports": outcome.reports,
    })
}

fn experiment(args: ExperimentArgs) -> Result<()> {
    let mut cfg: ExperimentConfig = read_json(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.rng_seed = seed;
    }
    if let Some(reps) = args.replications {
        cfg.replications = reps;
    }
    cfg.out_dir = effective_out_dir(args.out_dir, cfg.out_dir.take());
    let report = run_experiment(&cfg)?;
    for s in &report.per_lambda {
        let intlp = s.mean_total_utility_intlp.map(|v| v.to_string()).unwrap_or_else(|| "-".into());
        emit(&format!(
            "lambda {}: expected utility {:.4} (relaxation {:.4}, exact {intlp}), \
             mean over-allocation {:.4}",
            s.lambda,
            s.mean_total_utility_popt,
            s.mean_total_utility_lp,
            s.mean_total_over_allocation
        ));
    }
    if let Some(dir) = &cfg.out_dir {
        emit(&format!("wrote CSV metrics to {}", dir.display()));
    }
    Ok(())
}

fn oracle(args: OracleArgs) -> Result<()> {
    let parsed = parse_input(&args.input, args.format.into())?;
    let (instance, _) = realize_instance(parsed, None, 0)?;
    let solution = ip_oracle_instance(&instance)?;
    let doc = serde_json::json!({
        "value": solution.value,
        "assignment": solution.assignment,
    });
    emit(&serde_json::to_string_pretty(&doc).expect("plain data"));
    Ok(())
}

fn sp_test(args: SpTestArgs) -> Result<()> {
    let mut cfg: SpTestConfig = read_json(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.rng_seed = seed;
    }
    if let Some(reps) = args.replications {
        cfg.replications = reps;
    }
    let outcome = misreport_gain(
        &cfg.population,
        cfg.xi,
        cfg.zeta,
        &cfg.mechanism,
        cfg.rng_seed,
        cfg.replications,
    )?;
    emit(&serde_json::to_string_pretty(&outcome).expect("plain data"));
    Ok(())
}
