//! `csense` — scenario runner and table builder for controlled sensing
//! simulations.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use csense_core::fisher::{build_fisher_table, FisherTable};
use csense_core::fmt_g9;
use csense_core::harness::{self, Artifacts, PolicyKind, ScenarioConfig};
use csense_core::policies::dp::{dp_solve, DpPolicy};
use csense_core::{Error, Result};

#[derive(Parser)]
#[command(name = "csense", version, about = "Controlled sensing simulator")]
struct Cli {
    /// Cap the worker thread count (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Suppress the summary table on stdout.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write results CSVs.
    Run(RunArgs),
    /// Solve the dynamic program offline and write the policy table.
    BuildDp(BuildDpArgs),
    /// Precompute the Fisher-information lookup table.
    BuildFisher(BuildFisherArgs),
    /// Print the contents of a previously built table.
    Inspect(InspectArgs),
    /// Check a scenario file and report the first problem found.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated policy list (gfis2, dp, random, fixed, full-budget);
    /// overrides the config.
    #[arg(long, value_delimiter = ',')]
    policies: Option<Vec<String>>,
    /// Output directory for results CSVs.
    /// Defaults to $CSENSE_OUT_DIR, then ./results.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Load a prebuilt Fisher table instead of rebuilding it.
    #[arg(long)]
    fisher_table: Option<PathBuf>,
    /// Load a prebuilt DP policy instead of re-solving.
    #[arg(long)]
    dp_table: Option<PathBuf>,
}

#[derive(Args)]
struct BuildDpArgs {
    #[arg(long)]
    config: PathBuf,
    /// Belief-grid resolution d (overrides config).
    #[arg(long)]
    resolution: Option<usize>,
    /// Planning horizon L (overrides config).
    #[arg(long)]
    horizon: Option<usize>,
    /// Monte-Carlo samples per backup point (overrides config).
    #[arg(long)]
    mc_samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output table path (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BuildFisherArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output table path (CSV).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InspectArgs {
    /// A fisher-table CSV or a DP-policy JSON file.
    table: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    config: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Usage problems (and --help/--version) all land here; help and
            // version print to stdout and exit 0, everything else is usage.
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };

    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: failed to configure thread pool: {e}");
            return ExitCode::from(1);
        }
    }

    let result = match &cli.command {
        Command::Run(args) => cmd_run(args, cli.quiet),
        Command::BuildDp(args) => cmd_build_dp(args, cli.quiet),
        Command::BuildFisher(args) => cmd_build_fisher(args, cli.quiet),
        Command::Inspect(args) => cmd_inspect(args),
        Command::Validate(args) => cmd_validate(args, cli.quiet),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load(path: &Path) -> Result<ScenarioConfig> {
    harness::load_config(path)
}

fn cmd_run(args: &RunArgs, quiet: bool) -> Result<()> {
    let mut config = load(&args.config)?;
    if let Some(names) = &args.policies {
        config.policies = names
            .iter()
            .map(|s| PolicyKind::parse(s))
            .collect::<Result<Vec<_>>>()?;
    }

    let mut artifacts = Artifacts::default();
    if let Some(path) = &args.fisher_table {
        let file = fs::File::open(path)?;
        artifacts.fisher = Some(FisherTable::read_csv(file)?);
    }
    if let Some(path) = &args.dp_table {
        let file = fs::File::open(path)?;
        artifacts.dp = Some(DpPolicy::read_json(file)?);
    }

    let out_dir = args
        .out
        .clone()
        .or_else(|| std::env::var_os("CSENSE_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"));

    let result = harness::run_comparison(&config, args.seed, artifacts)?;
    harness::write_results(&out_dir, &result)?;

    if !quiet {
        println!("{:<12} {:>14} {:>14} {:>10}", "policy", "mse", "mse_se", "accuracy");
        for r in &result.reports {
            println!(
                "{:<12} {:>14} {:>14} {:>9.1}%",
                r.policy,
                fmt_g9(r.mse),
                fmt_g9(r.mse_se),
                100.0 * r.detection_accuracy
            );
        }
        println!("results written to {}", out_dir.display());
    }
    Ok(())
}

fn cmd_build_dp(args: &BuildDpArgs, quiet: bool) -> Result<()> {
    let config = load(&args.config)?;
    let model = config.build_model()?;
    let (policy, grid) = dp_solve(
        &model,
        &config.transition,
        args.horizon.unwrap_or(config.dp_horizon),
        args.resolution.unwrap_or(config.dp_resolution),
        args.mc_samples.unwrap_or(config.dp_mc_samples),
        args.seed.unwrap_or(config.seed),
    )?;
    let file = fs::File::create(&args.out)?;
    policy.write_json(file)?;
    if !quiet {
        println!(
            "dp policy: {} stages, {} grid points (n={}, d={}) -> {}",
            policy.stages.len(),
            grid.len(),
            policy.n_states,
            policy.resolution,
            args.out.display()
        );
    }
    Ok(())
}

fn cmd_build_fisher(args: &BuildFisherArgs, quiet: bool) -> Result<()> {
    let config = load(&args.config)?;
    let model = config.build_model()?;
    let table = build_fisher_table(&model)?;
    let file = fs::File::create(&args.out)?;
    table.write_csv(file)?;
    if !quiet {
        println!(
            "fisher table: {} states x {} controls -> {}",
            table.phi.len(),
            table.phi.first().map(Vec::len).unwrap_or(0),
            args.out.display()
        );
    }
    Ok(())
}

fn cmd_inspect(args: &InspectArgs) -> Result<()> {
    let bytes = fs::read(&args.table)?;
    // DP policies are JSON objects; fisher tables are CSV with a header.
    if bytes.trim_ascii_start().starts_with(b"{") {
        let policy = DpPolicy::read_json(bytes.as_slice())?;
        println!(
            "dp policy v{}: n_states={} resolution={} horizon={} stages={}",
            policy.version,
            policy.n_states,
            policy.resolution,
            policy.horizon,
            policy.stages.len()
        );
        for (k, stage) in policy.stages.iter().enumerate() {
            let lo = stage.values.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = stage.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            println!(
                "stage {k}: {} points, value range [{}, {}]",
                stage.values.len(),
                fmt_g9(lo),
                fmt_g9(hi)
            );
        }
    } else {
        let table = FisherTable::read_csv(bytes.as_slice())?;
        println!("{:>6} {:>8} {:>16} {:>7}", "state", "control", "phi", "best_h");
        for (x, row) in table.phi.iter().enumerate() {
            for (u, &phi) in row.iter().enumerate() {
                println!(
                    "{:>6} {:>8} {:>16} {:>7}",
                    x + 1,
                    u + 1,
                    fmt_g9(phi),
                    table.best_h[x][u]
                );
            }
        }
    }
    Ok(())
}

fn cmd_validate(args: &ValidateArgs, quiet: bool) -> Result<()> {
    let config = load(&args.config)?;
    // Assemble the model too: covariance validity is part of the scenario.
    config.build_model().map_err(|e| match e {
        Error::Validation { field, message } => Error::Validation { field, message },
        other => Error::Validation {
            field: "sensors".into(),
            message: other.to_string(),
        },
    })?;
    if !quiet {
        println!(
            "ok: {} states, {} sensors, {} controls (budget {})",
            config.states.len(),
            config.sensors.len(),
            config.controls.len(),
            config.budget
        );
    }
    Ok(())
}
