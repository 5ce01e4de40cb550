use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rbno::experiment::{DataRole, ExperimentConfig, Outcome, Preset, RunId, Suite, Workspace};
use rbno::{BasisKind, Error, ProblemKind, Result};

const OUTPUT_ENV: &str = "RBNO_OUTPUT";

#[derive(Parser)]
#[command(name = "rbno", version, about = "Reduced-basis neural operator experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// semilinear or burgers (ignored when --config is given)
    #[arg(long, global = true, default_value = "semilinear")]
    problem: ProblemKind,
    /// desk or paper (ignored when --config is given)
    #[arg(long, global = true, default_value = "desk")]
    preset: Preset,
    /// JSON experiment configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output root (overrides RBNO_OUTPUT and the config)
    #[arg(long, global = true)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Print the effective configuration as JSON
    Config,
    /// Generate datasets (all planned ones unless --n and --seed are given)
    Generate {
        #[arg(long, default_value = "train", value_parser = parse_role)]
        role: DataRole,
        #[arg(long, requires = "seed")]
        n: Option<usize>,
        #[arg(long, requires = "n")]
        seed: Option<u64>,
        /// Also generate the large reference set
        #[arg(long)]
        reference: bool,
    },
    /// Compute reduced bases
    Basis {
        #[arg(long)]
        kind: Option<BasisKind>,
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long, requires = "seed")]
        n: Option<usize>,
        #[arg(long, requires = "n")]
        seed: Option<u64>,
        /// Build the reference proxies from the large reference set
        #[arg(long)]
        reference: bool,
    },
    /// Train networks (all configured runs matching the filters)
    Train {
        #[arg(long)]
        rank: Option<usize>,
        /// Basis pair, e.g. input_dis,output_pca
        #[arg(long, value_parser = parse_pair)]
        pair: Option<(BasisKind, BasisKind)>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate metric suites and write CSV tables
    Evaluate {
        #[arg(long, value_parser = parse_suite)]
        suite: Option<Suite>,
    },
}

fn parse_role(s: &str) -> std::result::Result<DataRole, String> {
    match s {
        "train" => Ok(DataRole::Train),
        "test" => Ok(DataRole::Test),
        "reference" => Ok(DataRole::Reference),
        _ => Err(format!("unknown role '{s}' (expected train, test or reference)")),
    }
}

fn parse_pair(s: &str) -> std::result::Result<(BasisKind, BasisKind), String> {
    let (a, b) = s.split_once(',').ok_or("expected INPUT,OUTPUT")?;
    Ok((a.parse().map_err(|e: Error| e.to_string())?, b.parse().map_err(|e: Error| e.to_string())?))
}

fn parse_suite(s: &str) -> std::result::Result<Suite, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn config_and_root(common: &Common) -> Result<(ExperimentConfig, PathBuf)> {
    let config = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::preset(common.preset, common.problem),
    };
    let root = common
        .output
        .clone()
        .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("rbno-output"));
    Ok((config, root))
}

fn report(what: &str, outcome: Outcome) {
    match outcome {
        Outcome::Created => println!("created {what}"),
        Outcome::Exists => println!("exists  {what}"),
    }
}

fn check_rank(ws: &Workspace, r: usize) -> Result<()> {
    let d = ws.config().dim();
    if r == 0 || r > d {
        return Err(Error::InvalidArgument(format!("rank {r} must lie in 1..={d}")));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let (config, root) = config_and_root(&cli.common)?;
    if let Command::Config = cli.command {
        println!("{}", serde_json::to_string_pretty(&config)?);
        return Ok(());
    }
    let ws = Workspace::new(root, config)?;
    match cli.command {
        Command::Config => unreachable!(),
        Command::Generate { role, n, seed, reference } => {
            let planned = match (n, seed) {
                (Some(n), Some(seed)) => vec![(role, n, seed)],
                _ => ws.planned_datasets(reference),
            };
            for (role, n, seed) in planned {
                let outcome = ws.generate(role, n, seed)?;
                report(&ws.dataset_dir(role, n, seed).display().to_string(), outcome);
            }
        }
        Command::Basis { kind, rank, n, seed, reference } => {
            if let Some(r) = rank {
                check_rank(&ws, r)?;
            }
            if reference {
                let r = rank.unwrap_or(ws.config().excess_rank);
                let kinds =
                    kind.map_or(vec![BasisKind::OutputPca, BasisKind::OutputDis, BasisKind::InputDis], |k| vec![k]);
                for k in kinds {
                    report(&ws.reference_basis_dir(k, r).display().to_string(), ws.build_reference_basis(k, r)?);
                }
                return Ok(());
            }
            let planned: Vec<_> = match (n, seed) {
                (Some(n), Some(seed)) => {
                    let r = rank.unwrap_or(ws.config().basis_rank());
                    let kinds = kind.map_or(BasisKind::ALL.to_vec(), |k| vec![k]);
                    kinds.into_iter().map(|k| (k, r, n, seed)).collect()
                }
                _ => ws
                    .planned_bases()
                    .into_iter()
                    .filter(|(k, ..)| kind.is_none_or(|want| want == *k))
                    .map(|(k, r, n, s)| (k, rank.unwrap_or(r), n, s))
                    .collect(),
            };
            for (k, r, n, s) in planned {
                report(&ws.basis_dir(k, r, n, s).display().to_string(), ws.build_basis(k, r, n, s)?);
            }
        }
        Command::Train { rank, pair, n, seed } => {
            let runs: Vec<RunId> = ws
                .config()
                .runs()
                .into_iter()
                .filter(|run| rank.is_none_or(|r| r == run.rank))
                .filter(|run| pair.is_none_or(|p| p == (run.input, run.output)))
                .filter(|run| n.is_none_or(|n| n == run.n_train))
                .filter(|run| seed.is_none_or(|s| s == run.seed))
                .collect();
            if runs.is_empty() {
                return Err(Error::InvalidArgument("no configured run matches the filters".into()));
            }
            for run in runs {
                match ws.train_run(&run) {
                    Ok(outcome) => report(&format!("run {run}"), outcome),
                    Err(e) => {
                        eprintln!("run {run} failed");
                        return Err(e);
                    }
                }
            }
        }
        Command::Evaluate { suite } => {
            let suites = suite.map_or(Suite::ALL.to_vec(), |s| vec![s]);
            for s in suites {
                let rows = ws.evaluate(s)?;
                println!("wrote {} ({} rows)", ws.metrics_path(s).display(), rows.len());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
