use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lpvrom_cli::{CliError, CliResult, ExperimentConfig, Pipeline, Summary};

#[derive(Parser)]
#[command(name = "lpvrom", version, about = "Reduced-order LPV model experiments")]
struct Args {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Master seed (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Build the plant, trims, Gramians and training data.
    Generate,
    /// Fit grid ROMs for every algorithm and order.
    Fit,
    /// Tabulate prediction errors per scenario.
    Eval,
    /// Closed-loop MPC study.
    Mpc,
    /// Merge the tables into report.csv.
    Report,
    /// All of the above.
    All,
}

fn run(args: &Args) -> CliResult<Summary> {
    let (mut cfg, label) = match &args.config {
        Some(p) => (
            ExperimentConfig::load(p)?,
            p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned()),
        ),
        None => (ExperimentConfig::default(), "<defaults>".to_string()),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let cache = std::env::var_os("ROM_CACHE_DIR").map(PathBuf::from);
    let pipeline = Pipeline::new(cfg, &label, args.out.clone(), cache)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = args.jobs {
        if j == 0 {
            return Err(CliError::Config("--jobs must be positive".into()));
        }
        builder = builder.num_threads(j);
    }
    let pool = builder.build().map_err(|e| CliError::Config(e.to_string()))?;
    pool.install(|| match args.command {
        Command::Generate => pipeline.generate(),
        Command::Fit => pipeline.fit(),
        Command::Eval => pipeline.eval(),
        Command::Mpc => pipeline.mpc(),
        Command::Report => pipeline.report(),
        Command::All => pipeline.run_all(),
    })
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(s) => {
            for p in &s.written {
                println!("wrote {}", p.display());
            }
            println!("{} written, {} cached", s.written.len(), s.reused);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
