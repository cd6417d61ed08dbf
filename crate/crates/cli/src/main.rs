use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use shortmd_cli::commands::{self, Context};
use shortmd_cli::config::RunConfig;
use shortmd_cli::CliError;

#[derive(Parser)]
#[command(name = "shortmd", version, about = "Short-range molecular dynamics with subnode task scheduling")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration file (flat `key = value` lines)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads, overriding engine.worker_threads
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Seed, overriding the config
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory for output files
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the system and run the timed simulation
    Run,
    /// Time candidate subnode counts and report the fastest
    Autotune {
        /// Run the simulation at the selected subnode count afterwards
        #[arg(long)]
        run: bool,
    },
    /// Write the generated system as XYZ
    Generate {
        #[arg(long, default_value = "system.xyz")]
        file: String,
    },
    /// Compare one engine force evaluation with the brute-force oracle
    Verify,
    /// Print the effective configuration with every key
    ShowConfig,
}

fn load(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut config = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            RunConfig::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(t) = cli.threads {
        config.engine.worker_threads = t;
    }
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    config.validate()?;
    Ok(config)
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let config = load(cli)?;
    std::fs::create_dir_all(&cli.out)?;
    let ctx = Context { config, out_dir: cli.out.clone() };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match &cli.command {
        Command::Run => commands::run(&ctx, &mut out),
        Command::Autotune { run } => commands::autotune_cmd(&ctx, *run, &mut out).map(|_| ()),
        Command::Generate { file } => commands::generate(&ctx, file, &mut out),
        Command::Verify => commands::verify(&ctx, &mut out).map(|_| ()),
        Command::ShowConfig => {
            print!("{}", ctx.config.to_text());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("shortmd: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
