use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use s3_cli::config::{Mode, RunConfig};
use s3_cli::run::{run, validate, with_hint};

#[derive(Debug, Parser)]
#[command(name = "s3", version, about = "Space-split sensitivities of chaotic maps")]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    args: RunArgs,
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `run.mode`: s3, fd, both or diagnostics.
    #[arg(long, global = true)]
    mode: Option<Mode>,
    /// Output directory; overrides `run.out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Added to every seed in the configuration.
    #[arg(long, global = true, default_value_t = 0)]
    seed_offset: u64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Execute the configured run (the default).
    Run,
    /// Consistency and structure checks; exits nonzero on failure.
    Validate,
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("S3_THREADS") {
        let n: usize = v.parse().with_context(|| format!("S3_THREADS={v} is not a count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn load(args: &RunArgs) -> anyhow::Result<RunConfig> {
    let path = args.config.as_ref().context("--config is required")?;
    let mut cfg = RunConfig::load(path)?.with_seed_offset(args.seed_offset);
    if let Some(m) = args.mode {
        cfg.run.mode = m;
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> anyhow::Result<bool> {
    configure_threads()?;
    let cfg = load(&cli.args)?;
    let out = cli.args.out.as_deref();
    match cli.command.unwrap_or(Command::Run) {
        Command::Run => {
            let rep = run(&cfg, out)?;
            print!("{}", rep.summary);
            for (stage, t) in &rep.timings {
                println!("time {stage}: {:.2} s", t.as_secs_f64());
            }
            for f in &rep.files {
                println!("wrote {}", f.display());
            }
            Ok(true)
        }
        Command::Validate => {
            let rep = validate(&cfg, out)?;
            println!("config_hash: {}", rep.hash);
            for c in &rep.checks {
                let status = if c.passed { "PASS" } else { "FAIL" };
                println!("{status} {}: {}", c.name, c.detail);
            }
            Ok(rep.passed())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {:#}", with_hint(e));
            ExitCode::from(2)
        }
    }
}
