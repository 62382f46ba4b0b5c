//! Experiment runner for the torus Ricci-DeTurck flow laboratory.
//!
//! Exit codes: 0 all enabled verdicts pass, 1 verdict failure,
//! 2 configuration error, 3 numerical blow-up (partial artifacts retained).

use anyhow::Result;
use clap::{Parser, Subcommand};
use rdtf_cli::config::ExperimentConfig;
use rdtf_cli::pipeline::{self, Paths};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "rdtf", about = "Ricci-DeTurck flow laboratory on the flat torus")]
struct Cli {
    /// TOML experiment configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the config seed
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Dotted-path config override KEY=VALUE (repeatable)
    #[arg(long = "override", global = true)]
    overrides: Vec<String>,

    /// Worker threads (0 = rayon default)
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline: gen-data, run-flow, related-flow, check-scalar,
    /// verify-estimates, report
    Run,
    /// Generate the initial metric and write g0.rdtl
    GenData,
    /// Integrate the Ricci-DeTurck flow and write flow.rdtl
    RunFlow,
    /// Construct the related Ricci flow (diffeomorphism pullback)
    RelatedFlow,
    /// Distributional scalar curvature verdict and conjugate-heat testing
    CheckScalar,
    /// Localized Sobolev estimates and rate fits on the stored trajectory
    VerifyEstimates,
    /// Summarize stored reports and set the exit code from their verdicts
    Report,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    if let Some(out) = &cli.out {
        overrides.push(format!("output.dir={}", out.display()));
    }
    match &cli.config {
        Some(p) => ExperimentConfig::load(p, &overrides),
        None => ExperimentConfig::from_toml_with_overrides("", &overrides),
    }
}

fn print_verdicts(paths: &Paths) -> Result<bool> {
    let verdicts = pipeline::collect_verdicts(paths)?;
    let mut all = true;
    for (name, pass) in &verdicts {
        println!("{} {}", if *pass { "PASS" } else { "FAIL" }, name);
        all &= *pass;
    }
    if verdicts.is_empty() {
        println!("no verdicts recorded in {}", paths.dir.display());
    }
    Ok(all)
}

fn dispatch(cli: &Cli, cfg: &ExperimentConfig) -> Result<ExitCode> {
    let paths = Paths::new(std::path::Path::new(&cfg.output.dir));
    match cli.command {
        Command::GenData => {
            pipeline::stage_gen(cfg, &paths)?;
            println!("wrote {}", paths.g0().display());
            Ok(ExitCode::SUCCESS)
        }
        Command::RunFlow => {
            let out = pipeline::stage_flow(cfg, &paths)?;
            if let Some(reason) = out.stopped {
                eprintln!("flow stopped early: {reason}");
                return Ok(ExitCode::from(3));
            }
            println!("wrote {} ({} snapshots)", paths.flow().display(), out.traj.len());
            Ok(ExitCode::SUCCESS)
        }
        Command::RelatedFlow => {
            let out = pipeline::stage_related(cfg, &paths)?;
            println!("wrote {} ({} snapshots)", paths.related().display(), out.ell.len());
            Ok(ExitCode::SUCCESS)
        }
        Command::CheckScalar => {
            let rep = pipeline::stage_scalar(cfg, &paths)?;
            println!("wrote {}", paths.report("scalar").display());
            Ok(if rep.all_verdicts_pass() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::VerifyEstimates => {
            let rep = pipeline::stage_verify(cfg, &paths)?;
            println!("wrote {}", paths.report("verify").display());
            Ok(if rep.all_verdicts_pass() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Report => {
            Ok(if print_verdicts(&paths)? { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Run => {
            pipeline::stage_gen(cfg, &paths)?;
            let flow = pipeline::stage_flow(cfg, &paths)?;
            if let Some(reason) = flow.stopped {
                eprintln!("flow stopped early: {reason}");
                return Ok(ExitCode::from(3));
            }
            pipeline::stage_related(cfg, &paths)?;
            if cfg.scalar_test.enabled {
                pipeline::stage_scalar(cfg, &paths)?;
            }
            if cfg.verify.enabled {
                pipeline::stage_verify(cfg, &paths)?;
            }
            Ok(if print_verdicts(&paths)? { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) =
            rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global()
        {
            eprintln!("thread pool: {e}");
        }
    }
    let cfg = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e:#}");
            return ExitCode::from(2);
        }
    };
    match dispatch(&cli, &cfg) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
