use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use ahmpc_cli::config::RunConfig;
use ahmpc_cli::run::{parse_sweep, run, sweep};
use ahmpc_cli::terminal::{build_terminal, dump_series};
use ahmpc_core::ahmpc::SimulationLog;
use ahmpc_core::plant::Pendulum;
use clap::Parser;

const CONFIG_ERROR: u8 = 2;
const NUMERIC_ERROR: u8 = 3;
const IO_ERROR: u8 = 1;

/// Adaptive horizon MPC on the double pendulum.
#[derive(Debug, Parser)]
#[command(name = "ahmpc", version)]
struct Args {
    /// Flat `key = value` config file; flags override it.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Feedback degree of the terminal pair: 1, 3 or 5.
    #[arg(long)]
    degree: Option<String>,
    /// Number of closed-loop steps.
    #[arg(long)]
    steps: Option<String>,
    /// Noise generator seed, or `off`.
    #[arg(long, value_name = "INT|off")]
    noise_seed: Option<String>,
    /// CSV output; standard output when absent.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Run noisy simulations concurrently, e.g. `seeds=0..9`.
    #[arg(long, value_name = "seeds=A..B")]
    sweep: Option<String>,
    /// Write the series coefficients and the square completion here.
    #[arg(long, value_name = "DIR")]
    dump_series: Option<PathBuf>,
}

fn resolve(args: &Args) -> Result<RunConfig, String> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        cfg.apply_file(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    let flags = [
        ("degree", args.degree.clone()),
        ("steps", args.steps.clone()),
        ("noise", args.noise_seed.clone()),
        ("out", args.out.as_ref().map(|p| p.display().to_string())),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, &v).map_err(|e| e.to_string())?;
        }
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn diverged(log: &SimulationLog) -> bool {
    log.states.last().is_some_and(|x| x.iter().any(|v| !v.is_finite()))
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cfg = match resolve(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("ahmpc: config error: {e}");
            return ExitCode::from(CONFIG_ERROR);
        }
    };
    let seeds = match args.sweep.as_deref().map(parse_sweep).transpose() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("ahmpc: config error: {e}");
            return ExitCode::from(CONFIG_ERROR);
        }
    };

    let plant = Pendulum::new(cfg.plant.clone());
    let terminal = match build_terminal(&plant, cfg.degree) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("ahmpc: terminal pair: {e}");
            return ExitCode::from(NUMERIC_ERROR);
        }
    };
    if let Some(dir) = &args.dump_series {
        if let Err(e) = dump_series(&terminal, dir) {
            eprintln!("ahmpc: {}: {e}", dir.display());
            return ExitCode::from(IO_ERROR);
        }
    }

    if let Some(seeds) = seeds {
        let base = cfg.out.clone().unwrap_or_else(|| PathBuf::from("run.csv"));
        let mut code = ExitCode::SUCCESS;
        for (seed, result) in sweep(&cfg, &terminal.pair, seeds, &base) {
            match result {
                Ok((log, summary)) => {
                    println!("seed={seed} {summary}");
                    if diverged(&log) {
                        code = ExitCode::from(NUMERIC_ERROR);
                    }
                }
                Err(e) => {
                    eprintln!("ahmpc: seed {seed}: {e}");
                    return ExitCode::from(IO_ERROR);
                }
            }
        }
        return code;
    }

    let result = match &cfg.out {
        Some(path) => match fs::File::create(path) {
            Ok(f) => run(&cfg, &terminal.pair, &mut BufWriter::new(f)),
            Err(e) => Err(e),
        },
        None => run(&cfg, &terminal.pair, &mut io::stdout().lock()),
    };
    match result {
        Ok((log, summary)) => {
            if cfg.out.is_some() {
                println!("{summary}");
            } else {
                eprintln!("{summary}");
            }
            let _ = io::stdout().flush();
            if diverged(&log) {
                eprintln!("ahmpc: the state left the finite numbers");
                return ExitCode::from(NUMERIC_ERROR);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("ahmpc: writing CSV: {e}");
            ExitCode::from(IO_ERROR)
        }
    }
}
