//! Closed-loop runs, CSV logs and summaries.

use std::fmt;
use std::io::{self, Write};
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use ahmpc_core::ahmpc::{run_simulation, MpcPlanner, SimulationLog, StepReport, TerminalPair};
use ahmpc_core::plant::{Pendulum, StateNoise, NOISE_VARIANCE};
use nalgebra::DVector;

use crate::config::{Noise, RunConfig};
use crate::terminal::stage_cost;

pub const CSV_HEADER: &str = "t,th1,th2,om1,om2,u1,u2,N,resolves,status,Vf_end";

/// Angle band, in radians, for time-to-stabilize.
pub const STABLE_BAND: f64 = 0.1;

pub fn initial_state() -> DVector<f64> {
    let a = 0.9 * std::f64::consts::PI;
    DVector::from_vec(vec![a, a, 0.0, 0.0])
}

fn sig17(v: f64) -> String {
    format!("{v:.16e}")
}

/// One CSV row for the state `x` at step `t` and the report of that step.
pub fn csv_row(t: usize, x: &DVector<f64>, rep: &StepReport) -> String {
    let vf_end = rep.vf.last().copied().unwrap_or(f64::NAN);
    let mut cols: Vec<String> = vec![t.to_string()];
    cols.extend(x.iter().map(|&v| sig17(v)));
    cols.extend(rep.u.iter().map(|&v| sig17(v)));
    cols.push(rep.horizon.to_string());
    cols.push(rep.resolves.to_string());
    cols.push(rep.status_label());
    cols.push(sig17(vf_end));
    cols.join(",")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Summary {
    /// First step after which both angles stay inside [`STABLE_BAND`].
    pub stabilized_at: Option<usize>,
    pub max_horizon: usize,
    /// Steps where the terminal feedback was applied directly.
    pub feedback_steps: usize,
}

impl Summary {
    pub fn of(log: &SimulationLog) -> Self {
        Self {
            stabilized_at: if log.reports.is_empty() {
                None
            } else {
                log.settled_from(STABLE_BAND)
            },
            max_horizon: log.max_horizon(),
            feedback_steps: log.terminal_feedback_steps(),
        }
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = self.stabilized_at.map_or("none".to_string(), |t| t.to_string());
        write!(
            f,
            "time-to-stabilize={t} max-horizon={} kappa-only-steps={}",
            self.max_horizon, self.feedback_steps
        )
    }
}

/// Run one simulation, streaming the CSV to `out` as steps complete.
pub fn run(
    config: &RunConfig,
    pair: &TerminalPair,
    out: &mut dyn Write,
) -> io::Result<(SimulationLog, Summary)> {
    let plant = Pendulum::new(config.plant.clone());
    let stage = stage_cost();
    let mut planner = MpcPlanner::new(&plant, &stage, pair, &config.controller);
    let mut noise = match config.noise {
        Noise::Off => StateNoise::off(),
        Noise::Seed(s) => StateNoise::seeded(s, NOISE_VARIANCE),
    };
    write!(out, "{}", config.echo())?;
    writeln!(out, "{CSV_HEADER}")?;
    let mut write_err = None;
    let log = run_simulation(
        &initial_state(),
        config.steps,
        &mut planner,
        &plant,
        &config.controller,
        &mut noise,
        |t, x, rep| {
            if write_err.is_none() {
                if let Err(e) = writeln!(out, "{}", csv_row(t, x, rep)).and_then(|_| out.flush()) {
                    write_err = Some(e);
                }
            }
        },
    );
    if let Some(e) = write_err {
        return Err(e);
    }
    out.flush()?;
    let summary = Summary::of(&log);
    Ok((log, summary))
}

/// `seeds=A..B`, both ends included.
pub fn parse_sweep(arg: &str) -> Result<RangeInclusive<u64>, String> {
    let range = arg
        .strip_prefix("seeds=")
        .ok_or_else(|| format!("expected `seeds=A..B`, got `{arg}`"))?;
    let (a, b) = range
        .split_once("..")
        .ok_or_else(|| format!("expected `A..B`, got `{range}`"))?;
    let parse = |s: &str| s.trim().parse::<u64>().map_err(|_| format!("`{s}` is not a seed"));
    let (a, b) = (parse(a)?, parse(b)?);
    if a > b {
        return Err(format!("empty seed range {a}..{b}"));
    }
    Ok(a..=b)
}

/// `dir/stem_seed<N>.ext` for a sweep member.
pub fn seed_path(base: &Path, seed: u64) -> PathBuf {
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    let name = match base.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}_seed{seed}.{ext}"),
        None => format!("{stem}_seed{seed}"),
    };
    base.with_file_name(name)
}

/// Run every seed concurrently, one CSV per seed next to `base`.
pub fn sweep(
    config: &RunConfig,
    pair: &TerminalPair,
    seeds: RangeInclusive<u64>,
    base: &Path,
) -> Vec<(u64, io::Result<(SimulationLog, Summary)>)> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .map(|seed| {
                let mut cfg = config.clone();
                cfg.noise = Noise::Seed(seed);
                let path = seed_path(base, seed);
                cfg.out = Some(path.clone());
                let handle = scope.spawn(move || {
                    let file = std::fs::File::create(&path)?;
                    let mut w = io::BufWriter::new(file);
                    run(&cfg, pair, &mut w)
                });
                (seed, handle)
            })
            .collect();
        handles
            .into_iter()
            .map(|(seed, h)| (seed, h.join().expect("simulation thread panicked")))
            .collect()
    })
}
