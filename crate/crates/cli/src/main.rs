//! `swarm`: run scenarios, sweep parameters, solve standalone assignments.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;
use std::time::Instant;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use swarm_core::assignment::{tamm_detailed, Assignment, AssignmentError, RewardMatrix, Task};
use swarm_core::engine::{defaults_toml, write_run, ConfigError, RunError, RunSummary, ScenarioConfig, SWEEP_AXES};

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "swarm", version, about = "Multi-UAV coverage and tracking simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario, writing metrics.csv, events.jsonl and summary.json.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides `sim.seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every value of one axis with seeds 0..n and aggregate.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        /// One of uav.count, uav.r_c, targets.count, sim.steps.
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve one assignment from a reward matrix CSV (one row per UAV).
    Assign {
        #[arg(long)]
        rewards: PathBuf,
        /// Tracker caps, one per target; defaults to 2 each.
        #[arg(long)]
        caps: Option<PathBuf>,
    },
    /// Print the default configuration with comments.
    Defaults,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Config(c) => c.into(),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn load(config: Option<&Path>) -> Result<ScenarioConfig, Failure> {
    Ok(match config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    })
}

fn cmd_run(config: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<(), Failure> {
    let mut cfg = load(config)?;
    if let Some(s) = seed {
        cfg.sim.seed = s;
    }
    cfg.validate()?;
    let s = write_run(&cfg, out)?;
    println!(
        "steps={} mean_t_imt={:.3} mean_observation_rate={:.4} mean_rmse={:.3} wall_s={:.2}",
        s.steps, s.mean_t_imt, s.mean_observation_rate, s.mean_rmse, s.wall_s
    );
    Ok(())
}

const RUN_COLUMNS: &str = "axis,value,seed,mean_t_imt,mean_t_imt_equiv,mean_observation_rate,mean_rmse,mean_assign_ms,wall_s";

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (m, var.sqrt())
}

fn cmd_sweep(config: Option<&Path>, axis: &str, values: &[String], seeds: u64, out: &Path) -> Result<(), Failure> {
    if !SWEEP_AXES.contains(&axis) {
        return Err(Failure::Config(format!("unknown axis `{axis}`; expected one of {}", SWEEP_AXES.join(", "))));
    }
    let base = load(config)?;
    let mut jobs = Vec::new();
    for v in values {
        for seed in 0..seeds {
            let mut cfg = base.clone();
            cfg.set_axis(axis, v)?;
            cfg.sim.seed = seed;
            jobs.push((v.clone(), seed, cfg));
        }
    }
    std::fs::create_dir_all(out)?;
    let runs_path = out.join("runs.csv");
    let mut runs = File::create(&runs_path)?;
    writeln!(runs, "{RUN_COLUMNS}")?;
    let runs = Mutex::new(runs);
    let results: Vec<Result<(String, RunSummary), Failure>> = jobs
        .par_iter()
        .map(|(v, seed, cfg)| {
            let dir = out.join(format!("{axis}={v}")).join(format!("seed_{seed}"));
            let s = write_run(cfg, &dir)?;
            let line = format!(
                "{axis},{v},{seed},{},{},{},{},{},{}\n",
                s.mean_t_imt, s.mean_t_imt_equiv, s.mean_observation_rate, s.mean_rmse, s.mean_assign_ms, s.wall_s
            );
            let mut f = runs.lock().expect("summary lock poisoned");
            f.write_all(line.as_bytes())?;
            f.flush()?;
            log::info!("{axis}={v} seed {seed} done in {:.1} s", s.wall_s);
            Ok((v.clone(), s))
        })
        .collect();
    let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut f = OpenOptions::new().create(true).write(true).truncate(true).open(out.join("sweep_summary.csv"))?;
    writeln!(
        f,
        "axis,value,runs,mean_t_imt,std_t_imt,mean_t_imt_equiv,std_t_imt_equiv,mean_observation_rate,std_observation_rate,mean_rmse,std_rmse"
    )?;
    for v in values {
        let cell: Vec<&RunSummary> = results.iter().filter(|(x, _)| x == v).map(|(_, s)| s).collect();
        let col = |g: fn(&RunSummary) -> f64| mean_std(&cell.iter().map(|s| g(s)).collect::<Vec<_>>());
        let imt = col(|s| s.mean_t_imt);
        let eq = col(|s| s.mean_t_imt_equiv);
        let obs = col(|s| s.mean_observation_rate);
        let rmse = col(|s| s.mean_rmse);
        writeln!(
            f,
            "{axis},{v},{},{},{},{},{},{},{},{},{}",
            cell.len(),
            imt.0,
            imt.1,
            eq.0,
            eq.1,
            obs.0,
            obs.1,
            rmse.0,
            rmse.1
        )?;
        println!("{axis}={v}: t_imt {:.2} ± {:.2}, observation rate {:.4} ± {:.4}", imt.0, imt.1, obs.0, obs.1);
    }
    Ok(())
}

/// Comma-separated numeric rows; blank lines are UAVs with no targets,
/// lines starting with `#` are skipped.
fn parse_rows(text: &str) -> Result<Vec<Vec<f64>>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim_start().starts_with('#'))
        .map(|(n, l)| {
            if l.trim().is_empty() {
                return Ok(Vec::new());
            }
            l.split(',')
                .map(|f| f.trim().parse::<f64>().map_err(|_| format!("line {}: `{}` is not a number", n + 1, f.trim())))
                .collect()
        })
        .collect()
}

fn cmd_assign(rewards: &Path, caps: Option<&Path>) -> Result<(), Failure> {
    let read = |p: &Path| {
        std::fs::read_to_string(p).map_err(|e| Failure::Config(format!("cannot read {}: {e}", p.display())))
    };
    let mut rows = parse_rows(&read(rewards)?).map_err(Failure::Config)?;
    while rows.last().is_some_and(Vec::is_empty) && rows.iter().any(|r| !r.is_empty()) {
        rows.pop();
    }
    let width = rows.first().map_or(0, Vec::len);
    if let Some(i) = rows.iter().position(|r| r.len() != width) {
        return Err(Failure::Config(format!("row {i} has {} entries, expected {width}", rows[i].len())));
    }
    let caps: Vec<usize> = match caps {
        Some(p) => read(p)?
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<usize>().map_err(|_| Failure::Config(format!("cap `{s}` is not a count"))))
            .collect::<Result<_, _>>()?,
        None => vec![2; width],
    };
    let r = RewardMatrix::from_rows_with_width(&rows, width);
    let started = Instant::now();
    let out = tamm_detailed(&r, &caps);
    let elapsed = started.elapsed().as_secs_f64();
    let a = match out {
        Ok(o) => o.assignment,
        Err(e @ (AssignmentError::NonFiniteReward { .. } | AssignmentError::ZeroCap(_) | AssignmentError::CapCount { .. })) => {
            return Err(Failure::Config(e.to_string()))
        }
        Err(e) => return Err(Failure::Runtime(e.to_string())),
    };
    print_assignment(&a);
    println!("# wall_time_s={elapsed:.6} uavs={} targets={width}", rows.len());
    Ok(())
}

fn print_assignment(a: &Assignment) {
    for (i, t) in a.tasks.iter().enumerate() {
        match t {
            Task::Track(j) => println!("{i},T{j}"),
            Task::Cover => println!("{i},Tcoverage"),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("SWARM_LOG", "warn")).init();
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Run { config, seed, out } => cmd_run(config.as_deref(), *seed, out),
        Command::Sweep { config, axis, values, seeds, out } => cmd_sweep(config.as_deref(), axis, values, *seeds, out),
        Command::Assign { rewards, caps } => cmd_assign(rewards, caps.as_deref()),
        Command::Defaults => {
            print!("{}", defaults_toml());
            Ok(())
        }
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
