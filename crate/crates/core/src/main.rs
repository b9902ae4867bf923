use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mdcp::bench::{self, CaseStudyOptions, EnsembleParams, Execution};
use mdcp::config::ExperimentConfig;
use mdcp::dynamics::{self, PerronSystem, Trajectory};
use mdcp::predictor::{self, MemoryWindow};

type CliResult<T> = Result<T, Box<dyn std::error::Error>>;

#[derive(Parser)]
#[command(name = "mdcp", version, about = "Deadbeat consensus prediction for high-order multi-agent systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the closed loop and write the trajectory CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the spectral report as JSON.
        #[arg(long)]
        spectral: Option<PathBuf>,
    },
    /// Run the predictor for the configured agents.
    Predict {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Deadbeat residual table (CSV).
        #[arg(long)]
        residuals: Option<PathBuf>,
    },
    /// Re-run the five-agent case study and check every reference constant.
    #[command(name = "reproduce-paper")]
    ReproduceCaseStudy {
        #[arg(long, allow_hyphen_values = true)]
        omega: Option<f64>,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Random-network launch-time ensembles.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        networks: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        summary: Option<PathBuf>,
        #[arg(long)]
        sequential: bool,
    },
}

fn load(path: &Path, seed: Option<u64>) -> CliResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_file(path)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn write_or_print(path: Option<&PathBuf>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run_system(cfg: &ExperimentConfig) -> CliResult<(PerronSystem, Vec<f64>, Trajectory)> {
    let backbone = cfg.backbone()?;
    let system = dynamics::build_perron(&backbone, cfg.s, cfg.eps, cfg.omega, &cfg.gains)?;
    let x0 = match &cfg.x0 {
        Some(x0) => x0.clone(),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let [lo, hi] = cfg.ensemble.init_range;
            (0..system.dim()).map(|_| rng.random_range(lo..=hi)).collect()
        }
    };
    let trajectory = dynamics::simulate(&system, &x0, cfg.horizon)?;
    Ok((system, x0, trajectory))
}

fn simulate(config: &Path, seed: Option<u64>, out: Option<PathBuf>, spectral: Option<PathBuf>) -> CliResult<()> {
    let cfg = load(config, seed)?;
    let (system, _, trajectory) = run_system(&cfg)?;
    let report = dynamics::spectral_check(&system);
    if report.unstable_mode {
        log::warn!(
            "closed loop has a mode of modulus {:.6} outside the unit circle",
            report.max_modulus_excluding_one
        );
    }
    if let Some(path) = spectral.or(cfg.outputs.spectral.clone()) {
        fs::write(path, serde_json::to_string_pretty(&report)?)?;
    }
    write_or_print(out.or(cfg.outputs.trajectory.clone()).as_ref(), &trajectory.to_csv())
}

fn predict(config: &Path, seed: Option<u64>, out: Option<PathBuf>, residuals: Option<PathBuf>) -> CliResult<()> {
    let cfg = load(config, seed)?;
    let (_, _, trajectory) = run_system(&cfg)?;
    let mut exports = Vec::new();
    let mut table = String::from("agent,k,simulated,predicted,abs_error\n");
    for &agent in &cfg.agents {
        let window = MemoryWindow::from_trajectory(&trajectory, agent);
        let run = predictor::mdcp_run(&window, cfg.s, &cfg.predictor)?;
        let last = cfg.residual_horizon.min(trajectory.horizon());
        let mut worst = 0.0_f64;
        for k in 0..=last {
            let sim = trajectory.value(k, agent, 1);
            let pred = run.predict(1, k as u64);
            worst = worst.max((sim - pred).abs());
            table.push_str(&format!("{agent},{k},{sim},{pred},{}\n", (sim - pred).abs()));
        }
        eprintln!(
            "agent {agent}: degree {} from {} samples, max deadbeat residual {worst:.3e} over k=0..{last}",
            run.pair.degree,
            run.samples_consumed()
        );
        exports.push(run.export());
    }
    if let Some(path) = residuals.or(cfg.outputs.residuals.clone()) {
        fs::write(path, table)?;
    }
    let json = serde_json::to_string_pretty(&exports)?;
    write_or_print(out.or(cfg.outputs.prediction.clone()).as_ref(), &(json + "\n"))
}

fn reproduce(omega: Option<f64>, horizon: Option<usize>, json: Option<PathBuf>) -> CliResult<bool> {
    let mut options = CaseStudyOptions::default();
    if let Some(omega) = omega {
        options.omega = omega;
    }
    if let Some(horizon) = horizon {
        options.horizon = horizon;
    }
    let report = bench::reproduce_case_study(&options)?;
    print!("{}", report.table());
    if let Some(path) = json {
        fs::write(path, serde_json::to_string_pretty(&report)?)?;
    }
    Ok(report.all_pass())
}

fn run_bench(
    config: Option<PathBuf>,
    seed: Option<u64>,
    networks: Option<usize>,
    out: Option<PathBuf>,
    summary: Option<PathBuf>,
    sequential: bool,
) -> CliResult<()> {
    let mut cfg = match config {
        Some(path) => load(&path, seed)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(networks) = networks {
        cfg.ensemble.networks = networks;
    }
    let execution = if sequential { Execution::Sequential } else { Execution::Parallel };
    let reports = bench::run_suite(&EnsembleParams::from_config(&cfg), cfg.seed, execution)?;
    for r in &reports {
        eprintln!(
            "{:<3} {:<18} M_bar={:>6.2}s Mprime_bar={:>7.2}s failed networks={} resampled={}",
            r.model, r.param, r.m_bar, r.m_prime_bar, r.failed_networks, r.total_resamples
        );
    }
    if let Some(path) = out.or(cfg.outputs.report.clone()) {
        fs::write(path, serde_json::to_string_pretty(&reports)?)?;
    }
    write_or_print(summary.or(cfg.outputs.summary.clone()).as_ref(), &bench::summary_csv(&reports))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { config, seed, out, spectral } => simulate(&config, seed, out, spectral).map(|_| true),
        Command::Predict { config, seed, out, residuals } => predict(&config, seed, out, residuals).map(|_| true),
        Command::ReproduceCaseStudy { omega, horizon, json } => reproduce(omega, horizon, json),
        Command::Bench { config, seed, networks, out, summary, sequential } => {
            run_bench(config, seed, networks, out, summary, sequential).map(|_| true)
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}
