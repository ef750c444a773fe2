//! Experiment CLI: run a configured experiment, calibrate detection
//! thresholds, sweep a parameter grid, or verify a ledger file.
//!
//! Exit codes: 0 success, 1 verification/assertion failure, 2 invalid input.

use std::fs;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gossipguard::detector::DetectionThresholds;
use gossipguard::harness::{
    run_experiment, sweep, write_outputs, write_sweep_csv, ExperimentConfig, SweepParam,
};
use gossipguard::ledger::Ledger;
use gossipguard::Error;

#[derive(Parser)]
#[command(name = "gossipguard", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's root seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for CSV/JSON/ledger artifacts.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Calibrate detection thresholds by Monte-Carlo simulation.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        /// Target false-alarm rate in (0, 1).
        #[arg(long, default_value_t = 0.05)]
        far: f64,
        /// Number of calibration trials per pass.
        #[arg(long, default_value_t = 2000)]
        trials: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Sweep one parameter over a value grid.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Parameter to sweep: alpha_gap, attackers, sigma, or nodes.
        #[arg(long)]
        param: String,
        /// Comma-separated grid values.
        #[arg(long)]
        values: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Check a ledger file's hash chain.
    VerifyLedger { file: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::Run { config, seed, out } => {
            let mut config = ExperimentConfig::load(&config)?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            let output = run_experiment(&config)?;
            write_outputs(&output, &out)?;

            let m = &output.metrics;
            println!("run_id: {}", m.run_id);
            println!(
                "nodes: {}  attackers: {}  instances: {}  iterations: {}",
                m.nodes, m.attackers, m.instances, m.iterations
            );
            println!(
                "thresholds: delta1={} epsilon={} direction={}",
                output.thresholds.delta1, output.thresholds.epsilon, output.thresholds.direction
            );
            println!(
                "detection: rate={} c1_mean={} first_alarm={}",
                m.detection_rate,
                m.c1_mean,
                output
                    .first_alarm
                    .map_or("none".to_string(), |s| s.to_string())
            );
            println!(
                "pairs: tp={} fp={} fn={} tn={}  precision={} recall={} f1={}",
                m.pairs.true_positives,
                m.pairs.false_positives,
                m.pairs.false_negatives,
                m.pairs.true_negatives,
                fmt_opt(m.precision),
                fmt_opt(m.recall),
                fmt_opt(m.f1)
            );
            println!("false_alarms: {}", m.false_alarms);
            let (ledger_bytes, overhead) = output.ledger.overhead_bytes();
            println!(
                "ledger: {} blocks, {} bytes, header/payload overhead {:.4}",
                output.ledger.len(),
                ledger_bytes,
                overhead
            );
            println!(
                "measured: {:.3e} s/iteration; detection time at that rate: {}",
                output.measured_iter_seconds,
                m.detection_time_iters
                    .map(|iters| format!("{:.3e} s", iters * output.measured_iter_seconds))
                    .unwrap_or_else(|| "not detected".to_string())
            );
            if !output.ledger.verify() {
                eprintln!("ledger verification failed after run");
                return Ok(ExitCode::from(1));
            }
            println!("wrote artifacts to {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Calibrate {
            config,
            far,
            trials,
            out,
        } => {
            let mut config = ExperimentConfig::load(&config)?;
            config.detection = None;
            config.calibration = Some(gossipguard::harness::CalibrationRequest {
                target_far: far,
                trials,
            });
            config.validate()?;
            let topology = gossipguard::consensus::Topology::from_spec(&config.topology)?;
            let (_, outcome) = gossipguard::harness::resolve_thresholds(&config, &topology)?;
            let outcome = outcome.expect("calibration was requested");
            println!(
                "delta1={} epsilon={} direction={} achieved_far={}",
                outcome.delta1, outcome.epsilon, outcome.direction, outcome.achieved_far
            );
            if let (Some(tpr), Some(fpr)) = (outcome.achieved_tpr, outcome.achieved_fpr) {
                println!("localization: tpr={tpr} fpr={fpr}");
            }
            fs::create_dir_all(&out)?;
            fs::write(
                out.join("calibration.json"),
                serde_json::to_vec_pretty(&outcome)?,
            )?;
            let mut calibrated = config.clone();
            calibrated.detection = Some(DetectionThresholds {
                delta1: outcome.delta1,
                epsilon: outcome.epsilon,
                direction: outcome.direction,
            });
            calibrated.calibration = None;
            fs::write(
                out.join("config.calibrated.json"),
                serde_json::to_vec_pretty(&calibrated)?,
            )?;
            println!("wrote calibration.json and config.calibrated.json to {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep {
            config,
            param,
            values,
            out,
        } => {
            let config = ExperimentConfig::load(&config)?;
            let param = SweepParam::parse(&param)?;
            let grid: Vec<f64> = values
                .split(',')
                .map(|v| {
                    v.trim().parse::<f64>().map_err(|_| Error::InvalidConfig {
                        field: "sweep.values".into(),
                        reason: format!("`{v}` is not a number"),
                    })
                })
                .collect::<Result<_, _>>()?;
            let points = sweep(&config, param, &grid)?;
            fs::create_dir_all(&out)?;
            let mut csv = Vec::new();
            write_sweep_csv(&points, &mut csv)?;
            fs::write(out.join("sweep.csv"), &csv)?;
            for point in &points {
                println!(
                    "{}={}: detection_rate={} precision={} recall={} f1={} false_alarms={}",
                    point.param,
                    point.value,
                    point.metrics.detection_rate,
                    fmt_opt(point.metrics.precision),
                    fmt_opt(point.metrics.recall),
                    fmt_opt(point.metrics.f1),
                    point.metrics.false_alarms
                );
            }
            println!("wrote sweep.csv to {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::VerifyLedger { file } => {
            let reader = BufReader::new(fs::File::open(&file)?);
            let ledger = Ledger::read_jsonl(reader)?;
            match ledger.first_invalid() {
                None => {
                    println!("ok: {} blocks", ledger.len());
                    Ok(ExitCode::SUCCESS)
                }
                Some(index) => {
                    println!("invalid at block {index}");
                    Ok(ExitCode::from(1))
                }
            }
        }
    }
}

fn fmt_opt(value: Option<f64>) -> String {
    value.map_or("undefined".to_string(), |v| v.to_string())
}
