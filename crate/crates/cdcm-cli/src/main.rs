//! CDCM link simulator CLI.
//!
//! Exit codes: 0 success, 1 validation or runtime error, 2 when `--check`
//! is given and a scenario's pass/fail thresholds are not met.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use cdcm_cli::commands::{
    cmd_efficiency, cmd_vectors, efficiency_csv, load_file, run_eye, run_roundtrip,
    run_topology_scenario,
};
use cdcm_cli::scenario::{parse_scenario, EyeScenario, RoundtripScenario, TopologyScenario};

#[derive(Parser)]
#[command(name = "cdcm", about = "Clock duty cycle modulation link simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunOpts {
    /// Directory for JSON reports and CSV histograms.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override every scenario's random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override every scenario's tick resolution in femtoseconds.
    #[arg(long)]
    resolution_fs: Option<u64>,
    /// Exit with code 2 if a scenario's checks fail.
    #[arg(long)]
    check: bool,
    /// Run up to this many scenario files concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Print the q_max/e_max table for n = 3..=N as CSV.
    Efficiency {
        n_max: usize,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Run transmit/receive scenarios (BER, lock, modulation sweep).
    Roundtrip {
        files: Vec<PathBuf>,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Run topology scenarios (chains, trees; latency and skew).
    Topology {
        files: Vec<PathBuf>,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Export the conformance codeword table for a scheme (e.g. cdcm-3-1).
    Vectors {
        scheme: String,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Fold a transmitted stream into an eye histogram.
    Eye {
        files: Vec<PathBuf>,
        #[command(flatten)]
        opts: RunOpts,
    },
}

/// What happened across one batch of scenario files.
#[derive(Clone, Copy, PartialEq)]
enum Outcome {
    Ok,
    CheckFailed,
}

fn run_batch<F>(files: &[PathBuf], opts: &RunOpts, runner: F) -> Result<Outcome>
where
    F: Fn(&Path, &RunOpts) -> Result<Outcome> + Sync,
{
    anyhow::ensure!(!files.is_empty(), "no scenario files given");
    let jobs = opts.jobs.max(1);
    let mut outcome = Outcome::Ok;
    if jobs == 1 {
        for f in files {
            if runner(f, opts)? == Outcome::CheckFailed {
                outcome = Outcome::CheckFailed;
            }
        }
        return Ok(outcome);
    }
    let results: Vec<Result<Outcome>> = std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for chunk in files.chunks(files.len().div_ceil(jobs)) {
            let runner = &runner;
            handles.push(scope.spawn(move || {
                let mut worst = Outcome::Ok;
                for f in chunk {
                    if runner(f, opts)? == Outcome::CheckFailed {
                        worst = Outcome::CheckFailed;
                    }
                }
                Ok(worst)
            }));
        }
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    for r in results {
        if r? == Outcome::CheckFailed {
            outcome = Outcome::CheckFailed;
        }
    }
    Ok(outcome)
}

fn apply_overrides_roundtrip(sc: &mut RoundtripScenario, opts: &RunOpts) {
    if let Some(seed) = opts.seed {
        sc.channel.seed = seed;
    }
    if let Some(res) = opts.resolution_fs {
        sc.timebase.resolution_fs = res;
    }
}

fn report_checks(name: &str, failures: &[String], check: bool) -> Outcome {
    if failures.is_empty() {
        println!("{name}: checks passed");
        Outcome::Ok
    } else {
        for f in failures {
            eprintln!("{name}: CHECK FAILED: {f}");
        }
        if check {
            Outcome::CheckFailed
        } else {
            Outcome::Ok
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: Result<Outcome> = match &cli.command {
        Command::Efficiency { n_max, opts } => (|| {
            let rows = cmd_efficiency(*n_max)?;
            let csv = efficiency_csv(&rows);
            print!("{csv}");
            if let Some(dir) = &opts.out {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join("efficiency.csv"), csv)?;
            }
            Ok(Outcome::Ok)
        })(),
        Command::Vectors { scheme, opts } => (|| {
            let csv = cmd_vectors(scheme)?;
            print!("{csv}");
            if let Some(dir) = &opts.out {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join(format!("{scheme}_vectors.csv")), csv)?;
            }
            Ok(Outcome::Ok)
        })(),
        Command::Roundtrip { files, opts } => run_batch(files, opts, |path, opts| {
            let text = load_file(path)?;
            let mut sc: RoundtripScenario = parse_scenario(&text, &path.display().to_string())?;
            apply_overrides_roundtrip(&mut sc, opts);
            let report = run_roundtrip(&sc, opts.out.as_deref())?;
            println!(
                "{}: scheme {}, locked {}, ber {}",
                sc.name,
                report.scheme,
                report.lock.locked,
                report
                    .ber
                    .map(|b| b.ber.to_string())
                    .unwrap_or_else(|| "n/a".into())
            );
            if let Some(entries) = &report.sweep {
                for e in entries {
                    let hw = e
                        .hardware_reference
                        .as_deref()
                        .map(|s| format!("  [{s}]"))
                        .unwrap_or_default();
                    println!(
                        "  +/-{:>2}%: locked {}, data {}{}",
                        e.depth_pct,
                        e.locked,
                        if e.data_recoverable { "ok" } else { "n/a" },
                        hw
                    );
                }
            }
            Ok(report_checks(&sc.name, &report.check_failures, opts.check))
        }),
        Command::Topology { files, opts } => run_batch(files, opts, |path, opts| {
            let text = load_file(path)?;
            let mut sc: TopologyScenario = parse_scenario(&text, &path.display().to_string())?;
            if let Some(seed) = opts.seed {
                sc.seed = seed;
            }
            if let Some(res) = opts.resolution_fs {
                sc.timebase.resolution_fs = res;
            }
            let report = run_topology_scenario(&sc, opts.out.as_deref())?;
            for p in &report.metrics.points {
                println!(
                    "{}: point {} latency mean {} ticks (std {}), tie rms {:.3} ticks",
                    sc.name, p.point, p.latency_mean_ticks, p.latency_std_ticks, p.tie_rms_ticks
                );
            }
            if let Some(skew) = &report.metrics.skew {
                println!(
                    "{}: leaf skew mean {} ticks, rms {} ticks over {} samples",
                    sc.name, skew.mean_ticks, skew.rms_ticks, skew.samples
                );
            }
            Ok(report_checks(&sc.name, &report.check_failures, opts.check))
        }),
        Command::Eye { files, opts } => run_batch(files, opts, |path, opts| {
            let text = load_file(path)?;
            let mut sc: EyeScenario = parse_scenario(&text, &path.display().to_string())?;
            if let Some(res) = opts.resolution_fs {
                sc.timebase.resolution_fs = res;
            }
            if let Some(seed) = opts.seed {
                sc.channel.seed = seed;
            }
            let report = run_eye(&sc, opts.out.as_deref())?;
            println!("{}: eye opening {:.4} ns", sc.name, report.opening_s * 1e9);
            Ok(Outcome::Ok)
        }),
    };
    match result {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::CheckFailed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
