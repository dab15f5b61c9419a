use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use contact_lqr::lqr::LqrWeights;
use contact_lqr::planner::load_poses;
use contact_lqr::scheduler::{format_distance_table, KeyframeLibrary, PdGains};
use contact_lqr::sim::scenario::load_model;
use contact_lqr::suite::{run_suite, ExperimentSuite, EXIT_CONFIG, EXIT_OK};

#[derive(Parser)]
#[command(version, about = "Contact-consistent LQR for planar legged robots")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every scenario of a suite and write traces, metrics and a summary.
    Run {
        suite: PathBuf,
        /// Output directory; overrides the suite's.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write SVG plots per scenario.
        #[arg(long)]
        plots: bool,
        /// Scenarios run concurrently.
        #[arg(long)]
        jobs: Option<usize>,
        /// Noise seed for every scenario.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Synthesize a keyframe library and print its gain distance table.
    Synth {
        /// Model file, or `bundled:biped-sagittal` / `bundled:biped-frontal`.
        model: String,
        /// Key pose file.
        poses: PathBuf,
        /// Position weight, optionally followed by the velocity weight: `3000` or `3000,1`.
        #[arg(long)]
        q: Option<String>,
        /// Torque weight.
        #[arg(long)]
        r: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn weights(q: Option<&str>, r: Option<f64>) -> Result<LqrWeights, String> {
    let mut w = LqrWeights::default();
    if let Some(q) = q {
        let parts = q
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|e| format!("--q `{q}`: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        match parts[..] {
            [p] => w.q_pos = p,
            [p, v] => (w.q_pos, w.q_vel) = (p, v),
            _ => return Err(format!("--q `{q}`: expected one or two numbers")),
        }
    }
    if let Some(r) = r {
        w.r = r;
    }
    if !(w.q_pos > 0.0 && w.q_vel > 0.0 && w.r > 0.0) {
        return Err("weights must be positive".into());
    }
    Ok(w)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { suite, out, plots, jobs, seed } => {
            let mut s = match ExperimentSuite::load(&suite) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_CONFIG as u8);
                }
            };
            if let Some(o) = out {
                s.out = o;
            }
            s.plots |= plots;
            if let Some(j) = jobs {
                s.jobs = j.max(1);
            }
            if let Some(seed) = seed {
                s.scenarios.iter_mut().for_each(|sc| sc.seed = seed);
            }
            match run_suite(&s) {
                Ok(report) => {
                    print!("{}", report.summary_table());
                    for o in &report.outcomes {
                        if let Err(e) = &o.result {
                            eprintln!("error: scenario `{}`: {e}", o.name);
                        }
                    }
                    println!("artifacts in {}", s.out.display());
                    report.exit_code()
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    EXIT_CONFIG
                }
            }
        }
        Command::Synth { model, poses, q, r, out } => {
            let result = (|| -> Result<(), String> {
                let w = weights(q.as_deref(), r)?;
                let model = load_model(&model, std::path::Path::new(".")).map_err(|e| e.to_string())?;
                let specs = load_poses(&poses).map_err(|e| e.to_string())?;
                let lib = KeyframeLibrary::synthesize(&model, &specs, &w, PdGains::default()).map_err(|e| e.to_string())?;
                print!("{}", format_distance_table(&lib.controllers));
                if let Some(path) = out {
                    lib.save(&model, &path).map_err(|e| e.to_string())?;
                    println!("wrote {} controllers to {}", lib.len(), path.display());
                }
                Ok(())
            })();
            match result {
                Ok(()) => EXIT_OK,
                Err(e) => {
                    eprintln!("error: {e}");
                    EXIT_CONFIG
                }
            }
        }
    };
    ExitCode::from(code as u8)
}
