//! Batch runs: a suite file names scenario files; each run leaves a trace,
//! a metrics document and optional plots, and the suite a summary table.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plot;
use crate::sim::{metrics, prepare, run_prepared, Metrics, Scenario, Trace};

pub const SUITE_SCHEMA_VERSION: u32 = 1;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_FALL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteEntry {
    /// Scenario file, relative to the suite file.
    pub file: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SuiteFile {
    schema_version: u32,
    name: String,
    #[serde(default)]
    out: Option<PathBuf>,
    #[serde(default)]
    plots: bool,
    #[serde(default = "one")]
    jobs: usize,
    #[serde(rename = "scenario")]
    scenarios: Vec<SuiteEntry>,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug)]
pub struct ExperimentSuite {
    pub name: String,
    pub scenarios: Vec<Scenario>,
    pub out: PathBuf,
    pub plots: bool,
    pub jobs: usize,
}

impl ExperimentSuite {
    /// Reads the suite and every scenario it names.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.into(), source })?;
        let file: SuiteFile = toml::from_str(&text).map_err(|e| Error::config(path, e.to_string()))?;
        if file.schema_version != SUITE_SCHEMA_VERSION {
            return Err(Error::config(
                path,
                format!("unsupported schema_version {} (expected {SUITE_SCHEMA_VERSION})", file.schema_version),
            ));
        }
        if file.scenarios.is_empty() {
            return Err(Error::config(path, "suite lists no scenarios"));
        }
        let base = path.parent().unwrap_or(Path::new("."));
        let scenarios = file
            .scenarios
            .iter()
            .map(|e| Scenario::load(base.join(&e.file)))
            .collect::<Result<Vec<_>>>()?;
        for (i, s) in scenarios.iter().enumerate() {
            if scenarios[..i].iter().any(|o| o.name == s.name) {
                return Err(Error::config(path, format!("scenario name `{}` appears twice", s.name)));
            }
        }
        Ok(Self {
            out: file.out.map(|o| base.join(o)).unwrap_or_else(|| PathBuf::from("out").join(&file.name)),
            name: file.name,
            scenarios,
            plots: file.plots,
            jobs: file.jobs.max(1),
        })
    }
}

/// What one scenario produced.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub name: String,
    pub keyframes: usize,
    /// Single and double support durations when the scenario follows a plan.
    pub timing: Option<(f64, f64)>,
    pub result: std::result::Result<Metrics, String>,
}

#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub outcomes: Vec<Outcome>,
}

impl SuiteReport {
    /// Configuration errors outrank falls.
    pub fn exit_code(&self) -> i32 {
        if self.outcomes.iter().any(|o| o.result.is_err()) {
            EXIT_CONFIG
        } else if self.outcomes.iter().any(|o| o.result.as_ref().is_ok_and(|m| m.fell)) {
            EXIT_FALL
        } else {
            EXIT_OK
        }
    }

    pub fn summary_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<28} {:>4} {:>11} {:>5} {:>9} {:>9} {:>9} {:>9} {:>5} {:>9} {:>15}",
            "scenario", "keys", "ssp/dsp", "fell", "rmse_x", "rmse_y", "rmse_z", "peak_base", "steps", "foot_err", "jump bl/unbl"
        );
        for o in &self.outcomes {
            let timing = o.timing.map_or("-".to_string(), |(a, b)| format!("{a}/{b}"));
            match &o.result {
                Ok(m) => {
                    let foot = m.max_footstep_error.map_or("-".to_string(), |e| format!("{e:.5}"));
                    let jump = if m.switches > 0 {
                        format!("{:.2}/{:.2}", m.max_switch_jump, m.max_unblended_jump)
                    } else {
                        "-".to_string()
                    };
                    let _ = writeln!(
                        s,
                        "{:<28} {:>4} {:>11} {:>5} {:>9.6} {:>9.6} {:>9.6} {:>9.6} {:>5} {:>9} {:>15}",
                        o.name,
                        o.keyframes,
                        timing,
                        if m.fell { "yes" } else { "no" },
                        m.rmse_com[0],
                        m.rmse_com[1],
                        m.rmse_com[2],
                        m.peak_base_error,
                        m.steps,
                        foot,
                        jump
                    );
                }
                Err(e) => {
                    let _ = writeln!(s, "{:<28} {:>4} {:>11} error: {e}", o.name, o.keyframes, timing);
                }
            }
        }
        s
    }
}

pub struct Run {
    pub trace: Trace,
    pub metrics: Metrics,
    pub keyframes: usize,
}

/// Runs one scenario and writes its artifacts under `dir`.
pub fn run_one(scenario: &Scenario, dir: &Path, plots: bool) -> Result<Run> {
    let prepared = prepare(scenario)?;
    let trace = run_prepared(scenario, &prepared)?;
    let m = metrics(&trace);
    std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.into(), source })?;
    let csv = dir.join("trace.csv");
    let f = std::fs::File::create(&csv).map_err(|source| Error::Io { path: csv.clone(), source })?;
    trace.write_csv(std::io::BufWriter::new(f))?;
    let doc = toml::to_string(&m).map_err(|e| Error::InvalidArgument(format!("serializing metrics: {e}")))?;
    let mp = dir.join("metrics.toml");
    std::fs::write(&mp, doc).map_err(|source| Error::Io { path: mp, source })?;
    if plots {
        plot::write_plots(&trace, prepared.plan.as_ref(), dir)?;
    }
    Ok(Run { trace, metrics: m, keyframes: prepared.library.len() })
}

/// Runs every scenario on `jobs` threads. Each scenario is sequential, so
/// the results do not depend on `jobs`.
pub fn run_suite(suite: &ExperimentSuite) -> Result<SuiteReport> {
    std::fs::create_dir_all(&suite.out).map_err(|source| Error::Io { path: suite.out.clone(), source })?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(suite.jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let outcomes: Vec<Outcome> = pool.install(|| {
        suite
            .scenarios
            .par_iter()
            .map(|s| {
                let run = run_one(s, &suite.out.join(&s.name), suite.plots);
                let keyframes = run.as_ref().map_or(s.library.poses.len(), |r| r.keyframes);
                let result = run.map(|r| r.metrics).map_err(|e| e.to_string());
                Outcome { name: s.name.clone(), keyframes, timing: s.plan.as_ref().map(|p| (p.ssp, p.dsp)), result }
            })
            .collect()
    });
    let report = SuiteReport { outcomes };
    let path = suite.out.join("summary.txt");
    std::fs::write(&path, report.summary_table()).map_err(|source| Error::Io { path, source })?;
    Ok(report)
}
