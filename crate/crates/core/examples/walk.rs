//! Walks forward nine steps with three keyframes and writes the trace and
//! plots to a directory (default `out/walk-forward`).

use std::path::PathBuf;

use contact_lqr::planner::{KeyPoseSpec, StepParams, WalkMode};
use contact_lqr::sim::Scenario;
use contact_lqr::suite::run_one;

fn main() -> contact_lqr::error::Result<()> {
    let dir = std::env::args().nth(1).map_or_else(|| PathBuf::from("out/walk-forward"), PathBuf::from);
    let mut params = StepParams::new(WalkMode::Forward, 9, 1.5, 1.8);
    params.step_length = 0.1;
    let poses = vec![
        KeyPoseSpec::new("ds", &["left", "right"]),
        KeyPoseSpec::new("ss_left", &["left"]),
        KeyPoseSpec::new("ss_right", &["right"]),
    ];
    let mut s = Scenario::new("walk-forward", "bundled:biped-sagittal", params.duration(), poses);
    s.plan = Some(params);
    let run = run_one(&s, &dir, true)?;
    let m = &run.metrics;
    println!(
        "fell {}, {} footsteps, worst footstep error {:.4} m, {} controller switches",
        m.fell,
        m.steps,
        m.max_footstep_error.unwrap_or(f64::NAN),
        m.switches
    );
    println!(
        "torque jump at switches: {:.2} blended vs {:.2} without blending",
        m.max_switch_jump, m.max_unblended_jump
    );
    println!("trace and plots in {}", dir.display());
    Ok(())
}
