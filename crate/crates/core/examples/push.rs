//! Pushes the robot at the hip while it balances on its left foot.
//!
//! `cargo run --example push [impulse N s]`

use contact_lqr::model::bundled;
use contact_lqr::planner::KeyPoseSpec;
use contact_lqr::sim::{metrics, run_scenario, Disturbance, Scenario};

fn main() -> contact_lqr::error::Result<()> {
    let impulse = match std::env::args().nth(1) {
        Some(a) => a.parse().expect("impulse in N s"),
        None => 0.02 * bundled::biped_sagittal().weight(),
    };
    let mut s = Scenario::new("push", "bundled:biped-sagittal", 6.0, vec![KeyPoseSpec::new("ss_left", &["left"])]);
    s.disturbances = vec![Disturbance::Impulse {
        time: 1.0,
        body: "pelvis".into(),
        point: [0.0, 0.0],
        direction: [1.0, 0.0],
        impulse,
        duration: 0.05,
    }];
    let trace = run_scenario(&s)?;
    let m = metrics(&trace);
    println!("{impulse:.2} N s push: fell {}, peak base error {:.4} m", m.fell, m.peak_base_error);
    match m.recovery_time {
        Some(t) => println!("recovered {t:.2} s after the push"),
        None if !m.fell => println!("did not settle within the run"),
        None => println!("fell at {:.2} s", m.fall_time.unwrap_or(f64::NAN)),
    }
    Ok(())
}
