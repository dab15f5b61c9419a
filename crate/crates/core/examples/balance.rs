//! Double-support balance while a hidden 10 kg payload swings on the torso.

use contact_lqr::planner::KeyPoseSpec;
use contact_lqr::sim::{metrics, run_scenario, Disturbance, Scenario};

fn main() -> contact_lqr::error::Result<()> {
    for frequency in [0.2, 0.8] {
        let mut s = Scenario::new(
            &format!("torso-sine-{frequency}"),
            "bundled:biped-sagittal",
            10.0,
            vec![KeyPoseSpec::new("ds", &["left", "right"])],
        );
        s.disturbances = vec![Disturbance::TorsoSine { mass: 10.0, amplitude: 0.1, frequency, lever: 0.3 }];
        let m = metrics(&run_scenario(&s)?);
        println!(
            "{}: fell {}, peak base error {:.4} m, CoM RMSE x {:.5} z {:.5}",
            m.scenario, m.fell, m.peak_base_error, m.rmse_com[0], m.rmse_com[2]
        );
    }
    Ok(())
}
