//! Plans ten steps in place and prints the footsteps and a coarse ZMP and CoM
//! profile.

use contact_lqr::model::bundled;
use contact_lqr::planner::{build_walk_plan, StepParams, WalkMode};

fn main() -> contact_lqr::error::Result<()> {
    let model = bundled::biped_frontal();
    let params = StepParams::new(WalkMode::InPlace, 10, 1.5, 1.8);
    let plan = build_walk_plan(&model, &params)?;
    println!("{} samples over {:.1} s, CoM height {:.3} m", plan.len(), params.duration(), plan.com_height);
    for s in &plan.footsteps {
        println!("foot {} lands at x = {:+.3} m, t = {:.2} s", s.foot, s.x, s.time);
    }
    let every = (0.5 / plan.dt).round() as usize;
    for i in (0..plan.len()).step_by(every) {
        println!(
            "t {:5.2}  zmp {:+.4}  com {:+.4}",
            i as f64 * plan.dt,
            plan.zmp_ref[i],
            plan.com_traj.pos[i]
        );
    }
    Ok(())
}
