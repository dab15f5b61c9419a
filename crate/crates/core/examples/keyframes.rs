//! Synthesizes a five-pose keyframe library for the sagittal biped and prints
//! the pairwise gain distances.
//!
//! `cargo run --example keyframes [pose-file]`

use contact_lqr::lqr::{coupling_ratio, LqrWeights};
use contact_lqr::model::bundled;
use contact_lqr::planner::load_poses;
use contact_lqr::scheduler::{format_distance_table, KeyframeLibrary, PdGains};

fn main() -> contact_lqr::error::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| {
        concat!(env!("CARGO_MANIFEST_DIR"), "/data/poses/biped-sagittal-5.toml").to_string()
    });
    let model = bundled::biped_sagittal();
    let poses = load_poses(&path)?;
    let lib = KeyframeLibrary::synthesize(&model, &poses, &LqrWeights::default(), PdGains::default())?;
    print!("{}", format_distance_table(&lib.controllers));
    for c in &lib.controllers {
        println!("{:<10} joint coupling {:.3}", c.label, coupling_ratio(c));
    }
    Ok(())
}
