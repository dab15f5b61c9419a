//! Solves the double-integrator Riccati equation and prints P and the gain.

use contact_lqr::lqr::{care_residual, lqr_gain, solve_care};
use nalgebra::DMatrix;

fn main() -> contact_lqr::error::Result<()> {
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
    let b = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
    let q = DMatrix::identity(2, 2);
    let r = DMatrix::identity(1, 1);
    let p = solve_care(&a, &b, &q, &r)?;
    let k = lqr_gain(&b, &r, &p)?;
    println!("P = {p}K = {k}relative residual {:.1e}", care_residual(&a, &b, &q, &r, &p));
    Ok(())
}
