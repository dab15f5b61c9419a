//! Damped least-squares whole-body inverse kinematics.

use nalgebra::{DMatrix, DVector, Vector2};

use crate::error::{Error, Result};
use crate::kinematics::{body_poses, center_of_mass_jacobian, point_kinematics_with};
use crate::model::RobotModel;

pub const IK_TOLERANCE: f64 = 1e-6;
pub const IK_MAX_ITERATIONS: usize = 200;
/// Residuals above this after the last iteration make the target unreachable.
pub const IK_REACH_TOLERANCE: f64 = 1e-3;
const DAMPING: f64 = 1e-3;
const MAX_STEP: f64 = 0.2;

/// Desired sole-point position and foot angle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FootTarget {
    pub x: f64,
    pub z: f64,
    pub angle: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IkTargets {
    pub com: Option<Vector2<f64>>,
    pub base_pitch: Option<f64>,
    /// One entry per model foot.
    pub feet: Vec<Option<FootTarget>>,
}

#[derive(Clone, Debug)]
pub struct IkSolution {
    pub q: DVector<f64>,
    /// Largest task error (m or rad).
    pub residual: f64,
    pub iterations: usize,
}

/// Current task values and Jacobian rows, in the order com x/z, pitch, feet.
fn tasks(model: &RobotModel, targets: &IkTargets, q: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let mut err = Vec::new();
    let mut rows: Vec<DVector<f64>> = Vec::new();
    if let Some(c) = targets.com {
        let (com, jac) = center_of_mass_jacobian(model, q);
        err.extend([c.x - com.x, c.y - com.y]);
        rows.push(jac.row(0).transpose());
        rows.push(jac.row(1).transpose());
    }
    if let (Some(p), Some(i)) = (targets.base_pitch, model.base_pitch_index()) {
        err.push(p - q[i]);
        let mut r = DVector::zeros(model.n());
        r[i] = 1.0;
        rows.push(r);
    }
    let poses = body_poses(model, q);
    for (foot, target) in model.feet.iter().zip(&targets.feet) {
        if let Some(t) = target {
            let pk = point_kinematics_with(model, &poses, foot.link, &foot.sole);
            err.extend([t.x - pk.position.x, t.z - pk.position.y, t.angle - pk.angle]);
            for r in 0..3 {
                rows.push(pk.jacobian.row(r).transpose());
            }
        }
    }
    let jac = if rows.is_empty() {
        DMatrix::zeros(0, model.n())
    } else {
        DMatrix::from_fn(rows.len(), model.n(), |i, j| rows[i][j])
    };
    (DVector::from_vec(err), jac)
}

pub fn inverse_kinematics(model: &RobotModel, targets: &IkTargets, q_seed: &DVector<f64>) -> Result<IkSolution> {
    model.check_q(q_seed)?;
    if targets.feet.len() != model.feet.len() {
        return Err(Error::InvalidArgument(format!(
            "expected {} foot targets, got {}",
            model.feet.len(),
            targets.feet.len()
        )));
    }
    let mut q = q_seed.clone();
    let mut residual = f64::INFINITY;
    for it in 0..=IK_MAX_ITERATIONS {
        let (err, jac) = tasks(model, targets, &q);
        residual = if err.is_empty() { 0.0 } else { err.amax() };
        if residual < IK_TOLERANCE {
            return Ok(IkSolution { q, residual, iterations: it });
        }
        if it == IK_MAX_ITERATIONS {
            break;
        }
        let m = jac.nrows();
        let gram = &jac * jac.transpose() + DMatrix::identity(m, m) * (DAMPING * DAMPING);
        let y = gram.cholesky().expect("damped Gram matrix is positive definite").solve(&err);
        let mut dq = jac.transpose() * y;
        let big = dq.amax();
        if big > MAX_STEP {
            dq *= MAX_STEP / big;
        }
        q += dq;
    }
    if residual > IK_REACH_TOLERANCE {
        return Err(Error::UnreachableTarget { residual });
    }
    Ok(IkSolution { q, residual, iterations: IK_MAX_ITERATIONS })
}

/// Forward values of the IK tasks, to build targets from a configuration.
pub fn task_values(model: &RobotModel, q: &DVector<f64>) -> IkTargets {
    let poses = body_poses(model, q);
    let com = crate::kinematics::center_of_mass(model, q);
    IkTargets {
        com: Some(com),
        base_pitch: model.base_pitch_index().map(|i| q[i]),
        feet: model
            .feet
            .iter()
            .map(|f| {
                let pk = point_kinematics_with(model, &poses, f.link, &f.sole);
                Some(FootTarget { x: pk.position.x, z: pk.position.y, angle: pk.angle })
            })
            .collect(),
    }
}
