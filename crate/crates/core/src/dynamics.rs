//! Equations-of-motion terms: mass matrix (composite rigid body algorithm)
//! and bias forces / inverse dynamics (recursive Newton-Euler).

use nalgebra::{DMatrix, DVector, Matrix3};

use crate::error::Result;
use crate::model::RobotModel;
use crate::spatial::{cross_force, cross_motion, Force, Motion, Xform};

fn tree_transforms(model: &RobotModel, q: &DVector<f64>) -> Vec<Xform> {
    model
        .bodies
        .iter()
        .enumerate()
        .map(|(i, b)| Xform::from_pose(b.rel_pose(q[i])))
        .collect()
}

/// Joint-space inertia matrix `M(q)`.
pub fn mass_matrix(model: &RobotModel, q: &DVector<f64>) -> Result<DMatrix<f64>> {
    model.check_q(q)?;
    Ok(crba(model, q))
}

pub(crate) fn crba(model: &RobotModel, q: &DVector<f64>) -> DMatrix<f64> {
    let n = model.n();
    let xs = tree_transforms(model, q);
    let mut ic: Vec<Matrix3<f64>> = model.bodies.iter().map(|b| b.inertia).collect();
    for i in (0..n).rev() {
        if let Some(p) = model.bodies[i].parent {
            let x = xs[i].motion_matrix();
            let contrib = x.transpose() * ic[i] * x;
            ic[p] += contrib;
        }
    }
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        let s_i = model.bodies[i].motion_subspace();
        let mut f: Force = ic[i] * s_i;
        m[(i, i)] = s_i.dot(&f) + model.bodies[i].armature;
        let mut j = i;
        while let Some(p) = model.bodies[j].parent {
            f = xs[j].inv_apply_force(&f);
            j = p;
            let v = model.bodies[j].motion_subspace().dot(&f);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Generalized forces required to realize `qdd` at `(q, v)`.
pub fn inverse_dynamics(
    model: &RobotModel,
    q: &DVector<f64>,
    v: &DVector<f64>,
    qdd: &DVector<f64>,
) -> Result<DVector<f64>> {
    model.check_q(q)?;
    model.check_v(v)?;
    crate::error::check_len("accelerations", model.n(), qdd.len())?;
    Ok(rnea(model, q, v, Some(qdd)))
}

/// `C(q, v) v + g(q)`.
pub fn nonlinear_effects(model: &RobotModel, q: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    model.check_q(q)?;
    model.check_v(v)?;
    Ok(rnea(model, q, v, None))
}

pub(crate) fn rnea(model: &RobotModel, q: &DVector<f64>, v: &DVector<f64>, qdd: Option<&DVector<f64>>) -> DVector<f64> {
    let n = model.n();
    let xs = tree_transforms(model, q);
    // gravity enters as a fictitious upward acceleration of the world
    let a_world = Motion::new(0.0, 0.0, model.gravity);
    let mut vel = vec![Motion::zeros(); n];
    let mut acc = vec![Motion::zeros(); n];
    let mut f = vec![Force::zeros(); n];
    for i in 0..n {
        let body = &model.bodies[i];
        let s = body.motion_subspace();
        let vj = s * v[i];
        let qdd_i = qdd.map_or(0.0, |a| a[i]);
        let (v_parent, a_parent) = match body.parent {
            Some(p) => (vel[p], acc[p]),
            None => (Motion::zeros(), a_world),
        };
        vel[i] = xs[i].apply_motion(&v_parent) + vj;
        acc[i] = xs[i].apply_motion(&a_parent) + s * qdd_i + cross_motion(&vel[i], &vj);
        f[i] = body.inertia * acc[i] + cross_force(&vel[i], &(body.inertia * vel[i]));
    }
    let mut tau = DVector::zeros(n);
    for i in (0..n).rev() {
        tau[i] = model.bodies[i].motion_subspace().dot(&f[i]) + model.bodies[i].armature * qdd.map_or(0.0, |a| a[i]);
        if let Some(p) = model.bodies[i].parent {
            let fp = xs[i].inv_apply_force(&f[i]);
            f[p] += fp;
        }
    }
    tau
}

/// Kinetic plus potential energy; used by tests and simulator diagnostics.
pub fn total_energy(model: &RobotModel, q: &DVector<f64>, v: &DVector<f64>) -> f64 {
    let m = crba(model, q);
    let kinetic = 0.5 * v.dot(&(&m * v));
    let com = crate::kinematics::center_of_mass(model, q);
    kinetic + model.total_mass() * model.gravity * com.y
}
