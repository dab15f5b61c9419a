//! Forward kinematics, point Jacobians and their time derivatives.

use nalgebra::{DMatrix, DVector, Vector2};

use crate::error::{Error, Result};
use crate::model::{Direction, DofKind, RobotModel};
use crate::spatial::{perp, Pose2};

/// World poses of every body frame.
pub fn body_poses(model: &RobotModel, q: &DVector<f64>) -> Vec<Pose2> {
    let mut poses: Vec<Pose2> = Vec::with_capacity(model.n());
    for (i, body) in model.bodies.iter().enumerate() {
        let rel = body.rel_pose(q[i]);
        let pose = match body.parent {
            Some(p) => poses[p].compose(&rel),
            None => rel,
        };
        poses.push(pose);
    }
    poses
}

/// World pose of a link frame.
pub fn link_pose(model: &RobotModel, q: &DVector<f64>, link: usize) -> Pose2 {
    body_poses(model, q)[model.link_body[link]]
}

/// World angular velocity and origin velocity of every body frame.
fn body_velocities(model: &RobotModel, poses: &[Pose2], v: &DVector<f64>) -> Vec<(f64, Vector2<f64>)> {
    let mut out: Vec<(f64, Vector2<f64>)> = Vec::with_capacity(model.n());
    for (i, body) in model.bodies.iter().enumerate() {
        let (w_parent, pdot_parent, o_parent) = match body.parent {
            Some(p) => (out[p].0, out[p].1, poses[p].pos),
            None => (0.0, Vector2::zeros(), Vector2::zeros()),
        };
        let mut w = w_parent;
        let mut pdot = pdot_parent + w_parent * perp(&(poses[i].pos - o_parent));
        match &body.kind {
            DofKind::Revolute => w += v[i],
            DofKind::Prismatic(a) => pdot += poses[i].rotation() * a * v[i],
        }
        out.push((w, pdot));
    }
    out
}

fn ancestors(model: &RobotModel, body: usize) -> impl Iterator<Item = usize> + '_ {
    std::iter::successors(Some(body), move |&b| model.bodies[b].parent)
}

/// Kinematic quantities of a point fixed on a link.
#[derive(Clone, Debug)]
pub struct PointKinematics {
    pub position: Vector2<f64>,
    pub angle: f64,
    /// Rows: horizontal, vertical, angular.
    pub jacobian: DMatrix<f64>,
}

/// Position, orientation and 3 x n Jacobian of a point on `link` at `offset`.
pub fn point_kinematics(model: &RobotModel, q: &DVector<f64>, link: usize, offset: &Vector2<f64>) -> PointKinematics {
    let poses = body_poses(model, q);
    point_kinematics_with(model, &poses, link, offset)
}

pub(crate) fn point_kinematics_with(
    model: &RobotModel,
    poses: &[Pose2],
    link: usize,
    offset: &Vector2<f64>,
) -> PointKinematics {
    let b = model.link_body[link];
    let p = poses[b].transform_point(offset);
    let mut jac = DMatrix::zeros(3, model.n());
    for j in ancestors(model, b) {
        match &model.bodies[j].kind {
            DofKind::Revolute => {
                let c = perp(&(p - poses[j].pos));
                jac[(0, j)] = c.x;
                jac[(1, j)] = c.y;
                jac[(2, j)] = 1.0;
            }
            DofKind::Prismatic(a) => {
                let c = poses[j].rotation() * a;
                jac[(0, j)] = c.x;
                jac[(1, j)] = c.y;
            }
        }
    }
    PointKinematics { position: p, angle: poses[b].angle, jacobian: jac }
}

/// Time derivative of the 3 x n point Jacobian along velocity `v`.
pub fn point_jacobian_dot(
    model: &RobotModel,
    q: &DVector<f64>,
    v: &DVector<f64>,
    link: usize,
    offset: &Vector2<f64>,
) -> DMatrix<f64> {
    let poses = body_poses(model, q);
    point_jacobian_dot_with(model, &poses, v, link, offset)
}

pub(crate) fn point_jacobian_dot_with(
    model: &RobotModel,
    poses: &[Pose2],
    v: &DVector<f64>,
    link: usize,
    offset: &Vector2<f64>,
) -> DMatrix<f64> {
    let vel = body_velocities(model, poses, v);
    let b = model.link_body[link];
    let p = poses[b].transform_point(offset);
    let pdot = vel[b].1 + vel[b].0 * perp(&(p - poses[b].pos));
    let mut jd = DMatrix::zeros(3, model.n());
    for j in ancestors(model, b) {
        match &model.bodies[j].kind {
            DofKind::Revolute => {
                let c = perp(&(pdot - vel[j].1));
                jd[(0, j)] = c.x;
                jd[(1, j)] = c.y;
            }
            DofKind::Prismatic(a) => {
                // the axis turns with the body frame
                let c = vel[j].0 * perp(&(poses[j].rotation() * a));
                jd[(0, j)] = c.x;
                jd[(1, j)] = c.y;
            }
        }
    }
    jd
}

fn direction_row(d: Direction) -> usize {
    match d {
        Direction::X => 0,
        Direction::Z => 1,
        Direction::Pitch => 2,
    }
}

/// Pose `(x, z, angle)` of an endeffector and its Jacobian restricted to the
/// endeffector's constrainable directions.
pub fn endeffector_kinematics(
    model: &RobotModel,
    q: &DVector<f64>,
    ee: usize,
) -> Result<(nalgebra::Vector3<f64>, DMatrix<f64>)> {
    model.check_q(q)?;
    let e = model
        .endeffectors
        .get(ee)
        .ok_or_else(|| Error::UnknownEndeffector(format!("#{ee}")))?;
    let pk = point_kinematics(model, q, e.link, &e.offset);
    let rows: Vec<usize> = e.directions.iter().map(|&d| direction_row(d)).collect();
    let jac = pk.jacobian.select_rows(rows.iter());
    Ok((nalgebra::Vector3::new(pk.position.x, pk.position.y, pk.angle), jac))
}

pub(crate) fn select_directions(full: &DMatrix<f64>, dirs: &[Direction]) -> DMatrix<f64> {
    let rows: Vec<usize> = dirs.iter().map(|&d| direction_row(d)).collect();
    full.select_rows(rows.iter())
}

/// Whole-body centre of mass.
pub fn center_of_mass(model: &RobotModel, q: &DVector<f64>) -> Vector2<f64> {
    let poses = body_poses(model, q);
    let mut c = Vector2::zeros();
    for (l, link) in model.links.iter().enumerate() {
        c += link.mass * poses[model.link_body[l]].transform_point(&link.com);
    }
    c / model.total_mass()
}

/// Centre of mass and its 2 x n Jacobian.
pub fn center_of_mass_jacobian(model: &RobotModel, q: &DVector<f64>) -> (Vector2<f64>, DMatrix<f64>) {
    let poses = body_poses(model, q);
    let total = model.total_mass();
    let mut c = Vector2::zeros();
    let mut jac = DMatrix::zeros(2, model.n());
    for (l, link) in model.links.iter().enumerate() {
        let pk = point_kinematics_with(model, &poses, l, &link.com);
        c += link.mass * pk.position;
        jac += (link.mass / total) * pk.jacobian.rows(0, 2);
    }
    (c / total, jac)
}
