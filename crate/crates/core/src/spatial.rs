//! Planar (3-component) spatial algebra.
//!
//! Motion vectors are `(omega, vx, vz)` and force vectors `(moment, fx, fz)`.
//! Positive rotation turns the in-plane horizontal axis toward the vertical
//! axis, so `omega x r = omega * perp(r)` with `perp(r) = (-r_z, r_x)`.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};

pub type Motion = Vector3<f64>;
pub type Force = Vector3<f64>;

#[inline]
pub fn perp(r: &Vector2<f64>) -> Vector2<f64> {
    Vector2::new(-r.y, r.x)
}

/// Scalar cross product of two in-plane vectors.
#[inline]
pub fn cross2(a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

#[inline]
pub fn rot(angle: f64) -> Matrix2<f64> {
    let (s, c) = angle.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// Rigid placement of a frame: orientation angle and origin position,
/// both expressed in the reference frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose2 {
    pub angle: f64,
    pub pos: Vector2<f64>,
}

impl Pose2 {
    pub fn identity() -> Self {
        Self { angle: 0.0, pos: Vector2::zeros() }
    }

    pub fn new(angle: f64, pos: Vector2<f64>) -> Self {
        Self { angle, pos }
    }

    pub fn rotation(&self) -> Matrix2<f64> {
        rot(self.angle)
    }

    /// Maps a point given in this frame into the reference frame.
    pub fn transform_point(&self, local: &Vector2<f64>) -> Vector2<f64> {
        self.pos + self.rotation() * local
    }

    /// `self * rel`: the pose of a frame placed at `rel` relative to `self`.
    pub fn compose(&self, rel: &Pose2) -> Pose2 {
        Pose2 {
            angle: self.angle + rel.angle,
            pos: self.transform_point(&rel.pos),
        }
    }
}

/// Plücker transform `child_X_parent` built from the pose of the child frame
/// relative to its parent.
#[derive(Clone, Copy, Debug)]
pub struct Xform {
    rel: Pose2,
}

impl Xform {
    pub fn from_pose(rel: Pose2) -> Self {
        Self { rel }
    }

    /// Re-expresses a parent-frame motion vector in the child frame.
    pub fn apply_motion(&self, m: &Motion) -> Motion {
        let rt = self.rel.rotation().transpose();
        let v = Vector2::new(m[1], m[2]) + m[0] * perp(&self.rel.pos);
        let v = rt * v;
        Motion::new(m[0], v.x, v.y)
    }

    /// Re-expresses a child-frame force vector in the parent frame.
    pub fn inv_apply_force(&self, f: &Force) -> Force {
        let fp = self.rel.rotation() * Vector2::new(f[1], f[2]);
        let n = f[0] + cross2(&self.rel.pos, &fp);
        Force::new(n, fp.x, fp.y)
    }

    pub fn motion_matrix(&self) -> Matrix3<f64> {
        let rt = self.rel.rotation().transpose();
        let col0 = rt * perp(&self.rel.pos);
        Matrix3::new(
            1.0, 0.0, 0.0, //
            col0.x, rt[(0, 0)], rt[(0, 1)], //
            col0.y, rt[(1, 0)], rt[(1, 1)],
        )
    }
}

/// Motion cross product `a x b`.
pub fn cross_motion(a: &Motion, b: &Motion) -> Motion {
    let al = Vector2::new(a[1], a[2]);
    let bl = Vector2::new(b[1], b[2]);
    let lin = a[0] * perp(&bl) - b[0] * perp(&al);
    Motion::new(0.0, lin.x, lin.y)
}

/// Force cross product `a x* f`.
pub fn cross_force(a: &Motion, f: &Force) -> Force {
    let al = Vector2::new(a[1], a[2]);
    let fl = Vector2::new(f[1], f[2]);
    let lin = a[0] * perp(&fl);
    Force::new(cross2(&al, &fl), lin.x, lin.y)
}

/// Spatial inertia about a body frame origin for a body of mass `m` with
/// centre of mass `c` (body frame) and rotational inertia `i_c` about it.
pub fn spatial_inertia(m: f64, c: &Vector2<f64>, i_c: f64) -> Matrix3<f64> {
    Matrix3::new(
        i_c + m * c.norm_squared(),
        -m * c.y,
        m * c.x,
        -m * c.y,
        m,
        0.0,
        m * c.x,
        0.0,
        m,
    )
}
