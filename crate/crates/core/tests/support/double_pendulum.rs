//! Hand-derived Lagrangian dynamics of a planar double pendulum.
//!
//! Angles are measured from the downward vertical; link 1 has mass `m1`, its
//! centre of mass `c1` from the shoulder and inertia `i1` about the centre of
//! mass; link 2 likewise, attached at distance `l1` from the shoulder.

use contact_lqr::model::{JointKind, Link, Plane, RobotModel};
use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

#[derive(Clone, Copy, Debug)]
pub struct DoublePendulum {
    pub m1: f64,
    pub m2: f64,
    pub l1: f64,
    pub c1: f64,
    pub c2: f64,
    pub i1: f64,
    pub i2: f64,
    pub g: f64,
}

impl Default for DoublePendulum {
    fn default() -> Self {
        Self { m1: 1.3, m2: 0.8, l1: 0.9, c1: 0.4, c2: 0.35, i1: 0.05, i2: 0.02, g: 9.81 }
    }
}

impl DoublePendulum {
    pub fn model(&self) -> RobotModel {
        let links = vec![
            Link {
                name: "upper".into(),
                parent: None,
                joint: JointKind::Revolute,
                origin: Vector2::zeros(),
                origin_angle: 0.0,
                mass: self.m1,
                com: Vector2::new(0.0, -self.c1),
                inertia: self.i1,
                rest: 0.0,
                armature: 0.0,
            },
            Link {
                name: "lower".into(),
                parent: Some(0),
                joint: JointKind::Revolute,
                origin: Vector2::new(0.0, -self.l1),
                origin_angle: 0.0,
                mass: self.m2,
                com: Vector2::new(0.0, -self.c2),
                inertia: self.i2,
                rest: 0.0,
                armature: 0.0,
            },
        ];
        RobotModel::new("double-pendulum", Plane::Sagittal, self.g, links, vec![], vec![]).unwrap()
    }

    pub fn mass_matrix(&self, q: &[f64; 2]) -> Matrix2<f64> {
        let c = q[1].cos();
        let k = self.m2 * self.l1 * self.c2;
        let m11 = self.i1 + self.i2 + self.m1 * self.c1 * self.c1
            + self.m2 * (self.l1 * self.l1 + self.c2 * self.c2)
            + 2.0 * k * c;
        let m12 = self.i2 + self.m2 * self.c2 * self.c2 + k * c;
        let m22 = self.i2 + self.m2 * self.c2 * self.c2;
        Matrix2::new(m11, m12, m12, m22)
    }

    /// d/dq2 of the mass matrix (it does not depend on q1).
    fn mass_matrix_dq2(&self, q: &[f64; 2]) -> Matrix2<f64> {
        let s = q[1].sin();
        let k = self.m2 * self.l1 * self.c2;
        Matrix2::new(-2.0 * k * s, -k * s, -k * s, 0.0)
    }

    /// `C(q, v) v + g(q)` from d/dt(dL/dv) - dL/dq.
    pub fn bias(&self, q: &[f64; 2], v: &[f64; 2]) -> Vector2<f64> {
        let k = self.m2 * self.l1 * self.c2;
        let s2 = q[1].sin();
        let cor1 = -k * s2 * (2.0 * v[0] * v[1] + v[1] * v[1]);
        let cor2 = k * s2 * v[0] * v[0];
        let s1 = q[0].sin();
        let s12 = (q[0] + q[1]).sin();
        let g1 = (self.m1 * self.c1 + self.m2 * self.l1) * self.g * s1 + self.m2 * self.c2 * self.g * s12;
        let g2 = self.m2 * self.c2 * self.g * s12;
        Vector2::new(cor1 + g1, cor2 + g2)
    }

    fn bias_dq(&self, q: &[f64; 2], v: &[f64; 2]) -> Matrix2<f64> {
        let k = self.m2 * self.l1 * self.c2;
        let c2 = q[1].cos();
        let c1 = q[0].cos();
        let c12 = (q[0] + q[1]).cos();
        let a = self.m2 * self.c2 * self.g * c12;
        let d1_dq1 = (self.m1 * self.c1 + self.m2 * self.l1) * self.g * c1 + a;
        let d1_dq2 = -k * c2 * (2.0 * v[0] * v[1] + v[1] * v[1]) + a;
        let d2_dq1 = a;
        let d2_dq2 = k * c2 * v[0] * v[0] + a;
        Matrix2::new(d1_dq1, d1_dq2, d2_dq1, d2_dq2)
    }

    fn bias_dv(&self, q: &[f64; 2], v: &[f64; 2]) -> Matrix2<f64> {
        let k = self.m2 * self.l1 * self.c2;
        let s2 = q[1].sin();
        Matrix2::new(
            -k * s2 * 2.0 * v[1],
            -k * s2 * (2.0 * v[0] + 2.0 * v[1]),
            2.0 * k * s2 * v[0],
            0.0,
        )
    }

    pub fn forward(&self, q: &[f64; 2], v: &[f64; 2], tau: &[f64; 2]) -> Vector2<f64> {
        let m = self.mass_matrix(q);
        m.try_inverse().unwrap() * (Vector2::new(tau[0], tau[1]) - self.bias(q, v))
    }

    /// Exact state-space Jacobians of x' = (v, qdd(q, v, tau0 + u)).
    pub fn linearization(&self, q: &[f64; 2], v: &[f64; 2], tau0: &[f64; 2]) -> (DMatrix<f64>, DMatrix<f64>) {
        let m = self.mass_matrix(q);
        let minv = m.try_inverse().unwrap();
        let qdd = self.forward(q, v, tau0);
        let dm2 = self.mass_matrix_dq2(q);
        let dh_dq = self.bias_dq(q, v);
        let dh_dv = self.bias_dv(q, v);
        // d(qdd)/dq_j = -M^-1 (dM/dq_j qdd + dh/dq_j)
        let col1 = -minv * dh_dq.column(0);
        let col2 = -minv * (dm2 * qdd + dh_dq.column(1));
        let dqdd_dv = -minv * dh_dv;
        let mut a = DMatrix::zeros(4, 4);
        a[(0, 2)] = 1.0;
        a[(1, 3)] = 1.0;
        for r in 0..2 {
            a[(2 + r, 0)] = col1[r];
            a[(2 + r, 1)] = col2[r];
            a[(2 + r, 2)] = dqdd_dv[(r, 0)];
            a[(2 + r, 3)] = dqdd_dv[(r, 1)];
        }
        let mut b = DMatrix::zeros(4, 2);
        for r in 0..2 {
            for c in 0..2 {
                b[(2 + r, c)] = minv[(r, c)];
            }
        }
        (a, b)
    }

    pub fn energy(&self, q: &[f64; 2], v: &[f64; 2]) -> f64 {
        let vv = Vector2::new(v[0], v[1]);
        let kinetic = 0.5 * vv.dot(&(self.mass_matrix(q) * vv));
        let h1 = -self.c1 * q[0].cos();
        let h2 = -self.l1 * q[0].cos() - self.c2 * (q[0] + q[1]).cos();
        kinetic + self.g * (self.m1 * h1 + self.m2 * h2)
    }
}

pub fn dv(x: &[f64; 2]) -> DVector<f64> {
    DVector::from_column_slice(x)
}
