//! CoM generation by ZMP preview control on the cart-table model
//! `p = c − (z_c / g) c̈`, jerk as input.

use nalgebra::{Matrix3, Matrix4, RowVector3, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_PREVIEW_HORIZON: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreviewWeights {
    /// On the ZMP tracking error.
    pub zmp_error: f64,
    /// On the CoM jerk increment.
    pub jerk: f64,
}

impl Default for PreviewWeights {
    fn default() -> Self {
        Self { zmp_error: 1.0, jerk: 1e-6 }
    }
}

#[derive(Clone, Debug)]
pub struct PreviewGains {
    /// Feedback on `[e, Δc, Δċ, Δc̈]`.
    pub feedback: Vector4<f64>,
    /// Feedforward on future reference increments `Δp_ref(k + l)`, `l = 1..=N`.
    pub preview: Vec<f64>,
    a: Matrix3<f64>,
    b: Vector3<f64>,
    c: RowVector3<f64>,
}

/// Stabilizing solution of the discrete Riccati equation by fixed-point iteration.
fn dare(a: &Matrix4<f64>, b: &Vector4<f64>, q: &Matrix4<f64>, r: f64) -> Result<Matrix4<f64>> {
    let mut p = *q;
    for _ in 0..200_000 {
        let pb = p * b;
        let s = r + (b.transpose() * pb)[0];
        let next = q + a.transpose() * (p - pb * pb.transpose() / s) * a;
        let change = (next - p).norm();
        p = next;
        if change <= 1e-13 * p.norm() {
            return Ok(p);
        }
    }
    Err(Error::Synthesis("preview Riccati iteration did not converge".into()))
}

impl PreviewGains {
    pub fn new(z_com: f64, gravity: f64, dt: f64, horizon_s: f64, weights: &PreviewWeights) -> Result<Self> {
        if horizon_s < MIN_PREVIEW_HORIZON {
            return Err(Error::InvalidArgument(format!(
                "preview horizon {horizon_s} s is shorter than {MIN_PREVIEW_HORIZON} s"
            )));
        }
        if !(dt > 0.0) || !(z_com > 0.0) || !(gravity > 0.0) {
            return Err(Error::InvalidArgument("preview needs positive dt, CoM height and gravity".into()));
        }
        let a = Matrix3::new(1.0, dt, dt * dt / 2.0, 0.0, 1.0, dt, 0.0, 0.0, 1.0);
        let b = Vector3::new(dt.powi(3) / 6.0, dt * dt / 2.0, dt);
        let c = RowVector3::new(1.0, 0.0, -z_com / gravity);
        let ca = c * a;
        let mut at = Matrix4::zeros();
        at[(0, 0)] = 1.0;
        at.fixed_view_mut::<1, 3>(0, 1).copy_from(&ca);
        at.fixed_view_mut::<3, 3>(1, 1).copy_from(&a);
        let mut bt = Vector4::zeros();
        bt[0] = (c * b)[0];
        bt.fixed_rows_mut::<3>(1).copy_from(&b);
        let mut q = Matrix4::zeros();
        q[(0, 0)] = weights.zmp_error;
        let p = dare(&at, &bt, &q, weights.jerk)?;
        let s = weights.jerk + (bt.transpose() * p * bt)[0];
        let feedback = (bt.transpose() * p * at).transpose() / s;
        let closed = at - bt * feedback.transpose();
        let n = (horizon_s / dt).round() as usize;
        let mut preview = Vec::with_capacity(n);
        let mut x = p * Vector4::new(1.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            preview.push((bt.transpose() * x)[0] / s);
            x = closed.transpose() * x;
        }
        Ok(Self { feedback, preview, a, b, c })
    }
}

/// CoM position, velocity and acceleration per sample.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ComTrajectory {
    pub pos: Vec<f64>,
    pub vel: Vec<f64>,
    pub acc: Vec<f64>,
}

impl ComTrajectory {
    /// Cart-table ZMP of the trajectory.
    pub fn zmp(&self, z_com: f64, gravity: f64) -> Vec<f64> {
        self.pos.iter().zip(&self.acc).map(|(c, a)| c - z_com / gravity * a).collect()
    }
}

/// Runs the preview controller over `zmp_ref`, starting at rest above
/// `zmp_ref[0]`. The reference is held at its last value beyond the end.
pub fn zmp_preview_com(
    zmp_ref: &[f64],
    z_com: f64,
    gravity: f64,
    dt: f64,
    horizon_s: f64,
    weights: &PreviewWeights,
) -> Result<ComTrajectory> {
    let gains = PreviewGains::new(z_com, gravity, dt, horizon_s, weights)?;
    let len = zmp_ref.len();
    let mut out = ComTrajectory::default();
    if len == 0 {
        return Ok(out);
    }
    let r = |k: usize| zmp_ref[k.min(len - 1)];
    let mut x = Vector3::new(zmp_ref[0], 0.0, 0.0);
    let mut dx = Vector3::zeros();
    let mut u = 0.0;
    for k in 0..len {
        out.pos.push(x[0]);
        out.vel.push(x[1]);
        out.acc.push(x[2]);
        let e = (gains.c * x)[0] - r(k);
        let state = Vector4::new(e, dx[0], dx[1], dx[2]);
        let mut du = -(gains.feedback.transpose() * state)[0];
        for (l, g) in gains.preview.iter().enumerate() {
            du += g * (r(k + l + 1) - r(k + l));
        }
        u += du;
        let next = gains.a * x + gains.b * u;
        dx = next - x;
        x = next;
    }
    Ok(out)
}
