//! LQR gains for a contact-constrained pose, synthesized on the minimal
//! system and mapped back to the full state.

pub mod care;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use care::{care_residual, lqr_gain, solve_care, solve_lyapunov, spectral_abscissa};

use crate::contact::{constraint_matrix, ContactEntry, ContactSet};
use crate::error::{Error, Result};
use crate::linearize::{linearize, nullspace_basis, reduce};
use crate::model::{Direction, FullState, RobotModel};
use crate::planner::{distribute_contact_forces_at, lever_split};

/// Diagonal cost weights: `Q = diag(q_pos I, q_vel I)`, `R = r I`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LqrWeights {
    pub q_pos: f64,
    pub q_vel: f64,
    pub r: f64,
}

impl Default for LqrWeights {
    fn default() -> Self {
        Self { q_pos: 3000.0, q_vel: 1.0, r: 0.01 }
    }
}

impl LqrWeights {
    pub fn matrices(&self, model: &RobotModel) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = model.n();
        let mut q = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            q[(i, i)] = self.q_pos;
            q[(n + i, n + i)] = self.q_vel;
        }
        (q, DMatrix::identity(model.n_u(), model.n_u()) * self.r)
    }
}

/// `τ = τ₀ − K (x − x₀)` around one key pose.
#[derive(Clone, Debug, PartialEq)]
pub struct LqrController {
    pub label: String,
    pub contacts: ContactSet,
    pub x0: FullState,
    pub tau0: DVector<f64>,
    /// n_u x 2n.
    pub k: DMatrix<f64>,
    /// Riccati solution of the minimal system.
    pub p_m: DMatrix<f64>,
    pub pitch_index: Option<usize>,
}

impl LqrController {
    pub fn control(&self, x: &FullState) -> DVector<f64> {
        feedback(&self.k, &self.tau0, &self.x0, x, self.pitch_index)
    }

    /// Joint-position block of the gain (actuated rows, actuated position columns).
    pub fn joint_position_gains(&self) -> DMatrix<f64> {
        let nu = self.k.nrows();
        let nb = self.x0.q.len() - nu;
        self.k.view((0, nb), (nu, nu)).into_owned()
    }
}

pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let r = a.rem_euclid(two_pi);
    if r > std::f64::consts::PI {
        r - two_pi
    } else {
        r
    }
}

/// `x − x₀` stacked as `(dq, dv)`, with the pitch deviation wrapped.
pub fn state_error(x0: &FullState, x: &FullState, pitch_index: Option<usize>) -> DVector<f64> {
    let n = x0.q.len();
    let mut e = DVector::zeros(2 * n);
    for i in 0..n {
        e[i] = x.q[i] - x0.q[i];
        e[n + i] = x.v[i] - x0.v[i];
    }
    if let Some(p) = pitch_index {
        e[p] = wrap_angle(e[p]);
    }
    e
}

pub fn feedback(
    k: &DMatrix<f64>,
    tau0: &DVector<f64>,
    x0: &FullState,
    x: &FullState,
    pitch_index: Option<usize>,
) -> DVector<f64> {
    tau0 - k * state_error(x0, x, pitch_index)
}

/// Everything produced along the way, for diagnostics.
#[derive(Clone, Debug)]
pub struct Synthesis {
    pub controller: LqrController,
    pub basis: DMatrix<f64>,
    pub k_m: DMatrix<f64>,
    pub a_m: DMatrix<f64>,
    pub b_m: DMatrix<f64>,
}

pub fn synthesize(
    model: &RobotModel,
    pose: &FullState,
    contacts: &ContactSet,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    label: &str,
) -> Result<LqrController> {
    Ok(synthesize_detailed(model, pose, contacts, q, r, label)?.controller)
}

pub fn synthesize_detailed(
    model: &RobotModel,
    pose: &FullState,
    contacts: &ContactSet,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    label: &str,
) -> Result<Synthesis> {
    let split = lever_split(model, &pose.q, contacts);
    let tau0 = distribute_contact_forces_at(model, &pose.q, &pose.v, contacts, &split)?.tau;
    let sys = linearize(model, pose, &tau0, contacts)?;
    let basis = nullspace_basis(&constraint_matrix(model, &pose.q, &pose.v, contacts)?);
    let red = reduce(&sys, &basis, q, r)?;
    let p_m = solve_care(&red.a_m, &red.b_m, &red.q_m, &red.r_m)?;
    let k_m = lqr_gain(&red.b_m, &red.r_m, &p_m)?;
    let k = &k_m * basis.transpose();
    Ok(Synthesis {
        controller: LqrController {
            label: label.to_string(),
            contacts: contacts.clone(),
            x0: pose.clone(),
            tau0,
            k,
            p_m,
            pitch_index: model.base_pitch_index(),
        },
        basis,
        k_m,
        a_m: red.a_m,
        b_m: red.b_m,
    })
}

// ---- serialization ----

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactRecord {
    pub endeffector: String,
    pub directions: Vec<Direction>,
}

/// Plain-data form of a controller; contacts are referenced by name.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerRecord {
    pub label: String,
    pub contacts: Vec<ContactRecord>,
    pub q0: Vec<f64>,
    pub v0: Vec<f64>,
    pub tau0: Vec<f64>,
    /// Row-major.
    pub k: Vec<Vec<f64>>,
    pub p_m: Vec<Vec<f64>>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_from_rows(rows: &[Vec<f64>], ncols: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::InvalidArgument(format!("{what}: every row must have {ncols} entries")));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

impl ControllerRecord {
    pub fn from_controller(model: &RobotModel, c: &LqrController) -> Self {
        Self {
            label: c.label.clone(),
            contacts: c
                .contacts
                .entries()
                .iter()
                .map(|e| ContactRecord {
                    endeffector: model.endeffectors[e.endeffector].name.clone(),
                    directions: e.directions.clone(),
                })
                .collect(),
            q0: c.x0.q.iter().copied().collect(),
            v0: c.x0.v.iter().copied().collect(),
            tau0: c.tau0.iter().copied().collect(),
            k: rows_of(&c.k),
            p_m: rows_of(&c.p_m),
        }
    }

    pub fn into_controller(self, model: &RobotModel) -> Result<LqrController> {
        let (n, nu) = (model.n(), model.n_u());
        crate::error::check_len("controller q0", n, self.q0.len())?;
        crate::error::check_len("controller v0", n, self.v0.len())?;
        crate::error::check_len("controller tau0", nu, self.tau0.len())?;
        crate::error::check_len("controller gain rows", nu, self.k.len())?;
        let entries = self
            .contacts
            .into_iter()
            .map(|c| Ok(ContactEntry { endeffector: model.endeffector_index(&c.endeffector)?, directions: c.directions }))
            .collect::<Result<Vec<_>>>()?;
        let r = self.p_m.len();
        Ok(LqrController {
            label: self.label,
            contacts: ContactSet::new(model, entries)?,
            x0: FullState { q: DVector::from_vec(self.q0), v: DVector::from_vec(self.v0) },
            tau0: DVector::from_vec(self.tau0),
            k: matrix_from_rows(&self.k, 2 * n, "controller gain")?,
            p_m: matrix_from_rows(&self.p_m, r, "controller Riccati solution")?,
            pitch_index: model.base_pitch_index(),
        })
    }
}

/// `‖offdiag(K_pos)‖_F / ‖diag(K_pos)‖_F` over the joint-position gains.
pub fn coupling_ratio(c: &LqrController) -> f64 {
    let k = c.joint_position_gains();
    let diag = k.diagonal().norm();
    let off = (k.norm_squared() - diag * diag).max(0.0).sqrt();
    off / diag
}

/// True when each swing-leg joint's own position gain exceeds the summed
/// magnitudes of its gains on the joints of the other legs.
pub fn swing_leg_dominant(model: &RobotModel, c: &LqrController, swing_foot: usize) -> bool {
    let nb = model.n_base();
    let k = c.joint_position_gains();
    let swing = model.leg_coordinates(swing_foot);
    let others: Vec<usize> = (nb..model.n()).filter(|j| !swing.contains(j)).collect();
    swing.iter().all(|&i| {
        let coupled: f64 = others.iter().map(|&j| k[(i - nb, j - nb)].abs()).sum();
        k[(i - nb, i - nb)] > coupled
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::bundled;

    fn standing(model: &RobotModel) -> FullState {
        let mut q = DVector::zeros(model.n());
        q[1] = 0.88;
        FullState::at_rest(q)
    }

    #[test]
    fn wrap_angle_range() {
        use std::f64::consts::PI;
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert_eq!(wrap_angle(0.25), 0.25);
    }

    #[test]
    fn gain_invariant_to_joint_cost_scaling() {
        let model = bundled::biped_frontal();
        let pose = standing(&model);
        let cs = ContactSet::flat_feet(&model, &[0, 1]).unwrap();
        let (q, r) = LqrWeights::default().matrices(&model);
        let a = synthesize(&model, &pose, &cs, &q, &r, "a").unwrap();
        let b = synthesize(&model, &pose, &cs, &(&q * 2.0), &(&r * 2.0), "b").unwrap();
        assert!((a.k - b.k).amax() < 1e-9);
    }

    #[test]
    fn controller_is_affine_in_the_state() {
        let model = bundled::biped_frontal();
        let pose = standing(&model);
        let cs = ContactSet::flat_feet(&model, &[0, 1]).unwrap();
        let (q, r) = LqrWeights::default().matrices(&model);
        let c = synthesize(&model, &pose, &cs, &q, &r, "ds").unwrap();
        assert_eq!(c.control(&pose), c.tau0);
        let mut d = FullState::at_rest(DVector::zeros(model.n()));
        d.q[4] = 0.01;
        d.v[3] = -0.02;
        let x1 = FullState { q: &pose.q + &d.q, v: &pose.v + &d.v };
        let x2 = FullState { q: &pose.q + 2.0 * &d.q, v: &pose.v + 2.0 * &d.v };
        let t1 = c.control(&x1) - &c.tau0;
        let t2 = c.control(&x2) - &c.tau0;
        assert!((t2 - 2.0 * t1).amax() < 1e-9);
    }

    #[test]
    fn gains_annihilate_constrained_directions() {
        let model = bundled::biped_sagittal();
        let pose = standing(&model);
        let cs = ContactSet::flat_feet(&model, &[0, 1]).unwrap();
        let (q, r) = LqrWeights::default().matrices(&model);
        let s = synthesize_detailed(&model, &pose, &cs, &q, &r, "ds").unwrap();
        let n2 = 2 * model.n();
        let proj = DMatrix::identity(n2, n2) - &s.basis * s.basis.transpose();
        assert!((&s.controller.k * proj).amax() < 1e-10);
        let closed = &s.a_m - &s.b_m * &s.k_m;
        assert!(spectral_abscissa(&closed) < 0.0);
    }

    #[test]
    fn record_round_trip_is_exact() {
        let model = bundled::biped_sagittal();
        let pose = standing(&model);
        let cs = ContactSet::flat_feet(&model, &[0]).unwrap();
        let (q, r) = LqrWeights::default().matrices(&model);
        let c = synthesize(&model, &pose, &cs, &q, &r, "left").unwrap();
        let rec = ControllerRecord::from_controller(&model, &c);
        let text = toml::to_string(&rec).unwrap();
        let back: ControllerRecord = toml::from_str(&text).unwrap();
        assert_eq!(back.into_controller(&model).unwrap(), c);
    }
}
