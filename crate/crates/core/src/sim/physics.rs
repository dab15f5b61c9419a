//! Fixed-step integration of the contact-constrained dynamics with a
//! unilateral active set, drift projection and inelastic touchdown.

use nalgebra::{DVector, Vector2};

use crate::contact::{contact_impulse, contact_jacobian, forward_dynamics_generalized, ContactSet, ConstrainedDynamicsResult};
use crate::error::{Error, Result};
use crate::kinematics::{body_poses, point_kinematics_with};
use crate::model::{Direction, FullState, RobotModel};

/// Constraint drift above which positions and velocities are projected back.
pub const DRIFT_TOLERANCE: f64 = 1e-6;

/// One semi-implicit Euler step under a fixed contact set:
/// `v ← v + qdd dt`, `q ← q + v dt`.
pub fn step(
    model: &RobotModel,
    state: &FullState,
    generalized_force: &DVector<f64>,
    contacts: &ContactSet,
    dt: f64,
) -> Result<(FullState, ConstrainedDynamicsResult)> {
    let fd = forward_dynamics_generalized(model, &state.q, &state.v, generalized_force, contacts)?;
    let v = &state.v + &fd.qdd * dt;
    let q = &state.q + &v * dt;
    Ok((FullState { q, v }, fd))
}

/// Simulated robot: state plus the contact points currently held.
#[derive(Clone, Debug)]
pub struct Plant {
    pub model: RobotModel,
    pub state: FullState,
    /// Per endeffector.
    pub active: Vec<bool>,
    /// Ground point each active endeffector is pinned to.
    pub anchors: Vec<Vector2<f64>>,
    /// World (x, z) contact force per endeffector from the last step.
    pub forces: Vec<Vector2<f64>>,
    /// Largest contact position drift seen before correction.
    pub max_drift: f64,
}

/// What happened during one physics step.
#[derive(Clone, Debug, Default)]
pub struct StepEvents {
    pub touchdowns: Vec<usize>,
    pub liftoffs: Vec<usize>,
    /// Constraint residual `‖J v⁺‖∞` after each touchdown impulse.
    pub impulse_residual: f64,
}

impl Plant {
    pub fn new(model: RobotModel, state: FullState, active: Vec<bool>) -> Self {
        let ne = model.endeffectors.len();
        let mut p = Self {
            anchors: vec![Vector2::zeros(); ne],
            forces: vec![Vector2::zeros(); ne],
            model,
            state,
            active,
            max_drift: 0.0,
        };
        for e in 0..ne {
            if p.active[e] {
                p.anchors[e] = p.anchor_for(e);
            }
        }
        p
    }

    pub fn point_positions(&self) -> Vec<(Vector2<f64>, Vector2<f64>)> {
        let poses = body_poses(&self.model, &self.state.q);
        self.model
            .endeffectors
            .iter()
            .map(|e| {
                let pk = point_kinematics_with(&self.model, &poses, e.link, &e.offset);
                let vel = pk.jacobian.rows(0, 2) * &self.state.v;
                (pk.position, Vector2::new(vel[0], vel[1]))
            })
            .collect()
    }

    fn anchor_for(&self, e: usize) -> Vector2<f64> {
        let p = self.point_positions()[e].0;
        Vector2::new(p.x, 0.0)
    }

    pub fn contact_set(&self) -> ContactSet {
        let points: Vec<usize> = (0..self.active.len()).filter(|&i| self.active[i]).collect();
        ContactSet::from_points(&self.model, &points).expect("active points are valid endeffectors")
    }

    /// Advances by `dt` with the given generalized force. `may_lift[e]`
    /// allows an endeffector with zero normal force to leave the ground; a
    /// negative normal force always releases the point.
    pub fn advance(&mut self, generalized_force: &DVector<f64>, may_lift: &[bool], dt: f64) -> Result<StepEvents> {
        let mut events = StepEvents::default();
        let ne = self.active.len();
        let (next, fd, cs) = loop {
            let cs = self.contact_set();
            let (next, fd) = step(&self.model, &self.state, generalized_force, &cs, dt)?;
            if next.q.iter().chain(next.v.iter()).any(|x| !x.is_finite()) {
                return Err(Error::InvalidArgument("simulation state is no longer finite".into()));
            }
            let rows = cs.rows();
            let mut worst: Option<(usize, f64)> = None;
            for (r, &(e, d)) in rows.iter().enumerate() {
                if d != Direction::Z {
                    continue;
                }
                let f = fd.f_c[r];
                let release = f < 0.0 || (f <= 0.0 && may_lift[e]);
                if release && worst.is_none_or(|(_, w)| f < w) {
                    worst = Some((e, f));
                }
            }
            match worst {
                Some((e, _)) => {
                    self.active[e] = false;
                    events.liftoffs.push(e);
                }
                None => break (next, fd, cs),
            }
        };
        self.forces = vec![Vector2::zeros(); ne];
        for (r, &(e, d)) in cs.rows().iter().enumerate() {
            match d {
                Direction::X => self.forces[e].x = fd.f_c[r],
                Direction::Z => self.forces[e].y = fd.f_c[r],
                Direction::Pitch => {}
            }
        }
        self.state = next;
        self.correct_drift(&cs)?;

        let pts = self.point_positions();
        let landing: Vec<usize> = (0..ne)
            .filter(|&e| !self.active[e] && pts[e].0.y <= 0.0 && pts[e].1.y < 0.0)
            .collect();
        if !landing.is_empty() {
            for &e in &landing {
                self.active[e] = true;
                self.anchors[e] = Vector2::new(pts[e].0.x, 0.0);
            }
            let cs = self.contact_set();
            self.correct_drift(&cs)?;
            let (v_plus, _) = contact_impulse(&self.model, &self.state.q, &self.state.v, &cs)?;
            self.state.v = v_plus;
            let jac = contact_jacobian(&self.model, &self.state.q, &cs);
            events.impulse_residual = (&jac * &self.state.v).amax();
            events.touchdowns = landing;
        }
        Ok(events)
    }

    /// Position error of each constrained row against its anchor.
    fn drift(&self, cs: &ContactSet) -> DVector<f64> {
        let pts = self.point_positions();
        let rows = cs.rows();
        DVector::from_iterator(
            rows.len(),
            rows.iter().map(|&(e, d)| match d {
                Direction::X => pts[e].0.x - self.anchors[e].x,
                Direction::Z => pts[e].0.y - self.anchors[e].y,
                Direction::Pitch => 0.0,
            }),
        )
    }

    fn correct_drift(&mut self, cs: &ContactSet) -> Result<()> {
        if cs.is_empty() {
            return Ok(());
        }
        for pass in 0..3 {
            let r = self.drift(cs);
            let err = r.amax();
            if pass == 0 {
                self.max_drift = self.max_drift.max(err);
            }
            if err <= DRIFT_TOLERANCE {
                break;
            }
            let jac = contact_jacobian(&self.model, &self.state.q, cs);
            let gram = &jac * jac.transpose();
            let svd = gram.svd(true, true);
            let tol = 1e-12 * svd.singular_values.max();
            let y = svd.solve(&r, tol).expect("both factors computed");
            self.state.q -= jac.transpose() * y;
        }
        let jac = contact_jacobian(&self.model, &self.state.q, cs);
        if (&jac * &self.state.v).amax() > DRIFT_TOLERANCE {
            self.state.v = contact_impulse(&self.model, &self.state.q, &self.state.v, cs)?.0;
        }
        Ok(())
    }
}
