//! Numerical linearization of the contact-constrained dynamics and its
//! projection onto the constraint nullspace.

use nalgebra::{DMatrix, DVector};

use crate::contact::{contact_jacobian, forward_dynamics_generalized, ContactSet};
use crate::error::{check_len, Error, Result};
use crate::model::{FullState, RobotModel};

/// Operating points whose constrained velocity exceeds this are rejected.
pub const CONSISTENCY_TOLERANCE: f64 = 1e-8;

/// Finite-difference steps. The state step is relative:
/// `h_i = state_step * max(1, |x_i|)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdSteps {
    pub state_step: f64,
    pub torque_step: f64,
}

impl Default for FdSteps {
    fn default() -> Self {
        Self { state_step: 1e-5, torque_step: 1e-4 }
    }
}

#[derive(Clone, Debug)]
pub struct OperatingPoint {
    pub state: FullState,
    pub tau0: DVector<f64>,
    pub contacts: ContactSet,
}

/// `x' = A x + B u` about an operating point, with `x = (dq, dv)`.
#[derive(Clone, Debug)]
pub struct LinearSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub op_point: OperatingPoint,
}

/// The linear system restricted to the constraint nullspace.
#[derive(Clone, Debug)]
pub struct ReducedSystem {
    /// Orthonormal nullspace basis, 2n x r.
    pub basis: DMatrix<f64>,
    pub a_m: DMatrix<f64>,
    pub b_m: DMatrix<f64>,
    pub q_m: DMatrix<f64>,
    pub r_m: DMatrix<f64>,
}

impl ReducedSystem {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }
}

pub fn linearize(
    model: &RobotModel,
    op_point: &FullState,
    tau0: &DVector<f64>,
    contacts: &ContactSet,
) -> Result<LinearSystem> {
    linearize_with(model, op_point, tau0, contacts, FdSteps::default())
}

pub fn linearize_with(
    model: &RobotModel,
    op_point: &FullState,
    tau0: &DVector<f64>,
    contacts: &ContactSet,
    steps: FdSteps,
) -> Result<LinearSystem> {
    model.check_q(&op_point.q)?;
    model.check_v(&op_point.v)?;
    check_len("feedforward torques", model.n_u(), tau0.len())?;
    let jac = contact_jacobian(model, &op_point.q, contacts);
    let residual = if jac.nrows() == 0 { 0.0 } else { (&jac * &op_point.v).amax() };
    if residual > CONSISTENCY_TOLERANCE {
        return Err(Error::InconsistentOperatingPoint { residual });
    }

    let n = model.n();
    let nu = model.n_u();
    let base_force = model.apply_selector(tau0);
    let accel = |q: &DVector<f64>, v: &DVector<f64>, force: &DVector<f64>| -> Result<DVector<f64>> {
        Ok(forward_dynamics_generalized(model, q, v, force, contacts)?.qdd)
    };

    let mut a = DMatrix::zeros(2 * n, 2 * n);
    // position rows are exactly [0 I]
    for i in 0..n {
        a[(i, n + i)] = 1.0;
    }
    for col in 0..2 * n {
        let (mut qp, mut vp) = (op_point.q.clone(), op_point.v.clone());
        let (mut qm, mut vm) = (op_point.q.clone(), op_point.v.clone());
        let h;
        if col < n {
            h = steps.state_step * op_point.q[col].abs().max(1.0);
            qp[col] += h;
            qm[col] -= h;
        } else {
            let k = col - n;
            h = steps.state_step * op_point.v[k].abs().max(1.0);
            vp[k] += h;
            vm[k] -= h;
        }
        let d = (accel(&qp, &vp, &base_force)? - accel(&qm, &vm, &base_force)?) / (2.0 * h);
        a.view_mut((n, col), (n, 1)).copy_from(&d);
    }

    let mut b = DMatrix::zeros(2 * n, nu);
    let h = steps.torque_step;
    for k in 0..nu {
        let mut fp = base_force.clone();
        let mut fm = base_force.clone();
        fp[model.n_base() + k] += h;
        fm[model.n_base() + k] -= h;
        let d = (accel(&op_point.q, &op_point.v, &fp)? - accel(&op_point.q, &op_point.v, &fm)?) / (2.0 * h);
        b.view_mut((n, k), (n, 1)).copy_from(&d);
    }

    Ok(LinearSystem {
        a,
        b,
        op_point: OperatingPoint { state: op_point.clone(), tau0: tau0.clone(), contacts: contacts.clone() },
    })
}

/// Relative singular-value threshold for the constraint rank.
pub const NULLSPACE_RANK_TOLERANCE: f64 = 1e-10;

/// Orthonormal basis of the kernel of `c` (rows x cols), via SVD.
pub fn nullspace_basis(c: &DMatrix<f64>) -> DMatrix<f64> {
    let cols = c.ncols();
    if c.nrows() == 0 || c.amax() == 0.0 {
        return DMatrix::identity(cols, cols);
    }
    // pad to square so the SVD returns a full right basis
    let rows = c.nrows().max(cols);
    let mut padded = DMatrix::zeros(rows, cols);
    padded.view_mut((0, 0), (c.nrows(), cols)).copy_from(c);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("right singular vectors requested");
    let sigma_max = svd.singular_values.max();
    let tol = NULLSPACE_RANK_TOLERANCE * sigma_max;
    let null_rows: Vec<usize> = (0..cols).filter(|&i| svd.singular_values[i] < tol).collect();
    let mut basis = DMatrix::zeros(cols, null_rows.len());
    for (k, &i) in null_rows.iter().enumerate() {
        basis.set_column(k, &vt.row(i).transpose());
    }
    basis
}

fn asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).amax()
}

/// Projects `(A, B, Q, R)` onto the nullspace basis.
pub fn reduce(sys: &LinearSystem, basis: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<ReducedSystem> {
    let nx = sys.a.nrows();
    let nu = sys.b.ncols();
    if q.shape() != (nx, nx) {
        return Err(Error::InvalidArgument(format!("state weight must be {nx}x{nx}, got {:?}", q.shape())));
    }
    if r.shape() != (nu, nu) {
        return Err(Error::InvalidArgument(format!("input weight must be {nu}x{nu}, got {:?}", r.shape())));
    }
    check_len("nullspace basis rows", nx, basis.nrows())?;
    if asymmetry(q) > 1e-12 * (1.0 + q.amax()) {
        return Err(Error::InvalidArgument("state weight Q is not symmetric".into()));
    }
    if asymmetry(r) > 1e-12 * (1.0 + r.amax()) {
        return Err(Error::InvalidArgument("input weight R is not symmetric".into()));
    }
    if r.clone().cholesky().is_none() {
        return Err(Error::InvalidArgument("input weight R is not positive definite".into()));
    }
    let min_q = q.clone().symmetric_eigenvalues().min();
    if min_q < -1e-12 * (1.0 + q.amax()) {
        return Err(Error::InvalidArgument("state weight Q is not positive semidefinite".into()));
    }
    let nt = basis.transpose();
    let q_m = &nt * q * basis;
    Ok(ReducedSystem {
        basis: basis.clone(),
        a_m: &nt * &sys.a * basis,
        b_m: &nt * &sys.b,
        q_m: (&q_m + q_m.transpose()) * 0.5,
        r_m: r.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{JointKind, Link, Plane};
    use nalgebra::Vector2;
    use rand::{Rng, SeedableRng};

    fn pendulum() -> RobotModel {
        let link = Link {
            name: "arm".into(),
            parent: None,
            joint: JointKind::Revolute,
            origin: Vector2::zeros(),
            origin_angle: 0.0,
            mass: 1.0,
            com: Vector2::new(0.0, -1.0),
            inertia: 0.0,
            rest: 0.0,
            armature: 0.0,
        };
        RobotModel::new("pendulum", Plane::Sagittal, 9.81, vec![link], vec![], vec![]).unwrap()
    }

    #[test]
    fn upright_pendulum_linearization() {
        let model = pendulum();
        let state = FullState::at_rest(DVector::from_element(1, std::f64::consts::PI));
        let tau0 = DVector::zeros(1);
        let sys = linearize(&model, &state, &tau0, &ContactSet::empty()).unwrap();
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 9.81, 0.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        assert!((sys.a - a).amax() < 1e-6);
        assert!((sys.b - b).amax() < 1e-6);
    }

    #[test]
    fn empty_constraint_gives_identity_basis() {
        let c = DMatrix::<f64>::zeros(0, 6);
        assert_eq!(nullspace_basis(&c), DMatrix::identity(6, 6));
    }

    #[test]
    fn random_full_rank_constraint() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let c = DMatrix::from_fn(8, 18, |_, _| rng.random_range(-1.0..1.0));
        let n = nullspace_basis(&c);
        assert_eq!(n.ncols(), 10);
        assert!((&c * &n).amax() < 1e-12);
        assert!((n.transpose() * &n - DMatrix::identity(10, 10)).amax() < 1e-12);
    }

    #[test]
    fn duplicated_rows_do_not_change_rank() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let c = DMatrix::from_fn(4, 10, |_, _| rng.random_range(-1.0..1.0));
        let dup = DMatrix::from_fn(6, 10, |r, k| c[(r % 4, k)]);
        assert_eq!(nullspace_basis(&c).ncols(), nullspace_basis(&dup).ncols());
    }

    fn toy_system(nx: usize, nu: usize) -> LinearSystem {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        LinearSystem {
            a: DMatrix::from_fn(nx, nx, |_, _| rng.random_range(-1.0..1.0)),
            b: DMatrix::from_fn(nx, nu, |_, _| rng.random_range(-1.0..1.0)),
            op_point: OperatingPoint {
                state: FullState::at_rest(DVector::zeros(nx / 2)),
                tau0: DVector::zeros(nu),
                contacts: ContactSet::empty(),
            },
        }
    }

    #[test]
    fn identity_basis_leaves_system_unchanged() {
        let sys = toy_system(6, 2);
        let q = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let r = DMatrix::identity(2, 2);
        let red = reduce(&sys, &DMatrix::identity(6, 6), &q, &r).unwrap();
        assert_eq!(red.a_m, sys.a);
        assert_eq!(red.b_m, sys.b);
        assert_eq!(red.q_m, q);
    }

    #[test]
    fn identity_weight_reduces_to_identity() {
        let sys = toy_system(6, 2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let c = DMatrix::from_fn(2, 6, |_, _| rng.random_range(-1.0..1.0));
        let basis = nullspace_basis(&c);
        let red = reduce(&sys, &basis, &DMatrix::identity(6, 6), &DMatrix::identity(2, 2)).unwrap();
        assert!((red.q_m - DMatrix::identity(4, 4)).amax() < 1e-12);
    }

    #[test]
    fn projection_is_idempotent_on_the_subspace() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let c = DMatrix::from_fn(3, 8, |_, _| rng.random_range(-1.0..1.0));
        let basis = nullspace_basis(&c);
        let xm = DVector::from_fn(basis.ncols(), |_, _| rng.random_range(-1.0..1.0));
        let x = &basis * xm;
        let back = &basis * (basis.transpose() * &x);
        assert!((back - x).amax() < 1e-12);
    }

    #[test]
    fn asymmetric_weights_are_rejected() {
        let sys = toy_system(4, 2);
        let mut q = DMatrix::identity(4, 4);
        q[(0, 1)] = 1.0;
        let err = reduce(&sys, &DMatrix::identity(4, 4), &q, &DMatrix::identity(2, 2));
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
        let r = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 1.0]);
        let err = reduce(&sys, &DMatrix::identity(4, 4), &DMatrix::identity(4, 4), &r);
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn moving_contact_is_rejected() {
        let model = crate::model::bundled::biped_sagittal();
        let mut q = DVector::zeros(model.n());
        q[1] = 0.88;
        let mut v = DVector::zeros(model.n());
        v[0] = 0.1;
        let cs = ContactSet::flat_feet(&model, &[0]).unwrap();
        let err = linearize(&model, &FullState { q, v }, &DVector::zeros(model.n_u()), &cs);
        assert!(matches!(err, Err(Error::InconsistentOperatingPoint { .. })));
    }
}
