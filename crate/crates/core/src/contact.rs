//! Rigid bilateral contact constraints on endeffector directions and the
//! constrained forward dynamics they induce.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{crba, rnea};
use crate::error::{check_len, Error, Result};
use crate::kinematics::{body_poses, point_jacobian_dot_with, point_kinematics_with, select_directions};
use crate::model::{Direction, RobotModel};

/// Relative pivot threshold used to detect dependent constraint rows.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContactEntry {
    pub endeffector: usize,
    pub directions: Vec<Direction>,
}

/// Constrained endeffector directions. Entries are kept sorted so two sets
/// with the same constraints compare equal.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct ContactSet {
    entries: Vec<ContactEntry>,
}

impl ContactSet {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn new(model: &RobotModel, entries: Vec<ContactEntry>) -> Result<Self> {
        let mut entries: Vec<ContactEntry> = entries
            .into_iter()
            .map(|mut e| {
                e.directions.sort();
                e
            })
            .collect();
        entries.sort();
        for w in entries.windows(2) {
            if w[0].endeffector == w[1].endeffector {
                return Err(Error::InvalidArgument(format!(
                    "endeffector #{} listed twice in contact set",
                    w[0].endeffector
                )));
            }
        }
        for e in &entries {
            let ee = model
                .endeffectors
                .get(e.endeffector)
                .ok_or_else(|| Error::UnknownEndeffector(format!("#{}", e.endeffector)))?;
            if e.directions.is_empty() {
                return Err(Error::InvalidArgument(format!("contact on `{}` has no directions", ee.name)));
            }
            for w in e.directions.windows(2) {
                if w[0] == w[1] {
                    return Err(Error::InvalidArgument(format!(
                        "direction {:?} listed twice for `{}`",
                        w[0], ee.name
                    )));
                }
            }
            if let Some(d) = e.directions.iter().find(|d| !ee.directions.contains(d)) {
                return Err(Error::InvalidArgument(format!("`{}` cannot be constrained along {d:?}", ee.name)));
            }
        }
        let set = Self { entries };
        if set.m() >= model.n() {
            return Err(Error::InvalidArgument(format!(
                "contact set has {} rows but the model only {} coordinates",
                set.m(),
                model.n()
            )));
        }
        Ok(set)
    }

    /// Flat-foot contacts for the named feet: the first contact point of each
    /// foot constrains all its directions, the others only the vertical one,
    /// so the rows are independent for a rigid foot.
    pub fn flat_feet(model: &RobotModel, feet: &[usize]) -> Result<Self> {
        let mut entries = Vec::new();
        for &f in feet {
            let foot = model
                .feet
                .get(f)
                .ok_or_else(|| Error::InvalidArgument(format!("foot index {f} out of range")))?;
            entries.extend(foot_entries(model, &foot.points));
        }
        Self::new(model, entries)
    }

    /// Contacts for an arbitrary set of active contact points, grouped per foot
    /// as in [`ContactSet::flat_feet`]. Points that belong to no foot constrain
    /// all their directions.
    pub fn from_points(model: &RobotModel, points: &[usize]) -> Result<Self> {
        let mut entries = Vec::new();
        let mut used = vec![false; model.endeffectors.len()];
        for foot in &model.feet {
            let active: Vec<usize> = foot.points.iter().copied().filter(|p| points.contains(p)).collect();
            for &p in &active {
                used[p] = true;
            }
            entries.extend(foot_entries(model, &active));
        }
        for &p in points {
            if !used.get(p).copied().unwrap_or(false) {
                let ee = model
                    .endeffectors
                    .get(p)
                    .ok_or_else(|| Error::UnknownEndeffector(format!("#{p}")))?;
                entries.push(ContactEntry { endeffector: p, directions: ee.directions.clone() });
            }
        }
        Self::new(model, entries)
    }

    pub fn entries(&self) -> &[ContactEntry] {
        &self.entries
    }

    /// Total number of constrained rows.
    pub fn m(&self) -> usize {
        self.entries.iter().map(|e| e.directions.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `(endeffector, direction)` for every row, in row order.
    pub fn rows(&self) -> Vec<(usize, Direction)> {
        self.entries
            .iter()
            .flat_map(|e| e.directions.iter().map(move |&d| (e.endeffector, d)))
            .collect()
    }

    pub fn contains_endeffector(&self, ee: usize) -> bool {
        self.entries.iter().any(|e| e.endeffector == ee)
    }

    pub fn describe(&self, model: &RobotModel) -> String {
        if self.entries.is_empty() {
            return "{}".into();
        }
        let parts: Vec<String> = self
            .entries
            .iter()
            .map(|e| {
                let dirs: Vec<&str> = e.directions.iter().map(|d| direction_name(*d)).collect();
                let name = model.endeffectors.get(e.endeffector).map_or("?", |x| x.name.as_str());
                format!("{name}:{}", dirs.join(","))
            })
            .collect();
        format!("{{{}}}", parts.join("; "))
    }
}

impl fmt::Display for ContactSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .entries
            .iter()
            .map(|e| {
                let dirs: Vec<&str> = e.directions.iter().map(|d| direction_name(*d)).collect();
                format!("#{}:{}", e.endeffector, dirs.join(","))
            })
            .collect();
        write!(f, "{{{}}}", parts.join("; "))
    }
}

pub(crate) fn direction_name(d: Direction) -> &'static str {
    match d {
        Direction::X => "x",
        Direction::Z => "z",
        Direction::Pitch => "pitch",
    }
}

fn foot_entries(model: &RobotModel, active: &[usize]) -> Vec<ContactEntry> {
    active
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let ee = &model.endeffectors[p];
            let directions = if k == 0 {
                ee.directions.clone()
            } else {
                ee.directions.iter().copied().filter(|d| *d == Direction::Z).collect()
            };
            ContactEntry { endeffector: p, directions }
        })
        .filter(|e| !e.directions.is_empty())
        .collect()
}

/// Contact Jacobian `J_c` (m x n) and `J̇_c` (m x n).
pub fn contact_jacobians(
    model: &RobotModel,
    q: &DVector<f64>,
    v: &DVector<f64>,
    contacts: &ContactSet,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let poses = body_poses(model, q);
    let n = model.n();
    let m = contacts.m();
    let mut jac = DMatrix::zeros(m, n);
    let mut jdot = DMatrix::zeros(m, n);
    let mut row = 0;
    for e in contacts.entries() {
        let ee = &model.endeffectors[e.endeffector];
        let pk = point_kinematics_with(model, &poses, ee.link, &ee.offset);
        let jd = point_jacobian_dot_with(model, &poses, v, ee.link, &ee.offset);
        let k = e.directions.len();
        jac.rows_mut(row, k).copy_from(&select_directions(&pk.jacobian, &e.directions));
        jdot.rows_mut(row, k).copy_from(&select_directions(&jd, &e.directions));
        row += k;
    }
    (jac, jdot)
}

/// Contact Jacobian only.
pub fn contact_jacobian(model: &RobotModel, q: &DVector<f64>, contacts: &ContactSet) -> DMatrix<f64> {
    let v = DVector::zeros(model.n());
    contact_jacobians(model, q, &v, contacts).0
}

/// The stacked velocity/acceleration constraint `[[J, 0], [J̇, J]]` (2m x 2n).
pub fn constraint_matrix(
    model: &RobotModel,
    q: &DVector<f64>,
    v: &DVector<f64>,
    contacts: &ContactSet,
) -> Result<DMatrix<f64>> {
    model.check_q(q)?;
    model.check_v(v)?;
    let (jac, jdot) = contact_jacobians(model, q, v, contacts);
    let (m, n) = (contacts.m(), model.n());
    let mut c = DMatrix::zeros(2 * m, 2 * n);
    c.view_mut((0, 0), (m, n)).copy_from(&jac);
    c.view_mut((m, 0), (m, n)).copy_from(&jdot);
    c.view_mut((m, n), (m, n)).copy_from(&jac);
    Ok(c)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstrainedDynamicsResult {
    pub qdd: DVector<f64>,
    /// Contact forces in row order of the contact set.
    pub f_c: DVector<f64>,
}

/// Solves `[[M, -J^T], [J, 0]] [qdd; f] = [S^T tau - h; -J̇ v]`.
pub fn constrained_forward_dynamics(
    model: &RobotModel,
    q: &DVector<f64>,
    v: &DVector<f64>,
    tau: &DVector<f64>,
    contacts: &ContactSet,
) -> Result<ConstrainedDynamicsResult> {
    model.check_q(q)?;
    model.check_v(v)?;
    check_len("torques", model.n_u(), tau.len())?;
    let force = model.apply_selector(tau);
    forward_dynamics_generalized(model, q, v, &force, contacts)
}

/// Same as [`constrained_forward_dynamics`] with a full generalized force
/// (actuation plus any external loads) in place of `S^T tau`.
pub fn forward_dynamics_generalized(
    model: &RobotModel,
    q: &DVector<f64>,
    v: &DVector<f64>,
    generalized_force: &DVector<f64>,
    contacts: &ContactSet,
) -> Result<ConstrainedDynamicsResult> {
    let mass = crba(model, q);
    let bias = rnea(model, q, v, None);
    let (jac, jdot) = contact_jacobians(model, q, v, contacts);
    let rhs = generalized_force - bias;
    solve_kkt(&mass, &rhs, &jac, &(-(jdot * v)))
}

/// Block elimination of the KKT system through the operational-space inertia
/// `J M^-1 J^T`, factored with diagonal pivoting so dependent rows are
/// detected and given zero force.
pub(crate) fn solve_kkt(
    mass: &DMatrix<f64>,
    rhs: &DVector<f64>,
    jac: &DMatrix<f64>,
    accel_rhs: &DVector<f64>,
) -> Result<ConstrainedDynamicsResult> {
    let chol = mass
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("mass matrix is not positive definite".into()))?;
    let free = chol.solve(rhs);
    let m = jac.nrows();
    if m == 0 {
        return Ok(ConstrainedDynamicsResult { qdd: free, f_c: DVector::zeros(0) });
    }
    let minv_jt = chol.solve(&jac.transpose());
    let lambda = jac * &minv_jt;
    let b = accel_rhs - jac * &free;
    let f = solve_psd_pivoted(&lambda, &b)?;
    let qdd = free + minv_jt * &f;
    Ok(ConstrainedDynamicsResult { qdd, f_c: f })
}

/// Solves `A x = b` for symmetric positive semidefinite `A` using pivoted
/// Cholesky. Rows whose pivot falls below `RANK_TOLERANCE` times the largest
/// pivot get `x = 0`; their equations must then hold already.
pub(crate) fn solve_psd_pivoted(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let m = a.nrows();
    let mut work = a.clone();
    let mut perm: Vec<usize> = (0..m).collect();
    let mut l = DMatrix::<f64>::zeros(m, m);
    let max_diag = (0..m).map(|i| a[(i, i)]).fold(0.0_f64, f64::max);
    let mut rank = 0;
    for k in 0..m {
        // pick the largest remaining diagonal
        let (piv, &val) = (k..m)
            .map(|i| (i, &work[(perm[i], perm[i])]))
            .max_by(|x, y| x.1.partial_cmp(y.1).unwrap())
            .unwrap();
        if !(val > RANK_TOLERANCE * max_diag) || max_diag == 0.0 {
            break;
        }
        perm.swap(k, piv);
        l.swap_rows(k, piv);
        let pk = perm[k];
        let d = val.sqrt();
        l[(k, k)] = d;
        for i in (k + 1)..m {
            let pi = perm[i];
            let mut s = work[(pi, pk)];
            for j in 0..k {
                s -= l[(i, j)] * l[(k, j)];
            }
            l[(i, k)] = s / d;
        }
        for i in (k + 1)..m {
            let pi = perm[i];
            work[(pi, pi)] = a[(pi, pi)] - (0..=k).map(|j| l[(i, j)] * l[(i, j)]).sum::<f64>();
        }
        rank = k + 1;
    }
    let lk = l.view((0, 0), (rank, rank)).into_owned();
    let bk = DVector::from_iterator(rank, perm[..rank].iter().map(|&p| b[p]));
    let y = lk.solve_lower_triangular(&bk).unwrap_or_else(|| DVector::zeros(rank));
    let xk = lk.transpose().solve_upper_triangular(&y).unwrap_or_else(|| DVector::zeros(rank));
    let mut x = DVector::zeros(m);
    for (i, &p) in perm[..rank].iter().enumerate() {
        x[p] = xk[i];
    }
    if rank < m {
        let resid = a * &x - b;
        let scale = 1.0 + b.amax() + max_diag * x.amax();
        let bad: Vec<usize> = perm[rank..]
            .iter()
            .copied()
            .filter(|&p| resid[p].abs() > 1e-8 * scale)
            .collect();
        if !bad.is_empty() {
            let mut rows = bad;
            rows.sort_unstable();
            return Err(Error::RankDeficient { rows });
        }
    }
    Ok(x)
}

/// Post-impact velocity after an inelastic impulse that zeroes the
/// constrained velocities: `v+ = v- + M^-1 J^T p` with `J v+ = 0`.
pub fn contact_impulse(
    model: &RobotModel,
    q: &DVector<f64>,
    v: &DVector<f64>,
    contacts: &ContactSet,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let mass = crba(model, q);
    let jac = contact_jacobian(model, q, contacts);
    let zero = DVector::zeros(model.n());
    let res = solve_kkt(&mass, &zero, &jac, &(-(&jac * v)))?;
    Ok((v + res.qdd, res.f_c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::bundled;
    use rand::{Rng, SeedableRng};

    fn random_state(model: &RobotModel, seed: u64) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = model.n();
        let mut q = DVector::from_fn(n, |_, _| rng.random_range(-0.5..0.5));
        q[1] = 0.8;
        let v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let tau = DVector::from_fn(model.n_u(), |_, _| rng.random_range(-20.0..20.0));
        (q, v, tau)
    }

    #[test]
    fn zero_velocity_gives_zero_jdot_block() {
        let model = bundled::biped_sagittal();
        let (q, _, _) = random_state(&model, 1);
        let cs = ContactSet::flat_feet(&model, &[0, 1]).unwrap();
        let c = constraint_matrix(&model, &q, &DVector::zeros(model.n()), &cs).unwrap();
        let m = cs.m();
        assert!(c.view((m, 0), (m, model.n())).amax() == 0.0);
    }

    #[test]
    fn empty_contact_set_gives_empty_constraint() {
        let model = bundled::biped_sagittal();
        let (q, v, _) = random_state(&model, 2);
        let c = constraint_matrix(&model, &q, &v, &ContactSet::empty()).unwrap();
        assert_eq!(c.shape(), (0, 2 * model.n()));
    }

    #[test]
    fn kkt_residual_is_small() {
        for model in [bundled::biped_sagittal(), bundled::biped_frontal()] {
            for seed in 0..20 {
                let (q, v, tau) = random_state(&model, seed);
                for feet in [vec![0, 1], vec![0], vec![1]] {
                    let cs = ContactSet::flat_feet(&model, &feet).unwrap();
                    let r = constrained_forward_dynamics(&model, &q, &v, &tau, &cs).unwrap();
                    let mass = crba(&model, &q);
                    let h = rnea(&model, &q, &v, None);
                    let (j, jd) = contact_jacobians(&model, &q, &v, &cs);
                    let top = &mass * &r.qdd - j.transpose() * &r.f_c - (model.apply_selector(&tau) - h);
                    let bottom = &j * &r.qdd + &jd * &v;
                    let scale = 1.0 + tau.amax();
                    assert!(top.norm() < 1e-9 * scale, "{}", top.norm());
                    assert!(bottom.amax() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn affine_in_torque() {
        let model = bundled::biped_frontal();
        let (q, v, t1) = random_state(&model, 7);
        let (_, _, t2) = random_state(&model, 8);
        let cs = ContactSet::flat_feet(&model, &[0, 1]).unwrap();
        let f = |t: &DVector<f64>| constrained_forward_dynamics(&model, &q, &v, t, &cs).unwrap().qdd;
        let z = f(&DVector::zeros(model.n_u()));
        let lhs = f(&(&t1 + &t2)) - &z;
        let rhs = (f(&t1) - &z) + (f(&t2) - &z);
        assert!((lhs - rhs).amax() < 1e-9);
    }

    #[test]
    fn duplicated_rows_are_tolerated_when_consistent() {
        let model = bundled::biped_sagittal();
        let (q, _, tau) = random_state(&model, 4);
        let v = DVector::zeros(model.n());
        // the same two heel rows stacked twice
        let heel = model.endeffector_index("left_heel").unwrap();
        let cs = ContactSet::new(
            &model,
            vec![ContactEntry { endeffector: heel, directions: vec![Direction::X, Direction::Z] }],
        )
        .unwrap();
        let r1 = constrained_forward_dynamics(&model, &q, &v, &tau, &cs).unwrap();
        let mass = crba(&model, &q);
        let h = rnea(&model, &q, &v, None);
        let j = contact_jacobian(&model, &q, &cs);
        let jj = DMatrix::from_fn(4, model.n(), |r, c| j[(r % 2, c)]);
        let r2 = solve_kkt(&mass, &(model.apply_selector(&tau) - h), &jj, &DVector::zeros(4)).unwrap();
        assert!((r1.qdd - r2.qdd).amax() < 1e-9);
    }

    #[test]
    fn inconsistent_dependent_rows_are_reported() {
        let model = bundled::biped_sagittal();
        let (q, _, tau) = random_state(&model, 5);
        let mass = crba(&model, &q);
        let v = DVector::zeros(model.n());
        let h = rnea(&model, &q, &v, None);
        let cs = ContactSet::flat_feet(&model, &[0]).unwrap();
        let j = contact_jacobian(&model, &q, &cs);
        let jj = DMatrix::from_fn(4, model.n(), |r, c| j[(r.min(2), c)]);
        let rhs = DVector::from_vec(vec![0.0, 0.0, 0.0, 1.0]);
        let err = solve_kkt(&mass, &(model.apply_selector(&tau) - h), &jj, &rhs).unwrap_err();
        match err {
            Error::RankDeficient { rows } => assert!(rows == vec![2] || rows == vec![3]),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn impulse_zeroes_constrained_velocity() {
        let model = bundled::biped_frontal();
        let (q, v, _) = random_state(&model, 9);
        let cs = ContactSet::flat_feet(&model, &[0]).unwrap();
        let (vp, _) = contact_impulse(&model, &q, &v, &cs).unwrap();
        let j = contact_jacobian(&model, &q, &cs);
        assert!((j * vp).amax() < 1e-9);
    }

    #[test]
    fn invalid_direction_is_rejected() {
        let model = bundled::biped_sagittal();
        let heel = model.endeffector_index("left_heel").unwrap();
        let err = ContactSet::new(
            &model,
            vec![ContactEntry { endeffector: heel, directions: vec![Direction::Pitch] }],
        );
        assert!(err.is_err());
    }

    #[test]
    fn flat_foot_rows_are_heel_xz_and_toe_z() {
        let model = bundled::biped_sagittal();
        let cs = ContactSet::flat_feet(&model, &[0]).unwrap();
        assert_eq!(cs.m(), 3);
        assert_eq!(cs.describe(&model), "{left_heel:x,z; left_toe:z}");
    }
}
