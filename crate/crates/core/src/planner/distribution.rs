//! Feedforward torques that balance the robot with a prescribed weight split
//! between the feet.

use nalgebra::{DMatrix, DVector};

use crate::contact::{contact_jacobian, ContactSet};
use crate::dynamics::rnea;
use crate::error::{check_len, Error, Result};
use crate::kinematics::{body_poses, center_of_mass};
use crate::model::{Direction, RobotModel};

#[derive(Clone, Debug)]
pub struct ForceDistribution {
    pub tau: DVector<f64>,
    /// Contact forces in contact-row order.
    pub f_c: DVector<f64>,
}

/// Static equilibrium torques at `q` with foot `i` carrying `split[i]` of the
/// robot's weight.
pub fn distribute_contact_forces(
    model: &RobotModel,
    q: &DVector<f64>,
    contacts: &ContactSet,
    split: &[f64],
) -> Result<DVector<f64>> {
    let v = DVector::zeros(model.n());
    Ok(distribute_contact_forces_at(model, q, &v, contacts, split)?.tau)
}

/// As [`distribute_contact_forces`], compensating the full bias forces at
/// `(q, v)` so that the commanded acceleration is zero.
pub fn distribute_contact_forces_at(
    model: &RobotModel,
    q: &DVector<f64>,
    v: &DVector<f64>,
    contacts: &ContactSet,
    split: &[f64],
) -> Result<ForceDistribution> {
    model.check_q(q)?;
    model.check_v(v)?;
    check_len("weight split", model.feet.len(), split.len())?;
    if split.iter().any(|&s| !(s >= -1e-12) || !s.is_finite()) {
        return Err(Error::InvalidArgument(format!("weight split {split:?} has negative entries")));
    }
    let total: f64 = split.iter().sum();
    if !model.feet.is_empty() && (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("weight split {split:?} does not sum to one")));
    }

    let rows = contacts.rows();
    let m = rows.len();
    let foot_of = |ee: usize| model.feet.iter().position(|f| f.points.contains(&ee));
    for (i, foot) in model.feet.iter().enumerate() {
        let loaded = rows.iter().any(|&(ee, _)| foot.points.contains(&ee));
        if split[i] > 0.0 && !loaded {
            return Err(Error::InvalidArgument(format!(
                "foot `{}` carries weight but is not in contact",
                foot.name
            )));
        }
    }

    let h = rnea(model, q, v, None);
    let weight = model.weight();
    let nb = model.n_base();
    if m == 0 {
        if nb > 0 && h.rows(0, nb).amax() > 1e-9 * weight.max(1.0) {
            return Err(Error::InvalidArgument("floating robot without contacts cannot be balanced".into()));
        }
        return Ok(ForceDistribution { tau: h.rows(nb, model.n_u()).into_owned(), f_c: DVector::zeros(0) });
    }

    // target: each foot's share spread evenly over its vertical rows
    let mut target = DVector::zeros(m);
    let mut w = DVector::from_element(m, 1.0);
    for (i, _) in model.feet.iter().enumerate() {
        let z_rows: Vec<usize> = (0..m)
            .filter(|&r| foot_of(rows[r].0) == Some(i) && rows[r].1 == Direction::Z)
            .collect();
        for &r in &z_rows {
            target[r] = split[i] * if nb > 0 { h[1] } else { weight } / z_rows.len() as f64;
        }
        for r in 0..m {
            if foot_of(rows[r].0) == Some(i) {
                w[r] = split[i].max(0.0);
            }
        }
    }

    let jac = contact_jacobian(model, q, contacts);
    // equalities: unactuated rows of the balance, then per-foot vertical load
    let loaded_feet: Vec<usize> = (0..model.feet.len())
        .filter(|&i| rows.iter().any(|&(ee, _)| foot_of(ee) == Some(i)))
        .collect();
    let nc = nb + loaded_feet.len();
    let mut c = DMatrix::zeros(nc, m);
    let mut d = DVector::zeros(nc);
    for b in 0..nb {
        c.row_mut(b).copy_from(&jac.column(b).transpose());
        d[b] = h[b];
    }
    // total vertical load: weight plus the vertical bias of a moving base
    let vertical = if nb > 0 { h[1] } else { weight };
    for (k, &i) in loaded_feet.iter().enumerate() {
        for r in 0..m {
            if foot_of(rows[r].0) == Some(i) && rows[r].1 == Direction::Z {
                c[(nb + k, r)] = 1.0;
            }
        }
        d[nb + k] = split[i] * vertical;
    }

    // weighted minimum-deviation solution f = f_t + W Cᵀ y
    let wc = DMatrix::from_diagonal(&w) * c.transpose();
    let gram = &c * &wc;
    let rhs = &d - &c * &target;
    let y = pseudo_solve(&gram, &rhs);
    let f = &target + &wc * y;
    let residual = (&c * &f - &d).amax();
    if residual > 1e-8 * weight.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "weight split {split:?} is infeasible at this pose (balance residual {residual:.3e})"
        )));
    }
    let gen = &h - jac.transpose() * &f;
    Ok(ForceDistribution { tau: gen.rows(nb, model.n_u()).into_owned(), f_c: f })
}

fn pseudo_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let svd = a.clone().svd(true, true);
    let tol = 1e-12 * svd.singular_values.max().max(1e-300);
    svd.solve(b, tol).expect("both factors computed")
}

/// Lever-rule weight split for the feet in contact: the share of each of two
/// stance feet follows the horizontal CoM position between the sole centres.
pub fn lever_split(model: &RobotModel, q: &DVector<f64>, contacts: &ContactSet) -> Vec<f64> {
    let stance: Vec<usize> = (0..model.feet.len())
        .filter(|&i| model.feet[i].points.iter().any(|&p| contacts.contains_endeffector(p)))
        .collect();
    let mut split = vec![0.0; model.feet.len()];
    match stance.len() {
        0 => {}
        1 => split[stance[0]] = 1.0,
        _ => {
            let poses = body_poses(model, q);
            let centre = |i: usize| {
                let f = &model.feet[i];
                poses[model.link_body[f.link]].transform_point(&f.sole).x
            };
            let (a, b) = (stance[0], stance[1]);
            let (xa, xb) = (centre(a), centre(b));
            let c = center_of_mass(model, q).x;
            let sa = if (xb - xa).abs() < 1e-9 { 0.5 } else { ((xb - c) / (xb - xa)).clamp(0.0, 1.0) };
            split[a] = sa;
            split[b] = 1.0 - sa;
            // any further stance feet are left unloaded
        }
    }
    split
}
