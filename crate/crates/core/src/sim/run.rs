//! The closed control loop: measure, estimate contacts, schedule gains,
//! command torques, integrate.

use nalgebra::{DMatrix, DVector, Vector2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::filter::LowPass;
use super::physics::Plant;
use super::scenario::{Disturbance, ReferenceMode, Scenario};
use super::trace::{FootstepRecord, ImpulseRecord, SwitchRecord, TouchdownRecord, Trace, TraceSample};
use crate::contact::ContactSet;
use crate::error::{Error, Result};
use crate::kinematics::{body_poses, center_of_mass, point_kinematics, point_kinematics_with};
use crate::lqr::state_error;
use crate::model::{FullState, JointKind, Link, RobotModel};
use crate::planner::{build_walk_plan, Plan};
use crate::scheduler::{estimate_contact, ContactEstimate, GainScheduler, KeyframeLibrary, PlanWindow};

/// Everything a scenario needs before the loop starts.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub model: RobotModel,
    pub library: KeyframeLibrary,
    pub plan: Option<Plan>,
}

/// Loads the model, synthesizes (or loads) the keyframe library and builds the plan.
pub fn prepare(scenario: &Scenario) -> Result<Prepared> {
    let model = scenario.load_model()?;
    let library = match scenario.load_library_file(&model)? {
        Some(lib) => lib,
        None => KeyframeLibrary::synthesize(&model, &scenario.library.poses, &scenario.library.weights, scenario.library.pd)?,
    };
    let plan = match &scenario.plan {
        Some(p) => Some(build_walk_plan(&model, p)?),
        None => None,
    };
    Ok(Prepared { model, library, plan })
}

pub fn run_scenario(scenario: &Scenario) -> Result<Trace> {
    let prepared = prepare(scenario)?;
    run_prepared(scenario, &prepared)
}

/// Which feet the plan expects down or up within the estimator window.
struct PlanWindows {
    contact: Vec<Vec<usize>>,
    swing: Vec<Vec<usize>>,
    half_width: usize,
}

impl PlanWindows {
    fn new(plan: &Plan, window_s: f64) -> Self {
        let prefix = |flag: bool| -> Vec<Vec<usize>> {
            plan.contact_schedule
                .iter()
                .map(|s| {
                    let mut acc = vec![0];
                    for &c in s {
                        acc.push(acc.last().unwrap() + usize::from(c == flag));
                    }
                    acc
                })
                .collect()
        };
        Self { contact: prefix(true), swing: prefix(false), half_width: (window_s / plan.dt).round() as usize }
    }

    fn window(&self, plan: &Plan, foot: usize, t: f64) -> PlanWindow {
        let k = plan.locate(t).0;
        let lo = k.saturating_sub(self.half_width);
        let hi = (k + self.half_width + 1).min(plan.len());
        PlanWindow {
            contact_expected: self.contact[foot][hi] > self.contact[foot][lo],
            swing_expected: self.swing[foot][hi] > self.swing[foot][lo],
        }
    }
}

fn foot_of(model: &RobotModel, ee: usize) -> Option<usize> {
    model.feet.iter().position(|f| f.points.contains(&ee))
}

fn cosine_ramp(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    0.5 - 0.5 * (std::f64::consts::PI * s).cos()
}

struct Payload {
    amplitude: f64,
    omega: f64,
    kp: f64,
    kd: f64,
}

impl Payload {
    /// Ramped in over the first second.
    fn desired(&self, t: f64) -> (f64, f64) {
        let r = cosine_ramp(t);
        let dr = if t < 1.0 { 0.5 * std::f64::consts::PI * (std::f64::consts::PI * t).sin() } else { 0.0 };
        let s = (self.omega * t).sin();
        let c = (self.omega * t).cos();
        (self.amplitude * r * s, self.amplitude * (dr * s + r * self.omega * c))
    }
}

struct Push {
    link: usize,
    point: Vector2<f64>,
    force: Vector2<f64>,
    start: f64,
    end: f64,
    commanded: f64,
    applied: f64,
}

pub fn run_prepared(scenario: &Scenario, prepared: &Prepared) -> Result<Trace> {
    let model = &prepared.model;
    let lib = &prepared.library;
    let plan = prepared.plan.as_ref();
    let mode = scenario.reference_mode();
    let n = model.n();
    let nb = model.n_base();
    let ne = model.endeffectors.len();
    let nf = model.feet.len();
    let cfg_err = |m: String| Error::config(scenario.base_dir.join(format!("{}.toml", scenario.name)), m);

    // initial keyframe and state
    let initial = match &scenario.initial {
        Some(label) => lib
            .controllers
            .iter()
            .position(|c| &c.label == label)
            .ok_or_else(|| cfg_err(format!("initial keyframe `{label}` is not in the library")))?,
        None => 0,
    };
    let mut x0 = match (mode, plan) {
        (ReferenceMode::Plan, Some(p)) => FullState { q: p.q_ref[0].clone(), v: p.v_ref[0].clone() },
        _ => lib.controllers[initial].x0.clone(),
    };
    if let Some(off) = &scenario.initial_offset {
        crate::error::check_len("initial_offset", n, off.len())?;
        x0.q += DVector::from_column_slice(off);
    }
    if let Some(dv) = &scenario.initial_velocity {
        crate::error::check_len("initial_velocity", n, dv.len())?;
        x0.v += DVector::from_column_slice(dv);
    }
    let initial_points: Vec<bool> = match plan {
        Some(p) => (0..ne).map(|e| foot_of(model, e).is_none_or(|f| p.contact_schedule[f][0])).collect(),
        None => (0..ne).map(|e| lib.controllers[initial].contacts.contains_endeffector(e)).collect(),
    };
    let initial = match (&scenario.initial, plan) {
        (None, Some(_)) => {
            let pts: Vec<usize> = (0..ne).filter(|&e| initial_points[e]).collect();
            crate::scheduler::select_controller(lib, &ContactSet::from_points(model, &pts)?, &x0.q).unwrap_or(initial)
        }
        _ => initial,
    };

    // plant, possibly with an unmodelled payload
    let mut payload = None;
    let mut plant_model = model.clone();
    for d in &scenario.disturbances {
        if let Disturbance::TorsoSine { mass, amplitude, frequency, lever } = d {
            let root = model
                .links
                .iter()
                .position(|l| l.parent.is_none())
                .ok_or_else(|| cfg_err("model has no root link".into()))?;
            let top = model.links[root].com * 2.0 - Vector2::new(0.0, 0.05);
            plant_model = model.with_extra_link(Link {
                name: "payload".into(),
                parent: Some(root),
                joint: JointKind::Revolute,
                origin: top,
                origin_angle: 0.0,
                mass: *mass,
                com: Vector2::new(0.0, *lever),
                inertia: mass * 0.05 * 0.05,
                rest: 0.0,
                armature: 0.0,
            })?;
            let inertia = mass * (lever * lever + 0.0025);
            let bw = 2.0 * std::f64::consts::PI * 8.0;
            payload = Some(Payload {
                amplitude: *amplitude,
                omega: 2.0 * std::f64::consts::PI * frequency,
                kp: inertia * bw * bw,
                kd: 2.0 * 0.7 * inertia * bw,
            });
        }
    }
    let np = plant_model.n();
    let extend = |x: &FullState| -> FullState {
        let mut q = DVector::zeros(np);
        let mut v = DVector::zeros(np);
        q.rows_mut(0, n).copy_from(&x.q);
        v.rows_mut(0, n).copy_from(&x.v);
        FullState { q, v }
    };
    let mut plant = Plant::new(plant_model.clone(), extend(&x0), initial_points.clone());

    let mut pushes = Vec::new();
    for d in &scenario.disturbances {
        if let Disturbance::Impulse { time, body, point, direction, impulse, duration } = d {
            let link = plant_model
                .link_index(body)
                .ok_or_else(|| cfg_err(format!("impulse on unknown body `{body}`")))?;
            let dir = Vector2::new(direction[0], direction[1]).normalize();
            pushes.push(Push {
                link,
                point: Vector2::new(point[0], point[1]),
                force: dir * (impulse / duration),
                start: *time,
                end: time + duration,
                commanded: *impulse,
                applied: 0.0,
            });
        }
    }

    let windows = plan.map(|p| PlanWindows::new(p, scenario.estimator.window_s));
    let planned = |t: f64| -> Vec<PlanWindow> {
        (0..ne)
            .map(|e| match (plan, &windows, foot_of(model, e)) {
                (Some(p), Some(w), Some(f)) => w.window(p, f, t),
                _ if initial_points[e] => PlanWindow::contact(),
                _ => PlanWindow::swing(),
            })
            .collect()
    };
    let may_lift = |t: f64| -> Vec<bool> {
        (0..ne)
            .map(|e| match (plan, foot_of(model, e)) {
                (Some(p), Some(f)) => !p.contact_at(f, t),
                _ => false,
            })
            .collect()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let mut filter = scenario
        .filter
        .enabled
        .then(|| LowPass::new(scenario.filter.cutoff, 1.0 / scenario.dt_control, n + 2 * ne));
    let mut estimate = ContactEstimate::from_flags(initial_points.clone());
    let mut scheduler = GainScheduler::new(lib, initial, scenario.blend);
    let mut trace = Trace::new(&scenario.name, model, lib.controllers.iter().map(|c| c.label.clone()).collect(), scenario.dt_control);
    // a footstep is judged where the foot rests halfway through the next double support
    let settle_after = scenario.plan.as_ref().map_or(0.0, |p| 0.5 * p.dsp);
    let mut pending: Vec<FootstepRecord> = plan
        .map(|p| {
            p.footsteps
                .iter()
                .map(|s| FootstepRecord { time: s.time, foot: s.foot, planned: s.x, x: None })
                .collect()
        })
        .unwrap_or_default();
    pending.sort_by(|a, b| b.time.total_cmp(&a.time));

    let nominal = model.nominal_com_height.unwrap_or_else(|| center_of_mass(model, &x0.q).y);
    let fall_height = scenario.fall_fraction * nominal;
    let blend_ticks = ((2.0 * scenario.blend.t_half) / scenario.dt_control).round() as usize + 1;
    let substeps = scenario.substeps();
    let ticks = (scenario.duration / scenario.dt_control).round() as usize;
    let keyframe_com = |i: usize| center_of_mass(model, &lib.controllers[i].x0.q);

    let mut prev_k: Option<DMatrix<f64>> = None;
    let mut open_switch: Option<(usize, SwitchRecord)> = None;
    let mut forces = plant.forces.clone();
    let mut min_held: f64 = 0.0;
    let mut feet_down: Vec<bool> =
        (0..nf).map(|f| model.feet[f].points.iter().any(|&p| plant.active[p])).collect();

    for tick in 0..=ticks {
        let t = tick as f64 * scenario.dt_control;

        // measurement
        let mut meas: Vec<f64> = Vec::with_capacity(n + 2 * ne);
        for i in 0..n {
            let noise: f64 = StandardNormal.sample(&mut rng);
            meas.push(plant.state.v[i] + scenario.noise.velocity * noise);
        }
        for f in &forces {
            let nx: f64 = StandardNormal.sample(&mut rng);
            let nz: f64 = StandardNormal.sample(&mut rng);
            meas.push(f.x + scenario.noise.force * nx);
            meas.push(f.y + scenario.noise.force * nz);
        }
        if let Some(fl) = filter.as_mut() {
            fl.apply(&mut meas);
        }
        let x_meas = FullState {
            q: plant.state.q.rows(0, n).into_owned(),
            v: DVector::from_column_slice(&meas[..n]),
        };
        let normal: Vec<f64> = (0..ne).map(|e| meas[n + 2 * e + 1]).collect();

        // contacts and gains
        estimate = estimate_contact(model, &normal, &planned(t), &scenario.estimator, &estimate);
        let cs = estimate.contact_set(model)?;
        let gains = scheduler.tick(lib, t, &cs, &x_meas.q);
        let (x_ref, tau_ff, com_ref, zmp_ref) = match (mode, plan) {
            (ReferenceMode::Plan, Some(p)) => {
                let (q, v, tau) = p.reference_at(t);
                let c = Vector2::new(p.com_at(t), p.com_height);
                let (k, _) = p.locate(t);
                (FullState { q, v }, tau, c, p.zmp_ref[k])
            }
            _ => {
                let c = &lib.controllers[gains.setpoint];
                let com = keyframe_com(gains.setpoint);
                (c.x0.clone(), c.tau0.clone(), com, com.x)
            }
        };
        let pitch = model.base_pitch_index();
        let err = state_error(&x_ref, &x_meas, pitch);
        let tau = &tau_ff - &gains.k * &err;

        // switch bookkeeping
        if let Some(pk) = &prev_k {
            let jump = ((&gains.k - pk) * &err).norm();
            if gains.switched {
                if let Some((_, rec)) = open_switch.take() {
                    trace.switches.push(rec);
                }
                let target = gains.selected.map_or(&lib.pd_fallback, |i| &lib.controllers[i].k);
                let unblended = ((target - pk) * &err).norm();
                let from = trace.samples.last().and_then(|s| s.selected);
                open_switch = Some((
                    tick,
                    SwitchRecord { time: t, from, to: gains.selected, blended: jump, unblended },
                ));
            } else if let Some((start, rec)) = open_switch.as_mut() {
                rec.blended = rec.blended.max(jump);
                if tick - *start + 1 >= blend_ticks {
                    trace.switches.push(open_switch.take().unwrap().1);
                }
            }
        }
        prev_k = Some(gains.k.clone());

        // record
        let poses = body_poses(&plant_model, &plant.state.q);
        let feet: Vec<Vector2<f64>> = model
            .feet
            .iter()
            .map(|f| point_kinematics_with(&plant_model, &poses, f.link, &f.sole).position)
            .collect();
        let com = center_of_mass(model, &x_meas.q);
        let pts = plant.point_positions();
        let (mut fz, mut mx) = (0.0, 0.0);
        for e in 0..ne {
            if plant.active[e] {
                fz += forces[e].y;
                mx += forces[e].y * pts[e].0.x;
            }
        }
        let cop = if fz > 1e-9 { mx / fz } else { f64::NAN };
        let base_error = if nb > 0 {
            ((x_meas.q[0] - x_ref.q[0]).powi(2) + (x_meas.q[1] - x_ref.q[1]).powi(2)).sqrt()
        } else {
            0.0
        };
        trace.samples.push(TraceSample {
            t,
            q: x_meas.q.clone(),
            v: plant.state.v.rows(0, n).into_owned(),
            tau: tau.clone(),
            forces: forces.clone(),
            estimated: estimate.in_contact.clone(),
            active: plant.active.clone(),
            feet,
            com,
            com_ref,
            cop,
            zmp_ref,
            base_error,
            setpoint: gains.setpoint,
            selected: gains.selected,
            blending: gains.blending,
        });
        while pending.last().is_some_and(|s| s.time + settle_after <= t + 1e-9) {
            let mut step = pending.pop().unwrap();
            if model.feet[step.foot].points.iter().any(|&p| plant.active[p]) {
                step.x = Some(trace.samples.last().unwrap().feet[step.foot].x);
            }
            trace.footsteps.push(step);
        }
        if com.y < fall_height || plant.state.q.iter().any(|x| !x.is_finite()) {
            trace.fall_time = Some(t);
            break;
        }
        if tick == ticks {
            break;
        }

        // integrate to the next tick
        let lift = may_lift(t);
        let mut diverged = false;
        let mut gen = DVector::zeros(np);
        gen.rows_mut(0, n).copy_from(&model.apply_selector(&tau));
        for s in 0..substeps {
            let ts = t + s as f64 * scenario.dt_sim;
            let mut g = gen.clone();
            if let Some(p) = &payload {
                let (qd, vd) = p.desired(ts);
                g[n] = p.kp * (qd - plant.state.q[n]) + p.kd * (vd - plant.state.v[n]);
            }
            for push in pushes.iter_mut() {
                if ts >= push.start - 1e-12 && ts < push.end - 1e-12 {
                    let pk = point_kinematics(&plant_model, &plant.state.q, push.link, &push.point);
                    g += pk.jacobian.rows(0, 2).transpose() * push.force;
                    push.applied += push.force.norm() * scenario.dt_sim;
                }
            }
            let was_down = feet_down.clone();
            if plant.advance(&g, &lift, scenario.dt_sim).is_err() {
                diverged = true;
                break;
            }
            for e in 0..ne {
                if plant.active[e] {
                    min_held = min_held.min(plant.forces[e].y);
                }
            }
            feet_down = (0..nf).map(|f| model.feet[f].points.iter().any(|&p| plant.active[p])).collect();
            for f in 0..nf {
                if feet_down[f] && !was_down[f] {
                    let poses = body_poses(&plant_model, &plant.state.q);
                    let sole = point_kinematics_with(&plant_model, &poses, model.feet[f].link, &model.feet[f].sole);
                    trace.touchdowns.push(TouchdownRecord { time: ts + scenario.dt_sim, foot: f, x: sole.position.x });
                }
            }
        }
        if diverged {
            trace.fall_time = Some(t + scenario.dt_control);
            break;
        }
        forces = plant.forces.clone();
    }
    if let Some((_, rec)) = open_switch.take() {
        trace.switches.push(rec);
    }
    trace.impulses = pushes
        .iter()
        .map(|p| ImpulseRecord { time: p.start, commanded: p.commanded, applied: p.applied })
        .collect();
    trace.min_held_force = min_held / model.weight();
    trace.max_drift = plant.max_drift;
    Ok(trace)
}
