//! Offline walking and weight-shifting plans.

use nalgebra::{DVector, Vector2};
use serde::{Deserialize, Serialize};

use super::distribution::distribute_contact_forces_at;
use super::ik::{inverse_kinematics, FootTarget, IkTargets};
use super::poses::rest_configuration;
use super::preview::{zmp_preview_com, ComTrajectory, PreviewWeights};
use crate::contact::ContactSet;
use crate::error::{Error, Result};
use crate::model::RobotModel;

/// Largest joint speed allowed between consecutive plan samples (rad/s or m/s).
pub const MAX_JOINT_SPEED: f64 = 5.0;
/// Required distance of the planned ZMP from the support polygon edge.
pub const SUPPORT_MARGIN: f64 = 0.005;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WalkMode {
    /// Weight shifts between the feet, no stepping.
    SideToSide,
    InPlace,
    Forward,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepParams {
    pub mode: WalkMode,
    pub n_steps: usize,
    pub ssp: f64,
    pub dsp: f64,
    #[serde(default)]
    pub step_length: f64,
    #[serde(default = "default_step_height")]
    pub step_height: f64,
    /// Downward foot speed at touchdown (m/s).
    #[serde(default = "default_touchdown_velocity")]
    pub touchdown_velocity: f64,
    /// Quiet double support before the first and after the last shift (s).
    #[serde(default = "default_settle")]
    pub settle: f64,
    #[serde(default = "default_plan_dt")]
    pub dt: f64,
    #[serde(default = "default_horizon")]
    pub preview_horizon: f64,
    #[serde(default)]
    pub preview_weights: PreviewWeights,
    /// Defaults to the model's nominal CoM height.
    #[serde(default)]
    pub com_height: Option<f64>,
    /// Share of the weight left on the unloaded foot in side-to-side shifts.
    #[serde(default = "default_unloaded_share")]
    pub unloaded_share: f64,
}

fn default_step_height() -> f64 {
    0.05
}
fn default_touchdown_velocity() -> f64 {
    0.05
}
fn default_settle() -> f64 {
    1.0
}
fn default_plan_dt() -> f64 {
    0.005
}
fn default_horizon() -> f64 {
    1.6
}
fn default_unloaded_share() -> f64 {
    0.2
}

impl StepParams {
    pub fn new(mode: WalkMode, n_steps: usize, ssp: f64, dsp: f64) -> Self {
        Self {
            mode,
            n_steps,
            ssp,
            dsp,
            step_length: 0.0,
            step_height: default_step_height(),
            touchdown_velocity: default_touchdown_velocity(),
            settle: default_settle(),
            dt: default_plan_dt(),
            preview_horizon: default_horizon(),
            preview_weights: PreviewWeights::default(),
            com_height: None,
            unloaded_share: default_unloaded_share(),
        }
    }

    pub fn duration(&self) -> f64 {
        if self.n_steps == 0 {
            return 2.0 * self.settle;
        }
        2.0 * self.settle + self.n_steps as f64 * (self.dsp + self.ssp) + self.dsp
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FootSample {
    pub x: f64,
    pub z: f64,
    pub vx: f64,
    pub vz: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Footstep {
    pub foot: usize,
    pub x: f64,
    /// Touchdown time.
    pub time: f64,
}

#[derive(Clone, Debug)]
pub struct Plan {
    pub dt: f64,
    pub zmp_ref: Vec<f64>,
    /// In-plane horizontal CoM motion.
    pub com_traj: ComTrajectory,
    pub com_height: f64,
    /// `foot_traj[foot][k]`.
    pub foot_traj: Vec<Vec<FootSample>>,
    pub q_ref: Vec<DVector<f64>>,
    pub v_ref: Vec<DVector<f64>>,
    pub tau_ff: Vec<DVector<f64>>,
    /// `contact_schedule[foot][k]`.
    pub contact_schedule: Vec<Vec<bool>>,
    /// Weight fraction per foot per sample.
    pub split: Vec<Vec<f64>>,
    pub footsteps: Vec<Footstep>,
    pub step_params: StepParams,
}

impl Plan {
    pub fn len(&self) -> usize {
        self.zmp_ref.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zmp_ref.is_empty()
    }

    pub fn duration(&self) -> f64 {
        (self.len().max(1) - 1) as f64 * self.dt
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// Sample index at or before `t`, and the fraction towards the next one.
    pub fn locate(&self, t: f64) -> (usize, f64) {
        let s = (t / self.dt).max(0.0);
        let k = (s.floor() as usize).min(self.len() - 1);
        if k + 1 >= self.len() {
            (k, 0.0)
        } else {
            (k, s - k as f64)
        }
    }

    fn lerp(series: &[DVector<f64>], k: usize, a: f64) -> DVector<f64> {
        if a == 0.0 {
            series[k].clone()
        } else {
            &series[k] * (1.0 - a) + &series[k + 1] * a
        }
    }

    /// Linearly interpolated `(q_ref, v_ref, tau_ff)` at `t`.
    pub fn reference_at(&self, t: f64) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let (k, a) = self.locate(t);
        (Self::lerp(&self.q_ref, k, a), Self::lerp(&self.v_ref, k, a), Self::lerp(&self.tau_ff, k, a))
    }

    pub fn com_at(&self, t: f64) -> f64 {
        let (k, a) = self.locate(t);
        if a == 0.0 {
            self.com_traj.pos[k]
        } else {
            self.com_traj.pos[k] * (1.0 - a) + self.com_traj.pos[k + 1] * a
        }
    }

    pub fn contact_at(&self, foot: usize, t: f64) -> bool {
        self.contact_schedule[foot][self.locate(t).0]
    }

    /// Feet planned to be in contact at sample `k`.
    pub fn support(&self, k: usize) -> Vec<usize> {
        (0..self.contact_schedule.len()).filter(|&f| self.contact_schedule[f][k]).collect()
    }
}

/// Quintic with position, velocity and acceleration boundary values over
/// `[0, duration]`; returns position and velocity at `t`.
pub fn quintic(start: [f64; 3], end: [f64; 3], duration: f64, t: f64) -> (f64, f64) {
    let tt = duration;
    let [p0, v0, a0] = start;
    let [p1, v1, a1] = end;
    let c0 = p0;
    let c1 = v0;
    let c2 = a0 / 2.0;
    let h = p1 - p0 - v0 * tt - a0 * tt * tt / 2.0;
    let hv = v1 - v0 - a0 * tt;
    let ha = a1 - a0;
    let c3 = (20.0 * h - 8.0 * hv * tt + ha * tt * tt) / (2.0 * tt.powi(3));
    let c4 = (-30.0 * h + 14.0 * hv * tt - 2.0 * ha * tt * tt) / (2.0 * tt.powi(4));
    let c5 = (12.0 * h - 6.0 * hv * tt + ha * tt * tt) / (2.0 * tt.powi(5));
    let p = c0 + t * (c1 + t * (c2 + t * (c3 + t * (c4 + t * c5))));
    let v = c1 + t * (2.0 * c2 + t * (3.0 * c3 + t * (4.0 * c4 + t * 5.0 * c5)));
    (p, v)
}

fn cosine_ramp(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    0.5 - 0.5 * (std::f64::consts::PI * s).cos()
}

/// Swing foot sample `t` seconds into a swing of duration `t_swing`.
fn swing_sample(x0: f64, x1: f64, p: &StepParams, t: f64) -> FootSample {
    let (x, vx) = quintic([x0, 0.0, 0.0], [x1, 0.0, 0.0], p.ssp, t);
    let half = p.ssp / 2.0;
    let (z, vz) = if t <= half {
        quintic([0.0, 0.0, 0.0], [p.step_height, 0.0, 0.0], half, t)
    } else {
        quintic([p.step_height, 0.0, 0.0], [0.0, -p.touchdown_velocity, 0.0], half, t - half)
    };
    FootSample { x, z, vx, vz }
}

enum Phase {
    Still,
    /// Weight moves onto `to`.
    Shift { start: f64, to: Vec<f64>, from_split: Vec<f64> },
    Single { start: f64, stance: usize, swing: Option<(usize, f64, f64)> },
}

/// Sole-point x extent of each foot when flat, relative to its sole point.
fn foot_extent(model: &RobotModel, foot: usize) -> (f64, f64) {
    let f = &model.feet[foot];
    let xs = f.points.iter().map(|&p| model.endeffectors[p].offset.x - f.sole.x);
    let lo = xs.clone().fold(f64::INFINITY, f64::min);
    let hi = xs.fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

pub fn build_walk_plan(model: &RobotModel, p: &StepParams) -> Result<Plan> {
    if model.feet.len() != 2 {
        return Err(Error::InvalidArgument("walk plans need a model with two feet".into()));
    }
    if p.n_steps > 0 && (!(p.ssp > 0.0) || !(p.dsp > 0.0)) {
        return Err(Error::InvalidArgument("SSP and DSP durations must be positive".into()));
    }
    if !(p.dt > 0.0) || !(p.settle >= 0.0) {
        return Err(Error::InvalidArgument("plan dt must be positive and settle time non-negative".into()));
    }
    if !(0.0..0.5).contains(&p.unloaded_share) {
        return Err(Error::InvalidArgument("unloaded share must lie in [0, 0.5)".into()));
    }
    if p.touchdown_velocity < 0.0 {
        return Err(Error::InvalidArgument("touchdown velocity is a downward speed and must be >= 0".into()));
    }
    let com_height = p
        .com_height
        .or(model.nominal_com_height)
        .ok_or_else(|| Error::InvalidArgument("no CoM height given and the model has no nominal one".into()))?;

    // phase schedule
    let mut feet_x: Vec<f64> = model.feet.iter().map(|f| f.nominal_x).collect();
    let mut phases: Vec<(f64, f64, Phase)> = Vec::new();
    let mut footsteps = Vec::new();
    let mut t = 0.0;
    let mut split = vec![0.5, 0.5];
    phases.push((t, t + p.settle, Phase::Still));
    t += p.settle;
    let mut x_at: Vec<Vec<(f64, f64)>> = vec![vec![(0.0, feet_x[0])], vec![(0.0, feet_x[1])]];
    for k in 0..p.n_steps {
        let stance = k % 2;
        let swing_foot = 1 - stance;
        let mut to = vec![0.0; 2];
        to[stance] = 1.0;
        if p.mode == WalkMode::SideToSide {
            to[stance] = 1.0 - p.unloaded_share;
            to[swing_foot] = p.unloaded_share;
        }
        phases.push((t, t + p.dsp, Phase::Shift { start: t, to: to.clone(), from_split: split.clone() }));
        split = to;
        t += p.dsp;
        let swing = match p.mode {
            WalkMode::SideToSide => None,
            WalkMode::InPlace => Some((swing_foot, feet_x[swing_foot], feet_x[swing_foot])),
            WalkMode::Forward => {
                let target = if k + 1 == p.n_steps && p.n_steps > 1 {
                    feet_x[stance]
                } else {
                    feet_x[stance] + p.step_length
                };
                Some((swing_foot, feet_x[swing_foot], target))
            }
        };
        phases.push((t, t + p.ssp, Phase::Single { start: t, stance, swing }));
        t += p.ssp;
        if let Some((f, _, x1)) = swing {
            feet_x[f] = x1;
            x_at[f].push((t, x1));
            footsteps.push(Footstep { foot: f, x: x1, time: t });
        }
    }
    if p.n_steps > 0 {
        phases.push((t, t + p.dsp, Phase::Shift { start: t, to: vec![0.5, 0.5], from_split: split.clone() }));
        t += p.dsp;
    }
    phases.push((t, t + p.settle, Phase::Still));
    t += p.settle;

    let len = (t / p.dt).round() as usize + 1;
    let nf = 2;
    let mut zmp_ref = Vec::with_capacity(len);
    let mut foot_traj = vec![Vec::with_capacity(len); nf];
    let mut contact_schedule = vec![Vec::with_capacity(len); nf];
    let mut splits = vec![Vec::with_capacity(len); nf];
    let foot_x_at = |f: usize, time: f64| -> f64 {
        x_at[f].iter().rev().find(|(t0, _)| *t0 <= time + 1e-12).map(|&(_, x)| x).unwrap_or(x_at[f][0].1)
    };
    let mut current = vec![0.5, 0.5];
    for k in 0..len {
        let time = k as f64 * p.dt;
        let phase = phases
            .iter()
            .find(|(a, b, _)| time >= *a - 1e-12 && time < *b - 1e-12)
            .or(phases.last())
            .map(|(_, _, ph)| ph)
            .expect("at least one phase");
        let mut samples: Vec<FootSample> =
            (0..nf).map(|f| FootSample { x: foot_x_at(f, time), ..Default::default() }).collect();
        let mut contact = vec![true; nf];
        match phase {
            Phase::Still => {}
            Phase::Shift { start, to, from_split } => {
                let w = cosine_ramp((time - start) / p.dsp);
                current = (0..nf).map(|f| (1.0 - w) * from_split[f] + w * to[f]).collect();
            }
            Phase::Single { start, stance, swing } => {
                if let Some((f, x0, x1)) = swing {
                    current = vec![0.0; 2];
                    current[*stance] = 1.0;
                    let s = time - start;
                    if s > 0.0 {
                        samples[*f] = swing_sample(*x0, *x1, p, s);
                        contact[*f] = false;
                    }
                }
            }
        }
        let zmp: f64 = (0..nf).map(|f| current[f] * foot_x_at(f, time)).sum();
        zmp_ref.push(zmp);
        for f in 0..nf {
            foot_traj[f].push(samples[f]);
            contact_schedule[f].push(contact[f]);
            splits[f].push(current[f]);
        }
    }

    // support polygon check
    for k in 0..len {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for f in 0..nf {
            if contact_schedule[f][k] {
                let (a, b) = foot_extent(model, f);
                lo = lo.min(foot_traj[f][k].x + a);
                hi = hi.max(foot_traj[f][k].x + b);
            }
        }
        let z = zmp_ref[k];
        if z < lo + SUPPORT_MARGIN || z > hi - SUPPORT_MARGIN {
            return Err(Error::InvalidArgument(format!(
                "planned ZMP {z:.4} m at t = {:.3} s leaves the support polygon [{lo:.4}, {hi:.4}] m",
                k as f64 * p.dt
            )));
        }
    }

    let com_traj = zmp_preview_com(&zmp_ref, com_height, model.gravity, p.dt, p.preview_horizon, &p.preview_weights)?;

    // joint references
    let mut q_ref = Vec::with_capacity(len);
    let mut seed = rest_configuration(model);
    if model.n_base() > 0 {
        seed[0] += com_traj.pos[0] - crate::kinematics::center_of_mass(model, &seed).x;
    }
    for k in 0..len {
        let targets = IkTargets {
            com: Some(Vector2::new(com_traj.pos[k], com_height)),
            base_pitch: Some(0.0),
            feet: (0..nf)
                .map(|f| {
                    let s = foot_traj[f][k];
                    Some(FootTarget { x: s.x, z: s.z, angle: 0.0 })
                })
                .collect(),
        };
        let sol = inverse_kinematics(model, &targets, &seed)?;
        seed = sol.q.clone();
        q_ref.push(sol.q);
    }
    let nb = model.n_base();
    for k in 1..len {
        let jump = (q_ref[k].rows(nb, model.n_u()) - q_ref[k - 1].rows(nb, model.n_u())).amax();
        if jump > MAX_JOINT_SPEED * p.dt {
            return Err(Error::InvalidArgument(format!(
                "joint reference jumps {jump:.4} between samples at t = {:.3} s",
                k as f64 * p.dt
            )));
        }
    }
    let v_ref: Vec<DVector<f64>> = (0..len)
        .map(|k| {
            if len == 1 {
                DVector::zeros(model.n())
            } else if k == 0 {
                (&q_ref[1] - &q_ref[0]) / p.dt
            } else if k + 1 == len {
                (&q_ref[k] - &q_ref[k - 1]) / p.dt
            } else {
                (&q_ref[k + 1] - &q_ref[k - 1]) / (2.0 * p.dt)
            }
        })
        .collect();
    let mut tau_ff = Vec::with_capacity(len);
    for k in 0..len {
        let support: Vec<usize> = (0..nf).filter(|&f| contact_schedule[f][k]).collect();
        let cs = ContactSet::flat_feet(model, &support)?;
        let split: Vec<f64> = (0..nf).map(|f| if contact_schedule[f][k] { splits[f][k] } else { 0.0 }).collect();
        let total: f64 = split.iter().sum();
        let split: Vec<f64> = split.iter().map(|s| s / total).collect();
        tau_ff.push(distribute_contact_forces_at(model, &q_ref[k], &v_ref[k], &cs, &split)?.tau);
    }

    Ok(Plan {
        dt: p.dt,
        zmp_ref,
        com_traj,
        com_height,
        foot_traj,
        q_ref,
        v_ref,
        tau_ff,
        contact_schedule,
        split: splits,
        footsteps,
        step_params: p.clone(),
    })
}
