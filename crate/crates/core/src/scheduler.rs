//! Keyframe controller library, contact-state estimation and gain blending
//! across contact switches.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::contact::ContactSet;
use crate::error::{Error, Result};
use crate::lqr::{synthesize, ControllerRecord, LqrController, LqrWeights};
use crate::model::{FullState, RobotModel};
use crate::planner::{key_pose, KeyPoseSpec};

pub const LIBRARY_SCHEMA_VERSION: u32 = 1;

/// Independent-joint PD gains used as the blend intermediate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdGains {
    pub kp: f64,
    pub kd: f64,
}

impl Default for PdGains {
    fn default() -> Self {
        Self { kp: 50.0, kd: 5.0 }
    }
}

impl PdGains {
    /// n_u x 2n matrix acting on actuated positions and velocities only.
    pub fn matrix(&self, model: &RobotModel) -> DMatrix<f64> {
        let (n, nb) = (model.n(), model.n_base());
        let mut k = DMatrix::zeros(model.n_u(), 2 * n);
        for i in 0..model.n_u() {
            k[(i, nb + i)] = self.kp;
            k[(i, n + nb + i)] = self.kd;
        }
        k
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KeyframeLibrary {
    pub controllers: Vec<LqrController>,
    pub pd: PdGains,
    pub pd_fallback: DMatrix<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LibraryFile {
    schema_version: u32,
    model: String,
    #[serde(default)]
    pd_fallback: PdGains,
    controller: Vec<ControllerRecord>,
}

impl KeyframeLibrary {
    pub fn new(model: &RobotModel, controllers: Vec<LqrController>, pd: PdGains) -> Result<Self> {
        if controllers.is_empty() {
            return Err(Error::InvalidArgument("keyframe library needs at least one controller".into()));
        }
        Ok(Self { controllers, pd, pd_fallback: pd.matrix(model) })
    }

    /// Solves each pose and synthesizes its controller, in the given order.
    pub fn synthesize(model: &RobotModel, poses: &[KeyPoseSpec], weights: &LqrWeights, pd: PdGains) -> Result<Self> {
        let (q, r) = weights.matrices(model);
        let controllers = poses
            .iter()
            .map(|spec| {
                let pose = key_pose(model, spec)?;
                synthesize(model, &pose.state, &pose.contacts, &q, &r, &spec.label)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(model, controllers, pd)
    }

    pub fn len(&self) -> usize {
        self.controllers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.controllers.is_empty()
    }

    pub fn to_toml_string(&self, model: &RobotModel) -> String {
        let file = LibraryFile {
            schema_version: LIBRARY_SCHEMA_VERSION,
            model: model.name.clone(),
            pd_fallback: self.pd,
            controller: self.controllers.iter().map(|c| ControllerRecord::from_controller(model, c)).collect(),
        };
        toml::to_string(&file).expect("library is plain data")
    }

    pub fn from_toml_str(model: &RobotModel, text: &str) -> std::result::Result<Self, String> {
        let file: LibraryFile = toml::from_str(text).map_err(|e| e.to_string())?;
        if file.schema_version != LIBRARY_SCHEMA_VERSION {
            return Err(format!(
                "unsupported schema_version {} (expected {LIBRARY_SCHEMA_VERSION})",
                file.schema_version
            ));
        }
        if file.model != model.name {
            return Err(format!("library was synthesized for model `{}`, not `{}`", file.model, model.name));
        }
        let controllers = file
            .controller
            .into_iter()
            .map(|r| r.into_controller(model))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.to_string())?;
        Self::new(model, controllers, file.pd_fallback).map_err(|e| e.to_string())
    }

    pub fn save(&self, model: &RobotModel, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml_string(model)).map_err(|source| Error::Io { path: path.into(), source })
    }

    pub fn load(model: &RobotModel, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.into(), source })?;
        Self::from_toml_str(model, &text).map_err(|m| Error::config(path, m))
    }
}

/// `‖K_a − K_b‖_F`.
pub fn gain_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::InvalidArgument(format!("gain shapes differ: {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok((a - b).norm())
}

/// All pairwise gain distances.
pub fn distance_table(controllers: &[LqrController]) -> DMatrix<f64> {
    let n = controllers.len();
    DMatrix::from_fn(n, n, |i, j| (&controllers[i].k - &controllers[j].k).norm())
}

/// The distance table as aligned text with keyframe labels.
pub fn format_distance_table(controllers: &[LqrController]) -> String {
    use std::fmt::Write as _;
    let d = distance_table(controllers);
    let w = controllers.iter().map(|c| c.label.len()).max().unwrap_or(0).max(10);
    let mut s = format!("{:w$}", "");
    for c in controllers {
        let _ = write!(s, " {:>w$}", c.label);
    }
    s.push('\n');
    for (i, c) in controllers.iter().enumerate() {
        let _ = write!(s, "{:w$}", c.label);
        for j in 0..controllers.len() {
            let _ = write!(s, " {:>w$.2}", d[(i, j)]);
        }
        s.push('\n');
    }
    s
}

// ---- contact estimation ----

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    /// Fraction of robot weight above which a foot may become loaded.
    pub f_on: f64,
    /// Fraction of robot weight below which a foot may become free.
    pub f_off: f64,
    pub window_s: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self { f_on: 0.05, f_off: 0.02, window_s: 0.3 }
    }
}

/// What the plan says about one endeffector within `±window_s` of now.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PlanWindow {
    pub contact_expected: bool,
    pub swing_expected: bool,
}

impl PlanWindow {
    pub fn contact() -> Self {
        Self { contact_expected: true, swing_expected: false }
    }

    pub fn swing() -> Self {
        Self { contact_expected: false, swing_expected: true }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContactEstimate {
    /// Per endeffector.
    pub in_contact: Vec<bool>,
    /// Per endeffector, as measured.
    pub normal_force: Vec<f64>,
}

impl ContactEstimate {
    pub fn from_flags(in_contact: Vec<bool>) -> Self {
        let n = in_contact.len();
        Self { in_contact, normal_force: vec![0.0; n] }
    }

    pub fn contact_set(&self, model: &RobotModel) -> Result<ContactSet> {
        let points: Vec<usize> = (0..self.in_contact.len()).filter(|&i| self.in_contact[i]).collect();
        ContactSet::from_points(model, &points)
    }
}

/// Updates the estimate. Points of one foot share a flag decided from the
/// foot's total normal force; free-standing points are judged alone.
pub fn estimate_contact(
    model: &RobotModel,
    measured_normal: &[f64],
    planned: &[PlanWindow],
    config: &EstimatorConfig,
    prev: &ContactEstimate,
) -> ContactEstimate {
    let ne = model.endeffectors.len();
    assert_eq!(measured_normal.len(), ne, "one force per endeffector");
    assert_eq!(planned.len(), ne, "one plan window per endeffector");
    let weight = model.weight();
    let (f_on, f_off) = (config.f_on * weight, config.f_off * weight);
    let mut flags = prev.in_contact.clone();
    let mut groups: Vec<Vec<usize>> = model.feet.iter().map(|f| f.points.clone()).collect();
    for e in 0..ne {
        if !model.feet.iter().any(|f| f.points.contains(&e)) {
            groups.push(vec![e]);
        }
    }
    for group in groups {
        if group.is_empty() {
            continue;
        }
        let force: f64 = group.iter().map(|&e| measured_normal[e]).sum();
        let was = group.iter().any(|&e| prev.in_contact[e]);
        let contact_expected = group.iter().any(|&e| planned[e].contact_expected);
        let swing_expected = group.iter().any(|&e| planned[e].swing_expected);
        let now = if !was && force > f_on && contact_expected {
            true
        } else if was && force < f_off && swing_expected {
            false
        } else {
            was
        };
        for e in group {
            flags[e] = now;
        }
    }
    ContactEstimate { in_contact: flags, normal_force: measured_normal.to_vec() }
}

// ---- selection and blending ----

fn same_points(a: &ContactSet, b: &ContactSet) -> bool {
    let pa: Vec<usize> = a.entries().iter().map(|e| e.endeffector).collect();
    let pb: Vec<usize> = b.entries().iter().map(|e| e.endeffector).collect();
    pa == pb
}

/// Nearest key pose (joint coordinates only) among controllers whose contact
/// set matches `contacts`; ties go to the lower index.
pub fn select_controller(lib: &KeyframeLibrary, contacts: &ContactSet, q: &DVector<f64>) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in lib.controllers.iter().enumerate() {
        if !same_points(&c.contacts, contacts) {
            continue;
        }
        let nb = c.x0.q.len() - c.k.nrows();
        let d = (q.rows(nb, q.len() - nb) - c.x0.q.rows(nb, q.len() - nb)).norm();
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i)
        .ok_or_else(|| Error::NoMatchingKeyframe(format!("with {} contact rows", contacts.m())))
}

/// Gain along the blend `K_prev → K_pd → K_next`; `done` once
/// `t ≥ 2 t_half`.
pub fn blend_gains(
    k_prev: &DMatrix<f64>,
    k_next: &DMatrix<f64>,
    k_pd: &DMatrix<f64>,
    t_since_switch: f64,
    t_half: f64,
) -> (DMatrix<f64>, bool) {
    assert!(t_half > 0.0, "blend half time must be positive");
    let t = t_since_switch.max(0.0);
    if t <= t_half {
        let s = t / t_half;
        (k_prev * (1.0 - s) + k_pd * s, false)
    } else if t < 2.0 * t_half {
        let s = t / t_half - 1.0;
        (k_pd * (1.0 - s) + k_next * s, false)
    } else {
        (k_next.clone(), true)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlendConfig {
    pub enabled: bool,
    pub t_half: f64,
}

impl Default for BlendConfig {
    fn default() -> Self {
        Self { enabled: true, t_half: 0.05 }
    }
}

/// Gains and set point in force for one control tick.
#[derive(Clone, Debug)]
pub struct ActiveGains {
    pub k: DMatrix<f64>,
    /// Controller whose set point is in use.
    pub setpoint: usize,
    /// Controller selected for the current contact estimate, if any.
    pub selected: Option<usize>,
    pub blending: bool,
    /// True on the tick where the selection changed.
    pub switched: bool,
}

#[derive(Clone, Debug)]
struct Blend {
    k_from: DMatrix<f64>,
    from_setpoint: usize,
    to: usize,
    started: f64,
}

/// Control-loop state: the active controller and any blend in progress.
#[derive(Clone, Debug)]
pub struct GainScheduler {
    pub config: BlendConfig,
    current: usize,
    blend: Option<Blend>,
    last_k: DMatrix<f64>,
    fallback: bool,
}

impl GainScheduler {
    pub fn new(lib: &KeyframeLibrary, initial: usize, config: BlendConfig) -> Self {
        Self { config, current: initial, blend: None, last_k: lib.controllers[initial].k.clone(), fallback: false }
    }

    pub fn current(&self) -> usize {
        self.current
    }

    /// Advances to time `t` with the estimated contact set and coordinates.
    /// Without a matching keyframe the PD fallback is used around the last
    /// set point.
    pub fn tick(&mut self, lib: &KeyframeLibrary, t: f64, contacts: &ContactSet, q: &DVector<f64>) -> ActiveGains {
        let selected = select_controller(lib, contacts, q).ok();
        let mut switched = false;
        if selected.is_none() {
            if !self.fallback {
                switched = true;
                self.fallback = true;
                self.blend = None;
            }
            self.last_k = lib.pd_fallback.clone();
            return ActiveGains {
                k: self.last_k.clone(),
                setpoint: self.current,
                selected,
                blending: false,
                switched,
            };
        }
        let next = selected.unwrap();
        let target = self.blend.as_ref().map_or(self.current, |b| b.to);
        if self.fallback || next != target {
            switched = true;
            let same_contacts = same_points(&lib.controllers[next].contacts, &lib.controllers[self.current].contacts);
            if self.fallback || !self.config.enabled || (same_contacts && self.blend.is_none()) {
                // direct switch
                self.blend = None;
                if self.fallback && self.config.enabled {
                    self.blend = Some(Blend { k_from: self.last_k.clone(), from_setpoint: self.current, to: next, started: t });
                } else {
                    self.current = next;
                }
            } else {
                let from_setpoint = match &self.blend {
                    Some(b) if t - b.started > self.config.t_half => b.to,
                    Some(b) => b.from_setpoint,
                    None => self.current,
                };
                self.blend = Some(Blend { k_from: self.last_k.clone(), from_setpoint, to: next, started: t });
            }
            self.fallback = false;
        }
        let (k, setpoint, blending) = match &self.blend {
            Some(b) => {
                let dt = t - b.started;
                let (k, done) = blend_gains(&b.k_from, &lib.controllers[b.to].k, &lib.pd_fallback, dt, self.config.t_half);
                let sp = if dt > self.config.t_half { b.to } else { b.from_setpoint };
                if done {
                    self.current = b.to;
                    self.blend = None;
                    (k, self.current, false)
                } else {
                    (k, sp, true)
                }
            }
            None => (lib.controllers[self.current].k.clone(), self.current, false),
        };
        self.last_k = k.clone();
        ActiveGains { k, setpoint, selected, blending, switched }
    }
}

/// `τ₀ − K (x − x₀)` of the set point controller with the scheduled gain.
pub fn scheduled_torque(lib: &KeyframeLibrary, gains: &ActiveGains, x: &FullState) -> DVector<f64> {
    let c = &lib.controllers[gains.setpoint];
    crate::lqr::feedback(&gains.k, &c.tau0, &c.x0, x, c.pitch_index)
}
