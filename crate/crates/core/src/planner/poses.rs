//! Key poses: a posture plus the feet it stands on, solved by IK.

use std::path::Path;

use nalgebra::{DVector, Vector2};
use serde::{Deserialize, Serialize};

use super::ik::{inverse_kinematics, FootTarget, IkTargets};
use crate::contact::ContactSet;
use crate::error::{Error, Result};
use crate::kinematics::{body_poses, center_of_mass};
use crate::model::{FullState, RobotModel};

pub const DEFAULT_SWING_HEIGHT: f64 = 0.05;
pub const POSE_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyPoseSpec {
    pub label: String,
    /// Names of the feet in contact.
    pub support: Vec<String>,
    /// World CoM x; defaults to the middle of the support feet.
    #[serde(default)]
    pub com_x: Option<f64>,
    /// Defaults to the model's nominal CoM height.
    #[serde(default)]
    pub com_z: Option<f64>,
    #[serde(default)]
    pub base_pitch: f64,
    /// Sole height of feet not in support.
    #[serde(default = "default_swing_height")]
    pub swing_height: f64,
    /// Per-foot sole x, in model foot order; defaults to each foot's nominal x.
    #[serde(default)]
    pub foot_x: Option<Vec<f64>>,
}

fn default_swing_height() -> f64 {
    DEFAULT_SWING_HEIGHT
}

impl KeyPoseSpec {
    pub fn new(label: &str, support: &[&str]) -> Self {
        Self {
            label: label.to_string(),
            support: support.iter().map(|s| s.to_string()).collect(),
            com_x: None,
            com_z: None,
            base_pitch: 0.0,
            swing_height: DEFAULT_SWING_HEIGHT,
            foot_x: None,
        }
    }

    pub fn with_com_x(mut self, x: f64) -> Self {
        self.com_x = Some(x);
        self
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseFile {
    schema_version: u32,
    pose: Vec<KeyPoseSpec>,
}

pub fn poses_from_toml_str(text: &str) -> std::result::Result<Vec<KeyPoseSpec>, String> {
    let file: PoseFile = toml::from_str(text).map_err(|e| e.to_string())?;
    if file.schema_version != POSE_SCHEMA_VERSION {
        return Err(format!("unsupported schema_version {} (expected {POSE_SCHEMA_VERSION})", file.schema_version));
    }
    if file.pose.is_empty() {
        return Err("pose file lists no poses".into());
    }
    let mut labels: Vec<&str> = file.pose.iter().map(|p| p.label.as_str()).collect();
    labels.sort_unstable();
    if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
        return Err(format!("pose label `{}` appears twice", w[0]));
    }
    Ok(file.pose)
}

/// Reads a key pose file: `schema_version` plus `[[pose]]` tables.
pub fn load_poses(path: impl AsRef<Path>) -> Result<Vec<KeyPoseSpec>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.into(), source })?;
    poses_from_toml_str(&text).map_err(|m| Error::config(path, m))
}

#[derive(Clone, Debug)]
pub struct KeyPose {
    pub label: String,
    pub state: FullState,
    pub contacts: ContactSet,
    pub support: Vec<usize>,
}

/// Rest joint angles with the base lowered until the lowest sole touches z = 0.
pub fn rest_configuration(model: &RobotModel) -> DVector<f64> {
    let nb = model.n_base();
    let mut q = DVector::zeros(model.n());
    let mut j = nb;
    for link in model.links.iter().skip(if nb > 0 { 1 } else { 0 }) {
        q[j] = link.rest;
        j += 1;
    }
    if nb > 0 {
        let poses = body_poses(model, &q);
        let lowest = model
            .feet
            .iter()
            .map(|f| poses[model.link_body[f.link]].transform_point(&f.sole).y)
            .fold(f64::INFINITY, f64::min);
        if lowest.is_finite() {
            q[1] = -lowest;
        }
    }
    q
}

pub fn key_pose(model: &RobotModel, spec: &KeyPoseSpec) -> Result<KeyPose> {
    key_pose_seeded(model, spec, &rest_configuration(model))
}

pub fn key_pose_seeded(model: &RobotModel, spec: &KeyPoseSpec, seed: &DVector<f64>) -> Result<KeyPose> {
    let support = spec
        .support
        .iter()
        .map(|name| {
            model
                .foot_index(name)
                .ok_or_else(|| Error::InvalidArgument(format!("pose `{}`: unknown foot `{name}`", spec.label)))
        })
        .collect::<Result<Vec<_>>>()?;
    if support.is_empty() {
        return Err(Error::InvalidArgument(format!("pose `{}` has no support foot", spec.label)));
    }
    let foot_x: Vec<f64> = match &spec.foot_x {
        Some(xs) => {
            crate::error::check_len("pose foot_x", model.feet.len(), xs.len())?;
            xs.clone()
        }
        None => model.feet.iter().map(|f| f.nominal_x).collect(),
    };
    let com_x = spec
        .com_x
        .unwrap_or_else(|| support.iter().map(|&f| foot_x[f]).sum::<f64>() / support.len() as f64);
    let com_z = match spec.com_z.or(model.nominal_com_height) {
        Some(z) => z,
        None => center_of_mass(model, seed).y,
    };
    let targets = IkTargets {
        com: Some(Vector2::new(com_x, com_z)),
        base_pitch: Some(spec.base_pitch),
        feet: (0..model.feet.len())
            .map(|f| {
                let z = if support.contains(&f) { 0.0 } else { spec.swing_height };
                Some(FootTarget { x: foot_x[f], z, angle: 0.0 })
            })
            .collect(),
    };
    let mut seed = seed.clone();
    if model.n_base() > 0 {
        seed[0] += com_x - center_of_mass(model, &seed).x;
    }
    let sol = inverse_kinematics(model, &targets, &seed)?;
    let mut sorted = support.clone();
    sorted.sort_unstable();
    Ok(KeyPose {
        label: spec.label.clone(),
        state: FullState::at_rest(sol.q),
        contacts: ContactSet::flat_feet(model, &sorted)?,
        support: sorted,
    })
}
