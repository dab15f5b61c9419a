//! Scenario files: what to simulate and how.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lqr::LqrWeights;
use crate::model::{bundled, RobotModel};
use crate::planner::{KeyPoseSpec, StepParams};
use crate::scheduler::{BlendConfig, EstimatorConfig, KeyframeLibrary, PdGains};

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

/// Resolves `bundled:<name>` or a path relative to `base`.
pub fn load_model(reference: &str, base: &Path) -> Result<RobotModel> {
    match reference.strip_prefix("bundled:") {
        Some("biped-sagittal") => Ok(bundled::biped_sagittal()),
        Some("biped-frontal") => Ok(bundled::biped_frontal()),
        Some(other) => Err(Error::InvalidArgument(format!(
            "unknown bundled model `{other}` (have biped-sagittal, biped-frontal)"
        ))),
        None => RobotModel::load(base.join(reference)),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LibrarySpec {
    /// Keyframe library file; when set, `pose` entries must be empty.
    #[serde(default)]
    pub file: Option<PathBuf>,
    #[serde(default, rename = "pose")]
    pub poses: Vec<KeyPoseSpec>,
    #[serde(default)]
    pub weights: LqrWeights,
    #[serde(default)]
    pub pd: PdGains,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Standard deviation on every velocity coordinate.
    pub velocity: f64,
    /// Standard deviation on every contact force component (N).
    pub force: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { velocity: 0.01, force: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default = "default_cutoff")]
    pub cutoff: f64,
}

fn yes() -> bool {
    true
}
fn default_cutoff() -> f64 {
    40.0
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { enabled: true, cutoff: default_cutoff() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Disturbance {
    /// Rectangular force pulse on a link point.
    Impulse {
        time: f64,
        body: String,
        /// Application point in the link frame.
        #[serde(default)]
        point: [f64; 2],
        /// World direction, normalized on use.
        direction: [f64; 2],
        /// N s.
        impulse: f64,
        duration: f64,
    },
    /// An extra mass on the trunk, servoed to swing sinusoidally; the
    /// controller knows neither.
    TorsoSine {
        mass: f64,
        amplitude: f64,
        frequency: f64,
        #[serde(default = "default_payload_lever")]
        lever: f64,
    },
}

fn default_payload_lever() -> f64 {
    0.3
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceMode {
    /// Track the plan's joint references with its feedforward.
    #[default]
    Plan,
    /// Regulate about the active keyframe.
    Keyframe,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    /// `bundled:<name>` or a model file path.
    pub model: String,
    pub duration: f64,
    #[serde(default = "default_dt_sim")]
    pub dt_sim: f64,
    #[serde(default = "default_dt_control")]
    pub dt_control: f64,
    #[serde(default)]
    pub seed: u64,
    /// Fall once the CoM drops below this fraction of its nominal height.
    #[serde(default = "default_fall_fraction")]
    pub fall_fraction: f64,
    pub library: LibrarySpec,
    #[serde(default)]
    pub plan: Option<StepParams>,
    #[serde(default)]
    pub reference: Option<ReferenceMode>,
    /// Label of the keyframe to start from; defaults to the first.
    #[serde(default)]
    pub initial: Option<String>,
    /// Added to the initial velocity.
    #[serde(default)]
    pub initial_velocity: Option<Vec<f64>>,
    /// Added to the initial coordinates.
    #[serde(default)]
    pub initial_offset: Option<Vec<f64>>,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub blend: BlendConfig,
    #[serde(default, rename = "disturbance")]
    pub disturbances: Vec<Disturbance>,
    /// Directory that relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_dt_sim() -> f64 {
    1e-4
}
fn default_dt_control() -> f64 {
    1e-3
}
fn default_fall_fraction() -> f64 {
    0.5
}

impl Scenario {
    /// A scenario with defaults everywhere except the essentials.
    pub fn new(name: &str, model: &str, duration: f64, poses: Vec<KeyPoseSpec>) -> Self {
        Self {
            schema_version: SCENARIO_SCHEMA_VERSION,
            name: name.to_string(),
            model: model.to_string(),
            duration,
            dt_sim: default_dt_sim(),
            dt_control: default_dt_control(),
            seed: 0,
            fall_fraction: default_fall_fraction(),
            library: LibrarySpec { file: None, poses, weights: LqrWeights::default(), pd: PdGains::default() },
            plan: None,
            reference: None,
            initial: None,
            initial_velocity: None,
            initial_offset: None,
            noise: NoiseConfig::default(),
            filter: FilterConfig::default(),
            estimator: EstimatorConfig::default(),
            blend: BlendConfig::default(),
            disturbances: Vec::new(),
            base_dir: PathBuf::from("."),
        }
    }

    pub fn from_toml_str(text: &str, base_dir: &Path) -> std::result::Result<Self, String> {
        let mut s: Scenario = toml::from_str(text).map_err(|e| e.to_string())?;
        s.base_dir = base_dir.to_path_buf();
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base).map_err(|m| Error::config(path, m))
    }

    pub fn reference_mode(&self) -> ReferenceMode {
        self.reference.unwrap_or(if self.plan.is_some() { ReferenceMode::Plan } else { ReferenceMode::Keyframe })
    }

    /// Physics steps per control tick.
    pub fn substeps(&self) -> usize {
        (self.dt_control / self.dt_sim).round() as usize
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.schema_version != SCENARIO_SCHEMA_VERSION {
            return Err(format!(
                "unsupported schema_version {} (expected {SCENARIO_SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if !(self.dt_sim > 0.0 && self.dt_sim <= 1e-3) {
            return Err(format!("dt_sim {} must lie in (0, 1e-3]", self.dt_sim));
        }
        let ratio = self.dt_control / self.dt_sim;
        if !(ratio >= 1.0) || (ratio - ratio.round()).abs() > 1e-9 {
            return Err(format!("dt_control {} must be an integer multiple of dt_sim {}", self.dt_control, self.dt_sim));
        }
        if !(self.duration > 0.0) {
            return Err("duration must be positive".into());
        }
        if self.library.file.is_some() == !self.library.poses.is_empty() {
            return Err("library needs exactly one of `file` or `pose` entries".into());
        }
        if self.reference_mode() == ReferenceMode::Plan && self.plan.is_none() {
            return Err("reference = \"plan\" needs a [plan] table".into());
        }
        if self.filter.enabled && !(self.filter.cutoff > 0.0 && self.filter.cutoff < 0.5 / self.dt_control) {
            return Err(format!("filter cutoff {} Hz must lie below the control Nyquist rate", self.filter.cutoff));
        }
        if self.noise.velocity < 0.0 || self.noise.force < 0.0 {
            return Err("noise levels must be >= 0".into());
        }
        if self.disturbances.iter().filter(|d| matches!(d, Disturbance::TorsoSine { .. })).count() > 1 {
            return Err("at most one torso-sine disturbance".into());
        }
        for d in &self.disturbances {
            if let Disturbance::Impulse { duration, direction, .. } = d {
                if !(*duration > 0.0) {
                    return Err("impulse duration must be positive".into());
                }
                if direction[0] == 0.0 && direction[1] == 0.0 {
                    return Err("impulse direction must be nonzero".into());
                }
            }
        }
        Ok(())
    }

    pub fn load_model(&self) -> Result<RobotModel> {
        load_model(&self.model, &self.base_dir)
    }

    pub fn load_library_file(&self, model: &RobotModel) -> Result<Option<KeyframeLibrary>> {
        match &self.library.file {
            Some(f) => KeyframeLibrary::load(model, self.base_dir.join(f)).map(Some),
            None => Ok(None),
        }
    }
}
