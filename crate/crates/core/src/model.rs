//! Planar articulated robot description.
//!
//! A [`RobotModel`] is a kinematic tree of links. The root may be a planar
//! floating base (horizontal, vertical and pitch coordinates, unactuated);
//! every other joint is a one-DoF revolute or prismatic joint carrying torque.
//! Internally each degree of freedom becomes one "body" so the recursive
//! algorithms only ever deal with single-DoF joints.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix3, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::spatial::{spatial_inertia, Pose2};

pub const DEFAULT_GRAVITY: f64 = 9.81;
pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// In-plane horizontal axis.
    X,
    /// Vertical axis.
    Z,
    /// Rotation in the plane.
    Pitch,
}

/// Which world plane the planar model lives in. Only affects how the in-plane
/// horizontal axis is reported (world x for sagittal, world y for frontal).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Plane {
    #[default]
    Sagittal,
    Frontal,
}

#[derive(Clone, Debug, PartialEq)]
pub enum JointKind {
    PlanarFloatingBase,
    Revolute,
    /// Translation along a unit axis given in the joint frame.
    Prismatic { axis: Vector2<f64> },
}

#[derive(Clone, Debug)]
pub struct Link {
    pub name: String,
    pub parent: Option<usize>,
    pub joint: JointKind,
    /// Joint frame placement in the parent link frame (world for the root).
    pub origin: Vector2<f64>,
    pub origin_angle: f64,
    pub mass: f64,
    pub com: Vector2<f64>,
    /// Rotational inertia about the centre of mass.
    pub inertia: f64,
    /// Joint value used to seed inverse kinematics.
    pub rest: f64,
    /// Reflected actuator inertia on the joint coordinate (kg m^2, or kg for
    /// a prismatic joint).
    pub armature: f64,
}

#[derive(Clone, Debug)]
pub struct Endeffector {
    pub name: String,
    pub link: usize,
    pub offset: Vector2<f64>,
    pub directions: Vec<Direction>,
}

/// A foot groups contact points on one link (e.g. heel and toe).
#[derive(Clone, Debug)]
pub struct Foot {
    pub name: String,
    pub link: usize,
    /// Sole reference point in the link frame, used as the IK target.
    pub sole: Vector2<f64>,
    pub points: Vec<usize>,
    /// Horizontal position of the sole reference point when standing.
    pub nominal_x: f64,
}

#[derive(Clone, Debug)]
pub(crate) enum DofKind {
    Revolute,
    Prismatic(Vector2<f64>),
}

#[derive(Clone, Debug)]
pub(crate) struct Body {
    pub parent: Option<usize>,
    pub kind: DofKind,
    pub origin: Vector2<f64>,
    pub origin_angle: f64,
    pub inertia: Matrix3<f64>,
    pub armature: f64,
}

impl Body {
    /// Pose of this body's frame relative to its parent body frame.
    pub fn rel_pose(&self, q: f64) -> Pose2 {
        match &self.kind {
            DofKind::Revolute => Pose2::new(self.origin_angle + q, self.origin),
            DofKind::Prismatic(axis) => {
                let fixed = Pose2::new(self.origin_angle, self.origin);
                Pose2::new(self.origin_angle, fixed.transform_point(&(axis * q)))
            }
        }
    }

    pub fn motion_subspace(&self) -> crate::spatial::Motion {
        match &self.kind {
            DofKind::Revolute => crate::spatial::Motion::new(1.0, 0.0, 0.0),
            DofKind::Prismatic(a) => crate::spatial::Motion::new(0.0, a.x, a.y),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RobotModel {
    pub name: String,
    pub plane: Plane,
    pub gravity: f64,
    pub links: Vec<Link>,
    pub endeffectors: Vec<Endeffector>,
    pub feet: Vec<Foot>,
    pub nominal_com_height: Option<f64>,
    pub(crate) bodies: Vec<Body>,
    /// Body index carrying each link's inertia (its last DoF).
    pub(crate) link_body: Vec<usize>,
    n_base: usize,
}

impl RobotModel {
    pub fn new(
        name: impl Into<String>,
        plane: Plane,
        gravity: f64,
        links: Vec<Link>,
        endeffectors: Vec<Endeffector>,
        feet: Vec<Foot>,
    ) -> Result<Self> {
        if links.is_empty() {
            return Err(Error::InvalidModel("model has no links".into()));
        }
        if !gravity.is_finite() {
            return Err(Error::InvalidModel("gravity must be finite".into()));
        }
        let mut bodies = Vec::new();
        let mut link_body = Vec::with_capacity(links.len());
        let mut n_base = 0;
        for (i, link) in links.iter().enumerate() {
            if !(link.mass > 0.0) || !link.mass.is_finite() {
                return Err(Error::InvalidModel(format!("link `{}`: mass must be > 0", link.name)));
            }
            if !(link.inertia >= 0.0) || !link.inertia.is_finite() {
                return Err(Error::InvalidModel(format!(
                    "link `{}`: rotational inertia must be >= 0",
                    link.name
                )));
            }
            if !(link.armature >= 0.0) || !link.armature.is_finite() {
                return Err(Error::InvalidModel(format!("link `{}`: armature must be >= 0", link.name)));
            }
            if link.armature > 0.0 && link.joint == JointKind::PlanarFloatingBase {
                return Err(Error::InvalidModel(format!(
                    "link `{}`: a floating base has no actuator and takes no armature",
                    link.name
                )));
            }
            if let Some(p) = link.parent {
                if p >= i {
                    return Err(Error::InvalidModel(format!(
                        "link `{}`: parent index {p} must precede link index {i}",
                        link.name
                    )));
                }
            } else if i != 0 {
                return Err(Error::InvalidModel(format!(
                    "link `{}`: only the first link may be the root",
                    link.name
                )));
            }
            let parent_body = link.parent.map(|p| link_body[p]);
            let inertia = spatial_inertia(link.mass, &link.com, link.inertia);
            match &link.joint {
                JointKind::PlanarFloatingBase => {
                    if i != 0 {
                        return Err(Error::InvalidModel(format!(
                            "link `{}`: a floating base must be the root link",
                            link.name
                        )));
                    }
                    let zero = Matrix3::zeros();
                    bodies.push(Body {
                        parent: None,
                        kind: DofKind::Prismatic(Vector2::x()),
                        origin: link.origin,
                        origin_angle: 0.0,
                        inertia: zero,
                        armature: 0.0,
                    });
                    bodies.push(Body {
                        parent: Some(0),
                        kind: DofKind::Prismatic(Vector2::y()),
                        origin: Vector2::zeros(),
                        origin_angle: 0.0,
                        inertia: zero,
                        armature: 0.0,
                    });
                    bodies.push(Body {
                        parent: Some(1),
                        kind: DofKind::Revolute,
                        origin: Vector2::zeros(),
                        origin_angle: link.origin_angle,
                        inertia,
                        armature: 0.0,
                    });
                    n_base = 3;
                }
                JointKind::Revolute => bodies.push(Body {
                    parent: parent_body,
                    kind: DofKind::Revolute,
                    origin: link.origin,
                    origin_angle: link.origin_angle,
                    inertia,
                    armature: link.armature,
                }),
                JointKind::Prismatic { axis } => {
                    let norm = axis.norm();
                    if !(norm > 0.0) || !norm.is_finite() {
                        return Err(Error::InvalidModel(format!(
                            "link `{}`: prismatic axis must be nonzero",
                            link.name
                        )));
                    }
                    bodies.push(Body {
                        parent: parent_body,
                        kind: DofKind::Prismatic(axis / norm),
                        origin: link.origin,
                        origin_angle: link.origin_angle,
                        inertia,
                        armature: link.armature,
                    })
                }
            }
            link_body.push(bodies.len() - 1);
        }
        for ee in &endeffectors {
            if ee.link >= links.len() {
                return Err(Error::InvalidModel(format!(
                    "endeffector `{}` refers to link {} out of range",
                    ee.name, ee.link
                )));
            }
        }
        for foot in &feet {
            if foot.link >= links.len() {
                return Err(Error::InvalidModel(format!("foot `{}`: link out of range", foot.name)));
            }
            if foot.points.is_empty() {
                return Err(Error::InvalidModel(format!("foot `{}` has no contact points", foot.name)));
            }
            for &p in &foot.points {
                let ee = endeffectors.get(p).ok_or_else(|| {
                    Error::InvalidModel(format!("foot `{}`: contact point out of range", foot.name))
                })?;
                if ee.link != foot.link {
                    return Err(Error::InvalidModel(format!(
                        "foot `{}`: point `{}` is not on the foot link",
                        foot.name, ee.name
                    )));
                }
            }
        }
        if bodies.len() <= n_base {
            return Err(Error::InvalidModel("model has no actuated joints".into()));
        }
        Ok(Self {
            name: name.into(),
            plane,
            gravity,
            links,
            endeffectors,
            feet,
            nominal_com_height: None,
            bodies,
            link_body,
            n_base,
        })
    }

    /// Total number of generalized coordinates.
    pub fn n(&self) -> usize {
        self.bodies.len()
    }

    pub fn n_base(&self) -> usize {
        self.n_base
    }

    /// Number of actuated coordinates.
    pub fn n_u(&self) -> usize {
        self.n() - self.n_base
    }

    pub fn has_floating_base(&self) -> bool {
        self.n_base > 0
    }

    pub fn total_mass(&self) -> f64 {
        self.links.iter().map(|l| l.mass).sum()
    }

    pub fn weight(&self) -> f64 {
        self.total_mass() * self.gravity
    }

    /// Actuation selector `S` (n_u x n): row i picks coordinate `n_base + i`.
    pub fn selector(&self) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(self.n_u(), self.n());
        for i in 0..self.n_u() {
            s[(i, self.n_base + i)] = 1.0;
        }
        s
    }

    /// `S^T tau`.
    pub fn apply_selector(&self, tau: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n());
        out.rows_mut(self.n_base, self.n_u()).copy_from(tau);
        out
    }

    /// Coordinate index of the base pitch, if the model floats.
    pub fn base_pitch_index(&self) -> Option<usize> {
        self.has_floating_base().then_some(2)
    }

    pub fn link_index(&self, name: &str) -> Option<usize> {
        self.links.iter().position(|l| l.name == name)
    }

    pub fn endeffector_index(&self, name: &str) -> Result<usize> {
        self.endeffectors
            .iter()
            .position(|e| e.name == name)
            .ok_or_else(|| Error::UnknownEndeffector(name.to_string()))
    }

    pub fn foot_index(&self, name: &str) -> Option<usize> {
        self.feet.iter().position(|f| f.name == name)
    }

    /// Actuated coordinates on the chain from the root to the foot, root first.
    pub fn leg_coordinates(&self, foot: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut link = Some(self.feet[foot].link);
        while let Some(l) = link {
            let b = self.link_body[l];
            if b >= self.n_base {
                out.push(b);
            }
            link = self.links[l].parent;
        }
        out.reverse();
        out
    }

    /// Name of the generalized coordinate `i`, for CSV headers and reports.
    pub fn coordinate_name(&self, i: usize) -> String {
        if self.has_floating_base() && i < 3 {
            return ["base_x", "base_z", "base_pitch"][i].to_string();
        }
        let link = self.link_body.iter().position(|&b| b == i).expect("one body per joint");
        self.links[link].name.clone()
    }

    /// Returns a copy of the model with one extra actuated link appended.
    /// Existing coordinates keep their indices.
    pub fn with_extra_link(&self, link: Link) -> Result<Self> {
        let mut links = self.links.clone();
        links.push(link);
        let mut m = RobotModel::new(
            self.name.clone(),
            self.plane,
            self.gravity,
            links,
            self.endeffectors.clone(),
            self.feet.clone(),
        )?;
        m.nominal_com_height = self.nominal_com_height;
        Ok(m)
    }

    pub fn with_gravity(&self, gravity: f64) -> Self {
        let mut m = self.clone();
        m.gravity = gravity;
        m
    }

    pub fn check_q(&self, q: &DVector<f64>) -> Result<()> {
        check_len("coordinates", self.n(), q.len())?;
        if q.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("coordinates must be finite".into()));
        }
        Ok(())
    }

    pub fn check_v(&self, v: &DVector<f64>) -> Result<()> {
        check_len("velocities", self.n(), v.len())?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("velocities must be finite".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, String> {
        let file: ModelFile = toml::from_str(text).map_err(|e| e.to_string())?;
        file.into_model()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Self::from_toml_str(&text).map_err(|m| Error::config(path, m))
    }
}

/// Generalized coordinates and velocities.
#[derive(Clone, Debug, PartialEq)]
pub struct FullState {
    pub q: DVector<f64>,
    pub v: DVector<f64>,
}

impl FullState {
    pub fn new(model: &RobotModel, q: DVector<f64>, v: DVector<f64>) -> Result<Self> {
        model.check_q(&q)?;
        model.check_v(&v)?;
        Ok(Self { q, v })
    }

    pub fn at_rest(q: DVector<f64>) -> Self {
        let v = DVector::zeros(q.len());
        Self { q, v }
    }

    /// Stacked `(q, v)`.
    pub fn stacked(&self) -> DVector<f64> {
        let n = self.q.len();
        let mut x = DVector::zeros(2 * n);
        x.rows_mut(0, n).copy_from(&self.q);
        x.rows_mut(n, n).copy_from(&self.v);
        x
    }

    pub fn from_stacked(x: &DVector<f64>) -> Self {
        let n = x.len() / 2;
        Self { q: x.rows(0, n).into_owned(), v: x.rows(n, n).into_owned() }
    }
}

// ---- file format ----

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    schema_version: u32,
    name: String,
    #[serde(default)]
    plane: Plane,
    #[serde(default = "default_gravity")]
    gravity: f64,
    #[serde(default)]
    nominal_com_height: Option<f64>,
    #[serde(rename = "link")]
    links: Vec<LinkFile>,
    #[serde(rename = "endeffector", default)]
    endeffectors: Vec<EndeffectorFile>,
    #[serde(rename = "foot", default)]
    feet: Vec<FootFile>,
}

fn default_gravity() -> f64 {
    DEFAULT_GRAVITY
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
enum JointFile {
    PlanarFloatingBase,
    Revolute,
    Prismatic,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct LinkFile {
    name: String,
    #[serde(default)]
    parent: Option<String>,
    joint: JointFile,
    #[serde(default)]
    axis: Option<[f64; 2]>,
    #[serde(default)]
    origin: [f64; 2],
    #[serde(default)]
    origin_angle: f64,
    mass: f64,
    com: [f64; 2],
    inertia: f64,
    #[serde(default)]
    rest: f64,
    #[serde(default)]
    armature: f64,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct EndeffectorFile {
    name: String,
    link: String,
    offset: [f64; 2],
    directions: Vec<Direction>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct FootFile {
    name: String,
    sole: [f64; 2],
    points: Vec<String>,
    #[serde(default)]
    nominal_x: f64,
}

impl ModelFile {
    fn into_model(self) -> Result<RobotModel, String> {
        if self.schema_version != MODEL_SCHEMA_VERSION {
            return Err(format!(
                "unsupported schema_version {} (expected {MODEL_SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut links = Vec::with_capacity(self.links.len());
        for (i, l) in self.links.into_iter().enumerate() {
            let parent = match &l.parent {
                None => None,
                Some(p) => Some(
                    *index
                        .get(p)
                        .ok_or_else(|| format!("link `{}`: parent `{p}` must be listed before it", l.name))?,
                ),
            };
            let joint = match l.joint {
                JointFile::PlanarFloatingBase => JointKind::PlanarFloatingBase,
                JointFile::Revolute => JointKind::Revolute,
                JointFile::Prismatic => {
                    let a = l.axis.ok_or_else(|| format!("link `{}`: prismatic joint needs `axis`", l.name))?;
                    JointKind::Prismatic { axis: Vector2::new(a[0], a[1]) }
                }
            };
            if index.insert(l.name.clone(), i).is_some() {
                return Err(format!("duplicate link name `{}`", l.name));
            }
            links.push(Link {
                name: l.name,
                parent,
                joint,
                origin: Vector2::new(l.origin[0], l.origin[1]),
                origin_angle: l.origin_angle,
                mass: l.mass,
                com: Vector2::new(l.com[0], l.com[1]),
                inertia: l.inertia,
                rest: l.rest,
                armature: l.armature,
            });
        }
        let mut ee_index: HashMap<String, usize> = HashMap::new();
        let mut endeffectors = Vec::new();
        for (i, e) in self.endeffectors.into_iter().enumerate() {
            let link = *index
                .get(&e.link)
                .ok_or_else(|| format!("endeffector `{}`: unknown link `{}`", e.name, e.link))?;
            if ee_index.insert(e.name.clone(), i).is_some() {
                return Err(format!("duplicate endeffector name `{}`", e.name));
            }
            let mut directions = e.directions.clone();
            directions.sort();
            directions.dedup();
            endeffectors.push(Endeffector {
                name: e.name,
                link,
                offset: Vector2::new(e.offset[0], e.offset[1]),
                directions,
            });
        }
        let mut feet = Vec::new();
        for f in self.feet {
            let points = f
                .points
                .iter()
                .map(|p| {
                    ee_index
                        .get(p)
                        .copied()
                        .ok_or_else(|| format!("foot `{}`: unknown endeffector `{p}`", f.name))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let link = points.first().map(|&p| endeffectors[p].link).ok_or_else(|| {
                format!("foot `{}` has no contact points", f.name)
            })?;
            feet.push(Foot {
                name: f.name,
                link,
                sole: Vector2::new(f.sole[0], f.sole[1]),
                points,
                nominal_x: f.nominal_x,
            });
        }
        let mut model = RobotModel::new(self.name, self.plane, self.gravity, links, endeffectors, feet)
            .map_err(|e| e.to_string())?;
        model.nominal_com_height = self.nominal_com_height;
        Ok(model)
    }
}

/// Bundled model descriptions.
pub mod bundled {
    use super::RobotModel;

    pub const BIPED_SAGITTAL: &str = include_str!("../data/models/biped_sagittal.toml");
    pub const BIPED_FRONTAL: &str = include_str!("../data/models/biped_frontal.toml");

    /// Default planar biped in the sagittal plane (n = 9).
    pub fn biped_sagittal() -> RobotModel {
        RobotModel::from_toml_str(BIPED_SAGITTAL).expect("bundled sagittal biped is valid")
    }

    /// Default planar biped in the frontal plane (n = 9).
    pub fn biped_frontal() -> RobotModel {
        RobotModel::from_toml_str(BIPED_FRONTAL).expect("bundled frontal biped is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn link(name: &str, parent: Option<usize>, joint: JointKind, mass: f64) -> Link {
        Link {
            name: name.into(),
            parent,
            joint,
            origin: Vector2::zeros(),
            origin_angle: 0.0,
            mass,
            com: Vector2::new(0.0, -0.5),
            inertia: 0.1,
            rest: 0.0,
            armature: 0.0,
        }
    }

    #[test]
    fn rejects_non_positive_mass() {
        let err = RobotModel::new("m", Plane::Sagittal, 9.81, vec![link("a", None, JointKind::Revolute, 0.0)], vec![], vec![]);
        assert!(matches!(err, Err(Error::InvalidModel(_))));
    }

    #[test]
    fn rejects_parent_after_child() {
        let links = vec![
            link("a", None, JointKind::Revolute, 1.0),
            link("b", Some(1), JointKind::Revolute, 1.0),
        ];
        assert!(RobotModel::new("m", Plane::Sagittal, 9.81, links, vec![], vec![]).is_err());
    }

    #[test]
    fn floating_base_must_be_root() {
        let links = vec![
            link("a", None, JointKind::Revolute, 1.0),
            link("b", Some(0), JointKind::PlanarFloatingBase, 1.0),
        ];
        assert!(RobotModel::new("m", Plane::Sagittal, 9.81, links, vec![], vec![]).is_err());
    }

    #[test]
    fn bundled_bipeds_have_nine_dofs() {
        for m in [bundled::biped_sagittal(), bundled::biped_frontal()] {
            assert_eq!(m.n(), 9);
            assert_eq!(m.n_base(), 3);
            assert_eq!(m.n_u(), 6);
            assert_eq!(m.feet.len(), 2);
        }
    }

    #[test]
    fn selector_has_no_base_columns() {
        let m = bundled::biped_sagittal();
        let s = m.selector();
        assert_eq!(s.nrows(), m.n_u());
        for r in 0..s.nrows() {
            assert_eq!(s.row(r).sum(), 1.0);
            for c in 0..m.n_base() {
                assert_eq!(s[(r, c)], 0.0);
            }
        }
    }

    #[test]
    fn model_file_reports_unknown_parent() {
        let text = r#"
schema_version = 1
name = "bad"
[[link]]
name = "a"
parent = "nope"
joint = "revolute"
mass = 1.0
com = [0.0, -1.0]
inertia = 0.0
"#;
        let err = RobotModel::from_toml_str(text).unwrap_err();
        assert!(err.contains("nope"), "{err}");
    }
}
