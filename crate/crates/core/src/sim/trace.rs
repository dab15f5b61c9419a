//! Per-tick simulation record and its CSV form.

use std::io::Write;

use nalgebra::{DVector, Vector2};

use crate::error::{Error, Result};
use crate::model::{Plane, RobotModel};

#[derive(Clone, Debug, PartialEq)]
pub struct TraceSample {
    pub t: f64,
    /// Controller coordinates (a payload the controller does not know is left out).
    pub q: DVector<f64>,
    pub v: DVector<f64>,
    pub tau: DVector<f64>,
    /// True contact force per endeffector (horizontal, vertical).
    pub forces: Vec<Vector2<f64>>,
    pub estimated: Vec<bool>,
    pub active: Vec<bool>,
    /// Sole point per foot.
    pub feet: Vec<Vector2<f64>>,
    pub com: Vector2<f64>,
    pub com_ref: Vector2<f64>,
    /// NaN without ground contact.
    pub cop: f64,
    pub zmp_ref: f64,
    /// Base translation error against the reference (m).
    pub base_error: f64,
    pub setpoint: usize,
    pub selected: Option<usize>,
    pub blending: bool,
}

/// Gain change at one controller switch: the largest `‖ΔK e‖` over the blend
/// and what an immediate switch would have produced at the switch tick.
#[derive(Clone, Debug, PartialEq)]
pub struct SwitchRecord {
    pub time: f64,
    pub from: Option<usize>,
    pub to: Option<usize>,
    pub blended: f64,
    pub unblended: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TouchdownRecord {
    pub time: f64,
    pub foot: usize,
    pub x: f64,
}

/// A planned footstep and where the foot actually rests.
#[derive(Clone, Debug, PartialEq)]
pub struct FootstepRecord {
    /// Planned touchdown time.
    pub time: f64,
    pub foot: usize,
    pub planned: f64,
    /// Sole position once the foot has settled; `None` if it is not down.
    pub x: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImpulseRecord {
    pub time: f64,
    pub commanded: f64,
    pub applied: f64,
}

#[derive(Clone, Debug)]
pub struct Trace {
    pub scenario: String,
    pub plane: Plane,
    pub coordinates: Vec<String>,
    pub actuated: Vec<String>,
    pub endeffectors: Vec<String>,
    pub feet: Vec<String>,
    pub controllers: Vec<String>,
    pub weight: f64,
    pub dt: f64,
    pub samples: Vec<TraceSample>,
    pub switches: Vec<SwitchRecord>,
    pub touchdowns: Vec<TouchdownRecord>,
    pub impulses: Vec<ImpulseRecord>,
    pub fall_time: Option<f64>,
    /// Most negative vertical force on a held point, over the robot weight.
    pub min_held_force: f64,
    pub max_drift: f64,
    /// Planned footsteps reached before the run ended.
    pub footsteps: Vec<FootstepRecord>,
    /// Per endeffector: its foot and horizontal offset from the sole point
    /// when the foot is flat.
    pub point_offsets: Vec<Option<(usize, f64)>>,
}

impl Trace {
    pub fn new(scenario: &str, model: &RobotModel, controllers: Vec<String>, dt: f64) -> Self {
        let nb = model.n_base();
        Self {
            scenario: scenario.to_string(),
            plane: model.plane,
            coordinates: (0..model.n()).map(|i| model.coordinate_name(i)).collect(),
            actuated: (nb..model.n()).map(|i| model.coordinate_name(i)).collect(),
            endeffectors: model.endeffectors.iter().map(|e| e.name.clone()).collect(),
            feet: model.feet.iter().map(|f| f.name.clone()).collect(),
            controllers,
            weight: model.weight(),
            dt,
            samples: Vec::new(),
            switches: Vec::new(),
            touchdowns: Vec::new(),
            impulses: Vec::new(),
            fall_time: None,
            min_held_force: 0.0,
            max_drift: 0.0,
            footsteps: Vec::new(),
            point_offsets: model
                .endeffectors
                .iter()
                .enumerate()
                .map(|(e, ee)| {
                    let f = model.feet.iter().position(|f| f.points.contains(&e))?;
                    Some((f, ee.offset.x - model.feet[f].sole.x))
                })
                .collect(),
        }
    }

    pub fn fell(&self) -> bool {
        self.fall_time.is_some()
    }

    /// Column names in their fixed order.
    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["time".to_string()];
        h.extend(self.coordinates.iter().map(|c| format!("q_{c}")));
        h.extend(self.coordinates.iter().map(|c| format!("v_{c}")));
        h.extend(self.actuated.iter().map(|c| format!("tau_{c}")));
        for e in &self.endeffectors {
            h.push(format!("f_{e}_x"));
            h.push(format!("f_{e}_z"));
        }
        h.extend(self.endeffectors.iter().map(|e| format!("est_{e}")));
        h.extend(self.endeffectors.iter().map(|e| format!("active_{e}")));
        for f in &self.feet {
            h.push(format!("foot_{f}_x"));
            h.push(format!("foot_{f}_z"));
        }
        h.extend(
            ["com_x", "com_z", "com_ref_x", "com_ref_z", "cop_x", "zmp_ref", "base_error", "controller", "selected", "blending"]
                .iter()
                .map(|s| s.to_string()),
        );
        h
    }

    fn row(s: &TraceSample) -> Vec<String> {
        let f = |x: f64| format!("{x}");
        let b = |x: bool| if x { "1".to_string() } else { "0".to_string() };
        let mut r = vec![f(s.t)];
        r.extend(s.q.iter().map(|&x| f(x)));
        r.extend(s.v.iter().map(|&x| f(x)));
        r.extend(s.tau.iter().map(|&x| f(x)));
        for force in &s.forces {
            r.push(f(force.x));
            r.push(f(force.y));
        }
        r.extend(s.estimated.iter().map(|&x| b(x)));
        r.extend(s.active.iter().map(|&x| b(x)));
        for p in &s.feet {
            r.push(f(p.x));
            r.push(f(p.y));
        }
        r.extend([f(s.com.x), f(s.com.y), f(s.com_ref.x), f(s.com_ref.y), f(s.cop), f(s.zmp_ref), f(s.base_error)]);
        r.push(s.setpoint.to_string());
        r.push(s.selected.map_or("-1".to_string(), |i| i.to_string()));
        r.push(b(s.blending));
        r
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::InvalidArgument(format!("writing trace: {e}"));
        w.write_record(self.header()).map_err(io)?;
        for s in &self.samples {
            w.write_record(Self::row(s)).map_err(io)?;
        }
        w.flush().map_err(|e| Error::InvalidArgument(format!("writing trace: {e}")))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("CSV is UTF-8")
    }
}
