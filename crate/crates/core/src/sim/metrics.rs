//! Scalar summaries of a trace.

use serde::{Deserialize, Serialize};

use super::trace::Trace;
use crate::model::Plane;

/// Base error below which a disturbed robot counts as recovered (m).
pub const RECOVERY_TOLERANCE: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub scenario: String,
    pub simulated: f64,
    pub fell: bool,
    pub fall_time: Option<f64>,
    /// CoM tracking error per world axis (x, y, z); the out-of-plane axis is zero.
    pub rmse_com: [f64; 3],
    pub peak_base_error: f64,
    /// Largest impulse applied without a fall (N s).
    pub max_impulse_survived: f64,
    /// Seconds from the end of the last push until the base error stays
    /// below the recovery tolerance.
    pub recovery_time: Option<f64>,
    pub switches: usize,
    pub max_switch_jump: f64,
    pub max_unblended_jump: f64,
    /// Ticks with the CoP outside the held contact points.
    pub cop_violations: usize,
    /// Ticks where the estimate reports every foot down while one is
    /// more than 1 cm above the ground.
    pub false_double_support: usize,
    /// Planned footsteps with the foot down where it should rest.
    pub steps: usize,
    /// Largest distance of a resting foot from its planned footstep (m).
    pub max_footstep_error: Option<f64>,
    pub min_held_force: f64,
    pub max_drift: f64,
}

fn rmse(errors: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut k) = (0.0, 0usize);
    for e in errors {
        s += e * e;
        k += 1;
    }
    if k == 0 {
        0.0
    } else {
        (s / k as f64).sqrt()
    }
}

pub fn metrics(trace: &Trace) -> Metrics {
    let samples = &trace.samples;
    let horiz = rmse(samples.iter().map(|s| s.com.x - s.com_ref.x));
    let vert = rmse(samples.iter().map(|s| s.com.y - s.com_ref.y));
    let rmse_com = match trace.plane {
        Plane::Sagittal => [horiz, 0.0, vert],
        Plane::Frontal => [0.0, horiz, vert],
    };
    let peak_base_error = samples.iter().map(|s| s.base_error).fold(0.0, f64::max);
    let max_impulse_survived = if trace.fell() {
        trace
            .impulses
            .iter()
            .filter(|i| trace.fall_time.is_some_and(|f| i.time > f))
            .map(|i| i.applied)
            .fold(0.0, f64::max)
    } else {
        trace.impulses.iter().map(|i| i.applied).fold(0.0, f64::max)
    };
    let recovery_time = if trace.impulses.is_empty() || trace.fell() {
        None
    } else {
        let end = trace.impulses.iter().map(|i| i.time).fold(0.0, f64::max);
        let last_bad = samples.iter().rposition(|s| s.base_error >= RECOVERY_TOLERANCE);
        match last_bad {
            None => Some(0.0),
            Some(i) if i + 1 < samples.len() => Some((samples[i + 1].t - end).max(0.0)),
            Some(_) => None,
        }
    };
    let cop_violations = samples
        .iter()
        .filter(|s| {
            if s.cop.is_nan() {
                return false;
            }
            let xs: Vec<f64> = (0..s.active.len()).filter(|&e| s.active[e]).map(|e| point_x(trace, s, e)).collect();
            let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            s.cop < lo - 1e-6 || s.cop > hi + 1e-6
        })
        .count();
    let false_double_support = samples
        .iter()
        .filter(|s| s.estimated.iter().all(|&c| c) && s.feet.iter().any(|p| p.y > 0.01))
        .count();
    let landed: Vec<f64> = trace.footsteps.iter().filter_map(|s| s.x.map(|x| (x - s.planned).abs())).collect();
    let max_footstep_error = landed.iter().cloned().reduce(f64::max);
    Metrics {
        scenario: trace.scenario.clone(),
        simulated: samples.last().map_or(0.0, |s| s.t),
        fell: trace.fell(),
        fall_time: trace.fall_time,
        rmse_com,
        peak_base_error,
        max_impulse_survived,
        recovery_time,
        switches: trace.switches.len(),
        max_switch_jump: trace.switches.iter().map(|s| s.blended).fold(0.0, f64::max),
        max_unblended_jump: trace.switches.iter().map(|s| s.unblended).fold(0.0, f64::max),
        cop_violations,
        false_double_support,
        steps: landed.len(),
        max_footstep_error,
        min_held_force: trace.min_held_force,
        max_drift: trace.max_drift,
    }
}

/// Ground x of a contact point, from the foot sole and the point's place on it.
fn point_x(trace: &Trace, s: &super::trace::TraceSample, e: usize) -> f64 {
    match trace.point_offsets.get(e) {
        Some(&Some((foot, dx))) => s.feet[foot].x + dx,
        _ => f64::NAN,
    }
}
