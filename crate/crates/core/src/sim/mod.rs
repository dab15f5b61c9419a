//! Deterministic closed-loop simulation: physics, sensing, scenarios,
//! traces and metrics.

pub mod filter;
pub mod metrics;
pub mod physics;
pub mod run;
pub mod scenario;
pub mod trace;

pub use filter::LowPass;
pub use metrics::{metrics, Metrics};
pub use physics::{step, Plant, StepEvents};
pub use run::{prepare, run_prepared, run_scenario, Prepared};
pub use scenario::{Disturbance, FilterConfig, LibrarySpec, NoiseConfig, ReferenceMode, Scenario};
pub use trace::{SwitchRecord, Trace, TraceSample};
