//! Contact-consistent LQR control for planar floating-base legged robots.

pub mod contact;
pub mod dynamics;
pub mod error;
pub mod kinematics;
pub mod linearize;
pub mod lqr;
pub mod model;
pub mod planner;
pub mod plot;
pub mod scheduler;
pub mod sim;
pub mod spatial;
pub mod suite;

pub use error::{Error, Result};
pub use model::{FullState, RobotModel};
