//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

pub mod double_pendulum;
pub mod riccati;
