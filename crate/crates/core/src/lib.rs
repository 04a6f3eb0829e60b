//! Model-based full-shape control of a planar piezoelectric inchworm robot.
//!
//! The crate solves the static body shape under actuation, gravity and floor
//! contact ([`model`]), plans actuator voltages for target shapes and for
//! crawling under overhead roofs ([`controller`], [`optimizer`]), corrects the
//! model online from sensed shapes ([`calibration`]), and strings bent and
//! straight postures into an inchworm gait ([`gait`]). [`plant`] stands in for
//! the physical robot and its camera, and [`scenario`] wires everything into
//! reproducible runs.

pub mod calibration;
pub mod controller;
pub mod error;
pub mod gait;
pub mod io;
pub mod model;
pub mod optimizer;
pub mod par;
pub mod plant;
pub mod roofs;
pub mod scenario;

pub use error::{Error, Result};
