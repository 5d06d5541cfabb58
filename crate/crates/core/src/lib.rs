//! Energy-efficient secure precoding for multi-user MISO visible light
//! communication.
//!
//! The crate covers the LoS channel and noise model, the power model, the
//! secrecy-rate and energy-efficiency metrics, a dense log-barrier solver for
//! the convexified precoder subproblem, and the Dinkelbach/CCCP design loop.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod convex;
pub mod design;
pub mod error;
pub mod geometry;
pub mod json;
pub mod power;
pub mod secrecy;

pub use config::{InitMode, SystemConfig};
pub use design::{dinkelbach_solve, SolveReport, SolveStatus, SolverOptions};
pub use error::{Error, Result};
pub use geometry::{ChannelState, DeviceConstants, LedLayout, RoomGeometry};
pub use power::PowerConstants;
pub use secrecy::Precoder;
