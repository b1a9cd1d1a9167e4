//! Modular curiosity-driven goal exploration on a planar arm with two balls.
//!
//! - [`sim`]: the Arm-2-Balls environment, renderer and dataset writer.
//! - [`goalspace`]: encoders, goal modules, goal samplers and costs.
//! - [`imgep`]: nearest-neighbour meta-policy, learning-progress interest
//!   and the exploration loop.
//! - [`harness`]: coverage metrics, experiment runner and plots.

pub mod goalspace;
pub mod harness;
pub mod imgep;
pub mod scripted;
pub mod sim;
