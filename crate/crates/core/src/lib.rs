//! Voltage collapse analysis for star DC networks with constant-power loads.
//!
//! - [`network`]: static power flow, capacity and sensitivities.
//! - [`game`]: the payoff game whose gradient play is the inflexible load model.
//! - [`dynamics`]: inflexible and stabilizer-controlled load dynamics, RK4 integration.
//! - [`equilibrium`]: closed-form enumeration of every equilibrium family.
//! - [`stability`]: Jacobians and diagonal-plus-rank-one eigenvalue classification.
//! - [`scenario`]: scenario files, simulation runs, traces and reports.

pub mod dynamics;
pub mod game;
pub mod network;
pub mod scenario;
pub mod equilibrium;
pub mod stability;
