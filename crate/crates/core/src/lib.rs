//! Monte-Carlo simulation of cold atoms transiting the evanescent field of a
//! microtoroidal whispering-gallery resonator.
//!
//! The crate is organised bottom-up: [`units`] and [`config`] define the
//! parameter contract, [`mode`] and [`surface`] give the position-dependent
//! couplings and surface physics, [`cqed`] and [`quantum`] solve the
//! internal atom-cavity problem, [`trajectory`] and [`detection`] run single
//! transits with the real-time trigger, and [`ensemble`] reduces many
//! transits to averaged observables.

pub mod config;
pub mod cqed;
pub mod detection;
pub mod ensemble;
pub mod integrator;
pub mod io;
pub mod mode;
pub mod pipeline;
pub mod quantum;
pub mod surface;
pub mod trajectory;
pub mod units;
