//! Simulation and verification of one-dimensional port-Hamiltonian systems of
//! order one or two, closed by monotone (possibly multi-valued) boundary
//! feedback or by a finite-dimensional dissipative controller.
//!
//! The pipeline is: [`model::build_model`] → [`discrete::build_discrete`] →
//! [`simulate::ClosedLoop`], with [`stability`] supplying the diagnostics and
//! [`scenarios`] a catalog of ready-made setups.

pub mod densekit;
pub mod discrete;
pub mod model;
pub mod monotone;
pub mod output;
pub mod rng;
pub mod scenarios;
mod serde_mat;
pub mod simulate;
pub mod stability;
pub mod transfer;

pub use densekit::{CMat, LinalgError, Mat};
pub use discrete::{build_discrete, DiscreteIoMaps, DiscreteSystem, Grid};
pub use model::{build_model, HamiltonianDensity, ModelSpec, PhsModel, PortSpec, PortVector, ScalarProfile};
pub use monotone::MonotoneMap;
pub use nalgebra::DVector;
pub use num_complex::Complex64;
pub use simulate::{ClosedLoop, Controller, EnergyTrace, Feedback, Stepper};
pub use scenarios::{instantiate, list_scenarios, Instance, OutcomeTag, Overrides, Scenario};
pub use stability::{estimate_decay, ConditionReport, DecayFit, Profile};
