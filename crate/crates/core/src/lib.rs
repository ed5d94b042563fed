//! Simulation and analysis of the damped stochastic wave equation
//! ü + 2βu̇ = L_b u + Ẇ on post-critically finite self-similar fractals.
//!
//! The pipeline runs from a combinatorial fractal description
//! ([`topology`]) through renormalised energies ([`energy`]) and their
//! spectra ([`spectrum`]) to exact mode-wise sampling ([`simulator`]) and
//! second-moment analysis ([`regularity`], [`equilibrium`]).

pub mod error;
pub mod topology;
pub mod sparse;
pub mod energy;
pub mod model;
pub mod presets;
pub mod quadrature;
pub mod regression;
pub mod kernel;
pub mod spectrum;
pub mod simulator;
pub mod regularity;
pub mod equilibrium;
pub mod acceptance;

pub use error::{Error, Result};
pub use model::Model;
