//! Simulation and analysis of metric wave graphs built from waveguide
//! couplers: closed and open spectra, classical mixing, spectral statistics,
//! length spectra and mode localization.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod catalog;
pub mod classical;
pub mod coupler;
pub mod error;
pub mod graph;
pub mod interp;
pub mod io;
pub mod length;
pub mod localization;
pub mod measured;
pub mod open;
pub mod operator;
pub mod rmt;
pub mod scatterer;
pub mod spectral;

pub use error::{Error, Result};
pub use graph::{Dispersion, Graph, IndexModel};
pub use open::OpenGraph;
pub use scatterer::VertexScatterer;
