//! Single-photon transport through a waveguide coupled to two qubits that
//! share an ultrastrongly coupled cavity mode.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod basis;
pub mod config;
pub mod hamiltonian;
pub mod io;
pub mod oracle;
pub mod params;
pub mod scattering;
pub mod spectrum;

pub use basis::{BasisSet, BasisState, Qubit};
pub use config::RunConfig;
pub use hamiltonian::HermitianMatrix;
pub use params::{RawParams, SystemParams};
pub use scattering::{AmplitudeSet, Scatterer, SpectrumTable};
