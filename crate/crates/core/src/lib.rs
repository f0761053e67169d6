//! Photoluminescence lineshapes of point defects from harmonic lattice data.
//!
//! The pipeline runs from force constants and a pair of relaxed geometries to
//! Huang-Rhys factors, the electron-phonon spectral density, and the emission
//! lineshape obtained with the generating-function method. Supporting pieces
//! cover force-constant regression, supercell band unfolding and the
//! single-barrier thermal quenching fit used for temperature-dependent data.

pub mod ifcfit;
pub mod model;
pub mod phonons;
pub mod springs;
pub mod thermal;
pub mod units;
pub mod vibronic;

pub use model::{AtomSite, CrystalStructure, ForceConstants, GeometryPair, ModelError, Spectrum};
pub use phonons::{PhononBasis, PhononError, UnfoldedWeights};
pub use thermal::{ArrheniusFit, ThermalError, ThermalPoint, ThermalSeries};
pub use vibronic::{LineshapeConfig, VibronicCoupling, VibronicError};
