//! Collective vibronic polaritons for an ensemble of identical molecules in
//! an optical cavity: vibrational-basis and vibronic-coupling construction,
//! polariton block Hamiltonians and photon linear response, kinetic rates
//! (radiative pumping, photon recycling, vibrational relaxation, and
//! two-photon Raman-type scattering), and a brute-force few-molecule oracle
//! that certifies the collective (occupation-number) representation against
//! first-quantized exact diagonalization.
//!
//! All energies are in atomic units. Rates are FGR-style golden-rule values
//! with Lorentzian final-state resolution.

pub mod error;
pub mod grid;
pub mod linalg;
pub mod oracle;
pub mod polariton;
pub mod rates;
pub mod vibronic;

pub use error::{ModelError, Result};
