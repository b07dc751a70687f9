//! Collisional decoherence of a heavy quantum particle in one dimension.
//!
//! A light particle scattering off the heavy one multiplies the heavy density
//! kernel by the collision function `I(X, X') = <S^{X'} chi | S^X chi>`. The crate
//! computes reflection/transmission amplitudes, builds that kernel, transports
//! the density matrix freely with a Peaceman–Rachford ADI scheme and checks the
//! whole chain against the exact point-interaction propagator.

pub mod collision;
pub mod diagnostics;
pub mod error;
pub mod evolution;
pub mod linalg;
pub mod oracle;
pub mod runner;
pub mod scattering;
pub mod state;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Fixed 17-significant-digit scientific notation used by every CSV writer.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}
