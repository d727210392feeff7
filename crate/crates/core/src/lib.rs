//! Design and validation of nonlinear tuned vibration absorbers (NLTVA) for
//! the suppression of limit cycle oscillations of a Van der Pol-Duffing
//! oscillator.

pub mod cli;
pub mod continuation;
pub mod error;
pub mod io;
pub mod lco;
pub mod model;
pub mod nes;
pub mod normal_form;
pub mod ode;
pub mod stability;

pub use error::{Error, Result};
pub use model::{DimensionlessSystem, PhysicalSystem, StateVector};
