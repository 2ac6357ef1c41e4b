//! Numerical laboratory coupling Schramm-Loewner evolution with Liouville
//! quantum gravity: Loewner flows, Gaussian free fields, SLE martingales,
//! KPZ exponent algebra, and the conformal-welding (quantum zipper)
//! experiment.

pub mod analytic;
pub mod driver;
pub mod error;
pub mod gff;
pub mod io;
pub mod loewner;
pub mod martingale;
pub mod mc;
pub mod zipper;

pub use error::{LabError, Result};
