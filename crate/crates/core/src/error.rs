//! Error type shared by every module of the laboratory.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    /// A parameter is outside the range where the quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// Evaluation requested at a singular point (seed, boundary, coincident pair).
    #[error("singularity: {0}")]
    Singularity(String),

    /// A flow state was used after its tracked point was swallowed.
    #[error("lifecycle error: {0}")]
    Lifecycle(String),

    /// A geometric precondition failed (circle exits the grid, slit meets the
    /// quadrature rectangle, image point outside the sampled box).
    #[error("geometry error: {0}")]
    Geometry(String),

    /// Invalid experiment or sampler configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Operation requires the other boundary condition.
    #[error("boundary-condition error: {0}")]
    BoundaryCondition(String),

    /// No welded partner exists for the requested boundary point.
    #[error("no welded partner: {0}")]
    NoPartner(String),

    /// Two algebraically identical routes disagreed beyond tolerance.
    #[error("internal consistency fault: {0}")]
    Inconsistency(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;
