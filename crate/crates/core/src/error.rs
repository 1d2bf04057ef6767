//! Crate-wide error with a process exit status for scripted pipelines.

use crate::dataset::DatasetError;
use crate::evallen::EvalLenError;
use crate::evalseg::EvalError;
use crate::geometry::GeometryError;
use crate::length::LengthError;
use crate::maskops::MaskError;
use crate::synth::SynthError;

/// Exit status for invalid inputs or violated contracts.
pub const EXIT_INPUT: i32 = 2;
/// Exit status for numerical failures on otherwise valid inputs.
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Length(#[from] LengthError),
    #[error(transparent)]
    EvalSeg(#[from] EvalError),
    #[error(transparent)]
    EvalLen(#[from] EvalLenError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
    #[error("{0}")]
    Input(String),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Geometry(e) => geometry_code(e),
            Error::Length(LengthError::Geometry(e)) => geometry_code(e),
            Error::Length(LengthError::EmptySkeleton | LengthError::ZeroExtent) => EXIT_NUMERICAL,
            Error::Synth(SynthError::Geometry(e)) => geometry_code(e),
            Error::Synth(SynthError::OverlapUnsatisfiable { .. } | SynthError::Placement(_)) => EXIT_NUMERICAL,
            Error::Context { source, .. } => source.exit_code(),
            _ => EXIT_INPUT,
        }
    }
}

fn geometry_code(e: &GeometryError) -> i32 {
    match e {
        GeometryError::View { source, .. } => geometry_code(source),
        GeometryError::IllConditioned(_)
        | GeometryError::Numerical(_)
        | GeometryError::PlaneAtInfinity { .. }
        | GeometryError::NonConvergence { .. } => EXIT_NUMERICAL,
        _ => EXIT_INPUT,
    }
}
