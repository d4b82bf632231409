//! Error type shared by all library modules.

use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by raster I/O, registration, and graph solving.
#[derive(Error, Debug)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path} at {location}: {message}")]
    Parse {
        path: PathBuf,
        /// Line number for text formats, byte offset for binary ones.
        location: String,
        message: String,
    },

    #[error("unsupported raster format: {0}")]
    UnsupportedFormat(String),

    #[error("geotransform is singular (2x2 scale/skew matrix not invertible)")]
    SingularTransform,

    #[error("requested window [{u_min}..{u_max}] x [{v_min}..{v_max}] is disjoint from the raster extent")]
    OutOfBounds {
        u_min: i64,
        u_max: i64,
        v_min: i64,
        v_max: i64,
    },

    #[error("query does not project onto the reference raster")]
    NoOverlap,

    #[error("no valid pixel found (all nodata within the search limit)")]
    AllNodata,

    #[error("raster has no valid pixels")]
    NoValidPixels,

    #[error("degenerate correspondence geometry (cross-covariance rank < 2)")]
    DegenerateGeometry,

    #[error("degenerate matrix (rank < 2), cannot project to a rotation")]
    DegenerateMatrix,

    #[error("too few correspondences after rejection: {0} < 3")]
    TooFewCorrespondences(usize),

    #[error("need at least 2 rasters, got {0}")]
    NotEnoughDsms(usize),

    #[error("scene graph is disconnected: components {0:?}")]
    DisconnectedGraph(Vec<Vec<usize>>),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("no target pixel received data")]
    EmptyResult,

    #[error("no co-located pixel difference fell below the inlier threshold")]
    NoInliers,

    #[error("no raster pair overlaps after posing")]
    NoOverlappingPairs,

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(
        path: impl Into<PathBuf>,
        location: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Parse {
            path: path.into(),
            location: location.into(),
            message: message.into(),
        }
    }

    /// Process exit code used by the CLI: 1 I/O or parse, 2 registration
    /// failure, 3 graph failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Parse { .. } | Error::UnsupportedFormat(_) => 1,
            Error::NoOverlap
            | Error::AllNodata
            | Error::TooFewCorrespondences(_)
            | Error::DegenerateGeometry
            | Error::NoValidPixels => 2,
            Error::DisconnectedGraph(_) | Error::NotEnoughDsms(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
