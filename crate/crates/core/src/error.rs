use alloc::string::String;

use crate::Interval;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{quantity} {value} outside valid interval {valid}")]
    OutOfDomain {
        quantity: &'static str,
        value: f64,
        valid: Interval,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("mapping is not strictly monotonic: derivative changes sign near {near}")]
    NonMonotonic { near: f64 },

    #[error("derivative vanishes at {at}; the time/wavelength mapping is singular there")]
    SingularMapping { at: f64 },

    #[error("underdetermined fit: {points} points cannot determine a degree {degree} polynomial")]
    Underdetermined { points: usize, degree: usize },

    #[error("calibration arrival times must be pairwise distinct (duplicate {time} ns)")]
    DuplicateAbscissa { time: f64 },

    #[error("normal equations are singular")]
    SingularSystem,

    #[error("wavelength {wavelength} nm has {count} preimages on the calibration domain")]
    AmbiguousInverse { wavelength: f64, count: usize },

    #[error("histogram has no counts")]
    EmptyHistogram,

    #[error("detection efficiency is zero at {wavelength} nm but the bin holds counts")]
    ZeroEfficiency { wavelength: f64 },

    #[error("joint spectral intensity vanishes on the whole grid")]
    DegenerateModel,

    #[error("objective has no interior minimum bracket inside {search}")]
    NoBracket { search: Interval },

    #[error("optimum {at} lies on the search boundary {search}; widen the search range")]
    BoundaryOptimum { at: f64, search: Interval },

    #[error("signal band {signal} and idler band {idler} overlap")]
    OverlappingBands { signal: Interval, idler: Interval },

    #[error("no coincidences to analyse")]
    NoEvents,
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
