//! Core algorithms for dispersive-fiber ("time-of-flight") single-photon
//! spectroscopy.
//!
//! A long, strongly dispersive fiber stretches a short pulse so that each
//! wavelength arrives at the detector at a different time. Recording arrival
//! times with a time-to-digital converter then measures the spectrum with a
//! single detector. This crate contains the forward model and the inverse
//! pipeline:
//!
//! - [`dispersion`]: wavelength to delay mapping, group velocity dispersion and
//!   the pulse-overlap (aliasing) check.
//! - [`calibration`]: least-squares calibration curve `λ = c(τ)`, its inverse,
//!   resolution estimates and offset re-parameterisation.
//! - [`pdc`]: a double-Gaussian joint spectral intensity for photon pairs.
//! - [`simulator`]: seeded Monte Carlo of the detection chain (jitter, TDC
//!   quantisation, efficiency, dark counts, gating).
//! - [`reconstruction`]: time histograms, peak extraction and the
//!   histogram-to-spectrum change of variables.
//! - [`jsi`]: offset recovery from energy conservation, wrong-path filtering
//!   and joint spectrum assembly.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, parallel
//! runners and the command line live in the companion `fiberspec` crate.
//!
//! Units are fixed throughout: wavelengths in nm, model-level delays in ns
//! (`f64`), event timestamps in integer picoseconds.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod calibration;
pub mod dispersion;
mod error;
pub mod jsi;
pub mod optimize;
pub mod pdc;
pub mod poly;
pub mod reconstruction;
mod rng;
pub mod simulator;

pub use error::{Error, Result};
pub use rng::Substreams;

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn is_valid(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }
}

impl core::fmt::Display for Interval {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}
