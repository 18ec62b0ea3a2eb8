//! Empirical calibration curve `λ = c(τ)`.
//!
//! Reference spectra with known central wavelength are sent through the
//! fiber and the peak of each arrival-time histogram is paired with that
//! wavelength. A least-squares polynomial through those pairs maps any
//! arrival time back to a wavelength. The curve is only defined up to a
//! common time offset, which [`CalibrationCurve::offset_shift`] applies.

use alloc::vec::Vec;

use crate::dispersion::FiberDispersionModel;
use crate::optimize::bisect;
use crate::poly::{derivative_sign_on, fit_least_squares, Polynomial, MONOTONICITY_SAMPLES};
use crate::{Error, Interval, Result};

/// Default calibration polynomial degree.
pub const DEFAULT_DEGREE: usize = 2;

/// Absolute tolerance of [`CalibrationCurve::time_at`], ns.
pub const INVERSE_TOLERANCE_NS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationPoint {
    /// Central wavelength from a trusted reference spectrometer, nm.
    pub reference_wavelength: f64,
    /// Peak of the arrival-time histogram, ns.
    pub arrival_time: f64,
}

impl CalibrationPoint {
    pub const fn new(reference_wavelength: f64, arrival_time: f64) -> Self {
        CalibrationPoint {
            reference_wavelength,
            arrival_time,
        }
    }
}

/// Whether [`fit_calibration_with`] may return a curve that is not strictly
/// monotonic on its time domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Monotonicity {
    /// A turning point inside the domain is an error.
    #[default]
    Require,
    /// Keep the curve and report the turning point through
    /// [`CalibrationCurve::monotonicity_violation`].
    Allow,
}

/// A wavelength evaluated from an arrival time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub wavelength: f64,
    /// Set when the time lies outside the curve's validity domain.
    pub extrapolated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationCurve {
    poly: Polynomial,
    slope: Polynomial,
    time_domain: Interval,
    residuals: Vec<f64>,
    violation: Option<f64>,
}

impl CalibrationCurve {
    /// Wraps an existing polynomial `c(τ)` valid on `time_domain`.
    ///
    /// Monotonicity is checked and recorded but not enforced; callers that
    /// need a strict spectrometer mapping check [`Self::is_monotonic`].
    pub fn new(poly: Polynomial, time_domain: Interval) -> Result<Self> {
        Self::with_residuals(poly, time_domain, Vec::new())
    }

    /// As [`Self::new`], additionally recording per-point fit residuals (nm).
    pub fn with_residuals(
        poly: Polynomial,
        time_domain: Interval,
        residuals: Vec<f64>,
    ) -> Result<Self> {
        if !time_domain.is_valid() {
            return Err(Error::invalid("time_domain", "need finite τmin <= τmax"));
        }
        if !poly.is_finite() {
            return Err(Error::invalid("coefficients", "non-finite coefficient"));
        }
        if poly.is_constant() {
            return Err(Error::invalid(
                "coefficients",
                "constant curve cannot map time to wavelength",
            ));
        }
        let poly = poly.recentered(time_domain.midpoint());
        let slope = poly.derivative();
        let violation = match derivative_sign_on(&slope, time_domain.lo, time_domain.hi) {
            Ok(_) => None,
            Err(Error::NonMonotonic { near }) => Some(near),
            Err(e) => return Err(e),
        };
        Ok(CalibrationCurve {
            poly,
            slope,
            time_domain,
            residuals,
            violation,
        })
    }

    pub fn polynomial(&self) -> &Polynomial {
        &self.poly
    }

    /// Ascending coefficients of `c(τ)` in plain powers of τ (ns).
    pub fn coefficients(&self) -> Vec<f64> {
        self.poly.ascending()
    }

    pub fn degree(&self) -> usize {
        self.poly.degree()
    }

    pub fn time_domain(&self) -> Interval {
        self.time_domain
    }

    /// Fit residuals `λ_ref − c(τ)` per calibration point, nm.
    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    pub fn is_monotonic(&self) -> bool {
        self.violation.is_none()
    }

    /// Approximate location of the first slope sign change on the domain.
    pub fn monotonicity_violation(&self) -> Option<f64> {
        self.violation
    }

    /// `c(τ)` with an extrapolation flag.
    pub fn wavelength_at(&self, tau: f64) -> Evaluation {
        Evaluation {
            wavelength: self.poly.eval(tau),
            extrapolated: !self.time_domain.contains(tau),
        }
    }

    /// `dc/dτ` in nm/ns.
    pub fn slope_at(&self, tau: f64) -> f64 {
        self.slope.eval(tau)
    }

    /// Wavelength range `c(time_domain)`.
    pub fn wavelength_range(&self) -> Interval {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &t in self.monotone_breaks().iter() {
            let v = self.poly.eval(t);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Interval::new(lo, hi)
    }

    /// Domain end points plus interior turning points, ascending.
    fn monotone_breaks(&self) -> Vec<f64> {
        let Interval { lo, hi } = self.time_domain;
        let mut breaks = Vec::with_capacity(4);
        breaks.push(lo);
        if self.violation.is_some() {
            let n = MONOTONICITY_SAMPLES;
            let at = |i: usize| lo + (hi - lo) * i as f64 / (n - 1) as f64;
            let mut prev = self.slope.eval(lo);
            for i in 1..n {
                let x = at(i);
                let d = self.slope.eval(x);
                if d.signum() != prev.signum() || d == 0.0 {
                    let root = bisect(|t| self.slope.eval(t), at(i - 1), x, 1e-12).unwrap_or(x);
                    if root > *breaks.last().unwrap_or(&lo) && root < hi {
                        breaks.push(root);
                    }
                }
                prev = d;
            }
        }
        breaks.push(hi);
        breaks
    }

    /// Inverse lookup: the unique `τ` in the time domain with `c(τ) = λ`.
    ///
    /// Each monotone piece of the curve is searched by bisection. A
    /// wavelength with more than one preimage (possible only on a curve that
    /// is not monotonic) is reported as [`Error::AmbiguousInverse`].
    pub fn time_at(&self, lambda: f64) -> Result<f64> {
        let breaks = self.monotone_breaks();
        let mut roots: Vec<f64> = Vec::with_capacity(2);
        for w in breaks.windows(2) {
            if let Some(r) = bisect(
                |t| self.poly.eval(t) - lambda,
                w[0],
                w[1],
                INVERSE_TOLERANCE_NS,
            ) {
                if roots.last().is_none_or(|&last| (r - last).abs() > 1e-6) {
                    roots.push(r);
                }
            }
        }
        match roots.as_slice() {
            [] => Err(Error::OutOfDomain {
                quantity: "wavelength",
                value: lambda,
                valid: self.wavelength_range(),
            }),
            [t] => Ok(*t),
            _ => Err(Error::AmbiguousInverse {
                wavelength: lambda,
                count: roots.len(),
            }),
        }
    }

    /// Spectral resolution at `lambda` for Gaussian timing jitter of
    /// `timing_sigma_ns`: `σ · |dc/dτ| = σ / |dτ/dλ|`.
    pub fn resolution_at(&self, lambda: f64, timing_sigma_ns: f64) -> Result<f64> {
        if !(timing_sigma_ns > 0.0 && timing_sigma_ns.is_finite()) {
            return Err(Error::invalid("timing_sigma", "must be positive"));
        }
        let tau = self.time_at(lambda)?;
        let slope = self.slope_at(tau);
        if slope == 0.0 {
            return Err(Error::SingularMapping { at: tau });
        }
        Ok(timing_sigma_ns * slope.abs())
    }

    /// The re-parameterised curve `c'(τ) = c(τ + δτ)`; the validity domain
    /// moves by `−δτ`.
    pub fn offset_shift(&self, delta_ns: f64) -> CalibrationCurve {
        CalibrationCurve {
            poly: self.poly.with_shifted_argument(delta_ns),
            slope: self.slope.with_shifted_argument(delta_ns),
            time_domain: Interval::new(
                self.time_domain.lo - delta_ns,
                self.time_domain.hi - delta_ns,
            ),
            residuals: self.residuals.clone(),
            violation: self.violation.map(|t| t - delta_ns),
        }
    }
}

/// Least-squares calibration of the given degree; a curve that is not
/// strictly monotonic on its domain is an error.
pub fn fit_calibration(points: &[CalibrationPoint], degree: usize) -> Result<CalibrationCurve> {
    fit_calibration_with(points, degree, Monotonicity::Require)
}

/// Least-squares calibration with an explicit monotonicity policy.
pub fn fit_calibration_with(
    points: &[CalibrationPoint],
    degree: usize,
    monotonicity: Monotonicity,
) -> Result<CalibrationCurve> {
    if degree == 0 {
        return Err(Error::invalid("degree", "must be at least 1"));
    }
    if points.len() < degree + 1 {
        return Err(Error::Underdetermined {
            points: points.len(),
            degree,
        });
    }
    for p in points {
        if !(p.reference_wavelength > 0.0 && p.reference_wavelength.is_finite()) {
            return Err(Error::invalid("reference_wavelength", "must be positive"));
        }
        if !p.arrival_time.is_finite() {
            return Err(Error::invalid("arrival_time", "must be finite"));
        }
    }
    let mut times: Vec<f64> = points.iter().map(|p| p.arrival_time).collect();
    times.sort_by(f64::total_cmp);
    if let Some(w) = times.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::DuplicateAbscissa { time: w[0] });
    }

    let xs: Vec<f64> = points.iter().map(|p| p.arrival_time).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.reference_wavelength).collect();
    let poly = fit_least_squares(&xs, &ys, degree)?;
    let residuals = points
        .iter()
        .map(|p| p.reference_wavelength - poly.eval(p.arrival_time))
        .collect();
    let domain = Interval::new(times[0], times[times.len() - 1]);
    let curve = CalibrationCurve::with_residuals(poly, domain, residuals)?;
    if let (Monotonicity::Require, Some(near)) = (monotonicity, curve.violation) {
        return Err(Error::NonMonotonic { near });
    }
    Ok(curve)
}

/// `count` noiseless calibration points spread evenly over `band`, taken
/// from a dispersion model. Useful for synthetic closure tests.
pub fn points_from_model(
    fiber: &FiberDispersionModel,
    band: Interval,
    count: usize,
) -> Result<Vec<CalibrationPoint>> {
    if count < 2 || !band.is_valid() || band.width() <= 0.0 {
        return Err(Error::invalid("band", "need lo < hi and at least two points"));
    }
    (0..count)
        .map(|k| {
            let l = band.lo + band.width() * k as f64 / (count - 1) as f64;
            Ok(CalibrationPoint::new(l, fiber.propagation_delay(l)?))
        })
        .collect()
}
