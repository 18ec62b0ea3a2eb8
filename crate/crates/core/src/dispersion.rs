//! Forward model of chromatic group-velocity dispersion in a fiber.
//!
//! The relative delay `τ(λ)` is a polynomial in wavelength; the absolute
//! transit time adds a constant `base_delay`. The group velocity dispersion
//! is `D(λ) = dτ/dλ` in ns/nm.

use alloc::vec::Vec;

use crate::poly::{derivative_sign_on, Polynomial};
use crate::{Error, Interval, Result};

/// Vacuum speed of light, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, PartialEq)]
pub struct FiberDispersionModel {
    delay: Polynomial,
    gvd: Polynomial,
    domain: Interval,
    base_delay_ns: f64,
    fiber_length_m: f64,
    /// Sign of `D(λ)` over the domain.
    gvd_sign: f64,
}

/// Result of [`FiberDispersionModel::check_aliasing`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AliasingReport {
    /// Temporal spread `|τ(λmax) − τ(λmin)|` of the spectrum support, ns.
    pub spread_ns: f64,
    pub aliased: bool,
}

impl FiberDispersionModel {
    /// Builds a model from a delay polynomial `τ(λ)` (ns as a function of nm).
    ///
    /// Rejects empty domains, constant polynomials and any polynomial whose
    /// derivative vanishes or changes sign on the domain.
    pub fn new(
        delay: Polynomial,
        domain: Interval,
        base_delay_ns: f64,
        fiber_length_m: f64,
    ) -> Result<Self> {
        if !domain.is_valid() || domain.lo >= domain.hi {
            return Err(Error::invalid("wavelength_domain", "need finite λmin < λmax"));
        }
        if domain.lo <= 0.0 {
            return Err(Error::invalid("wavelength_domain", "wavelengths must be positive"));
        }
        if !delay.is_finite() {
            return Err(Error::invalid("delay_coefficients", "non-finite coefficient"));
        }
        if !base_delay_ns.is_finite() {
            return Err(Error::invalid("base_delay", "must be finite"));
        }
        if !(fiber_length_m.is_finite() && fiber_length_m >= 0.0) {
            return Err(Error::invalid("fiber_length", "must be finite and non-negative"));
        }
        if delay.is_constant() {
            return Err(Error::invalid(
                "delay_coefficients",
                "constant delay has zero dispersion and cannot resolve wavelengths",
            ));
        }
        let delay = delay.recentered(domain.midpoint());
        let gvd = delay.derivative();
        let gvd_sign = derivative_sign_on(&gvd, domain.lo, domain.hi)?;
        Ok(FiberDispersionModel {
            delay,
            gvd,
            domain,
            base_delay_ns,
            fiber_length_m,
            gvd_sign,
        })
    }

    /// Convenience constructor from plain ascending coefficients.
    pub fn from_ascending(
        coefficients: Vec<f64>,
        domain: Interval,
        base_delay_ns: f64,
        fiber_length_m: f64,
    ) -> Result<Self> {
        Self::new(
            Polynomial::from_ascending(coefficients),
            domain,
            base_delay_ns,
            fiber_length_m,
        )
    }

    /// Model whose dispersion varies linearly between two anchor points,
    /// `D(λ1) = d1` and `D(λ2) = d2`, with `τ(anchor) = anchor_delay_ns`.
    pub fn from_linear_gvd(
        (lambda1, d1): (f64, f64),
        (lambda2, d2): (f64, f64),
        anchor: f64,
        anchor_delay_ns: f64,
        domain: Interval,
    ) -> Result<Self> {
        let slope = (d2 - d1) / (lambda2 - lambda1);
        let d_anchor = d1 + slope * (anchor - lambda1);
        let delay = Polynomial::centered(
            anchor,
            alloc::vec![anchor_delay_ns, d_anchor, 0.5 * slope],
        );
        Self::new(delay, domain, 0.0, 0.0)
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    pub fn base_delay_ns(&self) -> f64 {
        self.base_delay_ns
    }

    pub fn fiber_length_m(&self) -> f64 {
        self.fiber_length_m
    }

    /// The relative delay polynomial `τ(λ) − base_delay`.
    pub fn delay_polynomial(&self) -> &Polynomial {
        &self.delay
    }

    /// `-1.0` for anomalous-style models where longer wavelengths arrive
    /// earlier, `1.0` otherwise.
    pub fn gvd_sign(&self) -> f64 {
        self.gvd_sign
    }

    fn check_wavelength(&self, lambda: f64) -> Result<()> {
        if self.domain.contains(lambda) {
            Ok(())
        } else {
            Err(Error::OutOfDomain {
                quantity: "wavelength",
                value: lambda,
                valid: self.domain,
            })
        }
    }

    /// Propagation delay in ns at wavelength `lambda` (nm).
    pub fn propagation_delay(&self, lambda: f64) -> Result<f64> {
        self.check_wavelength(lambda)?;
        Ok(self.base_delay_ns + self.delay.eval(lambda))
    }

    /// Group velocity dispersion `dτ/dλ` in ns/nm.
    pub fn gvd(&self, lambda: f64) -> Result<f64> {
        self.check_wavelength(lambda)?;
        Ok(self.gvd.eval(lambda))
    }

    /// Temporal spread of a spectrum with the given support and whether it
    /// overlaps the next pulse at `repetition_period_ns`.
    pub fn check_aliasing(
        &self,
        support: Interval,
        repetition_period_ns: f64,
    ) -> Result<AliasingReport> {
        if !(repetition_period_ns > 0.0 && repetition_period_ns.is_finite()) {
            return Err(Error::invalid("repetition_period", "must be positive"));
        }
        if !support.is_valid() {
            return Err(Error::invalid("spectrum_support", "need lo <= hi"));
        }
        let t_lo = self.propagation_delay(support.lo)?;
        let t_hi = self.propagation_delay(support.hi)?;
        let spread_ns = (t_hi - t_lo).abs();
        Ok(AliasingReport {
            spread_ns,
            aliased: spread_ns >= repetition_period_ns,
        })
    }

    /// Delay range (ns, ascending) spanned by a wavelength interval.
    pub fn delay_range(&self, support: Interval) -> Result<Interval> {
        let a = self.propagation_delay(support.lo)?;
        let b = self.propagation_delay(support.hi)?;
        Ok(Interval::new(a.min(b), a.max(b)))
    }

    /// Mean group velocity `L / T` in m/s from fiber length and base delay,
    /// when both are known.
    pub fn group_velocity(&self) -> Option<f64> {
        (self.fiber_length_m > 0.0 && self.base_delay_ns > 0.0)
            .then(|| self.fiber_length_m / (self.base_delay_ns * 1e-9))
    }

    /// Group index `c / v_g`.
    pub fn group_index(&self) -> Option<f64> {
        self.group_velocity().map(|v| SPEED_OF_LIGHT / v)
    }
}
