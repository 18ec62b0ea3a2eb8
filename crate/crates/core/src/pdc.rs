//! Synthetic photon-pair source.
//!
//! The joint spectral intensity is a double Gaussian: a pump envelope in the
//! energy coordinate `1/λs + 1/λi` (centred on `1/λp`, so energy conservation
//! is exact on the ridge) times a phase-matching factor in the difference
//! coordinate `(λs − λs0) − (λi − λi0)`. Both widths are intensity FWHMs.

use alloc::vec::Vec;
use core::ops::Range;

use rand::Rng;

use crate::{Error, Interval, Result, Substreams};

const FOUR_LN2: f64 = 4.0 * core::f64::consts::LN_2;
/// FWHM / σ for a Gaussian.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;

/// Grid resolution used to bound the JSI for rejection sampling.
const ENVELOPE_GRID: usize = 257;
/// Partner-axis samples for marginal integration.
pub const MARGINAL_POINTS: usize = 1025;

/// Purpose tag of the pair draw inside a pulse's random substream.
pub const PURPOSE_PAIR: u32 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    Signal,
    Idler,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointSpectralParams {
    pub pump_center: f64,
    pub pump_fwhm: f64,
    pub signal_center: f64,
    pub idler_center: f64,
    pub phasematch_width: f64,
    pub signal_range: Interval,
    pub idler_range: Interval,
    /// Allowed `|1/λs0 + 1/λi0 − 1/λp|`, nm⁻¹.
    pub consistency_tolerance: f64,
    /// Overall intensity scale (arbitrary units).
    pub scale: f64,
}

impl Default for JointSpectralParams {
    /// 765 nm pump with 1.9 nm FWHM, pairs at 1544 nm / 1517 nm.
    fn default() -> Self {
        JointSpectralParams {
            pump_center: 765.0,
            pump_fwhm: 1.9,
            signal_center: 1544.0,
            idler_center: 1517.0,
            phasematch_width: 2.0,
            signal_range: Interval::new(1534.0, 1554.0),
            idler_range: Interval::new(1507.0, 1527.0),
            consistency_tolerance: 5e-7,
            scale: 1.0,
        }
    }
}

/// Energy-conservation residual `1/λp − 1/λs − 1/λi`, nm⁻¹.
pub fn energy_residual(pump: f64, signal: f64, idler: f64) -> f64 {
    1.0 / pump - 1.0 / signal - 1.0 / idler
}

/// Band of `1/λs + 1/λi` values covered by a pump of FWHM `pump_fwhm`
/// around `pump_center`: `[1/(λp + f/2), 1/(λp − f/2)]`.
pub fn pump_energy_band(pump_center: f64, pump_fwhm: f64) -> Interval {
    Interval::new(
        1.0 / (pump_center + 0.5 * pump_fwhm),
        1.0 / (pump_center - 0.5 * pump_fwhm),
    )
}

/// Second moments of the linearised double-Gaussian JSI.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairMoments {
    pub mean_signal: f64,
    pub mean_idler: f64,
    pub sigma_signal: f64,
    pub sigma_idler: f64,
    pub covariance: f64,
    pub correlation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointSpectralModel {
    params: JointSpectralParams,
    /// FWHM of the pump envelope in the energy coordinate, nm⁻¹.
    energy_fwhm: f64,
    /// Upper bound of the normalised shape over the grid domain.
    envelope: f64,
}

impl JointSpectralModel {
    pub fn new(params: JointSpectralParams) -> Result<Self> {
        let p = &params;
        for (name, v) in [
            ("pump_center", p.pump_center),
            ("signal_center", p.signal_center),
            ("idler_center", p.idler_center),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, "must be positive"));
            }
        }
        for (name, v) in [
            ("pump_fwhm", p.pump_fwhm),
            ("phasematch_width", p.phasematch_width),
            ("scale", p.scale),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, "must be positive and finite"));
            }
        }
        if p.pump_fwhm >= 2.0 * p.pump_center {
            return Err(Error::invalid("pump_fwhm", "must be below twice the pump wavelength"));
        }
        for (name, r) in [("signal_range", p.signal_range), ("idler_range", p.idler_range)] {
            if !r.is_valid() || r.lo <= 0.0 || r.width() <= 0.0 {
                return Err(Error::invalid(name, "need 0 < lo < hi"));
            }
        }
        let residual = energy_residual(p.pump_center, p.signal_center, p.idler_center).abs();
        if !(residual <= p.consistency_tolerance) {
            return Err(Error::invalid(
                "signal_center",
                alloc::format!(
                    "1/λs + 1/λi misses 1/λp by {residual:e} nm⁻¹ (tolerance {:e})",
                    p.consistency_tolerance
                ),
            ));
        }
        let band = pump_energy_band(p.pump_center, p.pump_fwhm);
        let mut model = JointSpectralModel {
            params,
            energy_fwhm: band.width(),
            envelope: 0.0,
        };
        model.envelope = model.grid_maximum();
        Ok(model)
    }

    pub fn params(&self) -> &JointSpectralParams {
        &self.params
    }

    pub fn grid_domain(&self) -> (Interval, Interval) {
        (self.params.signal_range, self.params.idler_range)
    }

    /// FWHM of the pump envelope in `1/λs + 1/λi`, nm⁻¹.
    pub fn energy_fwhm(&self) -> f64 {
        self.energy_fwhm
    }

    /// Standard deviation of the pump envelope in `1/λs + 1/λi`, nm⁻¹.
    pub fn energy_sigma(&self) -> f64 {
        self.energy_fwhm / FWHM_PER_SIGMA
    }

    /// Peak-normalised intensity (scale excluded), defined everywhere.
    pub fn shape(&self, signal: f64, idler: f64) -> f64 {
        let p = &self.params;
        let u = (1.0 / signal + 1.0 / idler - 1.0 / p.pump_center) / self.energy_fwhm;
        let d = ((signal - p.signal_center) - (idler - p.idler_center)) / p.phasematch_width;
        libm::exp(-FOUR_LN2 * (u * u + d * d))
    }

    /// `|F(λs, λi)|²` in arbitrary units.
    pub fn jsi_value(&self, signal: f64, idler: f64) -> Result<f64> {
        let (s, i) = self.grid_domain();
        if !s.contains(signal) {
            return Err(Error::OutOfDomain {
                quantity: "signal wavelength",
                value: signal,
                valid: s,
            });
        }
        if !i.contains(idler) {
            return Err(Error::OutOfDomain {
                quantity: "idler wavelength",
                value: idler,
                valid: i,
            });
        }
        Ok(self.params.scale * self.shape(signal, idler))
    }

    fn grid_maximum(&self) -> f64 {
        let (s, i) = self.grid_domain();
        let n = ENVELOPE_GRID;
        let mut best = 0.0_f64;
        for a in 0..n {
            let ls = s.lo + s.width() * a as f64 / (n - 1) as f64;
            for b in 0..n {
                let li = i.lo + i.width() * b as f64 / (n - 1) as f64;
                best = best.max(self.shape(ls, li));
            }
        }
        best
    }

    /// Bound used by the rejection sampler: the grid maximum padded by 2 %
    /// for peaks falling between grid nodes, capped at the analytic
    /// maximum of 1.
    pub fn sampling_envelope(&self) -> f64 {
        (self.envelope * 1.02).min(1.0)
    }

    /// One pair drawn from the normalised JSI by rejection against a uniform
    /// proposal over the grid domain.
    ///
    /// The model must not be degenerate (see [`Self::sample_pairs`]).
    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let (s, i) = self.grid_domain();
        let bound = self.sampling_envelope();
        loop {
            let ls = s.lo + s.width() * rng.random::<f64>();
            let li = i.lo + i.width() * rng.random::<f64>();
            if rng.random::<f64>() * bound < self.shape(ls, li) {
                return (ls, li);
            }
        }
    }

    /// `count` pairs, deterministic for a given seed.
    pub fn sample_pairs(&self, count: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
        self.sample_pairs_range(0..count as u64, seed)
    }

    /// Pairs with indices in `range`; concatenating consecutive ranges
    /// reproduces [`Self::sample_pairs`] exactly.
    pub fn sample_pairs_range(&self, range: Range<u64>, seed: u64) -> Result<Vec<(f64, f64)>> {
        if self.envelope <= 0.0 {
            return Err(Error::DegenerateModel);
        }
        let streams = Substreams::new(seed);
        Ok(range
            .map(|k| self.sample_pair(&mut streams.stream(k, PURPOSE_PAIR)))
            .collect())
    }

    /// Marginal spectrum of one arm on `grid`: trapezoid integral of the JSI
    /// over the partner's full grid range.
    pub fn marginal_spectrum(&self, arm: Arm, grid: &[f64]) -> Result<Vec<f64>> {
        let (s, i) = self.grid_domain();
        let (own, partner) = match arm {
            Arm::Signal => (s, i),
            Arm::Idler => (i, s),
        };
        if let Some(&bad) = grid.iter().find(|&&l| !own.contains(l)) {
            return Err(Error::OutOfDomain {
                quantity: "marginal grid wavelength",
                value: bad,
                valid: own,
            });
        }
        let n = MARGINAL_POINTS;
        let h = partner.width() / (n - 1) as f64;
        Ok(grid
            .iter()
            .map(|&l| {
                let mut acc = 0.0;
                for k in 0..n {
                    let q = partner.lo + h * k as f64;
                    let v = match arm {
                        Arm::Signal => self.shape(l, q),
                        Arm::Idler => self.shape(q, l),
                    };
                    acc += if k == 0 || k == n - 1 { 0.5 * v } else { v };
                }
                self.params.scale * acc * h
            })
            .collect())
    }

    /// Moments of the pair distribution with the energy and difference
    /// coordinates linearised around the centre wavelengths. Grid truncation
    /// is ignored.
    pub fn analytic_moments(&self) -> PairMoments {
        let p = &self.params;
        let a = p.signal_center * p.signal_center;
        let b = p.idler_center * p.idler_center;
        let k = 1.0 / (1.0 / a + 1.0 / b);
        let su = self.energy_sigma();
        let sd = p.phasematch_width / FWHM_PER_SIGMA;
        // Ridge peak: u = 0 and d = 0 simultaneously.
        let shift = k * energy_residual(p.pump_center, p.signal_center, p.idler_center);
        let var_s = k * k * (sd * sd / (b * b) + su * su);
        let var_i = k * k * (su * su + sd * sd / (a * a));
        let cov = k * k * (su * su - sd * sd / (a * b));
        PairMoments {
            mean_signal: p.signal_center - shift,
            mean_idler: p.idler_center - shift,
            sigma_signal: libm::sqrt(var_s),
            sigma_idler: libm::sqrt(var_i),
            covariance: cov,
            correlation: cov / libm::sqrt(var_s * var_i),
        }
    }

    /// The same source with signal and idler roles exchanged.
    pub fn swapped(&self) -> Result<Self> {
        let p = self.params;
        JointSpectralModel::new(JointSpectralParams {
            signal_center: p.idler_center,
            idler_center: p.signal_center,
            signal_range: p.idler_range,
            idler_range: p.signal_range,
            ..p
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn reference_source() -> JointSpectralModel {
        JointSpectralModel::new(JointSpectralParams::default()).unwrap()
    }

    /// Midpoint-rule integral of the shape over the grid rectangle together
    /// with the first and second moments, independent of the model's own
    /// integration helpers.
    fn quadrature(m: &JointSpectralModel, n: usize) -> (f64, f64, f64, f64, f64, f64) {
        let (s, i) = m.grid_domain();
        let (hs, hi) = (s.width() / n as f64, i.width() / n as f64);
        let (mut z, mut ms, mut mi, mut ss, mut ii, mut si) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for a in 0..n {
            let x = s.lo + hs * (a as f64 + 0.5);
            for b in 0..n {
                let y = i.lo + hi * (b as f64 + 0.5);
                let w = m.shape(x, y) * hs * hi;
                z += w;
                ms += w * x;
                mi += w * y;
                ss += w * x * x;
                ii += w * y * y;
                si += w * x * y;
            }
        }
        (z, ms / z, mi / z, ss / z, ii / z, si / z)
    }

    #[test]
    fn nominal_centres_are_consistent_with_pump() {
        let r = energy_residual(765.0, 1544.0, 1517.0);
        // 583 / (765 · 1544 · 1517) exactly.
        assert!((r - 583.0 / 1_791_819_720.0).abs() < 1e-18);
        assert!(r > 0.0 && r < 5e-7);
    }

    #[test]
    fn inconsistent_centres_are_rejected() {
        let err = JointSpectralModel::new(JointSpectralParams {
            idler_center: 1520.0,
            ..Default::default()
        })
        .unwrap_err();
        assert!(matches!(err, Error::InvalidParameter { name: "signal_center", .. }));
    }

    #[test]
    fn nonpositive_widths_are_rejected() {
        for p in [
            JointSpectralParams { pump_fwhm: 0.0, ..Default::default() },
            JointSpectralParams { phasematch_width: -1.0, ..Default::default() },
        ] {
            assert!(JointSpectralModel::new(p).is_err());
        }
    }

    #[test]
    fn value_at_nominal_centres_is_near_the_grid_maximum() {
        let m = reference_source();
        let at_centre = m.jsi_value(1544.0, 1517.0).unwrap();
        // Fine-grid search oracle for the global maximum.
        let (mut best, mut arg) = (0.0, (0.0, 0.0));
        let n = 801;
        for a in 0..n {
            let x = 1534.0 + 20.0 * a as f64 / (n - 1) as f64;
            for b in 0..n {
                let y = 1507.0 + 20.0 * b as f64 / (n - 1) as f64;
                let v = m.jsi_value(x, y).unwrap();
                if v > best {
                    best = v;
                    arg = (x, y);
                }
            }
        }
        // The nominal centres miss exact energy conservation by 3.25e-7 nm⁻¹,
        // which costs exp(-4 ln2 (3.25e-7 / 3.25e-6)^2) ≈ 0.973 of the peak.
        let expected_ratio = libm::exp(-FOUR_LN2 * libm::pow(3.2537e-7 / m.energy_fwhm(), 2.0));
        assert!((at_centre / best - expected_ratio).abs() < 2e-3, "{}", at_centre / best);
        assert!((arg.0 - 1544.0).abs() < 0.5 && (arg.1 - 1517.0).abs() < 0.5, "{arg:?}");
    }

    #[test]
    fn exact_ridge_point_is_the_peak() {
        // With λi = 2 λp (degenerate) and λs = 2 λp, both factors peak.
        let m = JointSpectralModel::new(JointSpectralParams {
            signal_center: 1530.0,
            idler_center: 1530.0,
            signal_range: Interval::new(1520.0, 1540.0),
            idler_range: Interval::new(1520.0, 1540.0),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(m.jsi_value(1530.0, 1530.0).unwrap(), 1.0);
    }

    #[test]
    fn far_detuning_is_suppressed() {
        let p = JointSpectralParams {
            signal_range: Interval::new(1500.0, 1600.0),
            ..Default::default()
        };
        let m = JointSpectralModel::new(p).unwrap();
        // Five pump FWHMs of detuning mapped onto the signal arm.
        let detune = 5.0 * 1.9 * (1544.0f64 / 765.0).powi(2);
        let v = m.jsi_value(1544.0 + detune, 1517.0).unwrap();
        assert!(v < 1e-4 * m.jsi_value(1544.0, 1517.0).unwrap());
        assert!(m.jsi_value(1400.0, 1517.0).is_err());
    }

    #[test]
    fn swapping_roles_transposes() {
        let m = reference_source();
        let t = m.swapped().unwrap();
        for (s, i) in [(1540.0, 1510.0), (1544.0, 1517.0), (1550.3, 1522.1)] {
            assert_eq!(m.jsi_value(s, i).unwrap(), t.jsi_value(i, s).unwrap());
        }
    }

    #[test]
    fn sampling_is_deterministic_and_chunkable() {
        let m = reference_source();
        assert!(m.sample_pairs(0, 1).unwrap().is_empty());
        let all = m.sample_pairs(200, 9).unwrap();
        assert_eq!(all, m.sample_pairs(200, 9).unwrap());
        let mut parts = m.sample_pairs_range(0..77, 9).unwrap();
        parts.extend(m.sample_pairs_range(77..200, 9).unwrap());
        assert_eq!(all, parts);
        assert_ne!(all, m.sample_pairs(200, 10).unwrap());
    }

    #[test]
    fn scale_does_not_change_samples_or_marginal_peaks() {
        let m = reference_source();
        let big = JointSpectralModel::new(JointSpectralParams { scale: 37.5, ..Default::default() })
            .unwrap();
        assert_eq!(m.sample_pairs(500, 3).unwrap(), big.sample_pairs(500, 3).unwrap());
        let grid: Vec<f64> = (0..201).map(|k| 1534.0 + 0.1 * k as f64).collect();
        let argmax = |v: &[f64]| {
            v.iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0
        };
        let a = m.marginal_spectrum(Arm::Signal, &grid).unwrap();
        let b = big.marginal_spectrum(Arm::Signal, &grid).unwrap();
        assert_eq!(argmax(&a), argmax(&b));
    }

    #[test]
    fn degenerate_model_cannot_be_sampled() {
        // Grid far from the ridge: the shape underflows to zero everywhere.
        let m = JointSpectralModel::new(JointSpectralParams {
            signal_range: Interval::new(1300.0, 1310.0),
            idler_range: Interval::new(1300.0, 1310.0),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(m.sample_pairs(1, 0).unwrap_err(), Error::DegenerateModel);
    }

    #[test]
    fn sample_mean_energy_matches_pump() {
        let m = reference_source();
        let pairs = m.sample_pairs(100_000, 11).unwrap();
        let e: Vec<f64> = pairs.iter().map(|(s, i)| 1.0 / s + 1.0 / i).collect();
        let n = e.len() as f64;
        let mean = e.iter().sum::<f64>() / n;
        let sd = libm::sqrt(e.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0));
        let se = sd / libm::sqrt(n);
        assert!((mean - 1.0 / 765.0).abs() < 3.0 * se, "{} vs {}", mean, 1.0 / 765.0);
    }

    #[test]
    fn energy_ridge_width_matches_pump() {
        let m = reference_source();
        let pairs = m.sample_pairs(1_000_000, 12).unwrap();
        let e: Vec<f64> = pairs.iter().map(|(s, i)| 1.0 / s + 1.0 / i).collect();
        let n = e.len() as f64;
        let mean = e.iter().sum::<f64>() / n;
        let sd = libm::sqrt(e.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0));
        let rel = (sd - m.energy_sigma()).abs() / m.energy_sigma();
        assert!(rel < 0.05, "ridge sd {sd:e} vs {:e}", m.energy_sigma());
    }

    #[test]
    fn sample_histogram_passes_chi_square() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let m = reference_source();
        let pairs = m.sample_pairs(1_000_000, 5).unwrap();
        let n = 64;
        let (s, i) = m.grid_domain();
        let (ws, wi) = (s.width() / n as f64, i.width() / n as f64);
        let mut observed = vec![0.0; n * n];
        for (x, y) in &pairs {
            let a = (((x - s.lo) / ws) as usize).min(n - 1);
            let b = (((y - i.lo) / wi) as usize).min(n - 1);
            observed[a * n + b] += 1.0;
        }
        // Expected probabilities by 6x6 sub-cell midpoint quadrature per bin.
        let sub = 6;
        let mut expected = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                let mut acc = 0.0;
                for p in 0..sub {
                    for q in 0..sub {
                        let x = s.lo + ws * (a as f64 + (p as f64 + 0.5) / sub as f64);
                        let y = i.lo + wi * (b as f64 + (q as f64 + 0.5) / sub as f64);
                        acc += m.shape(x, y);
                    }
                }
                expected[a * n + b] = acc;
            }
        }
        let total: f64 = expected.iter().sum();
        let count = pairs.len() as f64;
        let (mut chi2, mut dof) = (0.0, 0usize);
        let (mut pool_o, mut pool_e) = (0.0, 0.0);
        for (o, e) in observed.iter().zip(&expected) {
            let e = e / total * count;
            if e >= 5.0 {
                chi2 += (o - e) * (o - e) / e;
                dof += 1;
            } else {
                pool_o += o;
                pool_e += e;
            }
        }
        if pool_e > 0.0 {
            chi2 += (pool_o - pool_e) * (pool_o - pool_e) / pool_e;
            dof += 1;
        }
        let dist = ChiSquared::new((dof - 1) as f64).unwrap();
        let p = 1.0 - dist.cdf(chi2);
        assert!(p > 1e-3, "chi2 = {chi2} over {dof} cells, p = {p}");
    }

    #[test]
    fn marginal_peaks_at_nominal_signal_wavelength() {
        let m = reference_source();
        let grid: Vec<f64> = (0..201).map(|k| 1534.0 + 0.1 * k as f64).collect();
        let marg = m.marginal_spectrum(Arm::Signal, &grid).unwrap();
        let k = marg
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        // Ridge peak shift is k·3.25e-7 ≈ 0.4 nm; allow that plus a grid step.
        assert!((grid[k] - 1544.0).abs() <= 0.5, "{}", grid[k]);
        assert!(m.marginal_spectrum(Arm::Signal, &[1500.0]).is_err());
    }

    #[test]
    fn pump_only_limit_marginal_is_analytic() {
        let m = JointSpectralModel::new(JointSpectralParams {
            phasematch_width: 1e9,
            // Wide enough that the ridge is not truncated.
            idler_range: Interval::new(1480.0, 1560.0),
            ..Default::default()
        })
        .unwrap();
        // Without phase matching the JSI depends on u = 1/λs + 1/λi only.
        // Substituting v = 1/λi gives ∫ exp(-4 ln2 (u/F)^2) λi^2 dv
        //   ≈ λi*^2 · F · sqrt(π / (4 ln2)), λi* the ridge idler wavelength.
        let grid = vec![1540.0, 1544.0, 1548.0];
        let marg = m.marginal_spectrum(Arm::Signal, &grid).unwrap();
        let f = m.energy_fwhm();
        for (l, v) in grid.iter().zip(&marg) {
            let ridge = 1.0 / (1.0 / 765.0 - 1.0 / l);
            let expect = ridge * ridge * f * libm::sqrt(core::f64::consts::PI / FOUR_LN2);
            assert!((v / expect - 1.0).abs() < 1e-3, "{l}: {v} vs {expect}");
        }
    }

    #[test]
    fn marginal_integral_matches_2d_quadrature() {
        let m = reference_source();
        let n = 401;
        let grid: Vec<f64> = (0..n).map(|k| 1534.0 + 20.0 * k as f64 / (n - 1) as f64).collect();
        let marg = m.marginal_spectrum(Arm::Signal, &grid).unwrap();
        let h = 20.0 / (n - 1) as f64;
        let integral: f64 = marg
            .iter()
            .enumerate()
            .map(|(k, v)| if k == 0 || k == n - 1 { 0.5 * v } else { *v })
            .sum::<f64>()
            * h;
        let (z, ..) = quadrature(&m, 1200);
        assert!(((integral - z) / z).abs() < 1e-3, "{integral} vs {z}");
    }

    #[test]
    fn analytic_moments_match_quadrature() {
        let m = reference_source();
        let (_, ms, mi, ss, ii, si) = quadrature(&m, 1200);
        let vs = ss - ms * ms;
        let vi = ii - mi * mi;
        let rho = (si - ms * mi) / libm::sqrt(vs * vi);
        let a = m.analytic_moments();
        assert!((a.mean_signal - ms).abs() < 0.02, "{} {}", a.mean_signal, ms);
        assert!((a.mean_idler - mi).abs() < 0.02);
        assert!((a.sigma_signal - libm::sqrt(vs)).abs() / a.sigma_signal < 0.01);
        assert!((a.correlation - rho).abs() < 0.005, "{} vs {}", a.correlation, rho);
    }
}
