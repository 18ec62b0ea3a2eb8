//! Single-channel inverse pipeline: time histogram → peak → spectrum.
//!
//! A time bin of width `Δt` maps to a wavelength interval of width
//! `|dc/dτ| · Δt`, so a density per nm is the bin count divided by that
//! width. Without this Jacobian a flat spectrum would come out tilted
//! wherever the dispersion changes.

use alloc::vec;
use alloc::vec::Vec;

use crate::calibration::CalibrationCurve;
use crate::simulator::{EfficiencyCurve, EventRecord};
use crate::{Error, Result};

/// Efficiencies below this are flagged unreliable by default.
pub const DEFAULT_UNRELIABLE_EFFICIENCY: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeHistogram {
    /// Left edge of bin 0, ps.
    pub origin_ps: i64,
    pub bin_width_ps: i64,
    pub counts: Vec<u64>,
}

/// A histogram together with the number of events that fell outside it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Binned {
    pub histogram: TimeHistogram,
    pub out_of_range: u64,
}

impl TimeHistogram {
    /// Empty histogram covering `[start, end)`; the end is rounded up to a
    /// whole number of bins.
    pub fn empty(bin_width_ps: i64, (start, end): (i64, i64)) -> Result<Self> {
        if bin_width_ps <= 0 {
            return Err(Error::invalid("bin_width", "must be > 0"));
        }
        if end < start {
            return Err(Error::invalid("range", "need start <= end"));
        }
        let n = (end - start + bin_width_ps - 1) / bin_width_ps;
        Ok(TimeHistogram {
            origin_ps: start,
            bin_width_ps,
            counts: vec![0; n as usize],
        })
    }

    /// Exclusive right edge, ps.
    pub fn end_ps(&self) -> i64 {
        self.origin_ps + self.bin_width_ps * self.counts.len() as i64
    }

    /// Adds one timestamp; returns false when it lies outside the bins.
    pub fn insert(&mut self, t_ps: i64) -> bool {
        if t_ps < self.origin_ps || t_ps >= self.end_ps() {
            return false;
        }
        let k = ((t_ps - self.origin_ps) / self.bin_width_ps) as usize;
        self.counts[k] += 1;
        true
    }

    /// Adds the counts of a histogram with identical binning.
    pub fn merge(&mut self, other: &TimeHistogram) -> Result<()> {
        if other.origin_ps != self.origin_ps
            || other.bin_width_ps != self.bin_width_ps
            || other.counts.len() != self.counts.len()
        {
            return Err(Error::invalid("histogram", "binning differs"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn bin_center_ns(&self, k: usize) -> f64 {
        (self.origin_ps as f64 + (k as f64 + 0.5) * self.bin_width_ps as f64) * 1e-3
    }

    pub fn bin_width_ns(&self) -> f64 {
        self.bin_width_ps as f64 * 1e-3
    }
}

/// Range whose bins are centred on multiples of `tdc_bin_ps` and which
/// covers every timestamp in `timestamps`. `None` for an empty input.
pub fn tdc_aligned_range(
    timestamps: impl IntoIterator<Item = i64>,
    tdc_bin_ps: i64,
) -> Option<(i64, i64)> {
    let (lo, hi) = timestamps
        .into_iter()
        .fold(None, |acc: Option<(i64, i64)>, t| match acc {
            None => Some((t, t)),
            Some((a, b)) => Some((a.min(t), b.max(t))),
        })?;
    let half = tdc_bin_ps / 2;
    Some((lo - half, hi - half + tdc_bin_ps))
}

/// Counts events per bin over `range`, bins left-closed and right-open.
pub fn histogram(events: &[EventRecord], bin_width_ps: i64, range: (i64, i64)) -> Result<Binned> {
    let mut histogram = TimeHistogram::empty(bin_width_ps, range)?;
    let mut out_of_range = 0;
    for e in events {
        if !histogram.insert(e.timestamp_ps) {
            out_of_range += 1;
        }
    }
    Ok(Binned {
        histogram,
        out_of_range,
    })
}

/// FWHM centroid of the peak in ns.
///
/// The region is the contiguous run of bins around the first maximum whose
/// counts reach half the maximum; the centroid is count-weighted over that
/// run. Equal maxima resolve to the earliest bin.
pub fn find_peak(hist: &TimeHistogram) -> Result<f64> {
    let (k_max, &max) = hist
        .counts
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, &u64)>, (k, c)| match best {
            Some((_, b)) if c <= b => best,
            _ => Some((k, c)),
        })
        .ok_or(Error::EmptyHistogram)?;
    if max == 0 {
        return Err(Error::EmptyHistogram);
    }
    let above = |k: usize| 2 * hist.counts[k] >= max;
    let mut lo = k_max;
    while lo > 0 && above(lo - 1) {
        lo -= 1;
    }
    let mut hi = k_max;
    while hi + 1 < hist.counts.len() && above(hi + 1) {
        hi += 1;
    }
    let (mut num, mut den) = (0.0, 0.0);
    for k in lo..=hi {
        let c = hist.counts[k] as f64;
        num += c * hist.bin_center_ns(k);
        den += c;
    }
    Ok(num / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PointFlags {
    /// The bin lies outside the calibration's time domain.
    pub extrapolated: bool,
    /// Intensity was divided by `p_D(λ)`.
    pub efficiency_corrected: bool,
    /// `p_D(λ)` is below the reliability threshold.
    pub unreliable: bool,
}

impl PointFlags {
    /// Compact text form: `E`, `C`, `U` for the set flags, or `-`.
    pub fn code(&self) -> alloc::string::String {
        let mut s = alloc::string::String::new();
        if self.extrapolated {
            s.push('E');
        }
        if self.efficiency_corrected {
            s.push('C');
        }
        if self.unreliable {
            s.push('U');
        }
        if s.is_empty() {
            s.push('-');
        }
        s
    }

    pub fn from_code(code: &str) -> Option<Self> {
        let mut f = PointFlags::default();
        if code == "-" {
            return Some(f);
        }
        for c in code.chars() {
            match c {
                'E' => f.extrapolated = true,
                'C' => f.efficiency_corrected = true,
                'U' => f.unreliable = true,
                _ => return None,
            }
        }
        Some(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumPoint {
    pub wavelength_nm: f64,
    /// Counts per nm (or raw counts when the Jacobian is disabled).
    pub intensity: f64,
    /// Wavelength width the source time bin maps to, nm.
    pub width_nm: f64,
    pub flags: PointFlags,
}

/// Reconstructed spectrum on a strictly increasing wavelength grid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Spectrum {
    pub points: Vec<SpectrumPoint>,
}

impl Spectrum {
    pub fn wavelengths(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.wavelength_nm)
    }

    pub fn intensities(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.intensity)
    }

    /// `Σ intensity · width`: the total counts for a Jacobian-corrected,
    /// efficiency-free spectrum.
    pub fn integrated(&self) -> f64 {
        self.points.iter().map(|p| p.intensity * p.width_nm).sum()
    }

    /// Half-maximum crossings `(left, right)` around the maximum, linearly
    /// interpolated between grid points.
    pub fn half_maximum_crossings(&self) -> Option<(f64, f64)> {
        let pts = &self.points;
        let (k, peak) = pts
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.intensity.total_cmp(&b.1.intensity))?;
        let half = 0.5 * peak.intensity;
        if !(half > 0.0) {
            return None;
        }
        let cross = |a: &SpectrumPoint, b: &SpectrumPoint| {
            let t = (half - a.intensity) / (b.intensity - a.intensity);
            a.wavelength_nm + t * (b.wavelength_nm - a.wavelength_nm)
        };
        let mut l = k;
        while l > 0 && pts[l - 1].intensity >= half {
            l -= 1;
        }
        let mut r = k;
        while r + 1 < pts.len() && pts[r + 1].intensity >= half {
            r += 1;
        }
        if l == 0 || r + 1 == pts.len() {
            return None;
        }
        Some((cross(&pts[l - 1], &pts[l]), cross(&pts[r], &pts[r + 1])))
    }

    /// Centre and FWHM from the half-maximum crossings.
    pub fn center_and_fwhm(&self) -> Option<(f64, f64)> {
        self.half_maximum_crossings()
            .map(|(l, r)| (0.5 * (l + r), r - l))
    }

    /// Copy scaled so the largest intensity is 1.
    pub fn peak_normalized(&self) -> Spectrum {
        let peak = self.intensities().fold(0.0_f64, f64::max);
        let mut out = self.clone();
        if peak > 0.0 {
            for p in &mut out.points {
                p.intensity /= peak;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructOptions {
    /// Divide counts by the wavelength width of each time bin.
    pub jacobian: bool,
    pub unreliable_threshold: f64,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        ReconstructOptions {
            jacobian: true,
            unreliable_threshold: DEFAULT_UNRELIABLE_EFFICIENCY,
        }
    }
}

/// Converts a time histogram to a spectral density via the calibration
/// curve, optionally renormalising by the detection efficiency.
pub fn to_spectrum(
    hist: &TimeHistogram,
    curve: &CalibrationCurve,
    efficiency: Option<&EfficiencyCurve>,
    options: ReconstructOptions,
) -> Result<Spectrum> {
    let bin_ns = hist.bin_width_ns();
    let mut points = Vec::with_capacity(hist.counts.len());
    for (k, &count) in hist.counts.iter().enumerate() {
        let tau = hist.bin_center_ns(k);
        let eval = curve.wavelength_at(tau);
        let slope = curve.slope_at(tau);
        if slope == 0.0 {
            return Err(Error::SingularMapping { at: tau });
        }
        let width_nm = slope.abs() * bin_ns;
        let mut intensity = if options.jacobian {
            count as f64 / width_nm
        } else {
            count as f64
        };
        let mut flags = PointFlags {
            extrapolated: eval.extrapolated,
            ..Default::default()
        };
        if let Some(eff) = efficiency {
            let p = eff.at(eval.wavelength);
            flags.efficiency_corrected = true;
            flags.unreliable = p < options.unreliable_threshold;
            if p > 0.0 {
                intensity /= p;
            } else if count > 0 {
                return Err(Error::ZeroEfficiency {
                    wavelength: eval.wavelength,
                });
            }
        }
        points.push(SpectrumPoint {
            wavelength_nm: eval.wavelength,
            intensity,
            width_nm,
            flags,
        });
    }
    points.sort_by(|a, b| a.wavelength_nm.total_cmp(&b.wavelength_nm));
    if let Some(w) = points.windows(2).find(|w| w[1].wavelength_nm <= w[0].wavelength_nm) {
        return Err(Error::NonMonotonic {
            near: w[0].wavelength_nm,
        });
    }
    Ok(Spectrum { points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::Polynomial;
    use crate::simulator::Channel;
    use crate::Interval;
    use proptest::prelude::*;

    fn ev(t: i64) -> EventRecord {
        EventRecord {
            channel: Channel::Single,
            pulse_index: 0,
            timestamp_ps: t,
        }
    }

    fn hist(counts: &[u64]) -> TimeHistogram {
        TimeHistogram {
            origin_ps: 0,
            bin_width_ps: 100,
            counts: counts.to_vec(),
        }
    }

    fn linear_curve() -> CalibrationCurve {
        CalibrationCurve::new(
            Polynomial::centered(1.0, vec![1550.0, -4.0]),
            Interval::new(0.0, 2.0),
        )
        .unwrap()
    }

    #[test]
    fn empty_events_give_zero_histogram() {
        let b = histogram(&[], 81, (0, 810)).unwrap();
        assert_eq!(b.histogram.counts, vec![0; 10]);
        assert_eq!(b.out_of_range, 0);
    }

    #[test]
    fn event_at_origin_lands_in_bin_zero() {
        let b = histogram(&[ev(-400)], 81, (-400, 0)).unwrap();
        assert_eq!(b.histogram.counts[0], 1);
        assert_eq!(b.histogram.total(), 1);
    }

    #[test]
    fn bins_are_left_closed_right_open() {
        let b = histogram(&[ev(99), ev(100), ev(200), ev(-1)], 100, (0, 200)).unwrap();
        assert_eq!(b.histogram.counts, vec![1, 1]);
        assert_eq!(b.out_of_range, 2);
        assert!(histogram(&[], 0, (0, 10)).is_err());
    }

    #[test]
    fn uniform_timestamps_are_poisson() {
        use rand::Rng;
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let streams = crate::Substreams::new(77);
        let mut rng = streams.stream(0, 0);
        let events: Vec<_> = (0..10_000).map(|_| ev(rng.random_range(0..10_000))).collect();
        let h = histogram(&events, 100, (0, 10_000)).unwrap().histogram;
        assert_eq!(h.counts.len(), 100);
        let chi2: f64 = h
            .counts
            .iter()
            .map(|&c| (c as f64 - 100.0).powi(2) / 100.0)
            .sum();
        let p = 1.0 - ChiSquared::new(99.0).unwrap().cdf(chi2);
        assert!(p > 1e-3, "chi2 {chi2}, p {p}");
    }

    #[test]
    fn tdc_alignment_centres_bins_on_stamps() {
        let (lo, hi) = tdc_aligned_range([810, 162, 405], 81).unwrap();
        let b = histogram(&[ev(162), ev(405), ev(810)], 81, (lo, hi)).unwrap();
        assert_eq!(b.out_of_range, 0);
        let h = b.histogram;
        assert_eq!(h.counts.first(), Some(&1));
        assert_eq!(h.counts.last(), Some(&1));
        assert!((h.bin_center_ns(0) - 0.1625).abs() < 1e-12);
        assert!(tdc_aligned_range([], 81).is_none());
    }

    #[test]
    fn triangular_peak_is_apex() {
        let h = hist(&[0, 1, 2, 3, 4, 3, 2, 1, 0]);
        assert!((find_peak(&h).unwrap() - 0.45).abs() < 1e-12);
    }

    #[test]
    fn equal_maxima_pick_the_earliest() {
        let h = hist(&[0, 5, 0, 0, 5, 0]);
        assert!((find_peak(&h).unwrap() - 0.15).abs() < 1e-12);
    }

    #[test]
    fn empty_histogram_has_no_peak() {
        assert_eq!(find_peak(&hist(&[0, 0, 0])), Err(Error::EmptyHistogram));
        assert_eq!(find_peak(&hist(&[])), Err(Error::EmptyHistogram));
    }

    #[test]
    fn constant_jacobian_reindexes_shape() {
        let h = hist(&[1, 4, 9, 16, 25]);
        let s = to_spectrum(&h, &linear_curve(), None, Default::default()).unwrap();
        // Negative slope: wavelength order reverses time order.
        let back: Vec<f64> = s.intensities().collect();
        let width = 4.0 * 0.1;
        let expect: Vec<f64> = [25.0, 16.0, 9.0, 4.0, 1.0].iter().map(|c| c / width).collect();
        for (a, b) in back.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(s.wavelengths().collect::<Vec<_>>().windows(2).all(|w| w[0] < w[1]));
        assert!((s.integrated() - 55.0).abs() < 1e-9);
    }

    #[test]
    fn raw_mode_keeps_counts() {
        let h = hist(&[3, 0, 2]);
        let opts = ReconstructOptions {
            jacobian: false,
            ..Default::default()
        };
        let s = to_spectrum(&h, &linear_curve(), None, opts).unwrap();
        assert_eq!(s.intensities().collect::<Vec<_>>(), vec![2.0, 0.0, 3.0]);
    }

    #[test]
    fn efficiency_correction_and_flags() {
        let h = hist(&[10, 10, 10]);
        let curve = linear_curve();
        let flat = EfficiencyCurve::flat(0.25).unwrap();
        let plain = to_spectrum(&h, &curve, None, Default::default()).unwrap();
        let corrected = to_spectrum(&h, &curve, Some(&flat), Default::default()).unwrap();
        for (a, b) in plain.points.iter().zip(&corrected.points) {
            assert_eq!(b.intensity, a.intensity / 0.25);
            assert!(b.flags.efficiency_corrected && !b.flags.unreliable);
        }
        let weak = EfficiencyCurve::flat(0.01).unwrap();
        let s = to_spectrum(&h, &curve, Some(&weak), Default::default()).unwrap();
        assert!(s.points.iter().all(|p| p.flags.unreliable));
        let dead = EfficiencyCurve::flat(0.0).unwrap();
        assert!(matches!(
            to_spectrum(&h, &curve, Some(&dead), Default::default()),
            Err(Error::ZeroEfficiency { .. })
        ));
        let s = to_spectrum(&hist(&[0, 0]), &curve, Some(&dead), Default::default()).unwrap();
        assert!(s.points.iter().all(|p| p.intensity == 0.0 && p.flags.unreliable));
    }

    #[test]
    fn extrapolated_bins_are_flagged() {
        let h = TimeHistogram {
            origin_ps: 1500,
            bin_width_ps: 200,
            counts: vec![1, 1, 1, 1],
        };
        let s = to_spectrum(&h, &linear_curve(), None, Default::default()).unwrap();
        let flags: Vec<bool> = s.points.iter().map(|p| p.flags.extrapolated).collect();
        // Bin centres 1.6, 1.8, 2.0 (edge, inside) and 2.2 ns; reversed order.
        assert_eq!(flags, vec![true, false, false, false]);
    }

    #[test]
    fn singular_bin_is_an_error() {
        // c(τ) = 1500 + (τ - 1)^2 has zero slope at τ = 1 ns.
        let c = CalibrationCurve::new(
            Polynomial::centered(1.0, vec![1500.0, 0.0, 1.0]),
            Interval::new(0.0, 2.0),
        )
        .unwrap();
        let h = TimeHistogram {
            origin_ps: 950,
            bin_width_ps: 100,
            counts: vec![1],
        };
        assert_eq!(
            to_spectrum(&h, &c, None, Default::default()),
            Err(Error::SingularMapping { at: 1.0 })
        );
    }

    #[test]
    fn flags_code_round_trip() {
        for f in [
            PointFlags::default(),
            PointFlags { extrapolated: true, efficiency_corrected: true, unreliable: true },
            PointFlags { efficiency_corrected: true, ..Default::default() },
        ] {
            assert_eq!(PointFlags::from_code(&f.code()), Some(f));
        }
        assert_eq!(PointFlags::from_code("Z"), None);
    }

    #[test]
    fn fwhm_of_sampled_gaussian() {
        let pts = (0..401)
            .map(|k| {
                let l = 1500.0 + 0.1 * k as f64;
                let z = (l - 1520.0) / 2.0;
                SpectrumPoint {
                    wavelength_nm: l,
                    intensity: libm::exp(-0.5 * z * z),
                    width_nm: 0.1,
                    flags: PointFlags::default(),
                }
            })
            .collect();
        let (c, w) = Spectrum { points: pts }.center_and_fwhm().unwrap();
        assert!((c - 1520.0).abs() < 1e-9);
        assert!((w - 2.0 * 2.354_820_045).abs() < 2e-3);
    }

    proptest! {
        #[test]
        fn count_conservation(counts in proptest::collection::vec(0u64..1000, 1..60), a in -6.0..-1.0f64, b in -0.01..0.01f64) {
            let c = CalibrationCurve::new(
                Polynomial::centered(3.0, vec![1500.0, a, b]),
                Interval::new(0.0, 6.0),
            ).unwrap();
            let h = TimeHistogram { origin_ps: 0, bin_width_ps: 100, counts: counts.clone() };
            let s = to_spectrum(&h, &c, None, Default::default()).unwrap();
            let total: u64 = counts.iter().sum();
            prop_assert!((s.integrated() - total as f64).abs() <= 1e-9 * (total as f64).max(1.0));
            // Decreasing curve: wavelength order is the reverse of time order.
            let mut rev = counts.clone();
            rev.reverse();
            let got: Vec<f64> = s.points.iter().map(|p| p.intensity * p.width_nm).collect();
            for (g, r) in got.iter().zip(&rev) {
                prop_assert!((g - *r as f64).abs() < 1e-9 * (*r as f64).max(1.0));
            }
        }

        #[test]
        fn constant_efficiency_scales_exactly(counts in proptest::collection::vec(0u64..1000, 1..30), k in 0.05..1.0f64) {
            let c = linear_curve();
            let h = TimeHistogram { origin_ps: 0, bin_width_ps: 50, counts };
            let e = EfficiencyCurve::flat(k).unwrap();
            let a = to_spectrum(&h, &c, None, Default::default()).unwrap();
            let b = to_spectrum(&h, &c, Some(&e), Default::default()).unwrap();
            for (x, y) in a.points.iter().zip(&b.points) {
                prop_assert_eq!(y.intensity, x.intensity / k);
            }
        }
    }
}
