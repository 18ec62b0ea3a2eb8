//! Monte Carlo of the measurement chain.
//!
//! photon wavelength → fiber delay → Gaussian detector jitter → detection
//! efficiency → TDC quantisation, plus dark counts inside the active window.
//! Every pulse draws from its own counter-based substreams (see
//! [`Substreams`]), so a pulse's outcome depends only on `(seed, pulse index)`
//! and ranges of pulses can be generated independently and concatenated.

use alloc::vec::Vec;
use core::ops::Range;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dispersion::FiberDispersionModel;
use crate::jsi::CoincidenceRecord;
use crate::pdc::{JointSpectralModel, PURPOSE_PAIR};
use crate::{Error, Interval, Result, Substreams};

const PURPOSE_WAVELENGTH: u32 = 1;
const PURPOSE_EFFICIENCY: u32 = 2;
const PURPOSE_JITTER: u32 = 3;
const PURPOSE_DARK: u32 = 4;
const PURPOSE_ROUTE_SIGNAL: u32 = 5;
const PURPOSE_ROUTE_IDLER: u32 = 6;
const PURPOSE_EFFICIENCY_SIGNAL: u32 = 7;
const PURPOSE_EFFICIENCY_IDLER: u32 = 8;
const PURPOSE_JITTER_SIGNAL: u32 = 9;
const PURPOSE_JITTER_IDLER: u32 = 10;
const PURPOSE_DARK_SIGNAL: u32 = 11;
const PURPOSE_DARK_IDLER: u32 = 12;

/// Jitter standard deviations of padding added around the photon arrival
/// window when deriving the dark-count window.
const WINDOW_PAD_SIGMAS: f64 = 5.0;

/// Piecewise-linear detection probability `p_D(λ)`; constant beyond the
/// first and last table entries.
#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyCurve {
    points: Vec<(f64, f64)>,
}

impl EfficiencyCurve {
    pub fn flat(p: f64) -> Result<Self> {
        Self::new(alloc::vec![(0.0, p)])
    }

    /// Table of `(wavelength nm, p_D)` with strictly increasing wavelengths.
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("efficiency_curve", "table is empty"));
        }
        if points
            .iter()
            .any(|&(l, p)| !l.is_finite() || !(0.0..=1.0).contains(&p))
        {
            return Err(Error::invalid("efficiency_curve", "values must lie in [0, 1]"));
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::invalid(
                "efficiency_curve",
                "wavelengths must be strictly increasing",
            ));
        }
        Ok(EfficiencyCurve { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn at(&self, lambda: f64) -> f64 {
        let pts = &self.points;
        let k = pts.partition_point(|&(l, _)| l <= lambda);
        if k == 0 {
            return pts[0].1;
        }
        if k == pts.len() {
            return pts[k - 1].1;
        }
        let (l0, p0) = pts[k - 1];
        let (l1, p1) = pts[k];
        p0 + (p1 - p0) * (lambda - l0) / (l1 - l0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorModel {
    /// Gaussian timing jitter σ, ps.
    pub jitter_sigma_ps: f64,
    /// TDC quantisation step, ps.
    pub tdc_bin_ps: i64,
    pub efficiency: EfficiencyCurve,
    pub dark_count_prob_per_gate: f64,
    pub gate_width_ps: i64,
    /// Delay increment between successive gate positions, ps.
    pub gate_step_ps: i64,
}

impl Default for DetectorModel {
    /// InGaAs gated APD: 180 ps jitter, 81 ps TDC, 200 ps gate scanned in
    /// 100 ps steps, ideal efficiency and a placeholder dark-count
    /// probability of 1e-4 per gate.
    fn default() -> Self {
        DetectorModel {
            jitter_sigma_ps: 180.0,
            tdc_bin_ps: 81,
            efficiency: EfficiencyCurve::flat(1.0).expect("valid constant"),
            dark_count_prob_per_gate: 1e-4,
            gate_width_ps: 200,
            gate_step_ps: 100,
        }
    }
}

impl DetectorModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.jitter_sigma_ps >= 0.0 && self.jitter_sigma_ps.is_finite()) {
            return Err(Error::invalid("jitter_sigma", "must be finite and >= 0"));
        }
        if self.tdc_bin_ps <= 0 {
            return Err(Error::invalid("tdc_bin", "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.dark_count_prob_per_gate) {
            return Err(Error::invalid("dark_count_prob_per_gate", "must lie in [0, 1]"));
        }
        if self.gate_width_ps <= 0 {
            return Err(Error::invalid("gate_width", "must be > 0"));
        }
        if self.gate_step_ps <= 0 {
            return Err(Error::invalid("gate_step", "must be > 0"));
        }
        Ok(())
    }

    /// Round-half-up to the nearest multiple of the TDC bin; bin phase is
    /// anchored at the trigger.
    pub fn quantize(&self, t_ps: f64) -> i64 {
        let bin = self.tdc_bin_ps as f64;
        (libm::floor(t_ps / bin + 0.5) as i64) * self.tdc_bin_ps
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceRun {
    pub repetition_period_ns: f64,
    pub pulse_count: u64,
    /// Probability that a photon leaves the splitter through its own port.
    pub routing_contrast: f64,
}

impl Default for SourceRun {
    /// 1 MHz after pulse picking, 80 % polarization contrast.
    fn default() -> Self {
        SourceRun {
            repetition_period_ns: 1000.0,
            pulse_count: 0,
            routing_contrast: 0.8,
        }
    }
}

impl SourceRun {
    pub fn validate(&self) -> Result<()> {
        if !(self.repetition_period_ns > 0.0 && self.repetition_period_ns.is_finite()) {
            return Err(Error::invalid("repetition_period", "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.routing_contrast) {
            return Err(Error::invalid("routing_contrast", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Channel {
    Signal,
    Idler,
    Single,
}

impl Channel {
    pub fn code(self) -> char {
        match self {
            Channel::Signal => 'S',
            Channel::Idler => 'I',
            Channel::Single => 'X',
        }
    }

    pub fn from_code(c: &str) -> Option<Self> {
        match c {
            "S" => Some(Channel::Signal),
            "I" => Some(Channel::Idler),
            "X" => Some(Channel::Single),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventRecord {
    pub channel: Channel,
    pub pulse_index: u64,
    /// Time after the pulse's trigger, ps.
    pub timestamp_ps: i64,
}

/// Tabulated single-photon spectrum, linearly interpolated between nodes.
/// A single node is a delta function.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpectrum {
    wavelengths: Vec<f64>,
    weights: Vec<f64>,
    /// Cumulative segment masses.
    cdf: Vec<f64>,
}

impl SourceSpectrum {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("spectrum", "table is empty"));
        }
        if points
            .iter()
            .any(|&(l, w)| !(l > 0.0 && l.is_finite()) || !(w >= 0.0 && w.is_finite()))
        {
            return Err(Error::invalid("spectrum", "need positive wavelengths and weights >= 0"));
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::invalid("spectrum", "wavelengths must be strictly increasing"));
        }
        let (wavelengths, weights): (Vec<f64>, Vec<f64>) = points.into_iter().unzip();
        let mut cdf = Vec::with_capacity(wavelengths.len());
        let mut acc = 0.0;
        for k in 1..wavelengths.len() {
            acc += 0.5 * (weights[k - 1] + weights[k]) * (wavelengths[k] - wavelengths[k - 1]);
            cdf.push(acc);
        }
        if wavelengths.len() > 1 && acc <= 0.0 {
            return Err(Error::invalid("spectrum", "total weight is zero"));
        }
        Ok(SourceSpectrum {
            wavelengths,
            weights,
            cdf,
        })
    }

    pub fn delta(lambda: f64) -> Result<Self> {
        Self::new(alloc::vec![(lambda, 1.0)])
    }

    pub fn flat(lo: f64, hi: f64) -> Result<Self> {
        Self::new(alloc::vec![(lo, 1.0), (hi, 1.0)])
    }

    /// Gaussian line of the given FWHM tabulated on `nodes` points over
    /// `center ± half_span`.
    pub fn gaussian(center: f64, fwhm: f64, half_span: f64, nodes: usize) -> Result<Self> {
        if !(fwhm > 0.0) || nodes < 2 || !(half_span > 0.0) {
            return Err(Error::invalid("spectrum", "need fwhm > 0, span > 0, >= 2 nodes"));
        }
        let sigma = fwhm / crate::pdc::FWHM_PER_SIGMA;
        let pts = (0..nodes)
            .map(|k| {
                let l = center - half_span + 2.0 * half_span * k as f64 / (nodes - 1) as f64;
                let z = (l - center) / sigma;
                (l, libm::exp(-0.5 * z * z))
            })
            .collect();
        Self::new(pts)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.wavelengths.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn support(&self) -> Interval {
        Interval::new(self.wavelengths[0], self.wavelengths[self.wavelengths.len() - 1])
    }

    /// Inverse-CDF draw; exact for the piecewise-linear density.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.wavelengths.len() == 1 {
            return self.wavelengths[0];
        }
        let total = self.cdf[self.cdf.len() - 1];
        let target = rng.random::<f64>() * total;
        let seg = self.cdf.partition_point(|&c| c <= target).min(self.cdf.len() - 1);
        let before = if seg == 0 { 0.0 } else { self.cdf[seg - 1] };
        let (l0, l1) = (self.wavelengths[seg], self.wavelengths[seg + 1]);
        let (w0, w1) = (self.weights[seg], self.weights[seg + 1]);
        let h = l1 - l0;
        // Solve w0 x + (w1 - w0) x^2 / 2 = c for x in [0, 1].
        let c = ((target - before) / h).max(0.0);
        let disc = (w0 * w0 + 2.0 * (w1 - w0) * c).max(0.0);
        let denom = w0 + libm::sqrt(disc);
        let x = if denom > 0.0 { 2.0 * c / denom } else { 0.0 };
        l0 + h * x.clamp(0.0, 1.0)
    }
}

fn padded_window(
    fiber: &FiberDispersionModel,
    band: Interval,
    detector: &DetectorModel,
) -> Result<(i64, i64)> {
    let t = fiber.delay_range(band)?;
    let pad = WINDOW_PAD_SIGMAS * detector.jitter_sigma_ps + detector.gate_width_ps as f64;
    Ok((
        libm::floor(t.lo * 1000.0 - pad) as i64,
        libm::ceil(t.hi * 1000.0 + pad) as i64,
    ))
}

fn uniform_in(rng: &mut ChaCha8Rng, (lo, hi): (i64, i64)) -> f64 {
    lo as f64 + (hi - lo) as f64 * rng.random::<f64>()
}

fn jittered(delay_ns: f64, sigma_ps: f64, rng: &mut ChaCha8Rng) -> f64 {
    let n: f64 = StandardNormal.sample(rng);
    delay_ns * 1000.0 + sigma_ps * n
}

/// Single-channel calibration run: one photon per pulse from a tabulated
/// spectrum into one detector.
#[derive(Debug, Clone)]
pub struct SingleChannelSetup<'a> {
    pub spectrum: &'a SourceSpectrum,
    pub fiber: &'a FiberDispersionModel,
    pub detector: &'a DetectorModel,
    pub run: SourceRun,
    /// Dark-count window in ps after the trigger; derived from the spectrum
    /// support when absent.
    pub window_ps: Option<(i64, i64)>,
}

impl SingleChannelSetup<'_> {
    pub fn validate(&self) -> Result<()> {
        self.detector.validate()?;
        self.run.validate()?;
        let support = self.spectrum.support();
        let domain = self.fiber.domain();
        for l in [support.lo, support.hi] {
            if !domain.contains(l) {
                return Err(Error::OutOfDomain {
                    quantity: "spectrum wavelength",
                    value: l,
                    valid: domain,
                });
            }
        }
        if let Some((lo, hi)) = self.window_ps {
            if hi <= lo {
                return Err(Error::invalid("window", "need start < end"));
            }
        }
        Ok(())
    }

    pub fn active_window(&self) -> Result<(i64, i64)> {
        match self.window_ps {
            Some(w) => Ok(w),
            None => padded_window(self.fiber, self.spectrum.support(), self.detector),
        }
    }

    pub fn simulate(&self, seed: u64) -> Result<Vec<EventRecord>> {
        self.simulate_range(0..self.run.pulse_count, seed)
    }

    /// Events for the pulses in `pulses`, in pulse order (and time order
    /// within a pulse).
    pub fn simulate_range(&self, pulses: Range<u64>, seed: u64) -> Result<Vec<EventRecord>> {
        self.validate()?;
        let window = self.active_window()?;
        let streams = Substreams::new(seed);
        let det = self.detector;
        let mut out = Vec::new();
        for k in pulses {
            let lambda = self.spectrum.sample(&mut streams.stream(k, PURPOSE_WAVELENGTH));
            let mut first = None;
            if streams.stream(k, PURPOSE_EFFICIENCY).random::<f64>() < det.efficiency.at(lambda) {
                let delay = self.fiber.propagation_delay(lambda)?;
                let t = jittered(delay, det.jitter_sigma_ps, &mut streams.stream(k, PURPOSE_JITTER));
                first = Some(det.quantize(t));
            }
            let mut dark_rng = streams.stream(k, PURPOSE_DARK);
            let dark = (dark_rng.random::<f64>() < det.dark_count_prob_per_gate)
                .then(|| det.quantize(uniform_in(&mut dark_rng, window)));
            let mut stamps = [first, dark];
            stamps.sort();
            for t in stamps.into_iter().flatten() {
                out.push(EventRecord {
                    channel: Channel::Single,
                    pulse_index: k,
                    timestamp_ps: t,
                });
            }
        }
        Ok(out)
    }
}

/// What produced a detector click in a pair run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClickSource {
    SignalPhoton,
    IdlerPhoton,
    Dark,
}

/// A coincidence with the simulation's ground truth attached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracedCoincidence {
    pub record: CoincidenceRecord,
    pub signal_wavelength: f64,
    pub idler_wavelength: f64,
    /// Origin of the click on the signal detector.
    pub signal_source: ClickSource,
    /// Origin of the click on the idler detector.
    pub idler_source: ClickSource,
}

impl TracedCoincidence {
    pub fn both_correct(&self) -> bool {
        self.signal_source == ClickSource::SignalPhoton
            && self.idler_source == ClickSource::IdlerPhoton
    }

    pub fn both_swapped(&self) -> bool {
        self.signal_source == ClickSource::IdlerPhoton
            && self.idler_source == ClickSource::SignalPhoton
    }
}

/// Two-channel photon-pair run behind a polarizing splitter.
#[derive(Debug, Clone)]
pub struct PairSetup<'a> {
    pub model: &'a JointSpectralModel,
    pub fiber: &'a FiberDispersionModel,
    pub signal_detector: &'a DetectorModel,
    pub idler_detector: &'a DetectorModel,
    pub run: SourceRun,
    /// Dark-count windows (signal, idler) in ps; derived from the model's
    /// grid ranges when absent.
    pub windows_ps: Option<((i64, i64), (i64, i64))>,
}

impl PairSetup<'_> {
    pub fn validate(&self) -> Result<()> {
        self.signal_detector.validate()?;
        self.idler_detector.validate()?;
        self.run.validate()?;
        let domain = self.fiber.domain();
        let (s, i) = self.model.grid_domain();
        for l in [s.lo, s.hi, i.lo, i.hi] {
            if !domain.contains(l) {
                return Err(Error::OutOfDomain {
                    quantity: "pair grid wavelength",
                    value: l,
                    valid: domain,
                });
            }
        }
        Ok(())
    }

    pub fn active_windows(&self) -> Result<((i64, i64), (i64, i64))> {
        match self.windows_ps {
            Some(w) => Ok(w),
            None => {
                let (s, i) = self.model.grid_domain();
                Ok((
                    padded_window(self.fiber, s, self.signal_detector)?,
                    padded_window(self.fiber, i, self.idler_detector)?,
                ))
            }
        }
    }

    pub fn simulate(&self, seed: u64) -> Result<Vec<CoincidenceRecord>> {
        Ok(self
            .simulate_traced_range(0..self.run.pulse_count, seed)?
            .into_iter()
            .map(|t| t.record)
            .collect())
    }

    pub fn simulate_traced(&self, seed: u64) -> Result<Vec<TracedCoincidence>> {
        self.simulate_traced_range(0..self.run.pulse_count, seed)
    }

    /// Coincidences for the pulses in `pulses`, in pulse order.
    pub fn simulate_traced_range(
        &self,
        pulses: Range<u64>,
        seed: u64,
    ) -> Result<Vec<TracedCoincidence>> {
        self.validate()?;
        if self.model.sampling_envelope() <= 0.0 {
            return Err(Error::DegenerateModel);
        }
        let (win_s, win_i) = self.active_windows()?;
        let streams = Substreams::new(seed);
        let contrast = self.run.routing_contrast;
        let mut out = Vec::new();

        for k in pulses {
            let (ls, li) = self.model.sample_pair(&mut streams.stream(k, PURPOSE_PAIR));
            let signal_to_s = streams.stream(k, PURPOSE_ROUTE_SIGNAL).random::<f64>() < contrast;
            let idler_to_i = streams.stream(k, PURPOSE_ROUTE_IDLER).random::<f64>() < contrast;

            // Earliest click per detector: [signal detector, idler detector].
            let mut clicks: [Option<(i64, ClickSource)>; 2] = [None, None];
            let mut offer = |slot: usize, t: i64, src: ClickSource| {
                if clicks[slot].is_none_or(|(t0, _)| t < t0) {
                    clicks[slot] = Some((t, src));
                }
            };

            let photons = [
                (ls, if signal_to_s { 0 } else { 1 }, ClickSource::SignalPhoton,
                 PURPOSE_EFFICIENCY_SIGNAL, PURPOSE_JITTER_SIGNAL),
                (li, if idler_to_i { 1 } else { 0 }, ClickSource::IdlerPhoton,
                 PURPOSE_EFFICIENCY_IDLER, PURPOSE_JITTER_IDLER),
            ];
            for (lambda, slot, src, eff_purpose, jit_purpose) in photons {
                let det = if slot == 0 { self.signal_detector } else { self.idler_detector };
                if streams.stream(k, eff_purpose).random::<f64>() < det.efficiency.at(lambda) {
                    let delay = self.fiber.propagation_delay(lambda)?;
                    let t = jittered(delay, det.jitter_sigma_ps, &mut streams.stream(k, jit_purpose));
                    offer(slot, det.quantize(t), src);
                }
            }
            for (slot, det, window, purpose) in [
                (0, self.signal_detector, win_s, PURPOSE_DARK_SIGNAL),
                (1, self.idler_detector, win_i, PURPOSE_DARK_IDLER),
            ] {
                let mut rng = streams.stream(k, purpose);
                if rng.random::<f64>() < det.dark_count_prob_per_gate {
                    let t = det.quantize(uniform_in(&mut rng, window));
                    offer(slot, t, ClickSource::Dark);
                }
            }

            if let [Some((ts, src_s)), Some((ti, src_i))] = clicks {
                out.push(TracedCoincidence {
                    record: CoincidenceRecord {
                        pulse_index: k,
                        ts_signal_ps: ts,
                        ts_idler_ps: ti,
                    },
                    signal_wavelength: ls,
                    idler_wavelength: li,
                    signal_source: src_s,
                    idler_source: src_i,
                });
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GatedEvent {
    pub event: EventRecord,
    /// Index of the first gate position containing the event.
    pub gate_index: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GateScan {
    pub accepted: Vec<GatedEvent>,
    pub rejected: usize,
    pub gate_count: u64,
}

/// Delay-scan the gate across `[start, end)` ps in steps of `gate_step`.
///
/// Gate `k` opens at `start + k·step` and stays open for `gate_width`. An
/// event is accepted by the first gate that contains it; events outside the
/// scan range or between gates are rejected.
pub fn gate_scan(events: &[EventRecord], detector: &DetectorModel, scan: (i64, i64)) -> Result<GateScan> {
    detector.validate()?;
    let (start, end) = scan;
    if end <= start {
        return Err(Error::invalid("scan_range", "must be non-empty"));
    }
    let step = detector.gate_step_ps;
    let width = detector.gate_width_ps;
    let gate_count = ((end - start) + step - 1) / step;
    let mut result = GateScan {
        accepted: Vec::new(),
        rejected: 0,
        gate_count: gate_count as u64,
    };
    for &event in events {
        let t = event.timestamp_ps;
        if t < start || t >= end {
            result.rejected += 1;
            continue;
        }
        // Smallest k with start + k·step > t − width.
        let k = (t - width - start).div_euclid(step) + 1;
        let k = k.max(0);
        if k < gate_count && start + k * step <= t {
            result.accepted.push(GatedEvent {
                event,
                gate_index: k as u64,
            });
        } else {
            result.rejected += 1;
        }
    }
    Ok(result)
}
