//! Two-channel analysis: offset recovery from energy conservation, mapping of
//! coincidences to wavelength pairs, wrong-path filtering and the joint
//! spectral histogram.

use alloc::vec;
use alloc::vec::Vec;

use crate::calibration::CalibrationCurve;
use crate::optimize::bracketed_minimum;
use crate::pdc::{pump_energy_band, PairMoments};
use crate::{Error, Interval, Result};

pub const DEFAULT_OFFSET_GRID: usize = 401;
/// Offset tolerance of the bracketed search, ns (1 ps).
pub const OFFSET_TOLERANCE_NS: f64 = 1e-3;
pub const DEFAULT_DOMAIN_MARGIN_NS: f64 = 50.0;
pub const DEFAULT_JSI_BINS: usize = 64;
/// Half-width of the default JSI grid in pump-equivalent widths.
pub const DEFAULT_JSI_HALF_SPAN: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CoincidenceRecord {
    pub pulse_index: u64,
    pub ts_signal_ps: i64,
    pub ts_idler_ps: i64,
}

impl CoincidenceRecord {
    pub fn times_ns(&self) -> (f64, f64) {
        (self.ts_signal_ps as f64 * 1e-3, self.ts_idler_ps as f64 * 1e-3)
    }
}

/// Median of `values`, reordering them in place; the mean of the two middle
/// values for an even count. NaN for an empty slice.
pub fn median(values: &mut [f64]) -> f64 {
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    let (_, &mut upper, _) = values.select_nth_unstable_by(n / 2, f64::total_cmp);
    if n % 2 == 1 {
        return upper;
    }
    let lower = values[..n / 2]
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    0.5 * (lower + upper)
}

/// Energy-conservation residuals `1/λp − 1/c(τs+δ) − 1/c(τi+skew+δ)` for a
/// set of coincidences.
#[derive(Debug, Clone, Copy)]
pub struct EnergyObjective<'a> {
    coincidences: &'a [CoincidenceRecord],
    curve: &'a CalibrationCurve,
    inverse_pump: f64,
    idler_skew_ns: f64,
}

impl<'a> EnergyObjective<'a> {
    pub fn new(
        coincidences: &'a [CoincidenceRecord],
        curve: &'a CalibrationCurve,
        pump_nm: f64,
        idler_skew_ns: f64,
    ) -> Result<Self> {
        if coincidences.is_empty() {
            return Err(Error::NoEvents);
        }
        if !(pump_nm > 0.0 && pump_nm.is_finite()) {
            return Err(Error::invalid("pump_wavelength", "must be positive"));
        }
        if !idler_skew_ns.is_finite() {
            return Err(Error::invalid("idler_skew", "must be finite"));
        }
        Ok(EnergyObjective {
            coincidences,
            curve,
            inverse_pump: 1.0 / pump_nm,
            idler_skew_ns,
        })
    }

    pub fn coincidences(&self) -> &'a [CoincidenceRecord] {
        self.coincidences
    }

    pub fn residual(&self, c: &CoincidenceRecord, offset_ns: f64) -> f64 {
        let (ts, ti) = c.times_ns();
        let ls = self.curve.wavelength_at(ts + offset_ns).wavelength;
        let li = self.curve.wavelength_at(ti + self.idler_skew_ns + offset_ns).wavelength;
        self.inverse_pump - 1.0 / ls - 1.0 / li
    }

    /// Absolute residuals of `records` (a subset of this objective's
    /// coincidences, e.g. one parallel chunk) appended to `out`.
    pub fn abs_residuals_into(&self, records: &[CoincidenceRecord], offset_ns: f64, out: &mut Vec<f64>) {
        out.extend(records.iter().map(|c| self.residual(c, offset_ns).abs()));
    }

    pub fn residuals(&self, offset_ns: f64) -> Vec<f64> {
        self.coincidences
            .iter()
            .map(|c| self.residual(c, offset_ns))
            .collect()
    }

    /// Median absolute residual at `offset_ns`; the quantity minimised.
    pub fn median_abs(&self, offset_ns: f64) -> f64 {
        let mut r = Vec::with_capacity(self.coincidences.len());
        self.abs_residuals_into(self.coincidences, offset_ns, &mut r);
        median(&mut r)
    }

    /// Checks that the median arrival time of each channel, shifted by any
    /// offset in `search`, stays within `margin_ns` of the curve's domain.
    pub fn check_search(&self, search: Interval, margin_ns: f64) -> Result<()> {
        if !search.is_valid() || search.width() <= 0.0 {
            return Err(Error::invalid("search", "interval must have positive width"));
        }
        let dom = self.curve.time_domain();
        let allowed = Interval::new(dom.lo - margin_ns, dom.hi + margin_ns);
        let mut ts: Vec<f64> = self.coincidences.iter().map(|c| c.times_ns().0).collect();
        let mut ti: Vec<f64> = self
            .coincidences
            .iter()
            .map(|c| c.times_ns().1 + self.idler_skew_ns)
            .collect();
        for t in [median(&mut ts), median(&mut ti)] {
            for shifted in [t + search.lo, t + search.hi] {
                if !allowed.contains(shifted) {
                    return Err(Error::OutOfDomain {
                        quantity: "shifted arrival time",
                        value: shifted,
                        valid: allowed,
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffsetOptions {
    pub grid_points: usize,
    pub tolerance_ns: f64,
    pub domain_margin_ns: f64,
    /// Known extra delay of the idler channel relative to the signal, ns.
    pub idler_skew_ns: f64,
}

impl Default for OffsetOptions {
    fn default() -> Self {
        OffsetOptions {
            grid_points: DEFAULT_OFFSET_GRID,
            tolerance_ns: OFFSET_TOLERANCE_NS,
            domain_margin_ns: DEFAULT_DOMAIN_MARGIN_NS,
            idler_skew_ns: 0.0,
        }
    }
}

/// Distribution of the energy residuals at the recovered offset, nm⁻¹.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualSummary {
    pub count: usize,
    pub median_abs: f64,
    pub mean: f64,
    pub rms: f64,
    pub max_abs: f64,
}

impl ResidualSummary {
    pub fn from_residuals(residuals: &[f64]) -> Self {
        let n = residuals.len();
        let mut abs: Vec<f64> = residuals.iter().map(|r| r.abs()).collect();
        let max_abs = abs.iter().copied().fold(0.0, f64::max);
        let mean = residuals.iter().sum::<f64>() / n as f64;
        let rms = libm::sqrt(residuals.iter().map(|r| r * r).sum::<f64>() / n as f64);
        ResidualSummary {
            count: n,
            median_abs: median(&mut abs),
            mean,
            rms,
            max_abs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffsetSolution {
    pub offset_ns: f64,
    pub idler_skew_ns: f64,
    pub residuals: ResidualSummary,
}

/// Common offset `δτ` minimising the median absolute energy residual.
pub fn solve_offset(
    coincidences: &[CoincidenceRecord],
    curve: &CalibrationCurve,
    pump_nm: f64,
    search: Interval,
    options: OffsetOptions,
) -> Result<OffsetSolution> {
    let objective = EnergyObjective::new(coincidences, curve, pump_nm, options.idler_skew_ns)?;
    solve_offset_by(&objective, search, options, |d| objective.median_abs(d))
}

/// As [`solve_offset`] with a caller-supplied evaluation of the median
/// objective, so that it can be computed in parallel.
pub fn solve_offset_by<F>(
    objective: &EnergyObjective<'_>,
    search: Interval,
    options: OffsetOptions,
    median_abs: F,
) -> Result<OffsetSolution>
where
    F: FnMut(f64) -> f64,
{
    if !(options.tolerance_ns > 0.0) {
        return Err(Error::invalid("tolerance", "must be positive"));
    }
    objective.check_search(search, options.domain_margin_ns)?;
    let (offset_ns, _) = bracketed_minimum(median_abs, search, options.grid_points, options.tolerance_ns)?;
    Ok(OffsetSolution {
        offset_ns,
        idler_skew_ns: objective.idler_skew_ns,
        residuals: ResidualSummary::from_residuals(&objective.residuals(offset_ns)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MappedPair {
    pub signal: f64,
    pub idler: f64,
    /// Either channel was evaluated outside the calibration domain.
    pub extrapolated: bool,
}

impl MappedPair {
    pub fn swapped(self) -> Self {
        MappedPair {
            signal: self.idler,
            idler: self.signal,
            ..self
        }
    }
}

/// `(c(τs + δ), c(τi + δ))` per coincidence.
pub fn map_pairs(
    coincidences: &[CoincidenceRecord],
    curve: &CalibrationCurve,
    offset_ns: f64,
) -> Vec<MappedPair> {
    map_pairs_skewed(coincidences, curve, offset_ns, 0.0)
}

/// As [`map_pairs`] with an extra idler delay `skew` added before mapping.
pub fn map_pairs_skewed(
    coincidences: &[CoincidenceRecord],
    curve: &CalibrationCurve,
    offset_ns: f64,
    idler_skew_ns: f64,
) -> Vec<MappedPair> {
    coincidences
        .iter()
        .map(|c| {
            let (ts, ti) = c.times_ns();
            let s = curve.wavelength_at(ts + offset_ns);
            let i = curve.wavelength_at(ti + idler_skew_ns + offset_ns);
            MappedPair {
                signal: s.wavelength,
                idler: i.wavelength,
                extrapolated: s.extrapolated || i.extrapolated,
            }
        })
        .collect()
}

/// What to do with pairs whose photons took each other's path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SwapPolicy {
    /// Exchange the labels and keep the pair.
    #[default]
    Relabel,
    Discard,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WrongPathSplit {
    pub kept: Vec<MappedPair>,
    /// Wrong-path pairs, already relabelled into signal/idler order.
    pub swapped: Vec<MappedPair>,
    pub discarded: Vec<MappedPair>,
}

impl WrongPathSplit {
    pub fn total(&self) -> usize {
        self.kept.len() + self.swapped.len() + self.discarded.len()
    }

    /// Pairs passed on to the JSI under `policy`.
    pub fn accepted(&self, policy: SwapPolicy) -> Vec<MappedPair> {
        let mut out = self.kept.clone();
        if policy == SwapPolicy::Relabel {
            out.extend_from_slice(&self.swapped);
        }
        out
    }
}

/// Sorts pairs into correctly routed, swapped and unassignable.
pub fn filter_wrong_path(
    pairs: &[MappedPair],
    signal_band: Interval,
    idler_band: Interval,
) -> Result<WrongPathSplit> {
    for (name, band) in [("signal_band", signal_band), ("idler_band", idler_band)] {
        if !band.is_valid() {
            return Err(Error::invalid(name, "need finite lo <= hi"));
        }
    }
    if signal_band.overlaps(&idler_band) {
        return Err(Error::OverlappingBands {
            signal: signal_band,
            idler: idler_band,
        });
    }
    let mut split = WrongPathSplit::default();
    for &p in pairs {
        if signal_band.contains(p.signal) && idler_band.contains(p.idler) {
            split.kept.push(p);
        } else if signal_band.contains(p.idler) && idler_band.contains(p.signal) {
            split.swapped.push(p.swapped());
        } else {
            split.discarded.push(p);
        }
    }
    Ok(split)
}

fn check_edges(name: &'static str, edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(Error::invalid(name, "need at least two edges"));
    }
    if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid(name, "edges must be finite and strictly increasing"));
    }
    Ok(())
}

/// Bin of `x` on `edges`, bins left-closed and right-open.
fn bin_of(edges: &[f64], x: f64) -> Option<usize> {
    if !(x >= edges[0] && x < edges[edges.len() - 1]) {
        return None;
    }
    Some(edges.partition_point(|&e| e <= x) - 1)
}

/// 1D histogram on `edges` with the same binning rule as [`build_jsi`];
/// returns the counts and the number of values outside.
pub fn histogram_1d(values: impl IntoIterator<Item = f64>, edges: &[f64]) -> Result<(Vec<u64>, u64)> {
    check_edges("edges", edges)?;
    let mut counts = vec![0; edges.len() - 1];
    let mut outside = 0;
    for x in values {
        match bin_of(edges, x) {
            Some(k) => counts[k] += 1,
            None => outside += 1,
        }
    }
    Ok((counts, outside))
}

/// `n` equal bins spanning `[lo, hi]`.
pub fn uniform_edges(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if n == 0 || !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::invalid("grid", "need n > 0 and finite lo < hi"));
    }
    let w = (hi - lo) / n as f64;
    Ok((0..=n)
        .map(|k| if k == n { hi } else { lo + w * k as f64 })
        .collect())
}

/// Default grid: `bins` bins spanning ±3 pump-equivalent widths around
/// `center`. A pump FWHM `f` at `λp` maps to `f·(λ/λp)²` at wavelength `λ`.
pub fn default_edges(center: f64, pump_nm: f64, pump_fwhm: f64, bins: usize) -> Result<Vec<f64>> {
    let r = center / pump_nm;
    let half = DEFAULT_JSI_HALF_SPAN * pump_fwhm * r * r;
    uniform_edges(center - half, center + half, bins)
}

/// Measured joint spectral intensity: counts on a signal × idler grid.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSpectrum {
    pub signal_edges: Vec<f64>,
    pub idler_edges: Vec<f64>,
    /// Row-major, one row per signal bin.
    pub counts: Vec<u64>,
    pub offset_ns: f64,
    pub pump_nm: f64,
    /// Pairs with either wavelength outside the grid rectangle.
    pub out_of_range: u64,
}

fn centers(edges: &[f64]) -> Vec<f64> {
    edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
}

/// 2D histogram of `(λs, λi)` pairs. Bins are left-closed and right-open
/// on both axes.
pub fn build_jsi(
    pairs: &[MappedPair],
    signal_edges: Vec<f64>,
    idler_edges: Vec<f64>,
    offset_ns: f64,
    pump_nm: f64,
) -> Result<JointSpectrum> {
    check_edges("signal_grid", &signal_edges)?;
    check_edges("idler_grid", &idler_edges)?;
    let cols = idler_edges.len() - 1;
    let mut jsi = JointSpectrum {
        counts: vec![0; (signal_edges.len() - 1) * cols],
        signal_edges,
        idler_edges,
        offset_ns,
        pump_nm,
        out_of_range: 0,
    };
    for p in pairs {
        match (bin_of(&jsi.signal_edges, p.signal), bin_of(&jsi.idler_edges, p.idler)) {
            (Some(r), Some(c)) => jsi.counts[r * cols + c] += 1,
            _ => jsi.out_of_range += 1,
        }
    }
    Ok(jsi)
}

impl JointSpectrum {
    pub fn rows(&self) -> usize {
        self.signal_edges.len() - 1
    }

    pub fn cols(&self) -> usize {
        self.idler_edges.len() - 1
    }

    pub fn count(&self, row: usize, col: usize) -> u64 {
        self.counts[row * self.cols() + col]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn signal_centers(&self) -> Vec<f64> {
        centers(&self.signal_edges)
    }

    pub fn idler_centers(&self) -> Vec<f64> {
        centers(&self.idler_edges)
    }

    /// Row sums: the signal spectrum of the pairs inside the grid.
    pub fn signal_marginal(&self) -> Vec<u64> {
        self.counts.chunks(self.cols()).map(|r| r.iter().sum()).collect()
    }

    /// Column sums: the idler spectrum of the pairs inside the grid.
    pub fn idler_marginal(&self) -> Vec<u64> {
        let mut out = vec![0; self.cols()];
        for row in self.counts.chunks(self.cols()) {
            for (o, c) in out.iter_mut().zip(row) {
                *o += c;
            }
        }
        out
    }

    /// Centres of the most populated signal and idler bins (first on ties).
    pub fn marginal_peaks(&self) -> Option<(f64, f64)> {
        if self.total() == 0 {
            return None;
        }
        let argmax = |v: &[u64]| {
            v.iter()
                .enumerate()
                .fold((0, 0), |best, (k, &c)| if c > best.1 { (k, c) } else { best })
                .0
        };
        Some((
            self.signal_centers()[argmax(&self.signal_marginal())],
            self.idler_centers()[argmax(&self.idler_marginal())],
        ))
    }

    /// Count-weighted moments over bin centres. `None` when empty.
    pub fn moments(&self) -> Option<PairMoments> {
        let n = self.total() as f64;
        if n == 0.0 {
            return None;
        }
        let (sc, ic) = (self.signal_centers(), self.idler_centers());
        let (mut ms, mut mi) = (0.0, 0.0);
        for (r, row) in self.counts.chunks(self.cols()).enumerate() {
            for (c, &k) in row.iter().enumerate() {
                ms += k as f64 * sc[r];
                mi += k as f64 * ic[c];
            }
        }
        ms /= n;
        mi /= n;
        let (mut vs, mut vi, mut cov) = (0.0, 0.0, 0.0);
        for (r, row) in self.counts.chunks(self.cols()).enumerate() {
            for (c, &k) in row.iter().enumerate() {
                let (ds, di) = (sc[r] - ms, ic[c] - mi);
                let k = k as f64;
                vs += k * ds * ds;
                vi += k * di * di;
                cov += k * ds * di;
            }
        }
        let (vs, vi, cov) = (vs / n, vi / n, cov / n);
        Some(PairMoments {
            mean_signal: ms,
            mean_idler: mi,
            sigma_signal: libm::sqrt(vs),
            sigma_idler: libm::sqrt(vi),
            covariance: cov,
            correlation: cov / libm::sqrt(vs * vi),
        })
    }

    pub fn correlation(&self) -> Option<f64> {
        self.moments().map(|m| m.correlation)
    }
}

/// Band of `1/λs + 1/λi` covered by the pump; unbounded above once the
/// FWHM reaches `2λp`.
fn energy_band(pump_nm: f64, pump_fwhm: f64) -> Interval {
    if pump_fwhm >= 2.0 * pump_nm {
        Interval::new(1.0 / (pump_nm + 0.5 * pump_fwhm), f64::INFINITY)
    } else {
        pump_energy_band(pump_nm, pump_fwhm)
    }
}

/// Fraction of JSI counts whose bin centres satisfy energy conservation to
/// within the pump FWHM.
pub fn pump_envelope_check(jsi: &JointSpectrum, pump_nm: f64, pump_fwhm: f64) -> Result<f64> {
    let total = jsi.total();
    if total == 0 {
        return Err(Error::EmptyHistogram);
    }
    if !(pump_fwhm > 0.0) {
        return Err(Error::invalid("pump_fwhm", "must be positive"));
    }
    let band = energy_band(pump_nm, pump_fwhm);
    let (sc, ic) = (jsi.signal_centers(), jsi.idler_centers());
    let mut inside = 0;
    for (r, row) in jsi.counts.chunks(jsi.cols()).enumerate() {
        for (c, &k) in row.iter().enumerate() {
            if band.contains(1.0 / sc[r] + 1.0 / ic[c]) {
                inside += k;
            }
        }
    }
    Ok(inside as f64 / total as f64)
}

/// As [`pump_envelope_check`] on unbinned pairs.
pub fn pump_envelope_fraction(pairs: &[MappedPair], pump_nm: f64, pump_fwhm: f64) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::NoEvents);
    }
    if !(pump_fwhm > 0.0) {
        return Err(Error::invalid("pump_fwhm", "must be positive"));
    }
    let band = energy_band(pump_nm, pump_fwhm);
    let inside = pairs
        .iter()
        .filter(|p| band.contains(1.0 / p.signal + 1.0 / p.idler))
        .count();
    Ok(inside as f64 / pairs.len() as f64)
}

/// Correlation of a pair distribution after independent Gaussian
/// broadening of each arm by the given extra variances (nm²).
pub fn broadened_correlation(m: &PairMoments, extra_var_signal: f64, extra_var_idler: f64) -> f64 {
    let vs = m.sigma_signal * m.sigma_signal + extra_var_signal;
    let vi = m.sigma_idler * m.sigma_idler + extra_var_idler;
    m.covariance / libm::sqrt(vs * vi)
}
