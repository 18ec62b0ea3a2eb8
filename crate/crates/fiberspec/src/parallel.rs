//! Multi-threaded drivers for the core algorithms.
//!
//! Work is split into fixed-size chunks that do not depend on the thread
//! count, and chunk results are concatenated in order. Together with the
//! per-pulse random substreams this makes every result bit-identical for
//! any number of threads.

use std::ops::Range;

use rayon::prelude::*;

use fiberspec_core::calibration::CalibrationCurve;
use fiberspec_core::jsi::{self, CoincidenceRecord, EnergyObjective, OffsetOptions, OffsetSolution};
use fiberspec_core::reconstruction::{Binned, TimeHistogram};
use fiberspec_core::simulator::{EventRecord, PairSetup, SingleChannelSetup, TracedCoincidence};
use fiberspec_core::{Interval, Result};

/// Pulses simulated per task.
pub const PULSE_CHUNK: u64 = 1 << 14;
/// Records processed per task in histogramming and residual evaluation.
pub const RECORD_CHUNK: usize = 1 << 15;

/// Runs `f` on a pool of `threads` workers (`0` = rayon's default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool")
        .install(f)
}

fn chunks(total: u64) -> Vec<Range<u64>> {
    (0..total.div_ceil(PULSE_CHUNK))
        .map(|c| c * PULSE_CHUNK..((c + 1) * PULSE_CHUNK).min(total))
        .collect()
}

fn concat<T>(parts: Result<Vec<Vec<T>>>) -> Result<Vec<T>> {
    Ok(parts?.into_iter().flatten().collect())
}

pub fn simulate_single(setup: &SingleChannelSetup<'_>, seed: u64) -> Result<Vec<EventRecord>> {
    setup.validate()?;
    concat(
        chunks(setup.run.pulse_count)
            .into_par_iter()
            .map(|r| setup.simulate_range(r, seed))
            .collect(),
    )
}

pub fn simulate_pairs_traced(setup: &PairSetup<'_>, seed: u64) -> Result<Vec<TracedCoincidence>> {
    setup.validate()?;
    concat(
        chunks(setup.run.pulse_count)
            .into_par_iter()
            .map(|r| setup.simulate_traced_range(r, seed))
            .collect(),
    )
}

pub fn simulate_pairs(setup: &PairSetup<'_>, seed: u64) -> Result<Vec<CoincidenceRecord>> {
    Ok(simulate_pairs_traced(setup, seed)?
        .into_iter()
        .map(|t| t.record)
        .collect())
}

/// Parallel [`fiberspec_core::reconstruction::histogram`].
pub fn histogram(events: &[EventRecord], bin_width_ps: i64, range: (i64, i64)) -> Result<Binned> {
    let empty = TimeHistogram::empty(bin_width_ps, range)?;
    let (histogram, out_of_range) = events
        .par_chunks(RECORD_CHUNK)
        .map(|chunk| {
            let mut h = empty.clone();
            let outside = chunk.iter().filter(|e| !h.insert(e.timestamp_ps)).count() as u64;
            (h, outside)
        })
        .reduce(
            || (empty.clone(), 0),
            |(mut a, na), (b, nb)| {
                a.merge(&b).expect("identical binning");
                (a, na + nb)
            },
        );
    Ok(Binned {
        histogram,
        out_of_range,
    })
}

/// Median absolute residual with the residuals computed in parallel.
pub fn median_abs(objective: &EnergyObjective<'_>, offset_ns: f64) -> f64 {
    let mut all: Vec<f64> = objective
        .coincidences()
        .par_chunks(RECORD_CHUNK)
        .flat_map_iter(|chunk| {
            let mut out = Vec::with_capacity(chunk.len());
            objective.abs_residuals_into(chunk, offset_ns, &mut out);
            out
        })
        .collect();
    jsi::median(&mut all)
}

/// Parallel [`fiberspec_core::jsi::solve_offset`].
pub fn solve_offset(
    coincidences: &[CoincidenceRecord],
    curve: &CalibrationCurve,
    pump_nm: f64,
    search: Interval,
    options: OffsetOptions,
) -> Result<OffsetSolution> {
    let objective = EnergyObjective::new(coincidences, curve, pump_nm, options.idler_skew_ns)?;
    jsi::solve_offset_by(&objective, search, options, |d| median_abs(&objective, d))
}
