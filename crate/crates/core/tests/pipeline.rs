//! Forward model through the inverse pipeline, single-threaded.

use fiberspec_core::calibration::{fit_calibration, points_from_model, CalibrationCurve};
use fiberspec_core::dispersion::FiberDispersionModel;
use fiberspec_core::jsi::{self, SwapPolicy};
use fiberspec_core::pdc::{JointSpectralModel, JointSpectralParams};
use fiberspec_core::reconstruction::{self, ReconstructOptions};
use fiberspec_core::simulator::{
    DetectorModel, EfficiencyCurve, PairSetup, SingleChannelSetup, SourceRun, SourceSpectrum,
};
use fiberspec_core::Interval;

fn fiber() -> FiberDispersionModel {
    FiberDispersionModel::from_linear_gvd(
        (1325.0, -0.11),
        (1575.0, -0.25),
        1531.0,
        1874.0,
        Interval::new(1325.0, 1575.0),
    )
    .unwrap()
}

fn curve(band: Interval) -> CalibrationCurve {
    fit_calibration(&points_from_model(&fiber(), band, 41).unwrap(), 4).unwrap()
}

fn run(pulses: u64) -> SourceRun {
    SourceRun { pulse_count: pulses, ..Default::default() }
}

#[test]
fn ideal_detector_puts_a_line_at_its_wavelength() {
    let f = fiber();
    let spectrum = SourceSpectrum::delta(1547.3).unwrap();
    let det = DetectorModel {
        jitter_sigma_ps: 0.0,
        tdc_bin_ps: 1,
        dark_count_prob_per_gate: 0.0,
        ..Default::default()
    };
    let setup = SingleChannelSetup { spectrum: &spectrum, fiber: &f, detector: &det, run: run(500), window_ps: None };
    let events = setup.simulate(3).unwrap();
    let binned = reconstruction::histogram(&events, 1, (1_800_000, 1_900_000)).unwrap();
    let peak = reconstruction::find_peak(&binned.histogram).unwrap();
    let c = curve(Interval::new(1520.0, 1570.0));
    assert!((c.wavelength_at(peak).wavelength - 1547.3).abs() < 5e-3);
}

#[test]
fn efficiency_correction_undoes_a_sloped_detector() {
    let f = fiber();
    let spectrum = SourceSpectrum::flat(1500.0, 1560.0).unwrap();
    let eff = EfficiencyCurve::new(vec![(1490.0, 0.1), (1570.0, 0.4)]).unwrap();
    let det = DetectorModel { efficiency: eff.clone(), dark_count_prob_per_gate: 0.0, ..Default::default() };
    let setup = SingleChannelSetup { spectrum: &spectrum, fiber: &f, detector: &det, run: run(400_000), window_ps: None };
    let events = setup.simulate(9).unwrap();
    let range = reconstruction::tdc_aligned_range(events.iter().map(|e| e.timestamp_ps), 81).unwrap();
    let binned = reconstruction::histogram(&events, 81, range).unwrap();
    let c = curve(Interval::new(1490.0, 1570.0));
    let s = reconstruction::to_spectrum(&binned.histogram, &c, Some(&eff), ReconstructOptions::default()).unwrap();

    // Compare 10 nm windows at both ends of the band: equal after correction.
    let window = |lo: f64| {
        let (n, w) = s
            .points
            .iter()
            .filter(|p| p.wavelength_nm >= lo && p.wavelength_nm < lo + 10.0)
            .fold((0.0, 0.0), |(n, w), p| (n + p.intensity * p.width_nm, w + p.width_nm));
        n / w
    };
    let (blue, red) = (window(1505.0), window(1545.0));
    assert!((blue / red - 1.0).abs() < 0.05, "{blue} vs {red}");
}

#[test]
fn pair_pipeline_recovers_offset_and_ridge() {
    let f = fiber();
    let params = JointSpectralParams::default();
    let model = JointSpectralModel::new(params).unwrap();
    let det = DetectorModel::default();
    let setup = PairSetup {
        model: &model,
        fiber: &f,
        signal_detector: &det,
        idler_detector: &det,
        run: run(40_000),
        windows_ps: None,
    };
    let shift_ps = 3_000;
    let coinc: Vec<_> = setup
        .simulate(21)
        .unwrap()
        .into_iter()
        .map(|mut c| {
            c.ts_signal_ps -= shift_ps;
            c.ts_idler_ps -= shift_ps;
            c
        })
        .collect();
    let c = curve(Interval::new(1490.0, 1570.0));
    let sol = jsi::solve_offset(&coinc, &c, 765.0, Interval::new(-20.0, 20.0), Default::default()).unwrap();
    assert!((sol.offset_ns - 3.0).abs() < 0.081, "{}", sol.offset_ns);

    let pairs = jsi::map_pairs(&coinc, &c, sol.offset_ns);
    let split = jsi::filter_wrong_path(&pairs, params.signal_range, params.idler_range).unwrap();
    assert_eq!(split.total(), coinc.len());
    // Routing contrast 0.8: swapped pairs are 0.04 / 0.68 of coincidences.
    let swapped = split.swapped.len() as f64 / coinc.len() as f64;
    assert!((swapped - 0.04 / 0.68).abs() < 0.01, "{swapped}");

    let accepted = split.accepted(SwapPolicy::Relabel);
    let se = jsi::default_edges(1544.0, 765.0, 1.9, 64).unwrap();
    let ie = jsi::default_edges(1517.0, 765.0, 1.9, 64).unwrap();
    let j = jsi::build_jsi(&accepted, se, ie, sol.offset_ns, 765.0).unwrap();
    assert!(j.correlation().unwrap() > 0.6);
    let fraction = jsi::pump_envelope_fraction(&accepted, 765.0, 1.9).unwrap();
    assert!(fraction > 0.7 && fraction < 0.77, "{fraction}");
}
