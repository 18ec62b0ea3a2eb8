//! Command-line front end.
//!
//! Every subcommand flag is translated into a config override, so the echoed
//! configuration is the complete description of a run.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use fiberspec_core::calibration::{fit_calibration_with, CalibrationCurve, Monotonicity};
use fiberspec_core::jsi::{self, OffsetOptions};
use fiberspec_core::pdc::JointSpectralModel;
use fiberspec_core::reconstruction::{self, ReconstructOptions};
use fiberspec_core::simulator::{Channel, PairSetup, SingleChannelSetup};
use fiberspec_core::Interval;

use crate::config::{split_assignment, RunConfig};
use crate::error::{AppError, AppResult, Context};
use crate::formats::{self, Provenance};
use crate::parallel;

#[derive(Debug, Parser)]
#[command(name = "fiberspec", version, about = "Dispersive-fiber single-photon spectroscopy toolkit")]
pub struct Cli {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Override a configuration key; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,

    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads (0 = all cores). Does not affect results.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Mode {
    Single,
    Pairs,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate detector events (single) or coincidences (pairs).
    Simulate {
        #[arg(value_enum)]
        mode: Option<Mode>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        pulses: Option<u64>,
        /// Also write the model JSI on the analysis grid (pairs only).
        #[arg(long)]
        truth_jsi: Option<PathBuf>,
    },
    /// Fit a calibration curve to reference points.
    Calibrate {
        #[arg(long)]
        points: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        degree: Option<usize>,
        /// Accept a curve that is not monotonic on its domain.
        #[arg(long)]
        allow_non_monotonic: bool,
        /// Timing jitter used for the per-point resolution report, ps.
        #[arg(long)]
        sigma_ps: Option<f64>,
    },
    /// Turn an event file into a spectrum.
    Reconstruct {
        #[arg(long)]
        events: Option<PathBuf>,
        #[arg(long)]
        curve: Option<PathBuf>,
        #[arg(long)]
        efficiency: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Channel to use: any, S, I or X.
        #[arg(long)]
        channel: Option<String>,
        #[arg(long)]
        bin_ps: Option<i64>,
        /// Report raw counts per bin instead of a density per nm.
        #[arg(long)]
        no_jacobian: bool,
    },
    /// Recover the offset and build the joint spectral intensity.
    Jsi {
        #[arg(long)]
        coinc: Option<PathBuf>,
        #[arg(long)]
        curve: Option<PathBuf>,
        /// Pump wavelength, nm.
        #[arg(long)]
        pump: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        marginals: Option<PathBuf>,
        /// Offset search interval `lo,hi` in ns.
        #[arg(long, allow_hyphen_values = true)]
        search: Option<String>,
        /// Drop wrong-path pairs instead of relabelling them.
        #[arg(long)]
        discard_swapped: bool,
    },
    /// Tabulate the spectral resolution of a curve.
    Resolution {
        #[arg(long)]
        curve: Option<PathBuf>,
        #[arg(long)]
        sigma_ps: Option<f64>,
        /// Comma-separated wavelengths, nm.
        #[arg(long)]
        at: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check whether the stretched spectrum overlaps the next pulse.
    CheckAliasing {
        #[arg(long)]
        model: Option<PathBuf>,
        /// Spectrum support `lo,hi` in nm.
        #[arg(long)]
        support: Option<String>,
        #[arg(long)]
        period_ns: Option<f64>,
    },
}

fn path_str(p: &std::path::Path) -> String {
    p.display().to_string()
}

impl Cli {
    /// Config overrides implied by the flags, applied after `--set`.
    fn overrides(&self) -> AppResult<Vec<(String, String)>> {
        let mut o = Vec::new();
        for s in &self.set {
            o.push(split_assignment(s).ok_or_else(|| {
                AppError::Usage(format!("--set expects KEY=VALUE, got `{s}`"))
            })?);
        }
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                o.push((k.to_string(), v));
            }
        };
        put("seed", self.seed.map(|s| s.to_string()));
        put("threads", self.threads.map(|t| t.to_string()));
        let p = |x: &Option<PathBuf>| x.as_deref().map(path_str);
        match &self.command {
            Command::Simulate { mode, out, pulses, truth_jsi } => {
                put("simulate.mode", mode.map(|m| match m {
                    Mode::Single => "single".into(),
                    Mode::Pairs => "pairs".into(),
                }));
                put("simulate.out", p(out));
                put("source.pulses", pulses.map(|n| n.to_string()));
                put("simulate.truth_jsi", p(truth_jsi));
            }
            Command::Calibrate { points, out, degree, allow_non_monotonic, sigma_ps } => {
                put("calibrate.points", p(points));
                put("calibrate.out", p(out));
                put("calibrate.degree", degree.map(|d| d.to_string()));
                put("calibrate.allow_non_monotonic", allow_non_monotonic.then(|| "true".into()));
                put("calibrate.sigma_ps", sigma_ps.map(|s| s.to_string()));
            }
            Command::Reconstruct { events, curve, efficiency, out, channel, bin_ps, no_jacobian } => {
                put("reconstruct.events", p(events));
                put("reconstruct.curve", p(curve));
                put("reconstruct.efficiency", p(efficiency));
                put("reconstruct.out", p(out));
                put("reconstruct.channel", channel.clone());
                put("reconstruct.bin_ps", bin_ps.map(|b| b.to_string()));
                put("reconstruct.jacobian", no_jacobian.then(|| "false".into()));
            }
            Command::Jsi { coinc, curve, pump, out, marginals, search, discard_swapped } => {
                put("jsi.coinc", p(coinc));
                put("jsi.curve", p(curve));
                put("pdc.pump_nm", pump.map(|x| x.to_string()));
                put("jsi.out", p(out));
                put("jsi.marginals", p(marginals));
                put("jsi.search_ns", search.clone());
                put("jsi.swapped", discard_swapped.then(|| "discard".into()));
            }
            Command::Resolution { curve, sigma_ps, at, out } => {
                put("resolution.curve", p(curve));
                put("resolution.sigma_ps", sigma_ps.map(|s| s.to_string()));
                put("resolution.wavelengths", at.clone());
                put("resolution.out", p(out));
            }
            Command::CheckAliasing { model, support, period_ns } => {
                put("fiber.model", p(model));
                put("aliasing.support", support.clone());
                put("aliasing.period_ns", period_ns.map(|x| x.to_string()));
            }
        }
        Ok(o)
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Reports go to `out`, diagnostics to `err`.
pub fn main_with(args: impl IntoIterator<Item = OsString>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    match run(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> AppResult<()> {
    let cfg = RunConfig::resolve(cli.config.as_deref(), &cli.overrides()?)?;
    let threads = cfg.usize("threads")?;
    let prov = Provenance {
        config_hash: cfg.hash(),
        seed: cfg.seed()?,
    };
    let mut report = String::new();
    report.push_str(&cfg.echo());
    let _ = writeln!(report, "seed: {}", prov.seed);
    let result = parallel::with_threads(threads, || match &cli.command {
        Command::Simulate { .. } => simulate(&cfg, &prov, &mut report),
        Command::Calibrate { .. } => calibrate(&cfg, &prov, &mut report),
        Command::Reconstruct { .. } => reconstruct(&cfg, &prov, &mut report),
        Command::Jsi { .. } => joint_spectrum(&cfg, &prov, &mut report),
        Command::Resolution { .. } => resolution(&cfg, &prov, &mut report),
        Command::CheckAliasing { .. } => check_aliasing(&cfg, &mut report),
    });
    let _ = out.write_all(report.as_bytes());
    result
}

fn simulate(cfg: &RunConfig, prov: &Provenance, report: &mut String) -> AppResult<()> {
    let out = cfg.output("simulate.out")?;
    let fiber = cfg.fiber()?;
    let run = cfg.run()?;
    match cfg.raw("simulate.mode") {
        "single" => {
            let spectrum = cfg.source_spectrum()?;
            let detector = cfg.detector(None)?;
            let setup = SingleChannelSetup {
                spectrum: &spectrum,
                fiber: &fiber,
                detector: &detector,
                run,
                window_ps: None,
            };
            setup.validate().context("simulate")?;
            let events = parallel::simulate_single(&setup, prov.seed).context("simulate")?;
            formats::write_text(&out, &formats::render_events(&events, prov))?;
            let _ = writeln!(report, "pulses: {}", run.pulse_count);
            let _ = writeln!(report, "events: {}", events.len());
        }
        "pairs" => {
            let model = JointSpectralModel::new(cfg.pdc()?).map_err(|e| AppError::config("pdc", e.to_string()))?;
            let signal = cfg.detector(Some("signal"))?;
            let idler = cfg.detector(Some("idler"))?;
            let setup = PairSetup {
                model: &model,
                fiber: &fiber,
                signal_detector: &signal,
                idler_detector: &idler,
                run,
                windows_ps: None,
            };
            setup.validate().context("simulate")?;
            let truth = cfg.path("simulate.truth_jsi");
            let coinc = parallel::simulate_pairs(&setup, prov.seed).context("simulate")?;
            formats::write_text(&out, &formats::render_coincidences(&coinc, prov))?;
            let _ = writeln!(report, "pulses: {}", run.pulse_count);
            let _ = writeln!(report, "coincidences: {}", coinc.len());
            if let Some(path) = truth {
                let p = model.params();
                let bins = cfg.usize("jsi.bins")?;
                let se = jsi::uniform_edges(p.signal_range.lo, p.signal_range.hi, bins).context("truth grid")?;
                let ie = jsi::uniform_edges(p.idler_range.lo, p.idler_range.hi, bins).context("truth grid")?;
                let centers = |e: &[f64]| e.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect::<Vec<_>>();
                let (sc, ic) = (centers(&se), centers(&ie));
                let rows = sc
                    .iter()
                    .map(|&s| ic.iter().map(|&i| model.jsi_value(s, i)).collect::<Result<Vec<_>, _>>())
                    .collect::<Result<Vec<_>, _>>()
                    .context("truth JSI")?;
                let comments = [format!("pump_nm={:?}", p.pump_center), "model=double-gaussian".into()];
                let text = formats::render_matrix(&sc, &ic, rows.into_iter(), &comments, prov);
                formats::write_text(&path, &text)?;
            }
        }
        other => {
            return Err(AppError::config("simulate.mode", format!("expected single or pairs, got `{other}`")))
        }
    }
    let _ = writeln!(report, "wrote: {}", out.display());
    Ok(())
}

fn calibrate(cfg: &RunConfig, prov: &Provenance, report: &mut String) -> AppResult<()> {
    let points_path = cfg.input("calibrate.points")?;
    let out = cfg.output("calibrate.out")?;
    let degree = cfg.usize("calibrate.degree")?;
    let sigma_ns = cfg.positive("calibrate.sigma_ps")? * 1e-3;
    let mono = if cfg.bool("calibrate.allow_non_monotonic")? {
        Monotonicity::Allow
    } else {
        Monotonicity::Require
    };
    let points = formats::load(&points_path, formats::parse_points)?;
    let curve = fit_calibration_with(&points, degree, mono).context("calibrate")?;
    formats::write_text(&out, &formats::render_curve(&curve, prov))?;

    let coeffs: Vec<String> = curve.coefficients().iter().map(|c| format!("{c:?}")).collect();
    let _ = writeln!(report, "coefficients: {}", coeffs.join(","));
    let d = curve.time_domain();
    let _ = writeln!(report, "time_domain_ns: {:?},{:?}", d.lo, d.hi);
    if let Some(t) = curve.monotonicity_violation() {
        let _ = writeln!(report, "warning: curve is not monotonic (slope changes sign near {t:.3} ns)");
    }
    let _ = writeln!(report, "# wavelength_nm,time_ns,residual_nm,resolution_nm");
    for (p, r) in points.iter().zip(curve.residuals()) {
        let res = match curve.resolution_at(p.reference_wavelength, sigma_ns) {
            Ok(v) => format!("{v:.6}"),
            Err(e) => format!("n/a ({e})"),
        };
        let _ = writeln!(
            report,
            "point: {},{},{:e},{res}",
            p.reference_wavelength, p.arrival_time, r
        );
    }
    let _ = writeln!(report, "wrote: {}", out.display());
    Ok(())
}

fn load_curve(key: &str, cfg: &RunConfig) -> AppResult<CalibrationCurve> {
    let path = cfg.input(key)?;
    formats::load(&path, formats::parse_curve)
}

fn reconstruct(cfg: &RunConfig, prov: &Provenance, report: &mut String) -> AppResult<()> {
    let events_path = cfg.input("reconstruct.events")?;
    let curve = load_curve("reconstruct.curve", cfg)?;
    let efficiency = match cfg.optional_input("reconstruct.efficiency")? {
        Some(p) => Some(formats::load(&p, formats::parse_efficiency)?),
        None => None,
    };
    let out = cfg.output("reconstruct.out")?;
    let bin = cfg.i64("reconstruct.bin_ps")?;
    if bin <= 0 {
        return Err(AppError::config("reconstruct.bin_ps", "must be > 0"));
    }
    let tdc = cfg.detector(None)?.tdc_bin_ps;
    let options = ReconstructOptions {
        jacobian: cfg.bool("reconstruct.jacobian")?,
        unreliable_threshold: cfg.f64("reconstruct.unreliable_below")?,
    };
    let channel = match cfg.raw("reconstruct.channel") {
        "any" => None,
        c => Some(Channel::from_code(c).ok_or_else(|| {
            AppError::config("reconstruct.channel", format!("expected any, S, I or X, got `{c}`"))
        })?),
    };

    let mut events = formats::load(&events_path, formats::parse_events)?;
    if let Some(c) = channel {
        events.retain(|e| e.channel == c);
    }
    let range = reconstruction::tdc_aligned_range(events.iter().map(|e| e.timestamp_ps), tdc)
        .ok_or_else(|| AppError::Domain {
            context: "reconstruct".into(),
            source: fiberspec_core::Error::EmptyHistogram,
        })?;
    let binned = parallel::histogram(&events, bin, range).context("histogram")?;
    let peak = reconstruction::find_peak(&binned.histogram).context("peak")?;
    let spectrum = reconstruction::to_spectrum(&binned.histogram, &curve, efficiency.as_ref(), options)
        .context("reconstruct")?;
    formats::write_text(&out, &formats::render_spectrum(&spectrum, prov))?;

    let _ = writeln!(report, "events: {}", events.len());
    let _ = writeln!(report, "bins: {}", binned.histogram.counts.len());
    let _ = writeln!(report, "peak_ns: {peak:.4}");
    let _ = writeln!(report, "peak_nm: {:.4}", curve.wavelength_at(peak).wavelength);
    if let Some((c, w)) = spectrum.center_and_fwhm() {
        let _ = writeln!(report, "center_nm: {c:.4}");
        let _ = writeln!(report, "fwhm_nm: {w:.4}");
    }
    let extrapolated = spectrum.points.iter().filter(|p| p.flags.extrapolated).count();
    let _ = writeln!(report, "extrapolated_bins: {extrapolated}");
    let _ = writeln!(report, "wrote: {}", out.display());
    Ok(())
}

fn joint_spectrum(cfg: &RunConfig, prov: &Provenance, report: &mut String) -> AppResult<()> {
    let coinc_path = cfg.input("jsi.coinc")?;
    let curve = load_curve("jsi.curve", cfg)?;
    let out = cfg.output("jsi.out")?;
    let marginals = cfg.path("jsi.marginals");
    let params = cfg.pdc()?;
    let search = cfg.interval("jsi.search_ns")?;
    let options = OffsetOptions {
        grid_points: cfg.usize("jsi.grid_points")?,
        domain_margin_ns: cfg.f64("jsi.margin_ns")?,
        idler_skew_ns: cfg.f64("jsi.idler_skew_ns")?,
        ..Default::default()
    };
    let signal_band = cfg.band("jsi.signal_band", "pdc.signal_range")?;
    let idler_band = cfg.band("jsi.idler_band", "pdc.idler_range")?;
    let policy = cfg.swap_policy()?;
    let bins = cfg.usize("jsi.bins")?;
    let edges = |center: f64, key: &str| {
        jsi::default_edges(center, params.pump_center, params.pump_fwhm, bins)
            .map_err(|e| AppError::config(key, e.to_string()))
    };
    let signal_edges = edges(params.signal_center, "pdc.signal_nm")?;
    let idler_edges = edges(params.idler_center, "pdc.idler_nm")?;

    let coinc = formats::load(&coinc_path, formats::parse_coincidences)?;
    let solution = parallel::solve_offset(&coinc, &curve, params.pump_center, search, options)
        .context("offset")?;
    let pairs = jsi::map_pairs_skewed(&coinc, &curve, solution.offset_ns, solution.idler_skew_ns);
    let split = jsi::filter_wrong_path(&pairs, signal_band, idler_band).context("wrong-path filter")?;
    let accepted = split.accepted(policy);
    let jsi = jsi::build_jsi(&accepted, signal_edges, idler_edges, solution.offset_ns, params.pump_center)
        .context("jsi")?;
    formats::write_text(&out, &formats::render_jsi(&jsi, prov))?;
    if let Some(path) = &marginals {
        formats::write_text(path, &formats::render_marginals(&jsi, prov))?;
    }

    let r = &solution.residuals;
    let _ = writeln!(report, "coincidences: {}", coinc.len());
    let _ = writeln!(report, "offset_ns: {:.4}", solution.offset_ns);
    let _ = writeln!(report, "residual_median_abs: {:e}", r.median_abs);
    let _ = writeln!(report, "residual_mean: {:e}", r.mean);
    let _ = writeln!(report, "residual_rms: {:e}", r.rms);
    let _ = writeln!(report, "kept: {}", split.kept.len());
    let _ = writeln!(report, "swapped: {}", split.swapped.len());
    let _ = writeln!(report, "discarded: {}", split.discarded.len());
    let _ = writeln!(report, "extrapolated: {}", pairs.iter().filter(|p| p.extrapolated).count());
    let _ = writeln!(report, "out_of_grid: {}", jsi.out_of_range);
    if let Some(rho) = jsi.correlation() {
        let _ = writeln!(report, "correlation: {rho:.4}");
    }
    if let Some((s, i)) = jsi.marginal_peaks() {
        let _ = writeln!(report, "marginal_peaks_nm: {s:.3},{i:.3}");
    }
    if let Ok(f) = jsi::pump_envelope_check(&jsi, params.pump_center, params.pump_fwhm) {
        let _ = writeln!(report, "pump_envelope_fraction: {f:.4}");
    }
    let _ = writeln!(report, "wrote: {}", out.display());
    Ok(())
}

fn resolution(cfg: &RunConfig, prov: &Provenance, report: &mut String) -> AppResult<()> {
    let curve = load_curve("resolution.curve", cfg)?;
    let sigma_ns = cfg.positive("resolution.sigma_ps")? * 1e-3;
    let mut at = cfg.list("resolution.wavelengths")?;
    if at.is_empty() {
        let range = curve.wavelength_range();
        at = (0..=10).map(|k| range.lo + range.width() * k as f64 / 10.0).collect();
    }
    let mut table = String::from("# resolution v1\n");
    table.push_str(&prov.comment());
    table.push('\n');
    let _ = writeln!(table, "# sigma_ps={:?}", sigma_ns * 1e3);
    let _ = writeln!(report, "# wavelength_nm,resolution_nm");
    for l in at {
        let value = curve.resolution_at(l, sigma_ns).context(format!("resolution at {l} nm"))?;
        let _ = writeln!(report, "resolution: {l},{value:.6}");
        let _ = writeln!(table, "{l:?},{value:?}");
    }
    if let Some(path) = cfg.path("resolution.out") {
        formats::write_text(&path, &table)?;
        let _ = writeln!(report, "wrote: {}", path.display());
    }
    Ok(())
}

fn check_aliasing(cfg: &RunConfig, report: &mut String) -> AppResult<()> {
    let fiber = cfg.fiber()?;
    let (lo, hi) = cfg.pair("aliasing.support")?;
    if !(lo <= hi) {
        return Err(AppError::config("aliasing.support", "need lo <= hi"));
    }
    let period = cfg.positive("aliasing.period_ns")?;
    let r = fiber
        .check_aliasing(Interval::new(lo, hi), period)
        .context("check-aliasing")?;
    let _ = writeln!(report, "support_nm: {lo},{hi}");
    let _ = writeln!(report, "period_ns: {period}");
    let _ = writeln!(report, "spread_ns: {:.4}", r.spread_ns);
    let _ = writeln!(report, "verdict: {}", if r.aliased { "aliased" } else { "ok" });
    Ok(())
}
