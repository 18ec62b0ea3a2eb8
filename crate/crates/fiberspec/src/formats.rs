//! Line-oriented text formats.
//!
//! Every file starts with a `# <kind> v1` line, followed by a provenance
//! comment and the records. Floats are written in Rust's shortest
//! round-trip form, so reading a file back reproduces the written values.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use fiberspec_core::calibration::{CalibrationCurve, CalibrationPoint};
use fiberspec_core::dispersion::FiberDispersionModel;
use fiberspec_core::jsi::{CoincidenceRecord, JointSpectrum};
use fiberspec_core::poly::Polynomial;
use fiberspec_core::reconstruction::{PointFlags, Spectrum, SpectrumPoint};
use fiberspec_core::simulator::{Channel, EfficiencyCurve, EventRecord};
use fiberspec_core::Interval;

use crate::error::{AppError, AppResult};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const MODEL_HEADER: &str = "# dispersion-model v1";
pub const CURVE_HEADER: &str = "# calibration-curve v1";
pub const EVENTS_HEADER: &str = "# events v1";
pub const COINC_HEADER: &str = "# coinc v1";
pub const SPECTRUM_HEADER: &str = "# spectrum v1";
pub const JSI_HEADER: &str = "# jsi v1";
pub const MARGINALS_HEADER: &str = "# marginals v1";

/// Tool version, hash of the resolved configuration and seed of a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn comment(&self) -> String {
        format!(
            "# fiberspec {VERSION} config={} seed={}",
            self.config_hash, self.seed
        )
    }
}

/// A parse failure at a 1-based line number.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub line: usize,
    pub reason: String,
}

impl ParseError {
    fn new(line: usize, reason: impl Into<String>) -> Self {
        ParseError {
            line,
            reason: reason.into(),
        }
    }

    pub fn at(self, path: &Path) -> AppError {
        AppError::Parse {
            path: path.to_path_buf(),
            line: self.line,
            reason: self.reason,
        }
    }
}

type Parsed<T> = Result<T, ParseError>;

pub fn read_text(path: &Path) -> AppResult<String> {
    fs::read_to_string(path).map_err(|source| AppError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> AppResult<()> {
    fs::write(path, text).map_err(|source| AppError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads `path` and parses it with `parse`, attaching the path to errors.
pub fn load<T>(path: &Path, parse: impl FnOnce(&str) -> Parsed<T>) -> AppResult<T> {
    parse(&read_text(path)?).map_err(|e| e.at(path))
}

fn num<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Parsed<T> {
    s.trim()
        .parse()
        .map_err(|_| ParseError::new(line, format!("bad {what} `{}`", s.trim())))
}

fn pair(s: &str, line: usize, what: &str) -> Parsed<(f64, f64)> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| ParseError::new(line, format!("{what} needs two comma-separated values")))?;
    Ok((num(a, line, what)?, num(b, line, what)?))
}

/// Content lines with their 1-based numbers: blank lines and `#` comments
/// are skipped.
fn records(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn expect_header(text: &str, header: &str) -> Parsed<()> {
    match text.lines().next() {
        Some(first) if first.trim() == header => Ok(()),
        _ => Err(ParseError::new(1, format!("expected `{header}`"))),
    }
}

fn fields<const N: usize>(line: &str, n: usize) -> Parsed<[&str; N]> {
    let parts: Vec<&str> = line.split(',').map(str::trim).collect();
    parts
        .try_into()
        .map_err(|p: Vec<&str>| ParseError::new(n, format!("expected {N} fields, found {}", p.len())))
}

fn start(header: &str, prov: &Provenance) -> String {
    let mut s = String::new();
    s.push_str(header);
    s.push('\n');
    s.push_str(&prov.comment());
    s.push('\n');
    s
}

/// Key/value body shared by the model and curve files.
fn key_values(text: &str, header: &str) -> Parsed<BTreeMap<String, (usize, String)>> {
    expect_header(text, header)?;
    let mut map = BTreeMap::new();
    for (n, line) in records(text) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ParseError::new(n, "expected key=value"))?;
        if map.insert(k.trim().to_string(), (n, v.trim().to_string())).is_some() {
            return Err(ParseError::new(n, format!("duplicate key `{}`", k.trim())));
        }
    }
    Ok(map)
}

fn take<'m>(map: &'m BTreeMap<String, (usize, String)>, key: &str) -> Parsed<(usize, &'m str)> {
    map.get(key)
        .map(|(n, v)| (*n, v.as_str()))
        .ok_or_else(|| ParseError::new(1, format!("missing key `{key}`")))
}

fn coefficients(map: &BTreeMap<String, (usize, String)>) -> Parsed<Vec<f64>> {
    let (n, d) = take(map, "degree")?;
    let degree: usize = num(d, n, "degree")?;
    (0..=degree)
        .map(|i| {
            let (n, v) = take(map, &format!("coeff{i}"))?;
            num(v, n, "coefficient")
        })
        .collect()
}

fn check_keys(map: &BTreeMap<String, (usize, String)>, allowed: &[&str], degree: usize) -> Parsed<()> {
    for (k, (n, _)) in map {
        let coeff = k
            .strip_prefix("coeff")
            .and_then(|i| i.parse::<usize>().ok())
            .is_some_and(|i| i <= degree);
        if !coeff && !allowed.contains(&k.as_str()) {
            return Err(ParseError::new(*n, format!("unknown key `{k}`")));
        }
    }
    Ok(())
}

fn write_coefficients(s: &mut String, coeffs: &[f64]) {
    let _ = writeln!(s, "degree={}", coeffs.len() - 1);
    for (i, c) in coeffs.iter().enumerate() {
        let _ = writeln!(s, "coeff{i}={c:?}");
    }
}

/// Delay polynomial `τ(λ)` in plain ascending powers of λ.
pub fn render_model(model: &FiberDispersionModel, prov: &Provenance) -> String {
    let mut s = start(MODEL_HEADER, prov);
    write_coefficients(&mut s, &model.delay_polynomial().ascending());
    let d = model.domain();
    let _ = writeln!(s, "domain={:?},{:?}", d.lo, d.hi);
    let _ = writeln!(s, "base_delay_ns={:?}", model.base_delay_ns());
    let _ = writeln!(s, "fiber_length_m={:?}", model.fiber_length_m());
    s
}

pub fn parse_model(text: &str) -> Parsed<FiberDispersionModel> {
    let map = key_values(text, MODEL_HEADER)?;
    let coeffs = coefficients(&map)?;
    check_keys(&map, &["degree", "domain", "base_delay_ns", "fiber_length_m"], coeffs.len() - 1)?;
    let (n, d) = take(&map, "domain")?;
    let (lo, hi) = pair(d, n, "domain")?;
    let (n, b) = take(&map, "base_delay_ns")?;
    let base = num(b, n, "base_delay_ns")?;
    let (n, l) = take(&map, "fiber_length_m")?;
    let length = num(l, n, "fiber_length_m")?;
    FiberDispersionModel::from_ascending(coeffs, Interval::new(lo, hi), base, length)
        .map_err(|e| ParseError::new(1, e.to_string()))
}

/// Calibration curve `c(τ)` in plain ascending powers of τ.
pub fn render_curve(curve: &CalibrationCurve, prov: &Provenance) -> String {
    let mut s = start(CURVE_HEADER, prov);
    write_coefficients(&mut s, &curve.coefficients());
    let d = curve.time_domain();
    let _ = writeln!(s, "domain={:?},{:?}", d.lo, d.hi);
    let residuals: Vec<String> = curve.residuals().iter().map(|r| format!("{r:?}")).collect();
    let _ = writeln!(s, "residuals={}", residuals.join(","));
    s
}

pub fn parse_curve(text: &str) -> Parsed<CalibrationCurve> {
    let map = key_values(text, CURVE_HEADER)?;
    let coeffs = coefficients(&map)?;
    check_keys(&map, &["degree", "domain", "residuals"], coeffs.len() - 1)?;
    let (n, d) = take(&map, "domain")?;
    let (lo, hi) = pair(d, n, "domain")?;
    let residuals = match map.get("residuals") {
        Some((n, r)) if !r.is_empty() => r
            .split(',')
            .map(|v| num(v, *n, "residual"))
            .collect::<Parsed<Vec<f64>>>()?,
        _ => Vec::new(),
    };
    CalibrationCurve::with_residuals(
        Polynomial::from_ascending(coeffs),
        Interval::new(lo, hi),
        residuals,
    )
    .map_err(|e| ParseError::new(1, e.to_string()))
}

/// `<wavelength_nm>,<arrival_time_ns>` per line.
pub fn parse_points(text: &str) -> Parsed<Vec<CalibrationPoint>> {
    records(text)
        .map(|(n, line)| {
            let (l, t) = pair(line, n, "calibration point")?;
            Ok(CalibrationPoint::new(l, t))
        })
        .collect()
}

/// `<wavelength_nm>,<p_D>` per line.
pub fn parse_efficiency(text: &str) -> Parsed<EfficiencyCurve> {
    let pts = records(text)
        .map(|(n, line)| pair(line, n, "efficiency entry"))
        .collect::<Parsed<Vec<_>>>()?;
    EfficiencyCurve::new(pts).map_err(|e| ParseError::new(1, e.to_string()))
}

/// `<wavelength_nm>,<weight>` per line: a tabulated source spectrum.
pub fn parse_spectrum_table(text: &str) -> Parsed<Vec<(f64, f64)>> {
    records(text)
        .map(|(n, line)| pair(line, n, "spectrum entry"))
        .collect()
}

pub fn render_events(events: &[EventRecord], prov: &Provenance) -> String {
    let mut s = start(EVENTS_HEADER, prov);
    s.reserve(events.len() * 24);
    for e in events {
        let _ = writeln!(s, "{},{},{}", e.channel.code(), e.pulse_index, e.timestamp_ps);
    }
    s
}

pub fn parse_events(text: &str) -> Parsed<Vec<EventRecord>> {
    expect_header(text, EVENTS_HEADER)?;
    records(text)
        .map(|(n, line)| {
            let [c, k, t] = fields::<3>(line, n)?;
            Ok(EventRecord {
                channel: Channel::from_code(c)
                    .ok_or_else(|| ParseError::new(n, format!("unknown channel `{c}`")))?,
                pulse_index: num(k, n, "pulse index")?,
                timestamp_ps: num(t, n, "timestamp")?,
            })
        })
        .collect()
}

pub fn render_coincidences(coinc: &[CoincidenceRecord], prov: &Provenance) -> String {
    let mut s = start(COINC_HEADER, prov);
    s.reserve(coinc.len() * 28);
    for c in coinc {
        let _ = writeln!(s, "{},{},{}", c.pulse_index, c.ts_signal_ps, c.ts_idler_ps);
    }
    s
}

pub fn parse_coincidences(text: &str) -> Parsed<Vec<CoincidenceRecord>> {
    expect_header(text, COINC_HEADER)?;
    records(text)
        .map(|(n, line)| {
            let [k, s, i] = fields::<3>(line, n)?;
            Ok(CoincidenceRecord {
                pulse_index: num(k, n, "pulse index")?,
                ts_signal_ps: num(s, n, "signal timestamp")?,
                ts_idler_ps: num(i, n, "idler timestamp")?,
            })
        })
        .collect()
}

pub fn render_spectrum(spectrum: &Spectrum, prov: &Provenance) -> String {
    let mut s = start(SPECTRUM_HEADER, prov);
    for p in &spectrum.points {
        let _ = writeln!(s, "{:?},{:?},{}", p.wavelength_nm, p.intensity, p.flags.code());
    }
    s
}

/// Reads a spectrum file. Bin widths are not stored; they are recovered as
/// the spacing between neighbouring points.
pub fn parse_spectrum(text: &str) -> Parsed<Spectrum> {
    expect_header(text, SPECTRUM_HEADER)?;
    let mut points = records(text)
        .map(|(n, line)| {
            let [l, v, f] = fields::<3>(line, n)?;
            Ok(SpectrumPoint {
                wavelength_nm: num(l, n, "wavelength")?,
                intensity: num(v, n, "intensity")?,
                width_nm: 0.0,
                flags: PointFlags::from_code(f)
                    .ok_or_else(|| ParseError::new(n, format!("bad flags `{f}`")))?,
            })
        })
        .collect::<Parsed<Vec<_>>>()?;
    let spacing: Vec<f64> = points
        .windows(2)
        .map(|w| w[1].wavelength_nm - w[0].wavelength_nm)
        .collect();
    let count = points.len();
    for (k, p) in points.iter_mut().enumerate() {
        p.width_nm = match (k.checked_sub(1).map(|j| spacing[j]), spacing.get(k)) {
            (Some(a), Some(&b)) => 0.5 * (a + b),
            (Some(a), None) => a,
            (None, Some(&b)) => b,
            (None, None) if count == 1 => 0.0,
            (None, None) => unreachable!(),
        };
    }
    Ok(Spectrum { points })
}

fn join<T: std::fmt::Debug>(v: &[T]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

/// Matrix with one row per signal grid point. The grids are bin centres.
pub fn render_matrix<T: std::fmt::Display>(
    signal_grid: &[f64],
    idler_grid: &[f64],
    rows: impl Iterator<Item = Vec<T>>,
    header_comments: &[String],
    prov: &Provenance,
) -> String {
    let mut s = start(JSI_HEADER, prov);
    for c in header_comments {
        let _ = writeln!(s, "# {c}");
    }
    let _ = writeln!(s, "{}", join(signal_grid));
    let _ = writeln!(s, "{}", join(idler_grid));
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "{}", line.join(","));
    }
    s
}

pub fn render_jsi(jsi: &JointSpectrum, prov: &Provenance) -> String {
    let comments = [
        format!("offset_ns={:?}", jsi.offset_ns),
        format!("pump_nm={:?}", jsi.pump_nm),
        format!("out_of_range={}", jsi.out_of_range),
    ];
    render_matrix(
        &jsi.signal_centers(),
        &jsi.idler_centers(),
        jsi.counts.chunks(jsi.cols()).map(<[u64]>::to_vec),
        &comments,
        prov,
    )
}

/// Edges whose midpoints are `centers`; exact for uniform grids.
fn edges_from_centers(centers: &[f64]) -> Vec<f64> {
    let n = centers.len();
    if n == 1 {
        return vec![centers[0] - 0.5, centers[0] + 0.5];
    }
    let mut edges = Vec::with_capacity(n + 1);
    edges.push(centers[0] - 0.5 * (centers[1] - centers[0]));
    for w in centers.windows(2) {
        edges.push(0.5 * (w[0] + w[1]));
    }
    edges.push(centers[n - 1] + 0.5 * (centers[n - 1] - centers[n - 2]));
    edges
}

pub fn parse_jsi(text: &str) -> Parsed<JointSpectrum> {
    expect_header(text, JSI_HEADER)?;
    let mut meta = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        if let Some((k, v)) = line.strip_prefix("# ").and_then(|c| c.split_once('=')) {
            if !k.contains(' ') {
                meta.insert(k.to_string(), (n + 1, v.to_string()));
            }
        }
    }
    let meta_num = |key: &str| -> Parsed<f64> {
        let (n, v) = meta
            .get(key)
            .ok_or_else(|| ParseError::new(1, format!("missing `# {key}=` header")))?;
        num(v, *n, key)
    };
    let mut lines = records(text);
    let mut grid = |what: &str| -> Parsed<Vec<f64>> {
        let (n, line) = lines
            .next()
            .ok_or_else(|| ParseError::new(1, format!("missing {what} grid")))?;
        line.split(',').map(|v| num(v, n, what)).collect()
    };
    let signal = grid("signal")?;
    let idler = grid("idler")?;
    let mut counts = Vec::with_capacity(signal.len() * idler.len());
    let mut rows = 0;
    for (n, line) in lines {
        let row: Vec<u64> = line
            .split(',')
            .map(|v| num(v, n, "count"))
            .collect::<Parsed<_>>()?;
        if row.len() != idler.len() {
            return Err(ParseError::new(n, format!("row has {} entries, idler grid {}", row.len(), idler.len())));
        }
        counts.extend(row);
        rows += 1;
    }
    if rows != signal.len() {
        return Err(ParseError::new(1, format!("{rows} rows for {} signal bins", signal.len())));
    }
    Ok(JointSpectrum {
        signal_edges: edges_from_centers(&signal),
        idler_edges: edges_from_centers(&idler),
        counts,
        offset_ns: meta_num("offset_ns")?,
        pump_nm: meta_num("pump_nm")?,
        out_of_range: meta_num("out_of_range")? as u64,
    })
}

/// Marginal spectra of a JSI: `arm,wavelength_nm,count` per line.
pub fn render_marginals(jsi: &JointSpectrum, prov: &Provenance) -> String {
    let mut s = start(MARGINALS_HEADER, prov);
    for (l, c) in jsi.signal_centers().iter().zip(jsi.signal_marginal()) {
        let _ = writeln!(s, "S,{l:?},{c}");
    }
    for (l, c) in jsi.idler_centers().iter().zip(jsi.idler_marginal()) {
        let _ = writeln!(s, "I,{l:?},{c}");
    }
    s
}
