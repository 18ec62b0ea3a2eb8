//! Flat `key = value` run configuration.
//!
//! Keys carry a section prefix (`fiber.`, `detector.signal.`, ...). Every key
//! has a default; a config file overrides defaults and `--set key=value`
//! flags override the file. The resolved table is what gets echoed and
//! hashed, so a run is reproducible from its output header alone.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use fiberspec_core::dispersion::FiberDispersionModel;
use fiberspec_core::jsi::SwapPolicy;
use fiberspec_core::pdc::JointSpectralParams;
use fiberspec_core::simulator::{DetectorModel, EfficiencyCurve, SourceRun, SourceSpectrum};
use fiberspec_core::Interval;

use crate::error::{AppError, AppResult};
use crate::formats;

/// Keys excluded from the configuration hash: they cannot change results.
const UNHASHED: &[&str] = &["threads"];

/// Per-detector keys; each may be overridden under `detector.signal.` or
/// `detector.idler.`.
const DETECTOR_KEYS: &[(&str, &str)] = &[
    ("jitter_ps", "180"),
    ("tdc_bin_ps", "81"),
    ("efficiency", "1"),
    ("efficiency_file", ""),
    ("dark_prob", "1e-4"),
    ("gate_width_ps", "200"),
    ("gate_step_ps", "100"),
];

const KEYS: &[(&str, &str)] = &[
    ("seed", "1"),
    ("threads", "0"),
    ("fiber.model", ""),
    ("fiber.gvd_short", "1325,-0.11"),
    ("fiber.gvd_long", "1575,-0.25"),
    ("fiber.anchor", "1531,1874"),
    ("fiber.domain", "1325,1575"),
    ("source.period_ns", "1000"),
    ("source.pulses", "100000"),
    ("source.routing_contrast", "0.8"),
    ("source.spectrum", "gaussian"),
    ("source.center_nm", "1531"),
    ("source.fwhm_nm", "3"),
    ("source.band", "1521,1541"),
    ("source.table", ""),
    ("pdc.pump_nm", "765"),
    ("pdc.pump_fwhm_nm", "1.9"),
    ("pdc.signal_nm", "1544"),
    ("pdc.idler_nm", "1517"),
    ("pdc.phasematch_nm", "2"),
    ("pdc.signal_range", "1534,1554"),
    ("pdc.idler_range", "1507,1527"),
    ("simulate.mode", "single"),
    ("simulate.out", ""),
    ("simulate.truth_jsi", ""),
    ("calibrate.points", ""),
    ("calibrate.out", ""),
    ("calibrate.degree", "2"),
    ("calibrate.allow_non_monotonic", "false"),
    ("calibrate.sigma_ps", "180"),
    ("reconstruct.events", ""),
    ("reconstruct.curve", ""),
    ("reconstruct.efficiency", ""),
    ("reconstruct.out", ""),
    ("reconstruct.channel", "any"),
    ("reconstruct.bin_ps", "81"),
    ("reconstruct.jacobian", "true"),
    ("reconstruct.unreliable_below", "0.05"),
    ("jsi.coinc", ""),
    ("jsi.curve", ""),
    ("jsi.out", ""),
    ("jsi.marginals", ""),
    ("jsi.search_ns", "-20,20"),
    ("jsi.grid_points", "401"),
    ("jsi.margin_ns", "50"),
    ("jsi.idler_skew_ns", "0"),
    ("jsi.bins", "64"),
    ("jsi.signal_band", ""),
    ("jsi.idler_band", ""),
    ("jsi.swapped", "relabel"),
    ("resolution.curve", ""),
    ("resolution.sigma_ps", "180"),
    ("resolution.wavelengths", ""),
    ("resolution.out", ""),
    ("aliasing.support", "1391,1531"),
    ("aliasing.period_ns", "1000"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Default,
    File,
    Flag,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Entry {
    value: String,
    origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    entries: BTreeMap<String, Entry>,
}

fn defaults() -> BTreeMap<String, Entry> {
    let mut map = BTreeMap::new();
    let mut put = |k: String, v: &str| {
        map.insert(
            k,
            Entry {
                value: v.to_string(),
                origin: Origin::Default,
            },
        );
    };
    for (k, v) in KEYS {
        put(k.to_string(), v);
    }
    for (k, v) in DETECTOR_KEYS {
        put(format!("detector.{k}"), v);
        // Empty means "inherit from detector.<key>".
        put(format!("detector.signal.{k}"), "");
        put(format!("detector.idler.{k}"), "");
    }
    map
}

/// Splits `key=value` (or `key = value`).
pub fn split_assignment(s: &str) -> Option<(String, String)> {
    let (k, v) = s.split_once('=')?;
    let k = k.trim();
    (!k.is_empty()).then(|| (k.to_string(), v.trim().to_string()))
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { entries: defaults() }
    }
}

impl RunConfig {
    /// Defaults, then the config file (if any), then `overrides` in order.
    pub fn resolve(file: Option<&Path>, overrides: &[(String, String)]) -> AppResult<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            let text = formats::read_text(path).map_err(|e| {
                AppError::config("--config", e.to_string())
            })?;
            for (n, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = split_assignment(line).ok_or_else(|| {
                    AppError::config(
                        format!("{}:{}", path.display(), n + 1),
                        "expected key = value",
                    )
                })?;
                cfg.set(&k, &v, Origin::File)
                    .map_err(|e| AppError::config(format!("{}:{} {k}", path.display(), n + 1), e))?;
            }
        }
        for (k, v) in overrides {
            cfg.set(k, v, Origin::Flag).map_err(|e| AppError::config(k, e))?;
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str, origin: Origin) -> Result<(), String> {
        match self.entries.get_mut(key) {
            Some(e) => {
                e.value = value.to_string();
                e.origin = origin;
                Ok(())
            }
            None => Err("unknown key".into()),
        }
    }

    pub fn with(mut self, key: &str, value: &str) -> AppResult<Self> {
        self.set(key, value, Origin::Flag)
            .map_err(|e| AppError::config(key, e))?;
        Ok(self)
    }

    pub fn raw(&self, key: &str) -> &str {
        &self
            .entries
            .get(key)
            .unwrap_or_else(|| panic!("config key `{key}` is not declared"))
            .value
    }

    pub fn origin(&self, key: &str) -> Option<Origin> {
        self.entries.get(key).map(|e| e.origin)
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, what: &str) -> AppResult<T> {
        let raw = self.raw(key);
        raw.parse()
            .map_err(|_| AppError::config(key, format!("expected {what}, got `{raw}`")))
    }

    pub fn f64(&self, key: &str) -> AppResult<f64> {
        let v: f64 = self.parse(key, "a number")?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(AppError::config(key, "must be finite"))
        }
    }

    pub fn positive(&self, key: &str) -> AppResult<f64> {
        let v = self.f64(key)?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(AppError::config(key, format!("must be > 0, got {v}")))
        }
    }

    pub fn u64(&self, key: &str) -> AppResult<u64> {
        self.parse(key, "a non-negative integer")
    }

    pub fn i64(&self, key: &str) -> AppResult<i64> {
        self.parse(key, "an integer")
    }

    pub fn usize(&self, key: &str) -> AppResult<usize> {
        self.parse(key, "a non-negative integer")
    }

    pub fn bool(&self, key: &str) -> AppResult<bool> {
        self.parse(key, "true or false")
    }

    pub fn list(&self, key: &str) -> AppResult<Vec<f64>> {
        let raw = self.raw(key);
        if raw.is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| AppError::config(key, format!("bad number `{}`", s.trim())))
            })
            .collect()
    }

    pub fn pair(&self, key: &str) -> AppResult<(f64, f64)> {
        match self.list(key)?.as_slice() {
            &[a, b] => Ok((a, b)),
            _ => Err(AppError::config(key, format!("expected two values a,b, got `{}`", self.raw(key)))),
        }
    }

    pub fn interval(&self, key: &str) -> AppResult<Interval> {
        let (lo, hi) = self.pair(key)?;
        if lo < hi {
            Ok(Interval::new(lo, hi))
        } else {
            Err(AppError::config(key, "need lo < hi"))
        }
    }

    /// Optional path; `None` when the key is empty.
    pub fn path(&self, key: &str) -> Option<PathBuf> {
        let raw = self.raw(key);
        (!raw.is_empty()).then(|| PathBuf::from(raw))
    }

    /// A path that must be set and name an existing file.
    pub fn input(&self, key: &str) -> AppResult<PathBuf> {
        let p = self
            .path(key)
            .ok_or_else(|| AppError::config(key, "required input file not given"))?;
        self.check_exists(key, p)
    }

    pub fn optional_input(&self, key: &str) -> AppResult<Option<PathBuf>> {
        self.path(key).map(|p| self.check_exists(key, p)).transpose()
    }

    fn check_exists(&self, key: &str, p: PathBuf) -> AppResult<PathBuf> {
        if p.is_file() {
            Ok(p)
        } else {
            Err(AppError::config(key, format!("no such file {}", p.display())))
        }
    }

    /// An output path that must be set.
    pub fn output(&self, key: &str) -> AppResult<PathBuf> {
        self.path(key)
            .ok_or_else(|| AppError::config(key, "required output file not given"))
    }

    pub fn seed(&self) -> AppResult<u64> {
        self.u64("seed")
    }

    /// `key=value` lines in key order; the hashed form.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        for (k, e) in &self.entries {
            if !UNHASHED.contains(&k.as_str()) {
                let _ = writeln!(s, "{k}={}", e.value);
            }
        }
        s
    }

    /// First 16 hex digits of the SHA-256 of [`Self::canonical`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        hex::encode(&digest[..8])
    }

    /// Resolved configuration as comment lines, marking where each value
    /// came from.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# resolved config (hash {})", self.hash());
        for (k, e) in &self.entries {
            let tag = match e.origin {
                Origin::Default => "default",
                Origin::File => "file",
                Origin::Flag => "flag",
            };
            let _ = writeln!(s, "# {k} = {} [{tag}]", e.value);
        }
        s
    }

    pub fn fiber(&self) -> AppResult<FiberDispersionModel> {
        if let Some(path) = self.optional_input("fiber.model")? {
            return formats::load(&path, formats::parse_model);
        }
        let short = self.pair("fiber.gvd_short")?;
        let long = self.pair("fiber.gvd_long")?;
        let (anchor, delay) = self.pair("fiber.anchor")?;
        let domain = self.interval("fiber.domain")?;
        FiberDispersionModel::from_linear_gvd(short, long, anchor, delay, domain)
            .map_err(|e| AppError::config("fiber", e.to_string()))
    }

    /// Detector for `arm` (`"signal"`, `"idler"`), or the shared one.
    pub fn detector(&self, arm: Option<&str>) -> AppResult<DetectorModel> {
        let key = |k: &str| -> String {
            if let Some(a) = arm {
                let specific = format!("detector.{a}.{k}");
                if !self.raw(&specific).is_empty() {
                    return specific;
                }
            }
            format!("detector.{k}")
        };
        let eff_file_key = key("efficiency_file");
        let efficiency = match self.optional_input(&eff_file_key)? {
            Some(p) => formats::load(&p, formats::parse_efficiency)?,
            None => {
                let k = key("efficiency");
                EfficiencyCurve::flat(self.f64(&k)?).map_err(|e| AppError::config(k, e.to_string()))?
            }
        };
        let d = DetectorModel {
            jitter_sigma_ps: self.f64(&key("jitter_ps"))?,
            tdc_bin_ps: self.i64(&key("tdc_bin_ps"))?,
            efficiency,
            dark_count_prob_per_gate: self.f64(&key("dark_prob"))?,
            gate_width_ps: self.i64(&key("gate_width_ps"))?,
            gate_step_ps: self.i64(&key("gate_step_ps"))?,
        };
        let section = match arm {
            Some(a) => format!("detector.{a}"),
            None => "detector".into(),
        };
        d.validate().map_err(|e| AppError::config(section, e.to_string()))?;
        Ok(d)
    }

    pub fn run(&self) -> AppResult<SourceRun> {
        let r = SourceRun {
            repetition_period_ns: self.positive("source.period_ns")?,
            pulse_count: self.u64("source.pulses")?,
            routing_contrast: self.f64("source.routing_contrast")?,
        };
        r.validate().map_err(|e| AppError::config("source", e.to_string()))?;
        Ok(r)
    }

    pub fn source_spectrum(&self) -> AppResult<SourceSpectrum> {
        let key = "source.spectrum";
        let spectrum = match self.raw(key) {
            "gaussian" => {
                let fwhm = self.positive("source.fwhm_nm")?;
                SourceSpectrum::gaussian(self.f64("source.center_nm")?, fwhm, 3.0 * fwhm, 1025)
            }
            "delta" => SourceSpectrum::delta(self.f64("source.center_nm")?),
            "flat" => {
                let band = self.interval("source.band")?;
                SourceSpectrum::flat(band.lo, band.hi)
            }
            "table" => {
                let path = self.input("source.table")?;
                let pts = formats::load(&path, formats::parse_spectrum_table)?;
                SourceSpectrum::new(pts)
            }
            other => {
                return Err(AppError::config(
                    key,
                    format!("expected gaussian, delta, flat or table, got `{other}`"),
                ))
            }
        };
        spectrum.map_err(|e| AppError::config("source", e.to_string()))
    }

    pub fn pdc(&self) -> AppResult<JointSpectralParams> {
        Ok(JointSpectralParams {
            pump_center: self.positive("pdc.pump_nm")?,
            pump_fwhm: self.positive("pdc.pump_fwhm_nm")?,
            signal_center: self.positive("pdc.signal_nm")?,
            idler_center: self.positive("pdc.idler_nm")?,
            phasematch_width: self.positive("pdc.phasematch_nm")?,
            signal_range: self.interval("pdc.signal_range")?,
            idler_range: self.interval("pdc.idler_range")?,
            ..Default::default()
        })
    }

    /// Band for the wrong-path filter; the model's grid range by default.
    pub fn band(&self, key: &str, fallback: &str) -> AppResult<Interval> {
        if self.raw(key).is_empty() {
            self.interval(fallback)
        } else {
            self.interval(key)
        }
    }

    pub fn swap_policy(&self) -> AppResult<SwapPolicy> {
        match self.raw("jsi.swapped") {
            "relabel" => Ok(SwapPolicy::Relabel),
            "discard" => Ok(SwapPolicy::Discard),
            other => Err(AppError::config(
                "jsi.swapped",
                format!("expected relabel or discard, got `{other}`"),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults_build_valid_models() {
        let cfg = RunConfig::default();
        let f = cfg.fiber().unwrap();
        assert!((f.propagation_delay(1531.0).unwrap() - 1874.0).abs() < 1e-9);
        let d = cfg.detector(Some("signal")).unwrap();
        assert_eq!(d.tdc_bin_ps, 81);
        assert_eq!(cfg.pdc().unwrap(), JointSpectralParams::default());
        assert_eq!(cfg.run().unwrap().pulse_count, 100_000);
        assert!(cfg.source_spectrum().is_ok());
    }

    #[test]
    fn file_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "# comment\nseed = 9\ndetector.jitter_ps=100\n\n").unwrap();
        let cfg = RunConfig::resolve(Some(&path), &set(&[("seed", "11")])).unwrap();
        assert_eq!(cfg.seed().unwrap(), 11);
        assert_eq!(cfg.origin("seed"), Some(Origin::Flag));
        assert_eq!(cfg.origin("detector.jitter_ps"), Some(Origin::File));
        assert_eq!(cfg.detector(Some("idler")).unwrap().jitter_sigma_ps, 100.0);
    }

    #[test]
    fn per_arm_detector_override() {
        let cfg = RunConfig::resolve(None, &set(&[("detector.idler.jitter_ps", "50")])).unwrap();
        assert_eq!(cfg.detector(Some("idler")).unwrap().jitter_sigma_ps, 50.0);
        assert_eq!(cfg.detector(Some("signal")).unwrap().jitter_sigma_ps, 180.0);
    }

    #[test]
    fn diagnostics_name_the_field() {
        let err = RunConfig::resolve(None, &set(&[("fiber.colour", "red")])).unwrap_err();
        assert!(matches!(&err, AppError::Config { field, .. } if field == "fiber.colour"));
        let cfg = RunConfig::resolve(None, &set(&[("detector.signal.dark_prob", "2")])).unwrap();
        let err = cfg.detector(Some("signal")).unwrap_err();
        assert!(matches!(&err, AppError::Config { field, .. } if field == "detector.signal"));
        let cfg = RunConfig::resolve(None, &set(&[("source.pulses", "-3")])).unwrap();
        let err = cfg.run().unwrap_err();
        assert!(matches!(&err, AppError::Config { field, .. } if field == "source.pulses"));
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn missing_input_is_a_config_error() {
        let cfg = RunConfig::resolve(None, &set(&[("jsi.coinc", "/nonexistent/coinc.txt")])).unwrap();
        assert!(matches!(cfg.input("jsi.coinc"), Err(AppError::Config { .. })));
        assert!(matches!(cfg.input("jsi.curve"), Err(AppError::Config { .. })));
    }

    #[test]
    fn hash_tracks_values_but_not_threads() {
        let a = RunConfig::default();
        let b = a.clone().with("threads", "4").unwrap();
        let c = a.clone().with("seed", "2").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn echo_lists_every_default() {
        let echo = RunConfig::default().echo();
        assert!(echo.contains("# detector.jitter_ps = 180 [default]"));
        assert!(echo.contains("# detector.signal.jitter_ps =  [default]"));
        assert_eq!(echo.lines().count(), 1 + KEYS.len() + 3 * DETECTOR_KEYS.len());
    }
}
