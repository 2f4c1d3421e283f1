//! Flat `key = value` run configuration.
//!
//! One setting per line, dotted keys, `#` starts a comment. Lists are
//! comma-separated. Every key is optional; the defaults are listed in
//! [`KEYS`]. Unknown and repeated keys are errors, reported with their line.
//!
//! ```text
//! # correlated noise, co-moving frame
//! model.epsilon = 0.5
//! model.decay_rate = 3
//! noise.kind = squared_exponential
//! noise.length = 2
//! solver.drift_shift = theory
//! run.route = spde
//! run.levels = 0.25, 0.5
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use stokpp_core::ensemble::{ControlSpec, ExperimentConfig, Route};
use stokpp_core::grid::GridSpec;
use stokpp_core::noise::{CovarianceKernel, Interpretation, NoiseModel};
use stokpp_core::solver::{FramePolicy, KppParams};

use crate::error::{Error, Result};
use crate::io;

/// Recognized keys with their defaults and meaning.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("model.kappa", "1", "diffusion coefficient κ (operator κ/2 ∂²)"),
    ("model.epsilon", "1", "noise amplitude ε"),
    ("model.decay_rate", "3", "decay rate N of the initial tail"),
    ("noise.kind", "wiener", "wiener | constant | squared_exponential | tabulated"),
    ("noise.sigma2", "1", "kernel variance Γ(0)"),
    ("noise.length", "-", "correlation length (squared_exponential)"),
    ("noise.file", "-", "two-column lag,gamma CSV (tabulated), relative to the config"),
    ("noise.interpretation", "ito", "ito | stratonovich"),
    ("noise.seed", "0", "base seed; --seed overrides it"),
    ("grid.dx", "0.05", "node spacing"),
    ("grid.length", "200", "window length"),
    ("grid.origin", "0.3", "fraction of the window left of x = 0"),
    ("solver.dt", "0.01", "time step"),
    ("solver.drift_shift", "0", "co-moving frame speed, or `theory` for the predicted speed"),
    ("frame.policy", "by route", "track (normalized default) | fixed (spde default)"),
    ("frame.trigger", "0.6", "tracking trigger, fraction of the window"),
    ("frame.restore", "0.4", "tracking restore point, fraction of the window"),
    ("run.route", "normalized", "normalized | spde"),
    ("run.horizon", "100", "final time"),
    ("run.paths", "16", "number of paths"),
    ("run.levels", "0.5", "marker levels"),
    ("run.snapshot_stride", "1", "time between snapshots"),
    ("run.speed_window", "0.4, 0.9", "speed fit window, fractions of the horizon"),
    ("run.decay_offsets", "5, 15", "decay fit window ahead of the marker"),
    ("run.a_star_offset", "30", "plateau distance behind the marker (spde)"),
    ("run.batches", "8", "batches for ensemble-mean error bars (spde)"),
    ("run.snapshots", "true", "write mean-field snapshots (spde)"),
    ("control.enabled", "true", "∫v control variate for pathwise speeds (normalized)"),
    ("control.paths", "32", "independent control runs"),
    ("control.horizon", "5000", "length of each control run"),
    ("wcov.lags", "-", "lags for the w-covariance table; enables it"),
    ("wcov.tail_window", "5, 40", "tail window for w, distance ahead of the marker"),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WCovRequest {
    pub lags: Vec<f64>,
    pub tail_window: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    pub wcov: Option<WCovRequest>,
    pub snapshots: bool,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse(&text, path)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.experiment.params.noise.seed = seed;
        self
    }
}

struct Entry {
    line: usize,
    value: String,
}

struct Entries {
    origin: String,
    map: BTreeMap<String, Entry>,
}

impl Entries {
    fn err(&self, key: &str, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.origin.clone(),
            line: self.map.get(key).map_or(0, |e| e.line),
            key: key.to_string(),
            message: message.into(),
        }
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|e| e.value.as_str())
    }

    fn number(&self, key: &str, default: f64) -> Result<f64> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => match v.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(self.err(key, format!("expected a number, found `{v}`"))),
            },
        }
    }

    fn count(&self, key: &str, default: usize) -> Result<usize> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| self.err(key, format!("expected a nonnegative integer, found `{v}`"))),
        }
    }

    fn flag(&self, key: &str, default: bool) -> Result<bool> {
        match self.raw(key) {
            None => Ok(default),
            Some("true" | "yes" | "on") => Ok(true),
            Some("false" | "no" | "off") => Ok(false),
            Some(v) => Err(self.err(key, format!("expected true or false, found `{v}`"))),
        }
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        let Some(v) = self.raw(key) else { return Ok(None) };
        v.split(',')
            .map(|s| {
                let s = s.trim();
                s.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| self.err(key, format!("expected a number, found `{s}`")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    fn pair(&self, key: &str, default: (f64, f64)) -> Result<(f64, f64)> {
        match self.list(key)? {
            None => Ok(default),
            Some(v) if v.len() == 2 => Ok((v[0], v[1])),
            Some(v) => Err(self.err(key, format!("expected two numbers, found {}", v.len()))),
        }
    }

    fn choice<'a>(&self, key: &str, default: &'a str, options: &[&'a str]) -> Result<&'a str> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => options
                .iter()
                .copied()
                .find(|o| *o == v)
                .ok_or_else(|| self.err(key, format!("expected one of {}, found `{v}`", options.join(" | ")))),
        }
    }
}

fn tokenize(text: &str, origin: &str) -> Result<Entries> {
    let mut map: BTreeMap<String, Entry> = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let bad = |key: &str, message: String| Error::Parse {
            path: origin.to_string(),
            line,
            key: key.to_string(),
            message,
        };
        let Some((key, value)) = content.split_once('=') else {
            return Err(bad("-", format!("expected `key = value`, found `{content}`")));
        };
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.iter().any(|(k, _, _)| *k == key) {
            return Err(bad(key, "unknown key".into()));
        }
        if value.is_empty() {
            return Err(bad(key, "missing value".into()));
        }
        if let Some(prev) = map.get(key) {
            return Err(bad(key, format!("repeated key (first set on line {})", prev.line)));
        }
        map.insert(
            key.to_string(),
            Entry {
                line,
                value: value.to_string(),
            },
        );
    }
    Ok(Entries {
        origin: origin.to_string(),
        map,
    })
}

/// Parses configuration text; `path` locates relative kernel files and is
/// used in diagnostics.
pub fn parse(text: &str, path: &Path) -> Result<RunConfig> {
    let e = tokenize(text, &path.display().to_string())?;

    let interpretation = match e.choice("noise.interpretation", "ito", &["ito", "stratonovich", "strat"])? {
        "ito" => Interpretation::Ito,
        _ => Interpretation::Stratonovich,
    };
    let sigma2 = e.number("noise.sigma2", 1.0)?;
    let kind = e.choice(
        "noise.kind",
        "wiener",
        &["wiener", "constant", "squared_exponential", "tabulated"],
    )?;
    let kernel = match kind {
        "wiener" | "constant" => CovarianceKernel::Constant { sigma2 },
        "squared_exponential" => {
            let length = e.number("noise.length", f64::NAN)?;
            if length.is_nan() {
                return Err(e.err("noise.length", "required for squared_exponential noise"));
            }
            CovarianceKernel::SquaredExponential { sigma2, length }
        }
        _ => {
            let file = e
                .raw("noise.file")
                .ok_or_else(|| e.err("noise.file", "required for tabulated noise"))?;
            CovarianceKernel::Tabulated(io::read_tabulated_kernel(&resolve(path, file))?)
        }
    };
    for key in ["noise.length", "noise.file"] {
        let used = (key == "noise.length" && kind == "squared_exponential") || (key == "noise.file" && kind == "tabulated");
        if e.raw(key).is_some() && !used {
            return Err(e.err(key, format!("not used by noise.kind = {kind}")));
        }
    }
    if let Err(err) = kernel.validate() {
        return Err(e.err("noise.kind", err.to_string()));
    }
    let seed = e.count("noise.seed", 0)? as u64;
    let noise = NoiseModel::new(kernel, interpretation, seed);

    let mut params = KppParams::new(
        e.number("model.kappa", 1.0)?,
        e.number("model.epsilon", 1.0)?,
        e.number("model.decay_rate", 3.0)?,
        noise,
    )
    .with_dt(e.number("solver.dt", stokpp_core::solver::DEFAULT_DT)?);

    let grid = GridSpec::for_front(
        e.number("grid.dx", 0.05)?,
        e.number("grid.length", 200.0)?,
        e.number("grid.origin", stokpp_core::grid::DEFAULT_ORIGIN_FRACTION)?,
    )
    .map_err(|err| e.err("grid.dx", err.to_string()))?;

    let route = match e.choice("run.route", "normalized", &["normalized", "spde"])? {
        "normalized" => Route::Normalized,
        _ => Route::Spde,
    };
    params.drift_shift = match e.raw("solver.drift_shift") {
        Some("theory") => {
            ExperimentConfig::new(params.clone(), grid, 1.0, 1, route)
                .theory()
                .speed
                .ok_or_else(|| e.err("solver.drift_shift", "no predicted speed (degenerate parameters)"))?
        }
        _ => e.number("solver.drift_shift", 0.0)?,
    };

    let mut c = ExperimentConfig::new(
        params,
        grid,
        e.number("run.horizon", 100.0)?,
        e.count("run.paths", 16)?,
        route,
    );
    if let Some(levels) = e.list("run.levels")? {
        c.levels = levels;
    }
    c.snapshot_stride = e.number("run.snapshot_stride", c.snapshot_stride)?;
    c.speed_window = e.pair("run.speed_window", c.speed_window)?;
    c.decay_offsets = e.pair("run.decay_offsets", c.decay_offsets)?;
    c.a_star_offset = e.number("run.a_star_offset", c.a_star_offset)?;
    c.batches = e.count("run.batches", c.batches)?;

    let default_policy = match c.frame {
        FramePolicy::Fixed => "fixed",
        FramePolicy::Track { .. } => "track",
    };
    c.frame = match e.choice("frame.policy", default_policy, &["fixed", "track"])? {
        "fixed" => FramePolicy::Fixed,
        _ => FramePolicy::Track {
            trigger: e.number("frame.trigger", 0.6)?,
            restore: e.number("frame.restore", 0.4)?,
        },
    };

    let control = ControlSpec {
        paths: e.count("control.paths", ControlSpec::default().paths)?,
        horizon: e.number("control.horizon", ControlSpec::default().horizon)?,
    };
    c.control = match (route, e.flag("control.enabled", true)?) {
        (Route::Normalized, true) => Some(control),
        _ => None,
    };

    let wcov = match e.list("wcov.lags")? {
        None => None,
        Some(lags) => Some(WCovRequest {
            lags,
            tail_window: e.pair("wcov.tail_window", (5.0, 40.0))?,
        }),
    };

    // surface structural problems against the file, with the closest key
    if let Err(err) = c.validate() {
        return Err(e.err(blame(&err.to_string()), err.to_string()));
    }
    Ok(RunConfig {
        experiment: c,
        wcov,
        snapshots: e.flag("run.snapshots", true)?,
    })
}

/// Best-effort key for a validation message.
fn blame(message: &str) -> &'static str {
    const HINTS: &[(&str, &str)] = &[
        ("control", "control.paths"),
        ("normalized route", "noise.kind"),
        ("spde route", "frame.policy"),
        ("horizon", "run.horizon"),
        ("paths", "run.paths"),
        ("level", "run.levels"),
        ("stride", "run.snapshot_stride"),
        ("speed window", "run.speed_window"),
        ("decay offsets", "run.decay_offsets"),
        ("batch", "run.batches"),
        ("dt ", "solver.dt"),
        ("drift_shift", "solver.drift_shift"),
        ("kappa", "model.kappa"),
        ("epsilon", "model.epsilon"),
        ("n must", "model.decay_rate"),
    ];
    let lower = message.to_lowercase();
    HINTS
        .iter()
        .find(|(needle, _)| lower.contains(needle))
        .map_or("-", |(_, key)| key)
}

fn resolve(config: &Path, file: &str) -> PathBuf {
    let p = Path::new(file);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        config.parent().unwrap_or(Path::new("")).join(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_str(text: &str) -> Result<RunConfig> {
        parse(text, Path::new("test.conf"))
    }

    fn parse_err(text: &str) -> (usize, String) {
        match parse_str(text).unwrap_err() {
            Error::Parse { line, key, .. } => (line, key),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_config_gives_defaults() {
        let c = parse_str("# nothing\n\n").unwrap();
        let e = &c.experiment;
        assert_eq!(e.params.kappa, 1.0);
        assert_eq!(e.params.decay_rate, 3.0);
        assert_eq!(e.route, Route::Normalized);
        assert_eq!(e.levels, vec![0.5]);
        assert_eq!(e.grid.dx, 0.05);
        assert!(e.control.is_some());
        assert!(c.wcov.is_none());
    }

    #[test]
    fn correlated_example() {
        let c = parse_str(
            "model.epsilon = 0.5 # inline comment\n\
             model.decay_rate = 1\n\
             noise.kind = squared_exponential\n\
             noise.length = 2\n\
             solver.drift_shift = theory\n\
             run.route = spde\n\
             run.levels = 0.25, 0.5\n\
             wcov.lags = 0, 12\n",
        )
        .unwrap();
        let e = &c.experiment;
        assert_eq!(e.params.noise.kernel, CovarianceKernel::SquaredExponential { sigma2: 1.0, length: 2.0 });
        assert!((e.params.drift_shift - 1.5).abs() < 1e-12);
        assert_eq!(e.frame, FramePolicy::Fixed);
        assert_eq!(e.levels, vec![0.25, 0.5]);
        assert!(e.control.is_none());
        assert_eq!(c.wcov.unwrap().lags, vec![0.0, 12.0]);
    }

    #[test]
    fn diagnostics_name_line_and_key() {
        assert_eq!(parse_err("model.kappa = 1\nmodel.kapa = 2\n"), (2, "model.kapa".into()));
        assert_eq!(parse_err("\n\nmodel.kappa = one\n"), (3, "model.kappa".into()));
        assert_eq!(parse_err("model.kappa = 1\nmodel.kappa = 2\n"), (2, "model.kappa".into()));
        assert_eq!(parse_err("just words\n"), (1, "-".into()));
        assert_eq!(parse_err("noise.kind = squared_exponential\n"), (0, "noise.length".into()));
        assert_eq!(parse_err("run.speed_window = 0.1\n"), (1, "run.speed_window".into()));
        assert_eq!(parse_err("noise.length = 2\n"), (1, "noise.length".into()));
    }

    #[test]
    fn validation_errors_point_at_the_file() {
        let (_, key) = parse_err("run.paths = 0\n");
        assert_eq!(key, "run.paths");
    }

    #[test]
    fn seed_override() {
        let c = parse_str("noise.seed = 3\n").unwrap().with_seed(9);
        assert_eq!(c.experiment.params.noise.seed, 9);
    }
}
