//! Level markers and front statistics.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::Field;
use crate::stats::{self, Z95};
use crate::theory::TheoryPrediction;

/// Tolerance for treating a profile as monotone non-increasing.
pub const MONOTONE_TOLERANCE: f64 = 1e-8;
/// Minimum number of track samples in a speed fit window.
pub const MIN_SPEED_SAMPLES: usize = 10;
pub const DEFAULT_SPEED_WINDOW: (f64, f64) = (0.4, 0.9);
pub const DEFAULT_DECAY_OFFSETS: (f64, f64) = (5.0, 15.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum MarkerKind {
    Pathwise,
    Expectation,
}

/// Marker positions over time in physical coordinates.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MarkerTrack {
    pub a: f64,
    pub times: Vec<f64>,
    pub positions: Vec<f64>,
    pub kind: MarkerKind,
}

impl MarkerTrack {
    pub fn new(a: f64, kind: MarkerKind) -> Result<Self> {
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::Config(format!("marker level must lie in (0, 1), got {a}")));
        }
        Ok(Self {
            a,
            times: Vec::new(),
            positions: Vec::new(),
            kind,
        })
    }

    pub fn push(&mut self, time: f64, position: f64) -> Result<()> {
        if !position.is_finite() {
            return Err(Error::Numeric(format!("marker position {position} at t = {time}")));
        }
        if self.times.last().is_some_and(|&t| time <= t) {
            return Err(Error::Misuse(format!("marker times must increase, got {time}")));
        }
        self.times.push(time);
        self.positions.push(position);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkerHit {
    pub position: f64,
    /// The profile was not monotone and was replaced by its running minimum.
    pub regularized: bool,
}

fn is_monotone(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] <= w[0] + MONOTONE_TOLERANCE)
}

/// Position where a non-increasing profile crosses `a`.
fn invert(field: &Field, values: &[f64], a: f64) -> Result<f64> {
    let first = values[0];
    let last = values[values.len() - 1];
    if !(a < first && a > last) {
        return Err(Error::LevelNotAttained {
            level: a,
            min: last,
            max: first,
        });
    }
    let k = values.partition_point(|&v| v >= a);
    let (hi, lo) = (values[k - 1], values[k]);
    let frac = (hi - a) / (hi - lo);
    Ok(field.grid.x(k - 1) + frac * field.grid.dx)
}

/// Physical position where the monotone profile equals `a`.
pub fn a_marker(field: &Field, a: f64) -> Result<MarkerHit> {
    if field.values.len() < 2 {
        return Err(Error::Misuse("marker needs at least two nodes".into()));
    }
    let regularized = !is_monotone(&field.values);
    // sub-tolerance wiggles are clamped too so the bracket is well defined
    let mut vals = field.values.clone();
    running_min(&mut vals);
    Ok(MarkerHit {
        position: invert(field, &vals, a)?,
        regularized,
    })
}

fn running_min(values: &mut [f64]) {
    for i in 1..values.len() {
        values[i] = values[i].min(values[i - 1]);
    }
}

/// Least-squares non-increasing fit (pool-adjacent-violators).
pub fn isotonic_decreasing(values: &[f64]) -> Vec<f64> {
    // blocks of (sum, count)
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (s1, c1) = blocks[blocks.len() - 1];
            let (s0, c0) = blocks[blocks.len() - 2];
            if s1 / c1 as f64 > s0 / c0 as f64 {
                blocks.pop();
                let top = blocks.len() - 1;
                blocks[top] = (s0 + s1, c0 + c1);
            } else {
                break;
            }
        }
    }
    let mut out = Vec::with_capacity(values.len());
    for (s, c) in blocks {
        let m = s / c as f64;
        out.extend(core::iter::repeat(m).take(c));
    }
    out
}

/// Node-wise ensemble mean of fields on a common grid.
pub fn mean_field(fields: &[Field]) -> Result<Field> {
    let first = fields.first().ok_or_else(|| Error::Misuse("empty ensemble".into()))?;
    if fields.iter().any(|f| f.grid != first.grid) {
        return Err(Error::Misuse("ensemble fields are on different grids".into()));
    }
    let mut column = Vec::with_capacity(fields.len());
    let values = (0..first.values.len())
        .map(|i| {
            column.clear();
            column.extend(fields.iter().map(|f| f.values[i]));
            stats::mean(&column)
        })
        .collect();
    Ok(Field {
        grid: first.grid,
        values,
        time: first.time,
    })
}

/// Level-`a` marker of an ensemble-mean field after isotonic regularization.
/// Fails with `LevelNotAttained` when `a` is at or above the regularized
/// maximum, which signals `a ≥ a*`.
pub fn expectation_marker(mean_field: &Field, a: f64) -> Result<f64> {
    if mean_field.values.len() < 2 {
        return Err(Error::Misuse("marker needs at least two nodes".into()));
    }
    let vals = isotonic_decreasing(&mean_field.values);
    invert(mean_field, &vals, a)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpeedFit {
    pub slope: f64,
    pub half_width: f64,
    pub samples: usize,
    pub window: (f64, f64),
}

/// Least-squares slope of the track over `t ∈ [lo·T, hi·T]`, `T` the last
/// sample time.
pub fn speed_estimate(track: &MarkerTrack, window_fraction: (f64, f64)) -> Result<SpeedFit> {
    let (lo, hi) = window_fraction;
    if !(0.0 <= lo && lo < hi) {
        return Err(Error::Misuse(format!("bad speed window ({lo}, {hi})")));
    }
    let horizon = *track
        .times
        .last()
        .ok_or_else(|| Error::Misuse("empty marker track".into()))?;
    let (t_lo, t_hi) = (lo * horizon, hi * horizon);
    let mut ts = Vec::new();
    let mut xs = Vec::new();
    for (&t, &x) in track.times.iter().zip(&track.positions) {
        if t >= t_lo && t <= t_hi {
            ts.push(t);
            xs.push(x);
        }
    }
    if ts.len() < MIN_SPEED_SAMPLES {
        return Err(Error::Misuse(format!(
            "{} track samples in [{t_lo}, {t_hi}], need {MIN_SPEED_SAMPLES}",
            ts.len()
        )));
    }
    let fit = stats::fit_line(&ts, &xs).ok_or_else(|| Error::Misuse("degenerate time window".into()))?;
    Ok(SpeedFit {
        slope: fit.slope,
        half_width: Z95 * fit.slope_se,
        samples: fit.samples,
        window: (t_lo, t_hi),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DecayFit {
    pub rate: f64,
    pub half_width: f64,
    pub samples: usize,
}

/// Slope of `−log u` over `x ∈ [marker + x_lo, marker + x_hi]`.
pub fn decay_estimate(field: &Field, marker: f64, offset_range: (f64, f64)) -> Result<DecayFit> {
    let (lo, hi) = (marker + offset_range.0, marker + offset_range.1);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, &v) in field.values.iter().enumerate() {
        let x = field.grid.x(i);
        if x < lo || x > hi {
            continue;
        }
        if !(v > 0.0) {
            return Err(Error::Domain(format!("u = {v} at x = {x} in decay window")));
        }
        xs.push(x);
        ys.push(-libm::log(v));
    }
    if xs.len() < 3 {
        return Err(Error::InsufficientDomain(format!(
            "decay window [{lo}, {hi}] holds {} nodes of the grid [{}, {}]",
            xs.len(),
            field.grid.left(),
            field.grid.right()
        )));
    }
    let fit = stats::fit_line(&xs, &ys).ok_or_else(|| Error::Misuse("degenerate decay window".into()))?;
    Ok(DecayFit {
        rate: fit.slope,
        half_width: Z95 * fit.slope_se,
        samples: fit.samples,
    })
}

/// Marker velocity from the local profile:
/// `−(κ/2)(log θ)_x + κθ/2 + v(1 − a)/θ` evaluated at the level-`a` marker,
/// with `θ = −(log u)_x`.
pub fn instantaneous_speed(u_field: &Field, theta_field: &Field, v: f64, a: f64, kappa: f64) -> Result<f64> {
    if theta_field.grid.dx != u_field.grid.dx || theta_field.values.len() != u_field.values.len() {
        return Err(Error::Misuse("u and theta must share a grid".into()));
    }
    let g = a_marker(u_field, a)?.position;
    let theta = theta_field.interpolate(g);
    if !(theta > 0.0) {
        return Err(Error::DegenerateFront(format!("theta = {theta} at the marker {g}")));
    }
    let s = theta_field.grid.index_of(g);
    let i = (libm::floor(s) as usize).min(theta_field.values.len() - 2);
    let (t0, t1) = (theta_field.values[i], theta_field.values[i + 1]);
    if !(t0 > 0.0 && t1 > 0.0) {
        return Err(Error::DegenerateFront(format!("theta changes sign near the marker {g}")));
    }
    let dlog = (libm::log(t1) - libm::log(t0)) / theta_field.grid.dx;
    Ok(-0.5 * kappa * dlog + 0.5 * kappa * theta + v * (1.0 - a) / theta)
}

/// Measured front statistics next to the prediction they test.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FrontReport {
    pub level: f64,
    pub kind: MarkerKind,
    pub speed: Option<f64>,
    pub speed_ci: Option<f64>,
    /// Speed after the `∫v` control variate (normalized route).
    pub speed_adjusted: Option<f64>,
    pub speed_adjusted_ci: Option<f64>,
    pub decay: Option<f64>,
    pub decay_ci: Option<f64>,
    pub window: (f64, f64),
    pub theory: TheoryPrediction,
    pub theory_speed: Option<f64>,
    pub theory_decay: Option<f64>,
    /// Some profile needed regularization before inversion.
    pub regularized: bool,
}

impl FrontReport {
    pub fn new(level: f64, kind: MarkerKind, theory: TheoryPrediction) -> Self {
        Self {
            level,
            kind,
            speed: None,
            speed_ci: None,
            speed_adjusted: None,
            speed_adjusted_ci: None,
            decay: None,
            decay_ci: None,
            window: (0.0, 0.0),
            theory_speed: theory.speed,
            theory_decay: theory.decay,
            theory,
            regularized: false,
        }
    }
}
