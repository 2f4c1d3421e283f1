//! Multi-path experiments.
//!
//! Paths are independent: path `k` draws from stream `k` of the configured
//! seed. [`run_path`] produces one [`PathRecord`]; an [`Aggregator`] folds
//! records in increasing stream order, so any scheduler that hands them over
//! in that order reproduces the serial [`run_experiment`] bit for bit.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::{Field, GridSpec};
use crate::markers::{self, FrontReport, MarkerKind, MarkerTrack};
use crate::noise::{CovarianceKernel, Interpretation};
use crate::sde;
use crate::solver::{steps_for, FramePolicy, KppParams, NormalizedSolver, SpdeSolver};
use crate::stats::{self, Estimate, Z95};
use crate::theory::{self, TheoryPrediction};

/// Fraction of paths that must survive for a summary to be produced.
pub const SURVIVOR_FRACTION: f64 = 0.8;
pub const DEFAULT_A_STAR_OFFSET: f64 = 30.0;
/// Floor applied before taking logarithms of the field.
const LOG_FLOOR: f64 = 1e-300;

/// Which equation each path integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Route {
    /// `ũ = u/v` driven by the flat SDE; scalar noise only; pathwise markers.
    Normalized,
    /// The stochastic field `u` itself; expectation markers.
    Spde,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExperimentConfig {
    pub params: KppParams,
    pub grid: GridSpec,
    pub horizon: f64,
    pub paths: usize,
    pub levels: Vec<f64>,
    pub snapshot_stride: f64,
    /// Fit window as fractions of the horizon.
    pub speed_window: (f64, f64),
    /// Decay fit offsets ahead of the marker.
    pub decay_offsets: (f64, f64),
    pub route: Route,
    pub frame: FramePolicy,
    /// Distance behind the ½ expectation marker where the plateau starts.
    pub a_star_offset: f64,
    /// Batches for the a* standard error.
    pub batches: usize,
    /// Independent flat-SDE runs that fix the control-variate mean.
    pub control: Option<ControlSpec>,
}

/// Pathwise speeds fluctuate mostly through `V(t) = ∫₀ᵗ v`. The slope of
/// `V` over the fit window has mean `E[v]`, which `paths` independent
/// flat-SDE runs of length `horizon` estimate; regressing the per-path
/// front speeds on the per-path `V` slopes then removes most of that noise
/// without biasing the mean.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ControlSpec {
    pub paths: usize,
    pub horizon: f64,
}

impl Default for ControlSpec {
    fn default() -> Self {
        Self {
            paths: 32,
            horizon: 5000.0,
        }
    }
}

impl ExperimentConfig {
    pub fn new(params: KppParams, grid: GridSpec, horizon: f64, paths: usize, route: Route) -> Self {
        let frame = match route {
            Route::Normalized => FramePolicy::default(),
            Route::Spde => FramePolicy::Fixed,
        };
        Self {
            params,
            grid,
            horizon,
            paths,
            levels: vec![0.5],
            snapshot_stride: 1.0,
            speed_window: markers::DEFAULT_SPEED_WINDOW,
            decay_offsets: markers::DEFAULT_DECAY_OFFSETS,
            route,
            frame,
            a_star_offset: DEFAULT_A_STAR_OFFSET,
            batches: 8,
            control: match route {
                Route::Normalized => Some(ControlSpec::default()),
                Route::Spde => None,
            },
        }
    }

    pub fn validate(&self) -> Result<Vec<String>> {
        let warnings = self.params.validate(&self.grid)?;
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.paths == 0 {
            return Err(Error::Config("paths must be >= 1".into()));
        }
        if self.levels.is_empty() || self.levels.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
            return Err(Error::Config(format!("marker levels must lie in (0, 1): {:?}", self.levels)));
        }
        if !(self.snapshot_stride >= self.params.dt) {
            return Err(Error::Config(format!(
                "snapshot stride {} is below dt {}",
                self.snapshot_stride, self.params.dt
            )));
        }
        let (lo, hi) = self.speed_window;
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(Error::Config(format!("speed window ({lo}, {hi}) must satisfy 0 <= lo < hi <= 1")));
        }
        if !(self.decay_offsets.0 < self.decay_offsets.1) {
            return Err(Error::Config("decay offsets must be increasing".into()));
        }
        if let Some(c) = self.control {
            if c.paths < 2 || !(c.horizon > 0.0) {
                return Err(Error::Config("control runs need >= 2 paths and a positive horizon".into()));
            }
        }
        if self.batches == 0 {
            return Err(Error::Config("batches must be >= 1".into()));
        }
        match self.route {
            Route::Normalized if !self.params.noise.kernel.is_constant() => {
                return Err(Error::Config("the normalized route needs a constant (scalar) kernel".into()));
            }
            Route::Spde if self.frame != FramePolicy::Fixed => {
                return Err(Error::Config(
                    "the SPDE route averages over paths and needs a fixed (or co-moving) frame".into(),
                ));
            }
            _ => {}
        }
        Ok(warnings)
    }

    pub fn total_steps(&self) -> u64 {
        steps_for(self.horizon, self.params.dt)
    }

    /// Step indices of the snapshots, starting at 0 and ending at the horizon.
    pub fn snapshot_steps(&self) -> Vec<u64> {
        let total = self.total_steps();
        let stride = steps_for(self.snapshot_stride, self.params.dt).max(1);
        let mut out: Vec<u64> = (0..=total / stride).map(|k| k * stride).collect();
        if *out.last().unwrap() != total {
            out.push(total);
        }
        out
    }

    pub fn snapshot_times(&self) -> Vec<f64> {
        self.snapshot_steps().iter().map(|&s| s as f64 * self.params.dt).collect()
    }

    pub fn theory(&self) -> TheoryPrediction {
        let p = &self.params;
        if !p.noise.kernel.is_constant() {
            return theory::correlated_prediction(p.kappa, p.decay_rate);
        }
        // a scalar kernel σ² acts as ε√σ² on one Wiener process
        let eps = p.epsilon * libm::sqrt(p.noise.kernel.variance());
        match p.noise.interpretation {
            Interpretation::Ito => theory::ito_scalar_prediction(p.kappa, eps, p.decay_rate),
            Interpretation::Stratonovich => theory::stratonovich_scalar_prediction(p.kappa, p.decay_rate),
        }
    }

    fn late_window(&self) -> (f64, f64) {
        (self.speed_window.0 * self.horizon, self.speed_window.1 * self.horizon)
    }
}

/// Output of a single path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathData {
    /// Pathwise marker tracks, one per level (normalized route).
    pub tracks: Vec<MarkerTrack>,
    /// Per level: mean tail decay over the late window (normalized route).
    pub decay: Vec<Option<f64>>,
    /// Fields at every snapshot (SPDE route).
    pub snapshots: Vec<Field>,
    pub final_field: Field,
    pub final_max: f64,
    /// Final value of the flat SDE (normalized route).
    pub final_v: Option<f64>,
    /// `∫₀ᵗ v` at every snapshot, left-point sums (normalized route).
    pub v_integral: Vec<f64>,
    pub regularized: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub stream_id: u64,
    /// `Err` holds the numerical failure that stopped the path.
    pub outcome: core::result::Result<PathData, Error>,
}

fn is_path_failure(e: &Error) -> bool {
    matches!(e, Error::Instability { .. } | Error::Numeric(_))
}

/// Runs path `stream_id`. Numerical blow-ups are returned inside the record;
/// configuration errors are returned as `Err`.
pub fn run_path(config: &ExperimentConfig, stream_id: u64) -> Result<PathRecord> {
    let outcome = match config.route {
        Route::Normalized => normalized_path(config, stream_id),
        Route::Spde => spde_path(config, stream_id),
    };
    match outcome {
        Ok(data) => Ok(PathRecord {
            stream_id,
            outcome: Ok(data),
        }),
        Err(e) if is_path_failure(&e) => Ok(PathRecord {
            stream_id,
            outcome: Err(e),
        }),
        Err(e) => Err(e),
    }
}

fn path_params(config: &ExperimentConfig, stream_id: u64) -> KppParams {
    let mut params = config.params.clone();
    params.noise = params.noise.with_stream(stream_id);
    params
}

fn normalized_path(config: &ExperimentConfig, stream_id: u64) -> Result<PathData> {
    let params = path_params(config, stream_id);
    let total = config.total_steps();
    let v_path = sde::simulate_v(params.epsilon, 1.0, params.dt, total as usize, &params.noise)?;
    let mut v_integral = Vec::new();
    let mut acc = 0.0;
    let mut done = 0usize;
    for step in config.snapshot_steps() {
        let step = step as usize;
        acc += v_path.values[done..step].iter().sum::<f64>() * params.dt;
        done = step;
        v_integral.push(acc);
    }
    let mut solver = NormalizedSolver::new(v_path, params, config.grid, config.frame)?;
    let mut tracks = config
        .levels
        .iter()
        .map(|&a| MarkerTrack::new(a, MarkerKind::Pathwise))
        .collect::<Result<Vec<_>>>()?;
    let (t_lo, t_hi) = config.late_window();
    let mut decay_sum = vec![0.0; config.levels.len()];
    let mut decay_count = vec![0usize; config.levels.len()];
    let mut regularized = false;
    for step in config.snapshot_steps() {
        solver.advance_to(step)?;
        let field = solver.field();
        let late = field.time >= t_lo && field.time <= t_hi;
        for (k, track) in tracks.iter_mut().enumerate() {
            let hit = markers::a_marker(field, track.a)?;
            regularized |= hit.regularized;
            track.push(field.time, hit.position)?;
            if late {
                if let Ok(d) = markers::decay_estimate(field, hit.position, config.decay_offsets) {
                    decay_sum[k] += d.rate;
                    decay_count[k] += 1;
                }
            }
        }
    }
    let decay = decay_sum
        .iter()
        .zip(&decay_count)
        .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
        .collect();
    let final_field = solver.field().clone();
    Ok(PathData {
        tracks,
        decay,
        snapshots: Vec::new(),
        final_max: final_field.max(),
        final_v: Some(solver.state().v_current),
        v_integral,
        final_field,
        regularized,
    })
}

fn spde_path(config: &ExperimentConfig, stream_id: u64) -> Result<PathData> {
    let params = path_params(config, stream_id);
    let mut solver = SpdeSolver::new(params, config.grid, config.frame)?;
    let steps = config.snapshot_steps();
    let mut snapshots = Vec::with_capacity(steps.len());
    for step in steps {
        solver.advance_to(step)?;
        snapshots.push(solver.field().clone());
    }
    let final_field = solver.field().clone();
    Ok(PathData {
        tracks: Vec::new(),
        decay: Vec::new(),
        snapshots,
        final_max: final_field.max(),
        final_v: None,
        v_integral: Vec::new(),
        final_field,
        regularized: false,
    })
}

/// Ensemble outcome. Pathwise-route fields are on path-dependent frames, so
/// `mean_fields` is only filled on the SPDE route.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnsembleSummary {
    pub route: Route,
    pub paths: usize,
    pub survivors: Vec<u64>,
    pub failed: Vec<u64>,
    pub snapshot_times: Vec<f64>,
    pub mean_fields: Vec<Field>,
    /// Expectation tracks (SPDE route) or path-averaged tracks (normalized).
    pub tracks: Vec<MarkerTrack>,
    /// Per-path tracks, in survivor order (normalized route).
    pub path_tracks: Vec<Vec<MarkerTrack>>,
    pub reports: Vec<FrontReport>,
    pub a_star: Option<Estimate>,
    /// `sup_x u` at the horizon, per survivor.
    pub final_max: Vec<f64>,
    pub final_v: Vec<f64>,
    pub notes: Vec<String>,
}

impl EnsembleSummary {
    pub fn report(&self, level: f64) -> Option<&FrontReport> {
        self.reports.iter().find(|r| r.level == level)
    }
}

/// Running sums over one batch of paths.
#[derive(Debug, Clone)]
struct BatchSums {
    count: usize,
    sums: Vec<Vec<f64>>,
}

/// Deterministic fold over path records in stream order.
#[derive(Debug, Clone)]
pub struct Aggregator<'a> {
    config: &'a ExperimentConfig,
    next_stream: u64,
    survivors: Vec<u64>,
    failed: Vec<u64>,
    failures: Vec<Error>,
    grids: Option<Vec<GridSpec>>,
    batches: Vec<BatchSums>,
    log_sums: Vec<Vec<f64>>,
    path_tracks: Vec<Vec<MarkerTrack>>,
    path_decay: Vec<Vec<Option<f64>>>,
    path_v_integral: Vec<Vec<f64>>,
    control: Option<Vec<f64>>,
    final_max: Vec<f64>,
    final_v: Vec<f64>,
    regularized: usize,
    snapshot_times: Vec<f64>,
}

impl<'a> Aggregator<'a> {
    pub fn new(config: &'a ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let snapshot_times = config.snapshot_times();
        let nb = config.batches.min(config.paths);
        let (batches, log_sums) = match config.route {
            Route::Spde => {
                let zeros = vec![vec![0.0; config.grid.n]; snapshot_times.len()];
                (
                    vec![
                        BatchSums {
                            count: 0,
                            sums: zeros.clone()
                        };
                        nb
                    ],
                    zeros,
                )
            }
            Route::Normalized => (Vec::new(), Vec::new()),
        };
        Ok(Self {
            config,
            next_stream: 0,
            survivors: Vec::new(),
            failed: Vec::new(),
            failures: Vec::new(),
            grids: None,
            batches,
            log_sums,
            path_tracks: Vec::new(),
            path_decay: Vec::new(),
            path_v_integral: Vec::new(),
            control: None,
            final_max: Vec::new(),
            final_v: Vec::new(),
            regularized: 0,
            snapshot_times,
        })
    }

    fn batch_of(&self, stream_id: u64) -> usize {
        (stream_id as usize * self.batches.len()) / self.config.paths
    }

    /// Records must arrive with stream ids `0, 1, 2, …`.
    pub fn absorb(&mut self, record: PathRecord) -> Result<()> {
        if record.stream_id != self.next_stream {
            return Err(Error::Misuse(format!(
                "expected stream {}, got {}",
                self.next_stream, record.stream_id
            )));
        }
        self.next_stream += 1;
        let data = match record.outcome {
            Ok(d) => d,
            Err(e) => {
                self.failed.push(record.stream_id);
                self.failures.push(e);
                return Ok(());
            }
        };
        if self.config.route == Route::Spde {
            let grids: Vec<GridSpec> = data.snapshots.iter().map(|f| f.grid).collect();
            match &self.grids {
                None => self.grids = Some(grids),
                Some(g) if *g != grids => {
                    return Err(Error::Misuse("paths disagree on snapshot grids".into()));
                }
                Some(_) => {}
            }
            let b = self.batch_of(record.stream_id);
            let batch = &mut self.batches[b];
            batch.count += 1;
            for (s, field) in data.snapshots.iter().enumerate() {
                for (acc, &u) in batch.sums[s].iter_mut().zip(&field.values) {
                    *acc += u;
                }
                for (acc, &u) in self.log_sums[s].iter_mut().zip(&field.values) {
                    *acc += libm::log(u.max(LOG_FLOOR));
                }
            }
        }
        self.survivors.push(record.stream_id);
        self.path_tracks.push(data.tracks);
        self.path_decay.push(data.decay);
        self.path_v_integral.push(data.v_integral);
        self.final_max.push(data.final_max);
        if let Some(v) = data.final_v {
            self.final_v.push(v);
        }
        self.regularized += data.regularized as usize;
        Ok(())
    }

    /// Per-run time averages of the control flat-SDE runs, in run order
    /// (see [`control_run`]).
    pub fn set_control(&mut self, time_averages: Vec<f64>) {
        self.control = Some(time_averages);
    }

    pub fn finish(self) -> Result<EnsembleSummary> {
        let config = self.config;
        if self.next_stream as usize != config.paths {
            return Err(Error::Misuse(format!(
                "absorbed {} of {} paths",
                self.next_stream, config.paths
            )));
        }
        let survivors = self.survivors.len();
        if (survivors as f64) < SURVIVOR_FRACTION * config.paths as f64 {
            return Err(Error::ExperimentFailed {
                survivors,
                paths: config.paths,
                failed: self.failed,
            });
        }
        let mut notes = Vec::new();
        if !self.failed.is_empty() {
            notes.push(format!(
                "{} paths failed ({:?}); first error: {}",
                self.failed.len(),
                self.failed,
                self.failures[0]
            ));
        }
        if self.regularized > 0 {
            notes.push(format!("{} paths needed monotone regularization", self.regularized));
        }
        let theory = config.theory();
        let mut summary = EnsembleSummary {
            route: config.route,
            paths: config.paths,
            survivors: self.survivors,
            failed: self.failed,
            snapshot_times: self.snapshot_times,
            mean_fields: Vec::new(),
            tracks: Vec::new(),
            path_tracks: Vec::new(),
            reports: Vec::new(),
            a_star: None,
            final_max: self.final_max,
            final_v: self.final_v,
            notes,
        };
        match config.route {
            Route::Normalized => {
                let control = match (config.control, self.control) {
                    (Some(_), Some(c)) => Some(stats::mean_estimate(&c)),
                    (Some(_), None) => return Err(Error::Misuse("control runs were not supplied".into())),
                    (None, _) => None,
                };
                let cv = control.map(|c| (c, self.path_v_integral.as_slice()));
                finish_pathwise(config, &mut summary, self.path_tracks, &self.path_decay, cv, theory)?
            }
            Route::Spde => finish_expectation(
                config,
                &mut summary,
                &self.batches,
                &self.log_sums,
                &self.grids.unwrap_or_default(),
                theory,
            )?,
        }
        Ok(summary)
    }
}

fn finish_pathwise(
    config: &ExperimentConfig,
    summary: &mut EnsembleSummary,
    path_tracks: Vec<Vec<MarkerTrack>>,
    path_decay: &[Vec<Option<f64>>],
    control: Option<(Estimate, &[Vec<f64>])>,
    theory: TheoryPrediction,
) -> Result<()> {
    let p = path_tracks.len();
    // slope of ∫v over the fit window, per path
    let v_slopes = match control {
        Some((_, integrals)) => {
            let times = &summary.snapshot_times;
            let (t_lo, t_hi) = config.late_window();
            let idx: Vec<usize> = (0..times.len()).filter(|&i| times[i] >= t_lo && times[i] <= t_hi).collect();
            let ts: Vec<f64> = idx.iter().map(|&i| times[i]).collect();
            integrals
                .iter()
                .map(|v| {
                    let ys: Vec<f64> = idx.iter().map(|&i| v[i]).collect();
                    stats::fit_line(&ts, &ys).map(|f| f.slope)
                })
                .collect::<Option<Vec<f64>>>()
        }
        None => None,
    };
    for (k, &a) in config.levels.iter().enumerate() {
        let mut report = FrontReport::new(a, MarkerKind::Pathwise, theory);
        let first = &path_tracks[0][k];
        let mut mean_track = MarkerTrack::new(a, MarkerKind::Pathwise)?;
        let mut column = Vec::with_capacity(p);
        for (i, &t) in first.times.iter().enumerate() {
            column.clear();
            column.extend(path_tracks.iter().map(|tr| tr[k].positions[i]));
            mean_track.push(t, stats::mean(&column))?;
        }
        let fits = path_tracks
            .iter()
            .map(|tr| markers::speed_estimate(&tr[k], config.speed_window))
            .collect::<Result<Vec<_>>>()?;
        report.window = fits[0].window;
        let slopes: Vec<f64> = fits.iter().map(|f| f.slope).collect();
        report.speed = Some(stats::mean(&slopes));
        report.speed_ci = Some(if p > 1 {
            Z95 * stats::mean_estimate(&slopes).std_error
        } else {
            fits[0].half_width
        });
        if let (Some((mean, _)), Some(c)) = (control, &v_slopes) {
            if let Some((value, se)) = control_variate(&slopes, c, mean) {
                report.speed_adjusted = Some(value);
                report.speed_adjusted_ci = Some(Z95 * se);
            }
        }
        let decays: Vec<f64> = path_decay.iter().filter_map(|d| d[k]).collect();
        if decays.len() == p {
            let est = stats::mean_estimate(&decays);
            report.decay = Some(est.value);
            report.decay_ci = Some(Z95 * est.std_error);
        } else {
            summary.notes.push(format!(
                "level {a}: decay window unavailable on {} paths",
                p - decays.len()
            ));
        }
        summary.tracks.push(mean_track);
        summary.reports.push(report);
    }
    summary.path_tracks = path_tracks;
    Ok(())
}

/// `s̄ − β (c̄ − m)` with `β` the least-squares slope of `s` on `c` and
/// `m` the independently estimated mean of `c`.
fn control_variate(s: &[f64], c: &[f64], m: Estimate) -> Option<(f64, f64)> {
    let p = s.len();
    if p < 3 {
        return None;
    }
    let fit = stats::fit_line(c, s)?;
    let (s_bar, c_bar) = (stats::mean(s), stats::mean(c));
    let value = s_bar - fit.slope * (c_bar - m.value);
    let resid: Vec<f64> = s.iter().zip(c).map(|(s, c)| s - fit.slope * c).collect();
    let var = stats::sample_variance(&resid) * (p - 1) as f64 / (p - 2) as f64 / p as f64
        + fit.slope * fit.slope * m.std_error * m.std_error;
    Some((value, libm::sqrt(var)))
}

fn batch_mean_fields(batches: &[BatchSums], grids: &[GridSpec], times: &[f64]) -> Vec<Field> {
    let count: usize = batches.iter().map(|b| b.count).sum();
    (0..times.len())
        .map(|s| {
            let mut values = vec![0.0; grids[s].n];
            for b in batches {
                for (acc, v) in values.iter_mut().zip(&b.sums[s]) {
                    *acc += v;
                }
            }
            for v in &mut values {
                *v /= count as f64;
            }
            Field {
                grid: grids[s],
                values,
                time: times[s],
            }
        })
        .collect()
}

/// Level used to anchor the a* plateau: ½, or half the mean-field maximum
/// when ½ is not attained.
fn plateau_anchor(mean: &Field) -> Option<f64> {
    if let Ok(g) = markers::expectation_marker(mean, 0.5) {
        return Some(g);
    }
    let fit = markers::isotonic_decreasing(&mean.values);
    markers::expectation_marker(mean, 0.5 * fit[0]).ok()
}

fn finish_expectation(
    config: &ExperimentConfig,
    summary: &mut EnsembleSummary,
    batches: &[BatchSums],
    log_sums: &[Vec<f64>],
    grids: &[GridSpec],
    theory: TheoryPrediction,
) -> Result<()> {
    let times = summary.snapshot_times.clone();
    let means = batch_mean_fields(batches, grids, &times);
    let count = summary.survivors.len() as f64;
    let (t_lo, t_hi) = config.late_window();
    for &a in &config.levels {
        let mut report = FrontReport::new(a, MarkerKind::Expectation, theory);
        let mut track = MarkerTrack::new(a, MarkerKind::Expectation)?;
        let mut decays = Vec::new();
        let mut missing = 0usize;
        for (s, mean) in means.iter().enumerate() {
            let Ok(g) = markers::expectation_marker(mean, a) else {
                missing += 1;
                continue;
            };
            track.push(mean.time, g)?;
            if mean.time >= t_lo && mean.time <= t_hi {
                let geo = Field {
                    grid: mean.grid,
                    values: log_sums[s].iter().map(|l| libm::exp(l / count)).collect(),
                    time: mean.time,
                };
                if let Ok(d) = markers::decay_estimate(&geo, g, config.decay_offsets) {
                    decays.push(d.rate);
                }
            }
        }
        if missing > 0 {
            summary
                .notes
                .push(format!("level {a}: expectation marker not attained at {missing} snapshots"));
        }
        match markers::speed_estimate(&track, config.speed_window) {
            Ok(fit) if track.times.last() == times.last() => {
                report.speed = Some(fit.slope);
                report.speed_ci = Some(fit.half_width);
                report.window = fit.window;
            }
            _ => summary.notes.push(format!("level {a}: no speed estimate")),
        }
        if decays.len() >= 2 {
            let est = stats::mean_estimate(&decays);
            report.decay = Some(est.value);
            // snapshots are correlated; the spread is a descriptive band
            report.decay_ci = Some(Z95 * libm::sqrt(stats::sample_variance(&decays)));
        }
        summary.tracks.push(track);
        summary.reports.push(report);
    }
    match a_star_from_batches(config, batches, grids, &times, &means) {
        Ok(est) => summary.a_star = Some(est),
        Err(e) => summary.notes.push(format!("a* not estimated: {e}")),
    }
    summary.mean_fields = means;
    Ok(())
}

fn a_star_from_batches(
    config: &ExperimentConfig,
    batches: &[BatchSums],
    grids: &[GridSpec],
    times: &[f64],
    means: &[Field],
) -> Result<Estimate> {
    let (t_lo, t_hi) = config.late_window();
    // plateau index ranges per late snapshot
    let mut regions = Vec::new();
    for (s, mean) in means.iter().enumerate() {
        if times[s] < t_lo || times[s] > t_hi {
            continue;
        }
        let g = plateau_anchor(mean)
            .ok_or_else(|| Error::InsufficientDomain(format!("no front in the mean field at t = {}", times[s])))?;
        let edge = g - config.a_star_offset;
        let end = (0..grids[s].n).take_while(|&i| grids[s].x(i) <= edge).count();
        if end == 0 {
            return Err(Error::InsufficientDomain(format!(
                "no grid point {} behind the marker at t = {}",
                config.a_star_offset, times[s]
            )));
        }
        regions.push((s, end));
    }
    if regions.is_empty() {
        return Err(Error::InsufficientDomain("no snapshot in the late window".into()));
    }
    let plateau = |field_of: &dyn Fn(usize) -> Vec<f64>| -> f64 {
        let per_snapshot: Vec<f64> = regions
            .iter()
            .map(|&(s, end)| stats::mean(&field_of(s)[..end]))
            .collect();
        stats::mean(&per_snapshot)
    };
    let value = plateau(&|s| means[s].values.clone());
    let batch_values: Vec<f64> = batches
        .iter()
        .filter(|b| b.count > 0)
        .map(|b| plateau(&|s| b.sums[s].iter().map(|v| v / b.count as f64).collect()))
        .collect();
    let std_error = if batch_values.len() > 1 {
        stats::mean_estimate(&batch_values).std_error
    } else {
        0.0
    };
    Ok(Estimate { value, std_error })
}

/// Control run `k`: time average of `v` after a 20% burn-in, on stream
/// `paths + k` so it never shares noise with a front path.
pub fn control_run(config: &ExperimentConfig, k: usize) -> Result<f64> {
    let spec = config
        .control
        .ok_or_else(|| Error::Misuse("no control runs configured".into()))?;
    let p = &config.params;
    let model = p.noise.with_stream((config.paths + k) as u64);
    let path = sde::simulate_v(p.epsilon, 1.0, p.dt, steps_for(spec.horizon, p.dt) as usize, &model)?;
    sde::estimate_time_average(&[path], sde::default_burn_in(spec.horizon), |v| v).map(|e| e.value)
}

/// Serial reference execution.
pub fn run_experiment(config: &ExperimentConfig) -> Result<EnsembleSummary> {
    let mut agg = Aggregator::new(config)?;
    for id in 0..config.paths as u64 {
        agg.absorb(run_path(config, id)?)?;
    }
    if let (Route::Normalized, Some(spec)) = (config.route, config.control) {
        let c = (0..spec.paths).map(|k| control_run(config, k)).collect::<Result<Vec<_>>>()?;
        agg.set_control(c);
    }
    agg.finish()
}

/// Plateau level of the ensemble mean behind the front.
pub fn estimate_a_star(config: &ExperimentConfig, behind_offset: f64) -> Result<Estimate> {
    if config.route != Route::Spde {
        return Err(Error::Config("a* needs the SPDE route".into()));
    }
    let mut cfg = config.clone();
    cfg.a_star_offset = behind_offset;
    let summary = run_experiment(&cfg)?;
    summary.a_star.ok_or_else(|| {
        Error::InsufficientDomain(
            summary
                .notes
                .iter()
                .find(|n| n.starts_with("a*"))
                .cloned()
                .unwrap_or_default(),
        )
    })
}

/// Per-path moments of `w = −(log u)_x` in the tail window.
#[derive(Debug, Clone, PartialEq)]
pub struct WPathMoments {
    pub stream_id: u64,
    pub mean: f64,
    /// `E[w(x) w(x+lag)]` per requested lag.
    pub second: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WCovEntry {
    pub lag: f64,
    /// `E[w(x) w(x+lag)] − E[w]²`.
    pub covariance: f64,
    pub std_error: f64,
    pub second_moment: f64,
    pub second_moment_se: f64,
    pub mean_w: f64,
    /// `(ε²/κ) Γ(lag)`.
    pub predicted_covariance: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WCovTable {
    pub entries: Vec<WCovEntry>,
    pub paths_used: usize,
    pub paths_dropped: usize,
}

fn check_w_config(config: &ExperimentConfig, tail_window: (f64, f64)) -> Result<()> {
    if config.route != Route::Spde {
        return Err(Error::Config("w statistics need the SPDE route".into()));
    }
    if !(tail_window.0 < tail_window.1) {
        return Err(Error::Config("tail window must be increasing".into()));
    }
    Ok(())
}

/// Reruns path `stream_id` and measures `w` in the frame of `marker_track`
/// (an expectation track over the same snapshot times). `Ok(None)` means
/// the path hit a nonpositive value in the window and is dropped.
pub fn w_path_moments(
    config: &ExperimentConfig,
    stream_id: u64,
    marker_track: &MarkerTrack,
    lags: &[f64],
    tail_window: (f64, f64),
) -> Result<Option<WPathMoments>> {
    check_w_config(config, tail_window)?;
    let params = path_params(config, stream_id);
    let mut solver = SpdeSolver::new(params, config.grid, config.frame)?;
    let dx = config.grid.dx;
    let lag_cells: Vec<usize> = lags.iter().map(|l| libm::round(l.abs() / dx) as usize).collect();
    let (t_lo, t_hi) = config.late_window();
    let mut w_sum = 0.0;
    let mut w_count = 0usize;
    let mut prod = vec![0.0; lags.len()];
    let mut prod_count = vec![0usize; lags.len()];
    let mut w = Vec::new();
    for (step, time) in config.snapshot_steps().into_iter().zip(config.snapshot_times()) {
        if time < t_lo || time > t_hi {
            continue;
        }
        let Some(k) = marker_track.times.iter().position(|&t| t == time) else {
            continue;
        };
        match solver.advance_to(step) {
            Ok(()) => {}
            Err(e) if is_path_failure(&e) => return Ok(None),
            Err(e) => return Err(e),
        }
        let field = solver.field();
        let g = marker_track.positions[k];
        let n = field.grid.n;
        let lo = libm::ceil(field.grid.index_of(g + tail_window.0)).max(1.0) as usize;
        let hi = (libm::floor(field.grid.index_of(g + tail_window.1)) as usize).min(n - 2);
        if lo > hi {
            return Err(Error::InsufficientDomain(format!(
                "tail window misses the grid at t = {time}"
            )));
        }
        w.clear();
        for i in lo..=hi {
            let (a, b) = (field.values[i - 1], field.values[i + 1]);
            if !(a > 0.0 && b > 0.0) {
                return Ok(None);
            }
            w.push(-(libm::log(b) - libm::log(a)) / (2.0 * dx));
        }
        w_sum += w.iter().sum::<f64>();
        w_count += w.len();
        for (j, &l) in lag_cells.iter().enumerate() {
            for i in 0..w.len().saturating_sub(l) {
                prod[j] += w[i] * w[i + l];
                prod_count[j] += 1;
            }
        }
    }
    if w_count == 0 || prod_count.iter().any(|&c| c == 0) {
        return Err(Error::InsufficientDomain("tail window shorter than the largest lag".into()));
    }
    Ok(Some(WPathMoments {
        stream_id,
        mean: w_sum / w_count as f64,
        second: prod.iter().zip(&prod_count).map(|(s, &c)| s / c as f64).collect(),
    }))
}

/// Pools per-path moments. Standard errors follow from the per-path
/// linearization `M_p − 2 m m_p` of `E[ww] − E[w]²`.
pub fn combine_w_moments(
    config: &ExperimentConfig,
    lags: &[f64],
    moments: &[Option<WPathMoments>],
) -> Result<WCovTable> {
    let kept: Vec<&WPathMoments> = moments.iter().flatten().collect();
    let dropped = moments.len() - kept.len();
    if kept.len() < 2 || 2 * dropped > moments.len() {
        return Err(Error::Estimation(format!(
            "{dropped} of {} paths had nonpositive values in the tail window",
            moments.len()
        )));
    }
    let means: Vec<f64> = kept.iter().map(|m| m.mean).collect();
    let m = stats::mean(&means);
    let p = &config.params;
    let kernel: &CovarianceKernel = &p.noise.kernel;
    let entries = lags
        .iter()
        .enumerate()
        .map(|(j, &lag)| {
            let second: Vec<f64> = kept.iter().map(|k| k.second[j]).collect();
            let infl: Vec<f64> = kept.iter().map(|k| k.second[j] - 2.0 * m * k.mean).collect();
            let s = stats::mean_estimate(&second);
            WCovEntry {
                lag,
                covariance: s.value - m * m,
                std_error: stats::mean_estimate(&infl).std_error,
                second_moment: s.value,
                second_moment_se: s.std_error,
                mean_w: m,
                predicted_covariance: p.epsilon * p.epsilon / p.kappa * kernel.eval(lag),
            }
        })
        .collect();
    Ok(WCovTable {
        entries,
        paths_used: kept.len(),
        paths_dropped: dropped,
    })
}

/// Two passes: the ensemble fixes the expectation marker (first level),
/// then each path is rerun and `w` is sampled in that frame.
pub fn estimate_w_covariance(config: &ExperimentConfig, lags: &[f64], tail_window: (f64, f64)) -> Result<WCovTable> {
    check_w_config(config, tail_window)?;
    let summary = run_experiment(config)?;
    let track = &summary.tracks[0];
    let moments = summary
        .survivors
        .iter()
        .map(|&id| w_path_moments(config, id, track, lags, tail_window))
        .collect::<Result<Vec<_>>>()?;
    combine_w_moments(config, lags, &moments)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoiseModel;

    fn config(route: Route, eps: f64, paths: usize) -> ExperimentConfig {
        let noise = NoiseModel::new(CovarianceKernel::standard_wiener(), Interpretation::Ito, 9);
        let params = KppParams::new(1.0, eps, 3.0, noise);
        let grid = GridSpec::for_front(0.05, 40.0, 0.3).unwrap();
        let mut c = ExperimentConfig::new(params, grid, 10.0, paths, route);
        c.snapshot_stride = 0.5;
        c.decay_offsets = (2.0, 6.0);
        c
    }

    #[test]
    fn snapshot_schedule() {
        let c = config(Route::Normalized, 0.0, 1);
        let s = c.snapshot_steps();
        assert_eq!(s.first(), Some(&0));
        assert_eq!(s.last(), Some(&1000));
        assert_eq!(s.len(), 21);
    }

    #[test]
    fn validation() {
        let mut c = config(Route::Normalized, 0.5, 2);
        c.levels = vec![1.0];
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = config(Route::Spde, 0.5, 2);
        c.frame = FramePolicy::default();
        assert!(c.validate().is_err());
        let mut c = config(Route::Normalized, 0.5, 2);
        c.params.noise.kernel = CovarianceKernel::SquaredExponential { sigma2: 1.0, length: 1.0 };
        assert!(c.validate().is_err());
        assert!(config(Route::Normalized, 0.5, 0).validate().is_err());
    }

    #[test]
    fn single_deterministic_path_matches_direct_run() {
        let c = config(Route::Normalized, 0.0, 1);
        let summary = run_experiment(&c).unwrap();
        let ones = sde::simulate_v(0.0, 1.0, 0.01, 1000, &c.params.noise).unwrap();
        let fields = crate::solver::solve_normalized(&ones, &c.params, c.grid, 10.0, &c.snapshot_times()).unwrap();
        let direct: Vec<f64> = fields
            .iter()
            .map(|f| markers::a_marker(f, 0.5).unwrap().position)
            .collect();
        assert_eq!(summary.path_tracks[0][0].positions, direct);
        assert_eq!(summary.tracks[0].positions, direct);
    }

    #[test]
    fn runs_are_reproducible() {
        for route in [Route::Normalized, Route::Spde] {
            let c = config(route, 0.7, 3);
            assert_eq!(run_experiment(&c).unwrap(), run_experiment(&c).unwrap());
        }
    }

    #[test]
    fn absorb_enforces_stream_order() {
        let c = config(Route::Normalized, 0.3, 2);
        let mut agg = Aggregator::new(&c).unwrap();
        let r1 = run_path(&c, 1).unwrap();
        assert!(matches!(agg.absorb(r1), Err(Error::Misuse(_))));
        agg.absorb(run_path(&c, 0).unwrap()).unwrap();
        assert!(matches!(agg.finish(), Err(Error::Misuse(_))));
    }

    #[test]
    fn too_many_failures_abort() {
        let mut c = config(Route::Normalized, 0.3, 5);
        c.control = None;
        let mut agg = Aggregator::new(&c).unwrap();
        for id in 0..5 {
            let mut r = run_path(&c, id).unwrap();
            if id < 2 {
                r.outcome = Err(Error::Instability {
                    step: 3,
                    node: Some(1),
                    value: f64::INFINITY,
                });
            }
            agg.absorb(r).unwrap();
        }
        match agg.finish() {
            Err(Error::ExperimentFailed { survivors, failed, .. }) => {
                assert_eq!(survivors, 3);
                assert_eq!(failed, vec![0, 1]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn one_failure_in_five_is_tolerated() {
        let mut c = config(Route::Normalized, 0.3, 5);
        c.control = None;
        let mut agg = Aggregator::new(&c).unwrap();
        for id in 0..5 {
            let mut r = run_path(&c, id).unwrap();
            if id == 3 {
                r.outcome = Err(Error::Numeric("x".into()));
            }
            agg.absorb(r).unwrap();
        }
        let s = agg.finish().unwrap();
        assert_eq!(s.survivors, vec![0, 1, 2, 4]);
        assert_eq!(s.failed, vec![3]);
        assert!(!s.notes.is_empty());
    }

    #[test]
    fn deterministic_a_star_is_one() {
        let mut c = config(Route::Spde, 0.0, 1);
        c.params.drift_shift = core::f64::consts::SQRT_2;
        c.grid = GridSpec::for_front(0.05, 60.0, 0.7).unwrap();
        c.horizon = 20.0;
        let a = estimate_a_star(&c, 15.0).unwrap();
        assert!((a.value - 1.0).abs() < 1e-3, "{a:?}");
    }

    #[test]
    fn w_covariance_vanishes_without_noise() {
        let mut c = config(Route::Spde, 0.0, 2);
        c.params.drift_shift = core::f64::consts::SQRT_2;
        c.grid = GridSpec::for_front(0.05, 60.0, 0.5).unwrap();
        c.horizon = 20.0;
        let t = estimate_w_covariance(&c, &[0.0, 1.0], (3.0, 10.0)).unwrap();
        for e in &t.entries {
            // identical paths: zero spread, only the spatial variation of w
            assert!(e.std_error < 1e-12, "{e:?}");
        }
    }
}
