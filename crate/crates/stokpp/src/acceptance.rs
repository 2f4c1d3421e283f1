//! The acceptance suite: thirteen finite-horizon checks of the long-time
//! claims, each with a fixed tolerance.
//!
//! Every check takes the suite seed and a [`Runner`]; results are
//! independent of the number of workers.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use stokpp_core::ensemble::{EnsembleSummary, ExperimentConfig, Route};
use stokpp_core::grid::{Field, GridSpec};
use stokpp_core::markers::{self, FrontReport};
use stokpp_core::noise::{CovarianceKernel, FieldNoise, FieldSampler, Interpretation, NoiseModel, SamplerMethod};
use stokpp_core::solver::{self, FramePolicy, KppParams, NormalizedSolver, SpdeSolver};
use stokpp_core::{sde, stats, theory};

use crate::covcheck;
use crate::parallel::Runner;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Fast,
    Standard,
    Full,
}

#[derive(Debug, Clone, Copy)]
pub struct Criterion {
    pub id: u8,
    pub name: &'static str,
    pub tier: Tier,
    /// A miss is reported as a warning.
    pub warn_only: bool,
}

pub const CRITERIA: [Criterion; 13] = [
    Criterion { id: 1, name: "stationary logistic mean", tier: Tier::Fast, warn_only: false },
    Criterion { id: 2, name: "stationary Laplace functional", tier: Tier::Fast, warn_only: false },
    Criterion { id: 3, name: "Ito scalar speed, large N", tier: Tier::Standard, warn_only: false },
    Criterion { id: 4, name: "Ito scalar speed, small N", tier: Tier::Standard, warn_only: false },
    Criterion { id: 5, name: "degeneracy above sqrt 2", tier: Tier::Fast, warn_only: false },
    Criterion { id: 6, name: "Stratonovich epsilon-independence", tier: Tier::Standard, warn_only: false },
    Criterion { id: 7, name: "correlated-noise epsilon-independence", tier: Tier::Full, warn_only: false },
    Criterion { id: 8, name: "tail decay rates", tier: Tier::Standard, warn_only: false },
    Criterion { id: 9, name: "factorization u = v * u~", tier: Tier::Fast, warn_only: false },
    Criterion { id: 10, name: "monotonicity and positivity", tier: Tier::Fast, warn_only: false },
    Criterion { id: 11, name: "noise covariance", tier: Tier::Fast, warn_only: false },
    Criterion { id: 12, name: "w-covariance shape", tier: Tier::Full, warn_only: true },
    Criterion { id: 13, name: "theory identities", tier: Tier::Fast, warn_only: false },
];

pub fn criterion(id: u8) -> Option<Criterion> {
    CRITERIA.iter().copied().find(|c| c.id == id)
}

/// Ids of all criteria at or below `tier`.
pub fn ids_up_to(tier: Tier) -> Vec<u8> {
    CRITERIA.iter().filter(|c| c.tier <= tier).map(|c| c.id).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Warn,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub id: u8,
    pub name: &'static str,
    pub status: Status,
    pub detail: String,
    pub seconds: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.status != Status::Fail
    }

    pub fn line(&self) -> String {
        let tag = match self.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Warn => "WARN",
        };
        format!(
            "{tag} [{:>2}] {:<40} {} ({:.1} s)",
            self.id, self.name, self.detail, self.seconds
        )
    }
}

/// Outcome of one check body: pass flag and a measured-vs-target summary.
type Outcome = Result<(bool, String), String>;

pub fn run_check(id: u8, seed: u64, runner: &Runner) -> CheckResult {
    let c = criterion(id).unwrap_or_else(|| panic!("no acceptance criterion {id}"));
    let start = Instant::now();
    let outcome = match id {
        1 => c1_stationary_mean(seed, runner),
        2 => c2_laplace(seed, runner),
        3 => c3_ito_speed_large_n(seed, runner),
        4 => c4_ito_speed_small_n(seed, runner),
        5 => c5_degeneracy(seed, runner),
        6 => c6_stratonovich(seed, runner),
        7 => c7_correlated(seed, runner),
        8 => c8_decay(seed, runner),
        9 => c9_factorization(seed),
        10 => c10_monotone(seed, runner),
        11 => c11_noise_covariance(seed),
        12 => c12_w_covariance(seed, runner),
        13 => c13_theory(seed),
        _ => unreachable!(),
    };
    let seconds = start.elapsed().as_secs_f64();
    let (status, detail) = match outcome {
        Ok((true, d)) => (Status::Pass, d),
        Ok((false, d)) if c.warn_only => (Status::Warn, d),
        Ok((false, d)) => (Status::Fail, d),
        Err(e) if c.warn_only => (Status::Warn, format!("error: {e}")),
        Err(e) => (Status::Fail, format!("error: {e}")),
    };
    CheckResult {
        id,
        name: c.name,
        status,
        detail,
        seconds,
    }
}

/// Criteria that the faithful model does not reach, with the reason. They
/// still run and print FAIL; the test target tolerates only these.
pub const KNOWN_DEVIATIONS: &[(u8, &str)] = &[(
    7,
    "at eps = 1 the mean-field front settles near 1.2 instead of sqrt 2; \
     refining dt and dx does not move it (see README, Known deviations)",
)];

pub fn run_suite(ids: &[u8], seed: u64, runner: &Runner, mut on_result: impl FnMut(&CheckResult)) -> Vec<CheckResult> {
    ids.iter()
        .map(|&id| {
            let r = run_check(id, seed, runner);
            on_result(&r);
            r
        })
        .collect()
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn within(x: f64, target: f64, rel: f64) -> bool {
    (x / target - 1.0).abs() <= rel
}

fn wiener(interp: Interpretation, seed: u64) -> NoiseModel {
    NoiseModel::new(CovarianceKernel::standard_wiener(), interp, seed)
}

fn squared_exponential(seed: u64) -> NoiseModel {
    NoiseModel::new(
        CovarianceKernel::SquaredExponential { sigma2: 1.0, length: 2.0 },
        Interpretation::Ito,
        seed,
    )
}

const DX: f64 = 0.05;
const DT: f64 = 0.01;
const WINDOW: f64 = 100.0;

// ---------------------------------------------------------------- 1, 2

fn c1_stationary_mean(seed: u64, runner: &Runner) -> Outcome {
    const PATHS: usize = 16;
    const T: f64 = 500.0;
    let start = Instant::now();
    let model = wiener(Interpretation::Ito, seed);
    let steps = solver::steps_for(T, DT) as usize;
    let per_path = runner.map_streams(PATHS, |id| {
        let p = sde::simulate_v(1.0, 1.0, DT, steps, &model.with_stream(id))?;
        sde::estimate_time_average(&[p], sde::default_burn_in(T), |v| v).map(|e| e.value)
    });
    let per_path = per_path.into_iter().collect::<Result<Vec<_>, _>>().map_err(err)?;
    let est = stats::mean_estimate(&per_path);
    let secs = start.elapsed().as_secs_f64();
    let ok = (0.48..=0.52).contains(&est.value) && secs < 10.0;
    Ok((
        ok,
        format!("mean v = {:.4} +- {:.4} (target [0.48, 0.52]), {secs:.1} s < 10 s", est.value, est.std_error),
    ))
}

fn c2_laplace(seed: u64, runner: &Runner) -> Outcome {
    // e^{v} has infinite variance under the stationary law, so the
    // estimate needs a long total time; the budget is 30 s.
    const PATHS: usize = 32;
    const T: f64 = 10_000.0;
    const LAMBDAS: [f64; 3] = [-2.0, -1.0, 1.0];
    let start = Instant::now();
    let model = wiener(Interpretation::Ito, seed);
    let steps = solver::steps_for(T, DT) as usize;
    let burn = sde::default_burn_in(T);
    let per_path = runner.map_streams(PATHS, |id| {
        let p = sde::simulate_v(1.0, 1.0, DT, steps, &model.with_stream(id))?;
        LAMBDAS
            .iter()
            .map(|&l| sde::estimate_laplace(std::slice::from_ref(&p), l, burn).map(|e| e.value))
            .collect::<Result<Vec<_>, _>>()
    });
    let per_path = per_path.into_iter().collect::<Result<Vec<_>, _>>().map_err(err)?;
    let secs = start.elapsed().as_secs_f64();
    let mut ok = secs < 30.0;
    let mut parts = Vec::new();
    for (k, &l) in LAMBDAS.iter().enumerate() {
        let xs: Vec<f64> = per_path.iter().map(|p| p[k]).collect();
        let est = stats::mean_estimate(&xs);
        let exact = sde::stationary_laplace(l, 1.0).map_err(err)?;
        ok &= within(est.value, exact, 0.03);
        parts.push(format!("lambda {l}: {:.4} vs {:.4}", est.value, exact));
    }
    Ok((ok, format!("{}; {secs:.1} s < 30 s", parts.join(", "))))
}

// ---------------------------------------------------------------- fronts

fn front_grid(origin_fraction: f64) -> GridSpec {
    GridSpec::for_front(DX, WINDOW, origin_fraction).expect("grid")
}

fn pathwise_config(kappa: f64, eps: f64, n: f64, interp: Interpretation, seed: u64, paths: usize) -> ExperimentConfig {
    let params = KppParams::new(kappa, eps, n, wiener(interp, seed));
    let mut c = ExperimentConfig::new(params, front_grid(0.3), 120.0, paths, Route::Normalized);
    // fit over t in [60, 120]
    c.speed_window = (0.5, 1.0);
    c
}

fn speed_of(summary: &EnsembleSummary) -> Result<(f64, f64, &FrontReport), String> {
    let r = &summary.reports[0];
    let s = r.speed.ok_or_else(|| format!("no speed estimate: {:?}", summary.notes))?;
    Ok((s, r.speed_ci.unwrap_or(f64::NAN), r))
}

/// Control-variate speed of a pathwise run, with the raw mean for the record.
fn adjusted_speed_of(summary: &EnsembleSummary) -> Result<(f64, String), String> {
    let (raw, raw_ci, r) = speed_of(summary)?;
    let s = r.speed_adjusted.ok_or("no control-variate speed")?;
    let ci = r.speed_adjusted_ci.unwrap_or(f64::NAN);
    Ok((s, format!("speed {s:.4} +- {ci:.4} (raw mean {raw:.4} +- {raw_ci:.4})")))
}

fn c3_ito_speed_large_n(seed: u64, runner: &Runner) -> Outcome {
    let c = pathwise_config(1.0, 1.0, 3.0, Interpretation::Ito, seed, 16);
    let summary = runner.run_experiment(&c).map_err(err)?;
    let (s, text) = adjusted_speed_of(&summary)?;
    Ok((within(s, 1.0, 0.07), format!("{text} vs 1.0 (+-7%)")))
}

fn c4_ito_speed_small_n(seed: u64, runner: &Runner) -> Outcome {
    let c = pathwise_config(1.0, 1.0, 0.5, Interpretation::Ito, seed, 16);
    let summary = runner.run_experiment(&c).map_err(err)?;
    let (s, text) = adjusted_speed_of(&summary)?;
    Ok((within(s, 1.25, 0.07), format!("{text} vs 1.25 (+-7%)")))
}

fn c5_degeneracy(seed: u64, runner: &Runner) -> Outcome {
    let params = KppParams::new(1.0, 1.6, 3.0, wiener(Interpretation::Ito, seed));
    let mut c = ExperimentConfig::new(params, front_grid(0.3), 50.0, 16, Route::Spde);
    c.snapshot_stride = 5.0;
    let summary = runner.run_experiment(&c).map_err(err)?;
    let med = stats::median(&summary.final_max);
    Ok((med < 1e-3, format!("median sup u(50) = {med:.3e} (< 1e-3)")))
}

fn c6_stratonovich(seed: u64, runner: &Runner) -> Outcome {
    let target = std::f64::consts::SQRT_2;
    let mut speeds = Vec::new();
    for eps in [0.0, 1.0] {
        let c = pathwise_config(1.0, eps, 3.0, Interpretation::Stratonovich, seed, 16);
        let summary = runner.run_experiment(&c).map_err(err)?;
        // with eps = 0 the control is constant and the raw mean is exact
        let s = match eps {
            0.0 => speed_of(&summary)?.0,
            _ => adjusted_speed_of(&summary)?.0,
        };
        speeds.push(s);
    }
    let ok = within(speeds[1], speeds[0], 0.05) && speeds.iter().all(|&s| within(s, target, 0.07));
    Ok((
        ok,
        format!(
            "speed(eps=0) {:.4}, speed(eps=1) {:.4}; agree within 5%, each within 7% of {target:.4}",
            speeds[0], speeds[1]
        ),
    ))
}

/// Level for expectation markers under correlated noise; below the mean
/// plateau a* of every configuration in the suite.
const CORRELATED_LEVEL: f64 = 0.25;

fn correlated_config(eps: f64, n: f64, seed: u64, paths: usize) -> ExperimentConfig {
    let mut params = KppParams::new(1.0, eps, n, squared_exponential(seed));
    // co-moving frame at the predicted speed keeps the front inside a fixed
    // window shared by all paths
    params.drift_shift = theory::correlated_prediction(1.0, n).speed.unwrap();
    let mut c = ExperimentConfig::new(params, front_grid(0.4), 120.0, paths, Route::Spde);
    c.levels = vec![CORRELATED_LEVEL];
    c.speed_window = (0.5, 1.0);
    c
}

fn c7_correlated(seed: u64, runner: &Runner) -> Outcome {
    let target = std::f64::consts::SQRT_2;
    let mut ok = true;
    let mut parts = Vec::new();
    for eps in [0.5, 1.0] {
        let c = correlated_config(eps, 3.0, seed, 64);
        let summary = runner.run_experiment(&c).map_err(err)?;
        let (s, ci, _) = speed_of(&summary)?;
        ok &= within(s, target, 0.08);
        let a_star = summary.a_star.map(|a| format!("{:.3}", a.value)).unwrap_or("-".into());
        parts.push(format!("eps {eps}: speed {s:.4} +- {ci:.4} (a* {a_star})"));
    }
    Ok((ok, format!("{} vs {target:.4} (+-8%)", parts.join(", "))))
}

/// Tail window for the decay checks. At the default offsets a pulled front's
/// tail still carries the algebraic prefactor of the critical profile (the
/// ε = 0 front reads 1.34 there against √2); one more window length ahead it
/// is exponential to within a few percent in both regimes.
const DECAY_OFFSETS: (f64, f64) = (10.0, 20.0);

fn c8_decay(seed: u64, runner: &Runner) -> Outcome {
    let decays = |mut c: ExperimentConfig| -> Result<(f64, f64), String> {
        c.decay_offsets = DECAY_OFFSETS;
        let far = runner.run_experiment(&c).map_err(err)?;
        c.decay_offsets = markers::DEFAULT_DECAY_OFFSETS;
        let near = runner.run_experiment(&c).map_err(err)?;
        let get = |s: &EnsembleSummary| s.reports[0].decay.ok_or_else(|| "no decay estimate".to_string());
        Ok((get(&far)?, get(&near)?))
    };
    let (da, da_near) = decays(pathwise_config(1.0, 1.0, 3.0, Interpretation::Ito, seed, 16))?;
    let (db, db_near) = decays(correlated_config(0.5, 1.0, seed, 16))?;
    let ok = within(da, 1.0, 0.10) && within(db, 1.0, 0.10);
    let (lo, hi) = DECAY_OFFSETS;
    Ok((
        ok,
        format!(
            "offsets [{lo}, {hi}]: scalar Ito {da:.4}, correlated {db:.4}; both vs 1.0 (+-10%) \
             [default offsets: {da_near:.4}, {db_near:.4}]"
        ),
    ))
}

// ---------------------------------------------------------------- 9 - 11

fn c9_factorization(seed: u64) -> Outcome {
    let grid = GridSpec::for_front(DX, 40.0, 0.3).map_err(err)?;
    let run = |dt: f64| {
        let params = KppParams::new(1.0, 1.0, 3.0, wiener(Interpretation::Ito, seed)).with_dt(dt);
        solver::verify_factorization(&params, grid, 10.0)
    };
    let coarse = run(1e-3).map_err(err)?;
    let fine = run(5e-4).map_err(err)?;
    let ratio = coarse / fine;
    Ok((
        coarse <= 5e-2 && ratio >= 1.5,
        format!("max rel err {coarse:.3e} (<= 5e-2) at dt 1e-3, {fine:.3e} at dt 5e-4, ratio {ratio:.2} (>= 1.5)"),
    ))
}

struct RandomCase {
    kappa: f64,
    eps: f64,
    n: f64,
}

fn check_nonnegative(f: &Field) -> bool {
    f.values.iter().all(|&v| v >= 0.0)
}

fn check_monotone(f: &Field) -> bool {
    f.values.windows(2).all(|w| w[1] <= w[0] + 1e-10)
}

fn c10_monotone(seed: u64, runner: &Runner) -> Outcome {
    const CASES: usize = 50;
    const T: f64 = 10.0;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cases: Vec<RandomCase> = (0..CASES)
        .map(|_| RandomCase {
            kappa: rng.random_range(0.5..=2.0),
            eps: rng.random_range(0.0..=1.2),
            n: rng.random_range(0.5..=4.0),
        })
        .collect();
    let grid = GridSpec::for_front(DX, 40.0, 0.3).map_err(err)?;
    let steps = solver::steps_for(T, DT);
    let results = runner.map_streams(CASES, |k| -> Result<Option<String>, String> {
        let case = &cases[k as usize];
        let interp = if k % 2 == 0 { Interpretation::Ito } else { Interpretation::Stratonovich };
        let model = wiener(interp, seed).with_stream(k);
        let params = KppParams::new(case.kappa, case.eps, case.n, model.clone());
        let v = sde::simulate_v(case.eps, 1.0, DT, steps as usize, &model).map_err(err)?;
        let mut norm = NormalizedSolver::new(v, params.clone(), grid, FramePolicy::default()).map_err(err)?;
        let mut spde = SpdeSolver::new(params.clone(), grid, FramePolicy::default()).map_err(err)?;
        let mut corr_params = params;
        corr_params.noise = squared_exponential(seed).with_stream(k);
        let mut corr = SpdeSolver::new(corr_params, grid, FramePolicy::Fixed).map_err(err)?;
        for step in 1..=steps {
            norm.step().map_err(err)?;
            spde.step().map_err(err)?;
            corr.step().map_err(err)?;
            let bad = if !check_monotone(norm.field()) {
                Some("normalized field not monotone")
            } else if !check_nonnegative(norm.field()) || !check_nonnegative(spde.field()) || !check_nonnegative(corr.field()) {
                Some("negative value")
            } else {
                None
            };
            if let Some(b) = bad {
                return Ok(Some(format!(
                    "case {k} (kappa {:.3}, eps {:.3}, N {:.3}) step {step}: {b}",
                    case.kappa, case.eps, case.n
                )));
            }
        }
        Ok(None)
    });
    let mut failures = Vec::new();
    for r in results {
        if let Some(msg) = r? {
            failures.push(msg);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = failures.is_empty() && secs < 120.0;
    let detail = match failures.first() {
        None => format!("{CASES} configs x {steps} steps clean, {secs:.1} s < 120 s"),
        Some(f) => format!("{} failing configs, first: {f}", failures.len()),
    };
    Ok((ok, detail))
}

fn c11_noise_covariance(seed: u64) -> Outcome {
    const DRAWS: usize = 100_000;
    const ELL: f64 = 2.0;
    let kernel = CovarianceKernel::SquaredExponential { sigma2: 1.0, length: ELL };
    let grid = GridSpec::new(0.0, DX, 512).map_err(err)?;
    let lags = [0.0, ELL, 3.0 * ELL, 6.0 * ELL];
    let report = covcheck::check(&kernel, &grid, DT, DRAWS, seed, &lags).map_err(err)?;
    if report.method != SamplerMethod::Circulant {
        return Err("squared-exponential kernel did not use circulant embedding".into());
    }
    let mut ok = report.max_abs_z() <= 3.0;
    let parts: Vec<String> = report.rows.iter().map(|r| format!("lag {}: z = {:+.2}", r.lag, r.z)).collect();
    let mut z = vec![0.0; grid.n];
    // constant kernel: every node carries the same increment
    let flat = NoiseModel::new(CovarianceKernel::Constant { sigma2: 1.0 }, Interpretation::Ito, seed);
    let sampler = FieldSampler::new(&flat.kernel, &grid).map_err(err)?;
    let mut flat_noise = FieldNoise::with_sampler(sampler, flat.stream());
    let rank_one = (0..1000).all(|_| {
        flat_noise.fill(DT, &mut z);
        z.iter().all(|&x| x.to_bits() == z[0].to_bits())
    });
    ok &= rank_one;
    Ok((ok, format!("{} (|z| <= 3); constant kernel rank one: {rank_one}", parts.join(", "))))
}

// ---------------------------------------------------------------- 12, 13

fn c12_w_covariance(seed: u64, runner: &Runner) -> Outcome {
    const ELL: f64 = 2.0;
    let c = correlated_config(0.5, 3.0, seed, 32);
    let lags = [0.0, 6.0 * ELL];
    let (_, table) = runner.estimate_w_covariance(&c, &lags, (5.0, 40.0)).map_err(err)?;
    let e0 = &table.entries[0];
    let e6 = &table.entries[1];
    let ok0 = within(e0.covariance, e0.predicted_covariance, 0.25);
    let ok6 = e6.covariance.abs() <= 3.0 * e6.std_error;
    Ok((
        ok0 && ok6,
        format!(
            "lag 0: {:.4} +- {:.4} vs {:.4} (+-25%); lag {}: {:.4} +- {:.4} vs 0 (3 se); mean w {:.3}, {} paths",
            e0.covariance,
            e0.std_error,
            e0.predicted_covariance,
            6.0 * ELL,
            e6.covariance,
            e6.std_error,
            e0.mean_w,
            table.paths_used
        ),
    ))
}

fn c13_theory(seed: u64) -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (Some(a), Some(b)) => (a - b).abs() <= 1e-12 * a.abs().max(1.0),
        _ => false,
    };
    let mut failures = Vec::new();
    for _ in 0..100 {
        let kappa: f64 = rng.random_range(0.1..10.0);
        let n: f64 = rng.random_range(0.1..10.0);
        let ito = theory::ito_scalar_prediction(kappa, 0.0, n);
        let strat = theory::stratonovich_scalar_prediction(kappa, n);
        let corr = theory::correlated_prediction(kappa, n);
        if !(close(ito.speed, strat.speed)
            && close(ito.speed, corr.speed)
            && close(ito.decay, strat.decay)
            && close(ito.decay, corr.decay))
        {
            failures.push(format!("eps=0 reduction at kappa {kappa}, N {n}"));
        }
        // continuity at the branch point
        let eps: f64 = rng.random_range(0.0..1.4);
        let below = |p: &dyn Fn(f64) -> theory::TheoryPrediction, thr: f64| {
            let (a, b) = (p(thr), p(thr * (1.0 - 1e-14)));
            close(a.speed, b.speed) && (a.decay.unwrap() - b.decay.unwrap()).abs() <= 1e-12
        };
        let thr_ito = theory::ito_scalar_prediction(kappa, eps, 1.0).threshold;
        let thr = (2.0 / kappa).sqrt();
        if !below(&|n| theory::ito_scalar_prediction(kappa, eps, n), thr_ito)
            || !below(&|n| theory::stratonovich_scalar_prediction(kappa, n), thr)
            || !below(&|n| theory::correlated_prediction(kappa, n), thr)
        {
            failures.push(format!("discontinuity at kappa {kappa}, eps {eps}"));
        }
        // double root of the dispersion relation at the minimal speed
        let big_n = 2.0 * thr;
        let p = theory::correlated_prediction(kappa, big_n);
        match theory::dispersion_roots(kappa, p.speed.unwrap()) {
            Some((a, b)) if close(Some(a), p.decay) && close(Some(b), p.decay) => {}
            other => failures.push(format!("dispersion roots {other:?} vs decay {:?}", p.decay)),
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = failures.is_empty() && secs < 1.0;
    let detail = match failures.first() {
        None => format!("100 random (kappa, N): reductions, continuity, double root hold; {secs:.3} s < 1 s"),
        Some(f) => format!("{} failures, first: {f}", failures.len()),
    };
    Ok((ok, detail))
}
