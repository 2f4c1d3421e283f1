//! Time stepping for the stochastic KPP field and for the normalized random
//! PDE `ũ_t = (κ/2) ũ_xx + v(t) ũ (1 − ũ)`.
//!
//! One SPDE step is a Strang splitting:
//!
//! 1. implicit half-step of `(κ/2) u_xx + γ u_x`
//! 2. exact logistic flow over `Δt`
//! 3. multiplicative noise `u_i ← u_i exp(ε Δζ_i − ε² Γ(0) Δt / 2)` (Itô) or
//!    `u_i ← u_i exp(ε Δζ_i)` (Stratonovich)
//! 4. implicit half-step of `(κ/2) u_xx + γ u_x`
//!
//! Each substep maps nonnegative profiles to nonnegative profiles. The
//! normalized route drops step 3 and runs step 2 with rate `v(t_n)`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::{Field, GridSpec};
use crate::noise::{FieldNoise, NoiseModel};
use crate::sde::{self, SdePath};
use crate::tridiag::{self, ImplicitDiffusion};

pub const DEFAULT_DT: f64 = 0.01;
/// Largest accepted time step.
pub const MAX_DT: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KppParams {
    /// Diffusion coefficient κ (the operator is `κ/2 ∂²`).
    pub kappa: f64,
    /// Noise amplitude ε.
    pub epsilon: f64,
    /// Exponential decay rate N of the initial condition.
    pub decay_rate: f64,
    pub noise: NoiseModel,
    pub dt: f64,
    /// Co-moving frame speed γ: adds `γ u_x` and moves the window at γ.
    pub drift_shift: f64,
}

impl KppParams {
    pub fn new(kappa: f64, epsilon: f64, decay_rate: f64, noise: NoiseModel) -> Self {
        Self {
            kappa,
            epsilon,
            decay_rate,
            noise,
            dt: DEFAULT_DT,
            drift_shift: 0.0,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_drift_shift(mut self, drift_shift: f64) -> Self {
        self.drift_shift = drift_shift;
        self
    }

    /// Rejects invalid parameters and returns advisory warnings.
    pub fn validate(&self, grid: &GridSpec) -> Result<Vec<String>> {
        grid.validate()?;
        self.noise.kernel.validate()?;
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return Err(Error::Config(format!("kappa must be positive, got {}", self.kappa)));
        }
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::Config(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if !(self.decay_rate > 0.0) || !self.decay_rate.is_finite() {
            return Err(Error::Config(format!("N must be positive, got {}", self.decay_rate)));
        }
        if !(self.dt > 0.0 && self.dt <= MAX_DT) {
            return Err(Error::Config(format!("dt must lie in (0, {MAX_DT}], got {}", self.dt)));
        }
        if !self.drift_shift.is_finite() {
            return Err(Error::Config("drift_shift must be finite".into()));
        }
        let mut warnings = Vec::new();
        if self.dt > grid.dx {
            warnings.push(format!("dt = {} exceeds dx = {}; dt <= dx is recommended", self.dt, grid.dx));
        }
        if self.drift_shift.abs() * grid.dx > self.kappa {
            warnings.push(format!(
                "cell Peclet number {} > 2: co-moving diffusion step is not monotone",
                self.drift_shift.abs() * grid.dx / (0.5 * self.kappa)
            ));
        }
        Ok(warnings)
    }

    fn diffusion(&self, field: &Field) -> ImplicitDiffusion {
        let grid = &field.grid;
        let ratio = tridiag::tail_ratio(&field.values);
        ImplicitDiffusion::new(grid.n, grid.dx, 0.5 * self.kappa, self.drift_shift, 0.5 * self.dt, ratio)
    }
}

/// Moving-window policy.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum FramePolicy {
    Fixed,
    /// Shift once the front passes `trigger` of the window, back to `restore`.
    Track { trigger: f64, restore: f64 },
}

impl Default for FramePolicy {
    fn default() -> Self {
        Self::Track {
            trigger: 0.6,
            restore: 0.4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub field: Field,
    pub step: u64,
    pub params: KppParams,
    /// Current `v` on the normalized route; 1 on the SPDE route.
    pub v_current: f64,
}

impl SolverState {
    pub fn time(&self) -> f64 {
        self.field.time
    }
}

/// How the tracker locates the front.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FrontLocator {
    /// First node below ½ of a monotone profile.
    Monotone,
    /// Last node at or above half of the field maximum.
    HalfMax,
}

#[derive(Debug, Clone)]
struct Frame {
    policy: FramePolicy,
    locator: FrontLocator,
    base_offset: f64,
    shifted_cells: i64,
    check_every: u64,
    /// Decay rate for nodes entering on the right; matches the boundary row.
    fill_rate: f64,
}

impl Frame {
    fn new(policy: FramePolicy, locator: FrontLocator, field: &Field, dt: f64) -> Self {
        let grid = &field.grid;
        let ratio = tridiag::tail_ratio(&field.values);
        Self {
            policy,
            locator,
            base_offset: grid.frame_offset,
            shifted_cells: 0,
            check_every: libm::round(0.1 / dt).max(1.0) as u64,
            fill_rate: if ratio > 0.0 { -libm::log(ratio) / grid.dx } else { f64::MAX },
        }
    }

    fn offset(&self, dx: f64, drift: f64, time: f64) -> f64 {
        self.base_offset + self.shifted_cells as f64 * dx + drift * time
    }

    fn front_index(&self, values: &[f64]) -> usize {
        match self.locator {
            FrontLocator::Monotone => values.partition_point(|&v| v >= 0.5),
            FrontLocator::HalfMax => {
                let max = values.iter().copied().fold(0.0, f64::max);
                values.iter().rposition(|&v| v >= 0.5 * max).unwrap_or(0)
            }
        }
    }

    /// Shifts `field` if the front has passed the trigger point.
    fn maybe_shift(&mut self, field: &mut Field, step: u64) -> Result<()> {
        let FramePolicy::Track { trigger, restore } = self.policy else {
            return Ok(());
        };
        if step % self.check_every != 0 {
            return Ok(());
        }
        let last = (field.grid.n - 1) as f64;
        let pos = self.front_index(&field.values);
        if (pos as f64) <= trigger * last {
            return Ok(());
        }
        let cells = pos as isize - libm::round(restore * last) as isize;
        if cells <= 0 {
            return Ok(());
        }
        let left = field.values[0];
        *field = field.shift_frame(cells, left, Some(self.fill_rate))?;
        self.shifted_cells += cells as i64;
        Ok(())
    }
}

fn check_finite(values: &[f64], step: u64) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::Instability {
            step,
            node: Some(i),
            value: values[i],
        }),
        None => Ok(()),
    }
}

/// Solver for the stochastic field `u`.
#[derive(Debug, Clone)]
pub struct SpdeSolver {
    state: SolverState,
    noise: Option<FieldNoise>,
    diffusion: ImplicitDiffusion,
    increments: Vec<f64>,
    growth: f64,
    correction: f64,
    frame: Frame,
}

impl SpdeSolver {
    /// Starts from the front initial condition.
    pub fn new(params: KppParams, grid: GridSpec, frame: FramePolicy) -> Result<Self> {
        let field = Field::initial_condition(grid, params.decay_rate)?;
        Self::from_field(params, field, frame)
    }

    pub fn from_field(params: KppParams, field: Field, frame: FramePolicy) -> Result<Self> {
        params.validate(&field.grid)?;
        if field.values.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::Misuse("initial field must be nonnegative".into()));
        }
        let grid = field.grid;
        let noise = if params.epsilon > 0.0 {
            Some(FieldNoise::new(&params.noise, &grid)?)
        } else {
            None
        };
        let correction = sde::ito_correction(
            params.noise.interpretation,
            params.epsilon,
            params.noise.kernel.variance(),
            params.dt,
        );
        Ok(Self {
            diffusion: params.diffusion(&field),
            increments: vec![0.0; grid.n],
            growth: libm::exp(params.dt),
            correction,
            frame: Frame::new(frame, FrontLocator::HalfMax, &field, params.dt),
            noise,
            state: SolverState {
                field,
                step: 0,
                params,
                v_current: 1.0,
            },
        })
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    pub fn field(&self) -> &Field {
        &self.state.field
    }

    pub fn into_state(self) -> SolverState {
        self.state
    }

    /// One Strang-split step.
    pub fn step(&mut self) -> Result<()> {
        let params = &self.state.params;
        let u = &mut self.state.field.values;
        self.diffusion.apply(u);
        for x in u.iter_mut() {
            *x = sde::logistic_flow(*x, self.growth);
        }
        if let Some(noise) = self.noise.as_mut() {
            let eps = params.epsilon;
            if let Some(shared) = noise.next_shared(params.dt) {
                let factor = sde::noise_factor(eps, shared, self.correction);
                for x in u.iter_mut() {
                    *x *= factor;
                }
            } else {
                noise.fill(params.dt, &mut self.increments);
                for (x, dz) in u.iter_mut().zip(&self.increments) {
                    *x *= sde::noise_factor(eps, *dz, self.correction);
                }
            }
        }
        self.diffusion.apply(u);

        self.state.step += 1;
        let step = self.state.step;
        check_finite(&self.state.field.values, step)?;
        self.finish_step()
    }

    fn finish_step(&mut self) -> Result<()> {
        let step = self.state.step;
        let dt = self.state.params.dt;
        let field = &mut self.state.field;
        field.time = step as f64 * dt;
        self.frame.maybe_shift(field, step)?;
        field.grid.frame_offset = self.frame.offset(field.grid.dx, self.state.params.drift_shift, field.time);
        Ok(())
    }

    /// Steps until `state.step == target`.
    pub fn advance_to(&mut self, target: u64) -> Result<()> {
        while self.state.step < target {
            self.step()?;
        }
        Ok(())
    }
}

/// Solver for `ũ` driven by a given `v` path.
#[derive(Debug, Clone)]
pub struct NormalizedSolver {
    state: SolverState,
    v_path: SdePath,
    diffusion: ImplicitDiffusion,
    frame: Frame,
}

impl NormalizedSolver {
    pub fn new(v_path: SdePath, params: KppParams, grid: GridSpec, frame: FramePolicy) -> Result<Self> {
        let field = Field::initial_condition(grid, params.decay_rate)?;
        Self::from_field(v_path, params, field, frame)
    }

    pub fn from_field(v_path: SdePath, params: KppParams, field: Field, frame: FramePolicy) -> Result<Self> {
        params.validate(&field.grid)?;
        if (v_path.dt - params.dt).abs() > 1e-12 * params.dt {
            return Err(Error::Misuse(format!(
                "v path step {} does not match solver step {}",
                v_path.dt, params.dt
            )));
        }
        Ok(Self {
            diffusion: params.diffusion(&field),
            frame: Frame::new(frame, FrontLocator::Monotone, &field, params.dt),
            state: SolverState {
                v_current: v_path.values[0],
                field,
                step: 0,
                params,
            },
            v_path,
        })
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    pub fn field(&self) -> &Field {
        &self.state.field
    }

    pub fn v_path(&self) -> &SdePath {
        &self.v_path
    }

    pub fn step(&mut self) -> Result<()> {
        let n = self.state.step as usize;
        if n >= self.v_path.steps() {
            return Err(Error::Misuse(format!(
                "v path ends at step {} (t = {})",
                self.v_path.steps(),
                self.v_path.duration()
            )));
        }
        let growth = libm::exp(self.v_path.values[n] * self.state.params.dt);
        let u = &mut self.state.field.values;
        self.diffusion.apply(u);
        for x in u.iter_mut() {
            *x = sde::logistic_flow(*x, growth);
        }
        self.diffusion.apply(u);

        self.state.step += 1;
        let step = self.state.step;
        self.state.v_current = self.v_path.values[step as usize];
        check_finite(&self.state.field.values, step)?;
        let dt = self.state.params.dt;
        let field = &mut self.state.field;
        field.time = step as f64 * dt;
        self.frame.maybe_shift(field, step)?;
        field.grid.frame_offset = self.frame.offset(field.grid.dx, self.state.params.drift_shift, field.time);
        Ok(())
    }

    pub fn advance_to(&mut self, target: u64) -> Result<()> {
        while self.state.step < target {
            self.step()?;
        }
        Ok(())
    }
}

/// Number of whole steps covering `horizon`.
pub fn steps_for(horizon: f64, dt: f64) -> u64 {
    libm::round(horizon / dt) as u64
}

/// Solves the normalized equation on `[0, horizon]` and returns `ũ` at the
/// requested times (rounded to the nearest step), tracking the front with
/// the default moving window.
pub fn solve_normalized(
    v_path: &SdePath,
    params: &KppParams,
    grid: GridSpec,
    horizon: f64,
    snapshot_times: &[f64],
) -> Result<Vec<Field>> {
    solve_normalized_with(v_path, params, grid, horizon, snapshot_times, FramePolicy::default())
}

pub fn solve_normalized_with(
    v_path: &SdePath,
    params: &KppParams,
    grid: GridSpec,
    horizon: f64,
    snapshot_times: &[f64],
    frame: FramePolicy,
) -> Result<Vec<Field>> {
    let total = steps_for(horizon, params.dt);
    if (v_path.steps() as u64) < total {
        return Err(Error::Misuse(format!(
            "v path covers t <= {} but the horizon is {horizon}",
            v_path.duration()
        )));
    }
    if snapshot_times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Misuse("snapshot times must be sorted".into()));
    }
    let mut solver = NormalizedSolver::new(v_path.clone(), params.clone(), grid, frame)?;
    let mut out = Vec::with_capacity(snapshot_times.len());
    for &t in snapshot_times {
        let target = steps_for(t, params.dt);
        if target > total {
            return Err(Error::Misuse(format!("snapshot time {t} is past the horizon {horizon}")));
        }
        solver.advance_to(target)?;
        out.push(solver.field().clone());
    }
    Ok(out)
}

/// Pathwise check of `u = v ũ`: runs the scalar-noise SPDE, the flat SDE
/// and the normalized equation on one Wiener path and returns
/// `max |u − v ũ| / (v ũ + 1e-12)` over all steps and nodes.
pub fn verify_factorization(params: &KppParams, grid: GridSpec, horizon: f64) -> Result<f64> {
    factorization_error(params, &params.noise, grid, horizon)
}

/// As [`verify_factorization`] with an explicit noise model for the flat
/// SDE, which must name the same stream as the SPDE noise.
pub fn factorization_error(
    params: &KppParams,
    sde_noise: &NoiseModel,
    grid: GridSpec,
    horizon: f64,
) -> Result<f64> {
    if !params.noise.kernel.is_constant() {
        return Err(Error::Misuse("factorization holds only for scalar noise".into()));
    }
    if sde_noise.seed != params.noise.seed
        || sde_noise.stream_id != params.noise.stream_id
        || sde_noise.kernel != params.noise.kernel
        || sde_noise.interpretation != params.noise.interpretation
    {
        return Err(Error::Misuse(
            "SPDE and SDE must share one Wiener path (same seed, stream and kernel)".into(),
        ));
    }
    let steps = steps_for(horizon, params.dt);
    let v_path = sde::simulate_v(params.epsilon, 1.0, params.dt, steps as usize, sde_noise)?;
    let mut spde = SpdeSolver::new(params.clone(), grid, FramePolicy::Fixed)?;
    let mut normalized = NormalizedSolver::new(v_path.clone(), params.clone(), grid, FramePolicy::Fixed)?;
    let mut worst: f64 = 0.0;
    for step in 1..=steps {
        spde.step()?;
        normalized.step()?;
        let v = v_path.values[step as usize];
        for (u, w) in spde.field().values.iter().zip(&normalized.field().values) {
            let target = v * w;
            worst = worst.max((u - target).abs() / (target + 1e-12));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markers;
    use crate::noise::{CovarianceKernel, Interpretation};

    fn wiener(seed: u64) -> NoiseModel {
        NoiseModel::new(CovarianceKernel::standard_wiener(), Interpretation::Ito, seed)
    }

    fn small_grid() -> GridSpec {
        GridSpec::for_front(0.05, 60.0, 0.3).unwrap()
    }

    #[test]
    fn equilibrium_is_preserved_without_noise() {
        let params = KppParams::new(1.0, 0.0, 3.0, wiener(1));
        let field = Field::constant(small_grid(), 1.0);
        let mut s = SpdeSolver::from_field(params, field, FramePolicy::Fixed).unwrap();
        s.advance_to(500).unwrap();
        assert!(s.field().values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn constant_field_reproduces_scalar_sde_bitwise() {
        for interp in [Interpretation::Ito, Interpretation::Stratonovich] {
            let model = NoiseModel::new(CovarianceKernel::standard_wiener(), interp, 17).with_stream(5);
            let params = KppParams::new(1.0, 0.9, 3.0, model.clone());
            let field = Field::constant(small_grid(), 1.0);
            let mut s = SpdeSolver::from_field(params, field, FramePolicy::Fixed).unwrap();
            let v = sde::simulate_v(0.9, 1.0, 0.01, 400, &model).unwrap();
            for step in 1..=400 {
                s.step().unwrap();
                let expect = v.values[step].to_bits();
                assert!(s.field().values.iter().all(|x| x.to_bits() == expect), "step {step}");
            }
        }
    }

    #[test]
    fn one_noisy_step_on_constant_field_matches_scalar_update() {
        let model = wiener(3);
        let c = 0.37;
        let params = KppParams::new(1.0, 0.8, 3.0, model.clone());
        let mut s = SpdeSolver::from_field(params, Field::constant(small_grid(), c), FramePolicy::Fixed).unwrap();
        s.step().unwrap();
        let dw = crate::noise::scalar_increments(&model, 0.01, 1).unwrap()[0];
        let expect = sde::logistic_flow(c, libm::exp(0.01)) * libm::exp(0.8 * dw - 0.5 * 0.64 * 0.01);
        assert!(s.field().values.iter().all(|&v| (v - expect).abs() < 1e-15));
    }

    #[test]
    fn deterministic_limit_matches_normalized_route_bitwise() {
        let params = KppParams::new(1.0, 0.0, 3.0, wiener(1));
        let grid = small_grid();
        let ones = SdePath {
            dt: 0.01,
            values: vec![1.0; 1001],
            interpretation: Interpretation::Ito,
            epsilon: 0.0,
        };
        let mut a = SpdeSolver::new(params.clone(), grid, FramePolicy::Fixed).unwrap();
        let mut b = NormalizedSolver::new(ones, params, grid, FramePolicy::Fixed).unwrap();
        for _ in 0..1000 {
            a.step().unwrap();
            b.step().unwrap();
            assert_eq!(a.field().values, b.field().values);
        }
    }

    #[test]
    fn normalized_with_zero_rate_is_pure_heat_flow() {
        let params = KppParams::new(1.0, 0.0, 2.0, wiener(1));
        let grid = GridSpec::for_front(0.05, 80.0, 0.5).unwrap();
        let zeros = SdePath {
            dt: 0.01,
            values: vec![0.0; 2001],
            interpretation: Interpretation::Ito,
            epsilon: 0.0,
        };
        let fields = solve_normalized_with(&zeros, &params, grid, 20.0, &[0.0, 10.0, 20.0], FramePolicy::Fixed)
            .unwrap();
        // heat flow conserves ∫(1 − ũ) away from the boundaries up to the
        // flux through the right boundary; here it only spreads the profile
        let deficit = |f: &Field| f.values.iter().map(|v| 1.0 - v).sum::<f64>() * f.grid.dx;
        let d0 = deficit(&fields[0]);
        for f in &fields[1..] {
            assert!(f.values.windows(2).all(|w| w[1] <= w[0] + 1e-12));
            assert!(f.max() <= 1.0 + 1e-12);
            // no reaction: the profile does not advance, it only flattens
            assert!((markers::a_marker(f, 0.5).unwrap().position).abs() < 0.5);
            assert!(deficit(f) <= d0 + 1e-9);
        }
    }

    #[test]
    fn factorization_is_exact_without_noise() {
        let params = KppParams::new(1.0, 0.0, 3.0, wiener(2));
        let err = verify_factorization(&params, small_grid(), 5.0).unwrap();
        assert!(err <= 1e-10, "{err}");
    }

    #[test]
    fn factorization_rejects_mismatched_streams_and_correlated_noise() {
        let params = KppParams::new(1.0, 1.0, 3.0, wiener(2));
        let other = wiener(3);
        assert!(matches!(
            factorization_error(&params, &other, small_grid(), 1.0),
            Err(Error::Misuse(_))
        ));
        let se = NoiseModel::new(
            CovarianceKernel::SquaredExponential { sigma2: 1.0, length: 2.0 },
            Interpretation::Ito,
            2,
        );
        let p2 = KppParams::new(1.0, 1.0, 3.0, se);
        assert!(matches!(verify_factorization(&p2, small_grid(), 1.0), Err(Error::Misuse(_))));
    }

    #[test]
    fn short_v_path_is_misuse() {
        let params = KppParams::new(1.0, 0.0, 3.0, wiener(1));
        let v = sde::simulate_v(0.0, 1.0, 0.01, 100, &wiener(1)).unwrap();
        assert!(matches!(
            solve_normalized(&v, &params, small_grid(), 2.0, &[2.0]),
            Err(Error::Misuse(_))
        ));
        let v = sde::simulate_v(0.0, 1.0, 0.02, 100, &wiener(1)).unwrap();
        assert!(matches!(
            solve_normalized(&v, &params, small_grid(), 1.0, &[1.0]),
            Err(Error::Misuse(_))
        ));
    }

    #[test]
    fn invalid_params_rejected() {
        let grid = small_grid();
        let mut p = KppParams::new(1.0, 0.5, 3.0, wiener(1));
        p.dt = 0.2;
        assert!(matches!(p.validate(&grid), Err(Error::Config(_))));
        let p = KppParams::new(-1.0, 0.5, 3.0, wiener(1));
        assert!(p.validate(&grid).is_err());
        let p = KppParams::new(1.0, 0.5, 3.0, wiener(1)).with_dt(0.08);
        assert_eq!(p.validate(&grid).unwrap().len(), 1);
    }

    #[test]
    fn frame_tracking_keeps_front_inside_window() {
        let params = KppParams::new(1.0, 0.0, 3.0, wiener(1));
        let grid = GridSpec::for_front(0.05, 40.0, 0.3).unwrap();
        let mut s = SpdeSolver::new(params, grid, FramePolicy::default()).unwrap();
        s.advance_to(3000).unwrap();
        let f = s.field();
        assert!(f.grid.frame_offset > 0.0);
        let g = markers::a_marker(f, 0.5).unwrap().position;
        let frac = (g - f.grid.left()) / f.grid.length();
        assert!((0.35..=0.62).contains(&frac), "front at {frac}");
        // front has moved √2·30 less a logarithmic lag, in physical coordinates
        let ahead = core::f64::consts::SQRT_2 * 30.0;
        assert!(g > ahead - 6.0 && g < ahead, "{g}");
    }

    #[test]
    fn comoving_frame_keeps_front_nearly_still() {
        let gamma = core::f64::consts::SQRT_2;
        let params = KppParams::new(1.0, 0.0, 3.0, wiener(1)).with_drift_shift(gamma);
        let grid = GridSpec::for_front(0.05, 60.0, 0.4).unwrap();
        let mut s = SpdeSolver::new(params, grid, FramePolicy::Fixed).unwrap();
        s.advance_to(2000).unwrap();
        let f = s.field();
        assert!((f.grid.frame_offset - 20.0 * gamma).abs() < 1e-9);
        let g = markers::a_marker(f, 0.5).unwrap().position;
        // physical marker moved at about √2 minus the logarithmic lag
        assert!(g > 20.0 * gamma - 6.0 && g < 20.0 * gamma + 1.0, "{g}");
    }
}
