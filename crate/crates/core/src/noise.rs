//! Driving noise: scalar Wiener increments and spatially correlated Gaussian
//! field increments with `Cov[Δζ(x_i), Δζ(x_j)] = Δt Γ(x_i − x_j)`.
//!
//! Every stream is a ChaCha8 generator keyed by `(seed, stream_id)`, so
//! ensemble members are independent and can run in any order.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fft::Fft;
use crate::grid::GridSpec;

/// Kernel value below which the circulant ring is considered wide enough.
pub const EMBEDDING_CUTOFF: f64 = 1e-12;
/// Largest tolerated fraction of negative spectral mass in the embedding.
pub const NEGATIVE_MASS_TOLERANCE: f64 = 1e-6;
/// Largest grid handled by the dense fallback.
pub const DENSE_FALLBACK_MAX_NODES: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Interpretation {
    Ito,
    Stratonovich,
}

/// Sampled kernel: `values[k] = Γ(lags[k])` on strictly increasing lags
/// starting at 0. Evaluation interpolates linearly in `|x|` and returns 0
/// beyond the last lag.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TabulatedKernel {
    lags: Vec<f64>,
    values: Vec<f64>,
}

impl TabulatedKernel {
    pub fn new(lags: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if lags.len() != values.len() || lags.len() < 2 {
            return Err(Error::Config("kernel table needs at least two (lag, value) rows".into()));
        }
        if lags[0] != 0.0 {
            return Err(Error::Config(format!("kernel table must start at lag 0, got {}", lags[0])));
        }
        if lags.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("kernel table lags must be strictly increasing".into()));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Config(format!("kernel table value {k} is not finite")));
        }
        if values.iter().any(|v| v.abs() > values[0]) {
            return Err(Error::Config("kernel table exceeds its lag-0 value".into()));
        }
        Ok(Self { lags, values })
    }

    pub fn lags(&self) -> &[f64] {
        &self.lags
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn eval(&self, x: f64) -> f64 {
        let x = x.abs();
        let last = self.lags.len() - 1;
        if x > self.lags[last] {
            return 0.0;
        }
        let k = self.lags.partition_point(|&l| l <= x).saturating_sub(1).min(last - 1);
        let (l0, l1) = (self.lags[k], self.lags[k + 1]);
        let w = (x - l0) / (l1 - l0);
        self.values[k] * (1.0 - w) + self.values[k + 1] * w
    }

    /// Trapezoid integral of |Γ| over the whole line.
    pub fn abs_integral(&self) -> f64 {
        let mut total = 0.0;
        for k in 0..self.lags.len() - 1 {
            let h = self.lags[k + 1] - self.lags[k];
            total += 0.5 * h * (self.values[k].abs() + self.values[k + 1].abs());
        }
        2.0 * total
    }
}

/// Spatial covariance `Γ` of the driving field.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum CovarianceKernel {
    /// `Γ ≡ σ²`: one Wiener process shared by every point.
    Constant { sigma2: f64 },
    /// `Γ(x) = σ² exp(−x² / 2ℓ²)`.
    SquaredExponential { sigma2: f64, length: f64 },
    Tabulated(TabulatedKernel),
}

impl CovarianceKernel {
    pub fn standard_wiener() -> Self {
        Self::Constant { sigma2: 1.0 }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::Constant { sigma2 } => *sigma2,
            Self::SquaredExponential { sigma2, length } => {
                sigma2 * libm::exp(-(x * x) / (2.0 * length * length))
            }
            Self::Tabulated(t) => t.eval(x),
        }
    }

    /// `Γ(0)`.
    pub fn variance(&self) -> f64 {
        self.eval(0.0)
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Self::Constant { .. })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Constant { sigma2 } if !(*sigma2 >= 0.0) || !sigma2.is_finite() => {
                Err(Error::Config(format!("kernel variance must be >= 0, got {sigma2}")))
            }
            Self::SquaredExponential { sigma2, length }
                if !(*sigma2 >= 0.0) || !sigma2.is_finite() || !(*length > 0.0) || !length.is_finite() =>
            {
                Err(Error::Config(format!(
                    "squared-exponential kernel needs sigma2 >= 0 and length > 0, got {sigma2}, {length}"
                )))
            }
            _ => Ok(()),
        }
    }
}

/// `Γ(x)` for any kernel.
pub fn kernel_eval(kernel: &CovarianceKernel, x: f64) -> f64 {
    kernel.eval(x)
}

/// Noise descriptor. Cheap to clone and send to workers; the generator
/// itself is created per worker by [`NoiseModel::stream`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NoiseModel {
    pub kernel: CovarianceKernel,
    pub interpretation: Interpretation,
    pub seed: u64,
    pub stream_id: u64,
}

impl NoiseModel {
    pub fn new(kernel: CovarianceKernel, interpretation: Interpretation, seed: u64) -> Self {
        Self {
            kernel,
            interpretation,
            seed,
            stream_id: 0,
        }
    }

    pub fn with_stream(&self, stream_id: u64) -> Self {
        Self {
            stream_id,
            ..self.clone()
        }
    }

    pub fn stream(&self) -> NoiseStream {
        NoiseStream::new(self.seed, self.stream_id)
    }
}

/// Standard normal source for one `(seed, stream_id)` pair.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self { rng }
    }

    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// One increment `√(σ² Δt) Z`.
    #[inline]
    pub fn scalar_increment(&mut self, sigma2: f64, dt: f64) -> f64 {
        libm::sqrt(sigma2 * dt) * self.standard_normal()
    }
}

/// `steps` independent `Normal(0, σ² Δt)` increments of the scalar Wiener
/// process described by `model` (constant kernels only).
pub fn scalar_increments(model: &NoiseModel, dt: f64, steps: usize) -> Result<Vec<f64>> {
    let CovarianceKernel::Constant { sigma2 } = model.kernel else {
        return Err(Error::Misuse("scalar increments need a constant kernel".into()));
    };
    if !(dt > 0.0) {
        return Err(Error::Misuse(format!("dt must be positive, got {dt}")));
    }
    let mut stream = model.stream();
    Ok((0..steps).map(|_| stream.scalar_increment(sigma2, dt)).collect())
}

/// How a [`FieldSampler`] factors the covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SamplerMethod {
    Constant,
    Circulant,
    Dense,
}

/// Precomputed factorization of `[Γ((i−j)dx)]_{ij}` on one grid. Samples are
/// standard (unit `Δt`); callers scale by `√Δt`.
#[derive(Clone)]
pub enum FieldSampler {
    Constant {
        n: usize,
        sigma2: f64,
    },
    Circulant {
        n: usize,
        fft_len: usize,
        /// `√(λ_k / m)` for the clamped circulant eigenvalues.
        scale: Vec<f64>,
        negative_fraction: f64,
    },
    Dense {
        n: usize,
        rank: usize,
        /// Row-major `n × rank` factor with `L Lᵀ ≈ C`.
        factor: Vec<f64>,
    },
}

impl core::fmt::Debug for FieldSampler {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Self::Constant { n, sigma2 } => write!(f, "Constant {{ n: {n}, sigma2: {sigma2} }}"),
            Self::Circulant {
                n,
                fft_len,
                negative_fraction,
                ..
            } => write!(
                f,
                "Circulant {{ n: {n}, ring: {fft_len}, negative_fraction: {negative_fraction:e} }}"
            ),
            Self::Dense { n, rank, .. } => write!(f, "Dense {{ n: {n}, rank: {rank} }}"),
        }
    }
}

impl FieldSampler {
    /// Circulant embedding, falling back to a dense factorization when the
    /// embedding spectrum is too negative and the grid is small enough.
    pub fn new(kernel: &CovarianceKernel, grid: &GridSpec) -> Result<Self> {
        kernel.validate()?;
        grid.validate()?;
        if let CovarianceKernel::Constant { sigma2 } = kernel {
            return Ok(Self::Constant {
                n: grid.n,
                sigma2: *sigma2,
            });
        }
        match Self::circulant(kernel, grid) {
            Ok(s) => Ok(s),
            Err(Error::KernelNotRepresentable { negative_fraction }) => {
                if grid.n <= DENSE_FALLBACK_MAX_NODES {
                    Self::dense(kernel, grid)
                } else {
                    Err(Error::KernelNotRepresentable { negative_fraction })
                }
            }
            Err(e) => Err(e),
        }
    }

    /// Embeds the covariance in a circulant matrix on a ring of
    /// power-of-two length `m ≥ 2(n−1)`, doubled until `Γ(m dx / 2)` drops
    /// below [`EMBEDDING_CUTOFF`] or `m` reaches eight times the minimal ring.
    pub fn circulant(kernel: &CovarianceKernel, grid: &GridSpec) -> Result<Self> {
        let n = grid.n;
        let minimal = (2 * (n - 1)).next_power_of_two();
        let mut m = minimal;
        while kernel.eval(0.5 * m as f64 * grid.dx).abs() > EMBEDDING_CUTOFF && m < 8 * minimal {
            m *= 2;
        }
        let mut re: Vec<f64> = (0..m)
            .map(|k| kernel.eval(k.min(m - k) as f64 * grid.dx))
            .collect();
        let mut im = vec![0.0; m];
        let fft = Fft::new(m);
        fft.forward(&mut re, &mut im);
        let total: f64 = re.iter().map(|l| l.abs()).sum();
        let negative: f64 = re.iter().filter(|&&l| l < 0.0).map(|l| -l).sum();
        let negative_fraction = if total > 0.0 { negative / total } else { 0.0 };
        if negative_fraction > NEGATIVE_MASS_TOLERANCE {
            return Err(Error::KernelNotRepresentable { negative_fraction });
        }
        let scale = re
            .iter()
            .map(|&l| libm::sqrt(l.max(0.0) / m as f64))
            .collect();
        Ok(Self::Circulant {
            n,
            fft_len: m,
            scale,
            negative_fraction,
        })
    }

    /// Pivoted Cholesky factorization of the dense covariance, truncated
    /// once the largest remaining pivot falls below `1e-12 Γ(0)`.
    pub fn dense(kernel: &CovarianceKernel, grid: &GridSpec) -> Result<Self> {
        let n = grid.n;
        let mut cov: Vec<f64> = (0..n * n)
            .map(|k| kernel.eval((k / n) as f64 * grid.dx - (k % n) as f64 * grid.dx))
            .collect();
        let tol = 1e-12 * kernel.variance().abs().max(f64::MIN_POSITIVE);
        let mut perm: Vec<usize> = (0..n).collect();
        // columns of the factor in pivot order; col[k][i] indexes original rows
        let mut columns: Vec<Vec<f64>> = Vec::new();
        let mut remaining: Vec<f64> = (0..n).map(|i| cov[i * n + i]).collect();
        for k in 0..n {
            let (p, &best) = perm[k..]
                .iter()
                .enumerate()
                .map(|(j, &row)| (j, &remaining[row]))
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap();
            if best <= tol {
                break;
            }
            perm.swap(k, k + p);
            let piv = perm[k];
            let root = libm::sqrt(best);
            let mut col = vec![0.0; n];
            col[piv] = root;
            for &row in &perm[k + 1..] {
                let mut s = cov[row * n + piv];
                for c in &columns {
                    s -= c[row] * c[piv];
                }
                col[row] = s / root;
                remaining[row] -= col[row] * col[row];
            }
            columns.push(col);
        }
        if columns.is_empty() && kernel.variance() < 0.0 {
            return Err(Error::KernelNotRepresentable {
                negative_fraction: 1.0,
            });
        }
        let rank = columns.len();
        let mut factor = vec![0.0; n * rank];
        for (k, c) in columns.iter().enumerate() {
            for i in 0..n {
                factor[i * rank + k] = c[i];
            }
        }
        cov.clear();
        Ok(Self::Dense { n, rank, factor })
    }

    pub fn method(&self) -> SamplerMethod {
        match self {
            Self::Constant { .. } => SamplerMethod::Constant,
            Self::Circulant { .. } => SamplerMethod::Circulant,
            Self::Dense { .. } => SamplerMethod::Dense,
        }
    }

    pub fn nodes(&self) -> usize {
        match self {
            Self::Constant { n, .. } | Self::Circulant { n, .. } | Self::Dense { n, .. } => *n,
        }
    }
}

/// Stateful field-increment generator: a sampler plus its stream. The
/// circulant route yields two independent draws per transform; the second
/// is kept for the next call.
#[derive(Clone)]
pub struct FieldNoise {
    sampler: FieldSampler,
    stream: NoiseStream,
    fft: Option<Fft>,
    work_re: Vec<f64>,
    work_im: Vec<f64>,
    spare: Vec<f64>,
    has_spare: bool,
}

impl core::fmt::Debug for FieldNoise {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("FieldNoise").field("sampler", &self.sampler).finish()
    }
}

impl FieldNoise {
    pub fn new(model: &NoiseModel, grid: &GridSpec) -> Result<Self> {
        Ok(Self::with_sampler(FieldSampler::new(&model.kernel, grid)?, model.stream()))
    }

    pub fn with_sampler(sampler: FieldSampler, stream: NoiseStream) -> Self {
        let (fft, work_len) = match &sampler {
            FieldSampler::Circulant { fft_len, .. } => (Some(Fft::new(*fft_len)), *fft_len),
            _ => (None, 0),
        };
        Self {
            sampler,
            stream,
            fft,
            work_re: vec![0.0; work_len],
            work_im: vec![0.0; work_len],
            spare: Vec::new(),
            has_spare: false,
        }
    }

    pub fn sampler(&self) -> &FieldSampler {
        &self.sampler
    }

    pub fn nodes(&self) -> usize {
        self.sampler.nodes()
    }

    /// For constant kernels: the single shared increment of the next step,
    /// consuming exactly one normal draw.
    pub fn next_shared(&mut self, dt: f64) -> Option<f64> {
        match self.sampler {
            FieldSampler::Constant { sigma2, .. } => Some(self.stream.scalar_increment(sigma2, dt)),
            _ => None,
        }
    }

    /// Fills `out` (length `n`) with one increment vector over `dt`.
    pub fn fill(&mut self, dt: f64, out: &mut [f64]) {
        let n = self.nodes();
        assert_eq!(out.len(), n, "output buffer does not match the grid");
        let root_dt = libm::sqrt(dt);
        match &self.sampler {
            FieldSampler::Constant { .. } => {
                let shared = self.next_shared(dt).unwrap();
                out.fill(shared);
            }
            FieldSampler::Circulant { scale, .. } => {
                if self.has_spare {
                    for (o, s) in out.iter_mut().zip(&self.spare) {
                        *o = root_dt * s;
                    }
                    self.has_spare = false;
                    return;
                }
                for (k, &s) in scale.iter().enumerate() {
                    self.work_re[k] = s * self.stream.standard_normal();
                    self.work_im[k] = s * self.stream.standard_normal();
                }
                self.fft
                    .as_ref()
                    .unwrap()
                    .forward(&mut self.work_re, &mut self.work_im);
                for (o, r) in out.iter_mut().zip(&self.work_re[..n]) {
                    *o = root_dt * r;
                }
                self.spare.clear();
                self.spare.extend_from_slice(&self.work_im[..n]);
                self.has_spare = true;
            }
            FieldSampler::Dense { rank, factor, .. } => {
                let rank = *rank;
                let z: Vec<f64> = (0..rank).map(|_| self.stream.standard_normal()).collect();
                for (i, o) in out.iter_mut().enumerate() {
                    let row = &factor[i * rank..(i + 1) * rank];
                    *o = root_dt * row.iter().zip(&z).map(|(l, z)| l * z).sum::<f64>();
                }
            }
        }
    }

    pub fn next(&mut self, dt: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.nodes()];
        self.fill(dt, &mut out);
        out
    }
}

/// One draw of the correlated increment vector on `grid` from a fresh
/// stream of `model`.
pub fn field_increments(model: &NoiseModel, grid: &GridSpec, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) {
        return Err(Error::Misuse(format!("dt must be positive, got {dt}")));
    }
    Ok(FieldNoise::new(model, grid)?.next(dt))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn se_kernel() -> CovarianceKernel {
        CovarianceKernel::SquaredExponential {
            sigma2: 1.0,
            length: 2.0,
        }
    }

    #[test]
    fn kernel_reference_values() {
        assert_eq!(kernel_eval(&se_kernel(), 0.0), 1.0);
        assert!((kernel_eval(&se_kernel(), 2.0) - 0.606_530_659_712_633_4).abs() < 1e-15);
        let c = CovarianceKernel::standard_wiener();
        for x in [-3.0, 0.0, 17.5] {
            assert_eq!(kernel_eval(&c, x), 1.0);
        }
    }

    #[test]
    fn tabulated_interpolates_and_vanishes_beyond_table() {
        let t = TabulatedKernel::new(vec![0.0, 1.0, 2.0], vec![1.0, 0.5, 0.0]).unwrap();
        let k = CovarianceKernel::Tabulated(t);
        assert_eq!(k.eval(0.5), 0.75);
        assert_eq!(k.eval(-0.5), 0.75);
        assert_eq!(k.eval(1.0), 0.5);
        assert_eq!(k.eval(2.0), 0.0);
        assert_eq!(k.eval(5.0), 0.0);
        assert!(TabulatedKernel::new(vec![0.5, 1.0], vec![1.0, 0.5]).is_err());
        assert!(TabulatedKernel::new(vec![0.0, 1.0], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn zero_steps_and_zero_variance() {
        let m = NoiseModel::new(CovarianceKernel::standard_wiener(), Interpretation::Ito, 1);
        assert!(scalar_increments(&m, 0.01, 0).unwrap().is_empty());
        let z = NoiseModel::new(CovarianceKernel::Constant { sigma2: 0.0 }, Interpretation::Ito, 1);
        assert!(scalar_increments(&z, 0.01, 100).unwrap().iter().all(|&x| x == 0.0));
        let se = NoiseModel::new(se_kernel(), Interpretation::Ito, 1);
        assert!(matches!(scalar_increments(&se, 0.01, 3), Err(Error::Misuse(_))));
    }

    #[test]
    fn constant_kernel_field_is_rank_one_and_matches_scalar() {
        let g = GridSpec::new(0.0, 0.1, 50).unwrap();
        let m = NoiseModel::new(CovarianceKernel::standard_wiener(), Interpretation::Ito, 9).with_stream(4);
        let mut field = FieldNoise::new(&m, &g).unwrap();
        let scalar = scalar_increments(&m, 0.01, 20).unwrap();
        for s in scalar {
            let v = field.next(0.01);
            assert!(v.iter().all(|&x| x.to_bits() == s.to_bits()));
        }
    }

    #[test]
    fn identical_streams_are_bitwise_reproducible() {
        let g = GridSpec::new(0.0, 0.1, 300).unwrap();
        let m = NoiseModel::new(se_kernel(), Interpretation::Ito, 3).with_stream(11);
        let mut a = FieldNoise::new(&m, &g).unwrap();
        let mut b = FieldNoise::new(&m, &g).unwrap();
        for _ in 0..5 {
            let (x, y) = (a.next(0.01), b.next(0.01));
            assert!(x.iter().zip(&y).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }

    #[test]
    fn squared_exponential_embeds_without_fallback() {
        let g = GridSpec::new(0.0, 0.05, 4001).unwrap();
        let s = FieldSampler::new(&se_kernel(), &g).unwrap();
        match s {
            FieldSampler::Circulant {
                fft_len,
                negative_fraction,
                ..
            } => {
                assert_eq!(fft_len, 8192);
                assert!(negative_fraction <= NEGATIVE_MASS_TOLERANCE);
            }
            other => panic!("unexpected sampler {other:?}"),
        }
    }

    #[test]
    fn non_positive_definite_kernel_falls_back_or_fails() {
        // a triangle-free "box" kernel has a spectrum with large negative lobes
        let boxed = TabulatedKernel::new(vec![0.0, 1.0, 1.0001], vec![1.0, 1.0, 0.0]).unwrap();
        let k = CovarianceKernel::Tabulated(boxed);
        let small = GridSpec::new(0.0, 0.1, 100).unwrap();
        assert_eq!(FieldSampler::new(&k, &small).unwrap().method(), SamplerMethod::Dense);
        let large = GridSpec::new(0.0, 0.1, 1000).unwrap();
        assert!(matches!(
            FieldSampler::new(&k, &large),
            Err(Error::KernelNotRepresentable { .. })
        ));
    }

    #[test]
    fn dense_factor_reproduces_covariance() {
        let g = GridSpec::new(0.0, 0.5, 40).unwrap();
        let k = se_kernel();
        let FieldSampler::Dense { n, rank, factor } = FieldSampler::dense(&k, &g).unwrap() else {
            unreachable!()
        };
        for i in 0..n {
            for j in 0..n {
                let c: f64 = (0..rank).map(|r| factor[i * rank + r] * factor[j * rank + r]).sum();
                let expect = k.eval((i as f64 - j as f64) * 0.5);
                assert!((c - expect).abs() < 1e-9, "({i},{j}) {c} vs {expect}");
            }
        }
    }
}
