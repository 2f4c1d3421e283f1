//! Uniform 1-D grids, profiles on them, and moving-frame bookkeeping.
//!
//! A [`GridSpec`] maps node `i` to the physical coordinate
//! `x0 + frame_offset + i·dx`. Moving the window only touches
//! `frame_offset`, so anything expressed in physical coordinates (markers,
//! tail fits) is unaffected by frame shifts.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::stats;

/// Default spacing.
pub const DEFAULT_DX: f64 = 0.05;
/// Default window length in space units.
pub const DEFAULT_LENGTH: f64 = 200.0;
/// Fraction of the window placed left of the origin by [`GridSpec::for_front`].
pub const DEFAULT_ORIGIN_FRACTION: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridSpec {
    pub x0: f64,
    pub dx: f64,
    pub n: usize,
    pub frame_offset: f64,
}

impl GridSpec {
    pub fn new(x0: f64, dx: f64, n: usize) -> Result<Self> {
        let grid = Self {
            x0,
            dx,
            n,
            frame_offset: 0.0,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// Window of `length` space units with the origin at `origin_fraction`
    /// of the way from the left edge.
    pub fn for_front(dx: f64, length: f64, origin_fraction: f64) -> Result<Self> {
        if !(dx > 0.0) || !(length > 0.0) || !(0.0..1.0).contains(&origin_fraction) {
            return Err(Error::Config(format!(
                "bad window: dx={dx}, length={length}, origin_fraction={origin_fraction}"
            )));
        }
        let n = libm::round(length / dx) as usize + 1;
        let x0 = -libm::round(origin_fraction * (n - 1) as f64) * dx;
        Self::new(x0, dx, n)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dx > 0.0) || !self.dx.is_finite() {
            return Err(Error::Config(format!("dx must be positive, got {}", self.dx)));
        }
        if self.n < 3 {
            return Err(Error::Config(format!("need at least 3 nodes, got {}", self.n)));
        }
        if !self.x0.is_finite() || !self.frame_offset.is_finite() {
            return Err(Error::Config("grid origin must be finite".into()));
        }
        Ok(())
    }

    /// Physical coordinate of node `i`.
    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.x0 + self.frame_offset + i as f64 * self.dx
    }

    pub fn left(&self) -> f64 {
        self.x(0)
    }

    pub fn right(&self) -> f64 {
        self.x(self.n - 1)
    }

    pub fn length(&self) -> f64 {
        (self.n - 1) as f64 * self.dx
    }

    /// Fractional node index of a physical coordinate.
    pub fn index_of(&self, x: f64) -> f64 {
        (x - self.x0 - self.frame_offset) / self.dx
    }

    pub fn coordinates(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }
}

/// A real profile on a grid at a given time.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Field {
    pub grid: GridSpec,
    pub values: Vec<f64>,
    pub time: f64,
}

impl Field {
    pub fn new(grid: GridSpec, values: Vec<f64>, time: f64) -> Result<Self> {
        grid.validate()?;
        if values.len() != grid.n {
            return Err(Error::Misuse(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.n
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite value at node {i}")));
        }
        Ok(Self { grid, values, time })
    }

    pub fn constant(grid: GridSpec, value: f64) -> Self {
        Self {
            grid,
            values: alloc::vec![value; grid.n],
            time: 0.0,
        }
    }

    /// Samples `f` at the physical coordinates of the grid.
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid,
            values: (0..grid.n).map(|i| f(grid.x(i))).collect(),
            time: 0.0,
        }
    }

    /// The front initial condition: 1 left of the junction `−ln 2 / N`,
    /// `½ e^{−N x}` from the junction on. Both branches equal 1 at the
    /// junction and the profile passes through ½ at `x = 0`.
    pub fn initial_condition(grid: GridSpec, decay_rate: f64) -> Result<Self> {
        grid.validate()?;
        if !(decay_rate > 0.0) || !decay_rate.is_finite() {
            return Err(Error::Config(format!(
                "initial decay rate N must be positive, got {decay_rate}"
            )));
        }
        let junction = junction_point(decay_rate);
        if !(grid.left() < junction && junction < grid.right()) {
            return Err(Error::Config(format!(
                "grid [{}, {}] does not contain the junction point {junction}",
                grid.left(),
                grid.right()
            )));
        }
        Ok(Self::from_fn(grid, |x| initial_profile(decay_rate, x)))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Linear interpolation at a physical coordinate, clamped to the window.
    pub fn interpolate(&self, x: f64) -> f64 {
        let s = self.grid.index_of(x);
        if s <= 0.0 {
            return self.values[0];
        }
        let last = self.grid.n - 1;
        if s >= last as f64 {
            return self.values[last];
        }
        let i = s as usize;
        let w = s - i as f64;
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }

    /// Least-squares decay rate `−d(log u)/dx` over the rightmost `fraction`
    /// of the nodes, using only strictly positive values. `None` when fewer
    /// than two usable nodes remain.
    pub fn tail_decay_rate(&self, fraction: f64) -> Option<f64> {
        let n = self.grid.n;
        let count = ((fraction * n as f64) as usize).clamp(2, n);
        let (xs, ys): (Vec<f64>, Vec<f64>) = (n - count..n)
            .filter(|&i| self.values[i] > 0.0)
            .map(|i| (self.grid.x(i), -libm::log(self.values[i])))
            .unzip();
        stats::fit_line(&xs, &ys).map(|fit| fit.slope)
    }

    /// Moves the window `cells` nodes to the right (left for negative
    /// `cells`). Overlapping nodes keep their values bit for bit. Nodes that
    /// enter on the right continue the last value exponentially with
    /// `right_fill_rate`, or with a rate fitted over the rightmost 10% of the
    /// nodes when `None`. Nodes that enter on the left take `left_fill`.
    pub fn shift_frame(&self, cells: isize, left_fill: f64, right_fill_rate: Option<f64>) -> Result<Self> {
        let n = self.grid.n;
        if cells.unsigned_abs() >= n {
            return Err(Error::Misuse(format!("shift of {cells} cells on {n} nodes")));
        }
        let mut grid = self.grid;
        grid.frame_offset += cells as f64 * grid.dx;
        let mut values = alloc::vec![0.0; n];
        if cells >= 0 {
            let k = cells as usize;
            values[..n - k].copy_from_slice(&self.values[k..]);
            if k > 0 {
                let rate = match right_fill_rate {
                    Some(r) => r,
                    None => self.tail_decay_rate(0.1).unwrap_or(0.0),
                };
                if !rate.is_finite() {
                    return Err(Error::Numeric(format!("right fill rate {rate} is not finite")));
                }
                let last = self.values[n - 1];
                if last < 0.0 {
                    return Err(Error::Numeric(format!("right fill from negative value {last}")));
                }
                for j in 1..=k {
                    values[n - 1 - k + j] = last * libm::exp(-rate * j as f64 * grid.dx);
                }
            }
        } else {
            let k = cells.unsigned_abs();
            if !(left_fill >= 0.0) {
                return Err(Error::Numeric(format!("left fill {left_fill} is negative")));
            }
            values[k..].copy_from_slice(&self.values[..n - k]);
            values[..k].fill(left_fill);
        }
        Ok(Self {
            grid,
            values,
            time: self.time,
        })
    }

    /// `−(log u)_x`: central differences in the interior, second-order
    /// one-sided differences at the two ends.
    pub fn log_gradient(&self) -> Result<Self> {
        if let Some(i) = self.values.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::Domain(format!(
                "log_gradient needs positive values; node {i} holds {}",
                self.values[i]
            )));
        }
        let u = &self.values;
        let n = u.len();
        let dx = self.grid.dx;
        let mut theta = alloc::vec![0.0; n];
        for i in 1..n - 1 {
            theta[i] = -libm::log(u[i + 1] / u[i - 1]) / (2.0 * dx);
        }
        // −(−3 l0 + 4 l1 − l2) / 2dx with l = log u, written with ratios
        theta[0] = -(4.0 * libm::log(u[1] / u[0]) - libm::log(u[2] / u[0])) / (2.0 * dx);
        theta[n - 1] =
            -(libm::log(u[n - 3] / u[n - 1]) - 4.0 * libm::log(u[n - 2] / u[n - 1])) / (2.0 * dx);
        Ok(Self {
            grid: self.grid,
            values: theta,
            time: self.time,
        })
    }
}

/// `−ln 2 / N`, where the two branches of the initial condition meet.
pub fn junction_point(decay_rate: f64) -> f64 {
    -core::f64::consts::LN_2 / decay_rate
}

pub fn initial_profile(decay_rate: f64, x: f64) -> f64 {
    if x < junction_point(decay_rate) {
        1.0
    } else {
        0.5 * libm::exp(-decay_rate * x)
    }
}
