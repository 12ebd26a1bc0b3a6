//! Time grid, dose controls and the admissible-set projection.

use crate::error::{Error, Result};
use crate::field::{inner_raw, ScalarField};
use crate::grid::Grid;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid<T> {
    t_end: T,
    n_steps: usize,
}

impl<T: Real> TimeGrid<T> {
    pub fn new(t_end: T, n_steps: usize) -> Result<Self> {
        if n_steps < 2 {
            return Err(Error::InvalidParameter(format!(
                "time grid needs at least 2 steps, got {n_steps}"
            )));
        }
        if !(t_end > T::zero()) || !t_end.is_finite() {
            return Err(Error::InvalidParameter("horizon must be positive".into()));
        }
        Ok(Self { t_end, n_steps })
    }

    pub fn t_end(&self) -> T {
        self.t_end
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    pub fn dt(&self) -> T {
        self.t_end / T::from_usize_lossy(self.n_steps)
    }

    pub fn time(&self, k: usize) -> T {
        T::from_usize_lossy(k) * self.dt()
    }

    /// Same horizon with twice as many steps.
    pub fn refined(&self) -> Self {
        Self {
            t_end: self.t_end,
            n_steps: 2 * self.n_steps,
        }
    }

    /// Converts a duration to a whole number of steps, if it is one.
    pub fn steps_in(&self, duration: T) -> Option<usize> {
        let m = duration / self.dt();
        let r = m.round();
        if r >= T::one() && (m - r).abs() <= T::lit(1e-9) * r.max(T::one()) {
            r.to_usize()
        } else {
            None
        }
    }
}

/// Dose field, one frame per time node, read as piecewise constant on `[t_k, t_{k+1})`.
///
/// The frame at the last node sits outside every interval and carries no weight
/// in [`Control::inner`].
#[derive(Debug, Clone, PartialEq)]
pub struct Control<T> {
    timegrid: TimeGrid<T>,
    frames: Vec<ScalarField<T>>,
}

impl<T: Real> Control<T> {
    pub fn new(timegrid: TimeGrid<T>, frames: Vec<ScalarField<T>>) -> Result<Self> {
        if frames.len() != timegrid.n_nodes() {
            return Err(Error::GridMismatch(format!(
                "{} control frames for {} time nodes",
                frames.len(),
                timegrid.n_nodes()
            )));
        }
        let g = *frames[0].grid();
        for f in &frames[1..] {
            g.ensure_same(f.grid())?;
        }
        Ok(Self { timegrid, frames })
    }

    pub fn constant(grid: Grid<T>, timegrid: TimeGrid<T>, c: T) -> Self {
        Self {
            timegrid,
            frames: vec![ScalarField::constant(grid, c); timegrid.n_nodes()],
        }
    }

    pub fn zeros(grid: Grid<T>, timegrid: TimeGrid<T>) -> Self {
        Self::constant(grid, timegrid, T::zero())
    }

    /// Samples `f(x, t_k)` at every node.
    pub fn from_fn(grid: Grid<T>, timegrid: TimeGrid<T>, f: impl Fn([T; 2], T) -> T) -> Self {
        let frames = (0..timegrid.n_nodes())
            .map(|k| {
                let t = timegrid.time(k);
                ScalarField::from_fn(grid, |x| f(x, t))
            })
            .collect();
        Self { timegrid, frames }
    }

    pub fn timegrid(&self) -> &TimeGrid<T> {
        &self.timegrid
    }

    pub fn grid(&self) -> &Grid<T> {
        self.frames[0].grid()
    }

    pub fn frames(&self) -> &[ScalarField<T>] {
        &self.frames
    }

    pub fn frame(&self, k: usize) -> &ScalarField<T> {
        &self.frames[k]
    }

    pub fn frames_mut(&mut self) -> &mut [ScalarField<T>] {
        &mut self.frames
    }

    pub fn ensure_compatible(&self, other: &Self) -> Result<()> {
        if self.timegrid != other.timegrid {
            return Err(Error::GridMismatch("control time grids differ".into()));
        }
        self.grid().ensure_same(other.grid())
    }

    pub fn map(&self, f: impl Fn(T) -> T + Copy) -> Self {
        Self {
            timegrid: self.timegrid,
            frames: self.frames.iter().map(|fr| fr.map(f)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T + Copy) -> Result<Self> {
        self.ensure_compatible(other)?;
        let frames = self
            .frames
            .iter()
            .zip(&other.frames)
            .map(|(a, b)| a.zip_map(b, f))
            .collect::<Result<_>>()?;
        Ok(Self {
            timegrid: self.timegrid,
            frames,
        })
    }

    /// `a·self + b·other`
    pub fn lincomb(&self, a: T, other: &Self, b: T) -> Result<Self> {
        self.zip_map(other, move |x, y| a * x + b * y)
    }

    /// L²(Q) pairing for piecewise-constant-in-time fields: Σ_{k<N} dt ⟨a_k, b_k⟩.
    pub fn inner(&self, other: &Self) -> Result<T> {
        self.ensure_compatible(other)?;
        let dt = self.timegrid.dt();
        let g = self.grid();
        Ok(self.frames[..self.timegrid.n_steps]
            .iter()
            .zip(&other.frames)
            .map(|(a, b)| inner_raw(g, a.values(), b.values()))
            .sum::<T>()
            * dt)
    }

    pub fn norm(&self) -> T {
        self.inner(self).expect("self-compatible").sqrt()
    }

    pub fn is_admissible(&self) -> bool {
        self.frames
            .iter()
            .all(|f| f.values().iter().all(|&v| v >= T::zero() && v <= T::one()))
    }

    pub fn min(&self) -> T {
        self.frames.iter().map(|f| f.min()).fold(T::infinity(), T::min)
    }

    pub fn max(&self) -> T {
        self.frames
            .iter()
            .map(|f| f.max())
            .fold(T::neg_infinity(), T::max)
    }
}

/// Pointwise clamp into `[0, 1]`.
pub fn project_admissible<T: Real>(u: &Control<T>) -> Control<T> {
    u.map(|v| v.max(T::zero()).min(T::one()))
}
