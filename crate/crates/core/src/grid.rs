//! Uniform cell-centered boxes in one or two dimensions.

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const MIN_CELLS_PER_AXIS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid<T> {
    dim: usize,
    n: [usize; 2],
    len: [T; 2],
}

impl<T: Real> Grid<T> {
    pub fn new_1d(nx: usize, lx: T) -> Result<Self> {
        Self::build(1, [nx, 1], [lx, T::one()])
    }

    pub fn new_2d(nx: usize, ny: usize, lx: T, ly: T) -> Result<Self> {
        Self::build(2, [nx, ny], [lx, ly])
    }

    fn build(dim: usize, n: [usize; 2], len: [T; 2]) -> Result<Self> {
        for axis in 0..dim {
            if n[axis] < MIN_CELLS_PER_AXIS {
                return Err(Error::InvalidParameter(format!(
                    "grid needs at least {MIN_CELLS_PER_AXIS} cells per axis, got {} on axis {axis}",
                    n[axis]
                )));
            }
            if !(len[axis] > T::zero()) || !len[axis].is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "domain length on axis {axis} must be positive and finite"
                )));
            }
        }
        Ok(Self { dim, n, len })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nx(&self) -> usize {
        self.n[0]
    }

    /// Cells along the second axis; 1 for one-dimensional grids.
    pub fn ny(&self) -> usize {
        self.n[1]
    }

    pub fn cells_per_axis(&self) -> &[usize] {
        &self.n[..self.dim]
    }

    pub fn lengths(&self) -> &[T] {
        &self.len[..self.dim]
    }

    pub fn cell_count(&self) -> usize {
        self.n[0] * self.n[1]
    }

    pub fn spacing(&self, axis: usize) -> T {
        self.len[axis] / T::from_usize_lossy(self.n[axis])
    }

    pub fn cell_volume(&self) -> T {
        (0..self.dim).fold(T::one(), |v, a| v * self.spacing(a))
    }

    pub fn domain_volume(&self) -> T {
        (0..self.dim).fold(T::one(), |v, a| v * self.len[a])
    }

    /// Cell center of the row-major index `idx` (x fastest).
    pub fn center(&self, idx: usize) -> [T; 2] {
        let i = idx % self.n[0];
        let j = idx / self.n[0];
        let half = T::lit(0.5);
        let x = (T::from_usize_lossy(i) + half) * self.spacing(0);
        let y = if self.dim == 2 {
            (T::from_usize_lossy(j) + half) * self.spacing(1)
        } else {
            T::zero()
        };
        [x, y]
    }

    pub fn ensure_same(&self, other: &Grid<T>) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }

    /// `out = Δ_h f` with mirror ghost cells (zero normal derivative).
    pub fn apply_laplacian(&self, f: &[T], out: &mut [T]) {
        let nx = self.n[0];
        let ny = self.n[1];
        let ix2 = (self.spacing(0) * self.spacing(0)).recip();
        let iy2 = if self.dim == 2 {
            (self.spacing(1) * self.spacing(1)).recip()
        } else {
            T::zero()
        };
        for j in 0..ny {
            for i in 0..nx {
                let c = j * nx + i;
                let fc = f[c];
                let mut acc = T::zero();
                if i > 0 {
                    acc += (f[c - 1] - fc) * ix2;
                }
                if i + 1 < nx {
                    acc += (f[c + 1] - fc) * ix2;
                }
                if self.dim == 2 {
                    if j > 0 {
                        acc += (f[c - nx] - fc) * iy2;
                    }
                    if j + 1 < ny {
                        acc += (f[c + nx] - fc) * iy2;
                    }
                }
                out[c] = acc;
            }
        }
    }

    /// Diagonal of Δ_h and of Δ_h² (row sums of squared entries), per cell.
    pub fn laplacian_diagonals(&self) -> (Vec<T>, Vec<T>) {
        let nx = self.n[0];
        let ny = self.n[1];
        let ix2 = (self.spacing(0) * self.spacing(0)).recip();
        let iy2 = if self.dim == 2 {
            (self.spacing(1) * self.spacing(1)).recip()
        } else {
            T::zero()
        };
        let mut diag = Vec::with_capacity(self.cell_count());
        let mut diag_sq = Vec::with_capacity(self.cell_count());
        for j in 0..ny {
            for i in 0..nx {
                let mut d = T::zero();
                let mut off_sq = T::zero();
                let mut push = |w: T| {
                    d -= w;
                    off_sq += w * w;
                };
                if i > 0 {
                    push(ix2);
                }
                if i + 1 < nx {
                    push(ix2);
                }
                if self.dim == 2 {
                    if j > 0 {
                        push(iy2);
                    }
                    if j + 1 < ny {
                        push(iy2);
                    }
                }
                diag.push(d);
                diag_sq.push(d * d + off_sq);
            }
        }
        (diag, diag_sq)
    }

    /// Σ over interior faces of (one-sided difference)² × cell volume, i.e. ‖∇_h f‖².
    /// Equals −⟨Δ_h f, f⟩ exactly.
    pub fn gradient_energy(&self, f: &[T]) -> T {
        let nx = self.n[0];
        let ny = self.n[1];
        let hx = self.spacing(0);
        let mut acc = T::zero();
        for j in 0..ny {
            for i in 0..nx.saturating_sub(1) {
                let c = j * nx + i;
                let d = (f[c + 1] - f[c]) / hx;
                acc += d * d;
            }
        }
        if self.dim == 2 {
            let hy = self.spacing(1);
            for j in 0..ny - 1 {
                for i in 0..nx {
                    let c = j * nx + i;
                    let d = (f[c + nx] - f[c]) / hy;
                    acc += d * d;
                }
            }
        }
        acc * self.cell_volume()
    }
}
