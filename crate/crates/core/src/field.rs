//! Cell-centered scalar fields and the discrete operators acting on them.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField<T> {
    grid: Grid<T>,
    values: Vec<T>,
}

impl<T: Real> ScalarField<T> {
    pub fn from_values(grid: Grid<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.cell_count() {
            return Err(Error::GridMismatch(format!(
                "{} values for {} cells",
                values.len(),
                grid.cell_count()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Divergence(format!("value at cell {i} is not finite")));
        }
        Ok(Self { grid, values })
    }

    /// Internal constructor for solver output; finiteness is checked by the caller.
    pub(crate) fn from_raw(grid: Grid<T>, values: Vec<T>) -> Self {
        debug_assert_eq!(values.len(), grid.cell_count());
        Self { grid, values }
    }

    pub fn constant(grid: Grid<T>, c: T) -> Self {
        Self {
            grid,
            values: vec![c; grid.cell_count()],
        }
    }

    pub fn zeros(grid: Grid<T>) -> Self {
        Self::constant(grid, T::zero())
    }

    /// Samples `f` at the cell centers.
    pub fn from_fn(grid: Grid<T>, f: impl Fn([T; 2]) -> T) -> Self {
        let values = (0..grid.cell_count()).map(|i| f(grid.center(i))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.grid.ensure_same(&other.grid)?;
        Ok(Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scaled(&self, c: T) -> Self {
        self.map(|v| v * c)
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: T, x: &Self) -> Result<()> {
        self.grid.ensure_same(&x.grid)?;
        for (s, &v) in self.values.iter_mut().zip(&x.values) {
            *s += a * v;
        }
        Ok(())
    }

    pub fn min(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max(&self) -> T {
        self.values.iter().copied().fold(T::neg_infinity(), T::max)
    }

    /// Discrete Dirichlet energy ‖∇_h f‖² consistent with [`laplacian_neumann`].
    pub fn gradient_energy(&self) -> T {
        self.grid.gradient_energy(&self.values)
    }

    pub fn norm_l2(&self) -> T {
        inner_raw(&self.grid, &self.values, &self.values).sqrt()
    }
}

/// Discrete Laplacian with homogeneous Neumann boundary (mirror ghost cells).
pub fn laplacian_neumann<T: Real>(f: &ScalarField<T>) -> ScalarField<T> {
    let mut out = vec![T::zero(); f.values.len()];
    f.grid.apply_laplacian(&f.values, &mut out);
    ScalarField::from_raw(f.grid, out)
}

/// Cell-volume quadrature ∫_Ω f.
pub fn integrate<T: Real>(f: &ScalarField<T>) -> T {
    f.values.iter().copied().sum::<T>() * f.grid.cell_volume()
}

/// L²(Ω) pairing.
pub fn inner_product<T: Real>(f: &ScalarField<T>, g: &ScalarField<T>) -> Result<T> {
    f.grid.ensure_same(&g.grid)?;
    Ok(inner_raw(&f.grid, &f.values, &g.values))
}

pub(crate) fn inner_raw<T: Real>(grid: &Grid<T>, a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum::<T>() * grid.cell_volume()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;
    type Grid = crate::grid::Grid<f64>;
    type ScalarField = super::ScalarField<f64>;

    fn cos_error(n: usize) -> f64 {
        let l = 2.0;
        let g = Grid::new_1d(n, l).unwrap();
        let f = ScalarField::from_fn(g, |x| (PI * x[0] / l).cos());
        let lap = laplacian_neumann(&f);
        let k2 = (PI / l).powi(2);
        lap.values()
            .iter()
            .zip(f.values())
            .map(|(a, b)| (a + k2 * b).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn laplacian_of_constant_vanishes() {
        for g in [
            Grid::new_1d(7, 1.3).unwrap(),
            Grid::new_2d(5, 9, 1.0, 2.5).unwrap(),
        ] {
            let lap = laplacian_neumann(&ScalarField::constant(g, 3.7));
            assert!(lap.values().iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn laplacian_matches_neumann_eigenfunction() {
        let e = cos_error(64);
        let h = 2.0 / 64.0;
        // O(h²) with the eigenfunction's fourth derivative as constant
        assert!(e < (PI / 2.0).powi(4) * h * h, "max error {e}");
    }

    #[test]
    fn laplacian_second_order() {
        for n in [32, 64, 128] {
            let ratio = cos_error(n) / cos_error(2 * n);
            assert!((ratio - 4.0).abs() <= 0.3, "n={n} ratio {ratio}");
        }
    }

    #[test]
    fn integrate_constants() {
        let g = Grid::new_1d(10, 1.0).unwrap();
        assert!((integrate(&ScalarField::constant(g, 1.0)) - 1.0).abs() < 1e-13);
        let g2 = Grid::new_2d(6, 4, 1.5, 0.5).unwrap();
        let c = -2.25;
        let v = integrate(&ScalarField::constant(g2, c));
        assert!((v - c * 0.75).abs() <= 1e-13 * 0.75 * c.abs());
        let one = ScalarField::constant(g2, 1.0);
        let f = ScalarField::from_fn(g2, |x| x[0] * x[1] - 0.3);
        assert!((inner_product(&one, &f).unwrap() - integrate(&f)).abs() < 1e-14);
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let a = ScalarField::zeros(Grid::new_1d(8, 1.0).unwrap());
        let b = ScalarField::zeros(Grid::new_1d(9, 1.0).unwrap());
        assert!(matches!(inner_product(&a, &b), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn rejects_tiny_grids_and_non_finite_values() {
        assert!(crate::grid::Grid::<f64>::new_1d(3, 1.0).is_err());
        assert!(crate::grid::Grid::<f64>::new_2d(8, 8, 1.0, 0.0).is_err());
        let g = Grid::new_1d(4, 1.0).unwrap();
        assert!(ScalarField::from_values(g, vec![0.0, f64::NAN, 0.0, 0.0]).is_err());
        assert!(ScalarField::from_values(g, vec![0.0; 3]).is_err());
    }

    #[test]
    fn f32_operators_agree_with_f64() {
        let g32 = crate::grid::Grid::<f32>::new_1d(16, 1.0).unwrap();
        let g64 = crate::grid::Grid::<f64>::new_1d(16, 1.0).unwrap();
        let f32f = super::ScalarField::from_fn(g32, |x| (3.0 * x[0]).sin());
        let f64f = ScalarField::from_fn(g64, |x| (3.0 * x[0]).sin());
        let a = integrate(&laplacian_neumann(&f32f)) as f64;
        let b = integrate(&laplacian_neumann(&f64f));
        assert!((a - b).abs() < 1e-3);
    }

    fn field_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-10.0..10.0f64, n)
    }

    proptest! {
        #[test]
        fn laplacian_conserves_mass(vals in field_strategy(6 * 5)) {
            let g = Grid::new_2d(6, 5, 1.0, 0.7).unwrap();
            let f = ScalarField::from_values(g, vals).unwrap();
            let s: f64 = laplacian_neumann(&f).values().iter().sum();
            let scale = f.norm_l2().max(1.0) / g.cell_volume() / g.spacing(0).powi(2);
            prop_assert!(s.abs() <= 1e-12 * scale);
        }

        #[test]
        fn integrate_matches_midpoint_oracle(vals in field_strategy(7 * 4)) {
            let g = Grid::new_2d(7, 4, 1.4, 0.6).unwrap();
            let f = ScalarField::from_values(g, vals.clone()).unwrap();
            // independent midpoint sum: loop over (i, j) with explicit cell widths
            let (hx, hy) = (1.4 / 7.0, 0.6 / 4.0);
            let mut oracle = 0.0;
            for j in 0..4 {
                for i in 0..7 {
                    oracle += vals[j * 7 + i] * hx * hy;
                }
            }
            let got = integrate(&f);
            let scale = vals.iter().map(|v| v.abs()).sum::<f64>() * hx * hy;
            prop_assert!((got - oracle).abs() <= 1e-13 * scale.max(1e-300));
        }

        #[test]
        fn inner_product_is_symmetric_and_cauchy_schwarz(a in field_strategy(12), b in field_strategy(12)) {
            let g = Grid::new_1d(12, 0.8).unwrap();
            let f = ScalarField::from_values(g, a).unwrap();
            let h = ScalarField::from_values(g, b).unwrap();
            let fh = inner_product(&f, &h).unwrap();
            prop_assert!((fh - inner_product(&h, &f).unwrap()).abs() <= 1e-12 * (1.0 + fh.abs()));
            prop_assert!(fh.abs() <= f.norm_l2() * h.norm_l2() * (1.0 + 1e-12));
            prop_assert!(inner_product(&f, &f).unwrap() >= 0.0);
        }

        #[test]
        fn gradient_energy_is_minus_laplacian_pairing(vals in field_strategy(5 * 6)) {
            let g = Grid::new_2d(5, 6, 0.9, 1.1).unwrap();
            let f = ScalarField::from_values(g, vals).unwrap();
            let lhs = f.gradient_energy();
            let rhs = -inner_product(&laplacian_neumann(&f), &f).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
        }
    }
}
