//! Named configurations: the desk-scale reference problem and its variants.

use crate::control::TimeGrid;
use crate::error::Result;
use crate::field::ScalarField;
use crate::grid::Grid;
use crate::model::{ModelParams, ProblemData};
use crate::objective::{ObjectiveSpec, Target};
use crate::scalar::Real;

pub fn reference_params<T: Real>() -> ModelParams<T> {
    ModelParams {
        proliferation: T::lit(1.0),
        apoptosis: T::lit(0.5),
        consumption: T::lit(1.0),
        supply: T::lit(1.0),
        alpha: T::lit(2.0),
        potential_scale: T::lit(1.0),
        gradient_scale: T::lit(1e-3),
    }
}

/// `φ₀ = −tanh(d / (√2 ε))` with `d` the signed distance to a ball of the given radius
/// centred in the domain and `ε = √(B/A)`: +1 inside, −1 outside.
pub fn tanh_seed<T: Real>(grid: Grid<T>, radius: T, params: &ModelParams<T>) -> ScalarField<T> {
    let eps = (params.gradient_scale / params.potential_scale).sqrt();
    let width = T::lit(2.0).sqrt() * eps;
    let l = grid.lengths().to_vec();
    let dim = grid.dim();
    ScalarField::from_fn(grid, |x| {
        let mut r2 = T::zero();
        for a in 0..dim {
            let d = x[a] - T::lit(0.5) * l[a];
            r2 += d * d;
        }
        -((r2.sqrt() - radius) / width).tanh()
    })
}

pub fn reference_grid<T: Real>() -> Grid<T> {
    Grid::new_1d(128, T::one()).expect("valid reference grid")
}

pub fn reference_timegrid<T: Real>() -> TimeGrid<T> {
    TimeGrid::new(T::one(), 200).expect("valid reference time grid")
}

/// Tanh seed of radius `L/4`, `σ₀ ≡ σ_S ≡ 1`, reference coefficients.
pub fn reference_data<T: Real>(grid: Grid<T>) -> Result<ProblemData<T>> {
    let params = reference_params();
    let phi0 = tanh_seed(grid, T::lit(0.25) * grid.lengths()[0], &params);
    let one = ScalarField::constant(grid, T::one());
    ProblemData::new(phi0, one.clone(), one, params)
}

/// Reference weights with both targets the tumor-free state `φ ≡ −1`.
pub fn reference_objective<T: Real>(grid: Grid<T>) -> ObjectiveSpec<T> {
    let healthy = ScalarField::constant(grid, -T::one());
    ObjectiveSpec {
        beta_q: T::lit(1.0),
        beta_omega: T::lit(0.5),
        beta_s: T::lit(0.1),
        beta_u: T::lit(0.1),
        beta_t: T::lit(0.05),
        r_relax: T::lit(0.05),
        phi_q: Target::Constant(healthy.clone()),
        phi_omega: Target::Constant(healthy),
        include_btau_term: false,
    }
}

/// All rates zero, `φ₀ ≡ −1`, `σ₀ ≡ σ_S ≡ 1`: a global equilibrium.
pub fn equilibrium_data<T: Real>(grid: Grid<T>) -> Result<ProblemData<T>> {
    let params = ModelParams {
        proliferation: T::zero(),
        apoptosis: T::zero(),
        consumption: T::zero(),
        supply: T::zero(),
        alpha: T::zero(),
        ..reference_params()
    };
    let one = ScalarField::constant(grid, T::one());
    ProblemData::new(ScalarField::constant(grid, -T::one()), one.clone(), one, params)
}
