//! Model coefficients, double-well potential, interpolation function and problem data.

use std::fmt::Debug;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::scalar::Real;

/// Rate constants of the coupled Cahn–Hilliard / nutrient system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams<T> {
    /// Proliferation rate.
    pub proliferation: T,
    /// Apoptosis rate.
    pub apoptosis: T,
    /// Nutrient consumption rate.
    pub consumption: T,
    /// Nutrient supply rate from the vasculature.
    pub supply: T,
    /// Drug kill rate.
    pub alpha: T,
    /// Scale of the potential term in the chemical potential.
    pub potential_scale: T,
    /// Scale of the gradient-energy term.
    pub gradient_scale: T,
}

impl<T: Real> ModelParams<T> {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("proliferation", self.proliferation),
            ("apoptosis", self.apoptosis),
            ("consumption", self.consumption),
            ("supply", self.supply),
            ("alpha", self.alpha),
        ];
        for (name, v) in nonneg {
            if !(v >= T::zero()) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be >= 0")));
            }
        }
        let pos = [
            ("potential_scale", self.potential_scale),
            ("gradient_scale", self.gradient_scale),
        ];
        for (name, v) in pos {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be > 0")));
            }
        }
        Ok(())
    }
}

/// Nonnegative potential with minima at ±1.
///
/// Custom implementations are used as given. The growth conditions the
/// well-posedness theory relies on are not checked at runtime.
pub trait Potential<T>: Debug + Send + Sync {
    fn psi(&self, s: T) -> T;
    fn psi1(&self, s: T) -> T;
    fn psi2(&self, s: T) -> T;
}

/// Ψ(s) = ¼(1 − s²)²
#[derive(Debug, Clone, Copy, Default)]
pub struct QuarticPotential;

impl<T: Real> Potential<T> for QuarticPotential {
    fn psi(&self, s: T) -> T {
        let a = T::one() - s * s;
        T::lit(0.25) * a * a
    }

    fn psi1(&self, s: T) -> T {
        s * s * s - s
    }

    fn psi2(&self, s: T) -> T {
        T::lit(3.0) * s * s - T::one()
    }
}

/// C² map ℝ → [0, 1] with h(−1) = 0 and h(1) = 1.
pub trait Interpolant<T>: Debug + Send + Sync {
    fn hval(&self, s: T) -> T;
    fn hprime(&self, s: T) -> T;
}

/// Quintic smoothstep in t = (s + 1)/2, constant outside [−1, 1].
#[derive(Debug, Clone, Copy, Default)]
pub struct QuinticSmoothstep;

impl<T: Real> Interpolant<T> for QuinticSmoothstep {
    fn hval(&self, s: T) -> T {
        let t = ((s + T::one()) * T::lit(0.5)).max(T::zero()).min(T::one());
        t * t * t * (t * (t * T::lit(6.0) - T::lit(15.0)) + T::lit(10.0))
    }

    fn hprime(&self, s: T) -> T {
        let t = (s + T::one()) * T::lit(0.5);
        if t <= T::zero() || t >= T::one() {
            return T::zero();
        }
        // d/ds = ½ · 30 t²(1 − t)²
        let w = t * (T::one() - t);
        T::lit(15.0) * w * w
    }
}

pub fn default_potential<T: Real>() -> Arc<dyn Potential<T>> {
    Arc::new(QuarticPotential)
}

pub fn default_interpolant<T: Real>() -> Arc<dyn Interpolant<T>> {
    Arc::new(QuinticSmoothstep)
}

/// Discretization knobs that are not part of the model itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeOptions<T> {
    /// Linear stabilization constant of the Cahn–Hilliard step.
    pub stabilization: T,
    /// Relative residual target of every conjugate gradient solve.
    pub solver_tolerance: T,
    /// Iteration cap as a multiple of the cell count.
    pub max_iter_factor: usize,
}

impl<T: Real> Default for SchemeOptions<T> {
    fn default() -> Self {
        Self {
            stabilization: T::lit(2.0),
            solver_tolerance: T::solver_tolerance(),
            max_iter_factor: 10,
        }
    }
}

/// Initial data, vasculature supply, coefficients and constitutive functions.
#[derive(Debug, Clone)]
pub struct ProblemData<T> {
    pub phi0: ScalarField<T>,
    pub sigma0: ScalarField<T>,
    /// Time-constant vasculature nutrient level.
    pub sigma_s: ScalarField<T>,
    pub params: ModelParams<T>,
    pub potential: Arc<dyn Potential<T>>,
    pub interp: Arc<dyn Interpolant<T>>,
    pub scheme: SchemeOptions<T>,
}

impl<T: Real> ProblemData<T> {
    /// Data with the default quartic potential, quintic interpolant and scheme options.
    pub fn new(
        phi0: ScalarField<T>,
        sigma0: ScalarField<T>,
        sigma_s: ScalarField<T>,
        params: ModelParams<T>,
    ) -> Result<Self> {
        let data = Self {
            phi0,
            sigma0,
            sigma_s,
            params,
            potential: default_potential(),
            interp: default_interpolant(),
            scheme: SchemeOptions::default(),
        };
        data.validate()?;
        Ok(data)
    }

    pub fn grid(&self) -> &crate::grid::Grid<T> {
        self.phi0.grid()
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.phi0.grid().ensure_same(self.sigma0.grid())?;
        self.phi0.grid().ensure_same(self.sigma_s.grid())?;
        for (name, f) in [("sigma0", &self.sigma0), ("sigma_s", &self.sigma_s)] {
            if !(f.min() >= T::zero() && f.max() <= T::one()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must lie in [0, 1] (initial/supply nutrient range)"
                )));
            }
        }
        if !self.phi0.is_finite() {
            return Err(Error::InvalidParameter("phi0 must be finite".into()));
        }
        if !(self.scheme.stabilization >= T::zero()) {
            return Err(Error::InvalidParameter("stabilization must be >= 0".into()));
        }
        Ok(())
    }

    /// Same data with the range checks on the nutrient skipped. Used by negative tests.
    pub fn new_unchecked(
        phi0: ScalarField<T>,
        sigma0: ScalarField<T>,
        sigma_s: ScalarField<T>,
        params: ModelParams<T>,
    ) -> Self {
        Self {
            phi0,
            sigma0,
            sigma_s,
            params,
            potential: default_potential(),
            interp: default_interpolant(),
            scheme: SchemeOptions::default(),
        }
    }
}
