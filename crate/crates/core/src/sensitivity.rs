//! Linearized state equations around a base trajectory.
//!
//! The stepping is the exact derivative of [`crate::state::step_state`]: every
//! coefficient is frozen at the base node `φ̄ⁿ` the forward step used, so the
//! Taylor remainder of the discrete control-to-state map is O(‖w‖²) at any `dt`.

use crate::control::{Control, TimeGrid};
use crate::error::{Error, Result};
use crate::field::{inner_raw, ScalarField};
use crate::model::ProblemData;
use crate::scalar::Real;
use crate::state::{check_finite, solve_biharmonic, solve_reaction_diffusion, solve_state, StateTrajectory};

/// Directional derivative `(Φ, Ξ, Σ)` of `(φ, μ, σ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedTrajectory<T> {
    pub timegrid: TimeGrid<T>,
    pub phi: Vec<ScalarField<T>>,
    pub xi: Vec<ScalarField<T>>,
    pub sigma: Vec<ScalarField<T>>,
}

pub fn solve_linearized<T: Real>(
    base: &StateTrajectory<T>,
    data: &ProblemData<T>,
    u_bar: &Control<T>,
    w: &Control<T>,
) -> Result<LinearizedTrajectory<T>> {
    let tg = base.timegrid;
    if u_bar.timegrid() != &tg || w.timegrid() != &tg {
        return Err(Error::GridMismatch("time grids of base, control and direction differ".into()));
    }
    let grid = *data.grid();
    grid.ensure_same(base.grid())?;
    grid.ensure_same(w.grid())?;
    grid.ensure_same(u_bar.grid())?;

    let p = &data.params;
    let a = p.potential_scale;
    let stab = data.scheme.stabilization;
    let dt = tg.dt();
    let n = grid.cell_count();

    let zero = ScalarField::zeros(grid);
    let mut phi = vec![zero.clone()];
    let mut xi = vec![zero.clone()];
    let mut sigma = vec![zero];
    let mut lap = vec![T::zero(); n];

    for k in 0..tg.n_steps() {
        let step = || -> Result<_> {
            let pb = base.phi[k].values();
            let sb1 = base.sigma[k + 1].values();
            let ub = u_bar.frame(k).values();
            let wk = w.frame(k).values();
            let big_phi = phi[k].values();
            let h: Vec<T> = pb.iter().map(|&s| data.interp.hval(s)).collect();
            let dh: Vec<T> = pb.iter().map(|&s| data.interp.hprime(s)).collect();

            let rhs_sigma: Vec<T> = (0..n)
                .map(|i| sigma[k].values()[i] - dt * p.consumption * dh[i] * big_phi[i] * sb1[i])
                .collect();
            let big_sigma =
                solve_reaction_diffusion(data, &h, dt, &rhs_sigma, sigma[k].values())?;

            let explicit: Vec<T> = (0..n)
                .map(|i| a * (data.potential.psi2(pb[i]) - stab) * big_phi[i])
                .collect();
            let mut lap_e = vec![T::zero(); n];
            grid.apply_laplacian(&explicit, &mut lap_e);
            let rhs_phi: Vec<T> = (0..n)
                .map(|i| {
                    let src = h[i] * (p.proliferation * big_sigma[i] - p.alpha * wk[i])
                        + dh[i]
                            * big_phi[i]
                            * (p.proliferation * sb1[i] - p.apoptosis - p.alpha * ub[i]);
                    big_phi[i] + dt * (lap_e[i] + src)
                })
                .collect();
            let phi_new = solve_biharmonic(data, dt, &rhs_phi, big_phi)?;
            check_finite(&phi_new, "linearized phase field")?;
            Ok((phi_new, big_sigma))
        };
        let (phi_new, big_sigma) = step().map_err(|e| e.at_step(k))?;
        grid.apply_laplacian(&phi_new, &mut lap);
        let pb = base.phi[k].values();
        let old = phi[k].values();
        let xi_new: Vec<T> = (0..n)
            .map(|i| {
                a * (data.potential.psi2(pb[i]) * old[i] + stab * (phi_new[i] - old[i]))
                    - p.gradient_scale * lap[i]
            })
            .collect();
        phi.push(ScalarField::from_raw(grid, phi_new));
        xi.push(ScalarField::from_raw(grid, xi_new));
        sigma.push(ScalarField::from_raw(grid, big_sigma));
    }
    Ok(LinearizedTrajectory {
        timegrid: tg,
        phi,
        xi,
        sigma,
    })
}

/// Norms of the first-order Taylor remainders `θ = φ̂ − φ̄ − Φ`, `ξ = σ̂ − σ̄ − Σ`
/// (max over nodes of the L²(Ω) norm) and, for completeness, `ρ = μ̂ − μ̄ − Ξ`
/// in L²(Q).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaylorRemainder<T> {
    pub eps: T,
    pub theta: T,
    pub xi: T,
    pub rho: T,
}

/// Base solve and tangent reused across a sweep of step sizes.
pub struct TaylorProbe<'a, T> {
    data: &'a ProblemData<T>,
    u_bar: &'a Control<T>,
    w: &'a Control<T>,
    base: StateTrajectory<T>,
    lin: LinearizedTrajectory<T>,
}

impl<'a, T: Real> TaylorProbe<'a, T> {
    pub fn new(data: &'a ProblemData<T>, u_bar: &'a Control<T>, w: &'a Control<T>) -> Result<Self> {
        let base = solve_state(data, u_bar, u_bar.timegrid())?;
        let lin = solve_linearized(&base, data, u_bar, w)?;
        Ok(Self {
            data,
            u_bar,
            w,
            base,
            lin,
        })
    }

    pub fn linearized(&self) -> &LinearizedTrajectory<T> {
        &self.lin
    }

    /// Perturbed solve at `ū + εw`; the control is not clamped.
    pub fn remainder(&self, eps: T) -> Result<TaylorRemainder<T>> {
        if eps == T::zero() {
            return Ok(TaylorRemainder {
                eps,
                theta: T::zero(),
                xi: T::zero(),
                rho: T::zero(),
            });
        }
        let u_hat = self.u_bar.lincomb(T::one(), self.w, eps)?;
        let hat = solve_state(self.data, &u_hat, u_hat.timegrid())?;
        let grid = self.base.grid();
        let dt = self.base.timegrid.dt();
        let rem = |a: &[T], b: &[T], d: &[T]| -> T {
            let r: Vec<T> = (0..a.len()).map(|i| a[i] - b[i] - eps * d[i]).collect();
            inner_raw(grid, &r, &r)
        };
        let mut theta = T::zero();
        let mut xi = T::zero();
        let mut rho = T::zero();
        for k in 0..self.base.timegrid.n_nodes() {
            theta = theta.max(rem(hat.phi[k].values(), self.base.phi[k].values(), self.lin.phi[k].values()));
            xi = xi.max(rem(
                hat.sigma[k].values(),
                self.base.sigma[k].values(),
                self.lin.sigma[k].values(),
            ));
            if k > 0 {
                rho += dt * rem(hat.mu[k].values(), self.base.mu[k].values(), self.lin.xi[k].values());
            }
        }
        Ok(TaylorRemainder {
            eps,
            theta: theta.sqrt(),
            xi: xi.sqrt(),
            rho: rho.sqrt(),
        })
    }
}

/// Two forward solves and one linearized solve for the direction `εw`.
pub fn taylor_remainder<T: Real>(
    data: &ProblemData<T>,
    u_bar: &Control<T>,
    w: &Control<T>,
    eps: T,
) -> Result<TaylorRemainder<T>> {
    TaylorProbe::new(data, u_bar, w)?.remainder(eps)
}
