//! Backward adjoint system on `[0, τ]`.
//!
//! Two discretizations are provided. [`AdjointScheme::Discrete`] is the exact transpose
//! of the forward stepping, so `⟨g, w⟩` is the derivative of the discrete objective to
//! solver tolerance; the gradient and the optimizer use it. [`AdjointScheme::Continuous`]
//! discretizes the backward equations directly, freezing coefficients at the node being
//! computed as the forward step does; its pairing with the tangent carries an O(dt) gap.
//!
//! Both march `p`, `r_adj` from zero at the τ node. `q = Δp` is stored alongside.

use crate::control::{Control, TimeGrid};
use crate::error::{Error, Result};
use crate::field::{laplacian_neumann, ScalarField};
use crate::grid::Grid;
use crate::model::ProblemData;
use crate::objective::{indicator_weights, trapezoid_weights, weighted_source, ObjectiveSpec};
use crate::scalar::Real;
use crate::state::{check_finite, solve_biharmonic, solve_reaction_diffusion, StateTrajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AdjointScheme {
    #[default]
    Discrete,
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AdjointOptions {
    pub scheme: AdjointScheme,
    /// Flips the sign of the `h'(φ)(Pσ − A − αu)p` term. Only for negative tests.
    pub sabotage: bool,
}

/// `(p, q, r_adj)` at nodes `0..=tau_index`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointTrajectory<T> {
    /// Time grid of the forward problem; only nodes up to `tau_index` carry data.
    pub timegrid: TimeGrid<T>,
    pub tau_index: usize,
    pub p: Vec<ScalarField<T>>,
    pub q: Vec<ScalarField<T>>,
    pub r_adj: Vec<ScalarField<T>>,
}

impl<T: Real> AdjointTrajectory<T> {
    /// Adjoint for `τ = 0`: the window is empty and everything vanishes.
    pub fn vanishing(timegrid: TimeGrid<T>, grid: Grid<T>) -> Self {
        let z = ScalarField::zeros(grid);
        Self {
            timegrid,
            tau_index: 0,
            p: vec![z.clone()],
            q: vec![z.clone()],
            r_adj: vec![z],
        }
    }

    /// `p` at node `k`, or `None` past τ where the zero extension applies.
    pub fn extended_p(&self, k: usize) -> Option<&ScalarField<T>> {
        if k < self.tau_index {
            Some(&self.p[k])
        } else {
            None
        }
    }

    /// `p` on the whole horizon as a dose-shaped field, zero past τ.
    pub fn extended_p_control(&self) -> Result<Control<T>> {
        let grid = *self.p[0].grid();
        let frames = (0..self.timegrid.n_nodes())
            .map(|k| match self.extended_p(k) {
                Some(p) => p.clone(),
                None => ScalarField::zeros(grid),
            })
            .collect();
        Control::new(self.timegrid, frames)
    }
}

/// Solves the adjoint with the exact discrete scheme.
pub fn solve_adjoint<T: Real>(
    base: &StateTrajectory<T>,
    data: &ProblemData<T>,
    u: &Control<T>,
    obj: &ObjectiveSpec<T>,
    tau_index: usize,
) -> Result<AdjointTrajectory<T>> {
    solve_adjoint_with(base, data, u, obj, tau_index, AdjointOptions::default())
}

pub fn solve_adjoint_with<T: Real>(
    base: &StateTrajectory<T>,
    data: &ProblemData<T>,
    u: &Control<T>,
    obj: &ObjectiveSpec<T>,
    tau_index: usize,
    opts: AdjointOptions,
) -> Result<AdjointTrajectory<T>> {
    let tg = base.timegrid;
    if tau_index == 0 || tau_index > tg.n_steps() {
        return Err(Error::TauOutOfRange {
            index: tau_index,
            n_steps: tg.n_steps(),
        });
    }
    if u.timegrid() != &tg {
        return Err(Error::GridMismatch("control and trajectory time grids differ".into()));
    }
    let grid = *data.grid();
    grid.ensure_same(base.grid())?;
    grid.ensure_same(u.grid())?;
    let m = obj.check_against(base)?;

    let p = &data.params;
    let a = p.potential_scale;
    let stab = data.scheme.stabilization;
    let dt = tg.dt();
    let n = grid.cell_count();
    let flip = if opts.sabotage { -T::one() } else { T::one() };

    let zero = vec![T::zero(); n];
    let mut ps = vec![zero.clone(); tau_index + 1];
    let mut rs = vec![zero.clone(); tau_index + 1];

    // Each backward step produces p[j], r[j] from p[j+1], r[j+1]. The coefficient node
    // `c` is j+1 for the transpose of the forward step and j for the direct scheme.
    for j in (0..tau_index).rev() {
        let step = || -> Result<(Vec<T>, Vec<T>)> {
            let (c, weights) = match opts.scheme {
                AdjointScheme::Discrete => (j + 1, trapezoid_weights(j + 1, tau_index, m)),
                AdjointScheme::Continuous => (j, indicator_weights(j + 1, tau_index, m)),
            };
            // The tracking source enters at the node the step starts from.
            let src = weighted_source(&base.phi[j + 1], obj, j + 1, weights);
            let phi_c = base.phi[c].values();
            // σ frozen the way the forward step at node c uses it
            let sigma_c = match opts.scheme {
                AdjointScheme::Discrete => base.sigma.get(c + 1).map(|s| s.values()),
                AdjointScheme::Continuous => Some(base.sigma[c].values()),
            };
            let uc = u.frame(c.min(tg.n_steps() - 1)).values();
            let p_next = &ps[j + 1];
            let r_next = &rs[j + 1];

            let h_of = |phi: &[T]| -> Vec<T> { phi.iter().map(|&s| data.interp.hval(s)).collect() };

            // Continuous: r first, at the same node, then p uses it.
            let r_cont = if opts.scheme == AdjointScheme::Continuous {
                let h = h_of(phi_c);
                let rhs: Vec<T> = (0..n)
                    .map(|i| r_next[i] + dt * p.proliferation * h[i] * p_next[i])
                    .collect();
                Some(solve_reaction_diffusion(data, &h, dt, &rhs, r_next)?)
            } else {
                None
            };
            let r_coupled: &[T] = r_cont.as_deref().unwrap_or(r_next);

            let mut lap_p = vec![T::zero(); n];
            grid.apply_laplacian(p_next, &mut lap_p);
            let rhs_p: Vec<T> = (0..n)
                .map(|i| {
                    let s = phi_c[i];
                    let dh = data.interp.hprime(s);
                    let coupling = match sigma_c {
                        Some(sig) => {
                            flip * dh
                                * (p.proliferation * sig[i] - p.apoptosis - p.alpha * uc[i])
                                * p_next[i]
                                - p.consumption * dh * sig[i] * r_coupled[i]
                        }
                        // only at c = N, where p and r_adj vanish
                        None => T::zero(),
                    };
                    p_next[i]
                        + dt * (a * (data.potential.psi2(s) - stab) * lap_p[i]
                            + coupling
                            + src.values()[i])
                })
                .collect();
            let p_new = solve_biharmonic(data, dt, &rhs_p, p_next)?;
            check_finite(&p_new, "adjoint phase variable")?;

            let r_new = match r_cont {
                Some(r) => r,
                None => {
                    let h = h_of(base.phi[j].values());
                    let rhs: Vec<T> = (0..n)
                        .map(|i| r_next[i] + dt * p.proliferation * h[i] * p_new[i])
                        .collect();
                    solve_reaction_diffusion(data, &h, dt, &rhs, r_next)?
                }
            };
            check_finite(&r_new, "adjoint nutrient")?;
            Ok((p_new, r_new))
        };
        let (p_new, r_new) = step().map_err(|e| e.at_step(j))?;
        ps[j] = p_new;
        rs[j] = r_new;
    }

    let to_fields = |v: Vec<Vec<T>>| -> Vec<ScalarField<T>> {
        v.into_iter().map(|x| ScalarField::from_raw(grid, x)).collect()
    };
    let p_fields = to_fields(ps);
    let q = p_fields.iter().map(laplacian_neumann).collect();
    Ok(AdjointTrajectory {
        timegrid: tg,
        tau_index,
        p: p_fields,
        q,
        r_adj: to_fields(rs),
    })
}
