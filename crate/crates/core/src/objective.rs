//! Relaxed objective, its derivatives in the dose and in the treatment time, and the
//! first-order optimality residuals.
//!
//! Time integrals of node values use the composite trapezoid rule; the dose term is
//! integrated exactly for the piecewise-constant control. The terminal terms average
//! over the window `[τ − r, τ]`, which spans exactly `m = r/dt` intervals, and the
//! phase field is extended by `φ₀` to negative times.

use crate::adjoint::AdjointTrajectory;
use crate::control::{project_admissible, Control, TimeGrid};
use crate::error::{Error, Result};
use crate::field::{inner_raw, integrate, ScalarField};
use crate::model::ProblemData;
use crate::scalar::Real;
use crate::sensitivity::LinearizedTrajectory;
use crate::state::StateTrajectory;

/// A target that is either constant in time or given at every node.
#[derive(Debug, Clone, PartialEq)]
pub enum Target<T> {
    Constant(ScalarField<T>),
    Series(Vec<ScalarField<T>>),
}

impl<T: Real> Target<T> {
    /// Value at node `k`; negative nodes and nodes past the series end clamp.
    pub fn at(&self, k: isize) -> &ScalarField<T> {
        match self {
            Target::Constant(f) => f,
            Target::Series(v) => &v[(k.max(0) as usize).min(v.len() - 1)],
        }
    }

    fn check(&self, grid: &crate::grid::Grid<T>, nodes: usize) -> Result<()> {
        match self {
            Target::Constant(f) => grid.ensure_same(f.grid()),
            Target::Series(v) => {
                if v.len() != nodes {
                    return Err(Error::GridMismatch(format!(
                        "target series has {} frames, expected {nodes}",
                        v.len()
                    )));
                }
                v.iter().try_for_each(|f| grid.ensure_same(f.grid()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveSpec<T> {
    pub beta_q: T,
    pub beta_omega: T,
    pub beta_s: T,
    pub beta_u: T,
    pub beta_t: T,
    /// Width of the terminal averaging window; a whole multiple of `dt`.
    pub r_relax: T,
    pub phi_q: Target<T>,
    pub phi_omega: Target<T>,
    /// Adds `(β_u/2)‖u(τ)‖²` to D_τJ. Off by default: the dose penalty of J_r runs over
    /// the fixed horizon and does not depend on τ.
    pub include_btau_term: bool,
}

impl<T: Real> ObjectiveSpec<T> {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("beta_q", self.beta_q),
            ("beta_omega", self.beta_omega),
            ("beta_s", self.beta_s),
            ("beta_t", self.beta_t),
        ] {
            if !(v >= T::zero()) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be >= 0")));
            }
        }
        for (name, v) in [
            ("beta_u", self.beta_u),
            ("r_relax", self.r_relax),
        ] {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be > 0")));
            }
        }
        Ok(())
    }

    /// Number of steps in the window, validating `r_relax = m·dt`.
    pub fn window_steps(&self, tg: &TimeGrid<T>) -> Result<usize> {
        tg.steps_in(self.r_relax).ok_or_else(|| {
            Error::InvalidParameter(format!(
                "r_relax = {} is not a positive multiple of dt = {}",
                self.r_relax,
                tg.dt()
            ))
        })
    }

    /// Default tolerance on D_τJ in the optimality check, `1e−3 (β_T + 1)`.
    pub fn default_tau_tolerance(&self) -> T {
        T::lit(1e-3) * (self.beta_t + T::one())
    }

    pub(crate) fn check_against(&self, traj: &StateTrajectory<T>) -> Result<usize> {
        self.validate()?;
        let nodes = traj.timegrid.n_nodes();
        self.phi_q.check(traj.grid(), nodes)?;
        self.phi_omega.check(traj.grid(), nodes)?;
        self.window_steps(&traj.timegrid)
    }
}

fn check_tau<T: Real>(tg: &TimeGrid<T>, tau_index: usize) -> Result<()> {
    if tau_index > tg.n_steps() {
        Err(Error::TauOutOfRange {
            index: tau_index,
            n_steps: tg.n_steps(),
        })
    } else {
        Ok(())
    }
}

/// Node-level quantities shared by J_r and D_τJ.
struct NodeTerms<'a, T> {
    traj: &'a StateTrajectory<T>,
    obj: &'a ObjectiveSpec<T>,
}

impl<T: Real> NodeTerms<'_, T> {
    fn phi(&self, j: isize) -> &ScalarField<T> {
        &self.traj.phi[j.max(0) as usize]
    }

    fn dist2(&self, a: &ScalarField<T>, b: &ScalarField<T>) -> T {
        let g = a.grid();
        let d: Vec<T> = a.values().iter().zip(b.values()).map(|(&x, &y)| x - y).collect();
        inner_raw(g, &d, &d)
    }

    /// ‖φ(t_j) − φ_Q(t_j)‖²
    fn tracking(&self, j: isize) -> T {
        self.dist2(self.phi(j), self.obj.phi_q.at(j))
    }

    /// ‖φ(t_j) − φ_Ω(t_j)‖² with φ(t) = φ₀ for t < 0.
    fn terminal(&self, j: isize) -> T {
        self.dist2(self.phi(j), self.obj.phi_omega.at(j))
    }

    /// ∫(1 + φ(t_j))
    fn size(&self, j: isize) -> T {
        integrate(self.phi(j)) + self.phi(j).grid().domain_volume()
    }
}

/// Term-by-term value of J_r.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveTerms<T> {
    pub tracking: T,
    pub terminal: T,
    pub size: T,
    pub dose: T,
    pub time: T,
}

impl<T: Real> ObjectiveTerms<T> {
    pub fn total(&self) -> T {
        self.tracking + self.terminal + self.size + self.dose + self.time
    }
}

pub fn objective_terms<T: Real>(
    traj: &StateTrajectory<T>,
    u: &Control<T>,
    tau_index: usize,
    obj: &ObjectiveSpec<T>,
) -> Result<ObjectiveTerms<T>> {
    let tg = traj.timegrid;
    check_tau(&tg, tau_index)?;
    if u.timegrid() != &tg {
        return Err(Error::GridMismatch("control and trajectory time grids differ".into()));
    }
    let m = obj.check_against(traj)? as isize;
    let dt = tg.dt();
    let half = T::lit(0.5);
    let nt = NodeTerms { traj, obj };
    let kt = tau_index as isize;

    let trap = |f: &dyn Fn(isize) -> T, lo: isize, hi: isize| -> T {
        (lo..hi).map(|j| half * (f(j) + f(j + 1))).sum::<T>() * dt
    };
    let r2 = T::lit(2.0) * obj.r_relax;
    Ok(ObjectiveTerms {
        tracking: half * obj.beta_q * trap(&|j| nt.tracking(j), 0, kt),
        terminal: obj.beta_omega / r2 * trap(&|j| nt.terminal(j), kt - m, kt),
        size: obj.beta_s / r2 * trap(&|j| nt.size(j), kt - m, kt),
        dose: half * obj.beta_u * u.inner(u)?,
        time: obj.beta_t * tg.time(tau_index),
    })
}

/// J_r(φ, u, τ) with τ at node `tau_index`.
pub fn eval_jr<T: Real>(
    traj: &StateTrajectory<T>,
    u: &Control<T>,
    tau_index: usize,
    obj: &ObjectiveSpec<T>,
) -> Result<T> {
    Ok(objective_terms(traj, u, tau_index, obj)?.total())
}

/// J_r at every τ node from one trajectory.
pub fn eval_jr_all_taus<T: Real>(
    traj: &StateTrajectory<T>,
    u: &Control<T>,
    obj: &ObjectiveSpec<T>,
) -> Result<Vec<T>> {
    (0..traj.timegrid.n_nodes())
        .map(|k| eval_jr(traj, u, k, obj))
        .collect()
}

/// D_τJ at node `tau_index`, from the closed-form derivative (not a difference quotient).
pub fn dtau_j<T: Real>(
    traj: &StateTrajectory<T>,
    u: &Control<T>,
    tau_index: usize,
    obj: &ObjectiveSpec<T>,
) -> Result<T> {
    let tg = traj.timegrid;
    check_tau(&tg, tau_index)?;
    let m = obj.check_against(traj)? as isize;
    let nt = NodeTerms { traj, obj };
    let k = tau_index as isize;
    let half = T::lit(0.5);
    let r2 = T::lit(2.0) * obj.r_relax;
    let mut d = obj.beta_t
        + half * obj.beta_q * nt.tracking(k)
        + obj.beta_s / r2 * (integrate(nt.phi(k)) - integrate(nt.phi(k - m)))
        + obj.beta_omega / r2 * (nt.terminal(k) - nt.terminal(k - m));
    if obj.include_btau_term {
        // u is piecewise constant, u(T) is read as the left limit
        let f = u.frame(tau_index.min(tg.n_steps() - 1));
        d += half * obj.beta_u * inner_raw(f.grid(), f.values(), f.values());
    }
    Ok(d)
}

/// Weights of node `k` in the tracking and window parts of the adjoint source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SourceWeights<T> {
    pub tracking: T,
    pub window: T,
}

/// Node indicator: tracking on every node, window on `τ − r < t_k ≤ τ`.
pub(crate) fn indicator_weights<T: Real>(k: usize, tau_index: usize, m: usize) -> SourceWeights<T> {
    let in_window = k <= tau_index && k + m > tau_index;
    SourceWeights {
        tracking: if k <= tau_index { T::one() } else { T::zero() },
        window: if in_window { T::one() } else { T::zero() },
    }
}

/// Trapezoid weights matching [`eval_jr`]'s quadrature, so that
/// `Σ_k dt ⟨S_k, Φ_k⟩` is exactly the derivative of the discrete J_r along Φ.
pub(crate) fn trapezoid_weights<T: Real>(k: usize, tau_index: usize, m: usize) -> SourceWeights<T> {
    let half = T::lit(0.5);
    let w = |lo: isize, hi: isize| -> T {
        let k = k as isize;
        if k < lo.max(0) || k > hi || lo == hi {
            T::zero()
        } else if k == lo || k == hi {
            half
        } else {
            T::one()
        }
    };
    let kt = tau_index as isize;
    SourceWeights {
        tracking: w(0, kt),
        window: w(kt - m as isize, kt),
    }
}

pub(crate) fn weighted_source<T: Real>(
    phi_k: &ScalarField<T>,
    obj: &ObjectiveSpec<T>,
    k: usize,
    weights: SourceWeights<T>,
) -> ScalarField<T> {
    let two = T::lit(2.0);
    let inv2r = (two * obj.r_relax).recip();
    let q = obj.phi_q.at(k as isize).values();
    let om = obj.phi_omega.at(k as isize).values();
    let vals = phi_k
        .values()
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            weights.tracking * obj.beta_q * (p - q[i])
                + weights.window * inv2r * (two * obj.beta_omega * (p - om[i]) + obj.beta_s)
        })
        .collect();
    ScalarField::from_raw(*phi_k.grid(), vals)
}

/// Tracking source of the adjoint phase equation at node `k`:
/// `β_Q(φ − φ_Q) + (1/2r) 𝟙[τ − r < t_k ≤ τ] (2β_Ω(φ − φ_Ω) + β_S)`.
pub fn adjoint_source<T: Real>(
    phi_k: &ScalarField<T>,
    obj: &ObjectiveSpec<T>,
    k: usize,
    tau_index: usize,
    timegrid: &TimeGrid<T>,
) -> Result<ScalarField<T>> {
    let m = obj.window_steps(timegrid)?;
    Ok(weighted_source(phi_k, obj, k, indicator_weights(k, tau_index, m)))
}

/// Derivative of the tracking, terminal and size terms of J_r along a phase-field
/// perturbation Φ, with the same quadrature as [`eval_jr`].
pub fn tracking_derivative<T: Real>(
    traj: &StateTrajectory<T>,
    lin: &LinearizedTrajectory<T>,
    tau_index: usize,
    obj: &ObjectiveSpec<T>,
) -> Result<T> {
    check_tau(&traj.timegrid, tau_index)?;
    let m = obj.check_against(traj)?;
    let dt = traj.timegrid.dt();
    let g = traj.grid();
    Ok((0..=tau_index)
        .map(|k| {
            let s = weighted_source(&traj.phi[k], obj, k, trapezoid_weights(k, tau_index, m));
            inner_raw(g, s.values(), lin.phi[k].values())
        })
        .sum::<T>()
        * dt)
}

/// Reduced gradient in the dose, `β_u u − α h(φ) p` with `p` extended by zero past τ.
pub fn grad_u<T: Real>(
    adj: &AdjointTrajectory<T>,
    u: &Control<T>,
    data: &ProblemData<T>,
    base: &StateTrajectory<T>,
    obj: &ObjectiveSpec<T>,
) -> Result<Control<T>> {
    let tg = base.timegrid;
    if u.timegrid() != &tg || adj.timegrid != tg {
        return Err(Error::GridMismatch("trajectories use different time grids".into()));
    }
    let alpha = data.params.alpha;
    let frames = (0..tg.n_nodes())
        .map(|k| {
            let uk = u.frame(k).values();
            let pk = adj.extended_p(k);
            let phik = base.phi[k].values();
            let vals = (0..uk.len())
                .map(|i| {
                    let hp = match pk {
                        Some(p) => data.interp.hval(phik[i]) * p.values()[i],
                        None => T::zero(),
                    };
                    obj.beta_u * uk[i] - alpha * hp
                })
                .collect();
            ScalarField::from_raw(*u.grid(), vals)
        })
        .collect();
    Control::new(tg, frames)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TauCase {
    LeftBoundary,
    Interior,
    RightBoundary,
}

impl TauCase {
    pub fn as_str(&self) -> &'static str {
        match self {
            TauCase::LeftBoundary => "left-boundary",
            TauCase::Interior => "interior",
            TauCase::RightBoundary => "right-boundary",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoncTolerances<T> {
    pub stationarity: T,
    pub tau: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoncReport<T> {
    /// `‖u − P(u − g)‖_{L²(Q)}`
    pub stationarity_u: T,
    pub dtau_value: T,
    pub tau_case: TauCase,
    pub stationarity_ok: bool,
    pub tau_ok: bool,
}

impl<T: Real> FoncReport<T> {
    pub fn satisfied(&self) -> bool {
        self.stationarity_ok && self.tau_ok
    }
}

/// Projected-gradient stationarity residual `‖u − P(u − g)‖_{L²(Q)}`.
pub fn stationarity<T: Real>(u: &Control<T>, g: &Control<T>) -> Result<T> {
    let step = project_admissible(&u.lincomb(T::one(), g, -T::one())?);
    Ok(u.lincomb(T::one(), &step, -T::one())?.norm())
}

/// Residuals of the variational inequality in `u` and of the three-case condition in τ.
pub fn fonc_residuals<T: Real>(
    u: &Control<T>,
    g: &Control<T>,
    traj: &StateTrajectory<T>,
    tau_index: usize,
    obj: &ObjectiveSpec<T>,
    tol: FoncTolerances<T>,
) -> Result<FoncReport<T>> {
    let stationarity_u = stationarity(u, g)?;
    let dtau_value = dtau_j(traj, u, tau_index, obj)?;
    let tau_case = if tau_index == 0 {
        TauCase::LeftBoundary
    } else if tau_index == traj.n_steps() {
        TauCase::RightBoundary
    } else {
        TauCase::Interior
    };
    let tau_ok = match tau_case {
        TauCase::Interior => dtau_value.abs() <= tol.tau,
        TauCase::LeftBoundary => dtau_value >= -tol.tau,
        TauCase::RightBoundary => dtau_value <= tol.tau,
    };
    Ok(FoncReport {
        stationarity_u,
        dtau_value,
        tau_case,
        stationarity_ok: stationarity_u <= tol.stationarity,
        tau_ok,
    })
}
