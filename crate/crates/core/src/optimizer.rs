//! Projected gradient in the dose with an exhaustive node scan in the treatment time.
//!
//! Each outer iteration solves the state once, picks the τ node minimizing J_r on that
//! trajectory, solves the adjoint there and takes one backtracking step in `u` with τ
//! held fixed. The scan can only lower J, so the recorded history is non-increasing.

use crate::adjoint::{solve_adjoint, AdjointTrajectory};
use crate::control::{project_admissible, Control, TimeGrid};
use crate::error::{Error, Result};
use crate::model::ProblemData;
use crate::objective::{
    eval_jr, eval_jr_all_taus, fonc_residuals, grad_u, objective_terms, FoncReport,
    FoncTolerances, ObjectiveSpec, ObjectiveTerms,
};
use crate::scalar::Real;
use crate::state::solve_state;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmijoParams<T> {
    /// Largest trial step. `None` uses `1/β_u`, the exact minimizer step of the dose penalty.
    pub initial_step: Option<T>,
    pub shrink: T,
    pub slope: T,
    pub max_shrinks: usize,
}

impl<T: Real> Default for ArmijoParams<T> {
    fn default() -> Self {
        Self {
            initial_step: None,
            shrink: T::lit(0.5),
            slope: T::lit(1e-4),
            max_shrinks: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TauMode {
    /// Argmin over all nodes each iteration.
    Scan,
    /// τ pinned to one node.
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig<T> {
    pub max_outer_iters: usize,
    pub armijo: ArmijoParams<T>,
    pub stationarity_tol: T,
    /// `None` uses [`ObjectiveSpec::default_tau_tolerance`].
    pub tau_tol: Option<T>,
    pub seed: u64,
    pub tau_mode: TauMode,
}

impl<T: Real> Default for OptimizerConfig<T> {
    fn default() -> Self {
        Self {
            max_outer_iters: 500,
            armijo: ArmijoParams::default(),
            stationarity_tol: T::lit(1e-4),
            tau_tol: None,
            seed: 0,
            tau_mode: TauMode::Scan,
        }
    }
}

impl<T: Real> OptimizerConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let a = &self.armijo;
        if !(a.shrink > T::zero() && a.shrink < T::one()) {
            return Err(Error::InvalidParameter("armijo shrink must lie in (0, 1)".into()));
        }
        if !(a.slope > T::zero() && a.slope < T::one()) {
            return Err(Error::InvalidParameter("armijo slope must lie in (0, 1)".into()));
        }
        if matches!(a.initial_step, Some(s) if !(s > T::zero())) {
            return Err(Error::InvalidParameter("initial step must be > 0".into()));
        }
        if !(self.stationarity_tol > T::zero()) {
            return Err(Error::InvalidParameter("stationarity_tol must be > 0".into()));
        }
        if matches!(self.tau_tol, Some(t) if !(t > T::zero())) {
            return Err(Error::InvalidParameter("tau_tol must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    MaxIters,
    Stalled,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::MaxIters => "max-iters",
            Status::Stalled => "stalled",
        }
    }
}

/// One row of `iterations.csv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub j: f64,
    pub stationarity: f64,
    pub tau: f64,
    /// Accepted step; 0 on the final (converged or stalled) row.
    pub step: f64,
    pub terms: ObjectiveTerms<f64>,
    pub dtau: f64,
}

#[derive(Debug, Clone)]
pub struct OptimizationResult<T> {
    pub u_star: Control<T>,
    pub tau_index_star: usize,
    pub j_history: Vec<T>,
    pub fonc: FoncReport<T>,
    pub iterations: usize,
    pub status: Status,
    pub records: Vec<IterationRecord>,
}

#[derive(Debug, Clone)]
pub struct ArmijoOutcome<T> {
    pub u_new: Control<T>,
    pub step: T,
    pub j_new: T,
    pub trials: usize,
}

/// Backtracks from `s_init` until `J(P(u − s g)) ≤ J − (c/s)‖P(u − s g) − u‖²`.
///
/// Without active bounds the test is the usual `c s ‖g‖²`; with them it asks only for
/// the decrease the projected step can deliver. Returns `None` after `max_shrinks`
/// rejections.
pub fn armijo_step<T: Real>(
    u: &Control<T>,
    g: &Control<T>,
    j_current: T,
    eval: &mut dyn FnMut(&Control<T>) -> Result<T>,
    params: &ArmijoParams<T>,
    s_init: T,
) -> Result<Option<ArmijoOutcome<T>>> {
    let mut s = s_init;
    for trial in 0..=params.max_shrinks {
        let u_new = project_admissible(&u.lincomb(T::one(), g, -s)?);
        let d = u_new.lincomb(T::one(), u, -T::one())?;
        let moved = d.inner(&d)?;
        let j_new = eval(&u_new)?;
        if j_new <= j_current - params.slope / s * moved {
            return Ok(Some(ArmijoOutcome {
                u_new,
                step: s,
                j_new,
                trials: trial + 1,
            }));
        }
        s *= params.shrink;
    }
    Ok(None)
}

fn argmin_first<T: Real>(values: &[T]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = k;
        }
    }
    best
}

pub fn optimize<T: Real>(
    data: &ProblemData<T>,
    obj: &ObjectiveSpec<T>,
    timegrid: &TimeGrid<T>,
    init_u: &Control<T>,
    cfg: &OptimizerConfig<T>,
) -> Result<OptimizationResult<T>> {
    cfg.validate()?;
    obj.validate()?;
    obj.window_steps(timegrid)?;
    if !init_u.is_admissible() {
        return Err(Error::InvalidParameter("initial control must lie in [0, 1]".into()));
    }
    if let TauMode::Fixed(k) = cfg.tau_mode {
        if k > timegrid.n_steps() {
            return Err(Error::TauOutOfRange {
                index: k,
                n_steps: timegrid.n_steps(),
            });
        }
    }
    let tol = FoncTolerances {
        stationarity: cfg.stationarity_tol,
        tau: cfg.tau_tol.unwrap_or_else(|| obj.default_tau_tolerance()),
    };
    let s_max = cfg.armijo.initial_step.unwrap_or_else(|| obj.beta_u.recip());

    let mut u = init_u.clone();
    let mut j_history: Vec<T> = Vec::new();
    let mut records = Vec::new();
    let mut prev: Option<(Control<T>, Control<T>)> = None;
    let mut last_step = s_max;

    let fail = |iteration: usize, hist: &[T], e: Error| Error::Optimizer {
        iteration,
        history: hist.iter().map(|v| v.to_f64_lossy()).collect(),
        source: Box::new(e),
    };

    let mut iter = 0;
    loop {
        let outer = || -> Result<_> {
            let traj = solve_state(data, &u, timegrid)?;
            let (k, j) = match cfg.tau_mode {
                TauMode::Scan => {
                    let all = eval_jr_all_taus(&traj, &u, obj)?;
                    let k = argmin_first(&all);
                    (k, all[k])
                }
                TauMode::Fixed(k) => (k, eval_jr(&traj, &u, k, obj)?),
            };
            let adj = if k == 0 {
                AdjointTrajectory::vanishing(*timegrid, *data.grid())
            } else {
                solve_adjoint(&traj, data, &u, obj, k)?
            };
            let g = grad_u(&adj, &u, data, &traj, obj)?;
            let fonc = fonc_residuals(&u, &g, &traj, k, obj, tol)?;
            let terms = objective_terms(&traj, &u, k, obj)?;
            Ok((k, j, g, fonc, terms))
        };
        let (k, j, g, fonc, terms) = outer().map_err(|e| fail(iter, &j_history, e))?;
        j_history.push(j);
        let mut record = IterationRecord {
            iter,
            j: j.to_f64_lossy(),
            stationarity: fonc.stationarity_u.to_f64_lossy(),
            tau: timegrid.time(k).to_f64_lossy(),
            step: 0.0,
            terms: ObjectiveTerms {
                tracking: terms.tracking.to_f64_lossy(),
                terminal: terms.terminal.to_f64_lossy(),
                size: terms.size.to_f64_lossy(),
                dose: terms.dose.to_f64_lossy(),
                time: terms.time.to_f64_lossy(),
            },
            dtau: fonc.dtau_value.to_f64_lossy(),
        };
        let finish = |status, u: Control<T>, records: Vec<IterationRecord>, j_history| {
            Ok(OptimizationResult {
                u_star: u,
                tau_index_star: k,
                j_history,
                fonc,
                iterations: iter,
                status,
                records,
            })
        };
        if fonc.satisfied() {
            records.push(record);
            return finish(Status::Converged, u, records, j_history);
        }
        // A pinned τ cannot move, so u-stationarity is all further steps can reach.
        if matches!(cfg.tau_mode, TauMode::Fixed(_)) && fonc.stationarity_ok {
            records.push(record);
            return finish(Status::Stalled, u, records, j_history);
        }
        if iter >= cfg.max_outer_iters {
            records.push(record);
            return finish(Status::MaxIters, u, records, j_history);
        }

        // Barzilai–Borwein trial step, capped by the configured maximum
        let mut s_init = (last_step * T::lit(2.0)).min(s_max);
        if let Some((u_prev, g_prev)) = &prev {
            let du = u.lincomb(T::one(), u_prev, -T::one())?;
            let dg = g.lincomb(T::one(), g_prev, -T::one())?;
            let num = du.inner(&du)?;
            let den = du.inner(&dg)?;
            if den > T::zero() && num > T::zero() {
                s_init = (num / den).min(s_max);
            }
        }
        let mut eval = |v: &Control<T>| -> Result<T> {
            let traj = solve_state(data, v, timegrid)?;
            eval_jr(&traj, v, k, obj)
        };
        let step = armijo_step(&u, &g, j, &mut eval, &cfg.armijo, s_init)
            .map_err(|e| fail(iter, &j_history, e))?;
        match step {
            None => {
                records.push(record);
                return finish(Status::Stalled, u, records, j_history);
            }
            Some(out) => {
                record.step = out.step.to_f64_lossy();
                records.push(record);
                last_step = out.step;
                prev = Some((u, g));
                u = out.u_new;
            }
        }
        iter += 1;
    }
}
