//! Executable checks of the identities the discretization must satisfy.
//!
//! Each check returns its raw measurements; [`CheckRecord`] turns a measurement and a
//! tolerance into one line of a [`VerificationReport`].

use std::io::Write;

use rand::Rng;

use crate::adjoint::{solve_adjoint_with, AdjointOptions, AdjointScheme};
use crate::control::{Control, TimeGrid};
use crate::error::{Error, Result};
use crate::field::{inner_raw, ScalarField};
use crate::grid::Grid;
use crate::model::ProblemData;
use crate::objective::{dtau_j, eval_jr, grad_u, tracking_derivative, ObjectiveSpec};
use crate::scalar::Real;
use crate::sensitivity::{solve_linearized, TaylorProbe};
use crate::state::{solve_state, StateTrajectory};

/// Tolerance of the nutrient bound check.
pub const SIGMA_BOUND_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaBounds {
    pub min: f64,
    pub max: f64,
}

impl SigmaBounds {
    pub fn passed(&self) -> bool {
        self.min >= -SIGMA_BOUND_TOL && self.max <= 1.0 + SIGMA_BOUND_TOL
    }

    /// Distance outside `[0, 1]`, zero when inside.
    pub fn violation(&self) -> f64 {
        (-self.min).max(self.max - 1.0).max(0.0)
    }
}

pub fn check_sigma_bounds<T: Real>(traj: &StateTrajectory<T>) -> SigmaBounds {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in &traj.sigma {
        lo = lo.min(s.min().to_f64_lossy());
        hi = hi.max(s.max().to_f64_lossy());
    }
    SigmaBounds { min: lo, max: hi }
}

fn relative_mismatch<T: Real>(a: T, b: T) -> T {
    let scale = a.abs().max(b.abs()).max(T::lit(1e-14));
    (a - b).abs() / scale
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Duality<T> {
    /// Derivative of the tracking terms along the linearized phase field.
    pub lhs: T,
    /// `−α ⟨h(φ) p, w⟩`
    pub rhs: T,
    pub mismatch: T,
}

/// Pairing of the linearized state with the adjoint, using the directly discretized
/// backward equations. Their O(dt) gap is what this check measures.
pub fn check_duality<T: Real>(
    data: &ProblemData<T>,
    u: &Control<T>,
    w: &Control<T>,
    obj: &ObjectiveSpec<T>,
    tau_index: usize,
    sabotage: bool,
) -> Result<Duality<T>> {
    let opts = AdjointOptions {
        scheme: AdjointScheme::Continuous,
        sabotage,
    };
    check_duality_with(data, u, w, obj, tau_index, opts)
}

pub fn check_duality_with<T: Real>(
    data: &ProblemData<T>,
    u: &Control<T>,
    w: &Control<T>,
    obj: &ObjectiveSpec<T>,
    tau_index: usize,
    opts: AdjointOptions,
) -> Result<Duality<T>> {
    let base = solve_state(data, u, u.timegrid())?;
    let lin = solve_linearized(&base, data, u, w)?;
    let lhs = tracking_derivative(&base, &lin, tau_index, obj)?;
    let adj = solve_adjoint_with(&base, data, u, obj, tau_index, opts)?;
    let alpha = data.params.alpha;
    let dt = base.timegrid.dt();
    let grid = base.grid();
    let mut rhs = T::zero();
    for k in 0..tau_index {
        let hp: Vec<T> = base.phi[k]
            .values()
            .iter()
            .zip(adj.p[k].values())
            .map(|(&s, &p)| data.interp.hval(s) * p)
            .collect();
        rhs += dt * inner_raw(grid, &hp, w.frame(k).values());
    }
    rhs = -alpha * rhs;
    Ok(Duality {
        lhs,
        rhs,
        mismatch: relative_mismatch(lhs, rhs),
    })
}

/// Least-squares slope of `log y` against `log x` over the positive pairs.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaylorSweep {
    pub eps: Vec<f64>,
    pub theta: Vec<f64>,
    pub xi: Vec<f64>,
    /// Fitted order of the phase-field remainder.
    pub slope_theta: Option<f64>,
    pub slope_xi: Option<f64>,
}

/// First-order Taylor remainders of the control-to-state map along `w`.
pub fn check_taylor_slope<T: Real>(
    data: &ProblemData<T>,
    u: &Control<T>,
    w: &Control<T>,
    eps: &[T],
) -> Result<TaylorSweep> {
    let probe = TaylorProbe::new(data, u, w)?;
    let mut out = TaylorSweep {
        eps: Vec::new(),
        theta: Vec::new(),
        xi: Vec::new(),
        slope_theta: None,
        slope_xi: None,
    };
    for &e in eps {
        let r = probe.remainder(e)?;
        out.eps.push(e.to_f64_lossy());
        out.theta.push(r.theta.to_f64_lossy());
        out.xi.push(r.xi.to_f64_lossy());
    }
    out.slope_theta = loglog_slope(&out.eps, &out.theta);
    out.slope_xi = loglog_slope(&out.eps, &out.xi);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientFdRow {
    /// `⟨g, w⟩` from the adjoint.
    pub adjoint: f64,
    /// Central differences, one per ε.
    pub fd: Vec<f64>,
    pub rel_error: Vec<f64>,
    pub best: f64,
    pub slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientFdReport {
    pub eps: Vec<f64>,
    pub rows: Vec<GradientFdRow>,
}

impl GradientFdReport {
    pub fn worst_best_error(&self) -> f64 {
        self.rows.iter().map(|r| r.best).fold(0.0, f64::max)
    }
}

/// `∇_u J_r` through the discrete adjoint; the adjoint vanishes at `τ = 0`.
pub fn reduced_gradient<T: Real>(
    data: &ProblemData<T>,
    u: &Control<T>,
    obj: &ObjectiveSpec<T>,
    tau_index: usize,
    sabotage: bool,
) -> Result<Control<T>> {
    let tg = *u.timegrid();
    let base = solve_state(data, u, &tg)?;
    let adj = if tau_index == 0 {
        crate::adjoint::AdjointTrajectory::vanishing(tg, *data.grid())
    } else {
        let opts = AdjointOptions {
            scheme: AdjointScheme::Discrete,
            sabotage,
        };
        solve_adjoint_with(&base, data, u, obj, tau_index, opts)?
    };
    grad_u(&adj, u, data, &base, obj)
}

/// Central differences of `J_r ∘ S` against the adjoint gradient. The perturbed
/// controls are not clamped.
pub fn check_gradient_fd<T: Real>(
    data: &ProblemData<T>,
    u: &Control<T>,
    obj: &ObjectiveSpec<T>,
    tau_index: usize,
    directions: &[Control<T>],
    eps_sweep: &[T],
    sabotage: bool,
) -> Result<GradientFdReport> {
    let tg = *u.timegrid();
    let g = reduced_gradient(data, u, obj, tau_index, sabotage)?;
    let j_at = |v: &Control<T>| -> Result<T> {
        let traj = solve_state(data, v, &tg)?;
        eval_jr(&traj, v, tau_index, obj)
    };
    let mut rows = Vec::new();
    for w in directions {
        let dd = g.inner(w)?;
        let mut fd = Vec::new();
        let mut err = Vec::new();
        for &e in eps_sweep {
            let jp = j_at(&u.lincomb(T::one(), w, e)?)?;
            let jm = j_at(&u.lincomb(T::one(), w, -e)?)?;
            let d = (jp - jm) / (T::lit(2.0) * e);
            fd.push(d.to_f64_lossy());
            err.push(relative_mismatch(d, dd).to_f64_lossy());
        }
        let eps: Vec<f64> = eps_sweep.iter().map(|e| e.to_f64_lossy()).collect();
        rows.push(GradientFdRow {
            adjoint: dd.to_f64_lossy(),
            best: err.iter().copied().fold(f64::INFINITY, f64::min),
            slope: loglog_slope(&eps, &err),
            fd,
            rel_error: err,
        });
    }
    Ok(GradientFdReport {
        eps: eps_sweep.iter().map(|e| e.to_f64_lossy()).collect(),
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtauFdRow {
    pub k: usize,
    pub fd: f64,
    pub analytic: f64,
    pub rel_error: f64,
}

/// Central difference of `J_r` across adjacent τ nodes against [`dtau_j`], on the
/// interior nodes whose window does not reach below `t = 0`.
pub fn check_dtau_fd<T: Real>(
    traj: &StateTrajectory<T>,
    u: &Control<T>,
    obj: &ObjectiveSpec<T>,
) -> Result<Vec<DtauFdRow>> {
    let tg = traj.timegrid;
    let m = obj.window_steps(&tg)?;
    let two_dt = T::lit(2.0) * tg.dt();
    let mut rows = Vec::new();
    for k in (m + 1)..tg.n_steps() {
        let fd = (eval_jr(traj, u, k + 1, obj)? - eval_jr(traj, u, k - 1, obj)?) / two_dt;
        let d = dtau_j(traj, u, k, obj)?;
        rows.push(DtauFdRow {
            k,
            fd: fd.to_f64_lossy(),
            analytic: d.to_f64_lossy(),
            rel_error: relative_mismatch(fd, d).to_f64_lossy(),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuousDependence {
    /// `max_k ‖φ₁ − φ₂‖² + max_k ‖σ₁ − σ₂‖²_{H¹}`
    pub numerator: f64,
    /// `‖u₁ − u₂‖²_{L²(Q)}`
    pub denominator: f64,
}

impl ContinuousDependence {
    /// `None` when the controls coincide.
    pub fn ratio(&self) -> Option<f64> {
        (self.denominator > 0.0).then(|| self.numerator / self.denominator)
    }
}

pub fn check_continuous_dependence<T: Real>(
    data: &ProblemData<T>,
    u1: &Control<T>,
    u2: &Control<T>,
) -> Result<ContinuousDependence> {
    u1.ensure_compatible(u2)?;
    let tg = *u1.timegrid();
    let a = solve_state(data, u1, &tg)?;
    let b = solve_state(data, u2, &tg)?;
    let grid = a.grid();
    let mut phi_max = T::zero();
    let mut sigma_max = T::zero();
    for k in 0..tg.n_nodes() {
        let dp: Vec<T> = diff(&a.phi[k], &b.phi[k]);
        let ds: Vec<T> = diff(&a.sigma[k], &b.sigma[k]);
        phi_max = phi_max.max(inner_raw(grid, &dp, &dp));
        sigma_max = sigma_max.max(inner_raw(grid, &ds, &ds) + grid.gradient_energy(&ds));
    }
    let du = u1.lincomb(T::one(), u2, -T::one())?;
    Ok(ContinuousDependence {
        numerator: (phi_max + sigma_max).to_f64_lossy(),
        denominator: du.inner(&du)?.to_f64_lossy(),
    })
}

fn diff<T: Real>(a: &ScalarField<T>, b: &ScalarField<T>) -> Vec<T> {
    a.values().iter().zip(b.values()).map(|(&x, &y)| x - y).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Refinement {
    /// Halve `dt` at fixed grid.
    Time,
    /// Double the cells per axis at fixed `dt`.
    Space,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfConvergence {
    /// `‖φ_l(T) − φ_{l+1}(T)‖` on the coarser of the two grids.
    pub differences: Vec<f64>,
    pub orders: Vec<f64>,
    /// False when the differences do not decrease monotonically.
    pub conclusive: bool,
}

/// Averages `fine` onto `coarse` when each coarse cell holds `2^dim` fine cells.
pub fn restrict<T: Real>(fine: &ScalarField<T>, coarse: &Grid<T>) -> Result<ScalarField<T>> {
    let fg = fine.grid();
    if fg.dim() != coarse.dim()
        || fg.nx() != 2 * coarse.nx()
        || (fg.dim() == 2 && fg.ny() != 2 * coarse.ny())
    {
        return Err(Error::GridMismatch("fine grid is not a uniform 2x refinement".into()));
    }
    let f = fine.values();
    let nxf = fg.nx();
    let vals = (0..coarse.cell_count())
        .map(|c| {
            let (i, j) = (c % coarse.nx(), c / coarse.nx());
            if coarse.dim() == 1 {
                T::lit(0.5) * (f[2 * i] + f[2 * i + 1])
            } else {
                let r0 = 2 * j * nxf;
                let r1 = (2 * j + 1) * nxf;
                T::lit(0.25) * (f[r0 + 2 * i] + f[r0 + 2 * i + 1] + f[r1 + 2 * i] + f[r1 + 2 * i + 1])
            }
        })
        .collect();
    ScalarField::from_values(*coarse, vals)
}

/// Successive differences of the final phase field under `levels` refinements.
/// `make_data` and `make_u` build the problem on each grid so that initial data and
/// controls are resampled rather than interpolated.
pub fn check_self_convergence<T: Real>(
    make_data: &dyn Fn(Grid<T>) -> Result<ProblemData<T>>,
    make_u: &dyn Fn(Grid<T>, TimeGrid<T>) -> Control<T>,
    grid: Grid<T>,
    timegrid: TimeGrid<T>,
    levels: usize,
    refinement: Refinement,
) -> Result<SelfConvergence> {
    if levels < 3 {
        return Err(Error::InvalidParameter("self-convergence needs at least 3 levels".into()));
    }
    let mut finals: Vec<ScalarField<T>> = Vec::new();
    let (mut g, mut tg) = (grid, timegrid);
    for _ in 0..levels {
        let data = make_data(g)?;
        let u = make_u(g, tg);
        let traj = solve_state(&data, &u, &tg)?;
        finals.push(traj.phi.last().expect("nonempty").clone());
        match refinement {
            Refinement::Time => tg = tg.refined(),
            Refinement::Space => {
                g = if g.dim() == 1 {
                    Grid::new_1d(2 * g.nx(), g.lengths()[0])?
                } else {
                    Grid::new_2d(2 * g.nx(), 2 * g.ny(), g.lengths()[0], g.lengths()[1])?
                }
            }
        }
    }
    let mut differences = Vec::new();
    for l in 0..levels - 1 {
        let (a, b) = (&finals[l], &finals[l + 1]);
        let b = match refinement {
            Refinement::Time => b.clone(),
            Refinement::Space => restrict(b, a.grid())?,
        };
        let d = diff(a, &b);
        differences.push(inner_raw(a.grid(), &d, &d).sqrt().to_f64_lossy());
    }
    let orders: Vec<f64> = differences
        .windows(2)
        .map(|w| if w[1] > 0.0 { (w[0] / w[1]).log2() } else { f64::NAN })
        .collect();
    let conclusive = differences.windows(2).all(|w| w[1] < w[0]);
    Ok(SelfConvergence {
        differences,
        orders,
        conclusive,
    })
}

/// A smooth random direction: a few separable Fourier modes with N(0,1)-ish weights.
pub fn random_direction<T: Real>(grid: Grid<T>, tg: TimeGrid<T>, rng: &mut impl Rng) -> Control<T> {
    let modes: Vec<(f64, [f64; 2], f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.random_range(-1.0..1.0),
                [rng.random_range(0..4) as f64, rng.random_range(0..4) as f64],
                rng.random_range(0..3) as f64,
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let l: Vec<f64> = grid.lengths().iter().map(|v| v.to_f64_lossy()).collect();
    let t_end = tg.t_end().to_f64_lossy();
    let dim = grid.dim();
    Control::from_fn(grid, tg, move |x, t| {
        let x0 = x[0].to_f64_lossy() / l[0];
        let x1 = if dim == 2 { x[1].to_f64_lossy() / l[1] } else { 0.0 };
        let t = t.to_f64_lossy() / t_end;
        let v: f64 = modes
            .iter()
            .map(|(a, k, f, ph)| {
                a * (std::f64::consts::PI * k[0] * x0).cos()
                    * (std::f64::consts::PI * k[1] * x1).cos()
                    * (std::f64::consts::PI * f * t + ph).cos()
            })
            .sum();
        T::lit(v)
    })
}

/// A smooth random control with values in `[0.1, 0.9]`.
pub fn random_admissible<T: Real>(grid: Grid<T>, tg: TimeGrid<T>, rng: &mut impl Rng) -> Control<T> {
    let w = random_direction(grid, tg, rng);
    let scale = w.max().abs().max(w.min().abs()).max(T::lit(1e-12));
    w.map(|v| T::lit(0.5) + T::lit(0.4) * v / scale)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRecord {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub note: String,
}

impl CheckRecord {
    /// Passes when `value ≤ tolerance`.
    pub fn at_most(name: &str, value: f64, tolerance: f64, note: &str) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            passed: value <= tolerance,
            note: note.into(),
        }
    }

    /// Passes when `value ≥ tolerance`.
    pub fn at_least(name: &str, value: f64, tolerance: f64, note: &str) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            passed: value >= tolerance,
            note: note.into(),
        }
    }

    /// Passes when `|value − target| ≤ tolerance`; `value` stays the raw measurement.
    pub fn near(name: &str, value: f64, target: f64, tolerance: f64, note: &str) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            passed: (value - target).abs() <= tolerance,
            note: format!("target {target}; {note}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerificationReport {
    pub checks: Vec<CheckRecord>,
}

impl VerificationReport {
    pub fn push(&mut self, c: CheckRecord) {
        self.checks.push(c);
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["check", "value", "tolerance", "passed", "note"])?;
        for c in &self.checks {
            out.write_record([
                c.name.as_str(),
                &format!("{:e}", c.value),
                &format!("{:e}", c.tolerance),
                if c.passed { "true" } else { "false" },
                c.note.as_str(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}
