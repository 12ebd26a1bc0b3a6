//! The verification suite behind `verify` and `grad-check`.
//!
//! Checks run in parallel on the rayon pool. Each check is sequential inside, so the
//! report is the same for any thread count.

use chemodose::config::{Problem, RunConfig};
use chemodose::objective::{dtau_j, Target};
use chemodose::optimizer::TauMode;
use chemodose::state::{residual_report, solve_state};
use chemodose::verification::{
    check_duality, check_dtau_fd, check_gradient_fd, check_sigma_bounds, check_taylor_slope,
    random_admissible, random_direction, reduced_gradient, CheckRecord, GradientFdReport, VerificationReport,
};
use chemodose::{Control, Grid, ObjectiveSpec, ProblemData, Result, TimeGrid};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::Sabotage;

pub const SIGMA_BOUND_TOL: f64 = 1e-8;
pub const MASS_TOL: f64 = 1e-9;
pub const ENERGY_TOL: f64 = 1e-10;
pub const TAYLOR_TOL: f64 = 0.2;
pub const DUALITY_TOL: f64 = 1e-2;
pub const DUALITY_SHRINK: f64 = 1.7;
pub const GRADIENT_TOL: f64 = 1e-3;
pub const GRADIENT_SLOPE_TOL: f64 = 0.3;

pub const TAYLOR_EPS: [f64; 4] = [1e-1, 5e-2, 2.5e-2, 1.25e-2];
pub const FD_EPS: [f64; 4] = [4e-2, 2e-2, 1e-2, 5e-3];
pub const DEGENERATE: f64 = 1e-6;
const MAX_DRAWS: usize = 20;

type Task<'a> = Box<dyn Fn() -> Result<Vec<CheckRecord>> + Send + Sync + 'a>;

/// Smooth base control and direction, resampled on any grid.
pub fn smooth_pair(grid: Grid, tg: TimeGrid) -> (Control, Control) {
    let l = grid.lengths()[0];
    let t_end = tg.t_end();
    let u = Control::from_fn(grid, tg, move |x, t| 0.4 + 0.2 * (3.0 * x[0] / l + 2.0 * t / t_end).sin());
    let w = Control::from_fn(grid, tg, move |x, t| {
        let (x, t) = (x[0] / l, t / t_end);
        (5.0 * x).cos() * (1.0 + t) + 0.3 * (7.0 * x * t).sin()
    });
    (u, w)
}

/// τ node for checks that need one: the pinned node, or the configured fraction of the
/// horizon when τ is scanned.
pub fn check_tau(cfg: &RunConfig, p: &Problem) -> usize {
    match p.optimizer.tau_mode {
        TauMode::Fixed(k) => k,
        TauMode::Scan => {
            let n = p.timegrid.n_steps();
            ((cfg.verify.duality_tau * n as f64).round() as usize).clamp(1, n)
        }
    }
}

fn rng(cfg: &RunConfig, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(cfg.seed);
    r.set_stream(stream);
    r
}

fn source_free(data: &ProblemData) -> ProblemData {
    let mut d = data.clone();
    d.params.proliferation = 0.0;
    d.params.apoptosis = 0.0;
    d.params.alpha = 0.0;
    d
}

fn has_series_target(obj: &ObjectiveSpec) -> bool {
    matches!(obj.phi_q, Target::Series(_)) || matches!(obj.phi_omega, Target::Series(_))
}

/// Random directions, skipping any with `|<g, w>| < DEGENERATE * |g| |w|`. Such a
/// direction (for instance one odd about the centre of a symmetric tumour) has a
/// vanishing derivative and no meaningful relative error.
pub fn fd_directions(cfg: &RunConfig, p: &Problem, tau: usize) -> Result<Vec<Control>> {
    let tg = p.timegrid;
    let grid = *p.data.grid();
    let g = reduced_gradient(&p.data, &p.init_u, &p.objective, tau, false)?;
    let gn = g.inner(&g)?.sqrt();
    let mut r = rng(cfg, 3);
    let mut dirs = Vec::new();
    for _ in 0..MAX_DRAWS * cfg.verify.directions.max(1) {
        if dirs.len() == cfg.verify.directions {
            break;
        }
        let w = random_direction(grid, tg, &mut r);
        let wn = w.inner(&w)?.sqrt();
        if g.inner(&w)?.abs() >= DEGENERATE * gn * wn {
            dirs.push(w);
        }
    }
    Ok(dirs)
}

/// FD table plus its pass/fail records.
pub fn gradient_check(cfg: &RunConfig, p: &Problem, sabotage: bool) -> Result<(GradientFdReport, VerificationReport)> {
    let tau = check_tau(cfg, p);
    let dirs = fd_directions(cfg, p, tau)?;
    let table = check_gradient_fd(&p.data, &p.init_u, &p.objective, tau, &dirs, &FD_EPS, sabotage)?;
    let mut report = VerificationReport::default();
    let note = format!("tau_index={tau} directions={}", dirs.len());
    report.push(CheckRecord::at_least(
        "gradient_fd_directions",
        dirs.len() as f64,
        cfg.verify.directions as f64,
        "nondegenerate directions drawn",
    ));
    report.push(CheckRecord::at_most("gradient_fd_best", table.worst_best_error(), GRADIENT_TOL, &note));
    let slope = table
        .rows
        .iter()
        .map(|row| row.slope.unwrap_or(f64::NAN))
        .fold(2.0, |acc: f64, s| if (s - 2.0).abs() > (acc - 2.0).abs() || s.is_nan() { s } else { acc });
    report.push(CheckRecord::near("gradient_fd_slope", slope, 2.0, GRADIENT_SLOPE_TOL, &note));
    Ok((table, report))
}

pub fn run_suite(cfg: &RunConfig, p: &Problem, sabotage: Option<Sabotage>) -> Result<VerificationReport> {
    let tg = p.timegrid;
    let grid = *p.data.grid();
    let data = &p.data;
    let obj = &p.objective;

    let mut tasks: Vec<Task> = Vec::new();
    tasks.push(Box::new(move || {
        let mut r = rng(cfg, 1);
        let mut worst = 0.0f64;
        for _ in 0..5 {
            let u = random_admissible(grid, tg, &mut r);
            worst = worst.max(check_sigma_bounds(&solve_state(data, &u, &tg)?).violation());
        }
        Ok(vec![CheckRecord::at_most("sigma_bounds", worst, SIGMA_BOUND_TOL, "5 random admissible controls")])
    }));
    tasks.push(Box::new(move || {
        let traj = solve_state(data, &p.init_u, &tg)?;
        let rep = residual_report(&traj, data, &p.init_u)?;
        Ok(vec![
            CheckRecord::at_most("mass_phi_residual", rep.max_mass_phi(), MASS_TOL, "initial control"),
            CheckRecord::at_most("mass_sigma_residual", rep.max_mass_sigma(), MASS_TOL, "initial control"),
        ])
    }));
    tasks.push(Box::new(move || {
        let d = source_free(data);
        let u = Control::zeros(grid, tg);
        let rep = residual_report(&solve_state(&d, &u, &tg)?, &d, &u)?;
        Ok(vec![CheckRecord::at_most(
            "energy_increment",
            rep.max_energy_increment(),
            ENERGY_TOL,
            "P = Acal = alpha = 0",
        )])
    }));
    tasks.push(Box::new(move || {
        let mut r = rng(cfg, 2);
        let w = random_direction(grid, tg, &mut r);
        let sweep = check_taylor_slope(data, &p.init_u, &w, &TAYLOR_EPS)?;
        Ok(vec![CheckRecord::near(
            "taylor_slope",
            sweep.slope_theta.unwrap_or(f64::NAN),
            2.0,
            TAYLOR_TOL,
            &format!("xi slope {:?}", sweep.slope_xi.unwrap_or(f64::NAN)),
        )])
    }));
    tasks.push(Box::new(move || {
        let sab = sabotage == Some(Sabotage::Duality);
        let tau_frac = cfg.verify.duality_tau;
        let node = |tg: &TimeGrid| ((tau_frac * tg.n_steps() as f64).round() as usize).clamp(1, tg.n_steps());
        let (u, w) = smooth_pair(grid, tg);
        let d1 = check_duality(data, &u, &w, obj, node(&tg), sab)?;
        let note = if sab { "sabotaged" } else { "" };
        let mut out = vec![CheckRecord::at_most("duality", d1.mismatch, DUALITY_TOL, note)];
        if !has_series_target(obj) {
            let fine = tg.refined();
            let (u, w) = smooth_pair(grid, fine);
            let d2 = check_duality(data, &u, &w, obj, node(&fine), sab)?;
            out.push(CheckRecord::at_least(
                "duality_shrink",
                d1.mismatch / d2.mismatch,
                DUALITY_SHRINK,
                "mismatch ratio under dt -> dt/2",
            ));
        }
        Ok(out)
    }));
    tasks.push(Box::new(move || {
        let (_, rep) = gradient_check(cfg, p, sabotage == Some(Sabotage::Gradient))?;
        Ok(rep.checks)
    }));
    tasks.push(Box::new(move || {
        let traj = solve_state(data, &p.init_u, &tg)?;
        let rows = check_dtau_fd(&traj, &p.init_u, obj)?;
        let worst = rows.iter().map(|r| r.rel_error).fold(0.0, f64::max);
        let mut off = obj.clone();
        off.beta_q = 0.0;
        off.beta_omega = 0.0;
        off.beta_s = 0.0;
        off.include_btau_term = false;
        let k = tg.n_steps() / 2;
        let exact = (dtau_j(&traj, &p.init_u, k, &off)? - off.beta_t).abs();
        Ok(vec![
            CheckRecord::at_most("dtau_fd", worst, 5.0 * tg.dt(), &format!("{} interior nodes", rows.len())),
            CheckRecord::at_most("dtau_tracking_off", exact, 0.0, "equals beta_T"),
        ])
    }));

    let results: Vec<Vec<CheckRecord>> = tasks.par_iter().map(|t| t()).collect::<Result<_>>()?;
    let mut report = VerificationReport::default();
    for c in results.into_iter().flatten() {
        report.push(c);
    }
    Ok(report)
}
