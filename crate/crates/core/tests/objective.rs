use chemodose::adjoint::{solve_adjoint, AdjointTrajectory};
use chemodose::control::TimeGrid;
use chemodose::field::ScalarField;
use chemodose::objective::{
    dtau_j, eval_jr, eval_jr_all_taus, fonc_residuals, grad_u, objective_terms, stationarity, FoncTolerances,
    TauCase, Target,
};
use chemodose::presets::{equilibrium_data, reference_data, reference_objective};
use chemodose::state::{solve_state, StateTrajectory};
use chemodose::verification::{check_dtau_fd, random_admissible};
use chemodose::{Control, Grid, ObjectiveSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// J_r by the midpoint rule on each time interval. The state is known only at nodes, so
/// an integrand at an interval midpoint is the mean of its endpoint values; the dose is
/// piecewise constant and read from the interval's left frame. Cell sums are written out
/// directly rather than through the library's quadrature helpers.
fn midpoint_oracle(traj: &StateTrajectory<f64>, u: &Control, tau: usize, obj: &ObjectiveSpec) -> f64 {
    let tg = traj.timegrid;
    let dt = tg.dt();
    let vol = traj.phi[0].grid().cell_volume();
    let m = (obj.r_relax / dt).round() as isize;
    let phi_at = |j: isize| &traj.phi[if j < 0 { 0 } else { j as usize }];
    let target = |t: &Target<f64>, j: isize| -> Vec<f64> {
        match t {
            Target::Constant(f) => f.values().to_vec(),
            Target::Series(s) => s[j.clamp(0, s.len() as isize - 1) as usize].values().to_vec(),
        }
    };
    let sq = |j: isize, t: &Target<f64>| -> f64 {
        let tv = target(t, j);
        phi_at(j).values().iter().zip(&tv).map(|(p, q)| (p - q) * (p - q) * vol).sum()
    };
    let size = |j: isize| -> f64 { phi_at(j).values().iter().map(|p| (1.0 + p) * vol).sum() };
    let mid = |f: &dyn Fn(isize) -> f64, lo: isize, hi: isize| -> f64 {
        let mut s = 0.0;
        for j in lo..hi {
            s += dt * 0.5 * (f(j) + f(j + 1));
        }
        s
    };
    let k = tau as isize;
    let tracking = 0.5 * obj.beta_q * mid(&|j| sq(j, &obj.phi_q), 0, k);
    let terminal = obj.beta_omega / (2.0 * obj.r_relax) * mid(&|j| sq(j, &obj.phi_omega), k - m, k);
    let size_term = obj.beta_s / (2.0 * obj.r_relax) * mid(&size, k - m, k);
    let mut dose = 0.0;
    for j in 0..tg.n_steps() {
        dose += dt * u.frame(j).values().iter().map(|v| v * v * vol).sum::<f64>();
    }
    tracking + terminal + size_term + 0.5 * obj.beta_u * dose + obj.beta_t * tau as f64 * dt
}

fn run(seed: u64) -> (Grid, TimeGrid<f64>, chemodose::ProblemData, Control, StateTrajectory<f64>) {
    let g = Grid::new_1d(24, 1.0).unwrap();
    let tg = TimeGrid::new(0.4, 40).unwrap();
    let data = reference_data(g).unwrap();
    let u = random_admissible(g, tg, &mut ChaCha8Rng::seed_from_u64(seed));
    let traj = solve_state(&data, &u, &tg).unwrap();
    (g, tg, data, u, traj)
}

fn tracking_off(obj: &ObjectiveSpec) -> ObjectiveSpec {
    ObjectiveSpec {
        beta_q: 0.0,
        beta_omega: 0.0,
        beta_s: 0.0,
        ..obj.clone()
    }
}

#[test]
fn pure_time_penalty() {
    let (g, tg, _, _, traj) = run(1);
    let obj = ObjectiveSpec {
        beta_t: 1.0,
        ..tracking_off(&reference_objective(g))
    };
    // the dose term vanishes with u ≡ 0
    let j = eval_jr(&traj, &Control::zeros(g, tg), 20, &obj).unwrap();
    assert!((j - 0.2).abs() < 1e-15);
    let tg = TimeGrid::new(1.0, 100).unwrap();
    let data = equilibrium_data(g).unwrap();
    let traj = solve_state(&data, &Control::zeros(g, tg), &tg).unwrap();
    assert!((eval_jr(&traj, &Control::zeros(g, tg), 50, &obj).unwrap() - 0.5).abs() < 1e-15);
}

#[test]
fn vanishing_residuals_leave_time_cost() {
    let g = Grid::new_1d(16, 2.0).unwrap();
    let tg = TimeGrid::new(1.0, 100).unwrap();
    let data = equilibrium_data(g).unwrap();
    let u = Control::zeros(g, tg);
    let traj = solve_state(&data, &u, &tg).unwrap();
    let obj = reference_objective(g);
    for k in [0, 7, 33, 100] {
        let j = eval_jr(&traj, &u, k, &obj).unwrap();
        assert!((j - obj.beta_t * tg.time(k)).abs() < 1e-13, "k {k}: {j}");
    }
}

#[test]
fn matches_midpoint_oracle() {
    let mut r = ChaCha8Rng::seed_from_u64(17);
    for seed in 0..5 {
        let (g, tg, _, u, traj) = run(seed);
        let mut obj = reference_objective(g);
        obj.beta_q = r.random_range(0.0..2.0);
        obj.beta_omega = r.random_range(0.0..2.0);
        obj.beta_s = r.random_range(0.0..2.0);
        obj.beta_u = r.random_range(0.01..1.0);
        obj.phi_q = Target::Constant(ScalarField::from_fn(g, |x| (4.0 * x[0]).sin()));
        obj.phi_omega = Target::Series(
            (0..tg.n_nodes())
                .map(|k| ScalarField::from_fn(g, |x| x[0] * tg.time(k) - 0.5))
                .collect(),
        );
        for tau in [0, 1, 3, 4, 5, 21, 40] {
            let want = midpoint_oracle(&traj, &u, tau, &obj);
            let got = eval_jr(&traj, &u, tau, &obj).unwrap();
            assert!((got - want).abs() <= 1e-10 * want.abs(), "tau {tau}: {got} vs {want}");
        }
    }
}

#[test]
fn terms_sum_and_scan_agree() {
    let (g, _, _, u, traj) = run(2);
    let obj = reference_objective(g);
    let all = eval_jr_all_taus(&traj, &u, &obj).unwrap();
    for (k, &j) in all.iter().enumerate() {
        assert_eq!(j, objective_terms(&traj, &u, k, &obj).unwrap().total());
        assert_eq!(j, eval_jr(&traj, &u, k, &obj).unwrap());
    }
    assert!(eval_jr(&traj, &u, 41, &obj).is_err());
}

#[test]
fn gradient_without_tracking_is_dose_penalty() {
    let (g, tg, data, u, traj) = run(3);
    let obj = tracking_off(&reference_objective(g));
    let adj = solve_adjoint(&traj, &data, &u, &obj, 30).unwrap();
    let gr = grad_u(&adj, &u, &data, &traj, &obj).unwrap();
    let want = u.map(|v| obj.beta_u * v);
    for k in 0..tg.n_nodes() {
        assert_eq!(gr.frame(k), want.frame(k));
    }
}

#[test]
fn healthy_tissue_blocks_the_adjoint() {
    let (g, tg, data, u, traj) = run(4);
    let obj = reference_objective(g);
    let adj = solve_adjoint(&traj, &data, &u, &obj, 40).unwrap();
    assert!(adj.p[0].norm_l2() > 0.0);
    let healthy = equilibrium_data(g).unwrap();
    let flat = solve_state(&healthy, &Control::zeros(g, tg), &tg).unwrap();
    let gr = grad_u(&adj, &u, &data, &flat, &obj).unwrap();
    let want = u.map(|v| obj.beta_u * v);
    for k in 0..tg.n_nodes() {
        assert_eq!(gr.frame(k), want.frame(k));
    }
}

#[test]
fn gradient_matches_central_differences() {
    let (g, tg, data, u, traj) = run(5);
    let obj = reference_objective(g);
    let tau = 25;
    let adj = solve_adjoint(&traj, &data, &u, &obj, tau).unwrap();
    let gr = grad_u(&adj, &u, &data, &traj, &obj).unwrap();
    let w = Control::from_fn(g, tg, |x, t| (3.0 * x[0]).cos() * (1.0 + t));
    let dd = gr.inner(&w).unwrap();
    let eps = 1e-4;
    let j = |c: f64| {
        let v = u.lincomb(1.0, &w, c).unwrap();
        eval_jr(&solve_state(&data, &v, &tg).unwrap(), &v, tau, &obj).unwrap()
    };
    let fd = (j(eps) - j(-eps)) / (2.0 * eps);
    assert!((fd - dd).abs() <= 1e-3 * dd.abs(), "{fd} vs {dd}");
}

#[test]
fn gradient_at_tau_zero_is_dose_penalty() {
    let (g, tg, data, u, traj) = run(6);
    let obj = reference_objective(g);
    let adj = AdjointTrajectory::vanishing(tg, g);
    let gr = grad_u(&adj, &u, &data, &traj, &obj).unwrap();
    assert_eq!(gr.frame(3), &u.frame(3).map(|v| obj.beta_u * v));
}

#[test]
fn dtau_examples() {
    let g = Grid::new_1d(16, 1.0).unwrap();
    let tg = TimeGrid::new(1.0, 100).unwrap();
    let data = equilibrium_data(g).unwrap();
    let u = Control::constant(g, tg, 0.6);
    let flat = solve_state(&data, &u, &tg).unwrap();
    let obj = reference_objective(g);
    for k in [0, 3, 50, 100] {
        assert_eq!(dtau_j(&flat, &u, k, &obj).unwrap(), obj.beta_t);
    }
    let (g, _, _, u, traj) = run(7);
    let off = tracking_off(&reference_objective(g));
    for k in 0..=40 {
        assert_eq!(dtau_j(&traj, &u, k, &off).unwrap(), off.beta_t);
    }
    let with = ObjectiveSpec {
        include_btau_term: true,
        ..off.clone()
    };
    let f = u.frame(10);
    let extra = 0.5 * with.beta_u * f.values().iter().map(|v| v * v).sum::<f64>() * g.cell_volume();
    assert!((dtau_j(&traj, &u, 10, &with).unwrap() - off.beta_t - extra).abs() < 1e-15);
}

#[test]
fn dtau_matches_node_differences() {
    let g = Grid::new_1d(64, 1.0).unwrap();
    let tg = TimeGrid::new(1.0, 200).unwrap();
    let data = reference_data(g).unwrap();
    let u = Control::from_fn(g, tg, |x, t| 0.4 + 0.2 * (3.0 * x[0] + 2.0 * t).sin());
    let traj = solve_state(&data, &u, &tg).unwrap();
    let rows = check_dtau_fd(&traj, &u, &reference_objective(g)).unwrap();
    assert!(!rows.is_empty());
    for r in rows {
        assert!(r.rel_error <= 5.0 * tg.dt(), "{r:?}");
    }
}

#[test]
fn fonc_examples() {
    let (g, tg, _, _, traj) = run(8);
    let obj = tracking_off(&reference_objective(g));
    let tol = FoncTolerances {
        stationarity: 1e-8,
        tau: 1e-3,
    };
    let zero = Control::zeros(g, tg);
    let pos = Control::from_fn(g, tg, |x, _| 0.1 + x[0]);
    let rep = fonc_residuals(&zero, &pos, &traj, 0, &obj, tol).unwrap();
    assert_eq!(rep.stationarity_u, 0.0);
    assert_eq!(rep.tau_case, TauCase::LeftBoundary);
    assert!(rep.satisfied());
    // the clamped pointwise minimizer of a quadratic is a fixed point
    let v = Control::from_fn(g, tg, |x, t| 1.5 * (5.0 * x[0] + t).sin());
    let u = v.map(|s| s.clamp(0.0, 1.0));
    let gr = u.lincomb(1.0, &v, -1.0).unwrap();
    assert!(stationarity(&u, &gr).unwrap() < 1e-15);
    // β_T > tol: interior and right boundary fail, left boundary holds
    let rep = fonc_residuals(&zero, &pos, &traj, 20, &obj, tol).unwrap();
    assert_eq!(rep.tau_case, TauCase::Interior);
    assert!(!rep.tau_ok);
    let rep = fonc_residuals(&zero, &pos, &traj, 40, &obj, tol).unwrap();
    assert_eq!(rep.tau_case, TauCase::RightBoundary);
    assert!(!rep.tau_ok);
    let rep = fonc_residuals(&pos, &pos, &traj, 0, &obj, tol).unwrap();
    assert!(rep.stationarity_u > 0.0 && !rep.stationarity_ok);
}

#[test]
fn invalid_specs_are_rejected() {
    let g = Grid::new_1d(8, 1.0).unwrap();
    let base = reference_objective(g);
    for bad in [
        ObjectiveSpec { beta_u: 0.0, ..base.clone() },
        ObjectiveSpec { beta_q: -1.0, ..base.clone() },
        ObjectiveSpec { r_relax: 0.0, ..base.clone() },
        ObjectiveSpec { beta_t: f64::NAN, ..base.clone() },
    ] {
        assert!(bad.validate().is_err());
    }
    let tg = TimeGrid::new(1.0, 100).unwrap();
    let odd = ObjectiveSpec { r_relax: 0.015, ..base };
    assert!(odd.window_steps(&tg).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn objective_is_nonnegative_on_admissible_runs(seed in any::<u64>(), tau in 0usize..=40) {
        let (g, _, _, u, traj) = run(seed);
        let j = eval_jr(&traj, &u, tau, &reference_objective(g)).unwrap();
        prop_assert!(j >= 0.0);
    }

    #[test]
    fn oracle_agreement_random_weights(seed in any::<u64>(), bq in 0.0..3.0f64, bo in 0.0..3.0f64, bs in 0.0..3.0f64, tau in 0usize..=40) {
        let (g, _, _, u, traj) = run(seed);
        let obj = ObjectiveSpec { beta_q: bq, beta_omega: bo, beta_s: bs, ..reference_objective(g) };
        let want = midpoint_oracle(&traj, &u, tau, &obj);
        let got = eval_jr(&traj, &u, tau, &obj).unwrap();
        prop_assert!((got - want).abs() <= 1e-10 * want.abs().max(1e-300));
    }
}
