use chemodose::control::TimeGrid;
use chemodose::presets::reference_data;
use chemodose::sensitivity::{solve_linearized, taylor_remainder, TaylorProbe};
use chemodose::state::solve_state;
use chemodose::verification::{check_taylor_slope, random_admissible, random_direction};
use chemodose::{Control, Grid};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn setup() -> (Grid, TimeGrid<f64>, chemodose::ProblemData, Control) {
    let g = Grid::new_1d(48, 1.0).unwrap();
    let tg = TimeGrid::new(0.5, 50).unwrap();
    let data = reference_data(g).unwrap();
    let u = random_admissible(g, tg, &mut ChaCha8Rng::seed_from_u64(21));
    (g, tg, data, u)
}

#[test]
fn zero_step_has_zero_remainder() {
    let (g, tg, data, u) = setup();
    let w = random_direction(g, tg, &mut ChaCha8Rng::seed_from_u64(1));
    let r = taylor_remainder(&data, &u, &w, 0.0).unwrap();
    assert_eq!((r.theta, r.xi), (0.0, 0.0));
}

#[test]
fn zero_direction_gives_zero_tangent() {
    let (g, tg, data, u) = setup();
    let base = solve_state(&data, &u, &tg).unwrap();
    let lin = solve_linearized(&base, &data, &u, &Control::zeros(g, tg)).unwrap();
    for k in 0..tg.n_nodes() {
        assert!(lin.phi[k].values().iter().all(|&v| v == 0.0));
        assert!(lin.sigma[k].values().iter().all(|&v| v == 0.0));
        assert!(lin.xi[k].values().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn tangent_is_linear_in_direction() {
    let (g, tg, data, u) = setup();
    let mut r = ChaCha8Rng::seed_from_u64(2);
    let w1 = random_direction(g, tg, &mut r);
    let w2 = random_direction(g, tg, &mut r);
    let base = solve_state(&data, &u, &tg).unwrap();
    let l1 = solve_linearized(&base, &data, &u, &w1).unwrap();
    let l2 = solve_linearized(&base, &data, &u, &w2).unwrap();
    let l12 = solve_linearized(&base, &data, &u, &w1.lincomb(2.0, &w2, -3.0).unwrap()).unwrap();
    let scale = l1.phi[tg.n_steps()].norm_l2() + l2.phi[tg.n_steps()].norm_l2();
    for k in 0..tg.n_nodes() {
        for i in 0..g.cell_count() {
            let want = 2.0 * l1.phi[k].values()[i] - 3.0 * l2.phi[k].values()[i];
            assert!((l12.phi[k].values()[i] - want).abs() <= 1e-9 * scale);
        }
    }
}

#[test]
fn remainder_decays_quadratically() {
    let (g, tg, data, u) = setup();
    let mut r = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..3 {
        let w = random_direction(g, tg, &mut r);
        let probe = TaylorProbe::new(&data, &u, &w).unwrap();
        for eps in [1e-1, 5e-2, 2.5e-2] {
            let a = probe.remainder(eps).unwrap();
            let b = probe.remainder(eps / 2.0).unwrap();
            let ratio = a.theta / b.theta;
            assert!((3.5..=4.5).contains(&ratio), "theta ratio {ratio} at {eps}");
            assert!(b.theta <= 0.3 * a.theta && b.xi <= 0.3 * a.xi);
        }
    }
}

#[test]
fn remainder_slope_is_two() {
    let (g, tg, data, u) = setup();
    let w = random_direction(g, tg, &mut ChaCha8Rng::seed_from_u64(4));
    let s = check_taylor_slope(&data, &u, &w, &[1e-1, 5e-2, 2.5e-2, 1.25e-2]).unwrap();
    assert!((s.slope_theta.unwrap() - 2.0).abs() <= 0.2);
    assert!((s.slope_xi.unwrap() - 2.0).abs() <= 0.2);
}

#[test]
fn tangent_starts_at_zero() {
    let (g, tg, data, u) = setup();
    let w = Control::constant(g, tg, 1.0);
    let base = solve_state(&data, &u, &tg).unwrap();
    let lin = solve_linearized(&base, &data, &u, &w).unwrap();
    assert_eq!(lin.phi.len(), tg.n_nodes());
    assert!(lin.phi[0].values().iter().all(|&v| v == 0.0));
    // more dose kills tumor cells
    let total: f64 = lin.phi[tg.n_steps()].values().iter().sum();
    assert!(total < 0.0);
}
