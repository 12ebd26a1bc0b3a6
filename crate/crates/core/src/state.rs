//! Forward solve of the coupled Cahn–Hilliard / nutrient system.
//!
//! Each step first advances the nutrient by backward Euler with the
//! interpolant frozen at the old phase field,
//!
//! ```text
//! (I + dt(−Δ + C h(φⁿ) + B)) σⁿ⁺¹ = σⁿ + dt B σ_S,
//! ```
//!
//! then the phase field by a linearly stabilized semi-implicit step
//!
//! ```text
//! φⁿ⁺¹ = φⁿ + dt [Δμⁿ⁺¹ + h(φⁿ)(P σⁿ⁺¹ − A_apop − α uⁿ)]
//! μⁿ⁺¹ = A [Ψ'(φⁿ) + S (φⁿ⁺¹ − φⁿ)] − B Δφⁿ⁺¹
//! ```
//!
//! solved through its Schur complement in φ, `(I − dt A S Δ + dt B Δ²) φⁿ⁺¹ = …`.
//! The nutrient matrix is an M-matrix, so `0 ≤ σ ≤ 1` is preserved up to the
//! linear-solver tolerance.

use crate::control::{Control, TimeGrid};
use crate::error::{Error, Result};
use crate::field::{integrate, laplacian_neumann, ScalarField};
use crate::grid::Grid;
use crate::linsolve::{conjugate_gradient, BiharmonicOp, ReactionDiffusionOp};
use crate::model::ProblemData;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput<T> {
    pub phi: ScalarField<T>,
    pub mu: ScalarField<T>,
    pub sigma: ScalarField<T>,
}

/// Time-indexed `(φ, μ, σ)` with every node stored.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTrajectory<T> {
    pub timegrid: TimeGrid<T>,
    pub phi: Vec<ScalarField<T>>,
    pub mu: Vec<ScalarField<T>>,
    pub sigma: Vec<ScalarField<T>>,
}

impl<T: Real> StateTrajectory<T> {
    pub fn grid(&self) -> &Grid<T> {
        self.phi[0].grid()
    }

    pub fn n_steps(&self) -> usize {
        self.timegrid.n_steps()
    }
}

pub(crate) fn max_iter<T: Real>(data: &ProblemData<T>) -> usize {
    data.scheme.max_iter_factor * data.grid().cell_count()
}

pub(crate) fn check_finite<T: Real>(f: &[T], what: &str) -> Result<()> {
    if f.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence(format!("{what} is not finite")))
    }
}

/// Solves `(I + dt(−Δ + C h + B)) x = rhs`, the nutrient-type operator shared with the
/// tangent and adjoint solves.
pub(crate) fn solve_reaction_diffusion<T: Real>(
    data: &ProblemData<T>,
    h_frozen: &[T],
    dt: T,
    rhs: &[T],
    guess: &[T],
) -> Result<Vec<T>> {
    let p = &data.params;
    let reaction = h_frozen
        .iter()
        .map(|&h| p.consumption * h + p.supply)
        .collect();
    let op = ReactionDiffusionOp::new(data.grid(), dt, reaction);
    let mut x = guess.to_vec();
    conjugate_gradient(&op, rhs, &mut x, data.scheme.solver_tolerance, max_iter(data))?;
    Ok(x)
}

/// Solves `(I − dt A S Δ + dt B Δ²) x = rhs`.
pub(crate) fn solve_biharmonic<T: Real>(
    data: &ProblemData<T>,
    dt: T,
    rhs: &[T],
    guess: &[T],
) -> Result<Vec<T>> {
    let p = &data.params;
    let op = BiharmonicOp::new(
        data.grid(),
        dt * p.potential_scale * data.scheme.stabilization,
        dt * p.gradient_scale,
    );
    let mut x = guess.to_vec();
    conjugate_gradient(&op, rhs, &mut x, data.scheme.solver_tolerance, max_iter(data))?;
    Ok(x)
}

/// Advances `(φⁿ, σⁿ)` by one step under dose `uⁿ`.
pub fn step_state<T: Real>(
    phi_n: &ScalarField<T>,
    sigma_n: &ScalarField<T>,
    u_n: &ScalarField<T>,
    data: &ProblemData<T>,
    dt: T,
) -> Result<StepOutput<T>> {
    let grid = *data.grid();
    grid.ensure_same(phi_n.grid())?;
    grid.ensure_same(sigma_n.grid())?;
    grid.ensure_same(u_n.grid())?;
    if !(dt > T::zero()) {
        return Err(Error::InvalidParameter("dt must be positive".into()));
    }
    let p = &data.params;
    let n = grid.cell_count();
    let phi = phi_n.values();
    let h: Vec<T> = phi.iter().map(|&s| data.interp.hval(s)).collect();

    let rhs_sigma: Vec<T> = sigma_n
        .values()
        .iter()
        .zip(data.sigma_s.values())
        .map(|(&s, &ss)| s + dt * p.supply * ss)
        .collect();
    let sigma = solve_reaction_diffusion(data, &h, dt, &rhs_sigma, sigma_n.values())?;
    check_finite(&sigma, "nutrient")?;

    let a = p.potential_scale;
    let stab = data.scheme.stabilization;
    let explicit: Vec<T> = phi
        .iter()
        .map(|&s| a * (data.potential.psi1(s) - stab * s))
        .collect();
    let mut lap = vec![T::zero(); n];
    grid.apply_laplacian(&explicit, &mut lap);
    let u = u_n.values();
    let rhs_phi: Vec<T> = (0..n)
        .map(|i| {
            let source = h[i] * (p.proliferation * sigma[i] - p.apoptosis - p.alpha * u[i]);
            phi[i] + dt * (lap[i] + source)
        })
        .collect();
    let phi_new = solve_biharmonic(data, dt, &rhs_phi, phi)?;
    check_finite(&phi_new, "phase field")?;

    grid.apply_laplacian(&phi_new, &mut lap);
    let mu: Vec<T> = (0..n)
        .map(|i| {
            a * (data.potential.psi1(phi[i]) + stab * (phi_new[i] - phi[i]))
                - p.gradient_scale * lap[i]
        })
        .collect();
    check_finite(&mu, "chemical potential")?;

    Ok(StepOutput {
        phi: ScalarField::from_raw(grid, phi_new),
        mu: ScalarField::from_raw(grid, mu),
        sigma: ScalarField::from_raw(grid, sigma),
    })
}

/// Chemical potential of a given phase field, `AΨ'(φ) − BΔφ`.
pub fn chemical_potential<T: Real>(phi: &ScalarField<T>, data: &ProblemData<T>) -> ScalarField<T> {
    let lap = laplacian_neumann(phi);
    let p = &data.params;
    phi.zip_map(&lap, |s, l| {
        p.potential_scale * data.potential.psi1(s) - p.gradient_scale * l
    })
    .expect("same grid")
}

/// Runs the full horizon from `(φ₀, σ₀)`, keeping every node.
pub fn solve_state<T: Real>(
    data: &ProblemData<T>,
    u: &Control<T>,
    timegrid: &TimeGrid<T>,
) -> Result<StateTrajectory<T>> {
    if u.timegrid() != timegrid {
        return Err(Error::GridMismatch("control and time grid differ".into()));
    }
    data.grid().ensure_same(u.grid())?;
    let dt = timegrid.dt();
    let nodes = timegrid.n_nodes();
    let mut phi = Vec::with_capacity(nodes);
    let mut mu = Vec::with_capacity(nodes);
    let mut sigma = Vec::with_capacity(nodes);
    phi.push(data.phi0.clone());
    mu.push(chemical_potential(&data.phi0, data));
    sigma.push(data.sigma0.clone());
    for k in 0..timegrid.n_steps() {
        let out = step_state(&phi[k], &sigma[k], u.frame(k), data, dt).map_err(|e| e.at_step(k))?;
        phi.push(out.phi);
        mu.push(out.mu);
        sigma.push(out.sigma);
    }
    Ok(StateTrajectory {
        timegrid: *timegrid,
        phi,
        mu,
        sigma,
    })
}

/// `A ∫Ψ(φ) + (B/2)‖∇_h φ‖²`
pub fn energy<T: Real>(phi: &ScalarField<T>, data: &ProblemData<T>) -> T {
    let p = &data.params;
    let bulk = integrate(&phi.map(|s| data.potential.psi(s)));
    p.potential_scale * bulk + T::lit(0.5) * p.gradient_scale * phi.gradient_energy()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesRow {
    pub k: usize,
    pub t: f64,
    pub mass_phi: f64,
    pub mass_sigma: f64,
    pub energy: f64,
    pub min_sigma: f64,
    pub max_sigma: f64,
}

/// Per-node summary used for `series.csv`.
pub fn series<T: Real>(traj: &StateTrajectory<T>, data: &ProblemData<T>) -> Vec<SeriesRow> {
    (0..traj.timegrid.n_nodes())
        .map(|k| SeriesRow {
            k,
            t: traj.timegrid.time(k).to_f64_lossy(),
            mass_phi: integrate(&traj.phi[k]).to_f64_lossy(),
            mass_sigma: integrate(&traj.sigma[k]).to_f64_lossy(),
            energy: energy(&traj.phi[k], data).to_f64_lossy(),
            min_sigma: traj.sigma[k].min().to_f64_lossy(),
            max_sigma: traj.sigma[k].max().to_f64_lossy(),
        })
        .collect()
}

/// Scheme identities for one step `n → n+1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualRow {
    pub step: usize,
    /// `∫φⁿ⁺¹ − ∫φⁿ − dt ∫h(φⁿ)(Pσⁿ⁺¹ − A_apop − αuⁿ)`
    pub mass_phi: f64,
    /// `∫σⁿ⁺¹ − ∫σⁿ − dt[−C ∫h(φⁿ)σⁿ⁺¹ + B ∫(σ_S − σⁿ⁺¹)]`
    pub mass_sigma: f64,
    pub energy_increment: f64,
    /// `(Eⁿ⁺¹ − Eⁿ)/dt + ‖∇μⁿ⁺¹‖² − ∫(Pσⁿ⁺¹ − A_apop − αuⁿ)h(φⁿ)μⁿ⁺¹`
    pub energy_defect: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResidualReport {
    pub rows: Vec<ResidualRow>,
}

impl ResidualReport {
    pub fn max_mass_phi(&self) -> f64 {
        self.rows.iter().map(|r| r.mass_phi.abs()).fold(0.0, f64::max)
    }

    pub fn max_mass_sigma(&self) -> f64 {
        self.rows.iter().map(|r| r.mass_sigma.abs()).fold(0.0, f64::max)
    }

    pub fn max_energy_increment(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.energy_increment)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Time-integrated |defect|, Σ dt |dᵢ|.
    pub fn energy_defect_l1(&self, dt: f64) -> f64 {
        self.rows.iter().map(|r| r.energy_defect.abs() * dt).sum()
    }
}

/// `h (P σ − A_apop − α u)` cellwise.
fn phase_source<T: Real>(
    h: &ScalarField<T>,
    sigma: &ScalarField<T>,
    u: &ScalarField<T>,
    data: &ProblemData<T>,
) -> ScalarField<T> {
    let p = &data.params;
    let vals = h
        .values()
        .iter()
        .zip(sigma.values())
        .zip(u.values())
        .map(|((&hv, &s), &uu)| hv * (p.proliferation * s - p.apoptosis - p.alpha * uu))
        .collect();
    ScalarField::from_raw(*h.grid(), vals)
}

pub fn residual_report<T: Real>(
    traj: &StateTrajectory<T>,
    data: &ProblemData<T>,
    u: &Control<T>,
) -> Result<ResidualReport> {
    if u.timegrid() != &traj.timegrid {
        return Err(Error::GridMismatch("control and trajectory time grids differ".into()));
    }
    let p = &data.params;
    let dt = traj.timegrid.dt();
    let mut rows = Vec::with_capacity(traj.n_steps());
    let mut e_prev = energy(&traj.phi[0], data);
    for n in 0..traj.n_steps() {
        let (phi_n, phi_1) = (&traj.phi[n], &traj.phi[n + 1]);
        let (sig_n, sig_1) = (&traj.sigma[n], &traj.sigma[n + 1]);
        let h = phi_n.map(|s| data.interp.hval(s));
        let src = phase_source(&h, sig_1, u.frame(n), data);
        let mass_phi = integrate(phi_1) - integrate(phi_n) - dt * integrate(&src);
        let consumed = integrate(&h.zip_map(sig_1, |a, b| a * b)?);
        let supplied = integrate(&data.sigma_s.zip_map(sig_1, |a, b| a - b)?);
        let mass_sigma = integrate(sig_1) - integrate(sig_n)
            - dt * (-p.consumption * consumed + p.supply * supplied);
        let e_next = energy(phi_1, data);
        let mu = &traj.mu[n + 1];
        let dissipation = mu.gradient_energy();
        let work = integrate(&src.zip_map(mu, |a, b| a * b)?);
        let defect = (e_next - e_prev) / dt + dissipation - work;
        rows.push(ResidualRow {
            step: n,
            mass_phi: mass_phi.to_f64_lossy(),
            mass_sigma: mass_sigma.to_f64_lossy(),
            energy_increment: (e_next - e_prev).to_f64_lossy(),
            energy_defect: defect.to_f64_lossy(),
        });
        e_prev = e_next;
    }
    Ok(ResidualReport { rows })
}
