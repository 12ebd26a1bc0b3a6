//! `chemodose` command line: simulate, optimize, verify and grad-check.
//!
//! Exit codes: 0 success, 1 a check or the optimality certificate failed, 2 usage or
//! input error, 3 numerical solver failure.

use std::fs;
use std::path::{Path, PathBuf};

use chemodose::adjoint::{solve_adjoint, AdjointTrajectory};
use chemodose::config::{parse_config, Problem, RunConfig, CONFIG_REFERENCE};
use chemodose::io;
use chemodose::optimizer::{optimize, Status};
use chemodose::state::{series, solve_state};
use clap::{Parser, Subcommand, ValueEnum};

pub mod suite;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "chemodose", version, about = "Tumor growth under cytotoxic dosing: simulation, optimal control and verification", after_help = CONFIG_REFERENCE)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(clap::Args, Debug, Clone)]
pub struct Common {
    /// Configuration file (TOML)
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; created if missing
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the seed in the configuration
    #[arg(long)]
    pub seed: Option<u64>,
    /// Adds (beta_u/2)|u(tau)|^2 to the tau derivative (comparison only)
    #[arg(long)]
    pub include_btau_term: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Forward solve under the initial control
    Simulate(Common),
    /// Projected-gradient optimization of dose and treatment time
    Optimize(Common),
    /// Run the verification suite and write verification_report.csv
    Verify {
        #[command(flatten)]
        common: Common,
        /// Inject a sign error into one check to confirm it can fail
        #[arg(long, value_enum)]
        sabotage: Option<Sabotage>,
    },
    /// Adjoint gradient against central finite differences
    GradCheck(Common),
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sabotage {
    Duality,
    Gradient,
}

/// Parses `argv` (including the program name), runs, and returns the exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let threads = std::env::var("CHEMODOSE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(0);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return EXIT_USAGE;
        }
    };
    match pool.install(|| dispatch(&cli.command)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_solver_failure() {
                EXIT_SOLVER
            } else {
                EXIT_USAGE
            }
        }
    }
}

fn dispatch(cmd: &Command) -> chemodose::Result<i32> {
    match cmd {
        Command::Simulate(c) => simulate(c),
        Command::Optimize(c) => run_optimize(c),
        Command::Verify { common, sabotage } => verify(common, *sabotage),
        Command::GradCheck(c) => grad_check(c),
    }
}

/// Loads the configuration with command-line overrides applied.
pub fn load(common: &Common) -> chemodose::Result<RunConfig> {
    let mut cfg = parse_config(&common.config)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
        cfg.optimizer.seed = s;
    }
    if common.include_btau_term {
        cfg.objective.include_btau_term = true;
    }
    Ok(cfg)
}

fn manifest_base(cfg: &RunConfig, subcommand: &str) -> Vec<(&'static str, String)> {
    let g = &cfg.grid;
    let cells: Vec<String> = g.cells_per_axis().iter().map(|n| n.to_string()).collect();
    let lens: Vec<String> = g.lengths().iter().map(|l| format!("{l:?}")).collect();
    vec![
        ("version", env!("CARGO_PKG_VERSION").to_string()),
        ("subcommand", subcommand.to_string()),
        ("config_sha256", cfg.hash.clone()),
        ("preset", cfg.preset.name().to_string()),
        ("grid", format!("dim={} cells={} lengths={}", g.dim(), cells.join("x"), lens.join("x"))),
        (
            "time",
            format!("t_end={:?} dt={:?} steps={}", cfg.timegrid.t_end(), cfg.timegrid.dt(), cfg.timegrid.n_steps()),
        ),
        ("seed", cfg.seed.to_string()),
        ("include_btau_term", cfg.objective.include_btau_term.to_string()),
    ]
}

fn prepare(common: &Common) -> chemodose::Result<(RunConfig, Problem, PathBuf)> {
    let cfg = load(common)?;
    let problem = cfg.problem()?;
    fs::create_dir_all(&common.out)?;
    Ok((cfg, problem, common.out.clone()))
}

fn simulate(common: &Common) -> chemodose::Result<i32> {
    let (cfg, p, out) = prepare(common)?;
    let traj = solve_state(&p.data, &p.init_u, &p.timegrid)?;
    io::write_series_csv(&out.join("series.csv"), &series(&traj, &p.data))?;
    io::write_state_snapshots(&out.join("snapshots"), &traj)?;
    let mut m = manifest_base(&cfg, "simulate");
    m.push(("status", "ok".into()));
    io::write_manifest(&out.join("manifest.txt"), &m)?;
    Ok(EXIT_OK)
}

fn run_optimize(common: &Common) -> chemodose::Result<i32> {
    let (cfg, p, out) = prepare(common)?;
    let res = optimize(&p.data, &p.objective, &p.timegrid, &p.init_u, &p.optimizer)?;
    io::write_iterations_csv(&out.join("iterations.csv"), &res.records)?;
    io::write_objective_csv(&out.join("objective.csv"), &res.records)?;
    io::write_snapshots(&out.join("u_star"), "u_", res.u_star.frames())?;

    let traj = solve_state(&p.data, &res.u_star, &p.timegrid)?;
    io::write_series_csv(&out.join("series.csv"), &series(&traj, &p.data))?;
    let adj = if res.tau_index_star == 0 {
        AdjointTrajectory::vanishing(p.timegrid, *p.data.grid())
    } else {
        solve_adjoint(&traj, &p.data, &res.u_star, &p.objective, res.tau_index_star)?
    };
    io::write_adjoint_series_csv(&out.join("adjoint_series.csv"), &adj)?;
    io::write_adjoint_snapshots(&out.join("adjoint"), &adj)?;

    let f = &res.fonc;
    let mut m = manifest_base(&cfg, "optimize");
    m.extend([
        ("status", res.status.as_str().to_string()),
        ("iterations", res.iterations.to_string()),
        ("tau_index", res.tau_index_star.to_string()),
        ("tau", format!("{:?}", p.timegrid.time(res.tau_index_star))),
        ("J", format!("{:?}", res.j_history.last().copied().unwrap_or(f64::NAN))),
        ("stationarity", format!("{:?}", f.stationarity_u)),
        ("dtau", format!("{:?}", f.dtau_value)),
        ("tau_case", f.tau_case.as_str().to_string()),
    ]);
    io::write_manifest(&out.join("manifest.txt"), &m)?;
    println!(
        "{}: J = {:e}, tau = {}, stationarity = {:e}, dtau = {:e} ({})",
        res.status.as_str(),
        res.j_history.last().copied().unwrap_or(f64::NAN),
        p.timegrid.time(res.tau_index_star),
        f.stationarity_u,
        f.dtau_value,
        f.tau_case.as_str()
    );
    Ok(if res.status == Status::Converged {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    })
}

fn finish_report(
    cfg: &RunConfig,
    out: &Path,
    name: &str,
    report: &chemodose::verification::VerificationReport,
) -> chemodose::Result<i32> {
    let file = fs::File::create(out.join("verification_report.csv"))?;
    report.write_csv(std::io::BufWriter::new(file))?;
    for c in &report.checks {
        println!(
            "{} {:<24} {:>12.4e}  tol {:.1e}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.tolerance
        );
    }
    let mut m = manifest_base(cfg, name);
    m.push(("status", if report.all_passed() { "passed" } else { "failed" }.into()));
    io::write_manifest(&out.join("manifest.txt"), &m)?;
    Ok(if report.all_passed() {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    })
}

fn verify(common: &Common, sabotage: Option<Sabotage>) -> chemodose::Result<i32> {
    let (cfg, p, out) = prepare(common)?;
    let report = suite::run_suite(&cfg, &p, sabotage)?;
    let mut m_name = String::from("verify");
    if let Some(s) = sabotage {
        m_name += &format!(" --sabotage {}", s.to_possible_value().expect("named").get_name());
    }
    finish_report(&cfg, &out, &m_name, &report)
}

fn grad_check(common: &Common) -> chemodose::Result<i32> {
    let (cfg, p, out) = prepare(common)?;
    let (table, report) = suite::gradient_check(&cfg, &p, false)?;
    let mut w = csv::Writer::from_path(out.join("grad_check.csv"))?;
    w.write_record(["direction", "eps", "fd", "adjoint", "rel_error"])?;
    for (d, row) in table.rows.iter().enumerate() {
        for (i, e) in table.eps.iter().enumerate() {
            w.write_record([
                d.to_string(),
                format!("{e:?}"),
                format!("{:?}", row.fd[i]),
                format!("{:?}", row.adjoint),
                format!("{:?}", row.rel_error[i]),
            ])?;
        }
    }
    w.flush()?;
    finish_report(&cfg, &out, "grad-check", &report)
}
