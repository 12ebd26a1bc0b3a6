//! Run configuration: a TOML file with `[section]` tables of `key = value` pairs.
//!
//! A `preset` key at the top selects a named configuration; every other key overrides
//! it. Unknown keys are rejected and every error carries the line it refers to.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};
use toml::Spanned;

use crate::control::{Control, TimeGrid};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::Grid;
use crate::model::{ModelParams, ProblemData};
use crate::objective::{ObjectiveSpec, Target};
use crate::optimizer::{ArmijoParams, OptimizerConfig, TauMode};
use crate::presets::{reference_params, tanh_seed};
use crate::state::solve_state;

/// Key reference shown by `--help`.
pub const CONFIG_REFERENCE: &str = "\
Configuration file (TOML). All keys are optional; defaults are the reference preset.

  preset = \"reference\"            reference | equilibrium | manufactured-tracking | trivial-penalty
  seed = 0                          seed for random controls and verification directions

  [grid]       dim = 1, nx = 128, ny = 128, lx = 1.0, ly = 1.0
  [time]       t_end = 1.0, dt = 0.005          (t_end must be a multiple of dt)
  [model]      proliferation = 1.0, apoptosis = 0.5, consumption = 1.0, supply = 1.0,
               alpha = 2.0, potential_scale = 1.0, gradient_scale = 0.001, stabilization = 2.0
  [initial]    phi0 = \"tanh-seed\" | <number> | \"<field file>\"   (default tanh-seed)
               radius = 0.25 (tanh-seed radius, fraction of lx)
               sigma0 = 1.0 | \"<field file>\",  sigma_s = 1.0 | \"<field file>\"   (values in [0, 1])
  [objective]  beta_q = 1.0, beta_omega = 0.5, beta_s = 0.1, beta_u = 0.1, beta_t = 0.05,
               r_relax = 0.05 (a multiple of dt), phi_q = -1.0 | \"<field file>\",
               phi_omega = -1.0 | \"<field file>\", include_btau_term = false,
               tau_tol = 1e-3 (beta_t + 1)
  [control]    init = 0.0 | \"random\" | \"<field file>\"   (constant in time when a file)
  [optimizer]  max_outer_iters = 500, initial_step = 1/beta_u, shrink = 0.5, slope = 1e-4,
               max_shrinks = 30, stationarity_tol = 1e-4, tau = \"scan\" | \"final\" | <time>
  [verify]     directions = 5, duality_tau = 0.6 (fraction of t_end)
  [output]     dir = \"<path>\" (overridden by --out)

The manufactured-tracking preset tracks the trajectory of
u(x,t) = 0.5 + 0.3 sin(2 pi x/lx) cos(pi t/t_end) with beta_q = 1, beta_u = 1e-6 and
the other weights zero. The trivial-penalty preset zeroes beta_q, beta_omega, beta_s and
starts from u = 0.5.
";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Reference,
    Equilibrium,
    ManufacturedTracking,
    TrivialPenalty,
}

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::Reference => "reference",
            Preset::Equilibrium => "equilibrium",
            Preset::ManufacturedTracking => "manufactured-tracking",
            Preset::TrivialPenalty => "trivial-penalty",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [
            Preset::Reference,
            Preset::Equilibrium,
            Preset::ManufacturedTracking,
            Preset::TrivialPenalty,
        ]
        .into_iter()
        .find(|p| p.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldSource {
    Constant(f64),
    /// Radius as a fraction of `lx`.
    TanhSeed { radius: f64 },
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum TargetSource {
    Constant(f64),
    File(PathBuf),
    /// Trajectory of the manufactured dose.
    Manufactured,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControlInit {
    Constant(f64),
    Random,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveConfig {
    pub beta_q: f64,
    pub beta_omega: f64,
    pub beta_s: f64,
    pub beta_u: f64,
    pub beta_t: f64,
    pub r_relax: f64,
    pub phi_q: TargetSource,
    pub phi_omega: TargetSource,
    pub include_btau_term: bool,
    pub tau_tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauSetting {
    Scan,
    Final,
    /// Pinned to the node at this time.
    At(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifySettings {
    pub directions: usize,
    /// τ of the duality check as a fraction of the horizon.
    pub duality_tau: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    pub seed: u64,
    pub grid: Grid<f64>,
    pub timegrid: TimeGrid<f64>,
    pub params: ModelParams<f64>,
    pub stabilization: f64,
    pub phi0: FieldSource,
    pub sigma0: FieldSource,
    pub sigma_s: FieldSource,
    pub objective: ObjectiveConfig,
    pub control_init: ControlInit,
    pub optimizer: OptimizerConfig<f64>,
    pub tau: TauSetting,
    pub verify: VerifySettings,
    pub output_dir: Option<PathBuf>,
    /// SHA-256 of the file contents, hex.
    pub hash: String,
}

/// Everything a run needs, resolved from a [`RunConfig`].
#[derive(Debug, Clone)]
pub struct Problem {
    pub data: ProblemData<f64>,
    pub objective: ObjectiveSpec<f64>,
    pub timegrid: TimeGrid<f64>,
    pub init_u: Control<f64>,
    pub optimizer: OptimizerConfig<f64>,
}

type Sp<T> = Option<Spanned<T>>;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Value {
    Num(f64),
    Text(String),
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawFile {
    preset: Sp<String>,
    seed: Sp<u64>,
    #[serde(default)]
    grid: RawGrid,
    #[serde(default)]
    time: RawTime,
    #[serde(default)]
    model: RawModel,
    #[serde(default)]
    initial: RawInitial,
    #[serde(default)]
    objective: RawObjective,
    #[serde(default)]
    control: RawControl,
    #[serde(default)]
    optimizer: RawOptimizer,
    #[serde(default)]
    verify: RawVerify,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    dim: Sp<u64>,
    nx: Sp<u64>,
    ny: Sp<u64>,
    lx: Sp<f64>,
    ly: Sp<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawTime {
    t_end: Sp<f64>,
    dt: Sp<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawModel {
    proliferation: Sp<f64>,
    apoptosis: Sp<f64>,
    consumption: Sp<f64>,
    supply: Sp<f64>,
    alpha: Sp<f64>,
    potential_scale: Sp<f64>,
    gradient_scale: Sp<f64>,
    stabilization: Sp<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    phi0: Sp<Value>,
    radius: Sp<f64>,
    sigma0: Sp<Value>,
    sigma_s: Sp<Value>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawObjective {
    beta_q: Sp<f64>,
    beta_omega: Sp<f64>,
    beta_s: Sp<f64>,
    beta_u: Sp<f64>,
    beta_t: Sp<f64>,
    r_relax: Sp<f64>,
    phi_q: Sp<Value>,
    phi_omega: Sp<Value>,
    include_btau_term: Sp<bool>,
    tau_tol: Sp<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawControl {
    init: Sp<Value>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawOptimizer {
    max_outer_iters: Sp<u64>,
    initial_step: Sp<f64>,
    shrink: Sp<f64>,
    slope: Sp<f64>,
    max_shrinks: Sp<u64>,
    stationarity_tol: Sp<f64>,
    tau: Sp<Value>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawVerify {
    directions: Sp<u64>,
    duality_tau: Sp<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Sp<String>,
}

struct Lines<'a> {
    text: &'a str,
}

impl Lines<'_> {
    fn line_of(&self, offset: usize) -> usize {
        self.text[..offset.min(self.text.len())].matches('\n').count() + 1
    }

    fn err<T>(&self, sp: &Spanned<T>, message: impl Into<String>) -> Error {
        Error::Config {
            line: self.line_of(sp.span().start),
            message: message.into(),
        }
    }
}

fn get<T: Clone>(v: &Sp<T>, default: T) -> T {
    v.as_ref().map(|s| s.get_ref().clone()).unwrap_or(default)
}

impl RunConfig {
    /// Reference defaults, as produced by an empty file.
    pub fn reference() -> Self {
        parse_config_str("", None).expect("empty config is valid")
    }

    /// Builds data, objective and initial control. Reads any referenced field files and,
    /// for the manufactured target, runs one forward solve.
    pub fn problem(&self) -> Result<Problem> {
        let grid = self.grid;
        let tg = self.timegrid;
        let field = |src: &FieldSource| -> Result<ScalarField<f64>> {
            match src {
                FieldSource::Constant(c) => Ok(ScalarField::constant(grid, *c)),
                FieldSource::TanhSeed { radius } => {
                    Ok(tanh_seed(grid, radius * grid.lengths()[0], &self.params))
                }
                FieldSource::File(p) => load_on(p, &grid),
            }
        };
        let mut data = ProblemData::new(
            field(&self.phi0)?,
            field(&self.sigma0)?,
            field(&self.sigma_s)?,
            self.params,
        )?;
        data.scheme.stabilization = self.stabilization;
        data.validate()?;

        let target = |src: &TargetSource| -> Result<Target<f64>> {
            Ok(match src {
                TargetSource::Constant(c) => Target::Constant(ScalarField::constant(grid, *c)),
                TargetSource::File(p) => Target::Constant(load_on(p, &grid)?),
                TargetSource::Manufactured => {
                    let u = manufactured_dose(grid, tg);
                    Target::Series(solve_state(&data, &u, &tg)?.phi)
                }
            })
        };
        let o = &self.objective;
        let objective = ObjectiveSpec {
            beta_q: o.beta_q,
            beta_omega: o.beta_omega,
            beta_s: o.beta_s,
            beta_u: o.beta_u,
            beta_t: o.beta_t,
            r_relax: o.r_relax,
            phi_q: target(&o.phi_q)?,
            phi_omega: target(&o.phi_omega)?,
            include_btau_term: o.include_btau_term,
        };
        objective.validate()?;

        let init_u = match &self.control_init {
            ControlInit::Constant(c) => Control::constant(grid, tg, *c),
            ControlInit::Random => {
                use rand::SeedableRng;
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(self.seed);
                crate::verification::random_admissible(grid, tg, &mut rng)
            }
            ControlInit::File(p) => {
                let f = load_on(p, &grid)?;
                Control::new(tg, vec![f; tg.n_nodes()])?
            }
        };
        let mut optimizer = self.optimizer;
        optimizer.tau_mode = match self.tau {
            TauSetting::Scan => TauMode::Scan,
            TauSetting::Final => TauMode::Fixed(tg.n_steps()),
            TauSetting::At(t) => TauMode::Fixed(node_of(&tg, t)?),
        };
        Ok(Problem {
            data,
            objective,
            timegrid: tg,
            init_u,
            optimizer,
        })
    }
}

fn load_on(path: &Path, grid: &Grid<f64>) -> Result<ScalarField<f64>> {
    let f = crate::io::read_field(path)?;
    grid.ensure_same(f.grid())?;
    Ok(f)
}

fn node_of(tg: &TimeGrid<f64>, t: f64) -> Result<usize> {
    let k = (t / tg.dt()).round();
    if !(k >= 0.0 && k <= tg.n_steps() as f64) || (k * tg.dt() - t).abs() > 1e-9 * tg.t_end() {
        return Err(Error::InvalidParameter(format!("tau = {t} is not a node of the time grid")));
    }
    Ok(k as usize)
}

/// `u(x, t) = 0.5 + 0.3 sin(2πx/L) cos(πt/T)`, the dose whose trajectory the
/// manufactured-tracking preset tracks.
pub fn manufactured_dose(grid: Grid<f64>, tg: TimeGrid<f64>) -> Control<f64> {
    use std::f64::consts::PI;
    let l = grid.lengths()[0];
    let t_end = tg.t_end();
    Control::from_fn(grid, tg, |x, t| 0.5 + 0.3 * (2.0 * PI * x[0] / l).sin() * (PI * t / t_end).cos())
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text, path.parent())
}

/// Parses configuration text; relative field-file paths resolve against `base_dir`.
pub fn parse_config_str(text: &str, base_dir: Option<&Path>) -> Result<RunConfig> {
    let raw: RawFile = toml::from_str(text).map_err(|e| {
        let lines = Lines { text };
        Error::Config {
            line: e.span().map(|s| lines.line_of(s.start)).unwrap_or(1),
            message: e.message().trim().to_string(),
        }
    })?;
    let lines = Lines { text };
    let resolve = |p: &str| -> PathBuf {
        let p = Path::new(p);
        match base_dir {
            Some(b) if p.is_relative() => b.join(p),
            _ => p.to_path_buf(),
        }
    };

    let preset = match &raw.preset {
        None => Preset::Reference,
        Some(s) => Preset::parse(s.get_ref()).ok_or_else(|| {
            lines.err(s, format!("unknown preset `{}`", s.get_ref()))
        })?,
    };

    // grid
    let dim = get(&raw.grid.dim, 1);
    let lx = get(&raw.grid.lx, 1.0);
    let nx = get(&raw.grid.nx, 128) as usize;
    let grid = match dim {
        1 => {
            if let Some(s) = &raw.grid.ny {
                return Err(lines.err(s, "ny is only valid with dim = 2"));
            }
            if let Some(s) = &raw.grid.ly {
                return Err(lines.err(s, "ly is only valid with dim = 2"));
            }
            Grid::new_1d(nx, lx)
        }
        2 => Grid::new_2d(nx, get(&raw.grid.ny, nx as u64) as usize, lx, get(&raw.grid.ly, lx)),
        _ => {
            let s = raw.grid.dim.as_ref().expect("set when not default");
            return Err(lines.err(s, "dim must be 1 or 2"));
        }
    };
    let grid = grid.map_err(|e| {
        let line = [raw.grid.nx.as_ref().map(|s| s.span()), raw.grid.lx.as_ref().map(|s| s.span())]
            .into_iter()
            .flatten()
            .map(|sp| lines.line_of(sp.start))
            .next()
            .unwrap_or(1);
        Error::Config {
            line,
            message: e.to_string(),
        }
    })?;

    // time
    let t_end = get(&raw.time.t_end, 1.0);
    let dt = get(&raw.time.dt, 5e-3);
    let at_dt = |m: String| match &raw.time.dt {
        Some(s) => lines.err(s, m),
        None => match &raw.time.t_end {
            Some(s) => lines.err(s, m),
            None => Error::Config { line: 1, message: m },
        },
    };
    if !(dt > 0.0) || !(t_end > 0.0) {
        return Err(at_dt("t_end and dt must be positive".into()));
    }
    let steps = (t_end / dt).round();
    if (steps * dt - t_end).abs() > 1e-9 * t_end || steps < 2.0 {
        return Err(at_dt(format!("t_end = {t_end} is not a multiple (at least 2) of dt = {dt}")));
    }
    let timegrid = TimeGrid::new(t_end, steps as usize).map_err(|e| at_dt(e.to_string()))?;

    // model
    let r = reference_params::<f64>();
    let m = &raw.model;
    let mut params = ModelParams {
        proliferation: get(&m.proliferation, r.proliferation),
        apoptosis: get(&m.apoptosis, r.apoptosis),
        consumption: get(&m.consumption, r.consumption),
        supply: get(&m.supply, r.supply),
        alpha: get(&m.alpha, r.alpha),
        potential_scale: get(&m.potential_scale, r.potential_scale),
        gradient_scale: get(&m.gradient_scale, r.gradient_scale),
    };
    if preset == Preset::Equilibrium {
        for (slot, raw_v) in [
            (&mut params.proliferation, &m.proliferation),
            (&mut params.apoptosis, &m.apoptosis),
            (&mut params.consumption, &m.consumption),
            (&mut params.supply, &m.supply),
            (&mut params.alpha, &m.alpha),
        ] {
            if raw_v.is_none() {
                *slot = 0.0;
            }
        }
    }
    for (name, sp, v, strict) in [
        ("proliferation", &m.proliferation, params.proliferation, false),
        ("apoptosis", &m.apoptosis, params.apoptosis, false),
        ("consumption", &m.consumption, params.consumption, false),
        ("supply", &m.supply, params.supply, false),
        ("alpha", &m.alpha, params.alpha, false),
        ("potential_scale", &m.potential_scale, params.potential_scale, true),
        ("gradient_scale", &m.gradient_scale, params.gradient_scale, true),
    ] {
        let bad = if strict { !(v > 0.0) } else { !(v >= 0.0) } || !v.is_finite();
        if bad {
            let msg = format!("{name} = {v} must be {}", if strict { "> 0" } else { ">= 0" });
            return Err(sp.as_ref().map(|s| lines.err(s, msg.clone())).unwrap_or(Error::Config { line: 1, message: msg }));
        }
    }
    let stabilization = get(&m.stabilization, 2.0);
    if let Some(s) = &m.stabilization {
        if !(stabilization >= 0.0) {
            return Err(lines.err(s, "stabilization must be >= 0"));
        }
    }

    // initial data
    let ini = &raw.initial;
    let default_phi0 = if preset == Preset::Equilibrium {
        FieldSource::Constant(-1.0)
    } else {
        FieldSource::TanhSeed {
            radius: get(&ini.radius, 0.25),
        }
    };
    let phi0 = match &ini.phi0 {
        None => default_phi0,
        Some(s) => match s.get_ref() {
            Value::Num(v) => FieldSource::Constant(*v),
            Value::Text(t) if t == "tanh-seed" => FieldSource::TanhSeed {
                radius: get(&ini.radius, 0.25),
            },
            Value::Text(t) => FieldSource::File(resolve(t)),
        },
    };
    if let (Some(s), FieldSource::TanhSeed { radius }) = (&ini.radius, &phi0) {
        if !(*radius > 0.0) {
            return Err(lines.err(s, "radius must be > 0"));
        }
    }
    let nutrient = |name: &str, sp: &Sp<Value>| -> Result<FieldSource> {
        match sp {
            None => Ok(FieldSource::Constant(1.0)),
            Some(s) => match s.get_ref() {
                Value::Num(v) if (0.0..=1.0).contains(v) => Ok(FieldSource::Constant(*v)),
                Value::Num(v) => Err(lines.err(
                    s,
                    format!("{name} = {v} is outside the admissible nutrient range [0, 1]"),
                )),
                Value::Text(t) => Ok(FieldSource::File(resolve(t))),
            },
        }
    };
    let sigma0 = nutrient("sigma0", &ini.sigma0)?;
    let sigma_s = nutrient("sigma_s", &ini.sigma_s)?;

    // objective
    let o = &raw.objective;
    let (dq, dom, ds, du, dt_w) = match preset {
        Preset::ManufacturedTracking => (1.0, 0.0, 0.0, 1e-6, 0.0),
        Preset::TrivialPenalty => (0.0, 0.0, 0.0, 0.1, 0.05),
        _ => (1.0, 0.5, 0.1, 0.1, 0.05),
    };
    let objective = ObjectiveConfig {
        beta_q: get(&o.beta_q, dq),
        beta_omega: get(&o.beta_omega, dom),
        beta_s: get(&o.beta_s, ds),
        beta_u: get(&o.beta_u, du),
        beta_t: get(&o.beta_t, dt_w),
        r_relax: get(&o.r_relax, 0.05),
        phi_q: target_source(&lines, &o.phi_q, &resolve, preset == Preset::ManufacturedTracking)?,
        phi_omega: target_source(&lines, &o.phi_omega, &resolve, false)?,
        include_btau_term: get(&o.include_btau_term, false),
        tau_tol: o.tau_tol.as_ref().map(|s| *s.get_ref()),
    };
    for (name, sp, v, strict) in [
        ("beta_q", &o.beta_q, objective.beta_q, false),
        ("beta_omega", &o.beta_omega, objective.beta_omega, false),
        ("beta_s", &o.beta_s, objective.beta_s, false),
        ("beta_t", &o.beta_t, objective.beta_t, false),
        ("beta_u", &o.beta_u, objective.beta_u, true),
        ("r_relax", &o.r_relax, objective.r_relax, true),
    ] {
        let bad = if strict { !(v > 0.0) } else { !(v >= 0.0) } || !v.is_finite();
        if bad {
            let msg = format!("{name} = {v} must be {}", if strict { "> 0" } else { ">= 0" });
            return Err(sp.as_ref().map(|s| lines.err(s, msg.clone())).unwrap_or(Error::Config { line: 1, message: msg }));
        }
    }
    if timegrid.steps_in(objective.r_relax).is_none() {
        let msg = format!(
            "r_relax = {} is not a positive integer multiple of dt = {dt}",
            objective.r_relax
        );
        return Err(match &o.r_relax {
            Some(s) => lines.err(s, msg),
            None => at_dt(msg),
        });
    }
    if let Some(s) = &o.tau_tol {
        if !(*s.get_ref() > 0.0) {
            return Err(lines.err(s, "tau_tol must be > 0"));
        }
    }

    // control
    let control_init = match &raw.control.init {
        None => ControlInit::Constant(match preset {
            Preset::TrivialPenalty => 0.5,
            Preset::ManufacturedTracking => 0.2,
            _ => 0.0,
        }),
        Some(s) => match s.get_ref() {
            Value::Num(v) if (0.0..=1.0).contains(v) => ControlInit::Constant(*v),
            Value::Num(v) => return Err(lines.err(s, format!("init = {v} is outside the admissible dose range [0, 1]"))),
            Value::Text(t) if t == "random" => ControlInit::Random,
            Value::Text(t) => ControlInit::File(resolve(t)),
        },
    };

    // optimizer
    let op = &raw.optimizer;
    let optimizer = OptimizerConfig {
        max_outer_iters: get(&op.max_outer_iters, 500) as usize,
        armijo: ArmijoParams {
            initial_step: op.initial_step.as_ref().map(|s| *s.get_ref()),
            shrink: get(&op.shrink, 0.5),
            slope: get(&op.slope, 1e-4),
            max_shrinks: get(&op.max_shrinks, 30) as usize,
        },
        stationarity_tol: get(&op.stationarity_tol, 1e-4),
        tau_tol: objective.tau_tol,
        seed: get(&raw.seed, 0),
        tau_mode: TauMode::Scan,
    };
    optimizer.validate().map_err(|e| {
        let sp = [&op.initial_step, &op.shrink, &op.slope, &op.stationarity_tol]
            .into_iter()
            .flatten()
            .next();
        match sp {
            Some(s) => lines.err(s, e.to_string()),
            None => Error::Config { line: 1, message: e.to_string() },
        }
    })?;
    let tau = match &op.tau {
        None => TauSetting::Scan,
        Some(s) => match s.get_ref() {
            Value::Text(t) if t == "scan" => TauSetting::Scan,
            Value::Text(t) if t == "final" => TauSetting::Final,
            Value::Num(t) => {
                node_of(&timegrid, *t).map_err(|e| lines.err(s, e.to_string()))?;
                TauSetting::At(*t)
            }
            Value::Text(t) => return Err(lines.err(s, format!("tau = `{t}`: expected \"scan\", \"final\" or a time"))),
        },
    };

    let v = &raw.verify;
    let verify = VerifySettings {
        directions: get(&v.directions, 5) as usize,
        duality_tau: get(&v.duality_tau, 0.6),
    };
    if let Some(s) = &v.duality_tau {
        if !(verify.duality_tau > 0.0 && verify.duality_tau <= 1.0) {
            return Err(lines.err(s, "duality_tau must lie in (0, 1]"));
        }
    }
    if let Some(s) = &v.directions {
        if verify.directions == 0 {
            return Err(lines.err(s, "directions must be >= 1"));
        }
    }

    Ok(RunConfig {
        preset,
        seed: get(&raw.seed, 0),
        grid,
        timegrid,
        params,
        stabilization,
        phi0,
        sigma0,
        sigma_s,
        objective,
        control_init,
        optimizer,
        tau,
        verify,
        output_dir: raw.output.dir.as_ref().map(|s| resolve(s.get_ref())),
        hash: hex::encode(Sha256::digest(text.as_bytes())),
    })
}

fn target_source(
    lines: &Lines,
    sp: &Sp<Value>,
    resolve: &dyn Fn(&str) -> PathBuf,
    manufactured: bool,
) -> Result<TargetSource> {
    Ok(match sp {
        None if manufactured => TargetSource::Manufactured,
        None => TargetSource::Constant(-1.0),
        Some(s) => match s.get_ref() {
            Value::Num(v) if v.is_finite() => TargetSource::Constant(*v),
            Value::Num(_) => return Err(lines.err(s, "target must be finite")),
            Value::Text(t) if t == "manufactured" => TargetSource::Manufactured,
            Value::Text(t) => TargetSource::File(resolve(t)),
        },
    })
}
