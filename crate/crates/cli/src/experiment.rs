//! Synthetic-data experiments: truth solves, noise, scheme runs, tables and artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use subdiff_core::analysis::{estimate_contraction, ContractionEstimate, ContractionSetup};
use subdiff_core::caputo::SpaceTimeField;
use subdiff_core::coeffs::{HatBasis, Nonlinearity, Potential, Reaction};
use subdiff_core::fixedpoint::{
    fxp_b_iterate, fxp_c_iterate, FUpdateMode, FxpBSetup, FxpCConfig, FxpCSetup, FxpConfig, FxpVariant, InitialGuess,
    LogPair, QUpdateMode,
};
use subdiff_core::forward::{solve_all, Excitation, ProblemSpec, Source};
use subdiff_core::mesh::{build_grid, BoundaryKind, BoundarySpec, Field};
use subdiff_core::newton::{frozen_newton, NewtonConfig};
use subdiff_core::observe::{
    add_noise, check_admissibility, check_range_condition, observe, presmooth, ObservationData, ObservationSite,
    Payload, SmoothingConfig,
};
use subdiff_core::trace::{IterationTrace, Truth};

use crate::config::ExperimentConfig;
use crate::expr::Expr;
use crate::CliError;

pub fn parse_bc(s: &str) -> Result<BoundaryKind<f64>, String> {
    match s.trim() {
        "dirichlet" => Ok(BoundaryKind::Dirichlet),
        "neumann" => Ok(BoundaryKind::Neumann),
        other => match other.strip_prefix("impedance:") {
            Some(g) => g
                .trim()
                .parse::<f64>()
                .map(BoundaryKind::Impedance)
                .map_err(|e| format!("bad impedance coefficient {g:?}: {e}")),
            None => Err(format!("unknown boundary condition {other:?}")),
        },
    }
}

fn parse(src: &str) -> Result<Expr, CliError> {
    Expr::parse(src).map_err(|e| CliError::Config(format!("{src:?}: {e}")))
}

/// A reaction term given by an expression in `u`, differentiated symbolically.
#[derive(Debug, Clone)]
pub struct ExprReaction {
    f: Expr,
    df: Expr,
}

impl ExprReaction {
    pub fn new(src: &str) -> Result<Self, CliError> {
        let f = parse(src)?;
        let df = f.derivative("u");
        Ok(Self { f, df })
    }
}

impl Reaction<f64> for ExprReaction {
    fn eval(&self, u: f64) -> f64 {
        self.f.eval1("u", u)
    }
    fn deriv(&self, u: f64) -> f64 {
        self.df.eval1("u", u)
    }
}

/// Problem for order `alpha` and horizon `horizon`, built from the config.
pub fn build_spec(cfg: &ExperimentConfig, alpha: f64, horizon: f64) -> Result<ProblemSpec<f64>, CliError> {
    let p = &cfg.problem;
    let (m, n) = cfg.resolution();
    let (grid, times) = build_grid(p.length, m, horizon, n)?;
    let bc = BoundarySpec::new(
        parse_bc(&p.bc_left).map_err(CliError::Config)?,
        parse_bc(&p.bc_right).map_err(CliError::Config)?,
    )?;
    let pairs: Vec<(&str, &str)> = if p.case == "c" {
        vec![(&p.r1, &p.u0_1)]
    } else {
        vec![(&p.r1, &p.u0_1), (&p.r2, &p.u0_2)]
    };
    let mut excitations = Vec::new();
    for (r, u0) in pairs {
        let r = parse(r)?;
        let u0 = parse(u0)?;
        let source = if r.is_const("t") {
            Source::Steady(grid.sample(|x| r.eval1("x", x)))
        } else {
            Source::Sampled(SpaceTimeField::from_fn(grid, times, |x, t| {
                r.eval(&|v| match v {
                    "x" => Some(x),
                    "t" => Some(t),
                    _ => None,
                })
            }))
        };
        excitations.push(Excitation {
            source,
            initial: grid.sample(|x| u0.eval1("x", x)),
        });
    }
    Ok(ProblemSpec::new(alpha, grid, times, bc, excitations)?)
}

/// Truth coefficients, their states and the noiseless observation.
pub struct Synthetic {
    pub spec: ProblemSpec<f64>,
    pub q_act: Expr,
    pub f_act: ExprReaction,
    pub states: Vec<SpaceTimeField<f64>>,
    pub clean: ObservationData<f64>,
    /// Interval of observed states on which `f` errors are measured.
    pub f_range: (f64, f64),
}

fn span(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    values
        .into_iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
}

fn data_range(data: &ObservationData<f64>) -> (f64, f64) {
    match &data.payload {
        Payload::Traces { traces, .. } => span(traces.iter().flatten().flatten().copied()),
        Payload::Profiles(g) => span(g.iter().flat_map(|p| p.iter().copied())),
        Payload::Mixed { profile, .. } => span(profile.iter().copied()),
    }
}

pub fn synthesize(cfg: &ExperimentConfig, alpha: f64) -> Result<Synthetic, CliError> {
    let spec = build_spec(cfg, alpha, cfg.problem.horizon)?;
    let q_act = parse(&cfg.truth.q)?;
    let f_act = ExprReaction::new(&cfg.truth.f)?;
    let q = spec.grid().sample(|x| q_act.eval1("x", x));
    let states = solve_all(&spec, &q, &f_act)?;
    let site = match cfg.problem.case.as_str() {
        "a" => ObservationSite::Boundary(cfg.problem.points.clone()),
        "b" => ObservationSite::FinalTime,
        _ => ObservationSite::Mixed(cfg.problem.x0.unwrap_or(cfg.problem.length)),
    };
    let clean = observe(&states, &site)?;
    let f_range = data_range(&clean);
    Ok(Synthetic {
        spec,
        q_act,
        f_act,
        states,
        clean,
        f_range,
    })
}

impl Synthetic {
    pub fn q_nodal(&self) -> Field<f64> {
        self.spec.grid().sample(|x| self.q_act.eval1("x", x))
    }

    pub fn truth(&self) -> Truth<'_, f64> {
        Truth {
            q: self.q_nodal(),
            f: &self.f_act,
            f_range: self.f_range,
        }
    }
}

/// One `(α, δ, seed, scheme)` cell.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub scheme: String,
    pub alpha: f64,
    pub delta: f64,
    pub seed: u64,
    pub trace: IterationTrace<f64>,
    /// `(x, q_act, q_rec)`.
    pub q_profile: Vec<(f64, f64, f64)>,
    /// `(u, f_act, f_rec)`.
    pub f_profile: Vec<(f64, f64, f64)>,
    pub data_csv: String,
    pub failure: Option<String>,
    pub warnings: Vec<String>,
    /// Forward solves of the nonlinear problem and linear (sensitivity) solves.
    pub forward_solves: usize,
    pub linear_solves: usize,
}

impl CellResult {
    pub fn final_errors(&self) -> Option<(f64, f64)> {
        let r = self.trace.last()?;
        Some((r.q_error?, r.f_error?))
    }

    pub fn errors_at(&self, iteration: usize) -> Option<(f64, f64)> {
        let r = self.trace.at(iteration)?;
        Some((r.q_error?, r.f_error?))
    }

    pub fn stem(&self) -> String {
        format!("{}_alpha{}_delta{}_seed{}", self.scheme, self.alpha, self.delta, self.seed)
    }

    pub fn status(&self) -> String {
        match &self.failure {
            Some(f) => format!("failed: {}", f.replace(',', ";")),
            None => "ok".into(),
        }
    }
}

const PROFILE_SAMPLES: usize = 201;

fn q_anchor(cfg: &ExperimentConfig) -> f64 {
    cfg.scheme.q_anchor.unwrap_or(cfg.problem.length / 2.0)
}

fn is_zero(e: &Expr, var: &str) -> bool {
    e.is_const(var) && e.eval(&|_| None) == 0.0
}

/// Bases and anchors of the case (b) fixed-point schemes.
pub fn case_b_setup(cfg: &ExperimentConfig, syn: &Synthetic) -> Result<FxpBSetup<f64>, CliError> {
    let s = &cfg.scheme;
    let xb = q_anchor(cfg);
    let (lo, hi) = syn.f_range;
    let q_bar = syn.q_act.eval1("x", xb);
    let f0 = syn.f_act.eval(s.f_anchor);
    if !(q_bar > 0.0 && f0 > 0.0) {
        return Err(CliError::Config(format!(
            "scheme.q_anchor/f_anchor: log anchors need q(x̄) > 0 and f(s0) > 0, got {q_bar} and {f0}"
        )));
    }
    Ok(FxpBSetup {
        q_basis: HatBasis::spatial(cfg.problem.length, s.q_intervals, Some(xb))?,
        f_basis: HatBasis::state(lo, hi, s.f_intervals, s.f_pad, Some(s.f_anchor))?,
        q_bar,
        f0,
    })
}

/// `(log q_act, log f_act)` interpolated on the case (b) bases.
pub fn log_truth(setup: &FxpBSetup<f64>, syn: &Synthetic) -> Result<LogPair<f64>, CliError> {
    let mut pair = LogPair::anchored(setup.q_basis.clone(), setup.q_bar, setup.f_basis.clone(), setup.f0)?;
    let (qb, fb) = (&setup.q_basis, &setup.f_basis);
    let a = (0..qb.len())
        .map(|k| syn.q_act.eval1("x", qb.knot(qb.knot_of(k))).ln() - setup.q_bar.ln())
        .collect();
    let b = (0..fb.len())
        .map(|k| syn.f_act.eval(fb.knot(fb.knot_of(k))).ln() - setup.f0.ln())
        .collect();
    pair.q = pair.q.with_coeffs(a)?;
    pair.f = pair.f.with_coeffs(b)?;
    Ok(pair)
}

fn sample_profiles(
    syn: &Synthetic,
    q_rec: &Field<f64>,
    f_rec: &dyn Reaction<f64>,
) -> (Vec<(f64, f64, f64)>, Vec<(f64, f64, f64)>) {
    let grid = syn.spec.grid();
    let q_act = syn.q_nodal();
    let qp = grid
        .nodes()
        .into_iter()
        .zip(q_act.iter().zip(q_rec.iter()))
        .map(|(x, (&a, &r))| (x, a, r))
        .collect();
    let (lo, hi) = syn.f_range;
    let fp = (0..PROFILE_SAMPLES)
        .map(|i| {
            let u = lo + (hi - lo) * i as f64 / (PROFILE_SAMPLES - 1) as f64;
            (u, syn.f_act.eval(u), f_rec.eval(u))
        })
        .collect();
    (qp, fp)
}

fn smoothing(cfg: &ExperimentConfig) -> SmoothingConfig {
    SmoothingConfig {
        order: cfg.noise.smoothing_order,
        ..SmoothingConfig::default()
    }
}

/// Runs one scheme on one noise realization of `syn`.
pub fn run_cell(cfg: &ExperimentConfig, syn: &Synthetic, scheme: &str, delta: f64, seed: u64) -> Result<CellResult, CliError> {
    let spec = &syn.spec;
    let grid = spec.grid();
    let s = &cfg.scheme;
    let noisy = add_noise(&syn.clean, delta, seed);
    let smoothed = presmooth(&noisy, spec.bc(), &smoothing(cfg))?;
    let truth = syn.truth();
    let q0_expr = parse(&s.q0)?;
    let f0_react = ExprReaction::new(&s.f0)?;
    let mut warnings = smoothed.warnings.clone();
    let excitations = spec.excitations().len();
    let mut newton_solves = None;

    let (trace, q_rec, f_profile_src, linear): (IterationTrace<f64>, Field<f64>, Box<dyn Reaction<f64>>, usize) =
        match scheme {
            "fxp-b-split" | "fxp-b-splitcheck" | "fxp-b-overall" => {
                let setup = case_b_setup(cfg, syn)?;
                if let Some(g) = smoothed.profiles() {
                    let rep = check_admissibility(&g[0], &g[1], grid)?;
                    if !rep.passes {
                        warnings.push(format!("profiles not admissible: {}", rep.reasons.join("; ")));
                    }
                }
                let variant = match scheme {
                    "fxp-b-split" => FxpVariant::Split,
                    "fxp-b-splitcheck" => FxpVariant::SplitCheck,
                    _ => FxpVariant::Overall,
                };
                let fcfg = FxpConfig {
                    variant,
                    max_iter: s.max_iter,
                    ridge: s.ridge,
                    log_floor: s.log_floor,
                    ..FxpConfig::default()
                };
                let init = InitialGuess {
                    q: grid.sample(|x| q0_expr.eval1("x", x)),
                    f: &f0_react,
                };
                let out = fxp_b_iterate(spec, &smoothed, &setup, &init, &fcfg, Some(&truth))?;
                let q = out.pair.q_nodal(spec);
                (out.trace, q, Box::new(out.pair.reaction()), 0)
            }
            "fxp-c" => {
                let x0 = cfg.problem.x0.unwrap_or(cfg.problem.length);
                let trace_range = match &smoothed.payload {
                    Payload::Mixed { trace, .. } => span(trace.iter().copied()),
                    _ => return Err(CliError::Config("fxp-c needs problem.case = \"c\"".into())),
                };
                let f_basis = HatBasis::state(trace_range.0, trace_range.1, s.f_intervals, s.f_pad, None)?;
                let q1 = syn.q_act.eval1("x", x0);
                let setup = FxpCSetup {
                    q_basis: HatBasis::spatial(cfg.problem.length, s.q_intervals, Some(x0))?,
                    f_basis: f_basis.clone(),
                    q1,
                };
                let q0 = if is_zero(&q0_expr, "x") {
                    Field::constant(grid.node_count(), q1)
                } else {
                    grid.sample(|x| q0_expr.eval1("x", x))
                };
                let f0 = Nonlinearity::interpolate(f_basis, |u| f0_react.eval(u))?;
                let ccfg = FxpCConfig {
                    max_iter: s.max_iter,
                    f_mode: if s.f_mode == "incremental" {
                        FUpdateMode::Incremental
                    } else {
                        FUpdateMode::Direct
                    },
                    q_mode: if s.q_mode == "division" {
                        QUpdateMode::Division
                    } else {
                        QUpdateMode::Projected
                    },
                    check_state: s.check_state,
                    f_at_trace: s.f_at_trace,
                    ridge: s.ridge,
                    ..FxpCConfig::default()
                };
                let out = fxp_c_iterate(spec, &smoothed, &setup, &q0, &f0, &ccfg, Some(&truth))?;
                if let Some(m) = out.range_margin {
                    if m < 0.0 {
                        warnings.push(format!("range condition violated by {}", -m));
                    }
                }
                let q = out.q.nodal(grid);
                (out.trace, q, Box::new(out.f), 0)
            }
            "frozen-newton" => {
                let xb = q_anchor(cfg);
                let q_bar = syn.q_act.eval1("x", xb);
                let q_basis = HatBasis::spatial(cfg.problem.length, s.q_intervals, Some(xb))?;
                let q0 = if is_zero(&q0_expr, "x") {
                    Potential::constant(q_basis, q_bar)
                } else {
                    let a = (0..q_basis.len())
                        .map(|k| q0_expr.eval1("x", q_basis.knot(q_basis.knot_of(k))) - q_bar)
                        .collect();
                    Potential::new(q_basis, a, q_bar)?
                };
                let (lo, hi) = syn.f_range;
                let f0 = Nonlinearity::interpolate(HatBasis::state(lo, hi, s.f_intervals, s.f_pad, None)?, |u| {
                    f0_react.eval(u)
                })?;
                let ncfg = NewtonConfig {
                    lambda0: s.lambda0,
                    nu: s.nu,
                    max_outer: s.newton_max_outer,
                    tau: s.tau,
                    refreeze: s.refreeze,
                    ..NewtonConfig::default()
                };
                let out = frozen_newton(spec, &noisy, &q0, &f0, &ncfg, Some(&truth))?;
                let columns = q0.basis().len() + f0.basis().len();
                let assemblies = 1 + s
                    .refreeze
                    .filter(|&e| e > 0)
                    .map_or(0, |e| out.trace.len().saturating_sub(2) / e);
                let q = out.q.nodal(grid);
                newton_solves = Some(out.forward_solves * excitations);
                (out.trace, q, Box::new(out.f), assemblies * columns * excitations)
            }
            other => return Err(CliError::Config(format!("scheme.names: unknown scheme {other:?}"))),
        };
    let (q_profile, f_profile) = sample_profiles(syn, &q_rec, f_profile_src.as_ref());
    let iterations = trace.records.iter().filter(|r| r.iteration > 0).count();
    let forward_solves = newton_solves
        .unwrap_or(excitations * iterations + if scheme == "fxp-b-splitcheck" { iterations } else { 0 });
    Ok(CellResult {
        scheme: scheme.to_string(),
        alpha: spec.alpha(),
        delta,
        seed,
        failure: trace.failure.clone(),
        trace,
        q_profile,
        f_profile,
        data_csv: noisy.to_csv(),
        warnings,
        forward_solves,
        linear_solves: linear,
    })
}

/// Every configured `(α, δ, seed, scheme)` cell; noiseless cells use the first seed only.
pub fn sweep(cfg: &ExperimentConfig, schemes: &[String]) -> Result<Vec<Result<CellResult, CliError>>, CliError> {
    let alphas = cfg.alphas();
    let syns = alphas
        .par_iter()
        .map(|&a| synthesize(cfg, a))
        .collect::<Result<Vec<_>, _>>()?;
    let mut cells = Vec::new();
    for (ai, _) in alphas.iter().enumerate() {
        for &d in &cfg.noise.deltas {
            let seeds: &[u64] = if d == 0.0 { &cfg.noise.seeds[..1] } else { &cfg.noise.seeds };
            for &seed in seeds {
                for s in schemes {
                    cells.push((ai, d, seed, s.clone()));
                }
            }
        }
    }
    Ok(cells
        .par_iter()
        .map(|(ai, d, seed, s)| run_cell(cfg, &syns[*ai], s, *d, *seed))
        .collect())
}

pub fn trace_csv(cell: &CellResult) -> String {
    cell.trace.to_csv()
}

fn profile_csv(header: &str, rows: &[(f64, f64, f64)]) -> String {
    let mut s = format!("{header}\n");
    for (a, b, c) in rows {
        let _ = writeln!(s, "{a},{b},{c}");
    }
    s
}

pub const SUMMARY_HEADER: &str = "scheme,alpha,delta,seed,iterations,q_error_L2,f_error_L2,q_rel,f_rel,status";

pub fn summary_line(c: &CellResult) -> String {
    let it = c.trace.last().map_or(0, |r| r.iteration);
    let (q, f) = c.final_errors().unwrap_or((f64::NAN, f64::NAN));
    let (qr, fr) = c.trace.relative_errors(it).unwrap_or((f64::NAN, f64::NAN));
    format!("{},{},{},{},{},{},{},{},{},{}", c.scheme, c.alpha, c.delta, c.seed, it, q, f, qr, fr, c.status())
}

/// Writes per-cell traces, profiles and data, the summary and the config echo.
pub fn write_artifacts(cfg: &ExperimentConfig, cells: &[Result<CellResult, CliError>], out: &Path) -> Result<String, CliError> {
    fs::create_dir_all(out)?;
    fs::write(out.join("config.toml"), cfg.echo())?;
    let mut summary = format!("{SUMMARY_HEADER}\n");
    for cell in cells {
        match cell {
            Ok(c) => {
                let stem = c.stem();
                fs::write(out.join(format!("{stem}_trace.csv")), trace_csv(c))?;
                fs::write(out.join(format!("{stem}_q.csv")), profile_csv("x,q_act,q_rec", &c.q_profile))?;
                fs::write(out.join(format!("{stem}_f.csv")), profile_csv("u,f_act,f_rec", &c.f_profile))?;
                fs::write(out.join(format!("{stem}_data.csv")), &c.data_csv)?;
                summary.push_str(&summary_line(c));
                summary.push('\n');
            }
            Err(e) => {
                let _ = writeln!(summary, ",,,,,,,,,failed: {}", e.to_string().replace(',', ";"));
            }
        }
    }
    fs::write(out.join("summary.csv"), &summary)?;
    Ok(summary)
}

/// `run`: every configured cell, artifacts under `out`.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<Result<CellResult, CliError>>, CliError> {
    let cells = sweep(cfg, &cfg.scheme.names)?;
    write_artifacts(cfg, &cells, out)?;
    Ok(cells)
}

/// Seed-averaged final errors, rows `δ`, columns `α`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTable {
    pub alphas: Vec<f64>,
    pub deltas: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    pub f: Vec<Vec<f64>>,
    /// The same averages divided by `‖q_act‖` and `‖f_act‖`.
    pub q_rel: Vec<Vec<f64>>,
    pub f_rel: Vec<Vec<f64>>,
    /// Per-seed `(α, δ, seed, q error, f error)`.
    pub cells: Vec<(f64, f64, u64, f64, f64)>,
    pub failures: Vec<String>,
}

impl NoiseTable {
    fn index(&self, delta: f64, alpha: f64) -> Option<(usize, usize)> {
        let i = self.deltas.iter().position(|&d| d == delta)?;
        let j = self.alphas.iter().position(|&a| a == alpha)?;
        Some((i, j))
    }

    pub fn cell(&self, delta: f64, alpha: f64) -> Option<(f64, f64)> {
        let (i, j) = self.index(delta, alpha)?;
        Some((self.q[i][j], self.f[i][j]))
    }

    pub fn relative_cell(&self, delta: f64, alpha: f64) -> Option<(f64, f64)> {
        let (i, j) = self.index(delta, alpha)?;
        Some((self.q_rel[i][j], self.f_rel[i][j]))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for (name, block) in [
            ("q error (seed-averaged L2)", &self.q),
            ("f error (seed-averaged L2)", &self.f),
            ("q relative error", &self.q_rel),
            ("f relative error", &self.f_rel),
        ] {
            let _ = writeln!(s, "# {name}");
            let _ = write!(s, "delta");
            for a in &self.alphas {
                let _ = write!(s, ",alpha={a}");
            }
            s.push('\n');
            for (d, row) in self.deltas.iter().zip(block.iter()) {
                let _ = write!(s, "{d}");
                for v in row {
                    let _ = write!(s, ",{v}");
                }
                s.push('\n');
            }
        }
        s
    }
}

/// `table`: the noise sweep of the overall case (b) scheme.
pub fn table_noise_sweep(cfg: &ExperimentConfig) -> Result<NoiseTable, CliError> {
    let scheme = "fxp-b-overall".to_string();
    if !cfg.scheme.names.contains(&scheme) {
        return Err(CliError::Config("scheme.names: the noise table needs fxp-b-overall".into()));
    }
    let cells = sweep(cfg, std::slice::from_ref(&scheme))?;
    let alphas = cfg.alphas();
    let deltas = cfg.noise.deltas.clone();
    let mut q = vec![vec![0.0; alphas.len()]; deltas.len()];
    let mut f = q.clone();
    let mut norms = vec![(f64::NAN, f64::NAN); alphas.len()];
    let mut counts = vec![vec![0usize; alphas.len()]; deltas.len()];
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for c in &cells {
        match c {
            Ok(c) => {
                if let Some(msg) = &c.failure {
                    failures.push(format!("{}: {msg}", c.stem()));
                }
                let (eq, ef) = c.final_errors().unwrap_or((f64::NAN, f64::NAN));
                let i = deltas.iter().position(|&d| d == c.delta).expect("delta from config");
                let j = alphas.iter().position(|&a| a == c.alpha).expect("alpha from config");
                q[i][j] += eq;
                f[i][j] += ef;
                counts[i][j] += 1;
                if let (Some(qn), Some(fnorm)) = (c.trace.q_norm, c.trace.f_norm) {
                    norms[j] = (qn, fnorm);
                }
                rows.push((c.alpha, c.delta, c.seed, eq, ef));
            }
            Err(e) => failures.push(e.to_string()),
        }
    }
    for i in 0..deltas.len() {
        for j in 0..alphas.len() {
            let n = counts[i][j].max(1) as f64;
            q[i][j] /= n;
            f[i][j] /= n;
            if counts[i][j] == 0 {
                q[i][j] = f64::NAN;
                f[i][j] = f64::NAN;
            }
        }
    }
    let rel = |block: &[Vec<f64>], pick: fn((f64, f64)) -> f64| -> Vec<Vec<f64>> {
        block
            .iter()
            .map(|row| row.iter().zip(&norms).map(|(&v, &n)| v / pick(n)).collect())
            .collect()
    };
    let q_rel = rel(&q, |n| n.0);
    let f_rel = rel(&f, |n| n.1);
    Ok(NoiseTable {
        alphas,
        deltas,
        q,
        f,
        q_rel,
        f_rel,
        cells: rows,
        failures,
    })
}

/// Aligned per-iteration errors of several schemes on one data set.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub cells: Vec<CellResult>,
}

impl Comparison {
    pub fn cell(&self, scheme: &str) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.scheme == scheme)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration");
        for c in &self.cells {
            let _ = write!(s, ",{0}_q_error,{0}_f_error", c.scheme);
        }
        s.push('\n');
        let last = self.cells.iter().filter_map(|c| c.trace.last()).map(|r| r.iteration).max().unwrap_or(0);
        for k in 0..=last {
            let _ = write!(s, "{k}");
            for c in &self.cells {
                match c.errors_at(k) {
                    Some((q, f)) => {
                        let _ = write!(s, ",{q},{f}");
                    }
                    None => s.push_str(",,"),
                }
            }
            s.push('\n');
        }
        s.push_str("# matched work: one nonlinear forward solve per excitation and iteration for every scheme\n");
        s.push_str("scheme,iterations,forward_solves,linear_solves,q_error_L2,f_error_L2,status\n");
        for c in &self.cells {
            let it = c.trace.last().map_or(0, |r| r.iteration);
            let (q, f) = c.final_errors().unwrap_or((f64::NAN, f64::NAN));
            let _ = writeln!(s, "{},{},{},{},{},{},{}", c.scheme, it, c.forward_solves, c.linear_solves, q, f, c.status());
        }
        s
    }
}

/// `compare`: all configured schemes at `problem.alpha`, first `δ` and first seed.
pub fn compare_schemes(cfg: &ExperimentConfig) -> Result<Comparison, CliError> {
    let syn = synthesize(cfg, cfg.problem.alpha)?;
    let delta = cfg.noise.deltas[0];
    let seed = cfg.noise.seeds[0];
    let cells = cfg
        .scheme
        .names
        .par_iter()
        .map(|s| run_cell(cfg, &syn, s, delta, seed))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Comparison { cells })
}

/// `contraction`: `𝕊` ratios (and the case (b) map when enabled) around the truth.
pub fn contraction(cfg: &ExperimentConfig) -> Result<ContractionEstimate<f64>, CliError> {
    let c = &cfg.contraction;
    let syn = synthesize(cfg, cfg.problem.alpha)?;
    let mut probe = cfg.clone();
    probe.problem.case = "b".into();
    let setup = case_b_setup(&probe, &syn)?;
    let truth = log_truth(&setup, &syn)?;
    let f_range = span(syn.states.iter().flat_map(|s| {
        let (a, b) = s.min_max();
        [a, b]
    }));
    let build = |horizon: f64, alpha: f64| -> subdiff_core::Result<ProblemSpec<f64>> {
        build_spec(cfg, alpha, horizon).map_err(|e| subdiff_core::Error::InvalidConfig(e.to_string()))
    };
    let map = c.map.then(|| {
        (
            setup.clone(),
            FxpConfig {
                variant: FxpVariant::Split,
                ridge: cfg.scheme.ridge,
                log_floor: cfg.scheme.log_floor,
                ..FxpConfig::default()
            },
        )
    });
    let est = estimate_contraction(&ContractionSetup {
        build: &build,
        horizons: c.horizons.clone(),
        alphas: c.alphas.clone(),
        truth,
        radius: c.radius,
        samples: c.samples,
        seed: c.seed,
        f_range,
        map,
    })?;
    Ok(est)
}

/// `check-data`: admissibility of the noiseless (or first noisy) data.
pub fn check_data(cfg: &ExperimentConfig) -> Result<(bool, String), CliError> {
    let syn = synthesize(cfg, cfg.problem.alpha)?;
    let delta = cfg.noise.deltas[0];
    let noisy = add_noise(&syn.clean, delta, cfg.noise.seeds[0]);
    let data = presmooth(&noisy, syn.spec.bc(), &smoothing(cfg))?;
    let mut s = String::new();
    let mut ok = true;
    match &data.payload {
        Payload::Profiles(g) => {
            let r = check_admissibility(&g[0], &g[1], syn.spec.grid())?;
            let _ = writeln!(s, "admissible,{}", r.passes);
            let _ = writeln!(s, "c_ratio,{}", r.c_ratio);
            let _ = writeln!(s, "c_floor,{}", r.c_floor);
            let _ = writeln!(s, "x_s,{}", r.x_s.map_or("none".into(), |v| v.to_string()));
            let _ = writeln!(s, "range_inclusion,{}", r.range_inclusion);
            for reason in &r.reasons {
                let _ = writeln!(s, "reason,{reason}");
            }
            ok = r.passes;
        }
        Payload::Mixed { trace, .. } => {
            let r = check_range_condition(&syn.states[0], trace);
            let _ = writeln!(s, "range_condition,{}", r.holds);
            let _ = writeln!(s, "margin,{}", r.margin);
            ok = r.holds;
        }
        Payload::Traces { nodes, .. } => {
            let _ = writeln!(s, "traces,{}", nodes.len());
        }
    }
    for w in &data.warnings {
        let _ = writeln!(s, "warning,{w}");
    }
    Ok((ok, s))
}

/// `forward`: truth solves with final profiles and boundary traces.
pub fn forward(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<SpaceTimeField<f64>>, CliError> {
    let syn = synthesize(cfg, cfg.problem.alpha)?;
    fs::create_dir_all(out)?;
    fs::write(out.join("config.toml"), cfg.echo())?;
    let grid = syn.spec.grid();
    let times = syn.spec.times();
    for (i, st) in syn.states.iter().enumerate() {
        let mut p = String::from("x,u_final\n");
        for (x, v) in grid.nodes().iter().zip(st.final_snapshot().iter()) {
            let _ = writeln!(p, "{x},{v}");
        }
        fs::write(out.join(format!("forward_u{}_final.csv", i + 1)), p)?;
        let mut t = String::from("t,u_left,u_right\n");
        let (l, r) = (st.trace(0), st.trace(grid.intervals()));
        for (n, tn) in times.times().iter().enumerate() {
            let _ = writeln!(t, "{tn},{},{}", l[n], r[n]);
        }
        fs::write(out.join(format!("forward_u{}_traces.csv", i + 1)), t)?;
    }
    Ok(syn.states)
}

/// Grid and boundary helpers for callers building specs by hand.
pub fn boundary(cfg: &ExperimentConfig) -> Result<BoundarySpec<f64>, CliError> {
    Ok(BoundarySpec::new(
        parse_bc(&cfg.problem.bc_left).map_err(CliError::Config)?,
        parse_bc(&cfg.problem.bc_right).map_err(CliError::Config)?,
    )?)
}
