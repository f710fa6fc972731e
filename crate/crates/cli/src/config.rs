//! Experiment configuration: TOML with dotted section names, every key defaulted.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::expr::Expr;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemBlock {
    pub alpha: f64,
    pub length: f64,
    pub horizon: f64,
    /// Spatial intervals `M`.
    pub intervals: usize,
    /// Time steps `N`.
    pub steps: usize,
    /// Halve `M` and `N` for a consistency rerun.
    pub half_resolution: bool,
    /// `dirichlet`, `neumann` or `impedance:<γ>`.
    pub bc_left: String,
    pub bc_right: String,
    /// Observation case: `a` (boundary traces), `b` (final profiles), `c` (trace and profile).
    pub case: String,
    /// Sources in `x` and `t`; the second is used by two-excitation cases.
    pub r1: String,
    pub r2: String,
    pub u0_1: String,
    pub u0_2: String,
    /// Boundary trace points for case (a).
    pub points: Vec<f64>,
    /// Trace point for case (c); defaults to `L`.
    pub x0: Option<f64>,
}

impl Default for ProblemBlock {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            length: 1.0,
            horizon: 1.0,
            intervals: 100,
            steps: 200,
            half_resolution: false,
            bc_left: "dirichlet".into(),
            bc_right: "neumann".into(),
            case: "b".into(),
            r1: "40".into(),
            r2: "10".into(),
            u0_1: "0".into(),
            u0_2: "0".into(),
            points: vec![],
            x0: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruthBlock {
    /// `q_act(x)`.
    pub q: String,
    /// `f_act(u)`.
    pub f: String,
}

impl Default for TruthBlock {
    fn default() -> Self {
        Self {
            q: "10*exp(-x/2)".into(),
            f: "exp(u/2)".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeBlock {
    /// `frozen-newton`, `fxp-b-split`, `fxp-b-splitcheck`, `fxp-b-overall` or `fxp-c`.
    pub names: Vec<String>,
    pub max_iter: usize,
    pub q_intervals: usize,
    pub f_intervals: usize,
    /// Relative padding of the state basis beyond the data range.
    pub f_pad: f64,
    /// `x̄` for case (b) and Newton; defaults to `L/2`.
    pub q_anchor: Option<f64>,
    /// `s₀` for case (b).
    pub f_anchor: f64,
    /// Initial guesses; Newton replaces a zero `q0` by `q̄`.
    pub q0: String,
    pub f0: String,
    pub ridge: f64,
    pub log_floor: f64,
    /// Case (c): `direct` or `incremental`.
    pub f_mode: String,
    /// Case (c): `division` or `projected`.
    pub q_mode: String,
    pub check_state: bool,
    pub f_at_trace: bool,
    pub lambda0: f64,
    pub nu: f64,
    pub tau: f64,
    pub newton_max_outer: usize,
    pub refreeze: Option<usize>,
}

impl Default for SchemeBlock {
    fn default() -> Self {
        Self {
            names: vec!["fxp-b-overall".into()],
            max_iter: 30,
            q_intervals: 10,
            f_intervals: 15,
            f_pad: 0.05,
            q_anchor: None,
            f_anchor: 0.0,
            q0: "0".into(),
            f0: "4*u".into(),
            ridge: 1e-10,
            log_floor: 1e-12,
            f_mode: "direct".into(),
            q_mode: "projected".into(),
            check_state: false,
            f_at_trace: false,
            lambda0: 1e-2,
            nu: 0.8,
            tau: 1.2,
            newton_max_outer: 100,
            refreeze: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseBlock {
    pub deltas: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Orders swept by `table` and `run`; empty means `problem.alpha`.
    pub alphas: Vec<f64>,
    pub smoothing_order: usize,
}

impl Default for NoiseBlock {
    fn default() -> Self {
        Self {
            deltas: vec![0.0],
            seeds: vec![0],
            alphas: vec![],
            smoothing_order: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContractionBlock {
    pub horizons: Vec<f64>,
    pub alphas: Vec<f64>,
    pub radius: f64,
    pub samples: usize,
    pub seed: u64,
    /// Include the case (b) map alongside `𝕊`.
    pub map: bool,
}

impl Default for ContractionBlock {
    fn default() -> Self {
        Self {
            horizons: vec![0.5, 1.0, 2.0],
            alphas: vec![1.0],
            radius: 0.05,
            samples: 4,
            seed: 0,
            map: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: String,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemBlock,
    pub truth: TruthBlock,
    pub scheme: SchemeBlock,
    pub noise: NoiseBlock,
    pub contraction: ContractionBlock,
    pub output: OutputBlock,
}

pub const SCHEMES: [&str; 5] = ["frozen-newton", "fxp-b-split", "fxp-b-splitcheck", "fxp-b-overall", "fxp-c"];

fn bad(path: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{path}: {msg}"))
}

fn check_expr(path: &str, src: &str, vars: &[&str]) -> Result<(), CliError> {
    Expr::parse(src)
        .and_then(|e| e.check_variables(vars))
        .map_err(|e| bad(path, e))
}

impl ExperimentConfig {
    pub fn from_str(src: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(src).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let src = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_str(&src)
    }

    /// The resolved configuration as written to each run directory.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn alphas(&self) -> Vec<f64> {
        if self.noise.alphas.is_empty() {
            vec![self.problem.alpha]
        } else {
            self.noise.alphas.clone()
        }
    }

    pub fn resolution(&self) -> (usize, usize) {
        let p = &self.problem;
        if p.half_resolution {
            (p.intervals / 2, p.steps / 2)
        } else {
            (p.intervals, p.steps)
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let p = &self.problem;
        for &a in std::iter::once(&p.alpha).chain(&self.noise.alphas) {
            if !(a > 0.0 && a <= 1.0) {
                return Err(bad("problem.alpha", format!("{a} outside (0, 1]")));
            }
        }
        if !(p.length > 0.0) || !(p.horizon > 0.0) {
            return Err(bad("problem.length", "length and horizon must be positive"));
        }
        let (m, n) = self.resolution();
        if m < 4 || n < 2 {
            return Err(bad("problem.intervals", "need at least 4 intervals and 2 steps"));
        }
        for (path, bc) in [("problem.bc_left", &p.bc_left), ("problem.bc_right", &p.bc_right)] {
            crate::experiment::parse_bc(bc).map_err(|e| bad(path, e))?;
        }
        if !["a", "b", "c"].contains(&p.case.as_str()) {
            return Err(bad("problem.case", format!("unknown case {:?}", p.case)));
        }
        check_expr("problem.r1", &p.r1, &["x", "t"])?;
        check_expr("problem.r2", &p.r2, &["x", "t"])?;
        check_expr("problem.u0_1", &p.u0_1, &["x"])?;
        check_expr("problem.u0_2", &p.u0_2, &["x"])?;
        check_expr("truth.q", &self.truth.q, &["x"])?;
        check_expr("truth.f", &self.truth.f, &["u"])?;
        check_expr("scheme.q0", &self.scheme.q0, &["x"])?;
        check_expr("scheme.f0", &self.scheme.f0, &["u"])?;
        if p.case == "a" && p.points.is_empty() {
            return Err(bad("problem.points", "case (a) needs at least one boundary point"));
        }
        if let Some(x0) = p.x0 {
            if !(x0 > 0.0 && x0 <= p.length) {
                return Err(bad("problem.x0", format!("{x0} outside (0, L]")));
            }
        }
        let s = &self.scheme;
        if s.names.is_empty() {
            return Err(bad("scheme.names", "no scheme selected"));
        }
        for name in &s.names {
            if !SCHEMES.contains(&name.as_str()) {
                return Err(bad("scheme.names", format!("unknown scheme {name:?}")));
            }
            let needs = match name.as_str() {
                "fxp-c" => Some("c"),
                "frozen-newton" => None,
                _ => Some("b"),
            };
            if let Some(case) = needs {
                if p.case != case {
                    return Err(bad("scheme.names", format!("{name} needs problem.case = {case:?}")));
                }
            }
        }
        if let Some(xb) = s.q_anchor {
            if !(0.0..=p.length).contains(&xb) {
                return Err(bad("scheme.q_anchor", format!("{xb} outside [0, L]")));
            }
        }
        if s.q_intervals < 2 || s.f_intervals < 2 {
            return Err(bad("scheme.q_intervals", "bases need at least two intervals"));
        }
        if !["direct", "incremental"].contains(&s.f_mode.as_str()) {
            return Err(bad("scheme.f_mode", format!("unknown mode {:?}", s.f_mode)));
        }
        if !["division", "projected"].contains(&s.q_mode.as_str()) {
            return Err(bad("scheme.q_mode", format!("unknown mode {:?}", s.q_mode)));
        }
        if !(s.lambda0 > 0.0 && s.nu > 0.0 && s.nu <= 1.0 && s.tau > 1.0) {
            return Err(bad("scheme.lambda0", "newton needs lambda0 > 0, nu in (0, 1], tau > 1"));
        }
        for &d in &self.noise.deltas {
            if !(0.0..1.0).contains(&d) {
                return Err(bad("noise.deltas", format!("{d} outside [0, 1)")));
            }
        }
        if self.noise.seeds.is_empty() {
            return Err(bad("noise.seeds", "at least one seed"));
        }
        let c = &self.contraction;
        if c.samples < 2 {
            return Err(bad("contraction.samples", "at least two samples"));
        }
        if c.horizons.iter().any(|&t| !(t > 0.0)) {
            return Err(bad("contraction.horizons", "horizons must be positive"));
        }
        Ok(())
    }
}
