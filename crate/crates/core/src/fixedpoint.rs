//! Fixed-point reconstruction from final-time profiles (case b) and from a trace plus a
//! profile (case c).
//!
//! Case (b) works in log space: with `Sⁱ = −∂ₜᵅuⁱ(T) + Δgⁱ + rⁱ(T)` the projected equation
//! reads `log q + log f(gⁱ) = log|Sⁱ|`, and `(log q, log f)` are fitted to the right-hand
//! sides either jointly ("overall") or `f` first from the difference of the two
//! excitations ("split").

use std::time::Instant;

use rayon::prelude::*;

use crate::caputo::{caputo_final, caputo_series, SpaceTimeField};
use crate::coeffs::{ExpReaction, HatBasis, Nonlinearity, Potential, Reaction};
use crate::error::{check_len, Error, Result};
use crate::forward::{solve_all, solve_forward, ProblemSpec};
use crate::linalg::{max_abs, norm2, Cholesky, Matrix};
use crate::mesh::{laplacian_apply, trapezoid_weights, Field, LaplacianMode};
use crate::observe::{check_range_condition, ObservationData, Payload};
use crate::scalar::Real;
use crate::trace::{IterationRecord, IterationTrace, Truth};

/// `r̃ = log|S|` with floor flags.
#[derive(Debug, Clone, PartialEq)]
pub struct LogResidual<T> {
    pub values: Field<T>,
    pub clamped: Vec<bool>,
}

impl<T: Real> LogResidual<T> {
    pub fn clamp_count(&self) -> usize {
        self.clamped.iter().filter(|&&c| c).count()
    }
}

/// `S = −∂ₜᵅu(T) + Δ_h g + r(T)`, the value of `q f(g)` implied by the equation.
pub fn projected_source<T: Real>(
    spec: &ProblemSpec<T>,
    state: &SpaceTimeField<T>,
    g: &Field<T>,
    r_final: &Field<T>,
) -> Result<Field<T>> {
    let dt_u = caputo_final(state, spec.weights())?;
    let lap = laplacian_apply(g, spec.grid(), spec.bc(), LaplacianMode::Measured)?;
    r_final.check_on(spec.grid())?;
    Ok(Field(
        (0..g.len())
            .map(|j| -dt_u[j] + lap[j] + r_final[j])
            .collect(),
    ))
}

pub fn log_residuals<T: Real>(
    spec: &ProblemSpec<T>,
    state: &SpaceTimeField<T>,
    g: &Field<T>,
    r_final: &Field<T>,
    floor: T,
) -> Result<LogResidual<T>> {
    Ok(log_of(&projected_source(spec, state, g, r_final)?, floor))
}

fn log_of<T: Real>(s: &[T], floor: T) -> LogResidual<T> {
    let mut clamped = vec![false; s.len()];
    let values = s
        .iter()
        .enumerate()
        .map(|(j, &v)| {
            let a = v.abs();
            if a < floor || !a.is_finite() {
                clamped[j] = true;
                floor.ln()
            } else {
                a.ln()
            }
        })
        .collect();
    LogResidual {
        values: Field(values),
        clamped,
    }
}

/// Least-squares form of the scheme variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FxpVariant {
    /// `f` from the excitation difference, then `q` by projection.
    Split,
    /// As `Split`, with the state re-solved using the new `f` before the `q` step.
    SplitCheck,
    /// Joint block system for `(q, f)`.
    Overall,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FxpConfig<T> {
    pub variant: FxpVariant,
    pub max_iter: usize,
    /// Gram ridge relative to the largest diagonal entry.
    pub ridge: T,
    pub log_floor: T,
    /// Stop once the coefficient update falls below this.
    pub stagnation: T,
}

impl<T: Real> Default for FxpConfig<T> {
    fn default() -> Self {
        Self {
            variant: FxpVariant::Overall,
            max_iter: 30,
            ridge: T::lit(1e-10),
            log_floor: T::lit(1e-12),
            stagnation: T::lit(1e-12),
        }
    }
}

impl<T: Real> FxpConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.ridge > T::zero()) || !(self.log_floor > T::zero()) {
            return Err(Error::InvalidConfig("ridge and log floor must be positive".into()));
        }
        Ok(())
    }
}

/// Solves the Gram system `(A + ε max|diag A| I) x = rhs` by Cholesky.
fn solve_gram<T: Real>(mut a: Matrix<T>, rhs: &[T], ridge: T) -> Result<Vec<T>> {
    let scale = a.max_abs_diag();
    if scale == T::zero() {
        return Ok(vec![T::zero(); rhs.len()]);
    }
    a.add_ridge(ridge * scale);
    let chol = Cholesky::factor(&a).map_err(|e| {
        Error::Singular(format!("Gram system not positive definite after ridge ({e})"))
    })?;
    let cond = chol.condition_estimate();
    if !cond.is_finite() || cond > T::one() / (T::epsilon() * T::lit(10.0)) {
        return Err(Error::Singular(format!("Gram system condition estimate {cond}")));
    }
    chol.solve(rhs)
}

/// `Φᵀ W Ψ` for design matrices sharing rows.
fn weighted_cross<T: Real>(phi: &Matrix<T>, psi: &Matrix<T>, w: &[T]) -> Matrix<T> {
    let mut out = Matrix::zeros(phi.cols(), psi.cols());
    for (r, &wr) in w.iter().enumerate() {
        for i in 0..phi.cols() {
            let a = phi[(r, i)] * wr;
            if a == T::zero() {
                continue;
            }
            for j in 0..psi.cols() {
                out[(i, j)] += a * psi[(r, j)];
            }
        }
    }
    out
}

fn weighted_rhs<T: Real>(phi: &Matrix<T>, v: &[T], w: &[T]) -> Vec<T> {
    let wv: Vec<T> = v.iter().zip(w).map(|(&a, &b)| a * b).collect();
    phi.tr_mul_vec(&wv).expect("design rows match data length")
}

fn difference_design<T: Real>(basis: &HatBasis<T>, g1: &[T], g2: &[T]) -> Matrix<T> {
    let d1 = basis.design(g1);
    let d2 = basis.design(g2);
    let mut d = d1;
    for i in 0..d.rows() {
        for j in 0..d.cols() {
            d[(i, j)] -= d2[(i, j)];
        }
    }
    d
}

/// The `f` step of the split variant.
///
/// `A_{jn} = ∫(θ_j∘g¹ − θ_j∘g²)(θ_n∘g¹ − θ_n∘g²)`, `𝔯_j = ∫(r̃¹ − r̃²)(θ_j∘g¹ − θ_j∘g²)`.
pub fn fxp_b_f_system<T: Real>(
    diff: &[T],
    g1: &Field<T>,
    g2: &Field<T>,
    basis: &HatBasis<T>,
    weights: &[T],
    ridge: T,
) -> Result<Vec<T>> {
    check_len(g1.len(), diff.len())?;
    let d = difference_design(basis, g1, g2);
    let a = weighted_cross(&d, &d, weights);
    solve_gram(a, &weighted_rhs(&d, diff, weights), ridge)
}

/// Gram matrix of the split `f` step, exposed for inspection.
pub fn fxp_b_f_gram<T: Real>(g1: &Field<T>, g2: &Field<T>, basis: &HatBasis<T>, weights: &[T]) -> Matrix<T> {
    let d = difference_design(basis, g1, g2);
    weighted_cross(&d, &d, weights)
}

/// The `q` step: projects `target − base` onto the spatial basis (`target` already has
/// `f̃∘g¹` removed).
pub fn fxp_b_q_update<T: Real>(
    target: &[T],
    base: T,
    basis: &HatBasis<T>,
    x: &[T],
    weights: &[T],
    ridge: T,
) -> Result<Vec<T>> {
    check_len(x.len(), target.len())?;
    let b = basis.design(x);
    let a = weighted_cross(&b, &b, weights);
    let rhs: Vec<T> = target.iter().map(|&v| v - base).collect();
    solve_gram(a, &weighted_rhs(&b, &rhs, weights), ridge)
}

/// Mass matrix of the spatial basis.
pub fn mass_matrix<T: Real>(basis: &HatBasis<T>, x: &[T], weights: &[T]) -> Matrix<T> {
    let b = basis.design(x);
    weighted_cross(&b, &b, weights)
}

/// Block system `[A^{qq} A^{qf}; A^{qfᵀ} A^{ff}] (a; b) = (𝔯^q; 𝔯^f)` for residuals that
/// already have the anchor values subtracted.
pub fn fxp_b_overall_matrix<T: Real>(
    g: [&Field<T>; 2],
    q_basis: &HatBasis<T>,
    f_basis: &HatBasis<T>,
    x: &[T],
    weights: &[T],
) -> Matrix<T> {
    let chi = q_basis.design(x);
    let (m, n) = (q_basis.len(), f_basis.len());
    let mut a = Matrix::zeros(m + n, m + n);
    for gi in g {
        let th = f_basis.design(gi);
        let qq = weighted_cross(&chi, &chi, weights);
        let qf = weighted_cross(&chi, &th, weights);
        let ff = weighted_cross(&th, &th, weights);
        for i in 0..m {
            for j in 0..m {
                a[(i, j)] += qq[(i, j)];
            }
            for j in 0..n {
                a[(i, m + j)] += qf[(i, j)];
                a[(m + j, i)] += qf[(i, j)];
            }
        }
        for i in 0..n {
            for j in 0..n {
                a[(m + i, m + j)] += ff[(i, j)];
            }
        }
    }
    a
}

pub fn fxp_b_overall_step<T: Real>(
    rt: [&[T]; 2],
    g: [&Field<T>; 2],
    q_basis: &HatBasis<T>,
    f_basis: &HatBasis<T>,
    x: &[T],
    weights: &[T],
    ridge: T,
) -> Result<(Vec<T>, Vec<T>)> {
    let m = q_basis.len();
    let a = fxp_b_overall_matrix(g, q_basis, f_basis, x, weights);
    let chi = q_basis.design(x);
    let mut rhs = vec![T::zero(); m + f_basis.len()];
    for (ri, gi) in rt.iter().zip(g) {
        check_len(x.len(), ri.len())?;
        let th = f_basis.design(gi);
        for (o, v) in rhs.iter_mut().zip(weighted_rhs(&chi, ri, weights)) {
            *o += v;
        }
        for (o, v) in rhs[m..].iter_mut().zip(weighted_rhs(&th, ri, weights)) {
            *o += v;
        }
    }
    let sol = solve_gram(a, &rhs, ridge)?;
    Ok((sol[..m].to_vec(), sol[m..].to_vec()))
}

/// Log-space pair `(q̃, f̃)`; the coefficients are `(exp q̃, exp ∘ f̃)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogPair<T> {
    pub q: Potential<T>,
    pub f: Nonlinearity<T>,
}

impl<T: Real> LogPair<T> {
    /// Anchored pair: `q̃ = log q̄ + Σ a χ̃`, `f̃ = log f₀ + Σ b θ̃`.
    pub fn anchored(q_basis: HatBasis<T>, q_bar: T, f_basis: HatBasis<T>, f0: T) -> Result<Self> {
        if !(q_bar > T::zero() && f0 > T::zero()) {
            return Err(Error::InvalidConfig("log anchors need q̄ > 0 and f₀ > 0".into()));
        }
        Ok(Self {
            q: Potential::constant(q_basis, q_bar.ln()),
            f: Nonlinearity::affine(f_basis, f0.ln(), T::zero()),
        })
    }

    pub fn q_nodal(&self, spec: &ProblemSpec<T>) -> Field<T> {
        self.q.nodal(spec.grid()).map(|v| v.exp())
    }

    pub fn q_at(&self, x: T) -> T {
        self.q.eval(x).exp()
    }

    pub fn reaction(&self) -> ExpReaction<T> {
        ExpReaction(self.f.clone())
    }
}

/// Bases and anchors for the case (b) schemes.
#[derive(Debug, Clone, PartialEq)]
pub struct FxpBSetup<T> {
    pub q_basis: HatBasis<T>,
    pub f_basis: HatBasis<T>,
    pub q_bar: T,
    pub f0: T,
}

#[derive(Debug, Clone)]
pub struct FxpBOutcome<T> {
    pub pair: LogPair<T>,
    pub trace: IterationTrace<T>,
}

/// Initial guess for the iteration: nodal `q⁰` and any reaction `f⁰`.
pub struct InitialGuess<'a, T> {
    pub q: Field<T>,
    pub f: &'a dyn Reaction<T>,
}

fn final_sources<T: Real>(spec: &ProblemSpec<T>) -> Vec<Field<T>> {
    spec.excitations().iter().map(|e| e.source.final_value().clone()).collect()
}

/// `‖Sⁱ − q fⁱ(gⁱ)‖` summed over excitations.
fn equation_misfit<T: Real>(s: &[Field<T>], q: &Field<T>, f: &dyn Reaction<T>, g: &[Field<T>], w: &[T]) -> T {
    let mut acc = T::zero();
    for (si, gi) in s.iter().zip(g) {
        for j in 0..si.len() {
            let d = si[j] - q[j] * f.eval(gi[j]);
            acc += w[j] * d * d;
        }
    }
    acc.sqrt()
}

/// Result of one application of the case (b) map.
#[derive(Debug, Clone)]
pub struct FxpBStep<T> {
    pub pair: LogPair<T>,
    /// `‖Sⁱ − q f(gⁱ)‖` at the input pair.
    pub misfit: T,
    pub clamped: usize,
}

fn case_b_profiles<T: Real>(spec: &ProblemSpec<T>, data: &ObservationData<T>) -> Result<Vec<Field<T>>> {
    let g = match &data.payload {
        Payload::Profiles(g) if g.len() == 2 => g.clone(),
        _ => return Err(Error::InvalidConfig("case (b) needs two final-time profiles".into())),
    };
    if !data.smoothed {
        return Err(Error::InvalidConfig("noisy profiles must be pre-smoothed first".into()));
    }
    if spec.excitations().len() != 2 {
        return Err(Error::InvalidConfig("case (b) needs two excitations".into()));
    }
    Ok(g)
}

/// The coefficient update given the states `uⁱ` induced by `(q, f)`.
pub fn fxp_b_update<T: Real>(
    spec: &ProblemSpec<T>,
    states: &[SpaceTimeField<T>],
    g: &[Field<T>],
    setup: &FxpBSetup<T>,
    q: &Field<T>,
    f: &dyn Reaction<T>,
    cfg: &FxpConfig<T>,
) -> Result<FxpBStep<T>> {
    check_len(2, g.len())?;
    check_len(2, states.len())?;
    let grid = spec.grid();
    let x = grid.nodes();
    let w = equation_weights(spec);
    let r_final = final_sources(spec);
    let log_qbar = setup.q_bar.ln();
    let log_f0 = setup.f0.ln();
    let template = LogPair::anchored(setup.q_basis.clone(), setup.q_bar, setup.f_basis.clone(), setup.f0)?;

    let s_vals = projected_sources(spec, states, g)?;
    let lr: Vec<LogResidual<T>> = s_vals.iter().map(|s| log_of(s, cfg.log_floor)).collect();
    let misfit = equation_misfit(&s_vals, q, f, g, &w);
    let clamped = lr.iter().map(LogResidual::clamp_count).sum();

    let (a, b) = match cfg.variant {
        FxpVariant::Overall => {
            let shifted: Vec<Vec<T>> = lr
                .iter()
                .map(|l| l.values.iter().map(|&v| v - log_qbar - log_f0).collect())
                .collect();
            fxp_b_overall_step(
                [&shifted[0], &shifted[1]],
                [&g[0], &g[1]],
                &setup.q_basis,
                &setup.f_basis,
                &x,
                &w,
                cfg.ridge,
            )?
        }
        FxpVariant::Split | FxpVariant::SplitCheck => {
            let diff: Vec<T> = lr[0].values.iter().zip(lr[1].values.iter()).map(|(&p, &q)| p - q).collect();
            let b = fxp_b_f_system(&diff, &g[0], &g[1], &setup.f_basis, &w, cfg.ridge)?;
            let f_new = template.f.with_coeffs(b.clone())?;
            let rt1 = if cfg.variant == FxpVariant::SplitCheck {
                let check = solve_forward(spec, q, &ExpReaction(f_new.clone()), 0)?;
                log_residuals(spec, &check, &g[0], &r_final[0], cfg.log_floor)?.values
            } else {
                lr[0].values.clone()
            };
            let target: Vec<T> = rt1.iter().zip(g[0].iter()).map(|(&r, &gj)| r - f_new.eval(gj)).collect();
            let a = fxp_b_q_update(&target, log_qbar, &setup.q_basis, &x, &w, cfg.ridge)?;
            (a, b)
        }
    };
    Ok(FxpBStep {
        pair: LogPair {
            q: template.q.with_coeffs(a)?,
            f: template.f.with_coeffs(b)?,
        },
        misfit,
        clamped,
    })
}

/// One application of the case (b) fixed-point map to a log pair.
pub fn fxp_b_map<T: Real>(
    spec: &ProblemSpec<T>,
    g: &[Field<T>],
    setup: &FxpBSetup<T>,
    pair: &LogPair<T>,
    cfg: &FxpConfig<T>,
) -> Result<FxpBStep<T>> {
    let q = pair.q_nodal(spec);
    let f = pair.reaction();
    let states = solve_all(spec, &q, &f)?;
    fxp_b_update(spec, &states, g, setup, &q, &f, cfg)
}

fn coefficient_change<T: Real>(a: &LogPair<T>, b: &LogPair<T>) -> T {
    let d: Vec<T> = a
        .q
        .coeffs()
        .iter()
        .zip(b.q.coeffs())
        .map(|(&u, &v)| u - v)
        .chain(a.f.coeffs().iter().zip(b.f.coeffs()).map(|(&u, &v)| u - v))
        .collect();
    norm2(&d)
}

/// Case (b) fixed-point iteration on pre-smoothed profiles.
pub fn fxp_b_iterate<T: Real>(
    spec: &ProblemSpec<T>,
    data: &ObservationData<T>,
    setup: &FxpBSetup<T>,
    init: &InitialGuess<'_, T>,
    cfg: &FxpConfig<T>,
    truth: Option<&Truth<'_, T>>,
) -> Result<FxpBOutcome<T>> {
    cfg.validate()?;
    let g = case_b_profiles(spec, data)?;
    let grid = spec.grid();
    let mut pair = LogPair::anchored(setup.q_basis.clone(), setup.q_bar, setup.f_basis.clone(), setup.f0)?;
    let mut trace = truth.map_or_else(IterationTrace::new, |t| t.init_trace(grid));
    let started = Instant::now();
    let mut q_nodal = init.q.clone();
    let mut current: Option<ExpReaction<T>> = None;

    for k in 1..=cfg.max_iter {
        let f_ref: &dyn Reaction<T> = match &current {
            Some(r) => r,
            None => init.f,
        };
        let states = match solve_all(spec, &q_nodal, f_ref) {
            Ok(s) => s,
            Err(e) => {
                trace.failure = Some(format!("forward solve failed at iteration {k}: {e}"));
                break;
            }
        };
        let step = fxp_b_update(spec, &states, &g, setup, &q_nodal, f_ref, cfg)?;
        let change = coefficient_change(&step.pair, &pair);
        pair = step.pair;
        q_nodal = pair.q_nodal(spec);
        let reaction = pair.reaction();
        trace.records.push(IterationRecord {
            iteration: k,
            residual: step.misfit,
            q_error: truth.map(|t| t.q_error(&q_nodal, grid)),
            f_error: truth.map(|t| t.f_error(&reaction)),
            lambda: None,
            clamped: step.clamped,
            wall_time: started.elapsed(),
        });
        current = Some(reaction);
        if change < cfg.stagnation {
            break;
        }
    }
    Ok(FxpBOutcome { pair, trace })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FUpdateMode {
    Direct,
    Incremental,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QUpdateMode {
    Division,
    Projected,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FxpCConfig<T> {
    pub max_iter: usize,
    pub f_mode: FUpdateMode,
    pub q_mode: QUpdateMode,
    /// Re-solve the state with the new `f` before the `q` step.
    pub check_state: bool,
    /// Evaluate the old `f` at the measured trace instead of the iterate's trace.
    pub f_at_trace: bool,
    pub ridge: T,
    /// Smallest admissible `|f(g)|` in division.
    pub division_floor: T,
    pub stagnation: T,
}

impl<T: Real> Default for FxpCConfig<T> {
    fn default() -> Self {
        Self {
            max_iter: 40,
            f_mode: FUpdateMode::Direct,
            q_mode: QUpdateMode::Projected,
            check_state: false,
            f_at_trace: false,
            ridge: T::lit(1e-10),
            division_floor: T::lit(1e-8),
            stagnation: T::lit(1e-12),
        }
    }
}

/// Least squares in time for `q₁ f^{k+1}(h(t)) = 𝔟(t)` over `t ∈ [Δt, T]`.
#[allow(clippy::too_many_arguments)]
pub fn fxp_c_f_update<T: Real>(
    spec: &ProblemSpec<T>,
    h: &[T],
    state: &SpaceTimeField<T>,
    node: usize,
    q1: T,
    fk: &Nonlinearity<T>,
    mode: FUpdateMode,
    f_at_trace: bool,
    ridge: T,
) -> Result<Nonlinearity<T>> {
    let steps = spec.times().steps();
    check_len(steps + 1, h.len())?;
    if !(q1.abs() > T::zero()) {
        return Err(Error::InvalidConfig("q₁ must be nonzero".into()));
    }
    let w = spec.weights();
    let dh = caputo_series(h, w)?;
    let uk = state.trace(node);
    let du = caputo_series(&uk, w)?;
    let basis = fk.basis();
    let hs = &h[1..];
    let theta = basis.design(hs);
    let mut wt = trapezoid_weights(steps, spec.times().dt());
    // nodes 1..N: full weight except at T
    for v in wt.iter_mut().take(steps - 1) {
        *v = spec.times().dt();
    }
    let rhs_b: Vec<T> = (1..=steps)
        .map(|n| {
            let mut b = -dh[n] + du[n];
            if mode == FUpdateMode::Direct {
                let arg = if f_at_trace { h[n] } else { uk[n] };
                b += q1 * fk.eval(arg);
            }
            b
        })
        .collect();
    let mut a = weighted_cross(&theta, &theta, &wt);
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            a[(i, j)] *= q1;
        }
    }
    let coef = solve_gram(a, &weighted_rhs(&theta, &rhs_b, &wt), ridge).map_err(|e| {
        let (lo, hi) = hs.iter().fold((T::infinity(), T::neg_infinity()), |(a, b), &v| (a.min(v), b.max(v)));
        Error::Singular(format!(
            "{e}; trace covers [{lo}, {hi}] of the state basis [{}, {}]",
            basis.lo(),
            basis.hi()
        ))
    })?;
    match mode {
        FUpdateMode::Direct => Nonlinearity::new(basis.clone(), coef, T::zero(), T::zero()),
        FUpdateMode::Incremental => {
            let c: Vec<T> = fk.coeffs().iter().zip(&coef).map(|(&a, &b)| a + b).collect();
            fk.with_coeffs(c)
        }
    }
}

/// `q^{k+1}` from `𝔞 = S / f^{k+1}(g)` by nodal division or by projection anchored at `x₀`.
#[allow(clippy::too_many_arguments)]
pub fn fxp_c_q_update<T: Real>(
    spec: &ProblemSpec<T>,
    state: &SpaceTimeField<T>,
    g: &Field<T>,
    r_final: &Field<T>,
    f_next: &dyn Reaction<T>,
    q_basis: &HatBasis<T>,
    q1: T,
    mode: QUpdateMode,
    division_floor: T,
    ridge: T,
) -> Result<Potential<T>> {
    let grid = spec.grid();
    let s = projected_source(spec, state, g, r_final)?;
    let fg = f_next.eval_field(g);
    let bad: Vec<usize> = (0..fg.len()).filter(|&j| !(fg[j].abs() >= division_floor)).collect();
    if !bad.is_empty() {
        return Err(Error::SmallDivisor(bad));
    }
    let a: Vec<T> = s.iter().zip(fg.iter()).map(|(&n, &d)| n / d).collect();
    match mode {
        QUpdateMode::Division => {
            let basis = HatBasis::spatial(grid.length(), grid.intervals(), None)?;
            Potential::new(basis, a, T::zero())
        }
        QUpdateMode::Projected => {
            let x = grid.nodes();
            let w = equation_weights(spec);
            let coeffs = fxp_b_q_update(&a, q1, q_basis, &x, &w, ridge)?;
            Potential::new(q_basis.clone(), coeffs, q1)
        }
    }
}

/// Trapezoid weights with Dirichlet end nodes dropped, where the equation is not imposed.
pub fn equation_weights<T: Real>(spec: &ProblemSpec<T>) -> Vec<T> {
    let grid = spec.grid();
    let mut w = trapezoid_weights(grid.node_count(), grid.dx());
    let m = w.len() - 1;
    if spec.bc().left.is_dirichlet() {
        w[0] = T::zero();
    }
    if spec.bc().right.is_dirichlet() {
        w[m] = T::zero();
    }
    w
}

/// Bases and anchor for case (c): `q(x₀) = q₁`.
#[derive(Debug, Clone, PartialEq)]
pub struct FxpCSetup<T> {
    pub q_basis: HatBasis<T>,
    pub f_basis: HatBasis<T>,
    pub q1: T,
}

#[derive(Debug, Clone)]
pub struct FxpCOutcome<T> {
    pub q: Potential<T>,
    pub f: Nonlinearity<T>,
    pub trace: IterationTrace<T>,
    /// Margin of the state range inside the trace range at the last iterate.
    pub range_margin: Option<T>,
}

/// Case (c): alternating `f` and `q` updates from a trace at `x₀` and a final profile.
pub fn fxp_c_iterate<T: Real>(
    spec: &ProblemSpec<T>,
    data: &ObservationData<T>,
    setup: &FxpCSetup<T>,
    q0: &Field<T>,
    f0: &Nonlinearity<T>,
    cfg: &FxpCConfig<T>,
    truth: Option<&Truth<'_, T>>,
) -> Result<FxpCOutcome<T>> {
    let (node, h, g) = match &data.payload {
        Payload::Mixed { node, trace, profile } => (*node, trace.clone(), profile.clone()),
        _ => return Err(Error::InvalidConfig("case (c) needs a trace and a profile".into())),
    };
    if node == 0 {
        return Err(Error::InvalidConfig("trace point x0 must be positive".into()));
    }
    if !data.smoothed {
        return Err(Error::InvalidConfig("noisy data must be pre-smoothed first".into()));
    }
    if f0.basis() != &setup.f_basis {
        return Err(Error::InvalidConfig("initial f must live on the case (c) state basis".into()));
    }
    let grid = spec.grid();
    let w = equation_weights(spec);
    let r_final = spec.excitation(0)?.source.final_value().clone();
    let mut trace = truth.map_or_else(IterationTrace::new, |t| t.init_trace(grid));
    let started = Instant::now();

    let mut q_nodal = q0.clone();
    let mut q = Potential::new(
        HatBasis::spatial(grid.length(), grid.intervals(), None)?,
        q0.to_vec(),
        T::zero(),
    )?;
    let mut f = f0.clone();
    let mut margin = None;
    for k in 1..=cfg.max_iter {
        let state = match solve_forward(spec, &q_nodal, &f, 0) {
            Ok(s) => s,
            Err(e) => {
                trace.failure = Some(format!("forward solve failed at iteration {k}: {e}"));
                break;
            }
        };
        margin = Some(check_range_condition(&state, &h).margin);
        let s = projected_source(spec, &state, &g, &r_final)?;
        let misfit = equation_misfit(std::slice::from_ref(&s), &q_nodal, &f, std::slice::from_ref(&g), &w);
        let f_next = fxp_c_f_update(spec, &h, &state, node, setup.q1, &f, cfg.f_mode, cfg.f_at_trace, cfg.ridge)?;
        let q_state = if cfg.check_state {
            solve_forward(spec, &q_nodal, &f_next, 0)?
        } else {
            state
        };
        let q_next = fxp_c_q_update(
            spec,
            &q_state,
            &g,
            &r_final,
            &f_next,
            &setup.q_basis,
            setup.q1,
            cfg.q_mode,
            cfg.division_floor,
            cfg.ridge,
        )?;
        let q_next_nodal = q_next.nodal(grid);
        let step = max_abs(
            &q_next_nodal
                .iter()
                .zip(q_nodal.iter())
                .map(|(&a, &b)| a - b)
                .chain(f_next.coeffs().iter().zip(f.coeffs()).map(|(&a, &b)| a - b))
                .collect::<Vec<_>>(),
        );
        q = q_next;
        q_nodal = q_next_nodal;
        f = f_next;
        trace.records.push(IterationRecord {
            iteration: k,
            residual: misfit,
            q_error: truth.map(|t| t.q_error(&q_nodal, grid)),
            f_error: truth.map(|t| t.f_error(&f)),
            lambda: None,
            clamped: 0,
            wall_time: started.elapsed(),
        });
        if step < cfg.stagnation {
            break;
        }
    }
    Ok(FxpCOutcome {
        q,
        f,
        trace,
        range_margin: margin,
    })
}

/// Runs `solve_all` for a log pair; convenience for the analysis tools.
pub fn solve_log_pair<T: Real>(spec: &ProblemSpec<T>, pair: &LogPair<T>) -> Result<Vec<SpaceTimeField<T>>> {
    solve_all(spec, &pair.q_nodal(spec), &pair.reaction())
}

/// Both projected sources at a given state pair, in parallel.
pub fn projected_sources<T: Real>(
    spec: &ProblemSpec<T>,
    states: &[SpaceTimeField<T>],
    g: &[Field<T>],
) -> Result<Vec<Field<T>>> {
    let r = final_sources(spec);
    states
        .par_iter()
        .zip(g.par_iter())
        .zip(r.par_iter())
        .map(|((s, gi), ri)| projected_source(spec, s, gi, ri))
        .collect()
}
