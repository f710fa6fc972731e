//! Analysis tools: the operator `Ψ(f) = log f∘g¹ − log f∘g²` and its constructive
//! inverse, the operator `𝕊`, empirical contraction ratios and the `u_t` decay fit.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::caputo::SpaceTimeField;
use crate::coeffs::{HatBasis, Nonlinearity, Reaction};
use crate::error::{check_len, Error, Result};
use crate::fixedpoint::{fxp_b_update, projected_sources, FxpBSetup, FxpConfig, LogPair};
use crate::forward::{solve_all, ProblemSpec};
use crate::mesh::{Field, Grid1D};
use crate::observe::{check_admissibility, AdmissibilityReport};
use crate::scalar::Real;

/// An admissible profile pair with the anchor `f(s₀) = f₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiContext<T> {
    grid: Grid1D<T>,
    g1: Field<T>,
    g2: Field<T>,
    report: AdmissibilityReport<T>,
    s0: T,
    f0: T,
}

const BISECTION_TOL: f64 = 1e-12;

/// Second-order nodal derivative.
fn nodal_derivative<T: Real>(v: &[T], h: T) -> Vec<T> {
    let n = v.len();
    let two = T::lit(2.0);
    (0..n)
        .map(|j| {
            if j == 0 {
                (-T::lit(3.0) * v[0] + T::lit(4.0) * v[1] - v[2]) / (two * h)
            } else if j == n - 1 {
                (T::lit(3.0) * v[n - 1] - T::lit(4.0) * v[n - 2] + v[n - 3]) / (two * h)
            } else {
                (v[j + 1] - v[j - 1]) / (two * h)
            }
        })
        .collect()
}

/// Piecewise-linear interpolation on ascending `xs`, linear extension outside.
fn interp<T: Real>(xs: &[T], ys: &[T], x: T) -> T {
    let n = xs.len();
    let j = match xs.iter().position(|&v| v > x) {
        Some(0) => 0,
        Some(k) => (k - 1).min(n - 2),
        None => n - 2,
    };
    let t = (x - xs[j]) / (xs[j + 1] - xs[j]);
    ys[j] + t * (ys[j + 1] - ys[j])
}

fn sup<T: Real>(v: impl IntoIterator<Item = T>) -> T {
    v.into_iter().fold(T::zero(), |m, x| m.max(x.abs()))
}

impl<T: Real> PsiContext<T> {
    pub fn new(grid: Grid1D<T>, g1: Field<T>, g2: Field<T>, s0: T, f0: T) -> Result<Self> {
        let report = check_admissibility(&g1, &g2, &grid)?;
        if !report.passes {
            return Err(Error::Inadmissible(report.reasons.join("; ")));
        }
        let (lo, hi) = (g1[0].min(*g1.last().unwrap()), g1[0].max(*g1.last().unwrap()));
        if s0 < lo || s0 > hi {
            return Err(Error::Inadmissible(format!("anchor s0 = {s0} outside the g1 range [{lo}, {hi}]")));
        }
        if !(f0 > T::zero()) {
            return Err(Error::Inadmissible(format!("anchor value f0 = {f0} must be positive")));
        }
        Ok(Self {
            grid,
            g1,
            g2,
            report,
            s0,
            f0,
        })
    }

    pub fn report(&self) -> &AdmissibilityReport<T> {
        &self.report
    }

    pub fn grid(&self) -> &Grid1D<T> {
        &self.grid
    }

    pub fn anchor(&self) -> (T, T) {
        (self.s0, self.f0)
    }

    /// `[min g¹, max g¹]`.
    pub fn range(&self) -> (T, T) {
        let (a, b) = (self.g1[0], *self.g1.last().unwrap());
        (a.min(b), a.max(b))
    }

    fn g1_at(&self, x: T) -> T {
        interp(&self.grid.nodes(), &self.g1, x)
    }

    /// `(g¹)⁻¹(s)` by bisection on the piecewise-linear interpolant.
    pub fn g1_inverse(&self, s: T) -> T {
        let increasing = *self.g1.last().unwrap() > self.g1[0];
        let (mut a, mut b) = (T::zero(), self.grid.length());
        let tol = T::lit(BISECTION_TOL) * self.grid.length();
        while b - a > tol {
            let m = (a + b) / T::lit(2.0);
            if (self.g1_at(m) < s) == increasing {
                a = m;
            } else {
                b = m;
            }
        }
        (a + b) / T::lit(2.0)
    }

    /// `g¹` values in ascending order with the node permutation.
    fn ascending(&self) -> (Vec<T>, Vec<usize>) {
        let n = self.g1.len();
        let order: Vec<usize> = if *self.g1.last().unwrap() > self.g1[0] {
            (0..n).collect()
        } else {
            (0..n).rev().collect()
        };
        (order.iter().map(|&j| self.g1[j]).collect(), order)
    }
}

/// `Ψ(f) = log(f∘g¹) − log(f∘g²)` nodewise.
pub fn psi_apply<T: Real>(f: &dyn Reaction<T>, ctx: &PsiContext<T>) -> Result<Field<T>> {
    let mut out = Vec::with_capacity(ctx.g1.len());
    for (j, (&a, &b)) in ctx.g1.iter().zip(ctx.g2.iter()).enumerate() {
        let (fa, fb) = (f.eval(a), f.eval(b));
        if !(fa > T::zero() && fb > T::zero()) {
            return Err(Error::Inadmissible(format!("f is not positive on the profile range at node {j}")));
        }
        out.push(fa.ln() - fb.ln());
    }
    Ok(Field(out))
}

/// `Ψ_lin(f̃) = f̃∘g¹ − f̃∘g²`.
pub fn psi_lin<T: Real>(ft: impl Fn(T) -> T, ctx: &PsiContext<T>) -> Field<T> {
    ctx.g1.zip_map(&ctx.g2, |a, b| ft(a) - ft(b))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiIterConfig<T> {
    pub tolerance: T,
    pub max_iter: usize,
}

impl<T: Real> Default for PsiIterConfig<T> {
    fn default() -> Self {
        Self {
            tolerance: T::lit(1e-10),
            max_iter: 500,
        }
    }
}

/// Tabulated preimage under `Ψ_lin`, on the ascending `g¹` values.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiLinInverse<T> {
    pub knots: Vec<T>,
    pub derivative: Vec<T>,
    /// `f̃` with `f̃(s₀) = 0`.
    pub values: Vec<T>,
    /// Successive sup-change ratios of the derivative iteration.
    pub ratios: Vec<T>,
    pub iterations: usize,
}

impl<T: Real> PsiLinInverse<T> {
    pub fn eval(&self, s: T) -> T {
        interp(&self.knots, &self.values, s)
    }

    pub fn eval_derivative(&self, s: T) -> T {
        interp(&self.knots, &self.derivative, s)
    }

    /// Largest observed contraction ratio.
    pub fn max_ratio(&self) -> Option<T> {
        self.ratios.iter().copied().reduce(T::max)
    }
}

/// Preimage of `b` under `Ψ_lin` by the derivative fixed point
/// `f̃′(g¹) g¹′ = b′ + g²′ f̃′(g²)`, then integration from `s₀`.
pub fn psi_lin_invert<T: Real>(b: &Field<T>, ctx: &PsiContext<T>, cfg: &PsiIterConfig<T>) -> Result<PsiLinInverse<T>> {
    b.check_on(&ctx.grid)?;
    let h = ctx.grid.dx();
    if let Some(xs) = ctx.report.x_s {
        let bx = interp(&ctx.grid.nodes(), b, xs);
        let scale = T::one() + sup(b.iter().copied());
        if bx.abs() > T::lit(1e-6) * scale {
            return Err(Error::Inadmissible(format!("b does not vanish at the crossing x_s = {xs} (b = {bx})")));
        }
    }
    let d1 = nodal_derivative(&ctx.g1, h);
    let d2 = nodal_derivative(&ctx.g2, h);
    let db = nodal_derivative(b, h);
    let (knots, order) = ctx.ascending();
    // Table indexed by ascending knot position.
    let mut table = vec![T::zero(); knots.len()];
    let mut ratios = Vec::new();
    let mut last_change: Option<T> = None;
    let mut iterations = 0;
    loop {
        if iterations >= cfg.max_iter {
            return Err(Error::NoConvergence(format!(
                "Ψ_lin inversion after {iterations} iterations, last ratio {}",
                ratios.last().map_or("n/a".to_string(), |r: &T| r.to_string())
            )));
        }
        iterations += 1;
        let next: Vec<T> = order
            .iter()
            .map(|&j| (db[j] + d2[j] * interp(&knots, &table, ctx.g2[j])) / d1[j])
            .collect();
        let change = sup(next.iter().zip(&table).map(|(&a, &b)| a - b));
        if let Some(prev) = last_change {
            if prev > T::zero() {
                ratios.push(change / prev);
            }
        }
        table = next;
        if !change.is_finite() {
            return Err(Error::NonFinite(iterations));
        }
        if change < cfg.tolerance {
            break;
        }
        last_change = Some(change);
    }
    let mut values = vec![T::zero(); knots.len()];
    for i in 1..knots.len() {
        values[i] = values[i - 1] + (knots[i] - knots[i - 1]) * (table[i] + table[i - 1]) / T::lit(2.0);
    }
    let shift = interp(&knots, &values, ctx.s0);
    for v in &mut values {
        *v -= shift;
    }
    Ok(PsiLinInverse {
        knots,
        derivative: table,
        values,
        ratios,
        iterations,
    })
}

/// `Ψ⁻¹(b) = f₀ exp(Ψ_lin⁻¹ b)`, represented on `intervals` state hats anchored at `s₀`.
pub fn psi_invert<T: Real>(
    b: &Field<T>,
    ctx: &PsiContext<T>,
    intervals: usize,
    cfg: &PsiIterConfig<T>,
) -> Result<(Nonlinearity<T>, PsiLinInverse<T>)> {
    let inv = psi_lin_invert(b, ctx, cfg)?;
    let (lo, hi) = ctx.range();
    let basis = HatBasis::state(lo, hi, intervals, T::zero(), Some(ctx.s0))?;
    let coeffs = (0..basis.len())
        .map(|k| {
            let s = basis.knot(basis.knot_of(k));
            ctx.f0 * inv.eval(s).exp() - ctx.f0
        })
        .collect();
    Ok((Nonlinearity::new(basis, coeffs, ctx.f0, T::zero())?, inv))
}

/// `𝕊(q, f) = (−∂ₜᵅuⁱ(T) + Δgⁱ + rⁱ(T))ᵢ`, the value of `q f(gⁱ)` implied by the data.
pub fn s_operator<T: Real>(spec: &ProblemSpec<T>, q: &Field<T>, f: &dyn Reaction<T>, g: &[Field<T>]) -> Result<Vec<Field<T>>> {
    check_len(spec.excitations().len(), g.len())?;
    let states = solve_all(spec, q, f)?;
    projected_sources(spec, &states, g)
}

/// `‖v‖_∞ + ‖v′‖_∞` with nodal difference quotients.
pub fn w1_inf_norm<T: Real>(v: &[T], h: T) -> T {
    let slope = sup(v.windows(2).map(|w| (w[1] - w[0]) / h));
    sup(v.iter().copied()) + slope
}

/// Which operator a ratio belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorTag {
    S,
    T,
}

impl OperatorTag {
    pub fn tag(&self) -> &'static str {
        match self {
            OperatorTag::S => "S",
            OperatorTag::T => "T",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionRow<T> {
    pub horizon: T,
    pub alpha: T,
    pub operator: OperatorTag,
    pub max_ratio: T,
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionEstimate<T> {
    pub rows: Vec<ContractionRow<T>>,
    pub samples: usize,
    /// Fitted `μ` in `ratio ∝ e^{−μT}` at α = 1, per operator.
    pub rates: Vec<(OperatorTag, T)>,
}

impl<T: Real> ContractionEstimate<T> {
    pub fn ratios(&self, op: OperatorTag, alpha: T) -> Vec<(T, T)> {
        self.rows
            .iter()
            .filter(|r| r.operator == op && r.alpha == alpha)
            .map(|r| (r.horizon, r.max_ratio))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("T,alpha,operator,max_ratio,fitted_rate\n");
        for r in &self.rows {
            let rate = self
                .rates
                .iter()
                .find(|(op, _)| *op == r.operator && r.alpha == T::one())
                .map_or(String::new(), |(_, v)| v.to_string());
            let _ = writeln!(s, "{},{},{},{},{}", r.horizon, r.alpha, r.operator.tag(), r.max_ratio, rate);
        }
        s
    }
}

/// Inputs of [`estimate_contraction`].
pub struct ContractionSetup<'a, T> {
    /// Builds the problem for a horizon `T` and order `α`.
    pub build: &'a (dyn Fn(T, T) -> Result<ProblemSpec<T>> + Sync),
    pub horizons: Vec<T>,
    pub alphas: Vec<T>,
    /// Log-space truth; perturbations keep its anchors.
    pub truth: LogPair<T>,
    pub radius: T,
    pub samples: usize,
    pub seed: u64,
    /// State interval on which `f` differences are measured.
    pub f_range: (T, T),
    /// Also measure one application of the case (b) map.
    pub map: Option<(FxpBSetup<T>, FxpConfig<T>)>,
}

const RANGE_SAMPLES: usize = 201;

/// `sup|Δq| + sup|Δf| + sup|Δf′|` for log pairs (`log_space`) or their exponentials.
fn pair_distance<T: Real>(a: &LogPair<T>, b: &LogPair<T>, grid: &Grid1D<T>, range: (T, T), log_space: bool) -> T {
    let q = |p: &LogPair<T>, x: T| if log_space { p.q.eval(x) } else { p.q_at(x) };
    let dq = sup(grid.nodes().into_iter().map(|x| q(a, x) - q(b, x)));
    let (lo, hi) = range;
    let step = (hi - lo) / T::from_usize_lossy(RANGE_SAMPLES - 1);
    let us: Vec<T> = (0..RANGE_SAMPLES).map(|i| lo + step * T::from_usize_lossy(i)).collect();
    let fv = |p: &LogPair<T>, u: T| if log_space { p.f.eval(u) } else { p.f.eval(u).exp() };
    let d: Vec<T> = us.iter().map(|&u| fv(a, u) - fv(b, u)).collect();
    dq + w1_inf_norm(&d, step)
}

fn perturb<T: Real>(truth: &LogPair<T>, radius: T, rng: &mut ChaCha8Rng) -> Result<LogPair<T>> {
    let mut jitter = |c: &[T]| -> Vec<T> {
        c.iter()
            .map(|&v| v + radius * T::lit(rng.random_range(-1.0..=1.0)))
            .collect()
    };
    let q = truth.q.with_coeffs(jitter(truth.q.coeffs()))?;
    let f = truth.f.with_coeffs(jitter(truth.f.coeffs()))?;
    Ok(LogPair { q, f })
}

/// Largest ratio over all unordered pairs; identical inputs are skipped.
fn max_pair_ratio<T: Real>(inputs: &[T], outputs: &[T]) -> (T, usize) {
    let n = (inputs.len() as f64).sqrt() as usize;
    let mut best = T::zero();
    let mut count = 0;
    for i in 0..n {
        for j in i + 1..n {
            let den = inputs[i * n + j];
            if den > T::zero() {
                best = best.max(outputs[i * n + j] / den);
                count += 1;
            }
        }
    }
    (best, count)
}

/// Least-squares slope of `ln y` against `x`, negated.
fn fitted_rate<T: Real>(points: &[(T, T)]) -> Option<T> {
    let pts: Vec<(T, T)> = points
        .iter()
        .filter(|(_, y)| *y > T::zero() && y.is_finite())
        .map(|&(x, y)| (x, y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = T::from_usize_lossy(pts.len());
    let mx = pts.iter().map(|p| p.0).sum::<T>() / n;
    let my = pts.iter().map(|p| p.1).sum::<T>() / n;
    let sxy = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<T>();
    let sxx = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum::<T>();
    (sxx > T::zero()).then(|| -sxy / sxx)
}

/// Empirical Lipschitz ratios of `𝕊` (and optionally the case (b) map) around a truth.
///
/// For each `(T, α)` the data are the truth's own final profiles. Samples are perturbed log
/// pairs; the ratio of every pair is measured and the maximum kept.
pub fn estimate_contraction<T: Real>(setup: &ContractionSetup<'_, T>) -> Result<ContractionEstimate<T>> {
    if setup.samples < 2 {
        return Err(Error::InvalidConfig("contraction estimate needs at least two samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(setup.seed);
    let inputs: Vec<LogPair<T>> = (0..setup.samples)
        .map(|_| perturb(&setup.truth, setup.radius, &mut rng))
        .collect::<Result<_>>()?;
    let n = inputs.len();
    let mut rows = Vec::new();
    for &alpha in &setup.alphas {
        for &horizon in &setup.horizons {
            let spec = (setup.build)(horizon, alpha)?;
            let grid = *spec.grid();
            let g: Vec<Field<T>> = solve_all(&spec, &setup.truth.q_nodal(&spec), &setup.truth.reaction())?
                .iter()
                .map(|s| s.final_snapshot().clone())
                .collect();
            let outputs: Vec<(Vec<Field<T>>, Option<LogPair<T>>)> = inputs
                .par_iter()
                .map(|p| -> Result<_> {
                    let q = p.q_nodal(&spec);
                    let f = p.reaction();
                    let states: Vec<SpaceTimeField<T>> = solve_all(&spec, &q, &f)?;
                    let s = projected_sources(&spec, &states, &g)?;
                    let t = match &setup.map {
                        Some((fs, cfg)) => Some(fxp_b_update(&spec, &states, &g, fs, &q, &f, cfg)?.pair),
                        None => None,
                    };
                    Ok((s, t))
                })
                .collect::<Result<_>>()?;
            let mut din = vec![T::zero(); n * n];
            let mut din_log = vec![T::zero(); n * n];
            let mut ds = vec![T::zero(); n * n];
            let mut dt = vec![T::zero(); n * n];
            for i in 0..n {
                for j in i + 1..n {
                    din[i * n + j] = pair_distance(&inputs[i], &inputs[j], &grid, setup.f_range, false);
                    din_log[i * n + j] = pair_distance(&inputs[i], &inputs[j], &grid, setup.f_range, true);
                    ds[i * n + j] = outputs[i]
                        .0
                        .iter()
                        .zip(&outputs[j].0)
                        .map(|(a, b)| {
                            let d: Vec<T> = a.iter().zip(b.iter()).map(|(&u, &v)| u - v).collect();
                            w1_inf_norm(&d, grid.dx())
                        })
                        .fold(T::zero(), T::max);
                    if let (Some(a), Some(b)) = (&outputs[i].1, &outputs[j].1) {
                        dt[i * n + j] = pair_distance(a, b, &grid, setup.f_range, true);
                    }
                }
            }
            let (ratio, pairs) = max_pair_ratio(&din, &ds);
            rows.push(ContractionRow {
                horizon,
                alpha,
                operator: OperatorTag::S,
                max_ratio: ratio,
                pairs,
            });
            if setup.map.is_some() {
                let (ratio, pairs) = max_pair_ratio(&din_log, &dt);
                rows.push(ContractionRow {
                    horizon,
                    alpha,
                    operator: OperatorTag::T,
                    max_ratio: ratio,
                    pairs,
                });
            }
        }
    }
    let mut rates = Vec::new();
    for op in [OperatorTag::S, OperatorTag::T] {
        let pts: Vec<(T, T)> = rows
            .iter()
            .filter(|r| r.operator == op && r.alpha == T::one())
            .map(|r| (r.horizon, r.max_ratio))
            .collect();
        if let Some(rate) = fitted_rate(&pts) {
            rates.push((op, rate));
        }
    }
    Ok(ContractionEstimate {
        rows,
        samples: n,
        rates,
    })
}

/// Exponential rate of `‖(uⁿ − uⁿ⁻¹)/Δt‖_∞` over the second half of the time window.
pub fn decay_check<T: Real>(state: &SpaceTimeField<T>) -> Result<T> {
    let times = state.times();
    let n_steps = times.steps();
    let dt = times.dt();
    let pts: Vec<(T, T)> = (n_steps / 2 + 1..=n_steps)
        .map(|n| {
            let d = sup(state.snapshot(n).iter().zip(state.snapshot(n - 1).iter()).map(|(&a, &b)| (a - b) / dt));
            (times.time(n), d)
        })
        .filter(|(_, d)| *d > T::zero() && d.is_finite())
        .collect();
    if pts.len() < 4 {
        return Err(Error::InvalidConfig(format!(
            "decay fit needs at least 4 usable samples, got {}",
            pts.len()
        )));
    }
    fitted_rate(&pts).ok_or_else(|| Error::InvalidConfig("degenerate decay fit".into()))
}
