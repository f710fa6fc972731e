//! Implicit L1 time stepping for the nonlinear equation and its linearization.

use rayon::prelude::*;

use crate::caputo::{l1_weights, memory_term, CaputoWeights, SpaceTimeField};
use crate::coeffs::Reaction;
use crate::error::{check_len, Error, Result};
use crate::linalg::{max_abs, Tridiagonal};
use crate::mesh::{negative_laplacian, BoundarySpec, Field, Grid1D, TimeGrid};
use crate::scalar::Real;

/// Right-hand side `r(x, t)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Source<T> {
    Steady(Field<T>),
    Sampled(SpaceTimeField<T>),
}

impl<T: Real> Source<T> {
    pub fn at(&self, n: usize) -> &Field<T> {
        match self {
            Source::Steady(r) => r,
            Source::Sampled(h) => h.snapshot(n),
        }
    }

    pub fn final_value(&self) -> &Field<T> {
        match self {
            Source::Steady(r) => r,
            Source::Sampled(h) => h.final_snapshot(),
        }
    }
}

/// One excitation pair `(rⁱ, u₀ⁱ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Excitation<T> {
    pub source: Source<T>,
    pub initial: Field<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonInnerConfig<T> {
    pub tolerance: T,
    pub max_iter: usize,
    /// Step reduction factor applied while the residual grows.
    pub damping: T,
}

impl<T: Real> Default for NewtonInnerConfig<T> {
    fn default() -> Self {
        Self {
            tolerance: T::lit(1e-10),
            max_iter: 50,
            damping: T::lit(0.5),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec<T> {
    grid: Grid1D<T>,
    times: TimeGrid<T>,
    bc: BoundarySpec<T>,
    weights: CaputoWeights<T>,
    excitations: Vec<Excitation<T>>,
    pub inner: NewtonInnerConfig<T>,
}

impl<T: Real> ProblemSpec<T> {
    pub fn new(
        alpha: T,
        grid: Grid1D<T>,
        times: TimeGrid<T>,
        bc: BoundarySpec<T>,
        excitations: Vec<Excitation<T>>,
    ) -> Result<Self> {
        if excitations.is_empty() || excitations.len() > 2 {
            return Err(Error::InvalidConfig(format!(
                "expected one or two excitations, got {}",
                excitations.len()
            )));
        }
        for e in &excitations {
            e.initial.check_on(&grid)?;
            match &e.source {
                Source::Steady(r) => r.check_on(&grid)?,
                Source::Sampled(h) => {
                    check_len(grid.node_count(), h.grid().node_count())?;
                    check_len(times.steps(), h.times().steps())?;
                }
            }
        }
        let weights = l1_weights(alpha, &times)?;
        Ok(Self {
            grid,
            times,
            bc,
            weights,
            excitations,
            inner: NewtonInnerConfig::default(),
        })
    }

    pub fn with_inner(mut self, inner: NewtonInnerConfig<T>) -> Result<Self> {
        if !(inner.tolerance > T::zero()) || inner.max_iter == 0 || !(inner.damping > T::zero() && inner.damping <= T::one()) {
            return Err(Error::InvalidConfig("inner newton needs tol > 0, max_iter >= 1, damping in (0, 1]".into()));
        }
        self.inner = inner;
        Ok(self)
    }

    /// Same problem with different excitations.
    pub fn with_excitations(&self, excitations: Vec<Excitation<T>>) -> Result<Self> {
        let mut s = Self::new(self.alpha(), self.grid, self.times, self.bc, excitations)?;
        s.inner = self.inner;
        Ok(s)
    }

    pub fn alpha(&self) -> T {
        self.weights.alpha()
    }

    pub fn grid(&self) -> &Grid1D<T> {
        &self.grid
    }

    pub fn times(&self) -> &TimeGrid<T> {
        &self.times
    }

    pub fn bc(&self) -> &BoundarySpec<T> {
        &self.bc
    }

    pub fn weights(&self) -> &CaputoWeights<T> {
        &self.weights
    }

    pub fn excitations(&self) -> &[Excitation<T>] {
        &self.excitations
    }

    pub fn excitation(&self, which: usize) -> Result<&Excitation<T>> {
        self.excitations.get(which).ok_or_else(|| {
            Error::InvalidConfig(format!(
                "excitation {which} requested, problem has {}",
                self.excitations.len()
            ))
        })
    }

    /// `σb₀ I − Δ_h` with identity rows on Dirichlet ends.
    fn step_operator(&self) -> Tridiagonal<T> {
        let mut a = negative_laplacian(&self.grid, &self.bc);
        let lead = self.weights.lead();
        let m = a.len() - 1;
        for (j, d) in a.diag.iter_mut().enumerate() {
            if !self.is_dirichlet_node(j, m) {
                *d += lead;
            }
        }
        a
    }

    fn is_dirichlet_node(&self, j: usize, m: usize) -> bool {
        (j == 0 && self.bc.left.is_dirichlet()) || (j == m && self.bc.right.is_dirichlet())
    }
}

/// Known part of the step equation: `rⁿ + σb₀uⁿ⁻¹ − memory`, zero on Dirichlet rows.
fn step_rhs<T: Real>(spec: &ProblemSpec<T>, snaps: &[Field<T>], n: usize, source: &[T]) -> Vec<T> {
    let w = spec.weights();
    let lead = w.lead();
    let mem = memory_term(snaps, n, w);
    let m = source.len() - 1;
    (0..=m)
        .map(|j| {
            if spec.is_dirichlet_node(j, m) {
                T::zero()
            } else {
                source[j] + lead * snaps[n - 1][j] - mem[j]
            }
        })
        .collect()
}

/// Solves the nonlinear problem for excitation `which` with nodal potential `q`.
pub fn solve_forward<T: Real>(
    spec: &ProblemSpec<T>,
    q: &Field<T>,
    f: &dyn Reaction<T>,
    which: usize,
) -> Result<SpaceTimeField<T>> {
    let ex = spec.excitation(which)?;
    q.check_on(&spec.grid)?;
    let base = spec.step_operator();
    let m = spec.grid.intervals();
    let cfg = spec.inner;
    let mut snaps: Vec<Field<T>> = Vec::with_capacity(spec.times.steps() + 1);
    snaps.push(ex.initial.clone());

    for n in 1..=spec.times.steps() {
        let rhs = step_rhs(spec, &snaps, n, ex.source.at(n));
        let scale = T::one().max(max_abs(&rhs));
        let residual = |u: &[T]| -> Result<Vec<T>> {
            let mut r = base.mul_vec(u)?;
            for j in 0..=m {
                if !spec.is_dirichlet_node(j, m) {
                    r[j] += q[j] * f.eval(u[j]);
                }
                r[j] -= rhs[j];
            }
            Ok(r)
        };
        let mut u = snaps[n - 1].0.clone();
        for j in 0..=m {
            if spec.is_dirichlet_node(j, m) {
                u[j] = T::zero();
            }
        }
        let mut r = residual(&u)?;
        let mut rnorm = max_abs(&r);
        let mut iter = 0;
        while rnorm > cfg.tolerance.max(T::lit(100.0) * T::epsilon()) * scale {
            if iter == cfg.max_iter {
                return Err(Error::StepDiverged {
                    step: n,
                    residual: rnorm.to_f64_lossy(),
                });
            }
            iter += 1;
            let mut jac = base.clone();
            for j in 0..=m {
                if !spec.is_dirichlet_node(j, m) {
                    jac.diag[j] += q[j] * f.deriv(u[j]);
                }
            }
            let step = jac.solve(&r)?;
            let mut lambda = T::one();
            let (u_new, r_new, n_new) = loop {
                let trial: Vec<T> = u.iter().zip(&step).map(|(&a, &d)| a - lambda * d).collect();
                let rt = residual(&trial)?;
                let nt = max_abs(&rt);
                if (nt.is_finite() && nt < rnorm) || lambda < T::lit(1e-4) || cfg.damping >= T::one() {
                    break (trial, rt, nt);
                }
                lambda *= cfg.damping;
            };
            u = u_new;
            r = r_new;
            rnorm = n_new;
            if !rnorm.is_finite() {
                return Err(Error::NonFinite(n));
            }
            if max_abs(&step) * lambda <= T::epsilon() * (T::one() + max_abs(&u)) {
                break;
            }
        }
        snaps.push(Field(u));
    }
    SpaceTimeField::new(spec.grid, spec.times, snaps)
}

/// Solves every excitation concurrently.
pub fn solve_all<T: Real>(spec: &ProblemSpec<T>, q: &Field<T>, f: &dyn Reaction<T>) -> Result<Vec<SpaceTimeField<T>>> {
    (0..spec.excitations.len())
        .into_par_iter()
        .map(|i| solve_forward(spec, q, f, i))
        .collect()
}

/// Solves `∂ₜᵅw − Δw + cⁿ w = sⁿ`, `w(0) = 0`, with per-step coefficient and source.
pub fn solve_linear<T: Real>(
    spec: &ProblemSpec<T>,
    coef: impl Fn(usize) -> Vec<T>,
    source: impl Fn(usize) -> Vec<T>,
) -> Result<SpaceTimeField<T>> {
    let base = spec.step_operator();
    let m = spec.grid.intervals();
    let mut snaps = vec![Field::zeros(m + 1)];
    for n in 1..=spec.times.steps() {
        let s = source(n);
        check_len(m + 1, s.len())?;
        let rhs = step_rhs(spec, &snaps, n, &s);
        let c = coef(n);
        let mut a = base.clone();
        for j in 0..=m {
            if !spec.is_dirichlet_node(j, m) {
                a.diag[j] += c[j];
            }
        }
        let w = a.solve(&rhs)?;
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(n));
        }
        snaps.push(Field(w));
    }
    SpaceTimeField::new(spec.grid, spec.times, snaps)
}

/// Linearized response `du` to the perturbation `(dq, df)` around `base`.
pub fn solve_sensitivity<T: Real>(
    spec: &ProblemSpec<T>,
    q0: &Field<T>,
    f0: &dyn Reaction<T>,
    base: &SpaceTimeField<T>,
    dq: &Field<T>,
    df: &dyn Reaction<T>,
) -> Result<SpaceTimeField<T>> {
    q0.check_on(&spec.grid)?;
    dq.check_on(&spec.grid)?;
    check_len(spec.times.steps() + 1, base.snapshots().len())?;
    solve_linear(
        spec,
        |n| {
            let u = base.snapshot(n);
            u.iter().zip(q0.iter()).map(|(&u, &q)| q * f0.deriv(u)).collect()
        },
        |n| {
            let u = base.snapshot(n);
            (0..u.len())
                .map(|j| -(dq[j] * f0.eval(u[j]) + q0[j] * df.eval(u[j])))
                .collect()
        },
    )
}
