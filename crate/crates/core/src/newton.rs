//! Frozen Newton iteration with a sensitivity-assembled Jacobian and Tikhonov-regularized steps.

use std::time::Instant;

use rayon::prelude::*;

use crate::caputo::SpaceTimeField;
use crate::coeffs::{pack, unpack, Nonlinearity, Potential};
use crate::error::{Error, Result};
use crate::forward::{solve_all, solve_sensitivity, ProblemSpec};
use crate::linalg::{lstsq, norm2, Matrix};
use crate::mesh::trapezoid_weights;
use crate::observe::{ObservationData, Payload};
use crate::scalar::Real;
use crate::trace::{IterationRecord, IterationTrace, Truth};

/// Maps solution histories to the weighted observation vector.
#[derive(Debug, Clone, PartialEq)]
pub enum Observer {
    Traces(Vec<usize>),
    Profiles,
    Mixed(usize),
}

impl Observer {
    pub fn of<T: Real>(data: &ObservationData<T>) -> Self {
        match &data.payload {
            Payload::Traces { nodes, .. } => Observer::Traces(nodes.clone()),
            Payload::Profiles(_) => Observer::Profiles,
            Payload::Mixed { node, .. } => Observer::Mixed(*node),
        }
    }

    /// Stacked observation of `states`, weighted by square-root trapezoid weights.
    pub fn stack<T: Real>(&self, states: &[SpaceTimeField<T>]) -> Vec<T> {
        let grid = states[0].grid();
        let times = states[0].times();
        let wx: Vec<T> = trapezoid_weights(grid.node_count(), grid.dx()).into_iter().map(|w| w.sqrt()).collect();
        let wt: Vec<T> = trapezoid_weights(times.steps() + 1, times.dt()).into_iter().map(|w| w.sqrt()).collect();
        let mut out = Vec::new();
        match self {
            Observer::Traces(nodes) => {
                for s in states {
                    for &j in nodes {
                        out.extend(s.trace(j).iter().zip(&wt).map(|(&v, &w)| v * w));
                    }
                }
            }
            Observer::Profiles => {
                for s in states {
                    out.extend(s.final_snapshot().iter().zip(&wx).map(|(&v, &w)| v * w));
                }
            }
            Observer::Mixed(j) => {
                let s = &states[0];
                out.extend(s.trace(*j).iter().zip(&wt).map(|(&v, &w)| v * w));
                out.extend(s.final_snapshot().iter().zip(&wx).map(|(&v, &w)| v * w));
            }
        }
        out
    }

    /// The same weighted stacking applied to measured data.
    pub fn stack_data<T: Real>(&self, data: &ObservationData<T>) -> Vec<T> {
        let wx: Vec<T> = trapezoid_weights(data.grid.node_count(), data.grid.dx()).into_iter().map(|w| w.sqrt()).collect();
        let wt: Vec<T> = trapezoid_weights(data.times.steps() + 1, data.times.dt()).into_iter().map(|w| w.sqrt()).collect();
        let mut out = Vec::new();
        match &data.payload {
            Payload::Traces { traces, .. } => {
                for tr in traces.iter().flatten() {
                    out.extend(tr.iter().zip(&wt).map(|(&v, &w)| v * w));
                }
            }
            Payload::Profiles(g) => {
                for p in g {
                    out.extend(p.iter().zip(&wx).map(|(&v, &w)| v * w));
                }
            }
            Payload::Mixed { trace, profile, .. } => {
                out.extend(trace.iter().zip(&wt).map(|(&v, &w)| v * w));
                out.extend(profile.iter().zip(&wx).map(|(&v, &w)| v * w));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnTag {
    Potential(usize),
    Reaction(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct JacobianMatrix<T> {
    pub matrix: Matrix<T>,
    pub q_columns: usize,
    pub f_columns: usize,
}

impl<T: Real> JacobianMatrix<T> {
    pub fn tag(&self, column: usize) -> ColumnTag {
        if column < self.q_columns {
            ColumnTag::Potential(column)
        } else {
            ColumnTag::Reaction(column - self.q_columns)
        }
    }
}

/// Unit direction along the `k`-th stacked coefficient.
fn unit_direction<T: Real>(
    k: usize,
    q0: &Potential<T>,
    f0: &Nonlinearity<T>,
) -> Result<(Potential<T>, Nonlinearity<T>)> {
    let m = q0.basis().len();
    let mut a = vec![T::zero(); m];
    let mut b = vec![T::zero(); f0.basis().len()];
    if k < m {
        a[k] = T::one();
    } else {
        b[k - m] = T::one();
    }
    Ok((
        Potential::new(q0.basis().clone(), a, T::zero())?,
        Nonlinearity::new(f0.basis().clone(), b, T::zero(), T::zero())?,
    ))
}

/// Observed linearized response to one `(dq, df)` direction.
pub fn directional_response<T: Real>(
    spec: &ProblemSpec<T>,
    q0: &Potential<T>,
    f0: &Nonlinearity<T>,
    base: &[SpaceTimeField<T>],
    dq: &Potential<T>,
    df: &Nonlinearity<T>,
    observer: &Observer,
) -> Result<Vec<T>> {
    let grid = spec.grid();
    let qn = q0.nodal(grid);
    let dqn = dq.nodal(grid);
    let du = base
        .iter()
        .map(|b| solve_sensitivity(spec, &qn, f0, b, &dqn, df))
        .collect::<Result<Vec<_>>>()?;
    Ok(observer.stack(&du))
}

/// One sensitivity solve per basis direction, columns ordered potential block first.
pub fn assemble_jacobian<T: Real>(
    spec: &ProblemSpec<T>,
    q0: &Potential<T>,
    f0: &Nonlinearity<T>,
    base: &[SpaceTimeField<T>],
    observer: &Observer,
) -> Result<JacobianMatrix<T>> {
    let m = q0.basis().len();
    let n = f0.basis().len();
    let columns = (0..m + n)
        .into_par_iter()
        .map(|k| {
            let (dq, df) = unit_direction(k, q0, f0)?;
            directional_response(spec, q0, f0, base, &dq, &df, observer).map_err(|e| Error::Column {
                column: k,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = columns.first().map_or(0, Vec::len);
    Ok(JacobianMatrix {
        matrix: Matrix::from_columns(rows, &columns)?,
        q_columns: m,
        f_columns: n,
    })
}

/// Minimizer of `‖J s − rhs‖² + λ ‖s‖²`.
pub fn tikhonov_solve<T: Real>(j: &Matrix<T>, rhs: &[T], lambda: T) -> Result<Vec<T>> {
    if lambda < T::zero() {
        return Err(Error::InvalidConfig(format!("Tikhonov weight must be non-negative, got {lambda}")));
    }
    if lambda == T::zero() {
        return lstsq(j, rhs).map_err(|e| match e {
            Error::Singular(msg) => Error::Singular(format!("unregularized step is ill-conditioned: {msg}")),
            other => other,
        });
    }
    let (r, c) = (j.rows(), j.cols());
    let mut a = Matrix::zeros(r + c, c);
    for i in 0..r {
        for k in 0..c {
            a[(i, k)] = j[(i, k)];
        }
    }
    let s = lambda.sqrt();
    for k in 0..c {
        a[(r + k, k)] = s;
    }
    let mut b = rhs.to_vec();
    b.resize(r + c, T::zero());
    lstsq(&a, &b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig<T> {
    pub lambda0: T,
    pub nu: T,
    pub max_outer: usize,
    /// Discrepancy factor `τ > 1`.
    pub tau: T,
    /// Re-assemble the Jacobian every this many steps (`None`: frozen).
    pub refreeze: Option<usize>,
    /// Step halvings tried when the forward solve at a trial iterate fails.
    pub max_halvings: usize,
}

impl<T: Real> Default for NewtonConfig<T> {
    fn default() -> Self {
        Self {
            lambda0: T::lit(1e-2),
            nu: T::lit(0.8),
            max_outer: 100,
            tau: T::lit(1.2),
            refreeze: None,
            max_halvings: 8,
        }
    }
}

impl<T: Real> NewtonConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda0 > T::zero()) || !(self.nu > T::zero() && self.nu <= T::one()) || !(self.tau > T::one()) {
            return Err(Error::InvalidConfig("newton needs λ₀ > 0, ν ∈ (0, 1], τ > 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Reconstruction<T> {
    pub q: Potential<T>,
    pub f: Nonlinearity<T>,
    pub trace: IterationTrace<T>,
    /// Nonlinear forward solves of all excitations, step retries included.
    pub forward_solves: usize,
}

/// Frozen Newton: the Jacobian at `(q⁰, f⁰)` is reused for every step.
///
/// Stops at `‖y − F‖ ≤ τ δ ‖y‖` or after `max_outer` steps. A step whose forward solve
/// fails is halved; when every halving fails the iteration ends and the failure is traced.
pub fn frozen_newton<T: Real>(
    spec: &ProblemSpec<T>,
    data: &ObservationData<T>,
    q0: &Potential<T>,
    f0: &Nonlinearity<T>,
    cfg: &NewtonConfig<T>,
    truth: Option<&Truth<'_, T>>,
) -> Result<Reconstruction<T>> {
    cfg.validate()?;
    let grid = spec.grid();
    let observer = Observer::of(data);
    let y = observer.stack_data(data);
    let ynorm = norm2(&y);
    let mut trace = truth.map_or_else(IterationTrace::new, |t| t.init_trace(grid));
    let started = Instant::now();

    let base = solve_all(spec, &q0.nodal(grid), f0)?;
    let mut forward_solves = 1;
    let mut jac = assemble_jacobian(spec, q0, f0, &base, &observer)?;
    let mut coeffs = pack(q0, f0);
    let (mut q, mut f) = (q0.clone(), f0.clone());
    let mut states = base;
    let mut lambda = cfg.lambda0;

    for k in 0..=cfg.max_outer {
        let fy = observer.stack(&states);
        let res: Vec<T> = y.iter().zip(&fy).map(|(&a, &b)| a - b).collect();
        let rnorm = norm2(&res);
        trace.records.push(IterationRecord {
            iteration: k,
            residual: rnorm,
            q_error: truth.map(|t| t.q_error(&q.nodal(grid), grid)),
            f_error: truth.map(|t| t.f_error(&f)),
            lambda: Some(lambda),
            clamped: 0,
            wall_time: started.elapsed(),
        });
        if !rnorm.is_finite() {
            trace.failure = Some(format!("residual diverged at iteration {k}"));
            break;
        }
        if rnorm <= cfg.tau * data.delta * ynorm || k == cfg.max_outer {
            break;
        }
        if let Some(every) = cfg.refreeze {
            if every > 0 && k > 0 && k % every == 0 {
                jac = assemble_jacobian(spec, &q, &f, &states, &observer)?;
            }
        }
        let step = match tikhonov_solve(&jac.matrix, &res, lambda) {
            Ok(s) => s,
            Err(e) => {
                trace.failure = Some(format!("step {k}: {e}"));
                break;
            }
        };
        let mut theta = T::one();
        let mut accepted = None;
        let mut last_err = None;
        for _ in 0..=cfg.max_halvings {
            let trial: Vec<T> = coeffs.iter().zip(&step).map(|(&c, &s)| c + theta * s).collect();
            let (qn, fnl) = unpack(&trial, q0, f0)?;
            forward_solves += 1;
            match solve_all(spec, &qn.nodal(grid), &fnl) {
                Ok(st) => {
                    accepted = Some((trial, qn, fnl, st));
                    break;
                }
                Err(e) => {
                    last_err = Some(e);
                    theta = theta * T::lit(0.5);
                }
            }
        }
        match accepted {
            Some((c, qn, fnl, st)) => {
                coeffs = c;
                q = qn;
                f = fnl;
                states = st;
            }
            None => {
                let e = last_err.map_or_else(String::new, |e| e.to_string());
                trace.failure = Some(format!("forward solve failed at iteration {}: {e}", k + 1));
                break;
            }
        }
        lambda *= cfg.nu;
    }
    Ok(Reconstruction {
        q,
        f,
        trace,
        forward_solves,
    })
}
