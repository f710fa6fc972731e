//! Per-iteration diagnostics of the reconstruction schemes.

use std::fmt::Write as _;
use std::time::Duration;

use crate::coeffs::{l2_distance_on, l2_norm_on, Reaction};
use crate::mesh::{l2_norm, Field, Grid1D};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord<T> {
    pub iteration: usize,
    pub residual: T,
    pub q_error: Option<T>,
    pub f_error: Option<T>,
    pub lambda: Option<T>,
    /// Nodes where the log argument hit its floor.
    pub clamped: usize,
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IterationTrace<T> {
    pub records: Vec<IterationRecord<T>>,
    /// `‖q_act‖` and `‖f_act‖` used for relative errors, when a truth was supplied.
    pub q_norm: Option<T>,
    pub f_norm: Option<T>,
    /// Set when the scheme stopped on an error; records up to that point are kept.
    pub failure: Option<String>,
}

impl<T: Real> IterationTrace<T> {
    pub fn new() -> Self {
        Self {
            records: Vec::new(),
            q_norm: None,
            f_norm: None,
            failure: None,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&IterationRecord<T>> {
        self.records.last()
    }

    pub fn at(&self, iteration: usize) -> Option<&IterationRecord<T>> {
        self.records.iter().find(|r| r.iteration == iteration)
    }

    /// Relative `(q, f)` errors at `iteration`.
    pub fn relative_errors(&self, iteration: usize) -> Option<(T, T)> {
        let r = self.at(iteration)?;
        Some((r.q_error? / self.q_norm?, r.f_error? / self.f_norm?))
    }

    /// CSV body; wall time is left out so reruns compare byte for byte.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<T>| v.map_or(String::new(), |v| v.to_string());
        let mut s = String::from("iteration,residual,q_error_L2,f_error_L2,lambda,clamped\n");
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.iteration,
                r.residual,
                opt(r.q_error),
                opt(r.f_error),
                opt(r.lambda),
                r.clamped
            );
        }
        s
    }
}

/// Ground truth for error reporting.
pub struct Truth<'a, T> {
    pub q: Field<T>,
    pub f: &'a dyn Reaction<T>,
    /// State interval on which the `f` error is measured.
    pub f_range: (T, T),
}

/// Samples used for `f` errors over its range.
pub const F_ERROR_SAMPLES: usize = 401;

impl<'a, T: Real> Truth<'a, T> {
    pub fn q_error(&self, q: &Field<T>, grid: &Grid1D<T>) -> T {
        let d: Vec<T> = q.iter().zip(self.q.iter()).map(|(&a, &b)| a - b).collect();
        l2_norm(&d, grid).unwrap_or(T::nan())
    }

    pub fn f_error(&self, f: &dyn Reaction<T>) -> T {
        let (lo, hi) = self.f_range;
        l2_distance_on(|u| f.eval(u), |u| self.f.eval(u), lo, hi, F_ERROR_SAMPLES)
    }

    pub fn norms(&self, grid: &Grid1D<T>) -> (T, T) {
        let (lo, hi) = self.f_range;
        (
            l2_norm(&self.q, grid).unwrap_or(T::nan()),
            l2_norm_on(|u| self.f.eval(u), lo, hi, F_ERROR_SAMPLES),
        )
    }

    pub fn init_trace(&self, grid: &Grid1D<T>) -> IterationTrace<T> {
        let (qn, fn_) = self.norms(grid);
        IterationTrace {
            q_norm: Some(qn),
            f_norm: Some(fn_),
            ..IterationTrace::new()
        }
    }
}
