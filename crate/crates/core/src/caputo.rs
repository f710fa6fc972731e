//! L1 discretization of the Caputo derivative of order `α ∈ (0, 1]`.

use crate::error::{check_len, Error, Result};
use crate::mesh::{Field, Grid1D, TimeGrid};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct CaputoWeights<T> {
    alpha: T,
    dt: T,
    b: Vec<T>,
    sigma: T,
}

impl<T: Real> CaputoWeights<T> {
    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    /// `b_k = (k+1)^{1−α} − k^{1−α}`, `k = 0..N−1`.
    pub fn b(&self) -> &[T] {
        &self.b
    }

    /// `σ = Δt^{−α} / Γ(2−α)`.
    pub fn sigma(&self) -> T {
        self.sigma
    }

    /// Diagonal coefficient `σ b₀` of the implicit step.
    pub fn lead(&self) -> T {
        self.sigma * self.b[0]
    }
}

pub fn l1_weights<T: Real>(alpha: T, times: &TimeGrid<T>) -> Result<CaputoWeights<T>> {
    if !(alpha > T::zero() && alpha <= T::one()) {
        return Err(Error::InvalidConfig(format!("order α must lie in (0, 1], got {alpha}")));
    }
    let e = T::one() - alpha;
    let b = (0..times.steps())
        .map(|k| {
            let k = T::from_usize_lossy(k);
            (k + T::one()).powf(e) - if k == T::zero() { T::zero() } else { k.powf(e) }
        })
        .collect();
    let dt = times.dt();
    let sigma = dt.powf(-alpha) / (T::lit(2.0) - alpha).gamma();
    Ok(CaputoWeights { alpha, dt, b, sigma })
}

/// Full solution history `u⁰ … uᴺ` on a fixed grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField<T> {
    grid: Grid1D<T>,
    times: TimeGrid<T>,
    snapshots: Vec<Field<T>>,
}

impl<T: Real> SpaceTimeField<T> {
    pub fn new(grid: Grid1D<T>, times: TimeGrid<T>, snapshots: Vec<Field<T>>) -> Result<Self> {
        check_len(times.steps() + 1, snapshots.len())?;
        for s in &snapshots {
            s.check_on(&grid)?;
        }
        Ok(Self { grid, times, snapshots })
    }

    /// Samples `u(x, t)` on every node.
    pub fn from_fn(grid: Grid1D<T>, times: TimeGrid<T>, u: impl Fn(T, T) -> T) -> Self {
        let snapshots = (0..=times.steps())
            .map(|n| {
                let t = times.time(n);
                grid.sample(|x| u(x, t))
            })
            .collect();
        Self { grid, times, snapshots }
    }

    pub fn grid(&self) -> &Grid1D<T> {
        &self.grid
    }

    pub fn times(&self) -> &TimeGrid<T> {
        &self.times
    }

    pub fn snapshot(&self, n: usize) -> &Field<T> {
        &self.snapshots[n]
    }

    pub fn snapshots(&self) -> &[Field<T>] {
        &self.snapshots
    }

    pub fn final_snapshot(&self) -> &Field<T> {
        self.snapshots.last().expect("history has N+1 >= 2 snapshots")
    }

    /// Time series at node `j`.
    pub fn trace(&self, j: usize) -> Vec<T> {
        self.snapshots.iter().map(|s| s[j]).collect()
    }

    pub fn min_max(&self) -> (T, T) {
        self.snapshots
            .iter()
            .flat_map(|s| s.iter())
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

fn check_index<T: Real>(n: usize, steps: usize, w: &CaputoWeights<T>) -> Result<()> {
    if n == 0 || n > steps {
        return Err(Error::InvalidConfig(format!(
            "caputo derivative needs 1 <= n <= {steps}, got {n}"
        )));
    }
    if w.b.len() < n {
        return Err(Error::SizeMismatch {
            expected: n,
            got: w.b.len(),
        });
    }
    Ok(())
}

/// `σ Σ_{k=start}^{n−1} b_k (u^{n−k} − u^{n−k−1})` over nodewise values `value(m)` of snapshot `m`.
fn l1_sum<T: Real, F: Fn(usize) -> T>(w: &CaputoWeights<T>, n: usize, start: usize, value: F) -> T {
    let mut acc = T::zero();
    for k in start..n {
        acc += w.b[k] * (value(n - k) - value(n - k - 1));
    }
    w.sigma * acc
}

/// Discrete `∂ₜᵅ u(·, tₙ)`.
pub fn caputo_apply<T: Real>(hist: &SpaceTimeField<T>, n: usize, w: &CaputoWeights<T>) -> Result<Field<T>> {
    check_index(n, hist.times.steps(), w)?;
    let len = hist.grid.node_count();
    Ok(Field(
        (0..len)
            .map(|j| l1_sum(w, n, 0, |m| hist.snapshots[m][j]))
            .collect(),
    ))
}

/// Discrete `∂ₜᵅ u(·, T)`.
pub fn caputo_final<T: Real>(hist: &SpaceTimeField<T>, w: &CaputoWeights<T>) -> Result<Field<T>> {
    caputo_apply(hist, hist.times.steps(), w)
}

/// Discrete `∂ₜᵅ` of a scalar time series, at every time node `n ≥ 1` (entry 0 is zero).
pub fn caputo_series<T: Real>(values: &[T], w: &CaputoWeights<T>) -> Result<Vec<T>> {
    let steps = values.len().saturating_sub(1);
    if w.b.len() < steps {
        return Err(Error::SizeMismatch {
            expected: steps,
            got: w.b.len(),
        });
    }
    let mut out = vec![T::zero(); values.len()];
    for (n, o) in out.iter_mut().enumerate().skip(1) {
        *o = l1_sum(w, n, 0, |m| values[m]);
    }
    Ok(out)
}

/// Memory part of the step-`n` equation: `σ Σ_{k=1}^{n−1} b_k (u^{n−k} − u^{n−k−1})`.
///
/// Only snapshots `0..n` are read, so a partially filled history works.
pub(crate) fn memory_term<T: Real>(snaps: &[Field<T>], n: usize, w: &CaputoWeights<T>) -> Vec<T> {
    let len = snaps[0].len();
    (0..len).map(|j| l1_sum(w, n, 1, |m| snaps[m][j])).collect()
}
