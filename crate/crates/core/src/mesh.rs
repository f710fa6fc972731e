//! Uniform grids, the discrete Laplacian and trapezoid quadrature.

use std::ops::{Deref, DerefMut};

use crate::error::{check_len, Error, Result};
use crate::linalg::Tridiagonal;
use crate::scalar::Real;

/// Uniform spatial grid on `[0, L]` with `M` intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D<T> {
    length: T,
    intervals: usize,
    dx: T,
}

impl<T: Real> Grid1D<T> {
    pub fn new(length: T, intervals: usize) -> Result<Self> {
        if !(length > T::zero()) || !length.is_finite() {
            return Err(Error::InvalidConfig(format!("domain length must be positive, got {length}")));
        }
        if intervals < 3 {
            return Err(Error::InvalidConfig(format!(
                "need at least 3 spatial intervals, got {intervals}"
            )));
        }
        Ok(Self {
            length,
            intervals,
            dx: length / T::from_usize_lossy(intervals),
        })
    }

    pub fn length(&self) -> T {
        self.length
    }

    /// Number of intervals `M`.
    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn node_count(&self) -> usize {
        self.intervals + 1
    }

    pub fn dx(&self) -> T {
        self.dx
    }

    pub fn node(&self, j: usize) -> T {
        if j == self.intervals {
            self.length
        } else {
            self.length * T::from_usize_lossy(j) / T::from_usize_lossy(self.intervals)
        }
    }

    pub fn nodes(&self) -> Vec<T> {
        (0..self.node_count()).map(|j| self.node(j)).collect()
    }

    /// Index of the node at `x`, if `x` lies on the grid.
    pub fn node_index(&self, x: T) -> Option<usize> {
        let s = x / self.dx;
        let j = s.round();
        if j < T::zero() || (s - j).abs() > T::lit(1e-9) * (T::one() + s.abs()) {
            return None;
        }
        let j = j.to_usize()?;
        (j <= self.intervals).then_some(j)
    }

    /// Samples a function at the nodes.
    pub fn sample(&self, f: impl Fn(T) -> T) -> Field<T> {
        Field((0..self.node_count()).map(|j| f(self.node(j))).collect())
    }
}

/// Uniform time grid on `[0, T]` with `N` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid<T> {
    horizon: T,
    steps: usize,
    dt: T,
}

impl<T: Real> TimeGrid<T> {
    pub fn new(horizon: T, steps: usize) -> Result<Self> {
        if !(horizon > T::zero()) || !horizon.is_finite() {
            return Err(Error::InvalidConfig(format!("time horizon must be positive, got {horizon}")));
        }
        if steps < 1 {
            return Err(Error::InvalidConfig("need at least one time step".into()));
        }
        Ok(Self {
            horizon,
            steps,
            dt: horizon / T::from_usize_lossy(steps),
        })
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    /// Number of steps `N`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn time(&self, n: usize) -> T {
        if n == self.steps {
            self.horizon
        } else {
            self.horizon * T::from_usize_lossy(n) / T::from_usize_lossy(self.steps)
        }
    }

    pub fn times(&self) -> Vec<T> {
        (0..=self.steps).map(|n| self.time(n)).collect()
    }
}

pub fn build_grid<T: Real>(length: T, m: usize, horizon: T, n: usize) -> Result<(Grid1D<T>, TimeGrid<T>)> {
    Ok((Grid1D::new(length, m)?, TimeGrid::new(horizon, n)?))
}

/// Boundary operator `∂_ν v + γ v` at one endpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryKind<T> {
    /// Homogeneous Dirichlet, the `γ → ∞` limit.
    Dirichlet,
    Neumann,
    Impedance(T),
}

impl<T: Real> BoundaryKind<T> {
    /// Robin coefficient for ghost-node closures; `None` for Dirichlet.
    pub fn gamma(&self) -> Option<T> {
        match *self {
            BoundaryKind::Dirichlet => None,
            BoundaryKind::Neumann => Some(T::zero()),
            BoundaryKind::Impedance(g) => Some(g),
        }
    }

    pub fn is_dirichlet(&self) -> bool {
        matches!(self, BoundaryKind::Dirichlet)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundarySpec<T> {
    pub left: BoundaryKind<T>,
    pub right: BoundaryKind<T>,
}

impl<T: Real> BoundarySpec<T> {
    pub fn new(left: BoundaryKind<T>, right: BoundaryKind<T>) -> Result<Self> {
        for k in [left, right] {
            if let BoundaryKind::Impedance(g) = k {
                if !(g >= T::zero()) || !g.is_finite() {
                    return Err(Error::InvalidConfig(format!(
                        "impedance coefficient must be finite and non-negative, got {g}"
                    )));
                }
            }
        }
        Ok(Self { left, right })
    }

    pub fn dirichlet() -> Self {
        Self {
            left: BoundaryKind::Dirichlet,
            right: BoundaryKind::Dirichlet,
        }
    }

    pub fn neumann() -> Self {
        Self {
            left: BoundaryKind::Neumann,
            right: BoundaryKind::Neumann,
        }
    }
}

/// Nodal values on a [`Grid1D`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Field<T>(pub Vec<T>);

impl<T: Real> Field<T> {
    pub fn zeros(n: usize) -> Self {
        Field(vec![T::zero(); n])
    }

    pub fn constant(n: usize, c: T) -> Self {
        Field(vec![c; n])
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Field(self.0.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        debug_assert_eq!(self.len(), other.len());
        Field(self.0.iter().zip(&other.0).map(|(&a, &b)| f(a, b)).collect())
    }

    pub fn check_on(&self, grid: &Grid1D<T>) -> Result<()> {
        check_len(grid.node_count(), self.len())
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }
}

impl<T> Deref for Field<T> {
    type Target = Vec<T>;
    fn deref(&self) -> &Vec<T> {
        &self.0
    }
}

impl<T> DerefMut for Field<T> {
    fn deref_mut(&mut self) -> &mut Vec<T> {
        &mut self.0
    }
}

impl<T> From<Vec<T>> for Field<T> {
    fn from(v: Vec<T>) -> Self {
        Field(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaplacianMode {
    /// One-sided second differences at both endpoints, for differentiating data.
    InteriorOnly,
    /// Boundary rows of the solver operator: zero on Dirichlet ends, ghost-node closure otherwise.
    WithBoundaryRows,
    /// Ghost-node closure on Neumann/impedance ends, one-sided differences on Dirichlet ends.
    Measured,
}

fn one_sided<T: Real>(a: T, b: T, c: T, d: T) -> T {
    T::lit(2.0) * a - T::lit(5.0) * b + T::lit(4.0) * c - d
}

pub fn laplacian_apply<T: Real>(
    v: &Field<T>,
    grid: &Grid1D<T>,
    bc: &BoundarySpec<T>,
    mode: LaplacianMode,
) -> Result<Field<T>> {
    v.check_on(grid)?;
    let n = v.len();
    let m = n - 1;
    let h2 = grid.dx() * grid.dx();
    let two = T::lit(2.0);
    let mut out = vec![T::zero(); n];
    for j in 1..m {
        out[j] = (v[j - 1] - two * v[j] + v[j + 1]) / h2;
    }
    let ghost_left = |g: T| (two * v[1] - two * v[0] - two * grid.dx() * g * v[0]) / h2;
    let ghost_right = |g: T| (two * v[m - 1] - two * v[m] - two * grid.dx() * g * v[m]) / h2;
    let os_left = one_sided(v[0], v[1], v[2], v[3]) / h2;
    let os_right = one_sided(v[m], v[m - 1], v[m - 2], v[m - 3]) / h2;
    match mode {
        LaplacianMode::InteriorOnly => {
            out[0] = os_left;
            out[m] = os_right;
        }
        LaplacianMode::WithBoundaryRows => {
            out[0] = bc.left.gamma().map_or(T::zero(), ghost_left);
            out[m] = bc.right.gamma().map_or(T::zero(), ghost_right);
        }
        LaplacianMode::Measured => {
            out[0] = bc.left.gamma().map_or(os_left, ghost_left);
            out[m] = bc.right.gamma().map_or(os_right, ghost_right);
        }
    }
    Ok(Field(out))
}

/// Tridiagonal matrix of `−Δ_h` with ghost closures; Dirichlet rows are identity rows.
pub fn negative_laplacian<T: Real>(grid: &Grid1D<T>, bc: &BoundarySpec<T>) -> Tridiagonal<T> {
    let n = grid.node_count();
    let m = n - 1;
    let h2 = grid.dx() * grid.dx();
    let two = T::lit(2.0);
    let off = -T::one() / h2;
    let mut lower = vec![off; m];
    let mut diag = vec![two / h2; n];
    let mut upper = vec![off; m];
    match bc.left.gamma() {
        None => {
            diag[0] = T::one();
            upper[0] = T::zero();
        }
        Some(g) => {
            diag[0] = (two + two * grid.dx() * g) / h2;
            upper[0] = -two / h2;
        }
    }
    match bc.right.gamma() {
        None => {
            diag[m] = T::one();
            lower[m - 1] = T::zero();
        }
        Some(g) => {
            diag[m] = (two + two * grid.dx() * g) / h2;
            lower[m - 1] = -two / h2;
        }
    }
    Tridiagonal { lower, diag, upper }
}

/// Composite trapezoid weights for `n` equally spaced samples with spacing `h`.
pub fn trapezoid_weights<T: Real>(n: usize, h: T) -> Vec<T> {
    let mut w = vec![h; n];
    if n > 0 {
        let half = h / T::lit(2.0);
        w[0] = half;
        w[n - 1] = half;
    }
    w
}

fn trapezoid<T: Real>(v: &[T], h: T) -> T {
    let n = v.len();
    if n < 2 {
        return T::zero();
    }
    let inner: T = v[1..n - 1].iter().copied().sum();
    h * (inner + (v[0] + v[n - 1]) / T::lit(2.0))
}

/// Trapezoid value of `∫₀ᴸ v dx`.
pub fn integrate<T: Real>(v: &[T], grid: &Grid1D<T>) -> Result<T> {
    check_len(grid.node_count(), v.len())?;
    Ok(trapezoid(v, grid.dx()))
}

/// Trapezoid value of `∫₀ᵀ v dt` for a series on the time nodes.
pub fn integrate_time<T: Real>(v: &[T], times: &TimeGrid<T>) -> Result<T> {
    check_len(times.steps() + 1, v.len())?;
    Ok(trapezoid(v, times.dt()))
}

/// Discrete `L²(0, L)` norm.
pub fn l2_norm<T: Real>(v: &[T], grid: &Grid1D<T>) -> Result<T> {
    let sq: Vec<T> = v.iter().map(|&x| x * x).collect();
    Ok(integrate(&sq, grid)?.sqrt())
}
