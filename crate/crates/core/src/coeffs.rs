//! Hat-function representations of the potential `q(x)` and the reaction term `f(u)`.

use crate::error::{check_len, Error, Result};
use crate::linalg::Matrix;
use crate::mesh::{Field, Grid1D};
use crate::scalar::Real;

/// Pointwise nonlinearity `u ↦ f(u)` with derivative.
pub trait Reaction<T: Copy>: Sync {
    fn eval(&self, u: T) -> T;
    fn deriv(&self, u: T) -> T;

    fn eval_field(&self, u: &[T]) -> Field<T> {
        Field(u.iter().map(|&v| self.eval(v)).collect())
    }

    fn deriv_field(&self, u: &[T]) -> Field<T> {
        Field(u.iter().map(|&v| self.deriv(v)).collect())
    }
}

/// Reaction term given by closures.
pub struct FnReaction<F, D> {
    f: F,
    df: D,
}

impl<F, D> FnReaction<F, D> {
    pub fn new(f: F, df: D) -> Self {
        Self { f, df }
    }
}

impl<T: Copy, F, D> Reaction<T> for FnReaction<F, D>
where
    F: Fn(T) -> T + Sync,
    D: Fn(T) -> T + Sync,
{
    fn eval(&self, u: T) -> T {
        (self.f)(u)
    }
    fn deriv(&self, u: T) -> T {
        (self.df)(u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    Spatial,
    State,
}

/// Piecewise linear nodal functions on uniform knots, extended linearly past the end knots.
#[derive(Debug, Clone, PartialEq)]
pub struct HatBasis<T> {
    kind: BasisKind,
    lo: T,
    hi: T,
    intervals: usize,
    excluded: Option<usize>,
}

impl<T: Real> HatBasis<T> {
    pub fn new(kind: BasisKind, lo: T, hi: T, intervals: usize, excluded: Option<usize>) -> Result<Self> {
        if !(hi > lo) || intervals < 1 {
            return Err(Error::InvalidConfig(format!(
                "hat basis needs lo < hi and at least one interval (got [{lo}, {hi}], {intervals})"
            )));
        }
        if let Some(e) = excluded {
            if e > intervals {
                return Err(Error::InvalidConfig(format!("excluded knot {e} out of range")));
            }
        }
        Ok(Self {
            kind,
            lo,
            hi,
            intervals,
            excluded,
        })
    }

    /// Spatial hats on `[0, L]`, optionally vanishing at the knot nearest `anchor`.
    pub fn spatial(length: T, intervals: usize, anchor: Option<T>) -> Result<Self> {
        let excluded = match anchor {
            None => None,
            Some(x) => {
                let s = x / length * T::from_usize_lossy(intervals);
                let k = s.round();
                if (s - k).abs() > T::lit(1e-9) || k < T::zero() {
                    return Err(Error::InvalidConfig(format!(
                        "anchor x = {x} is not a knot of the {intervals}-interval spatial basis"
                    )));
                }
                k.to_usize()
            }
        };
        Self::new(BasisKind::Spatial, T::zero(), length, intervals, excluded)
    }

    /// State hats covering `[lo, hi]` padded by `pad` (relative to the width).
    ///
    /// With an anchor `s₀`, the knots are placed so that `s₀` is a knot and every
    /// retained function vanishes there.
    pub fn state(lo: T, hi: T, intervals: usize, pad: T, anchor: Option<T>) -> Result<Self> {
        let width = if hi > lo { hi - lo } else { T::one() };
        let mut a = lo - pad * width;
        let mut b = hi + pad * width;
        let excluded = match anchor {
            None => None,
            Some(s0) if s0 <= lo => {
                a = s0;
                Some(0)
            }
            Some(s0) if s0 >= hi => {
                b = s0;
                Some(intervals)
            }
            Some(s0) => {
                if intervals < 2 {
                    return Err(Error::InvalidConfig("anchored interior knot needs two intervals".into()));
                }
                let n = T::from_usize_lossy(intervals);
                let k = ((s0 - a) / (b - a) * n)
                    .round()
                    .max(T::one())
                    .min(n - T::one());
                let h = ((s0 - a) / k).max((b - s0) / (n - k));
                a = s0 - k * h;
                b = a + n * h;
                k.to_usize()
            }
        };
        Self::new(BasisKind::State, a, b, intervals, excluded)
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn lo(&self) -> T {
        self.lo
    }

    pub fn hi(&self) -> T {
        self.hi
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn excluded(&self) -> Option<usize> {
        self.excluded
    }

    pub fn spacing(&self) -> T {
        (self.hi - self.lo) / T::from_usize_lossy(self.intervals)
    }

    pub fn knot(&self, i: usize) -> T {
        if i == self.intervals {
            self.hi
        } else {
            self.lo + (self.hi - self.lo) * T::from_usize_lossy(i) / T::from_usize_lossy(self.intervals)
        }
    }

    /// Number of retained functions.
    pub fn len(&self) -> usize {
        self.intervals + 1 - usize::from(self.excluded.is_some())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Knot index of the `k`-th retained function.
    pub fn knot_of(&self, k: usize) -> usize {
        match self.excluded {
            Some(e) if k >= e => k + 1,
            _ => k,
        }
    }

    fn index_of_knot(&self, i: usize) -> Option<usize> {
        match self.excluded {
            Some(e) if i == e => None,
            Some(e) if i > e => Some(i - 1),
            _ => Some(i),
        }
    }

    /// Segment index and local coordinate; knots belong to the segment on their left.
    fn locate(&self, p: T) -> (usize, T) {
        let s = (p - self.lo) / self.spacing();
        let r = s.round();
        let s = if (s - r).abs() < T::lit(1e-12) * (T::one() + s.abs()) { r } else { s };
        let last = self.intervals - 1;
        let j = if s <= T::zero() {
            0
        } else {
            (s.ceil() - T::one()).to_usize().unwrap_or(last).min(last)
        };
        (j, s - T::from_usize_lossy(j))
    }

    /// Nonzero `(function index, value)` pairs at `p` (at most two).
    pub fn weights(&self, p: T) -> [(Option<usize>, T); 2] {
        let (j, w) = self.locate(p);
        [
            (self.index_of_knot(j), T::one() - w),
            (self.index_of_knot(j + 1), w),
        ]
    }

    /// Value of the `k`-th retained function at `p`.
    pub fn phi(&self, k: usize, p: T) -> T {
        self.weights(p)
            .iter()
            .filter(|(i, _)| *i == Some(k))
            .map(|&(_, w)| w)
            .sum()
    }

    pub fn value(&self, coeffs: &[T], p: T) -> T {
        self.weights(p)
            .iter()
            .filter_map(|&(i, w)| i.map(|i| coeffs[i] * w))
            .sum()
    }

    /// Piecewise constant slope, left-slope convention at knots.
    pub fn slope(&self, coeffs: &[T], p: T) -> T {
        let (j, _) = self.locate(p);
        let c = |i: usize| self.index_of_knot(i).map_or(T::zero(), |k| coeffs[k]);
        (c(j + 1) - c(j)) / self.spacing()
    }

    /// Design matrix `Φ[i, k] = φ_k(p_i)`.
    pub fn design(&self, points: &[T]) -> Matrix<T> {
        let mut m = Matrix::zeros(points.len(), self.len());
        for (r, &p) in points.iter().enumerate() {
            for (i, w) in self.weights(p) {
                if let Some(i) = i {
                    m[(r, i)] += w;
                }
            }
        }
        m
    }
}

/// `q(x) = base + Σ a_m χ_m(x)`; with an excluded knot `x̄`, `q(x̄) = base` exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential<T> {
    basis: HatBasis<T>,
    coeffs: Vec<T>,
    base: T,
}

impl<T: Real> Potential<T> {
    pub fn new(basis: HatBasis<T>, coeffs: Vec<T>, base: T) -> Result<Self> {
        check_len(basis.len(), coeffs.len())?;
        Ok(Self { basis, coeffs, base })
    }

    pub fn constant(basis: HatBasis<T>, base: T) -> Self {
        let coeffs = vec![T::zero(); basis.len()];
        Self { basis, coeffs, base }
    }

    pub fn basis(&self) -> &HatBasis<T> {
        &self.basis
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn base(&self) -> T {
        self.base
    }

    /// `(x̄, q̄)` when the basis excludes a knot.
    pub fn anchor(&self) -> Option<(T, T)> {
        self.basis.excluded().map(|e| (self.basis.knot(e), self.base))
    }

    pub fn eval(&self, x: T) -> T {
        self.base + self.basis.value(&self.coeffs, x)
    }

    pub fn nodal(&self, grid: &Grid1D<T>) -> Field<T> {
        grid.sample(|x| self.eval(x))
    }

    pub fn with_coeffs(&self, coeffs: Vec<T>) -> Result<Self> {
        Self::new(self.basis.clone(), coeffs, self.base)
    }
}

/// `f(u) = f₀ + s·u + Σ b_n θ_n(u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Nonlinearity<T> {
    basis: HatBasis<T>,
    coeffs: Vec<T>,
    offset: T,
    slope: T,
}

impl<T: Real> Nonlinearity<T> {
    pub fn new(basis: HatBasis<T>, coeffs: Vec<T>, offset: T, slope: T) -> Result<Self> {
        check_len(basis.len(), coeffs.len())?;
        Ok(Self {
            basis,
            coeffs,
            offset,
            slope,
        })
    }

    pub fn affine(basis: HatBasis<T>, offset: T, slope: T) -> Self {
        let coeffs = vec![T::zero(); basis.len()];
        Self {
            basis,
            coeffs,
            offset,
            slope,
        }
    }

    /// Interpolates `f` at the knots of `basis` (which must not exclude a knot).
    pub fn interpolate(basis: HatBasis<T>, f: impl Fn(T) -> T) -> Result<Self> {
        if basis.excluded().is_some() {
            return Err(Error::InvalidConfig("interpolation needs an unanchored basis".into()));
        }
        let coeffs = (0..=basis.intervals()).map(|i| f(basis.knot(i))).collect();
        Self::new(basis, coeffs, T::zero(), T::zero())
    }

    pub fn basis(&self) -> &HatBasis<T> {
        &self.basis
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn offset(&self) -> T {
        self.offset
    }

    pub fn affine_slope(&self) -> T {
        self.slope
    }

    /// `(s₀, f(s₀))` when the basis excludes a knot.
    pub fn anchor(&self) -> Option<(T, T)> {
        self.basis.excluded().map(|e| {
            let s0 = self.basis.knot(e);
            (s0, self.offset + self.slope * s0)
        })
    }

    pub fn eval(&self, u: T) -> T {
        self.offset + self.slope * u + self.basis.value(&self.coeffs, u)
    }

    pub fn eval_deriv(&self, u: T) -> T {
        self.slope + self.basis.slope(&self.coeffs, u)
    }

    /// Largest slope magnitude, a global Lipschitz constant.
    pub fn lipschitz(&self) -> T {
        (0..self.basis.intervals())
            .map(|j| {
                let mid = (self.basis.knot(j) + self.basis.knot(j + 1)) / T::lit(2.0);
                self.eval_deriv(mid).abs()
            })
            .fold(T::zero(), T::max)
    }

    pub fn with_coeffs(&self, coeffs: Vec<T>) -> Result<Self> {
        Self::new(self.basis.clone(), coeffs, self.offset, self.slope)
    }
}

impl<T: Real> Reaction<T> for Nonlinearity<T> {
    fn eval(&self, u: T) -> T {
        Nonlinearity::eval(self, u)
    }
    fn deriv(&self, u: T) -> T {
        self.eval_deriv(u)
    }
}

/// `exp ∘ f̃` for a log-space representation `f̃`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpReaction<T>(pub Nonlinearity<T>);

impl<T: Real> Reaction<T> for ExpReaction<T> {
    fn eval(&self, u: T) -> T {
        self.0.eval(u).exp()
    }
    fn deriv(&self, u: T) -> T {
        self.0.eval(u).exp() * self.0.eval_deriv(u)
    }
}

/// Stacks `(a, b)` with the potential block first.
pub fn pack<T: Real>(q: &Potential<T>, f: &Nonlinearity<T>) -> Vec<T> {
    let mut v = q.coeffs().to_vec();
    v.extend_from_slice(f.coeffs());
    v
}

/// Inverse of [`pack`], keeping bases and affine/anchor parts from the templates.
pub fn unpack<T: Real>(
    v: &[T],
    q_template: &Potential<T>,
    f_template: &Nonlinearity<T>,
) -> Result<(Potential<T>, Nonlinearity<T>)> {
    let m = q_template.basis().len();
    check_len(m + f_template.basis().len(), v.len())?;
    Ok((
        q_template.with_coeffs(v[..m].to_vec())?,
        f_template.with_coeffs(v[m..].to_vec())?,
    ))
}

/// C² step equal to 1 on `[0, 1]`'s left end and 0 at its right end.
fn smooth_step<T: Real>(t: T) -> T {
    if t <= T::zero() {
        T::one()
    } else if t >= T::one() {
        T::zero()
    } else {
        let t3 = t * t * t;
        T::one() - t3 * (T::lit(10.0) - T::lit(15.0) * t + T::lit(6.0) * t * t)
    }
}

/// Growth cutoff `f_M` of a smooth nonlinearity.
///
/// `f_M(0) = f(0)`, `f_M′(0) = f′(0)` and `f_M″ = η_M f″` where `η_M` is a C² bump equal
/// to 1 on `|ζ| ≤ M` and 0 for `|ζ| ≥ M + 1`. The result is sampled on `intervals` uniform
/// knots spanning `[−M−1, M+1]`; outside that range `f_M` is affine and the linear
/// extension of the hat representation is exact.
pub fn cutoff<T: Real>(
    f0: T,
    df0: T,
    d2f: impl Fn(T) -> T,
    m_cut: T,
    intervals: usize,
) -> Result<Nonlinearity<T>> {
    if !(m_cut > T::zero()) {
        return Err(Error::InvalidConfig(format!("cutoff bound must be positive, got {m_cut}")));
    }
    if intervals < 2 || !intervals.is_multiple_of(2) {
        return Err(Error::InvalidConfig("cutoff needs an even number of intervals".into()));
    }
    let r = m_cut + T::one();
    let basis = HatBasis::new(BasisKind::State, -r, r, intervals, None)?;
    let g = |s: T| smooth_step(s.abs() - m_cut) * d2f(s);
    // Integrate twice outward from 0 with fine sub-steps per knot interval.
    let h = basis.spacing();
    let sub = 64usize;
    let half = intervals / 2;
    let mut values = vec![T::zero(); intervals + 1];
    for dir in [1i32, -1] {
        let sign = T::from_i32(dir).unwrap_or_else(T::one);
        let mut slope = df0;
        let mut value = f0;
        values[half] = f0;
        for step in 0..half {
            let a = sign * T::from_usize_lossy(step) * h;
            let dh = sign * h / T::from_usize_lossy(sub);
            for i in 0..sub {
                let s0 = a + T::from_usize_lossy(i) * dh;
                let sm = s0 + dh / T::lit(2.0);
                let s1 = s0 + dh;
                // slope(s) = slope(s0) + ∫ g, value via exact Simpson of the slope
                let g0 = g(s0);
                let g1 = g(s1);
                let slope_1 = slope + dh / T::lit(6.0) * (g0 + T::lit(4.0) * g(sm) + g1);
                // corrected trapezoid for ∫ slope, fourth order
                value += dh / T::lit(2.0) * (slope + slope_1) - dh * dh / T::lit(12.0) * (g1 - g0);
                slope = slope_1;
            }
            let idx = if dir > 0 { half + step + 1 } else { half - step - 1 };
            values[idx] = value;
        }
    }
    Nonlinearity::new(basis, values, T::zero(), T::zero())
}

/// `L²` distance between two functions over `[lo, hi]` by the trapezoid rule on `samples` points.
pub fn l2_distance_on<T: Real>(a: impl Fn(T) -> T, b: impl Fn(T) -> T, lo: T, hi: T, samples: usize) -> T {
    l2_norm_on(|u| a(u) - b(u), lo, hi, samples)
}

pub fn l2_norm_on<T: Real>(a: impl Fn(T) -> T, lo: T, hi: T, samples: usize) -> T {
    let n = samples.max(2);
    let h = (hi - lo) / T::from_usize_lossy(n - 1);
    let mut acc = T::zero();
    for i in 0..n {
        let u = lo + h * T::from_usize_lossy(i);
        let w = if i == 0 || i == n - 1 { h / T::lit(2.0) } else { h };
        let d = a(u);
        acc += w * d * d;
    }
    acc.sqrt()
}
