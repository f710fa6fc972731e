//! Observation operators, synthetic noise, pre-smoothing and data admissibility checks.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::caputo::SpaceTimeField;
use crate::error::{check_len, Error, Result};
use crate::linalg::{solve_spd, Matrix};
use crate::mesh::{trapezoid_weights, BoundaryKind, BoundarySpec, Field, Grid1D, TimeGrid};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case {
    /// Time traces at boundary nodes, both excitations.
    A,
    /// Final-time profiles, both excitations.
    B,
    /// Trace at an interior point plus final profile, one excitation.
    C,
}

impl Case {
    pub fn tag(&self) -> &'static str {
        match self {
            Case::A => "a",
            Case::B => "b",
            Case::C => "c",
        }
    }
}

/// Where a case is observed.
#[derive(Debug, Clone, PartialEq)]
pub enum ObservationSite<T> {
    /// Boundary points `Γ ⊆ {0, L}`.
    Boundary(Vec<T>),
    FinalTime,
    /// Trace point `x₀ > 0`.
    Mixed(T),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload<T> {
    /// `traces[i][p]` is excitation `i` observed at node `nodes[p]`.
    Traces { nodes: Vec<usize>, traces: Vec<Vec<Vec<T>>> },
    Profiles(Vec<Field<T>>),
    Mixed { node: usize, trace: Vec<T>, profile: Field<T> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationData<T> {
    pub grid: Grid1D<T>,
    pub times: TimeGrid<T>,
    pub payload: Payload<T>,
    pub delta: T,
    pub seed: Option<u64>,
    /// True once pre-smoothed (or when noiseless).
    pub smoothed: bool,
    pub warnings: Vec<String>,
}

impl<T: Real> ObservationData<T> {
    pub fn case(&self) -> Case {
        match self.payload {
            Payload::Traces { .. } => Case::A,
            Payload::Profiles(_) => Case::B,
            Payload::Mixed { .. } => Case::C,
        }
    }

    pub fn profiles(&self) -> Option<&[Field<T>]> {
        match &self.payload {
            Payload::Profiles(g) => Some(g),
            _ => None,
        }
    }

    /// Every series with its quadrature weights.
    fn series_mut(&mut self) -> Vec<(&mut Vec<T>, Vec<T>, bool)> {
        let wx = trapezoid_weights(self.grid.node_count(), self.grid.dx());
        let wt = trapezoid_weights(self.times.steps() + 1, self.times.dt());
        match &mut self.payload {
            Payload::Traces { traces, .. } => traces
                .iter_mut()
                .flat_map(|per| per.iter_mut())
                .map(|s| (s, wt.clone(), false))
                .collect(),
            Payload::Profiles(g) => g.iter_mut().map(|p| (&mut p.0, wx.clone(), true)).collect(),
            Payload::Mixed { trace, profile, .. } => vec![(trace, wt, false), (&mut profile.0, wx, true)],
        }
    }

    /// CSV layout: comment header with case, δ and seed, then one block per abscissa.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let seed = self.seed.map_or("none".to_string(), |v| v.to_string());
        let _ = writeln!(s, "# case={} delta={} seed={}", self.case().tag(), self.delta, seed);
        let x = self.grid.nodes();
        let t = self.times.times();
        match &self.payload {
            Payload::Traces { nodes, traces } => {
                let mut head = vec!["t".to_string()];
                for i in 0..traces.len() {
                    for &j in nodes {
                        head.push(format!("h{}_x{}", i + 1, j));
                    }
                }
                let _ = writeln!(s, "{}", head.join(","));
                for (n, tn) in t.iter().enumerate() {
                    let mut row = vec![tn.to_string()];
                    for per in traces {
                        for tr in per {
                            row.push(tr[n].to_string());
                        }
                    }
                    let _ = writeln!(s, "{}", row.join(","));
                }
            }
            Payload::Profiles(g) => {
                let head: Vec<String> = std::iter::once("x".to_string())
                    .chain((1..=g.len()).map(|i| format!("g{i}")))
                    .collect();
                let _ = writeln!(s, "{}", head.join(","));
                for (j, xj) in x.iter().enumerate() {
                    let row: Vec<String> = std::iter::once(xj.to_string())
                        .chain(g.iter().map(|p| p[j].to_string()))
                        .collect();
                    let _ = writeln!(s, "{}", row.join(","));
                }
            }
            Payload::Mixed { node, trace, profile } => {
                let _ = writeln!(s, "t,h_x{node}");
                for (tn, v) in t.iter().zip(trace) {
                    let _ = writeln!(s, "{tn},{v}");
                }
                let _ = writeln!(s);
                let _ = writeln!(s, "x,g");
                for (xj, v) in x.iter().zip(profile.iter()) {
                    let _ = writeln!(s, "{xj},{v}");
                }
            }
        }
        s
    }
}

/// Applies the observation operator of `case` to solved states (one per excitation).
pub fn observe<T: Real>(states: &[SpaceTimeField<T>], site: &ObservationSite<T>) -> Result<ObservationData<T>> {
    let first = states
        .first()
        .ok_or_else(|| Error::InvalidConfig("no states to observe".into()))?;
    let grid = *first.grid();
    let times = *first.times();
    let locate = |x: T| {
        grid.node_index(x)
            .ok_or_else(|| Error::InvalidConfig(format!("observation point {x} is not a grid node")))
    };
    let mut warnings = Vec::new();
    let payload = match site {
        ObservationSite::Boundary(points) => {
            let mut nodes = Vec::new();
            for &p in points {
                let j = locate(p)?;
                if j != 0 && j != grid.intervals() {
                    return Err(Error::InvalidConfig(format!("trace point {p} is not a boundary node")));
                }
                nodes.push(j);
            }
            let traces: Vec<Vec<Vec<T>>> = states
                .iter()
                .map(|s| nodes.iter().map(|&j| s.trace(j)).collect())
                .collect();
            if traces.iter().flatten().any(|tr| tr.iter().skip(1).all(|&v| v == T::zero())) {
                warnings.push("a boundary trace vanishes identically (Dirichlet node?)".into());
            }
            Payload::Traces { nodes, traces }
        }
        ObservationSite::FinalTime => Payload::Profiles(states.iter().map(|s| s.final_snapshot().clone()).collect()),
        ObservationSite::Mixed(x0) => {
            if !(*x0 > T::zero()) {
                return Err(Error::InvalidConfig("trace point x0 must be positive".into()));
            }
            let node = locate(*x0)?;
            Payload::Mixed {
                node,
                trace: first.trace(node),
                profile: first.final_snapshot().clone(),
            }
        }
    };
    Ok(ObservationData {
        grid,
        times,
        payload,
        delta: T::zero(),
        seed: None,
        smoothed: true,
        warnings,
    })
}

fn weighted_norm<T: Real>(v: &[T], w: &[T]) -> T {
    v.iter().zip(w).map(|(&a, &b)| b * a * a).sum::<T>().sqrt()
}

/// Adds relative Gaussian noise `δ ‖y‖ ξ / ‖ξ‖` to every series, reproducibly per seed.
pub fn add_noise<T: Real>(data: &ObservationData<T>, delta: T, seed: u64) -> ObservationData<T> {
    let mut out = data.clone();
    out.delta = delta;
    out.seed = Some(seed);
    if delta == T::zero() {
        return out;
    }
    out.smoothed = false;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (series, w, _) in out.series_mut() {
        let xi: Vec<T> = (0..series.len())
            .map(|_| T::lit(StandardNormal.sample(&mut rng)))
            .collect();
        let scale = delta * weighted_norm(series, &w) / weighted_norm(&xi, &w);
        for (y, e) in series.iter_mut().zip(&xi) {
            *y += scale * *e;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingConfig {
    /// Order of the difference penalty.
    pub order: usize,
    /// Bracket for log₁₀ of the penalty weight.
    pub log10_range: (f64, f64),
    pub bisection_steps: usize,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self {
            order: 4,
            log10_range: (-12.0, 12.0),
            bisection_steps: 60,
        }
    }
}

/// Result of smoothing one series.
#[derive(Debug, Clone, PartialEq)]
pub struct Smoothed<T> {
    pub values: Vec<T>,
    pub log10_weight: f64,
    pub bracketed: bool,
}

fn difference_matrix<T: Real>(n: usize, order: usize) -> Matrix<T> {
    let mut d = Matrix::identity(n);
    for _ in 0..order {
        let r = d.rows() - 1;
        let mut e = Matrix::zeros(r, n);
        for i in 0..r {
            for j in 0..n {
                e[(i, j)] = d[(i + 1, j)] - d[(i, j)];
            }
        }
        d = e;
    }
    d
}

/// Penalized least squares `min ‖z − y‖² + μ ‖Dᵏ z‖²` with `z = 0` on `pinned` indices and
/// `μ` tuned by bisection so that the weighted misfit equals `target`.
pub fn smooth_series<T: Real>(
    y: &[T],
    weights: &[T],
    target: T,
    pinned: &[usize],
    cfg: &SmoothingConfig,
) -> Result<Smoothed<T>> {
    let n = y.len();
    check_len(n, weights.len())?;
    if n <= cfg.order + 1 {
        return Err(Error::InvalidConfig(format!("series of length {n} too short to smooth")));
    }
    let free: Vec<usize> = (0..n).filter(|i| !pinned.contains(i)).collect();
    let d = difference_matrix::<T>(n, cfg.order);
    let nf = free.len();
    let mut dtd = Matrix::zeros(nf, nf);
    for r in 0..d.rows() {
        for (a, &i) in free.iter().enumerate() {
            let di = d[(r, i)];
            if di == T::zero() {
                continue;
            }
            for (b, &j) in free.iter().enumerate() {
                dtd[(a, b)] += di * d[(r, j)];
            }
        }
    }
    let yf: Vec<T> = free.iter().map(|&i| y[i]).collect();
    let solve = |log_mu: f64| -> Result<(Vec<T>, T)> {
        let mu = T::lit(10f64.powf(log_mu));
        let mut a = dtd.clone();
        for i in 0..nf {
            for j in 0..nf {
                a[(i, j)] *= mu;
            }
            a[(i, i)] += T::one();
        }
        let zf = solve_spd(&a, &yf)?;
        let mut z = vec![T::zero(); n];
        for (k, &i) in free.iter().enumerate() {
            z[i] = zf[k];
        }
        let diff: Vec<T> = z.iter().zip(y).map(|(&a, &b)| a - b).collect();
        Ok((z, weighted_norm(&diff, weights)))
    };
    let (mut lo, mut hi) = cfg.log10_range;
    let (z_lo, r_lo) = solve(lo)?;
    if r_lo > target {
        return Ok(Smoothed {
            values: z_lo,
            log10_weight: lo,
            bracketed: false,
        });
    }
    let (z_hi, r_hi) = loop {
        match solve(hi) {
            Ok(v) => break v,
            Err(_) if hi - 2.0 > lo => hi -= 2.0,
            Err(e) => return Err(e),
        }
    };
    if r_hi <= target {
        return Ok(Smoothed {
            values: z_hi,
            log10_weight: hi,
            bracketed: false,
        });
    }
    let mut best = z_lo;
    for _ in 0..cfg.bisection_steps {
        let mid = 0.5 * (lo + hi);
        let (z, r) = solve(mid)?;
        if r > target {
            hi = mid;
        } else {
            lo = mid;
            best = z;
        }
    }
    Ok(Smoothed {
        values: best,
        log10_weight: lo,
        bracketed: true,
    })
}

/// Node indices of the even extension across Neumann ends, and the offset of the original block.
fn mirror_indices(m: usize, left: bool, right: bool) -> (Vec<usize>, usize) {
    let mut idx = Vec::with_capacity(3 * m + 1);
    if left {
        idx.extend((1..=m).rev());
    }
    let start = idx.len();
    idx.extend(0..=m);
    if right {
        idx.extend((0..m).rev());
    }
    (idx, start)
}

/// Pre-smooths every series at the recorded noise level; Dirichlet ends of profiles stay zero.
pub fn presmooth<T: Real>(data: &ObservationData<T>, bc: &BoundarySpec<T>, cfg: &SmoothingConfig) -> Result<ObservationData<T>> {
    let mut out = data.clone();
    out.smoothed = true;
    if data.delta == T::zero() {
        return Ok(out);
    }
    let m = data.grid.intervals();
    let mut pins = Vec::new();
    if bc.left.is_dirichlet() {
        pins.push(0);
    }
    if bc.right.is_dirichlet() {
        pins.push(m);
    }
    let delta = data.delta;
    let mut warnings = Vec::new();
    let left_mirror = matches!(bc.left, BoundaryKind::Neumann);
    let right_mirror = matches!(bc.right, BoundaryKind::Neumann);
    for (series, w, profile) in out.series_mut() {
        if profile && (left_mirror || right_mirror) {
            let (idx, start) = mirror_indices(m, left_mirror, right_mirror);
            let ext: Vec<T> = idx.iter().map(|&i| series[i]).collect();
            let we: Vec<T> = idx.iter().map(|&i| w[i]).collect();
            let pe: Vec<usize> = (0..idx.len()).filter(|&k| pins.contains(&idx[k])).collect();
            let target = delta * weighted_norm(&ext, &we);
            let sm = smooth_series(&ext, &we, target, &pe, cfg)?;
            if !sm.bracketed {
                warnings.push(format!("discrepancy target not bracketed; using penalty 1e{}", sm.log10_weight));
            }
            series.copy_from_slice(&sm.values[start..=start + m]);
            continue;
        }
        let target = delta * weighted_norm(series, &w);
        let pinned: &[usize] = if profile { &pins } else { &[] };
        let sm = smooth_series(series, &w, target, pinned, cfg)?;
        if !sm.bracketed {
            warnings.push(format!(
                "discrepancy target not bracketed; using penalty 1e{}",
                sm.log10_weight
            ));
        }
        *series = sm.values;
    }
    out.warnings.extend(warnings);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityReport<T> {
    pub passes: bool,
    /// `min |g¹′| / |g²′|`.
    pub c_ratio: T,
    /// `min |g²′|`.
    pub c_floor: T,
    /// Intersection abscissa, when unique.
    pub x_s: Option<T>,
    /// Common value `g¹(x_s) = g²(x_s)`.
    pub s_star: Option<T>,
    pub range_inclusion: bool,
    pub reasons: Vec<String>,
}

fn strictly_monotone<T: Real>(d: &[T]) -> bool {
    d.iter().all(|&v| v > T::zero()) || d.iter().all(|&v| v < T::zero())
}

/// Checks strict monotonicity, slope domination `C_g > 1`, a unique crossing and range inclusion.
pub fn check_admissibility<T: Real>(g1: &Field<T>, g2: &Field<T>, grid: &Grid1D<T>) -> Result<AdmissibilityReport<T>> {
    g1.check_on(grid)?;
    g2.check_on(grid)?;
    let dx = grid.dx();
    let slopes = |g: &Field<T>| -> Vec<T> { g.windows(2).map(|w| (w[1] - w[0]) / dx).collect() };
    let d1 = slopes(g1);
    let d2 = slopes(g2);
    let mut reasons = Vec::new();
    if !strictly_monotone(&d1) {
        reasons.push("g1 is not strictly monotone".to_string());
    }
    if !strictly_monotone(&d2) {
        reasons.push("g2 is not strictly monotone".to_string());
    }
    let c_floor = d2.iter().fold(T::infinity(), |m, &v| m.min(v.abs()));
    let c_ratio = d1
        .iter()
        .zip(&d2)
        .fold(T::infinity(), |m, (&a, &b)| m.min(a.abs() / b.abs()));
    if !(c_ratio > T::one()) {
        reasons.push(format!("slope ratio C_g = {c_ratio} does not exceed 1"));
    }
    if !(c_floor > T::zero()) {
        reasons.push("slope floor c_g is not positive".to_string());
    }

    let scale = g1.iter().chain(g2.iter()).fold(T::zero(), |m, &v| m.max(v.abs()));
    let tol = T::lit(1e-12) * (T::one() + scale);
    let e: Vec<T> = g1.iter().zip(g2.iter()).map(|(&a, &b)| a - b).collect();
    let x = grid.nodes();
    let mut roots: Vec<T> = Vec::new();
    let mut prev_root = false;
    let mut degenerate = false;
    for j in 0..e.len() {
        let is_root = e[j].abs() <= tol;
        if is_root {
            if prev_root {
                degenerate = true;
            }
            roots.push(x[j]);
        } else if j > 0 && !prev_root && (e[j - 1] > T::zero()) != (e[j] > T::zero()) {
            let t = e[j - 1] / (e[j - 1] - e[j]);
            roots.push(x[j - 1] + t * dx);
        }
        prev_root = is_root;
    }
    let (x_s, s_star) = if roots.len() == 1 && !degenerate {
        let xs = roots[0];
        let j = ((xs / dx).floor().to_usize().unwrap_or(0)).min(grid.intervals() - 1);
        let t = (xs - x[j]) / dx;
        (Some(xs), Some(g1[j] + t * (g1[j + 1] - g1[j])))
    } else {
        reasons.push(format!("expected one crossing of g1 and g2, found {}", if degenerate { "a segment".to_string() } else { roots.len().to_string() }));
        (None, None)
    };

    let range = |g: &Field<T>| g.iter().fold((T::infinity(), T::neg_infinity()), |(a, b), &v| (a.min(v), b.max(v)));
    let (lo1, hi1) = range(g1);
    let (lo2, hi2) = range(g2);
    let range_inclusion = lo2 >= lo1 - tol && hi2 <= hi1 + tol;
    if !range_inclusion {
        reasons.push("g2 range not contained in g1 range".to_string());
    }
    Ok(AdmissibilityReport {
        passes: reasons.is_empty(),
        c_ratio,
        c_floor,
        x_s,
        s_star,
        range_inclusion,
        reasons,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeCheck<T> {
    pub holds: bool,
    /// Signed distance of the state range inside the trace range (negative when violated).
    pub margin: T,
}

/// Whether every value of `state` lies in `[min h, max h]`.
pub fn check_range_condition<T: Real>(state: &SpaceTimeField<T>, h: &[T]) -> RangeCheck<T> {
    let (ulo, uhi) = state.min_max();
    let (hlo, hhi) = h.iter().fold((T::infinity(), T::neg_infinity()), |(a, b), &v| (a.min(v), b.max(v)));
    let margin = (ulo - hlo).min(hhi - uhi);
    let tol = T::lit(1e-12) * (T::one() + hlo.abs().max(hhi.abs()));
    RangeCheck {
        holds: margin >= -tol,
        margin,
    }
}
