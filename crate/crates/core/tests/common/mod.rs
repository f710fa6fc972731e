#![allow(dead_code)]

use subdiff_core::forward::{Excitation, ProblemSpec, Source};
use subdiff_core::mesh::{BoundarySpec, Field, Grid1D, TimeGrid};

pub fn steady(grid: &Grid1D<f64>, r: impl Fn(f64) -> f64, u0: impl Fn(f64) -> f64) -> Excitation<f64> {
    Excitation {
        source: Source::Steady(grid.sample(r)),
        initial: grid.sample(u0),
    }
}

pub fn spec(
    alpha: f64,
    m: usize,
    n: usize,
    horizon: f64,
    bc: BoundarySpec<f64>,
    excitations: impl FnOnce(&Grid1D<f64>) -> Vec<Excitation<f64>>,
) -> ProblemSpec<f64> {
    let grid = Grid1D::new(1.0, m).unwrap();
    let times = TimeGrid::new(horizon, n).unwrap();
    let ex = excitations(&grid);
    ProblemSpec::new(alpha, grid, times, bc, ex).unwrap()
}

/// Two steady excitations with zero initial data on Neumann ends.
pub fn two_source_spec(alpha: f64, m: usize, n: usize, r1: f64, r2: f64) -> ProblemSpec<f64> {
    spec(alpha, m, n, 1.0, BoundarySpec::neumann(), |g| {
        vec![steady(g, |_| r1, |_| 0.0), steady(g, |_| r2, |_| 0.0)]
    })
}

pub fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn field(v: Vec<f64>) -> Field<f64> {
    Field(v)
}
