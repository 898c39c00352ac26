//! Fixtures shared by the benchmarks.

use std::f64::consts::PI;

use num_complex::Complex64;
use weylcap::channel::make_spreading;
use weylcap::{SampledSignal, SpreadingFunction, SpreadingKind, TimeGrid};

/// Unit Gaussian centered at `u` and modulated to `eta`.
pub fn packet(grid: TimeGrid, u: f64, eta: f64) -> SampledSignal {
    SampledSignal::from_fn(grid, |t| {
        Complex64::from_polar((-PI * (t - u).powi(2)).exp(), 2.0 * PI * eta * t)
    })
}

/// Separable exponential channel with equal decay rates `x`.
pub fn separable(x: f64) -> SpreadingFunction {
    make_spreading(SpreadingKind::SeparableExponential, 1.0, x, x, 0).expect("valid rates")
}
