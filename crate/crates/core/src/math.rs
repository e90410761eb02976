//! `f64` functions that work without `std`.

pub(crate) use libm::{acos, asin, atan2, ceil, cos, exp, floor, log10, log1p, pow, round, sin, sqrt, tanh};

pub(crate) fn powi(x: f64, n: i32) -> f64 {
    libm::pow(x, n as f64)
}
