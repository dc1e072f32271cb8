//! Physical constants and unit helpers.

use std::f64::consts::PI;

/// Reduced Planck constant (J s).
pub const HBAR: f64 = 1.054_571_817e-34;

pub const TWO_PI: f64 = 2.0 * PI;

/// Cyclic frequency (Hz) to angular frequency (rad/s).
#[inline]
pub fn hz(f: f64) -> f64 {
    TWO_PI * f
}

/// `f` in MHz, returned in rad/s.
#[inline]
pub fn mhz(f: f64) -> f64 {
    TWO_PI * f * 1e6
}

/// Angular frequency (rad/s) to cyclic frequency (Hz).
#[inline]
pub fn to_hz(omega: f64) -> f64 {
    omega / TWO_PI
}

#[inline]
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[inline]
pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}
