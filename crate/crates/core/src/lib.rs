//! Simulation and analysis toolkit for cavity electro-optic microwave-optical
//! transducers.
//!
//! The device is modelled with five resonant modes: the optical pump `a_p`,
//! the optical signal `a_o` (anti-Stokes side), the optical Stokes mode `a_s`,
//! a polarization-orthogonal optical mode `a_r` that hybridizes with `a_s`, and
//! the microwave mode `a_e`.
//!
//! * [`params`] holds the physical parameters and derived cooperativities.
//! * [`dynamics`] integrates the coherent equations of motion in time.
//! * [`steadystate`] solves the linearized fluctuation problem in frequency.
//! * [`noise`] turns scattering coefficients into output noise figures.
//! * [`fitting`] estimates device parameters from characterization traces.
//! * [`calibration`] handles four-port gain bookkeeping.
//!
//! All rates and frequencies are angular (rad/s) unless a name says otherwise.

pub mod calibration;
pub mod config;
pub mod dynamics;
pub mod fitting;
pub mod noise;
pub mod params;
pub mod steadystate;
pub mod units;

mod par;

pub use num_complex::Complex64;
