//! Time-domain integration of the five coupled coherent amplitudes
//! `a_p, a_o, a_s, a_e, a_r` in the rotating frames of their drive carriers.
//!
//! ```text
//! ȧ_p = (-iΔ_p - κ_p/2) a_p - i g0 (a_s a_e + a_e* a_o) + Λ sqrt(κ_p,ex) F_p
//! ȧ_o = (-iΔ_o - κ_o/2) a_o - i g0 a_p a_e              + Λ sqrt(κ_o,ex) F_o
//! ȧ_s = (-iΔ_s - κ_s/2) a_s - i g0 a_p a_e* - i J a_r
//! ȧ_e = (-iΔ_e - κ_e/2) a_e - i g0 a_p a_s* - i g0 a_p* a_o + sqrt(κ_e,ex) F_e
//! ȧ_r = (-iΔ_r - κ_r/2) a_r - i J a_s
//! ```
//!
//! Outputs are `a_e,out = sqrt(κ_e,ex) a_e - F_e` and
//! `a_o,out = Λ sqrt(κ_o,ex) a_o - F_o`.

use std::str::FromStr;

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::params::{ParamError, SystemParams};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Upper bound on `h (κ_max/2 + |Δ_max|)` for a single integrator step.
pub const STABILITY_LIMIT: f64 = 0.1;

/// Default grid step (s).
pub const DEFAULT_DT: f64 = 0.5e-9;

const DIVERGENCE_LIMIT: f64 = 1e100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("invalid drive: {0}")]
    InvalidDrive(String),
    #[error("step {h:e} s too large: h·(κ_max/2 + |Δ_max|) = {product:.4} exceeds {limit}")]
    Unstable { h: f64, product: f64, limit: f64 },
    #[error("integration diverged at step {step} (t = {time:e} s): |{mode}| = {magnitude:e}")]
    Diverged {
        step: usize,
        time: f64,
        mode: &'static str,
        magnitude: f64,
    },
    #[error("unknown direction `{0}` (expected e2o or o2e)")]
    InvalidDirection(String),
    #[error(transparent)]
    Params(#[from] ParamError),
}

/// Uniform grid `0, dt, 2 dt, ...` up to and including `t_end` (rounded).
pub fn time_grid(t_end: f64, dt: f64) -> Vec<f64> {
    let n = (t_end / dt).round() as usize + 1;
    (0..n).map(|k| k as f64 * dt).collect()
}

/// Complex drive envelopes on a shared uniform grid, in √(photons/s).
#[derive(Debug, Clone, PartialEq)]
pub struct DriveSet {
    pub t: Vec<f64>,
    pub f_pump: Vec<Complex64>,
    pub f_mw: Vec<Complex64>,
    pub f_opt: Vec<Complex64>,
}

impl DriveSet {
    pub fn new(t: Vec<f64>, f_pump: Vec<Complex64>, f_mw: Vec<Complex64>, f_opt: Vec<Complex64>) -> Result<Self, DynamicsError> {
        let d = Self { t, f_pump, f_mw, f_opt };
        d.validate()?;
        Ok(d)
    }

    /// All-zero drives on `t`.
    pub fn zeros(t: Vec<f64>) -> Self {
        let n = t.len();
        Self {
            t,
            f_pump: vec![ZERO; n],
            f_mw: vec![ZERO; n],
            f_opt: vec![ZERO; n],
        }
    }

    pub fn dt(&self) -> f64 {
        self.t[1] - self.t[0]
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let n = self.t.len();
        if n < 2 {
            return Err(DynamicsError::InvalidDrive("time grid needs at least two points".into()));
        }
        for (name, v) in [("f_pump", &self.f_pump), ("f_mw", &self.f_mw), ("f_opt", &self.f_opt)] {
            if v.len() != n {
                return Err(DynamicsError::InvalidDrive(format!("{name} has {} samples, grid has {n}", v.len())));
            }
            if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(DynamicsError::InvalidDrive(format!("{name} is not finite")));
            }
        }
        let dt = self.dt();
        if !(dt > 0.0) {
            return Err(DynamicsError::InvalidDrive("grid must be strictly increasing".into()));
        }
        for w in self.t.windows(2) {
            if ((w[1] - w[0]) - dt).abs() > 1e-6 * dt {
                return Err(DynamicsError::InvalidDrive(format!("grid is not uniform near t = {:e}", w[0])));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ModeAmplitudes {
    pub a_p: Complex64,
    pub a_o: Complex64,
    pub a_s: Complex64,
    pub a_e: Complex64,
    pub a_r: Complex64,
}

impl ModeAmplitudes {
    pub const NAMES: [&'static str; 5] = ["a_p", "a_o", "a_s", "a_e", "a_r"];

    fn to_array(self) -> [Complex64; 5] {
        [self.a_p, self.a_o, self.a_s, self.a_e, self.a_r]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub a_p: Vec<Complex64>,
    pub a_o: Vec<Complex64>,
    pub a_s: Vec<Complex64>,
    pub a_e: Vec<Complex64>,
    pub a_r: Vec<Complex64>,
    pub out_mw: Vec<Complex64>,
    pub out_opt: Vec<Complex64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn state(&self, i: usize) -> ModeAmplitudes {
        ModeAmplitudes {
            a_p: self.a_p[i],
            a_o: self.a_o[i],
            a_s: self.a_s[i],
            a_e: self.a_e[i],
            a_r: self.a_r[i],
        }
    }

    pub fn last(&self) -> ModeAmplitudes {
        self.state(self.len() - 1)
    }

    pub fn write_csv<W: std::io::Write + ?Sized>(&self, out: &mut W) -> std::io::Result<()> {
        let cols: [(&str, &Vec<Complex64>); 7] = [
            ("a_p", &self.a_p),
            ("a_o", &self.a_o),
            ("a_s", &self.a_s),
            ("a_e", &self.a_e),
            ("a_r", &self.a_r),
            ("out_mw", &self.out_mw),
            ("out_opt", &self.out_opt),
        ];
        write!(out, "t")?;
        for (name, _) in &cols {
            write!(out, ",{name}_re,{name}_im")?;
        }
        writeln!(out)?;
        for (i, t) in self.t.iter().enumerate() {
            write!(out, "{t:e}")?;
            for (_, v) in &cols {
                write!(out, ",{:e},{:e}", v[i].re, v[i].im)?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    Rk4,
    Euler,
}

impl Method {
    pub fn order(self) -> u32 {
        match self {
            Method::Rk4 => 4,
            Method::Euler => 1,
        }
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "rk4" => Ok(Method::Rk4),
            "euler" => Ok(Method::Euler),
            other => Err(format!("unknown integrator `{other}` (expected rk4 or euler)")),
        }
    }
}

/// Integrator steps per grid interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Substeps {
    /// Smallest count that keeps the step inside the stability bound, also
    /// accounting for `J` and the pump-enhanced coupling.
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegratorOptions {
    pub method: Method,
    pub substeps: Substeps,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            method: Method::Rk4,
            substeps: Substeps::Auto,
        }
    }
}

struct Rates {
    lp: Complex64,
    lo: Complex64,
    ls: Complex64,
    le: Complex64,
    lr: Complex64,
    g0: f64,
    j: f64,
    cp: f64,
    co: f64,
    ce: f64,
}

impl Rates {
    fn new(s: &SystemParams) -> Self {
        let l = |m: &crate::params::ModeParams| -I * m.delta - m.kappa() / 2.0;
        Self {
            lp: l(&s.pump),
            lo: l(&s.signal),
            ls: l(&s.stokes),
            le: l(&s.microwave),
            lr: l(&s.tm),
            g0: s.g0,
            j: s.j,
            cp: s.lambda_mm * s.pump.kappa_ex.sqrt(),
            co: s.lambda_mm * s.signal.kappa_ex.sqrt(),
            ce: s.microwave.kappa_ex.sqrt(),
        }
    }

    #[inline]
    fn rhs(&self, y: &[Complex64; 5], fp: Complex64, fe: Complex64, fo: Complex64) -> [Complex64; 5] {
        let [ap, ao, a_s, ae, ar] = *y;
        let g = I * self.g0;
        [
            self.lp * ap - g * (a_s * ae + ae.conj() * ao) + self.cp * fp,
            self.lo * ao - g * ap * ae + self.co * fo,
            self.ls * a_s - g * ap * ae.conj() - I * self.j * ar,
            self.le * ae - g * ap * a_s.conj() - g * ap.conj() * ao + self.ce * fe,
            self.lr * ar - I * self.j * a_s,
        ]
    }
}

fn max_rate(system: &SystemParams) -> f64 {
    let modes = [&system.pump, &system.signal, &system.stokes, &system.microwave, &system.tm];
    let k = modes.iter().map(|m| m.kappa()).fold(0.0, f64::max);
    let d = modes.iter().map(|m| m.delta.abs()).fold(0.0, f64::max);
    k / 2.0 + d
}

/// Bound on the steady pump amplitude reachable with the given pump drive.
fn pump_amplitude_bound(system: &SystemParams, f_pump: &[Complex64]) -> f64 {
    let f = f_pump.iter().map(|z| z.norm()).fold(0.0, f64::max);
    system.lambda_mm * system.pump.kappa_ex.sqrt() * f / (system.pump.kappa() / 2.0)
}

fn choose_substeps(system: &SystemParams, drives: &DriveSet, substeps: Substeps) -> usize {
    match substeps {
        Substeps::Fixed(m) => m.max(1),
        Substeps::Auto => {
            let rate = max_rate(system) + system.j + system.g0 * pump_amplitude_bound(system, &drives.f_pump);
            ((drives.dt() * rate / STABILITY_LIMIT).ceil() as usize).max(1)
        }
    }
}

/// Cubic Lagrange weights on nodes `-1, 0, 1, 2` at fractional position `u`.
fn lagrange_weights(u: f64) -> [f64; 4] {
    [
        -u * (u - 1.0) * (u - 2.0) / 6.0,
        (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0,
        -(u + 1.0) * u * (u - 2.0) / 2.0,
        (u + 1.0) * u * (u - 1.0) / 6.0,
    ]
}

#[inline]
fn interp(v: &[Complex64], i: usize, w: &[f64; 4]) -> Complex64 {
    let n = v.len();
    let at = |k: isize| v[k.clamp(0, n as isize - 1) as usize];
    let i = i as isize;
    at(i - 1) * w[0] + at(i) * w[1] + at(i + 1) * w[2] + at(i + 2) * w[3]
}

/// Integrates the coherent equations over the drive grid, starting from
/// `initial` at `drives.t[0]`.
pub fn integrate(
    system: &SystemParams,
    drives: &DriveSet,
    initial: ModeAmplitudes,
    options: &IntegratorOptions,
) -> Result<Trajectory, DynamicsError> {
    drives.validate()?;
    let dt = drives.dt();
    let m = choose_substeps(system, drives, options.substeps);
    let h = dt / m as f64;
    let product = h * max_rate(system);
    if product > STABILITY_LIMIT {
        return Err(DynamicsError::Unstable {
            h,
            product,
            limit: STABILITY_LIMIT,
        });
    }

    let rates = Rates::new(system);
    // weights at the start, middle and end fraction of every substep
    let weights: Vec<[f64; 4]> = (0..=2 * m).map(|k| lagrange_weights(k as f64 / (2 * m) as f64)).collect();

    let n = drives.t.len();
    let mut states = Vec::with_capacity(n);
    let mut y = initial.to_array();
    states.push(y);
    for i in 0..n - 1 {
        let drive = |k: usize| {
            let w = &weights[k];
            (
                interp(&drives.f_pump, i, w),
                interp(&drives.f_mw, i, w),
                interp(&drives.f_opt, i, w),
            )
        };
        for s in 0..m {
            let (p0, e0, o0) = drive(2 * s);
            match options.method {
                Method::Euler => {
                    let k1 = rates.rhs(&y, p0, e0, o0);
                    for q in 0..5 {
                        y[q] += k1[q] * h;
                    }
                }
                Method::Rk4 => {
                    let (p1, e1, o1) = drive(2 * s + 1);
                    let (p2, e2, o2) = drive(2 * s + 2);
                    let k1 = rates.rhs(&y, p0, e0, o0);
                    let y1 = std::array::from_fn(|q| y[q] + k1[q] * (h / 2.0));
                    let k2 = rates.rhs(&y1, p1, e1, o1);
                    let y2 = std::array::from_fn(|q| y[q] + k2[q] * (h / 2.0));
                    let k3 = rates.rhs(&y2, p1, e1, o1);
                    let y3 = std::array::from_fn(|q| y[q] + k3[q] * h);
                    let k4 = rates.rhs(&y3, p2, e2, o2);
                    for q in 0..5 {
                        y[q] += (k1[q] + (k2[q] + k3[q]) * 2.0 + k4[q]) * (h / 6.0);
                    }
                }
            }
        }
        for (q, z) in y.iter().enumerate() {
            let mag = z.norm();
            if !mag.is_finite() || mag > DIVERGENCE_LIMIT {
                return Err(DynamicsError::Diverged {
                    step: i + 1,
                    time: drives.t[i + 1],
                    mode: ModeAmplitudes::NAMES[q],
                    magnitude: mag,
                });
            }
        }
        states.push(y);
    }

    let col = |q: usize| states.iter().map(|s| s[q]).collect::<Vec<_>>();
    let a_o = col(1);
    let a_e = col(3);
    let out_mw = a_e.iter().zip(&drives.f_mw).map(|(a, f)| a * rates.ce - f).collect();
    let out_opt = a_o.iter().zip(&drives.f_opt).map(|(a, f)| a * rates.co - f).collect();
    Ok(Trajectory {
        t: drives.t.clone(),
        a_p: col(0),
        a_o,
        a_s: col(2),
        a_e,
        a_r: col(4),
        out_mw,
        out_opt,
    })
}

/// Raised-cosine square envelope: rises over `[t_on, t_on + rise]`, falls
/// over `[t_off, t_off + rise]`, carrying the phase `e^{-iΔt}`.
pub fn square_pulse(t: &[f64], t_on: f64, t_off: f64, rise_time: f64, amplitude: Complex64, carrier_detuning: f64) -> Vec<Complex64> {
    let edge = |x: f64| {
        if rise_time <= 0.0 {
            if x >= 0.0 {
                1.0
            } else {
                0.0
            }
        } else if x <= 0.0 {
            0.0
        } else if x >= rise_time {
            1.0
        } else {
            0.5 - 0.5 * (std::f64::consts::PI * x / rise_time).cos()
        }
    };
    t.iter()
        .map(|&x| {
            let env = edge(x - t_on) * (1.0 - edge(x - t_off));
            amplitude * env * Complex64::from_polar(1.0, -carrier_detuning * x)
        })
        .collect()
}

/// `base(t) e^{i 2π f t}`.
pub fn iq_modulated_pulse(base: &[Complex64], t: &[f64], mod_freq: f64) -> Vec<Complex64> {
    base.iter()
        .zip(t)
        .map(|(b, &x)| b * Complex64::from_polar(1.0, crate::units::TWO_PI * mod_freq * x))
        .collect()
}

/// Constant envelope.
pub fn cw(t: &[f64], amplitude: Complex64) -> Vec<Complex64> {
    vec![amplitude; t.len()]
}

/// Real pump drive amplitude whose uncoupled steady state holds `n_pump`
/// photons.
pub fn pump_drive_for(system: &SystemParams, n_pump: f64) -> Result<f64, DynamicsError> {
    let c = system.lambda_mm * system.pump.kappa_ex.sqrt();
    if !(c > 0.0) {
        return Err(ParamError::Domain("pump cannot be driven with Λ·κ_ex = 0".into()).into());
    }
    if n_pump < 0.0 {
        return Err(ParamError::Domain("n_pump must be >= 0".into()).into());
    }
    let denom = Complex64::new(system.pump.kappa() / 2.0, system.pump.delta).norm();
    Ok(n_pump.sqrt() * denom / c)
}

/// Uncoupled steady state of a single mode under drive `f` with input weight `c`.
fn loaded(c: f64, mode: &crate::params::ModeParams, f: Complex64) -> Complex64 {
    c * f / Complex64::new(mode.kappa() / 2.0, mode.delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    /// Microwave signal in, optical signal out.
    MicrowaveToOptics,
    OpticsToMicrowave,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::MicrowaveToOptics => "e2o",
            Direction::OpticsToMicrowave => "o2e",
        }
    }
}

impl FromStr for Direction {
    type Err = DynamicsError;
    fn from_str(s: &str) -> Result<Self, DynamicsError> {
        match s.to_ascii_lowercase().as_str() {
            "e2o" | "mw2o" | "microwave-to-optics" => Ok(Direction::MicrowaveToOptics),
            "o2e" | "o2mw" | "optics-to-microwave" => Ok(Direction::OpticsToMicrowave),
            _ => Err(DynamicsError::InvalidDirection(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConversionOptions {
    pub integrator: IntegratorOptions,
    /// Start with the pump and signal modes in their uncoupled steady states
    /// under the first drive samples.
    pub preload: bool,
    /// Detuning of the signal mode, in its own linewidths, for the
    /// off-resonant reference run.
    pub reference_detuning: f64,
}

impl Default for ConversionOptions {
    fn default() -> Self {
        Self {
            integrator: IntegratorOptions::default(),
            preload: false,
            reference_detuning: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConversionRun {
    pub direction: Direction,
    pub trajectory: Trajectory,
    /// Peak off-resonant reflected flux of the signal, used as the input flux.
    pub input_flux: f64,
    /// `|converted output|² / input_flux` on the grid.
    pub efficiency: Vec<f64>,
    pub peak: f64,
    pub peak_time: f64,
    /// Efficiency at the last sample where both pump and signal are at
    /// least 99% of their maxima.
    pub plateau: f64,
}

/// Converts `signal` in `direction` under the given pump envelope.
pub fn conversion_run(
    system: &SystemParams,
    t: &[f64],
    pump: &[Complex64],
    signal: &[Complex64],
    direction: Direction,
    options: &ConversionOptions,
) -> Result<ConversionRun, DynamicsError> {
    let zeros = vec![ZERO; t.len()];
    let (f_mw, f_opt) = match direction {
        Direction::MicrowaveToOptics => (signal.to_vec(), zeros.clone()),
        Direction::OpticsToMicrowave => (zeros.clone(), signal.to_vec()),
    };
    let drives = DriveSet::new(t.to_vec(), pump.to_vec(), f_mw, f_opt)?;

    let mut initial = ModeAmplitudes::default();
    if options.preload {
        let lam = system.lambda_mm;
        initial.a_p = loaded(lam * system.pump.kappa_ex.sqrt(), &system.pump, pump[0]);
        match direction {
            Direction::MicrowaveToOptics => {
                initial.a_e = loaded(system.microwave.kappa_ex.sqrt(), &system.microwave, signal[0]);
            }
            Direction::OpticsToMicrowave => {
                initial.a_o = loaded(lam * system.signal.kappa_ex.sqrt(), &system.signal, signal[0]);
            }
        }
    }
    let trajectory = integrate(system, &drives, initial, &options.integrator)?;

    // off-resonant reflection of the same signal, pump off
    let mut reference_sys = *system;
    let reference_drives = DriveSet {
        f_pump: zeros,
        ..drives.clone()
    };
    let reflected = match direction {
        Direction::MicrowaveToOptics => {
            reference_sys.microwave.delta += options.reference_detuning * system.microwave.kappa();
            integrate(&reference_sys, &reference_drives, ModeAmplitudes::default(), &options.integrator)?.out_mw
        }
        Direction::OpticsToMicrowave => {
            reference_sys.signal.delta += options.reference_detuning * system.signal.kappa();
            integrate(&reference_sys, &reference_drives, ModeAmplitudes::default(), &options.integrator)?.out_opt
        }
    };
    let input_flux = reflected.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
    if !(input_flux > 0.0) {
        return Err(DynamicsError::InvalidDrive("signal envelope is zero".into()));
    }

    let converted = match direction {
        Direction::MicrowaveToOptics => &trajectory.out_opt,
        Direction::OpticsToMicrowave => &trajectory.out_mw,
    };
    let efficiency: Vec<f64> = converted.iter().map(|z| z.norm_sqr() / input_flux).collect();
    let (peak_idx, peak) = efficiency
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::MIN), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });

    let pump_max = pump.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let signal_max = signal.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let plateau_idx = (0..t.len())
        .rev()
        .find(|&k| pump[k].norm() >= 0.99 * pump_max && signal[k].norm() >= 0.99 * signal_max)
        .unwrap_or(t.len() - 1);
    Ok(ConversionRun {
        direction,
        plateau: efficiency[plateau_idx],
        peak,
        peak_time: t[peak_idx],
        input_flux,
        efficiency,
        trajectory,
    })
}

/// 10–90% rise time of `y` relative to its maximum, with linearly
/// interpolated crossings. `None` if `y` never rises above zero.
pub fn rise_time_10_90(t: &[f64], y: &[f64]) -> Option<f64> {
    let top = y.iter().copied().fold(f64::MIN, f64::max);
    if !(top > 0.0) {
        return None;
    }
    let crossing = |level: f64| -> Option<f64> {
        let k = y.iter().position(|&v| v >= level)?;
        if k == 0 {
            return Some(t[0]);
        }
        let f = (level - y[k - 1]) / (y[k] - y[k - 1]);
        Some(t[k - 1] + f * (t[k] - t[k - 1]))
    };
    Some(crossing(0.9 * top)? - crossing(0.1 * top)?)
}
