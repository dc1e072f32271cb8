//! Linearized fluctuation dynamics in the frequency domain.
//!
//! The fluctuation vector is ordered
//! `[a_o, a_o†, a_e, a_e†, a_s, a_s†, a_r, a_r†]` and obeys
//! `dv/dt = M v + K A`. In the Fourier domain (convention `e^{-iΩt}`)
//! `v(Ω) = (-M - iΩ)^{-1} K A(Ω)`, and the external port of mode `j` emits
//! `a_j,out = sqrt(kappa_j,ex) a_j - a_j,ex`.
//!
//! The optical couplers only collect the fraction `Λ` of the mode amplitude.
//! Each optical external channel is therefore split into a mode-matched
//! channel with weight `Λ sqrt(kappa_ex)` and a lost channel with weight
//! `sqrt(1 - Λ²) sqrt(kappa_ex)`. The total damping, and therefore the
//! commutators, are unchanged; coherent drives and detection use the matched
//! channel only.

use nalgebra::SMatrix;
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::params::SystemParams;

const I: Complex64 = Complex64::new(0.0, 1.0);

pub type Matrix8 = SMatrix<Complex64, 8, 8>;
type InputMatrix = SMatrix<Complex64, 8, { InputChannel::COUNT * 2 }>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SteadyStateError {
    #[error("-M - iΩ is singular at Ω = {omega} rad/s")]
    Singular { omega: f64 },
}

/// Noise / drive input channels, in the column order of the input matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum InputChannel {
    /// Intrinsic bath of the optical signal mode.
    OIn,
    /// Mode-matched external channel of the optical signal mode.
    OEx,
    /// External channel of the signal mode not collected by the coupler.
    OLost,
    EIn,
    EEx,
    SIn,
    SEx,
    SLost,
    /// Bath of the orthogonally polarized mode.
    R,
}

impl InputChannel {
    pub const COUNT: usize = 9;
    pub const ALL: [InputChannel; Self::COUNT] = [
        InputChannel::OIn,
        InputChannel::OEx,
        InputChannel::OLost,
        InputChannel::EIn,
        InputChannel::EEx,
        InputChannel::SIn,
        InputChannel::SEx,
        InputChannel::SLost,
        InputChannel::R,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            InputChannel::OIn => "o_in",
            InputChannel::OEx => "o_ex",
            InputChannel::OLost => "o_lost",
            InputChannel::EIn => "e_in",
            InputChannel::EEx => "e_ex",
            InputChannel::SIn => "s_in",
            InputChannel::SEx => "s_ex",
            InputChannel::SLost => "s_lost",
            InputChannel::R => "r",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }

    /// Mean occupancy feeding this channel.
    pub fn occupancy(self, system: &SystemParams) -> f64 {
        match self {
            InputChannel::OIn => system.signal.n_bath,
            InputChannel::OEx | InputChannel::OLost => system.signal.n_waveguide,
            InputChannel::EIn => system.microwave.n_bath,
            InputChannel::EEx => system.microwave.n_waveguide,
            InputChannel::SIn => system.stokes.n_bath,
            InputChannel::SEx | InputChannel::SLost => system.stokes.n_waveguide,
            InputChannel::R => system.tm.n_bath,
        }
    }
}

/// Whether a coefficient multiplies an input annihilation or creation operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Quadrature {
    Annihilation,
    Creation,
}

/// Detected output ports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Port {
    Optical,
    Microwave,
    Stokes,
}

impl Port {
    pub const ALL: [Port; 3] = [Port::Optical, Port::Microwave, Port::Stokes];

    pub fn name(self) -> &'static str {
        match self {
            Port::Optical => "o",
            Port::Microwave => "e",
            Port::Stokes => "s",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s)
    }

    fn row(self) -> usize {
        match self {
            Port::Optical => 0,
            Port::Microwave => 2,
            Port::Stokes => 4,
        }
    }

    fn reflected_channel(self) -> InputChannel {
        match self {
            Port::Optical => InputChannel::OEx,
            Port::Microwave => InputChannel::EEx,
            Port::Stokes => InputChannel::SEx,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftMatrix {
    pub m: Matrix8,
    /// Pump-enhanced coupling `g = g0 a_p` (rad/s).
    pub g: Complex64,
}

/// Drift matrix for a real pump amplitude `sqrt(n_pump)`.
pub fn build_drift(system: &SystemParams, n_pump: f64) -> DriftMatrix {
    build_drift_with_coupling(system, Complex64::new(system.g0 * n_pump.max(0.0).sqrt(), 0.0))
}

/// Drift matrix for an explicit complex enhanced coupling `g = g0 a_p`.
pub fn build_drift_with_coupling(system: &SystemParams, g: Complex64) -> DriftMatrix {
    let gc = g.conj();
    let j = system.j;
    let diag = |delta: f64, kappa: f64| (-I * delta - kappa / 2.0, I * delta - kappa / 2.0);
    let mut m = Matrix8::zeros();

    let (o, oc) = diag(system.signal.delta, system.signal.kappa());
    let (e, ec) = diag(system.microwave.delta, system.microwave.kappa());
    let (s, sc) = diag(system.stokes.delta, system.stokes.kappa());
    let (r, rc) = diag(system.tm.delta, system.tm.kappa());

    m[(0, 0)] = o;
    m[(0, 2)] = -I * g;
    m[(1, 1)] = oc;
    m[(1, 3)] = I * gc;

    m[(2, 0)] = -I * gc;
    m[(2, 2)] = e;
    m[(2, 5)] = -I * g;
    m[(3, 1)] = I * g;
    m[(3, 3)] = ec;
    m[(3, 4)] = I * gc;

    m[(4, 3)] = -I * g;
    m[(4, 4)] = s;
    m[(4, 6)] = -I * j;
    m[(5, 2)] = I * gc;
    m[(5, 5)] = sc;
    m[(5, 7)] = I * j;

    m[(6, 4)] = -I * j;
    m[(6, 6)] = r;
    m[(7, 5)] = I * j;
    m[(7, 7)] = rc;

    DriftMatrix { m, g }
}

/// Input coupling weight of `channel` into its mode, and that mode's row in
/// the fluctuation vector.
fn channel_weight(system: &SystemParams, channel: InputChannel) -> (usize, f64) {
    let lam = system.lambda_mm;
    let lost = (1.0 - lam * lam).max(0.0).sqrt();
    match channel {
        InputChannel::OIn => (0, system.signal.kappa_in.sqrt()),
        InputChannel::OEx => (0, lam * system.signal.kappa_ex.sqrt()),
        InputChannel::OLost => (0, lost * system.signal.kappa_ex.sqrt()),
        InputChannel::EIn => (2, system.microwave.kappa_in.sqrt()),
        InputChannel::EEx => (2, system.microwave.kappa_ex.sqrt()),
        InputChannel::SIn => (4, system.stokes.kappa_in.sqrt()),
        InputChannel::SEx => (4, lam * system.stokes.kappa_ex.sqrt()),
        InputChannel::SLost => (4, lost * system.stokes.kappa_ex.sqrt()),
        // a_r has a single, intrinsic channel
        InputChannel::R => (6, system.tm.kappa().sqrt()),
    }
}

fn input_matrix(system: &SystemParams) -> InputMatrix {
    let mut k = InputMatrix::zeros();
    for ch in InputChannel::ALL {
        let (row, w) = channel_weight(system, ch);
        let col = 2 * ch.index();
        k[(row, col)] = Complex64::new(w, 0.0);
        k[(row + 1, col + 1)] = Complex64::new(w, 0.0);
    }
    k
}

fn output_weight(system: &SystemParams, port: Port) -> f64 {
    match port {
        Port::Optical => system.lambda_mm * system.signal.kappa_ex.sqrt(),
        Port::Microwave => system.microwave.kappa_ex.sqrt(),
        Port::Stokes => system.lambda_mm * system.stokes.kappa_ex.sqrt(),
    }
}

/// Frequency-resolved input-to-output coefficients of the detected ports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScatteringSolution {
    /// Analysis frequency offset Ω (rad/s).
    pub omega: f64,
    /// `coefficients[port][2 * channel + quadrature]`: amplitude of the input
    /// operator in the output annihilation operator of `port`.
    pub coefficients: [[Complex64; InputChannel::COUNT * 2]; 3],
}

impl ScatteringSolution {
    pub fn coefficient(&self, port: Port, channel: InputChannel, q: Quadrature) -> Complex64 {
        let col = 2 * channel.index() + matches!(q, Quadrature::Creation) as usize;
        self.coefficients[port.row() / 2][col]
    }

    /// Microwave-to-optics conversion amplitude.
    pub fn s_oe(&self) -> Complex64 {
        self.coefficient(Port::Optical, InputChannel::EEx, Quadrature::Annihilation)
    }

    /// Optics-to-microwave conversion amplitude.
    pub fn s_eo(&self) -> Complex64 {
        self.coefficient(Port::Microwave, InputChannel::OEx, Quadrature::Annihilation)
    }

    pub fn s_ee(&self) -> Complex64 {
        self.coefficient(Port::Microwave, InputChannel::EEx, Quadrature::Annihilation)
    }

    pub fn s_oo(&self) -> Complex64 {
        self.coefficient(Port::Optical, InputChannel::OEx, Quadrature::Annihilation)
    }

    /// Coefficients of `port` split into annihilation (`A_k`) and creation
    /// (`B_k`) parts, with the channel each belongs to.
    pub fn port_terms(&self, port: Port) -> impl Iterator<Item = (InputChannel, Complex64, Complex64)> + '_ {
        let row = &self.coefficients[port.row() / 2];
        InputChannel::ALL
            .into_iter()
            .map(move |ch| (ch, row[2 * ch.index()], row[2 * ch.index() + 1]))
    }
}

/// `(-M - iΩ)^{-1}`.
pub fn susceptibility(drift: &DriftMatrix, omega: f64) -> Result<Matrix8, SteadyStateError> {
    let a = -drift.m - Matrix8::identity() * (I * omega);
    a.try_inverse().ok_or(SteadyStateError::Singular { omega })
}

/// Solves the scattering problem at offset `omega`.
pub fn scattering(drift: &DriftMatrix, system: &SystemParams, omega: f64) -> Result<ScatteringSolution, SteadyStateError> {
    let a = -drift.m - Matrix8::identity() * (I * omega);
    let lu = a.lu();
    let k = input_matrix(system);
    let x = lu.solve(&k).ok_or(SteadyStateError::Singular { omega })?;
    if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(SteadyStateError::Singular { omega });
    }

    let mut coefficients = [[Complex64::new(0.0, 0.0); InputChannel::COUNT * 2]; 3];
    for port in Port::ALL {
        let w = output_weight(system, port);
        let row = port.row();
        let out = &mut coefficients[row / 2];
        for (col, c) in out.iter_mut().enumerate() {
            *c = x[(row, col)] * w;
        }
        out[2 * port.reflected_channel().index()] -= 1.0;
    }
    Ok(ScatteringSolution { omega, coefficients })
}

/// Solves at every frequency in `omegas`, in parallel when enabled.
pub fn sweep(drift: &DriftMatrix, system: &SystemParams, omegas: &[f64]) -> Result<Vec<ScatteringSolution>, SteadyStateError> {
    crate::par::map(omegas, |&w| scattering(drift, system, w))
        .into_iter()
        .collect()
}

/// On-resonance total efficiency including Stokes gain:
/// `Λ² η_o η_e 4C (1 + 1/C_J)² / (1 + C + 1/C_J)²`.
///
/// `c_j = 0` returns the unsplit limit `4 Λ² η_o η_e C`; `c_j = ∞` gives the
/// two-mode result.
pub fn efficiency_closed_form(c: f64, c_j: f64, eta_e: f64, eta_o: f64, lambda_mm: f64) -> f64 {
    let pre = lambda_mm * lambda_mm * eta_o * eta_e;
    if c_j == 0.0 {
        return 4.0 * pre * c;
    }
    let inv = 1.0 / c_j;
    pre * 4.0 * c * (1.0 + inv).powi(2) / (1.0 + c + inv).powi(2)
}

/// `4 Λ² η_e η_o C / (1 + C)²`.
pub fn efficiency_two_mode(c: f64, eta_e: f64, eta_o: f64, lambda_mm: f64) -> f64 {
    4.0 * lambda_mm * lambda_mm * eta_e * eta_o * c / (1.0 + c).powi(2)
}

/// Numeric on-resonance efficiency `|S_oe(0)|²`.
pub fn efficiency_numeric(system: &SystemParams, n_pump: f64) -> Result<f64, SteadyStateError> {
    let drift = build_drift(system, n_pump);
    Ok(scattering(&drift, system, 0.0)?.s_oe().norm_sqr())
}

/// Suppression ratio that makes the closed-form efficiency reproduce the
/// numeric `|S_oe(0)|²` of the full (detuned) model at the same `C`.
///
/// Returns `None` when the numeric efficiency lies outside the range the
/// closed form can reach, or when `C = 0`.
pub fn effective_suppression(system: &SystemParams, n_pump: f64) -> Result<Option<f64>, SteadyStateError> {
    let c = system
        .cooperativities(n_pump)
        .map(|co| co.c)
        .unwrap_or(0.0);
    if c <= 0.0 {
        return Ok(None);
    }
    let eta = efficiency_numeric(system, n_pump)?;
    let pre = system.lambda_mm.powi(2) * system.signal.eta() * system.microwave.eta();
    // (1 + x) / (1 + C + x) = r with x = 1 / C_J
    let r = (eta / (4.0 * c * pre)).sqrt();
    if !(r >= 1.0 / (1.0 + c) && r < 1.0) {
        return Ok(None);
    }
    let x = (r * (1.0 + c) - 1.0) / (1.0 - r);
    Ok(Some(x / (1.0 + x)))
}

/// Full width at half maximum (rad/s) of `|S_oe(Ω)|²`, scanning `points`
/// samples over `[-span, span]`. Edges are located by linear interpolation.
pub fn conversion_bandwidth(system: &SystemParams, n_pump: f64, span: f64, points: usize) -> Result<f64, SteadyStateError> {
    let drift = build_drift(system, n_pump);
    let n = points.max(3);
    let omegas: Vec<f64> = (0..n)
        .map(|k| -span + 2.0 * span * k as f64 / (n - 1) as f64)
        .collect();
    let eff: Vec<f64> = sweep(&drift, system, &omegas)?
        .iter()
        .map(|s| s.s_oe().norm_sqr())
        .collect();
    let (peak_idx, peak) = eff
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::MIN), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let half = peak / 2.0;
    let crossing = |a: usize, b: usize| {
        let t = (half - eff[a]) / (eff[b] - eff[a]);
        omegas[a] + t * (omegas[b] - omegas[a])
    };
    let mut lo = omegas[0];
    for k in (0..peak_idx).rev() {
        if eff[k] < half {
            lo = crossing(k, k + 1);
            break;
        }
    }
    let mut hi = omegas[n - 1];
    for k in peak_idx + 1..n {
        if eff[k] < half {
            hi = crossing(k - 1, k);
            break;
        }
    }
    Ok(hi - lo)
}

/// Writes `Ω, |S|², arg S` columns for the requested `(port, channel)` pairs.
pub fn write_sweep_csv<W: std::io::Write + ?Sized>(
    out: &mut W,
    solutions: &[ScatteringSolution],
    pairs: &[(Port, InputChannel)],
) -> std::io::Result<()> {
    write!(out, "omega")?;
    for (p, c) in pairs {
        write!(out, ",abs2_{}_{},arg_{}_{}", p.name(), c.name(), p.name(), c.name())?;
    }
    writeln!(out)?;
    for s in solutions {
        write!(out, "{:e}", s.omega)?;
        for &(p, c) in pairs {
            let z = s.coefficient(p, c, Quadrature::Annihilation);
            write!(out, ",{:e},{:e}", z.norm_sqr(), z.arg())?;
        }
        writeln!(out)?;
    }
    Ok(())
}
