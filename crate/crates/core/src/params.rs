//! Physical parameters of the five-mode transducer and the dimensionless
//! figures derived from them.
//!
//! Every rate is an angular rate (rad/s). Occupancies are mean photon numbers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::units::{mhz, HBAR, TWO_PI};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("invalid parameter `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("domain error: {0}")]
    Domain(String),
}

impl ParamError {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ParamError::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

/// One resonant mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeParams {
    /// Resonance frequency (rad/s).
    pub omega: f64,
    /// Intrinsic energy decay rate (rad/s).
    pub kappa_in: f64,
    /// Extrinsic decay rate into the waveguide or coupling port (rad/s).
    pub kappa_ex: f64,
    /// Detuning of the mode from its drive carrier (rad/s).
    pub delta: f64,
    /// Thermal bath occupancy seen through the intrinsic channel.
    pub n_bath: f64,
    /// Occupancy of the external (waveguide) channel.
    pub n_waveguide: f64,
}

impl ModeParams {
    pub fn new(omega: f64, kappa_in: f64, kappa_ex: f64) -> Self {
        Self {
            omega,
            kappa_in,
            kappa_ex,
            delta: 0.0,
            n_bath: 0.0,
            n_waveguide: 0.0,
        }
    }

    /// Builds a mode from its total linewidth and coupling efficiency, the
    /// way characterization tables usually quote them.
    pub fn from_linewidth(omega: f64, kappa: f64, eta: f64) -> Self {
        Self::new(omega, kappa * (1.0 - eta), kappa * eta)
    }

    pub fn with_detuning(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_occupancies(mut self, n_bath: f64, n_waveguide: f64) -> Self {
        self.n_bath = n_bath;
        self.n_waveguide = n_waveguide;
        self
    }

    #[inline]
    pub fn kappa(&self) -> f64 {
        self.kappa_in + self.kappa_ex
    }

    /// Coupling efficiency `kappa_ex / kappa`.
    #[inline]
    pub fn eta(&self) -> f64 {
        self.kappa_ex / self.kappa()
    }

    /// Checks the mode invariants; `name` prefixes the field in errors.
    pub fn validate(&self, name: &str) -> Result<(), ParamError> {
        let field = |f: &str| format!("{name}.{f}");
        for (f, v) in [
            ("omega", self.omega),
            ("kappa_in", self.kappa_in),
            ("kappa_ex", self.kappa_ex),
            ("delta", self.delta),
            ("n_bath", self.n_bath),
            ("n_waveguide", self.n_waveguide),
        ] {
            if !v.is_finite() {
                return Err(ParamError::invalid(field(f), "must be finite"));
            }
        }
        if self.omega < 0.0 {
            return Err(ParamError::invalid(field("omega"), "must be >= 0"));
        }
        if self.kappa_in < 0.0 {
            return Err(ParamError::invalid(field("kappa_in"), "must be >= 0"));
        }
        if self.kappa_ex < 0.0 {
            return Err(ParamError::invalid(field("kappa_ex"), "must be >= 0"));
        }
        if self.kappa() <= 0.0 {
            return Err(ParamError::invalid(
                field("kappa_in"),
                "total linewidth kappa_in + kappa_ex must be > 0",
            ));
        }
        if self.n_bath < 0.0 {
            return Err(ParamError::invalid(field("n_bath"), "must be >= 0"));
        }
        if self.n_waveguide < 0.0 {
            return Err(ParamError::invalid(field("n_waveguide"), "must be >= 0"));
        }
        Ok(())
    }
}

/// The five-mode device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub pump: ModeParams,
    /// Optical signal mode `a_o`.
    pub signal: ModeParams,
    /// Optical Stokes mode `a_s`. Shares the signal linewidth unless
    /// explicitly overridden.
    pub stokes: ModeParams,
    /// Orthogonally polarized optical mode `a_r`, purely intrinsically damped.
    pub tm: ModeParams,
    pub microwave: ModeParams,
    /// Vacuum electro-optic coupling rate (rad/s).
    pub g0: f64,
    /// Cross-polarization coupling between `a_s` and `a_r` (rad/s).
    pub j: f64,
    /// Spatial mode-match amplitude of the optical coupler.
    pub lambda_mm: f64,
}

impl SystemParams {
    /// Device parameters used for the high cooperativity experiments.
    pub fn high_cooperativity() -> Self {
        let omega_o = TWO_PI * 193e12;
        let omega_e = TWO_PI * 8.795e9;
        let optical = ModeParams::from_linewidth(omega_o, mhz(25.8), 0.58);
        let microwave = ModeParams::from_linewidth(omega_e, mhz(13.706), 0.408);
        Self {
            pump: ModeParams {
                omega: omega_o - omega_e,
                ..optical
            },
            signal: optical,
            stokes: ModeParams {
                omega: omega_o - 2.0 * omega_e,
                ..optical
            }
            .with_detuning(mhz(15.5)),
            tm: ModeParams::new(omega_o - 2.0 * omega_e, mhz(9.96), 0.0).with_detuning(mhz(19.5)),
            microwave,
            g0: TWO_PI * 37.0,
            j: mhz(26.21),
            lambda_mm: 0.78,
        }
    }

    /// Device parameters used for the low cooperativity experiments. The
    /// Stokes hybridization was not characterized there, so `j` is zero.
    pub fn low_cooperativity() -> Self {
        let omega_o = TWO_PI * 193e12;
        let omega_e = TWO_PI * 8.803e9;
        let optical = ModeParams::from_linewidth(omega_o, mhz(15.55), 0.55);
        let microwave = ModeParams::from_linewidth(omega_e, mhz(12.12), 0.369);
        Self {
            pump: ModeParams {
                omega: omega_o - omega_e,
                ..optical
            },
            signal: optical,
            stokes: ModeParams {
                omega: omega_o - 2.0 * omega_e,
                ..optical
            },
            tm: ModeParams::new(omega_o - 2.0 * omega_e, mhz(9.96), 0.0),
            microwave,
            g0: TWO_PI * 37.0,
            j: 0.0,
            lambda_mm: 0.838,
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        self.pump.validate("pump")?;
        self.signal.validate("signal")?;
        self.stokes.validate("stokes")?;
        self.tm.validate("tm")?;
        self.microwave.validate("microwave")?;
        if !(self.g0.is_finite() && self.g0 > 0.0) {
            return Err(ParamError::invalid("g0", "must be > 0"));
        }
        if !(self.j.is_finite() && self.j >= 0.0) {
            return Err(ParamError::invalid("j", "must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.lambda_mm) {
            return Err(ParamError::invalid("lambda_mm", "must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Intracavity pump photon number that yields cooperativity `c`.
    pub fn pump_photons_for(&self, c: f64) -> f64 {
        c * self.signal.kappa() * self.microwave.kappa() / (4.0 * self.g0 * self.g0)
    }

    /// Cooperativities for a given intracavity pump photon number.
    pub fn cooperativities(&self, n_pump: f64) -> Result<Cooperativities, ParamError> {
        let c = cooperativity(n_pump, self.g0, self.signal.kappa(), self.microwave.kappa())?;
        let c_j = mode_coupling_cooperativity(self.j, self.stokes.kappa(), self.tm.kappa())?;
        let n_e = crate::noise::occupancy(&self.microwave);
        Ok(Cooperativities {
            c,
            c_j,
            c_q: if n_e > 0.0 { c / n_e } else { f64::INFINITY },
            suppression: suppression_ratio(c_j),
        })
    }

    /// Copy of `self` whose Stokes hybridization gives suppression `s` on
    /// resonance: `j` is set from `C_J = 1/s - 1` and the Stokes and TM
    /// detunings are zeroed.
    pub fn with_suppression(&self, s: f64) -> Result<Self, ParamError> {
        if !(s > 0.0 && s <= 1.0) {
            return Err(ParamError::invalid("suppression", "must lie in (0, 1]"));
        }
        let c_j = 1.0 / s - 1.0;
        let mut out = *self;
        out.j = (c_j * self.stokes.kappa() * self.tm.kappa() / 4.0).sqrt();
        out.stokes.delta = 0.0;
        out.tm.delta = 0.0;
        Ok(out)
    }

    /// Copy with the microwave intrinsic bath set so the mode occupancy
    /// equals `n_e`, keeping the waveguide occupancy.
    pub fn with_microwave_occupancy(&self, n_e: f64) -> Result<Self, ParamError> {
        let mw = &self.microwave;
        if mw.kappa_in <= 0.0 {
            return Err(ParamError::Domain(
                "microwave kappa_in must be > 0 to set an occupancy".into(),
            ));
        }
        let n_b = (n_e * mw.kappa() - mw.n_waveguide * mw.kappa_ex) / mw.kappa_in;
        if n_b < 0.0 {
            return Err(ParamError::Domain(format!(
                "occupancy {n_e} is below the waveguide contribution"
            )));
        }
        let mut out = *self;
        out.microwave.n_bath = n_b;
        Ok(out)
    }
}

/// Dimensionless figures of merit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cooperativities {
    /// Multiphoton cooperativity `C`.
    pub c: f64,
    /// Mode-coupling cooperativity `C_J`.
    pub c_j: f64,
    /// Quantum cooperativity `C / N_e`.
    pub c_q: f64,
    /// Stokes / anti-Stokes suppression ratio `1 / (1 + C_J)`.
    pub suppression: f64,
}

/// `C = 4 n_p g0^2 / (kappa_o kappa_e)`.
pub fn cooperativity(n_pump: f64, g0: f64, kappa_o: f64, kappa_e: f64) -> Result<f64, ParamError> {
    if !(kappa_o > 0.0 && kappa_e > 0.0) {
        return Err(ParamError::Domain("linewidths must be > 0".into()));
    }
    if n_pump < 0.0 || g0 < 0.0 {
        return Err(ParamError::Domain("n_pump and g0 must be >= 0".into()));
    }
    Ok(4.0 * n_pump * g0 * g0 / (kappa_o * kappa_e))
}

/// `C_J = 4 J^2 / (kappa_s kappa_r)`.
pub fn mode_coupling_cooperativity(j: f64, kappa_s: f64, kappa_r: f64) -> Result<f64, ParamError> {
    if !(kappa_s > 0.0 && kappa_r > 0.0) {
        return Err(ParamError::Domain("linewidths must be > 0".into()));
    }
    Ok(4.0 * j * j / (kappa_s * kappa_r))
}

pub fn suppression_ratio(c_j: f64) -> f64 {
    1.0 / (1.0 + c_j)
}

/// Inverse of [`suppression_ratio`].
pub fn c_j_for_suppression(s: f64) -> f64 {
    1.0 / s - 1.0
}

/// Steady-state intracavity pump photons for a CW pump of `power` watts at
/// carrier `omega_p`, neglecting electro-optic back-action on the pump.
pub fn pump_photons(power: f64, pump: &ModeParams, lambda_mm: f64, omega_p: f64) -> Result<f64, ParamError> {
    if power < 0.0 {
        return Err(ParamError::Domain("power must be >= 0".into()));
    }
    if omega_p <= 0.0 {
        return Err(ParamError::Domain("omega_p must be > 0".into()));
    }
    let flux = power / (HBAR * omega_p);
    let half = pump.kappa() / 2.0;
    Ok(lambda_mm * lambda_mm * pump.kappa_ex * flux / (pump.delta * pump.delta + half * half))
}

/// Drive amplitude `|F| = sqrt(P / (hbar omega))` in sqrt(photons/s).
pub fn drive_amplitude(power: f64, omega: f64) -> f64 {
    (power / (HBAR * omega)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn no_pump_no_cooperativity() {
        assert_eq!(cooperativity(0.0, 1.0, 1.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn cooperativity_rejects_bad_linewidth() {
        assert!(cooperativity(1.0, 1.0, 0.0, 1.0).is_err());
        assert!(cooperativity(1.0, 1.0, 1.0, -2.0).is_err());
    }

    #[test]
    fn cooperativity_is_linear_in_pump_and_g0_squared() {
        let (g0, ko, ke) = (TWO_PI * 37.0, mhz(25.8), mhz(13.706));
        let c1 = cooperativity(1e10, g0, ko, ke).unwrap();
        assert_relative_eq!(cooperativity(2e10, g0, ko, ke).unwrap(), 2.0 * c1, max_relative = 1e-14);
        assert_relative_eq!(
            cooperativity(1e10, 3f64.sqrt() * g0, ko, ke).unwrap(),
            3.0 * c1,
            max_relative = 1e-12
        );
    }

    #[test]
    fn pump_photons_at_operating_point() {
        let sys = SystemParams::high_cooperativity();
        let n = sys.pump_photons_for(0.38);
        let expected = mhz(25.8) * mhz(13.706) * 0.38 / (4.0 * (TWO_PI * 37.0f64).powi(2));
        assert_relative_eq!(n, expected, max_relative = 1e-12);
        assert_relative_eq!(sys.cooperativities(n).unwrap().c, 0.38, max_relative = 1e-12);
    }

    #[test]
    fn pump_photons_critical_coupling() {
        let kappa = mhz(20.0);
        let pump = ModeParams::new(1.2e15, kappa / 2.0, kappa / 2.0);
        let (p, w) = (1e-3, 1.2e15);
        let n = pump_photons(p, &pump, 1.0, w).unwrap();
        assert_relative_eq!(n, 2.0 * p / (HBAR * w * kappa), max_relative = 1e-12);
        assert_eq!(pump_photons(0.0, &pump, 1.0, w).unwrap(), 0.0);
    }

    #[test]
    fn power_for_high_cooperativity_chain() {
        // Power -> photons -> C, compared with evaluating both formulas by hand.
        let sys = SystemParams::high_cooperativity();
        let p = 0.134;
        let n = pump_photons(p, &sys.pump, sys.lambda_mm, sys.pump.omega).unwrap();
        let flux = p / (HBAR * sys.pump.omega);
        let by_hand = 0.78f64.powi(2) * sys.pump.kappa_ex * flux / (sys.pump.kappa() / 2.0).powi(2);
        assert_relative_eq!(n, by_hand, max_relative = 1e-12);
        let c = sys.cooperativities(n).unwrap().c;
        assert_relative_eq!(
            c,
            4.0 * by_hand * sys.g0.powi(2) / (sys.signal.kappa() * sys.microwave.kappa()),
            max_relative = 1e-12
        );
    }

    #[test]
    fn suppression_limits() {
        assert_eq!(suppression_ratio(0.0), 1.0);
        assert!(suppression_ratio(1e12) < 1e-11);
        assert_relative_eq!(c_j_for_suppression(0.22), 3.545454545, max_relative = 1e-8);
    }

    #[test]
    fn suppression_strictly_decreasing() {
        let mut prev = suppression_ratio(0.0);
        for k in 1..200 {
            let s = suppression_ratio(k as f64 * 0.37);
            assert!(s < prev);
            prev = s;
        }
    }

    #[test]
    fn table_coupling_efficiency() {
        let sys = SystemParams::high_cooperativity();
        assert_relative_eq!(sys.microwave.eta(), 0.408, max_relative = 1e-12);
        assert_relative_eq!(sys.signal.eta(), 0.58, max_relative = 1e-12);
        assert!(sys.validate().is_ok());
        assert!(SystemParams::low_cooperativity().validate().is_ok());
    }

    #[test]
    fn on_resonance_suppression_of_table_values() {
        let sys = SystemParams::high_cooperativity();
        let co = sys.cooperativities(0.0).unwrap();
        assert_relative_eq!(co.c_j, 4.0 * 26.21f64.powi(2) / (25.8 * 9.96), max_relative = 1e-12);
        assert!((co.suppression - 0.0855).abs() < 1e-3);
    }

    #[test]
    fn with_suppression_sets_c_j() {
        let sys = SystemParams::high_cooperativity().with_suppression(0.22).unwrap();
        let co = sys.cooperativities(0.0).unwrap();
        assert_relative_eq!(co.suppression, 0.22, max_relative = 1e-12);
        assert_eq!(sys.stokes.delta, 0.0);
        assert!(SystemParams::high_cooperativity().with_suppression(0.0).is_err());
    }

    #[test]
    fn validation_names_field() {
        let mut sys = SystemParams::high_cooperativity();
        sys.microwave.kappa_ex = -1.0;
        match sys.validate() {
            Err(ParamError::Invalid { field, .. }) => assert_eq!(field, "microwave.kappa_ex"),
            other => panic!("unexpected {other:?}"),
        }
        let mut sys = SystemParams::high_cooperativity();
        sys.lambda_mm = 1.2;
        assert!(matches!(sys.validate(), Err(ParamError::Invalid { field, .. }) if field == "lambda_mm"));
    }

    #[test]
    fn occupancy_inversion() {
        let sys = SystemParams::high_cooperativity().with_microwave_occupancy(0.05).unwrap();
        assert_relative_eq!(crate::noise::occupancy(&sys.microwave), 0.05, max_relative = 1e-12);
    }
}
