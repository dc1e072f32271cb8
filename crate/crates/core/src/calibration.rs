//! Four-port gain/loss bookkeeping and the heterodyne noise floor.
//!
//! The setup is modelled as four transmission factors around the device:
//! `β1` (optical input), `β2` (optical output), `β3` (microwave input) and
//! `β4` (microwave output). With the device conversion efficiency `η`:
//!
//! ```text
//! s_oo = β1 β2          s_ee = β3 β4
//! s_oe = β3 η β2        s_eo = β1 η β4
//! ```
//!
//! where `s_oe` is microwave in, optics out. All arithmetic is done in dB.

use serde::Serialize;
use thiserror::Error;

use crate::units::{db_to_linear, linear_to_db, HBAR};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("`{0}` must be a finite positive transmission")]
    NonPositive(&'static str),
    #[error("`{0}` must be finite")]
    NotFinite(&'static str),
    #[error("invalid baseline input: {0}")]
    Baseline(String),
}

/// Raw (linear) transmissions of the four-port calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FourPortMeasurement {
    /// Optics in, microwave out, on resonance.
    pub s_eo_sq: f64,
    /// Microwave in, optics out, on resonance.
    pub s_oe_sq: f64,
    /// Optical through transmission off resonance.
    pub s_oo_sq: f64,
    /// Microwave through transmission off resonance.
    pub s_ee_sq: f64,
    /// Independently known microwave output gain (dB).
    pub beta4_db: f64,
}

impl FourPortMeasurement {
    /// Builds a measurement from transmissions quoted in dB.
    pub fn from_db(s_eo_db: f64, s_oe_db: f64, s_oo_db: f64, s_ee_db: f64, beta4_db: f64) -> Self {
        Self {
            s_eo_sq: db_to_linear(s_eo_db),
            s_oe_sq: db_to_linear(s_oe_db),
            s_oo_sq: db_to_linear(s_oo_db),
            s_ee_sq: db_to_linear(s_ee_db),
            beta4_db,
        }
    }

    /// Transmissions a chain with the given betas (dB) and efficiency would record.
    pub fn synthesize(betas: &Betas, eta_tot: f64) -> Self {
        let eta = linear_to_db(eta_tot);
        Self::from_db(
            betas.beta1 + eta + betas.beta4,
            betas.beta3 + eta + betas.beta2,
            betas.beta1 + betas.beta2,
            betas.beta3 + betas.beta4,
            betas.beta4,
        )
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        for (name, v) in [
            ("s_eo_sq", self.s_eo_sq),
            ("s_oe_sq", self.s_oe_sq),
            ("s_oo_sq", self.s_oo_sq),
            ("s_ee_sq", self.s_ee_sq),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(CalibrationError::NonPositive(name));
            }
        }
        if !self.beta4_db.is_finite() {
            return Err(CalibrationError::NotFinite("beta4_db"));
        }
        Ok(())
    }

    fn db(&self) -> [f64; 4] {
        [
            linear_to_db(self.s_eo_sq),
            linear_to_db(self.s_oe_sq),
            linear_to_db(self.s_oo_sq),
            linear_to_db(self.s_ee_sq),
        ]
    }
}

/// `η_tot = sqrt(s_eo s_oe / (s_oo s_ee))`.
pub fn total_efficiency(m: &FourPortMeasurement) -> Result<f64, CalibrationError> {
    m.validate()?;
    let [eo, oe, oo, ee] = m.db();
    Ok(db_to_linear(0.5 * (eo + oe - oo - ee)))
}

/// Setup transmissions in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Betas {
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub beta4: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaSolution {
    pub betas: Betas,
    /// Implausible signs, e.g. an input "loss" showing gain.
    pub warnings: Vec<String>,
}

/// Solves the chain for `β1..β3` given `β4` and `η_tot`.
pub fn solve_betas(m: &FourPortMeasurement, eta_tot: f64) -> Result<BetaSolution, CalibrationError> {
    m.validate()?;
    if !(eta_tot.is_finite() && eta_tot > 0.0) {
        return Err(CalibrationError::NonPositive("eta_tot"));
    }
    let [_, oe, oo, ee] = m.db();
    let beta4 = m.beta4_db;
    let beta3 = ee - beta4;
    let beta2 = oe - beta3 - linear_to_db(eta_tot);
    let beta1 = oo - beta2;
    let mut warnings = Vec::new();
    if beta1 > 0.0 {
        warnings.push(format!("beta1 = {beta1:.2} dB: optical input path shows gain"));
    }
    if beta3 > 0.0 {
        warnings.push(format!("beta3 = {beta3:.2} dB: microwave input path shows gain"));
    }
    Ok(BetaSolution {
        betas: Betas {
            beta1,
            beta2,
            beta3,
            beta4,
        },
        warnings,
    })
}

/// Equivalent heterodyne noise floor `n_add = P / (ħ ω_o β2 BW)`.
pub fn heterodyne_baseline(p_baseline: f64, beta2_db: f64, bandwidth: f64, omega_o: f64) -> Result<f64, CalibrationError> {
    for (name, v) in [("p_baseline", p_baseline), ("bandwidth", bandwidth), ("omega_o", omega_o)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(CalibrationError::Baseline(format!("{name} must be > 0")));
        }
    }
    Ok(p_baseline / (HBAR * omega_o * db_to_linear(beta2_db) * bandwidth))
}

/// Inverse of [`heterodyne_baseline`]: baseline power for a given floor.
pub fn baseline_power(n_add: f64, beta2_db: f64, bandwidth: f64, omega_o: f64) -> f64 {
    HBAR * omega_o * db_to_linear(beta2_db) * bandwidth * n_add
}

#[derive(Debug, Clone, Serialize)]
pub struct BaselineInput {
    pub p_baseline: f64,
    pub bandwidth: f64,
    pub omega_o: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationReport {
    pub inputs: FourPortMeasurement,
    pub baseline: Option<BaselineInput>,
    pub eta_tot: f64,
    pub beta1_db: f64,
    pub beta2_db: f64,
    pub beta3_db: f64,
    pub beta4_db: f64,
    pub n_add: Option<f64>,
    pub chain: [&'static str; 4],
    pub warnings: Vec<String>,
}

pub const CHAIN_EQUATIONS: [&str; 4] = [
    "s_oo = beta1 * beta2",
    "s_ee = beta3 * beta4",
    "s_oe = beta3 * eta_tot * beta2",
    "s_eo = beta1 * eta_tot * beta4",
];

/// Full calibration: efficiency, betas and optionally the heterodyne floor.
pub fn calibrate(m: &FourPortMeasurement, baseline: Option<BaselineInput>) -> Result<CalibrationReport, CalibrationError> {
    let eta_tot = total_efficiency(m)?;
    let sol = solve_betas(m, eta_tot)?;
    let n_add = match &baseline {
        Some(b) => Some(heterodyne_baseline(b.p_baseline, sol.betas.beta2, b.bandwidth, b.omega_o)?),
        None => None,
    };
    Ok(CalibrationReport {
        inputs: *m,
        baseline,
        eta_tot,
        beta1_db: sol.betas.beta1,
        beta2_db: sol.betas.beta2,
        beta3_db: sol.betas.beta3,
        beta4_db: sol.betas.beta4,
        n_add,
        chain: CHAIN_EQUATIONS,
        warnings: sol.warnings,
    })
}
