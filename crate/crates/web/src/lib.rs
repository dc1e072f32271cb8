//! Browser bindings for the transducer model. Each export returns one flat
//! `Float64Array` made of equal-length blocks, described per function.

use eo_transducer::dynamics::{conversion_run, cw, pump_drive_for, square_pulse, time_grid, ConversionOptions, Direction};
use eo_transducer::params::SystemParams;
use eo_transducer::steadystate::{build_drift, efficiency_numeric, sweep};
use eo_transducer::units::mhz;
use eo_transducer::Complex64;
use wasm_bindgen::prelude::*;

fn device(suppression: f64) -> Result<SystemParams, String> {
    SystemParams::high_cooperativity()
        .with_suppression(suppression)
        .map_err(|e| e.to_string())
}

fn check_points(points: usize) -> Result<(), String> {
    if (2..=20_000).contains(&points) {
        Ok(())
    } else {
        Err("points must lie in 2..=20000".into())
    }
}

/// Blocks: cooperativity, efficiency.
pub fn efficiency_curve_impl(suppression: f64, c_max: f64, points: usize) -> Result<Vec<f64>, String> {
    check_points(points)?;
    if !(c_max > 0.0 && c_max.is_finite()) {
        return Err("c_max must be > 0".into());
    }
    let sys = device(suppression)?;
    let c: Vec<f64> = (0..points).map(|k| c_max * k as f64 / (points - 1) as f64).collect();
    let mut eta = Vec::with_capacity(points);
    for &x in &c {
        eta.push(efficiency_numeric(&sys, sys.pump_photons_for(x)).map_err(|e| e.to_string())?);
    }
    Ok([c, eta].concat())
}

/// Blocks: detuning (MHz), `|S_oe|²`, `|S_eo|²`.
pub fn conversion_spectrum_impl(cooperativity: f64, suppression: f64, span_mhz: f64, points: usize) -> Result<Vec<f64>, String> {
    check_points(points)?;
    if !(span_mhz > 0.0 && cooperativity >= 0.0) {
        return Err("span must be > 0 and cooperativity >= 0".into());
    }
    let sys = device(suppression)?;
    let f: Vec<f64> = (0..points).map(|k| -span_mhz + 2.0 * span_mhz * k as f64 / (points - 1) as f64).collect();
    let omega: Vec<f64> = f.iter().map(|&x| mhz(x)).collect();
    let sols = sweep(&build_drift(&sys, sys.pump_photons_for(cooperativity)), &sys, &omega).map_err(|e| e.to_string())?;
    let oe = sols.iter().map(|s| s.s_oe().norm_sqr()).collect();
    let eo = sols.iter().map(|s| s.s_eo().norm_sqr()).collect();
    Ok([f, oe, eo].concat())
}

/// Converted efficiency under a square pump pulse of `pump_ns` starting at
/// 100 ns, with a CW or matched pulsed signal. Blocks: time (ns), efficiency.
pub fn conversion_pulse_impl(cooperativity: f64, microwave_to_optics: bool, pump_ns: f64, cw_signal: bool) -> Result<Vec<f64>, String> {
    if !(cooperativity >= 0.0 && cooperativity <= 5.0) {
        return Err("cooperativity must lie in [0, 5]".into());
    }
    if !(pump_ns >= 10.0 && pump_ns <= 2000.0) {
        return Err("pump length must lie in [10, 2000] ns".into());
    }
    let sys = SystemParams::high_cooperativity();
    let t_end = (pump_ns + 300.0) * 1e-9;
    let t = time_grid(t_end, 0.5e-9);
    let fp = pump_drive_for(&sys, sys.pump_photons_for(cooperativity)).map_err(|e| e.to_string())?;
    let (on, off) = (100e-9, (100.0 + pump_ns) * 1e-9);
    let pump = square_pulse(&t, on, off, 2e-9, Complex64::new(fp, 0.0), 0.0);
    let signal = if cw_signal {
        cw(&t, Complex64::new(1.0, 0.0))
    } else {
        square_pulse(&t, on, off, 2e-9, Complex64::new(1.0, 0.0), 0.0)
    };
    let direction = if microwave_to_optics {
        Direction::MicrowaveToOptics
    } else {
        Direction::OpticsToMicrowave
    };
    let opts = ConversionOptions {
        preload: cw_signal,
        ..Default::default()
    };
    let run = conversion_run(&sys, &t, &pump, &signal, direction, &opts).map_err(|e| e.to_string())?;
    Ok([t.iter().map(|x| x * 1e9).collect(), run.efficiency].concat())
}

#[wasm_bindgen]
pub fn efficiency_curve(suppression: f64, c_max: f64, points: usize) -> Result<Vec<f64>, JsError> {
    efficiency_curve_impl(suppression, c_max, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn conversion_spectrum(cooperativity: f64, suppression: f64, span_mhz: f64, points: usize) -> Result<Vec<f64>, JsError> {
    conversion_spectrum_impl(cooperativity, suppression, span_mhz, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn conversion_pulse(cooperativity: f64, microwave_to_optics: bool, pump_ns: f64, cw_signal: bool) -> Result<Vec<f64>, JsError> {
    conversion_pulse_impl(cooperativity, microwave_to_optics, pump_ns, cw_signal).map_err(|e| JsError::new(&e))
}
