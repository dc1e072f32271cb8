//! The six run kinds.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use eo_transducer::calibration::{calibrate, BaselineInput, FourPortMeasurement};
use eo_transducer::dynamics::{
    conversion_run, cw, iq_modulated_pulse, pump_drive_for, rise_time_10_90, square_pulse, time_grid, ConversionOptions, Direction,
    IntegratorOptions, Method, Substeps, DEFAULT_DT,
};
use eo_transducer::fitting::{
    fit_avoided_crossing, fit_optical_dip, fit_optical_dip_multi, fit_time_reflection, FitResult, ReflectionPort, SplitModeKnown, TraceData,
};
use eo_transducer::noise::{landscape, occupancy, operating_point, output_spectrum, LandscapeQuantity};
use eo_transducer::params::SystemParams;
use eo_transducer::steadystate::{
    build_drift, conversion_bandwidth, efficiency_closed_form, efficiency_numeric, efficiency_two_mode, effective_suppression, sweep,
    write_sweep_csv, InputChannel, Port,
};
use eo_transducer::units::{mhz, to_hz, TWO_PI};
use eo_transducer::Complex64;
use serde_json::json;

use crate::opts::{grid, Opts};
use crate::output::Writer;
use crate::CliError;

pub struct Ctx<'a> {
    pub doc: &'a toml::Table,
    pub system: Option<SystemParams>,
    /// Directory that relative data paths are resolved against.
    pub base_dir: PathBuf,
}

impl Ctx<'_> {
    fn system(&self) -> &SystemParams {
        self.system.as_ref().expect("system loaded for this run kind")
    }

    fn path(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

fn numerical(e: impl std::fmt::Display) -> CliError {
    CliError::Numerical(e.to_string())
}

fn cooperativity(o: &Opts) -> Result<f64, CliError> {
    let c = o.require_f64("cooperativity")?;
    if !(c >= 0.0) {
        return Err(o.invalid("cooperativity", "must be >= 0"));
    }
    Ok(c)
}

fn envelope(o: &Opts, t: &[f64], amplitude: Complex64) -> Result<Vec<Complex64>, CliError> {
    let detuning = o.rate_or("carrier_detuning", 0.0)?;
    let base = match o.string("shape")?.unwrap_or("cw") {
        "cw" => cw(t, amplitude)
            .iter()
            .zip(t)
            .map(|(a, &x)| a * Complex64::from_polar(1.0, -detuning * x))
            .collect(),
        "pulse" => {
            let on = o.require_duration("t_on")?;
            let off = o.require_duration("t_off")?;
            if off <= on {
                return Err(o.invalid("t_off", "must be after t_on"));
            }
            square_pulse(t, on, off, o.duration_or("rise", 0.0)?, amplitude, detuning)
        }
        other => return Err(o.invalid("shape", format!("unknown shape `{other}` (expected cw or pulse)"))),
    };
    Ok(match o.rate("iq_frequency")? {
        Some(w) => iq_modulated_pulse(&base, t, w / TWO_PI),
        None => base,
    })
}

fn integrator(o: &Opts) -> Result<IntegratorOptions, CliError> {
    let method: Method = o
        .string("method")?
        .unwrap_or("rk4")
        .parse()
        .map_err(|e: String| o.invalid("method", e))?;
    let substeps = match o.usize_or("substeps", 0)? {
        0 => Substeps::Auto,
        n => Substeps::Fixed(n),
    };
    Ok(IntegratorOptions { method, substeps })
}

pub fn simulate(ctx: &Ctx, w: &mut Writer) -> Result<(), CliError> {
    let o = Opts::root(ctx.doc, "simulate")?;
    let sys = ctx.system();
    let direction: Direction = o
        .require_string("direction")?
        .parse()
        .map_err(|e| o.invalid("direction", format!("{e}")))?;
    let c = cooperativity(&o)?;
    let t_end = o.require_duration("t_end")?;
    let dt = o.duration_or("dt", DEFAULT_DT)?;
    if !(dt > 0.0 && t_end > dt) {
        return Err(o.invalid("dt", "need 0 < dt < t_end"));
    }
    let t = time_grid(t_end, dt);
    let fp = pump_drive_for(sys, sys.pump_photons_for(c)).map_err(numerical)?;
    let pump_o = o.sub("pump")?;
    let signal_o = o.sub("signal")?;
    let pump = envelope(&pump_o, &t, Complex64::new(fp, 0.0))?;
    let amp = Complex64::from_polar(signal_o.f64_or("amplitude", 1.0)?, signal_o.f64_or("phase", 0.0)?);
    let signal = envelope(&signal_o, &t, amp)?;
    let opts = ConversionOptions {
        integrator: integrator(&o)?,
        preload: o.bool_or("preload", false)?,
        reference_detuning: o.f64_or("reference_detuning", 30.0)?,
    };
    let run = conversion_run(sys, &t, &pump, &signal, direction, &opts).map_err(numerical)?;

    // rise time of the leading edge, before the first drive turns off
    let t_stop = [&pump_o, &signal_o]
        .iter()
        .filter_map(|s| match s.string("shape") {
            Ok(Some("pulse")) => s.duration("t_off").ok().flatten(),
            _ => None,
        })
        .fold(f64::INFINITY, f64::min);
    let k_end = t.iter().position(|&x| x >= t_stop).unwrap_or(t.len());
    let rise = rise_time_10_90(&t[..k_end], &run.efficiency[..k_end]);

    w.csv("trajectory", |out| run.trajectory.write_csv(out))?;
    w.csv("efficiency", |out| {
        writeln!(out, "t,efficiency")?;
        for (x, e) in t.iter().zip(&run.efficiency) {
            writeln!(out, "{x:e},{e:e}")?;
        }
        Ok(())
    })?;
    w.json(
        "summary",
        &json!({
            "direction": direction.name(),
            "cooperativity": c,
            "pump_photons": sys.pump_photons_for(c),
            "input_flux": run.input_flux,
            "peak_efficiency": run.peak,
            "peak_time": run.peak_time,
            "plateau_efficiency": run.plateau,
            "rise_time_10_90": rise,
        }),
    )
}

pub fn spectrum(ctx: &Ctx, w: &mut Writer) -> Result<(), CliError> {
    let o = Opts::root(ctx.doc, "spectrum")?;
    let sys = ctx.system();
    let c = cooperativity(&o)?;
    let span = o.rate_or("span", 4.0 * sys.microwave.kappa())?;
    let points = o.usize_or("points", 801)?;
    if points < 3 || !(span > 0.0) {
        return Err(o.invalid("points", "need span > 0 and at least 3 points"));
    }
    let n_p = sys.pump_photons_for(c);
    let drift = build_drift(sys, n_p);
    let omega: Vec<f64> = (0..points).map(|k| -span + 2.0 * span * k as f64 / (points - 1) as f64).collect();
    let sols = sweep(&drift, sys, &omega).map_err(numerical)?;
    let pairs = [
        (Port::Optical, InputChannel::EEx),
        (Port::Microwave, InputChannel::OEx),
        (Port::Optical, InputChannel::OEx),
        (Port::Microwave, InputChannel::EEx),
    ];
    w.csv("scattering", |out| write_sweep_csv(out, &sols, &pairs))?;

    let coop = sys.cooperativities(n_p).map_err(numerical)?;
    let (ee, eo, l) = (sys.microwave.eta(), sys.signal.eta(), sys.lambda_mm);
    let bandwidth = conversion_bandwidth(sys, n_p, span, points).map_err(numerical)?;
    w.json(
        "summary",
        &json!({
            "cooperativities": coop,
            "efficiency_numeric": efficiency_numeric(sys, n_p).map_err(numerical)?,
            "efficiency_closed_form": efficiency_closed_form(c, coop.c_j, ee, eo, l),
            "efficiency_two_mode": efficiency_two_mode(c, ee, eo, l),
            "effective_suppression": effective_suppression(sys, n_p).map_err(numerical)?,
            "bandwidth_fwhm_hz": to_hz(bandwidth),
        }),
    )
}

pub fn noise(ctx: &Ctx, w: &mut Writer) -> Result<(), CliError> {
    let o = Opts::root(ctx.doc, "noise")?;
    let mut sys = *ctx.system();
    if let Some(s) = o.f64("suppression")? {
        sys = sys.with_suppression(s).map_err(|e| o.invalid("suppression", e.to_string()))?;
    }
    let c = cooperativity(&o)?;
    let n_e = match o.f64("n_e")? {
        Some(v) => v,
        None => occupancy(&sys.microwave),
    };
    let fwhm = o.rate_or("filter_fwhm", mhz(10.0))?;
    let span = o.rate_or("span", 4.0 * sys.microwave.kappa())?;
    let points = o.usize_or("points", 401)?;
    if points < 3 || !(span > 0.0) {
        return Err(o.invalid("points", "need span > 0 and at least 3 points"));
    }
    let p = operating_point(&sys, c, n_e, fwhm).map_err(numerical)?;
    let p0 = operating_point(&sys, 0.0, n_e, fwhm).map_err(numerical)?;
    let cell = sys.with_microwave_occupancy(n_e).map_err(numerical)?;
    let omega: Vec<f64> = (0..points).map(|k| -span + 2.0 * span * k as f64 / (points - 1) as f64).collect();
    let n_p = cell.pump_photons_for(c);
    let s_mw = output_spectrum(&cell, n_p, Port::Microwave, &omega).map_err(numerical)?;
    let s_o = output_spectrum(&cell, n_p, Port::Optical, &omega).map_err(numerical)?;
    w.csv("spectrum", |out| {
        writeln!(out, "omega,s_microwave,s_optical")?;
        for k in 0..omega.len() {
            writeln!(out, "{:e},{:e},{:e}", omega[k], s_mw.s_out[k], s_o.s_out[k])?;
        }
        Ok(())
    })?;
    let eta_tot = o.f64("eta_tot")?;
    w.json(
        "summary",
        &json!({
            "operating_point": p,
            "n_out_e_no_pump": p0.n_out_e,
            "n_out_e_change": p.n_out_e - p0.n_out_e,
            "n_in_eo_model": p.n_out_e / p.eta_eo,
            "n_in_oe_model": p.n_out_o / p.eta_oe,
            "eta_tot": eta_tot,
            "n_in_eo": eta_tot.map(|e| p.n_out_e / e),
            "n_in_oe": eta_tot.map(|e| p.n_out_o / e),
            "quantum_cooperativity": if n_e > 0.0 { Some(c / n_e) } else { None },
        }),
    )
}

pub fn run_landscape(ctx: &Ctx, w: &mut Writer) -> Result<(), CliError> {
    let o = Opts::root(ctx.doc, "landscape")?;
    let sys = ctx.system();
    let name = o.require_string("quantity")?;
    let quantity = LandscapeQuantity::parse(name)
        .ok_or_else(|| o.invalid("quantity", format!("unknown quantity `{name}` (expected n_out_e, n_out_o, n_in_eo or n_in_oe)")))?;
    let s = o.f64_or("suppression", 0.22)?;
    let fwhm = o.rate_or("filter_fwhm", mhz(10.0))?;
    let c_grid = grid(&o.sub("c")?)?;
    let n_e_grid = grid(&o.sub("n_e")?)?;
    let eta_tot = o.f64("eta_tot")?;

    // with a measured efficiency, input-referred values use it instead of the model's
    let computed = match (quantity, eta_tot) {
        (LandscapeQuantity::InputEo, Some(_)) => LandscapeQuantity::OutMicrowave,
        (LandscapeQuantity::InputOe, Some(_)) => LandscapeQuantity::OutOptical,
        (q, _) => q,
    };
    let mut map = landscape(sys, &c_grid, &n_e_grid, s, computed, fwhm).map_err(|e| match e {
        eo_transducer::noise::NoiseError::Params(p) => o.invalid("suppression", p.to_string()),
        other => numerical(other),
    })?;
    if computed != quantity {
        let eta = eta_tot.unwrap();
        if !(eta > 0.0) {
            return Err(o.invalid("eta_tot", "must be > 0"));
        }
        map.values.iter_mut().flatten().for_each(|v| *v /= eta);
        map.quantity = quantity;
    }
    w.csv("landscape", |out| map.write_csv(out))?;

    let values: Vec<f64> = map.values.iter().flatten().copied().collect();
    let mark = o.sub("mark")?;
    let marked = if mark.is_present() {
        let (mc, mn) = (mark.require_f64("c")?, mark.require_f64("n_e")?);
        let nearest = |g: &[f64], x: f64| {
            (0..g.len())
                .min_by(|&a, &b| (g[a] - x).abs().total_cmp(&(g[b] - x).abs()))
                .unwrap()
        };
        let (ic, ine) = (nearest(&c_grid, mc), nearest(&n_e_grid, mn));
        Some(json!({ "c": c_grid[ic], "n_e": n_e_grid[ine], "value": map.get(ine, ic) }))
    } else {
        None
    };
    w.json(
        "summary",
        &json!({
            "quantity": quantity.name(),
            "suppression": s,
            "eta_tot": eta_tot,
            "cells": map.values.len(),
            "min": values.iter().copied().fold(f64::INFINITY, f64::min),
            "max": values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            "marked": marked,
            "failures": map.failures,
        }),
    )
}

fn read_trace(ctx: &Ctx, o: &Opts, key: &str, p: &str) -> Result<TraceData, CliError> {
    let path = ctx.path(p);
    let f = File::open(&path).map_err(|e| o.invalid(key, format!("{}: {e}", path.display())))?;
    TraceData::from_csv(BufReader::new(f)).map_err(|e| o.invalid(key, format!("{}: {e}", path.display())))
}

pub fn fit(ctx: &Ctx, w: &mut Writer) -> Result<(), CliError> {
    let o = Opts::root(ctx.doc, "fit")?;
    let kind = o.require_string("kind")?;
    let files = o.strings("data")?.ok_or_else(|| CliError::Config(eo_transducer::config::ConfigError::Missing(o.field("data"))))?;
    let traces = files.iter().map(|p| read_trace(ctx, &o, "data", p)).collect::<Result<Vec<_>, _>>()?;
    let fit_err = |e: eo_transducer::fitting::FitError| match e {
        eo_transducer::fitting::FitError::InvalidData(r) => o.invalid("data", r),
        other => numerical(other),
    };
    let result: FitResult = match kind {
        "optical_dip" if traces.len() == 1 => fit_optical_dip(&traces[0]).map_err(fit_err)?,
        "optical_dip" => fit_optical_dip_multi(&traces).map_err(fit_err)?,
        "avoided_crossing" => {
            let known = match ctx.system {
                Some(s) => SplitModeKnown::from_system(&s),
                None => return Err(CliError::Config(eo_transducer::config::ConfigError::Missing("system".into()))),
            };
            fit_avoided_crossing(&traces[0], &known).map_err(fit_err)?
        }
        "time_reflection" => {
            let pulse = read_trace(ctx, &o, "input_pulse", o.require_string("input_pulse")?)?;
            let port = match o.string("port")?.unwrap_or("microwave") {
                "microwave" => ReflectionPort::Microwave,
                "optical" => ReflectionPort::Optical { lambda_mm: o.f64("lambda")? },
                other => return Err(o.invalid("port", format!("unknown port `{other}` (expected microwave or optical)"))),
            };
            fit_time_reflection(&traces[0], &pulse, port).map_err(fit_err)?
        }
        other => {
            return Err(o.invalid(
                "kind",
                format!("unknown fit `{other}` (expected optical_dip, avoided_crossing or time_reflection)"),
            ))
        }
    };
    w.json("fit", &result)?;
    if !result.converged {
        return Err(CliError::NotConverged(format!("{kind} fit did not converge")));
    }
    Ok(())
}

pub fn run_calibrate(ctx: &Ctx, w: &mut Writer) -> Result<(), CliError> {
    let o = Opts::root(ctx.doc, "calibrate")?;
    let m = FourPortMeasurement::from_db(
        o.require_f64("s_eo_db")?,
        o.require_f64("s_oe_db")?,
        o.require_f64("s_oo_db")?,
        o.require_f64("s_ee_db")?,
        o.require_f64("beta4_db")?,
    );
    let b = o.sub("baseline")?;
    let baseline = if b.is_present() {
        Some(BaselineInput {
            p_baseline: b.require_f64("p_baseline")?,
            bandwidth: b.require_f64("bandwidth")?,
            omega_o: b.require_rate("omega_o")?,
        })
    } else {
        None
    };
    let report = calibrate(&m, baseline).map_err(|e| {
        CliError::Config(eo_transducer::config::ConfigError::Invalid {
            field: "calibrate".into(),
            reason: e.to_string(),
        })
    })?;
    w.json("calibration", &report)
}
