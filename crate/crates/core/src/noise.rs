//! Output noise spectra, filter-integrated photon numbers and input-referred
//! added noise.
//!
//! Spectra are normally ordered photon flux densities
//! `S(Ω) = Σ_k |A_k|² n_k + Σ_k |B_k|² (n_k + 1)`, where `A_k` and `B_k` are
//! the scattering coefficients of input channel `k`'s annihilation and
//! creation operators into the output port. Vacuum therefore only shows up
//! through amplification.

use serde::Serialize;
use thiserror::Error;

use crate::params::{ParamError, SystemParams, ModeParams};
use crate::steadystate::{build_drift, scattering, DriftMatrix, Port, ScatteringSolution, SteadyStateError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NoiseError {
    #[error(transparent)]
    Scattering(#[from] SteadyStateError),
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("spectrum covers [{lo:e}, {hi:e}] rad/s but the filter needs [{need_lo:e}, {need_hi:e}]")]
    Coverage { lo: f64, hi: f64, need_lo: f64, need_hi: f64 },
    #[error("efficiency must be > 0 to refer noise to the input")]
    ZeroEfficiency,
    #[error("invalid filter: {0}")]
    Filter(String),
    #[error("empty grid: {0}")]
    EmptyGrid(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseSpectrum {
    pub port: Port,
    /// Offset grid (rad/s), strictly increasing.
    pub omega: Vec<f64>,
    /// Photon flux spectral density, photons s⁻¹ Hz⁻¹.
    pub s_out: Vec<f64>,
}

/// Unit-peak Gaussian measurement filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeasurementFilter {
    pub center: f64,
    pub fwhm: f64,
}

impl MeasurementFilter {
    pub fn new(center: f64, fwhm: f64) -> Result<Self, NoiseError> {
        if !(fwhm > 0.0 && fwhm.is_finite()) {
            return Err(NoiseError::Filter(format!("fwhm must be > 0, got {fwhm}")));
        }
        Ok(Self { center, fwhm })
    }

    pub fn sigma(&self) -> f64 {
        self.fwhm / (8.0 * std::f64::consts::LN_2).sqrt()
    }

    pub fn weight(&self, omega: f64) -> f64 {
        let x = (omega - self.center) / self.sigma();
        (-0.5 * x * x).exp()
    }

    /// Area under the filter, `fwhm sqrt(π / ln 16)`.
    pub fn equivalent_bandwidth(&self) -> f64 {
        self.fwhm * (std::f64::consts::PI / 16f64.ln()).sqrt()
    }
}

/// Spectral density of `port` at a single offset from an existing solution.
pub fn spectral_density(sol: &ScatteringSolution, system: &SystemParams, port: Port) -> f64 {
    sol.port_terms(port)
        .map(|(ch, a, b)| {
            let n = ch.occupancy(system);
            a.norm_sqr() * n + b.norm_sqr() * (n + 1.0)
        })
        .sum()
}

/// Output spectrum of `port` on the grid `omega`.
pub fn output_spectrum(system: &SystemParams, n_pump: f64, port: Port, omega: &[f64]) -> Result<NoiseSpectrum, NoiseError> {
    let drift = build_drift(system, n_pump);
    let s_out = crate::par::map(omega, |&w| {
        scattering(&drift, system, w).map(|sol| spectral_density(&sol, system, port))
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    Ok(NoiseSpectrum {
        port,
        omega: omega.to_vec(),
        s_out,
    })
}

/// Microwave output spectrum without optical pump.
pub fn passive_spectrum(microwave: &ModeParams, omega: f64) -> f64 {
    let k = microwave.kappa();
    4.0 * microwave.kappa_in * microwave.kappa_ex / (k * k + 4.0 * omega * omega)
        * (microwave.n_bath - microwave.n_waveguide)
        + microwave.n_waveguide
}

/// Equivalent microwave mode occupancy, the linewidth-weighted mean of the
/// bath and waveguide occupancies.
pub fn occupancy(microwave: &ModeParams) -> f64 {
    (microwave.n_bath * microwave.kappa_in + microwave.n_waveguide * microwave.kappa_ex)
        / (microwave.kappa_in + microwave.kappa_ex)
}

/// `∫ χ(Ω) S(Ω) dΩ` by trapezoidal quadrature over the sampled spectrum.
///
/// The samples must cover the filter to at least five standard deviations on
/// both sides.
pub fn filtered_photon_number(spectrum: &NoiseSpectrum, filter: &MeasurementFilter) -> Result<f64, NoiseError> {
    let w = &spectrum.omega;
    if w.len() < 2 {
        return Err(NoiseError::EmptyGrid("spectrum"));
    }
    let need_lo = filter.center - 5.0 * filter.sigma();
    let need_hi = filter.center + 5.0 * filter.sigma();
    let (lo, hi) = (w[0], w[w.len() - 1]);
    if lo > need_lo || hi < need_hi {
        return Err(NoiseError::Coverage { lo, hi, need_lo, need_hi });
    }
    let f: Vec<f64> = w
        .iter()
        .zip(&spectrum.s_out)
        .map(|(&x, &s)| filter.weight(x) * s)
        .collect();
    Ok(w.windows(2)
        .zip(f.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum())
}

/// `∫ χ(Ω) S(Ω) dΩ` for a spectrum given as a function, by adaptive Simpson
/// quadrature over ±8σ of the filter. Stops when successive estimates agree
/// to `rel_tol`.
pub fn filtered_photon_number_fn<F>(spectrum: F, filter: &MeasurementFilter, rel_tol: f64) -> Result<f64, NoiseError>
where
    F: Fn(f64) -> Result<f64, NoiseError>,
{
    let a = filter.center - 8.0 * filter.sigma();
    let b = filter.center + 8.0 * filter.sigma();
    let f = |x: f64| -> Result<f64, NoiseError> { Ok(filter.weight(x) * spectrum(x)?) };

    // Split into panels first so narrow spectral features are not stepped over.
    const PANELS: usize = 16;
    let h = (b - a) / PANELS as f64;
    let mut total = 0.0;
    for p in 0..PANELS {
        let x0 = a + p as f64 * h;
        let x1 = x0 + h;
        let xm = 0.5 * (x0 + x1);
        let (f0, fm, f1) = (f(x0)?, f(xm)?, f(x1)?);
        let whole = h / 6.0 * (f0 + 4.0 * fm + f1);
        total += simpson_refine(&f, x0, x1, f0, fm, f1, whole, rel_tol, 40)?;
    }
    Ok(total)
}

#[allow(clippy::too_many_arguments)]
fn simpson_refine<F>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, rel_tol: f64, depth: u32) -> Result<f64, NoiseError>
where
    F: Fn(f64) -> Result<f64, NoiseError>,
{
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm)?, f(rm)?);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let both = left + right;
    if depth == 0 || (both - whole).abs() <= rel_tol * both.abs().max(f64::MIN_POSITIVE) {
        return Ok(both + (both - whole) / 15.0);
    }
    Ok(simpson_refine(f, a, m, fa, flm, fm, left, rel_tol, depth - 1)?
        + simpson_refine(f, m, b, fm, frm, fb, right, rel_tol, depth - 1)?)
}

/// Band-averaged output noise in quanta: filtered photon number divided by
/// the filter's equivalent bandwidth.
pub fn band_noise(system: &SystemParams, drift: &DriftMatrix, port: Port, filter: &MeasurementFilter) -> Result<f64, NoiseError> {
    let total = filtered_photon_number_fn(
        |w| Ok(spectral_density(&scattering(drift, system, w)?, system, port)),
        filter,
        1e-7,
    )?;
    Ok(total / filter.equivalent_bandwidth())
}

/// `N_in = N_out / η_tot`.
pub fn equivalent_input_noise(n_out: f64, eta_tot: f64) -> Result<f64, NoiseError> {
    if !(eta_tot > 0.0) {
        return Err(NoiseError::ZeroEfficiency);
    }
    Ok(n_out / eta_tot)
}

/// Quantity evaluated per landscape cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LandscapeQuantity {
    /// Microwave output noise `N_out^e`.
    OutMicrowave,
    /// Optical output noise `N_out^o`.
    OutOptical,
    /// Optics-to-microwave input-referred noise `N_in^eo = N_out^e / η`.
    InputEo,
    /// Microwave-to-optics input-referred noise `N_in^oe = N_out^o / η`.
    InputOe,
}

impl LandscapeQuantity {
    pub fn name(self) -> &'static str {
        match self {
            LandscapeQuantity::OutMicrowave => "n_out_e",
            LandscapeQuantity::OutOptical => "n_out_o",
            LandscapeQuantity::InputEo => "n_in_eo",
            LandscapeQuantity::InputOe => "n_in_oe",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::OutMicrowave, Self::OutOptical, Self::InputEo, Self::InputOe]
            .into_iter()
            .find(|q| q.name() == s)
    }

    fn port(self) -> Port {
        match self {
            LandscapeQuantity::OutMicrowave | LandscapeQuantity::InputEo => Port::Microwave,
            LandscapeQuantity::OutOptical | LandscapeQuantity::InputOe => Port::Optical,
        }
    }
}

/// Evaluation of one `(C, N_e)` operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OperatingPoint {
    pub c: f64,
    pub n_e: f64,
    pub n_out_e: f64,
    pub n_out_o: f64,
    /// `|S_oe(0)|²` of the model.
    pub eta_oe: f64,
    /// `|S_eo(0)|²` of the model.
    pub eta_eo: f64,
}

/// Noise figures at cooperativity `c` and microwave occupancy `n_e`, with
/// the microwave bath inferred from `n_e` (waveguide occupancy kept).
pub fn operating_point(system: &SystemParams, c: f64, n_e: f64, filter_fwhm: f64) -> Result<OperatingPoint, NoiseError> {
    let sys = system.with_microwave_occupancy(n_e)?;
    let drift = build_drift(&sys, sys.pump_photons_for(c));
    let f_e = MeasurementFilter::new(0.0, filter_fwhm)?;
    let n_out_e = band_noise(&sys, &drift, Port::Microwave, &f_e)?;
    let n_out_o = band_noise(&sys, &drift, Port::Optical, &f_e)?;
    let sol = scattering(&drift, &sys, 0.0)?;
    Ok(OperatingPoint {
        c,
        n_e,
        n_out_e,
        n_out_o,
        eta_oe: sol.s_oe().norm_sqr(),
        eta_eo: sol.s_eo().norm_sqr(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Landscape {
    pub quantity: LandscapeQuantity,
    pub suppression: f64,
    pub filter_fwhm: f64,
    pub c: Vec<f64>,
    pub n_e: Vec<f64>,
    /// Row-major over `n_e` (rows) and `c` (columns); `None` marks a failed cell.
    pub values: Vec<Option<f64>>,
    pub failures: Vec<String>,
}

impl Landscape {
    pub fn get(&self, i_ne: usize, i_c: usize) -> Option<f64> {
        self.values[i_ne * self.c.len() + i_c]
    }

    /// `C, N_e, value` rows; failed cells are written as `nan`.
    pub fn write_csv<W: std::io::Write + ?Sized>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "c,n_e,{}", self.quantity.name())?;
        for (i, &ne) in self.n_e.iter().enumerate() {
            for (k, &c) in self.c.iter().enumerate() {
                match self.get(i, k) {
                    Some(v) => writeln!(out, "{c:e},{ne:e},{v:e}")?,
                    None => writeln!(out, "{c:e},{ne:e},nan")?,
                }
            }
        }
        Ok(())
    }
}

/// Evaluates `quantity` over the `(C, N_e)` grid at fixed on-resonance
/// suppression `s_fixed`. Cells that fail are recorded, not fatal.
pub fn landscape(
    base: &SystemParams,
    c_grid: &[f64],
    n_e_grid: &[f64],
    s_fixed: f64,
    quantity: LandscapeQuantity,
    filter_fwhm: f64,
) -> Result<Landscape, NoiseError> {
    if c_grid.is_empty() {
        return Err(NoiseError::EmptyGrid("c_grid"));
    }
    if n_e_grid.is_empty() {
        return Err(NoiseError::EmptyGrid("n_e_grid"));
    }
    MeasurementFilter::new(0.0, filter_fwhm)?;
    let sys = base.with_suppression(s_fixed)?;
    let cells: Vec<(f64, f64)> = n_e_grid
        .iter()
        .flat_map(|&ne| c_grid.iter().map(move |&c| (c, ne)))
        .collect();
    let results = crate::par::map(&cells, |&(c, ne)| cell_value(&sys, c, ne, quantity, filter_fwhm));
    let mut values = Vec::with_capacity(cells.len());
    let mut failures = Vec::new();
    for ((c, ne), r) in cells.iter().zip(results) {
        match r {
            Ok(v) => values.push(Some(v)),
            Err(e) => {
                failures.push(format!("C={c:e}, N_e={ne:e}: {e}"));
                values.push(None);
            }
        }
    }
    Ok(Landscape {
        quantity,
        suppression: s_fixed,
        filter_fwhm,
        c: c_grid.to_vec(),
        n_e: n_e_grid.to_vec(),
        values,
        failures,
    })
}

fn cell_value(sys: &SystemParams, c: f64, n_e: f64, quantity: LandscapeQuantity, fwhm: f64) -> Result<f64, NoiseError> {
    let cell = sys.with_microwave_occupancy(n_e)?;
    let drift = build_drift(&cell, cell.pump_photons_for(c));
    let filter = MeasurementFilter::new(0.0, fwhm)?;
    let n_out = band_noise(&cell, &drift, quantity.port(), &filter)?;
    match quantity {
        LandscapeQuantity::OutMicrowave | LandscapeQuantity::OutOptical => Ok(n_out),
        LandscapeQuantity::InputEo => {
            let eta = scattering(&drift, &cell, 0.0)?.s_eo().norm_sqr();
            equivalent_input_noise(n_out, eta)
        }
        LandscapeQuantity::InputOe => {
            let eta = scattering(&drift, &cell, 0.0)?.s_oe().norm_sqr();
            equivalent_input_noise(n_out, eta)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::mhz;
    use approx::assert_relative_eq;

    fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn no_pump_no_thermal_is_silent() {
        let sys = SystemParams::high_cooperativity();
        for port in Port::ALL {
            let sp = output_spectrum(&sys, 0.0, port, &grid(-mhz(50.0), mhz(50.0), 41)).unwrap();
            assert!(sp.s_out.iter().all(|&s| s.abs() < 1e-14));
        }
    }

    #[test]
    fn passive_microwave_matches_closed_form() {
        let mut sys = SystemParams::high_cooperativity();
        sys.microwave.n_bath = 0.37;
        sys.microwave.n_waveguide = 0.05;
        let w = grid(-mhz(60.0), mhz(60.0), 121);
        let sp = output_spectrum(&sys, 0.0, Port::Microwave, &w).unwrap();
        for (x, s) in w.iter().zip(&sp.s_out) {
            let expected = passive_spectrum(&sys.microwave, *x);
            assert!((s - expected).abs() <= 1e-12 * expected.max(1.0));
        }
    }

    #[test]
    fn passive_spectrum_limits() {
        let mw = ModeParams::new(1e10, 1e7, 1e7).with_occupancies(0.2, 0.0);
        assert_relative_eq!(passive_spectrum(&mw, 0.0), 0.2, max_relative = 1e-14);
        let mw2 = mw.with_occupancies(0.2, 0.03);
        assert!((passive_spectrum(&mw2, 1e15) - 0.03).abs() < 1e-12);
        let flat = mw.with_occupancies(0.4, 0.4);
        assert_relative_eq!(passive_spectrum(&flat, 3e7), 0.4, max_relative = 1e-14);
    }

    #[test]
    fn occupancy_examples() {
        let mw = ModeParams::from_linewidth(1e10, mhz(13.706), 0.408);
        assert_relative_eq!(occupancy(&mw.with_occupancies(0.3, 0.3)), 0.3, max_relative = 1e-14);
        assert_relative_eq!(occupancy(&mw.with_occupancies(0.05, 0.0)), 0.05 * (1.0 - 0.408), max_relative = 1e-12);
        assert!((occupancy(&mw.with_occupancies(0.05, 0.0)) - 0.0296).abs() < 1e-4);
    }

    #[test]
    fn flat_spectrum_gives_filter_area() {
        let f = MeasurementFilter::new(0.0, mhz(10.0)).unwrap();
        let w = grid(-mhz(40.0), mhz(40.0), 8001);
        let sp = NoiseSpectrum {
            port: Port::Microwave,
            s_out: vec![0.7; w.len()],
            omega: w,
        };
        let n = filtered_photon_number(&sp, &f).unwrap();
        let area = mhz(10.0) * (std::f64::consts::PI / 16f64.ln()).sqrt();
        assert_relative_eq!(n, 0.7 * area, max_relative = 1e-6);
        let n_fn = filtered_photon_number_fn(|_| Ok(0.7), &f, 1e-9).unwrap();
        assert_relative_eq!(n_fn, 0.7 * area, max_relative = 1e-9);
    }

    #[test]
    fn narrow_feature_at_center() {
        let f = MeasurementFilter::new(0.0, mhz(10.0)).unwrap();
        let w = grid(-mhz(40.0), mhz(40.0), 80001);
        let width = mhz(0.01);
        let s_out: Vec<f64> = w
            .iter()
            .map(|x| (-(x / width).powi(2) / 2.0).exp() / (width * (2.0 * std::f64::consts::PI).sqrt()))
            .collect();
        let sp = NoiseSpectrum { port: Port::Optical, omega: w, s_out };
        assert!((filtered_photon_number(&sp, &f).unwrap() - 1.0).abs() < 1e-5);
    }

    #[test]
    fn insufficient_coverage() {
        let f = MeasurementFilter::new(0.0, mhz(10.0)).unwrap();
        let sp = NoiseSpectrum {
            port: Port::Optical,
            omega: grid(-mhz(5.0), mhz(5.0), 11),
            s_out: vec![1.0; 11],
        };
        assert!(matches!(filtered_photon_number(&sp, &f), Err(NoiseError::Coverage { .. })));
        assert!(MeasurementFilter::new(0.0, 0.0).is_err());
    }

    #[test]
    fn passive_filtered_against_fine_trapezoid() {
        let mut sys = SystemParams::high_cooperativity();
        sys.microwave.n_bath = 0.1;
        let f = MeasurementFilter::new(0.0, mhz(10.0)).unwrap();
        let adaptive = filtered_photon_number_fn(|w| Ok(passive_spectrum(&sys.microwave, w)), &f, 1e-9).unwrap();
        // oracle: brute-force trapezoid on a very fine grid
        let w = grid(-12.0 * f.sigma(), 12.0 * f.sigma(), 400_001);
        let h = w[1] - w[0];
        let brute: f64 = w
            .iter()
            .enumerate()
            .map(|(k, &x)| {
                let wt = if k == 0 || k == w.len() - 1 { 0.5 } else { 1.0 };
                wt * h * f.weight(x) * passive_spectrum(&sys.microwave, x)
            })
            .sum();
        assert!((adaptive - brute).abs() / brute < 1e-6);
        let drift = build_drift(&sys, 0.0);
        let banded = band_noise(&sys, &drift, Port::Microwave, &f).unwrap();
        assert!((banded * f.equivalent_bandwidth() - brute).abs() / brute < 1e-6);
    }

    #[test]
    fn filter_is_linear() {
        let f = MeasurementFilter::new(mhz(1.0), mhz(10.0)).unwrap();
        let a = |w: f64| 1.0 / (1.0 + (w / mhz(5.0)).powi(2));
        let b = |w: f64| 0.3 + (w / mhz(20.0)).powi(2);
        let fa = filtered_photon_number_fn(|w| Ok(a(w)), &f, 1e-10).unwrap();
        let fb = filtered_photon_number_fn(|w| Ok(b(w)), &f, 1e-10).unwrap();
        let fab = filtered_photon_number_fn(|w| Ok(2.0 * a(w) - 3.0 * b(w)), &f, 1e-10).unwrap();
        assert!((fab - (2.0 * fa - 3.0 * fb)).abs() < 1e-8 * fab.abs().max(1.0) * 1e7);
    }

    #[test]
    fn input_noise_errors() {
        assert_eq!(equivalent_input_noise(0.0, 0.1).unwrap(), 0.0);
        assert!(matches!(equivalent_input_noise(1.0, 0.0), Err(NoiseError::ZeroEfficiency)));
    }

    #[test]
    fn amplified_vacuum_at_low_suppression() {
        // reduced suppression, cold microwave mode: noise appears during the pump
        let sys = SystemParams::high_cooperativity().with_suppression(0.82).unwrap();
        let p = operating_point(&sys, 0.38, 1e-6, mhz(10.0)).unwrap();
        let passive = operating_point(&sys, 0.0, 1e-6, mhz(10.0)).unwrap();
        assert!(p.n_out_e > passive.n_out_e + 0.05);
        assert!(p.n_out_o > 0.0);
    }

    #[test]
    fn perfect_suppression_no_noise() {
        let mut sys = SystemParams::high_cooperativity().with_suppression(0.5).unwrap();
        sys.j = (1e12 * sys.stokes.kappa() * sys.tm.kappa() / 4.0).sqrt();
        let p = operating_point(&sys, 0.5, 0.0, mhz(10.0)).unwrap();
        assert!(p.n_out_e.abs() < 1e-9, "{}", p.n_out_e);
        assert!(p.n_out_o.abs() < 1e-9, "{}", p.n_out_o);
    }

    #[test]
    fn landscape_zero_cooperativity_row_is_passive() {
        let base = SystemParams::high_cooperativity();
        let ne = [0.01, 0.1, 0.5];
        let l = landscape(&base, &[0.0, 0.38], &ne, 0.22, LandscapeQuantity::OutMicrowave, mhz(10.0)).unwrap();
        let f = MeasurementFilter::new(0.0, mhz(10.0)).unwrap();
        for (i, &n) in ne.iter().enumerate() {
            let sys = base.with_microwave_occupancy(n).unwrap();
            let passive = filtered_photon_number_fn(|w| Ok(passive_spectrum(&sys.microwave, w)), &f, 1e-9).unwrap()
                / f.equivalent_bandwidth();
            assert!((l.get(i, 0).unwrap() - passive).abs() < 1e-6 * passive);
        }
    }

    #[test]
    fn landscape_cooling_and_amplification() {
        let base = SystemParams::high_cooperativity();
        let l = landscape(&base, &[0.0, 0.38], &[1e-3, 1.0], 0.22, LandscapeQuantity::OutMicrowave, mhz(10.0)).unwrap();
        // cold: amplified vacuum raises the output
        assert!(l.get(0, 1).unwrap() > l.get(0, 0).unwrap());
        // hot: parametric cooling lowers it
        assert!(l.get(1, 1).unwrap() < l.get(1, 0).unwrap());
        assert!(l.failures.is_empty());
    }

    #[test]
    fn landscape_records_failures() {
        let mut base = SystemParams::high_cooperativity();
        base.microwave.n_waveguide = 0.5;
        let l = landscape(&base, &[0.1], &[0.01, 1.0], 0.22, LandscapeQuantity::OutOptical, mhz(10.0)).unwrap();
        assert!(l.get(0, 0).is_none());
        assert!(l.get(1, 0).is_some());
        assert_eq!(l.failures.len(), 1);
        assert!(landscape(&base, &[], &[0.1], 0.22, LandscapeQuantity::OutOptical, mhz(10.0)).is_err());
    }

    #[test]
    fn quantum_cooperativity_at_operating_point() {
        let sys = SystemParams::high_cooperativity().with_microwave_occupancy(0.035).unwrap();
        let co = sys.cooperativities(sys.pump_photons_for(0.38)).unwrap();
        assert!(co.c_q > 10.0);
    }
}
