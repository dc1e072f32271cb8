//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if a criterion fails that is not listed in `KNOWN_RED`.

use std::time::Instant;

use eo_transducer::calibration::{heterodyne_baseline, solve_betas, total_efficiency, Betas, FourPortMeasurement};
use eo_transducer::dynamics::{
    conversion_run, cw, integrate, pump_drive_for, rise_time_10_90, square_pulse, time_grid, ConversionOptions, Direction, DriveSet,
    IntegratorOptions, Method, ModeAmplitudes, Substeps,
};
use eo_transducer::fitting::{
    avoided_crossing_model, fit_avoided_crossing, fit_optical_dip_multi, fit_time_reflection, least_squares, optical_dip_model, reflected_power,
    LsqOptions, ReflectionPort, SplitModeKnown, TraceData,
};
use eo_transducer::noise::operating_point;
use eo_transducer::params::SystemParams;
use eo_transducer::steadystate::{build_drift, efficiency_closed_form, efficiency_numeric, efficiency_two_mode, scattering};
use eo_transducer::units::{mhz, TWO_PI};
use eo_transducer::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Criteria that cannot be met with the published parameters; they are run
/// and reported but do not fail the target.
const KNOWN_RED: &[u32] = &[8];

const FILTER_FWHM_HZ: f64 = 10.0;
const ETA_MEASURED: f64 = 0.114;
const S_OPERATING: f64 = 0.22;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

fn operating_system() -> SystemParams {
    SystemParams::high_cooperativity().with_suppression(S_OPERATING).unwrap()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let base = SystemParams::high_cooperativity();
    let mut worst: f64 = 0.0;
    for &c_j in &[0.1, 1.0, 1.0 / S_OPERATING - 1.0, 10.0] {
        let sys = base.with_suppression(1.0 / (1.0 + c_j)).unwrap();
        for &coop in &[0.01, 0.1, 0.38, 1.0] {
            let num = efficiency_numeric(&sys, sys.pump_photons_for(coop)).unwrap();
            let cf = efficiency_closed_form(coop, c_j, sys.microwave.eta(), sys.signal.eta(), sys.lambda_mm);
            worst = worst.max(rel(num, cf));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst < 1e-9 && secs < 1.0, format!("max rel err {worst:.2e} over 16 points, {secs:.3} s"))
}

fn criterion_2() -> Outcome {
    let base = SystemParams::high_cooperativity();
    let (ee, eo, l) = (base.microwave.eta(), base.signal.eta(), base.lambda_mm);
    let mut worst_inf: f64 = 0.0;
    let mut worst_zero: f64 = 0.0;
    for &coop in &[0.05, 0.38, 1.0, 3.0] {
        worst_inf = worst_inf.max(rel(efficiency_closed_form(coop, 1e9, ee, eo, l), efficiency_two_mode(coop, ee, eo, l)));
        let exact = 4.0 * l * l * ee * eo * coop;
        worst_zero = worst_zero.max(rel(efficiency_closed_form(coop, 0.0, ee, eo, l), exact));
        let mut sys = base.with_suppression(1.0).unwrap();
        sys.j = 0.0;
        let num = efficiency_numeric(&sys, sys.pump_photons_for(coop)).unwrap();
        worst_zero = worst_zero.max(rel(num, exact));
    }
    outcome(
        worst_inf < 1e-6 && worst_zero < 1e-12,
        format!("C_J->inf vs two-mode {worst_inf:.2e}; C_J=0 vs 4L^2 ee eo C {worst_zero:.2e} (closed form and matrix)"),
    )
}

fn criterion_3() -> Outcome {
    let sys = operating_system();
    let (ee, eo, l) = (sys.microwave.eta(), sys.signal.eta(), sys.lambda_mm);
    let c_j = 1.0 / S_OPERATING - 1.0;
    let at_038 = efficiency_closed_form(0.38, c_j, ee, eo, l);
    let series = [(0.20, 0.080), (0.24, 0.091), (0.30, 0.103), (0.38, 0.114)];
    let mut worst: f64 = 0.0;
    let mut cells = Vec::new();
    for (coop, measured) in series {
        let m = efficiency_closed_form(coop, c_j, ee, eo, l);
        worst = worst.max(rel(m, measured));
        cells.push(format!("{m:.4}/{measured}"));
    }
    outcome(
        (0.10..=0.15).contains(&at_038) && worst < 0.25,
        format!("eta(0.38) = {at_038:.4}; model/measured {}; worst {:.1}%", cells.join(" "), 100.0 * worst),
    )
}

fn criterion_4() -> Outcome {
    let sys = SystemParams::high_cooperativity();
    let n_p = sys.pump_photons_for(0.38);
    let fp = pump_drive_for(&sys, n_p).unwrap();
    let drift = build_drift(&sys, n_p);
    let mut worst: f64 = 0.0;
    let mut slowest: f64 = 0.0;
    for omega in [0.0, mhz(4.0), -mhz(7.0)] {
        let start = Instant::now();
        let t = time_grid(4e-6, 0.25e-9);
        let mut d = DriveSet::zeros(t.clone());
        d.f_pump = cw(&t, c(fp));
        d.f_mw = t.iter().map(|&x| Complex64::from_polar(1.0, -omega * x)).collect();
        let initial = ModeAmplitudes {
            a_p: c(n_p.sqrt()),
            ..Default::default()
        };
        let tr = integrate(&sys, &d, initial, &IntegratorOptions::default()).unwrap();
        let t_end = *t.last().unwrap();
        let got = tr.out_opt.last().unwrap() * Complex64::from_polar(1.0, omega * t_end);
        let expected = scattering(&drift, &sys, omega).unwrap().s_oe();
        worst = worst.max((got - expected).norm() / expected.norm());
        slowest = slowest.max(start.elapsed().as_secs_f64());
    }

    let order = |method: Method| {
        let n_p = sys.pump_photons_for(0.5);
        let fp = pump_drive_for(&sys, n_p).unwrap();
        let run = |dt: f64| {
            let t = time_grid(60e-9, dt);
            let mut d = DriveSet::zeros(t.clone());
            d.f_pump = cw(&t, c(fp));
            d.f_mw = cw(&t, c(1.0));
            let opts = IntegratorOptions {
                method,
                substeps: Substeps::Fixed(1),
            };
            let tr = integrate(&sys, &d, ModeAmplitudes::default(), &opts).unwrap();
            (*tr.out_opt.last().unwrap(), *tr.out_mw.last().unwrap())
        };
        let y: Vec<_> = [0.4e-9, 0.2e-9, 0.1e-9].iter().map(|&dt| run(dt)).collect();
        let diff = |a: (Complex64, Complex64), b: (Complex64, Complex64)| (a.0 - b.0).norm().max((a.1 - b.1).norm());
        (diff(y[0], y[1]) / diff(y[1], y[2])).log2()
    };
    let p_rk4 = order(Method::Rk4);
    let p_euler = order(Method::Euler);
    let pass = worst < 1e-6 && (p_rk4 - 4.0).abs() < 0.3 && (p_euler - 1.0).abs() < 0.2 && slowest < 10.0;
    outcome(
        pass,
        format!("CW vs scattering max rel err {worst:.2e}; observed order rk4 {p_rk4:.2}, euler {p_euler:.2}; slowest case {slowest:.2} s"),
    )
}

fn criterion_5() -> Outcome {
    let sys = SystemParams::low_cooperativity();
    let n_p = sys.pump_photons_for(3.4e-4);
    let fp = pump_drive_for(&sys, n_p).unwrap();
    let t = time_grid(1.2e-6, 0.5e-9);
    let pump = cw(&t, c(fp));
    let signal = square_pulse(&t, 100e-9, 800e-9, 0.0, c(1.0), 0.0);
    let opts = ConversionOptions {
        preload: true,
        ..Default::default()
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for dir in [Direction::MicrowaveToOptics, Direction::OpticsToMicrowave] {
        let run = conversion_run(&sys, &t, &pump, &signal, dir, &opts).unwrap();
        let k_end = t.iter().position(|&x| x >= 700e-9).unwrap();
        let rt = rise_time_10_90(&t[..k_end], &run.efficiency[..k_end]).unwrap();
        ok &= (rt / 85e-9 - 1.0).abs() <= 0.10;
        parts.push(format!("{} {:.1} ns", dir.name(), rt * 1e9));
    }
    outcome(ok, format!("10-90% rise {} (target 85 ns +/- 10%)", parts.join(", ")))
}

fn criterion_6() -> Outcome {
    let sys = SystemParams::high_cooperativity();
    let fp = pump_drive_for(&sys, sys.pump_photons_for(0.9)).unwrap();
    let t = time_grid(0.6e-6, 0.25e-9);
    let pump = square_pulse(&t, 200e-9, 300e-9, 2e-9, c(fp), 0.0);
    let signal = cw(&t, c(1.0));
    let opts = ConversionOptions {
        preload: true,
        ..Default::default()
    };
    let e2o = conversion_run(&sys, &t, &pump, &signal, Direction::MicrowaveToOptics, &opts).unwrap();
    let o2e = conversion_run(&sys, &t, &pump, &signal, Direction::OpticsToMicrowave, &opts).unwrap();
    let pass = e2o.peak > e2o.plateau && o2e.peak > o2e.plateau && (e2o.peak - 0.30).abs() <= 0.05;
    outcome(
        pass,
        format!(
            "e2o peak {:.3} plateau {:.3}; o2e peak {:.3} plateau {:.3}",
            e2o.peak, e2o.plateau, o2e.peak, o2e.plateau
        ),
    )
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64)).collect()
}

fn criterion_7() -> Outcome {
    let sys = operating_system();
    let fwhm = mhz(FILTER_FWHM_HZ);
    let grid = log_grid(1e-3, 1.0, 31);
    let diffs: Vec<f64> = grid
        .iter()
        .map(|&ne| operating_point(&sys, 0.38, ne, fwhm).unwrap().n_out_e - operating_point(&sys, 0.0, ne, fwhm).unwrap().n_out_e)
        .collect();
    let changes: Vec<usize> = (1..diffs.len()).filter(|&k| diffs[k].signum() != diffs[k - 1].signum()).collect();
    let pass = changes.len() == 1 && diffs[0] > 0.0 && *diffs.last().unwrap() < 0.0;
    let at = changes.first().map_or("none".to_string(), |&k| format!("between N_e {:.3} and {:.3}", grid[k - 1], grid[k]));
    outcome(
        pass,
        format!(
            "{} sign change(s), {at}; dN(N_e=1e-3) = {:+.3}, dN(N_e=1) = {:+.3}",
            changes.len(),
            diffs[0],
            diffs.last().unwrap()
        ),
    )
}

fn criterion_8() -> Outcome {
    let sys = operating_system();
    let fwhm = mhz(FILTER_FWHM_HZ);
    let n_in = |ne: f64| {
        let p = operating_point(&sys, 0.38, ne, fwhm).unwrap();
        (p.n_out_o / ETA_MEASURED, p.n_out_e / ETA_MEASURED)
    };
    // pick N_e so that N_in^eo lands on its reported value, then read N_in^oe
    let (mut lo, mut hi): (f64, f64) = (1e-4, 0.5);
    for _ in 0..60 {
        let mid = (lo * hi).sqrt();
        if n_in(mid).1 < 1.11 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let ne = (lo * hi).sqrt();
    let (oe, eo) = n_in(ne);
    let (oe_floor, _) = n_in(1e-4);
    let pass = (oe - 0.16).abs() <= 0.05 && (eo - 1.11).abs() <= 0.3;
    outcome(
        pass,
        format!("N_e = {ne:.4}: N_in_oe = {oe:.3} (target 0.16 +/- 0.05), N_in_eo = {eo:.3}; N_in_oe at N_e -> 0 is {oe_floor:.3}"),
    )
}

struct Rng(ChaCha8Rng, Normal<f64>);

impl Rng {
    fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed), Normal::new(0.0, 0.01).unwrap())
    }
    fn perturb(&mut self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| v * (1.0 + self.1.sample(&mut self.0))).collect()
    }
}

fn lin(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

fn worst_error(got: &[f64], truth: &[f64]) -> f64 {
    got.iter().zip(truth).map(|(g, t)| rel(*g, *t)).fold(0.0, f64::max)
}

fn roundtrip_decay(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let t = lin(0.0, 10.0, 200);
    let (a, tau) = (2.0, 3.0);
    let y = rng.perturb(&t.iter().map(|x| a * (-x / tau).exp()).collect::<Vec<_>>());
    let out = least_squares(
        |p: &[f64]| t.iter().zip(&y).map(|(x, v)| p[0] * (-x / p[1]).exp() - v).collect(),
        &[1.0, 1.0],
        None,
        &LsqOptions::default(),
    )
    .unwrap();
    worst_error(&out.x, &[a, tau])
}

fn roundtrip_dip(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let (k, lam) = (mhz(25.8), 0.78);
    let kin = 0.42 * k;
    let x = lin(-mhz(120.0), mhz(120.0), 601);
    let mut truth = vec![kin, lam];
    let traces: Vec<TraceData> = [0.25, 0.4, 0.58]
        .iter()
        .map(|&eta: &f64| {
            let kex = kin * eta / (1.0 - eta);
            truth.push(kex);
            let y: Vec<f64> = x.iter().map(|&w| optical_dip_model(w, 0.0, kin + kex, kex, lam)).collect();
            TraceData::new(x.clone(), rng.perturb(&y)).unwrap()
        })
        .collect();
    let r = fit_optical_dip_multi(&traces).unwrap();
    let got = ["kappa_in", "lambda", "kappa_ex_0", "kappa_ex_1", "kappa_ex_2"].map(|n| r.get(n).unwrap());
    worst_error(&got, &truth)
}

fn roundtrip_split(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let sys = SystemParams::high_cooperativity();
    let known = SplitModeKnown::from_system(&sys);
    let truth = [sys.j, sys.tm.kappa(), sys.stokes.delta, sys.tm.delta];
    let x = lin(-mhz(100.0), mhz(140.0), 1201);
    let y: Vec<f64> = x.iter().map(|&w| avoided_crossing_model(w, truth[0], truth[1], truth[2], truth[3], &known)).collect();
    let r = fit_avoided_crossing(&TraceData::new(x, rng.perturb(&y)).unwrap(), &known).unwrap();
    let got = ["j", "kappa_r", "delta_s", "delta_r"].map(|n| r.get(n).unwrap());
    worst_error(&got, &truth)
}

fn roundtrip_reflection(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let mw = SystemParams::high_cooperativity().microwave;
    let t = time_grid(1.0e-6, 1e-9);
    let pulse: Vec<f64> = square_pulse(&t, 100e-9, 600e-9, 10e-9, c(1.0), 0.0).iter().map(|z| z.norm_sqr()).collect();
    let drive: Vec<f64> = pulse.iter().map(|v| v.sqrt()).collect();
    let y = reflected_power(&t, &drive, mw.kappa(), mw.kappa_ex).unwrap();
    let r = fit_time_reflection(
        &TraceData::new(t.clone(), rng.perturb(&y)).unwrap(),
        &TraceData::new(t, rng.perturb(&pulse)).unwrap(),
        ReflectionPort::Microwave,
    )
    .unwrap();
    worst_error(&[r.get("kappa").unwrap(), r.get("kappa_ex").unwrap()], &[mw.kappa(), mw.kappa_ex])
}

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let seeds: Vec<u64> = (0..50).collect();
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let cases: [(&str, fn(u64) -> f64); 4] = [
        ("least_squares", roundtrip_decay),
        ("optical_dip", roundtrip_dip),
        ("avoided_crossing", roundtrip_split),
        ("time_reflection", roundtrip_reflection),
    ];
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, f) in cases {
        let errs: Vec<f64> = std::thread::scope(|s| {
            let handles: Vec<_> = seeds
                .chunks(seeds.len().div_ceil(threads))
                .map(|chunk| s.spawn(move || chunk.iter().map(|&k| f(1000 + k)).collect::<Vec<f64>>()))
                .collect();
            handles.into_iter().flat_map(|h| h.join().unwrap()).collect()
        });
        let worst = errs.iter().copied().fold(0.0, f64::max);
        pass &= worst < 0.02;
        parts.push(format!("{name} {:.2}%", 100.0 * worst));
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 60.0;
    outcome(pass, format!("worst error over 50 seeds: {}; {secs:.1} s", parts.join(", ")))
}

fn criterion_10() -> Outcome {
    let paper = Betas {
        beta1: -6.33,
        beta2: 18.63,
        beta3: -74.92,
        beta4: 81.75,
    };
    let m = FourPortMeasurement::synthesize(&paper, ETA_MEASURED);
    let eta = total_efficiency(&m).unwrap();
    let b = solve_betas(&m, eta).unwrap().betas;
    let err = [(b.beta1, paper.beta1), (b.beta2, paper.beta2), (b.beta3, paper.beta3)]
        .iter()
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let omega_o = TWO_PI * 193e12;
    let bw = 10e6;
    let p_baseline = 34.3 * eo_transducer::units::HBAR * omega_o * eo_transducer::units::db_to_linear(paper.beta2) * bw;
    let n_add = heterodyne_baseline(p_baseline, b.beta2, bw, omega_o).unwrap();
    outcome(
        err <= 0.01 && (n_add - 34.3).abs() <= 0.1,
        format!(
            "beta1 {:.2}, beta2 {:.2}, beta3 {:.2} dB (max dev {err:.1e}); n_add {n_add:.2}",
            b.beta1, b.beta2, b.beta3
        ),
    )
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "closed form equals matrix inversion", criterion_1),
        (2, "two-mode and maximum-gain limits", criterion_2),
        (3, "efficiency at the operating point", criterion_3),
        (4, "time domain agrees with frequency domain", criterion_4),
        (5, "converted pulse rise time", criterion_5),
        (6, "conversion overshoot", criterion_6),
        (7, "cooling/amplification crossover", criterion_7),
        (8, "input-referred added noise", criterion_8),
        (9, "fit round trips", criterion_9),
        (10, "four-port calibration", criterion_10),
    ];
    let mut unexpected = Vec::new();
    for (id, title, run) in criteria {
        let o = run();
        let tag = match (o.pass, KNOWN_RED.contains(&id)) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => {
                unexpected.push(id);
                "FAIL"
            }
        };
        println!("criterion {id:>2} {tag:<12} {title}: {}", o.detail);
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
