//! Independent reference computations shared by the integration and
//! acceptance tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vhil_core::aimd::{AimdBranch, AimdConfig, AimdState};
use vhil_core::converter::{
    grid_voltage, plant_tf, step_converter, step_converter_with_energy, stored_energy, ConverterParams, ConverterState,
    EnergyLedger,
};
use vhil_core::grid::{FeederModel, Node, NodeKind};
use vhil_core::measurement::{current_reference, PqMeter};
use vhil_core::scenario::{ScenarioConfig, ScenarioKind};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Straight-line reading of the algorithm on a 1 Hz trace: at every
/// positive multiple of 60 s the threshold becomes the minimum of the
/// samples from the last 60 s (inclusive); at every multiple of 10 s the
/// command grows by 100 W if the present sample is strictly above the
/// threshold and halves otherwise, then is clamped to [0, 10000] W. No
/// decision changes the command before the first threshold exists.
pub fn aimd_reference(trace: &[f64]) -> Vec<f64> {
    let mut p: f64 = 10_000.0;
    let mut th: Option<f64> = None;
    let mut out = Vec::with_capacity(trace.len());
    for t in 0..trace.len() {
        if t >= 60 && t % 60 == 0 {
            let mut m = f64::INFINITY;
            for &v in &trace[t - 60..=t] {
                if v < m {
                    m = v;
                }
            }
            th = Some(m);
        }
        if t % 10 == 0 {
            if let Some(th) = th {
                if trace[t] > th {
                    p += 100.0;
                } else {
                    p *= 0.5;
                }
                if p > 10_000.0 {
                    p = 10_000.0;
                }
                if p < 0.0 {
                    p = 0.0;
                }
            }
        }
        out.push(p);
    }
    out
}

pub fn aimd_run(trace: &[f64]) -> (Vec<f64>, Vec<AimdBranch>) {
    let mut s = AimdState::new(AimdConfig::default()).unwrap();
    let mut p = Vec::with_capacity(trace.len());
    let mut b = Vec::with_capacity(trace.len());
    for (t, &v) in trace.iter().enumerate() {
        let tick = s.tick(v, t as f64).unwrap();
        p.push(tick.p_cmd);
        b.push(tick.branch);
    }
    (p, b)
}

pub const TEN_MINUTES: usize = 601;

pub fn scripted_traces() -> Vec<(&'static str, Vec<f64>)> {
    let n = TEN_MINUTES;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut walk = Vec::with_capacity(n);
    let mut v = 230.0;
    for _ in 0..n {
        v += rng.random_range(-0.3..0.3);
        walk.push(v);
    }
    vec![
        ("constant", vec![240.0; n]),
        ("rising", (0..n).map(|t| 225.0 + 0.01 * t as f64).collect()),
        ("falling", (0..n).map(|t| 232.0 - 0.01 * t as f64).collect()),
        ("sine", (0..n).map(|t| 229.0 + 1.5 * (t as f64 / 47.0).sin()).collect()),
        ("random walk", walk),
        // Coarse steps make the present sample equal the window minimum.
        ("staircase", (0..n).map(|t| 228.0 + ((t / 20) % 3) as f64 * 0.5).collect()),
        // Dip just before the first threshold, then high.
        ("dip then high", (0..n).map(|t| if (50..=60).contains(&t) { 226.0 } else { 231.0 }).collect()),
    ]
}

/// Two-bus receiving voltage from the quartic in |V2|, taking the
/// high-voltage root, then the angle from `V1·V2* = |V2|² + Z·S*`.
pub fn two_bus_closed_form(v1: f64, z: Complex64, s: Complex64) -> Complex64 {
    let b = 2.0 * (s.re * z.re + s.im * z.im) - v1 * v1;
    let cc = s.norm_sqr() * z.norm_sqr();
    let x = (-b + (b * b - 4.0 * cc).sqrt()) / 2.0;
    ((x + z * s.conj()) / v1).conj()
}

/// Newton on the per-node KCL residuals with a finite-difference
/// Jacobian. Unknowns are Re/Im of every non-slack voltage.
pub fn newton_solve(model: &FeederModel, loads_pu: &[Complex64], slack: f64) -> Vec<Complex64> {
    let n = model.len();
    let unpack = |x: &DVector<f64>| {
        let mut v = vec![c(slack, 0.0); n];
        for i in 1..n {
            v[i] = c(x[2 * (i - 1)], x[2 * (i - 1) + 1]);
        }
        v
    };
    let residual = |x: &DVector<f64>| {
        let v = unpack(x);
        let branch: Vec<Complex64> = (0..n)
            .map(|i| match model.parent(i) {
                Some(p) => (v[p] / model.tap(i) - v[i]) / model.z_pu(i),
                None => c(0.0, 0.0),
            })
            .collect();
        let mut r = DVector::zeros(2 * (n - 1));
        for i in 1..n {
            let out: Complex64 = model.children(i).iter().map(|&k| branch[k] / model.tap(k)).sum();
            let kcl = branch[i] - out - (loads_pu[i] / v[i]).conj();
            r[2 * (i - 1)] = kcl.re;
            r[2 * (i - 1) + 1] = kcl.im;
        }
        r
    };
    let mut x = DVector::zeros(2 * (n - 1));
    let mut flat = vec![c(slack, 0.0); n];
    for i in 1..n {
        flat[i] = flat[model.parent(i).unwrap()] / model.tap(i);
        x[2 * (i - 1)] = flat[i].re;
        x[2 * (i - 1) + 1] = flat[i].im;
    }
    for _ in 0..50 {
        let r = residual(&x);
        if r.amax() < 1e-13 {
            break;
        }
        let m = x.len();
        let mut jac = DMatrix::zeros(m, m);
        let h = 1e-7;
        for k in 0..m {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            jac.set_column(k, &((residual(&xp) - residual(&xm)) / (2.0 * h)));
        }
        x += jac.lu().solve(&(-r)).expect("nonsingular Jacobian");
    }
    unpack(&x)
}

/// Energy balance residual `∫v_s·i_s − ΔE − ∫i²R_L − ∫v_dc²/R_dc` and the
/// energy scale it is measured against.
pub fn energy_residual(dt: f64, t_end: f64, m_of_t: impl Fn(f64) -> f64) -> (f64, f64) {
    let p = ConverterParams::default();
    let mut s = ConverterState { i_s: 0.0, v_dc: 500.0, t: 0.0 };
    let mut ledger = EnergyLedger::default();
    let e0 = stored_energy(&s, &p);
    for _ in 0..(t_end / dt).round() as usize {
        let m = m_of_t(s.t);
        (s, ledger) = step_converter_with_energy(&s, &ledger, m, 240.0, dt, &p).unwrap();
    }
    let de = stored_energy(&s, &p) - e0;
    let residual = ledger.grid_in - de - ledger.inductor_loss - ledger.load;
    (residual, ledger.grid_in.abs().max(ledger.load.abs()))
}

/// Relative energy residual at the switching rate over 0.2 s of rated
/// operation.
pub fn energy_balance_rated() -> f64 {
    let w = 2.0 * PI * 60.0;
    let (res, scale) = energy_residual(1.0 / 72_000.0, 0.2, |t| 0.66 * (w * t - 0.05).sin());
    (res / scale).abs()
}

/// Residual ratio for a halving of the step from 0.5 ms.
pub fn energy_order_ratio() -> f64 {
    let coarse = energy_residual(1.0 / 2_000.0, 0.05, |_| 0.02).0.abs();
    let fine = energy_residual(1.0 / 4_000.0, 0.05, |_| 0.02).0.abs();
    coarse / fine
}

fn phasor(samples: &[(f64, f64)], w: f64) -> Complex64 {
    let n = samples.len() as f64;
    samples.iter().map(|&(t, x)| x * Complex64::from_polar(1.0, -w * t)).sum::<Complex64>() * (2.0 / n)
}

/// Measured small-signal `i_s/m` at `w` against the plant model, as
/// `|H_meas/H − 1|`, with the bus pinned at 500 V.
pub fn plant_response_error(w: f64) -> f64 {
    let p = ConverterParams { c_dc: 1e6, r_dc: 1e9, ..Default::default() };
    let v_dc = 500.0;
    let g = plant_tf(&ConverterParams::default(), v_dc).unwrap();
    let m0 = 0.01;
    let period = 2.0 * PI / w;
    let dt = period / 1000.0;
    let settle_steps = ((0.1f64).max(3.0 * period) / dt).ceil() as usize;
    let steps = 4_000;
    let mut s = ConverterState { i_s: 0.0, v_dc, t: 0.0 };
    let mut ms = Vec::with_capacity(steps);
    let mut is = Vec::with_capacity(steps);
    for k in 0..settle_steps + steps {
        // m sampled mid-step so the hold adds no phase lag
        let t_mid = s.t + 0.5 * dt;
        let m = m0 * (w * t_mid).sin();
        s = step_converter(&s, m, 0.0, dt, &p).unwrap().0;
        if k >= settle_steps {
            ms.push((t_mid, m));
            is.push((s.t, s.i_s));
        }
    }
    let measured = phasor(&is, w) / phasor(&ms, w);
    (measured / g.eval(c(0.0, w)) - 1.0).norm()
}

pub const PLANT_TEST_FREQS: [f64; 7] = [1e2, 3e2, 1e3, 3e3, 1e4, 3e4, 1e5];

/// Feeds the ideal reference current and the grid voltage through the
/// power meter for one second. Returns the filtered (P, Q) at the end and
/// the worst raw error of each once the delay line is full.
pub fn pq_round_trip(p_ref: f64, q_ref: f64, v_rms: f64) -> (f64, f64, f64, f64) {
    let f_s = 72_000.0;
    let w0 = 2.0 * PI * 60.0;
    let mut meter = PqMeter::new(f_s, 60.0, 20.0).unwrap();
    let (mut p_raw_worst, mut q_raw_worst) = (0.0f64, 0.0f64);
    let mut last = Default::default();
    for k in 0..f_s as usize {
        let t = k as f64 / f_s;
        let v = grid_voltage(t, v_rms, w0);
        let i = current_reference(p_ref, q_ref, v_rms, w0, t).unwrap();
        last = meter.push(v, i);
        if k >= 300 {
            p_raw_worst = p_raw_worst.max((last.p_raw - p_ref).abs());
            q_raw_worst = q_raw_worst.max((last.q_raw - q_ref).abs());
        }
    }
    (last.p_filt, last.q_filt, p_raw_worst, q_raw_worst)
}

/// Largest relative setpoint error over θ ∈ {0, ±45°, ±(90° − 1°)} at
/// 10 kVA, on 240 V and 226 V grids. Unity power factor Q is judged
/// against the apparent power.
pub fn pq_round_trip_worst() -> f64 {
    let s = 10_000.0;
    let eps = 1.0f64.to_radians();
    let mut worst: f64 = 0.0;
    for theta in [0.0, PI / 4.0, -PI / 4.0, PI / 2.0 - eps, -(PI / 2.0 - eps)] {
        let (p_ref, q_ref) = (s * theta.cos(), s * theta.sin());
        for v_rms in [240.0, 226.0] {
            let (p, q, p_raw, q_raw) = pq_round_trip(p_ref, q_ref, v_rms);
            let q_scale = if q_ref == 0.0 { s } else { q_ref.abs() };
            worst = worst
                .max((p - p_ref).abs() / p_ref.abs())
                .max(p_raw / p_ref.abs())
                .max((q - q_ref).abs() / q_scale)
                .max(q_raw / q_scale);
        }
    }
    worst
}

/// Demand at the instant of highest total house load, plus the charger
/// at rated power.
pub fn peak_loads(model: &FeederModel) -> Vec<Complex64> {
    let cfg = ScenarioConfig::for_kind(ScenarioKind::GridBaseline).resolve().unwrap();
    let profiles = cfg.load_profiles(model).unwrap();
    let (t0, t1) = profiles.span();
    let mut t_peak = t0;
    let mut best = f64::NEG_INFINITY;
    let mut t = t0;
    while t <= t1 {
        let total = profiles.total_at(t).unwrap();
        if total > best {
            best = total;
            t_peak = t;
        }
        t += 1.0;
    }
    let mut loads = profiles.loads_at(t_peak).unwrap();
    loads[model.charger().unwrap()] += c(10_000.0, 0.0);
    loads
}

/// A random radial feeder of 2 to 6 buses on a unit base with off-nominal
/// taps, and random loads in per unit.
pub fn random_feeder(rng: &mut impl Rng) -> (FeederModel, Vec<Complex64>) {
    let n = rng.random_range(2..=6);
    let mut nodes = vec![Node::new("b0", None, 1.0, c(0.0, 0.0), NodeKind::Slack)];
    let mut loads = vec![c(0.0, 0.0)];
    for i in 1..n {
        let p = rng.random_range(0..i);
        let z = c(rng.random_range(0.001..0.05), rng.random_range(0.001..0.05));
        let mut node = Node::new(&format!("b{i}"), Some(&format!("b{p}")), 1.0, z, NodeKind::Primary);
        node.ratio = rng.random_range(0.95..1.05);
        nodes.push(node);
        loads.push(c(rng.random_range(0.0..0.3), rng.random_range(-0.1..0.1)));
    }
    (FeederModel::new(nodes, 1.0).unwrap(), loads)
}
