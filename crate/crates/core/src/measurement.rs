//! Single-phase power measurement and current reference generation.
//!
//! Power is measured with the quarter-cycle-delay form of p-q theory: the
//! measured signal is the α component, the same signal delayed by a quarter
//! of a grid period is the β component, and
//!
//! ```text
//! P = ½·(vα·iα + vβ·iβ)
//! Q = ½·(vα·iβ − vβ·iα)
//! ```
//!
//! With this sign choice a current leading the voltage gives positive Q,
//! which is the same sense as the `+θ` phase of the current reference.

use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};
use crate::tf::{discretize_tustin, ContinuousTf2, DiscreteTf2};

/// Ring buffer delaying its input by exactly a quarter grid period.
/// Returns zeros until it has been filled once.
#[derive(Debug, Clone)]
pub struct QuadratureDelayLine {
    buf: Vec<f64>,
    idx: usize,
}

impl QuadratureDelayLine {
    pub fn new(f_s: f64, f_0: f64) -> Result<Self> {
        if !(f_s > 0.0 && f_0 > 0.0) {
            return Err(Error::param("f_s", "sample and grid frequencies must be positive"));
        }
        let exact = f_s / (4.0 * f_0);
        let n = exact.round();
        if n < 1.0 || (exact - n).abs() > 1e-9 * exact {
            return Err(Error::param(
                "f_s",
                format!("{f_s} Hz is not a multiple of four grid cycles per second at {f_0} Hz"),
            ));
        }
        Ok(Self { buf: vec![0.0; n as usize], idx: 0 })
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    /// Pushes `x` and returns the sample from `len()` pushes ago.
    pub fn delay(&mut self, x: f64) -> f64 {
        let out = std::mem::replace(&mut self.buf[self.idx], x);
        self.idx = (self.idx + 1) % self.buf.len();
        out
    }

    /// Fills the line with a known history: `f(k)` is the sample pushed `k`
    /// steps ago, for `k = 1..=len()`.
    pub fn prefill(&mut self, f: impl Fn(usize) -> f64) {
        let n = self.buf.len();
        for k in 0..n {
            self.buf[(self.idx + k) % n] = f(n - k);
        }
    }
}

/// Instantaneous (P, Q) from the α/β voltage and current components.
pub fn compute_pq(v_a: f64, v_b: f64, i_a: f64, i_b: f64) -> (f64, f64) {
    (0.5 * (v_a * i_a + v_b * i_b), 0.5 * (v_a * i_b - v_b * i_a))
}

/// First-order low-pass `1/(1 + s/ω_c)` discretized with Tustin; unity DC
/// gain.
#[derive(Debug, Clone)]
pub struct LowPass {
    filter: DiscreteTf2,
}

impl LowPass {
    pub fn new(cutoff_hz: f64, f_s: f64) -> Result<Self> {
        if !(cutoff_hz > 0.0) {
            return Err(Error::param("cutoff_hz", format!("must be positive, got {cutoff_hz}")));
        }
        let wc = 2.0 * PI * cutoff_hz;
        let tf = ContinuousTf2::new([0.0, 0.0, 1.0], [0.0, 1.0 / wc, 1.0])?;
        Ok(Self { filter: discretize_tustin(&tf, f_s)? })
    }

    pub fn step(&mut self, x: f64) -> f64 {
        self.filter.step(x)
    }

    /// Starts the filter settled at `x`.
    pub fn prime(&mut self, x: f64) {
        self.filter.prime(x);
    }

    pub fn filter(&self) -> &DiscreteTf2 {
        &self.filter
    }
}

/// The 20 Hz measurement filter used on the power channels.
pub fn lowpass_20hz(f_s: f64) -> Result<LowPass> {
    LowPass::new(20.0, f_s)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PqMeasurement {
    pub p_raw: f64,
    pub q_raw: f64,
    pub p_filt: f64,
    pub q_filt: f64,
}

/// Delay lines, product terms and low-pass filters of the power channel.
#[derive(Debug, Clone)]
pub struct PqMeter {
    v_delay: QuadratureDelayLine,
    i_delay: QuadratureDelayLine,
    p_lpf: LowPass,
    q_lpf: LowPass,
    last: PqMeasurement,
}

impl PqMeter {
    pub fn new(f_s: f64, f_0: f64, cutoff_hz: f64) -> Result<Self> {
        Ok(Self {
            v_delay: QuadratureDelayLine::new(f_s, f_0)?,
            i_delay: QuadratureDelayLine::new(f_s, f_0)?,
            p_lpf: LowPass::new(cutoff_hz, f_s)?,
            q_lpf: LowPass::new(cutoff_hz, f_s)?,
            last: PqMeasurement::default(),
        })
    }

    pub fn push(&mut self, v: f64, i: f64) -> PqMeasurement {
        let v_b = self.v_delay.delay(v);
        let i_b = self.i_delay.delay(i);
        let (p_raw, q_raw) = compute_pq(v, v_b, i, i_b);
        self.last = PqMeasurement { p_raw, q_raw, p_filt: self.p_lpf.step(p_raw), q_filt: self.q_lpf.step(q_raw) };
        self.last
    }

    pub fn last(&self) -> PqMeasurement {
        self.last
    }

    /// Warm start: fills both delay lines with the history of the given
    /// waveforms and settles the filters at `(p, q)`.
    pub fn prime(&mut self, v_hist: impl Fn(usize) -> f64, i_hist: impl Fn(usize) -> f64, p: f64, q: f64) {
        self.v_delay.prefill(v_hist);
        self.i_delay.prefill(i_hist);
        self.p_lpf.prime(p);
        self.q_lpf.prime(q);
        self.last = PqMeasurement { p_raw: p, q_raw: q, p_filt: p, q_filt: q };
    }
}

/// Amplitude and phase of the grid current needed for a (P, Q) setpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceSetpoint {
    pub p_ref: f64,
    pub q_ref: f64,
    /// RMS current amplitude, A.
    pub i_rms: f64,
    /// Current phase relative to the grid voltage, rad.
    pub theta: f64,
}

impl ReferenceSetpoint {
    /// `θ = atan(Q/P)`, `I = P / (V·cos θ)`.
    pub fn new(p_ref: f64, q_ref: f64, v_rms: f64) -> Result<Self> {
        if !(p_ref > 0.0) {
            return Err(Error::UnsupportedQuadrant { p_ref });
        }
        if !(v_rms > 0.0) {
            return Err(Error::SingularVoltage(v_rms));
        }
        let theta = (q_ref / p_ref).atan();
        let i_rms = p_ref / (v_rms * theta.cos());
        Ok(Self { p_ref, q_ref, i_rms, theta })
    }

    pub fn apparent_power(&self) -> f64 {
        self.p_ref.hypot(self.q_ref)
    }

    pub fn check_rating(&self, s_rated: f64) -> Result<()> {
        let s = self.apparent_power();
        if s > s_rated * (1.0 + 1e-9) {
            return Err(Error::param(
                "q_ref",
                format!("setpoint apparent power {s:.1} VA exceeds rating {s_rated:.1} VA"),
            ));
        }
        Ok(())
    }

    /// `√2·I·sin(ω0·t + θ)`.
    pub fn sample(&self, omega0: f64, t: f64) -> f64 {
        SQRT_2 * self.i_rms * (omega0 * t + self.theta).sin()
    }
}

/// Instantaneous current reference for a (P, Q) setpoint.
pub fn current_reference(p_ref: f64, q_ref: f64, v_rms: f64, omega0: f64, t: f64) -> Result<f64> {
    Ok(ReferenceSetpoint::new(p_ref, q_ref, v_rms)?.sample(omega0, t))
}

/// Block RMS over one fundamental period, published once per period.
#[derive(Debug, Clone)]
pub struct RmsMeter {
    window: usize,
    count: usize,
    sum_sq: f64,
    value: Option<f64>,
}

impl RmsMeter {
    pub fn new(window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::param("window", "RMS window must hold at least one sample"));
        }
        Ok(Self { window, count: 0, sum_sq: 0.0, value: None })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Returns `Some(rms)` on the sample that completes a window.
    pub fn push(&mut self, x: f64) -> Option<f64> {
        self.sum_sq += x * x;
        self.count += 1;
        if self.count == self.window {
            let rms = (self.sum_sq / self.window as f64).sqrt();
            self.value = Some(rms);
            self.count = 0;
            self.sum_sq = 0.0;
            return Some(rms);
        }
        None
    }

    /// Latest completed reading; `None` until the first window is full.
    pub fn value(&self) -> Option<f64> {
        self.value
    }

    pub fn set(&mut self, rms: f64) {
        self.value = Some(rms);
    }
}

/// RMS of a whole slice.
pub fn rms_meter(window: &[f64]) -> Option<f64> {
    if window.is_empty() {
        return None;
    }
    Some((window.iter().map(|x| x * x).sum::<f64>() / window.len() as f64).sqrt())
}
