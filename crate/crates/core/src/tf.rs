//! Second-order rational transfer functions in continuous and discrete time,
//! discretization (Tustin and zero-order hold), pointwise frequency response
//! and loop stability margins.
//!
//! Both containers hold coefficients in descending powers: `[x2, x1, x0]`
//! for `x2·s² + x1·s + x0` (or `z`). Lower-order systems simply carry
//! leading zeros.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// `(b2 s² + b1 s + b0) / (a2 s² + a1 s + a0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuousTf2 {
    pub num: [f64; 3],
    pub den: [f64; 3],
}

impl ContinuousTf2 {
    /// Builds the function, normalizing to `a2 = 1` when the denominator is
    /// second order.
    pub fn new(num: [f64; 3], den: [f64; 3]) -> Result<Self> {
        if num.iter().chain(den.iter()).any(|c| !c.is_finite()) {
            return Err(Error::param("tf", "non-finite coefficient"));
        }
        if den.iter().all(|&c| c == 0.0) {
            return Err(Error::param("tf", "denominator is identically zero"));
        }
        let mut tf = Self { num, den };
        if den[0] != 0.0 {
            let a2 = den[0];
            tf.num.iter_mut().for_each(|c| *c /= a2);
            tf.den.iter_mut().for_each(|c| *c /= a2);
        }
        Ok(tf)
    }

    pub fn constant(k: f64) -> Self {
        Self { num: [0.0, 0.0, k], den: [0.0, 0.0, 1.0] }
    }

    pub fn den_order(&self) -> usize {
        leading_order(&self.den)
    }

    pub fn num_order(&self) -> usize {
        leading_order(&self.num)
    }

    pub fn is_proper(&self) -> bool {
        self.num.iter().all(|&c| c == 0.0) || self.num_order() <= self.den_order()
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        poly(&self.num, s) / poly(&self.den, s)
    }
}

/// Discrete filter `(b2 z² + b1 z + b0) / (z² + a1 z + a0)` with its
/// Direct-Form-II-transposed run state.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteTf2 {
    num: [f64; 3],
    den: [f64; 3],
    state: [f64; 2],
    f_s: f64,
}

impl DiscreteTf2 {
    /// Normalizes so that the `z²` denominator coefficient is exactly 1.
    pub fn new(num: [f64; 3], den: [f64; 3], f_s: f64) -> Result<Self> {
        if !(f_s > 0.0 && f_s.is_finite()) {
            return Err(Error::param("f_s", format!("sample rate must be positive, got {f_s}")));
        }
        if num.iter().chain(den.iter()).any(|c| !c.is_finite()) {
            return Err(Error::param("tf", "non-finite coefficient"));
        }
        let a0 = den[0];
        if a0 == 0.0 {
            return Err(Error::Discretization("leading denominator coefficient is zero".into()));
        }
        Ok(Self { num: num.map(|c| c / a0), den: den.map(|c| c / a0), state: [0.0; 2], f_s })
    }

    pub fn num(&self) -> [f64; 3] {
        self.num
    }

    pub fn den(&self) -> [f64; 3] {
        self.den
    }

    pub fn sample_rate(&self) -> f64 {
        self.f_s
    }

    pub fn registers(&self) -> [f64; 2] {
        self.state
    }

    pub fn reset(&mut self) {
        self.state = [0.0; 2];
    }

    pub fn eval_z(&self, z: Complex64) -> Complex64 {
        poly(&self.num, z) / poly(&self.den, z)
    }

    /// `G(z = 1)`.
    pub fn dc_gain(&self) -> f64 {
        self.num.iter().sum::<f64>() / self.den.iter().sum::<f64>()
    }

    /// One Direct-Form-II-transposed update.
    pub fn step(&mut self, x: f64) -> f64 {
        let [b0, b1, b2] = self.num;
        let [_, a1, a2] = self.den;
        let y = b0 * x + self.state[0];
        self.state[0] = b1 * x - a1 * y + self.state[1];
        self.state[1] = b2 * x - a2 * y;
        y
    }

    /// Sets the registers so that a constant input `x` produces the
    /// constant output `dc_gain()·x` from the next step on.
    pub fn prime(&mut self, x: f64) {
        let [_, b1, b2] = self.num;
        let [_, a1, a2] = self.den;
        let y = self.dc_gain() * x;
        self.state[1] = b2 * x - a2 * y;
        self.state[0] = b1 * x - a1 * y + self.state[1];
    }

    /// Sets the registers from the last two inputs and outputs (index 0
    /// is the most recent), as if the filter had produced them.
    pub fn prime_history(&mut self, x: [f64; 2], y: [f64; 2]) {
        let [_, b1, b2] = self.num;
        let [_, a1, a2] = self.den;
        self.state[1] = b2 * x[0] - a2 * y[0];
        self.state[0] = b1 * x[0] - a1 * y[0] + b2 * x[1] - a2 * y[1];
    }
}

fn leading_order(c: &[f64; 3]) -> usize {
    match c.iter().position(|&x| x != 0.0) {
        Some(0) => 2,
        Some(1) => 1,
        _ => 0,
    }
}

fn poly(c: &[f64; 3], x: Complex64) -> Complex64 {
    (x * c[0] + c[1]) * x + c[2]
}

/// Bilinear substitution `s = 2 f_s (z − 1)/(z + 1)`, no prewarping.
pub fn discretize_tustin(tf: &ContinuousTf2, f_s: f64) -> Result<DiscreteTf2> {
    if !(f_s > 0.0 && f_s.is_finite()) {
        return Err(Error::param("f_s", format!("sample rate must be positive, got {f_s}")));
    }
    if !tf.is_proper() {
        return Err(Error::Discretization("transfer function is improper".into()));
    }
    let k = 2.0 * f_s;
    match tf.den_order() {
        2 => {
            let map = |c: &[f64; 3]| {
                let (c2, c1, c0) = (c[0] * k * k, c[1] * k, c[2]);
                [c2 + c1 + c0, 2.0 * (c0 - c2), c2 - c1 + c0]
            };
            let den = map(&tf.den);
            if den[0].abs() < f64::EPSILON * den.iter().map(|c| c.abs()).sum::<f64>() {
                return Err(Error::Discretization("denominator degenerates at z = ∞".into()));
            }
            DiscreteTf2::new(map(&tf.num), den, f_s)
        }
        1 => {
            // (c1 z + c0) / (d1 z + d0), stored with a zero z⁰ tail
            let map = |c: &[f64; 3]| [c[1] * k + c[2], c[2] - c[1] * k];
            let n = map(&tf.num);
            let d = map(&tf.den);
            if d[0] == 0.0 {
                return Err(Error::Discretization("denominator degenerates at z = ∞".into()));
            }
            DiscreteTf2::new([n[0], n[1], 0.0], [d[0], d[1], 0.0], f_s)
        }
        _ => DiscreteTf2::new([tf.num[2] / tf.den[2], 0.0, 0.0], [1.0, 0.0, 0.0], f_s),
    }
}

/// Step-invariant (zero-order-hold) discretization, exact for piecewise
/// constant inputs.
pub fn discretize_zoh(tf: &ContinuousTf2, f_s: f64) -> Result<DiscreteTf2> {
    if !(f_s > 0.0 && f_s.is_finite()) {
        return Err(Error::param("f_s", format!("sample rate must be positive, got {f_s}")));
    }
    if !tf.is_proper() {
        return Err(Error::Discretization("transfer function is improper".into()));
    }
    let t = 1.0 / f_s;
    match tf.den_order() {
        2 => {
            let a2 = tf.den[0];
            let [b2, b1, b0] = tf.num.map(|c| c / a2);
            let [_, a1, a0] = tf.den.map(|c| c / a2);
            let d = b2;
            let c = [b0 - d * a0, b1 - d * a1];
            // controllable canonical form, augmented with the held input
            let m = [[0.0, t, 0.0], [-a0 * t, -a1 * t, t], [0.0, 0.0, 0.0]];
            let e = expm3(m);
            let phi = [[e[0][0], e[0][1]], [e[1][0], e[1][1]]];
            let gamma = [e[0][2], e[1][2]];
            let tr = phi[0][0] + phi[1][1];
            let det = phi[0][0] * phi[1][1] - phi[0][1] * phi[1][0];
            let den = [1.0, -tr, det];
            let n1 = c[0] * gamma[0] + c[1] * gamma[1];
            let n0 = c[0] * (-phi[1][1] * gamma[0] + phi[0][1] * gamma[1])
                + c[1] * (phi[1][0] * gamma[0] - phi[0][0] * gamma[1]);
            let num = [d, n1 + d * den[1], n0 + d * den[2]];
            if !num.iter().chain(den.iter()).all(|x| x.is_finite()) {
                return Err(Error::Discretization("matrix exponential overflowed".into()));
            }
            DiscreteTf2::new(num, den, f_s)
        }
        1 => {
            let a1 = tf.den[1];
            let (b1, b0, a0) = (tf.num[1] / a1, tf.num[2] / a1, tf.den[2] / a1);
            let d = b1;
            let c = b0 - d * a0;
            let phi = (-a0 * t).exp();
            let gamma = if a0 == 0.0 { t } else { (1.0 - phi) / a0 };
            DiscreteTf2::new([d, c * gamma - d * phi, 0.0], [1.0, -phi, 0.0], f_s)
        }
        _ => DiscreteTf2::new([tf.num[2] / tf.den[2], 0.0, 0.0], [1.0, 0.0, 0.0], f_s),
    }
}

/// Matrix exponential of a 3×3 matrix by scaling and squaring with a
/// truncated Taylor series.
fn expm3(a: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let norm = a.iter().map(|row| row.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
    let mut squarings = 0;
    let mut scale = 1.0;
    while norm * scale > 0.25 {
        scale *= 0.5;
        squarings += 1;
    }
    let a = a.map(|row| row.map(|x| x * scale));
    let mut result = identity3();
    let mut term = identity3();
    for k in 1..=18 {
        term = matmul3(&term, &a).map(|row| row.map(|x| x / k as f64));
        for i in 0..3 {
            for j in 0..3 {
                result[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..squarings {
        result = matmul3(&result, &result);
    }
    result
}

fn identity3() -> [[f64; 3]; 3] {
    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
}

fn matmul3(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

/// Anything that can be evaluated on the imaginary axis (or unit circle).
pub trait FrequencyResponse {
    /// Complex response at angular frequency `omega` (rad/s).
    fn response(&self, omega: f64) -> Complex64;
}

impl FrequencyResponse for ContinuousTf2 {
    fn response(&self, omega: f64) -> Complex64 {
        self.eval(Complex64::new(0.0, omega))
    }
}

impl FrequencyResponse for DiscreteTf2 {
    fn response(&self, omega: f64) -> Complex64 {
        self.eval_z(Complex64::from_polar(1.0, omega / self.f_s))
    }
}

/// Series connection: the product of the factors.
impl<T: FrequencyResponse> FrequencyResponse for [T] {
    fn response(&self, omega: f64) -> Complex64 {
        self.iter().map(|f| f.response(omega)).product()
    }
}

impl<T: FrequencyResponse, const N: usize> FrequencyResponse for [T; N] {
    fn response(&self, omega: f64) -> Complex64 {
        self.as_slice().response(omega)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodePoint {
    pub omega: f64,
    pub mag_db: f64,
    pub phase_deg: f64,
}

/// Pointwise response at each `omegas` entry. Phase is unwrapped along the
/// supplied order, so pass a sorted, reasonably dense grid.
pub fn freq_response<F: FrequencyResponse + ?Sized>(tf: &F, omegas: &[f64]) -> Vec<BodePoint> {
    let mut out = Vec::with_capacity(omegas.len());
    let mut prev: Option<f64> = None;
    for &omega in omegas {
        let h = tf.response(omega);
        let mut phase = h.arg().to_degrees();
        if let Some(p) = prev {
            phase += 360.0 * ((p - phase) / 360.0).round();
        }
        prev = Some(phase);
        out.push(BodePoint { omega, mag_db: 20.0 * h.norm().log10(), phase_deg: phase });
    }
    out
}

/// `n` log-spaced points between `lo` and `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2 && lo > 0.0 && hi > lo);
    let (a, b) = (lo.log10(), hi.log10());
    (0..n).map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Margins {
    /// Gain margin in dB; `None` when the phase never reaches −180°.
    pub gain_margin_db: Option<f64>,
    /// Frequency of the phase crossover used for the gain margin.
    pub phase_crossover: Option<f64>,
    pub phase_margin_deg: f64,
    /// Highest unity-gain crossover frequency (rad/s).
    pub crossover: f64,
}

const MARGIN_GRID_LO: f64 = 1e-2;
const MARGIN_GRID_HI: f64 = 1e9;
const MARGIN_POINTS_PER_DECADE: usize = 500;

/// Gain and phase margins of an open loop, from a dense log grid with
/// bisection refinement of each crossing.
pub fn stability_margins<F: FrequencyResponse + ?Sized>(open_loop: &F) -> Result<Margins> {
    let decades = (MARGIN_GRID_HI / MARGIN_GRID_LO).log10();
    let n = (decades * MARGIN_POINTS_PER_DECADE as f64) as usize + 1;
    let grid = log_space(MARGIN_GRID_LO, MARGIN_GRID_HI, n);
    let bode = freq_response(open_loop, &grid);

    let mag = |w: f64| open_loop.response(w).norm();
    let mut crossover = None;
    for pair in bode.windows(2).rev() {
        if (pair[0].mag_db >= 0.0) != (pair[1].mag_db >= 0.0) {
            let w = bisect_log(pair[0].omega, pair[1].omega, |w| mag(w).ln());
            let ref_phase = pair[0].phase_deg;
            crossover = Some((w, ref_phase));
            break;
        }
    }
    let (crossover, ref_phase) = crossover.ok_or_else(|| Error::Margins("loop gain never crosses 0 dB".into()))?;
    let phase = align_phase(open_loop.response(crossover).arg().to_degrees(), ref_phase);
    let phase_margin_deg = 180.0 + phase - 360.0 * ((180.0 + phase) / 360.0 + 0.5).floor();

    let mut best: Option<(f64, f64)> = None;
    for pair in bode.windows(2) {
        let k0 = ((pair[0].phase_deg + 180.0) / 360.0).floor();
        let k1 = ((pair[1].phase_deg + 180.0) / 360.0).floor();
        if k0 != k1 {
            let target = 360.0 * k0.max(k1) - 180.0;
            let p0 = pair[0].phase_deg;
            let w = bisect_log(pair[0].omega, pair[1].omega, |w| {
                align_phase(open_loop.response(w).arg().to_degrees(), p0) - target
            });
            let gm = -20.0 * mag(w).log10();
            if best.is_none_or(|(g, _)| gm.abs() < g.abs()) {
                best = Some((gm, w));
            }
        }
    }
    Ok(Margins { gain_margin_db: best.map(|b| b.0), phase_crossover: best.map(|b| b.1), phase_margin_deg, crossover })
}

fn align_phase(phase: f64, reference: f64) -> f64 {
    phase + 360.0 * ((reference - phase) / 360.0).round()
}

/// Root of `f` between `lo` and `hi`, bisecting in log-frequency.
fn bisect_log(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let fa = f(lo);
    let sign_a = fa >= 0.0;
    for _ in 0..80 {
        let mid = 0.5 * (a + b);
        if (f(mid.exp()) >= 0.0) == sign_a {
            a = mid;
        } else {
            b = mid;
        }
    }
    (0.5 * (a + b)).exp()
}

/// Angular frequency of a sample rate's Nyquist limit.
pub fn nyquist(f_s: f64) -> f64 {
    PI * f_s
}
