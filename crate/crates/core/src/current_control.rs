//! Proportional-resonant inner current loop.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::converter::{plant_tf, ConverterParams};
use crate::error::{Error, Result};
use crate::tf::{discretize_zoh, ContinuousTf2, DiscreteTf2};

/// Tuning of the PR compensator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrDesign {
    pub k_p: f64,
    pub k_i: f64,
    /// Resonance bandwidth (rad/s).
    pub omega_c: f64,
    /// Resonant frequency (rad/s).
    pub omega0: f64,
    /// Series gain applied to the whole compensator. Negative because the
    /// plant gain is negative.
    pub gain: f64,
}

impl Default for PrDesign {
    fn default() -> Self {
        Self {
            k_p: 1.0,
            k_i: 500.0,
            omega_c: 2.0 * std::f64::consts::PI,
            omega0: 2.0 * std::f64::consts::PI * 60.0,
            gain: -0.1,
        }
    }
}

impl PrDesign {
    pub fn continuous(&self) -> Result<ContinuousTf2> {
        pr_synthesize(self.k_p, self.k_i, self.omega_c, self.omega0, self.gain)
    }

    /// The compensator as run on the controller, discretized with a
    /// zero-order hold at `f_s`.
    pub fn discrete(&self, f_s: f64) -> Result<DiscreteTf2> {
        discretize_zoh(&self.continuous()?, f_s)
    }
}

/// `gain·[K_p + 2·K_i·ω_c·s / (s² + 2·ω_c·s + ω0²)]` as one rational
/// function.
///
/// The resonant term carries `s` in its numerator; at `s = jω0` it reduces
/// to exactly `K_i`.
pub fn pr_synthesize(k_p: f64, k_i: f64, omega_c: f64, omega0: f64, gain: f64) -> Result<ContinuousTf2> {
    if !(omega_c > 0.0 && omega_c.is_finite()) {
        return Err(Error::param("omega_c", format!("must be positive, got {omega_c}")));
    }
    if !(omega0 > 0.0 && omega0.is_finite()) {
        return Err(Error::param("omega0", format!("must be positive, got {omega0}")));
    }
    if !(k_p >= 0.0) {
        return Err(Error::param("k_p", format!("must be non-negative, got {k_p}")));
    }
    if !(k_i >= 0.0) {
        return Err(Error::param("k_i", format!("must be non-negative, got {k_i}")));
    }
    let w2 = omega0 * omega0;
    let num = [gain * k_p, gain * 2.0 * omega_c * (k_p + k_i), gain * k_p * w2];
    ContinuousTf2::new(num, [1.0, 2.0 * omega_c, w2])
}

/// Open loop `G_c(s)·G_P(s)` factors for analysis.
pub fn design_loop(design: &PrDesign, params: &ConverterParams, v_dc: f64) -> Result<[ContinuousTf2; 2]> {
    Ok([design.continuous()?, plant_tf(params, v_dc)?])
}

/// Runs the discretized PR compensator once per control step on the
/// current error `i_ref − i_s`.
///
/// The compensator was designed against the plant at `v_dc_design`; its
/// output is rescaled by `v_dc_design / v_dc` so the loop gain stays at
/// the designed value across the 340–800 V bus range (without it the
/// sampled loop loses stability above about 720 V).
#[derive(Debug, Clone)]
pub struct CurrentController {
    filter: DiscreteTf2,
    v_dc_design: f64,
    v_dc_floor: f64,
}

impl CurrentController {
    pub fn new(design: &PrDesign, params: &ConverterParams) -> Result<Self> {
        Ok(Self {
            filter: design.discrete(params.f_sw)?,
            v_dc_design: params.v_dc_nom,
            v_dc_floor: 0.5 * params.v_dc_min,
        })
    }

    pub fn filter(&self) -> &DiscreteTf2 {
        &self.filter
    }

    /// Modulation command (before the `|m| ≤ 1` clamp).
    pub fn update(&mut self, error: f64, v_dc: f64) -> f64 {
        let u = self.filter.step(error);
        u * self.v_dc_design / v_dc.max(self.v_dc_floor)
    }

    pub fn reset(&mut self) {
        self.filter.reset();
    }

    /// Warm start in sinusoidal steady state at `omega`: the filter output
    /// (before the bus-voltage scaling) has been `Im(u·e^{jωt})` at the
    /// midpoint of each of the last two steps before `t0`, driven by the
    /// matching error sinusoid.
    pub fn prime_sinusoid(&mut self, u: Complex64, omega: f64, t0: f64) {
        let dt = 1.0 / self.filter.sample_rate();
        let g = self.filter.eval_z(Complex64::from_polar(1.0, omega * dt));
        let e = u * Complex64::from_polar(1.0, 0.5 * omega * dt) / g;
        let at = |p: Complex64, t: f64| (p * Complex64::from_polar(1.0, omega * t)).im;
        let t1 = t0 - dt;
        let t2 = t0 - 2.0 * dt;
        self.filter.prime_history([at(e, t1), at(e, t2)], [at(u, t1 + 0.5 * dt), at(u, t2 + 0.5 * dt)]);
    }

    pub fn v_dc_design(&self) -> f64 {
        self.v_dc_design
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use num_complex::Complex64;

    #[test]
    fn default_controller_coefficients() {
        let g = PrDesign::default().continuous().unwrap();
        let expect_num = [-0.1, -629.6, -1.421e4];
        let expect_den = [1.0, 12.57, 1.421e5];
        for (got, want) in g.num.iter().zip(expect_num) {
            assert_relative_eq!(*got, want, max_relative = 5e-4);
        }
        for (got, want) in g.den.iter().zip(expect_den) {
            assert_relative_eq!(*got, want, max_relative = 5e-4);
        }
    }

    #[test]
    fn zero_integral_gain_is_pure_proportional() {
        let w0 = 2.0 * std::f64::consts::PI * 60.0;
        let g = pr_synthesize(1.0, 0.0, 2.0 * std::f64::consts::PI, w0, 1.0).unwrap();
        for w in [0.0, 10.0, w0, 1e4] {
            let h = g.eval(Complex64::new(0.0, w));
            assert_relative_eq!(h.re, 1.0, epsilon = 1e-12);
            assert!(h.im.abs() < 1e-12);
        }
    }

    #[test]
    fn resonance_gain_is_gain_times_kp_plus_ki() {
        let d = PrDesign::default();
        let g = d.continuous().unwrap();
        let h = g.eval(Complex64::new(0.0, d.omega0));
        assert_relative_eq!(h.norm(), 50.1, max_relative = 1e-12);
    }

    #[test]
    fn nonpositive_frequencies_rejected() {
        assert!(pr_synthesize(1.0, 1.0, 0.0, 10.0, 1.0).is_err());
        assert!(pr_synthesize(1.0, 1.0, 1.0, -10.0, 1.0).is_err());
        assert!(pr_synthesize(-1.0, 1.0, 1.0, 10.0, 1.0).is_err());
    }

    #[test]
    fn normalization_scales_with_bus() {
        let p = ConverterParams::default();
        let mut a = CurrentController::new(&PrDesign::default(), &p).unwrap();
        let mut b = a.clone();
        let ua = a.update(1.0, 500.0);
        let ub = b.update(1.0, 1000.0);
        assert_relative_eq!(ua, -0.1, max_relative = 1e-12);
        assert_relative_eq!(ub, -0.05, max_relative = 1e-12);
    }
}
