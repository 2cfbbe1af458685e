//! Average model of the single-phase full-bridge AC/DC converter.
//!
//! The bridge is a pair of controlled sources tied by the modulation index
//! `m`: `v_in = m·v_dc` on the AC side and `I_o = m·i_s` on the DC side. The
//! AC loop is the filter inductor with its series resistance, the DC side is
//! the bus capacitor discharging into the equivalent load resistor.
//!
//! Note: the inductor resistance `r_l` and the design bus voltage
//! `v_dc_nom` are reconstructed defaults, not measured values. `v_dc_nom =
//! 500 V` is the value for which `0.1·v_dc/l_s` lands on the 100 krad/s loop
//! crossover of the shipped PR controller.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tf::ContinuousTf2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConverterParams {
    /// Apparent power rating (VA).
    pub s_rated: f64,
    /// Nominal grid RMS voltage (V).
    pub v_grid_rms: f64,
    /// Grid angular frequency (rad/s).
    pub omega0: f64,
    /// Switching and control frequency (Hz).
    pub f_sw: f64,
    /// Filter inductance (H).
    pub l_s: f64,
    /// Inductor series resistance (Ω).
    pub r_l: f64,
    /// DC-bus capacitance (F).
    pub c_dc: f64,
    /// DC equivalent load resistance (Ω).
    pub r_dc: f64,
    pub v_dc_min: f64,
    pub v_dc_max: f64,
    /// Bus voltage the inner loop was designed at (V).
    pub v_dc_nom: f64,
}

impl Default for ConverterParams {
    fn default() -> Self {
        Self {
            s_rated: 10_000.0,
            v_grid_rms: 240.0,
            omega0: 2.0 * PI * 60.0,
            f_sw: 72_000.0,
            l_s: 500e-6,
            r_l: 0.05,
            c_dc: 500e-6,
            r_dc: 60.0,
            v_dc_min: 340.0,
            v_dc_max: 800.0,
            v_dc_nom: 500.0,
        }
    }
}

impl ConverterParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("s_rated", self.s_rated),
            ("v_grid_rms", self.v_grid_rms),
            ("omega0", self.omega0),
            ("f_sw", self.f_sw),
            ("l_s", self.l_s),
            ("r_l", self.r_l),
            ("c_dc", self.c_dc),
            ("r_dc", self.r_dc),
            ("v_dc_min", self.v_dc_min),
            ("v_dc_max", self.v_dc_max),
            ("v_dc_nom", self.v_dc_nom),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::param(name, format!("must be positive and finite, got {value}")));
            }
        }
        if !(self.v_dc_min < self.v_dc_nom && self.v_dc_nom <= self.v_dc_max) {
            return Err(Error::param(
                "v_dc_nom",
                format!(
                    "need v_dc_min < v_dc_nom <= v_dc_max, got {} / {} / {}",
                    self.v_dc_min, self.v_dc_nom, self.v_dc_max
                ),
            ));
        }
        Ok(())
    }

    /// Control step (s).
    pub fn dt(&self) -> f64 {
        1.0 / self.f_sw
    }

    pub fn grid_frequency_hz(&self) -> f64 {
        self.omega0 / (2.0 * PI)
    }

    /// Control steps per grid cycle, rounded.
    pub fn steps_per_cycle(&self) -> usize {
        (self.f_sw / self.grid_frequency_hz()).round() as usize
    }
}

/// Continuous state of the average model.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConverterState {
    /// Grid (inductor) current, A.
    pub i_s: f64,
    /// DC-bus voltage, V.
    pub v_dc: f64,
    /// Simulation time, s.
    pub t: f64,
}

/// Modulation index after the `|m| ≤ 1` clamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Modulation {
    pub applied: f64,
    pub saturated: bool,
}

impl Modulation {
    pub fn clamp(m: f64) -> Self {
        let applied = m.clamp(-1.0, 1.0);
        Self { applied, saturated: applied != m }
    }
}

/// Instantaneous grid voltage `√2·v_rms·sin(ω0·t)`.
pub fn grid_voltage(t: f64, v_rms: f64, omega0: f64) -> f64 {
    SQRT_2 * v_rms * (omega0 * t).sin()
}

/// Plant `G_P(s) = −V_dc / (R_L + s·L_s)` from modulation index to grid
/// current, at a fixed bus voltage.
pub fn plant_tf(params: &ConverterParams, v_dc_design: f64) -> Result<ContinuousTf2> {
    if !(params.v_dc_min..=params.v_dc_max).contains(&v_dc_design) {
        return Err(Error::param(
            "v_dc_design",
            format!("{v_dc_design} V outside [{}, {}] V", params.v_dc_min, params.v_dc_max),
        ));
    }
    ContinuousTf2::new([0.0, 0.0, -v_dc_design], [0.0, params.l_s, params.r_l])
}

/// AC-side power `v_in·i_s` and DC-side power `v_dc·I_o` of the lossless
/// bridge, with `v_in = m·v_dc` and `I_o = m·i_s`.
pub fn bridge_powers(m: f64, i_s: f64, v_dc: f64) -> (f64, f64) {
    let v_in = m * v_dc;
    let i_o = m * i_s;
    (v_in * i_s, v_dc * i_o)
}

fn derivatives(p: &ConverterParams, m: f64, v_rms: f64, t: f64, i_s: f64, v_dc: f64) -> [f64; 2] {
    let v_s = grid_voltage(t, v_rms, p.omega0);
    let di = (-p.r_l * i_s + v_s - m * v_dc) / p.l_s;
    let dv = (m * i_s - v_dc / p.r_dc) / p.c_dc;
    [di, dv]
}

/// Classical four-stage explicit Runge–Kutta step for `x' = f(t, x)`.
pub(crate) fn rk4<const N: usize>(x: [f64; N], t: f64, dt: f64, f: impl Fn(f64, &[f64; N]) -> [f64; N]) -> [f64; N] {
    let add = |a: &[f64; N], k: &[f64; N], h: f64| {
        let mut out = *a;
        out.iter_mut().zip(k).for_each(|(o, k)| *o += h * k);
        out
    };
    let k1 = f(t, &x);
    let k2 = f(t + 0.5 * dt, &add(&x, &k1, 0.5 * dt));
    let k3 = f(t + 0.5 * dt, &add(&x, &k2, 0.5 * dt));
    let k4 = f(t + dt, &add(&x, &k3, dt));
    let mut out = x;
    for i in 0..N {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

fn check_step(state: &ConverterState, dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Integration { t: state.t, reason: format!("step {dt} s is not positive") });
    }
    if !(state.i_s.is_finite() && state.v_dc.is_finite() && state.t.is_finite()) {
        return Err(Error::Integration { t: state.t, reason: "non-finite state".into() });
    }
    Ok(())
}

/// Advances the coupled AC/DC equations one fixed RK4 step with `m` held
/// constant over the step. The grid source is evaluated internally at the
/// supplied RMS voltage. The bus voltage is floored at zero (the bridge
/// diodes clamp a reversed capacitor).
pub fn step_converter(
    state: &ConverterState,
    m: f64,
    v_rms: f64,
    dt: f64,
    params: &ConverterParams,
) -> Result<(ConverterState, Modulation)> {
    check_step(state, dt)?;
    let modulation = Modulation::clamp(m);
    let m = modulation.applied;
    let [i_s, v_dc] = rk4([state.i_s, state.v_dc], state.t, dt, |t, x| derivatives(params, m, v_rms, t, x[0], x[1]));
    let next = ConverterState { i_s, v_dc: v_dc.max(0.0), t: state.t + dt };
    if !(next.i_s.is_finite() && next.v_dc.is_finite()) {
        return Err(Error::Integration { t: state.t, reason: "state diverged".into() });
    }
    Ok((next, modulation))
}

/// Running energy integrals, advanced inside the same RK4 step as the state
/// so that the balance holds to integrator accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyLedger {
    /// ∫ v_s·i_s dt, J.
    pub grid_in: f64,
    /// ∫ i_s²·R_L dt, J.
    pub inductor_loss: f64,
    /// ∫ v_dc²/R_dc dt, J.
    pub load: f64,
}

/// Magnetic plus electric stored energy, J.
pub fn stored_energy(state: &ConverterState, params: &ConverterParams) -> f64 {
    0.5 * params.l_s * state.i_s.powi(2) + 0.5 * params.c_dc * state.v_dc.powi(2)
}

/// `step_converter` with the energy integrals carried along. No bus floor
/// is applied here, so the balance is exact up to truncation error.
pub fn step_converter_with_energy(
    state: &ConverterState,
    ledger: &EnergyLedger,
    m: f64,
    v_rms: f64,
    dt: f64,
    params: &ConverterParams,
) -> Result<(ConverterState, EnergyLedger)> {
    check_step(state, dt)?;
    let m = Modulation::clamp(m).applied;
    let x0 = [state.i_s, state.v_dc, ledger.grid_in, ledger.inductor_loss, ledger.load];
    let x = rk4(x0, state.t, dt, |t, x| {
        let [di, dv] = derivatives(params, m, v_rms, t, x[0], x[1]);
        let v_s = grid_voltage(t, v_rms, params.omega0);
        [di, dv, v_s * x[0], x[0] * x[0] * params.r_l, x[1] * x[1] / params.r_dc]
    });
    Ok((
        ConverterState { i_s: x[0], v_dc: x[1], t: state.t + dt },
        EnergyLedger { grid_in: x[2], inductor_loss: x[3], load: x[4] },
    ))
}
