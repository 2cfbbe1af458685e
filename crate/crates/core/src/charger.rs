//! The charger as seen by the grid: a full waveform-level (EMT) model of
//! converter plus controllers, and a first-order power-envelope stand-in
//! with the same interface.

use std::f64::consts::SQRT_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::converter::{grid_voltage, step_converter, ConverterParams, ConverterState};
use crate::current_control::{CurrentController, PrDesign};
use crate::error::{Error, Result};
use crate::measurement::{LowPass, PqMeter, RmsMeter};
use crate::outer::{OuterCommand, OuterLoopGains, OuterLoops, OuterMeasurements};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fidelity {
    Emt,
    Envelope,
}

impl std::str::FromStr for Fidelity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "emt" => Ok(Fidelity::Emt),
            "envelope" => Ok(Fidelity::Envelope),
            other => Err(Error::Config(format!("unknown fidelity `{other}` (expected emt or envelope)"))),
        }
    }
}

/// Everything needed to build a charger controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    pub pr: PrDesign,
    pub outer: OuterLoopGains,
    /// Cutoff of the power and bus-voltage measurement filters, Hz.
    pub lpf_hz: f64,
    /// Consecutive saturated control steps tolerated before a fault.
    pub saturation_fault_steps: usize,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self { pr: PrDesign::default(), outer: OuterLoopGains::default(), lpf_hz: 20.0, saturation_fault_steps: 2400 }
    }
}

/// One control-step record of the EMT model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FastSample {
    pub t: f64,
    pub v_s: f64,
    pub i_s: f64,
    pub i_ref: f64,
    pub v_dc: f64,
    pub m: f64,
    pub p: f64,
    pub q: f64,
}

/// Converter, inner PR loop, measurement chain and outer loops stepped
/// together at the control rate.
#[derive(Debug, Clone)]
pub struct EmtCharger {
    params: ConverterParams,
    control: ControlConfig,
    state: ConverterState,
    t0: f64,
    steps: u64,
    inner: CurrentController,
    pq: PqMeter,
    vdc_lpf: LowPass,
    vdc_filt: f64,
    rms: RmsMeter,
    outer: OuterLoops,
    outer_every: u64,
    command: OuterCommand,
    p_ref: f64,
    q_ref: f64,
    saturated_run: usize,
}

impl EmtCharger {
    /// Builds the charger already in steady state at `(p_ref, q_ref)` on a
    /// grid of `v_rms` volts, at time `t0`.
    pub fn new(
        params: ConverterParams,
        control: ControlConfig,
        p_ref: f64,
        q_ref: f64,
        v_rms: f64,
        t0: f64,
    ) -> Result<Self> {
        params.validate()?;
        let f0 = params.grid_frequency_hz();
        let outer_every = (params.f_sw / control.outer.rate_hz).round();
        if outer_every < 1.0 {
            return Err(Error::param("rate_hz", "outer rate exceeds the control rate"));
        }
        let mut outer = OuterLoops::new(&control.outer, &params)?;
        let meas = OuterMeasurements {
            p: p_ref,
            q: q_ref,
            v_dc: (p_ref.max(0.0) * params.r_dc).sqrt().clamp(params.v_dc_min, params.v_dc_max),
            v_rms,
        };
        let command = outer.update(&meas, p_ref, q_ref, &params)?;
        outer.set_integrators([0.0; 3]);

        let mut rms = RmsMeter::new(params.steps_per_cycle())?;
        rms.set(v_rms);
        let mut pq = PqMeter::new(params.f_sw, f0, control.lpf_hz)?;
        let dt = params.dt();
        let (w, theta, i_pk) = (params.omega0, command.theta, SQRT_2 * command.i_amp);
        pq.prime(
            |k| grid_voltage(t0 - k as f64 * dt, v_rms, w),
            |k| i_pk * (w * (t0 - k as f64 * dt) + theta).sin(),
            p_ref,
            q_ref,
        );
        let mut vdc_lpf = LowPass::new(control.lpf_hz, params.f_sw)?;
        vdc_lpf.prime(meas.v_dc);

        let state = ConverterState { i_s: i_pk * (w * t0 + theta).sin(), v_dc: meas.v_dc, t: t0 };
        let mut inner = CurrentController::new(&control.pr, &params)?;
        // Bridge voltage that sustains the reference current, as the
        // controller output before bus-voltage scaling.
        let i_phasor = Complex64::from_polar(i_pk, theta);
        let v_in = Complex64::new(SQRT_2 * v_rms, 0.0) - Complex64::new(params.r_l, w * params.l_s) * i_phasor;
        inner.prime_sinusoid(v_in / inner.v_dc_design(), w, t0);
        Ok(Self {
            inner,
            params,
            control,
            state,
            t0,
            steps: 0,
            pq,
            vdc_lpf,
            vdc_filt: meas.v_dc,
            rms,
            outer,
            outer_every: outer_every as u64,
            command,
            p_ref,
            q_ref,
            saturated_run: 0,
        })
    }

    pub fn params(&self) -> &ConverterParams {
        &self.params
    }

    pub fn state(&self) -> &ConverterState {
        &self.state
    }

    pub fn time(&self) -> f64 {
        self.state.t
    }

    pub fn set_setpoint(&mut self, p_ref: f64, q_ref: f64) {
        self.p_ref = p_ref;
        self.q_ref = q_ref;
    }

    pub fn setpoint(&self) -> (f64, f64) {
        (self.p_ref, self.q_ref)
    }

    pub fn command(&self) -> OuterCommand {
        self.command
    }

    pub fn outer(&self) -> &OuterLoops {
        &self.outer
    }

    /// Latest filtered (P, Q).
    pub fn power(&self) -> (f64, f64) {
        let m = self.pq.last();
        (m.p_filt, m.q_filt)
    }

    /// Latest completed one-cycle RMS of the terminal voltage.
    pub fn terminal_rms(&self) -> Option<f64> {
        self.rms.value()
    }

    /// One control step against a grid of RMS voltage `v_rms`.
    pub fn step(&mut self, v_rms: f64) -> Result<FastSample> {
        let p = &self.params;
        let t = self.state.t;
        let v_s = grid_voltage(t, v_rms, p.omega0);
        let i_s = self.state.i_s;
        let v_dc = self.state.v_dc;

        let meas = self.pq.push(v_s, i_s);
        self.vdc_filt = self.vdc_lpf.step(v_dc);
        self.rms.push(v_s);

        if self.steps % self.outer_every == 0 {
            let m = OuterMeasurements {
                p: meas.p_filt,
                q: meas.q_filt,
                v_dc: self.vdc_filt,
                v_rms: self.rms.value().unwrap_or(v_rms),
            };
            self.command = self.outer.update(&m, self.p_ref, self.q_ref, p).map_err(|e| match e {
                Error::ControllerFault { reason, .. } => Error::ControllerFault { t, reason },
                other => other,
            })?;
        }

        let i_ref = SQRT_2 * self.command.i_amp * (p.omega0 * t + self.command.theta).sin();
        let m_cmd = self.inner.update(i_ref - i_s, v_dc);
        if !m_cmd.is_finite() {
            return Err(Error::ControllerFault { t, reason: "non-finite modulation command".into() });
        }
        let (mut next, modulation) = step_converter(&self.state, m_cmd, v_rms, p.dt(), p)?;
        self.steps += 1;
        next.t = self.t0 + self.steps as f64 * p.dt();
        self.state = next;

        if modulation.saturated {
            self.saturated_run += 1;
            if self.saturated_run > self.control.saturation_fault_steps {
                return Err(Error::ControllerFault {
                    t,
                    reason: format!(
                        "modulation saturated for {} consecutive steps (v_dc = {:.1} V)",
                        self.saturated_run, v_dc
                    ),
                });
            }
        } else {
            self.saturated_run = 0;
        }

        Ok(FastSample { t, v_s, i_s, i_ref, v_dc, m: modulation.applied, p: meas.p_filt, q: meas.q_filt })
    }
}

/// Delivered power follows the command through a first-order lag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeCharger {
    pub p: f64,
    pub q: f64,
    pub tau: f64,
}

impl EnvelopeCharger {
    pub const DEFAULT_TAU: f64 = 0.2;

    pub fn new(p: f64, q: f64, tau: f64) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::param("tau", format!("must be positive, got {tau}")));
        }
        Ok(Self { p, q, tau })
    }

    /// Exact response of the lag over `dt` to a held command.
    pub fn macro_step(&mut self, p_ref: f64, q_ref: f64, dt: f64) -> (f64, f64) {
        let decay = (-dt / self.tau).exp();
        self.p = p_ref + (self.p - p_ref) * decay;
        self.q = q_ref + (self.q - q_ref) * decay;
        (self.p, self.q)
    }
}

/// Charger at either fidelity, stepped in macro steps by the orchestrator.
#[derive(Debug, Clone)]
pub enum Charger {
    Emt(Box<EmtCharger>),
    Envelope(EnvelopeCharger),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacroOutput {
    pub p: f64,
    pub q: f64,
}

impl Charger {
    pub fn fidelity(&self) -> Fidelity {
        match self {
            Charger::Emt(_) => Fidelity::Emt,
            Charger::Envelope(_) => Fidelity::Envelope,
        }
    }

    /// Advances `dt_macro` seconds at terminal voltage `node_v_rms` and
    /// returns the delivered (P, Q). In EMT mode this is the filtered power
    /// averaged over the last grid cycle of the macro step.
    pub fn macro_step(&mut self, node_v_rms: f64, p_ref: f64, q_ref: f64, dt_macro: f64) -> Result<MacroOutput> {
        if !(dt_macro > 0.0) {
            return Err(Error::param("dt_macro", format!("must be positive, got {dt_macro}")));
        }
        match self {
            Charger::Envelope(env) => {
                let (p, q) = env.macro_step(p_ref, q_ref, dt_macro);
                Ok(MacroOutput { p, q })
            }
            Charger::Emt(emt) => {
                emt.set_setpoint(p_ref, q_ref);
                let steps = (dt_macro * emt.params().f_sw).round() as usize;
                let cycle = emt.params().steps_per_cycle().min(steps);
                let (mut p_sum, mut q_sum) = (0.0, 0.0);
                for k in 0..steps {
                    let s = emt.step(node_v_rms)?;
                    if k >= steps - cycle {
                        p_sum += s.p;
                        q_sum += s.q;
                    }
                }
                Ok(MacroOutput { p: p_sum / cycle as f64, q: q_sum / cycle as f64 })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn envelope_fixed_point_and_step() {
        let mut c = Charger::Envelope(EnvelopeCharger::new(10_000.0, 0.0, 0.2).unwrap());
        let out = c.macro_step(240.0, 10_000.0, 0.0, 1.0).unwrap();
        assert_eq!(out.p, 10_000.0);
        let out = c.macro_step(240.0, 5_000.0, 0.0, 1.0).unwrap();
        assert_relative_eq!(out.p, 5_000.0 + 5_000.0 * (-5.0f64).exp(), epsilon = 1e-9);
        assert_relative_eq!(out.p, 5033.69, epsilon = 0.01);
    }

    #[test]
    fn fidelity_parse() {
        assert_eq!("emt".parse::<Fidelity>().unwrap(), Fidelity::Emt);
        assert!("fast".parse::<Fidelity>().is_err());
    }

    #[test]
    fn emt_holds_rated_operation() {
        let p = ConverterParams::default();
        let mut c = EmtCharger::new(p, ControlConfig::default(), 10_000.0, 0.0, 240.0, 0.0).unwrap();
        let mut worst: f64 = 0.0;
        for _ in 0..(0.5 * p.f_sw) as usize {
            let s = c.step(240.0).unwrap();
            worst = worst.max((s.i_s - s.i_ref).abs());
        }
        let (pw, q) = c.power();
        assert!((pw - 10_000.0).abs() < 200.0, "p = {pw}");
        assert!(q.abs() < 200.0, "q = {q}");
        assert!(worst < 5.0, "worst tracking error {worst}");
    }
}
