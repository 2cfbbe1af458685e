//! Outer power and bus-voltage loops.
//!
//! Three PI controllers run at the outer rate:
//!
//! * the P loop trims the DC-bus voltage reference, because real power is
//!   delivered by raising or lowering the bus voltage across the load
//!   resistor (`P ≈ v_dc²/R_dc`);
//! * the V loop trims the RMS current amplitude to hold the bus at that
//!   reference;
//! * the Q loop trims the phase of the current reference.
//!
//! Each loop acts on top of a static feedforward: the bus voltage that
//! dissipates `p_ref` in the load, and the amplitude and phase given by the
//! current-reference equations. The P and Q loops take power errors in per
//! unit of the converter rating; the P loop output is in per unit of the
//! design bus voltage. The V loop works in volts and amperes.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::converter::ConverterParams;
use crate::error::{Error, Result};
use crate::measurement::ReferenceSetpoint;

/// PI controller with output clamp and conditional-integration anti-windup.
#[derive(Debug, Clone, PartialEq)]
pub struct PiController {
    pub k_p: f64,
    pub k_i: f64,
    integrator: f64,
    u_min: f64,
    u_max: f64,
    dt: f64,
}

impl PiController {
    pub fn new(k_p: f64, k_i: f64, u_min: f64, u_max: f64, dt: f64) -> Result<Self> {
        if !(u_min < u_max) {
            return Err(Error::param("u_min", format!("need u_min < u_max, got {u_min} / {u_max}")));
        }
        if !(dt > 0.0) {
            return Err(Error::param("dt", format!("must be positive, got {dt}")));
        }
        Ok(Self { k_p, k_i, integrator: 0.0, u_min, u_max, dt })
    }

    pub fn integrator(&self) -> f64 {
        self.integrator
    }

    pub fn set_integrator(&mut self, value: f64) {
        self.integrator = value.clamp(self.u_min, self.u_max);
    }

    pub fn limits(&self) -> (f64, f64) {
        (self.u_min, self.u_max)
    }

    /// Moves the clamp. A collapsed interval pins the output at `u_min`.
    pub fn set_limits(&mut self, u_min: f64, u_max: f64) {
        self.u_min = u_min;
        self.u_max = u_max.max(u_min);
        self.integrator = self.integrator.clamp(self.u_min, self.u_max);
    }

    pub fn step(&mut self, err: f64) -> f64 {
        self.step_dt(err, self.dt)
    }

    /// `u = clamp(k_p·err + integrator)`, where the integrator first takes
    /// `k_i·err·dt` unless that would push an already saturated output
    /// further into its rail.
    pub fn step_dt(&mut self, err: f64, dt: f64) -> f64 {
        let candidate = self.integrator + self.k_i * err * dt;
        let unclamped = self.k_p * err + candidate;
        let winding_up = (unclamped > self.u_max && err > 0.0) || (unclamped < self.u_min && err < 0.0);
        if !winding_up {
            self.integrator = candidate;
        }
        (self.k_p * err + self.integrator).clamp(self.u_min, self.u_max)
    }
}

/// Free function form of [`PiController::step_dt`].
pub fn pi_step(pi: &mut PiController, err: f64, dt: f64) -> f64 {
    pi.step_dt(err, dt)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OuterLoopGains {
    pub p_kp: f64,
    pub p_ki: f64,
    pub v_kp: f64,
    pub v_ki: f64,
    pub q_kp: f64,
    pub q_ki: f64,
    /// Outer update rate, Hz.
    pub rate_hz: f64,
    /// Phase command limit, rad.
    pub theta_max: f64,
}

impl Default for OuterLoopGains {
    fn default() -> Self {
        Self {
            p_kp: 2.5,
            p_ki: 2.5,
            v_kp: 0.1,
            v_ki: 20.0,
            q_kp: 0.1,
            q_ki: 20.0,
            rate_hz: 1000.0,
            theta_max: PI / 3.0,
        }
    }
}

/// Filtered quantities consumed by the outer loops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterMeasurements {
    pub p: f64,
    pub q: f64,
    pub v_dc: f64,
    /// Grid RMS voltage at the charger terminals.
    pub v_rms: f64,
}

/// Inner-loop reference: `√2·i_amp·sin(ω0·t + theta)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OuterCommand {
    /// RMS amplitude, A.
    pub i_amp: f64,
    pub theta: f64,
}

#[derive(Debug, Clone)]
pub struct OuterLoops {
    p_pi: PiController,
    v_pi: PiController,
    q_pi: PiController,
    theta_max: f64,
    v_dc_ref: f64,
    command: OuterCommand,
    faulted: bool,
}

impl OuterLoops {
    pub fn new(gains: &OuterLoopGains, params: &ConverterParams) -> Result<Self> {
        if !(gains.rate_hz > 0.0) {
            return Err(Error::param("rate_hz", "outer loop rate must be positive"));
        }
        if !(gains.theta_max > 0.0 && gains.theta_max < PI / 2.0) {
            return Err(Error::param("theta_max", "phase limit must lie in (0, π/2)"));
        }
        let dt = 1.0 / gains.rate_hz;
        Ok(Self {
            p_pi: PiController::new(gains.p_kp, gains.p_ki, -1.0, 1.0, dt)?,
            v_pi: PiController::new(gains.v_kp, gains.v_ki, -1.0, 1.0, dt)?,
            q_pi: PiController::new(gains.q_kp, gains.q_ki, -1.0, 1.0, dt)?,
            theta_max: gains.theta_max,
            v_dc_ref: params.v_dc_nom,
            command: OuterCommand::default(),
            faulted: false,
        })
    }

    pub fn v_dc_ref(&self) -> f64 {
        self.v_dc_ref
    }

    pub fn command(&self) -> OuterCommand {
        self.command
    }

    pub fn is_faulted(&self) -> bool {
        self.faulted
    }

    pub fn integrators(&self) -> [f64; 3] {
        [self.p_pi.integrator(), self.v_pi.integrator(), self.q_pi.integrator()]
    }

    /// Sets the integrators explicitly (used to start at an operating point).
    pub fn set_integrators(&mut self, values: [f64; 3]) {
        self.p_pi.set_integrator(values[0]);
        self.v_pi.set_integrator(values[1]);
        self.q_pi.set_integrator(values[2]);
    }

    /// One outer update. A non-finite measurement latches a fault and
    /// commands zero current.
    pub fn update(
        &mut self,
        meas: &OuterMeasurements,
        p_ref: f64,
        q_ref: f64,
        params: &ConverterParams,
    ) -> Result<OuterCommand> {
        let finite = [meas.p, meas.q, meas.v_dc, meas.v_rms, p_ref, q_ref].iter().all(|x| x.is_finite());
        if self.faulted || !finite {
            self.faulted = true;
            self.command = OuterCommand::default();
            return Err(Error::ControllerFault {
                t: f64::NAN,
                reason: "non-finite outer-loop measurement or setpoint".into(),
            });
        }
        let s = params.s_rated;
        let (v_min, v_max) = (params.v_dc_min, params.v_dc_max);
        let i_max = s / meas.v_rms.max(1e-3);
        let (i_ff, theta_ff) = if p_ref > 0.0 {
            let sp = ReferenceSetpoint::new(p_ref, q_ref, meas.v_rms)?;
            (sp.i_rms.min(i_max), sp.theta.clamp(-self.theta_max, self.theta_max))
        } else {
            (0.0, 0.0)
        };

        let v_ff = (p_ref.max(0.0) * params.r_dc).sqrt().clamp(v_min, v_max);
        let v_base = params.v_dc_nom;
        self.p_pi.set_limits((v_min - v_ff) / v_base, (v_max - v_ff) / v_base);
        let trim = self.p_pi.step((p_ref - meas.p) / s);
        self.v_dc_ref = (v_ff + v_base * trim).clamp(v_min, v_max);

        self.v_pi.set_limits(-i_ff, i_max - i_ff);
        let i_trim = self.v_pi.step(self.v_dc_ref - meas.v_dc);
        let i_amp = (i_ff + i_trim).clamp(0.0, i_max);

        self.q_pi.set_limits(-self.theta_max - theta_ff, self.theta_max - theta_ff);
        let theta_trim = self.q_pi.step((q_ref - meas.q) / s);
        let theta = (theta_ff + theta_trim).clamp(-self.theta_max, self.theta_max);

        self.command = OuterCommand { i_amp, theta };
        Ok(self.command)
    }
}
