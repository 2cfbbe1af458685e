//! Decentralized additive-increase / multiplicative-decrease charging
//! power control driven by the local node voltage.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AimdConfig {
    /// Threshold update period T_u (s).
    pub t_update: f64,
    /// Decision period T_a (s).
    pub t_algo: f64,
    /// Additive increase (W).
    pub alpha: f64,
    /// Multiplicative decrease factor.
    pub beta: f64,
    pub p_max: f64,
    pub p_min: f64,
    /// Command held until the first threshold exists.
    pub p_init: f64,
}

impl Default for AimdConfig {
    fn default() -> Self {
        Self { t_update: 60.0, t_algo: 10.0, alpha: 100.0, beta: 0.5, p_max: 10_000.0, p_min: 0.0, p_init: 10_000.0 }
    }
}

impl AimdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::param("beta", format!("must lie in (0, 1), got {}", self.beta)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::param("alpha", format!("must be positive, got {}", self.alpha)));
        }
        if !(self.t_algo > 0.0 && self.t_update > 0.0) {
            return Err(Error::param("t_algo", "periods must be positive"));
        }
        let ratio = self.t_update / self.t_algo;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
            return Err(Error::param(
                "t_update",
                format!("must be an integer multiple of t_algo ({} / {})", self.t_update, self.t_algo),
            ));
        }
        if !(self.p_min < self.p_max) {
            return Err(Error::param("p_min", format!("must be below p_max ({} >= {})", self.p_min, self.p_max)));
        }
        if !(self.p_init >= self.p_min && self.p_init <= self.p_max) {
            return Err(Error::param("p_init", format!("must lie in [p_min, p_max], got {}", self.p_init)));
        }
        Ok(())
    }
}

/// Which branch a decision instant took.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AimdBranch {
    Increase,
    Decrease,
    Hold,
}

impl AimdBranch {
    /// Symbol used in logs.
    pub fn symbol(self) -> &'static str {
        match self {
            AimdBranch::Increase => "+",
            AimdBranch::Decrease => "×",
            AimdBranch::Hold => "hold",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        match s {
            "+" => Some(AimdBranch::Increase),
            "×" => Some(AimdBranch::Decrease),
            "hold" => Some(AimdBranch::Hold),
            _ => None,
        }
    }
}

impl fmt::Display for AimdBranch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AimdTick {
    pub p_cmd: f64,
    pub v_th: Option<f64>,
    pub branch: AimdBranch,
}

#[derive(Debug, Clone)]
pub struct AimdState {
    cfg: AimdConfig,
    window: VecDeque<(f64, f64)>,
    v_th: Option<f64>,
    p_cmd: f64,
    last_record_t: Option<f64>,
    last_update_t: Option<f64>,
    last_algo_t: Option<f64>,
}

impl AimdState {
    pub fn new(cfg: AimdConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            window: VecDeque::new(),
            v_th: None,
            p_cmd: cfg.p_init,
            last_record_t: None,
            last_update_t: None,
            last_algo_t: None,
        })
    }

    pub fn config(&self) -> &AimdConfig {
        &self.cfg
    }

    pub fn p_cmd(&self) -> f64 {
        self.p_cmd
    }

    pub fn v_th(&self) -> Option<f64> {
        self.v_th
    }

    pub fn window_len(&self) -> usize {
        self.window.len()
    }

    /// Time span covered by the window.
    pub fn window_span(&self) -> f64 {
        match (self.window.front(), self.window.back()) {
            (Some(a), Some(b)) => b.0 - a.0,
            _ => 0.0,
        }
    }

    pub fn window_min(&self) -> Option<f64> {
        self.window.iter().map(|&(_, v)| v).reduce(f64::min)
    }

    pub fn last_update_t(&self) -> Option<f64> {
        self.last_update_t
    }

    pub fn last_algo_t(&self) -> Option<f64> {
        self.last_algo_t
    }

    /// Appends a sample and evicts those older than `t − t_update`.
    pub fn record_voltage(&mut self, v_rms: f64, t: f64) -> Result<()> {
        if let Some(last) = self.last_record_t {
            if t < last {
                return Err(Error::Sequencing { t, last });
            }
        }
        self.last_record_t = Some(t);
        self.window.push_back((t, v_rms));
        let horizon = t - self.cfg.t_update - TIME_EPS;
        while self.window.front().is_some_and(|&(ts, _)| ts < horizon) {
            self.window.pop_front();
        }
        Ok(())
    }

    /// Sets the threshold to the window minimum.
    pub fn update_threshold(&mut self, t: f64) -> Result<f64> {
        let v = self
            .window_min()
            .ok_or_else(|| Error::ThresholdUnavailable(format!("empty voltage window at t = {t} s")))?;
        self.v_th = Some(v);
        self.last_update_t = Some(t);
        Ok(v)
    }

    /// One decision. Holds the command if no threshold exists yet.
    pub fn aimd_step(&mut self, v_now: f64, t: f64) -> (f64, AimdBranch) {
        self.last_algo_t = Some(t);
        let Some(v_th) = self.v_th else {
            return (self.p_cmd, AimdBranch::Hold);
        };
        let (p, branch) = if v_now > v_th {
            (self.p_cmd + self.cfg.alpha, AimdBranch::Increase)
        } else {
            (self.p_cmd * self.cfg.beta, AimdBranch::Decrease)
        };
        self.p_cmd = p.clamp(self.cfg.p_min, self.cfg.p_max);
        (self.p_cmd, branch)
    }

    /// Records `v_rms` at `t` and runs whatever falls due at `t`: the
    /// threshold update at every positive multiple of `t_update`, then the
    /// decision at every multiple of `t_algo`. Each instant fires once.
    pub fn tick(&mut self, v_rms: f64, t: f64) -> Result<AimdTick> {
        self.record_voltage(v_rms, t)?;
        if t >= self.cfg.t_update - TIME_EPS
            && on_grid(t, self.cfg.t_update)
            && self.last_update_t.is_none_or(|last| t > last + TIME_EPS)
        {
            self.update_threshold(t)?;
        }
        let mut branch = AimdBranch::Hold;
        if on_grid(t, self.cfg.t_algo) && self.last_algo_t.is_none_or(|last| t > last + TIME_EPS) {
            branch = self.aimd_step(v_rms, t).1;
        }
        Ok(AimdTick { p_cmd: self.p_cmd, v_th: self.v_th, branch })
    }
}

fn on_grid(t: f64, period: f64) -> bool {
    let k = (t / period).round();
    (k * period - t).abs() < 1e-6
}
