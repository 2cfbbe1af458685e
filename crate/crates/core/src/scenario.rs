//! Scenario configuration, the grid/charger co-simulation loop and the
//! time-series logs it produces.
//!
//! Grid runs advance in macro steps. At step `k` the power flow sees the
//! house loads at `t_k` and the charger output reported at step `k − 1`;
//! the charger then advances one macro step against the resulting node
//! voltage, and AIMD (when enabled) records that voltage and decides.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::aimd::{AimdBranch, AimdConfig, AimdState};
use crate::charger::{Charger, ControlConfig, EmtCharger, EnvelopeCharger, FastSample, Fidelity};
use crate::converter::ConverterParams;
use crate::error::{Error, Result};
use crate::grid::{
    build_default_feeder, default_recipe, node_voltage_rms, solve_power_flow, FeederModel, LoadProfileSet,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    TransientTest1,
    TransientTest2,
    GridBaseline,
    GridAimd,
    /// Transient with the setpoints given in `[transient]`.
    Custom,
}

impl ScenarioKind {
    pub fn is_transient(self) -> bool {
        matches!(self, ScenarioKind::TransientTest1 | ScenarioKind::TransientTest2 | ScenarioKind::Custom)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::TransientTest1 => "transient_test_1",
            ScenarioKind::TransientTest2 => "transient_test_2",
            ScenarioKind::GridBaseline => "grid_baseline",
            ScenarioKind::GridAimd => "grid_aimd",
            ScenarioKind::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub kind: ScenarioKind,
    /// Simulated time after the step (transient) or total run time (grid), s.
    pub duration_s: f64,
    /// Defaults to emt for transients and envelope for grid runs.
    pub fidelity: Option<Fidelity>,
    /// Overrides the load-profile recipe seed when set.
    pub seed: Option<u64>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { kind: ScenarioKind::GridAimd, duration_s: 3000.0, fidelity: None, seed: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransientSection {
    pub pre_roll_s: f64,
    /// Terminal voltage of the stiff source, V RMS.
    pub v_rms: f64,
    pub p_before: f64,
    pub q_before: f64,
    /// Setpoints after the step; only read for `custom`.
    pub p_after: f64,
    pub q_after: f64,
    /// Log every n-th control step.
    pub log_every: usize,
}

impl Default for TransientSection {
    fn default() -> Self {
        Self {
            pre_roll_s: 1.0,
            v_rms: 240.0,
            p_before: 10_000.0,
            q_before: 0.0,
            p_after: 10_000.0,
            q_after: 0.0,
            log_every: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    /// Feeder file, or `builtin`.
    pub feeder: String,
    /// Profile recipe (`.toml`) or series file, or `builtin`.
    pub profiles: String,
    pub slack_pu: f64,
    pub macro_dt_s: f64,
    /// Profile time at which the run starts, s.
    pub start_s: f64,
    /// Charger setpoint for baseline runs, W.
    pub p_baseline: f64,
    pub envelope_tau_s: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            feeder: "builtin".into(),
            profiles: "builtin".into(),
            slack_pu: 1.0,
            macro_dt_s: 1.0,
            start_s: 0.0,
            p_baseline: 10_000.0,
            envelope_tau_s: EnvelopeCharger::DEFAULT_TAU,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

/// Everything a run depends on. Round-trips through TOML.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub run: RunSection,
    pub converter: ConverterParams,
    pub control: ControlConfig,
    pub aimd: AimdConfig,
    pub transient: TransientSection,
    pub grid: GridSection,
    pub output: OutputSection,
}

impl ScenarioConfig {
    pub fn for_kind(kind: ScenarioKind) -> Self {
        let mut cfg = Self::default();
        cfg.run.kind = kind;
        if kind.is_transient() {
            cfg.run.duration_s = 0.6;
        }
        cfg
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Fills in defaults that depend on the kind and checks invariants.
    pub fn resolve(mut self) -> Result<Self> {
        let kind = self.run.kind;
        let fidelity = match (kind.is_transient(), self.run.fidelity) {
            (true, Some(Fidelity::Envelope)) => {
                return Err(Error::Config(format!("{} requires emt fidelity", kind.as_str())));
            }
            (true, _) => Fidelity::Emt,
            (false, f) => f.unwrap_or(Fidelity::Envelope),
        };
        self.run.fidelity = Some(fidelity);
        if !(self.run.duration_s > 0.0 && self.run.duration_s.is_finite()) {
            return Err(Error::Config(format!("duration must be positive, got {}", self.run.duration_s)));
        }
        self.converter.validate().map_err(config_context("converter"))?;
        if kind == ScenarioKind::GridAimd {
            self.aimd.validate().map_err(config_context("aimd"))?;
        }
        if kind.is_transient() {
            let t = &self.transient;
            if !(t.pre_roll_s >= 0.0 && t.v_rms > 0.0 && t.log_every >= 1) {
                return Err(Error::Config("transient: need pre_roll_s >= 0, v_rms > 0, log_every >= 1".into()));
            }
        } else {
            let g = &self.grid;
            if !(g.macro_dt_s > 0.0 && g.slack_pu > 0.0 && g.envelope_tau_s > 0.0 && g.start_s >= 0.0) {
                return Err(Error::Config(
                    "grid: need macro_dt_s > 0, slack_pu > 0, envelope_tau_s > 0, start_s >= 0".into(),
                ));
            }
        }
        Ok(self)
    }

    pub fn fidelity(&self) -> Fidelity {
        self.run.fidelity.unwrap_or(if self.run.kind.is_transient() { Fidelity::Emt } else { Fidelity::Envelope })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Setpoints after the step.
    pub fn step_setpoint(&self) -> (f64, f64) {
        const P: f64 = 7070.0;
        match self.run.kind {
            ScenarioKind::TransientTest1 => (P, P),
            ScenarioKind::TransientTest2 => (P, -P),
            _ => (self.transient.p_after, self.transient.q_after),
        }
    }

    pub fn load_feeder(&self) -> Result<FeederModel> {
        if self.grid.feeder == "builtin" {
            Ok(build_default_feeder())
        } else {
            FeederModel::load(&self.grid.feeder).map_err(file_error)
        }
    }

    pub fn load_profiles(&self, model: &FeederModel) -> Result<LoadProfileSet> {
        if self.grid.profiles == "builtin" {
            let mut recipe = default_recipe();
            if let Some(seed) = self.run.seed {
                recipe.seed = seed;
            }
            return LoadProfileSet::generate(&recipe, model);
        }
        let path = Path::new(&self.grid.profiles);
        if path.extension().is_some_and(|e| e == "toml") {
            let text = std::fs::read_to_string(path).map_err(|e| file_error(Error::io(path, e)))?;
            let mut recipe = crate::grid::ProfileRecipe::parse(&text)?;
            if let Some(seed) = self.run.seed {
                recipe.seed = seed;
            }
            return LoadProfileSet::generate(&recipe, model);
        }
        LoadProfileSet::load(path, model).map_err(file_error)
    }
}

fn config_context(section: &'static str) -> impl Fn(Error) -> Error {
    move |e| Error::Config(format!("[{section}] {e}"))
}

fn file_error(e: Error) -> Error {
    match e {
        Error::Io { .. } | Error::Parse { .. } => Error::Config(e.to_string()),
        other => other,
    }
}

/// Per-step waveform log of a transient run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FastLog {
    pub rows: Vec<FastSample>,
}

pub const FAST_HEADER: &str = "t_s,v_s_V,i_s_A,v_dc_V,m,p_W,q_VAR";
pub const SLOW_HEADER: &str = "t_s,node_vrms_V,p_cmd_W,p_meas_W,q_meas_VAR,v_th_V,aimd_branch";

impl FastLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(64 * (self.rows.len() + 1));
        s.push_str(FAST_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(s, "{:.8},{:.4},{:.4},{:.4},{:.6},{:.3},{:.3}", r.t, r.v_s, r.i_s, r.v_dc, r.m, r.p, r.q);
        }
        s
    }

    /// Samples with `t0 <= t < t1`.
    pub fn window(&self, t0: f64, t1: f64) -> impl Iterator<Item = &FastSample> {
        self.rows.iter().filter(move |r| r.t >= t0 && r.t < t1)
    }
}

/// One macro step of a grid run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlowRecord {
    pub t: f64,
    pub node_vrms: f64,
    pub p_cmd: f64,
    pub p_meas: f64,
    pub q_meas: f64,
    pub v_th: Option<f64>,
    pub branch: AimdBranch,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SlowLog {
    pub rows: Vec<SlowRecord>,
}

impl SlowLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(64 * (self.rows.len() + 1));
        s.push_str(SLOW_HEADER);
        s.push('\n');
        for r in &self.rows {
            let v_th = r.v_th.map_or(String::new(), |v| format!("{v:.4}"));
            let _ = writeln!(
                s,
                "{:.3},{:.4},{:.3},{:.3},{:.3},{},{}",
                r.t, r.node_vrms, r.p_cmd, r.p_meas, r.q_meas, v_th, r.branch
            );
        }
        s
    }

    pub fn min_voltage(&self) -> Option<f64> {
        self.rows.iter().map(|r| r.node_vrms).reduce(f64::min)
    }

    pub fn mean_power(&self) -> Option<f64> {
        (!self.rows.is_empty()).then(|| self.rows.iter().map(|r| r.p_meas).sum::<f64>() / self.rows.len() as f64)
    }
}

pub fn write_file(path: impl AsRef<Path>, contents: &str) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Runs a transient scenario, appending to `log` as it goes so a faulted
/// run still leaves its trace behind.
pub fn run_transient_into(cfg: &ScenarioConfig, log: &mut FastLog) -> Result<()> {
    let kind = cfg.run.kind;
    if !kind.is_transient() {
        return Err(Error::Scenario(format!("{} is not a transient scenario", kind.as_str())));
    }
    let tr = &cfg.transient;
    let p = cfg.converter;
    let mut charger = EmtCharger::new(p, cfg.control, tr.p_before, tr.q_before, tr.v_rms, -tr.pre_roll_s)?;
    let pre = (tr.pre_roll_s * p.f_sw).round() as usize;
    let post = (cfg.run.duration_s * p.f_sw).round() as usize;
    let (p_after, q_after) = cfg.step_setpoint();
    for k in 0..pre + post {
        if k == pre {
            charger.set_setpoint(p_after, q_after);
        }
        let s = charger.step(tr.v_rms)?;
        if k % tr.log_every == 0 {
            log.rows.push(s);
        }
    }
    Ok(())
}

pub fn run_transient(cfg: &ScenarioConfig) -> Result<FastLog> {
    let mut log = FastLog::default();
    run_transient_into(cfg, &mut log)?;
    Ok(log)
}

/// Runs a grid scenario against an already loaded feeder and profile set.
pub fn run_grid_with(
    cfg: &ScenarioConfig,
    model: &FeederModel,
    profiles: &LoadProfileSet,
    log: &mut SlowLog,
) -> Result<()> {
    let kind = cfg.run.kind;
    let aimd_on = match kind {
        ScenarioKind::GridAimd => true,
        ScenarioKind::GridBaseline => false,
        other => return Err(Error::Scenario(format!("{} is not a grid scenario", other.as_str()))),
    };
    let node = model.charger().ok_or_else(|| Error::Config("feeder has no node of kind `charger`".into()))?;
    let g = &cfg.grid;
    let dt = g.macro_dt_s;
    let steps = (cfg.run.duration_s / dt).round() as usize;
    let mut aimd = if aimd_on { Some(AimdState::new(cfg.aimd)?) } else { None };
    let p_cmd0 = aimd.as_ref().map_or(g.p_baseline, |a| a.p_cmd());

    let solve = |t: f64, p: f64, q: f64| -> Result<f64> {
        let mut loads = profiles.loads_at(g.start_s + t)?;
        // Leading (positive) charger Q supplies reactive power to the node.
        loads[node] += Complex64::new(p, -q);
        let sol =
            solve_power_flow(model, &loads, g.slack_pu).map_err(|e| Error::GridCollapse { t, source: Box::new(e) })?;
        node_voltage_rms(&sol, node)
    };

    let mut charger = match cfg.fidelity() {
        Fidelity::Envelope => Charger::Envelope(EnvelopeCharger::new(p_cmd0, 0.0, g.envelope_tau_s)?),
        Fidelity::Emt => {
            let v0 = solve(0.0, p_cmd0, 0.0)?;
            Charger::Emt(Box::new(EmtCharger::new(cfg.converter, cfg.control, p_cmd0, 0.0, v0, 0.0)?))
        }
    };
    let (mut p_meas, mut q_meas) = (p_cmd0, 0.0);
    for k in 0..steps {
        let t = k as f64 * dt;
        let v = solve(t, p_meas, q_meas)?;
        let p_ref = aimd.as_ref().map_or(g.p_baseline, |a| a.p_cmd());
        let out = charger.macro_step(v, p_ref, 0.0, dt)?;
        (p_meas, q_meas) = (out.p, out.q);
        let (p_cmd, v_th, branch) = match aimd.as_mut() {
            Some(a) => {
                let tick = a.tick(v, t)?;
                (tick.p_cmd, tick.v_th, tick.branch)
            }
            None => (p_ref, None, AimdBranch::Hold),
        };
        log.rows.push(SlowRecord { t, node_vrms: v, p_cmd, p_meas, q_meas, v_th, branch });
    }
    Ok(())
}

pub fn run_grid_into(cfg: &ScenarioConfig, log: &mut SlowLog) -> Result<()> {
    let model = cfg.load_feeder()?;
    let profiles = cfg.load_profiles(&model)?;
    run_grid_with(cfg, &model, &profiles, log)
}

pub fn run_grid(cfg: &ScenarioConfig) -> Result<SlowLog> {
    let mut log = SlowLog::default();
    run_grid_into(cfg, &mut log)?;
    Ok(log)
}

/// Finds the profile scale at which the baseline run bottoms out at
/// `target_v`, by bisection on `[lo, hi]`.
pub fn calibrate_scale(
    cfg: &ScenarioConfig,
    model: &FeederModel,
    profiles: &LoadProfileSet,
    target_v: f64,
    (mut lo, mut hi): (f64, f64),
    tol: f64,
) -> Result<f64> {
    let mut base = cfg.clone();
    base.run.kind = ScenarioKind::GridBaseline;
    base.run.fidelity = Some(Fidelity::Envelope);
    let min_at = |k: f64| -> Result<f64> {
        let mut log = SlowLog::default();
        match run_grid_with(&base, model, &profiles.scaled(k), &mut log) {
            Ok(()) => Ok(log.min_voltage().unwrap_or(f64::INFINITY)),
            Err(Error::GridCollapse { .. }) => Ok(0.0),
            Err(e) => Err(e),
        }
    };
    if !(min_at(lo)? > target_v && min_at(hi)? < target_v) {
        return Err(Error::Scenario(format!("calibration target {target_v} V not bracketed by [{lo}, {hi}]")));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if min_at(mid)? > target_v {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transient_kinds_force_emt() {
        let mut cfg = ScenarioConfig::for_kind(ScenarioKind::TransientTest1);
        cfg.run.fidelity = Some(Fidelity::Envelope);
        assert!(matches!(cfg.resolve(), Err(Error::Config(_))));
        let cfg = ScenarioConfig::for_kind(ScenarioKind::GridAimd).resolve().unwrap();
        assert_eq!(cfg.fidelity(), Fidelity::Envelope);
    }

    #[test]
    fn zero_duration_rejected() {
        let mut cfg = ScenarioConfig::for_kind(ScenarioKind::GridBaseline);
        cfg.run.duration_s = 0.0;
        assert!(matches!(cfg.resolve(), Err(Error::Config(_))));
    }

    #[test]
    fn config_round_trips() {
        let mut cfg = ScenarioConfig::for_kind(ScenarioKind::GridAimd).resolve().unwrap();
        cfg.run.seed = Some(7);
        cfg.aimd.alpha = 150.0;
        let again = ScenarioConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ScenarioConfig::parse("[run]\nkind = \"grid_aimd\"\nspeed = 3\n").is_err());
        assert!(ScenarioConfig::parse("[run]\nkind = \"grid_fast\"\n").is_err());
    }

    #[test]
    fn slow_csv_layout() {
        let log = SlowLog {
            rows: vec![SlowRecord {
                t: 1.0,
                node_vrms: 229.5,
                p_cmd: 5100.0,
                p_meas: 5000.0,
                q_meas: 0.0,
                v_th: None,
                branch: AimdBranch::Decrease,
            }],
        };
        assert_eq!(log.to_csv(), format!("{SLOW_HEADER}\n1.000,229.5000,5100.000,5000.000,0.000,,×\n"));
    }
}
