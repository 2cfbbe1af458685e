//! End-node load profiles: explicit time series or a seeded synthetic
//! recipe, with piecewise-linear lookup.
//!
//! Series files hold one node per line, `node_id t,v t,v ...` (seconds,
//! watts), plus optional `start_clock HH:MM` and `house_pf <pf>` lines.

use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use super::feeder::{FeederModel, NodeKind};
use crate::error::{Error, Result};

pub const DEFAULT_RECIPE: &str = include_str!("../../data/profiles_default.toml");

/// Piecewise-linear series on strictly increasing sample times.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl Series {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::Scenario("series needs matching, non-empty time and value lists".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Scenario("series times must be strictly increasing".into()));
        }
        if values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Scenario("series powers must be finite and non-negative".into()));
        }
        Ok(Self { times, values })
    }

    pub fn uniform(dt: f64, values: Vec<f64>) -> Result<Self> {
        let times = (0..values.len()).map(|k| k as f64 * dt).collect();
        Self::new(times, values)
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().expect("non-empty")
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at `t`, which must lie within the series.
    pub fn at(&self, t: f64) -> Option<f64> {
        if !(t >= self.start() && t <= self.end()) {
            return None;
        }
        let k = self.times.partition_point(|&x| x <= t);
        if k == self.times.len() {
            return Some(*self.values.last().expect("non-empty"));
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let (v0, v1) = (self.values[k - 1], self.values[k]);
        if t == t0 {
            return Some(v0);
        }
        Some(v0 + (v1 - v0) * (t - t0) / (t1 - t0))
    }
}

/// Seeded synthetic evening load shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileRecipe {
    pub seed: u64,
    pub duration_s: f64,
    pub resolution_s: f64,
    pub start_clock: String,
    /// The single calibration constant applied to every generated load.
    pub calibration_scale: f64,
    pub house_pf: f64,
    /// Mean house demand at the start of the run (W).
    pub house_base_w: f64,
    /// Mean house demand at the end of the ramp (W).
    pub house_peak_w: f64,
    pub ramp_start_s: f64,
    pub ramp_end_s: f64,
    /// Log-normal sigma of the per-home size multiplier.
    pub house_spread: f64,
    /// Per-home AR(1) noise: one-step correlation and stationary std dev (W).
    pub noise_rho: f64,
    pub noise_w: f64,
    /// Appliance switching: mean events per home per hour, power and
    /// mean duration.
    pub appliance_rate_per_h: f64,
    pub appliance_w: f64,
    pub appliance_mean_s: f64,
    /// Share of the other EV points that plug in during the run.
    pub ev_plugin_fraction: f64,
    pub ev_w: f64,
}

impl Default for ProfileRecipe {
    fn default() -> Self {
        Self {
            seed: 1,
            duration_s: 3000.0,
            resolution_s: 1.0,
            start_clock: "17:30".into(),
            calibration_scale: 1.0,
            house_pf: 0.95,
            house_base_w: 800.0,
            house_peak_w: 2000.0,
            ramp_start_s: 0.0,
            ramp_end_s: 2700.0,
            house_spread: 0.3,
            noise_rho: 0.99,
            noise_w: 150.0,
            appliance_rate_per_h: 2.0,
            appliance_w: 1500.0,
            appliance_mean_s: 300.0,
            ev_plugin_fraction: 0.2,
            ev_w: 3300.0,
        }
    }
}

impl ProfileRecipe {
    pub fn parse(text: &str) -> Result<Self> {
        let r: Self = toml::from_str(text).map_err(|e| Error::Config(format!("profile recipe: {e}")))?;
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("duration_s", self.duration_s),
            ("resolution_s", self.resolution_s),
            ("calibration_scale", self.calibration_scale),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be positive, got {v}")));
            }
        }
        if !(self.house_pf > 0.0 && self.house_pf <= 1.0) {
            return Err(Error::param("house_pf", format!("must lie in (0, 1], got {}", self.house_pf)));
        }
        if !(0.0..1.0).contains(&self.noise_rho) {
            return Err(Error::param("noise_rho", format!("must lie in [0, 1), got {}", self.noise_rho)));
        }
        if !(0.0..=1.0).contains(&self.ev_plugin_fraction) {
            return Err(Error::param("ev_plugin_fraction", "must lie in [0, 1]"));
        }
        if !(self.ramp_end_s >= self.ramp_start_s) {
            return Err(Error::param("ramp_end_s", "must not precede ramp_start_s"));
        }
        parse_clock(&self.start_clock)?;
        Ok(())
    }

    /// Smooth ramp from base to peak.
    fn shape(&self, t: f64) -> f64 {
        let span = (self.ramp_end_s - self.ramp_start_s).max(f64::MIN_POSITIVE);
        let x = ((t - self.ramp_start_s) / span).clamp(0.0, 1.0);
        let s = x * x * (3.0 - 2.0 * x);
        self.house_base_w + (self.house_peak_w - self.house_base_w) * s
    }
}

fn parse_clock(s: &str) -> Result<f64> {
    let bad = || Error::Config(format!("bad clock time `{s}` (expected HH:MM)"));
    let (h, m) = s.split_once(':').ok_or_else(bad)?;
    let h: u32 = h.trim().parse().map_err(|_| bad())?;
    let m: u32 = m.trim().parse().map_err(|_| bad())?;
    if h > 23 || m > 59 {
        return Err(bad());
    }
    Ok(f64::from(h * 3600 + m * 60))
}

#[derive(Debug, Clone)]
struct Entry {
    node: usize,
    reactive_ratio: f64,
    series: Series,
}

/// Demand series for the end-nodes of one feeder model.
#[derive(Debug, Clone)]
pub struct LoadProfileSet {
    n_nodes: usize,
    start_clock_s: f64,
    house_pf: f64,
    entries: Vec<Entry>,
}

impl LoadProfileSet {
    fn from_parts(
        model: &FeederModel,
        start_clock_s: f64,
        house_pf: f64,
        series: Vec<(usize, Series)>,
    ) -> Result<Self> {
        if !(house_pf > 0.0 && house_pf <= 1.0) {
            return Err(Error::param("house_pf", format!("must lie in (0, 1], got {house_pf}")));
        }
        let tan_phi = (1.0 - house_pf * house_pf).sqrt() / house_pf;
        let entries = series
            .into_iter()
            .map(|(node, series)| Entry {
                node,
                reactive_ratio: if model.node(node).kind == NodeKind::House { tan_phi } else { 0.0 },
                series,
            })
            .collect();
        Ok(Self { n_nodes: model.len(), start_clock_s, house_pf, entries })
    }

    /// Builds the synthetic profiles for every end-node except the active
    /// charger.
    pub fn generate(recipe: &ProfileRecipe, model: &FeederModel) -> Result<Self> {
        recipe.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(recipe.seed);
        let n = (recipe.duration_s / recipe.resolution_s).round() as usize + 1;
        let dt = recipe.resolution_s;
        let spread =
            LogNormal::new(0.0, recipe.house_spread).map_err(|e| Error::param("house_spread", e.to_string()))?;
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        let innovation = recipe.noise_w * (1.0 - recipe.noise_rho * recipe.noise_rho).sqrt();
        let p_event = recipe.appliance_rate_per_h / 3600.0 * dt;
        let p_end = dt / recipe.appliance_mean_s.max(dt);

        let mut series = Vec::new();
        for node in model.end_nodes() {
            let kind = model.node(node).kind;
            let values = match kind {
                NodeKind::House => {
                    let size = spread.sample(&mut rng);
                    let mut x = recipe.noise_w * unit.sample(&mut rng);
                    let mut on = false;
                    (0..n)
                        .map(|k| {
                            let t = k as f64 * dt;
                            if k > 0 {
                                x = recipe.noise_rho * x + innovation * unit.sample(&mut rng);
                            }
                            let flip: f64 = rng.random();
                            on = if on { flip >= p_end } else { flip < p_event };
                            let w = size * recipe.shape(t) + x + if on { recipe.appliance_w } else { 0.0 };
                            recipe.calibration_scale * w.max(0.0)
                        })
                        .collect()
                }
                NodeKind::Ev => {
                    let plugs = rng.random::<f64>() < recipe.ev_plugin_fraction;
                    let t_plug = rng.random::<f64>() * recipe.duration_s;
                    (0..n)
                        .map(|k| {
                            let on = plugs && k as f64 * dt >= t_plug;
                            if on {
                                recipe.calibration_scale * recipe.ev_w
                            } else {
                                0.0
                            }
                        })
                        .collect()
                }
                _ => continue,
            };
            series.push((node, Series::uniform(dt, values)?));
        }
        Self::from_parts(model, parse_clock(&recipe.start_clock)?, recipe.house_pf, series)
    }

    /// Parses the explicit series format.
    pub fn parse_series(text: &str, source: &str, model: &FeederModel) -> Result<Self> {
        let mut start_clock_s = parse_clock("17:30")?;
        let mut house_pf = 0.95;
        let mut series = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| Error::Parse { path: source.to_string(), line: k + 1, reason };
            let mut fields = line.split_whitespace();
            let head = fields.next().expect("non-empty line");
            match head {
                "start_clock" => {
                    start_clock_s = parse_clock(fields.next().unwrap_or("")).map_err(|e| err(e.to_string()))?;
                }
                "house_pf" => {
                    let s = fields.next().unwrap_or("");
                    house_pf = s.parse().map_err(|_| err(format!("bad house_pf `{s}`")))?;
                }
                id => {
                    let node = model.index_of(id).ok_or_else(|| err(format!("unknown node `{id}`")))?;
                    let (mut ts, mut vs) = (Vec::new(), Vec::new());
                    for pair in fields {
                        let (t, v) = pair.split_once(',').ok_or_else(|| err(format!("expected t,v got `{pair}`")))?;
                        ts.push(t.parse::<f64>().map_err(|_| err(format!("bad time `{t}`")))?);
                        vs.push(v.parse::<f64>().map_err(|_| err(format!("bad power `{v}`")))?);
                    }
                    series.push((node, Series::new(ts, vs).map_err(|e| err(e.to_string()))?));
                }
            }
        }
        Self::from_parts(model, start_clock_s, house_pf, series)
    }

    /// Loads a recipe (`.toml`) or an explicit series file.
    pub fn load(path: impl AsRef<Path>, model: &FeederModel) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "toml") {
            Self::generate(&ProfileRecipe::parse(&text)?, model)
        } else {
            Self::parse_series(&text, &path.display().to_string(), model)
        }
    }

    pub fn start_clock_s(&self) -> f64 {
        self.start_clock_s
    }

    pub fn house_pf(&self) -> f64 {
        self.house_pf
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Interval on which every series is defined.
    pub fn span(&self) -> (f64, f64) {
        let lo = self.entries.iter().map(|e| e.series.start()).fold(f64::NEG_INFINITY, f64::max);
        let hi = self.entries.iter().map(|e| e.series.end()).fold(f64::INFINITY, f64::min);
        (lo, hi)
    }

    pub fn series(&self, node: usize) -> Option<&Series> {
        self.entries.iter().find(|e| e.node == node).map(|e| &e.series)
    }

    /// Demand at every model node (W + jVAR) at `t` seconds into the run.
    pub fn loads_at(&self, t: f64) -> Result<Vec<Complex64>> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.n_nodes];
        self.fill_loads(t, &mut out)?;
        Ok(out)
    }

    /// As [`loads_at`](Self::loads_at), adding into `out`.
    pub fn fill_loads(&self, t: f64, out: &mut [Complex64]) -> Result<()> {
        for e in &self.entries {
            let p = e.series.at(t).ok_or_else(|| {
                Error::Scenario(format!(
                    "t = {t} s outside load profile span [{}, {}]",
                    e.series.start(),
                    e.series.end()
                ))
            })?;
            out[e.node] += Complex64::new(p, p * e.reactive_ratio);
        }
        Ok(())
    }

    /// Total real demand at `t` (W).
    pub fn total_at(&self, t: f64) -> Result<f64> {
        Ok(self.loads_at(t)?.iter().map(|s| s.re).sum())
    }

    /// Copy with every value multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        let mut out = self.clone();
        for e in &mut out.entries {
            for v in &mut e.series.values {
                *v *= k;
            }
        }
        out
    }
}

/// The shipped recipe.
pub fn default_recipe() -> ProfileRecipe {
    ProfileRecipe::parse(DEFAULT_RECIPE).expect("shipped recipe is valid")
}
