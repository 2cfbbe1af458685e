//! Command-line front end: argument parsing and the subcommands.

pub mod plot;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;

use vhil_core::charger::Fidelity;
use vhil_core::current_control::design_loop;
use vhil_core::grid::{node_voltage_rms, solve_power_flow, FeederModel, LoadProfileSet};
use vhil_core::scenario::{
    run_grid_into, run_transient_into, write_file, FastLog, ScenarioConfig, ScenarioKind, SlowLog,
};
use vhil_core::tf::{freq_response, log_space, stability_margins};
use vhil_core::{Error, Result};

use plot::{Figure, Pane, Trace};

#[derive(Debug, Parser)]
#[command(name = "vhil", version, about = "Virtual hardware-in-the-loop EV charger / feeder co-simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Report the inner current-loop design: plant, PR coefficients, margins, Bode data.
    Design(DesignArgs),
    /// Run transient Test #1 or #2 on a stiff 240 V source.
    Transient(TransientArgs),
    /// Run the 50-minute feeder scenario with or without AIMD.
    Grid(GridArgs),
    /// Solve one power flow and print per-bus voltages.
    Powerflow(PowerflowArgs),
    /// Re-render the SVG for a CSV written by another subcommand.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Scenario configuration file; flags override its values.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    #[command(flatten)]
    pub common: Common,
    /// Proportional gain K_p.
    #[arg(long)]
    pub kp: Option<f64>,
    /// Resonant gain K_i.
    #[arg(long)]
    pub ki: Option<f64>,
    /// Resonance bandwidth ω_c (rad/s).
    #[arg(long = "omega-c")]
    pub omega_c: Option<f64>,
    /// Series pre-gain of the compensator.
    #[arg(long, allow_hyphen_values = true)]
    pub gain: Option<f64>,
    /// Controller sample rate (Hz).
    #[arg(long)]
    pub fs: Option<f64>,
    /// DC-bus voltage the plant is evaluated at (V).
    #[arg(long)]
    pub vdc: Option<f64>,
    /// Inductor series resistance (Ω).
    #[arg(long)]
    pub rl: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TestNo {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
}

#[derive(Debug, Args)]
pub struct TransientArgs {
    #[command(flatten)]
    pub common: Common,
    /// Which transient test to run (ignored when the config sets kind = custom).
    #[arg(long, value_enum)]
    pub test: Option<TestNo>,
    /// Simulated time after the step (s).
    #[arg(long)]
    pub duration: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FidelityArg {
    Emt,
    Envelope,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub common: Common,
    /// Enable the AIMD controller.
    #[arg(long, value_enum)]
    pub aimd: Option<OnOff>,
    /// Simulated run time (s).
    #[arg(long)]
    pub duration: Option<f64>,
    /// Charger model fidelity.
    #[arg(long, value_enum)]
    pub fidelity: Option<FidelityArg>,
    /// Load-profile RNG seed override.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Feeder file (or `builtin`).
    #[arg(long, value_name = "FILE")]
    pub feeder: Option<String>,
    /// Profile recipe or series file (or `builtin`).
    #[arg(long, value_name = "FILE")]
    pub profiles: Option<String>,
}

#[derive(Debug, Args)]
pub struct PowerflowArgs {
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Feeder file (default: built-in feeder).
    #[arg(long, value_name = "FILE")]
    pub net: Option<PathBuf>,
    /// Load profile file; `zero` for an unloaded network (default: built-in recipe).
    #[arg(long, value_name = "FILE")]
    pub loads: Option<String>,
    /// Profile time to evaluate the loads at (s).
    #[arg(long, default_value_t = 0.0)]
    pub t: f64,
    /// Real power drawn at the charger node (W).
    #[arg(long = "charger-w", default_value_t = 0.0)]
    pub charger_w: f64,
    /// Slack voltage (pu).
    #[arg(long = "slack-pu", default_value_t = 1.0)]
    pub slack_pu: f64,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// CSV written by design, transient or grid.
    #[arg(long, value_name = "FILE")]
    pub csv: PathBuf,
    /// Output SVG (default: alongside the CSV).
    #[arg(long, value_name = "FILE")]
    pub svg: Option<PathBuf>,
}

/// Runs a parsed invocation and returns the process exit status.
pub fn run(cli: Cli) -> i32 {
    let outcome = match cli.command {
        Command::Design(a) => cmd_design(&a),
        Command::Transient(a) => cmd_transient(&a),
        Command::Grid(a) => cmd_grid(&a),
        Command::Powerflow(a) => cmd_powerflow(&a),
        Command::Plot(a) => cmd_plot(&a),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Parses `args` (including the program name) and runs. Usage errors map
/// to the configuration-error status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            code
        }
    }
}

fn base_config(common: &Common, kind: ScenarioKind) -> Result<ScenarioConfig> {
    match &common.config {
        Some(path) => ScenarioConfig::load(path),
        None => Ok(ScenarioConfig::for_kind(kind)),
    }
}

fn out_dir(common: &Common, cfg: &ScenarioConfig, fallback: &str) -> PathBuf {
    common.out.clone().unwrap_or_else(|| {
        if common.config.is_some() {
            cfg.output.dir.clone()
        } else {
            PathBuf::from("out").join(fallback)
        }
    })
}

fn echo_config(dir: &Path, cfg: &ScenarioConfig) -> Result<()> {
    write_file(dir.join("resolved_config.toml"), &cfg.to_toml())
}

fn cmd_design(a: &DesignArgs) -> Result<()> {
    let mut cfg = base_config(&a.common, ScenarioKind::TransientTest1)?;
    let pr = &mut cfg.control.pr;
    if let Some(v) = a.kp {
        pr.k_p = v;
    }
    if let Some(v) = a.ki {
        pr.k_i = v;
    }
    if let Some(v) = a.omega_c {
        pr.omega_c = v;
    }
    if let Some(v) = a.gain {
        pr.gain = v;
    }
    if let Some(v) = a.fs {
        cfg.converter.f_sw = v;
    }
    if let Some(v) = a.vdc {
        cfg.converter.v_dc_nom = v;
    }
    if let Some(v) = a.rl {
        cfg.converter.r_l = v;
    }
    let dir = out_dir(&a.common, &cfg, "design");
    cfg.output.dir = dir.clone();
    let cfg = cfg.resolve()?;
    let p = &cfg.converter;
    let design = &cfg.control.pr;
    let v_dc = p.v_dc_nom;

    let [gc, gp] = design_loop(design, p, v_dc)?;
    let gd = design.discrete(p.f_sw)?;
    println!("plant G_P(s) = {:.6} / ({:.6e} s + {:.6})", gp.num[2], gp.den[1], gp.den[2]);
    println!("  (V_dc = {v_dc} V, L = {} H, R_L = {} ohm)", p.l_s, p.r_l);
    println!("PR G_c(s)  num = [{:.6}, {:.6}, {:.6}]", gc.num[0], gc.num[1], gc.num[2]);
    println!("           den = [{:.6}, {:.6}, {:.6}]", gc.den[0], gc.den[1], gc.den[2]);
    let (n, d) = (gd.num(), gd.den());
    println!("PR G_c(z)  num = [{:.6}, {:.6}, {:.6}]  (zero-order hold, f_s = {} Hz)", n[0], n[1], n[2], p.f_sw);
    println!("           den = [{:.6}, {:.6}, {:.6}]", d[0], d[1], d[2]);
    println!("|G_c(j w0)| = {:.3}", gc.eval(Complex64::new(0.0, design.omega0)).norm());
    let open_loop = [gc, gp];
    let m = stability_margins(&open_loop)?;
    println!("crossover  = {:.4e} rad/s", m.crossover);
    println!("phase margin = {:.2} deg", m.phase_margin_deg);
    match (m.gain_margin_db, m.phase_crossover) {
        (Some(g), Some(w)) => println!("gain margin  = {g:.2} dB at {w:.4e} rad/s"),
        _ => println!("gain margin  = infinite (phase never reaches -180 deg)"),
    }

    let omegas = log_space(1e0, 1e7, 701);
    let bode = freq_response(&open_loop, &omegas);
    let mut csv = String::from("omega_rad_s,mag_db,phase_deg\n");
    for b in &bode {
        csv.push_str(&format!("{:.6e},{:.6},{:.6}\n", b.omega, b.mag_db, b.phase_deg));
    }
    write_file(dir.join("bode.csv"), &csv)?;
    write_file(dir.join("bode.svg"), &bode_figure(&bode_rows(&csv)?)?)?;
    echo_config(&dir, &cfg)?;
    println!("wrote {}", dir.display());
    Ok(())
}

fn cmd_transient(a: &TransientArgs) -> Result<()> {
    let kind = match a.test {
        Some(TestNo::Two) => ScenarioKind::TransientTest2,
        _ => ScenarioKind::TransientTest1,
    };
    let mut cfg = base_config(&a.common, kind)?;
    if let Some(t) = a.test {
        cfg.run.kind = match t {
            TestNo::One => ScenarioKind::TransientTest1,
            TestNo::Two => ScenarioKind::TransientTest2,
        };
    }
    if let Some(d) = a.duration {
        cfg.run.duration_s = d;
    }
    let dir = out_dir(&a.common, &cfg, cfg.run.kind.as_str());
    cfg.output.dir = dir.clone();
    let cfg = cfg.resolve()?;
    echo_config(&dir, &cfg)?;

    let start = Instant::now();
    let mut log = FastLog::default();
    let result = run_transient_into(&cfg, &mut log);
    let csv = log.to_csv();
    write_file(dir.join("fast_log.csv"), &csv)?;
    if !log.rows.is_empty() {
        write_file(dir.join("transient.svg"), &fast_figure(&fast_rows(&csv)?)?)?;
    }
    result?;
    let tail = log.window(cfg.run.duration_s - 0.05, f64::INFINITY).last().copied();
    if let Some(s) = tail {
        println!("{}: final P = {:.1} W, Q = {:.1} VAR, v_dc = {:.1} V", cfg.run.kind.as_str(), s.p, s.q, s.v_dc);
    }
    println!("{} samples in {:.2?}; wrote {}", log.rows.len(), start.elapsed(), dir.display());
    Ok(())
}

fn cmd_grid(a: &GridArgs) -> Result<()> {
    let mut cfg = base_config(&a.common, ScenarioKind::GridAimd)?;
    if let Some(on) = a.aimd {
        cfg.run.kind = match on {
            OnOff::On => ScenarioKind::GridAimd,
            OnOff::Off => ScenarioKind::GridBaseline,
        };
    }
    if let Some(d) = a.duration {
        cfg.run.duration_s = d;
    }
    if let Some(f) = a.fidelity {
        cfg.run.fidelity = Some(match f {
            FidelityArg::Emt => Fidelity::Emt,
            FidelityArg::Envelope => Fidelity::Envelope,
        });
    }
    if let Some(s) = a.seed {
        cfg.run.seed = Some(s);
    }
    if let Some(f) = &a.feeder {
        cfg.grid.feeder = f.clone();
    }
    if let Some(p) = &a.profiles {
        cfg.grid.profiles = p.clone();
    }
    if cfg.run.kind.is_transient() {
        return Err(Error::Config(format!("grid cannot run a {} scenario", cfg.run.kind.as_str())));
    }
    let dir = out_dir(&a.common, &cfg, cfg.run.kind.as_str());
    cfg.output.dir = dir.clone();
    let cfg = cfg.resolve()?;
    echo_config(&dir, &cfg)?;

    let start = Instant::now();
    let mut log = SlowLog::default();
    let result = run_grid_into(&cfg, &mut log);
    let csv = log.to_csv();
    write_file(dir.join("slow_log.csv"), &csv)?;
    if !log.rows.is_empty() {
        write_file(dir.join("grid.svg"), &slow_figure(&slow_rows(&csv)?)?)?;
    }
    result?;
    if let (Some(v), Some(p)) = (log.min_voltage(), log.mean_power()) {
        println!("{}: min node voltage {v:.2} V, mean charger power {p:.0} W", cfg.run.kind.as_str());
    }
    println!("{} steps in {:.2?}; wrote {}", log.rows.len(), start.elapsed(), dir.display());
    Ok(())
}

fn cmd_powerflow(a: &PowerflowArgs) -> Result<()> {
    let model = match &a.net {
        Some(path) => FeederModel::load(path).map_err(|e| Error::Config(e.to_string()))?,
        None => vhil_core::grid::build_default_feeder(),
    };
    let mut loads = match a.loads.as_deref() {
        Some("zero") => vec![Complex64::new(0.0, 0.0); model.len()],
        Some(path) => LoadProfileSet::load(path, &model).map_err(|e| Error::Config(e.to_string()))?.loads_at(a.t)?,
        None => LoadProfileSet::generate(&vhil_core::grid::default_recipe(), &model)?.loads_at(a.t)?,
    };
    if a.charger_w != 0.0 {
        let c = model
            .charger()
            .ok_or_else(|| Error::Config("--charger-w given but the feeder has no charger node".into()))?;
        loads[c] += Complex64::new(a.charger_w, 0.0);
    }
    let sol = solve_power_flow(&model, &loads, a.slack_pu)?;
    let mut csv = String::from("node,kind,v_pu,v_rms_V,angle_deg\n");
    println!("{:<10} {:<9} {:>10} {:>11} {:>10}", "node", "kind", "|V| pu", "|V| V", "angle deg");
    for (i, n) in model.nodes().iter().enumerate() {
        let v = sol.v_pu[i];
        let rms = node_voltage_rms(&sol, i)?;
        println!("{:<10} {:<9} {:>10.6} {:>11.3} {:>10.4}", n.id, n.kind, v.norm(), rms, v.arg().to_degrees());
        csv.push_str(&format!("{},{},{:.9},{:.6},{:.6}\n", n.id, n.kind, v.norm(), rms, v.arg().to_degrees()));
    }
    println!("losses: {:.3} W + j{:.3} VAR", sol.losses.re, sol.losses.im);
    println!("slack injection: {:.3} W + j{:.3} VAR", sol.slack_power.re, sol.slack_power.im);
    println!("iterations: {}, max mismatch {:.3e} pu", sol.iterations, sol.max_mismatch);
    if let Some(c) = model.charger() {
        println!("charger node {}: {:.3} V", model.node(c).id, node_voltage_rms(&sol, c)?);
    }
    let dir = a.out.clone().unwrap_or_else(|| PathBuf::from("out").join("powerflow"));
    write_file(dir.join("powerflow.csv"), &csv)?;
    let echo = format!(
        "net = {:?}\nloads = {:?}\nt = {}\ncharger_w = {}\nslack_pu = {}\n",
        a.net.as_ref().map_or("builtin".to_string(), |p| p.display().to_string()),
        a.loads.as_deref().unwrap_or("builtin"),
        a.t,
        a.charger_w,
        a.slack_pu
    );
    write_file(dir.join("resolved_config.toml"), &echo)?;
    Ok(())
}

fn cmd_plot(a: &PlotArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.csv).map_err(|e| Error::Config(format!("{}: {e}", a.csv.display())))?;
    let header = text.lines().next().unwrap_or("");
    let svg = if header == vhil_core::scenario::FAST_HEADER {
        fast_figure(&fast_rows(&text)?)?
    } else if header == vhil_core::scenario::SLOW_HEADER {
        slow_figure(&slow_rows(&text)?)?
    } else if header == "omega_rad_s,mag_db,phase_deg" {
        bode_figure(&bode_rows(&text)?)?
    } else {
        return Err(Error::Config(format!("{}: unrecognized CSV header `{header}`", a.csv.display())));
    };
    let out = a.svg.clone().unwrap_or_else(|| a.csv.with_extension("svg"));
    write_file(&out, &svg)?;
    println!("wrote {}", out.display());
    Ok(())
}

/// Numeric columns of a CSV; empty cells read as NaN, text cells are skipped.
fn numeric_rows(text: &str, columns: usize) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Config(format!("csv: {e}")))?;
        let row: Vec<f64> = rec.iter().take(columns).map(|s| s.parse().unwrap_or(f64::NAN)).collect();
        rows.push(row);
    }
    Ok(rows)
}

fn fast_rows(text: &str) -> Result<Vec<Vec<f64>>> {
    numeric_rows(text, 7)
}

fn slow_rows(text: &str) -> Result<Vec<Vec<f64>>> {
    numeric_rows(text, 6)
}

fn bode_rows(text: &str) -> Result<Vec<Vec<f64>>> {
    numeric_rows(text, 3)
}

fn column(rows: &[Vec<f64>], x: usize, y: usize) -> Vec<(f64, f64)> {
    rows.iter().filter(|r| r[y].is_finite()).map(|r| (r[x], r[y])).collect()
}

fn bode_figure(rows: &[Vec<f64>]) -> Result<String> {
    plot::render(&Figure {
        x_label: "ω (rad/s)".into(),
        log_x: true,
        panes: vec![
            Pane {
                title: "Open-loop magnitude".into(),
                y_label: "dB".into(),
                traces: vec![Trace::new("|G_c G_P|", column(rows, 0, 1))],
            },
            Pane {
                title: "Open-loop phase".into(),
                y_label: "deg".into(),
                traces: vec![Trace::new("∠G_c G_P", column(rows, 0, 2))],
            },
        ],
    })
}

/// Grid voltage and current around the setpoint step.
fn fast_figure(rows: &[Vec<f64>]) -> Result<String> {
    let near: Vec<Vec<f64>> = rows.iter().filter(|r| r[0] >= -0.05 && r[0] <= 0.15).cloned().collect();
    let view = if near.is_empty() { rows } else { &near };
    let sparse: Vec<Vec<f64>> = rows.iter().step_by((rows.len() / 2000).max(1)).cloned().collect();
    plot::render(&Figure {
        x_label: "t (s)".into(),
        log_x: false,
        panes: vec![
            Pane {
                title: "Grid voltage".into(),
                y_label: "V".into(),
                traces: vec![Trace::new("v_s", column(view, 0, 1))],
            },
            Pane {
                title: "Grid current".into(),
                y_label: "A".into(),
                traces: vec![Trace::new("i_s", column(view, 0, 2))],
            },
            Pane {
                title: "Filtered power".into(),
                y_label: "W / VAR".into(),
                traces: vec![Trace::new("P", column(&sparse, 0, 5)), Trace::new("Q", column(&sparse, 0, 6))],
            },
        ],
    })
}

fn slow_figure(rows: &[Vec<f64>]) -> Result<String> {
    plot::render(&Figure {
        x_label: "t (s)".into(),
        log_x: false,
        panes: vec![
            Pane {
                title: "Charger node voltage".into(),
                y_label: "V RMS".into(),
                traces: vec![Trace::new("node", column(rows, 0, 1)), Trace::new("V_th", column(rows, 0, 5))],
            },
            Pane {
                title: "Charger power".into(),
                y_label: "W".into(),
                traces: vec![Trace::new("P command", column(rows, 0, 2)), Trace::new("P measured", column(rows, 0, 3))],
            },
        ],
    })
}
