//! Backward-forward sweep power flow for radial feeders with constant-power
//! loads.

use num_complex::Complex64;

use super::feeder::FeederModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowOptions {
    /// Convergence threshold on the largest per-unit voltage change.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self { tolerance: 1e-8, max_iterations: 50 }
    }
}

#[derive(Debug, Clone)]
pub struct PowerFlowSolution {
    /// Per-unit node voltages, indexed like the model.
    pub v_pu: Vec<Complex64>,
    /// Per-unit current in the branch feeding each node, on the node side.
    pub i_branch_pu: Vec<Complex64>,
    /// Complex power drawn from the slack (VA).
    pub slack_power: Complex64,
    /// Total series losses (W + jVAR).
    pub losses: Complex64,
    pub iterations: usize,
    /// Largest per-unit power mismatch at any node.
    pub max_mismatch: f64,
    v_nom: Vec<f64>,
}

impl PowerFlowSolution {
    pub fn v_volts(&self, i: usize) -> Complex64 {
        self.v_pu[i] * self.v_nom[i]
    }
}

/// Solves with default options. `loads` holds the demand at every node in
/// W + jVAR (consumption positive).
pub fn solve_power_flow(model: &FeederModel, loads: &[Complex64], slack_pu: f64) -> Result<PowerFlowSolution> {
    solve_power_flow_with(model, loads, slack_pu, FlowOptions::default())
}

pub fn solve_power_flow_with(
    model: &FeederModel,
    loads: &[Complex64],
    slack_pu: f64,
    opts: FlowOptions,
) -> Result<PowerFlowSolution> {
    let n = model.len();
    if loads.len() != n {
        return Err(Error::Topology(format!("{} loads given for {} nodes", loads.len(), n)));
    }
    if let Some(i) = loads.iter().position(|s| !s.is_finite()) {
        return Err(Error::Topology(format!("non-finite load at node `{}`", model.node(i).id)));
    }
    if !(slack_pu > 0.0 && slack_pu.is_finite()) {
        return Err(Error::param("slack_pu", format!("must be positive, got {slack_pu}")));
    }
    let s_pu: Vec<Complex64> = loads.iter().map(|s| s / model.s_base()).collect();
    let zero = Complex64::new(0.0, 0.0);

    let mut v = vec![Complex64::new(slack_pu, 0.0); n];
    // Flat start through the nominal taps.
    for i in 1..n {
        let p = model.parent(i).expect("non-root");
        v[i] = v[p] / model.tap(i);
    }
    let mut i_branch = vec![zero; n];
    let mut injected = vec![zero; n];
    let mut last_change = f64::INFINITY;

    for iter in 1..=opts.max_iterations {
        for i in 0..n {
            injected[i] = (s_pu[i] / v[i]).conj();
        }
        // Backward: children always follow their parent in model order.
        for i in (1..n).rev() {
            let downstream: Complex64 = model.children(i).iter().map(|&c| i_branch[c] / model.tap(c)).sum();
            i_branch[i] = injected[i] + downstream;
        }
        let mut change: f64 = 0.0;
        for i in 1..n {
            let p = model.parent(i).expect("non-root");
            let next = v[p] / model.tap(i) - model.z_pu(i) * i_branch[i];
            change = change.max((next - v[i]).norm());
            v[i] = next;
        }
        if !change.is_finite() || v.iter().any(|x| x.norm() < 1e-6) {
            return Err(Error::Divergence { iterations: iter, last_change: change });
        }
        last_change = change;
        if change < opts.tolerance {
            let mismatch = (1..n).map(|i| (v[i] * injected[i].conj() - s_pu[i]).norm()).fold(0.0, f64::max);
            // Re-derive currents from the final voltages so the reported
            // flows serve the loads exactly.
            for i in 0..n {
                injected[i] = (s_pu[i] / v[i]).conj();
            }
            for i in (1..n).rev() {
                let downstream: Complex64 = model.children(i).iter().map(|&c| i_branch[c] / model.tap(c)).sum();
                i_branch[i] = injected[i] + downstream;
            }
            let root_out: Complex64 = model.children(0).iter().map(|&c| i_branch[c] / model.tap(c)).sum();
            let slack_power = (v[0] * (root_out + injected[0]).conj()) * model.s_base();
            let losses: Complex64 =
                (1..n).map(|i| model.z_pu(i) * i_branch[i].norm_sqr()).sum::<Complex64>() * model.s_base();
            return Ok(PowerFlowSolution {
                v_pu: v,
                i_branch_pu: i_branch,
                slack_power,
                losses,
                iterations: iter,
                max_mismatch: mismatch,
                v_nom: model.nodes().iter().map(|n| n.v_nom).collect(),
            });
        }
    }
    Err(Error::Divergence { iterations: opts.max_iterations, last_change })
}

/// RMS magnitude of node `i` in volts.
pub fn node_voltage_rms(solution: &PowerFlowSolution, i: usize) -> Result<f64> {
    if i >= solution.v_pu.len() {
        return Err(Error::Topology(format!("node index {i} out of range")));
    }
    Ok(solution.v_volts(i).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::feeder::{build_default_feeder, Node, NodeKind};
    use approx::assert_relative_eq;

    #[test]
    fn zero_load_is_flat() {
        let m = build_default_feeder();
        let sol = solve_power_flow(&m, &vec![Complex64::new(0.0, 0.0); m.len()], 1.0).unwrap();
        for (i, v) in sol.v_pu.iter().enumerate() {
            assert_eq!(*v, Complex64::new(1.0, 0.0), "node {}", m.node(i).id);
        }
        assert_eq!(sol.losses, Complex64::new(0.0, 0.0));
        assert_eq!(node_voltage_rms(&sol, m.charger().unwrap()).unwrap(), 240.0);
    }

    #[test]
    fn single_load_drop_direction() {
        let m = build_default_feeder();
        let c = m.charger().unwrap();
        let mut loads = vec![Complex64::new(0.0, 0.0); m.len()];
        loads[c] = Complex64::new(10_000.0, 0.0);
        let sol = solve_power_flow(&m, &loads, 1.0).unwrap();
        let v = node_voltage_rms(&sol, c).unwrap();
        assert!(v < 240.0 && v > 230.0, "{v}");
        assert_relative_eq!(sol.slack_power.re, 10_000.0 + sol.losses.re, max_relative = 1e-9);
    }

    #[test]
    fn collapse_reports_divergence() {
        let z = Complex64::new(0.5, 0.5);
        let m = FeederModel::new(
            vec![Node::new("s", None, 1.0, z, NodeKind::Slack), Node::new("a", Some("s"), 1.0, z, NodeKind::House)],
            1.0,
        )
        .unwrap();
        let loads = [Complex64::new(0.0, 0.0), Complex64::new(5.0, 0.0)];
        assert!(matches!(solve_power_flow(&m, &loads, 1.0), Err(Error::Divergence { .. })));
    }
}
