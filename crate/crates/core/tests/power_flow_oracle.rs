mod common;

use num_complex::Complex64;
use proptest::prelude::*;
use vhil_core::grid::{
    build_default_feeder, node_voltage_rms, solve_power_flow, FeederModel, Node, NodeKind, PowerFlowSolution,
};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn max_diff(sol: &PowerFlowSolution, reference: &[Complex64]) -> f64 {
    sol.v_pu.iter().zip(reference).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
}

#[test]
fn two_bus_matches_closed_form() {
    let z = c(0.01, 0.01);
    let model = FeederModel::new(
        vec![
            Node::new("s", None, 1.0, c(0.0, 0.0), NodeKind::Slack),
            Node::new("l", Some("s"), 1.0, z, NodeKind::House),
        ],
        1.0,
    )
    .unwrap();
    for s in [c(0.1, 0.0), c(0.3, 0.1), c(0.5, -0.2), c(0.0, 0.0)] {
        let sol = solve_power_flow(&model, &[c(0.0, 0.0), s], 1.0).unwrap();
        let expected = common::two_bus_closed_form(1.0, z, s);
        assert!((sol.v_pu[1] - expected).norm() <= 1e-8, "S = {s}: {} vs {expected}", sol.v_pu[1]);
    }
}

#[test]
fn two_bus_closed_form_is_self_consistent() {
    let z = c(0.01, 0.01);
    let s = c(0.1, 0.0);
    let v2 = common::two_bus_closed_form(1.0, z, s);
    let v1 = v2 + z * (s / v2).conj();
    assert!((v1 - c(1.0, 0.0)).norm() < 1e-14);
}

fn random_feeder() -> impl Strategy<Value = (FeederModel, Vec<Complex64>)> {
    (2usize..=6)
        .prop_flat_map(|n| {
            (
                Just(n),
                proptest::collection::vec(0.0f64..1.0, n),
                proptest::collection::vec((0.001f64..0.05, 0.001f64..0.05), n),
                proptest::collection::vec(0.95f64..1.05, n),
                proptest::collection::vec((0.0f64..0.3, -0.1f64..0.1), n),
            )
        })
        .prop_map(|(n, parents, zs, ratios, loads)| {
            let mut nodes = vec![Node::new("b0", None, 1.0, c(0.0, 0.0), NodeKind::Slack)];
            for i in 1..n {
                let p = ((parents[i] * i as f64) as usize).min(i - 1);
                let mut node =
                    Node::new(&format!("b{i}"), Some(&format!("b{p}")), 1.0, c(zs[i].0, zs[i].1), NodeKind::Primary);
                node.ratio = ratios[i];
                nodes.push(node);
            }
            let mut s: Vec<Complex64> = loads.iter().map(|&(p, q)| c(p, q)).collect();
            s[0] = c(0.0, 0.0);
            (FeederModel::new(nodes, 1.0).unwrap(), s)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn sweep_agrees_with_newton((model, loads) in random_feeder(), slack in 0.95f64..1.05) {
        let sol = solve_power_flow(&model, &loads, slack).unwrap();
        let reference = common::newton_solve(&model, &loads, slack);
        let diff = max_diff(&sol, &reference);
        prop_assert!(diff <= 1e-8, "max |dV| = {diff}");
    }
}

#[test]
fn default_feeder_power_balance_at_peak() {
    let model = build_default_feeder();
    let loads = common::peak_loads(&model);
    let sol = solve_power_flow(&model, &loads, 1.0).unwrap();
    let demand: Complex64 = loads.iter().sum();
    let expected = demand + sol.losses;
    let rel = (sol.slack_power - expected).norm() / sol.slack_power.norm();
    assert!(rel <= 1e-6, "relative imbalance {rel}");
}

#[test]
fn zero_load_profile_is_exactly_flat() {
    let model = build_default_feeder();
    let sol = solve_power_flow(&model, &vec![c(0.0, 0.0); model.len()], 1.0).unwrap();
    assert!(sol.v_pu.iter().all(|v| *v == c(1.0, 0.0)));
    for i in 0..model.len() {
        let n = model.node(i);
        assert_eq!(node_voltage_rms(&sol, i).unwrap(), n.v_nom);
    }
}

#[test]
fn voltage_magnitude_falls_along_every_path() {
    let model = build_default_feeder();
    let loads = common::peak_loads(&model);
    assert!(loads.iter().all(|s| s.re >= 0.0 && s.im >= 0.0));
    let sol = solve_power_flow(&model, &loads, 1.0).unwrap();
    for i in 1..model.len() {
        let p = model.parent(i).unwrap();
        let (vp, vi) = (sol.v_pu[p].norm(), sol.v_pu[i].norm());
        assert!(vi <= vp + 1e-12, "{} ({vi}) above parent {} ({vp})", model.node(i).id, model.node(p).id);
    }
}

#[test]
fn charger_voltage_falls_with_uniform_loading() {
    let model = build_default_feeder();
    let base = common::peak_loads(&model);
    let ch = model.charger().unwrap();
    let mut last = f64::INFINITY;
    for step in 1..=24 {
        let k = step as f64 * 0.05;
        let loads: Vec<Complex64> = base.iter().map(|s| s * k).collect();
        let sol = solve_power_flow(&model, &loads, 1.0).unwrap();
        let v = node_voltage_rms(&sol, ch).unwrap();
        assert!(v < last, "k = {k}: {v} V not below {last} V");
        last = v;
    }
}
