mod common;

use vhil_core::converter::{bridge_powers, step_converter, ConverterParams, ConverterState};

#[test]
fn energy_balance_at_switching_rate() {
    let rel = common::energy_balance_rated();
    assert!(rel <= 1e-6, "relative residual {rel}");
    let (_, scale) = common::energy_residual(1.0 / 72_000.0, 0.2, |_| 0.0);
    assert!(scale > 0.0);
}

#[test]
fn energy_residual_shrinks_fourth_order() {
    let ratio = common::energy_order_ratio();
    assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn state_error_shrinks_fourth_order() {
    let p = ConverterParams::default();
    // Constant m keeps the input independent of the step grid; small
    // enough that the bus never reaches its floor.
    let run = |dt: f64| {
        let mut s = ConverterState { i_s: 0.0, v_dc: 500.0, t: 0.0 };
        for _ in 0..(0.05 / dt).round() as usize {
            s = step_converter(&s, 0.02, 240.0, dt, &p).unwrap().0;
        }
        s
    };
    let reference = run(1.0 / 64_000.0);
    assert!(reference.v_dc > 0.0);
    let err = |s: ConverterState| ((s.i_s - reference.i_s).powi(2) + (s.v_dc - reference.v_dc).powi(2)).sqrt();
    let e1 = err(run(1.0 / 2_000.0));
    let e2 = err(run(1.0 / 4_000.0));
    let ratio = e1 / e2;
    assert!((12.0..=20.0).contains(&ratio), "ratio {ratio} ({e1}, {e2})");
}

#[test]
fn bridge_is_lossless() {
    for &(m, i, v) in &[(0.3, 41.6, 500.0), (-1.0, -12.0, 340.0), (0.999, 0.0, 800.0), (0.0, 50.0, 500.0)] {
        let (ac, dc) = bridge_powers(m, i, v);
        assert_eq!(ac, dc);
    }
}

#[test]
fn small_signal_response_matches_plant() {
    for w in common::PLANT_TEST_FREQS {
        let rel = common::plant_response_error(w);
        assert!(rel <= 0.01, "w = {w}: relative error {rel}");
    }
}
