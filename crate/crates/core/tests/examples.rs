//! Every bundled example runs and produces the values it advertises.

macro_rules! example {
    ($name:ident) => {
        #[allow(dead_code)]
        mod $name {
            include!(concat!(
                env!("CARGO_MANIFEST_DIR"),
                "/examples/",
                stringify!($name),
                ".rs"
            ));
        }
    };
}

example!(rc_thevenin);
example!(max_power_transfer);
example!(oracle_cross_check);
example!(hamiltonian_round_trip);
example!(duality_identity);
example!(passivity_certificates);
example!(structured_loads);
example!(dual_derivatives);
example!(perturbation_suite);
example!(config_run);

#[test]
fn rc_thevenin_matches_closed_form() {
    let r = rc_thevenin::run_example().unwrap();
    // û = (V − Q₀/C) / (2R + T/C) with V = C = R = T = 1, Q₀ = 0
    let u = 1.0 / (2.0 + 1.0);
    assert!((r.u_min - u).abs() < 1e-9 && (r.u_max - u).abs() < 1e-9);
    // −P = ∫ (V − x/C − R·u)u dt with x = u·t
    let energy = (1.0 - u) * u - u * u / 2.0;
    assert!((r.extracted_energy - energy).abs() < 1e-9);
    // y_L = y_S − y = 1 − u·t − u
    assert!((r.load_start - (1.0 - u)).abs() < 1e-9);
    assert!((r.load_end - (1.0 - 2.0 * u)).abs() < 1e-9);
}

#[test]
fn max_power_transfer_is_half_the_short_circuit_current() {
    let (u, energy) = max_power_transfer::run_example().unwrap();
    let (v, r) = (3.0, 2.0);
    assert_eq!(u, v / (2.0 * r));
    assert!((energy - v * v / (4.0 * r)).abs() < 1e-12);
}

#[test]
fn oracle_agrees_with_shooting() {
    let c = oracle_cross_check::run_example().unwrap();
    assert!(c.l2_distance < 1e-4, "{}", c.l2_distance);
    assert!((c.shooting_power - c.oracle_power).abs() < 1e-8);
}

#[test]
fn round_trip_recovers_input() {
    let err = hamiltonian_round_trip::run_example().unwrap();
    assert!(err < 1e-6, "{err}");
}

#[test]
fn duality_residual_has_fourth_order() {
    let rows = duality_identity::run_example().unwrap();
    for w in rows.windows(2) {
        let order = (w[0].1 / w[1].1).log2();
        assert!((order - 4.0).abs() < 0.3, "{rows:?}");
    }
}

#[test]
fn passivity_verdicts() {
    use optimal_load::power::Verdict::*;
    let verdicts: Vec<_> = passivity_certificates::run_example()
        .unwrap()
        .into_iter()
        .map(|(_, v)| v)
        .collect();
    assert_eq!(verdicts, vec![PositiveReal, NotPositiveReal, NotApplicable]);
}

#[test]
fn structured_loads_report() {
    let o = structured_loads::run_example().unwrap();
    assert_eq!(o.load_capacitance, -1.0);
    assert!(o.rc_discrepancy < 1e-10);
    assert!(o.quartic_discrepancy < 1e-6);
    assert!(o.quartic_frozen_discrepancy > 1e-3);
}

#[test]
fn dual_derivatives_match_hand_calculus() {
    let (v, g, h) = dual_derivatives::run_example().unwrap();
    let (x, u, k) = (0.5_f64, 0.3_f64, 2.0);
    let e = (x * u).exp();
    assert!((v - (k * x * x * u.sin() + e)).abs() < 1e-14);
    assert!((g[0] - (2.0 * k * x * u.sin() + u * e)).abs() < 1e-14);
    assert!((g[1] - (k * x * x * u.cos() + x * e)).abs() < 1e-14);
    assert!((h[0][0] - (2.0 * k * u.sin() + u * u * e)).abs() < 1e-13);
    assert!((h[0][1] - (2.0 * k * x * u.cos() + e + x * u * e)).abs() < 1e-13);
    assert!((h[1][1] - (-k * x * x * u.sin() + x * x * e)).abs() < 1e-13);
    assert_eq!(h[0][1], h[1][0]);
}

#[test]
fn perturbations_separate_optimum_from_shifted_input() {
    let (good, bad) = perturbation_suite::run_example().unwrap();
    assert!(good >= -1e-8);
    assert!(bad < 0.0);
}

#[test]
fn config_run_writes_outputs() {
    let out = config_run::run_example().unwrap();
    assert!(out.join("trajectory.csv").exists());
    assert!(out.join("summary.json").exists());
    std::fs::remove_dir_all(out).unwrap();
}
