use std::path::PathBuf;

use mpqkd::channel::{simulate_session, SimOptions};
use mpqkd::decoy::analyze_counts;
use mpqkd::io::{load_config, load_count_table, parse_count_table, run, write_count_table, Mode, RunConfig};
use mpqkd::pipeline::{run_pipeline, tagged_truth, Compensation};
use mpqkd::sift::{Basis, CountClass, SideSum};

fn root(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

#[test]
fn bundled_101_km_config_loads() {
    let cfg = load_config(root("configs/km101.json")).unwrap();
    assert_eq!(cfg.protocol.mu, 0.309);
    assert_eq!(cfg.protocol.nu, 0.032);
    assert_eq!(cfg.protocol.l_max, 500);
    assert_eq!(cfg.protocol.epsilon, 1e-10);
    assert_eq!(cfg.protocol.ec_efficiency, 1.1);
}

#[test]
fn every_bundled_config_validates() {
    for name in ["km101", "km202", "km304", "km407", "pairing_rates", "sweep"] {
        load_config(root(&format!("configs/{name}.json"))).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn measured_tables_load() {
    let t = load_count_table(root("fixtures/km101_counts.csv")).unwrap();
    let key = t.get(CountClass::new(Basis::Z, SideSum::Mu, SideSum::Mu));
    assert_eq!(key.total, 207_389_568);
    assert_eq!(key.error, 64_238);
    assert_eq!(t.n_rounds(), 507_106_200_000);
    for d in [202, 304, 407] {
        load_count_table(root(&format!("fixtures/km{d}_counts.csv"))).unwrap();
    }
}

#[test]
fn measured_single_photon_bounds_are_close_to_reported() {
    // Reported M11 lower bounds per distance; the Z estimator should land within 5%.
    for (d, m11) in [(101, 1.07e8), (202, 5.03e7), (304, 4.51e6), (407, 6.02e6)] {
        let cfg = load_config(root(&format!("configs/km{d}.json"))).unwrap();
        let t = load_count_table(root(&format!("fixtures/km{d}_counts.csv"))).unwrap();
        let r = analyze_counts(&t, &cfg.protocol).unwrap();
        let rel = r.m11_lower / m11 - 1.0;
        assert!(rel.abs() < 0.05, "{d} km: {} vs {m11}", r.m11_lower);
        assert!(r.key_length >= 0.0);
    }
}

#[test]
fn simulated_table_round_trips_and_is_consistent() {
    let cfg = load_config(root("configs/km101.json")).unwrap();
    let session = simulate_session(&cfg.protocol, &cfg.channel, 20, 11, SimOptions::default()).unwrap();
    let out = run_pipeline(&session, &cfg.protocol, &cfg.phase, Compensation::GroundTruth).unwrap();
    let text = write_count_table(&out.counts);
    assert_eq!(parse_count_table(&text).unwrap(), out.counts);

    let tallied: u64 = out.counts.iter().map(|(_, x)| x.total).sum();
    assert!(tallied <= out.pairing.n_pairs);
    let sent: u64 = out
        .counts
        .iter()
        .filter(|(c, _)| c.basis == Basis::Z)
        .map(|(_, x)| x.sent)
        .sum();
    assert_eq!(sent, session.n_qkd_rounds());

    let truth = tagged_truth(&session, &out.sifted);
    let key = out.counts.get(CountClass::new(Basis::Z, SideSum::Mu, SideSum::Mu));
    assert!(truth.m11_z <= key.total);
    assert!(truth.m11_z > 0);
}

#[test]
fn compensation_separates_error_rates() {
    let cfg = load_config(root("configs/km101.json")).unwrap();
    let session = simulate_session(&cfg.protocol, &cfg.channel, 60, 4, SimOptions::default()).unwrap();
    let truth = run_pipeline(&session, &cfg.protocol, &cfg.phase, Compensation::GroundTruth).unwrap();
    let off = run_pipeline(&session, &cfg.protocol, &cfg.phase, Compensation::Disabled).unwrap();
    let (x_t, x_off) = (truth.x_error().unwrap(), off.x_error().unwrap());
    assert!(x_t < 0.40 && x_off > 0.40, "{x_t} {x_off}");
    assert!(truth.z_qber().unwrap() < 2e-3);
}

#[test]
fn report_is_stable_and_echoes_seed() {
    let cfg = RunConfig {
        seed: 77,
        n_cycles: 3,
        compensation: Compensation::Disabled,
        ..Default::default()
    };
    let a = run(&cfg, Mode::Simulate, None).unwrap().report_text();
    let b = run(&cfg, Mode::Simulate, None).unwrap().report_text();
    assert_eq!(a, b);
    let v: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert_eq!(v["seed"], 77);
    assert_eq!(v["config"]["n_cycles"], 3);
    let resolved: RunConfig = serde_json::from_value(v["config"].clone()).unwrap();
    assert_eq!(resolved.seed, 77);
}
