//! Mode dispatch and report assembly.
//!
//! Reports are JSON objects with sorted keys. They carry the resolved
//! configuration and seed and no timings, so identical inputs give
//! byte-identical reports.

use serde::Serialize;
use serde_json::{json, Value};

use super::config::{Mode, RunConfig};
use super::counts::{load_count_table, write_count_table};
use crate::channel::{simulate_session, ChannelParams, Session, SimOptions};
use crate::decoy::{analyze_counts, direct_keyrate};
use crate::error::{Error, Result};
use crate::pairing::{expected_pairs_heuristic, pairing_rate, sample_pairing_rate};
use crate::phase::{estimate_track, reference_error_proxy, PhaseEstimate};
use crate::pipeline::{run_pipeline, tagged_truth, PipelineOutput, LENGTH_EDGES};
use crate::sift::CountTable;

/// Products of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub report: Value,
    /// Sweep curve (`distance_km,eta,R,X_error,n_pairs`).
    pub curve_csv: Option<String>,
    /// Count table of a simulated session.
    pub counts_csv: Option<String>,
}

impl RunOutput {
    /// Pretty-printed report with a trailing newline.
    pub fn report_text(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.report).expect("report is serializable");
        s.push('\n');
        s
    }
}

fn to_value(x: &impl Serialize) -> Value {
    serde_json::to_value(x).expect("report values are serializable")
}

/// Runs `mode` on `config`. `counts` overrides `config.counts` in analyze mode.
pub fn run(config: &RunConfig, mode: Mode, counts: Option<&CountTable>) -> Result<RunOutput> {
    config.validate_for(mode)?;
    let mut resolved = config.clone();
    resolved.mode = Some(mode);
    let (result, curve_csv, counts_csv) = match mode {
        Mode::DirectKeyrate => {
            let d = config.direct.as_ref().expect("checked by validate_for");
            (to_value(&direct_keyrate(d)?), None, None)
        }
        Mode::Analyze => {
            let loaded;
            let table = match (counts, &config.counts) {
                (Some(t), _) => t,
                (None, Some(path)) => {
                    loaded = load_count_table(path)?;
                    &loaded
                }
                (None, None) => {
                    return Err(Error::Validation(vec![
                        "analyze needs a count table (--counts or 'counts')".into(),
                    ]))
                }
            };
            let report = analyze_counts(table, &config.protocol)?;
            (json!({ "counts": counts_value(table), "key_rate": report }), None, None)
        }
        Mode::PairingRate => (pairing_result(config)?, None, None),
        Mode::PhaseEstimate => {
            let session = simulate(config, &config.channel)?;
            let est = estimate_track(&session, &config.phase)?;
            (
                json!({ "session": session_value(&session), "phase": phase_value(&session, &est, config)? }),
                None,
                None,
            )
        }
        Mode::Simulate => {
            let session = simulate(config, &config.channel)?;
            let out = run_pipeline(&session, &config.protocol, &config.phase, config.compensation)?;
            let csv = write_count_table(&out.counts);
            (simulation_value(&session, &out, config)?, None, Some(csv))
        }
        Mode::Sweep => {
            let (v, csv) = sweep(config)?;
            (v, Some(csv), None)
        }
    };
    let report = json!({
        "tool": "mpqkd",
        "version": env!("CARGO_PKG_VERSION"),
        "mode": mode.name(),
        "seed": config.seed,
        "config": resolved,
        "result": result,
    });
    Ok(RunOutput {
        report,
        curve_csv,
        counts_csv,
    })
}

fn simulate(config: &RunConfig, channel: &ChannelParams) -> Result<Session> {
    simulate_session(
        &config.protocol,
        channel,
        config.n_cycles,
        config.seed,
        SimOptions::default(),
    )
}

fn counts_value(table: &CountTable) -> Value {
    let rows: Vec<Value> = table
        .iter()
        .map(|(c, x)| json!({ "class": c.to_string(), "sent": x.sent, "total": x.total, "error": x.error }))
        .collect();
    json!({ "n_rounds": table.n_rounds(), "classes": rows })
}

fn session_value(s: &Session) -> Value {
    json!({
        "n_cycles": s.n_cycles,
        "n_slots": s.n_slots(),
        "n_qkd_rounds": s.n_qkd_rounds(),
        "clicks": s.clicks.len(),
        "qkd_valid_clicks": s.qkd_valid_clicks(),
    })
}

fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let i = ((sorted.len() - 1) as f64 * q).round() as usize;
    Some(sorted[i])
}

fn phase_value(session: &Session, est: &PhaseEstimate, config: &RunConfig) -> Result<Value> {
    let tau = session.pulse_interval;
    let span = config.phase.mle.max_gap.unwrap_or(2000) as f64;
    let traj = &session.truth.trajectory;
    let mut errs: Vec<f64> = est
        .estimates
        .iter()
        .map(|e| {
            let idx = ((e.t / tau).round() as u64).min(traj.n_slots().saturating_sub(1));
            (e.delta_omega - traj.omega_at(idx)).abs() * tau * span
        })
        .collect();
    errs.sort_by(f64::total_cmp);
    let bins = reference_error_proxy(session, &est.track, &LENGTH_EDGES)?;
    let bins: Vec<Value> = bins
        .iter()
        .map(|b| json!({ "lo": b.lo, "hi": b.hi, "pairs": b.pairs, "errors": b.errors, "rate": b.rate() }))
        .collect();
    Ok(json!({
        "n_groups": est.estimates.len(),
        "sign_ambiguous": est.sign_ambiguous,
        "track": est.track,
        "group_phase_error_rad": {
            "span_slots": span,
            "median": quantile(&errs, 0.5),
            "p90": quantile(&errs, 0.9),
        },
        "reference_error": bins,
    }))
}

fn simulation_value(session: &Session, out: &PipelineOutput, config: &RunConfig) -> Result<Value> {
    let truth = tagged_truth(session, &out.sifted);
    let (key_rate, analysis_error) = match analyze_counts(&out.counts, &config.protocol) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let phase = match &out.phase {
        Some(est) => Some(phase_value(session, est, config)?),
        None => None,
    };
    Ok(json!({
        "session": session_value(session),
        "pairing": out.pairing,
        "counts": counts_value(&out.counts),
        "x_error": out.x_error(),
        "z_qber": out.z_qber(),
        "key_rate": key_rate,
        "analysis_error": analysis_error,
        "truth": {
            "m11_z": truth.m11_z,
            "x11_pairs": truth.x11_pairs,
            "x11_errors": truth.x11_errors,
            "e11": truth.e11(),
        },
        "phase": phase,
    }))
}

fn pairing_result(config: &RunConfig) -> Result<Value> {
    let setup = config.pairing.as_ref().expect("checked by validate_for");
    let mut points = Vec::new();
    for (i, pt) in setup.points.iter().enumerate() {
        let r = pairing_rate(pt.p, pt.l_min, pt.l_max)?;
        let sample = match setup.monte_carlo_rounds {
            Some(n) => {
                let s = sample_pairing_rate(pt.p, pt.l_min, pt.l_max, n, config.seed.wrapping_add(i as u64))?;
                let z = if s.std_error > 0.0 {
                    (s.rate - r) / s.std_error
                } else {
                    0.0
                };
                Some(json!({ "sample": s, "z_score": z }))
            }
            None => None,
        };
        points.push(json!({
            "p": pt.p,
            "l_min": pt.l_min,
            "l_max": pt.l_max,
            "pairing_rate": r,
            "p_times_l_max": expected_pairs_heuristic(pt.p, pt.l_max),
            "monte_carlo": sample,
        }));
    }
    Ok(json!({ "points": points }))
}

fn sweep(config: &RunConfig) -> Result<(Value, String)> {
    let setup = config.sweep.as_ref().expect("checked by validate_for");
    let mut w = csv::Writer::from_writer(Vec::new());
    let header = ["distance_km", "eta", "R", "X_error", "n_pairs"];
    w.write_record(header).expect("in-memory write");
    let mut points = Vec::new();
    for &d in &setup.distances_km {
        let channel = ChannelParams {
            distance_a_km: d / 2.0,
            distance_b_km: d / 2.0,
            transmittance_a: None,
            transmittance_b: None,
            ..config.channel.clone()
        };
        let session = simulate(config, &channel)?;
        let out = run_pipeline(&session, &config.protocol, &config.phase, config.compensation)
            .map_err(|e| Error::Runtime(format!("sweep at {d} km: {e}")))?;
        let key = analyze_counts(&out.counts, &config.protocol).ok();
        let r = key.as_ref().map_or(0.0, |k| k.key_rate_per_pair);
        let eta = channel.eta_a();
        let x_err = out.x_error();
        w.write_record([
            d.to_string(),
            eta.to_string(),
            r.to_string(),
            x_err.map_or(String::new(), |x| x.to_string()),
            out.pairing.n_pairs.to_string(),
        ])
        .expect("in-memory write");
        points.push(json!({
            "distance_km": d,
            "eta": eta,
            "R": r,
            "X_error": x_err,
            "n_pairs": out.pairing.n_pairs,
            "z_qber": out.z_qber(),
            "key_rate": key,
        }));
    }
    let csv = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii");
    Ok((json!({ "points": points }), csv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoy::DirectInputs;

    #[test]
    fn direct_mode_echoes_config_and_seed() {
        let cfg = RunConfig {
            seed: 9,
            direct: Some(DirectInputs {
                m11_lower: 1.07e8,
                e11_upper: 0.2474,
                m_mumu: 207_389_568.0,
                e_mumu: 3.10e-4,
                n_rounds: 5.07e11,
                ec_efficiency: 1.1,
            }),
            ..Default::default()
        };
        let out = run(&cfg, Mode::DirectKeyrate, None).unwrap();
        assert_eq!(out.report["seed"], 9);
        assert_eq!(out.report["mode"], "direct-keyrate");
        assert_eq!(out.report["config"]["direct"]["m11_lower"], 1.07e8);
        let r = out.report["result"]["key_rate_per_pair"].as_f64().unwrap();
        assert!((r / 7.75e-5 - 1.0).abs() < 0.02, "{r}");
    }

    #[test]
    fn analyze_without_table_is_user_error() {
        let err = run(&RunConfig::default(), Mode::Analyze, None).unwrap_err();
        assert!(err.is_user_error());
    }

    #[test]
    fn small_simulation_is_reproducible() {
        let cfg = RunConfig {
            n_cycles: 4,
            seed: 3,
            compensation: crate::pipeline::Compensation::GroundTruth,
            ..Default::default()
        };
        let a = run(&cfg, Mode::Simulate, None).unwrap();
        let b = run(&cfg, Mode::Simulate, None).unwrap();
        assert_eq!(a.report_text(), b.report_text());
        assert!(a.counts_csv.is_some());
        assert!(a.report["result"]["counts"]["n_rounds"].as_u64().unwrap() == 4 * 44483);
    }

    #[test]
    fn sweep_curve_has_one_row_per_distance() {
        let cfg = RunConfig {
            n_cycles: 2,
            compensation: crate::pipeline::Compensation::Disabled,
            sweep: Some(super::super::config::SweepSpec {
                distances_km: vec![50.0, 150.0],
            }),
            ..Default::default()
        };
        let out = run(&cfg, Mode::Sweep, None).unwrap();
        let csv = out.curve_csv.unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "distance_km,eta,R,X_error,n_pairs");
        assert_eq!(lines.len(), 3);
    }
}
