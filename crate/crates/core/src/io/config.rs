//! Run configuration (JSON).
//!
//! Units: photon numbers are dimensionless, times in seconds, angular
//! frequencies in rad/s, rates per second, attenuation in dB/km, distances
//! in km.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::ChannelParams;
use crate::decoy::DirectInputs;
use crate::error::{Error, Result, Violations};
use crate::phase::PhaseOptions;
use crate::pipeline::Compensation;
use crate::protocol::ProtocolParams;

/// Pipeline selected by a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Simulate a session and run the full post-processing chain.
    Simulate,
    /// Key rate from a measured count table.
    Analyze,
    /// Key rate from verbatim inputs.
    DirectKeyrate,
    /// Analytic and sampled pairing rates.
    PairingRate,
    /// Strong-pulse frequency tracking on a simulated session.
    PhaseEstimate,
    /// Simulated key rate over a list of distances.
    Sweep,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Simulate => "simulate",
            Mode::Analyze => "analyze",
            Mode::DirectKeyrate => "direct-keyrate",
            Mode::PairingRate => "pairing-rate",
            Mode::PhaseEstimate => "phase-estimate",
            Mode::Sweep => "sweep",
        }
    }
}

/// One analytic pairing-rate query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairingPoint {
    /// Single-round click probability.
    pub p: f64,
    #[serde(default = "default_l_min")]
    pub l_min: u64,
    pub l_max: u64,
}

fn default_l_min() -> u64 {
    63
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairingSpec {
    pub points: Vec<PairingPoint>,
    /// Rounds per Monte Carlo stream; no sampling when absent.
    #[serde(default)]
    pub monte_carlo_rounds: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Total Alice–Bob distances (km), split evenly between the two links.
    pub distances_km: Vec<f64>,
}

/// Files written by the command-line front end.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    /// Report file; stdout when absent.
    #[serde(default)]
    pub report: Option<PathBuf>,
    /// Curve CSV of a sweep.
    #[serde(default)]
    pub curve: Option<PathBuf>,
    /// Count table CSV of a simulation.
    #[serde(default)]
    pub counts: Option<PathBuf>,
}

/// Everything a run needs. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub seed: u64,
    /// Frame cycles simulated (each carries `frame.n_qkd` QKD rounds).
    #[serde(default = "default_n_cycles")]
    pub n_cycles: u64,
    #[serde(default)]
    pub protocol: ProtocolParams,
    #[serde(default)]
    pub channel: ChannelParams,
    #[serde(default)]
    pub phase: PhaseOptions,
    #[serde(default)]
    pub compensation: Compensation,
    /// Count table analyzed in `analyze` mode.
    #[serde(default)]
    pub counts: Option<PathBuf>,
    #[serde(default)]
    pub direct: Option<DirectInputs>,
    #[serde(default)]
    pub pairing: Option<PairingSpec>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub output: OutputPaths,
}

fn default_n_cycles() -> u64 {
    100
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: None,
            seed: 0,
            n_cycles: default_n_cycles(),
            protocol: ProtocolParams::default(),
            channel: ChannelParams::default(),
            phase: PhaseOptions::default(),
            compensation: Compensation::default(),
            counts: None,
            direct: None,
            pairing: None,
            sweep: None,
            output: OutputPaths::default(),
        }
    }
}

impl RunConfig {
    fn violations(&self) -> Violations {
        let mut v = self.protocol.violations();
        v.extend(self.channel.violations());
        v.extend(self.phase.violations(self.protocol.pulse_interval));
        v.check(self.n_cycles >= 1, || "n_cycles must be >= 1".into());
        if let Some(d) = &self.direct {
            v.check(d.m11_lower >= 0.0 && d.m_mumu >= 0.0, || {
                "direct: counts must be non-negative".into()
            });
            v.check(
                (0.0..=1.0).contains(&d.e11_upper) && (0.0..=1.0).contains(&d.e_mumu),
                || "direct: error rates must lie in [0, 1]".into(),
            );
            v.check(d.n_rounds > 0.0, || "direct: n_rounds must be positive".into());
            v.check(d.ec_efficiency >= 1.0, || "direct: ec_efficiency must be >= 1".into());
        }
        if let Some(ps) = &self.pairing {
            for (i, pt) in ps.points.iter().enumerate() {
                v.check(pt.p > 0.0 && pt.p < 1.0, || {
                    format!("pairing.points[{i}]: p must lie in (0, 1)")
                });
                v.check(1 <= pt.l_min && pt.l_min <= pt.l_max, || {
                    format!("pairing.points[{i}]: need 1 <= l_min <= l_max")
                });
            }
            v.check(ps.monte_carlo_rounds != Some(0), || {
                "pairing.monte_carlo_rounds must be positive".into()
            });
        }
        if let Some(s) = &self.sweep {
            v.check(!s.distances_km.is_empty(), || "sweep.distances_km is empty".into());
            v.check(s.distances_km.iter().all(|d| d.is_finite() && *d >= 0.0), || {
                "sweep.distances_km must be finite and non-negative".into()
            });
        }
        v
    }

    /// Checks every parameter invariant and reports all violations together.
    pub fn validate(&self) -> Result<()> {
        self.violations().into_result()
    }

    /// Checks that the sections `mode` depends on are present.
    pub fn validate_for(&self, mode: Mode) -> Result<()> {
        let mut v = self.violations();
        match mode {
            Mode::DirectKeyrate => v.check(self.direct.is_some(), || {
                "direct-keyrate needs a 'direct' section".into()
            }),
            Mode::PairingRate => v.check(self.pairing.as_ref().is_some_and(|p| !p.points.is_empty()), || {
                "pairing-rate needs a non-empty 'pairing.points' list".into()
            }),
            Mode::Sweep => v.check(self.sweep.is_some(), || "sweep needs a 'sweep' section".into()),
            _ => {}
        }
        v.into_result()
    }
}

/// Parses and validates a configuration.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}
