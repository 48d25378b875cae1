//! Protocol-level domain types, the pulse-frame schedule and shared math.
//!
//! A session is a repetition of fixed cycles. Each cycle starts with a block
//! of unmodulated strong reference pulses, followed by a vacuum recovery gap
//! and then the QKD region in which Alice and Bob draw intensities from
//! `{0, ν, μ}` and phases from a `D`-point grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violations};

/// Intensity setting of a single pulse on one side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum IntensityLabel {
    Vacuum,
    Decoy,
    Signal,
    /// Bright unmodulated pulse used only in the reference region.
    Strong,
}

impl IntensityLabel {
    /// The three settings available to QKD rounds.
    pub const QKD: [IntensityLabel; 3] = [Self::Vacuum, Self::Decoy, Self::Signal];

    /// Mean photon number emitted for this setting.
    pub fn mean_photon_number(self, params: &ProtocolParams) -> f64 {
        match self {
            Self::Vacuum => 0.0,
            Self::Decoy => params.nu,
            Self::Signal => params.mu,
            Self::Strong => params.strong_mu,
        }
    }

    /// Index into `{Vacuum, Decoy, Signal}`; `None` for `Strong`.
    pub fn qkd_index(self) -> Option<usize> {
        match self {
            Self::Vacuum => Some(0),
            Self::Decoy => Some(1),
            Self::Signal => Some(2),
            Self::Strong => None,
        }
    }
}

/// Slot counts of one cycle, in the order they are sent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameLayout {
    pub n_strong: u32,
    pub n_recovery: u32,
    pub n_qkd: u32,
}

impl FrameLayout {
    /// 100 µs cycle at 625 MHz: 16097 strong, 1920 recovery and 44483 QKD slots.
    pub const EXPERIMENT: FrameLayout = FrameLayout {
        n_strong: 16_097,
        n_recovery: 1_920,
        n_qkd: 44_483,
    };

    pub fn cycle_len(&self) -> u64 {
        self.n_strong as u64 + self.n_recovery as u64 + self.n_qkd as u64
    }

    /// Region of the slot with global index `index`.
    pub fn region_of(&self, index: u64) -> Region {
        let offset = index % self.cycle_len();
        if offset < self.n_strong as u64 {
            Region::Reference
        } else if offset < (self.n_strong + self.n_recovery) as u64 {
            Region::Recovery
        } else {
            Region::Qkd
        }
    }

    /// Cycle number of the slot with global index `index`.
    pub fn cycle_of(&self, index: u64) -> u64 {
        index / self.cycle_len()
    }

    fn validate(&self, v: &mut Violations) {
        v.check(self.n_qkd >= 1, || {
            "frame layout must contain at least one QKD slot".into()
        });
        v.check(self.cycle_len() >= 1, || "frame layout cycle must be non-empty".into());
    }
}

/// All protocol constants.
///
/// Photon numbers are dimensionless, `pulse_interval` is in seconds and the
/// pairing bounds are in round-index units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolParams {
    /// Signal mean photon number μ.
    pub mu: f64,
    /// Decoy mean photon number ν.
    pub nu: f64,
    /// Mean photon number of each strong reference pulse.
    #[serde(default = "default_strong_mu")]
    pub strong_mu: f64,
    /// Probability of sending the signal intensity in a QKD round.
    pub p_mu: f64,
    /// Probability of sending the decoy intensity in a QKD round.
    pub p_nu: f64,
    /// Number of phase slices D.
    #[serde(default = "default_phase_slices")]
    pub phase_slices: u32,
    #[serde(default = "default_l_min")]
    pub l_min: u64,
    pub l_max: u64,
    /// Security parameter ε.
    pub epsilon: f64,
    /// Error-correction efficiency f.
    #[serde(default = "default_ec_efficiency")]
    pub ec_efficiency: f64,
    /// Time between adjacent pulses τ (s).
    #[serde(default = "default_pulse_interval")]
    pub pulse_interval: f64,
    #[serde(default = "default_frame")]
    pub frame: FrameLayout,
}

fn default_strong_mu() -> f64 {
    1.0
}
fn default_phase_slices() -> u32 {
    16
}
fn default_l_min() -> u64 {
    63
}
fn default_ec_efficiency() -> f64 {
    1.1
}
fn default_pulse_interval() -> f64 {
    1.6e-9
}
fn default_frame() -> FrameLayout {
    FrameLayout::EXPERIMENT
}

impl Default for ProtocolParams {
    /// The 101 km operating point.
    fn default() -> Self {
        Self {
            mu: 0.309,
            nu: 0.032,
            strong_mu: default_strong_mu(),
            p_mu: 0.22,
            p_nu: 0.18,
            phase_slices: default_phase_slices(),
            l_min: default_l_min(),
            l_max: 500,
            epsilon: 1e-10,
            ec_efficiency: default_ec_efficiency(),
            pulse_interval: default_pulse_interval(),
            frame: default_frame(),
        }
    }
}

impl ProtocolParams {
    pub fn p_vacuum(&self) -> f64 {
        1.0 - self.p_mu - self.p_nu
    }

    /// Sending probabilities of `{Vacuum, Decoy, Signal}`.
    pub fn sending_probabilities(&self) -> [f64; 3] {
        [self.p_vacuum(), self.p_nu, self.p_mu]
    }

    /// Mean photon numbers of `{Vacuum, Decoy, Signal}`.
    pub fn intensities(&self) -> [f64; 3] {
        [0.0, self.nu, self.mu]
    }

    pub(crate) fn violations(&self) -> Violations {
        let mut v = Violations::default();
        v.check(0.0 < self.nu && self.nu < self.mu && self.mu < 1.0, || {
            format!(
                "intensities must satisfy 0 < nu < mu < 1 (nu = {}, mu = {})",
                self.nu, self.mu
            )
        });
        v.check(self.strong_mu > 0.0 && self.strong_mu.is_finite(), || {
            format!("strong_mu must be positive (got {})", self.strong_mu)
        });
        for (name, p) in [("p_mu", self.p_mu), ("p_nu", self.p_nu)] {
            v.check((0.0..=1.0).contains(&p), || {
                format!("{name} must lie in [0, 1] (got {p})")
            });
        }
        v.check(self.p_mu + self.p_nu <= 1.0, || {
            format!("p_mu + p_nu must not exceed 1 (got {})", self.p_mu + self.p_nu)
        });
        v.check(self.phase_slices >= 2 && self.phase_slices.is_multiple_of(2), || {
            format!("phase_slices D must be even and >= 2 (got {})", self.phase_slices)
        });
        v.check(self.phase_slices <= 256, || "phase_slices D must be at most 256".into());
        v.check(1 <= self.l_min && self.l_min <= self.l_max, || {
            format!(
                "pairing bounds must satisfy 1 <= l_min <= l_max (l_min = {}, l_max = {})",
                self.l_min, self.l_max
            )
        });
        v.check(0.0 < self.epsilon && self.epsilon < 1.0, || {
            format!("epsilon must lie in (0, 1) (got {})", self.epsilon)
        });
        v.check(self.ec_efficiency >= 1.0, || {
            format!("ec_efficiency f must be >= 1 (got {})", self.ec_efficiency)
        });
        v.check(self.pulse_interval > 0.0 && self.pulse_interval.is_finite(), || {
            format!("pulse_interval must be positive (got {})", self.pulse_interval)
        });
        self.frame.validate(&mut v);
        v
    }

    pub fn validate(&self) -> Result<()> {
        self.violations().into_result()
    }
}

/// Which part of the cycle a slot belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    Reference,
    Recovery,
    Qkd,
}

/// Intensity and phase chosen by one party for one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Encoding {
    pub intensity: IntensityLabel,
    /// Phase `2π·phase_index/D`.
    pub phase_index: u8,
}

impl Encoding {
    pub const STRONG: Encoding = Encoding {
        intensity: IntensityLabel::Strong,
        phase_index: 0,
    };
    pub const VACUUM: Encoding = Encoding {
        intensity: IntensityLabel::Vacuum,
        phase_index: 0,
    };
}

/// Settings of both parties for one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundSpec {
    pub index: u64,
    pub region: Region,
    pub alice: Encoding,
    pub bob: Encoding,
}

/// Which detector(s) fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    L,
    R,
    /// Both detectors clicked; never a valid announcement.
    Both,
}

impl Outcome {
    /// 0 for L, 1 for R.
    pub fn bit(self) -> Option<u8> {
        match self {
            Outcome::L => Some(0),
            Outcome::R => Some(1),
            Outcome::Both => None,
        }
    }
}

/// Charlie's announcement for a slot in which at least one detector clicked.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClickRecord {
    pub index: u64,
    /// Sending time in seconds.
    pub t: f64,
    pub outcome: Outcome,
    /// Exactly one detector clicked.
    pub valid: bool,
}

impl ClickRecord {
    pub fn new(index: u64, t: f64, outcome: Outcome) -> Self {
        Self {
            index,
            t,
            outcome,
            valid: outcome != Outcome::Both,
        }
    }
}

/// Binary entropy `h(x)` in bits, with `0·log₂0 = 0`.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("binary entropy argument {x} outside [0, 1]")));
    }
    let term = |p: f64| if p > 0.0 { -p * p.log2() } else { 0.0 };
    Ok(term(x) + term(1.0 - x))
}

/// Region label for every slot of `n_cycles` cycles.
pub fn build_schedule(params: &ProtocolParams, n_cycles: u64) -> Result<Vec<Region>> {
    params.validate()?;
    let f = params.frame;
    let mut out = Vec::with_capacity((f.cycle_len() * n_cycles) as usize);
    for _ in 0..n_cycles {
        out.extend(std::iter::repeat_n(Region::Reference, f.n_strong as usize));
        out.extend(std::iter::repeat_n(Region::Recovery, f.n_recovery as usize));
        out.extend(std::iter::repeat_n(Region::Qkd, f.n_qkd as usize));
    }
    Ok(out)
}
