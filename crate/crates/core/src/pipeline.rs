//! Post-processing chain from a simulated session to a count table.

use serde::{Deserialize, Serialize};

use crate::channel::Session;
use crate::error::Result;
use crate::pairing::{pair_session, PairingStats};
use crate::phase::{compensation_phase, estimate_track, PhaseEstimate, PhaseOptions};
use crate::protocol::ProtocolParams;
use crate::sift::{sift_pairs, tally_counts, Basis, CountClass, CountTable, SideSum, SiftedPair};

/// Source of the phase drift removed from X pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Compensation {
    /// Track fitted to strong-pulse estimates.
    #[default]
    Estimated,
    /// The simulator's own `Θ` difference (oracle).
    GroundTruth,
    /// No compensation.
    Disabled,
}

/// Pair length intervals used for histograms and the reference error proxy.
pub const LENGTH_EDGES: [u64; 5] = [63, 500, 1000, 1500, 2000];

/// Everything the pipeline derives from one session.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub pairing: PairingStats,
    pub counts: CountTable,
    pub sifted: Vec<SiftedPair>,
    pub phase: Option<PhaseEstimate>,
}

impl PipelineOutput {
    /// Error rate over kept X pairs with two non-vacuum sides of equal intensity.
    pub fn x_error(&self) -> Option<f64> {
        let classes = [
            CountClass::new(Basis::X, SideSum::TwoNu, SideSum::TwoNu),
            CountClass::new(Basis::X, SideSum::TwoMu, SideSum::TwoMu),
        ];
        let (t, e) = classes.iter().fold((0, 0), |(t, e), c| {
            let x = self.counts.get(*c);
            (t + x.total, e + x.error)
        });
        (t > 0).then(|| e as f64 / t as f64)
    }

    /// Bit error rate of the `(μ, μ)` Z class.
    pub fn z_qber(&self) -> Option<f64> {
        let x = self.counts.get(CountClass::new(Basis::Z, SideSum::Mu, SideSum::Mu));
        (x.total > 0).then(|| x.error as f64 / x.total as f64)
    }
}

/// Single-photon pair statistics read from the simulator's source tags.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedTruth {
    /// `Z_AμBμ` pairs in which each user emitted exactly one photon over both rounds.
    pub m11_z: u64,
    /// Kept equal-intensity X pairs (`2ν/2ν`, `2μ/2μ`) with one photon per user.
    pub x11_pairs: u64,
    pub x11_errors: u64,
}

impl TaggedTruth {
    /// Bit error rate of the single-photon X pairs.
    pub fn e11(&self) -> Option<f64> {
        (self.x11_pairs > 0).then(|| self.x11_errors as f64 / self.x11_pairs as f64)
    }
}

/// Counts the true single-photon pairs among sifted pairs of `session`.
pub fn tagged_truth(session: &Session, sifted: &[SiftedPair]) -> TaggedTruth {
    let key = CountClass::new(Basis::Z, SideSum::Mu, SideSum::Mu);
    let x_classes = [
        CountClass::new(Basis::X, SideSum::TwoNu, SideSum::TwoNu),
        CountClass::new(Basis::X, SideSum::TwoMu, SideSum::TwoMu),
    ];
    let tags = &session.truth.tags;
    let mut t = TaggedTruth::default();
    for sp in sifted {
        let (Some(class), Some(err)) = (sp.count_class, sp.is_error()) else {
            continue;
        };
        let [f, r] = sp.pair.positions;
        if tags[f].emitted_a + tags[r].emitted_a != 1 || tags[f].emitted_b + tags[r].emitted_b != 1 {
            continue;
        }
        if class == key {
            t.m11_z += 1;
        } else if x_classes.contains(&class) {
            t.x11_pairs += 1;
            t.x11_errors += err as u64;
        }
    }
    t
}

/// Pairs, compensates, sifts and tallies a session.
pub fn run_pipeline(
    session: &Session,
    protocol: &ProtocolParams,
    phase_opts: &PhaseOptions,
    compensation: Compensation,
) -> Result<PipelineOutput> {
    let pairs = pair_session(session, protocol.l_min, protocol.l_max);
    let pairing = PairingStats::from_lengths(pairs.iter().map(|p| p.length()), session.n_qkd_rounds(), &LENGTH_EDGES);
    let phase = match compensation {
        Compensation::Estimated => Some(estimate_track(session, phase_opts)?),
        _ => None,
    };
    let traj = &session.truth.trajectory;
    let sifted = sift_pairs(&pairs, protocol.phase_slices, |p| match (&phase, compensation) {
        (Some(est), _) => compensation_phase(p.t_front, p.t_rear, &est.track),
        (None, Compensation::GroundTruth) => Ok(traj.theta_at(p.rear_index) - traj.theta_at(p.front_index)),
        _ => Ok(0.0),
    })?;
    let mut counts = tally_counts(&sifted);
    counts.set_sent(&session.sent);
    counts.n_rounds = Some(session.n_qkd_rounds());
    Ok(PipelineOutput {
        pairing,
        counts,
        sifted,
        phase,
    })
}
