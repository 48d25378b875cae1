//! Monte Carlo model of the photonic layer.
//!
//! Two unlocked lasers feed a balanced beam splitter through lossy fibers.
//! The relative optical phase `Θ(t)` of the two pulses at the beam splitter
//! is the sum of an initial offset, a fiber random walk, laser phase
//! diffusion and the integral of the angular-frequency difference `Δω(t)`,
//! which itself performs a bounded random walk around `Δω₀`.
//!
//! Threshold detectors are modeled by the no-click probability
//! `(1 − p_dark)·exp(−η_d·n)` where `n` is the mean photon number reaching a
//! port. Photon numbers are sampled explicitly so that every click carries
//! ground-truth tags (emitted and detected photons per side).

use std::f64::consts::PI;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, Violations};
use crate::protocol::{ClickRecord, Encoding, FrameLayout, IntensityLabel, Outcome, ProtocolParams, Region, RoundSpec};

/// Slots between consecutive knots of the phase trajectory.
pub const TRAJECTORY_KNOT_SLOTS: u64 = 625;

/// Physical-model constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelParams {
    /// Fiber attenuation α (dB/km).
    pub attenuation_db_per_km: f64,
    /// Alice–Charlie fiber length (km).
    pub distance_a_km: f64,
    /// Bob–Charlie fiber length (km).
    pub distance_b_km: f64,
    /// Overrides the Alice-side channel transmittance (dimensionless, excludes η_d).
    #[serde(default)]
    pub transmittance_a: Option<f64>,
    /// Overrides the Bob-side channel transmittance (dimensionless, excludes η_d).
    #[serde(default)]
    pub transmittance_b: Option<f64>,
    /// Detector efficiency η_d.
    pub detector_efficiency: f64,
    /// Dark-count probability per detector per slot.
    pub dark_count_prob: f64,
    /// Intensity extinction of vacuum pulses relative to μ (dB). `None` means ideal vacuum.
    #[serde(default)]
    pub extinction_ratio_db: Option<f64>,
    /// Initial phase offset θ⁰ (rad).
    #[serde(default)]
    pub initial_phase: f64,
    /// Initial angular-frequency difference Δω₀ (rad/s).
    pub delta_omega0: f64,
    /// Variance rate of the Δω random walk ((rad/s)²/s).
    #[serde(default)]
    pub freq_walk_rate: f64,
    /// Reflecting bound on |Δω − Δω₀| (rad/s).
    #[serde(default = "default_freq_walk_bound")]
    pub freq_walk_bound: f64,
    /// Variance rate of the differential fiber phase random walk (rad²/s).
    #[serde(default)]
    pub fiber_phase_rate: f64,
    /// Relative laser linewidth (Hz); adds phase diffusion with variance rate 2π·linewidth.
    #[serde(default)]
    pub linewidth: f64,
}

fn default_freq_walk_bound() -> f64 {
    2.0 * PI * 5e6
}

impl Default for ChannelParams {
    /// Symmetric 101 km link with the measured detector figures.
    fn default() -> Self {
        Self {
            attenuation_db_per_km: 0.208,
            distance_a_km: 50.5,
            distance_b_km: 50.5,
            transmittance_a: None,
            transmittance_b: None,
            detector_efficiency: 0.6246,
            dark_count_prob: 2.72e-8,
            extinction_ratio_db: None,
            initial_phase: 0.0,
            delta_omega0: 2.0 * PI * 10e6,
            freq_walk_rate: 0.0,
            freq_walk_bound: default_freq_walk_bound(),
            fiber_phase_rate: 0.0,
            linewidth: 0.0,
        }
    }
}

impl ChannelParams {
    /// Symmetric link of total length `distance_km`.
    pub fn symmetric(distance_km: f64) -> Self {
        Self {
            distance_a_km: distance_km / 2.0,
            distance_b_km: distance_km / 2.0,
            ..Default::default()
        }
    }

    /// Channel transmittance Alice → Charlie (without detector efficiency).
    pub fn eta_a(&self) -> f64 {
        self.transmittance_a
            .unwrap_or_else(|| 10f64.powf(-self.attenuation_db_per_km * self.distance_a_km / 10.0))
    }

    /// Channel transmittance Bob → Charlie (without detector efficiency).
    pub fn eta_b(&self) -> f64 {
        self.transmittance_b
            .unwrap_or_else(|| 10f64.powf(-self.attenuation_db_per_km * self.distance_b_km / 10.0))
    }

    /// Mean photon number leaking through a vacuum setting.
    pub fn vacuum_leak(&self, mu: f64) -> f64 {
        self.extinction_ratio_db.map_or(0.0, |db| mu * 10f64.powf(-db / 10.0))
    }

    pub(crate) fn violations(&self) -> Violations {
        let mut v = Violations::default();
        v.check(
            self.detector_efficiency > 0.0 && self.detector_efficiency <= 1.0,
            || {
                format!(
                    "detector_efficiency must lie in (0, 1] (got {})",
                    self.detector_efficiency
                )
            },
        );
        v.check((0.0..1.0).contains(&self.dark_count_prob), || {
            format!("dark_count_prob must lie in [0, 1) (got {})", self.dark_count_prob)
        });
        v.check(self.attenuation_db_per_km >= 0.0, || {
            format!("attenuation must be >= 0 (got {})", self.attenuation_db_per_km)
        });
        v.check(self.distance_a_km >= 0.0 && self.distance_b_km >= 0.0, || {
            "distances must be >= 0".into()
        });
        for (name, t) in [
            ("transmittance_a", self.transmittance_a),
            ("transmittance_b", self.transmittance_b),
        ] {
            if let Some(t) = t {
                v.check(t > 0.0 && t <= 1.0, || format!("{name} must lie in (0, 1] (got {t})"));
            }
        }
        if let Some(db) = self.extinction_ratio_db {
            v.check(db >= 0.0, || format!("extinction_ratio_db must be >= 0 (got {db})"));
        }
        for (name, x) in [
            ("freq_walk_rate", self.freq_walk_rate),
            ("freq_walk_bound", self.freq_walk_bound),
            ("fiber_phase_rate", self.fiber_phase_rate),
            ("linewidth", self.linewidth),
        ] {
            v.check(x >= 0.0 && x.is_finite(), || {
                format!("{name} must be finite and >= 0 (got {x})")
            });
        }
        v.check(self.delta_omega0.is_finite() && self.initial_phase.is_finite(), || {
            "delta_omega0 and initial_phase must be finite".into()
        });
        v
    }

    pub fn validate(&self) -> Result<()> {
        self.violations().into_result()
    }
}

/// Mean photon numbers arriving at the L and R ports.
///
/// `x_a`, `x_b` are the mean photon numbers arriving from each side and
/// `dphi` the total phase difference at the beam splitter.
pub fn port_means(x_a: f64, x_b: f64, dphi: f64) -> (f64, f64) {
    let cross = 2.0 * (x_a * x_b).sqrt() * dphi.cos();
    let sum = x_a + x_b;
    (((sum + cross) / 2.0).max(0.0), ((sum - cross) / 2.0).max(0.0))
}

/// Click probability of each detector for a single round.
///
/// `mu_a`, `mu_b` are source mean photon numbers and `eta_a`, `eta_b` the
/// one-side channel transmittances.
pub fn click_probabilities(
    mu_a: f64,
    mu_b: f64,
    dphi: f64,
    eta_a: f64,
    eta_b: f64,
    eta_d: f64,
    p_dark: f64,
) -> (f64, f64) {
    let (n_l, n_r) = port_means(eta_a * mu_a, eta_b * mu_b, dphi);
    let p = |n: f64| 1.0 - (1.0 - p_dark) * (-eta_d * n).exp();
    (p(n_l), p(n_r))
}

/// Piecewise description of `Θ(t)` and `Δω(t)` on a uniform knot grid.
///
/// `Δω` is linear between knots and `Θ` integrates it exactly; the fiber and
/// linewidth noise increments are interpolated linearly inside a knot interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTrajectory {
    pub pulse_interval: f64,
    pub knot_slots: u64,
    theta: Vec<f64>,
    omega: Vec<f64>,
    noise: Vec<f64>,
}

impl PhaseTrajectory {
    fn knot_span(&self) -> f64 {
        self.knot_slots as f64 * self.pulse_interval
    }

    fn locate(&self, slot: f64) -> (usize, f64) {
        let last = self.theta.len() - 1;
        let k = ((slot / self.knot_slots as f64).floor() as usize).min(last.saturating_sub(1));
        let dt = (slot - (k as u64 * self.knot_slots) as f64) * self.pulse_interval;
        (k, dt)
    }

    /// Number of slots covered.
    pub fn n_slots(&self) -> u64 {
        (self.theta.len() as u64 - 1) * self.knot_slots
    }

    /// Relative phase `Θ` at slot `index` (rad).
    pub fn theta_at(&self, index: u64) -> f64 {
        let (k, dt) = self.locate(index as f64);
        let span = self.knot_span();
        let slope = (self.omega[k + 1] - self.omega[k]) / span;
        self.theta[k] + self.omega[k] * dt + 0.5 * slope * dt * dt + self.noise[k] * dt / span
    }

    /// Frequency difference `Δω` at slot `index` (rad/s).
    pub fn omega_at(&self, index: u64) -> f64 {
        let (k, dt) = self.locate(index as f64);
        let frac = dt / self.knot_span();
        self.omega[k] + (self.omega[k + 1] - self.omega[k]) * frac
    }
}

fn reflect(x: f64, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return lo;
    }
    let width = hi - lo;
    let mut y = (x - lo).rem_euclid(2.0 * width);
    if y > width {
        y = 2.0 * width - y;
    }
    lo + y
}

/// Samples `Θ(t)` over `n_slots` slots.
pub fn phase_difference_trajectory(
    channel: &ChannelParams,
    pulse_interval: f64,
    n_slots: u64,
    seed: u64,
) -> PhaseTrajectory {
    let knot_slots = TRAJECTORY_KNOT_SLOTS;
    let n_knots = n_slots.div_ceil(knot_slots).max(1) as usize + 1;
    let span = knot_slots as f64 * pulse_interval;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(TRAJECTORY_STREAM);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let omega_step = (channel.freq_walk_rate * span).sqrt();
    let phase_step = ((channel.fiber_phase_rate + 2.0 * PI * channel.linewidth) * span).sqrt();
    let (lo, hi) = (
        channel.delta_omega0 - channel.freq_walk_bound,
        channel.delta_omega0 + channel.freq_walk_bound,
    );

    let mut theta = Vec::with_capacity(n_knots);
    let mut omega = Vec::with_capacity(n_knots);
    let mut noise = Vec::with_capacity(n_knots);
    theta.push(channel.initial_phase);
    omega.push(channel.delta_omega0);
    for k in 1..n_knots {
        let w_prev = omega[k - 1];
        let w = if omega_step > 0.0 {
            reflect(w_prev + omega_step * std_normal.sample(&mut rng), lo, hi)
        } else {
            w_prev
        };
        let n = if phase_step > 0.0 {
            phase_step * std_normal.sample(&mut rng)
        } else {
            0.0
        };
        noise.push(n);
        omega.push(w);
        theta.push(theta[k - 1] + 0.5 * (w_prev + w) * span + n);
    }
    noise.push(0.0);
    PhaseTrajectory {
        pulse_interval,
        knot_slots,
        theta,
        omega,
        noise,
    }
}

const TRAJECTORY_STREAM: u64 = u64::MAX;
const TAG_STREAM_BIT: u64 = 1 << 62;

/// Ground-truth tags of one round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotonTag {
    /// Photons emitted by Alice's source.
    pub emitted_a: u32,
    pub emitted_b: u32,
    /// Photons from Alice that reached a detector and were registered.
    pub photon_count_a: u32,
    pub photon_count_b: u32,
    /// `Θ` at this round (rad).
    pub delta_theta: f64,
    /// `Δω` at this round (rad/s).
    pub delta_omega: f64,
}

/// Ground truth for a session: per-click tags plus the full phase trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Parallel to [`Session::clicks`].
    pub tags: Vec<PhotonTag>,
    pub trajectory: PhaseTrajectory,
    /// Settings and tags of every Reference and QKD slot, when requested.
    pub all_rounds: Option<Vec<(RoundSpec, PhotonTag)>>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SimOptions {
    /// Keep tags for every slot, not only clicked ones. Memory grows with the session.
    pub record_all_rounds: bool,
}

/// Output of [`simulate_session`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub frame: FrameLayout,
    pub n_cycles: u64,
    pub pulse_interval: f64,
    /// Every Reference/QKD slot in which at least one detector clicked, in index order.
    pub clicks: Vec<ClickRecord>,
    /// Settings of the clicked rounds, parallel to `clicks`.
    pub rounds: Vec<RoundSpec>,
    pub truth: GroundTruth,
    /// QKD rounds sent per (Alice, Bob) setting, indexed by `{Vacuum, Decoy, Signal}`.
    pub sent: [[u64; 3]; 3],
}

impl Session {
    pub fn n_qkd_rounds(&self) -> u64 {
        self.n_cycles * self.frame.n_qkd as u64
    }

    pub fn n_slots(&self) -> u64 {
        self.n_cycles * self.frame.cycle_len()
    }

    /// Valid clicks in the QKD region.
    pub fn qkd_valid_clicks(&self) -> usize {
        self.clicks
            .iter()
            .zip(&self.rounds)
            .filter(|(c, r)| c.valid && r.region == Region::Qkd)
            .count()
    }
}

/// Per-setting sampling constants for one slot type.
#[derive(Debug, Clone, Copy)]
struct Emission {
    /// Source mean photon numbers.
    mu_a: f64,
    mu_b: f64,
    /// Mean registered photons from each side (η·η_d·μ).
    x_a: f64,
    x_b: f64,
    /// exp(−(x_a + x_b)).
    p_none: f64,
}

impl Emission {
    fn new(mu_a: f64, mu_b: f64, ctx: &SlotModel) -> Self {
        let x_a = ctx.eff_a * mu_a;
        let x_b = ctx.eff_b * mu_b;
        Self {
            mu_a,
            mu_b,
            x_a,
            x_b,
            p_none: (-(x_a + x_b)).exp(),
        }
    }
}

struct SlotModel {
    eff_a: f64,
    eff_b: f64,
    p_dark: f64,
    p_any_dark: f64,
    cum_probs: [f64; 2],
    qkd: [[Emission; 3]; 3],
    strong: Emission,
}

impl SlotModel {
    fn new(protocol: &ProtocolParams, channel: &ChannelParams) -> Self {
        let eff_a = channel.eta_a() * channel.detector_efficiency;
        let eff_b = channel.eta_b() * channel.detector_efficiency;
        let mut m = Self {
            eff_a,
            eff_b,
            p_dark: channel.dark_count_prob,
            p_any_dark: 1.0 - (1.0 - channel.dark_count_prob).powi(2),
            cum_probs: [protocol.p_vacuum(), protocol.p_vacuum() + protocol.p_nu],
            qkd: [[Emission {
                mu_a: 0.0,
                mu_b: 0.0,
                x_a: 0.0,
                x_b: 0.0,
                p_none: 1.0,
            }; 3]; 3],
            strong: Emission {
                mu_a: 0.0,
                mu_b: 0.0,
                x_a: 0.0,
                x_b: 0.0,
                p_none: 1.0,
            },
        };
        let mut levels = protocol.intensities();
        levels[0] = channel.vacuum_leak(protocol.mu);
        for a in 0..3 {
            for b in 0..3 {
                m.qkd[a][b] = Emission::new(levels[a], levels[b], &m);
            }
        }
        m.strong = Emission::new(protocol.strong_mu, protocol.strong_mu, &m);
        m
    }

    fn intensity(&self, u: f64) -> usize {
        if u < self.cum_probs[0] {
            0
        } else if u < self.cum_probs[1] {
            1
        } else {
            2
        }
    }
}

fn unit32(x: u64) -> f64 {
    (x & 0xffff_ffff) as f64 * (1.0 / 4_294_967_296.0)
}

fn poisson(rng: &mut impl Rng, mean: f64) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|d| d.sample(rng) as u32).unwrap_or(0)
}

/// Result of sampling a single slot.
struct SlotDraw {
    outcome: Option<Outcome>,
    photon_count_a: u32,
    photon_count_b: u32,
}

/// Samples detector outcomes for one slot with the given phase difference source.
fn sample_slot(rng: &mut ChaCha8Rng, model: &SlotModel, em: &Emission, dphi: impl FnOnce() -> f64) -> SlotDraw {
    let u = rng.random::<f64>();
    let (mut count_a, mut count_b, mut port_l, mut port_r) = (0u32, 0u32, 0u32, 0u32);
    if u >= em.p_none {
        // Inversion of Poisson(x_a + x_b) continuing from the same uniform.
        let total = em.x_a + em.x_b;
        let (mut k, mut p, mut cdf) = (0u32, em.p_none, em.p_none);
        while u >= cdf && k < 10_000 {
            k += 1;
            p *= total / k as f64;
            cdf += p;
        }
        let share_a = em.x_a / total;
        let (n_l, n_r) = port_means(em.x_a, em.x_b, dphi());
        let q_l = if n_l + n_r > 0.0 { n_l / (n_l + n_r) } else { 0.5 };
        for _ in 0..k {
            if rng.random::<f64>() < share_a {
                count_a += 1;
            } else {
                count_b += 1;
            }
            if rng.random::<f64>() < q_l {
                port_l += 1;
            } else {
                port_r += 1;
            }
        }
    }
    let (mut dark_l, mut dark_r) = (false, false);
    if model.p_any_dark > 0.0 && rng.random::<f64>() < model.p_any_dark {
        // Condition on at least one dark event.
        loop {
            dark_l = rng.random::<f64>() < model.p_dark;
            dark_r = rng.random::<f64>() < model.p_dark;
            if dark_l || dark_r {
                break;
            }
        }
    }
    let outcome = match (port_l > 0 || dark_l, port_r > 0 || dark_r) {
        (true, true) => Some(Outcome::Both),
        (true, false) => Some(Outcome::L),
        (false, true) => Some(Outcome::R),
        (false, false) => None,
    };
    SlotDraw {
        outcome,
        photon_count_a: count_a,
        photon_count_b: count_b,
    }
}

#[derive(Default)]
struct BlockOutput {
    clicks: Vec<ClickRecord>,
    rounds: Vec<RoundSpec>,
    tags: Vec<PhotonTag>,
    all: Vec<(RoundSpec, PhotonTag)>,
    sent: [[u64; 3]; 3],
}

fn simulate_cycle(
    cycle: u64,
    seed: u64,
    protocol: &ProtocolParams,
    model: &SlotModel,
    traj: &PhaseTrajectory,
    opts: SimOptions,
) -> BlockOutput {
    let frame = protocol.frame;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(cycle);
    let mut tag_rng = ChaCha8Rng::seed_from_u64(seed);
    tag_rng.set_stream(cycle | TAG_STREAM_BIT);
    let tau = protocol.pulse_interval;
    let d = protocol.phase_slices as u64;
    let phase_unit = 2.0 * PI / d as f64;
    let base = cycle * frame.cycle_len();
    let mut out = BlockOutput::default();

    let emit = |out: &mut BlockOutput,
                tag_rng: &mut ChaCha8Rng,
                index: u64,
                region: Region,
                alice: Encoding,
                bob: Encoding,
                em: &Emission,
                draw: SlotDraw| {
        let clicked = draw.outcome.is_some();
        if !clicked && !opts.record_all_rounds {
            return;
        }
        let emitted_a = draw.photon_count_a + poisson(tag_rng, em.mu_a - em.x_a);
        let emitted_b = draw.photon_count_b + poisson(tag_rng, em.mu_b - em.x_b);
        let tag = PhotonTag {
            emitted_a,
            emitted_b,
            photon_count_a: draw.photon_count_a,
            photon_count_b: draw.photon_count_b,
            delta_theta: traj.theta_at(index),
            delta_omega: traj.omega_at(index),
        };
        let spec = RoundSpec {
            index,
            region,
            alice,
            bob,
        };
        if let Some(outcome) = draw.outcome {
            out.clicks.push(ClickRecord::new(index, index as f64 * tau, outcome));
            out.rounds.push(spec);
            out.tags.push(tag);
        }
        if opts.record_all_rounds {
            out.all.push((spec, tag));
        }
    };

    for offset in 0..frame.n_strong as u64 {
        let index = base + offset;
        let draw = sample_slot(&mut rng, model, &model.strong, || traj.theta_at(index));
        emit(
            &mut out,
            &mut tag_rng,
            index,
            Region::Reference,
            Encoding::STRONG,
            Encoding::STRONG,
            &model.strong,
            draw,
        );
    }
    let qkd_start = base + (frame.n_strong + frame.n_recovery) as u64;
    for offset in 0..frame.n_qkd as u64 {
        let index = qkd_start + offset;
        let r = rng.next_u64();
        let ia = model.intensity(unit32(r));
        let ib = model.intensity(unit32(r >> 32));
        let ph = rng.next_u64();
        let pa = (((ph & 0xffff_ffff) * d) >> 32) as u8;
        let pb = (((ph >> 32) * d) >> 32) as u8;
        out.sent[ia][ib] += 1;
        let em = model.qkd[ia][ib];
        let draw = sample_slot(&mut rng, model, &em, || {
            (pa as f64 - pb as f64) * phase_unit + traj.theta_at(index)
        });
        let alice = Encoding {
            intensity: IntensityLabel::QKD[ia],
            phase_index: pa,
        };
        let bob = Encoding {
            intensity: IntensityLabel::QKD[ib],
            phase_index: pb,
        };
        emit(&mut out, &mut tag_rng, index, Region::Qkd, alice, bob, &em, draw);
    }
    out
}

/// Simulates `n_cycles` full cycles.
///
/// Cycles are independent random streams derived from `(seed, cycle)`, so the
/// result does not depend on how many worker threads execute them.
pub fn simulate_session(
    protocol: &ProtocolParams,
    channel: &ChannelParams,
    n_cycles: u64,
    seed: u64,
    opts: SimOptions,
) -> Result<Session> {
    let mut v = protocol.violations();
    v.extend(channel.violations());
    v.check(n_cycles >= 1, || "n_cycles must be >= 1".into());
    v.into_result()?;

    let frame = protocol.frame;
    let n_slots = n_cycles * frame.cycle_len();
    let traj = phase_difference_trajectory(channel, protocol.pulse_interval, n_slots, seed);
    let model = SlotModel::new(protocol, channel);

    let blocks: Vec<BlockOutput> = (0..n_cycles)
        .into_par_iter()
        .map(|c| simulate_cycle(c, seed, protocol, &model, &traj, opts))
        .collect();

    let mut clicks = Vec::new();
    let mut rounds = Vec::new();
    let mut tags = Vec::new();
    let mut all = opts.record_all_rounds.then(Vec::new);
    let mut sent = [[0u64; 3]; 3];
    for b in blocks {
        clicks.extend(b.clicks);
        rounds.extend(b.rounds);
        tags.extend(b.tags);
        if let Some(all) = all.as_mut() {
            all.extend(b.all);
        }
        for (row, brow) in sent.iter_mut().zip(b.sent) {
            for (x, y) in row.iter_mut().zip(brow) {
                *x += y;
            }
        }
    }
    Ok(Session {
        frame,
        n_cycles,
        pulse_interval: protocol.pulse_interval,
        clicks,
        rounds,
        truth: GroundTruth {
            tags,
            trajectory: traj,
            all_rounds: all,
        },
        sent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet_channel() -> ChannelParams {
        ChannelParams {
            delta_omega0: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn static_trajectory_is_constant() {
        let ch = ChannelParams {
            initial_phase: 0.7,
            ..quiet_channel()
        };
        let t = phase_difference_trajectory(&ch, 1.6e-9, 10_000, 1);
        for i in [0, 1, 624, 625, 5000, 9999] {
            assert!((t.theta_at(i) - 0.7).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_offset_advances_linearly() {
        let ch = ChannelParams {
            delta_omega0: 2.0 * PI * 1e6,
            ..quiet_channel()
        };
        let t = phase_difference_trajectory(&ch, 1.6e-9, 10_000, 1);
        // 1.6 µs = 1000 slots; 2π·10⁶ · 1.6·10⁻⁶ = 10.0531 rad.
        let adv = t.theta_at(1700) - t.theta_at(700);
        assert!((adv - 10.053_096_491).abs() < 1e-6, "{adv}");
        assert!((t.omega_at(4321) - 2.0 * PI * 1e6).abs() < 1e-6);
    }

    #[test]
    fn linewidth_diffusion_matches_variance_rate() {
        // Phase diffusion over 3.2 µs has variance 2π·Δν·t.
        let ch = ChannelParams {
            linewidth: 2e3,
            ..quiet_channel()
        };
        let span = 2000u64;
        let mut acc = 0.0;
        let trials = 400;
        for seed in 0..trials {
            let t = phase_difference_trajectory(&ch, 1.6e-9, span, seed);
            let d = t.theta_at(span) - t.theta_at(0);
            acc += d * d;
        }
        let std = (acc / trials as f64).sqrt();
        let expected = (2.0 * PI * 2e3 * 3.2e-6f64).sqrt();
        assert!((std / expected - 1.0).abs() < 0.15, "std {std} expected {expected}");
        // Far below one radian: negligible for pairing lengths up to 2000.
        assert!(std < 0.3);
    }

    #[test]
    fn frequency_walk_stays_in_bounds() {
        let ch = ChannelParams {
            freq_walk_rate: 1e16,
            freq_walk_bound: 2.0 * PI * 1e5,
            ..Default::default()
        };
        let t = phase_difference_trajectory(&ch, 1.6e-9, 2_000_000, 3);
        for i in (0..2_000_000).step_by(997) {
            let dev = t.omega_at(i) - ch.delta_omega0;
            assert!(dev.abs() <= ch.freq_walk_bound + 1e-6);
        }
    }

    #[test]
    fn click_probability_reference_points() {
        let (l, r) = click_probabilities(0.0, 0.0, 0.3, 0.5, 0.5, 0.6, 1e-3);
        assert!((l - 1e-3).abs() < 1e-15 && (r - 1e-3).abs() < 1e-15);

        let (_, r) = click_probabilities(0.2, 0.4, 0.0, 0.5, 0.25, 0.9, 2e-6);
        assert!((r - 2e-6).abs() < 1e-12);

        let (l, r) = click_probabilities(0.1, 0.1, PI / 2.0, 1.0, 1.0, 1.0, 0.0);
        let expected = 1.0 - (-0.1f64).exp();
        assert!((l - expected).abs() < 1e-12 && (r - expected).abs() < 1e-12);
        assert!((expected - 0.09516).abs() < 1e-5);
    }

    #[test]
    fn click_probability_matches_photon_sampling() {
        // Monte Carlo oracle: Poisson photons per side, each routed to L with the
        // single-photon interference probability.
        let (mu, eta, dphi) = (0.1, 1.0, PI / 2.0);
        let (pl, _) = click_probabilities(mu, mu, dphi, eta, eta, 1.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let trials = 400_000;
        let mut hits = 0;
        for _ in 0..trials {
            let n = poisson(&mut rng, 2.0 * mu);
            let q = 0.5 * (1.0 + dphi.cos());
            if (0..n).any(|_| rng.random::<f64>() < q) {
                hits += 1;
            }
        }
        let p = hits as f64 / trials as f64;
        let se = (pl * (1.0 - pl) / trials as f64).sqrt();
        assert!((p - pl).abs() < 4.0 * se, "{p} vs {pl}");
    }

    proptest::proptest! {
        #[test]
        fn ports_conserve_photons(xa in 0.0f64..5.0, xb in 0.0f64..5.0, phi in -10.0f64..10.0) {
            let (l, r) = port_means(xa, xb, phi);
            proptest::prop_assert!((l + r - (xa + xb)).abs() <= 1e-12 * (1.0 + xa + xb));
            proptest::prop_assert!(l >= 0.0 && r >= 0.0);
        }

        #[test]
        fn probabilities_in_unit_interval(ma in 0.0f64..3.0, mb in 0.0f64..3.0, phi in -7.0f64..7.0,
                                         ea in 0.0f64..1.0, eb in 0.0f64..1.0, pd in 0.0f64..0.5) {
            let (l, r) = click_probabilities(ma, mb, phi, ea, eb, 0.7, pd);
            proptest::prop_assert!((0.0..=1.0).contains(&l) && (0.0..=1.0).contains(&r));
            let (l0, r0) = click_probabilities(ma, 0.0, phi, ea, eb, 0.7, 0.0);
            proptest::prop_assert!((l0 - r0).abs() < 1e-12);
        }
    }
}
