//! Basis assignment, sifting, key mapping and error tallying of pairs.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pairing::PairRecord;
use crate::protocol::IntensityLabel;

/// Basis label one party derives from its two intensities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SideLabel {
    /// Vacuum in both rounds.
    Zero,
    Z,
    X,
    Discard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PairClass {
    ZPair,
    XPair,
    ZeroPair,
    Discard,
}

/// Side label for intensities `(μ_i, μ_j)`.
pub fn assign_side_basis(mu_i: IntensityLabel, mu_j: IntensityLabel) -> Result<SideLabel> {
    use IntensityLabel::*;
    Ok(match (mu_i, mu_j) {
        (Strong, _) | (_, Strong) => {
            return Err(Error::Domain("strong pulses carry no basis".into()));
        }
        (Vacuum, Vacuum) => SideLabel::Zero,
        (Vacuum, _) | (_, Vacuum) => SideLabel::Z,
        (Decoy, Decoy) | (Signal, Signal) => SideLabel::X,
        _ => SideLabel::Discard,
    })
}

/// Two-party sifting table.
pub fn sift_pair(a: SideLabel, b: SideLabel) -> PairClass {
    use SideLabel::*;
    match (a, b) {
        (Zero, Zero) => PairClass::ZeroPair,
        (Zero, Z) | (Z, Zero) | (Z, Z) => PairClass::ZPair,
        (Zero, X) | (X, Zero) | (X, X) => PairClass::XPair,
        _ => PairClass::Discard,
    }
}

/// Summed intensity of one side over the two rounds of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SideSum {
    Zero,
    Nu,
    Mu,
    TwoNu,
    TwoMu,
}

impl SideSum {
    fn of(i: IntensityLabel, j: IntensityLabel) -> Option<Self> {
        use IntensityLabel::*;
        match (i, j) {
            (Vacuum, Vacuum) => Some(Self::Zero),
            (Vacuum, Decoy) | (Decoy, Vacuum) => Some(Self::Nu),
            (Vacuum, Signal) | (Signal, Vacuum) => Some(Self::Mu),
            (Decoy, Decoy) => Some(Self::TwoNu),
            (Signal, Signal) => Some(Self::TwoMu),
            _ => None,
        }
    }

    fn tag(self) -> &'static str {
        match self {
            Self::Zero => "0",
            Self::Nu => "nu",
            Self::Mu => "mu",
            Self::TwoNu => "2nu",
            Self::TwoMu => "2mu",
        }
    }

    /// Index of the single-round intensity this sum is built from.
    fn round_index(self) -> usize {
        match self {
            Self::Zero => 0,
            Self::Nu | Self::TwoNu => 1,
            Self::Mu | Self::TwoMu => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Basis {
    Z,
    X,
}

/// One row of a count table: basis plus the intensity sum of each side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CountClass {
    pub basis: Basis,
    pub a: SideSum,
    pub b: SideSum,
}

impl CountClass {
    pub const fn new(basis: Basis, a: SideSum, b: SideSum) -> Self {
        Self { basis, a, b }
    }

    /// All 17 classes in table order.
    pub const ALL: [CountClass; 17] = {
        use Basis::*;
        use SideSum::*;
        [
            Self::new(Z, Zero, Zero),
            Self::new(Z, Zero, Nu),
            Self::new(Z, Zero, Mu),
            Self::new(Z, Nu, Zero),
            Self::new(Z, Nu, Nu),
            Self::new(Z, Nu, Mu),
            Self::new(Z, Mu, Zero),
            Self::new(Z, Mu, Nu),
            Self::new(Z, Mu, Mu),
            Self::new(X, Zero, TwoNu),
            Self::new(X, Zero, TwoMu),
            Self::new(X, TwoNu, Zero),
            Self::new(X, TwoMu, Zero),
            Self::new(X, TwoNu, TwoNu),
            Self::new(X, TwoNu, TwoMu),
            Self::new(X, TwoMu, TwoNu),
            Self::new(X, TwoMu, TwoMu),
        ]
    };

    pub fn position(&self) -> usize {
        Self::ALL.iter().position(|c| c == self).expect("class listed in ALL")
    }

    /// Single-round setting `(Alice, Bob)` whose sent count labels this class.
    pub fn round_setting(&self) -> (usize, usize) {
        (self.a.round_index(), self.b.round_index())
    }
}

impl fmt::Display for CountClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = match self.basis {
            Basis::Z => "Z",
            Basis::X => "X",
        };
        write!(f, "{b}_A{}B{}", self.a.tag(), self.b.tag())
    }
}

impl FromStr for CountClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .find(|c| c.to_string() == s)
            .copied()
            .ok_or_else(|| Error::Parse(format!("unknown count class '{s}'")))
    }
}

/// Sent, total and error counts of one class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub sent: u64,
    pub total: u64,
    pub error: u64,
}

/// Pair counts per class.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountTable {
    pub counts: [ClassCounts; 17],
    /// Number of QKD rounds; falls back to the summed sent counts when absent.
    pub n_rounds: Option<u64>,
}

impl CountTable {
    pub fn get(&self, class: CountClass) -> ClassCounts {
        self.counts[class.position()]
    }

    pub fn get_mut(&mut self, class: CountClass) -> &mut ClassCounts {
        &mut self.counts[class.position()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (CountClass, ClassCounts)> + '_ {
        CountClass::ALL.iter().copied().zip(self.counts.iter().copied())
    }

    /// QKD rounds `N`.
    pub fn n_rounds(&self) -> u64 {
        self.n_rounds.unwrap_or_else(|| {
            self.iter()
                .filter(|(c, _)| c.basis == Basis::Z)
                .map(|(_, x)| x.sent)
                .sum()
        })
    }

    /// Number of possible pairs, `N/2`.
    pub fn n_pair(&self) -> f64 {
        self.n_rounds() as f64 / 2.0
    }

    /// Fills every class's `sent` from per-setting round counts.
    pub fn set_sent(&mut self, sent: &[[u64; 3]; 3]) {
        for (i, c) in CountClass::ALL.iter().enumerate() {
            let (a, b) = c.round_setting();
            self.counts[i].sent = sent[a][b];
        }
    }

    /// Associative merge.
    pub fn merge(&mut self, other: &CountTable) {
        for (x, y) in self.counts.iter_mut().zip(&other.counts) {
            x.total += y.total;
            x.error += y.error;
        }
    }
}

/// A pair after sifting and, for Z/X pairs, key mapping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiftedPair {
    pub pair: PairRecord,
    pub label_a: SideLabel,
    pub label_b: SideLabel,
    pub class: PairClass,
    pub count_class: Option<CountClass>,
    /// Key bits; `None` until mapped, and for discarded pairs.
    pub bits: Option<(u8, u8)>,
    /// Announced `θ_a`, `θ_b` in `[0, π)`, X pairs only.
    pub thetas: Option<(f64, f64)>,
    /// The two clicks came from different detectors.
    pub parity: bool,
    /// Survives the phase window (always true for Z pairs).
    pub kept: bool,
}

impl SiftedPair {
    pub fn new(pair: PairRecord) -> Result<Self> {
        let label_a = assign_side_basis(pair.alice[0].intensity, pair.alice[1].intensity)?;
        let label_b = assign_side_basis(pair.bob[0].intensity, pair.bob[1].intensity)?;
        let class = sift_pair(label_a, label_b);
        let basis = match class {
            PairClass::ZPair | PairClass::ZeroPair => Some(Basis::Z),
            PairClass::XPair => Some(Basis::X),
            PairClass::Discard => None,
        };
        let count_class = basis.and_then(|basis| {
            let a = SideSum::of(pair.alice[0].intensity, pair.alice[1].intensity)?;
            let b = SideSum::of(pair.bob[0].intensity, pair.bob[1].intensity)?;
            Some(CountClass::new(basis, a, b))
        });
        Ok(Self {
            pair,
            label_a,
            label_b,
            class,
            count_class,
            bits: None,
            thetas: None,
            parity: pair.outcomes[0] != pair.outcomes[1],
            kept: false,
        })
    }

    /// Error status of a mapped, kept pair.
    pub fn is_error(&self) -> Option<bool> {
        let (a, b) = self.bits?;
        if !self.kept {
            return None;
        }
        Some(match self.class {
            PairClass::ZPair | PairClass::ZeroPair => a != b,
            PairClass::XPair => (a ^ b ^ self.parity as u8) != 0,
            PairClass::Discard => return None,
        })
    }
}

/// Z bit of Alice for intensities of the front round.
pub fn z_bit_alice(mu_i: IntensityLabel) -> u8 {
    (mu_i != IntensityLabel::Vacuum) as u8
}

/// Z bit of Bob for intensities of the front round.
pub fn z_bit_bob(mu_i: IntensityLabel) -> u8 {
    (mu_i == IntensityLabel::Vacuum) as u8
}

/// X bit and announced angle from two phase indices on a `d`-point grid.
pub fn x_bit_and_theta(phase_i: u8, phase_j: u8, d: u32) -> (u8, f64) {
    let diff = (phase_j as i64 - phase_i as i64).rem_euclid(d as i64) as u32;
    let half = d / 2;
    let chi = (diff >= half) as u8;
    let theta = (diff % half) as f64 * 2.0 * PI / d as f64;
    (chi, theta)
}

/// Fold of `θ_b − θ_a − Δθ` onto the circle of circumference π:
/// returns the integer number of half turns removed and the remainder in `[−π/2, π/2]`.
pub fn fold_half_turns(theta_a: f64, theta_b: f64, delta_theta: f64) -> (i64, f64) {
    let x = theta_b - theta_a - delta_theta;
    let m = (x / PI).round();
    (m as i64, x - m * PI)
}

/// Assigns bits and the keep decision. Returns `false` (and leaves the pair
/// unchanged) for Discard and ZeroPair classes.
///
/// X pairs with a vacuum-only side have no meaningful relative phase on that
/// side and are always kept.
pub fn map_keys(sp: &mut SiftedPair, delta_theta: f64, d: u32) -> bool {
    let p = &sp.pair;
    match sp.class {
        PairClass::ZPair => {
            sp.bits = Some((z_bit_alice(p.alice[0].intensity), z_bit_bob(p.bob[0].intensity)));
            sp.kept = true;
            true
        }
        PairClass::XPair => {
            let (chi_a, theta_a) = x_bit_and_theta(p.alice[0].phase_index, p.alice[1].phase_index, d);
            let (chi_b, theta_b) = x_bit_and_theta(p.bob[0].phase_index, p.bob[1].phase_index, d);
            sp.thetas = Some((theta_a, theta_b));
            if sp.label_a == SideLabel::Zero || sp.label_b == SideLabel::Zero {
                sp.bits = Some((chi_a, chi_b));
                sp.kept = true;
            } else {
                let (m, r) = fold_half_turns(theta_a, theta_b, delta_theta);
                sp.kept = r.abs() <= PI / d as f64 + 1e-12;
                sp.bits = Some((chi_a, chi_b ^ (m.rem_euclid(2) as u8)));
            }
            true
        }
        PairClass::ZeroPair | PairClass::Discard => false,
    }
}

/// Sifts and maps every pair. `delta_theta` supplies the compensation phase of a pair.
pub fn sift_pairs(
    pairs: &[PairRecord],
    d: u32,
    mut delta_theta: impl FnMut(&PairRecord) -> Result<f64>,
) -> Result<Vec<SiftedPair>> {
    let mut out = Vec::with_capacity(pairs.len());
    for p in pairs {
        let mut sp = SiftedPair::new(*p)?;
        match sp.class {
            PairClass::XPair => {
                let dt = delta_theta(p)?;
                map_keys(&mut sp, dt, d);
            }
            PairClass::ZPair => {
                map_keys(&mut sp, 0.0, d);
            }
            PairClass::ZeroPair => {
                sp.bits = Some((z_bit_alice(p.alice[0].intensity), z_bit_bob(p.bob[0].intensity)));
                sp.kept = true;
            }
            PairClass::Discard => {}
        }
        out.push(sp);
    }
    Ok(out)
}

/// Totals and errors per class over kept pairs.
pub fn tally_counts(pairs: &[SiftedPair]) -> CountTable {
    let mut t = CountTable::default();
    for sp in pairs {
        let (Some(class), Some(err)) = (sp.count_class, sp.is_error()) else {
            continue;
        };
        let c = t.get_mut(class);
        c.total += 1;
        c.error += err as u64;
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{Encoding, Outcome};
    use proptest::prelude::*;
    use IntensityLabel::*;

    fn enc(intensity: IntensityLabel, phase_index: u8) -> Encoding {
        Encoding { intensity, phase_index }
    }

    fn pair(alice: [Encoding; 2], bob: [Encoding; 2], outcomes: [Outcome; 2]) -> PairRecord {
        PairRecord {
            front_index: 0,
            rear_index: 100,
            t_front: 0.0,
            t_rear: 1.6e-7,
            outcomes,
            alice,
            bob,
            positions: [0, 1],
        }
    }

    #[test]
    fn side_basis_table() {
        assert_eq!(assign_side_basis(Vacuum, Decoy).unwrap(), SideLabel::Z);
        assert_eq!(assign_side_basis(Signal, Vacuum).unwrap(), SideLabel::Z);
        assert_eq!(assign_side_basis(Signal, Signal).unwrap(), SideLabel::X);
        assert_eq!(assign_side_basis(Decoy, Decoy).unwrap(), SideLabel::X);
        assert_eq!(assign_side_basis(Decoy, Signal).unwrap(), SideLabel::Discard);
        assert_eq!(assign_side_basis(Vacuum, Vacuum).unwrap(), SideLabel::Zero);
        assert!(assign_side_basis(Strong, Vacuum).is_err());
    }

    #[test]
    fn sifting_table() {
        use SideLabel::*;
        assert_eq!(sift_pair(Zero, Z), PairClass::ZPair);
        assert_eq!(sift_pair(X, X), PairClass::XPair);
        assert_eq!(sift_pair(Z, X), PairClass::Discard);
        assert_eq!(sift_pair(X, Z), PairClass::Discard);
        assert_eq!(sift_pair(Zero, Zero), PairClass::ZeroPair);
        assert_eq!(sift_pair(X, Zero), PairClass::XPair);
        assert_eq!(sift_pair(Discard, Zero), PairClass::Discard);
    }

    #[test]
    fn z_bits_follow_front_round() {
        // Anti-aligned light (Alice in the rear round, Bob in the front round) gives equal bits.
        let p = pair(
            [enc(Vacuum, 0), enc(Signal, 3)],
            [enc(Decoy, 1), enc(Vacuum, 2)],
            [Outcome::L; 2],
        );
        let mut sp = SiftedPair::new(p).unwrap();
        assert!(map_keys(&mut sp, 0.0, 16));
        assert_eq!(sp.bits, Some((0, 0)));
        assert_eq!(sp.is_error(), Some(false));
        // Aligned light is an error.
        let p = pair(
            [enc(Vacuum, 0), enc(Signal, 3)],
            [enc(Vacuum, 1), enc(Decoy, 2)],
            [Outcome::L; 2],
        );
        let mut sp = SiftedPair::new(p).unwrap();
        map_keys(&mut sp, 0.0, 16);
        assert_eq!(sp.bits, Some((0, 1)));
        assert_eq!(sp.is_error(), Some(true));
    }

    #[test]
    fn x_bit_examples() {
        // Phases 0 and 9π/8 on a 16-point grid: indices 0 and 9.
        let (chi, theta) = x_bit_and_theta(0, 9, 16);
        assert_eq!(chi, 1);
        assert!((theta - PI / 8.0).abs() < 1e-12);
        let (chi, theta) = x_bit_and_theta(9, 0, 16);
        assert_eq!(chi, 0);
        assert!((theta - 7.0 * PI / 8.0).abs() < 1e-12);
    }

    #[test]
    fn window_center_is_kept_and_edges_closed() {
        let p = pair(
            [enc(Signal, 2), enc(Signal, 5)],
            [enc(Decoy, 7), enc(Decoy, 10)],
            [Outcome::L; 2],
        );
        let mut sp = SiftedPair::new(p).unwrap();
        map_keys(&mut sp, 0.0, 16);
        assert!(sp.kept);
        let mut sp = SiftedPair::new(p).unwrap();
        map_keys(&mut sp, PI / 16.0, 16);
        assert!(sp.kept);
        let mut sp = SiftedPair::new(p).unwrap();
        map_keys(&mut sp, PI / 16.0 + 1e-6, 16);
        assert!(!sp.kept);
    }

    #[test]
    fn fold_flips_parity() {
        // θ_a = 0, θ_b = 15π/16 with Δθ = -π/16: one half turn removed.
        let (m, r) = fold_half_turns(0.0, 15.0 * PI / 16.0, -PI / 16.0);
        assert_eq!(m, 1);
        assert!(r.abs() < 1e-12);
    }

    #[test]
    fn vacuum_side_x_pairs_bypass_window() {
        let p = pair(
            [enc(Vacuum, 0), enc(Vacuum, 3)],
            [enc(Decoy, 0), enc(Decoy, 4)],
            [Outcome::L, Outcome::R],
        );
        let mut sp = SiftedPair::new(p).unwrap();
        map_keys(&mut sp, 1.0, 16);
        assert!(sp.kept);
        assert_eq!(sp.count_class.unwrap().to_string(), "X_A0B2nu");
    }

    #[test]
    fn zero_pair_is_always_error() {
        let p = pair([enc(Vacuum, 0); 2], [enc(Vacuum, 0); 2], [Outcome::L, Outcome::L]);
        let sps = sift_pairs(&[p], 16, |_| Ok(0.0)).unwrap();
        let t = tally_counts(&sps);
        let c = t.get("Z_A0B0".parse().unwrap());
        assert_eq!((c.total, c.error), (1, 1));
    }

    #[test]
    fn empty_tally() {
        let t = tally_counts(&[]);
        assert!(t.iter().all(|(_, c)| c == ClassCounts::default()));
    }

    #[test]
    fn class_names_round_trip() {
        let names: Vec<String> = CountClass::ALL.iter().map(|c| c.to_string()).collect();
        assert_eq!(names[0], "Z_A0B0");
        assert_eq!(names[5], "Z_AnuBmu");
        assert_eq!(names[16], "X_A2muB2mu");
        for n in &names {
            assert_eq!(&n.parse::<CountClass>().unwrap().to_string(), n);
        }
        assert!("Z_A1B0".parse::<CountClass>().is_err());
    }

    #[test]
    fn class_frequencies_match_multinomial() {
        use rand::{Rng, SeedableRng};
        let probs = [0.6, 0.18, 0.22];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
            let u: f64 = rng.random();
            if u < probs[0] {
                Vacuum
            } else if u < probs[0] + probs[1] {
                Decoy
            } else {
                Signal
            }
        };
        let n = 200_000;
        let mut z = 0u64;
        for _ in 0..n {
            let a = [enc(draw(&mut rng), 0), enc(draw(&mut rng), 0)];
            let b = [enc(draw(&mut rng), 0), enc(draw(&mut rng), 0)];
            if SiftedPair::new(pair(a, b, [Outcome::L; 2])).unwrap().class == PairClass::ZPair {
                z += 1;
            }
        }
        // P(side in {'0', Z}) and P(side = '0').
        let p0 = probs[0];
        let zero = p0 * p0;
        let zside = 2.0 * p0 * (1.0 - p0);
        let expected = (zero + zside).powi(2) - zero * zero;
        let se = (expected * (1.0 - expected) / n as f64).sqrt();
        assert!(((z as f64 / n as f64) - expected).abs() < 3.0 * se);
    }

    proptest! {
        #[test]
        fn every_pair_gets_one_class(a in 0usize..3, b in 0usize..3, c in 0usize..3, e in 0usize..3) {
            let l = IntensityLabel::QKD;
            let p = pair([enc(l[a], 0), enc(l[b], 0)], [enc(l[c], 0), enc(l[e], 0)], [Outcome::L; 2]);
            let sp = SiftedPair::new(p).unwrap();
            let expect_class = !matches!(sp.class, PairClass::Discard);
            prop_assert_eq!(sp.count_class.is_some(), expect_class);
        }

        #[test]
        fn z_bits_ignore_phases(pa in 0u8..16, pb in 0u8..16, pc in 0u8..16, pd in 0u8..16) {
            let p1 = pair([enc(Vacuum, pa), enc(Signal, pb)], [enc(Signal, pc), enc(Vacuum, pd)], [Outcome::L; 2]);
            let p2 = pair([enc(Vacuum, 0), enc(Signal, 0)], [enc(Signal, 0), enc(Vacuum, 0)], [Outcome::L; 2]);
            let (mut s1, mut s2) = (SiftedPair::new(p1).unwrap(), SiftedPair::new(p2).unwrap());
            map_keys(&mut s1, 0.3, 16);
            map_keys(&mut s2, 0.3, 16);
            prop_assert_eq!(s1.bits, s2.bits);
        }

        #[test]
        fn x_bits_ignore_intensities(pa in 0u8..16, pb in 0u8..16, pc in 0u8..16, pd in 0u8..16, dt in -10.0f64..10.0) {
            let p1 = pair([enc(Signal, pa), enc(Signal, pb)], [enc(Decoy, pc), enc(Decoy, pd)], [Outcome::L; 2]);
            let p2 = pair([enc(Decoy, pa), enc(Decoy, pb)], [enc(Signal, pc), enc(Signal, pd)], [Outcome::L; 2]);
            let (mut s1, mut s2) = (SiftedPair::new(p1).unwrap(), SiftedPair::new(p2).unwrap());
            map_keys(&mut s1, dt, 16);
            map_keys(&mut s2, dt, 16);
            prop_assert_eq!(s1.bits, s2.bits);
            prop_assert_eq!(s1.kept, s2.kept);
        }
    }

    #[test]
    fn keep_rate_is_one_eighth() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let n = 100_000;
        let mut kept = 0;
        for _ in 0..n {
            let ph: [u8; 4] = std::array::from_fn(|_| rng.random_range(0..16));
            let p = pair(
                [enc(Signal, ph[0]), enc(Signal, ph[1])],
                [enc(Decoy, ph[2]), enc(Decoy, ph[3])],
                [Outcome::L; 2],
            );
            let mut sp = SiftedPair::new(p).unwrap();
            map_keys(&mut sp, rng.random::<f64>() * 2.0 * PI, 16);
            kept += sp.kept as u32;
        }
        let rate = kept as f64 / n as f64;
        let se = (0.125 * 0.875 / n as f64).sqrt();
        assert!((rate - 0.125).abs() < 3.0 * se, "{rate}");
    }
}
