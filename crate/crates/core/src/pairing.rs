//! Sequential pairing of valid clicks under length constraints.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::Session;
use crate::error::{Error, Result};
use crate::protocol::{ClickRecord, Encoding, Outcome, Region};

/// Two positions in a click list that were paired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClickPair {
    /// Positions in the input slice.
    pub front: usize,
    pub rear: usize,
    /// Slot indices.
    pub front_index: u64,
    pub rear_index: u64,
}

impl ClickPair {
    pub fn length(&self) -> u64 {
        self.rear_index - self.front_index
    }
}

/// A fully described pair of rounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub front_index: u64,
    pub rear_index: u64,
    pub t_front: f64,
    pub t_rear: f64,
    pub outcomes: [Outcome; 2],
    /// Alice's settings for (front, rear).
    pub alice: [Encoding; 2],
    pub bob: [Encoding; 2],
    /// Positions of the two clicks in the session click list.
    pub positions: [usize; 2],
}

impl PairRecord {
    pub fn length(&self) -> u64 {
        self.rear_index - self.front_index
    }

    /// Detectors of the two clicks differ.
    pub fn different_detectors(&self) -> bool {
        self.outcomes[0] != self.outcomes[1]
    }
}

/// Pairs one segment of clicks, exactly following the front/rear scan:
/// the first valid click becomes the front, the next valid click the rear;
/// an in-range pair is emitted and both are cleared, otherwise the rear
/// becomes the new front.
///
/// Invalid (double) clicks are skipped. Input must be sorted by index.
pub fn pair_clicks(clicks: &[ClickRecord], l_min: u64, l_max: u64) -> Vec<ClickPair> {
    let mut out = Vec::new();
    let mut front: Option<usize> = None;
    for (pos, c) in clicks.iter().enumerate() {
        if !c.valid {
            continue;
        }
        let Some(f) = front else {
            front = Some(pos);
            continue;
        };
        let l = c.index - clicks[f].index;
        if (l_min..=l_max).contains(&l) {
            out.push(ClickPair {
                front: f,
                rear: pos,
                front_index: clicks[f].index,
                rear_index: c.index,
            });
            front = None;
        } else {
            front = Some(pos);
        }
    }
    out
}

/// Pairs clicks independently within each segment, where `segment_of` maps a
/// slot index to a segment key. Segments must be contiguous in the input.
/// Positions in the result refer to the full input slice.
pub fn pair_segmented(
    clicks: &[ClickRecord],
    l_min: u64,
    l_max: u64,
    segment_of: impl Fn(u64) -> u64 + Sync,
) -> Vec<ClickPair> {
    let mut bounds = Vec::new();
    let mut start = 0;
    for i in 1..=clicks.len() {
        if i == clicks.len() || segment_of(clicks[i].index) != segment_of(clicks[start].index) {
            bounds.push((start, i));
            start = i;
        }
    }
    let parts: Vec<Vec<ClickPair>> = bounds
        .par_iter()
        .map(|&(s, e)| {
            let mut p = pair_clicks(&clicks[s..e], l_min, l_max);
            for x in &mut p {
                x.front += s;
                x.rear += s;
            }
            p
        })
        .collect();
    parts.concat()
}

/// Pairs the QKD clicks of a session, one segment per QKD region.
pub fn pair_session(session: &Session, l_min: u64, l_max: u64) -> Vec<PairRecord> {
    let positions: Vec<usize> = session
        .rounds
        .iter()
        .enumerate()
        .filter(|(_, r)| r.region == Region::Qkd)
        .map(|(i, _)| i)
        .collect();
    let qkd_clicks: Vec<ClickRecord> = positions.iter().map(|&i| session.clicks[i]).collect();
    let frame = session.frame;
    pair_segmented(&qkd_clicks, l_min, l_max, |i| frame.cycle_of(i))
        .into_iter()
        .map(|p| {
            let (f, r) = (positions[p.front], positions[p.rear]);
            let (cf, cr) = (&session.clicks[f], &session.clicks[r]);
            let (rf, rr) = (&session.rounds[f], &session.rounds[r]);
            PairRecord {
                front_index: cf.index,
                rear_index: cr.index,
                t_front: cf.t,
                t_rear: cr.t,
                outcomes: [cf.outcome, cr.outcome],
                alice: [rf.alice, rr.alice],
                bob: [rf.bob, rr.bob],
                positions: [f, r],
            }
        })
        .collect()
}

/// Summary of a pairing run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingStats {
    pub n_pairs: u64,
    pub n_rounds: u64,
    /// Pair counts per length interval `[lo, hi)`.
    pub histogram: Vec<(u64, u64, u64)>,
    /// `n_pairs / n_rounds`.
    pub rate: f64,
}

impl PairingStats {
    pub fn from_lengths(lengths: impl IntoIterator<Item = u64>, n_rounds: u64, edges: &[u64]) -> Self {
        let mut histogram: Vec<(u64, u64, u64)> = edges.windows(2).map(|w| (w[0], w[1], 0)).collect();
        let mut n_pairs = 0u64;
        for l in lengths {
            n_pairs += 1;
            if let Some(bin) = histogram.iter_mut().find(|(lo, hi, _)| (*lo..*hi).contains(&l)) {
                bin.2 += 1;
            }
        }
        Self {
            n_pairs,
            n_rounds,
            histogram,
            rate: if n_rounds > 0 {
                n_pairs as f64 / n_rounds as f64
            } else {
                0.0
            },
        }
    }
}

fn check_lengths(l_min: u64, l_max: u64) -> Result<()> {
    if l_min < 1 || l_min > l_max {
        return Err(Error::Domain(format!(
            "pairing lengths need 1 <= l_min <= l_max (got {l_min}, {l_max})"
        )));
    }
    Ok(())
}

/// Expected pairs per round for independent clicks of probability `p`.
pub fn pairing_rate(p: f64, l_min: u64, l_max: u64) -> Result<f64> {
    check_lengths(l_min, l_max)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("click probability {p} outside [0, 1]")));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    let q = 1.0 - p;
    let window = q.powf((l_min - 1) as f64) - q.powf(l_max as f64);
    if window <= 0.0 {
        if p == 1.0 {
            return Err(Error::Domain("pairing rate undefined for p = 1 with l_min > 1".into()));
        }
        return Ok(0.0);
    }
    Ok(1.0 / (1.0 / (p * window) + 1.0 / p))
}

/// Expected number of further clicks within `l_max` rounds of a click.
pub fn expected_pairs_heuristic(p: f64, l_max: u64) -> f64 {
    p * l_max as f64
}

/// Variance of the number of pairs in `n` rounds (renewal central limit approximation).
pub fn pair_count_variance(p: f64, l_min: u64, l_max: u64, n: u64) -> Result<f64> {
    check_lengths(l_min, l_max)?;
    if p <= 0.0 || p >= 1.0 {
        return Ok(0.0);
    }
    // One renewal cycle: wait G ~ Geom(p) for a front, then repeatedly draw
    // gaps until one lands in [l_min, l_max]. Each failed gap restarts with
    // a fresh front, so the cycle length C = G + Σ (failed gaps) + success gap.
    let q = 1.0 - p;
    let s = q.powi((l_min - 1) as i32) - q.powi(l_max as i32);
    // Moments of the gap truncated to success / failure.
    let (mut s1, mut s2, mut f1, mut f2) = (0.0, 0.0, 0.0, 0.0);
    let mut pk = p;
    let mut k = 1u64;
    let cutoff = ((60.0 / p) as u64).max(l_max + 1);
    while k <= cutoff {
        let kf = k as f64;
        if (l_min..=l_max).contains(&k) {
            s1 += kf * pk;
            s2 += kf * kf * pk;
        } else {
            f1 += kf * pk;
            f2 += kf * kf * pk;
        }
        pk *= q;
        k += 1;
    }
    // Number of failures before success is Geom0(s).
    let fail = 1.0 - s;
    let ef = fail / s;
    let vf = fail / (s * s);
    let (mf, m2f) = if fail > 0.0 { (f1 / fail, f2 / fail) } else { (0.0, 0.0) };
    let (ms, m2s) = (s1 / s, s2 / s);
    let var_f = m2f - mf * mf;
    let var_s = m2s - ms * ms;
    let var_g = q / (p * p);
    let mean_c = 1.0 / p + ef * mf + ms;
    let var_c = var_g + ef * var_f + vf * mf * mf + var_s;
    Ok(n as f64 * var_c / mean_c.powi(3))
}

/// Click stream of `n_rounds` independent rounds with click probability `p`.
pub fn bernoulli_clicks(p: f64, n_rounds: u64, seed: u64) -> Result<Vec<ClickRecord>> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Domain(format!("click probability {p} outside (0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gap = Geometric::new(p).map_err(|e| Error::Domain(e.to_string()))?;
    let mut out = Vec::with_capacity((p * n_rounds as f64 * 1.1) as usize + 16);
    let mut idx = gap.sample(&mut rng);
    while idx < n_rounds {
        out.push(ClickRecord::new(idx, 0.0, Outcome::L));
        idx += gap.sample(&mut rng) + 1;
    }
    Ok(out)
}

/// Monte Carlo pairing of one Bernoulli stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairingSample {
    pub n_rounds: u64,
    pub n_pairs: u64,
    pub rate: f64,
    /// Standard error of `rate` from the renewal variance.
    pub std_error: f64,
}

pub fn sample_pairing_rate(p: f64, l_min: u64, l_max: u64, n_rounds: u64, seed: u64) -> Result<PairingSample> {
    check_lengths(l_min, l_max)?;
    let clicks = bernoulli_clicks(p, n_rounds, seed)?;
    let n_pairs = pair_clicks(&clicks, l_min, l_max).len() as u64;
    let var = pair_count_variance(p, l_min, l_max, n_rounds)?;
    Ok(PairingSample {
        n_rounds,
        n_pairs,
        rate: n_pairs as f64 / n_rounds as f64,
        std_error: var.sqrt() / n_rounds as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn clicks_at(idx: &[u64]) -> Vec<ClickRecord> {
        idx.iter().map(|&i| ClickRecord::new(i, 0.0, Outcome::L)).collect()
    }

    fn pairs(idx: &[u64], lo: u64, hi: u64) -> Vec<(u64, u64)> {
        pair_clicks(&clicks_at(idx), lo, hi)
            .iter()
            .map(|p| (p.front_index, p.rear_index))
            .collect()
    }

    #[test]
    fn hand_traces() {
        assert_eq!(pairs(&[10, 80], 63, 500), vec![(10, 80)]);
        assert_eq!(pairs(&[10, 20, 100], 63, 500), vec![(20, 100)]);
        assert_eq!(pairs(&[0, 600], 63, 500), vec![]);
        assert_eq!(pairs(&[0, 600, 700], 63, 500), vec![(600, 700)]);
        assert_eq!(pairs(&[], 63, 500), vec![]);
    }

    #[test]
    fn double_clicks_are_skipped() {
        let mut c = clicks_at(&[10, 50, 80]);
        c[1] = ClickRecord::new(50, 0.0, Outcome::Both);
        let p = pair_clicks(&c, 63, 500);
        assert_eq!(p.len(), 1);
        assert_eq!((p[0].front, p[0].rear), (0, 2));
    }

    #[test]
    fn segments_never_mix() {
        let c = clicks_at(&[10, 80, 990, 1100]);
        let p = pair_segmented(&c, 63, 500, |i| i / 1000);
        let got: Vec<_> = p.iter().map(|p| (p.front, p.rear)).collect();
        assert_eq!(got, vec![(0, 1)]);
    }

    #[test]
    fn rate_reference_points() {
        let r = pairing_rate(6.35e-3, 63, 500).unwrap();
        assert!((r / 2.46e-3 - 1.0).abs() < 0.01, "{r}");
        let r = pairing_rate(5.0e-5, 63, 2000).unwrap();
        assert!((r / 4.21e-6 - 1.0).abs() < 0.01, "{r}");
        assert!((pairing_rate(0.5, 1, 1_000_000).unwrap() - 0.25).abs() < 1e-12);
        assert_eq!(pairing_rate(0.0, 63, 500).unwrap(), 0.0);
        assert!(pairing_rate(1.0, 63, 500).is_err());
        assert!(pairing_rate(0.1, 0, 5).is_err());
        assert!(pairing_rate(0.1, 6, 5).is_err());
    }

    #[test]
    fn heuristic_reference_points() {
        assert!((expected_pairs_heuristic(6.35e-3, 500) - 3.175).abs() < 1e-12);
        assert!((expected_pairs_heuristic(1.13e-3, 1000) - 1.13).abs() < 1e-12);
        assert_eq!(expected_pairs_heuristic(0.0, 77), 0.0);
    }

    #[test]
    fn variance_matches_bernoulli_pairing() {
        // Renewal variance against the spread of simulated pair counts.
        use rand::{Rng, SeedableRng};
        let (p, lo, hi, n) = (0.01, 63, 500, 200_000u64);
        let mut counts = Vec::new();
        for seed in 0..200 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let idx: Vec<u64> = (0..n).filter(|_| rng.random::<f64>() < p).collect();
            counts.push(pairs(&idx, lo, hi).len() as f64);
        }
        let m = counts.iter().sum::<f64>() / counts.len() as f64;
        let v = counts.iter().map(|c| (c - m).powi(2)).sum::<f64>() / (counts.len() - 1) as f64;
        let model = pair_count_variance(p, lo, hi, n).unwrap();
        assert!((v / model - 1.0).abs() < 0.3, "empirical {v} model {model}");
        let expected = pairing_rate(p, lo, hi).unwrap() * n as f64;
        assert!((m - expected).abs() < 4.0 * (model / counts.len() as f64).sqrt());
    }

    #[test]
    fn stats_histogram() {
        let s = PairingStats::from_lengths([70, 600, 999, 1000, 1500], 10_000, &[63, 500, 1000, 1500, 2000]);
        assert_eq!(s.n_pairs, 5);
        assert_eq!(s.histogram.iter().map(|b| b.2).collect::<Vec<_>>(), vec![1, 2, 1, 1]);
        assert!((s.rate - 5e-4).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn pairs_respect_bounds(mut idx in proptest::collection::vec(0u64..100_000, 0..400),
                                lo in 1u64..200, extra in 0u64..2000) {
            idx.sort_unstable();
            idx.dedup();
            let hi = lo + extra;
            let c = clicks_at(&idx);
            let p = pair_clicks(&c, lo, hi);
            prop_assert!(p.len() <= idx.len() / 2);
            let mut last_rear = None;
            for x in &p {
                prop_assert!((lo..=hi).contains(&x.length()));
                prop_assert!(x.front < x.rear);
                if let Some(r) = last_rear { prop_assert!(x.front > r); }
                last_rear = Some(x.rear);
            }
        }

        #[test]
        fn rate_is_monotone(p in 1e-5f64..0.2, lo in 1u64..100, a in 0u64..3000, b in 0u64..3000) {
            let (h1, h2) = (lo + a.min(b), lo + a.max(b));
            prop_assert!(pairing_rate(p, lo, h1).unwrap() <= pairing_rate(p, lo, h2).unwrap() * (1.0 + 1e-12));
            if lo > 1 {
                prop_assert!(pairing_rate(p, lo, h1).unwrap() <= pairing_rate(p, lo - 1, h1).unwrap() * (1.0 + 1e-12));
            }
        }
    }
}
