//! Phase-reference estimation from strong-pulse clicks.
//!
//! Two clicks separated by `g` slots come from the same detector with
//! probability `1/2 + cos(Δω·τ·g)/4`. Groups of strong clicks give a
//! maximum-likelihood estimate of `Δω`; the estimates are tracked by
//! piecewise-linear least squares and integrated to obtain the phase drift
//! between any two QKD rounds.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::Session;
use crate::error::{Error, Result, Violations};
use crate::protocol::{Outcome, Region};

/// Same-detector and different-detector probabilities of two clicks whose
/// phases differ by `dtheta`.
pub fn pairwise_outcome_probability(dtheta: f64) -> (f64, f64) {
    let c = dtheta.cos() / 4.0;
    (0.5 + c, 0.5 - c)
}

/// Valid strong-pulse clicks used for one estimate.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EstimationGroup {
    /// `(slot index, outcome)` in increasing index order. Only `L`/`R` outcomes.
    pub clicks: Vec<(u64, Outcome)>,
    /// Reference block of each click; pairs are formed only inside a block.
    pub blocks: Vec<u64>,
    pub t_start: f64,
    pub t_end: f64,
}

impl EstimationGroup {
    /// A group whose clicks all share one block.
    pub fn contiguous(clicks: Vec<(u64, Outcome)>, tau: f64) -> Self {
        let t_start = clicks.first().map_or(0.0, |c| c.0 as f64 * tau);
        let t_end = clicks.last().map_or(0.0, |c| c.0 as f64 * tau);
        let blocks = vec![0; clicks.len()];
        Self {
            clicks,
            blocks,
            t_start,
            t_end,
        }
    }

    pub fn len(&self) -> usize {
        self.clicks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clicks.is_empty()
    }

    /// Mean click time.
    pub fn mean_time(&self, tau: f64) -> f64 {
        let n = self.clicks.len().max(1) as f64;
        self.clicks.iter().map(|c| c.0 as f64 * tau).sum::<f64>() / n
    }

    /// Counts of same-detector and different-detector pairs by gap.
    pub fn gap_histogram(&self, min_gap: u64, max_gap: Option<u64>) -> GapHistogram {
        let mut h = GapHistogram::default();
        for i in 0..self.clicks.len() {
            let (a, da) = self.clicks[i];
            for j in i + 1..self.clicks.len() {
                if self.blocks[j] != self.blocks[i] {
                    break;
                }
                let (b, db) = self.clicks[j];
                let g = b - a;
                if max_gap.is_some_and(|m| g > m) {
                    break;
                }
                if g < min_gap {
                    continue;
                }
                h.add(g as usize, da == db);
            }
        }
        h
    }
}

/// Pair counts indexed by gap.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GapHistogram {
    pub same: Vec<u64>,
    pub diff: Vec<u64>,
}

impl GapHistogram {
    fn add(&mut self, g: usize, same: bool) {
        if g >= self.same.len() {
            self.same.resize(g + 1, 0);
            self.diff.resize(g + 1, 0);
        }
        if same {
            self.same[g] += 1;
        } else {
            self.diff[g] += 1;
        }
    }

    pub fn n_pairs(&self) -> u64 {
        self.same.iter().sum::<u64>() + self.diff.iter().sum::<u64>()
    }

    pub fn max_gap(&self) -> usize {
        self.same.len().saturating_sub(1)
    }

    /// Log-likelihood of `omega` (rad/s).
    pub fn log_likelihood(&self, omega: f64, tau: f64) -> f64 {
        let mut f = 0.0;
        for g in 1..self.same.len() {
            let (a, b) = (self.same[g], self.diff[g]);
            if a + b == 0 {
                continue;
            }
            let (p0, p1) = pairwise_outcome_probability(omega * tau * g as f64);
            if a > 0 {
                f += a as f64 * p0.ln();
            }
            if b > 0 {
                f += b as f64 * p1.ln();
            }
        }
        f
    }

    /// First-order expansion of the log-likelihood in the interference term,
    /// `Σ_g (A_g − B_g)·cos(ω·τ·g)`, using the Chebyshev recurrence for
    /// `cos(g·x)`. Cheap enough for dense grid scans.
    fn correlation(&self, omega: f64, tau: f64) -> f64 {
        let x = omega * tau;
        let two_cos = 2.0 * x.cos();
        let (mut c_prev, mut c) = (1.0, x.cos());
        let mut s = 0.0;
        for g in 1..self.same.len() {
            s += (self.same[g] as f64 - self.diff[g] as f64) * c;
            let next = two_cos * c - c_prev;
            c_prev = c;
            c = next;
        }
        s
    }
}

/// Settings of the maximum-likelihood search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MleOptions {
    /// Lower end of the signed search interval (rad/s).
    pub lo: f64,
    /// Upper end of the signed search interval (rad/s).
    pub hi: f64,
    /// Smallest gap used (slots).
    #[serde(default = "default_min_gap")]
    pub min_gap: u64,
    /// Largest gap used (slots); `None` uses every pair of the group.
    #[serde(default = "default_max_gap")]
    pub max_gap: Option<u64>,
}

fn default_min_gap() -> u64 {
    1
}

fn default_max_gap() -> Option<u64> {
    Some(2000)
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            lo: 0.0,
            hi: 2.0 * PI * 150e6,
            min_gap: default_min_gap(),
            max_gap: default_max_gap(),
        }
    }
}

impl MleOptions {
    pub(crate) fn violations(&self, tau: f64) -> Violations {
        let mut v = Violations::default();
        v.check(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi, || {
            format!("search interval [{}, {}] is degenerate", self.lo, self.hi)
        });
        v.check(self.hi - self.lo < 2.0 * PI / tau, || {
            format!(
                "search interval width {} rad/s must be below the alias period {} rad/s",
                self.hi - self.lo,
                2.0 * PI / tau
            )
        });
        v.check(self.min_gap >= 1, || "min_gap must be >= 1".into());
        if let Some(m) = self.max_gap {
            v.check(m >= self.min_gap, || {
                format!("max_gap {m} below min_gap {}", self.min_gap)
            });
        }
        v
    }

    /// The likelihood is even in `Δω`, so an interval containing both signs
    /// cannot tell them apart.
    pub fn sign_ambiguous(&self) -> bool {
        self.lo < 0.0 && self.hi > 0.0
    }
}

/// Maximizes the log-likelihood of a gap histogram over `[opts.lo, opts.hi]`.
pub fn mle_from_histogram(hist: &GapHistogram, tau: f64, opts: &MleOptions) -> Result<f64> {
    opts.violations(tau).into_result()?;
    if hist.n_pairs() == 0 {
        return Err(Error::Domain("estimation group has no usable click pairs".into()));
    }
    let (lo, hi) = (opts.lo, opts.hi);
    let width = hi - lo;
    let step = PI / 4.0 / (tau * hist.max_gap().max(1) as f64);
    let n = ((width / step).ceil() as usize).max(2);
    let grid = |k: usize| lo + width * k as f64 / n as f64;
    let f = |w: f64| -hist.log_likelihood(w, tau);

    // Rank local maxima of the first-order statistic, then compare the best
    // few on the exact likelihood.
    let scan: Vec<f64> = (0..=n).map(|k| hist.correlation(grid(k), tau)).collect();
    let mut peaks: Vec<usize> = (0..=n)
        .filter(|&k| (k == 0 || scan[k] >= scan[k - 1]) && (k == n || scan[k] >= scan[k + 1]))
        .collect();
    peaks.sort_by(|&a, &b| scan[b].total_cmp(&scan[a]).then(a.cmp(&b)));
    peaks.truncate(CANDIDATE_PEAKS);
    let mut best = (lo, f64::INFINITY);
    for &k in &peaks {
        let (w, fw) = golden_section(&f, grid(k.saturating_sub(1)), grid((k + 1).min(n)), 1e-6 * width);
        // The grid point itself can beat the bracket interior at an interval edge.
        let (w, fw) = if f(grid(k)) < fw {
            (grid(k), f(grid(k)))
        } else {
            (w, fw)
        };
        if fw < best.1 {
            best = (w, fw);
        }
    }
    Ok(best.0)
}

const CANDIDATE_PEAKS: usize = 4;

/// Minimizes `f` on `[a, b]` to bracket width `tol`.
fn golden_section(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let w = 0.5 * (a + b);
    (w, f(w))
}

/// Maximum-likelihood `Δω` for one group.
pub fn mle_delta_omega(group: &EstimationGroup, tau: f64, opts: &MleOptions) -> Result<f64> {
    if group.is_empty() {
        return Err(Error::Domain("estimation group is empty".into()));
    }
    mle_from_histogram(&group.gap_histogram(opts.min_gap, opts.max_gap), tau, opts)
}

/// Group of clicks at constant `Δω`: each slot clicks with `click_prob` and a
/// click lands on L with probability `(1 + cos Θ)/2`, `Θ = θ₀ + Δω·τ·k` with a
/// random `θ₀`. Pairs then follow [`pairwise_outcome_probability`] exactly.
pub fn synthetic_group(delta_omega: f64, tau: f64, n_clicks: usize, click_prob: f64, seed: u64) -> EstimationGroup {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta0 = rng.random::<f64>() * 2.0 * PI;
    let mut clicks = Vec::with_capacity(n_clicks);
    let mut k = 0u64;
    while clicks.len() < n_clicks {
        if rng.random::<f64>() < click_prob {
            let p_l = 0.5 * (1.0 + (theta0 + delta_omega * tau * k as f64).cos());
            let o = if rng.random::<f64>() < p_l {
                Outcome::L
            } else {
                Outcome::R
            };
            clicks.push((k, o));
        }
        k += 1;
    }
    EstimationGroup::contiguous(clicks, tau)
}

/// One linear piece `Δω(t) = a + b·(t − t_ref)` valid on `[t0, t1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackSegment {
    pub t0: f64,
    pub t1: f64,
    pub t_ref: f64,
    pub a: f64,
    pub b: f64,
    /// RMS residual of the window's estimates.
    pub rms_residual: f64,
    pub n_points: usize,
}

impl TrackSegment {
    fn value(&self, t: f64) -> f64 {
        self.a + self.b * (t - self.t_ref)
    }

    fn integral(&self, u: f64, v: f64) -> f64 {
        let (du, dv) = (u - self.t_ref, v - self.t_ref);
        self.a * (v - u) + 0.5 * self.b * (dv * dv - du * du)
    }
}

/// Piecewise-linear model of `Δω(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyTrack {
    pub segments: Vec<TrackSegment>,
}

impl FrequencyTrack {
    pub fn domain(&self) -> (f64, f64) {
        (self.segments[0].t0, self.segments[self.segments.len() - 1].t1)
    }

    fn check(&self, t: f64) -> Result<()> {
        let (t0, t1) = self.domain();
        if !(t0..=t1).contains(&t) {
            return Err(Error::Domain(format!("time {t} outside track domain [{t0}, {t1}]")));
        }
        Ok(())
    }

    fn segment_at(&self, t: f64) -> usize {
        self.segments.partition_point(|s| s.t1 < t).min(self.segments.len() - 1)
    }

    /// `Δω(t)` (rad/s).
    pub fn evaluate(&self, t: f64) -> Result<f64> {
        self.check(t)?;
        Ok(self.segments[self.segment_at(t)].value(t))
    }
}

fn ols(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let t_ref = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - t_ref).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - t_ref) * (p.1 - mean)).sum();
    let b = if points.len() >= 2 && sxx > 0.0 { sxy / sxx } else { 0.0 };
    (t_ref, mean, b)
}

/// Fits disjoint windows of `window` consecutive estimates by ordinary least
/// squares. Segment boundaries sit halfway between neighbouring windows and
/// the outer segments extend to `domain`.
pub fn fit_frequency_track(estimates: &[(f64, f64)], window: usize, domain: (f64, f64)) -> Result<FrequencyTrack> {
    if estimates.is_empty() {
        return Err(Error::Domain("no frequency estimates to fit".into()));
    }
    if window == 0 {
        return Err(Error::Domain("fit window must be >= 1".into()));
    }
    if domain.0.is_nan() || domain.1.is_nan() || domain.0 > domain.1 {
        return Err(Error::Domain(format!(
            "track domain [{}, {}] is empty",
            domain.0, domain.1
        )));
    }
    let mut pts = estimates.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let chunks: Vec<&[(f64, f64)]> = pts.chunks(window).collect();
    let mut segments = Vec::with_capacity(chunks.len());
    for (k, chunk) in chunks.iter().enumerate() {
        let (t_ref, a, b) = ols(chunk);
        let rms =
            (chunk.iter().map(|p| (p.1 - a - b * (p.0 - t_ref)).powi(2)).sum::<f64>() / chunk.len() as f64).sqrt();
        let t0 = if k == 0 {
            domain.0
        } else {
            0.5 * (chunks[k - 1].last().unwrap().0 + chunk[0].0)
        };
        let t1 = if k + 1 == chunks.len() {
            domain.1
        } else {
            0.5 * (chunk.last().unwrap().0 + chunks[k + 1][0].0)
        };
        segments.push(TrackSegment {
            t0: t0.clamp(domain.0, domain.1),
            t1: t1.clamp(domain.0, domain.1),
            t_ref,
            a,
            b,
            rms_residual: rms,
            n_points: chunk.len(),
        });
    }
    Ok(FrequencyTrack { segments })
}

/// Phase accumulated by the track between `t_i` and `t_j` (negative if `t_j < t_i`).
pub fn compensation_phase(t_i: f64, t_j: f64, track: &FrequencyTrack) -> Result<f64> {
    track.check(t_i)?;
    track.check(t_j)?;
    if t_j < t_i {
        return compensation_phase(t_j, t_i, track).map(|x| -x);
    }
    let (mut k, last) = (track.segment_at(t_i), track.segment_at(t_j));
    let mut total = 0.0;
    let mut u = t_i;
    while k < last {
        let s = &track.segments[k];
        total += s.integral(u, s.t1);
        u = s.t1;
        k += 1;
    }
    Ok(total + track.segments[last].integral(u, t_j))
}

/// Settings of the estimation pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseOptions {
    /// Valid strong clicks per group.
    #[serde(default = "default_group_size")]
    pub group_size: usize,
    /// Longest time a group may span (s).
    #[serde(default = "default_group_span")]
    pub max_group_span: f64,
    /// Estimates per fitting window.
    #[serde(default = "default_window")]
    pub fit_window: usize,
    #[serde(default)]
    pub mle: MleOptions,
}

fn default_group_size() -> usize {
    500
}

fn default_group_span() -> f64 {
    1e-3
}

fn default_window() -> usize {
    200
}

impl Default for PhaseOptions {
    fn default() -> Self {
        Self {
            group_size: default_group_size(),
            max_group_span: default_group_span(),
            fit_window: default_window(),
            mle: MleOptions::default(),
        }
    }
}

impl PhaseOptions {
    pub(crate) fn violations(&self, tau: f64) -> Violations {
        let mut v = self.mle.violations(tau);
        v.check(self.group_size >= 2, || "group_size must be >= 2".into());
        v.check(self.fit_window >= 1, || "fit_window must be >= 1".into());
        v.check(self.max_group_span > 0.0, || "max_group_span must be > 0".into());
        v
    }
}

/// Splits the valid Reference-region clicks of a session into groups.
///
/// A group closes after `group_size` clicks or when the next click would
/// extend it past `max_group_span`. Groups with fewer than a fifth of the
/// target size are dropped.
pub fn build_groups(session: &Session, opts: &PhaseOptions) -> Vec<EstimationGroup> {
    let frame = session.frame;
    let mut groups = Vec::new();
    let mut cur = EstimationGroup::default();
    let min_size = (opts.group_size / 5).max(2);
    for (c, r) in session.clicks.iter().zip(&session.rounds) {
        if r.region != Region::Reference || !c.valid {
            continue;
        }
        if !cur.is_empty() && (cur.len() >= opts.group_size || c.t - cur.t_start > opts.max_group_span) {
            let done = std::mem::take(&mut cur);
            if done.len() >= min_size {
                groups.push(done);
            }
        }
        if cur.is_empty() {
            cur.t_start = c.t;
        }
        cur.t_end = c.t;
        cur.clicks.push((c.index, c.outcome));
        cur.blocks.push(frame.cycle_of(c.index));
    }
    if cur.len() >= min_size {
        groups.push(cur);
    }
    groups
}

/// Estimate produced by one group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupEstimate {
    /// Mean click time of the group (s).
    pub t: f64,
    pub n_clicks: usize,
    pub delta_omega: f64,
}

/// Output of [`estimate_track`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseEstimate {
    pub estimates: Vec<GroupEstimate>,
    pub track: FrequencyTrack,
    pub sign_ambiguous: bool,
}

/// Runs grouping, per-group MLE and track fitting over a whole session.
pub fn estimate_track(session: &Session, opts: &PhaseOptions) -> Result<PhaseEstimate> {
    let tau = session.pulse_interval;
    opts.violations(tau).into_result()?;
    let groups = build_groups(session, opts);
    if groups.is_empty() {
        return Err(Error::Runtime("no strong-pulse group has enough valid clicks".into()));
    }
    let estimates: Vec<GroupEstimate> = groups
        .par_iter()
        .filter_map(|g| {
            let hist = g.gap_histogram(opts.mle.min_gap, opts.mle.max_gap);
            (hist.n_pairs() > 0).then(|| {
                mle_from_histogram(&hist, tau, &opts.mle).map(|w| GroupEstimate {
                    t: g.mean_time(tau),
                    n_clicks: g.len(),
                    delta_omega: w,
                })
            })
        })
        .collect::<Result<_>>()?;
    if estimates.is_empty() {
        return Err(Error::Runtime("no strong-pulse group produced click pairs".into()));
    }
    let pts: Vec<(f64, f64)> = estimates.iter().map(|e| (e.t, e.delta_omega)).collect();
    let end = session.n_slots() as f64 * tau;
    let track = fit_frequency_track(&pts, opts.fit_window, (0.0, end))?;
    Ok(PhaseEstimate {
        estimates,
        track,
        sign_ambiguous: opts.mle.sign_ambiguous(),
    })
}

/// Mismatch tally of strong-click pairs in one length interval `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceErrorBin {
    pub lo: u64,
    pub hi: u64,
    pub pairs: u64,
    pub errors: u64,
}

impl ReferenceErrorBin {
    pub fn rate(&self) -> f64 {
        if self.pairs == 0 {
            0.0
        } else {
            self.errors as f64 / self.pairs as f64
        }
    }
}

/// Predicts each strong-click pair's detector relation from the compensated
/// phase (same detector iff `cos Δθ ≥ 0`) and tallies mismatches by pair length.
/// A click can take part in many pairs. Pairs never cross a reference block.
pub fn reference_error_proxy(
    session: &Session,
    track: &FrequencyTrack,
    edges: &[u64],
) -> Result<Vec<ReferenceErrorBin>> {
    let mut bins: Vec<ReferenceErrorBin> = edges
        .windows(2)
        .map(|w| ReferenceErrorBin {
            lo: w[0],
            hi: w[1],
            pairs: 0,
            errors: 0,
        })
        .collect();
    let (Some(&lo), Some(&hi)) = (edges.first(), edges.last()) else {
        return Ok(bins);
    };
    let frame = session.frame;
    let strong: Vec<_> = session
        .clicks
        .iter()
        .zip(&session.rounds)
        .filter(|(c, r)| c.valid && r.region == Region::Reference)
        .map(|(c, _)| *c)
        .collect();
    for i in 0..strong.len() {
        let a = strong[i];
        for b in &strong[i + 1..] {
            let g = b.index - a.index;
            if g >= hi || frame.cycle_of(b.index) != frame.cycle_of(a.index) {
                break;
            }
            if g < lo {
                continue;
            }
            let dtheta = compensation_phase(a.t, b.t, track)?;
            let predicted_same = dtheta.cos() >= 0.0;
            if let Some(bin) = bins.iter_mut().find(|x| (x.lo..x.hi).contains(&g)) {
                bin.pairs += 1;
                if predicted_same != (a.outcome == b.outcome) {
                    bin.errors += 1;
                }
            }
        }
    }
    Ok(bins)
}
