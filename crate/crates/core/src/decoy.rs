//! Chernoff bounds, decoy-state estimates and the finite-size key length.
//!
//! # Estimators
//!
//! Each side of a pair class carries a summed intensity `a ∈ {0, ν, μ}` (Z)
//! or `a ∈ {0, 2ν, 2μ}` (X), and its photon number over the two rounds is
//! Poisson with mean `a`. With per-side class weights `w_a` (probability
//! that one side's two settings produce that class) the normalized count
//!
//! ```text
//! G_ab = M_ab / (w_a w_b) ∝ Σ_{n,m} P_a(n) P_b(m) Y_nm
//! ```
//!
//! and the vacuum-subtracted combination
//!
//! ```text
//! H_ab = e^{a+b} G_ab − e^a G_a0 − e^b G_0b + G_00 = Σ_{n,m≥1} aⁿbᵐ/(n!m!) Y_nm
//! ```
//!
//! give, for two intensities `s < t`,
//!
//! ```text
//! Y11 ≥ (t³ H_ss − s³ H_tt) / (s² t² (t − s))
//! ```
//!
//! because every term with `n + m ≥ 4` enters with a non-positive coefficient.
//! Lower and upper Chernoff bounds are picked term by term so the result is a
//! lower bound. The single-photon key-class count is `w_μ² (μe^{−μ})² Y11`.
//!
//! Weights: Z sides `w_0 = p₀²`, `w_ν = 2p₀p_ν`, `w_μ = 2p₀p_μ`; X sides
//! `w_0 = p₀²`, `w_2ν = p_ν²`, `w_2μ = p_μ²`. X classes with two non-vacuum
//! sides only count pairs inside the phase window (probability `2/D`), so X
//! classes with a vacuum side, and the vacuum-vacuum count taken from
//! `Z_A0B0`, are multiplied by `2/D`.
//!
//! The phase-error bound uses the `(2ν, 2ν)` X class. Pairs where one side
//! has no photon give random bits (error 1/2); their expected count is
//! `M_vac = w_2ν² [e^{−2ν}(G_{0,2ν} + G_{2ν,0}) − e^{−4ν} G_00]`, so
//!
//! ```text
//! e11 ≤ (Err^U − M_vac^L / 2) / M11X^L,   M11X = w_2ν² (2νe^{−2ν})² Y11^X.
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::{binary_entropy, ProtocolParams};
use crate::sift::{Basis, CountClass, CountTable, SideSum};

/// Expectation bounds for one observed count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChernoffBounds {
    pub lower: f64,
    pub upper: f64,
    pub delta_lower: f64,
    pub delta_upper: f64,
}

const DELTA_MIN: f64 = 1e-12;
const DELTA_L_MAX: f64 = 1e6;
const DELTA_U_MAX: f64 = 1.0 - 1e-12;

/// `χ(δ/(1+δ) − ln(1+δ)) − ln(ε/2)`; decreasing in δ.
pub fn chernoff_lower_residual(chi: f64, eps: f64, delta: f64) -> f64 {
    chi * (delta / (1.0 + delta) - delta.ln_1p()) - (eps / 2.0).ln()
}

/// `χ(−δ/(1−δ) − ln(1−δ)) − ln(ε/2)`; decreasing in δ.
pub fn chernoff_upper_residual(chi: f64, eps: f64, delta: f64) -> f64 {
    chi * (-delta / (1.0 - delta) - (-delta).ln_1p()) - (eps / 2.0).ln()
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    // f is decreasing; returns the clamped endpoint when the root lies outside.
    if f(lo) <= 0.0 {
        return lo;
    }
    if f(hi) >= 0.0 {
        return hi;
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Bounds on the expectation of a count `chi` that hold except with probability `eps`.
pub fn chernoff_bounds(chi: f64, eps: f64) -> Result<ChernoffBounds> {
    if !(chi >= 0.0 && chi.is_finite()) {
        return Err(Error::Domain(format!("observed count {chi} must be finite and >= 0")));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("failure probability {eps} outside (0, 1)")));
    }
    if chi == 0.0 {
        return Ok(ChernoffBounds {
            lower: 0.0,
            upper: (2.0 / eps).ln(),
            delta_lower: f64::INFINITY,
            delta_upper: 1.0,
        });
    }
    let dl = bisect(|d| chernoff_lower_residual(chi, eps, d), DELTA_MIN, DELTA_L_MAX);
    let du = bisect(|d| chernoff_upper_residual(chi, eps, d), DELTA_MIN, DELTA_U_MAX);
    Ok(ChernoffBounds {
        lower: chi / (1.0 + dl),
        upper: chi / (1.0 - du),
        delta_lower: dl,
        delta_upper: du,
    })
}

/// Counts Chernoff invocations so the spent failure probability can be reported.
#[derive(Debug, Clone, Default)]
struct Budget {
    eps: f64,
    invocations: u32,
}

impl Budget {
    fn bounds(&mut self, chi: f64) -> Result<ChernoffBounds> {
        self.invocations += 1;
        chernoff_bounds(chi, self.eps)
    }
}

/// Lower/upper bounds on a normalized class count `G`.
#[derive(Debug, Clone, Copy)]
struct Gain {
    lo: f64,
    hi: f64,
}

impl Gain {
    fn pick(&self, upper: bool) -> f64 {
        if upper {
            self.hi
        } else {
            self.lo
        }
    }
}

fn z_weight(params: &ProtocolParams, s: SideSum) -> f64 {
    let p0 = params.p_vacuum();
    match s {
        SideSum::Zero => p0 * p0,
        SideSum::Nu => 2.0 * p0 * params.p_nu,
        SideSum::Mu => 2.0 * p0 * params.p_mu,
        SideSum::TwoNu | SideSum::TwoMu => 0.0,
    }
}

fn x_weight(params: &ProtocolParams, s: SideSum) -> f64 {
    match s {
        SideSum::Zero => params.p_vacuum().powi(2),
        SideSum::TwoNu => params.p_nu * params.p_nu,
        SideSum::TwoMu => params.p_mu * params.p_mu,
        SideSum::Nu | SideSum::Mu => 0.0,
    }
}

fn side_intensity(params: &ProtocolParams, s: SideSum) -> f64 {
    match s {
        SideSum::Zero => 0.0,
        SideSum::Nu => params.nu,
        SideSum::Mu => params.mu,
        SideSum::TwoNu => 2.0 * params.nu,
        SideSum::TwoMu => 2.0 * params.mu,
    }
}

/// Normalized gains for one basis, indexed by side sum.
struct Gains {
    basis: Basis,
    vals: Vec<((SideSum, SideSum), Gain)>,
}

impl Gains {
    fn get(&self, a: SideSum, b: SideSum) -> Gain {
        self.vals.iter().find(|(k, _)| *k == (a, b)).expect("gain computed").1
    }
}

fn gains(table: &CountTable, params: &ProtocolParams, basis: Basis, budget: &mut Budget) -> Result<Gains> {
    let keep = 2.0 / params.phase_slices as f64;
    let mut vals = Vec::new();
    let sums = match basis {
        Basis::Z => [SideSum::Zero, SideSum::Nu, SideSum::Mu],
        Basis::X => [SideSum::Zero, SideSum::TwoNu, SideSum::TwoMu],
    };
    for a in sums {
        for b in sums {
            let (class, scale, w) = match basis {
                Basis::Z => (
                    CountClass::new(Basis::Z, a, b),
                    1.0,
                    z_weight(params, a) * z_weight(params, b),
                ),
                Basis::X => {
                    let w = x_weight(params, a) * x_weight(params, b);
                    if a == SideSum::Zero && b == SideSum::Zero {
                        (CountClass::new(Basis::Z, a, b), keep, w)
                    } else if a == SideSum::Zero || b == SideSum::Zero {
                        (CountClass::new(Basis::X, a, b), keep, w)
                    } else {
                        (CountClass::new(Basis::X, a, b), 1.0, w)
                    }
                }
            };
            let cb = budget.bounds(table.get(class).total as f64)?;
            let norm = scale / w;
            vals.push((
                (a, b),
                Gain {
                    lo: cb.lower * norm,
                    hi: cb.upper * norm,
                },
            ));
        }
    }
    Ok(Gains { basis, vals })
}

/// Bound on `H_ab`; `upper` selects the direction.
fn h_bound(g: &Gains, params: &ProtocolParams, a: SideSum, upper: bool) -> f64 {
    let zero = SideSum::Zero;
    let x = side_intensity(params, a);
    (2.0 * x).exp() * g.get(a, a).pick(upper)
        - x.exp() * g.get(a, zero).pick(!upper)
        - x.exp() * g.get(zero, a).pick(!upper)
        + g.get(zero, zero).pick(upper)
}

/// Lower bound on `Y11` from a weak and a strong side sum.
fn y11_lower(g: &Gains, params: &ProtocolParams) -> (f64, f64, f64) {
    let (weak, strong) = match g.basis {
        Basis::Z => (SideSum::Nu, SideSum::Mu),
        Basis::X => (SideSum::TwoNu, SideSum::TwoMu),
    };
    let s = side_intensity(params, weak);
    let t = side_intensity(params, strong);
    let h_ss = h_bound(g, params, weak, false);
    let h_tt = h_bound(g, params, strong, true);
    let y = (t.powi(3) * h_ss - s.powi(3) * h_tt) / (s * s * t * t * (t - s));
    (y, h_ss, h_tt)
}

/// Single-photon Z-pair estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct M11Estimate {
    pub m11_lower: f64,
    pub y11_lower: f64,
    pub h_weak_lower: f64,
    pub h_strong_upper: f64,
    /// The raw bound was negative and has been clamped to zero.
    pub clamped: bool,
    pub chernoff_invocations: u32,
}

/// Lower bound on the number of single-photon pairs in the `(μ, μ)` Z class.
pub fn estimate_m11_z(table: &CountTable, params: &ProtocolParams, eps: f64) -> Result<M11Estimate> {
    let mut budget = Budget { eps, invocations: 0 };
    let g = gains(table, params, Basis::Z, &mut budget)?;
    let (y, h_ss, h_tt) = y11_lower(&g, params);
    let w = z_weight(params, SideSum::Mu);
    let p1 = params.mu * (-params.mu).exp();
    let raw = w * w * p1 * p1 * y;
    Ok(M11Estimate {
        m11_lower: raw.max(0.0),
        y11_lower: y.max(0.0),
        h_weak_lower: h_ss,
        h_strong_upper: h_tt,
        clamped: raw < 0.0,
        chernoff_invocations: budget.invocations,
    })
}

/// Phase-error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseErrorEstimate {
    pub e11_upper: f64,
    pub m11_x_lower: f64,
    pub errors_upper: f64,
    pub vacuum_lower: f64,
    /// No usable X data: `e11_upper` is 0.5 without any (2ν, 2ν) pair and the
    /// trivial bound 1 when the single-photon X bound is not positive.
    pub aborted: bool,
    pub chernoff_invocations: u32,
}

/// Upper bound on the single-photon phase-error rate from the `(2ν, 2ν)` X class.
pub fn estimate_ephase(table: &CountTable, params: &ProtocolParams, eps: f64) -> Result<PhaseErrorEstimate> {
    let class = CountClass::new(Basis::X, SideSum::TwoNu, SideSum::TwoNu);
    let counts = table.get(class);
    if counts.total == 0 {
        return Ok(PhaseErrorEstimate {
            e11_upper: 0.5,
            m11_x_lower: 0.0,
            errors_upper: 0.0,
            vacuum_lower: 0.0,
            aborted: true,
            chernoff_invocations: 0,
        });
    }
    let mut budget = Budget { eps, invocations: 0 };
    let g = gains(table, params, Basis::X, &mut budget)?;
    let (y, _, _) = y11_lower(&g, params);
    let s = 2.0 * params.nu;
    let w = x_weight(params, SideSum::TwoNu);
    let m11x = w * w * (s * (-s).exp()).powi(2) * y;
    let z = SideSum::Zero;
    let two_nu = SideSum::TwoNu;
    let vac = w * w * ((-s).exp() * (g.get(z, two_nu).lo + g.get(two_nu, z).lo) - (-2.0 * s).exp() * g.get(z, z).hi);
    let err_u = budget.bounds(counts.error as f64)?.upper;
    if m11x <= 0.0 {
        // Data present but no positive single-photon bound: only the trivial bound holds.
        return Ok(PhaseErrorEstimate {
            e11_upper: 1.0,
            m11_x_lower: 0.0,
            errors_upper: err_u,
            vacuum_lower: vac,
            aborted: true,
            chernoff_invocations: budget.invocations,
        });
    }
    let e = ((err_u - 0.5 * vac.max(0.0)) / m11x).clamp(0.0, 1.0);
    Ok(PhaseErrorEstimate {
        e11_upper: e,
        m11_x_lower: m11x,
        errors_upper: err_u,
        vacuum_lower: vac,
        aborted: false,
        chernoff_invocations: budget.invocations,
    })
}

/// Secret key length `K` and key bits per pair `R = K / n_pair`.
pub fn key_length(m11: f64, e11: f64, m_mumu: f64, e_mumu: f64, f: f64, n_pair: f64) -> Result<(f64, f64)> {
    if !(m11 >= 0.0 && m_mumu >= 0.0 && f >= 1.0 && n_pair > 0.0) {
        return Err(Error::Domain(format!(
            "key length inputs out of range (M11 {m11}, M_mumu {m_mumu}, f {f}, N_pair {n_pair})"
        )));
    }
    let privacy = if e11 >= 0.5 {
        0.0
    } else {
        m11 * (1.0 - binary_entropy(e11)?)
    };
    let k = (privacy - f * m_mumu * binary_entropy(e_mumu)?).max(0.0);
    Ok((k, k / n_pair))
}

/// Quantities entering the key length, taken verbatim.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectInputs {
    pub m11_lower: f64,
    pub e11_upper: f64,
    pub m_mumu: f64,
    pub e_mumu: f64,
    /// QKD rounds `N`.
    pub n_rounds: f64,
    #[serde(default = "default_f")]
    pub ec_efficiency: f64,
}

fn default_f() -> f64 {
    1.1
}

/// Finite-size key-rate result with diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyRateReport {
    pub m11_lower: f64,
    pub e11_upper: f64,
    pub m_mumu: f64,
    pub e_mumu: f64,
    pub ec_efficiency: f64,
    pub n_rounds: f64,
    pub n_pair: f64,
    pub key_length: f64,
    pub key_rate_per_pair: f64,
    pub z_estimate: Option<M11Estimate>,
    pub x_estimate: Option<PhaseErrorEstimate>,
    pub epsilon_per_invocation: Option<f64>,
    pub chernoff_invocations: u32,
    pub epsilon_total: Option<f64>,
    pub flags: Vec<String>,
}

/// Key length from given bounds, bypassing estimation.
pub fn direct_keyrate(inputs: &DirectInputs) -> Result<KeyRateReport> {
    if !(0.0..=1.0).contains(&inputs.e11_upper) || !(0.0..=1.0).contains(&inputs.e_mumu) {
        return Err(Error::Validation(vec![format!(
            "error rates must lie in [0, 1] (e11 {}, E_mumu {})",
            inputs.e11_upper, inputs.e_mumu
        )]));
    }
    let n_pair = inputs.n_rounds / 2.0;
    let (k, r) = key_length(
        inputs.m11_lower,
        inputs.e11_upper,
        inputs.m_mumu,
        inputs.e_mumu,
        inputs.ec_efficiency,
        n_pair,
    )?;
    Ok(KeyRateReport {
        m11_lower: inputs.m11_lower,
        e11_upper: inputs.e11_upper,
        m_mumu: inputs.m_mumu,
        e_mumu: inputs.e_mumu,
        ec_efficiency: inputs.ec_efficiency,
        n_rounds: inputs.n_rounds,
        n_pair,
        key_length: k,
        key_rate_per_pair: r,
        z_estimate: None,
        x_estimate: None,
        epsilon_per_invocation: None,
        chernoff_invocations: 0,
        epsilon_total: None,
        flags: Vec::new(),
    })
}

/// Full decoy and finite-size analysis of a count table.
pub fn analyze_counts(table: &CountTable, params: &ProtocolParams) -> Result<KeyRateReport> {
    params.validate()?;
    let eps = params.epsilon;
    let z = estimate_m11_z(table, params, eps)?;
    let x = estimate_ephase(table, params, eps)?;
    let key = table.get(CountClass::new(Basis::Z, SideSum::Mu, SideSum::Mu));
    let m_mumu = key.total as f64;
    let e_mumu = if key.total > 0 { key.error as f64 / m_mumu } else { 0.0 };
    let n_rounds = table.n_rounds() as f64;
    if n_rounds <= 0.0 {
        return Err(Error::Validation(vec![
            "count table has no rounds (sent counts or n_rounds missing)".into(),
        ]));
    }
    let mut flags = Vec::new();
    if z.clamped {
        flags.push("m11_clamped_to_zero".to_string());
    }
    if x.aborted {
        flags.push("phase_error_unavailable".to_string());
    }
    let (k, r) = key_length(
        z.m11_lower,
        x.e11_upper,
        m_mumu,
        e_mumu,
        params.ec_efficiency,
        n_rounds / 2.0,
    )?;
    let n_inv = z.chernoff_invocations + x.chernoff_invocations;
    Ok(KeyRateReport {
        m11_lower: z.m11_lower,
        e11_upper: x.e11_upper,
        m_mumu,
        e_mumu,
        ec_efficiency: params.ec_efficiency,
        n_rounds,
        n_pair: n_rounds / 2.0,
        key_length: k,
        key_rate_per_pair: r,
        z_estimate: Some(z),
        x_estimate: Some(x),
        epsilon_per_invocation: Some(eps),
        chernoff_invocations: n_inv,
        epsilon_total: Some(eps * n_inv as f64),
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn large_count_limit() {
        let b = chernoff_bounds(1e9, 1e-10).unwrap();
        assert!(1.0 - b.lower / 1e9 < 1e-3);
        assert!(b.upper / 1e9 - 1.0 < 1e-3);
    }

    #[test]
    fn deltas_match_independent_solver() {
        // Newton iteration on the same equations as an independent solver.
        let (chi, eps) = (1e4, 1e-10);
        let target = (eps / 2.0f64).ln() / chi;
        let newton = |g: &dyn Fn(f64) -> f64, dg: &dyn Fn(f64) -> f64, mut d: f64| {
            for _ in 0..100 {
                d -= (g(d) - target) / dg(d);
            }
            d
        };
        let dl = newton(
            &|d: f64| d / (1.0 + d) - (1.0 + d).ln(),
            &|d: f64| -d / (1.0 + d).powi(2),
            0.1,
        );
        let du = newton(
            &|d: f64| -d / (1.0 - d) - (1.0 - d).ln(),
            &|d: f64| -d / (1.0 - d).powi(2),
            0.1,
        );
        let b = chernoff_bounds(chi, eps).unwrap();
        assert!((b.delta_lower / dl - 1.0).abs() < 1e-9, "{} {dl}", b.delta_lower);
        assert!((b.delta_upper / du - 1.0).abs() < 1e-9, "{} {du}", b.delta_upper);
    }

    #[test]
    fn zero_count_fallback() {
        let b = chernoff_bounds(0.0, 1e-2).unwrap();
        assert_eq!(b.lower, 0.0);
        assert!((b.upper - 200f64.ln()).abs() < 1e-12);
        assert!(chernoff_bounds(-1.0, 0.1).is_err());
        assert!(chernoff_bounds(3.0, 1.0).is_err());
    }

    #[test]
    fn key_length_reference_rows() {
        let (_, r) = key_length(1.07e8, 0.2474, 207_389_568.0, 3.10e-4, 1.1, 5.07e11 / 2.0).unwrap();
        assert!((r / 7.75e-5 - 1.0).abs() < 0.02, "{r}");
        let (_, r) = key_length(6.02e6, 0.3468, 16_100_111.0, 1.46e-3, 1.1, 7.66e13 / 2.0).unwrap();
        assert!((r / 3.46e-9 - 1.0).abs() < 0.02, "{r}");
        let (k, _) = key_length(1e8, 0.5, 1e8, 1e-3, 1.1, 1e12).unwrap();
        assert_eq!(k, 0.0);
    }

    #[test]
    fn all_zero_table_gives_zero() {
        let mut t = CountTable::default();
        t.n_rounds = Some(1000);
        let est = estimate_m11_z(&t, &ProtocolParams::default(), 1e-10).unwrap();
        assert_eq!(est.m11_lower, 0.0);
        let x = estimate_ephase(&t, &ProtocolParams::default(), 1e-10).unwrap();
        assert!(x.aborted && x.e11_upper == 0.5);
        let rep = analyze_counts(&t, &ProtocolParams::default()).unwrap();
        assert_eq!(rep.key_length, 0.0);
    }

    #[test]
    fn exact_expectations_recover_single_photon_yield() {
        // Noiseless table built from known yields Y_nm = 1 − (1 − y)^(n+m): the
        // bound with ε → 1 is close to, and below, the true Y11.
        let p = ProtocolParams {
            epsilon: 0.999_999,
            ..Default::default()
        };
        let y = 1e-3_f64;
        let yield_nm = |n: u32, m: u32| 1.0 - (1.0 - y).powi((n + m) as i32);
        let poisson = |x: f64, n: u32| (-x).exp() * x.powi(n as i32) / (1..=n).map(f64::from).product::<f64>();
        let gain = |a: f64, b: f64| {
            let mut s = 0.0;
            for n in 0..30u32 {
                for m in 0..30u32 {
                    s += poisson(a, n) * poisson(b, m) * yield_nm(n, m);
                }
            }
            s
        };
        let n_pair = 1e16;
        let mut t = CountTable {
            n_rounds: Some(2e16 as u64),
            ..Default::default()
        };
        for c in CountClass::ALL.iter().filter(|c| c.basis == Basis::Z) {
            let w = z_weight(&p, c.a) * z_weight(&p, c.b);
            t.get_mut(*c).total = (n_pair * w * gain(side_intensity(&p, c.a), side_intensity(&p, c.b))) as u64;
        }
        let est = estimate_m11_z(&t, &p, p.epsilon).unwrap();
        let truth = yield_nm(1, 1);
        // Normalized gains carry the factor N_pair.
        let y11 = est.y11_lower / n_pair;
        assert!(y11 <= truth * 1.0001, "{y11} vs {truth}");
        assert!(y11 >= 0.9 * truth, "{y11} vs {truth}");
    }

    proptest! {
        #[test]
        fn bounds_bracket_count(chi in 1.0f64..1e7, leps in -12.0f64..-1.0) {
            let eps = 10f64.powf(leps);
            let b = chernoff_bounds(chi, eps).unwrap();
            prop_assert!(b.lower <= chi && chi <= b.upper);
            prop_assert!(b.delta_upper > 0.0 && b.delta_upper < 1.0);
            let rl = chernoff_lower_residual(chi, eps, b.delta_lower);
            let ru = chernoff_upper_residual(chi, eps, b.delta_upper);
            let scale = (eps / 2.0).ln().abs();
            prop_assert!(rl.abs() <= 1e-8 * scale && ru.abs() <= 1e-8 * scale, "{} {}", rl, ru);
        }

        #[test]
        fn bounds_tighten_with_eps(chi in 1.0f64..1e6, a in -12.0f64..-1.0, b in -12.0f64..-1.0) {
            let (lo, hi) = (a.min(b), a.max(b));
            let strict = chernoff_bounds(chi, 10f64.powf(lo)).unwrap();
            let loose = chernoff_bounds(chi, 10f64.powf(hi)).unwrap();
            prop_assert!(loose.lower >= strict.lower - 1e-9 * chi);
            prop_assert!(loose.upper <= strict.upper + 1e-9 * chi);
        }

        #[test]
        fn key_length_monotone(m in 1e6f64..1e9, e1 in 0.0f64..0.5, e2 in 0.0f64..0.5,
                               q1 in 0.0f64..0.05, q2 in 0.0f64..0.05, f1 in 1.0f64..1.5, f2 in 1.0f64..1.5) {
            let k = |m: f64, e: f64, q: f64, f: f64| key_length(m, e, 1e8, q, f, 1e12).unwrap().0;
            let (ea, eb) = (e1.min(e2), e1.max(e2));
            let (qa, qb) = (q1.min(q2), q1.max(q2));
            let (fa, fb) = (f1.min(f2), f1.max(f2));
            prop_assert!(k(m, ea, q1, f1) >= k(m, eb, q1, f1));
            prop_assert!(k(m, e1, qa, f1) >= k(m, e1, qb, f1));
            prop_assert!(k(m, e1, q1, fa) >= k(m, e1, q1, fb));
            prop_assert!(k(m * 2.0, e1, q1, f1) >= k(m, e1, q1, f1));
        }
    }
}
