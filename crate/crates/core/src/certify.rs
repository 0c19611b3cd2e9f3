//! Scenario-approach certificates: sample complexities, posterior risk
//! levels and out-of-sample violation estimates.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{CoreError, Result};
use crate::grid::NetworkCase;
use crate::rsp::{operation_value, CcgOptions, FormulationKind, StoragePlan};
use crate::scenarios::ScenarioSet;

/// Largest sample size any inversion will consider.
pub const MAX_SAMPLE_SIZE: u64 = 100_000_000;
const BISECT_CAP: usize = 200;
/// Below this, log-binomials are summed term by term.
const EXACT_LN_CHOOSE: u64 = 64;

/// Natural log of the binomial coefficient C(n, k).
pub fn ln_choose(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let k = k.min(n - k);
    if k == 0 {
        return 0.0;
    }
    if k <= EXACT_LN_CHOOSE {
        (0..k).map(|i| ((n - i) as f64 / (i + 1) as f64).ln()).sum()
    } else {
        ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
    }
}

/// Compensated sum.
fn neumaier(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// `ln Σ exp(x_i)`.
fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + neumaier(xs.iter().map(|x| (x - m).exp())).ln()
}

fn check_unit_open(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(CoreError::Domain(format!("{name} must lie in (0, 1), got {v}")))
    }
}

/// `Σ_{i<d} C(K,i) ε^i (1−ε)^{K−i}`, the probability of fewer than `d` successes.
pub fn binom_tail(k_total: u64, d: u64, eps: f64) -> Result<f64> {
    if d < 1 || d > k_total {
        return Err(CoreError::Domain(format!("binom_tail needs 1 <= d <= K, got d={d}, K={k_total}")));
    }
    check_unit_open("eps", eps)?;
    let (le, l1e) = (eps.ln(), (-eps).ln_1p());
    let terms: Vec<f64> = (0..d)
        .map(|i| ln_choose(k_total, i) + i as f64 * le + (k_total - i) as f64 * l1e)
        .collect();
    Ok(log_sum_exp(&terms).exp().clamp(0.0, 1.0))
}

/// Smallest `K` whose binomial tail at `eps_bar` is at most `beta`.
pub fn prior_min_k(eps_bar: f64, beta: f64, d: u64) -> Result<u64> {
    check_unit_open("eps_bar", eps_bar)?;
    check_unit_open("beta", beta)?;
    if d < 1 {
        return Err(CoreError::Domain("d must be at least 1".into()));
    }
    let ok = |k: u64| binom_tail(k, d, eps_bar).map(|t| t <= beta);
    search_min(d, ok)
}

/// Smallest `K >= lo` with `ok(K)`, assuming `ok` is monotone.
fn search_min(lo: u64, ok: impl Fn(u64) -> Result<bool>) -> Result<u64> {
    if ok(lo)? {
        return Ok(lo);
    }
    let mut fail = lo;
    let mut step = 1u64;
    let mut pass = loop {
        let cand = (lo + step).min(MAX_SAMPLE_SIZE);
        if ok(cand)? {
            break cand;
        }
        if cand == MAX_SAMPLE_SIZE {
            return Err(CoreError::NoSampleSize { cap: MAX_SAMPLE_SIZE });
        }
        fail = cand;
        step *= 2;
    };
    while pass - fail > 1 {
        let mid = fail + (pass - fail) / 2;
        if ok(mid)? {
            pass = mid;
        } else {
            fail = mid;
        }
    }
    Ok(pass)
}

/// Smallest ε whose binomial tail with `K` samples and `d` terms is at most `beta`.
pub fn prior_eps(k_total: u64, beta: f64, d: u64) -> Result<f64> {
    check_unit_open("beta", beta)?;
    if d < 1 {
        return Err(CoreError::Domain("d must be at least 1".into()));
    }
    if d > k_total {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..BISECT_CAP {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if binom_tail(k_total, d, mid)? <= beta {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Sufficient closed-form sample size `round((2/ε)(ln(1/β) + d))`.
pub fn closed_form_k(eps_bar: f64, beta: f64, d: u64) -> Result<u64> {
    check_unit_open("eps_bar", eps_bar)?;
    check_unit_open("beta", beta)?;
    Ok(((2.0 / eps_bar) * ((1.0 / beta).ln() + d as f64)).round() as u64)
}

fn check_k(k: u64, k_total: u64) -> Result<()> {
    if k_total < 1 || k > k_total {
        return Err(CoreError::Domain(format!("need 0 <= k <= K and K >= 1, got k={k}, K={k_total}")));
    }
    Ok(())
}

/// Log-terms `ln[C(i,k)(1−ε)^{i−k}]` for `i = k..=K`.
fn convex_log_terms(k: u64, k_total: u64, eps: f64) -> Vec<f64> {
    let l1e = (-eps).ln_1p();
    let mut out = Vec::with_capacity((k_total - k + 1) as usize);
    let mut lt = 0.0f64;
    out.push(lt);
    for i in k..k_total {
        lt += l1e + ((i + 1) as f64).ln() - ((i + 1 - k) as f64).ln();
        out.push(lt);
    }
    out
}

/// Log of `(β/(K+1))·Σ_i C(i,k)(1−ε)^{i−k}` minus log of `C(K,k)(1−ε)^{K−k}`.
fn convex_log_ratio(k: u64, beta: f64, k_total: u64, eps: f64) -> f64 {
    let terms = convex_log_terms(k, k_total, eps);
    beta.ln() - ((k_total + 1) as f64).ln() + log_sum_exp(&terms) - terms[terms.len() - 1]
}

/// Residual of the defining polynomial at `eps`, relative to its larger side.
pub fn posterior_convex_residual(k: u64, beta: f64, k_total: u64, eps: f64) -> f64 {
    convex_log_ratio(k, beta, k_total, eps).exp_m1().abs().min(1.0)
}

/// Risk level with `k` support scenarios out of `K` for convex problems:
/// the root in (0,1) of `(β/(K+1)) Σ_{i=k}^{K} C(i,k)(1−ε)^{i−k} = C(K,k)(1−ε)^{K−k}`.
pub fn posterior_convex_eps(k: u64, beta: f64, k_total: u64) -> Result<f64> {
    check_k(k, k_total)?;
    check_unit_open("beta", beta)?;
    if k == k_total {
        return Ok(1.0);
    }
    // The log-ratio is negative at 0 and grows without bound towards 1.
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..BISECT_CAP {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if convex_log_ratio(k, beta, k_total, mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// `1 − (β / (K·C(K,k)))^{1/(K−k)}`, or 1 when `k = K`.
pub fn posterior_nonconvex_eps(k: u64, beta: f64, k_total: u64) -> Result<f64> {
    check_k(k, k_total)?;
    check_unit_open("beta", beta)?;
    nonconvex_eps(k, beta, k_total, k_total as f64)
}

/// As [`posterior_nonconvex_eps`] with the confidence split over `s_bar`
/// cardinalities instead of `K`.
pub fn improved_nonconvex_eps(k: u64, beta: f64, k_total: u64, s_bar: u64) -> Result<f64> {
    check_k(k, k_total)?;
    check_unit_open("beta", beta)?;
    if k > s_bar {
        return Err(CoreError::Domain(format!("k = {k} exceeds the cardinality cap s_bar = {s_bar}")));
    }
    if s_bar < 1 || s_bar > k_total {
        return Err(CoreError::Domain(format!("need 1 <= s_bar <= K, got s_bar={s_bar}, K={k_total}")));
    }
    nonconvex_eps(k, beta, k_total, s_bar as f64)
}

fn nonconvex_eps(k: u64, beta: f64, k_total: u64, split: f64) -> Result<f64> {
    if k == k_total {
        return Ok(1.0);
    }
    let e = (beta.ln() - split.ln() - ln_choose(k_total, k)) / (k_total - k) as f64;
    Ok(-e.exp_m1())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuaranteeMode {
    /// A-priori bound from the binomial tail; parameter is the decision dimension.
    PriorConvex,
    /// A-posteriori polynomial root; parameter is the essential-set size.
    PosteriorConvex,
    /// A-posteriori closed form; parameter is the essential-set size.
    PosteriorNonconvex,
    /// Closed form with a cap on the essential-set size.
    ImprovedNonconvex,
}

impl GuaranteeMode {
    pub const ALL: [Self; 4] = [
        Self::PriorConvex,
        Self::PosteriorConvex,
        Self::PosteriorNonconvex,
        Self::ImprovedNonconvex,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Self::PriorConvex => "prior_convex",
            Self::PosteriorConvex => "posterior_convex",
            Self::PosteriorNonconvex => "posterior_nonconvex",
            Self::ImprovedNonconvex => "improved_nonconvex",
        }
    }

    pub fn is_posterior(self) -> bool {
        self != Self::PriorConvex
    }
}

impl fmt::Display for GuaranteeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for GuaranteeMode {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.label() == s.replace('-', "_"))
            .ok_or_else(|| CoreError::Parse(format!("unknown guarantee mode {s:?}")))
    }
}

/// ε for `mode` with parameter `k_or_d`, confidence `beta` and `K` samples.
pub fn epsilon_for(mode: GuaranteeMode, k_or_d: u64, beta: f64, k_total: u64, s_bar: Option<u64>) -> Result<f64> {
    match mode {
        GuaranteeMode::PriorConvex => {
            if k_total < 1 {
                return Err(CoreError::Domain("K must be at least 1".into()));
            }
            prior_eps(k_total, beta, k_or_d)
        }
        GuaranteeMode::PosteriorConvex => posterior_convex_eps(k_or_d, beta, k_total),
        GuaranteeMode::PosteriorNonconvex => posterior_nonconvex_eps(k_or_d, beta, k_total),
        GuaranteeMode::ImprovedNonconvex => {
            let s = s_bar.ok_or_else(|| CoreError::Domain("improved mode needs s_bar".into()))?;
            improved_nonconvex_eps(k_or_d, beta, k_total, s)
        }
    }
}

/// Smallest `K` whose risk level under `mode` is at most `eps_bar`.
pub fn min_k_for(mode: GuaranteeMode, k_or_d: u64, eps_bar: f64, beta: f64, s_bar: Option<u64>) -> Result<u64> {
    check_unit_open("eps_bar", eps_bar)?;
    check_unit_open("beta", beta)?;
    if mode == GuaranteeMode::PriorConvex {
        return prior_min_k(eps_bar, beta, k_or_d);
    }
    let mut lo = k_or_d + 1;
    if mode == GuaranteeMode::ImprovedNonconvex {
        let s = s_bar.ok_or_else(|| CoreError::Domain("improved mode needs s_bar".into()))?;
        if k_or_d > s {
            return Err(CoreError::Domain(format!("k = {k_or_d} exceeds s_bar = {s}")));
        }
        lo = lo.max(s);
    }
    let eps = |k: u64| epsilon_for(mode, k_or_d, beta, k, s_bar);
    let k = search_min(lo, |k| eps(k).map(|e| e <= eps_bar))?;
    if k > lo && eps(k - 1)? <= eps_bar {
        return Err(CoreError::Domain(format!("{mode} risk level is not monotone in K near {k}")));
    }
    Ok(k)
}

/// Risk claim binding a sample size to a confidence and risk level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuaranteeCertificate {
    pub mode: GuaranteeMode,
    pub epsilon: f64,
    pub beta: f64,
    pub sample_size: u64,
    pub k_or_d: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_bar: Option<u64>,
}

impl GuaranteeCertificate {
    pub fn issue(mode: GuaranteeMode, k_or_d: u64, beta: f64, sample_size: u64, s_bar: Option<u64>) -> Result<Self> {
        let epsilon = epsilon_for(mode, k_or_d, beta, sample_size, s_bar)?;
        Ok(Self {
            mode,
            epsilon,
            beta,
            sample_size,
            k_or_d,
            s_bar,
        })
    }

    /// Checks ranges and that ε is reproduced from the stored inputs.
    pub fn verify(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(CoreError::Validation(format!("certificate epsilon {} outside (0, 1]", self.epsilon)));
        }
        check_unit_open("beta", self.beta)?;
        if self.sample_size < 1 {
            return Err(CoreError::Validation("certificate sample size must be >= 1".into()));
        }
        let again = epsilon_for(self.mode, self.k_or_d, self.beta, self.sample_size, self.s_bar)?;
        if (again - self.epsilon).abs() > 1e-12 {
            return Err(CoreError::Validation(format!(
                "certificate epsilon {} does not match recomputed {again}",
                self.epsilon
            )));
        }
        Ok(())
    }

    pub fn meets(&self, eps_bar: f64) -> bool {
        self.epsilon <= eps_bar
    }
}

/// Tolerances that keep solver noise from being counted as a violation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Margin {
    pub rel: f64,
    pub abs: f64,
}

impl Default for Margin {
    fn default() -> Self {
        Self { rel: 1e-6, abs: 1e-3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub violations: usize,
    pub trials: usize,
    pub epsilon_hat: f64,
    pub gamma_threshold: f64,
}

/// Fraction of `test` scenarios whose second-stage value under `plan` exceeds `gamma_star`.
pub fn estimate_violation(
    case: &NetworkCase,
    plan: &StoragePlan,
    gamma_star: f64,
    test: &ScenarioSet,
    kind: FormulationKind,
    margin: Margin,
    opts: &CcgOptions,
) -> Result<RiskEstimate> {
    if test.is_empty() {
        return Err(CoreError::Domain("test set is empty".into()));
    }
    if gamma_star.is_nan() || gamma_star == f64::NEG_INFINITY {
        return Err(CoreError::Domain(format!("gamma threshold must be finite, got {gamma_star}")));
    }
    let trials = test.len();
    if gamma_star == f64::INFINITY {
        return Ok(RiskEstimate {
            violations: 0,
            trials,
            epsilon_hat: 0.0,
            gamma_threshold: gamma_star,
        });
    }
    let threshold = if kind.is_cost() {
        gamma_star * (1.0 + margin.rel) + margin.abs
    } else {
        gamma_star + margin.abs
    };
    let violations = test
        .scenarios
        .par_iter()
        .map(|s| operation_value(case, plan, s, kind, &opts.model, &opts.solve).map(|v| usize::from(v > threshold)))
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(RiskEstimate {
        violations,
        trials,
        epsilon_hat: violations as f64 / trials as f64,
        gamma_threshold: gamma_star,
    })
}

/// Loss-of-load probability: share of test days with any shedding.
pub fn lolp(case: &NetworkCase, plan: &StoragePlan, test: &ScenarioSet, margin: Margin, opts: &CcgOptions) -> Result<RiskEstimate> {
    estimate_violation(case, plan, 0.0, test, FormulationKind::C_CURTAIL, margin, opts)
}
