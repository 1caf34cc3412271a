//! The four PAC certifiers and their parameter calculators.
//!
//! Each certifier consumes a fitted set and fresh i.i.d. samples and
//! emits a [`PacCertificate`]: a bound of the form
//! P(violation probability > epsilon) <= beta. Violation counting uses
//! the strict inequality score > level, so boundary points count as
//! contained.

use alloc::vec::Vec;

use thiserror::Error;

use crate::dynamics::SampleBatch;
use crate::ellipsoid::{Ellipsoid, SetError};
use crate::fmath;
use crate::special::{
    beta_cdf, beta_upper, binom_cdf_log_parts, binom_tail_inv, ln_choose, BetaParams, Probability,
    SpecialError,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CertifyError {
    #[error("certification batch is empty")]
    EmptyBatch,
    #[error(transparent)]
    Set(#[from] SetError),
    #[error(transparent)]
    Special(#[from] SpecialError),
    #[error(
        "calibration too small: error rate {alpha} needs at least {needed} samples, got {got}"
    )]
    InsufficientCalibration { alpha: f64, needed: u64, got: u64 },
    #[error("cannot discard {k} of {n} samples (k must stay below N)")]
    DiscardTooLarge { k: u64, n: u64 },
    #[error(
        "tolerance must satisfy 0 < delta_tol < alpha, got alpha={alpha}, delta_tol={delta_tol}"
    )]
    ToleranceDomain { alpha: f64, delta_tol: f64 },
    #[error("no calibration size up to {cap} meets the coverage target")]
    SizingInfeasible { cap: u64 },
}

/// Which certifier produced a certificate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertMethod {
    Holdout,
    EmpiricalConformal,
    SplitConformal,
    ScenarioDiscard,
}

impl CertMethod {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Holdout => "holdout",
            Self::EmpiricalConformal => "empirical-conformal",
            Self::SplitConformal => "split-conformal",
            Self::ScenarioDiscard => "scenario-discard",
        }
    }
}

/// A PAC statement: with confidence 1 - beta over the sampling of the
/// certification data, the violation probability stays below epsilon.
/// `threshold` is the score level the method moved the set to, or NaN
/// for methods that leave the set untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct PacCertificate {
    pub method: CertMethod,
    pub epsilon: Probability,
    pub beta: Probability,
    pub samples_used: u64,
    pub violations: u64,
    pub threshold: f64,
}

/// Nonconformity scores of a batch against a set, sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    sorted: Vec<f64>,
}

impl ScoreVector {
    pub fn from_scores(mut scores: Vec<f64>) -> Result<Self, CertifyError> {
        if scores.is_empty() {
            return Err(CertifyError::EmptyBatch);
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(CertifyError::Set(SetError::InvalidShape {
                reason: alloc::string::String::from("non-finite score"),
            }));
        }
        scores.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
        Ok(Self { sorted: scores })
    }

    /// Scores of every batch row under the set's score function.
    pub fn compute(set: &Ellipsoid, batch: &SampleBatch) -> Result<Self, CertifyError> {
        let mut scores = Vec::with_capacity(batch.len());
        for row in batch.rows() {
            scores.push(set.score(row)?);
        }
        Self::from_scores(scores)
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.sorted
    }

    /// The i-th smallest score, 1-indexed.
    pub fn order_stat(&self, i: usize) -> f64 {
        self.sorted[i - 1]
    }
}

/// Number of batch rows strictly outside the set (score > level).
pub fn count_violations(set: &Ellipsoid, batch: &SampleBatch) -> Result<u64, CertifyError> {
    let mut k = 0u64;
    for row in batch.rows() {
        if set.score(row)? > set.level() {
            k += 1;
        }
    }
    Ok(k)
}

/// Holdout certificate: count violations on fresh samples and invert the
/// binomial tail. The set is unchanged.
pub fn holdout_certify(
    set: &Ellipsoid,
    test: &SampleBatch,
    beta: Probability,
) -> Result<PacCertificate, CertifyError> {
    let m = test.len() as u64;
    if m == 0 {
        return Err(CertifyError::EmptyBatch);
    }
    let k = count_violations(set, test)?;
    let epsilon = binom_tail_inv(k, m, beta)?;
    Ok(PacCertificate {
        method: CertMethod::Holdout,
        epsilon,
        beta,
        samples_used: m,
        violations: k,
        threshold: f64::NAN,
    })
}

/// Empirical conformal certificate: same violation count, bounded through
/// the beta quantile of the training-conditional coverage. The set is
/// unchanged; k = K degenerates to epsilon = 1.
pub fn empirical_conformal_certify(
    set: &Ellipsoid,
    calib: &SampleBatch,
    beta: Probability,
) -> Result<PacCertificate, CertifyError> {
    let kk = calib.len() as u64;
    if kk == 0 {
        return Err(CertifyError::EmptyBatch);
    }
    let k = count_violations(set, calib)?;
    let epsilon = if k == kk {
        Probability::new(1.0).expect("1 is a probability")
    } else {
        let params = BetaParams::new(k as f64 + 1.0, (kk - k) as f64)?;
        let q = Probability::new(1.0 - beta.get())?;
        beta_upper(params, q)?
    };
    Ok(PacCertificate {
        method: CertMethod::EmpiricalConformal,
        epsilon,
        beta,
        samples_used: kk,
        violations: k,
        threshold: f64::NAN,
    })
}

/// Index of the conformal quantile: ceil((K+1)(1-alpha)), 1-indexed.
pub(crate) fn conformal_index(k: u64, alpha: f64) -> u64 {
    fmath::ceil((k as f64 + 1.0) * (1.0 - alpha)) as u64
}

/// The ceil((K+1)(1-alpha))-th smallest calibration score.
///
/// Fails when alpha < 1/(K+1): the required order statistic would sit
/// beyond the sample.
pub fn conformal_quantile(scores: &ScoreVector, alpha: Probability) -> Result<f64, CertifyError> {
    let k = scores.len() as u64;
    let idx = conformal_index(k, alpha.get());
    if idx > k {
        let needed = if alpha.get() > 0.0 {
            fmath::ceil(1.0 / alpha.get() - 1.0) as u64
        } else {
            u64::MAX
        };
        return Err(CertifyError::InsufficientCalibration {
            alpha: alpha.get(),
            needed,
            got: k,
        });
    }
    Ok(scores.order_stat(idx as usize))
}

/// Split conformal update: move the set's level to the calibration
/// quantile so a fresh draw lands inside with probability >= 1 - alpha.
pub fn conformal_adjust(
    set: &Ellipsoid,
    calib: &SampleBatch,
    alpha: Probability,
) -> Result<Ellipsoid, CertifyError> {
    let scores = ScoreVector::compute(set, calib)?;
    let q = conformal_quantile(&scores, alpha)?;
    Ok(set.with_level(q)?)
}

/// Calibration-size search cap.
const SIZING_CAP: u64 = 100_000_000;

/// Smallest calibration size K whose training-conditional coverage
/// Beta(K+1-l, l), l = floor((K+1) alpha), puts mass at least 1 - beta
/// on coverage >= 1 - alpha - delta_tol.
///
/// One-sided target; the floor in l makes feasibility locally jagged, so
/// the bisection boundary is refined by a short downward scan.
pub fn calib_size_for(
    alpha: Probability,
    beta: Probability,
    delta_tol: Probability,
) -> Result<u64, CertifyError> {
    let a = alpha.get();
    let d = delta_tol.get();
    let b = beta.get();
    if !(d > 0.0) || d > a || a + d >= 1.0 {
        return Err(CertifyError::ToleranceDomain {
            alpha: a,
            delta_tol: d,
        });
    }
    let edge = 1.0 - a - d;
    let feasible = |k: u64| -> bool {
        let l = fmath::floor((k as f64 + 1.0) * a) as u64;
        if l < 1 || l >= k + 1 {
            return false;
        }
        let params = BetaParams::new((k + 1 - l) as f64, l as f64).expect("positive shapes");
        let e = Probability::new(edge).expect("edge in (0,1)");
        beta_cdf(params, e).get() <= b
    };

    // find any feasible size by doubling
    let mut hi = (fmath::ceil(1.0 / a) as u64).max(2);
    while !feasible(hi) {
        hi = hi.saturating_mul(2);
        if hi > SIZING_CAP {
            return Err(CertifyError::SizingInfeasible { cap: SIZING_CAP });
        }
    }
    // shrink to the boundary
    let mut lo = 1u64;
    while lo + 1 < hi {
        let mid = lo + (hi - lo) / 2;
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // the floor jitter can hide smaller feasible sizes just below the
    // boundary; scan down a few index periods
    let window = 3 * (fmath::ceil(1.0 / a) as u64) + 5;
    let mut best = hi;
    let mut misses = 0u64;
    let mut k = hi.saturating_sub(1);
    while k >= 2 && misses < window {
        if feasible(k) {
            best = k;
            misses = 0;
        } else {
            misses += 1;
        }
        k -= 1;
    }
    Ok(best)
}

/// How many samples the discarding bound allows to be removed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiscardBound {
    pub k: u64,
    /// False when the closed form went negative and the count was
    /// floored to zero (no discards certifiable at these parameters).
    pub certifiable: bool,
}

/// Closed-form bound on the number of discardable samples:
/// floor(eps N - n_theta + 1 - sqrt(2 eps N ln((eps N)^(n_theta-1) / beta))).
pub fn max_discard_k(n: u64, eps: Probability, beta: Probability, n_theta: u64) -> DiscardBound {
    let en = eps.get() * n as f64;
    let ln_arg = (n_theta as f64 - 1.0) * fmath::ln(en) - fmath::ln(beta.get());
    let radicand = 2.0 * en * ln_arg;
    if radicand < 0.0 || !radicand.is_finite() {
        return DiscardBound {
            k: 0,
            certifiable: false,
        };
    }
    let value = en - n_theta as f64 + 1.0 - fmath::sqrt(radicand);
    if value < 0.0 {
        DiscardBound {
            k: 0,
            certifiable: false,
        }
    } else {
        DiscardBound {
            k: (fmath::floor(value) as u64).min(n.saturating_sub(1)),
            certifiable: true,
        }
    }
}

/// Largest k with C(k + n_theta - 1, k) * Bin_cdf(k + n_theta - 1, N, eps)
/// <= beta, located by bisection on the monotone log-space condition.
/// Returns 0 when not even zero discards satisfy the bound.
pub fn exact_discard_k(n: u64, eps: Probability, beta: Probability, n_theta: u64) -> u64 {
    let n_theta = n_theta.max(1);
    let ln_beta_target = fmath::ln(beta.get());
    let holds = |k: u64| -> bool {
        let top = k + n_theta - 1;
        if top >= n {
            return false;
        }
        let ln_comb = ln_choose(top, k.min(n_theta - 1));
        let (ln_anchor, rel) = binom_cdf_log_parts(top, n, eps.get());
        ln_comb + ln_anchor + fmath::ln(rel) <= ln_beta_target
    };
    if !holds(0) {
        return 0;
    }
    // predicate holds on [0, k*]; find the last true
    let mut lo = 0u64;
    let mut hi = n; // holds(n) is false by the top >= n guard
    while lo + 1 < hi {
        let mid = lo + (hi - lo) / 2;
        if holds(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Scenario update with sample discarding: drop the k largest scores and
/// move the level to the largest retained one (the solution of the
/// one-dimensional program over the remaining constraints).
///
/// Returns the updated set and the threshold. Scores tied with the
/// threshold stay in the retained set, so the actual removal count never
/// exceeds k.
pub fn scenario_discard(
    set: &Ellipsoid,
    batch: &SampleBatch,
    k: u64,
) -> Result<(Ellipsoid, f64), CertifyError> {
    let n = batch.len() as u64;
    if n == 0 {
        return Err(CertifyError::EmptyBatch);
    }
    if k >= n {
        return Err(CertifyError::DiscardTooLarge { k, n });
    }
    let scores = ScoreVector::compute(set, batch)?;
    let threshold = scores.order_stat((n - k) as usize);
    let updated = set.with_level(threshold)?;
    Ok((updated, threshold))
}

/// Split conformal certificate wrapper: adjusts the set to the
/// calibration quantile and reports the ex-ante error rate alpha with
/// the threshold it moved to.
pub fn split_conformal_certify(
    set: &Ellipsoid,
    calib: &SampleBatch,
    alpha: Probability,
    beta: Probability,
) -> Result<(Ellipsoid, PacCertificate), CertifyError> {
    let scores = ScoreVector::compute(set, calib)?;
    let q = conformal_quantile(&scores, alpha)?;
    let kk = calib.len() as u64;
    let above = scores.as_slice().iter().filter(|&&s| s > q).count() as u64;
    let updated = set.with_level(q)?;
    Ok((
        updated,
        PacCertificate {
            method: CertMethod::SplitConformal,
            epsilon: alpha,
            beta,
            samples_used: kk,
            violations: above,
            threshold: q,
        },
    ))
}

/// Scenario-discarding certificate wrapper: derives k from the closed
/// form, shrinks the set, and reports the ex-ante accuracy eps.
pub fn scenario_discard_certify(
    set: &Ellipsoid,
    batch: &SampleBatch,
    eps: Probability,
    beta: Probability,
) -> Result<(Ellipsoid, PacCertificate), CertifyError> {
    let n = batch.len() as u64;
    let bound = max_discard_k(n, eps, beta, 1);
    let (updated, threshold) = scenario_discard(set, batch, bound.k)?;
    Ok((
        updated,
        PacCertificate {
            method: CertMethod::ScenarioDiscard,
            epsilon: eps,
            beta,
            samples_used: n,
            violations: bound.k,
            threshold,
        },
    ))
}
