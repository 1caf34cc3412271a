//! Regularized incomplete beta, binomial tail, and their inversions.
//!
//! These four functions carry every probabilistic certificate in the
//! crate. The binomial CDF is summed directly in log-anchored form and
//! the beta CDF goes through a continued fraction, so the two stay
//! independent routes: their agreement is checked, never assumed.

use thiserror::Error;

use crate::fmath::{self, Accumulator};

/// A probability value, guaranteed finite and inside [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Probability(f64);

impl Probability {
    pub fn new(value: f64) -> Result<Self, SpecialError> {
        if !value.is_finite() || !(0.0..=1.0).contains(&value) {
            return Err(SpecialError::ProbabilityRange { value });
        }
        Ok(Self(value))
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

/// Shape parameters (a, b) of a Beta distribution, both strictly positive.
#[derive(Debug, Clone, Copy)]
pub struct BetaParams {
    a: f64,
    b: f64,
}

impl BetaParams {
    pub fn new(a: f64, b: f64) -> Result<Self, SpecialError> {
        if !(a > 0.0) || !(b > 0.0) || !a.is_finite() || !b.is_finite() {
            return Err(SpecialError::ShapeDomain { a, b });
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecialError {
    #[error("probability {value} is outside [0, 1] or not finite")]
    ProbabilityRange { value: f64 },
    #[error("beta shape parameters must be positive and finite, got a={a}, b={b}")]
    ShapeDomain { a: f64, b: f64 },
    #[error("violation count {k} exceeds sample count {m}")]
    CountDomain { k: u64, m: u64 },
    #[error("sample count must be at least 1")]
    EmptySample,
    #[error("confidence level must lie in (0, 1], got {value}")]
    ConfidenceDomain { value: f64 },
}

/// Regularized incomplete beta integral I_e(a, b).
///
/// Continued fraction (modified Lentz) with the symmetry switch at
/// e = (a+1)/(a+b+2), which keeps the fraction on its convergent side
/// even for shape parameters in the 1e5 range.
pub fn beta_cdf(params: BetaParams, e: Probability) -> Probability {
    let v = reg_inc_beta(params.a, params.b, e.get(), ln_beta(params.a, params.b));
    Probability(v.clamp(0.0, 1.0))
}

/// The quantile e* = max{ e : I_e(a, b) ≤ beta }.
///
/// The CDF is continuous and strictly increasing on (0, 1), so e* is the
/// beta-quantile; found by bisection down to a bracket of ~1e-16.
pub fn beta_upper(params: BetaParams, beta: Probability) -> Result<Probability, SpecialError> {
    let b = beta.get();
    if !(b > 0.0) {
        return Err(SpecialError::ConfidenceDomain { value: b });
    }
    if b >= 1.0 {
        return Ok(Probability(1.0));
    }
    let ln_b = ln_beta(params.a, params.b);
    if b > 0.5 {
        // work in the complementary tail: I_e(a,b) <= q holds exactly
        // when I_{1-e}(b,a) >= 1-q, and the tail side keeps its relative
        // precision where I_e is within an ulp of one
        let bc = 1.0 - b;
        let feasible = |e: f64| reg_inc_beta(params.b, params.a, 1.0 - e, ln_b) >= bc;
        return Ok(Probability(bisect_sup(feasible)));
    }
    let feasible = |e: f64| reg_inc_beta(params.a, params.b, e, ln_b) <= b;
    Ok(Probability(bisect_sup(feasible)))
}

/// Binomial CDF: P(X ≤ k) for X ~ Bin(M, e).
///
/// Terms are generated by the pmf recurrence around an anchor at
/// min(k, mode) whose log is assembled with compensated summation; the
/// result keeps ~1e-12 relative accuracy through the count ranges the
/// certifiers use (M to ~1e5) and degrades gracefully beyond.
pub fn binom_cdf(k: u64, m: u64, e: Probability) -> Result<Probability, SpecialError> {
    if m == 0 {
        return Err(SpecialError::EmptySample);
    }
    if k > m {
        return Err(SpecialError::CountDomain { k, m });
    }
    let v = binom_cdf_raw(k, m, e.get());
    Ok(Probability(v.clamp(0.0, 1.0)))
}

/// Binomial tail inversion: e* = max{ e : Bin_cdf(k, M, e) ≥ beta }.
///
/// The largest error rate consistent with observing at most k failures
/// in M trials at confidence beta. Returns 1 when k = M (the CDF is
/// identically one); otherwise bisects the strictly decreasing CDF.
///
/// ```
/// use reachpac_core::special::{binom_tail_inv, Probability};
///
/// // zero violations out of 100 at 95% confidence: e = 1 - 0.05^(1/100)
/// let beta = Probability::new(0.05).unwrap();
/// let e = binom_tail_inv(0, 100, beta).unwrap().get();
/// assert!((e - 0.0295130496).abs() < 1e-9);
/// ```
pub fn binom_tail_inv(k: u64, m: u64, beta: Probability) -> Result<Probability, SpecialError> {
    if m == 0 {
        return Err(SpecialError::EmptySample);
    }
    if k > m {
        return Err(SpecialError::CountDomain { k, m });
    }
    let b = beta.get();
    if !(b > 0.0) {
        return Err(SpecialError::ConfidenceDomain { value: b });
    }
    if k == m {
        return Ok(Probability(1.0));
    }
    let feasible = |e: f64| binom_cdf_raw(k, m, e) >= b;
    Ok(Probability(bisect_sup(feasible)))
}

/// Largest feasible point of a predicate that holds on [0, e*) and fails
/// after; bisection to the f64 resolution limit, midpoint returned.
fn bisect_sup(feasible: impl Fn(f64) -> bool) -> f64 {
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    for _ in 0..90 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// ln B(a, b). When the smaller parameter is a moderate integer the value
/// is assembled from ln-ratios, which avoids the absolute-error floor of
/// large ln Γ differences; otherwise falls back to Lanczos ln Γ.
pub(crate) fn ln_beta(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    let lo_int = lo as u64;
    if lo >= 1.0 && lo_int as f64 == lo && lo_int <= 2_000_000 {
        // B(a, n) = (n-1)! / (a (a+1) ... (a+n-1))
        let mut acc = Accumulator::new();
        for j in 1..lo_int {
            let jf = j as f64;
            acc.add(fmath::ln(jf));
            acc.add(-fmath::ln(hi + jf));
        }
        acc.add(-fmath::ln(hi));
        acc.total()
    } else {
        fmath::ln_gamma(a) + fmath::ln_gamma(b) - fmath::ln_gamma(a + b)
    }
}

/// ln C(m, j), by compensated summation of ln((m-i+1)/i) over the smaller
/// side of the coefficient.
pub(crate) fn ln_choose(m: u64, j: u64) -> f64 {
    debug_assert!(j <= m);
    let j = j.min(m - j);
    let mf = m as f64;
    let mut acc = Accumulator::new();
    for i in 1..=j {
        let fi = i as f64;
        acc.add(fmath::ln(mf - fi + 1.0));
        acc.add(-fmath::ln(fi));
    }
    acc.total()
}

/// Log of the anchored pmf plus the relative cumulative sum; shared by
/// `binom_cdf` and the log-space feasibility test of sample discarding.
pub(crate) fn binom_cdf_log_parts(k: u64, m: u64, e: f64) -> (f64, f64) {
    debug_assert!(k < m);
    if e <= 0.0 {
        return (0.0, 1.0);
    }
    if e >= 1.0 {
        return (f64::NEG_INFINITY, 1.0);
    }
    let mode = (fmath::floor((m as f64 + 1.0) * e) as u64).min(m);
    let anchor = k.min(mode);
    let ln_anchor = ln_choose(m, anchor)
        + (anchor as f64) * fmath::ln(e)
        + ((m - anchor) as f64) * fmath::ln_1p(-e);

    let ratio_down = (1.0 - e) / e;
    let ratio_up = e / (1.0 - e);
    let mut acc = Accumulator::new();
    acc.add(1.0);
    // downward from the anchor: t(j-1)/t(j) = j (1-e) / ((m-j+1) e)
    let mut t = 1.0f64;
    let mut j = anchor;
    while j >= 1 {
        t *= (j as f64) * ratio_down / ((m - j + 1) as f64);
        if t < 1e-22 {
            break;
        }
        acc.add(t);
        j -= 1;
    }
    // upward from the anchor to k (only entered when the mode is below k)
    let mut t = 1.0f64;
    let mut j = anchor;
    while j < k {
        t *= ((m - j) as f64) * ratio_up / ((j + 1) as f64);
        if t < 1e-22 {
            break;
        }
        acc.add(t);
        j += 1;
    }
    (ln_anchor, acc.total())
}

fn binom_cdf_raw(k: u64, m: u64, e: f64) -> f64 {
    if k >= m {
        return 1.0;
    }
    if e <= 0.0 {
        return 1.0;
    }
    if e >= 1.0 {
        return 0.0;
    }
    let (ln_anchor, rel) = binom_cdf_log_parts(k, m, e);
    fmath::exp(ln_anchor) * rel
}

/// I_x(a, b) with a precomputed ln B(a, b).
pub(crate) fn reg_inc_beta(a: f64, b: f64, x: f64, ln_beta_ab: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    if x < (a + 1.0) / (a + b + 2.0) {
        incomplete_beta_cf(a, b, x, ln_beta_ab)
    } else {
        1.0 - incomplete_beta_cf(b, a, 1.0 - x, ln_beta_ab)
    }
}

/// Continued fraction of DLMF 8.17.22 by the modified Lentz method,
/// valid on the convergent side x < (a+1)/(a+b+2).
fn incomplete_beta_cf(a: f64, b: f64, x: f64, ln_beta_ab: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    const MAX_ITER: usize = 1_000_000;

    let ln_prefix = a * fmath::ln(x) + b * fmath::ln_1p(-x) - ln_beta_ab;
    let prefix = fmath::exp(ln_prefix) / a;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;

    let mut c = 1.0f64;
    let mut d = 1.0 - qab * x / qap;
    if fmath::abs(d) < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;

    for mm in 1..=MAX_ITER {
        let mf = mm as f64;
        let m2 = 2.0 * mf;

        // even step
        let aa = mf * (b - mf) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if fmath::abs(d) < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if fmath::abs(c) < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;

        // odd step
        let aa = -(a + mf) * (qab + mf) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if fmath::abs(d) < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if fmath::abs(c) < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;

        if fmath::abs(delta - 1.0) < EPS {
            break;
        }
    }
    prefix * h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(v: f64) -> Probability {
        Probability::new(v).unwrap()
    }

    #[test]
    fn beta_cdf_uniform_is_identity() {
        let params = BetaParams::new(1.0, 1.0).unwrap();
        assert!((beta_cdf(params, p(0.3)).get() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn beta_cdf_shape_two_one_is_square() {
        let params = BetaParams::new(2.0, 1.0).unwrap();
        assert!((beta_cdf(params, p(0.5)).get() - 0.25).abs() < 1e-14);
    }

    #[test]
    fn beta_cdf_matches_quadrature_oracle() {
        // I_0.2(3, 5) integrated exactly: the integrand expands to a
        // polynomial, giving the rational value 2313/15625.
        let params = BetaParams::new(3.0, 5.0).unwrap();
        let expect = 2313.0 / 15625.0;
        assert!((beta_cdf(params, p(0.2)).get() - expect).abs() < 1e-12);
    }

    #[test]
    fn beta_params_reject_nonpositive() {
        assert!(BetaParams::new(0.0, 1.0).is_err());
        assert!(BetaParams::new(2.0, -1.0).is_err());
        assert!(Probability::new(f64::NAN).is_err());
        assert!(Probability::new(1.2).is_err());
    }

    #[test]
    fn beta_upper_uniform_quantile() {
        let params = BetaParams::new(1.0, 1.0).unwrap();
        let e = beta_upper(params, p(0.05)).unwrap().get();
        assert!((e - 0.05).abs() < 1e-13);
    }

    #[test]
    fn beta_upper_closed_form_geometric() {
        // Beta_cdf(1, M, e) = 1 - (1-e)^M, so the (1-b0)-quantile is
        // 1 - b0^(1/M).
        let params = BetaParams::new(1.0, 100.0).unwrap();
        let e = beta_upper(params, p(0.95)).unwrap().get();
        assert!((e - 0.029513049607039932).abs() < 1e-12);
    }

    #[test]
    fn binom_cdf_full_sum_is_one() {
        assert_eq!(binom_cdf(37, 37, p(0.7)).unwrap().get(), 1.0);
    }

    #[test]
    fn binom_cdf_single_term() {
        let v = binom_cdf(0, 10, p(0.1)).unwrap().get();
        assert!((v - 0.9f64.powi(10)).abs() < 1e-15);
    }

    #[test]
    fn binom_cdf_matches_rational_oracle() {
        // sum of three terms at e = 3/20, evaluated in exact arithmetic
        let v = binom_cdf(2, 20, p(0.15)).unwrap().get();
        assert!((v - 0.40489627800743543).abs() < 1e-13);
    }

    #[test]
    fn binom_cdf_rejects_k_above_m() {
        assert!(matches!(
            binom_cdf(11, 10, p(0.5)),
            Err(SpecialError::CountDomain { .. })
        ));
    }

    #[test]
    fn binom_cdf_large_counts() {
        // CDF at the mode: 1/2 plus half the central pmf; references
        // from an independent library evaluation
        let v = binom_cdf(500_000, 1_000_000, p(0.5)).unwrap().get();
        assert!((v - 0.500398942180667).abs() < 1e-9, "{v}");
        let v = binom_cdf(500_000, 10_000_000, p(0.05)).unwrap().get();
        assert!((v - 0.500376250027390).abs() < 1e-9, "{v}");
        let v = binom_cdf(3231, 72347, p(0.0455)).unwrap().get();
        assert!((v - 1.409661300991005e-1).abs() < 1e-11, "{v}");
    }

    #[test]
    fn binom_tail_inv_saturates_at_k_equals_m() {
        assert_eq!(binom_tail_inv(50, 50, p(0.05)).unwrap().get(), 1.0);
    }

    #[test]
    fn binom_tail_inv_closed_form_zero_violations() {
        // (1-e)^M = beta  =>  e = 1 - beta^(1/M)
        let e = binom_tail_inv(0, 100, p(0.05)).unwrap().get();
        assert!((e - 0.029513049607039932).abs() < 1e-12);
    }

    #[test]
    fn tail_inversion_identity_matches_beta_route() {
        // Bin_cdf(k, M, e) = 1 - Beta_cdf(k+1, M-k, e) transfers the
        // inversion to the beta quantile.
        for &(k, m, beta) in &[
            (30u64, 1500u64, 1e-9f64),
            (3231, 72347, 1e-9),
            (0, 100, 0.05),
        ] {
            let via_binom = binom_tail_inv(k, m, p(beta)).unwrap().get();
            let params = BetaParams::new(k as f64 + 1.0, (m - k) as f64).unwrap();
            let via_beta = beta_upper(params, p(1.0 - beta)).unwrap().get();
            let diff = (via_binom - via_beta).abs();
            assert!(diff < 1e-10, "k={k} m={m}: {via_binom} vs {via_beta}");
        }
    }

    #[test]
    fn inversion_round_trip() {
        for &(k, m, beta) in &[(0u64, 50u64, 0.1f64), (5, 200, 0.05), (30, 1500, 1e-9)] {
            let e = binom_tail_inv(k, m, p(beta)).unwrap();
            let back = binom_cdf(k, m, e).unwrap().get();
            assert!((back - beta).abs() < 1e-10, "k={k} m={m}: {back} vs {beta}");
        }
    }

    #[test]
    fn binom_cdf_strictly_decreasing_in_e() {
        let mut prev = 1.0;
        for i in 1..40 {
            let e = i as f64 / 40.0;
            let v = binom_cdf(3, 25, p(e)).unwrap().get();
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn tail_inv_monotone_in_arguments() {
        let base = binom_tail_inv(5, 100, p(0.05)).unwrap().get();
        assert!(binom_tail_inv(6, 100, p(0.05)).unwrap().get() >= base);
        assert!(binom_tail_inv(5, 120, p(0.05)).unwrap().get() <= base);
        assert!(binom_tail_inv(5, 100, p(0.10)).unwrap().get() <= base);
    }
}
