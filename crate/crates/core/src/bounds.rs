//! Concentration tails and rate envelopes.
//!
//! ```text
//! DKW                P(sup|F_n - F| ≥ t) ≤ 2·exp(-2nt²)
//! lower-bounded      W∞ ≤ (1/λ)·sqrt(ln(2M) / (2n))      except w.p. 1/M
//! polynomial zeros   W∞ ≤ C·max_i (ln n / n)^{1/(2(k_i+1))}
//! ```
//!
//! Binomial tails for `S_n ~ Bin(n, p)`, all for `P(|S_n/n - p| ≥ t)`:
//!
//! ```text
//! Chebyshev   p(1-p) / (n t²)          = 1/u²,  u = t·n / sqrt(n p (1-p))
//! Chernoff    2·exp(-2 n t²)
//! Bernstein   2·exp(-(n² t² / 2) / (n p (1-p) + n t / 3))
//! ```
//!
//! Exponential tails are formed in log space and exponentiated last, then
//! clipped to `[0, 1]`.

use num_bigint::BigUint;
use serde::Serialize;

use crate::error::{Error, Result};

/// Validated parameter bundle for the envelope functions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnvelopeParams {
    pub n: u64,
    pub t: f64,
    pub lambda: f64,
    pub confidence: f64,
    pub p: f64,
    pub rate_constant: f64,
}

impl EnvelopeParams {
    pub fn new(
        n: u64,
        t: f64,
        lambda: f64,
        confidence: f64,
        p: f64,
        rate_constant: f64,
    ) -> Result<Self> {
        check_n(n)?;
        check_t(t)?;
        check_positive("lambda", lambda)?;
        check_confidence(confidence)?;
        check_probability(p)?;
        check_positive("rate constant", rate_constant)?;
        Ok(EnvelopeParams {
            n,
            t,
            lambda,
            confidence,
            p,
            rate_constant,
        })
    }
}

fn check_n(n: u64) -> Result<()> {
    if n == 0 {
        return Err(Error::domain("n must be at least 1"));
    }
    Ok(())
}

fn check_t(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::domain(format!(
            "deviation t = {t} must be positive and finite"
        )));
    }
    Ok(())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::domain(format!(
            "{name} = {v} must be positive and finite"
        )));
    }
    Ok(())
}

fn check_confidence(m: f64) -> Result<()> {
    if !(m > 1.0 && m.is_finite()) {
        return Err(Error::domain(format!(
            "confidence parameter M = {m} must exceed 1"
        )));
    }
    Ok(())
}

fn check_probability(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!("p = {p} must lie in (0, 1)")));
    }
    Ok(())
}

/// `exp(log_value)` clipped to `[0, 1]`.
fn clipped_exp(log_value: f64) -> f64 {
    if log_value >= 0.0 {
        1.0
    } else {
        log_value.exp()
    }
}

/// `min(1, 2·exp(-2nt²))`.
pub fn dkw_tail(n: u64, t: f64) -> Result<f64> {
    check_n(n)?;
    check_t(t)?;
    Ok(clipped_exp(std::f64::consts::LN_2 - 2.0 * n as f64 * t * t))
}

/// `(1/λ)·sqrt(ln(2M) / (2n))`, exceeded with probability at most `1/M`.
pub fn lower_bound_envelope(lambda: f64, n: u64, confidence: f64) -> Result<f64> {
    check_positive("lambda", lambda)?;
    check_n(n)?;
    check_confidence(confidence)?;
    Ok(((2.0 * confidence).ln() / (2.0 * n as f64)).sqrt() / lambda)
}

/// `(ln n / n)^{1/(2(k+1))}`.
pub fn rate_shape(n: f64, order: u32) -> f64 {
    (n.ln() / n).powf(1.0 / (2.0 * (order as f64 + 1.0)))
}

/// `C·max_i (ln n / n)^{1/(2(k_i+1))}`.
///
/// Order 0 gives the `(ln n / n)^{1/2}` shape of the lower-bounded case.
pub fn zero_order_rate(n: u64, orders: &[u32], rate_constant: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::domain("rate envelope needs n >= 2"));
    }
    let k = *orders
        .iter()
        .max()
        .ok_or_else(|| Error::domain("at least one zero order is required"))?;
    check_positive("rate constant", rate_constant)?;
    Ok(rate_constant * rate_shape(n as f64, k))
}

/// The three binomial tail bounds for one `(n, p, t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BinomialTails {
    pub chebyshev: f64,
    pub chernoff: f64,
    pub bernstein: f64,
}

/// Tail bounds on `P(|S_n/n - p| ≥ t)` for `S_n ~ Bin(n, p)`.
pub fn binomial_tails(n: u64, p: f64, t: f64) -> Result<BinomialTails> {
    check_n(n)?;
    check_probability(p)?;
    check_t(t)?;
    let nf = n as f64;
    let variance = nf * p * (1.0 - p);
    let u = t * nf / variance.sqrt();
    let bernstein_log =
        std::f64::consts::LN_2 - (0.5 * nf * nf * t * t) / (variance + nf * t / 3.0);
    Ok(BinomialTails {
        chebyshev: chebyshev_standardized(u)?,
        chernoff: clipped_exp(std::f64::consts::LN_2 - 2.0 * nf * t * t),
        bernstein: clipped_exp(bernstein_log),
    })
}

/// Chebyshev in standardized units: `P(|S_n - np| ≥ u·sqrt(np(1-p))) ≤ 1/u²`.
pub fn chebyshev_standardized(u: f64) -> Result<f64> {
    check_positive("u", u)?;
    Ok((1.0 / (u * u)).min(1.0))
}

/// Exact test of `a^k - b^k ≥ (a - b)^k` for `a > b > 0`.
///
/// Both floats are scaled to integers sharing one power of two, so the
/// comparison is carried out in exact big-integer arithmetic.
pub fn power_inequality_holds(a: f64, b: f64, k: u32) -> Result<bool> {
    if !(a.is_finite() && b > 0.0 && a > b) {
        return Err(Error::domain(format!(
            "need a > b > 0, got a = {a}, b = {b}"
        )));
    }
    if k == 0 {
        return Err(Error::domain("exponent k must be a positive integer"));
    }
    let (ma, ea) = decode(a);
    let (mb, eb) = decode(b);
    let e = ea.min(eb);
    let big_a = BigUint::from(ma) << (ea - e) as usize;
    let big_b = BigUint::from(mb) << (eb - e) as usize;
    let diff = &big_a - &big_b;
    Ok(big_a.pow(k) - big_b.pow(k) >= diff.pow(k))
}

/// `x = mantissa · 2^exponent` for a positive finite double.
fn decode(x: f64) -> (u64, i32) {
    let bits = x.to_bits();
    let raw_exp = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & ((1u64 << 52) - 1);
    if raw_exp == 0 {
        (frac, -1074)
    } else {
        (frac | (1u64 << 52), raw_exp - 1075)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dkw_values() {
        assert!((dkw_tail(100, 0.1).unwrap() - 2.0 * (-2.0f64).exp()).abs() < 1e-15);
        assert_eq!(dkw_tail(100, 10.0).unwrap(), 0.0);
        assert_eq!(dkw_tail(1, 0.01).unwrap(), 1.0);
        assert_eq!(dkw_tail(1, 0.0).unwrap_err().kind(), "domain");
    }

    #[test]
    fn envelope_values() {
        let v = lower_bound_envelope(1.0, 2, 2.0).unwrap();
        assert!((v - (4.0f64.ln() / 4.0).sqrt()).abs() < 1e-15);
        assert!((v - 0.5887).abs() < 1e-4);
        let w = lower_bound_envelope(1.0, 200, 2.0).unwrap();
        assert!((w * 10.0 - v).abs() < 1e-15);
        assert!((lower_bound_envelope(0.5, 2, 2.0).unwrap() - 2.0 * v).abs() < 1e-15);
        assert_eq!(
            lower_bound_envelope(1.0, 2, 1.0).unwrap_err().kind(),
            "domain"
        );
    }

    #[test]
    fn rate_values() {
        let r = zero_order_rate(1000, &[1], 1.0).unwrap();
        assert!((r - (1000f64.ln() / 1000.0).powf(0.25)).abs() < 1e-15);
        assert!((r - 0.2883).abs() < 1e-4);
        assert!(zero_order_rate(1000, &[1, 3], 1.0).unwrap() > r);
        let half = zero_order_rate(1000, &[0], 1.0).unwrap();
        assert!((half - (1000f64.ln() / 1000.0).sqrt()).abs() < 1e-15);
        assert!(zero_order_rate(1, &[1], 1.0).is_err());
        assert!(zero_order_rate(10, &[], 1.0).is_err());
    }

    #[test]
    fn binomial_values() {
        let b = binomial_tails(100, 0.5, 0.1).unwrap();
        assert!((b.chernoff - 2.0 * (-2.0f64).exp()).abs() < 1e-15);
        let expect = 2.0 * (-50.0 / (25.0 + 10.0 / 3.0f64)).exp();
        assert!((b.bernstein - expect).abs() < 1e-15);
        assert!((b.chebyshev - 0.25).abs() < 1e-15);
        let huge = binomial_tails(100, 0.5, 1e6).unwrap();
        assert!(huge.chebyshev <= 1.0 && huge.chernoff <= 1.0 && huge.bernstein <= 1.0);
        let tiny = binomial_tails(10, 0.5, 1e-6).unwrap();
        assert_eq!(
            (tiny.chebyshev, tiny.chernoff, tiny.bernstein),
            (1.0, 1.0, 1.0)
        );
        assert_eq!(binomial_tails(10, 1.0, 0.1).unwrap_err().kind(), "domain");
    }

    #[test]
    fn power_inequality_examples() {
        assert!(power_inequality_holds(2.0, 1.0, 3).unwrap());
        assert!(power_inequality_holds(1.0 + 1e-6, 1.0, 2).unwrap());
        assert!(power_inequality_holds(0.7, 0.3, 1).unwrap());
        assert!(power_inequality_holds(1.0, 2.0, 2).is_err());
        assert!(power_inequality_holds(2.0, 1.0, 0).is_err());
    }

    #[test]
    fn decode_round_trips() {
        for x in [1.0, 0.1, 3.5e-310, 1e300, 12345.678] {
            let (m, e) = decode(x);
            assert_eq!(m as f64 * 2f64.powi(e), x);
        }
    }
}
