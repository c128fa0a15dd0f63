//! Double-exponential (tanh-sinh) quadrature.
//!
//! ```text
//! ∫_a^b f(x) dx = ∫ f(φ(t)) φ'(t) dt,   φ(t) = m + r·tanh(π/2·sinh t)
//! ```
//!
//! The substitution pushes the nodes toward the endpoints double-exponentially,
//! so integrable endpoint singularities such as `|x - a|^{-1/2}` converge
//! without special treatment. Nodes near an endpoint are evaluated at
//! `a + d` / `b - d` with the distance `d` computed directly to avoid
//! cancellation.

use std::f64::consts::FRAC_PI_2;

/// Result of a quadrature run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    /// Difference between the last two refinement levels.
    pub error_estimate: f64,
}

const MAX_LEVEL: u32 = 12;
// Large enough that the truncated end mass of `x^{-0.9}` stays below 1e-16.
const T_MAX: f64 = 6.0;

/// Integrates `f` over `[a, b]` until successive levels agree to `tol`
/// (absolute), or the refinement budget runs out.
///
/// `f` is never evaluated at `a` or `b`; nodes closer to an endpoint than
/// one ulp are dropped. Use [`tanh_sinh_offsets`] when the integrand is
/// singular at an endpoint that is not exactly representable near zero.
pub fn tanh_sinh(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Quadrature {
    tanh_sinh_offsets(|x, _, _| if x > a && x < b { f(x) } else { 0.0 }, a, b, tol)
}

/// Like [`tanh_sinh`], but calls `f(x, x - a, b - x)` with both endpoint
/// distances computed without cancellation.
pub fn tanh_sinh_offsets(f: impl Fn(f64, f64, f64) -> f64, a: f64, b: f64, tol: f64) -> Quadrature {
    if b <= a {
        return Quadrature {
            value: 0.0,
            error_estimate: 0.0,
        };
    }
    let width = b - a;
    let half = 0.5 * width;
    let mid = 0.5 * (a + b);
    // Contribution of the node pair at ±t (or the single center node).
    let pair = |t: f64| -> f64 {
        let u = FRAC_PI_2 * t.sinh();
        let cosh_u = u.cosh();
        let w = half * FRAC_PI_2 * t.cosh() / (cosh_u * cosh_u);
        if t == 0.0 {
            return w * f(mid, half, half);
        }
        // Distance from the nearer endpoint: r·(1 - tanh u) = 2r / (1 + e^{2u}).
        let d = width / (1.0 + (2.0 * u).exp());
        if d <= 0.0 || w == 0.0 {
            return 0.0;
        }
        w * (f(a + d, d, width - d) + f(b - d, width - d, d))
    };

    let mut h = 1.0;
    let mut sum = pair(0.0);
    let mut k = 1;
    while (k as f64) * h <= T_MAX {
        sum += pair(k as f64 * h);
        k += 1;
    }
    let mut estimate = sum * h;
    let mut error = f64::INFINITY;
    for _ in 1..=MAX_LEVEL {
        h *= 0.5;
        // Only the new odd-indexed nodes are evaluated at each halving.
        let mut k = 1;
        while (k as f64) * h <= T_MAX {
            sum += pair(k as f64 * h);
            k += 2;
        }
        let next = sum * h;
        error = (next - estimate).abs();
        estimate = next;
        if error <= tol {
            break;
        }
    }
    Quadrature {
        value: estimate,
        error_estimate: error,
    }
}
