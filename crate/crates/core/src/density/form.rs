//! Analytic forms a density piece may take, with closed-form mass and first
//! moment on any sub-interval.

use serde::{Deserialize, Serialize};

/// Highest polynomial degree accepted in a density piece.
pub const MAX_POLYNOMIAL_DEGREE: usize = 16;

/// Density residual at which the polynomial inverse stops refining.
const INVERSION_RESIDUAL: f64 = 1e-14;
/// Below this density value Newton steps are skipped in favour of bisection.
const NEWTON_MIN_DENSITY: f64 = 1e-6;
/// Grid used to locate critical points of polynomial pieces.
const CRITICAL_POINT_GRID: usize = 2048;

/// Closed-form shape of a density on one piece.
///
/// * `Constant`: `value`
/// * `Power`: `coefficient * |x - center|^exponent`, `exponent > -1`
/// * `Polynomial`: `sum_k coefficients[k] * x^k`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Form {
    Constant {
        value: f64,
    },
    Power {
        coefficient: f64,
        center: f64,
        exponent: f64,
    },
    Polynomial {
        coefficients: Vec<f64>,
    },
}

impl Form {
    /// Density value at `x`. Returns `+inf` at the center of a singular power.
    pub fn density(&self, x: f64) -> f64 {
        match self {
            Form::Constant { value } => *value,
            Form::Power {
                coefficient,
                center,
                exponent,
            } => {
                let d = (x - center).abs();
                if d == 0.0 {
                    if *exponent > 0.0 {
                        0.0
                    } else if *exponent == 0.0 {
                        *coefficient
                    } else {
                        f64::INFINITY
                    }
                } else {
                    coefficient * d.powf(*exponent)
                }
            }
            Form::Polynomial { coefficients } => horner(coefficients, x),
        }
    }

    /// `∫_a^x ρ(t) dt`.
    pub fn mass(&self, a: f64, x: f64) -> f64 {
        match self {
            Form::Constant { value } => value * (x - a),
            Form::Power {
                coefficient,
                center,
                exponent,
            } => {
                let q = exponent + 1.0;
                coefficient * (signed_pow(x - center, q) - signed_pow(a - center, q)) / q
            }
            Form::Polynomial { coefficients } => {
                poly_antiderivative(coefficients, x) - poly_antiderivative(coefficients, a)
            }
        }
    }

    /// `∫_a^x t ρ(t) dt`.
    pub fn moment(&self, a: f64, x: f64) -> f64 {
        match self {
            Form::Constant { value } => value * (x * x - a * a) / 2.0,
            Form::Power {
                coefficient,
                center,
                exponent,
            } => {
                // t = (t - s) + s splits the moment into two power antiderivatives.
                let q = exponent + 1.0;
                let r = exponent + 2.0;
                let centered = ((x - center).abs().powf(r) - (a - center).abs().powf(r)) / r;
                let mass = (signed_pow(x - center, q) - signed_pow(a - center, q)) / q;
                coefficient * (centered + center * mass)
            }
            Form::Polynomial { coefficients } => {
                let anti = |t: f64| {
                    coefficients
                        .iter()
                        .enumerate()
                        .rev()
                        .fold(0.0, |acc, (k, c)| acc * t + c / (k as f64 + 2.0))
                        * t
                        * t
                };
                anti(x) - anti(a)
            }
        }
    }

    /// Smallest `x` in `[a, b]` with `mass(a, x) >= target`.
    ///
    /// Constant and power pieces invert in closed form. Polynomials use a
    /// bracketed Newton iteration that falls back to bisection wherever the
    /// density is too small for a safe Newton step.
    pub fn invert_mass(&self, a: f64, b: f64, target: f64) -> f64 {
        if target <= 0.0 {
            return a;
        }
        let x = match self {
            Form::Constant { value } => {
                if *value > 0.0 {
                    a + target / value
                } else {
                    a
                }
            }
            Form::Power {
                coefficient,
                center,
                exponent,
            } => {
                if *coefficient <= 0.0 {
                    return a;
                }
                let q = exponent + 1.0;
                let g = signed_pow(a - center, q) + target * q / coefficient;
                center + signed_pow(g, 1.0 / q)
            }
            Form::Polynomial { .. } => self.invert_polynomial(a, b, target),
        };
        x.clamp(a, b)
    }

    fn invert_polynomial(&self, a: f64, b: f64, target: f64) -> f64 {
        let total = self.mass(a, b);
        if target >= total {
            return b;
        }
        let (mut lo, mut hi) = (a, b);
        let mut x = a + (b - a) * (target / total);
        for _ in 0..200 {
            let r = self.mass(a, x) - target;
            if r.abs() <= INVERSION_RESIDUAL {
                break;
            }
            if r > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            if hi - lo <= f64::EPSILON * hi.abs().max(1e-300) {
                break;
            }
            let d = self.density(x);
            let newton = if d >= NEWTON_MIN_DENSITY {
                Some(x - r / d)
            } else {
                None
            };
            x = match newton {
                Some(n) if n > lo && n < hi => n,
                _ => 0.5 * (lo + hi),
            };
        }
        x
    }

    /// Interior points of `(a, b)` where the density may change monotonicity.
    pub fn monotone_breaks(&self, a: f64, b: f64) -> Vec<f64> {
        match self {
            Form::Constant { .. } => Vec::new(),
            Form::Power { center, .. } => {
                if *center > a && *center < b {
                    vec![*center]
                } else {
                    Vec::new()
                }
            }
            Form::Polynomial { coefficients } => {
                let deriv: Vec<f64> = coefficients
                    .iter()
                    .enumerate()
                    .skip(1)
                    .map(|(k, c)| c * k as f64)
                    .collect();
                if deriv.iter().all(|c| *c == 0.0) {
                    return Vec::new();
                }
                let mut out = Vec::new();
                let h = (b - a) / CRITICAL_POINT_GRID as f64;
                let mut prev_x = a;
                let mut prev = horner(&deriv, a);
                for i in 1..=CRITICAL_POINT_GRID {
                    let x = if i == CRITICAL_POINT_GRID {
                        b
                    } else {
                        a + h * i as f64
                    };
                    let v = horner(&deriv, x);
                    if v == 0.0 && x < b {
                        out.push(x);
                    } else if prev != 0.0 && prev.signum() != v.signum() && v != 0.0 {
                        out.push(bisect(|t| horner(&deriv, t), prev_x, x));
                    }
                    prev_x = x;
                    prev = v;
                }
                out.retain(|x| *x > a && *x < b);
                out.dedup();
                out
            }
        }
    }

    /// Points in `[a, b]` where the density equals `level`, assuming the
    /// density is monotone on `[a, b]`.
    pub fn solve_level(&self, a: f64, b: f64, level: f64) -> Option<f64> {
        match self {
            Form::Constant { .. } => None,
            Form::Power {
                coefficient,
                center,
                exponent,
            } => {
                if *exponent == 0.0 || *coefficient <= 0.0 || level <= 0.0 || !level.is_finite() {
                    return None;
                }
                let d = (level / coefficient).powf(1.0 / exponent);
                [center - d, center + d]
                    .into_iter()
                    .find(|x| *x > a && *x < b)
            }
            Form::Polynomial { .. } => {
                let fa = self.density(a) - level;
                let fb = self.density(b) - level;
                if fa == 0.0 || fb == 0.0 || fa.signum() == fb.signum() {
                    None
                } else {
                    Some(bisect(|t| self.density(t) - level, a, b))
                }
            }
        }
    }

    /// Minimum and maximum of the density over the closed interval `[a, b]`.
    pub fn range_on(&self, a: f64, b: f64) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut visit = |x: f64| {
            let v = self.density(x);
            lo = lo.min(v);
            hi = hi.max(v);
        };
        visit(a);
        visit(b);
        for x in self.monotone_breaks(a, b) {
            visit(x);
        }
        (lo, hi)
    }

    /// The same form with every coefficient divided by `z`.
    pub(crate) fn scaled(&self, z: f64) -> Form {
        match self {
            Form::Constant { value } => Form::Constant { value: value / z },
            Form::Power {
                coefficient,
                center,
                exponent,
            } => Form::Power {
                coefficient: coefficient / z,
                center: *center,
                exponent: *exponent,
            },
            Form::Polynomial { coefficients } => Form::Polynomial {
                coefficients: coefficients.iter().map(|c| c / z).collect(),
            },
        }
    }
}

/// `sign(x) * |x|^q`.
fn signed_pow(x: f64, q: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.signum() * x.abs().powf(q)
    }
}

fn horner(coefficients: &[f64], x: f64) -> f64 {
    coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

fn poly_antiderivative(coefficients: &[f64], x: f64) -> f64 {
    coefficients
        .iter()
        .enumerate()
        .rev()
        .fold(0.0, |acc, (k, c)| acc * x + c / (k as f64 + 1.0))
        * x
}

/// Root of `f` on `[lo, hi]` given a sign change, to machine resolution.
pub(crate) fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if fm.signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
