//! Hypothesis checks for the convergence theorems.
//!
//! Three regimes are recognised:
//!
//! ```text
//! lower-bounded   inf ρ = λ > 0                      rate n^{-1/2}
//! polynomial      ρ ≤ Λ < ∞, ρ > 0 except at N ≥ 1 declared zeros x_i
//!                 of order k_i with the envelope on B_i, and ρ bounded
//!                 below off ∪B_i                      rate (ln n / n)^{1/(2(k+1))}
//! mixed           as above, but Λ may be infinite (integrable singular
//!                 points allowed) and N ≥ 0
//! ```
//!
//! A density vanishing on a set of positive measure satisfies none of them;
//! the report flags it as the no-convergence regime.

use serde::Serialize;

use super::{DensityModel, Form, Interval};
use crate::quad;

/// Number of envelope test points inside each zero neighborhood.
pub const ENVELOPE_GRID: usize = 10_000;
/// Allowed deviation of the total mass from one.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-10;

const ENVELOPE_SLACK: f64 = 1e-9;
const LOCATION_MATCH: f64 = 1e-9;

/// Whether one theorem's hypotheses hold, with the reasons if not.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TheoremCheck {
    pub holds: bool,
    pub failures: Vec<String>,
}

impl TheoremCheck {
    fn from_failures(failures: Vec<String>) -> Self {
        TheoremCheck {
            holds: failures.is_empty(),
            failures,
        }
    }
}

/// Outcome of [`validate_model`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub model_id: String,
    /// Essential infimum λ of the density.
    pub infimum: f64,
    /// Supremum Λ; `None` when the density is unbounded.
    pub supremum: Option<f64>,
    /// Infimum of ρ off the declared zero neighborhoods.
    pub infimum_off_zeros: f64,
    /// `|∫ρ - 1|` measured by independent quadrature.
    pub normalization_defect: f64,
    /// Lebesgue measure of `{ρ = 0}` contributed by identically-zero pieces.
    pub vanishing_measure: f64,
    pub no_convergence_regime: bool,
    pub zero_orders: Vec<u32>,
    pub lower_bounded: TheoremCheck,
    pub polynomial_zeros: TheoremCheck,
    pub mixed_zero_singular: TheoremCheck,
    /// `{ρ < 1}` and `{ρ ≥ 1}`, the split used for mixed densities.
    pub below_one: Vec<Interval>,
    pub at_least_one: Vec<Interval>,
}

impl ValidationReport {
    /// True when at least one convergence theorem applies.
    pub fn any_theorem_holds(&self) -> bool {
        self.lower_bounded.holds || self.polynomial_zeros.holds || self.mixed_zero_singular.holds
    }

    /// Every distinct failure reason, for error messages.
    pub fn summary(&self) -> String {
        let mut all: Vec<&str> = Vec::new();
        for check in [
            &self.lower_bounded,
            &self.polynomial_zeros,
            &self.mixed_zero_singular,
        ] {
            for f in &check.failures {
                if !all.contains(&f.as_str()) {
                    all.push(f);
                }
            }
        }
        all.join("; ")
    }
}

/// Checks the hypotheses of each convergence theorem against `model`.
pub fn validate_model(model: &DensityModel) -> ValidationReport {
    let mut common = Vec::new();

    let normalization_defect = (quadrature_mass(model) - 1.0).abs();
    if normalization_defect > NORMALIZATION_TOLERANCE {
        common.push(format!(
            "total mass differs from 1 by {normalization_defect:.3e}"
        ));
    }

    let mut vanishing_measure = 0.0;
    let mut vanishing_points = Vec::new();
    let mut singular_points = Vec::new();
    for piece in model.pieces() {
        let (a, b) = (piece.start(), piece.end());
        let (lo, hi) = piece.form.range_on(a, b);
        if hi <= 0.0 {
            vanishing_measure += b - a;
            continue;
        }
        if let Form::Power {
            center, exponent, ..
        } = piece.form
        {
            if (a..=b).contains(&center) {
                if exponent > 0.0 {
                    vanishing_points.push(center);
                } else if exponent < 0.0 {
                    singular_points.push((center, exponent));
                }
            }
        } else if lo <= 1e-13 * hi {
            let mut candidates = vec![a, b];
            candidates.extend(piece.form.monotone_breaks(a, b));
            for x in candidates {
                if piece.form.density(x) <= 1e-13 * hi {
                    vanishing_points.push(x);
                }
            }
        }
    }
    vanishing_points.sort_by(f64::total_cmp);
    vanishing_points.dedup_by(|x, y| (*x - *y).abs() <= LOCATION_MATCH);
    let no_convergence_regime = vanishing_measure > 0.0;

    // Hypotheses shared by the polynomial-zero and mixed regimes.
    let mut structural = common.clone();
    if no_convergence_regime {
        structural.push(format!(
            "density vanishes on a set of measure {vanishing_measure}"
        ));
    }
    let zeros = model.zeros();
    for z in zeros {
        let nb = z.neighborhood();
        if nb.start <= 0.0 || nb.end >= 1.0 {
            structural.push(format!(
                "neighborhood of zero at {} is not inside (0,1)",
                z.location
            ));
        }
        if let Some(x) = envelope_violation(model, z) {
            structural.push(format!(
                "envelope of zero at {} fails at x = {x}",
                z.location
            ));
        }
    }
    for (i, a) in zeros.iter().enumerate() {
        for b in &zeros[i + 1..] {
            let (na, nb) = (a.neighborhood(), b.neighborhood());
            if na.start < nb.end && nb.start < na.end {
                structural.push(format!(
                    "neighborhoods of zeros at {} and {} overlap",
                    a.location, b.location
                ));
            }
        }
    }
    for &x in &vanishing_points {
        if !zeros
            .iter()
            .any(|z| (z.location - x).abs() <= LOCATION_MATCH)
        {
            structural.push(format!("undeclared zero of the density at {x}"));
        }
    }
    for &(s, p) in &singular_points {
        if !model
            .singulars()
            .iter()
            .any(|d| (d.location - s).abs() <= LOCATION_MATCH && (d.exponent - p).abs() <= 1e-12)
        {
            structural.push(format!("undeclared singularity at {s} with exponent {p}"));
        }
    }
    for d in model.singulars() {
        if !singular_points
            .iter()
            .any(|&(s, _)| (d.location - s).abs() <= LOCATION_MATCH)
        {
            structural.push(format!(
                "declared singularity at {} has no singular piece",
                d.location
            ));
        }
    }
    let off_zero = complement_of_neighborhoods(model);
    let infimum_off_zeros = off_zero
        .iter()
        .map(|iv| model.range_on(iv.start, iv.end).0)
        .fold(f64::INFINITY, f64::min)
        .max(0.0);
    if infimum_off_zeros <= 0.0 && !no_convergence_regime {
        structural.push("density is not bounded below away from the declared zeros".into());
    }

    let infimum = model.infimum();
    let supremum = model.supremum();

    let mut lower = common.clone();
    if infimum <= 0.0 {
        lower.push("density infimum is 0".into());
    }

    let mut polynomial = structural.clone();
    if !supremum.is_finite() {
        polynomial.push("density is unbounded".into());
    }
    if zeros.is_empty() {
        polynomial.push("no zeros declared".into());
    }

    ValidationReport {
        model_id: model.id().to_string(),
        infimum,
        supremum: supremum.is_finite().then_some(supremum),
        infimum_off_zeros,
        normalization_defect,
        vanishing_measure,
        no_convergence_regime,
        zero_orders: zeros.iter().map(|z| z.order).collect(),
        lower_bounded: TheoremCheck::from_failures(lower),
        polynomial_zeros: TheoremCheck::from_failures(polynomial),
        mixed_zero_singular: TheoremCheck::from_failures(structural),
        below_one: model.level_set(0.0, 1.0, &[1.0], |r| r < 1.0),
        at_least_one: model.level_set(0.0, 1.0, &[1.0], |r| r >= 1.0),
    }
}

/// Total mass by tanh-sinh quadrature, split at every breakpoint so each
/// panel is smooth with at most endpoint singularities.
fn quadrature_mass(model: &DensityModel) -> f64 {
    let mut total = 0.0;
    for piece in model.pieces() {
        let (a, b) = (piece.start(), piece.end());
        let mut cuts = vec![a];
        cuts.extend(piece.form.monotone_breaks(a, b));
        cuts.push(b);
        for w in cuts.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let integrand = |x: f64, from_lo: f64, from_hi: f64| match piece.form {
                // Measure the distance to the center without cancellation
                // when the center is a panel endpoint.
                Form::Power {
                    coefficient,
                    center,
                    exponent,
                } => {
                    let d = if center == lo {
                        from_lo
                    } else if center == hi {
                        from_hi
                    } else {
                        (x - center).abs()
                    };
                    coefficient * d.powf(exponent)
                }
                _ => piece.form.density(x),
            };
            total += quad::tanh_sinh_offsets(integrand, lo, hi, 1e-15).value;
        }
    }
    total
}

/// First grid point where the envelope fails, if any.
fn envelope_violation(model: &DensityModel, z: &super::ZeroPoint) -> Option<f64> {
    let k = z.order as i32;
    (0..ENVELOPE_GRID)
        .map(|m| z.location - z.radius + 2.0 * z.radius * (m as f64 + 0.5) / ENVELOPE_GRID as f64)
        .filter(|x| *x > 0.0 && *x < 1.0)
        .find(|&x| {
            let d = (x - z.location).abs().powi(k);
            let r = model.density(x);
            r < z.lower * d * (1.0 - ENVELOPE_SLACK) || r > z.upper * d * (1.0 + ENVELOPE_SLACK)
        })
}

/// `[0, 1]` minus the union of declared zero neighborhoods.
pub(crate) fn complement_of_neighborhoods(model: &DensityModel) -> Vec<Interval> {
    let mut nbs: Vec<Interval> = model.zeros().iter().map(|z| z.neighborhood()).collect();
    nbs.sort_by(|a, b| a.start.total_cmp(&b.start));
    let mut out = Vec::new();
    let mut cursor = 0.0;
    for nb in nbs {
        let s = nb.start.clamp(0.0, 1.0);
        if s > cursor {
            out.push(Interval::new(cursor, s));
        }
        cursor = cursor.max(nb.end.clamp(0.0, 1.0));
    }
    if cursor < 1.0 {
        out.push(Interval::new(cursor, 1.0));
    }
    out
}
