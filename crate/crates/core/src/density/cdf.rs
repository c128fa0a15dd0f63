//! Closed-form CDF, generalized inverses and CDF integrals of a model.

use log::warn;

use super::{validate_model, DensityModel, ValidationReport};
use crate::error::{Error, Result};

/// Immutable CDF/quantile evaluator for a [`DensityModel`].
///
/// Cumulative masses and first moments at piece boundaries are tabulated at
/// construction; everything else is a closed-form evaluation inside one piece.
#[derive(Clone, Debug)]
pub struct CdfEvaluator {
    model: DensityModel,
    report: ValidationReport,
    force_accepted: bool,
    /// `F` at each piece start, plus `F(1) = 1`.
    cumulative: Vec<f64>,
    /// `∫_0^x t ρ(t) dt` at each piece start, plus the total.
    cumulative_moment: Vec<f64>,
}

impl CdfEvaluator {
    /// Builds an evaluator for a model satisfying at least one convergence
    /// theorem.
    pub fn new(model: DensityModel) -> Result<Self> {
        let report = validate_model(&model);
        if !report.any_theorem_holds() {
            return Err(Error::Unvalidated {
                model: model.id().to_string(),
                reason: report.summary(),
            });
        }
        Ok(Self::build(model, report, false))
    }

    /// Builds an evaluator regardless of the validation outcome.
    pub fn force_accept(model: DensityModel) -> Self {
        let report = validate_model(&model);
        if !report.any_theorem_holds() {
            warn!(
                "model `{}` force-accepted despite: {}",
                model.id(),
                report.summary()
            );
        }
        Self::build(model, report, true)
    }

    fn build(model: DensityModel, report: ValidationReport, force_accepted: bool) -> Self {
        let mut cumulative = vec![0.0];
        let mut cumulative_moment = vec![0.0];
        for p in model.pieces() {
            let m = p.form.mass(p.start(), p.end());
            let last = *cumulative.last().unwrap();
            cumulative.push((last + m).min(1.0));
            let mom = p.form.moment(p.start(), p.end());
            let last = *cumulative_moment.last().unwrap();
            cumulative_moment.push(last + mom);
        }
        *cumulative.last_mut().unwrap() = 1.0;
        CdfEvaluator {
            model,
            report,
            force_accepted,
            cumulative,
            cumulative_moment,
        }
    }

    pub fn model(&self) -> &DensityModel {
        &self.model
    }

    pub fn report(&self) -> &ValidationReport {
        &self.report
    }

    pub fn is_force_accepted(&self) -> bool {
        self.force_accepted
    }

    /// `F(x)` with a domain check.
    pub fn cdf_eval(&self, x: f64) -> Result<f64> {
        check_unit("x", x)?;
        Ok(self.cdf(x))
    }

    /// `inf{x : F(x) ≥ y}` with a domain check.
    pub fn quantile_eval(&self, y: f64) -> Result<f64> {
        check_unit("y", y)?;
        Ok(self.quantile(y))
    }

    /// `F(b) - F(a)` with domain checks.
    pub fn mass_of_interval(&self, a: f64, b: f64) -> Result<f64> {
        check_unit("a", a)?;
        check_unit("b", b)?;
        if a > b {
            return Err(Error::domain(format!(
                "interval endpoints out of order: {a} > {b}"
            )));
        }
        Ok(self.mass(a, b))
    }

    /// `F(x)`, with `x` clamped into `[0, 1]`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        let i = self.model.piece_index(x);
        let p = &self.model.pieces()[i];
        (self.cumulative[i] + p.form.mass(p.start(), x)).clamp(0.0, 1.0)
    }

    /// Left-continuous generalized inverse `inf{x : F(x) ≥ y}`, with
    /// `F⁻¹(0) = 0` and `y` clamped into `[0, 1]`.
    pub fn quantile(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        // First piece whose upper cumulative mass reaches y.
        let i = self.cumulative[1..]
            .partition_point(|c| *c < y)
            .min(self.model.pieces().len() - 1);
        self.invert_in_piece(i, y)
    }

    /// Right-continuous generalized inverse `inf{x : F(x) > y}`, with
    /// `y ≥ 1` mapped to 1. Differs from [`Self::quantile`] only at levels
    /// where `F` is flat.
    pub fn quantile_right(&self, y: f64) -> f64 {
        if y >= 1.0 {
            return 1.0;
        }
        let y = y.max(0.0);
        let i = self.cumulative[1..].partition_point(|c| *c <= y);
        if i >= self.model.pieces().len() {
            return 1.0;
        }
        self.invert_in_piece(i, y)
    }

    fn invert_in_piece(&self, i: usize, y: f64) -> f64 {
        let p = &self.model.pieces()[i];
        let local = (y - self.cumulative[i]).max(0.0);
        p.form.invert_mass(p.start(), p.end(), local)
    }

    /// `F(b) - F(a)` for `a ≤ b`, clamped into `[0, 1]`.
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        let (a, b) = (a.clamp(0.0, 1.0), b.clamp(0.0, 1.0));
        if b <= a {
            return 0.0;
        }
        let (i, j) = (self.model.piece_index(a), self.model.piece_index(b));
        if i == j {
            // Same piece: avoid the cancellation in F(b) - F(a).
            return self.model.pieces()[i].form.mass(a, b).max(0.0);
        }
        (self.cdf(b) - self.cdf(a)).max(0.0)
    }

    /// Density value (delegates to the model).
    pub fn density(&self, x: f64) -> f64 {
        self.model.density(x)
    }

    /// `∫_0^x t ρ(t) dt`.
    pub fn first_moment(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return *self.cumulative_moment.last().unwrap();
        }
        let i = self.model.piece_index(x);
        let p = &self.model.pieces()[i];
        self.cumulative_moment[i] + p.form.moment(p.start(), x)
    }

    /// `∫_a^b F(x) dx` by parts: `[xF]_a^b - ∫_a^b x ρ(x) dx`.
    pub fn integral_of_cdf(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let by_parts =
            b * self.cdf(b) - a * self.cdf(a) - (self.first_moment(b) - self.first_moment(a));
        by_parts.clamp(0.0, b - a)
    }
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} = {v} lies outside [0, 1]")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::quad::tanh_sinh;

    #[test]
    fn tent_values() {
        let f = CdfEvaluator::new(catalog::tent()).unwrap();
        assert!((f.cdf_eval(0.25).unwrap() - 0.375).abs() < 1e-15);
        assert!((f.cdf_eval(0.5).unwrap() - 0.5).abs() < 1e-15);
        assert!((f.quantile_eval(0.375).unwrap() - 0.25).abs() < 1e-15);
        assert!((f.mass_of_interval(0.25, 0.75).unwrap() - 0.25).abs() < 1e-15);
        assert!((f.mass_of_interval(0.0, 0.5).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn domain_errors() {
        let f = CdfEvaluator::new(catalog::uniform()).unwrap();
        assert_eq!(f.cdf_eval(1.5).unwrap_err().kind(), "domain");
        assert_eq!(f.quantile_eval(-0.1).unwrap_err().kind(), "domain");
        assert_eq!(f.mass_of_interval(0.6, 0.2).unwrap_err().kind(), "domain");
    }

    #[test]
    fn gap_requires_force_accept() {
        let err = CdfEvaluator::new(catalog::gap()).unwrap_err();
        assert_eq!(err.kind(), "unvalidated");
        let f = CdfEvaluator::force_accept(catalog::gap());
        assert!((f.quantile_eval(0.5).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((f.quantile_right(0.5) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(f.quantile_eval(0.0).unwrap(), 0.0);
        assert_eq!(f.quantile_eval(1.0).unwrap(), 1.0);
    }

    #[test]
    fn cdf_integral_matches_quadrature() {
        for name in catalog::NAMES {
            let f = CdfEvaluator::force_accept(catalog::model(name).unwrap());
            let breaks = f.model().breakpoints();
            for &(a, b) in &[(0.0, 1.0), (0.1, 0.4), (0.3, 0.9), (0.55, 0.8)] {
                let exact = f.integral_of_cdf(a, b);
                // F has kinks at density breakpoints; integrate between them.
                let mut cuts: Vec<f64> = breaks
                    .iter()
                    .copied()
                    .filter(|x| *x > a && *x < b)
                    .collect();
                cuts.insert(0, a);
                cuts.push(b);
                let q: f64 = cuts
                    .windows(2)
                    .map(|w| tanh_sinh(|x| f.cdf(x), w[0], w[1], 1e-14).value)
                    .sum();
                assert!(
                    (exact - q).abs() < 1e-10,
                    "{name} [{a},{b}]: {exact} vs {q}"
                );
            }
        }
    }

    #[test]
    fn cdf_matches_quadrature_of_density() {
        for name in catalog::NAMES {
            let f = CdfEvaluator::force_accept(catalog::model(name).unwrap());
            let breaks = f.model().breakpoints();
            for i in 1..40 {
                let x = i as f64 / 40.0;
                let mut q = 0.0;
                let mut lo = 0.0;
                for &b in breaks.iter().filter(|b| **b > 0.0) {
                    let hi = b.min(x);
                    if hi > lo {
                        q += tanh_sinh(|t| f.density(t), lo, hi, 1e-15).value;
                    }
                    lo = b;
                    if b >= x {
                        break;
                    }
                }
                assert!(
                    (f.cdf(x) - q).abs() < 1e-12,
                    "{name} at {x}: {} vs {q}",
                    f.cdf(x)
                );
            }
        }
    }
}
