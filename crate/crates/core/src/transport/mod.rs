//! Exact one-dimensional Wasserstein distances.
//!
//! In one dimension the optimal coupling is the monotone one, so
//!
//! ```text
//! W∞(μ, ν) = sup_{y ∈ (0,1)} |F_μ⁻¹(y) - F_ν⁻¹(y)|
//! W₁(μ, ν) = ∫ |F_μ(x) - F_ν(x)| dx
//! ```
//!
//! Against an empirical measure with order statistics `X_(1) ≤ … ≤ X_(n)`
//! the empirical quantile is the constant `X_(i)` on the cell
//! `((i-1)/n, i/n]`, and `F⁻¹` is nondecreasing there, so
//! `|X_(i) - F⁻¹(y)|` is maximised at one of the two cell ends. The left end
//! is approached from the right, which is why it uses the right-continuous
//! inverse `inf{x : F(x) > (i-1)/n}`.

mod measure;

use serde::{Deserialize, Serialize};

pub use measure::{
    winf_against_atoms, winf_between, ReweightedMeasure, StageDistance, WeightedSegment,
};

use crate::density::CdfEvaluator;
use crate::error::{Error, Result};
use crate::sampling::EmpiricalMeasure;

/// Which end of the quantile cell attains the supremum.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellEndpoint {
    Left,
    Right,
}

/// Exact distances between a model and an empirical measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub n: usize,
    pub w_infinity: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w_one: Option<f64>,
    /// 1-based order-statistic index of the attaining cell.
    pub argmax_index: usize,
    pub argmax_endpoint: CellEndpoint,
}

/// Exact `W∞(ν, νₙ)` via the quantile-cell endpoint formula.
///
/// The result is at most 1 because both measures live on `[0, 1]`.
pub fn winf_empirical(cdf: &CdfEvaluator, em: &EmpiricalMeasure) -> Result<DistanceReport> {
    if em.is_empty() {
        return Err(Error::domain("empirical measure is empty"));
    }
    let n = em.len();
    let nf = n as f64;
    let mut best = (0.0, 1, CellEndpoint::Left);
    for (i, &x) in em.samples().iter().enumerate() {
        let left = if i == 0 {
            0.0
        } else {
            cdf.quantile_right(i as f64 / nf)
        };
        let right = if i + 1 == n {
            1.0
        } else {
            cdf.quantile((i + 1) as f64 / nf)
        };
        let dl = (x - left).abs();
        let dr = (x - right).abs();
        if dl > best.0 {
            best = (dl, i + 1, CellEndpoint::Left);
        }
        if dr > best.0 {
            best = (dr, i + 1, CellEndpoint::Right);
        }
    }
    Ok(DistanceReport {
        n,
        w_infinity: best.0,
        w_one: None,
        argmax_index: best.1,
        argmax_endpoint: best.2,
    })
}

/// Exact `W₁(ν, νₙ) = ∫₀¹ |F - F_n|`.
///
/// Between consecutive order statistics `F_n` is the constant `i/n`, and
/// `F - i/n` changes sign once, at `F⁻¹(i/n)`. Each side integrates in
/// closed form through `∫F = [xF] - ∫xρ`.
pub fn w1_empirical(cdf: &CdfEvaluator, em: &EmpiricalMeasure) -> Result<f64> {
    if em.is_empty() {
        return Err(Error::domain("empirical measure is empty"));
    }
    let xs = em.samples();
    let nf = xs.len() as f64;
    let mut total = 0.0;
    for i in 0..=xs.len() {
        let a = if i == 0 { 0.0 } else { xs[i - 1] };
        let b = if i == xs.len() { 1.0 } else { xs[i] };
        if b <= a {
            continue;
        }
        let level = i as f64 / nf;
        let c = cdf.quantile(level).clamp(a, b);
        let below = level * (c - a) - cdf.integral_of_cdf(a, c);
        let above = cdf.integral_of_cdf(c, b) - level * (b - c);
        total += below.max(0.0) + above.max(0.0);
    }
    Ok(total)
}

/// [`winf_empirical`] with the W₁ field filled in.
pub fn distance_report(cdf: &CdfEvaluator, em: &EmpiricalMeasure) -> Result<DistanceReport> {
    let mut report = winf_empirical(cdf, em)?;
    report.w_one = Some(w1_empirical(cdf, em)?);
    Ok(report)
}

/// Bottleneck distance between two equal-size sorted point sets:
/// `min_π max_i |x_{π(i)} - y_i| = max_i |x_i - y_i|`.
pub fn winf_discrete(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::domain(format!(
            "point sets differ in size ({} vs {})",
            xs.len(),
            ys.len()
        )));
    }
    for (name, v) in [("xs", xs), ("ys", ys)] {
        if v.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::domain(format!("{name} is not sorted ascending")));
        }
    }
    Ok(xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::sampling::SeedSpec;

    fn em(xs: &[f64]) -> EmpiricalMeasure {
        EmpiricalMeasure::from_points(xs.to_vec(), "t", SeedSpec::new(0, 0)).unwrap()
    }

    #[test]
    fn uniform_examples() {
        let f = CdfEvaluator::new(catalog::uniform()).unwrap();
        let r = winf_empirical(&f, &em(&[0.3])).unwrap();
        assert!((r.w_infinity - 0.7).abs() < 1e-15);
        assert_eq!(
            (r.argmax_index, r.argmax_endpoint),
            (1, CellEndpoint::Right)
        );
        let r = winf_empirical(&f, &em(&[0.25, 0.75])).unwrap();
        assert!((r.w_infinity - 0.25).abs() < 1e-15);
    }

    #[test]
    fn w1_examples() {
        let f = CdfEvaluator::new(catalog::uniform()).unwrap();
        assert!((w1_empirical(&f, &em(&[0.5])).unwrap() - 0.25).abs() < 1e-15);
        let x: f64 = 0.2;
        let expect = x * x / 2.0 + (1.0 - x) * (1.0 - x) / 2.0;
        assert!((w1_empirical(&f, &em(&[x])).unwrap() - expect).abs() < 1e-15);
        let n = 16;
        let mids: Vec<f64> = (1..=n)
            .map(|i| (2 * i - 1) as f64 / (2 * n) as f64)
            .collect();
        assert!((w1_empirical(&f, &em(&mids)).unwrap() - 1.0 / (4.0 * n as f64)).abs() < 1e-15);
    }

    #[test]
    fn gap_counterexample() {
        let f = CdfEvaluator::force_accept(catalog::gap());
        // Two of three points left of the gap: the middle cell straddles it.
        let r = winf_empirical(&f, &em(&[0.1, 0.2, 0.9])).unwrap();
        assert!(r.w_infinity >= 1.0 / 3.0 - 1e-12);
    }

    #[test]
    fn discrete_examples() {
        assert!((winf_discrete(&[0.1, 0.9], &[0.2, 0.8]).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(winf_discrete(&[0.1, 0.5], &[0.1, 0.5]).unwrap(), 0.0);
        assert_eq!(
            winf_discrete(&[0.1], &[0.1, 0.2]).unwrap_err().kind(),
            "domain"
        );
        assert_eq!(
            winf_discrete(&[0.5, 0.1], &[0.1, 0.2]).unwrap_err().kind(),
            "domain"
        );
    }
}
