//! Exact ∞-Wasserstein distances between one-dimensional densities and their
//! empirical measures, with Monte Carlo tooling for convergence rates.
//!
//! * [`density`]: piecewise-analytic densities, validation, CDF and quantiles
//! * [`sampling`]: seeded inverse-transform sampling, KS statistic
//! * [`transport`]: exact W∞ / W₁ and bottleneck matching
//! * [`bounds`]: concentration tails and rate envelopes
//! * [`construction`]: partition-and-tilt transport certificates
//! * [`experiments`]: rate and coverage experiments, run records
//!
//! ```
//! use winf_core::{catalog, density::CdfEvaluator, sampling, transport};
//!
//! let cdf = CdfEvaluator::new(catalog::tent()).unwrap();
//! let sample = sampling::draw_samples(&cdf, 1000, sampling::SeedSpec::new(7, 0)).unwrap();
//! let report = transport::distance_report(&cdf, &sample).unwrap();
//! assert!(report.w_one.unwrap() <= report.w_infinity);
//! ```

pub mod bounds;
pub mod catalog;
pub mod construction;
pub mod density;
pub mod error;
pub mod experiments;
pub mod quad;
pub mod sampling;
pub mod transport;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/densities.md")]
    mod densities {}
    #[doc = include_str!("../../../book/src/sampling.md")]
    mod sampling {}
    #[doc = include_str!("../../../book/src/distances.md")]
    mod distances {}
    #[doc = include_str!("../../../book/src/bounds.md")]
    mod bounds {}
    #[doc = include_str!("../../../book/src/construction.md")]
    mod construction {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
