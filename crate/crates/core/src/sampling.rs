//! Seeded inverse-transform sampling and empirical-measure statistics.
//!
//! Each stream is keyed by a [`SeedSpec`] `(base_seed, stream_index)`. The
//! generator seed is derived with the SplitMix64 finalizer
//!
//! ```text
//! z  = base_seed + (stream_index + 1)·0x9E3779B97F4A7C15   (mod 2^64)
//! z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9
//! z ^= z >> 27;  z *= 0x94D049BB133111EB
//! z ^= z >> 31
//! ```
//!
//! which is a bijection of `z`, so distinct stream indices under one base
//! seed never collide. The derived value seeds a ChaCha8 generator.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::density::CdfEvaluator;
use crate::error::{Error, Result};

/// Samples are kept this far away from the endpoints of `[0, 1]`.
pub const ENDPOINT_CLAMP: f64 = 1e-15;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Identifies one independent random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub base_seed: u64,
    pub stream_index: u64,
}

impl SeedSpec {
    pub fn new(base_seed: u64, stream_index: u64) -> Self {
        SeedSpec {
            base_seed,
            stream_index,
        }
    }

    /// The 64-bit generator seed for this stream.
    pub fn derived_seed(&self) -> u64 {
        let z = self
            .base_seed
            .wrapping_add(self.stream_index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA));
        splitmix64_finalize(z)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.derived_seed())
    }
}

fn splitmix64_finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sorted sample of size `n` together with its provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    samples: Vec<f64>,
    seed: SeedSpec,
    model_id: String,
}

impl EmpiricalMeasure {
    /// Wraps externally produced points, sorting them.
    pub fn from_points(mut samples: Vec<f64>, model_id: &str, seed: SeedSpec) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::domain("empirical measure needs at least one point"));
        }
        if let Some(x) = samples.iter().find(|x| !(**x > 0.0 && **x < 1.0)) {
            return Err(Error::domain(format!("sample {x} lies outside (0, 1)")));
        }
        samples.sort_by(f64::total_cmp);
        Ok(EmpiricalMeasure {
            samples,
            seed,
            model_id: model_id.to_string(),
        })
    }

    /// Order statistics `X_(1) ≤ … ≤ X_(n)`.
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn seed(&self) -> SeedSpec {
        self.seed
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    /// Number of samples in the half-open interval `[a, b)`.
    pub fn count_in(&self, a: f64, b: f64) -> usize {
        let lo = self.samples.partition_point(|x| *x < a);
        let hi = self.samples.partition_point(|x| *x < b);
        hi.saturating_sub(lo)
    }

    /// Arithmetic mean of the samples.
    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.len() as f64
    }
}

/// Draws `n` i.i.d. samples by inverse transform and sorts them.
pub fn draw_samples(cdf: &CdfEvaluator, n: usize, seed: SeedSpec) -> Result<EmpiricalMeasure> {
    if n == 0 {
        return Err(Error::domain("sample size n must be at least 1"));
    }
    let mut rng = seed.rng();
    let mut samples: Vec<f64> = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            cdf.quantile(u).clamp(ENDPOINT_CLAMP, 1.0 - ENDPOINT_CLAMP)
        })
        .collect();
    samples.sort_by(f64::total_cmp);
    Ok(EmpiricalMeasure {
        samples,
        seed,
        model_id: cdf.model().id().to_string(),
    })
}

/// Left-continuous empirical quantile: `X_(i)` for `y ∈ ((i-1)/n, i/n]`.
pub fn empirical_quantile(em: &EmpiricalMeasure, y: f64) -> Result<f64> {
    if !(y > 0.0 && y <= 1.0) {
        return Err(Error::domain(format!("y = {y} lies outside (0, 1]")));
    }
    let n = em.len();
    let mut k = (y * n as f64).ceil() as usize;
    // Guard against y·n rounding just above an integer.
    if k > 1 && (k - 1) as f64 / n as f64 >= y {
        k -= 1;
    }
    Ok(em.samples[k.clamp(1, n) - 1])
}

/// Kolmogorov–Smirnov distance `sup_x |F_n(x) - F(x)|`.
pub fn ks_statistic(em: &EmpiricalMeasure, cdf: &CdfEvaluator) -> f64 {
    let n = em.len() as f64;
    em.samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf.cdf(x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

/// Writes sample batches as CSV with header `trial,index,value`.
pub fn write_samples_csv(path: &Path, batches: &[(u64, &EmpiricalMeasure)]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    write_samples(&mut out, batches).map_err(|e| Error::io(path, e))
}

/// Same as [`write_samples_csv`] into any writer.
pub fn write_samples(
    out: &mut impl Write,
    batches: &[(u64, &EmpiricalMeasure)],
) -> std::io::Result<()> {
    writeln!(out, "trial,index,value")?;
    for (trial, em) in batches {
        for (i, x) in em.samples().iter().enumerate() {
            writeln!(out, "{trial},{i},{x:.16e}")?;
        }
    }
    out.flush()
}
