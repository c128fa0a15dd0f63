//! Partition-and-tilt transport certificates.
//!
//! The unit interval is cut into blocks: the declared zero neighborhoods
//! `B_i` and the connected pieces of what remains. Inside a zero
//! neighborhood of order `k` the density is sliced into layers
//!
//! ```text
//! A_0 = {ρ > 1} ∩ B_i
//! A_j = {(j+1)^{-β} < ρ ≤ j^{-β}} ∩ B_i          j ≥ 1
//! J₀  = ⌊(n / ln n)^{k / (2β(k+1))}⌋ - 1
//! k_n = ⌊log₂(n·ν(A_j) / (10 ln n))⌋  (floored at 0)
//! ```
//!
//! Layers are listed explicitly up to the first index `J` (at least `J₀`)
//! whose sublevel set `{ρ ≤ J^{-β}} ∩ B_i` has expected sample count below
//! one; everything below that level is lumped into a single tail layer.
//!
//! The model ν is then tilted blockwise to ν̃ (block masses of νₙ) and
//! layerwise to ν̄ (layer masses of νₙ). Layers below `J₀` are further
//! refined by dyadic families of equal-mass cells, giving intermediate
//! measures μ_0 = ν̄|A_j, …, μ_{k_n}. Every step moves mass only inside sets
//! on which both sides agree, so the chain
//!
//! ```text
//! W∞(ν, νₙ) ≤ W∞(ν, ν̃) + max_b W∞(ν̃|_b, νₙ|_b)
//! W∞(ν̃|_B, νₙ|_B) ≤ W∞(ν̃|_B, ν̄|_B) + max_j W∞(ν̄|_{A_j}, νₙ|_{A_j})
//! W∞(ν̄|_{A_j}, νₙ|_{A_j}) ≤ Σ_k max_{Q ∈ F_{k-1}} W∞(μ_{k-1}|_Q, μ_k|_Q)
//!                           + max_{Q ∈ F_{k_n}} W∞(μ_{k_n}|_Q, νₙ|_Q)
//! ```
//!
//! bounds the optimal distance by a sum of per-cell monotone rearrangements.

mod certificate;

use serde::Serialize;

pub use certificate::{
    assemble_certificate, certify, write_cells_csv, BlockBound, CellRecord, LayerBound, Stage,
    TransportCertificate,
};

use crate::density::{CdfEvaluator, Interval};
use crate::error::{Error, Result};
use crate::sampling::EmpiricalMeasure;

/// Layer exponent used when none is given.
pub const DEFAULT_BETA: f64 = 3.0;
/// Smallest sample size for which the construction is defined.
pub const MIN_SAMPLE_SIZE: usize = 16;
/// Largest accepted mass mismatch between the two sides of a stage.
pub const MASS_TOLERANCE: f64 = 1e-8;

const MAX_LAYER_SEARCH: u32 = 1_000_000;

/// What a block of the partition is.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BlockKind {
    /// Neighborhood of a declared zero.
    Zero {
        zero_index: usize,
        location: f64,
        order: u32,
        /// Envelope constant below the density.
        lower: f64,
    },
    /// A connected piece away from the zeros.
    Regular,
}

/// One density layer inside a zero neighborhood.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Layer {
    /// Layer index `j`; for the lumped tail, the first lumped index.
    pub index: u32,
    /// True for the tail layer `{ρ ≤ index^{-β}} ∩ B`.
    pub lumped: bool,
    /// Sorted disjoint intervals making up the layer.
    pub intervals: Vec<Interval>,
    pub model_mass: f64,
    /// Largest dyadic depth the occupancy rule allows.
    pub max_depth: u32,
    /// Transported directly to the atoms (`j ≥ J₀`) rather than refined.
    pub direct: bool,
    /// Length of the smallest interval containing the layer.
    pub diameter: f64,
}

/// One block of the partition.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Block {
    pub interval: Interval,
    pub kind: BlockKind,
    pub model_mass: f64,
    /// `J₀` for zero blocks.
    pub cutoff: Option<u32>,
    /// Diameter of the union of layers with index ≥ `J₀`.
    pub tail_diameter: Option<f64>,
    pub layers: Vec<Layer>,
}

/// Blocks and layers for one `(model, n, β)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PartitionScheme {
    pub beta: f64,
    /// Sample size the layout was built for.
    pub n: f64,
    pub blocks: Vec<Block>,
}

/// Builds the partition for an empirical measure of size `em.len()`.
pub fn build_partition(
    cdf: &CdfEvaluator,
    em: &EmpiricalMeasure,
    beta: f64,
) -> Result<PartitionScheme> {
    if em.len() < MIN_SAMPLE_SIZE {
        return Err(Error::domain(format!(
            "the construction needs n >= {MIN_SAMPLE_SIZE}, got {}",
            em.len()
        )));
    }
    partition_layout(cdf, em.len() as f64, beta)
}

/// Sample-free partition for a (possibly huge, non-integer) sample size.
pub fn partition_layout(cdf: &CdfEvaluator, n: f64, beta: f64) -> Result<PartitionScheme> {
    if !(beta > 2.0 && beta.is_finite()) {
        return Err(Error::domain(format!(
            "layer exponent beta = {beta} must exceed 2"
        )));
    }
    if !(n >= MIN_SAMPLE_SIZE as f64 && n.is_finite()) {
        return Err(Error::domain(format!(
            "the construction needs n >= {MIN_SAMPLE_SIZE}"
        )));
    }
    let model = cdf.model();
    let mut zeros: Vec<(usize, _)> = model.zeros().iter().copied().enumerate().collect();
    zeros.sort_by(|a, b| a.1.location.total_cmp(&b.1.location));
    let mut cursor = 0.0;
    for (_, z) in &zeros {
        let nb = z.neighborhood();
        if nb.start < cursor || nb.end > 1.0 {
            return Err(Error::domain(
                "zero neighborhoods must be disjoint and inside (0, 1)",
            ));
        }
        cursor = nb.end;
    }

    // Identically-zero pieces become their own (massless) blocks.
    let mut splits: Vec<f64> = Vec::new();
    for p in model.pieces() {
        if p.form.range_on(p.start(), p.end()).1 <= 0.0 {
            splits.push(p.start());
            splits.push(p.end());
        }
    }

    let mut blocks = Vec::new();
    let push_regular = |blocks: &mut Vec<Block>, a: f64, b: f64| {
        let mut cuts = vec![a];
        cuts.extend(splits.iter().copied().filter(|x| *x > a && *x < b));
        cuts.push(b);
        cuts.dedup();
        for w in cuts.windows(2) {
            blocks.push(Block {
                interval: Interval::new(w[0], w[1]),
                kind: BlockKind::Regular,
                model_mass: cdf.mass(w[0], w[1]),
                cutoff: None,
                tail_diameter: None,
                layers: Vec::new(),
            });
        }
    };
    let mut cursor = 0.0;
    for (zero_index, z) in &zeros {
        let nb = z.neighborhood();
        if nb.start > cursor {
            push_regular(&mut blocks, cursor, nb.start);
        }
        blocks.push(zero_block(cdf, *zero_index, z, n, beta)?);
        cursor = nb.end;
    }
    if cursor < 1.0 {
        push_regular(&mut blocks, cursor, 1.0);
    }
    Ok(PartitionScheme { beta, n, blocks })
}

/// `⌊(n / ln n)^{k/(2β(k+1))}⌋ - 1`.
pub fn layer_cutoff(n: f64, order: u32, beta: f64) -> u32 {
    let k = order as f64;
    let v = (n / n.ln()).powf(k / (2.0 * beta * (k + 1.0))).floor();
    (v - 1.0).max(0.0) as u32
}

/// `⌊log₂(n·mass / (10 ln n))⌋`, or 0 when the argument is below 2.
pub fn max_dyadic_depth(n: f64, mass: f64) -> u32 {
    let occupancy = n * mass / (10.0 * n.ln());
    if occupancy >= 2.0 {
        occupancy.log2().floor() as u32
    } else {
        0
    }
}

fn hull_length(intervals: &[Interval]) -> f64 {
    match (intervals.first(), intervals.last()) {
        (Some(a), Some(b)) => b.end - a.start,
        _ => 0.0,
    }
}

fn mass_of(cdf: &CdfEvaluator, intervals: &[Interval]) -> f64 {
    intervals.iter().map(|iv| cdf.mass(iv.start, iv.end)).sum()
}

fn zero_block(
    cdf: &CdfEvaluator,
    zero_index: usize,
    z: &crate::density::ZeroPoint,
    n: f64,
    beta: f64,
) -> Result<Block> {
    let model = cdf.model();
    let nb = z.neighborhood();
    let cutoff = layer_cutoff(n, z.order, beta);
    let level = |j: u32| (j as f64).powf(-beta);
    let sublevel = |j: u32| model.level_set(nb.start, nb.end, &[level(j)], |r| r <= level(j));

    let mut last = cutoff.max(1);
    let mut j = 1;
    loop {
        if n * mass_of(cdf, &sublevel(j)) < 1.0 {
            last = last.max(j);
            break;
        }
        j += 1;
        if j > MAX_LAYER_SEARCH {
            return Err(Error::domain(format!(
                "layer search near zero at {} did not terminate",
                z.location
            )));
        }
    }

    let mut layers = Vec::new();
    let mut push = |index: u32, lumped: bool, intervals: Vec<Interval>| {
        if intervals.is_empty() {
            return;
        }
        let model_mass = mass_of(cdf, &intervals);
        layers.push(Layer {
            index,
            lumped,
            diameter: hull_length(&intervals),
            max_depth: max_dyadic_depth(n, model_mass),
            direct: index >= cutoff,
            model_mass,
            intervals,
        });
    };
    push(
        0,
        false,
        model.level_set(nb.start, nb.end, &[1.0], |r| r > 1.0),
    );
    for j in 1..last {
        let (lo, hi) = (level(j + 1), level(j));
        push(
            j,
            false,
            model.level_set(nb.start, nb.end, &[lo, hi], |r| lo < r && r <= hi),
        );
    }
    push(last, true, sublevel(last));

    let tail: Vec<Interval> = layers
        .iter()
        .filter(|l| l.index >= cutoff)
        .flat_map(|l| l.intervals.iter().copied())
        .collect();
    let tail_diameter = if tail.is_empty() {
        0.0
    } else {
        let lo = tail.iter().map(|iv| iv.start).fold(f64::INFINITY, f64::min);
        let hi = tail
            .iter()
            .map(|iv| iv.end)
            .fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    };

    Ok(Block {
        interval: nb,
        kind: BlockKind::Zero {
            zero_index,
            location: z.location,
            order: z.order,
            lower: z.lower,
        },
        model_mass: cdf.mass(nb.start, nb.end),
        cutoff: Some(cutoff),
        tail_diameter: Some(tail_diameter),
        layers,
    })
}

/// Tilt of one block or layer: `ratio = count / (n·mass) = 1 + ε`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Tilt {
    pub model_mass: f64,
    pub count: usize,
    /// `νₙ(S)/ν(S) - 1`.
    pub excess: f64,
}

impl Tilt {
    fn new(model_mass: f64, count: usize, n: usize) -> Self {
        Tilt {
            model_mass,
            count,
            excess: count as f64 / (n as f64 * model_mass) - 1.0,
        }
    }

    /// Density multiplier `1 + ε`.
    pub fn weight(&self) -> f64 {
        1.0 + self.excess
    }

    /// Mass of the tilted measure on the set, `(1 + ε)·ν(S)`.
    pub fn tilted_mass(&self) -> f64 {
        self.weight() * self.model_mass
    }
}

/// Blockwise (ν̃) and layerwise (ν̄) tilts of the model.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TiltedMeasures {
    pub n: usize,
    /// ε per block.
    pub blocks: Vec<Tilt>,
    /// δ per layer, indexed like the scheme's blocks and layers.
    pub layers: Vec<Vec<Tilt>>,
}

/// Number of samples in the union of sorted disjoint half-open intervals.
pub(crate) fn count_in(em: &EmpiricalMeasure, intervals: &[Interval]) -> usize {
    intervals
        .iter()
        .map(|iv| em.count_in(iv.start, iv.end))
        .sum()
}

/// Computes ε per block and δ per layer from exact interval masses.
pub fn build_tilted_measures(
    scheme: &PartitionScheme,
    cdf: &CdfEvaluator,
    em: &EmpiricalMeasure,
) -> Result<TiltedMeasures> {
    let n = em.len();
    if (scheme.n - n as f64).abs() > 0.0 {
        return Err(Error::domain(format!(
            "partition was built for n = {} but the sample has {n} points",
            scheme.n
        )));
    }
    let mut blocks = Vec::with_capacity(scheme.blocks.len());
    let mut layers = Vec::with_capacity(scheme.blocks.len());
    for block in &scheme.blocks {
        let iv = block.interval;
        let mass = cdf.mass(iv.start, iv.end);
        if mass <= 0.0 {
            return Err(Error::DegenerateBlock {
                start: iv.start,
                end: iv.end,
            });
        }
        blocks.push(Tilt::new(mass, em.count_in(iv.start, iv.end), n));
        let mut per_layer = Vec::with_capacity(block.layers.len());
        for layer in &block.layers {
            let mass = mass_of(cdf, &layer.intervals);
            if mass <= 0.0 {
                return Err(Error::DegenerateBlock {
                    start: layer.intervals[0].start,
                    end: layer.intervals.last().unwrap().end,
                });
            }
            per_layer.push(Tilt::new(mass, count_in(em, &layer.intervals), n));
        }
        layers.push(per_layer);
    }
    Ok(TiltedMeasures { n, blocks, layers })
}

/// One cell of a dyadic family: a slice of a layer with prescribed mass.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DyadicCell {
    pub depth: u32,
    pub index: usize,
    pub intervals: Vec<Interval>,
    pub model_mass: f64,
}

/// The `2^depth` cells of equal model mass (hence equal ν̄ mass) obtained
/// by repeatedly bisecting the layer by mass in left-to-right order.
pub fn dyadic_family(cdf: &CdfEvaluator, layer: &Layer, depth: u32) -> Result<Vec<DyadicCell>> {
    if depth > layer.max_depth {
        return Err(Error::Depth {
            requested: depth,
            max: layer.max_depth,
        });
    }
    Ok(dyadic_cells(cdf, &layer.intervals, depth))
}

/// Position in a union of intervals: `(interval index, x)`.
type Position = (usize, f64);

pub(crate) fn dyadic_cells(
    cdf: &CdfEvaluator,
    intervals: &[Interval],
    depth: u32,
) -> Vec<DyadicCell> {
    let masses: Vec<f64> = intervals
        .iter()
        .map(|iv| cdf.mass(iv.start, iv.end))
        .collect();
    let mut cumulative = vec![0.0];
    for m in &masses {
        cumulative.push(cumulative.last().unwrap() + m);
    }
    let total = *cumulative.last().unwrap();
    // Mass coordinate → position; at a boundary between intervals, `next`
    // picks the start of the following interval.
    let locate = |s: f64, next: bool| -> Position {
        let l = if next {
            cumulative[1..].partition_point(|c| *c <= s)
        } else {
            cumulative[1..].partition_point(|c| *c < s)
        }
        .min(intervals.len() - 1);
        let iv = intervals[l];
        let local = s - cumulative[l];
        let x = if local <= 0.0 {
            iv.start
        } else if local >= masses[l] {
            iv.end
        } else {
            cdf.quantile(cdf.cdf(iv.start) + local)
                .clamp(iv.start, iv.end)
        };
        (l, x)
    };
    let count = 1usize << depth;
    let last = intervals.len() - 1;
    let boundary = |i: usize| total * i as f64 / count as f64;
    (0..count)
        .map(|i| {
            let (ls, xs) = if i == 0 {
                (0, intervals[0].start)
            } else {
                locate(boundary(i), true)
            };
            let (le, xe) = if i + 1 == count {
                (last, intervals[last].end)
            } else {
                locate(boundary(i + 1), false)
            };
            let mut pieces = Vec::new();
            if ls == le {
                pieces.push(Interval::new(xs, xe));
            } else {
                pieces.push(Interval::new(xs, intervals[ls].end));
                pieces.extend_from_slice(&intervals[ls + 1..le]);
                pieces.push(Interval::new(intervals[le].start, xe));
            }
            pieces.retain(|iv| iv.end > iv.start);
            DyadicCell {
                depth,
                index: i,
                model_mass: mass_of(cdf, &pieces),
                intervals: pieces,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::sampling::{draw_samples, SeedSpec};

    #[test]
    fn uniform_single_block() {
        let f = CdfEvaluator::new(catalog::uniform()).unwrap();
        let s = partition_layout(&f, 100.0, DEFAULT_BETA).unwrap();
        assert_eq!(s.blocks.len(), 1);
        assert!(s.blocks[0].layers.is_empty());
        assert_eq!(s.blocks[0].kind, BlockKind::Regular);
    }

    #[test]
    fn tent_layer_edges() {
        let f = CdfEvaluator::new(catalog::tent()).unwrap();
        let n = 16384.0;
        let s = partition_layout(&f, n, 3.0).unwrap();
        assert_eq!(s.blocks.len(), 3);
        let zero = &s.blocks[1];
        let expect = ((n / f64::ln(n)).powf(1.0 / 12.0)).floor() as u32 - 1;
        assert_eq!(zero.cutoff, Some(expect));
        for layer in zero.layers.iter().filter(|l| !l.lumped && l.index > 0) {
            let j = layer.index as f64;
            let outer = 1.0 / (4.0 * j.powi(3));
            let inner = 1.0 / (4.0 * (j + 1.0).powi(3));
            assert_eq!(layer.intervals.len(), 2);
            assert!((layer.intervals[0].start - (0.5 - outer)).abs() < 1e-15);
            assert!((layer.intervals[0].end - (0.5 - inner)).abs() < 1e-15);
            assert!((layer.intervals[1].start - (0.5 + inner)).abs() < 1e-15);
            assert!((layer.intervals[1].end - (0.5 + outer)).abs() < 1e-15);
        }
        let tail = zero.layers.last().unwrap();
        assert!(tail.lumped);
        assert!(n * tail.model_mass < 1.0);
    }

    #[test]
    fn beta_must_exceed_two() {
        let f = CdfEvaluator::new(catalog::tent()).unwrap();
        assert_eq!(
            partition_layout(&f, 1024.0, 2.0).unwrap_err().kind(),
            "domain"
        );
    }

    #[test]
    fn layers_tile_zero_blocks() {
        for name in ["tent", "quadratic-zero", "mixed"] {
            let f = CdfEvaluator::new(catalog::model(name).unwrap()).unwrap();
            let s = partition_layout(&f, 4096.0, 2.5).unwrap();
            let total: f64 = s.blocks.iter().map(|b| b.model_mass).sum();
            assert!((total - 1.0).abs() < 1e-14, "{name}");
            for b in s.blocks.iter().filter(|b| !b.layers.is_empty()) {
                let mut ivs: Vec<Interval> =
                    b.layers.iter().flat_map(|l| l.intervals.clone()).collect();
                ivs.sort_by(|a, b| a.start.total_cmp(&b.start));
                assert_eq!(ivs.first().unwrap().start, b.interval.start);
                assert_eq!(ivs.last().unwrap().end, b.interval.end);
                assert!(ivs.windows(2).all(|w| w[0].end == w[1].start), "{name}");
            }
        }
    }

    #[test]
    fn tilts_match_counts() {
        let f = CdfEvaluator::new(catalog::tent()).unwrap();
        let em = draw_samples(&f, 1024, SeedSpec::new(11, 0)).unwrap();
        let s = build_partition(&f, &em, 3.0).unwrap();
        let t = build_tilted_measures(&s, &f, &em).unwrap();
        let total: f64 = t.blocks.iter().map(|b| b.tilted_mass()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        for (b, tilt) in s.blocks.iter().zip(&t.blocks) {
            let count = em
                .samples()
                .iter()
                .filter(|x| **x >= b.interval.start && **x < b.interval.end)
                .count();
            assert_eq!(tilt.count, count);
            assert!((tilt.tilted_mass() - count as f64 / 1024.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gap_blocks_are_degenerate() {
        let f = CdfEvaluator::force_accept(catalog::gap());
        let em = draw_samples(&f, 101, SeedSpec::new(1, 0)).unwrap();
        let s = build_partition(&f, &em, 3.0).unwrap();
        let err = build_tilted_measures(&s, &f, &em).unwrap_err();
        assert_eq!(err.kind(), "degenerate-block");
    }

    #[test]
    fn dyadic_cells_uniform() {
        let f = CdfEvaluator::new(catalog::uniform()).unwrap();
        let cells = dyadic_cells(&f, &[Interval::new(0.2, 0.6)], 2);
        assert_eq!(cells.len(), 4);
        for (i, c) in cells.iter().enumerate() {
            assert_eq!(c.intervals.len(), 1);
            assert!((c.intervals[0].start - (0.2 + 0.1 * i as f64)).abs() < 1e-15);
            assert!((c.model_mass - 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn dyadic_cells_span_gaps() {
        let f = CdfEvaluator::new(catalog::tent()).unwrap();
        let layer = [Interval::new(0.25, 0.45), Interval::new(0.55, 0.75)];
        let cells = dyadic_cells(&f, &layer, 1);
        assert_eq!(cells[0].intervals, vec![layer[0]]);
        assert_eq!(cells[1].intervals, vec![layer[1]]);
        let cells = dyadic_cells(&f, &layer, 3);
        let mass: f64 = cells.iter().map(|c| c.model_mass).sum();
        assert!((mass - mass_of(&f, &layer)).abs() < 1e-15);
        for c in &cells {
            assert!((c.model_mass - mass / 8.0).abs() < 1e-12);
        }
    }

    #[test]
    fn depth_is_capped() {
        let f = CdfEvaluator::new(catalog::tent()).unwrap();
        let s = partition_layout(&f, 1024.0, 3.0).unwrap();
        let layer = &s.blocks[1].layers[0];
        let err = dyadic_family(&f, layer, layer.max_depth + 1).unwrap_err();
        assert_eq!(err.kind(), "depth");
    }
}
