//! Piecewise reweightings of a model density and W∞ between them.
//!
//! A [`ReweightedMeasure`] has density `w(x)·ρ(x)` where `w` is constant on
//! each of finitely many disjoint segments and zero elsewhere. The tilted
//! measures of the partition construction are all of this form.
//!
//! For two such measures `P`, `Q` of equal mass, `W∞` is the supremum of
//! `|P⁻¹(t) - Q⁻¹(t)|`. It is bracketed by best-first subdivision of the
//! mass axis. On a cell `(t_a, t_b]` monotonicity of both quantiles gives
//!
//! ```text
//! U₁ = max(P⁻¹(t_b) - Q⁻¹(t_a+), Q⁻¹(t_b) - P⁻¹(t_a+))
//! ```
//!
//! and, with `X` the x-range covered by the cell, `P(x₁) = Q(x₂) = t` gives
//!
//! ```text
//! |x₁ - x₂| · min_X q  ≤  |Q(x₁) - P(x₁)|  ≤  sup_X |P - Q|  =: S
//! U₂ = S / max(min_X p, min_X q)
//! ```
//!
//! `P - Q` is monotone between segment boundaries, so `S` is a maximum over
//! finitely many points. Cells are split until the largest `min(U₁, U₂)`
//! is within tolerance of the best attained value; the returned number is
//! that largest upper bound, so it never understates the distance.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::Serialize;

use crate::density::CdfEvaluator;

const MAX_SPLITS: usize = 20_000;
const RELATIVE_TOLERANCE: f64 = 1e-6;
const ABSOLUTE_TOLERANCE: f64 = 1e-12;

/// Constant weight on `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WeightedSegment {
    pub start: f64,
    pub end: f64,
    pub weight: f64,
}

/// Measure with density `w(x)·ρ(x)`, `w` piecewise constant.
#[derive(Clone, Debug)]
pub struct ReweightedMeasure<'a> {
    cdf: &'a CdfEvaluator,
    segments: Vec<WeightedSegment>,
    /// `F(start)` of each segment.
    base: Vec<f64>,
    /// Mass of all segments before each index, plus the total.
    cumulative: Vec<f64>,
}

impl<'a> ReweightedMeasure<'a> {
    /// Segments must be disjoint; they are sorted and empty ones dropped.
    pub fn new(cdf: &'a CdfEvaluator, mut segments: Vec<WeightedSegment>) -> Self {
        segments.retain(|s| s.end > s.start);
        segments.sort_by(|a, b| a.start.total_cmp(&b.start));
        debug_assert!(segments.windows(2).all(|w| w[0].end <= w[1].start));
        debug_assert!(segments
            .iter()
            .all(|s| s.weight >= 0.0 && s.weight.is_finite()));
        let base = segments.iter().map(|s| cdf.cdf(s.start)).collect();
        let mut cumulative = Vec::with_capacity(segments.len() + 1);
        cumulative.push(0.0);
        let mut acc = 0.0;
        for s in &segments {
            acc += s.weight * cdf.mass(s.start, s.end);
            cumulative.push(acc);
        }
        ReweightedMeasure {
            cdf,
            segments,
            base,
            cumulative,
        }
    }

    pub fn segments(&self) -> &[WeightedSegment] {
        &self.segments
    }

    pub fn total_mass(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// Mass of `(-∞, x]`.
    pub fn cdf_at(&self, x: f64) -> f64 {
        let i = self.segments.partition_point(|s| s.start <= x);
        if i == 0 {
            return 0.0;
        }
        let s = &self.segments[i - 1];
        if x >= s.end {
            return self.cumulative[i];
        }
        self.cumulative[i - 1] + s.weight * self.cdf.mass(s.start, x)
    }

    /// `inf{x : P(x) ≥ m}`; `m ≤ 0` gives the start of the support.
    pub fn quantile_left(&self, m: f64) -> f64 {
        if m <= 0.0 {
            return self.quantile_right(0.0);
        }
        let i = self.cumulative[1..].partition_point(|c| *c < m);
        if i >= self.segments.len() {
            return self.support_end();
        }
        self.invert(i, m, false)
    }

    /// `inf{x : P(x) > m}`; `m ≥ total` gives the end of the support.
    pub fn quantile_right(&self, m: f64) -> f64 {
        let m = m.max(0.0);
        let i = self.cumulative[1..].partition_point(|c| *c <= m);
        if i >= self.segments.len() {
            return self.support_end();
        }
        self.invert(i, m, true)
    }

    fn invert(&self, i: usize, m: f64, right: bool) -> f64 {
        let s = &self.segments[i];
        let local = ((m - self.cumulative[i]) / s.weight).max(0.0);
        let y = self.base[i] + local;
        let x = if right {
            self.cdf.quantile_right(y)
        } else {
            self.cdf.quantile(y)
        };
        x.clamp(s.start, s.end)
    }

    /// Right end of the last segment carrying mass.
    pub fn support_end(&self) -> f64 {
        self.segments
            .iter()
            .zip(self.cumulative.windows(2))
            .rev()
            .find(|(_, c)| c[1] > c[0])
            .map_or(0.0, |(s, _)| s.end)
    }

    /// Minimum of `w·ρ` over `[a, b]`; zero if any part is uncovered.
    pub fn density_min(&self, a: f64, b: f64) -> f64 {
        let mut cursor = a;
        let mut lo = f64::INFINITY;
        let first = self.segments.partition_point(|s| s.end <= a);
        for s in &self.segments[first..] {
            if s.start >= b {
                break;
            }
            if s.start > cursor {
                return 0.0;
            }
            let (u, v) = (s.start.max(a), s.end.min(b));
            let r = self.cdf.model().range_on(u, v).0;
            lo = lo.min(s.weight * r);
            cursor = s.end;
        }
        if cursor < b {
            return 0.0;
        }
        lo.max(0.0)
    }
}

/// Result of one transport stage.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StageDistance {
    /// Upper bound on the stage's W∞ (exact for atom targets).
    pub displacement: f64,
    /// Mass difference between the two sides before normalisation.
    pub mass_mismatch: f64,
}

/// W∞ between a reweighted measure and equal-mass atoms at the sorted
/// `atoms`, each carrying `atom_mass`.
///
/// Both sides are compared after scaling to the same total mass; the
/// difference in raw masses is reported separately.
pub fn winf_against_atoms(
    p: &ReweightedMeasure<'_>,
    atoms: &[f64],
    atom_mass: f64,
) -> StageDistance {
    let mass = p.total_mass();
    let mass_mismatch = (mass - atoms.len() as f64 * atom_mass).abs();
    if atoms.is_empty() || mass <= 0.0 {
        return StageDistance {
            displacement: 0.0,
            mass_mismatch,
        };
    }
    let c = atoms.len() as f64;
    let displacement = atoms
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let left = p.quantile_right(mass * i as f64 / c);
            let right = p.quantile_left(mass * (i + 1) as f64 / c);
            (x - left).abs().max((x - right).abs())
        })
        .fold(0.0, f64::max);
    StageDistance {
        displacement,
        mass_mismatch,
    }
}

#[derive(Debug)]
struct Cell {
    upper: f64,
    ta: f64,
    tb: f64,
}

impl PartialEq for Cell {
    fn eq(&self, other: &Self) -> bool {
        self.upper.total_cmp(&other.upper) == Ordering::Equal
    }
}

impl Eq for Cell {}

impl PartialOrd for Cell {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cell {
    fn cmp(&self, other: &Self) -> Ordering {
        self.upper.total_cmp(&other.upper)
    }
}

/// Upper bound on W∞ between two reweighted measures of (nearly) equal mass.
pub fn winf_between(p: &ReweightedMeasure<'_>, q: &ReweightedMeasure<'_>) -> StageDistance {
    let (mp, mq) = (p.total_mass(), q.total_mass());
    let mass_mismatch = (mp - mq).abs();
    if mp <= 0.0 || mq <= 0.0 {
        return StageDistance {
            displacement: 0.0,
            mass_mismatch,
        };
    }
    let mut boundaries: Vec<f64> = p
        .segments()
        .iter()
        .chain(q.segments())
        .flat_map(|s| [s.start, s.end])
        .collect();
    boundaries.sort_by(f64::total_cmp);
    boundaries.dedup();

    let pl = |t: f64| p.quantile_left(t * mp);
    let pr = |t: f64| p.quantile_right(t * mp);
    let ql = |t: f64| q.quantile_left(t * mq);
    let qr = |t: f64| q.quantile_right(t * mq);
    let gap = |x: f64| (p.cdf_at(x) / mp - q.cdf_at(x) / mq).abs();

    let attained = |ta: f64, tb: f64| (pl(tb) - ql(tb)).abs().max((pr(ta) - qr(ta)).abs());
    let upper = |ta: f64, tb: f64| {
        let (pa, qa, pb, qb) = (pr(ta), qr(ta), pl(tb), ql(tb));
        let u1 = (pb - qa).max(qb - pa).max(0.0);
        let (xa, xb) = (pa.min(qa), pb.max(qb));
        let lo = boundaries.partition_point(|x| *x <= xa);
        let hi = boundaries.partition_point(|x| *x < xb);
        let s = boundaries[lo..hi.max(lo)]
            .iter()
            .chain([xa, xb].iter())
            .map(|&x| gap(x))
            .fold(0.0, f64::max);
        let dmin = (p.density_min(xa, xb) / mp).max(q.density_min(xa, xb) / mq);
        if dmin > 0.0 {
            u1.min(s / dmin)
        } else {
            u1
        }
    };

    let mut cuts: Vec<f64> = p
        .cumulative
        .iter()
        .map(|c| c / mp)
        .chain(q.cumulative.iter().map(|c| c / mq))
        .map(|t| t.clamp(0.0, 1.0))
        .chain([0.0, 1.0])
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let mut best: f64 = 0.0;
    let mut heap = BinaryHeap::new();
    for w in cuts.windows(2) {
        if w[1] > w[0] {
            best = best.max(attained(w[0], w[1]));
            heap.push(Cell {
                upper: upper(w[0], w[1]),
                ta: w[0],
                tb: w[1],
            });
        }
    }
    let mut settled: f64 = 0.0;
    let mut splits = 0;
    while let Some(top) = heap.peek() {
        if top.upper <= best + ABSOLUTE_TOLERANCE + RELATIVE_TOLERANCE * best
            || splits >= MAX_SPLITS
        {
            break;
        }
        let cell = heap.pop().unwrap();
        let mid = 0.5 * (cell.ta + cell.tb);
        if mid <= cell.ta || mid >= cell.tb {
            settled = settled.max(cell.upper);
            continue;
        }
        best = best.max(attained(cell.ta, mid)).max(attained(mid, cell.tb));
        for (ta, tb) in [(cell.ta, mid), (mid, cell.tb)] {
            heap.push(Cell {
                upper: upper(ta, tb),
                ta,
                tb,
            });
        }
        splits += 1;
    }
    let remaining = heap.peek().map_or(0.0, |c| c.upper);
    StageDistance {
        displacement: best.max(remaining).max(settled),
        mass_mismatch,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    fn seg(start: f64, end: f64, weight: f64) -> WeightedSegment {
        WeightedSegment { start, end, weight }
    }

    #[test]
    fn uniform_reweighting_closed_form() {
        let f = CdfEvaluator::new(catalog::uniform()).unwrap();
        let p = ReweightedMeasure::new(&f, vec![seg(0.0, 1.0, 1.0)]);
        // Mass 0.6 on [0, 1/2), 0.4 on [1/2, 1): the gap t - t/1.2 peaks at t = 0.6.
        let q = ReweightedMeasure::new(&f, vec![seg(0.0, 0.5, 1.2), seg(0.5, 1.0, 0.8)]);
        let d = winf_between(&p, &q);
        assert!((d.displacement - 0.1).abs() < 1e-9, "{d:?}");
        assert!(d.mass_mismatch < 1e-15);
    }

    #[test]
    fn identical_measures() {
        let f = CdfEvaluator::new(catalog::tent()).unwrap();
        let p = ReweightedMeasure::new(&f, vec![seg(0.0, 0.5, 2.0), seg(0.5, 1.0, 2.0)]);
        let q = ReweightedMeasure::new(&f, vec![seg(0.0, 1.0, 1.0)]);
        // Near the zero at 1/2 the quantile has infinite slope, so the
        // bound cannot resolve below sqrt(ulp).
        let d = winf_between(&p, &q);
        assert!(d.displacement < 1e-7, "{d:?}");
    }

    #[test]
    fn tent_tilt_against_dense_grid() {
        let f = CdfEvaluator::new(catalog::tent()).unwrap();
        let p = ReweightedMeasure::new(&f, vec![seg(0.0, 1.0, 1.0)]);
        let q = ReweightedMeasure::new(
            &f,
            vec![seg(0.0, 0.3, 1.1), seg(0.3, 0.7, 0.7), seg(0.7, 1.0, 1.1)],
        );
        let d = winf_between(&p, &q).displacement;
        let mq = q.total_mass();
        let grid = (1..200_000)
            .map(|i| {
                let t = i as f64 / 200_000.0;
                (p.quantile_left(t) - q.quantile_left(t * mq)).abs()
            })
            .fold(0.0, f64::max);
        assert!(d >= grid - 1e-12);
        assert!(d <= grid * (1.0 + 1e-4) + 1e-9, "{d} vs {grid}");
    }

    #[test]
    fn atoms_match_endpoint_formula() {
        let f = CdfEvaluator::new(catalog::uniform()).unwrap();
        let p = ReweightedMeasure::new(&f, vec![seg(0.2, 0.6, 1.0)]);
        let d = winf_against_atoms(&p, &[0.3, 0.5], 0.2);
        assert!((d.displacement - 0.1).abs() < 1e-15);
        assert!(d.mass_mismatch < 1e-15);
    }

    #[test]
    fn gaps_between_segments() {
        let f = CdfEvaluator::new(catalog::uniform()).unwrap();
        let p = ReweightedMeasure::new(&f, vec![seg(0.0, 0.2, 1.0), seg(0.8, 1.0, 1.0)]);
        assert!((p.quantile_left(0.2) - 0.2).abs() < 1e-15);
        assert!((p.quantile_right(0.2) - 0.8).abs() < 1e-15);
        assert_eq!(p.density_min(0.1, 0.9), 0.0);
        assert!((p.cdf_at(0.5) - 0.2).abs() < 1e-15);
    }
}
