//! Piecewise-analytic probability densities on the unit interval.
//!
//! A model is a tiling of `[0, 1]` by pieces, each carrying a closed-form
//! shape (constant, shifted power, or polynomial). Users describe an
//! unnormalized shape; the total mass `Z` is folded into the coefficients at
//! build time so the stored density integrates to one.
//!
//! Zeros of the density are declared with their order `k` and a two-sided
//! envelope on a neighborhood `B = (x - Δ, x + Δ)`:
//!
//! ```text
//! lower·|x - x₀|^k  ≤  ρ(x)  ≤  upper·|x - x₀|^k      for x in B
//! ```
//!
//! Envelope constants and singular coefficients are written in the same
//! (unnormalized) units as the pieces and are rescaled by the same `1/Z`.

mod cdf;
mod form;
mod validate;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use cdf::CdfEvaluator;
pub use form::{Form, MAX_POLYNOMIAL_DEGREE};
pub use validate::{validate_model, TheoremCheck, ValidationReport};

use crate::error::{Error, Result};

/// Tolerance for snapping adjacent piece endpoints together.
pub const TILING_TOLERANCE: f64 = 1e-12;

/// Closed interval `[start, end]` (half-open where context says so).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
}

impl Interval {
    pub fn new(start: f64, end: f64) -> Self {
        Interval { start, end }
    }

    pub fn length(&self) -> f64 {
        (self.end - self.start).max(0.0)
    }

    /// Half-open membership `start <= x < end`.
    pub fn contains_half_open(&self, x: f64) -> bool {
        x >= self.start && x < self.end
    }
}

/// One piece of the tiling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub interval: [f64; 2],
    pub form: Form,
}

impl Piece {
    pub fn start(&self) -> f64 {
        self.interval[0]
    }

    pub fn end(&self) -> f64 {
        self.interval[1]
    }
}

/// A declared zero of the density with its envelope.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZeroPoint {
    pub location: f64,
    pub order: u32,
    /// Envelope constant below the density.
    pub lower: f64,
    /// Envelope constant above the density.
    pub upper: f64,
    /// Half-width of the neighborhood on which the envelope holds.
    pub radius: f64,
}

impl ZeroPoint {
    /// The open neighborhood `(location - radius, location + radius)`.
    pub fn neighborhood(&self) -> Interval {
        Interval::new(self.location - self.radius, self.location + self.radius)
    }
}

/// A declared integrable singularity `coefficient·|x - location|^exponent`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingularPoint {
    pub location: f64,
    pub exponent: f64,
    pub coefficient: f64,
}

/// On-disk description of a density (TOML).
///
/// ```toml
/// id = "tent"
///
/// [[pieces]]
/// interval = [0.0, 1.0]
/// form = { kind = "power", coefficient = 4.0, center = 0.5, exponent = 1.0 }
///
/// [[zeros]]
/// location = 0.5
/// order = 1
/// lower = 4.0
/// upper = 4.0
/// radius = 0.25
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySpec {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub pieces: Vec<Piece>,
    #[serde(default)]
    pub zeros: Vec<ZeroPoint>,
    #[serde(default)]
    pub singulars: Vec<SingularPoint>,
}

impl DensitySpec {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            message: e.message().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, path)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("density spec is always representable in TOML")
    }
}

/// A normalized, structurally valid density on `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityModel {
    id: String,
    pieces: Vec<Piece>,
    zeros: Vec<ZeroPoint>,
    singulars: Vec<SingularPoint>,
    normalization: f64,
    infimum: f64,
    supremum: f64,
    /// Interior monotonicity breaks of each piece.
    breaks: Vec<Vec<f64>>,
}

impl DensityModel {
    /// Checks the tiling and parameters of `spec` and normalizes it.
    pub fn from_spec(spec: &DensitySpec) -> Result<Self> {
        let structural = |msg: String| Error::Structural(format!("{}: {msg}", spec.id));
        if spec.pieces.is_empty() {
            return Err(structural("no pieces".into()));
        }
        let mut pieces = spec.pieces.clone();
        for (i, piece) in pieces.iter().enumerate() {
            let [a, b] = piece.interval;
            if !(a.is_finite() && b.is_finite()) || a >= b {
                return Err(structural(format!(
                    "piece {i} has empty or invalid interval [{a}, {b}]"
                )));
            }
            check_form(&piece.form).map_err(|m| structural(format!("piece {i}: {m}")))?;
        }
        if pieces[0].start().abs() > TILING_TOLERANCE {
            return Err(structural(format!(
                "tiling starts at {} instead of 0",
                pieces[0].start()
            )));
        }
        pieces[0].interval[0] = 0.0;
        for i in 1..pieces.len() {
            let prev_end = pieces[i - 1].end();
            let start = pieces[i].start();
            if (start - prev_end).abs() > TILING_TOLERANCE {
                let kind = if start > prev_end { "gap" } else { "overlap" };
                return Err(structural(format!(
                    "{kind} between pieces {} and {i} ({prev_end} vs {start})",
                    i - 1
                )));
            }
            pieces[i].interval[0] = prev_end;
            if pieces[i].start() >= pieces[i].end() {
                return Err(structural(format!("piece {i} collapses after snapping")));
            }
        }
        let last = pieces.len() - 1;
        if (pieces[last].end() - 1.0).abs() > TILING_TOLERANCE {
            return Err(structural(format!(
                "tiling ends at {} instead of 1",
                pieces[last].end()
            )));
        }
        pieces[last].interval[1] = 1.0;

        for (i, piece) in pieces.iter().enumerate() {
            let (lo, hi) = piece.form.range_on(piece.start(), piece.end());
            let scale = hi.abs().max(1.0);
            if lo < -1e-12 * scale || lo.is_nan() {
                return Err(structural(format!("piece {i} takes negative value {lo}")));
            }
        }

        let total: f64 = pieces.iter().map(|p| p.form.mass(p.start(), p.end())).sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(structural(format!(
                "total mass {total} is not positive and finite"
            )));
        }

        for (i, z) in spec.zeros.iter().enumerate() {
            let ok = z.location > 0.0
                && z.location < 1.0
                && z.order >= 1
                && z.lower > 0.0
                && z.upper >= z.lower
                && z.upper.is_finite()
                && z.radius > 0.0
                && z.radius.is_finite();
            if !ok {
                return Err(structural(format!(
                    "zero {i} needs location in (0,1), order >= 1, 0 < lower <= upper, radius > 0"
                )));
            }
        }
        for (i, s) in spec.singulars.iter().enumerate() {
            let ok = (0.0..=1.0).contains(&s.location)
                && s.exponent > -1.0
                && s.exponent < 0.0
                && s.coefficient > 0.0
                && s.coefficient.is_finite();
            if !ok {
                return Err(structural(format!(
                    "singular {i} needs location in [0,1], exponent in (-1,0), coefficient > 0"
                )));
            }
        }

        let pieces: Vec<Piece> = pieces
            .into_iter()
            .map(|p| Piece {
                interval: p.interval,
                form: p.form.scaled(total),
            })
            .collect();
        let zeros = spec
            .zeros
            .iter()
            .map(|z| ZeroPoint {
                lower: z.lower / total,
                upper: z.upper / total,
                ..*z
            })
            .collect();
        let singulars = spec
            .singulars
            .iter()
            .map(|s| SingularPoint {
                coefficient: s.coefficient / total,
                ..*s
            })
            .collect();

        let mut model = DensityModel {
            id: spec.id.clone(),
            pieces,
            zeros,
            singulars,
            normalization: total,
            infimum: 0.0,
            supremum: 0.0,
            breaks: Vec::new(),
        };
        model.breaks = model
            .pieces
            .iter()
            .map(|p| p.form.monotone_breaks(p.start(), p.end()))
            .collect();
        let (lo, hi) = model.range_on(0.0, 1.0);
        model.infimum = lo.max(0.0);
        model.supremum = hi;
        Ok(model)
    }

    /// Reads and builds a model from a TOML density file.
    pub fn load(path: &Path) -> Result<Self> {
        Self::from_spec(&DensitySpec::load(path)?)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn zeros(&self) -> &[ZeroPoint] {
        &self.zeros
    }

    pub fn singulars(&self) -> &[SingularPoint] {
        &self.singulars
    }

    /// Total mass of the user-supplied shape; coefficients were divided by it.
    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    /// Essential infimum of ρ over `[0, 1]`.
    pub fn infimum(&self) -> f64 {
        self.infimum
    }

    /// Supremum of ρ; `+inf` when a singular piece is present.
    pub fn supremum(&self) -> f64 {
        self.supremum
    }

    /// Largest declared zero order, or 0 when no zeros are declared.
    pub fn max_zero_order(&self) -> u32 {
        self.zeros.iter().map(|z| z.order).max().unwrap_or(0)
    }

    /// Index of the piece containing `x` (half-open, last piece closed).
    pub fn piece_index(&self, x: f64) -> usize {
        let idx = self.pieces.partition_point(|p| p.start() <= x);
        idx.saturating_sub(1).min(self.pieces.len() - 1)
    }

    /// Density at `x`, using the piece whose half-open interval holds `x`.
    pub fn density(&self, x: f64) -> f64 {
        self.pieces[self.piece_index(x)].form.density(x)
    }

    /// Pieces overlapping `[a, b]`, each clipped to it, with the monotonicity
    /// breaks that fall strictly inside the clipped range.
    fn clipped(&self, a: f64, b: f64) -> impl Iterator<Item = (&Form, f64, f64, &[f64])> {
        let first = self.piece_index(a);
        self.pieces[first..]
            .iter()
            .zip(&self.breaks[first..])
            .take_while(move |(p, _)| p.start() < b)
            .filter_map(move |(p, breaks)| {
                let u = p.start().max(a);
                let v = p.end().min(b);
                let lo = breaks.partition_point(|x| *x <= u);
                let hi = breaks.partition_point(|x| *x < v);
                (u < v).then_some((&p.form, u, v, &breaks[lo..hi.max(lo)]))
            })
    }

    /// Minimum and maximum of ρ over the closed interval `[a, b]`, taking
    /// one-sided limits at piece boundaries into account.
    pub fn range_on(&self, a: f64, b: f64) -> (f64, f64) {
        if a >= b {
            let v = self.density(a);
            return (v, v);
        }
        self.clipped(a, b)
            .map(|(form, u, v, breaks)| {
                breaks
                    .iter()
                    .chain([u, v].iter())
                    .map(|&x| form.density(x))
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                        (lo.min(r), hi.max(r))
                    })
            })
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (l, h)| {
                (lo.min(l), hi.max(h))
            })
    }

    /// Subset of `[a, b]` where `keep(ρ(x))` holds, as sorted disjoint
    /// intervals. `levels` must contain every value at which `keep` may
    /// switch; membership is decided at the midpoint between crossings.
    pub fn level_set(
        &self,
        a: f64,
        b: f64,
        levels: &[f64],
        keep: impl Fn(f64) -> bool,
    ) -> Vec<Interval> {
        let mut out: Vec<Interval> = Vec::new();
        for (form, u, v, breaks) in self.clipped(a, b) {
            let mut cuts = vec![u];
            cuts.extend_from_slice(breaks);
            cuts.push(v);
            let mut points = Vec::with_capacity(cuts.len() * 2);
            for w in cuts.windows(2) {
                points.push(w[0]);
                for &level in levels {
                    if let Some(x) = form.solve_level(w[0], w[1], level) {
                        points.push(x);
                    }
                }
            }
            points.push(v);
            points.sort_by(f64::total_cmp);
            points.dedup();
            for w in points.windows(2) {
                let mid = 0.5 * (w[0] + w[1]);
                if w[0] < w[1] && keep(form.density(mid)) {
                    match out.last_mut() {
                        Some(last) if last.end == w[0] => last.end = w[1],
                        _ => out.push(Interval::new(w[0], w[1])),
                    }
                }
            }
        }
        out
    }

    /// Piece boundaries and interior monotonicity breaks, ascending.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = vec![0.0];
        for (p, breaks) in self.pieces.iter().zip(&self.breaks) {
            out.extend_from_slice(breaks);
            out.push(p.end());
        }
        out
    }
}

fn check_form(form: &Form) -> std::result::Result<(), String> {
    match form {
        Form::Constant { value } => {
            if !(value.is_finite() && *value >= 0.0) {
                return Err(format!("constant value {value} must be finite and >= 0"));
            }
        }
        Form::Power {
            coefficient,
            center,
            exponent,
        } => {
            if !(coefficient.is_finite() && *coefficient >= 0.0) {
                return Err(format!(
                    "power coefficient {coefficient} must be finite and >= 0"
                ));
            }
            if !center.is_finite() {
                return Err("power center must be finite".into());
            }
            if !(exponent.is_finite() && *exponent > -1.0) {
                return Err(format!("power exponent {exponent} must exceed -1"));
            }
        }
        Form::Polynomial { coefficients } => {
            if coefficients.is_empty() || coefficients.len() > MAX_POLYNOMIAL_DEGREE + 1 {
                return Err(format!(
                    "polynomial needs 1..={} coefficients",
                    MAX_POLYNOMIAL_DEGREE + 1
                ));
            }
            if coefficients.iter().any(|c| !c.is_finite()) {
                return Err("polynomial coefficients must be finite".into());
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    #[test]
    fn normalization_folds_into_coefficients() {
        let model = catalog::quadratic_zero();
        assert!((model.normalization() - 1.0 / 12.0).abs() < 1e-15);
        assert!((model.density(0.0) - 3.0).abs() < 1e-12);
        assert!((model.zeros()[0].lower - 12.0).abs() < 1e-12);
    }

    #[test]
    fn tiling_errors_are_structural() {
        let mut spec = catalog::spec("uniform").unwrap();
        spec.pieces[0].interval = [0.0, 0.9];
        let err = DensityModel::from_spec(&spec).unwrap_err();
        assert_eq!(err.kind(), "structural");

        let spec = DensitySpec {
            id: "overlap".into(),
            description: None,
            pieces: vec![
                Piece {
                    interval: [0.0, 0.6],
                    form: Form::Constant { value: 1.0 },
                },
                Piece {
                    interval: [0.5, 1.0],
                    form: Form::Constant { value: 1.0 },
                },
            ],
            zeros: vec![],
            singulars: vec![],
        };
        let err = DensityModel::from_spec(&spec).unwrap_err();
        assert!(err.to_string().contains("overlap"), "{err}");
    }

    #[test]
    fn negative_polynomial_rejected() {
        let spec = DensitySpec {
            id: "neg".into(),
            description: None,
            pieces: vec![Piece {
                interval: [0.0, 1.0],
                form: Form::Polynomial {
                    coefficients: vec![1.0, -3.0],
                },
            }],
            zeros: vec![],
            singulars: vec![],
        };
        assert_eq!(
            DensityModel::from_spec(&spec).unwrap_err().kind(),
            "structural"
        );
    }

    #[test]
    fn level_sets_of_tent() {
        let model = catalog::tent();
        let set = model.level_set(0.0, 1.0, &[1.0], |r| r < 1.0);
        assert_eq!(set.len(), 1);
        assert!((set[0].start - 0.25).abs() < 1e-15);
        assert!((set[0].end - 0.75).abs() < 1e-15);
    }

    #[test]
    fn bounds_of_catalog_models() {
        assert_eq!(catalog::uniform().infimum(), 1.0);
        assert_eq!(catalog::tent().infimum(), 0.0);
        assert_eq!(catalog::tent().supremum(), 2.0);
        assert!(catalog::inverse_sqrt().supremum().is_infinite());
        assert!((catalog::inverse_sqrt().infimum() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn toml_round_trip() {
        for name in catalog::NAMES {
            let spec = catalog::spec(name).unwrap();
            let text = spec.to_toml_string();
            let back = DensitySpec::from_toml_str(&text, Path::new("mem")).unwrap();
            assert_eq!(spec, back);
        }
    }
}
