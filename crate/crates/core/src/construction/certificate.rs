//! Composition of per-stage monotone rearrangements into one certificate.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::{
    build_partition, build_tilted_measures, count_in, dyadic_cells, BlockKind, PartitionScheme,
    TiltedMeasures, MASS_TOLERANCE,
};
use crate::bounds::rate_shape;
use crate::density::{CdfEvaluator, Interval};
use crate::error::{Error, Result};
use crate::sampling::EmpiricalMeasure;
use crate::transport::{
    winf_against_atoms, winf_between, winf_empirical, ReweightedMeasure, StageDistance,
    WeightedSegment,
};

// Slack for comparing rigorous upper bounds against exact values.
const COMPARISON_SLACK: f64 = 1e-9;

/// Which transport step a cell record belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// ν → ν̃ over the whole interval.
    Tilt,
    /// ν̃|_b → νₙ|_b on a block without layers.
    Regular,
    /// ν̃|_B → ν̄|_B on a zero neighborhood.
    BlockToLayers,
    /// μ_{k-1}|_Q → μ_k|_Q on a dyadic cell.
    Refine,
    /// Last step onto the sample atoms inside a layer or dyadic cell.
    Atoms,
}

impl Stage {
    fn as_str(self) -> &'static str {
        match self {
            Stage::Tilt => "tilt",
            Stage::Regular => "regular",
            Stage::BlockToLayers => "block_to_layers",
            Stage::Refine => "refine",
            Stage::Atoms => "atoms",
        }
    }
}

/// Displacement of one monotone rearrangement on one piece.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellRecord {
    pub stage: Stage,
    pub block: Option<usize>,
    pub layer: Option<u32>,
    pub depth: Option<u32>,
    pub cell: Option<usize>,
    /// Hull of the piece.
    pub start: f64,
    pub end: f64,
    pub model_mass: f64,
    pub count: usize,
    pub displacement: f64,
    pub mass_mismatch: f64,
}

/// Stage bounds for one layer.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LayerBound {
    pub index: u32,
    pub lumped: bool,
    pub direct: bool,
    pub max_depth: u32,
    pub model_mass: f64,
    pub count: usize,
    pub delta: f64,
    pub diameter: f64,
    /// `max_Q W∞(μ_{k-1}|_Q, μ_k|_Q)` for `k = 1..=max_depth` (refined layers).
    pub refine: Vec<f64>,
    /// `refine[k-1] / ((j+1)^β·sqrt(ν(A_j) ln n / (2^{k-1} n)))`.
    pub refine_constants: Vec<f64>,
    /// Last stage onto the atoms.
    pub atoms: f64,
    /// Sum of the chain for this layer.
    pub chain: f64,
    /// Exact `W∞(ν̄|_A, νₙ|_A)` by one monotone rearrangement.
    pub exact: f64,
}

/// Stage bounds for one block.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockBound {
    pub index: usize,
    pub kind: BlockKind,
    pub start: f64,
    pub end: f64,
    pub model_mass: f64,
    pub count: usize,
    pub epsilon: f64,
    pub cutoff: Option<u32>,
    /// `W∞(ν̃|_B, ν̄|_B)` for zero neighborhoods.
    pub to_layers: Option<f64>,
    pub layers: Vec<LayerBound>,
    /// Upper bound on `W∞(ν̃|_b, νₙ|_b)`.
    pub bound: f64,
}

/// Certified upper bound on `W∞(ν, νₙ)` with its decomposition.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransportCertificate {
    pub model_id: String,
    pub n: usize,
    pub beta: f64,
    /// Upper bound on `W∞(ν, ν̃)`.
    pub tilt: f64,
    /// `tilt·λ / (max_b |ε_b|·sup ρ)` when `0 < λ` and `sup ρ < ∞`.
    pub tilt_ratio: Option<f64>,
    pub blocks: Vec<BlockBound>,
    /// `tilt + max_b bound_b`.
    pub max_displacement: f64,
    pub exact_winf: f64,
    /// `max_displacement / exact_winf`.
    pub ratio: f64,
    /// Exact `W∞(ν̃, νₙ)`.
    pub tilted_to_empirical: f64,
    /// Exact `W∞(ν̄, νₙ)`.
    pub layered_to_empirical: f64,
    /// `exact_winf ≤ tilt + tilted_to_empirical`.
    pub triangle_holds: bool,
    /// `layered_to_empirical ≤ max` of the per-layer exact distances.
    pub subadditivity_holds: bool,
    pub max_mass_mismatch: f64,
    pub max_order: u32,
    pub rate_shape: f64,
    pub rate_constant: f64,
    /// `rate_constant · rate_shape`.
    pub theoretical_rate: f64,
    /// `max_displacement / rate_shape`.
    pub implied_constant: f64,
    #[serde(skip)]
    pub cells: Vec<CellRecord>,
}

fn segments(intervals: &[Interval], weight: f64) -> Vec<WeightedSegment> {
    intervals
        .iter()
        .map(|iv| WeightedSegment {
            start: iv.start,
            end: iv.end,
            weight,
        })
        .collect()
}

fn atoms_in(em: &EmpiricalMeasure, intervals: &[Interval]) -> Vec<f64> {
    let xs = em.samples();
    let mut out = Vec::new();
    for iv in intervals {
        let lo = xs.partition_point(|x| *x < iv.start);
        let hi = xs.partition_point(|x| *x < iv.end);
        out.extend_from_slice(&xs[lo..hi]);
    }
    out
}

struct Recorder {
    cells: Vec<CellRecord>,
    max_mismatch: f64,
}

impl Recorder {
    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        stage: Stage,
        block: Option<usize>,
        layer: Option<u32>,
        depth: Option<u32>,
        cell: Option<usize>,
        intervals: &[Interval],
        model_mass: f64,
        count: usize,
        d: StageDistance,
    ) -> Result<f64> {
        if d.mass_mismatch > MASS_TOLERANCE {
            return Err(Error::Certification(format!(
                "{} stage mass mismatch {:.3e} on [{}, {}]",
                stage.as_str(),
                d.mass_mismatch,
                intervals.first().map_or(0.0, |iv| iv.start),
                intervals.last().map_or(0.0, |iv| iv.end),
            )));
        }
        self.max_mismatch = self.max_mismatch.max(d.mass_mismatch);
        self.cells.push(CellRecord {
            stage,
            block,
            layer,
            depth,
            cell,
            start: intervals.first().map_or(0.0, |iv| iv.start),
            end: intervals.last().map_or(0.0, |iv| iv.end),
            model_mass,
            count,
            displacement: d.displacement,
            mass_mismatch: d.mass_mismatch,
        });
        Ok(d.displacement)
    }
}

/// Composes all stages and compares the result with the exact distance.
///
/// `rate_constant` scales the theoretical rate; the rate shape uses the
/// largest declared zero order (0 when there are none).
pub fn assemble_certificate(
    scheme: &PartitionScheme,
    tilted: &TiltedMeasures,
    cdf: &CdfEvaluator,
    em: &EmpiricalMeasure,
    rate_constant: f64,
) -> Result<TransportCertificate> {
    let n = em.len();
    let nf = n as f64;
    let atom_mass = 1.0 / nf;
    let ln_n = nf.ln();
    let mut rec = Recorder {
        cells: Vec::new(),
        max_mismatch: 0.0,
    };

    let full = [Interval::new(0.0, 1.0)];
    let mut model_segments = Vec::new();
    let mut tilted_segments = Vec::new();
    let mut layered_segments = Vec::new();
    for (b, block) in scheme.blocks.iter().enumerate() {
        let iv = [block.interval];
        model_segments.extend(segments(&iv, 1.0));
        tilted_segments.extend(segments(&iv, tilted.blocks[b].weight()));
        if block.layers.is_empty() {
            layered_segments.extend(segments(&iv, tilted.blocks[b].weight()));
        }
        for (layer, tilt) in block.layers.iter().zip(&tilted.layers[b]) {
            layered_segments.extend(segments(&layer.intervals, tilt.weight()));
        }
    }
    let model_measure = ReweightedMeasure::new(cdf, model_segments);
    let tilted_measure = ReweightedMeasure::new(cdf, tilted_segments);
    let layered_measure = ReweightedMeasure::new(cdf, layered_segments);

    let tilt = rec.push(
        Stage::Tilt,
        None,
        None,
        None,
        None,
        &full,
        1.0,
        n,
        winf_between(&model_measure, &tilted_measure),
    )?;

    let mut blocks = Vec::with_capacity(scheme.blocks.len());
    let mut per_layer_exact: f64 = 0.0;
    for (b, block) in scheme.blocks.iter().enumerate() {
        let bt = &tilted.blocks[b];
        let iv = [block.interval];
        let block_tilted = ReweightedMeasure::new(cdf, segments(&iv, bt.weight()));
        let mut bound = BlockBound {
            index: b,
            kind: block.kind.clone(),
            start: block.interval.start,
            end: block.interval.end,
            model_mass: bt.model_mass,
            count: bt.count,
            epsilon: bt.excess,
            cutoff: block.cutoff,
            to_layers: None,
            layers: Vec::new(),
            bound: 0.0,
        };
        if block.layers.is_empty() {
            let atoms = atoms_in(em, &iv);
            let d = winf_against_atoms(&block_tilted, &atoms, atom_mass);
            bound.bound = rec.push(
                Stage::Regular,
                Some(b),
                None,
                None,
                None,
                &iv,
                bt.model_mass,
                bt.count,
                d,
            )?;
            per_layer_exact = per_layer_exact.max(bound.bound);
            blocks.push(bound);
            continue;
        }

        let mut layered = Vec::new();
        for (layer, lt) in block.layers.iter().zip(&tilted.layers[b]) {
            layered.extend(segments(&layer.intervals, lt.weight()));
        }
        let block_layered = ReweightedMeasure::new(cdf, layered);
        let to_layers = rec.push(
            Stage::BlockToLayers,
            Some(b),
            None,
            None,
            None,
            &iv,
            bt.model_mass,
            bt.count,
            winf_between(&block_tilted, &block_layered),
        )?;

        let mut worst: f64 = 0.0;
        for (layer, lt) in block.layers.iter().zip(&tilted.layers[b]) {
            let atoms = atoms_in(em, &layer.intervals);
            let whole = ReweightedMeasure::new(cdf, segments(&layer.intervals, lt.weight()));
            let exact = winf_against_atoms(&whole, &atoms, atom_mass).displacement;
            per_layer_exact = per_layer_exact.max(exact);

            let j = Some(layer.index);
            let mut refine = Vec::new();
            let mut refine_constants = Vec::new();
            let atoms_stage;
            if layer.direct || layer.lumped {
                atoms_stage = rec.push(
                    Stage::Atoms,
                    Some(b),
                    j,
                    Some(0),
                    Some(0),
                    &layer.intervals,
                    lt.model_mass,
                    lt.count,
                    winf_against_atoms(&whole, &atoms, atom_mass),
                )?;
            } else {
                // μ_k has weight count(Q) / (n ν(Q)) on each depth-k cell.
                let weighted = |cells: &[super::DyadicCell]| -> Vec<(Vec<WeightedSegment>, usize)> {
                    cells
                        .iter()
                        .map(|c| {
                            let count = count_in(em, &c.intervals);
                            let w = count as f64 / (nf * c.model_mass);
                            (segments(&c.intervals, w), count)
                        })
                        .collect()
                };
                let mut coarse_cells = dyadic_cells(cdf, &layer.intervals, 0);
                let mut coarse = vec![(segments(&layer.intervals, lt.weight()), lt.count)];
                for k in 1..=layer.max_depth {
                    let fine_cells = dyadic_cells(cdf, &layer.intervals, k);
                    let fine = weighted(&fine_cells);
                    let mut stage_max: f64 = 0.0;
                    for (q, (parent, count)) in coarse_cells.iter().zip(&coarse) {
                        let mut children = fine[2 * q.index].0.clone();
                        children.extend(fine[2 * q.index + 1].0.iter().copied());
                        let d = winf_between(
                            &ReweightedMeasure::new(cdf, parent.clone()),
                            &ReweightedMeasure::new(cdf, children),
                        );
                        let disp = rec.push(
                            Stage::Refine,
                            Some(b),
                            j,
                            Some(k),
                            Some(q.index),
                            &q.intervals,
                            q.model_mass,
                            *count,
                            d,
                        )?;
                        stage_max = stage_max.max(disp);
                    }
                    let scale = (layer.index as f64 + 1.0).powf(scheme.beta)
                        * (lt.model_mass * ln_n / (2f64.powi(k as i32 - 1) * nf)).sqrt();
                    refine.push(stage_max);
                    refine_constants.push(stage_max / scale);
                    coarse_cells = fine_cells;
                    coarse = fine;
                }
                let mut last: f64 = 0.0;
                for (q, (segs, count)) in coarse_cells.iter().zip(&coarse) {
                    let d = winf_against_atoms(
                        &ReweightedMeasure::new(cdf, segs.clone()),
                        &atoms_in(em, &q.intervals),
                        atom_mass,
                    );
                    let disp = rec.push(
                        Stage::Atoms,
                        Some(b),
                        j,
                        Some(layer.max_depth),
                        Some(q.index),
                        &q.intervals,
                        q.model_mass,
                        *count,
                        d,
                    )?;
                    last = last.max(disp);
                }
                atoms_stage = last;
            }
            let chain = refine.iter().sum::<f64>() + atoms_stage;
            worst = worst.max(chain);
            bound.layers.push(LayerBound {
                index: layer.index,
                lumped: layer.lumped,
                direct: layer.direct,
                max_depth: layer.max_depth,
                model_mass: lt.model_mass,
                count: lt.count,
                delta: lt.excess,
                diameter: layer.diameter,
                refine,
                refine_constants,
                atoms: atoms_stage,
                chain,
                exact,
            });
        }
        bound.to_layers = Some(to_layers);
        bound.bound = to_layers + worst;
        blocks.push(bound);
    }

    let max_block = blocks.iter().map(|b| b.bound).fold(0.0, f64::max);
    let max_displacement = tilt + max_block;
    let exact_winf = winf_empirical(cdf, em)?.w_infinity;
    let all = em.samples();
    let tilted_to_empirical = winf_against_atoms(&tilted_measure, all, atom_mass).displacement;
    let layered_to_empirical = winf_against_atoms(&layered_measure, all, atom_mass).displacement;

    let model = cdf.model();
    let max_order = model.max_zero_order();
    let shape = rate_shape(nf, max_order);
    let max_excess = tilted
        .blocks
        .iter()
        .map(|t| t.excess.abs())
        .fold(0.0, f64::max);
    let tilt_ratio = (model.infimum() > 0.0 && model.supremum().is_finite() && max_excess > 0.0)
        .then(|| tilt * model.infimum() / (max_excess * model.supremum()));

    Ok(TransportCertificate {
        model_id: model.id().to_string(),
        n,
        beta: scheme.beta,
        tilt,
        tilt_ratio,
        blocks,
        max_displacement,
        exact_winf,
        ratio: if exact_winf > 0.0 {
            max_displacement / exact_winf
        } else {
            f64::INFINITY
        },
        tilted_to_empirical,
        layered_to_empirical,
        triangle_holds: exact_winf <= tilt + tilted_to_empirical + COMPARISON_SLACK,
        subadditivity_holds: layered_to_empirical <= per_layer_exact + COMPARISON_SLACK,
        max_mass_mismatch: rec.max_mismatch,
        max_order,
        rate_shape: shape,
        rate_constant,
        theoretical_rate: rate_constant * shape,
        implied_constant: max_displacement / shape,
        cells: rec.cells,
    })
}

/// Partition, tilt and assemble in one call.
///
/// A zero-mass block means no feasible plan exists; it is reported as a
/// certification failure.
pub fn certify(
    cdf: &CdfEvaluator,
    em: &EmpiricalMeasure,
    beta: f64,
    rate_constant: f64,
) -> Result<TransportCertificate> {
    if !(rate_constant > 0.0 && rate_constant.is_finite()) {
        return Err(Error::domain(format!(
            "rate constant {rate_constant} must be positive"
        )));
    }
    let scheme = build_partition(cdf, em, beta)?;
    let tilted = build_tilted_measures(&scheme, cdf, em).map_err(|e| match e {
        Error::DegenerateBlock { start, end } => Error::Certification(format!(
            "block [{start}, {end}] has zero model mass, so no feasible plan exists"
        )),
        other => other,
    })?;
    assemble_certificate(&scheme, &tilted, cdf, em, rate_constant)
}

/// Writes one CSV row per cell record.
pub fn write_cells_csv(path: &Path, cert: &TransportCertificate) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    write_cells(&mut out, cert).map_err(|e| Error::io(path, e))
}

fn write_cells(out: &mut impl Write, cert: &TransportCertificate) -> std::io::Result<()> {
    writeln!(
        out,
        "stage,block,layer,depth,cell,start,end,model_mass,count,displacement,mass_mismatch"
    )?;
    let opt = |v: Option<u64>| v.map(|v| v.to_string()).unwrap_or_default();
    for c in &cert.cells {
        writeln!(
            out,
            "{},{},{},{},{},{:.17e},{:.17e},{:.17e},{},{:.17e},{:.17e}",
            c.stage.as_str(),
            opt(c.block.map(|v| v as u64)),
            opt(c.layer.map(u64::from)),
            opt(c.depth.map(u64::from)),
            opt(c.cell.map(|v| v as u64)),
            c.start,
            c.end,
            c.model_mass,
            c.count,
            c.displacement,
            c.mass_mismatch,
        )?;
    }
    out.flush()
}
