//! Precision, tree length detected rate and branch detected rate.

use serde::Serialize;

use crate::error::{check_dims, Error, Result};
use crate::skeleton::{decompose, skeletonize, SkeletonGraph};
use crate::volume::{BinaryMask, Grid};

pub const DEFAULT_BRANCH_THRESHOLD: f64 = 0.8;

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOptions {
    /// Fraction of a branch's centerline voxels that must lie inside the
    /// prediction for the branch to count as detected.
    pub branch_threshold: f64,
    /// Voxels ignored by every metric, e.g. the trachea.
    pub exclude: Option<BinaryMask>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            branch_threshold: DEFAULT_BRANCH_THRESHOLD,
            exclude: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalResult {
    pub precision_pct: f64,
    pub tree_length_pct: f64,
    pub branch_detected_pct: f64,
    /// Branches with at least one centerline voxel inside the prediction.
    pub branch_any_overlap_pct: f64,
    /// Branches whose centerline lies entirely inside the prediction.
    pub branch_full_coverage_pct: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub branches_total: usize,
    pub branches_detected: usize,
    pub tree_length_mm: f64,
    pub detected_length_mm: f64,
    pub branch_threshold: f64,
    /// Set when the prediction is empty and precision is undefined.
    pub degenerate: bool,
}

/// Evaluate `pred` against `label`, using the label's own skeleton as the
/// reference centerline.
pub fn evaluate(
    pred: &BinaryMask,
    label: &BinaryMask,
    options: &EvalOptions,
) -> Result<EvalResult> {
    check_dims(pred.dims(), label.dims())?;
    if label.is_empty() {
        return Err(Error::EmptyForeground);
    }
    let graph = decompose(&skeletonize(label));
    evaluate_with_graph(pred, label, &graph, options)
}

/// Evaluate against an explicit reference branch structure.
pub fn evaluate_with_graph(
    pred: &BinaryMask,
    label: &BinaryMask,
    graph: &SkeletonGraph,
    options: &EvalOptions,
) -> Result<EvalResult> {
    check_dims(pred.dims(), label.dims())?;
    check_dims(pred.dims(), graph.grid().dims())?;
    if label.is_empty() {
        return Err(Error::EmptyForeground);
    }
    let tb = options.branch_threshold;
    if !(tb > 0.0 && tb <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "branch threshold must lie in (0, 1], got {tb}"
        )));
    }
    if let Some(ex) = &options.exclude {
        check_dims(pred.dims(), ex.dims())?;
    }
    let keep = |i: usize| options.exclude.as_ref().is_none_or(|ex| !ex.get(i));

    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (i, (&p, &l)) in pred.data().iter().zip(label.data()).enumerate() {
        if !keep(i) {
            continue;
        }
        match (p, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    let degenerate = tp + fp == 0;
    let precision_pct = if degenerate {
        0.0
    } else {
        100.0 * tp as f64 / (tp + fp) as f64
    };

    let grid: Grid = graph.grid();
    let mut total_mm = 0.0;
    let mut hit_mm = 0.0;
    let mut total_voxels = 0usize;
    let mut hit_voxels = 0usize;
    let (mut branches_total, mut detected, mut any, mut full) = (0, 0, 0, 0);
    for chain in graph.branches() {
        for w in chain.windows(2) {
            if keep(w[0]) && keep(w[1]) {
                let step = grid.distance_mm(w[0], w[1]);
                total_mm += step;
                if pred.get(w[0]) && pred.get(w[1]) {
                    hit_mm += step;
                }
            }
        }
        let voxels: Vec<usize> = chain.iter().copied().filter(|&v| keep(v)).collect();
        if voxels.is_empty() {
            continue;
        }
        let inside = voxels.iter().filter(|&&v| pred.get(v)).count();
        total_voxels += voxels.len();
        hit_voxels += inside;
        branches_total += 1;
        if inside as f64 >= tb * voxels.len() as f64 {
            detected += 1;
        }
        if inside > 0 {
            any += 1;
        }
        if inside == voxels.len() {
            full += 1;
        }
    }
    let tree_length_pct = if total_mm > 0.0 {
        100.0 * hit_mm / total_mm
    } else if total_voxels > 0 {
        100.0 * hit_voxels as f64 / total_voxels as f64
    } else {
        0.0
    };
    let pct = |n: usize| {
        if branches_total == 0 {
            0.0
        } else {
            100.0 * n as f64 / branches_total as f64
        }
    };
    Ok(EvalResult {
        precision_pct,
        tree_length_pct,
        branch_detected_pct: pct(detected),
        branch_any_overlap_pct: pct(any),
        branch_full_coverage_pct: pct(full),
        tp,
        fp,
        fn_,
        branches_total,
        branches_detected: detected,
        tree_length_mm: total_mm,
        detected_length_mm: hit_mm,
        branch_threshold: tb,
        degenerate,
    })
}
