//! Breakage-sensitive loss, the comparison losses, and the breakage
//! sensitivity experiment.
//!
//! All reductions run in ascending voxel order, so values are bit-for-bit
//! reproducible.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{check_dims, Error, Result};
use crate::phantom::BreakagePlan;
use crate::volume::{count_components_26, BinaryMask, ScalarVolume};

pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const CE_CLAMP: f64 = 1e-7;
pub const DEFAULT_WT: f64 = 0.5;
/// Replaces an unbroken loss of exactly zero when forming rates of change.
pub const L0_FLOOR: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LossValue {
    pub name: String,
    pub value: f64,
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "epsilon must be positive, got {epsilon}"
        )))
    }
}

fn check_pair(pred: &ScalarVolume, mask: &BinaryMask) -> Result<()> {
    check_dims(pred.dims(), mask.dims())?;
    pred.check_unit_range()
}

/// `1 - sum(p*c) / (sum(c) + epsilon)`.
pub fn bs_loss(pred: &ScalarVolume, centerline: &BinaryMask, epsilon: f64) -> Result<LossValue> {
    check_pair(pred, centerline)?;
    check_epsilon(epsilon)?;
    let mut hit = 0.0;
    let mut total = 0.0;
    for (p, &c) in pred.data().iter().zip(centerline.data()) {
        if c {
            hit += p;
            total += 1.0;
        }
    }
    Ok(LossValue {
        name: "bs".into(),
        value: 1.0 - hit / (total + epsilon),
    })
}

/// Gradient of [`bs_loss`] with respect to each prediction voxel.
pub fn bs_loss_grad(
    pred: &ScalarVolume,
    centerline: &BinaryMask,
    epsilon: f64,
) -> Result<ScalarVolume> {
    check_pair(pred, centerline)?;
    check_epsilon(epsilon)?;
    let g = -1.0 / (centerline.count() as f64 + epsilon);
    let data = centerline
        .data()
        .iter()
        .map(|&c| if c { g } else { 0.0 })
        .collect();
    ScalarVolume::new(pred.grid(), data)
}

/// Soft Dice loss `1 - 2 sum(p*l) / (sum(p) + sum(l) + epsilon)`.
pub fn dice_loss(pred: &ScalarVolume, label: &BinaryMask) -> Result<LossValue> {
    check_pair(pred, label)?;
    let mut inter = 0.0;
    let mut sum_p = 0.0;
    let mut sum_l = 0.0;
    for (p, &l) in pred.data().iter().zip(label.data()) {
        sum_p += p;
        if l {
            inter += p;
            sum_l += 1.0;
        }
    }
    Ok(LossValue {
        name: "dice".into(),
        value: 1.0 - 2.0 * inter / (sum_p + sum_l + DEFAULT_EPSILON),
    })
}

/// Mean binary cross-entropy with the prediction clamped to
/// `[CE_CLAMP, 1 - CE_CLAMP]`.
pub fn ce_loss(pred: &ScalarVolume, label: &BinaryMask) -> Result<LossValue> {
    check_pair(pred, label)?;
    let mut sum = 0.0;
    for (p, &l) in pred.data().iter().zip(label.data()) {
        let p = p.clamp(CE_CLAMP, 1.0 - CE_CLAMP);
        sum -= if l { p.ln() } else { (1.0 - p).ln() };
    }
    Ok(LossValue {
        name: "ce".into(),
        value: sum / pred.data().len() as f64,
    })
}

/// `base + w_t * bs`.
pub fn total_loss(base: &LossValue, bs: &LossValue, w_t: f64) -> Result<LossValue> {
    if !(w_t >= 0.0 && w_t.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "w_t must be non-negative, got {w_t}"
        )));
    }
    Ok(LossValue {
        name: format!("{}+bs", base.name),
        value: base.value + w_t * bs.value,
    })
}

/// A loss usable by the sensitivity experiment.
pub trait SegmentationLoss {
    fn name(&self) -> String;
    fn evaluate(
        &self,
        pred: &ScalarVolume,
        label: &BinaryMask,
        centerline: &BinaryMask,
    ) -> Result<f64>;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BuiltinLoss {
    BreakageSensitive { epsilon: f64 },
    Dice,
    CrossEntropy,
}

impl SegmentationLoss for BuiltinLoss {
    fn name(&self) -> String {
        match self {
            BuiltinLoss::BreakageSensitive { .. } => "bs",
            BuiltinLoss::Dice => "dice",
            BuiltinLoss::CrossEntropy => "ce",
        }
        .to_string()
    }

    fn evaluate(
        &self,
        pred: &ScalarVolume,
        label: &BinaryMask,
        centerline: &BinaryMask,
    ) -> Result<f64> {
        Ok(match *self {
            BuiltinLoss::BreakageSensitive { epsilon } => bs_loss(pred, centerline, epsilon)?.value,
            BuiltinLoss::Dice => dice_loss(pred, label)?.value,
            BuiltinLoss::CrossEntropy => ce_loss(pred, label)?.value,
        })
    }
}

impl fmt::Display for BuiltinLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for BuiltinLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bs" => Ok(BuiltinLoss::BreakageSensitive {
                epsilon: DEFAULT_EPSILON,
            }),
            "dice" => Ok(BuiltinLoss::Dice),
            "ce" => Ok(BuiltinLoss::CrossEntropy),
            other => Err(Error::InvalidArgument(format!(
                "unknown loss {other:?} (expected bs, dice or ce)"
            ))),
        }
    }
}

/// Parse a comma-separated list such as `bs,dice,ce`.
pub fn parse_losses(list: &str) -> Result<Vec<BuiltinLoss>> {
    let losses: Vec<BuiltinLoss> = list.split(',').map(str::parse).collect::<Result<_>>()?;
    if losses.is_empty() {
        return Err(Error::InvalidArgument("no losses given".into()));
    }
    Ok(losses)
}

/// Unbroken prediction that breakages are cut into.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasePrediction {
    /// The label itself.
    Label,
    /// The label grown by this many 6-neighbour dilation steps, i.e. a
    /// prediction that over-segments the boundary slightly.
    Dilated(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SensitivityOptions {
    pub base: BasePrediction,
    pub gap_width: usize,
}

impl Default for SensitivityOptions {
    fn default() -> Self {
        Self {
            base: BasePrediction::Dilated(1),
            gap_width: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SensitivityCurve {
    pub loss: String,
    pub k: Vec<usize>,
    /// Loss value for each `k`.
    pub values: Vec<f64>,
    /// Rate of change `(l_k - l_0) / l_0`; `r[0]` is 0.
    pub r: Vec<f64>,
}

/// Rate of change of `values` relative to the first entry.
pub fn rate_of_change(values: &[f64]) -> Vec<f64> {
    let Some(&l0) = values.first() else {
        return Vec::new();
    };
    let denom = if l0 == 0.0 { L0_FLOOR } else { l0 };
    values.iter().map(|&l| (l - l0) / denom).collect()
}

pub fn sensitivity_experiment(
    label: &BinaryMask,
    centerline: &BinaryMask,
    losses: &[&dyn SegmentationLoss],
    k_max: usize,
    seed: u64,
) -> Result<Vec<SensitivityCurve>> {
    sensitivity_experiment_with(
        label,
        centerline,
        losses,
        k_max,
        seed,
        &SensitivityOptions::default(),
    )
}

/// Cut `1..=k_max` breakages into an unbroken prediction and record how
/// much each loss grows. Predictions are hard 0/1 masks and the gaps for
/// `k` are always a subset of the gaps for `k + 1`.
pub fn sensitivity_experiment_with(
    label: &BinaryMask,
    centerline: &BinaryMask,
    losses: &[&dyn SegmentationLoss],
    k_max: usize,
    seed: u64,
    options: &SensitivityOptions,
) -> Result<Vec<SensitivityCurve>> {
    if k_max < 1 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    check_dims(label.dims(), centerline.dims())?;
    let components = count_components_26(label);
    if components != 1 {
        return Err(Error::Disconnected(components));
    }
    let base = match options.base {
        BasePrediction::Label => label.clone(),
        BasePrediction::Dilated(n) => (0..n).fold(label.clone(), |m, _| m.dilate6()),
    };
    let plan = BreakagePlan::new(&base, options.gap_width, seed)?;
    let preds = plan.prefixes(k_max)?;

    let mut values = vec![Vec::with_capacity(k_max + 1); losses.len()];
    for pred in &preds {
        let pred = ScalarVolume::from_mask(pred);
        for (loss, out) in losses.iter().zip(values.iter_mut()) {
            out.push(loss.evaluate(&pred, label, centerline)?);
        }
    }
    Ok(losses
        .iter()
        .zip(values)
        .map(|(loss, values)| SensitivityCurve {
            loss: loss.name(),
            k: (0..=k_max).collect(),
            r: rate_of_change(&values),
            values,
        })
        .collect())
}
