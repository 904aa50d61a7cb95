//! Skeleton-embedding fusion of two segmentation outputs.
//!
//! The donor segmentation is reduced to its largest component and thinned.
//! Centerline voxels the receiver misses are collected, and every donor
//! voxel whose nearest centerline voxel is one of those missing voxels is
//! added to the receiver.

use std::fmt;
use std::str::FromStr;

use crate::error::{check_dims, Error, Result};
use crate::geodesic::nearest_site_map;
use crate::skeleton::skeletonize;
use crate::volume::{binarize, count_components_26, largest_component, BinaryMask, ScalarVolume};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum FusionMode {
    /// The geodesic-branch output repairs the fine-tune output.
    #[default]
    G2F,
    /// The fine-tune output repairs the geodesic-branch output.
    F2G,
    /// Plain union without gating.
    Add,
}

impl FusionMode {
    pub fn name(self) -> &'static str {
        match self {
            FusionMode::G2F => "g2f",
            FusionMode::F2G => "f2g",
            FusionMode::Add => "add",
        }
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "g2f" => Ok(FusionMode::G2F),
            "f2g" => Ok(FusionMode::F2G),
            "add" => Ok(FusionMode::Add),
            other => Err(Error::InvalidArgument(format!(
                "unknown fusion mode {other:?} (expected g2f, f2g or add)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusionReport {
    pub fused: BinaryMask,
    /// Donor centerline voxels absent from the receiver, ascending.
    pub missing_centerline: Vec<usize>,
    /// Voxels switched from background to foreground.
    pub embedded_voxels: usize,
    pub components_before: usize,
    pub components_after: usize,
    pub mode: FusionMode,
}

/// Fuse two probability maps. `p_f` is the fine-tune output and `p_g` the
/// geodesic-branch output; [`FusionMode::F2G`] swaps their roles.
///
/// An empty donor leaves the receiver unchanged and logs a warning.
pub fn embed_fuse(
    p_f: &ScalarVolume,
    p_g: &ScalarVolume,
    threshold: f64,
    mode: FusionMode,
) -> Result<FusionReport> {
    check_dims(p_f.dims(), p_g.dims())?;
    if p_f.grid() != p_g.grid() {
        return Err(Error::InvalidArgument(
            "inputs have different spacing".into(),
        ));
    }
    let b_f = binarize(p_f, threshold)?;
    let b_g = binarize(p_g, threshold)?;
    match mode {
        FusionMode::G2F => Ok(fuse_masks(&b_f, &b_g, mode)),
        FusionMode::F2G => Ok(fuse_masks(&b_g, &b_f, mode)),
        FusionMode::Add => {
            let fused = b_f.union(&b_g)?;
            Ok(report(&b_f, fused, Vec::new(), mode))
        }
    }
}

/// Gated fusion on already binarised masks: `donor` repairs `receiver`.
pub fn embed_fuse_masks(receiver: &BinaryMask, donor: &BinaryMask) -> Result<FusionReport> {
    check_dims(receiver.dims(), donor.dims())?;
    Ok(fuse_masks(receiver, donor, FusionMode::G2F))
}

fn fuse_masks(receiver: &BinaryMask, donor: &BinaryMask, mode: FusionMode) -> FusionReport {
    let Ok(donor) = largest_component(donor) else {
        log::warn!("donor segmentation is empty; returning the receiver unchanged");
        return report(receiver, receiver.clone(), Vec::new(), mode);
    };
    let centerline = skeletonize(&donor);
    let missing: Vec<usize> = centerline.indices().filter(|&c| !receiver.get(c)).collect();
    let mut fused = receiver.clone();
    if !missing.is_empty() {
        let mut in_v = vec![false; centerline.data().len()];
        for &c in &missing {
            in_v[c] = true;
        }
        let nearest = nearest_site_map(&centerline).expect("centerline of a non-empty mask");
        for i in donor.indices() {
            if in_v[nearest.site(i)] {
                fused.set(i, true);
            }
        }
    }
    report(receiver, fused, missing, mode)
}

fn report(
    receiver: &BinaryMask,
    fused: BinaryMask,
    missing: Vec<usize>,
    mode: FusionMode,
) -> FusionReport {
    FusionReport {
        embedded_voxels: fused.count() - receiver.count(),
        components_before: count_components_26(receiver),
        components_after: count_components_26(&fused),
        fused,
        missing_centerline: missing,
        mode,
    }
}

/// Number of 26-components minus one, or zero for an empty mask.
pub fn count_breakages(pred: &BinaryMask) -> usize {
    count_components_26(pred).saturating_sub(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Grid;

    fn tube(grid: Grid, x0: usize, x1: usize) -> BinaryMask {
        let mut m = BinaryMask::empty(grid);
        for x in x0..=x1 {
            for y in 1..4 {
                for z in 1..4 {
                    m.set(grid.index(x, y, z), true);
                }
            }
        }
        m
    }

    #[test]
    fn identical_inputs_change_nothing() {
        let g = Grid::isotropic([20, 5, 5]).unwrap();
        let p = ScalarVolume::from_mask(&tube(g, 2, 17));
        let r = embed_fuse(&p, &p, 0.5, FusionMode::G2F).unwrap();
        assert_eq!(r.fused, binarize(&p, 0.5).unwrap());
        assert!(r.missing_centerline.is_empty());
        assert_eq!(r.embedded_voxels, 0);
    }

    #[test]
    fn gap_is_bridged() {
        let g = Grid::isotropic([20, 5, 5]).unwrap();
        let full = tube(g, 2, 17);
        let mut broken = full.clone();
        for y in 0..5 {
            for z in 0..5 {
                broken.set(g.index(9, y, z), false);
                broken.set(g.index(10, y, z), false);
            }
        }
        let r = embed_fuse(
            &ScalarVolume::from_mask(&broken),
            &ScalarVolume::from_mask(&full),
            0.5,
            FusionMode::G2F,
        )
        .unwrap();
        assert_eq!(r.components_before, 2);
        assert_eq!(r.components_after, 1);
        assert!(broken.is_subset_of(&r.fused));
        assert!(r.fused.is_subset_of(&full));
        assert_eq!(r.embedded_voxels, r.fused.count() - broken.count());
    }

    #[test]
    fn add_is_union() {
        let g = Grid::isotropic([20, 5, 5]).unwrap();
        let a = tube(g, 1, 5);
        let b = tube(g, 10, 15);
        let r = embed_fuse(
            &ScalarVolume::from_mask(&a),
            &ScalarVolume::from_mask(&b),
            0.5,
            FusionMode::Add,
        )
        .unwrap();
        assert_eq!(r.fused, a.union(&b).unwrap());
    }

    #[test]
    fn covered_centerline_blocks_embedding() {
        let g = Grid::isotropic([20, 5, 5]).unwrap();
        let thin = tube(g, 2, 17);
        let mut fat = thin.dilate6();
        for i in thin.indices() {
            fat.set(i, true);
        }
        let r = embed_fuse(
            &ScalarVolume::from_mask(&thin),
            &ScalarVolume::from_mask(&fat),
            0.5,
            FusionMode::G2F,
        )
        .unwrap();
        assert!(r.missing_centerline.is_empty());
        assert_eq!(r.fused, thin);
    }

    #[test]
    fn empty_donor_is_degenerate() {
        let g = Grid::isotropic([8, 5, 5]).unwrap();
        let a = ScalarVolume::from_mask(&tube(g, 1, 6));
        let empty = ScalarVolume::filled(g, 0.0).unwrap();
        let r = embed_fuse(&a, &empty, 0.5, FusionMode::G2F).unwrap();
        assert_eq!(r.fused, tube(g, 1, 6));
        assert!(r.missing_centerline.is_empty());
    }

    #[test]
    fn mismatched_dims_fail() {
        let a = ScalarVolume::filled(Grid::isotropic([4, 4, 4]).unwrap(), 0.0).unwrap();
        let b = ScalarVolume::filled(Grid::isotropic([4, 4, 5]).unwrap(), 0.0).unwrap();
        let err = embed_fuse(&a, &b, 0.5, FusionMode::G2F).unwrap_err();
        assert_eq!(err.category(), "DIM_MISMATCH");
    }

    #[test]
    fn breakage_count() {
        let g = Grid::isotropic([20, 5, 5]).unwrap();
        assert_eq!(count_breakages(&BinaryMask::empty(g)), 0);
        assert_eq!(count_breakages(&tube(g, 1, 5)), 0);
        assert_eq!(
            count_breakages(&tube(g, 1, 5).union(&tube(g, 8, 10)).unwrap()),
            1
        );
    }

    #[test]
    fn mode_names_round_trip() {
        for m in [FusionMode::G2F, FusionMode::F2G, FusionMode::Add] {
            assert_eq!(m.name().parse::<FusionMode>().unwrap(), m);
        }
        assert!("sum".parse::<FusionMode>().is_err());
    }
}
