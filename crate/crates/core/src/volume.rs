//! Dense 3D grids, 26-connectivity and the intensity/threshold preprocessing
//! shared by every stage of the pipeline.
//!
//! All volumes are stored flat with x varying fastest: the voxel at
//! `(x, y, z)` lives at `x + nx * (y + ny * z)`. Every deterministic tie-break
//! in this crate refers to that linear index.

use crate::error::{check_dims, Error, Result};

/// The 26 neighbour offsets, ordered so that neighbour linear indices ascend.
pub const NEIGHBORS_26: [[i64; 3]; 26] = {
    let mut out = [[0i64; 3]; 26];
    let mut n = 0;
    let mut dz = -1;
    while dz <= 1 {
        let mut dy = -1;
        while dy <= 1 {
            let mut dx = -1;
            while dx <= 1 {
                if !(dx == 0 && dy == 0 && dz == 0) {
                    out[n] = [dx, dy, dz];
                    n += 1;
                }
                dx += 1;
            }
            dy += 1;
        }
        dz += 1;
    }
    out
};

/// Face neighbours, in ascending linear-index order.
pub const NEIGHBORS_6: [[i64; 3]; 6] = [
    [0, 0, -1],
    [0, -1, 0],
    [-1, 0, 0],
    [1, 0, 0],
    [0, 1, 0],
    [0, 0, 1],
];

/// Shape and physical voxel size shared by every volume type.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    dims: [usize; 3],
    spacing: [f64; 3],
}

impl Grid {
    pub fn new(dims: [usize; 3], spacing: [f64; 3]) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "dimensions must be positive, got {dims:?}"
            )));
        }
        if dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .is_none()
        {
            return Err(Error::InvalidArgument(format!(
                "dimensions {dims:?} overflow"
            )));
        }
        if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "spacing must be finite and positive, got {spacing:?}"
            )));
        }
        Ok(Self { dims, spacing })
    }

    /// Unit-spacing grid.
    pub fn isotropic(dims: [usize; 3]) -> Result<Self> {
        Self::new(dims, [1.0; 3])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, i: usize) -> [usize; 3] {
        let x = i % self.dims[0];
        let r = i / self.dims[0];
        [x, r % self.dims[1], r / self.dims[1]]
    }

    /// Linear index of `coords + offset`, or `None` outside the grid.
    #[inline]
    pub fn offset(&self, coords: [usize; 3], offset: [i64; 3]) -> Option<usize> {
        let x = coords[0] as i64 + offset[0];
        let y = coords[1] as i64 + offset[1];
        let z = coords[2] as i64 + offset[2];
        if x < 0
            || y < 0
            || z < 0
            || x >= self.dims[0] as i64
            || y >= self.dims[1] as i64
            || z >= self.dims[2] as i64
        {
            return None;
        }
        Some(self.index(x as usize, y as usize, z as usize))
    }

    /// In-grid 26-neighbours of `i` with their offsets, ascending by index.
    pub fn neighbors26(&self, i: usize) -> impl Iterator<Item = (usize, [i64; 3])> + '_ {
        let c = self.coords(i);
        NEIGHBORS_26
            .iter()
            .filter_map(move |&o| self.offset(c, o).map(|j| (j, o)))
    }

    pub fn neighbors6(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let c = self.coords(i);
        NEIGHBORS_6.iter().filter_map(move |&o| self.offset(c, o))
    }

    /// Whether two distinct voxels are 26-adjacent.
    pub fn adjacent26(&self, a: usize, b: usize) -> bool {
        if a == b {
            return false;
        }
        let (ca, cb) = (self.coords(a), self.coords(b));
        (0..3).all(|k| ca[k].abs_diff(cb[k]) <= 1)
    }

    /// Physical length (mm) of the displacement between two voxels.
    pub fn distance_mm(&self, a: usize, b: usize) -> f64 {
        let (ca, cb) = (self.coords(a), self.coords(b));
        let mut sq = 0.0;
        for k in 0..3 {
            let d = (ca[k] as f64 - cb[k] as f64) * self.spacing[k];
            sq += d * d;
        }
        sq.sqrt()
    }
}

/// Dense real-valued volume (CT intensities, probability maps).
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarVolume {
    grid: Grid,
    data: Vec<f64>,
}

impl ScalarVolume {
    pub fn new(grid: Grid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "data length {} does not match grid of {} voxels",
                data.len(),
                grid.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { grid, data })
    }

    pub fn filled(grid: Grid, value: f64) -> Result<Self> {
        Self::new(grid, vec![value; grid.len()])
    }

    /// 0/1 volume from a mask.
    pub fn from_mask(mask: &BinaryMask) -> Self {
        let data = mask
            .data
            .iter()
            .map(|&b| if b { 1.0 } else { 0.0 })
            .collect();
        Self {
            grid: mask.grid.into(),
            data,
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn dims(&self) -> [usize; 3] {
        self.grid.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, i: usize) -> f64 {
        self.data[i]
    }

    /// Rejects any value outside `[0, 1]`.
    pub(crate) fn check_unit_range(&self) -> Result<()> {
        match self.data.iter().position(|&v| !(0.0..=1.0).contains(&v)) {
            Some(index) => Err(Error::OutOfUnitRange {
                index,
                value: self.data[index],
            }),
            None => Ok(()),
        }
    }
}

/// Dense boolean volume (segmentations, centerlines, phantoms).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    grid: GridKey,
    data: Vec<bool>,
}

// `Grid` holds floats; masks compare spacing bitwise so `Eq` is sound.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
struct GridKey {
    dims: [usize; 3],
    spacing_bits: [u64; 3],
}

impl From<Grid> for GridKey {
    fn from(g: Grid) -> Self {
        Self {
            dims: g.dims,
            spacing_bits: g.spacing.map(f64::to_bits),
        }
    }
}

impl From<GridKey> for Grid {
    fn from(k: GridKey) -> Self {
        Grid {
            dims: k.dims,
            spacing: k.spacing_bits.map(f64::from_bits),
        }
    }
}

impl BinaryMask {
    pub fn new(grid: Grid, data: Vec<bool>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "data length {} does not match grid of {} voxels",
                data.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid: grid.into(),
            data,
        })
    }

    pub fn empty(grid: Grid) -> Self {
        Self {
            grid: grid.into(),
            data: vec![false; grid.len()],
        }
    }

    /// Mask with the given linear indices set.
    pub fn from_indices(grid: Grid, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut m = Self::empty(grid);
        for i in indices {
            m.data[i] = true;
        }
        m
    }

    pub fn grid(&self) -> Grid {
        self.grid.into()
    }

    pub fn dims(&self) -> [usize; 3] {
        self.grid.dims
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        self.data[i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        self.data[i] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    /// Foreground linear indices, ascending.
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.dims() == other.dims() && self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask> {
        check_dims(self.dims(), other.dims())?;
        Ok(Self {
            grid: self.grid,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a || b)
                .collect(),
        })
    }

    pub fn difference(&self, other: &BinaryMask) -> Result<BinaryMask> {
        check_dims(self.dims(), other.dims())?;
        Ok(Self {
            grid: self.grid,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a && !b)
                .collect(),
        })
    }

    pub fn complement(&self) -> BinaryMask {
        Self {
            grid: self.grid,
            data: self.data.iter().map(|&b| !b).collect(),
        }
    }

    /// One step of dilation with the 6-neighbourhood.
    pub fn dilate6(&self) -> BinaryMask {
        let grid = self.grid();
        let mut out = self.clone();
        for i in self.indices() {
            for j in grid.neighbors6(i) {
                out.data[j] = true;
            }
        }
        out
    }
}

/// Connected-component labelling of a mask.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelMap {
    grid: Grid,
    labels: Vec<u32>,
    component_sizes: Vec<usize>,
}

impl LabelMap {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// Per-voxel label, 0 for background, components numbered from 1.
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Voxel count per label; entry 0 is always 0.
    pub fn component_sizes(&self) -> &[usize] {
        &self.component_sizes
    }

    pub fn num_components(&self) -> usize {
        self.component_sizes.len() - 1
    }

    pub fn component_mask(&self, label: u32) -> BinaryMask {
        let data = self.labels.iter().map(|&l| l == label).collect();
        BinaryMask::new(self.grid, data).expect("label map shares its grid")
    }
}

/// Clamp HU to `[lo, hi]` and map linearly onto `[0, 255]`, rounding half away
/// from zero.
pub fn normalize_hu(vol: &ScalarVolume, lo: f64, hi: f64) -> Result<ScalarVolume> {
    if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
        return Err(Error::InvalidArgument(format!(
            "normalization window requires lo < hi, got [{lo}, {hi}]"
        )));
    }
    if let Some(i) = vol.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let width = hi - lo;
    let data = vol
        .data
        .iter()
        .map(|&v| (255.0 * (v.clamp(lo, hi) - lo) / width).round())
        .collect();
    Ok(ScalarVolume {
        grid: vol.grid,
        data,
    })
}

/// Foreground wherever `prob >= threshold`.
pub fn binarize(prob: &ScalarVolume, threshold: f64) -> Result<BinaryMask> {
    prob.check_unit_range()?;
    if !threshold.is_finite() {
        return Err(Error::InvalidArgument(format!("threshold {threshold}")));
    }
    Ok(BinaryMask {
        grid: prob.grid.into(),
        data: prob.data.iter().map(|&p| p >= threshold).collect(),
    })
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        // Keep the smaller index as root.
        if ra < rb {
            self.parent[rb as usize] = ra;
        } else if rb < ra {
            self.parent[ra as usize] = rb;
        }
    }
}

// Offsets already visited in a forward raster scan.
const BACKWARD_26: [[i64; 3]; 13] = {
    let mut out = [[0i64; 3]; 13];
    let mut k = 0;
    while k < 13 {
        out[k] = NEIGHBORS_26[k];
        k += 1;
    }
    out
};

/// Label the 26-connected components of `mask`. Components are numbered in
/// ascending order of their smallest linear index.
pub fn connected_components_26(mask: &BinaryMask) -> LabelMap {
    let grid = mask.grid();
    let n = grid.len();
    let mut sets = DisjointSet::new(n);
    for i in mask.indices() {
        let c = grid.coords(i);
        for &o in &BACKWARD_26 {
            if let Some(j) = grid.offset(c, o) {
                if mask.data[j] {
                    sets.union(i as u32, j as u32);
                }
            }
        }
    }

    let mut labels = vec![0u32; n];
    let mut root_label = vec![0u32; n];
    let mut component_sizes = vec![0usize];
    for i in mask.indices() {
        let r = sets.find(i as u32) as usize;
        if root_label[r] == 0 {
            component_sizes.push(0);
            root_label[r] = (component_sizes.len() - 1) as u32;
        }
        let l = root_label[r];
        labels[i] = l;
        component_sizes[l as usize] += 1;
    }
    LabelMap {
        grid,
        labels,
        component_sizes,
    }
}

pub fn count_components_26(mask: &BinaryMask) -> usize {
    connected_components_26(mask).num_components()
}

/// The largest 26-connected component; ties go to the component holding the
/// smaller linear index.
pub fn largest_component(mask: &BinaryMask) -> Result<BinaryMask> {
    let map = connected_components_26(mask);
    let sizes = map.component_sizes();
    let mut best = 0usize;
    for (label, &size) in sizes.iter().enumerate().skip(1) {
        if size > sizes[best] {
            best = label;
        }
    }
    if best == 0 {
        return Err(Error::EmptyForeground);
    }
    Ok(map.component_mask(best as u32))
}
