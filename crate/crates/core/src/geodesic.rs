//! Geodesic distance fields over the 26-neighbour voxel graph.
//!
//! Every voxel is a vertex joined to its 26 neighbours. An edge `(u, v)` is
//! weighted by the image (`gray(u) + gray(v)`, or `|gray(u) - gray(v)|`) or by
//! the physical step length, and the field holds, for every voxel, the cheapest
//! path cost from the nearest source voxel. Taking the minimum over all source
//! voxels is folded into a single multi-source Dijkstra search, so the
//! per-source distance maps are never materialised.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;

use crate::error::{check_dims, Error, Result};
use crate::skeleton::skeletonize;
use crate::volume::{binarize, largest_component, normalize_hu, BinaryMask, Grid, ScalarVolume};

/// Truncation threshold used when none is configured, in mapped gray units.
pub const DEFAULT_TRUNCATION: f64 = 512.0;

/// Edge weighting of the voxel graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Metric {
    /// `gray(u) + gray(v)`.
    GrayvalueSum,
    /// `|gray(u) - gray(v)|`.
    Gradient,
    /// Physical length of the step between voxel centres.
    Euclidean,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::GrayvalueSum => "grayvalue",
            Metric::Gradient => "gradient",
            Metric::Euclidean => "euclidean",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grayvalue" | "grayvalue_sum" => Ok(Metric::GrayvalueSum),
            "gradient" => Ok(Metric::Gradient),
            "euclidean" => Ok(Metric::Euclidean),
            other => Err(Error::InvalidArgument(format!(
                "unknown metric {other:?} (expected grayvalue, gradient or euclidean)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeodesicOptions {
    pub metric: Metric,
    /// Multiply image-derived weights by the physical step length. Has no
    /// effect on [`Metric::Euclidean`].
    pub scale_by_step: bool,
}

impl Default for GeodesicOptions {
    fn default() -> Self {
        Self {
            metric: Metric::GrayvalueSum,
            scale_by_step: false,
        }
    }
}

impl From<Metric> for GeodesicOptions {
    fn from(metric: Metric) -> Self {
        Self {
            metric,
            ..Self::default()
        }
    }
}

/// Minimal path cost from a source set to every voxel. Unreachable voxels hold
/// `f64::INFINITY`.
#[derive(Clone, Debug, PartialEq)]
pub struct GeodesicField {
    grid: Grid,
    distances: Vec<f64>,
    metric: Metric,
    sources: BinaryMask,
}

impl GeodesicField {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    pub fn get(&self, i: usize) -> f64 {
        self.distances[i]
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn sources(&self) -> &BinaryMask {
        &self.sources
    }
}

/// Truncated and inverted field: `th - g` where `g < th`, else 0.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedGeodesicField {
    values: ScalarVolume,
    th: f64,
}

impl TruncatedGeodesicField {
    pub fn values(&self) -> &ScalarVolume {
        &self.values
    }

    pub fn threshold(&self) -> f64 {
        self.th
    }

    pub fn into_values(self) -> ScalarVolume {
        self.values
    }
}

// Step classes: bit 0 = x moves, bit 1 = y moves, bit 2 = z moves; index = bits - 1.
#[inline]
fn step_class(o: [i64; 3]) -> usize {
    let bits = usize::from(o[0] != 0) | usize::from(o[1] != 0) << 1 | usize::from(o[2] != 0) << 2;
    bits - 1
}

/// Physical length of each of the seven step classes, in class order.
pub fn step_lengths(spacing: [f64; 3]) -> [f64; 7] {
    let mut out = [0.0; 7];
    for (c, len) in out.iter_mut().enumerate() {
        let bits = c + 1;
        let mut sq = 0.0;
        for (axis, s) in spacing.iter().enumerate() {
            if bits & (1 << axis) != 0 {
                sq += s * s;
            }
        }
        *len = sq.sqrt();
    }
    out
}

/// Length of a path given how many steps of each class it takes. Summed in
/// class order, so equal step multisets always give bit-identical lengths.
pub fn path_length(counts: &[u32; 7], lengths: &[f64; 7]) -> f64 {
    let mut total = 0.0;
    for (n, len) in counts.iter().zip(lengths) {
        total += f64::from(*n) * len;
    }
    total
}

trait PathCost: Copy {
    fn value(&self) -> f64;
}

impl PathCost for f64 {
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
}

/// Euclidean path cost kept as a step multiset so that the same path length
/// is reproduced exactly no matter in which order steps were accumulated.
#[derive(Clone, Copy)]
struct StepCost {
    length: f64,
    counts: [u32; 7],
}

impl PathCost for StepCost {
    #[inline]
    fn value(&self) -> f64 {
        self.length
    }
}

#[derive(PartialEq)]
struct Entry {
    key: f64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .key
            .total_cmp(&self.key)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn dijkstra<C: PathCost>(
    grid: &Grid,
    sources: &BinaryMask,
    zero: C,
    unreached: C,
    relax: impl Fn(&C, usize, usize, [i64; 3]) -> C,
) -> Vec<C> {
    let mut dist = vec![unreached; grid.len()];
    let mut heap = BinaryHeap::new();
    for s in sources.indices() {
        dist[s] = zero;
        heap.push(Entry { key: 0.0, node: s });
    }
    while let Some(Entry { key, node: u }) = heap.pop() {
        if key > dist[u].value() {
            continue;
        }
        let du = dist[u];
        for (v, o) in grid.neighbors26(u) {
            let cand = relax(&du, u, v, o);
            if cand.value() < dist[v].value() {
                dist[v] = cand;
                heap.push(Entry {
                    key: cand.value(),
                    node: v,
                });
            }
        }
    }
    dist
}

/// Multi-source geodesic distance field of `gray` from `sources`.
pub fn geodesic_map(
    gray: &ScalarVolume,
    sources: &BinaryMask,
    options: impl Into<GeodesicOptions>,
) -> Result<GeodesicField> {
    let options = options.into();
    check_dims(gray.dims(), sources.dims())?;
    if sources.is_empty() {
        return Err(Error::EmptySources);
    }
    if let Some(i) = gray.data().iter().position(|&v| v < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "gray values must be non-negative, voxel {i} holds {}",
            gray.get(i)
        )));
    }
    let grid = gray.grid();
    let lengths = step_lengths(grid.spacing());
    let g = gray.data();

    let distances = match options.metric {
        Metric::Euclidean => {
            let zero = StepCost {
                length: 0.0,
                counts: [0; 7],
            };
            let unreached = StepCost {
                length: f64::INFINITY,
                counts: [0; 7],
            };
            dijkstra(&grid, sources, zero, unreached, |d, _, _, o| {
                let mut counts = d.counts;
                counts[step_class(o)] += 1;
                StepCost {
                    length: path_length(&counts, &lengths),
                    counts,
                }
            })
            .into_iter()
            .map(|c| c.length)
            .collect()
        }
        Metric::GrayvalueSum | Metric::Gradient => {
            let sum = options.metric == Metric::GrayvalueSum;
            let scale = options.scale_by_step;
            dijkstra(&grid, sources, 0.0, f64::INFINITY, |d, u, v, o| {
                let w = if sum {
                    g[u] + g[v]
                } else {
                    (g[u] - g[v]).abs()
                };
                let w = if scale { w * lengths[step_class(o)] } else { w };
                d + w
            })
        }
    };

    Ok(GeodesicField {
        grid,
        distances,
        metric: options.metric,
        sources: sources.clone(),
    })
}

/// `th - g` below the threshold and 0 from it onwards, including `g = +inf`.
#[inline]
pub fn truncate_value(g: f64, th: f64) -> f64 {
    if g >= th {
        0.0
    } else {
        th - g
    }
}

/// Apply [`truncate_value`] to every voxel of `field`.
pub fn truncate(field: &GeodesicField, th: f64) -> Result<TruncatedGeodesicField> {
    if !(th.is_finite() && th > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "truncation threshold must be positive, got {th}"
        )));
    }
    let data = field
        .distances
        .iter()
        .map(|&g| truncate_value(g, th))
        .collect();
    Ok(TruncatedGeodesicField {
        values: ScalarVolume::new(field.grid, data)?,
        th,
    })
}

/// For every voxel, the closest site voxel by physical Euclidean distance.
#[derive(Clone, Debug, PartialEq)]
pub struct NearestSiteMap {
    grid: Grid,
    site_index: Vec<usize>,
    sq_distance: Vec<f64>,
}

impl NearestSiteMap {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// Linear index of the closest site for each voxel.
    pub fn site_index(&self) -> &[usize] {
        &self.site_index
    }

    pub fn site(&self, i: usize) -> usize {
        self.site_index[i]
    }

    /// Squared physical distance (mm²) to the closest site.
    pub fn sq_distance(&self) -> &[f64] {
        &self.sq_distance
    }

    pub fn distance_mm(&self, i: usize) -> f64 {
        self.sq_distance[i].sqrt()
    }
}

const NO_SITE: usize = usize::MAX;

/// Exact nearest-site (feature) transform. Ties go to the site with the
/// smallest linear index.
///
/// The transform runs one pass per axis (x, then y, then z). Because linear
/// order is lexicographic in (z, y, x), breaking ties towards the lower
/// coordinate in every pass reproduces the global smallest-index rule, and
/// squared distances accumulate in the fixed order x² + y² + z².
pub fn nearest_site_map(sites: &BinaryMask) -> Result<NearestSiteMap> {
    if sites.is_empty() {
        return Err(Error::EmptySources);
    }
    let grid = sites.grid();
    let [nx, ny, nz] = grid.dims();
    let spacing = grid.spacing();
    let n = grid.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut site = vec![NO_SITE; n];

    // x pass: nearest site within each row.
    for z in 0..nz {
        for y in 0..ny {
            let row = grid.index(0, y, z);
            let mut last: Option<usize> = None;
            for x in 0..nx {
                if sites.get(row + x) {
                    last = Some(x);
                }
                if let Some(l) = last {
                    let d = (x - l) as f64 * spacing[0];
                    dist[row + x] = d * d;
                    site[row + x] = row + l;
                }
            }
            let mut next: Option<usize> = None;
            for x in (0..nx).rev() {
                if sites.get(row + x) {
                    next = Some(x);
                }
                if let Some(r) = next {
                    let d = (r - x) as f64 * spacing[0];
                    let d = d * d;
                    // Strict: the left site wins ties.
                    if d < dist[row + x] {
                        dist[row + x] = d;
                        site[row + x] = row + r;
                    }
                }
            }
        }
    }

    let mut line = LineScratch::default();
    // y pass.
    for z in 0..nz {
        for x in 0..nx {
            let start = grid.index(x, 0, z);
            line.run(&mut dist, &mut site, start, nx, ny, spacing[1]);
        }
    }
    // z pass.
    for y in 0..ny {
        for x in 0..nx {
            let start = grid.index(x, y, 0);
            line.run(&mut dist, &mut site, start, nx * ny, nz, spacing[2]);
        }
    }

    Ok(NearestSiteMap {
        grid,
        site_index: site,
        sq_distance: dist,
    })
}

/// One-dimensional lower envelope of parabolas `f(q) + ((p - q) w)²`.
#[derive(Default)]
struct LineScratch {
    f: Vec<f64>,
    s: Vec<usize>,
    hull: Vec<usize>,
    bounds: Vec<f64>,
}

impl LineScratch {
    #[inline]
    fn cost(&self, q: usize, p: usize, w: f64) -> f64 {
        let d = (p as f64 - q as f64) * w;
        self.f[q] + d * d
    }

    fn run(
        &mut self,
        dist: &mut [f64],
        site: &mut [usize],
        start: usize,
        stride: usize,
        len: usize,
        w: f64,
    ) {
        self.f.clear();
        self.s.clear();
        for k in 0..len {
            self.f.push(dist[start + k * stride]);
            self.s.push(site[start + k * stride]);
        }
        self.hull.clear();
        self.bounds.clear();
        let w2 = w * w;
        for q in 0..len {
            if self.s[q] == NO_SITE {
                continue;
            }
            let fq = self.f[q] + (q as f64 * w).powi(2);
            loop {
                let Some(&r) = self.hull.last() else {
                    self.hull.push(q);
                    self.bounds.push(f64::NEG_INFINITY);
                    break;
                };
                let fr = self.f[r] + (r as f64 * w).powi(2);
                let cross = (fq - fr) / (2.0 * w2 * (q - r) as f64);
                if cross <= *self.bounds.last().expect("bounds track hull") {
                    self.hull.pop();
                    self.bounds.pop();
                } else {
                    self.hull.push(q);
                    self.bounds.push(cross);
                    break;
                }
            }
        }
        if self.hull.is_empty() {
            return;
        }
        let mut k = 0;
        for p in 0..len {
            while k + 1 < self.hull.len() && self.bounds[k + 1] < p as f64 {
                k += 1;
            }
            // The envelope boundaries are rounded; settle the winner among the
            // neighbouring parabolas with the exact cost and lower-q tie rule.
            let lo = k.saturating_sub(1);
            let hi = (k + 1).min(self.hull.len() - 1);
            let mut best = self.hull[lo];
            let mut best_cost = self.cost(best, p, w);
            for &q in &self.hull[lo + 1..=hi] {
                let c = self.cost(q, p, w);
                if c < best_cost {
                    best = q;
                    best_cost = c;
                }
            }
            dist[start + p * stride] = best_cost;
            site[start + p * stride] = self.s[best];
        }
    }
}

/// Options of the geodesic-branch feature computation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GdtOptions {
    pub hu_window: (f64, f64),
    pub threshold: f64,
    pub th: f64,
    pub geodesic: GeodesicOptions,
}

impl Default for GdtOptions {
    fn default() -> Self {
        Self {
            hu_window: (-1000.0, 600.0),
            threshold: 0.5,
            th: DEFAULT_TRUNCATION,
            geodesic: GeodesicOptions::default(),
        }
    }
}

/// Everything produced on the way to the geodesic-branch input feature.
#[derive(Clone, Debug)]
pub struct GdtFeature {
    /// CT mapped to `[0, 255]`.
    pub normalized_ct: ScalarVolume,
    /// Largest component of the thresholded stage-1 prediction.
    pub foreground: BinaryMask,
    pub centerline: BinaryMask,
    pub field: GeodesicField,
    pub truncated: TruncatedGeodesicField,
}

/// Window the CT, threshold the stage-1 prediction, keep its largest
/// component, thin it to a centerline, and compute the truncated geodesic
/// field from that centerline.
pub fn gdt_feature(
    ct_hu: &ScalarVolume,
    stage1_prob: &ScalarVolume,
    options: &GdtOptions,
) -> Result<GdtFeature> {
    check_dims(ct_hu.dims(), stage1_prob.dims())?;
    let (lo, hi) = options.hu_window;
    let normalized_ct = normalize_hu(ct_hu, lo, hi)?;
    let foreground = largest_component(&binarize(stage1_prob, options.threshold)?)?;
    let centerline = skeletonize(&foreground);
    let field = geodesic_map(&normalized_ct, &centerline, options.geodesic)?;
    let truncated = truncate(&field, options.th)?;
    Ok(GdtFeature {
        normalized_ct,
        foreground,
        centerline,
        field,
        truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube(n: usize) -> Grid {
        Grid::isotropic([n, n, n]).unwrap()
    }

    #[test]
    fn source_voxel_has_zero_distance() {
        let g = cube(3);
        let gray = ScalarVolume::filled(g, 7.0).unwrap();
        let src = BinaryMask::from_indices(g, [g.index(1, 1, 1)]);
        let f = geodesic_map(&gray, &src, Metric::GrayvalueSum).unwrap();
        assert_eq!(f.get(g.index(1, 1, 1)), 0.0);
        // Axis neighbour of the source: one edge of weight v + v.
        assert_eq!(f.get(g.index(2, 1, 1)), 14.0);
        // Every voxel is one 26-step away.
        assert!(f.distances().iter().all(|&d| d == 0.0 || d == 14.0));
    }

    #[test]
    fn gradient_on_constant_image_is_zero() {
        let g = cube(4);
        let gray = ScalarVolume::filled(g, 100.0).unwrap();
        let src = BinaryMask::from_indices(g, [0]);
        let f = geodesic_map(&gray, &src, Metric::Gradient).unwrap();
        assert!(f.distances().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn euclidean_along_axis_corridor() {
        let g = Grid::new([10, 1, 1], [0.7, 1.0, 1.0]).unwrap();
        let gray = ScalarVolume::filled(g, 0.0).unwrap();
        let src = BinaryMask::from_indices(g, [0]);
        let f = geodesic_map(&gray, &src, Metric::Euclidean).unwrap();
        for x in 0..10 {
            assert!((f.get(x) - 0.7 * x as f64).abs() < 1e-12);
        }
        let diag = cube(5);
        let gray = ScalarVolume::filled(diag, 0.0).unwrap();
        let src = BinaryMask::from_indices(diag, [0]);
        let f = geodesic_map(&gray, &src, Metric::Euclidean).unwrap();
        assert_eq!(f.get(diag.index(4, 4, 4)), 4.0 * 3f64.sqrt());
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = cube(3);
        let gray = ScalarVolume::filled(g, 1.0).unwrap();
        assert!(matches!(
            geodesic_map(&gray, &BinaryMask::empty(g), Metric::GrayvalueSum),
            Err(Error::EmptySources)
        ));
        let other = BinaryMask::from_indices(cube(4), [0]);
        assert!(matches!(
            geodesic_map(&gray, &other, Metric::GrayvalueSum),
            Err(Error::DimMismatch { .. })
        ));
        let neg = ScalarVolume::filled(g, -1.0).unwrap();
        assert!(geodesic_map(&neg, &BinaryMask::from_indices(g, [0]), Metric::Gradient).is_err());
    }

    #[test]
    fn unreachable_voxels_stay_infinite_and_truncate_to_zero() {
        // Every voxel of a grid is reachable, so build the field by hand.
        let g = Grid::isotropic([3, 1, 1]).unwrap();
        let field = GeodesicField {
            grid: g,
            distances: vec![0.0, 5.0, f64::INFINITY],
            metric: Metric::GrayvalueSum,
            sources: BinaryMask::from_indices(g, [0]),
        };
        let t = truncate(&field, 10.0).unwrap();
        assert_eq!(t.values().data(), &[10.0, 5.0, 0.0]);
        assert!(truncate(&field, 0.0).is_err());
        assert!(truncate(&field, -3.0).is_err());
    }

    #[test]
    fn nearest_site_ties_prefer_lower_index() {
        let g = Grid::isotropic([5, 1, 1]).unwrap();
        let sites = BinaryMask::from_indices(g, [0, 4]);
        let m = nearest_site_map(&sites).unwrap();
        assert_eq!(m.site_index(), &[0, 0, 0, 4, 4]);
        let g = cube(3);
        let sites = BinaryMask::from_indices(g, [g.index(1, 0, 1), g.index(1, 2, 1)]);
        let m = nearest_site_map(&sites).unwrap();
        assert_eq!(m.site(g.index(1, 1, 1)), g.index(1, 0, 1));
        assert_eq!(m.site(g.index(1, 2, 1)), g.index(1, 2, 1));
    }

    #[test]
    fn nearest_site_of_empty_set_fails() {
        assert!(nearest_site_map(&BinaryMask::empty(cube(2))).is_err());
    }

    #[test]
    fn metric_names_round_trip() {
        for m in [Metric::GrayvalueSum, Metric::Gradient, Metric::Euclidean] {
            assert_eq!(m.name().parse::<Metric>().unwrap(), m);
        }
        assert!("geodesic".parse::<Metric>().is_err());
    }
}
