//! Synthetic airway-like trees.
//!
//! A phantom is a full binary tree of capsule segments (a cylinder with
//! hemispherical caps) whose radius shrinks by a constant ratio per
//! generation, so distal branches hold only a small share of the tubular
//! volume. Each bifurcation plane is turned a quarter turn (plus seeded
//! jitter) relative to its parent's, which keeps sibling subtrees apart.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geodesic::nearest_site_map;
use crate::skeleton::{decompose, skeletonize, SkeletonGraph};
use crate::volume::{count_components_26, BinaryMask, Grid, ScalarVolume};

const MARGIN: f64 = 2.0;
const PLANE_JITTER_DEG: f64 = 10.0;

type Vec3 = [f64; 3];

fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalize(a: Vec3) -> Vec3 {
    scale(a, 1.0 / dot(a, a).sqrt())
}

/// Distance from `p` to the segment `[a, b]`.
fn segment_distance(p: Vec3, a: Vec3, b: Vec3) -> f64 {
    let ab = sub(b, a);
    let len2 = dot(ab, ab);
    let t = if len2 > 0.0 {
        (dot(sub(p, a), ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let d = sub(p, add(a, scale(ab, t)));
    dot(d, d).sqrt()
}

/// Parameters of a synthetic tree. Lengths and radii are in voxels.
#[derive(Clone, Debug, PartialEq)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    /// Number of generations; a full tree has `2^depth - 1` segments.
    pub depth: usize,
    pub root_radius: f64,
    /// Radius ratio between a child and its parent, in `(0, 1]`.
    pub radius_decay: f64,
    pub segment_length: f64,
    /// Full opening angle between sibling branches, in degrees.
    pub branch_angle: f64,
    pub seed: u64,
}

impl PhantomSpec {
    /// The depth-4 tree used by the breakage-sensitivity experiment.
    pub fn standard() -> Self {
        Self {
            dims: [96, 96, 96],
            spacing: [1.0; 3],
            depth: 4,
            root_radius: 5.0,
            radius_decay: 0.7,
            segment_length: 20.0,
            branch_angle: 70.0,
            seed: 7,
        }
    }

    /// A depth-5 tree filling a 128-voxel cube.
    pub fn patch128() -> Self {
        Self {
            dims: [128, 128, 128],
            depth: 5,
            root_radius: 6.0,
            radius_decay: 0.75,
            seed: 9,
            ..Self::standard()
        }
    }

    fn validate(&self) -> Result<()> {
        Grid::new(self.dims, self.spacing)?;
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.depth < 1 {
            return bad("phantom depth must be at least 1");
        }
        if self.root_radius.is_nan() || self.root_radius < 1.0 {
            return bad("root radius must be at least one voxel");
        }
        if !(self.radius_decay > 0.0 && self.radius_decay <= 1.0) {
            return bad("radius decay must lie in (0, 1]");
        }
        if self.segment_length.is_nan() || self.segment_length <= 0.0 {
            return bad("segment length must be positive");
        }
        if !(self.branch_angle > 0.0 && self.branch_angle < 180.0) {
            return bad("branch angle must lie in (0, 180) degrees");
        }
        Ok(())
    }
}

/// One capsule of the tree.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    /// 1 for the root.
    pub generation: usize,
    pub parent: Option<usize>,
    pub start: Vec3,
    pub end: Vec3,
    pub radius: f64,
    /// Unit vector normal to the axis, used to orient this segment's own
    /// bifurcation.
    pub plane: Vec3,
}

impl Segment {
    pub fn direction(&self) -> Vec3 {
        normalize(sub(self.end, self.start))
    }
}

#[derive(Clone, Debug)]
pub struct PhantomOutput {
    pub label: BinaryMask,
    /// Voxelised analytic segment axes.
    pub centerline_gt: BinaryMask,
    /// One chain per segment, in segment order.
    pub branches_gt: SkeletonGraph,
    pub segments: Vec<Segment>,
    /// Rendered with [`RenderParams::default`] and the spec seed.
    pub hu: ScalarVolume,
}

/// Build the tree described by `spec`.
pub fn generate(spec: &PhantomSpec) -> Result<PhantomOutput> {
    spec.validate()?;
    let grid = Grid::new(spec.dims, spec.spacing)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let segments = layout(spec, &mut rng)?;

    let mut label = BinaryMask::empty(grid);
    for seg in &segments {
        rasterize_capsule(&mut label, seg);
    }
    let chains: Vec<Vec<usize>> = segments.iter().map(|s| voxelize_axis(&grid, s)).collect();
    let centerline_gt = BinaryMask::from_indices(grid, chains.iter().flatten().copied());
    let branches_gt = SkeletonGraph::from_chains(grid, chains)?;

    let mut out = PhantomOutput {
        label,
        centerline_gt,
        branches_gt,
        segments,
        hu: ScalarVolume::filled(grid, 0.0)?,
    };
    out.hu = render(
        &out,
        &RenderParams {
            seed: spec.seed,
            ..RenderParams::default()
        },
    )?;
    Ok(out)
}

fn layout(spec: &PhantomSpec, rng: &mut ChaCha8Rng) -> Result<Vec<Segment>> {
    let dims = spec.dims.map(|d| d as f64);
    let half = (spec.branch_angle / 2.0).to_radians();
    let top = dims[2] - 1.0 - MARGIN - spec.root_radius;
    let root_start = [(dims[0] - 1.0) / 2.0, (dims[1] - 1.0) / 2.0, top];
    let root_dir = [0.0, 0.0, -1.0];
    let mut segments = vec![Segment {
        generation: 1,
        parent: None,
        start: root_start,
        end: add(root_start, scale(root_dir, spec.segment_length)),
        radius: spec.root_radius,
        plane: [1.0, 0.0, 0.0],
    }];

    let mut level = vec![0usize];
    for generation in 2..=spec.depth {
        let mut next = Vec::new();
        for &p in &level {
            let parent = segments[p].clone();
            let d = parent.direction();
            let q = normalize(cross(d, parent.plane));
            let phi = rng
                .random_range(-PLANE_JITTER_DEG..=PLANE_JITTER_DEG)
                .to_radians();
            let q = normalize(add(scale(q, phi.cos()), scale(cross(d, q), phi.sin())));
            let radius = (parent.radius * spec.radius_decay).max(1.0);
            for sign in [1.0, -1.0] {
                let dir = normalize(add(scale(d, half.cos()), scale(q, sign * half.sin())));
                segments.push(Segment {
                    generation,
                    parent: Some(p),
                    start: parent.end,
                    end: add(parent.end, scale(dir, spec.segment_length)),
                    radius,
                    plane: q,
                });
                next.push(segments.len() - 1);
            }
        }
        level = next;
    }

    for seg in &segments {
        for p in [seg.start, seg.end] {
            for axis in 0..3 {
                if p[axis] - seg.radius < MARGIN || p[axis] + seg.radius > dims[axis] - 1.0 - MARGIN
                {
                    return Err(Error::PhantomOutOfBounds {
                        generation: seg.generation,
                    });
                }
            }
        }
    }
    Ok(segments)
}

fn rasterize_capsule(mask: &mut BinaryMask, seg: &Segment) {
    let grid = mask.grid();
    let dims = grid.dims();
    let lo: Vec<usize> = (0..3)
        .map(|k| (seg.start[k].min(seg.end[k]) - seg.radius).floor().max(0.0) as usize)
        .collect();
    let hi: Vec<usize> = (0..3)
        .map(|k| ((seg.start[k].max(seg.end[k]) + seg.radius).ceil() as usize).min(dims[k] - 1))
        .collect();
    for z in lo[2]..=hi[2] {
        for y in lo[1]..=hi[1] {
            for x in lo[0]..=hi[0] {
                let p = [x as f64, y as f64, z as f64];
                if segment_distance(p, seg.start, seg.end) <= seg.radius {
                    mask.set(grid.index(x, y, z), true);
                }
            }
        }
    }
}

fn voxelize_axis(grid: &Grid, seg: &Segment) -> Vec<usize> {
    let delta = sub(seg.end, seg.start);
    let steps = delta
        .iter()
        .fold(0.0f64, |m, d| m.max(d.abs()))
        .ceil()
        .max(1.0) as usize;
    let mut chain: Vec<usize> = Vec::with_capacity(steps);
    for s in 0..=steps {
        let t = s as f64 / steps as f64;
        let p = add(seg.start, scale(delta, t));
        let v = grid.index(
            p[0].round() as usize,
            p[1].round() as usize,
            p[2].round() as usize,
        );
        if chain.last() != Some(&v) {
            chain.push(v);
        }
    }
    chain
}

/// An extra bright tube laid against one airway branch.
#[derive(Clone, Debug, PartialEq)]
pub struct VesselParams {
    pub hu: f64,
    pub radius: f64,
    /// Index of the segment the vessel runs alongside.
    pub segment: usize,
}

impl Default for VesselParams {
    fn default() -> Self {
        Self {
            hu: 100.0,
            radius: 2.0,
            segment: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderParams {
    pub lumen_hu: f64,
    pub wall_hu: f64,
    pub parenchyma_hu: f64,
    pub wall_thickness: f64,
    pub vessel: Option<VesselParams>,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for RenderParams {
    fn default() -> Self {
        Self {
            lumen_hu: -950.0,
            wall_hu: -200.0,
            parenchyma_hu: -800.0,
            wall_thickness: 2.0,
            vessel: None,
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

/// Render CT-like intensities: dark lumen, bright wall shell, parenchyma
/// background, an optional adjacent vessel, and additive Gaussian noise.
pub fn render(out: &PhantomOutput, params: &RenderParams) -> Result<ScalarVolume> {
    let vessel_hu = params.vessel.as_ref().map_or(f64::INFINITY, |v| v.hu);
    if !(params.lumen_hu < params.parenchyma_hu
        && params.parenchyma_hu < params.wall_hu
        && params.wall_hu < vessel_hu)
    {
        return Err(Error::InvalidArgument(
            "intensities must satisfy lumen < parenchyma < wall < vessel".into(),
        ));
    }
    if !(params.wall_thickness >= 0.0 && params.noise_sigma >= 0.0) {
        return Err(Error::InvalidArgument(
            "wall thickness and noise must be non-negative".into(),
        ));
    }
    let grid = out.label.grid();
    // Wall thickness is in voxels, so measure on a unit grid.
    let unit = Grid::isotropic(grid.dims())?;
    let lumen = BinaryMask::new(unit, out.label.data().to_vec())?;
    let to_lumen = nearest_site_map(&lumen)?;
    let wall_sq = params.wall_thickness * params.wall_thickness;

    let mut data: Vec<f64> = (0..grid.len())
        .map(|i| {
            if out.label.get(i) {
                params.lumen_hu
            } else if to_lumen.sq_distance()[i] <= wall_sq {
                params.wall_hu
            } else {
                params.parenchyma_hu
            }
        })
        .collect();

    if let Some(vessel) = &params.vessel {
        let seg = out.segments.get(vessel.segment).ok_or_else(|| {
            Error::InvalidArgument(format!("vessel segment {} does not exist", vessel.segment))
        })?;
        let offset = seg.radius + params.wall_thickness + vessel.radius - 0.5;
        let shift = scale(seg.plane, offset);
        let (a, b) = (add(seg.start, shift), add(seg.end, shift));
        for (i, v) in data.iter_mut().enumerate() {
            if out.label.get(i) {
                continue;
            }
            let c = grid.coords(i).map(|u| u as f64);
            if segment_distance(c, a, b) <= vessel.radius {
                *v = vessel.hu;
            }
        }
    }

    if params.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, params.noise_sigma)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        for v in data.iter_mut() {
            *v += noise.sample(&mut rng);
        }
    }
    ScalarVolume::new(grid, data)
}

/// Where one gap was cut.
#[derive(Clone, Debug, PartialEq)]
pub struct GapRecord {
    /// Index into [`BreakagePlan::branches`].
    pub branch: usize,
    /// Centerline voxel at the middle of the gap.
    pub center: usize,
    pub removed: Vec<usize>,
}

/// A branch of the mask's own skeleton that may receive a gap.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateBranch {
    pub chain: Vec<usize>,
    /// 1 for the root branch, increasing away from it.
    pub depth: usize,
}

/// Breakage placement for one connected mask: branches are found on the
/// mask's skeleton, the thickest terminal branch is taken as the root, and
/// gaps go to the deepest branches first, shuffled by seed within a depth.
/// Successive gaps extend the same sequence, so the first `k` gaps for a
/// given seed do not depend on how many more are requested later.
#[derive(Clone, Debug)]
pub struct BreakagePlan {
    mask: BinaryMask,
    branches: Vec<CandidateBranch>,
    /// Eligible branch indices in cutting order.
    order: Vec<usize>,
    radius: Vec<f64>,
    gap_width: usize,
}

impl BreakagePlan {
    pub fn new(mask: &BinaryMask, gap_width: usize, seed: u64) -> Result<Self> {
        if gap_width == 0 {
            return Err(Error::InvalidArgument("gap width must be positive".into()));
        }
        let components = count_components_26(mask);
        if components != 1 {
            return Err(Error::Disconnected(components));
        }
        let grid = mask.grid();
        let unit = Grid::isotropic(grid.dims())?;
        let background = BinaryMask::new(unit, mask.complement().data().to_vec())?;
        let radius: Vec<f64> = if background.is_empty() {
            vec![f64::INFINITY; grid.len()]
        } else {
            let map = nearest_site_map(&background)?;
            map.sq_distance().iter().map(|d| d.sqrt()).collect()
        };

        let graph = decompose(&skeletonize(mask));
        let branches = branch_depths(&graph, &radius);
        let reach = gap_width / 2 + 2;
        let mut by_depth: Vec<(usize, usize)> = branches
            .iter()
            .enumerate()
            .filter(|(_, b)| b.depth > 1 && b.chain.len() > 2 * reach + 1)
            .map(|(i, b)| (b.depth, i))
            .collect();
        by_depth.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order = Vec::with_capacity(by_depth.len());
        for group in by_depth.chunk_by(|a, b| a.0 == b.0) {
            let mut ids: Vec<usize> = group.iter().map(|&(_, i)| i).collect();
            ids.shuffle(&mut rng);
            order.extend(ids);
        }
        Ok(Self {
            mask: mask.clone(),
            branches,
            order,
            radius,
            gap_width,
        })
    }

    pub fn branches(&self) -> &[CandidateBranch] {
        &self.branches
    }

    /// Number of branches that can receive a gap.
    pub fn eligible(&self) -> usize {
        self.order.len()
    }

    /// Cut `k` gaps. Each gap raises the 26-component count by exactly one.
    pub fn apply(&self, k: usize) -> Result<(BinaryMask, Vec<GapRecord>)> {
        if k > self.order.len() {
            return Err(Error::TooManyBreakages {
                requested: k,
                eligible: self.order.len(),
            });
        }
        let mut current = self.mask.clone();
        let mut records = Vec::with_capacity(k);
        for (n, &b) in self.order[..k].iter().enumerate() {
            records.push(self.cut(&mut current, b, n + 1)?);
        }
        Ok((current, records))
    }

    /// The masks after `0, 1, ..., k` gaps.
    pub fn prefixes(&self, k: usize) -> Result<Vec<BinaryMask>> {
        if k > self.order.len() {
            return Err(Error::TooManyBreakages {
                requested: k,
                eligible: self.order.len(),
            });
        }
        let mut current = self.mask.clone();
        let mut out = vec![current.clone()];
        for (n, &b) in self.order[..k].iter().enumerate() {
            self.cut(&mut current, b, n + 1)?;
            out.push(current.clone());
        }
        Ok(out)
    }

    fn cut(&self, current: &mut BinaryMask, branch: usize, components: usize) -> Result<GapRecord> {
        let chain = &self.branches[branch].chain;
        let reach = self.gap_width / 2 + 2;
        let mid = chain.len() / 2;
        // Try the middle first, then alternate outwards.
        let mut positions = vec![mid];
        for d in 1..chain.len() {
            for p in [mid.checked_sub(d), Some(mid + d)].into_iter().flatten() {
                if p >= reach && p + reach < chain.len() {
                    positions.push(p);
                }
            }
        }
        for pos in positions {
            let removed = self.slab(current, chain, pos, reach);
            if removed.is_empty() {
                continue;
            }
            let mut trial = current.clone();
            for &v in &removed {
                trial.set(v, false);
            }
            if count_components_26(&trial) == components + 1 {
                *current = trial;
                return Ok(GapRecord {
                    branch,
                    center: chain[pos],
                    removed,
                });
            }
        }
        Err(Error::GapPlacement { branch })
    }

    fn slab(&self, current: &BinaryMask, chain: &[usize], pos: usize, reach: usize) -> Vec<usize> {
        let grid = current.grid();
        let c = grid.coords(chain[pos]).map(|u| u as f64);
        let a = grid.coords(chain[pos - reach]).map(|u| u as f64);
        let b = grid.coords(chain[pos + reach]).map(|u| u as f64);
        let axis = normalize(sub(b, a));
        let r = self.radius[chain[pos]] + 1.5;
        let half = self.gap_width as f64 / 2.0;
        let dims = grid.dims();
        let ext = r.max(half).ceil() as i64 + 1;
        let mut removed = Vec::new();
        for dz in -ext..=ext {
            for dy in -ext..=ext {
                for dx in -ext..=ext {
                    let p = [c[0] + dx as f64, c[1] + dy as f64, c[2] + dz as f64];
                    if p.iter().zip(&dims).any(|(&v, &d)| v < 0.0 || v >= d as f64) {
                        continue;
                    }
                    let i = grid.index(p[0] as usize, p[1] as usize, p[2] as usize);
                    if !current.get(i) {
                        continue;
                    }
                    let rel = sub(p, c);
                    let along = dot(rel, axis);
                    let radial = sub(rel, scale(axis, along));
                    if along >= -half && along < half && dot(radial, radial) <= r * r {
                        removed.push(i);
                    }
                }
            }
        }
        removed.sort_unstable();
        removed
    }
}

/// Assign each branch its depth from the root branch, taken as the terminal
/// branch with the largest mean distance to the background.
fn branch_depths(graph: &SkeletonGraph, radius: &[f64]) -> Vec<CandidateBranch> {
    let branches = graph.branches();
    // Node ids: one per junction cluster, then one per other voxel on demand.
    let mut node_of = std::collections::HashMap::new();
    for (j, cluster) in graph.junctions().iter().enumerate() {
        for &v in cluster {
            node_of.insert(v, j);
        }
    }
    let mut next_id = graph.junctions().len();
    let mut node = |v: usize| -> usize {
        *node_of.entry(v).or_insert_with(|| {
            next_id += 1;
            next_id - 1
        })
    };
    let ends: Vec<(usize, usize)> = branches
        .iter()
        .map(|c| (node(c[0]), node(c[c.len() - 1])))
        .collect();
    let endpoints: std::collections::HashSet<usize> = graph.endpoints().iter().copied().collect();

    let mean_radius = |c: &[usize]| c.iter().map(|&v| radius[v]).sum::<f64>() / c.len() as f64;
    let root = branches
        .iter()
        .enumerate()
        .filter(|(_, c)| endpoints.contains(&c[0]) || endpoints.contains(&c[c.len() - 1]))
        .fold(None::<(usize, f64)>, |best, (i, c)| {
            let r = mean_radius(c);
            match best {
                Some((_, br)) if br >= r => best,
                _ => Some((i, r)),
            }
        })
        .map(|(i, _)| i);

    let mut depth = vec![usize::MAX; branches.len()];
    if let Some(root) = root {
        depth[root] = 1;
        let mut frontier = vec![ends[root].0, ends[root].1];
        let mut level = 1;
        while !frontier.is_empty() {
            level += 1;
            let mut next = Vec::new();
            for (i, &(a, b)) in ends.iter().enumerate() {
                if depth[i] != usize::MAX || a == b {
                    continue;
                }
                if frontier.contains(&a) || frontier.contains(&b) {
                    depth[i] = level;
                    next.push(a);
                    next.push(b);
                }
            }
            next.retain(|n| !frontier.contains(n));
            frontier = next;
        }
    }
    branches
        .iter()
        .zip(depth)
        .map(|(c, d)| CandidateBranch {
            chain: c.clone(),
            depth: if d == usize::MAX { 0 } else { d },
        })
        .collect()
}

/// Remove `gap_width`-thick slabs across `k` distinct distal branches of a
/// connected mask.
pub fn inject_breakages(
    mask: &BinaryMask,
    k: usize,
    gap_width: usize,
    seed: u64,
) -> Result<(BinaryMask, Vec<GapRecord>)> {
    if k == 0 {
        return Ok((mask.clone(), Vec::new()));
    }
    BreakagePlan::new(mask, gap_width, seed)?.apply(k)
}
