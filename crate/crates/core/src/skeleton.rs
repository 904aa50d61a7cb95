//! Curve skeletons of 3D binary objects and their decomposition into branches.
//!
//! [`skeletonize`] is a directional, sequentially re-checked medial-axis
//! thinning: in each of six sub-iterations (U, D, N, S, E, W) the border
//! voxels open towards that direction are collected if they are not curve
//! endpoints, keep the Euler characteristic of their 3×3×3 neighbourhood, and
//! are simple points for (26, 6) topology. Collected voxels are then deleted
//! one at a time, each re-tested against the already-thinned image. The
//! volume outside the grid is background.

use std::collections::{HashMap, VecDeque};
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, Grid};

const CENTER: usize = 13;
const CENTER_BIT: u32 = 1 << CENTER;

#[inline]
fn position(dx: i64, dy: i64, dz: i64) -> usize {
    ((dx + 1) + 3 * (dy + 1) + 9 * (dz + 1)) as usize
}

#[inline]
fn offset_of(k: usize) -> [i64; 3] {
    [
        (k % 3) as i64 - 1,
        ((k / 3) % 3) as i64 - 1,
        (k / 9) as i64 - 1,
    ]
}

/// Lookup tables over a 3×3×3 neighbourhood encoded as a 27-bit mask.
struct Tables {
    adj26: [u32; 27],
    adj6: [u32; 27],
    n18: u32,
    faces: u32,
    /// For each octant, the positions of its seven non-centre voxels, listed by
    /// axis subset (x=1, y=2, z=4; subsets 1..=7).
    octants: [[usize; 7]; 8],
    /// Change of 8·χ (26-connected foreground) contributed by one octant when
    /// the centre voxel is present versus absent, indexed by the 7-bit octant
    /// configuration.
    euler_delta: [i8; 128],
}

fn tables() -> &'static Tables {
    static TABLES: OnceLock<Tables> = OnceLock::new();
    TABLES.get_or_init(build_tables)
}

fn build_tables() -> Tables {
    let mut adj26 = [0u32; 27];
    let mut adj6 = [0u32; 27];
    let mut n18 = 0u32;
    let mut faces = 0u32;
    for a in 0..27 {
        let oa = offset_of(a);
        let nonzero = oa.iter().filter(|&&v| v != 0).count();
        if a != CENTER && nonzero <= 2 {
            n18 |= 1 << a;
        }
        if nonzero == 1 {
            faces |= 1 << a;
        }
        for b in 0..27 {
            if a == b || b == CENTER {
                continue;
            }
            let ob = offset_of(b);
            let diff: Vec<i64> = (0..3).map(|k| (oa[k] - ob[k]).abs()).collect();
            if diff.iter().all(|&d| d <= 1) {
                adj26[a] |= 1 << b;
                if diff.iter().sum::<i64>() == 1 {
                    adj6[a] |= 1 << b;
                }
            }
        }
    }

    let mut octants = [[0usize; 7]; 8];
    for (o, octant) in octants.iter_mut().enumerate() {
        let sign = |bit: usize| if o & bit != 0 { 1 } else { -1 };
        let s = [sign(1), sign(2), sign(4)];
        for t in 1..8usize {
            let d = |axis: usize| if t & (1 << axis) != 0 { s[axis] } else { 0 };
            octant[t - 1] = position(d(0), d(1), d(2));
        }
    }

    // The centre cube's cells inside one octant: one vertex (shared by the 8
    // voxels of the octant), three edges (each shared with 3 octant voxels,
    // and split between 2 octants), three faces (shared with 1 voxel, split
    // between 4 octants) and 1/8 of the cube. Weights are scaled by 8.
    let mut euler_delta = [0i8; 128];
    for (config, delta) in euler_delta.iter_mut().enumerate() {
        let has = |subset: usize| config & (1 << (subset - 1)) != 0;
        let vertex_kept = config != 0;
        let mut d = 8 * i32::from(!vertex_kept) - 1;
        for axis in 0..3 {
            let (b, c) = ((axis + 1) % 3, (axis + 2) % 3);
            let (sb, sc) = (1 << b, 1 << c);
            let edge_kept = has(sb) || has(sc) || has(sb | sc);
            d -= 4 * i32::from(!edge_kept);
            let face_kept = has(1 << axis);
            d += 2 * i32::from(!face_kept);
        }
        *delta = d as i8;
    }

    Tables {
        adj26,
        adj6,
        n18,
        faces,
        octants,
        euler_delta,
    }
}

/// Grow `seed` inside `allowed` using per-bit adjacency masks.
#[inline]
fn flood(seed: u32, allowed: u32, adjacency: &[u32; 27]) -> u32 {
    let mut reached = seed;
    let mut frontier = seed;
    while frontier != 0 {
        let mut next = 0u32;
        let mut f = frontier;
        while f != 0 {
            let b = f.trailing_zeros() as usize;
            f &= f - 1;
            next |= adjacency[b];
        }
        next &= allowed & !reached;
        reached |= next;
        frontier = next;
    }
    reached
}

#[inline]
fn is_endpoint(nb: u32) -> bool {
    (nb & !CENTER_BIT).count_ones() == 1
}

fn is_euler_invariant(nb: u32, t: &Tables) -> bool {
    let mut sum = 0i32;
    for octant in &t.octants {
        let mut config = 0usize;
        for (bit, &p) in octant.iter().enumerate() {
            if nb & (1 << p) != 0 {
                config |= 1 << bit;
            }
        }
        sum += i32::from(t.euler_delta[config]);
    }
    sum == 0
}

/// Exact (26, 6) simple-point test: the other foreground voxels of the
/// neighbourhood form one 26-component, and the background voxels of the
/// 18-neighbourhood that touch the centre by a face form one 6-component.
fn is_simple(nb: u32, t: &Tables) -> bool {
    let fg = nb & !CENTER_BIT & ((1 << 27) - 1);
    if fg == 0 {
        return false;
    }
    let seed = 1 << fg.trailing_zeros();
    if flood(seed, fg, &t.adj26) != fg {
        return false;
    }
    let bg = !nb & t.n18;
    let open_faces = bg & t.faces;
    if open_faces == 0 {
        return false;
    }
    let seed = 1 << open_faces.trailing_zeros();
    let reached = flood(seed, bg, &t.adj6);
    open_faces & !reached == 0
}

/// Thinning direction: the neighbour that must be background for a voxel to
/// count as a border voxel in that sub-iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Up,
    Down,
    North,
    South,
    East,
    West,
}

impl Direction {
    /// Sub-iteration order.
    pub const ORDER: [Direction; 6] = [
        Direction::Up,
        Direction::Down,
        Direction::North,
        Direction::South,
        Direction::East,
        Direction::West,
    ];

    pub fn offset(self) -> [i64; 3] {
        match self {
            Direction::Up => [0, 0, 1],
            Direction::Down => [0, 0, -1],
            Direction::North => [0, 1, 0],
            Direction::South => [0, -1, 0],
            Direction::East => [1, 0, 0],
            Direction::West => [-1, 0, 0],
        }
    }
}

/// Zero-padded working copy so neighbourhood reads never leave the buffer.
struct Padded {
    dims: [usize; 3],
    img: Vec<u8>,
    offsets: [isize; 27],
}

impl Padded {
    fn new(mask: &BinaryMask) -> Self {
        let [nx, ny, nz] = mask.dims();
        let dims = [nx + 2, ny + 2, nz + 2];
        let mut img = vec![0u8; dims[0] * dims[1] * dims[2]];
        let grid = mask.grid();
        for i in mask.indices() {
            let [x, y, z] = grid.coords(i);
            img[(x + 1) + dims[0] * ((y + 1) + dims[1] * (z + 1))] = 1;
        }
        let mut offsets = [0isize; 27];
        for (k, o) in offsets.iter_mut().enumerate() {
            let [dx, dy, dz] = offset_of(k);
            *o = dx as isize + dims[0] as isize * (dy as isize + dims[1] as isize * dz as isize);
        }
        Self { dims, img, offsets }
    }

    #[inline]
    fn neighborhood(&self, p: usize) -> u32 {
        let mut nb = 0u32;
        for (k, &o) in self.offsets.iter().enumerate() {
            if self.img[(p as isize + o) as usize] != 0 {
                nb |= 1 << k;
            }
        }
        nb
    }

    fn step(&self, d: Direction) -> isize {
        let [dx, dy, dz] = d.offset();
        self.offsets[position(dx, dy, dz)]
    }

    fn foreground(&self) -> Vec<usize> {
        self.img
            .iter()
            .enumerate()
            .filter_map(|(p, &v)| (v != 0).then_some(p))
            .collect()
    }

    fn unpad(&self, grid: Grid) -> BinaryMask {
        let [nx, ny, nz] = grid.dims();
        let mut data = vec![false; grid.len()];
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let p = (x + 1) + self.dims[0] * ((y + 1) + self.dims[1] * (z + 1));
                    data[grid.index(x, y, z)] = self.img[p] != 0;
                }
            }
        }
        BinaryMask::new(grid, data).expect("unpadded buffer matches grid")
    }
}

/// Thin `mask` to a one-voxel-wide curve skeleton with the same 26-connected
/// foreground components and 6-connected background components.
pub fn skeletonize(mask: &BinaryMask) -> BinaryMask {
    let t = tables();
    let mut work = Padded::new(mask);
    let mut alive = work.foreground();
    let mut candidates = Vec::new();

    loop {
        let mut deleted = 0usize;
        for dir in Direction::ORDER {
            let step = work.step(dir);
            candidates.clear();
            for &p in &alive {
                if work.img[(p as isize + step) as usize] != 0 {
                    continue;
                }
                let nb = work.neighborhood(p);
                if !is_endpoint(nb) && is_euler_invariant(nb, t) && is_simple(nb, t) {
                    candidates.push(p);
                }
            }
            for &p in &candidates {
                let nb = work.neighborhood(p);
                if !is_endpoint(nb) && is_simple(nb, t) {
                    work.img[p] = 0;
                    deleted += 1;
                }
            }
            if !candidates.is_empty() {
                alive.retain(|&p| work.img[p] != 0);
            }
        }
        if deleted == 0 {
            break;
        }
    }
    work.unpad(mask.grid())
}

/// A centerline split into endpoints, branch points and branch chains.
#[derive(Clone, Debug, PartialEq)]
pub struct SkeletonGraph {
    grid: Grid,
    voxels: Vec<usize>,
    endpoints: Vec<usize>,
    branch_points: Vec<usize>,
    isolated: Vec<usize>,
    junctions: Vec<Vec<usize>>,
    branches: Vec<Vec<usize>>,
}

impl SkeletonGraph {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// All skeleton voxels, ascending.
    pub fn voxels(&self) -> &[usize] {
        &self.voxels
    }

    /// Voxels with exactly one skeleton neighbour.
    pub fn endpoints(&self) -> &[usize] {
        &self.endpoints
    }

    /// Voxels with three or more skeleton neighbours.
    pub fn branch_points(&self) -> &[usize] {
        &self.branch_points
    }

    /// Voxels with no skeleton neighbour.
    pub fn isolated(&self) -> &[usize] {
        &self.isolated
    }

    /// Branch points grouped into 26-connected clusters; one cluster is one
    /// bifurcation of the underlying tree.
    pub fn junctions(&self) -> &[Vec<usize>] {
        &self.junctions
    }

    /// Ordered voxel chains. Each chain runs between two terminals (endpoint
    /// or branch point) and includes them; closed loops repeat their first
    /// voxel at the end; isolated voxels are one-voxel chains.
    pub fn branches(&self) -> &[Vec<usize>] {
        &self.branches
    }

    /// Build a graph from explicitly known chains (e.g. analytic phantom
    /// axes). Chain ends used once are endpoints; chain ends shared by three
    /// or more chains are branch points.
    pub fn from_chains(grid: Grid, chains: Vec<Vec<usize>>) -> Result<Self> {
        let mut voxels: Vec<usize> = chains.iter().flatten().copied().collect();
        voxels.sort_unstable();
        voxels.dedup();
        let mut end_uses: HashMap<usize, usize> = HashMap::new();
        for chain in &chains {
            if chain.is_empty() {
                return Err(Error::InvalidArgument("empty chain".into()));
            }
            for w in chain.windows(2) {
                if !grid.adjacent26(w[0], w[1]) {
                    return Err(Error::NonAdjacentChain(w[0], w[1]));
                }
            }
            *end_uses.entry(chain[0]).or_default() += 1;
            if chain.len() > 1 {
                *end_uses.entry(chain[chain.len() - 1]).or_default() += 1;
            }
        }
        let mut endpoints: Vec<usize> = end_uses
            .iter()
            .filter_map(|(&v, &n)| (n == 1).then_some(v))
            .collect();
        let mut branch_points: Vec<usize> = end_uses
            .iter()
            .filter_map(|(&v, &n)| (n >= 3).then_some(v))
            .collect();
        endpoints.sort_unstable();
        branch_points.sort_unstable();
        let junctions = branch_points.iter().map(|&b| vec![b]).collect();
        Ok(Self {
            grid,
            voxels,
            endpoints,
            branch_points,
            isolated: Vec::new(),
            junctions,
            branches: chains,
        })
    }
}

/// Classify centerline voxels by skeleton-neighbour count and trace branch
/// chains, starting from the terminal with the smallest linear index.
pub fn decompose(centerline: &BinaryMask) -> SkeletonGraph {
    let grid = centerline.grid();
    let n = grid.len();
    let voxels: Vec<usize> = centerline.indices().collect();
    let mut degree = vec![0u8; n];
    for &v in &voxels {
        degree[v] = grid
            .neighbors26(v)
            .filter(|&(j, _)| centerline.get(j))
            .count() as u8;
    }
    if has_plaquette(centerline) {
        log::warn!("centerline is not one voxel thin; branch tracing may be ambiguous");
    }

    let neighbors = |v: usize| -> Vec<usize> {
        grid.neighbors26(v)
            .filter_map(|(j, _)| centerline.get(j).then_some(j))
            .collect()
    };

    let endpoints: Vec<usize> = voxels.iter().copied().filter(|&v| degree[v] == 1).collect();
    let branch_points: Vec<usize> = voxels.iter().copied().filter(|&v| degree[v] >= 3).collect();
    let isolated: Vec<usize> = voxels.iter().copied().filter(|&v| degree[v] == 0).collect();
    let junctions = cluster_branch_points(&grid, &branch_points, &degree);

    let mut visited = vec![false; n];
    let mut branches = Vec::new();
    let terminals = voxels
        .iter()
        .copied()
        .filter(|&v| degree[v] == 1 || degree[v] >= 3);
    for t in terminals {
        if degree[t] == 1 && visited[t] {
            continue;
        }
        for first in neighbors(t) {
            if degree[first] >= 3 || visited[first] {
                continue;
            }
            if degree[t] == 1 {
                visited[t] = true;
            }
            let mut chain = vec![t];
            let (mut prev, mut cur) = (t, first);
            loop {
                chain.push(cur);
                if degree[cur] != 2 {
                    visited[cur] = degree[cur] == 1 || visited[cur];
                    break;
                }
                visited[cur] = true;
                let next = neighbors(cur).into_iter().find(|&j| j != prev);
                match next {
                    Some(j) if degree[j] == 2 && visited[j] => break,
                    Some(j) => {
                        prev = cur;
                        cur = j;
                    }
                    None => break,
                }
            }
            branches.push(chain);
        }
    }

    // What remains: isolated voxels and closed loops without terminals.
    for &v in &voxels {
        if visited[v] || degree[v] >= 3 {
            continue;
        }
        if degree[v] == 0 {
            visited[v] = true;
            branches.push(vec![v]);
            continue;
        }
        let mut chain = vec![v];
        visited[v] = true;
        let (mut prev, mut cur) = (v, neighbors(v)[0]);
        while !visited[cur] {
            visited[cur] = true;
            chain.push(cur);
            match neighbors(cur).into_iter().find(|&j| j != prev) {
                Some(j) => {
                    prev = cur;
                    cur = j;
                }
                None => break,
            }
        }
        if cur == v {
            chain.push(v);
        }
        branches.push(chain);
    }

    SkeletonGraph {
        grid,
        voxels,
        endpoints,
        branch_points,
        isolated,
        junctions,
        branches,
    }
}

fn cluster_branch_points(grid: &Grid, branch_points: &[usize], degree: &[u8]) -> Vec<Vec<usize>> {
    let mut seen: HashMap<usize, bool> = branch_points.iter().map(|&b| (b, false)).collect();
    let mut clusters = Vec::new();
    for &b in branch_points {
        if seen[&b] {
            continue;
        }
        seen.insert(b, true);
        let mut cluster = vec![b];
        let mut queue = VecDeque::from([b]);
        while let Some(v) = queue.pop_front() {
            for (j, _) in grid.neighbors26(v) {
                if degree[j] >= 3 && !seen[&j] {
                    seen.insert(j, true);
                    cluster.push(j);
                    queue.push_back(j);
                }
            }
        }
        cluster.sort_unstable();
        clusters.push(cluster);
    }
    clusters
}

/// Whether any axis-aligned 2×2 square of voxels is entirely foreground.
pub fn has_plaquette(mask: &BinaryMask) -> bool {
    let grid = mask.grid();
    let planes: [([i64; 3], [i64; 3]); 3] = [
        ([1, 0, 0], [0, 1, 0]),
        ([1, 0, 0], [0, 0, 1]),
        ([0, 1, 0], [0, 0, 1]),
    ];
    mask.indices().any(|i| {
        let c = grid.coords(i);
        planes.iter().any(|&(a, b)| {
            let ab = [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
            [a, b, ab]
                .iter()
                .all(|&o| grid.offset(c, o).is_some_and(|j| mask.get(j)))
        })
    })
}

/// Whether some 2×2×2 block is entirely foreground.
pub fn has_solid_block(mask: &BinaryMask) -> bool {
    let grid = mask.grid();
    mask.indices().any(|i| {
        let c = grid.coords(i);
        (1..8).all(|s: i64| {
            let o = [s & 1, (s >> 1) & 1, (s >> 2) & 1];
            grid.offset(c, o).is_some_and(|j| mask.get(j))
        })
    })
}

/// Physical length of a chain: the sum of its consecutive step lengths.
pub fn chain_length_mm(chain: &[usize], grid: &Grid) -> Result<f64> {
    let mut total = 0.0;
    for w in chain.windows(2) {
        if !grid.adjacent26(w[0], w[1]) {
            return Err(Error::NonAdjacentChain(w[0], w[1]));
        }
        total += grid.distance_mm(w[0], w[1]);
    }
    Ok(total)
}
