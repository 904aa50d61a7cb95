//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines always reach stdout.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use airway_recon::fusion::{count_breakages, embed_fuse, FusionMode};
use airway_recon::geodesic::{
    gdt_feature, geodesic_map, path_length, step_lengths, truncate, truncate_value, GdtOptions,
    Metric,
};
use airway_recon::io::{
    read_mask, read_volume, write_mask, write_values, write_volume, ElementType,
};
use airway_recon::loss::{
    bs_loss, bs_loss_grad, sensitivity_experiment, BuiltinLoss, SegmentationLoss, DEFAULT_EPSILON,
};
use airway_recon::metrics::{evaluate, EvalOptions};
use airway_recon::phantom::{
    generate, inject_breakages, render, PhantomSpec, RenderParams, VesselParams,
};
use airway_recon::skeleton::{has_solid_block, skeletonize};
use airway_recon::volume::{binarize, count_components_26};
use airway_recon::{BinaryMask, Grid, ScalarVolume};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- criterion 1

const INF: f64 = f64::INFINITY;

/// All-pairs shortest paths over an explicitly enumerated 26-neighbour graph.
fn floyd_warshall(n: usize, edges: &[(usize, usize, f64)]) -> Vec<f64> {
    let mut d = vec![INF; n * n];
    for i in 0..n {
        d[i * n + i] = 0.0;
    }
    for &(a, b, w) in edges {
        if w < d[a * n + b] {
            d[a * n + b] = w;
        }
    }
    for k in 0..n {
        for i in 0..n {
            let dik = d[i * n + k];
            if dik == INF {
                continue;
            }
            for j in 0..n {
                let c = dik + d[k * n + j];
                if c < d[i * n + j] {
                    d[i * n + j] = c;
                }
            }
        }
    }
    d
}

/// Floyd-Warshall on step-class counts, so lengths are formed exactly as a
/// sum over the optimal step multiset.
fn floyd_warshall_steps(n: usize, edges: &[(usize, usize, usize)], lengths: &[f64; 7]) -> Vec<f64> {
    let mut d: Vec<Option<[u32; 7]>> = vec![None; n * n];
    for i in 0..n {
        d[i * n + i] = Some([0; 7]);
    }
    for &(a, b, class) in edges {
        let mut c = [0; 7];
        c[class] = 1;
        d[a * n + b] = Some(c);
    }
    let len = |c: &Option<[u32; 7]>| c.map_or(INF, |c| path_length(&c, lengths));
    for k in 0..n {
        for i in 0..n {
            let Some(ik) = d[i * n + k] else { continue };
            for j in 0..n {
                let Some(kj) = d[k * n + j] else { continue };
                let mut c = ik;
                for t in 0..7 {
                    c[t] += kj[t];
                }
                if path_length(&c, lengths) < len(&d[i * n + j]) {
                    d[i * n + j] = Some(c);
                }
            }
        }
    }
    d.iter().map(len).collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let spacings = [[1.0, 1.0, 1.0], [0.7, 0.7, 1.3], [0.5, 0.9, 1.7]];
    let grids = 600;
    for case in 0..grids {
        let dims = [
            rng.random_range(1..=5),
            rng.random_range(1..=5),
            rng.random_range(1..=5),
        ];
        let spacing = spacings[rng.random_range(0..spacings.len())];
        let grid = Grid::new(dims, spacing).unwrap();
        let n = grid.len();
        let gray: Vec<f64> = (0..n).map(|_| rng.random_range(0..=20) as f64).collect();
        let gray = ScalarVolume::new(grid, gray).unwrap();
        let mut sources = BinaryMask::empty(grid);
        for i in 0..n {
            if rng.random_bool(0.15) {
                sources.set(i, true);
            }
        }
        if sources.is_empty() {
            sources.set(rng.random_range(0..n), true);
        }

        // Explicit edge list from coordinates, independent of the library's
        // neighbour iteration.
        let coords: Vec<[i64; 3]> = (0..n).map(|i| grid.coords(i).map(|c| c as i64)).collect();
        let mut pairs = Vec::new();
        for a in 0..n {
            for b in 0..n {
                let d = [0, 1, 2].map(|k| coords[b][k] - coords[a][k]);
                if a != b && d.iter().all(|x| x.abs() <= 1) {
                    let class = (d[0] != 0) as usize
                        | ((d[1] != 0) as usize) << 1
                        | ((d[2] != 0) as usize) << 2;
                    pairs.push((a, b, class - 1));
                }
            }
        }
        let g = gray.data();
        let lengths = step_lengths(spacing);
        let all_pairs = [
            (
                Metric::GrayvalueSum,
                floyd_warshall(
                    n,
                    &pairs
                        .iter()
                        .map(|&(a, b, _)| (a, b, g[a] + g[b]))
                        .collect::<Vec<_>>(),
                ),
            ),
            (
                Metric::Gradient,
                floyd_warshall(
                    n,
                    &pairs
                        .iter()
                        .map(|&(a, b, _)| (a, b, (g[a] - g[b]).abs()))
                        .collect::<Vec<_>>(),
                ),
            ),
            (Metric::Euclidean, floyd_warshall_steps(n, &pairs, &lengths)),
        ];
        for (metric, d) in all_pairs {
            let field = geodesic_map(&gray, &sources, metric).unwrap();
            for v in 0..n {
                let expected = sources.indices().map(|s| d[s * n + v]).fold(INF, f64::min);
                ensure(field.get(v).to_bits() == expected.to_bits(), || {
                    format!(
                        "grid {case} {dims:?} metric {metric} voxel {v}: got {} expected {expected}",
                        field.get(v)
                    )
                })?;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 10.0, || format!("took {secs:.2} s"))?;
    Ok(format!(
        "{grids} grids x 3 metrics bit-identical to Floyd-Warshall, {secs:.2} s"
    ))
}

// ---------------------------------------------------------------- criterion 2

fn criterion_2() -> Outcome {
    let mut checked = 0;
    for th in [512.0, 100.0, 3.0] {
        for delta in [1.0, 0.5, 1.0 / 1024.0] {
            let g = [0.0, th / 2.0, th - delta, th, th + delta, INF];
            let expected = [th, th / 2.0, delta, 0.0, 0.0, 0.0];
            for (gi, ei) in g.iter().zip(expected) {
                let out = truncate_value(*gi, th);
                ensure(out.to_bits() == ei.to_bits(), || {
                    format!("th {th}, g {gi}: got {out}, expected {ei}")
                })?;
                checked += 1;
            }
        }
    }
    // The same law applied to a computed field: a row of voxels with gray
    // value a lies at distances 0, 2a, 4a, ...
    let grid = Grid::isotropic([9, 1, 1]).unwrap();
    let gray = ScalarVolume::filled(grid, 32.0).unwrap();
    let field = geodesic_map(
        &gray,
        &BinaryMask::from_indices(grid, [0]),
        Metric::GrayvalueSum,
    )
    .unwrap();
    let t = truncate(&field, 256.0).unwrap();
    let want = [256.0, 192.0, 128.0, 64.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    ensure(t.values().data() == want, || {
        format!("field truncation gave {:?}", t.values().data())
    })?;
    Ok(format!(
        "{checked} sampled (g, th) pairs and a computed field match exactly"
    ))
}

// ---------------------------------------------------------------- criterion 3

fn random_spec(rng: &mut ChaCha8Rng) -> PhantomSpec {
    PhantomSpec {
        dims: [64, 64, 72],
        spacing: [1.0; 3],
        depth: rng.random_range(1..=4),
        root_radius: rng.random_range(2.0..4.0),
        radius_decay: rng.random_range(0.6..0.9),
        segment_length: rng.random_range(10.0..15.0),
        branch_angle: rng.random_range(50.0..90.0),
        seed: rng.random(),
    }
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut done = 0;
    let mut attempts = 0;
    while done < 50 {
        attempts += 1;
        let spec = random_spec(&mut rng);
        let Ok(ph) = generate(&spec) else { continue };
        let skel = skeletonize(&ph.label);
        let before = count_components_26(&ph.label);
        let after = count_components_26(&skel);
        ensure(before == after, || {
            format!("{spec:?}: components {before} -> {after}")
        })?;
        ensure(skeletonize(&skel) == skel, || {
            format!("{spec:?}: not idempotent")
        })?;
        ensure(skel.is_subset_of(&ph.label), || {
            format!("{spec:?}: not a subset")
        })?;
        ensure(!has_solid_block(&skel), || {
            format!("{spec:?}: 2x2x2 block survives")
        })?;
        done += 1;
    }
    Ok(format!("50/50 phantoms pass ({attempts} specs drawn)"))
}

// ---------------------------------------------------------------- criterion 4

fn criterion_4() -> Outcome {
    let mut cases = 0;
    for seed in [7u64, 21] {
        let ph = generate(&PhantomSpec {
            seed,
            ..PhantomSpec::standard()
        })
        .map_err(|e| e.to_string())?;
        let options = EvalOptions::default();
        for donor in [ph.label.clone(), ph.label.dilate6()] {
            let p_g = ScalarVolume::from_mask(&donor);
            for k in [1, 2, 3, 5] {
                let (broken, _) = inject_breakages(&ph.label, k, 2, seed + k as u64)
                    .map_err(|e| e.to_string())?;
                ensure(count_breakages(&broken) == k, || {
                    format!("seed {seed} k {k}: injection failed")
                })?;
                let r = embed_fuse(
                    &ScalarVolume::from_mask(&broken),
                    &p_g,
                    0.5,
                    FusionMode::G2F,
                )
                .map_err(|e| e.to_string())?;
                let before = evaluate(&broken, &ph.label, &options)
                    .unwrap()
                    .tree_length_pct;
                let after = evaluate(&r.fused, &ph.label, &options)
                    .unwrap()
                    .tree_length_pct;
                ensure(count_breakages(&r.fused) == 0, || {
                    format!(
                        "seed {seed} k {k}: {} breakages remain",
                        count_breakages(&r.fused)
                    )
                })?;
                ensure(broken.is_subset_of(&r.fused), || {
                    format!("seed {seed} k {k}: fused drops P_f voxels")
                })?;
                ensure(after >= before, || {
                    format!("seed {seed} k {k}: length {before} -> {after}")
                })?;
                cases += 1;
            }
        }
    }
    Ok(format!(
        "{cases} cases repaired to 0 breakages with P_f kept and length not lower"
    ))
}

// ---------------------------------------------------------------- criterion 5

fn criterion_5() -> Outcome {
    let mut cases = 0;
    let check = |p_f: &ScalarVolume, p_g: &ScalarVolume, what: &str| -> Result<(), String> {
        let add = embed_fuse(p_f, p_g, 0.5, FusionMode::Add)
            .map_err(|e| e.to_string())?
            .fused;
        let g2f = embed_fuse(p_f, p_g, 0.5, FusionMode::G2F)
            .map_err(|e| e.to_string())?
            .fused;
        let b_f = binarize(p_f, 0.5).unwrap();
        ensure(g2f.is_subset_of(&add), || {
            format!("{what}: G2F not inside ADD")
        })?;
        ensure(b_f.is_subset_of(&g2f), || {
            format!("{what}: P_f not inside G2F")
        })
    };
    let ph = generate(&PhantomSpec::standard()).map_err(|e| e.to_string())?;
    for k in [1, 3, 5] {
        let (broken, _) = inject_breakages(&ph.label, k, 2, k as u64).map_err(|e| e.to_string())?;
        check(
            &ScalarVolume::from_mask(&broken),
            &ScalarVolume::from_mask(&ph.label.dilate6()),
            &format!("phantom k {k}"),
        )?;
        cases += 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..40 {
        let grid = Grid::isotropic([12, 11, 10]).unwrap();
        let mut rand_vol = || {
            ScalarVolume::new(grid, (0..grid.len()).map(|_| rng.random::<f64>()).collect()).unwrap()
        };
        let (p_f, p_g) = (rand_vol(), rand_vol());
        check(&p_f, &p_g, &format!("random case {case}"))?;
        cases += 1;
    }
    Ok(format!("ADD >= G2F >= P_f on {cases} input pairs"))
}

// ---------------------------------------------------------------- criterion 6

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for case in 0..50 {
        let grid = Grid::isotropic([
            rng.random_range(2..8),
            rng.random_range(2..8),
            rng.random_range(1..6),
        ])
        .unwrap();
        let n = grid.len();
        let mut centerline = BinaryMask::empty(grid);
        for i in 0..n {
            if rng.random_bool(0.3) {
                centerline.set(i, true);
            }
        }
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..0.9)).collect();
        let pred = ScalarVolume::new(grid, p.clone()).unwrap();
        let grad = bs_loss_grad(&pred, &centerline, DEFAULT_EPSILON).unwrap();
        let h = 1e-4;
        for i in 0..n {
            let mut plus = p.clone();
            let mut minus = p.clone();
            plus[i] += h;
            minus[i] -= h;
            let lp = bs_loss(
                &ScalarVolume::new(grid, plus).unwrap(),
                &centerline,
                DEFAULT_EPSILON,
            )
            .unwrap()
            .value;
            let lm = bs_loss(
                &ScalarVolume::new(grid, minus).unwrap(),
                &centerline,
                DEFAULT_EPSILON,
            )
            .unwrap()
            .value;
            let fd = (lp - lm) / (2.0 * h);
            let an = grad.get(i);
            if an == 0.0 {
                ensure(fd == 0.0, || {
                    format!("case {case} voxel {i}: off-centerline fd {fd}")
                })?;
            } else {
                let rel = ((fd - an) / an).abs();
                worst = worst.max(rel);
                ensure(rel <= 1e-6, || {
                    format!("case {case} voxel {i}: fd {fd} vs {an}")
                })?;
            }
        }

        // Growing a hard prediction off the centerline leaves the loss unchanged.
        let hard = BinaryMask::new(grid, p.iter().map(|&x| x > 0.5).collect()).unwrap();
        let mut grown = hard.clone();
        for i in hard.dilate6().indices() {
            if !centerline.get(i) {
                grown.set(i, true);
            }
        }
        let a = bs_loss(
            &ScalarVolume::from_mask(&hard),
            &centerline,
            DEFAULT_EPSILON,
        )
        .unwrap()
        .value;
        let b = bs_loss(
            &ScalarVolume::from_mask(&grown),
            &centerline,
            DEFAULT_EPSILON,
        )
        .unwrap()
        .value;
        ensure(a.to_bits() == b.to_bits(), || {
            format!("case {case}: dilation changed loss {a} -> {b}")
        })?;
    }
    let grid = Grid::isotropic([100, 1, 1]).unwrap();
    let line = BinaryMask::from_indices(grid, 0..100);
    let half = ScalarVolume::new(
        grid,
        (0..100).map(|i| if i < 50 { 1.0 } else { 0.0 }).collect(),
    )
    .unwrap();
    let v = bs_loss(&half, &line, DEFAULT_EPSILON).unwrap().value;
    ensure((v - 0.5).abs() < 1e-4, || {
        format!("half centerline gave {v}")
    })?;
    Ok(format!(
        "50 gradient checks (worst rel. error {worst:.1e}), dilation invariance exact, half-centerline {v:.6}"
    ))
}

// ---------------------------------------------------------------- criterion 7

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let ph = generate(&PhantomSpec::standard()).map_err(|e| e.to_string())?;
    let losses: Vec<BuiltinLoss> = ["bs", "dice", "ce"]
        .iter()
        .map(|s| s.parse().unwrap())
        .collect();
    let refs: Vec<&dyn SegmentationLoss> = losses.iter().map(|l| l as _).collect();
    let curves = sensitivity_experiment(&ph.label, &ph.centerline_gt, &refs, 10, 7)
        .map_err(|e| e.to_string())?;
    let (bs, dice, ce) = (&curves[0].r, &curves[1].r, &curves[2].r);
    ensure(bs.len() == 11, || format!("{} points", bs.len()))?;
    for k in 1..=10 {
        ensure(bs[k] > bs[k - 1], || {
            format!("r_BS not increasing at k {k}: {:?}", bs)
        })?;
        ensure(bs[k] > dice[k] && bs[k] > ce[k], || {
            format!("k {k}: r_BS {} r_Dice {} r_CE {}", bs[k], dice[k], ce[k])
        })?;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("took {secs:.1} s"))?;
    Ok(format!(
        "r_10: BS {:.3e}, Dice {:.3e}, CE {:.3e}; {secs:.1} s",
        bs[10], dice[10], ce[10]
    ))
}

// ---------------------------------------------------------------- criterion 8

fn chain_mm(grid: &Grid, chain: &[[usize; 3]]) -> f64 {
    let s = grid.spacing();
    chain
        .windows(2)
        .map(|w| {
            (0..3)
                .map(|k| ((w[1][k] as f64 - w[0][k] as f64) * s[k]).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .sum()
}

fn criterion_8() -> Outcome {
    let options = EvalOptions::default();
    let grid = Grid::new([15, 15, 3], [0.7, 1.1, 2.0]).unwrap();
    let idx = |c: &[[usize; 3]]| {
        c.iter()
            .map(|&[x, y, z]| grid.index(x, y, z))
            .collect::<Vec<_>>()
    };

    let tube: Vec<[usize; 3]> = (1..14).map(|x| [x, 7, 1]).collect();
    let tube_mask = BinaryMask::from_indices(grid, idx(&tube));
    let r = evaluate(&tube_mask, &tube_mask, &options).unwrap();
    let single = (r.precision_pct, r.tree_length_pct, r.branch_detected_pct);
    ensure(single == (100.0, 100.0, 100.0), || {
        format!("single tube gave {single:?}")
    })?;

    let trunk: Vec<[usize; 3]> = (0..=7).map(|y| [7, y, 1]).collect();
    let left: Vec<[usize; 3]> = (0..=6).map(|d| [7 - d, 7 + d, 1]).collect();
    let right: Vec<[usize; 3]> = (0..=6).map(|d| [7 + d, 7 + d, 1]).collect();
    let y_mask = BinaryMask::from_indices(
        grid,
        [&trunk, &left, &right].into_iter().flat_map(|c| idx(c)),
    );
    let r = evaluate(&y_mask, &y_mask, &options).unwrap();
    let whole = (r.precision_pct, r.tree_length_pct, r.branch_detected_pct);
    ensure(whole == (100.0, 100.0, 100.0), || {
        format!("Y-tree gave {whole:?}")
    })?;

    let pred = BinaryMask::from_indices(grid, [&trunk, &left].into_iter().flat_map(|c| idx(c)));
    let r = evaluate(&pred, &y_mask, &options).unwrap();
    ensure((r.branch_detected_pct - 66.7).abs() <= 0.1, || {
        format!("branch {}", r.branch_detected_pct)
    })?;
    let total = chain_mm(&grid, &trunk) + chain_mm(&grid, &left) + chain_mm(&grid, &right);
    let hit = chain_mm(&grid, &trunk) + chain_mm(&grid, &left);
    let expected = 100.0 * hit / total;
    let rel = ((r.tree_length_pct - expected) / expected).abs();
    ensure(rel <= 1e-9, || {
        format!("tree length {} vs {expected}", r.tree_length_pct)
    })?;
    ensure(((r.tree_length_mm - total) / total).abs() <= 1e-9, || {
        format!("total length {} vs {total}", r.tree_length_mm)
    })?;
    Ok(format!(
        "tube {single:?}, Y {whole:?}, Y minus branch: branch {:.2}%, length {:.6}% (rel. err {rel:.1e})",
        r.branch_detected_pct, r.tree_length_pct
    ))
}

// ---------------------------------------------------------------- criterion 9

fn criterion_9() -> Outcome {
    let spec = PhantomSpec::patch128();
    let ph = generate(&spec).map_err(|e| e.to_string())?;
    let params = RenderParams {
        vessel: Some(VesselParams::default()),
        noise_sigma: 15.0,
        seed: 9,
        ..RenderParams::default()
    };
    let ct = render(&ph, &params).map_err(|e| e.to_string())?;
    let ct = ScalarVolume::new(ct.grid(), ct.data().iter().map(|v| v.round()).collect()).unwrap();
    let stage1 = ScalarVolume::from_mask(&ph.label);
    let start = Instant::now();
    let f = gdt_feature(&ct, &stage1, &GdtOptions::default()).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 30.0, || format!("gdt took {secs:.1} s"))?;

    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let grid = ct.grid();
    write_volume(&ct, d.join("ct.mhd"), ElementType::Short).unwrap();
    write_mask(&ph.label, d.join("label.mha")).unwrap();
    write_values(
        &grid,
        f.field.distances(),
        d.join("geo.mhd"),
        ElementType::Double,
    )
    .unwrap();
    write_volume(f.truncated.values(), d.join("gdt.mhd"), ElementType::Double).unwrap();
    ensure(read_volume(d.join("ct.mhd")).unwrap() == ct, || {
        "HU volume changed on read".into()
    })?;
    ensure(read_mask(d.join("label.mha")).unwrap() == ph.label, || {
        "label changed on read".into()
    })?;
    ensure(
        read_volume(d.join("gdt.mhd")).unwrap() == *f.truncated.values(),
        || "gdt changed on read".into(),
    )?;
    write_volume(
        &read_volume(d.join("ct.mhd")).unwrap(),
        d.join("ct2.mhd"),
        ElementType::Short,
    )
    .unwrap();
    write_mask(
        &read_mask(d.join("label.mha")).unwrap(),
        d.join("label2.mha"),
    )
    .unwrap();
    write_volume(
        &read_volume(d.join("gdt.mhd")).unwrap(),
        d.join("gdt2.mhd"),
        ElementType::Double,
    )
    .unwrap();
    for (a, b) in [
        ("ct.raw", "ct2.raw"),
        ("label.mha", "label2.mha"),
        ("gdt.raw", "gdt2.raw"),
    ] {
        let same = std::fs::read(d.join(a)).unwrap() == std::fs::read(d.join(b)).unwrap();
        ensure(same, || format!("{a} and {b} differ"))?;
    }
    Ok(format!(
        "gdt on 128^3 ({} centerline sources) in {secs:.2} s; round-trips byte-identical",
        f.centerline.count()
    ))
}

// ---------------------------------------------------------------- criterion 10

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

fn criterion_10() -> Outcome {
    let bundled = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/phantom_pipeline.cfg");
    let text = std::fs::read_to_string(&bundled).unwrap();
    let text: String = text
        .lines()
        .map(|l| {
            if l.starts_with("out_dir") {
                "out_dir = out"
            } else {
                l
            }
        })
        .collect::<Vec<_>>()
        .join("\n");
    let mut snapshots = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        std::fs::write(&cfg, &text).unwrap();
        let status = Command::new(env!("CARGO_BIN_EXE_airway"))
            .args(["pipeline", "--config"])
            .arg(&cfg)
            .status()
            .unwrap();
        ensure(status.success(), || {
            format!("pipeline exited with {status}")
        })?;
        snapshots.push(snapshot(&dir.path().join("out")));
    }
    ensure(snapshots[0] == snapshots[1], || {
        let differ: Vec<_> = snapshots[0]
            .iter()
            .filter(|(k, v)| snapshots[1].get(*k) != Some(v))
            .map(|(k, _)| k.clone())
            .collect();
        format!("artifacts differ: {differ:?}")
    })?;
    let has_eval =
        String::from_utf8_lossy(&snapshots[0]["report.jsonl"]).contains("\"kind\":\"evaluation\"");
    ensure(has_eval, || "no evaluation record".into())?;
    Ok(format!(
        "{} artifacts byte-identical across two runs",
        snapshots[0].len()
    ))
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        ("geodesic oracle equivalence", criterion_1),
        ("truncation law", criterion_2),
        ("skeleton suite", criterion_3),
        ("fusion repair", criterion_4),
        ("fusion ordering", criterion_5),
        ("BS loss", criterion_6),
        ("breakage sensitivity", criterion_7),
        ("metrics oracle", criterion_8),
        ("performance budget", criterion_9),
        ("end-to-end determinism", criterion_10),
    ];
    let mut failed = 0;
    for (n, (name, run)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", n + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", n + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
