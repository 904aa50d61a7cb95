//! Repair a broken prediction with an intact one and compare the fusion
//! modes.
//!
//! Run with `cargo run --release --example fusion`.

use airway_recon::fusion::{count_breakages, embed_fuse, FusionMode};
use airway_recon::metrics::{evaluate, EvalOptions};
use airway_recon::phantom::{generate, inject_breakages, PhantomSpec};
use airway_recon::ScalarVolume;

fn main() -> airway_recon::Result<()> {
    let ph = generate(&PhantomSpec::standard())?;
    let (broken, gaps) = inject_breakages(&ph.label, 5, 2, 3)?;
    println!(
        "fine-tune prediction: {} breakages from {} gaps",
        count_breakages(&broken),
        gaps.len()
    );

    let p_f = ScalarVolume::from_mask(&broken);
    let p_g = ScalarVolume::from_mask(&ph.label.dilate6());
    for mode in [FusionMode::G2F, FusionMode::F2G, FusionMode::Add] {
        let r = embed_fuse(&p_f, &p_g, 0.5, mode)?;
        let e = evaluate(&r.fused, &ph.label, &EvalOptions::default())?;
        println!(
            "{mode}: {} missing centerline voxels, {} embedded, breakages {} -> {}, \
             length {:.1}%, precision {:.1}%",
            r.missing_centerline.len(),
            r.embedded_voxels,
            r.components_before.saturating_sub(1),
            count_breakages(&r.fused),
            e.tree_length_pct,
            e.precision_pct
        );
    }
    Ok(())
}
