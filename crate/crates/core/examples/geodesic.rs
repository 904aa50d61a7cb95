//! Compute the truncated geodesic distance feature from a rendered CT and a
//! stage-1 prediction, for each edge-weight metric.
//!
//! Run with `cargo run --release --example geodesic`.

use std::time::Instant;

use airway_recon::geodesic::{gdt_feature, GdtOptions, Metric};
use airway_recon::phantom::{generate, render, PhantomSpec, RenderParams, VesselParams};
use airway_recon::ScalarVolume;

fn main() -> airway_recon::Result<()> {
    let ph = generate(&PhantomSpec::standard())?;
    let ct = render(
        &ph,
        &RenderParams {
            vessel: Some(VesselParams::default()),
            noise_sigma: 10.0,
            seed: 1,
            ..RenderParams::default()
        },
    )?;
    let stage1 = ScalarVolume::from_mask(&ph.label);

    for metric in [Metric::GrayvalueSum, Metric::Gradient, Metric::Euclidean] {
        let start = Instant::now();
        let options = GdtOptions {
            geodesic: metric.into(),
            ..GdtOptions::default()
        };
        let f = gdt_feature(&ct, &stage1, &options)?;
        let inside = f
            .truncated
            .values()
            .data()
            .iter()
            .filter(|&&v| v > 0.0)
            .count();
        println!(
            "{metric:>10}: {} sources, {inside} voxels within th = {}, {:.2?}",
            f.centerline.count(),
            f.truncated.threshold(),
            start.elapsed()
        );
    }
    Ok(())
}
