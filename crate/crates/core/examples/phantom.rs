//! Generate a synthetic airway tree and render it as a CT volume.
//!
//! Run with `cargo run --release --example phantom`.

use airway_recon::phantom::{generate, render, PhantomSpec, RenderParams, VesselParams};
use airway_recon::volume::count_components_26;

fn main() -> airway_recon::Result<()> {
    let spec = PhantomSpec::standard();
    let ph = generate(&spec)?;
    println!(
        "{} segments, {} label voxels, {} centerline voxels, {} component(s)",
        ph.segments.len(),
        ph.label.count(),
        ph.centerline_gt.count(),
        count_components_26(&ph.label)
    );
    for (g, r) in (1..=spec.depth).map(|g| {
        let r = ph
            .segments
            .iter()
            .find(|s| s.generation == g)
            .map_or(0.0, |s| s.radius);
        (g, r)
    }) {
        println!("generation {g}: radius {r:.2} voxels");
    }

    let hu = render(
        &ph,
        &RenderParams {
            vessel: Some(VesselParams::default()),
            noise_sigma: 20.0,
            seed: spec.seed,
            ..RenderParams::default()
        },
    )?;
    let (lo, hi) = hu
        .data()
        .iter()
        .fold((f64::MAX, f64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    println!("rendered HU range [{lo:.0}, {hi:.0}]");
    Ok(())
}
