//! Thin a phantom to its centerline and split it into branches.
//!
//! Run with `cargo run --release --example skeleton`.

use airway_recon::phantom::{generate, PhantomSpec};
use airway_recon::skeleton::{chain_length_mm, decompose, has_solid_block, skeletonize};

fn main() -> airway_recon::Result<()> {
    let ph = generate(&PhantomSpec::standard())?;
    let centerline = skeletonize(&ph.label);
    let graph = decompose(&centerline);
    println!(
        "{} label voxels thinned to {} centerline voxels",
        ph.label.count(),
        centerline.count()
    );
    println!(
        "{} endpoints, {} junctions, {} branches (the generator built {})",
        graph.endpoints().len(),
        graph.junctions().len(),
        graph.branches().len(),
        ph.branches_gt.branches().len()
    );
    println!("no 2x2x2 block left: {}", !has_solid_block(&centerline));
    let grid = centerline.grid();
    let total: f64 = graph
        .branches()
        .iter()
        .map(|c| chain_length_mm(c, &grid))
        .sum::<airway_recon::Result<f64>>()?;
    println!("total centerline length {total:.1} mm");
    Ok(())
}
