//! How much each loss grows as breakages are cut into a synthetic tree.
//!
//! Run with `cargo run --release --example sensitivity`.

use airway_recon::loss::{sensitivity_experiment, BuiltinLoss, SegmentationLoss};
use airway_recon::phantom::{generate, PhantomSpec};

fn main() -> airway_recon::Result<()> {
    let phantom = generate(&PhantomSpec::standard())?;
    let losses: Vec<BuiltinLoss> = ["bs", "dice", "ce"]
        .iter()
        .map(|s| s.parse())
        .collect::<Result<_, _>>()?;
    let refs: Vec<&dyn SegmentationLoss> = losses.iter().map(|l| l as _).collect();
    let curves = sensitivity_experiment(&phantom.label, &phantom.centerline_gt, &refs, 10, 7)?;

    print!("{:>3}", "k");
    for c in &curves {
        print!("{:>16}", c.loss);
    }
    println!();
    for k in 0..=10 {
        print!("{k:>3}");
        for c in &curves {
            print!("{:>16.6e}", c.r[k]);
        }
        println!();
    }
    Ok(())
}
