//! Score predictions of a phantom tree with the three evaluation metrics.
//!
//! Run with `cargo run --release --example metrics`.

use airway_recon::metrics::{evaluate, EvalOptions};
use airway_recon::phantom::{generate, inject_breakages, PhantomSpec};

fn main() -> airway_recon::Result<()> {
    let ph = generate(&PhantomSpec::standard())?;
    let (broken, _) = inject_breakages(&ph.label, 4, 2, 0)?;
    let fat = ph.label.dilate6();
    let options = EvalOptions::default();
    println!(
        "{:>8} {:>9} {:>9} {:>9}",
        "pred", "length%", "branch%", "prec%"
    );
    for (name, pred) in [("label", &ph.label), ("broken", &broken), ("dilated", &fat)] {
        let r = evaluate(pred, &ph.label, &options)?;
        println!(
            "{name:>8} {:>9.2} {:>9.2} {:>9.2}",
            r.tree_length_pct, r.branch_detected_pct, r.precision_pct
        );
    }
    Ok(())
}
