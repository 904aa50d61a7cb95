//! Run the bundled end-to-end configuration through the command line entry
//! point: phantom, geodesic feature, fusion and evaluation.
//!
//! Run with `cargo run --release --example pipeline`.

use std::path::Path;

fn main() {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/phantom_pipeline.cfg");
    let code =
        airway_recon::cli::run_from(["airway", "pipeline", "--config", config.to_str().unwrap()]);
    if code == 0 {
        let report = Path::new(env!("CARGO_MANIFEST_DIR")).join("target/pipeline-out/report.jsonl");
        println!("records appended to {}", report.display());
    }
    std::process::exit(code);
}
