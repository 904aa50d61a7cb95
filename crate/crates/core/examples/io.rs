//! Write a phantom to MetaImage files and read it back.
//!
//! Run with `cargo run --release --example io -- [output-dir]`.

use std::path::PathBuf;

use airway_recon::io::{read_mask, read_volume, write_mask, write_volume, ElementType};
use airway_recon::phantom::{generate, PhantomSpec};

fn main() -> airway_recon::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("airway-io-example"));
    std::fs::create_dir_all(&dir)?;
    let ph = generate(&PhantomSpec::standard())?;

    let written = write_volume(&ph.hu, dir.join("hu.mha"), ElementType::Short)?;
    written
        .iter()
        .for_each(|p| println!("wrote {}", p.display()));
    let written = write_mask(&ph.label, dir.join("label.mhd"))?;
    written
        .iter()
        .for_each(|p| println!("wrote {}", p.display()));

    assert_eq!(read_volume(dir.join("hu.mha"))?, ph.hu);
    assert_eq!(read_mask(dir.join("label.raw"))?, ph.label);
    println!("both volumes read back unchanged");
    Ok(())
}
