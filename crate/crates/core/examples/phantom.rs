//! Writes the synthetic 40-slice phantom stack as `phantom%04d.png`.
//!
//! Usage: cargo run --example phantom -- OUT_DIR

use std::path::PathBuf;

use mitotrace::synth::Phantom;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "phantom".into()));
    let ph = Phantom::default();
    ph.write(&dir, |z| format!("phantom{z:04}.png"))?;
    println!("{} slices {}..={} in {}", ph.slice_count(), ph.z_first, ph.z_last, dir.display());
    Ok(())
}
