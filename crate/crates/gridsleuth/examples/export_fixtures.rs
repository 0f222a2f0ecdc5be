//! Regenerates the shipped data files from the built-in fixtures.
//!
//! `cargo run -p gridsleuth --example export_fixtures -- data`

use std::path::PathBuf;

use gridsleuth::formats::allocation::save_allocation;
use gridsleuth::formats::feeder::save_feeder;
use gridsleuth_core::feeder::fixtures::ieee13_like;
use gridsleuth_core::loads::ieee13_allocation;

fn main() -> std::io::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data".into()));
    std::fs::create_dir_all(&dir)?;
    let header = "# 13-bus-style test feeder: 38 node/phase pairs, slack 650\n";
    std::fs::write(dir.join("ieee13.feeder"), format!("{header}{}", save_feeder(&ieee13_like())))?;
    std::fs::write(dir.join("ieee13.alloc"), save_allocation(&ieee13_allocation()))?;
    Ok(())
}
