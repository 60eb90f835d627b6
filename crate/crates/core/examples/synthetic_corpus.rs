//! Builds every split of a small experiment and writes them to disk.
//!
//! `cargo run --release --example synthetic_corpus [out_dir]`

use grl_asr::harness::{build_corpora, Corpora, ExperimentConfig, SPLIT_NAMES};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ExperimentConfig::from_toml(include_str!("../../../configs/quick.toml"))?;
    let corpora = build_corpora(&cfg)?;
    for (name, d) in SPLIT_NAMES.iter().zip(corpora.splits()) {
        println!(
            "{name:<13} {:>6} frames  {:>3} utterances  {:.4} h  {:?} {}  labels: {}",
            d.len(),
            d.utterances().len(),
            d.hours_equivalent(),
            d.domain(),
            d.language(),
            d.has_labels()
        );
    }
    let out = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("grl-asr-corpora"));
    corpora.save(&out)?;
    let back = Corpora::load(&out)?;
    println!("saved to {} and reloaded: identical = {}", out.display(), back == corpora);
    Ok(())
}
