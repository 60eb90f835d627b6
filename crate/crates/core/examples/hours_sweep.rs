//! Target error as the amount of unlabeled adaptation data grows, for the
//! source language and for a second language drawn from the same family.

use grl_asr::harness::{
    build_corpora, fit_normalizer, run_hours_sweep, train_stage1, ExperimentConfig,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = match std::env::args().nth(1) {
        Some(p) => ExperimentConfig::load(p.as_ref())?,
        None => ExperimentConfig::from_toml(include_str!("../../../configs/quick.toml"))?,
    };
    let raw = build_corpora(&cfg)?;
    let corpora = raw.normalized(&fit_normalizer(&cfg, &raw.source_train));
    let s1 = train_stage1(&cfg, &corpora)?;
    for lang in [&cfg.corpus.source_language, &cfg.corpus.cross_language] {
        let table = run_hours_sweep(&cfg, &s1.network, &corpora, lang)?;
        println!("{}", table.render()?);
    }
    Ok(())
}
