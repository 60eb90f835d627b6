//! λ by feature-layer grid on the quick config (or a config path argument).

use grl_asr::harness::{
    build_corpora, fit_normalizer, run_grid, train_stage1, ExperimentConfig,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = match std::env::args().nth(1) {
        Some(p) => ExperimentConfig::load(p.as_ref())?,
        None => ExperimentConfig::from_toml(include_str!("../../../configs/quick.toml"))?,
    };
    let raw = build_corpora(&cfg)?;
    let corpora = raw.normalized(&fit_normalizer(&cfg, &raw.source_train));
    let s1 = train_stage1(&cfg, &corpora)?;
    let table = run_grid(&cfg, &s1.network, &corpora)?;
    print!("{}", table.render()?);
    if let Some(best) = table.argmin() {
        println!("best cell: {:?}", table.rows[best].key);
    }
    Ok(())
}
