//! Stage one alone: supervised training on the close-talk source, then the
//! error on both domains.

use grl_asr::harness::{
    build_corpora, error_percent, fit_normalizer, train_stage1, ExperimentConfig,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ExperimentConfig::from_toml(include_str!("../../../configs/quick.toml"))?;
    let raw = build_corpora(&cfg)?;
    let corpora = raw.normalized(&fit_normalizer(&cfg, &raw.source_train));
    let s1 = train_stage1(&cfg, &corpora)?;
    for r in &s1.records {
        println!(
            "epoch {:>2}  lr {:.1e}  train acc {:.4}  valid acc {:.4}",
            r.epoch, r.learning_rate, r.senone_acc_train, r.senone_acc_valid
        );
    }
    println!(
        "source valid error {:.2}%, target test error {:.2}%",
        error_percent(&s1.network, &corpora.source_valid)?,
        error_percent(&s1.network, &corpora.target_test)?
    );
    Ok(())
}
