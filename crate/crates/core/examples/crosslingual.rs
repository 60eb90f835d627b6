//! Same-language versus cross-language adaptation data at equal size.

use grl_asr::harness::{
    adapt_once, build_corpora, error_percent, fit_normalizer, rerr, train_stage1,
    ExperimentConfig,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ExperimentConfig::from_toml(include_str!("../../../configs/quick.toml"))?;
    let raw = build_corpora(&cfg)?;
    let corpora = raw.normalized(&fit_normalizer(&cfg, &raw.source_train));
    let s1 = train_stage1(&cfg, &corpora)?;
    let base = error_percent(&s1.network, &corpora.target_test)?;
    println!("stage one target error {base:.2}%");
    for (lang, data) in [
        (&cfg.corpus.source_language, &corpora.target_train),
        (&cfg.corpus.cross_language, &corpora.cross_train),
    ] {
        let mut errs = Vec::new();
        for &seed in &cfg.seeds {
            let out = adapt_once(&cfg, &s1.network, &corpora, data, cfg.adapt.lambda, cfg.adapt.feature_layer, seed)?;
            errs.push(out.target_error);
        }
        let mean = errs.iter().sum::<f64>() / errs.len() as f64;
        println!(
            "{lang}: {:.3} h of unlabeled speech, error {mean:.2}%, relative reduction {:.1}%",
            data.hours_equivalent(),
            rerr(base, mean)?
        );
    }
    Ok(())
}
