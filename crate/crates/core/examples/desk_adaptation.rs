//! Desk-scale adaptation: clean source, far-field target, three seeds.
//!
//! `cargo run --release --example desk_adaptation [config.toml]`

use std::time::Instant;

use grl_asr::harness::{
    adapt_once, build_corpora, error_percent, fit_normalizer, rerr, train_stage1, ExperimentConfig,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = match std::env::args().nth(1) {
        Some(p) => ExperimentConfig::load(p.as_ref())?,
        None => ExperimentConfig::default(),
    };
    let t0 = Instant::now();
    let raw = build_corpora(&cfg)?;
    let corpora = raw.normalized(&fit_normalizer(&cfg, &raw.source_train));
    println!(
        "corpora: {} source / {} target frames ({:.1}s)",
        corpora.source_train.len(),
        corpora.target_train.len(),
        t0.elapsed().as_secs_f64()
    );

    let s1 = train_stage1(&cfg, &corpora)?;
    let base = error_percent(&s1.network, &corpora.target_test)?;
    let src = error_percent(&s1.network, &corpora.source_valid)?;
    println!("stage one: source valid error {src:.2}%, target test error {base:.2}%");

    let mut errs = Vec::new();
    for &seed in &cfg.seeds {
        let out = adapt_once(
            &cfg,
            &s1.network,
            &corpora,
            &corpora.target_train,
            cfg.adapt.lambda,
            cfg.adapt.feature_layer,
            seed,
        )?;
        println!("seed {seed}");
        println!("  epoch  lambda  senone-valid  domain-train  domain-valid");
        for r in &out.records {
            println!(
                "  {:>5}  {:>6.2}  {:>12.4}  {:>12.4}  {:>12.4}",
                r.epoch,
                r.lambda_effective,
                r.senone_acc_valid,
                r.domain_acc_train.unwrap_or(f64::NAN),
                r.domain_acc_valid.unwrap_or(f64::NAN)
            );
        }
        println!(
            "  target error {:.2}% (relative reduction {:.1}%)",
            out.target_error,
            rerr(base, out.target_error)?
        );
        errs.push(out.target_error);
    }
    let mean = errs.iter().sum::<f64>() / errs.len() as f64;
    println!(
        "mean adapted error {mean:.2}% vs {base:.2}%: relative reduction {:.1}% ({:.0}s)",
        rerr(base, mean)?,
        t0.elapsed().as_secs_f64()
    );
    Ok(())
}
