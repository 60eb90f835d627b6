//! One synthetic utterance through both channels and the feature pipeline.

use grl_asr::synth::{
    apply_channel, generate_utterance, ChannelProfile, FeatureConfig, FeatureExtractor,
    GeneratorSpec,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = FeatureConfig::default();
    let fx = FeatureExtractor::new(cfg.clone())?;
    let spec = GeneratorSpec::for_language(10, 17, "it", 0.5, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let segments = spec.random_segments(cfg.frame_shift_s(), &mut rng);
    let utt = generate_utterance(&spec, &segments, &cfg, &mut rng)?;
    println!("{} samples, {} labeled frames, {} segments", utt.waveform.len(), utt.frame_labels.len(), segments.len());

    let far = ChannelProfile { noise_pole: 0.6, ..ChannelProfile::channel4() };
    for (name, wave) in [
        ("close-talk", utt.waveform.clone()),
        ("distant", apply_channel(&utt.waveform, &far, &mut rng)),
    ] {
        let mel = fx.log_mel(&wave)?;
        let full = fx.extract(&wave)?;
        let mean = mel.data().iter().sum::<f64>() / mel.data().len() as f64;
        println!(
            "{name:>10}: log-mel {:?}, spliced {:?}, mean log energy {mean:.3}",
            mel.shape(),
            full.shape()
        );
    }
    println!("configured input dimension {}", cfg.output_dim());
    Ok(())
}
