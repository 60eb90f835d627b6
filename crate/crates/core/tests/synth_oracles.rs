//! Nearest-centroid oracles over the synthetic corpus: the classes must be
//! separable when clean, the channels must be distinguishable, and some class
//! information must survive the far-field channel.

use grl_asr::corpus::Domain;
use grl_asr::nn::Matrix;
use grl_asr::synth::{
    apply_channel, generate_utterance, synthesize_corpus, ChannelProfile, CorpusRequest,
    FeatureConfig, FeatureExtractor, GeneratorSpec,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn centroids(rows: &[Vec<f64>], labels: &[usize], k: usize) -> Vec<Vec<f64>> {
    let d = rows[0].len();
    let mut c = vec![vec![0.0; d]; k];
    let mut n = vec![0usize; k];
    for (r, &y) in rows.iter().zip(labels) {
        for (a, b) in c[y].iter_mut().zip(r) {
            *a += b;
        }
        n[y] += 1;
    }
    for (ci, ni) in c.iter_mut().zip(n) {
        ci.iter_mut().for_each(|v| *v /= ni.max(1) as f64);
    }
    c
}

fn nearest(c: &[Vec<f64>], x: &[f64]) -> usize {
    let dist = |v: &Vec<f64>| v.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    (0..c.len())
        .min_by(|&a, &b| dist(&c[a]).total_cmp(&dist(&c[b])))
        .unwrap()
}

fn accuracy(c: &[Vec<f64>], rows: &[Vec<f64>], labels: &[usize]) -> f64 {
    let hits = rows.iter().zip(labels).filter(|(r, &y)| nearest(c, r) == y).count();
    hits as f64 / rows.len() as f64
}

fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

/// Per-utterance mean removal, applied to a frames × bands matrix.
fn cmn(m: &Matrix) -> Vec<Vec<f64>> {
    let rows = rows_of(m);
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..m.cols()).map(|c| rows.iter().map(|r| r[c]).sum::<f64>() / n).collect();
    rows.into_iter()
        .map(|r| r.iter().zip(&mean).map(|(a, b)| a - b).collect())
        .collect()
}

#[test]
fn well_separated_fundamentals_are_classifiable() {
    let cfg = FeatureConfig::default();
    let fx = FeatureExtractor::new(cfg.clone()).unwrap();
    let mut spec = GeneratorSpec::for_language(2, 3, "it", 1.0, 0);
    spec.templates[0].f0_hz = 110.0;
    spec.templates[1].f0_hz = 240.0;
    spec.templates[1].formants = spec.templates[0].formants.clone();
    spec.templates[1].noise_level = spec.templates[0].noise_level;
    spec.utterance_length_s = 0.4;
    let frames = (spec.utterance_length_s / cfg.frame_shift_s()) as usize;

    let split = |offset: u64| {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..12u64 {
            let class = (i % 2) as usize;
            let mut rng = ChaCha8Rng::seed_from_u64(offset + i);
            let utt = generate_utterance(&spec, &[(class, frames)], &cfg, &mut rng).unwrap();
            assert!(utt.frame_labels.iter().all(|&y| y == class));
            let m = fx.log_mel(&utt.waveform).unwrap();
            labels.extend(std::iter::repeat_n(class, m.rows()));
            rows.extend(rows_of(&m));
        }
        (rows, labels)
    };
    let (train, ytrain) = split(0);
    let (test, ytest) = split(1000);
    let acc = accuracy(&centroids(&train, &ytrain, 2), &test, &ytest);
    assert!(acc >= 0.9, "nearest-centroid accuracy {acc}");
}

fn corpus(channel: &ChannelProfile, seed: u64, n: usize) -> grl_asr::corpus::FrameDataset {
    let mut spec = GeneratorSpec::for_language(10, 17, "it", 0.5, seed);
    spec.utterance_length_s = 1.0;
    synthesize_corpus(&CorpusRequest {
        spec: &spec,
        channel,
        features: &FeatureConfig::default(),
        n_utterances: n,
        domain: Domain::Source,
        name: "oracle",
    })
    .unwrap()
}

fn utterance_means(d: &grl_asr::corpus::FrameDataset) -> Vec<Vec<f64>> {
    d.utterances()
        .iter()
        .map(|u| {
            let mut m = vec![0.0; d.dims()];
            for r in u.start..u.start + u.frames {
                for (a, b) in m.iter_mut().zip(d.features().row(r)) {
                    *a += b / u.frames as f64;
                }
            }
            m
        })
        .collect()
}

#[test]
fn clean_and_far_field_corpora_are_distinguishable() {
    let far = ChannelProfile { noise_pole: 0.6, ..ChannelProfile::channel4() };
    let clean = ChannelProfile::channel1();
    let train: Vec<Vec<f64>> = [utterance_means(&corpus(&clean, 1, 10)), utterance_means(&corpus(&far, 2, 10))].concat();
    let ytrain: Vec<usize> = (0..20).map(|i| i / 10).collect();
    let test: Vec<Vec<f64>> = [utterance_means(&corpus(&clean, 3, 10)), utterance_means(&corpus(&far, 4, 10))].concat();
    let acc = accuracy(&centroids(&train, &ytrain, 2), &test, &ytrain);
    assert!(acc >= 0.8, "domain accuracy {acc}");
}

#[test]
fn class_information_survives_the_far_field_channel() {
    let cfg = FeatureConfig::default();
    let fx = FeatureExtractor::new(cfg.clone()).unwrap();
    let mut spec = GeneratorSpec::for_language(10, 17, "it", 0.5, 0);
    spec.utterance_length_s = 1.5;
    let far = ChannelProfile { noise_pole: 0.6, ..ChannelProfile::channel4() };
    let collect = |offset: u64, degrade: bool| {
        let (mut rows, mut labels) = (Vec::new(), Vec::new());
        for i in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(offset + i);
            let segs = spec.random_segments(cfg.frame_shift_s(), &mut rng);
            let utt = generate_utterance(&spec, &segs, &cfg, &mut rng).unwrap();
            let wave = if degrade { apply_channel(&utt.waveform, &far, &mut rng) } else { utt.waveform };
            rows.extend(cmn(&fx.log_mel(&wave).unwrap()));
            labels.extend(utt.frame_labels);
        }
        (rows, labels)
    };
    let (train, ytrain) = collect(0, false);
    let (test, ytest) = collect(500, true);
    let c = centroids(&train, &ytrain, 10);
    let clean_acc = accuracy(&c, &collect(500, false).0, &ytest);
    let far_acc = accuracy(&c, &test, &ytest);
    assert!(far_acc > 0.15, "far-field accuracy {far_acc} (clean {clean_acc})");
    assert!(clean_acc > far_acc);
}
