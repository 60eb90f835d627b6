//! Synthetic close-talk and far-field speech-like corpora.
//!
//! Each frame class is a harmonic source shaped by class-specific resonances
//! plus optional band-limited frication noise. Utterances are sequences of
//! class segments; a [`ChannelProfile`] then applies reverberation, additive
//! low-frequency noise and a gain, so the domain shift lives in the signal and
//! reaches the classifier through the regular feature pipeline.

mod channel;
pub mod features;

pub use channel::{apply_channel, degrade_components, ChannelParts, ChannelProfile};
pub use features::{
    delta_features, extract_features, hz_to_mel, mel_to_hz, splice, FeatureConfig,
    FeatureExtractor,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Domain, FrameDataset, Utterance};
use crate::nn::Matrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("data error: {0}")]
    Data(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Formant {
    pub center_hz: f64,
    pub bandwidth_hz: f64,
    pub gain: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassTemplate {
    pub f0_hz: f64,
    pub formants: Vec<Formant>,
    /// Relative level of the frication noise component.
    pub noise_level: f64,
    pub noise_center_hz: f64,
}

/// Knobs of the random variation applied on top of the class templates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Variation {
    /// Per-utterance resonance scaling drawn from `1 ± speaker_scale`.
    pub speaker_scale: f64,
    /// Per-segment resonance jitter, relative.
    pub segment_jitter: f64,
    /// Per-utterance level spread in dB (uniform ±).
    pub level_db: f64,
    pub min_segment_frames: usize,
    pub max_segment_frames: usize,
}

impl Default for Variation {
    fn default() -> Self {
        Self {
            speaker_scale: 0.12,
            segment_jitter: 0.1,
            level_db: 3.0,
            min_segment_frames: 6,
            max_segment_frames: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub n_classes: usize,
    pub templates: Vec<ClassTemplate>,
    pub utterance_length_s: f64,
    pub seed: u64,
    pub language_tag: String,
    pub variation: Variation,
}

/// Stable 64-bit FNV-1a, used to derive per-language streams.
fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn base_templates(n_classes: usize, family_seed: u64) -> Vec<ClassTemplate> {
    let mut rng = ChaCha8Rng::seed_from_u64(family_seed);
    (0..n_classes)
        .map(|_| ClassTemplate {
            f0_hz: rng.random_range(100.0..220.0),
            formants: vec![
                Formant {
                    center_hz: rng.random_range(250.0..900.0),
                    bandwidth_hz: rng.random_range(60.0..140.0),
                    gain: 1.0,
                },
                Formant {
                    center_hz: rng.random_range(900.0..2600.0),
                    bandwidth_hz: rng.random_range(80.0..180.0),
                    gain: rng.random_range(0.4..1.0),
                },
                Formant {
                    center_hz: rng.random_range(2400.0..4200.0),
                    bandwidth_hz: rng.random_range(120.0..260.0),
                    gain: rng.random_range(0.2..0.7),
                },
            ],
            noise_level: if rng.random_bool(0.4) {
                rng.random_range(0.05..0.4)
            } else {
                0.0
            },
            noise_center_hz: rng.random_range(3000.0..6500.0),
        })
        .collect()
}

impl GeneratorSpec {
    /// Templates for `language_tag`, derived from a shared class family.
    ///
    /// Each language keeps a class's family template (lightly perturbed) with
    /// probability `overlap` and otherwise moves its resonances substantially,
    /// giving overlapping but non-identical inventories across languages.
    pub fn for_language(
        n_classes: usize,
        family_seed: u64,
        language_tag: &str,
        overlap: f64,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(family_seed ^ fnv1a(language_tag));
        let templates = base_templates(n_classes, family_seed)
            .into_iter()
            .map(|mut t| {
                let keep = rng.random_bool(overlap.clamp(0.0, 1.0));
                let spread = if keep { 0.03 } else { 0.25 };
                for f in &mut t.formants {
                    f.center_hz *= 1.0 + rng.random_range(-spread..spread);
                }
                t.f0_hz *= 1.0 + rng.random_range(-spread..spread) * 0.5;
                t
            })
            .collect();
        Self {
            n_classes,
            templates,
            utterance_length_s: 2.0,
            seed,
            language_tag: language_tag.to_string(),
            variation: Variation::default(),
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        if self.templates.len() != self.n_classes || self.n_classes == 0 {
            return Err(SynthError::Config(format!(
                "{} templates for {} classes",
                self.templates.len(),
                self.n_classes
            )));
        }
        let v = &self.variation;
        if v.min_segment_frames == 0 || v.min_segment_frames > v.max_segment_frames {
            return Err(SynthError::Config("invalid segment length range".into()));
        }
        Ok(())
    }

    /// Random class sequence long enough for `utterance_length_s`, together with
    /// per-segment frame counts.
    pub fn random_segments(&self, frame_shift_s: f64, rng: &mut impl Rng) -> Vec<(usize, usize)> {
        let total = (self.utterance_length_s / frame_shift_s).round().max(1.0) as usize;
        let v = &self.variation;
        let mut segs = Vec::new();
        let mut n = 0;
        while n < total {
            let len = rng
                .random_range(v.min_segment_frames..=v.max_segment_frames)
                .min(total - n);
            segs.push((rng.random_range(0..self.n_classes), len));
            n += len;
        }
        segs
    }
}

/// Generated signal plus the class active at each frame centre.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthUtterance {
    pub waveform: Vec<f64>,
    pub frame_labels: Vec<usize>,
}

fn resonance(f: f64, formants: &[Formant], scale: f64) -> f64 {
    formants
        .iter()
        .map(|fm| {
            let c = fm.center_hz * scale;
            let x = (f - c) / fm.bandwidth_hz;
            fm.gain / (1.0 + x * x)
        })
        .sum()
}

/// Synthesizes `segments` of `(class, frames)` at the feature frame rate.
///
/// Segment boundaries fall on multiples of the frame shift and the waveform is
/// padded so that frame `t` has its centre inside the segment that labels it.
pub fn generate_utterance(
    spec: &GeneratorSpec,
    segments: &[(usize, usize)],
    features: &FeatureConfig,
    rng: &mut impl Rng,
) -> Result<SynthUtterance, SynthError> {
    spec.validate()?;
    if let Some(&(c, _)) = segments.iter().find(|(c, _)| *c >= spec.n_classes) {
        return Err(SynthError::Data(format!(
            "class {c} out of range for {} classes",
            spec.n_classes
        )));
    }
    let sr = features.sample_rate_hz as f64;
    let shift = features.frame_shift();
    let len = features.frame_length();
    let total_frames: usize = segments.iter().map(|s| s.1).sum();
    if total_frames == 0 {
        return Err(SynthError::Data("utterance has no frames".into()));
    }
    let n_samples = (total_frames - 1) * shift + len;

    let v = &spec.variation;
    let speaker = 1.0 + rng.random_range(-v.speaker_scale..=v.speaker_scale);
    let level = 10f64.powf(rng.random_range(-v.level_db..=v.level_db) / 20.0);

    // Segment k owns samples [bounds[k], bounds[k+1]); the centre of frame t is
    // t*shift + len/2, so bounds are offset by len/2.
    let half = len / 2;
    let mut bounds = Vec::with_capacity(segments.len() + 1);
    let mut frames_so_far = 0;
    bounds.push(0usize);
    for &(_, f) in segments {
        frames_so_far += f;
        bounds.push((frames_so_far * shift + half).min(n_samples));
    }
    *bounds.last_mut().unwrap() = n_samples;

    let mut wave = vec![0.0; n_samples];
    let fade = (0.004 * sr) as usize;
    let nyquist = sr / 2.0;
    for (k, &(class, _)) in segments.iter().enumerate() {
        let (start, end) = (bounds[k], bounds[k + 1]);
        if end <= start {
            continue;
        }
        let t = &spec.templates[class];
        let jitter = 1.0 + rng.random_range(-v.segment_jitter..=v.segment_jitter);
        let scale = speaker * jitter;
        let f0 = t.f0_hz * (1.0 + rng.random_range(-0.05..=0.05));
        let n_harm = ((nyquist * 0.95) / f0) as usize;
        let harmonics: Vec<(f64, f64, f64)> = (1..=n_harm)
            .map(|h| {
                let f = h as f64 * f0;
                let amp = resonance(f, &t.formants, scale) / (h as f64).sqrt();
                (2.0 * std::f64::consts::PI * f / sr, amp, rng.random_range(0.0..std::f64::consts::TAU))
            })
            .collect();
        // frication: white noise through a two-pole resonator
        let fc = t.noise_center_hz * scale;
        let r = (-std::f64::consts::PI * 800.0 / sr).exp();
        let (a1, a2) = (2.0 * r * (std::f64::consts::TAU * fc / sr).cos(), -r * r);
        let (mut y1, mut y2) = (0.0, 0.0);
        let seg_len = end - start;
        for i in 0..seg_len {
            let mut s = 0.0;
            for &(w, amp, phase) in &harmonics {
                s += amp * (w * i as f64 + phase).sin();
            }
            let e: f64 = StandardNormal.sample(rng);
            let y = e + a1 * y1 + a2 * y2;
            y2 = y1;
            y1 = y;
            s += t.noise_level * y * (1.0 - r);
            let ramp_in = ((i + 1) as f64 / fade as f64).min(1.0);
            let ramp_out = ((seg_len - i) as f64 / fade as f64).min(1.0);
            wave[start + i] = level * s * ramp_in.min(ramp_out);
        }
    }

    let mut frame_labels = Vec::with_capacity(total_frames);
    for &(class, f) in segments {
        frame_labels.extend(std::iter::repeat_n(class, f));
    }
    debug_assert_eq!(features.frame_count(n_samples), total_frames);
    Ok(SynthUtterance {
        waveform: wave,
        frame_labels,
    })
}

/// Parameters for building a whole dataset from one generator and channel.
#[derive(Clone, Debug)]
pub struct CorpusRequest<'a> {
    pub spec: &'a GeneratorSpec,
    pub channel: &'a ChannelProfile,
    pub features: &'a FeatureConfig,
    pub n_utterances: usize,
    pub domain: Domain,
    /// Prefix of the generated utterance ids.
    pub name: &'a str,
}

/// Generates, degrades and featurizes `n_utterances` labeled utterances.
///
/// Utterance `i` draws from stream `i` of a generator keyed by the spec seed,
/// so any utterance can be regenerated on its own.
pub fn synthesize_corpus(req: &CorpusRequest<'_>) -> Result<FrameDataset, SynthError> {
    let extractor = FeatureExtractor::new(req.features.clone())?;
    let mut feats = Vec::with_capacity(req.n_utterances);
    let mut labels = Vec::new();
    let mut utts = Vec::with_capacity(req.n_utterances);
    let mut start = 0;
    for i in 0..req.n_utterances {
        let mut rng = ChaCha8Rng::seed_from_u64(req.spec.seed);
        rng.set_stream(i as u64);
        let segs = req.spec.random_segments(req.features.frame_shift_s(), &mut rng);
        let utt = generate_utterance(req.spec, &segs, req.features, &mut rng)?;
        let degraded = apply_channel(&utt.waveform, req.channel, &mut rng);
        let f = extractor.extract(&degraded)?;
        utts.push(Utterance {
            id: format!("{}-{i:05}", req.name),
            start,
            frames: f.rows(),
        });
        start += f.rows();
        labels.extend_from_slice(&utt.frame_labels);
        feats.push(f);
    }
    let refs: Vec<&Matrix> = feats.iter().collect();
    let features = Matrix::vstack(&refs).map_err(|e| SynthError::Data(e.to_string()))?;
    FrameDataset::new(
        features,
        Some(labels),
        req.spec.n_classes,
        req.domain,
        req.spec.language_tag.clone(),
        req.features.frame_shift_s(),
        utts,
    )
    .map_err(|e| SynthError::Data(e.to_string()))
}
