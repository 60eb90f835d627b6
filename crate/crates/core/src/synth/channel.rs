use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use super::SynthError;

/// Recording channel: reverberation, additive noise and gain.
///
/// `snr_db = +inf` disables noise and `reverb_taps = 0` disables reverberation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelProfile {
    pub name: String,
    #[serde(with = "inf_as_string")]
    pub snr_db: f64,
    pub reverb_decay_s: f64,
    pub reverb_taps: usize,
    pub gain: f64,
    /// Pole of the first-order filter colouring the additive noise.
    #[serde(default = "default_pole")]
    pub noise_pole: f64,
}

fn default_pole() -> f64 {
    0.9
}

const SAMPLE_RATE: f64 = 16_000.0;

impl ChannelProfile {
    fn preset(name: &str, snr_db: f64, decay: f64, taps: usize, gain: f64) -> Self {
        Self {
            name: name.to_string(),
            snr_db,
            reverb_decay_s: decay,
            reverb_taps: taps,
            gain,
            noise_pole: default_pole(),
        }
    }

    /// Close-talk headset.
    pub fn channel1() -> Self {
        Self::preset("ch1", f64::INFINITY, 0.0, 0, 1.0)
    }

    pub fn channel2() -> Self {
        Self::preset("ch2", 25.0, 0.1, 800, 0.8)
    }

    pub fn channel3() -> Self {
        Self::preset("ch3", 12.0, 0.3, 3200, 0.5)
    }

    /// Distant omni-directional microphone.
    pub fn channel4() -> Self {
        Self::preset("ch4", 5.0, 0.4, 4800, 0.3)
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "ch1" => Some(Self::channel1()),
            "ch2" => Some(Self::channel2()),
            "ch3" => Some(Self::channel3()),
            "ch4" => Some(Self::channel4()),
            _ => None,
        }
    }

    pub fn is_clean(&self) -> bool {
        self.snr_db == f64::INFINITY && self.reverb_taps == 0
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Config(format!("channel {}: {m}", self.name)));
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return bad("snr_db must be a number or +inf");
        }
        if !(self.reverb_decay_s >= 0.0 && self.reverb_decay_s.is_finite()) {
            return bad("reverb_decay_s must be finite and >= 0");
        }
        if self.reverb_taps > 0 && self.reverb_decay_s == 0.0 {
            return bad("reverb taps need a positive decay time");
        }
        if !(self.gain > 0.0 && self.gain.is_finite()) {
            return bad("gain must be positive");
        }
        if !(0.0..1.0).contains(&self.noise_pole) {
            return bad("noise_pole must lie in [0, 1)");
        }
        Ok(())
    }

    /// Seeded impulse response: a unit direct path followed by an exponentially
    /// decaying white-noise tail (60 dB over `reverb_decay_s`) carrying as much
    /// energy as the direct path, normalized to unit energy.
    pub fn impulse_response(&self, rng: &mut impl Rng) -> Vec<f64> {
        if self.reverb_taps == 0 {
            return vec![1.0];
        }
        let rate = 1000f64.ln() / (self.reverb_decay_s * SAMPLE_RATE);
        let mut h = Vec::with_capacity(self.reverb_taps);
        h.push(1.0);
        for k in 1..self.reverb_taps {
            let e: f64 = StandardNormal.sample(rng);
            h.push(e * (-rate * k as f64).exp());
        }
        let tail: f64 = h[1..].iter().map(|v| v * v).sum();
        if tail > 0.0 {
            let s = tail.sqrt().recip();
            h[1..].iter_mut().for_each(|v| *v *= s);
        }
        let norm = 2f64.sqrt().recip();
        h.iter_mut().for_each(|v| *v *= norm);
        h
    }
}

/// The two summands of a degraded waveform before the channel gain.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelParts {
    pub reverberant: Vec<f64>,
    pub noise: Vec<f64>,
}

fn power(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
    }
}

fn convolve_truncated(x: &[f64], h: &[f64]) -> Vec<f64> {
    let n = x.len();
    if h.len() == 1 {
        return x.iter().map(|v| v * h[0]).collect();
    }
    let size = (n + h.len() - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let pad = |s: &[f64]| {
        let mut v: Vec<Complex<f64>> = s.iter().map(|&r| Complex::new(r, 0.0)).collect();
        v.resize(size, Complex::new(0.0, 0.0));
        v
    };
    let mut a = pad(x);
    let mut b = pad(h);
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (p, q) in a.iter_mut().zip(&b) {
        *p *= q;
    }
    inv.process(&mut a);
    a.iter().take(n).map(|c| c.re / size as f64).collect()
}

/// Reverberant signal and additive noise, with the noise scaled so that its
/// measured power sits `snr_db` below the reverberant signal's.
pub fn degrade_components(
    waveform: &[f64],
    profile: &ChannelProfile,
    rng: &mut impl Rng,
) -> ChannelParts {
    let h = profile.impulse_response(rng);
    let reverberant = convolve_truncated(waveform, &h);
    let mut noise = vec![0.0; waveform.len()];
    if profile.snr_db.is_finite() && !waveform.is_empty() {
        let mut y = 0.0;
        for v in noise.iter_mut() {
            let e: f64 = StandardNormal.sample(rng);
            y = profile.noise_pole * y + e;
            *v = y;
        }
        let target = power(&reverberant) / 10f64.powf(profile.snr_db / 10.0);
        let p = power(&noise);
        if p > 0.0 {
            let s = (target / p).sqrt();
            noise.iter_mut().for_each(|v| *v *= s);
        }
    }
    ChannelParts { reverberant, noise }
}

/// Degrades `waveform` through `profile`. Output length equals input length.
///
/// A clean profile reduces to `gain * x` and draws nothing from `rng`.
pub fn apply_channel(waveform: &[f64], profile: &ChannelProfile, rng: &mut impl Rng) -> Vec<f64> {
    if profile.is_clean() {
        return waveform.iter().map(|v| profile.gain * v).collect();
    }
    let parts = degrade_components(waveform, profile, rng);
    parts
        .reverberant
        .iter()
        .zip(&parts.noise)
        .map(|(r, n)| profile.gain * (r + n))
        .collect()
}

/// JSON has no infinity literal; `+inf` is written as the string "inf".
mod inf_as_string {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.trim() {
                "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
                other => Err(serde::de::Error::custom(format!("invalid snr_db {other:?}"))),
            },
        }
    }
}
