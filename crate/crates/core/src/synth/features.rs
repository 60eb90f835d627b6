//! Log-Mel filterbank features with regression deltas and context splicing.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::nn::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub sample_rate_hz: usize,
    pub frame_length_ms: f64,
    pub frame_shift_ms: f64,
    pub n_mel: usize,
    pub context_frames: usize,
    pub include_deltas: bool,
    #[serde(default = "default_delta_window")]
    pub delta_window: usize,
    #[serde(default = "default_preemphasis")]
    pub preemphasis: f64,
    /// Energies are floored here before the log.
    #[serde(default = "default_log_floor")]
    pub log_floor: f64,
    #[serde(default)]
    pub low_freq_hz: f64,
    /// Upper filterbank edge; `None` means Nyquist.
    #[serde(default)]
    pub high_freq_hz: Option<f64>,
}

fn default_delta_window() -> usize {
    2
}
fn default_preemphasis() -> f64 {
    0.97
}
fn default_log_floor() -> f64 {
    1e-10
}

impl Default for FeatureConfig {
    /// 16 kHz, 25 ms / 10 ms frames, 23 bands, deltas and ±5 context (759 dims).
    fn default() -> Self {
        Self {
            sample_rate_hz: 16_000,
            frame_length_ms: 25.0,
            frame_shift_ms: 10.0,
            n_mel: 23,
            context_frames: 5,
            include_deltas: true,
            delta_window: default_delta_window(),
            preemphasis: default_preemphasis(),
            log_floor: default_log_floor(),
            low_freq_hz: 0.0,
            high_freq_hz: None,
        }
    }
}

impl FeatureConfig {
    pub fn frame_length(&self) -> usize {
        (self.sample_rate_hz as f64 * self.frame_length_ms / 1000.0).round() as usize
    }

    pub fn frame_shift(&self) -> usize {
        (self.sample_rate_hz as f64 * self.frame_shift_ms / 1000.0).round() as usize
    }

    pub fn frame_shift_s(&self) -> f64 {
        self.frame_shift_ms / 1000.0
    }

    pub fn fft_size(&self) -> usize {
        self.frame_length().next_power_of_two()
    }

    /// Per-frame static + delta dimension before splicing.
    pub fn frame_dim(&self) -> usize {
        self.n_mel * if self.include_deltas { 3 } else { 1 }
    }

    /// `n_mel · (1 + 2·deltas) · (2·context + 1)`.
    pub fn output_dim(&self) -> usize {
        self.frame_dim() * (2 * self.context_frames + 1)
    }

    /// Number of frames a waveform of `samples` yields.
    pub fn frame_count(&self, samples: usize) -> usize {
        let len = self.frame_length();
        if samples < len {
            0
        } else {
            1 + (samples - len) / self.frame_shift()
        }
    }
}

/// HTK mel scale, `1127 · ln(1 + f/700)`.
pub fn hz_to_mel(hz: f64) -> f64 {
    1127.0 * (1.0 + hz / 700.0).ln()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * ((mel / 1127.0).exp() - 1.0)
}

/// Triangular filters equally spaced on the mel scale, each a weight vector
/// over the `n_fft/2 + 1` power-spectrum bins.
pub fn mel_filterbank(
    n_mel: usize,
    n_fft: usize,
    sample_rate_hz: usize,
    low_hz: f64,
    high_hz: f64,
) -> Vec<Vec<f64>> {
    let n_bins = n_fft / 2 + 1;
    let (lo, hi) = (hz_to_mel(low_hz), hz_to_mel(high_hz));
    let edges: Vec<f64> = (0..n_mel + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mel + 1) as f64))
        .collect();
    let bin_hz = sample_rate_hz as f64 / n_fft as f64;
    (0..n_mel)
        .map(|m| {
            let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..n_bins)
                .map(|b| {
                    let f = b as f64 * bin_hz;
                    if f <= l || f >= r {
                        0.0
                    } else if f <= c {
                        (f - l) / (c - l)
                    } else {
                        (r - f) / (r - c)
                    }
                })
                .collect()
        })
        .collect()
}

/// Reusable analysis state for one [`FeatureConfig`].
pub struct FeatureExtractor {
    cfg: FeatureConfig,
    window: Vec<f64>,
    filters: Vec<Vec<f64>>,
    fft: Arc<dyn Fft<f64>>,
}

impl FeatureExtractor {
    pub fn new(cfg: FeatureConfig) -> Result<Self, SynthError> {
        let len = cfg.frame_length();
        if len == 0 || cfg.frame_shift() == 0 || cfg.n_mel == 0 {
            return Err(SynthError::Config(
                "frame length, shift and band count must be positive".into(),
            ));
        }
        let nyquist = cfg.sample_rate_hz as f64 / 2.0;
        let high = cfg.high_freq_hz.unwrap_or(nyquist).min(nyquist);
        if !(cfg.low_freq_hz >= 0.0 && cfg.low_freq_hz < high) {
            return Err(SynthError::Config(format!(
                "filterbank range {}..{high} Hz is empty",
                cfg.low_freq_hz
            )));
        }
        let window = (0..len)
            .map(|n| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / (len - 1) as f64).cos())
            .collect();
        let n_fft = cfg.fft_size();
        let filters = mel_filterbank(cfg.n_mel, n_fft, cfg.sample_rate_hz, cfg.low_freq_hz, high);
        let fft = FftPlanner::new().plan_fft_forward(n_fft);
        Ok(Self {
            cfg,
            window,
            filters,
            fft,
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.cfg
    }

    /// `frames x n_mel` log filterbank energies.
    pub fn log_mel(&self, waveform: &[f64]) -> Result<Matrix, SynthError> {
        let len = self.cfg.frame_length();
        let shift = self.cfg.frame_shift();
        let frames = self.cfg.frame_count(waveform.len());
        if frames == 0 {
            return Err(SynthError::Data(format!(
                "waveform of {} samples is shorter than one {len}-sample frame",
                waveform.len()
            )));
        }
        let n_fft = self.cfg.fft_size();
        let mut out = Matrix::zeros(frames, self.cfg.n_mel);
        let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
        let mut power = vec![0.0; n_fft / 2 + 1];
        let floor = self.cfg.log_floor.ln();
        for t in 0..frames {
            let frame = &waveform[t * shift..t * shift + len];
            buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
            for n in 0..len {
                let prev = if n > 0 { frame[n - 1] } else { frame[0] };
                let x = frame[n] - self.cfg.preemphasis * prev;
                buf[n] = Complex::new(x * self.window[n], 0.0);
            }
            self.fft.process(&mut buf);
            for (p, c) in power.iter_mut().zip(&buf) {
                *p = c.norm_sqr();
            }
            for (m, filt) in self.filters.iter().enumerate() {
                let e: f64 = filt.iter().zip(&power).map(|(w, p)| w * p).sum();
                let v = if e > self.cfg.log_floor { e.ln() } else { floor };
                out.set(t, m, v);
            }
        }
        Ok(out)
    }

    /// Full pipeline: log-Mel, optional Δ and ΔΔ, then splicing.
    pub fn extract(&self, waveform: &[f64]) -> Result<Matrix, SynthError> {
        let stat = self.log_mel(waveform)?;
        let frames = if self.cfg.include_deltas {
            let d1 = delta_features(&stat, self.cfg.delta_window)?;
            let d2 = delta_features(&d1, self.cfg.delta_window)?;
            Matrix::hstack(&[&stat, &d1, &d2]).expect("same frame count")
        } else {
            stat
        };
        Ok(splice(&frames, self.cfg.context_frames))
    }
}

pub fn extract_features(waveform: &[f64], cfg: &FeatureConfig) -> Result<Matrix, SynthError> {
    FeatureExtractor::new(cfg.clone())?.extract(waveform)
}

/// Regression deltas `Σ_n n (x_{t+n} − x_{t−n}) / (2 Σ n²)` with edge replication.
pub fn delta_features(frames: &Matrix, window: usize) -> Result<Matrix, SynthError> {
    if window == 0 {
        return Err(SynthError::Config("delta window must be at least 1".into()));
    }
    let t_max = frames.rows() as isize - 1;
    let denom = 2.0 * (1..=window).map(|n| (n * n) as f64).sum::<f64>();
    let mut out = Matrix::zeros(frames.rows(), frames.cols());
    for t in 0..frames.rows() {
        for n in 1..=window {
            let fwd = frames.row((t as isize + n as isize).min(t_max) as usize);
            let back = frames.row((t as isize - n as isize).max(0) as usize);
            for ((o, a), b) in out.row_mut(t).iter_mut().zip(fwd).zip(back) {
                *o += n as f64 * (a - b);
            }
        }
        for o in out.row_mut(t) {
            *o /= denom;
        }
    }
    Ok(out)
}

/// Row `t` becomes rows `t−context ..= t+context` concatenated, replicating the edges.
pub fn splice(frames: &Matrix, context: usize) -> Matrix {
    let n = frames.rows();
    let d = frames.cols();
    let width = 2 * context + 1;
    let mut out = Matrix::zeros(n, d * width);
    for t in 0..n {
        let row = out.row_mut(t);
        for k in 0..width {
            let src = (t as isize + k as isize - context as isize).clamp(0, n as isize - 1) as usize;
            row[k * d..(k + 1) * d].copy_from_slice(frames.row(src));
        }
    }
    out
}
