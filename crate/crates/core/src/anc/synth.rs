//! Synthetic speech-like signals and colored noise, for running the
//! enhancement pipeline without a recorded corpus.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{make_scene, AncScene, AudioBuffer, DEFAULT_PATH};
use crate::error::{invalid, Result};
use crate::rng;

const LANE_SPEECH: u64 = 0;
const LANE_NOISE: u64 = 1;

/// Causal FIR filter with zero initial state; output has the input's length.
pub fn fir_filter(x: &[f64], h: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|k| h.iter().enumerate().take(k + 1).map(|(j, c)| c * x[k - j]).sum())
        .collect()
}

/// Voiced, speech-like signal: fourteen harmonics of a slowly drifting pitch
/// around 120 Hz, weighted by two formant bumps near 500 Hz and 1.5 kHz, under
/// a syllabic envelope with pauses. Peak amplitude 0.3.
pub fn speech_like(samples: usize, sample_rate: u32, seed: u64) -> AudioBuffer {
    let mut r = rng::substream(seed, LANE_SPEECH);
    let fs = sample_rate as f64;
    let drift_phase = rng::uniform(&mut r, 0.0, 6.0);
    let pitch_offset = rng::uniform(&mut r, -20.0, 20.0);
    let f0: Vec<f64> = (0..samples)
        .map(|k| 120.0 + 30.0 * (2.0 * PI * 0.7 * k as f64 / fs + drift_phase).sin() + pitch_offset)
        .collect();
    let f0_mean = if samples == 0 { 0.0 } else { f0.iter().sum::<f64>() / samples as f64 };
    let mut phase = Vec::with_capacity(samples);
    let mut acc = 0.0;
    for f in &f0 {
        acc += f;
        phase.push(2.0 * PI * acc / fs);
    }

    let mut s = vec![0.0; samples];
    for h in 1..=14 {
        let fh = h as f64 * f0_mean;
        let amp = (-((fh - 500.0) / 400.0).powi(2)).exp() + 0.6 * (-((fh - 1500.0) / 500.0).powi(2)).exp() + 0.05;
        let w = amp / (h as f64).sqrt();
        let off = rng::uniform(&mut r, 0.0, 6.0);
        for (v, ph) in s.iter_mut().zip(&phase) {
            *v += w * (h as f64 * ph + off).sin();
        }
    }

    let syllable_rate = rng::uniform(&mut r, 3.0, 5.0);
    let env_phase = rng::uniform(&mut r, 0.0, 6.0);
    let gate_phase = rng::uniform(&mut r, 0.0, 6.0);
    for (k, v) in s.iter_mut().enumerate() {
        let t = k as f64 / fs;
        let env = (2.0 * PI * syllable_rate * t + env_phase).sin().max(0.0).powf(1.5);
        let gate = (2.0 * PI * 0.4 * t + gate_phase).sin() > -0.3;
        *v *= if gate { env } else { 0.0 };
    }
    let peak = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        s.iter_mut().for_each(|v| *v *= 0.3 / peak);
    }
    AudioBuffer { samples: s, sample_rate }
}

/// White Gaussian noise shaped by `coloring`, scaled to standard deviation 0.1.
pub fn colored_noise(samples: usize, sample_rate: u32, coloring: &[f64], seed: u64) -> AudioBuffer {
    let mut r = rng::substream(seed, LANE_NOISE);
    let white = rng::normal_vec(&mut r, samples, 1.0);
    let mut x = fir_filter(&white, coloring);
    let n = x.len().max(1) as f64;
    let mean = x.iter().sum::<f64>() / n;
    let std = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if std > 0.0 {
        x.iter_mut().for_each(|v| *v *= 0.1 / std);
    }
    AudioBuffer { samples: x, sample_rate }
}

/// Recipe for a synthetic scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSceneSpec {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_rate")]
    pub sample_rate: u32,
    /// FIR applied to white noise to color it.
    #[serde(default = "default_coloring")]
    pub coloring: Vec<f64>,
    /// Path from the noise source to the microphone.
    #[serde(default = "default_path")]
    pub path_fir: Vec<f64>,
}

fn default_samples() -> usize {
    20_000
}
fn default_rate() -> u32 {
    8_000
}
fn default_coloring() -> Vec<f64> {
    vec![1.0, 0.6, 0.3]
}
fn default_path() -> Vec<f64> {
    DEFAULT_PATH.to_vec()
}

impl Default for SyntheticSceneSpec {
    /// 2.5 s at 8 kHz, noise colored by `(1, 0.6, 0.3)`, default noise path.
    fn default() -> Self {
        Self {
            samples: default_samples(),
            sample_rate: default_rate(),
            coloring: default_coloring(),
            path_fir: default_path(),
        }
    }
}

/// Speech-like clean signal plus colored noise mixed at `snr_db`.
pub fn synthetic_scene(spec: &SyntheticSceneSpec, snr_db: f64, seed: u64) -> Result<AncScene> {
    if spec.samples == 0 || spec.sample_rate == 0 {
        return Err(invalid("synthetic scenes need samples >= 1 and a positive sample rate"));
    }
    let clean = speech_like(spec.samples, spec.sample_rate, seed);
    let spare = spec.sample_rate as usize / 2;
    let noise = colored_noise(spec.samples + spare, spec.sample_rate, &spec.coloring, seed);
    make_scene(&clean, &noise, snr_db, &spec.path_fir, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fir_examples() {
        assert_eq!(fir_filter(&[1.0, 0.0, 0.0, 0.0], &[1.0, 0.5, -0.3]), vec![1.0, 0.5, -0.3, 0.0]);
        assert_eq!(fir_filter(&[1.0, 2.0], &[2.0]), vec![2.0, 4.0]);
        assert!(fir_filter(&[], &[1.0]).is_empty());
    }

    #[test]
    fn speech_is_bounded_and_has_pauses() {
        let s = speech_like(16_000, 8000, 4);
        let peak = s.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - 0.3).abs() < 1e-12);
        let silent = s.samples.iter().filter(|v| **v == 0.0).count();
        assert!(silent > 1000, "{silent}");
        assert_eq!(speech_like(16_000, 8000, 4), s);
    }

    #[test]
    fn noise_is_normalized() {
        let n = colored_noise(10_000, 8000, &[1.0, 0.6, 0.3], 1);
        let std = (n.samples.iter().map(|v| v * v).sum::<f64>() / 10_000.0).sqrt();
        assert!((std - 0.1).abs() < 0.005);
    }

    #[test]
    fn synthetic_scene_hits_target() {
        let sc = synthetic_scene(&SyntheticSceneSpec { samples: 4000, ..Default::default() }, 5.0, 3).unwrap();
        assert!((sc.measured_input_snr_db() - 5.0).abs() < 1e-9);
    }
}
