//! Speech enhancement with adaptive FIR filters.
//!
//! A scene mixes a clean signal `c` with noise `n` passed through a short
//! acoustic path: `noisy = c + path * n`. Two wirings are supported:
//!
//! * [`AncTopology::ReferenceCancelling`]: the classical canceller. The
//!   filter sees a tapped delay line of the raw noise reference, predicts the
//!   noise component of `noisy`, and the error `noisy - prediction` is the
//!   enhanced output.
//! * [`AncTopology::CleanSupervised`]: the filter sees a tapped delay line of
//!   `noisy` itself, is trained against the clean signal, and its prediction
//!   is the enhanced output. This matches recordings that come without a
//!   separate noise channel.
//!
//! Every call to [`run_anc`] starts from a fresh filter state.

mod synth;
mod wav;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use synth::{colored_noise, fir_filter, speech_like, synthetic_scene, SyntheticSceneSpec};
pub use wav::{load_wav, write_wav};

use crate::error::{check_dim, invalid, Error, Result};
use crate::filters::{step, Algorithm, FilterConfig, FilterState};
use crate::metrics::{mean_std, snr_metrics, TrialReport};
use crate::rng;

/// Noise path used when none is configured.
pub const DEFAULT_PATH: [f64; 3] = [1.0, 0.5, -0.3];

/// Mono audio with samples nominally in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    /// Rejects non-finite samples and a zero rate. Values beyond ±1 are kept
    /// and reported by [`AudioBuffer::clipped`].
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(invalid("sample_rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput(format!("audio sample {i} = {}", samples[i])));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum()
    }

    /// Number of samples outside [-1, 1].
    pub fn clipped(&self) -> usize {
        self.samples.iter().filter(|v| v.abs() > 1.0).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AncScene {
    pub clean: AudioBuffer,
    /// `clean + path_fir * reference`
    pub noisy: AudioBuffer,
    /// Scaled noise before the path.
    pub reference: AudioBuffer,
    pub target_snr_db: f64,
    pub path_fir: Vec<f64>,
    pub seed: u64,
    /// Where the noise crop started.
    pub noise_offset: usize,
}

impl AncScene {
    pub fn measured_input_snr_db(&self) -> f64 {
        let resid: f64 = self
            .noisy
            .samples
            .iter()
            .zip(&self.clean.samples)
            .map(|(n, c)| (n - c) * (n - c))
            .sum();
        10.0 * (self.clean.energy() / resid).log10()
    }
}

/// Crops `noise` at a seeded offset, scales it so that the noise reaching the
/// microphone through `path_fir` sits `target_snr_db` below `clean`, and mixes.
pub fn make_scene(
    clean: &AudioBuffer,
    noise: &AudioBuffer,
    target_snr_db: f64,
    path_fir: &[f64],
    seed: u64,
) -> Result<AncScene> {
    if clean.sample_rate != noise.sample_rate {
        return Err(invalid(format!(
            "sample rates differ: clean {} Hz, noise {} Hz",
            clean.sample_rate, noise.sample_rate
        )));
    }
    if noise.len() < clean.len() {
        return Err(invalid(format!(
            "noise ({} samples) shorter than clean signal ({} samples)",
            noise.len(),
            clean.len()
        )));
    }
    if path_fir.is_empty() {
        return Err(invalid("path_fir must have at least one coefficient"));
    }
    if !target_snr_db.is_finite() {
        return Err(invalid("target_snr_db must be finite"));
    }
    let n = clean.len();
    let slack = noise.len() - n;
    let offset = if slack == 0 {
        0
    } else {
        let mut r = rng::substream2(seed, 0, 0xC0FF);
        (rng::uniform(&mut r, 0.0, (slack + 1) as f64) as usize).min(slack)
    };
    let crop = &noise.samples[offset..offset + n];
    let through = fir_filter(crop, path_fir);
    let sig = clean.energy();
    let noise_energy: f64 = through.iter().map(|v| v * v).sum();
    if !(sig > 0.0) {
        return Err(invalid("clean signal has zero energy"));
    }
    if !(noise_energy > 0.0) {
        return Err(invalid("noise has zero energy after the path"));
    }
    let gain = (sig / noise_energy / 10f64.powf(target_snr_db / 10.0)).sqrt();
    let noisy = clean.samples.iter().zip(&through).map(|(c, v)| c + gain * v).collect();
    let reference = crop.iter().map(|v| gain * v).collect();
    Ok(AncScene {
        clean: clean.clone(),
        noisy: AudioBuffer { samples: noisy, sample_rate: clean.sample_rate },
        reference: AudioBuffer { samples: reference, sample_rate: clean.sample_rate },
        target_snr_db,
        path_fir: path_fir.to_vec(),
        seed,
        noise_offset: offset,
    })
}

/// Filter wiring, see the module docs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AncTopology {
    #[default]
    ReferenceCancelling,
    CleanSupervised,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AncRun {
    pub enhanced: AudioBuffer,
    /// Filter output `phi[k]^T theta_hat[k]` per sample.
    pub prediction: Vec<f64>,
    /// Final coefficient vector.
    pub theta_hat: Vec<f64>,
    pub report: TrialReport,
}

/// Classical reference-cancelling run; see [`run_anc_with`].
pub fn run_anc(cfg: &FilterConfig, scene: &AncScene, taps: usize) -> Result<AncRun> {
    run_anc_with(cfg, scene, taps, AncTopology::ReferenceCancelling)
}

/// Streams the scene through a fresh `taps`-tap filter.
///
/// The regressor is `(x[k], x[k-1], ..., x[k-taps+1])` with zeros before the
/// start, where `x` is the reference or the noisy signal depending on the
/// topology. The report carries squared errors and SNRs against the clean
/// signal.
pub fn run_anc_with(cfg: &FilterConfig, scene: &AncScene, taps: usize, topology: AncTopology) -> Result<AncRun> {
    if taps == 0 {
        return Err(invalid("taps must be at least 1"));
    }
    let n = scene.clean.len();
    check_dim(n, scene.noisy.len())?;
    check_dim(n, scene.reference.len())?;
    let cfg = FilterConfig { dim: taps, ..cfg.clone() };
    let mut state = FilterState::new(&cfg);

    let (input, desired) = match topology {
        AncTopology::ReferenceCancelling => (&scene.reference.samples, &scene.noisy.samples),
        AncTopology::CleanSupervised => (&scene.noisy.samples, &scene.clean.samples),
    };
    let mut phi = vec![0.0; taps];
    let mut prediction = Vec::with_capacity(n);
    let mut enhanced = Vec::with_capacity(n);
    let mut sq_err = Vec::with_capacity(n);
    for k in 0..n {
        phi.rotate_right(1);
        phi[0] = input[k];
        let out = step(&mut state, &cfg, &phi, desired[k])?;
        prediction.push(out.prediction);
        sq_err.push(out.error * out.error);
        enhanced.push(match topology {
            AncTopology::ReferenceCancelling => out.error,
            AncTopology::CleanSupervised => out.prediction,
        });
    }

    let mut report = TrialReport { per_step_sq_pred_err: sq_err, seed: scene.seed, ..Default::default() };
    if scene.clean.energy() > 0.0 {
        report.set_snr(&snr_metrics(&scene.noisy.samples, &scene.clean.samples, &enhanced)?);
    }
    Ok(AncRun {
        enhanced: AudioBuffer { samples: enhanced, sample_rate: scene.clean.sample_rate },
        prediction,
        theta_hat: state.theta_hat,
        report,
    })
}

/// Mean and spread of ΔSNR over scenes for one β.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub beta: f64,
    pub mean_delta_snr: f64,
    pub std_delta_snr: f64,
}

/// Reference-cancelling β sweep; see [`sweep_beta_with`].
pub fn sweep_beta(base_cfg: &FilterConfig, scenes: &[AncScene], betas: &[f64], taps: usize) -> Result<Vec<SweepRow>> {
    sweep_beta_with(base_cfg, scenes, betas, taps, AncTopology::ReferenceCancelling)
}

/// Mean ΔSNR across `scenes` for each β, with everything else in `base_cfg`
/// held fixed. Scenes run in parallel; rows come back in `betas` order.
pub fn sweep_beta_with(
    base_cfg: &FilterConfig,
    scenes: &[AncScene],
    betas: &[f64],
    taps: usize,
    topology: AncTopology,
) -> Result<Vec<SweepRow>> {
    if betas.is_empty() || scenes.is_empty() {
        return Err(invalid("sweep needs at least one beta and one scene"));
    }
    if !matches!(
        base_cfg.algorithm,
        Algorithm::Mlms | Algorithm::ProjectedMlms | Algorithm::SgdMomentum
    ) {
        return Err(invalid(format!("{} has no momentum term to sweep", base_cfg.algorithm)));
    }
    betas
        .iter()
        .map(|&beta| {
            let cfg = FilterConfig { beta, ..base_cfg.clone() };
            let deltas: Vec<f64> = scenes
                .par_iter()
                .map(|s| {
                    let run = run_anc_with(&cfg, s, taps, topology)?;
                    run.report
                        .delta_snr_db
                        .ok_or_else(|| invalid("scene produced no SNR (empty audio)"))
                })
                .collect::<Result<_>>()?;
            let st = mean_std(&deltas)?;
            Ok(SweepRow { beta, mean_delta_snr: st.mean, std_delta_snr: st.std })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn buf(samples: Vec<f64>) -> AudioBuffer {
        AudioBuffer::new(samples, 8000).unwrap()
    }

    fn sine(n: usize) -> AudioBuffer {
        buf((0..n).map(|k| 0.3 * (k as f64 * 0.05).sin()).collect())
    }

    #[test]
    fn audio_buffer_validation() {
        assert!(AudioBuffer::new(vec![f64::NAN], 8000).is_err());
        assert!(AudioBuffer::new(vec![0.0], 0).is_err());
        assert_eq!(buf(vec![0.5, 1.5, -2.0]).clipped(), 2);
    }

    #[test]
    fn unit_path_zero_db_scene() {
        let clean = sine(4000);
        let noise = colored_noise(5000, 8000, &[1.0], 2);
        let sc = make_scene(&clean, &noise, 0.0, &[1.0], 5).unwrap();
        let resid: f64 = sc.noisy.samples.iter().zip(&sc.clean.samples).map(|(a, b)| (a - b).powi(2)).sum();
        let ratio_db = 10.0 * (resid / clean.energy()).log10();
        assert!(ratio_db.abs() < 0.1);
        assert!((sc.measured_input_snr_db()).abs() < 1e-9);
    }

    #[test]
    fn vanishing_noise_scene() {
        let clean = sine(2000);
        let noise = colored_noise(2000, 8000, &[1.0, 0.5], 3);
        let sc = make_scene(&clean, &noise, 200.0, &DEFAULT_PATH, 1).unwrap();
        let max_diff = sc.noisy.samples.iter().zip(&clean.samples).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(max_diff < 1e-8);
    }

    #[test]
    fn scene_determinism_and_errors() {
        let clean = sine(1000);
        let noise = colored_noise(3000, 8000, &[1.0], 3);
        let a = make_scene(&clean, &noise, 5.0, &DEFAULT_PATH, 9).unwrap();
        let b = make_scene(&clean, &noise, 5.0, &DEFAULT_PATH, 9).unwrap();
        assert_eq!(a, b);
        let c = make_scene(&clean, &noise, 5.0, &DEFAULT_PATH, 10).unwrap();
        assert_ne!(a.noise_offset, c.noise_offset);

        assert!(make_scene(&buf(vec![0.0; 10]), &noise, 5.0, &[1.0], 0).is_err());
        assert!(make_scene(&clean, &buf(vec![0.0; 1000]), 5.0, &[1.0], 0).is_err());
        assert!(make_scene(&clean, &buf(vec![0.1; 10]), 5.0, &[1.0], 0).is_err());
        let other_rate = AudioBuffer::new(noise.samples.clone(), 16000).unwrap();
        assert!(make_scene(&clean, &other_rate, 5.0, &[1.0], 0).is_err());
    }

    #[test]
    fn pure_noise_is_cancelled() {
        let n = 8000;
        let silent = buf(vec![0.0; n]);
        let noise = colored_noise(n, 8000, &[1.0, 0.6, 0.3], 4);
        // make_scene refuses silent speech, so build the scene by hand.
        let scene = AncScene {
            clean: silent.clone(),
            noisy: noise.clone(),
            reference: noise.clone(),
            target_snr_db: f64::NEG_INFINITY,
            path_fir: vec![1.0],
            seed: 0,
            noise_offset: 0,
        };
        let cfg = FilterConfig::mlms(4, 0.25, 1e-6, 0.0625);
        let run = run_anc(&cfg, &scene, 4).unwrap();
        let tail = n / 2..n;
        let e_out: f64 = run.enhanced.samples[tail.clone()].iter().map(|v| v * v).sum();
        let e_in: f64 = scene.noisy.samples[tail].iter().map(|v| v * v).sum();
        assert!(e_out < 0.01 * e_in, "{e_out} vs {e_in}");
        // No clean energy, so no SNR report.
        assert!(run.report.delta_snr_db.is_none());
    }

    #[test]
    fn memoryless_path_wiener_weight() {
        let n = 20_000;
        let g = 0.7;
        let noise = colored_noise(n, 8000, &[1.0], 6);
        let scene = AncScene {
            clean: buf(vec![0.0; n]),
            noisy: buf(noise.samples.iter().map(|v| g * v).collect()),
            reference: noise,
            target_snr_db: 0.0,
            path_fir: vec![g],
            seed: 0,
            noise_offset: 0,
        };
        let run = run_anc(&FilterConfig::nlms(1, 0.1, 1e-6), &scene, 1).unwrap();
        assert!((run.theta_hat[0] - g).abs() < 0.05 * g, "{}", run.theta_hat[0]);
    }

    #[test]
    fn empty_audio_is_vacuous() {
        let empty = buf(vec![]);
        let scene = AncScene {
            clean: empty.clone(),
            noisy: empty.clone(),
            reference: empty,
            target_snr_db: 0.0,
            path_fir: vec![1.0],
            seed: 0,
            noise_offset: 0,
        };
        let run = run_anc(&FilterConfig::nlms(8, 0.1, 0.1), &scene, 8).unwrap();
        assert!(run.enhanced.is_empty() && run.prediction.is_empty());
        assert!(run.report.delta_snr_db.is_none());
    }

    #[test]
    fn enhanced_is_noisy_minus_prediction() {
        let sc = synthetic_scene(&SyntheticSceneSpec { samples: 12_000, ..Default::default() }, 5.0, 2).unwrap();
        let run = run_anc(&FilterConfig::mlms(16, 0.25, 1e-12, 0.15), &sc, 16).unwrap();
        for k in 0..sc.noisy.len() {
            assert_eq!(run.enhanced.samples[k], sc.noisy.samples[k] - run.prediction[k]);
        }
    }

    #[test]
    fn zero_reference_leaves_clean_untouched() {
        let clean = sine(1000);
        let scene = AncScene {
            clean: clean.clone(),
            noisy: clean.clone(),
            reference: buf(vec![0.0; 1000]),
            target_snr_db: f64::INFINITY,
            path_fir: vec![1.0],
            seed: 0,
            noise_offset: 0,
        };
        let run = run_anc(&FilterConfig::mlms(8, 0.25, 1e-12, 0.15), &scene, 8).unwrap();
        assert_eq!(run.enhanced.samples, clean.samples);
        assert!(run.theta_hat.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn runs_reset_between_utterances() {
        let spec = SyntheticSceneSpec { samples: 12_000, ..Default::default() };
        let a = synthetic_scene(&spec, 5.0, 1).unwrap();
        let b = synthetic_scene(&spec, 5.0, 2).unwrap();
        let cfg = FilterConfig::mlms(10, 0.25, 1e-12, 0.15);
        let first = run_anc(&cfg, &a, 10).unwrap();
        run_anc(&cfg, &b, 10).unwrap();
        assert_eq!(run_anc(&cfg, &a, 10).unwrap(), first);
    }

    #[test]
    fn sweep_examples() {
        let spec = SyntheticSceneSpec { samples: 12_000, ..Default::default() };
        let scene = synthetic_scene(&spec, 0.0, 4).unwrap();
        let base = FilterConfig::mlms(10, 0.35, 1e-12, 0.0);
        let rows = sweep_beta(&base, std::slice::from_ref(&scene), &[0.0], 10).unwrap();
        let nlms = run_anc(&FilterConfig::nlms(10, 0.35, 1e-12), &scene, 10).unwrap();
        assert_eq!(rows[0].mean_delta_snr, nlms.report.delta_snr_db.unwrap());

        let rows = sweep_beta(&base, std::slice::from_ref(&scene), &[0.0, 0.1], 10).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows, sweep_beta(&base, std::slice::from_ref(&scene), &[0.0, 0.1], 10).unwrap());

        assert!(sweep_beta(&FilterConfig::nlms(10, 0.1, 0.1), std::slice::from_ref(&scene), &[0.0], 10).is_err());
        assert!(sweep_beta(&base, &[scene], &[], 10).is_err());
    }
}
