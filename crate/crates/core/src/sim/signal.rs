//! Source signals and reverberant multichannel recordings.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::rir::RirGenerator;
use super::{ArrayLayout, MultichannelRecording, RoomSpec, Scene, Vec3};
use crate::error::{Error, Result};

/// Corner frequency of the speech-shaped spectrum.
const SPEECH_CORNER_HZ: f64 = 500.0;

/// Built-in or externally supplied source excitation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceSignal {
    WhiteNoise,
    /// Gaussian noise with a flat spectrum below 500 Hz and -6 dB/octave above.
    SpeechShaped,
    /// Mono samples (e.g. loaded from a WAV file); random excerpts are taken per draw.
    Samples { samples: Vec<f64>, sample_rate: f64 },
}

impl Default for SourceSignal {
    fn default() -> Self {
        SourceSignal::SpeechShaped
    }
}

impl SourceSignal {
    pub fn from_wav(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let rec = MultichannelRecording::read_wav(path)?;
        let samples = rec.samples.into_iter().next().unwrap_or_default();
        Ok(SourceSignal::Samples {
            samples,
            sample_rate: rec.sample_rate,
        })
    }

    /// Draw `len` samples at `sample_rate`, normalized to unit RMS.
    pub fn draw(&self, len: usize, sample_rate: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
        if len == 0 {
            return Err(Error::Config("source signal length must be positive".into()));
        }
        let mut x: Vec<f64> = match self {
            SourceSignal::WhiteNoise => (0..len).map(|_| rng.sample(StandardNormal)).collect(),
            SourceSignal::SpeechShaped => speech_shaped(len, sample_rate, rng),
            SourceSignal::Samples {
                samples,
                sample_rate: fs,
            } => {
                if (fs - sample_rate).abs() > 1e-9 {
                    return Err(Error::Config(format!(
                        "source file sample rate {fs} Hz differs from room rate {sample_rate} Hz"
                    )));
                }
                if samples.is_empty() {
                    return Err(Error::Config("source file is empty".into()));
                }
                let start = rng.gen_range(0..samples.len());
                (0..len).map(|i| samples[(start + i) % samples.len()]).collect()
            }
        };
        let rms = (x.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
        if rms == 0.0 || !rms.is_finite() {
            return Err(Error::Config("source signal has zero power".into()));
        }
        x.iter_mut().for_each(|v| *v /= rms);
        Ok(x)
    }
}

fn speech_shaped(len: usize, fs: f64, rng: &mut impl Rng) -> Vec<f64> {
    let n = len.next_power_of_two();
    let mut buf: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.sample(StandardNormal), 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, v) in buf.iter_mut().enumerate() {
        let bin = k.min(n - k);
        let f = bin as f64 * fs / n as f64;
        if f > SPEECH_CORNER_HZ {
            *v *= SPEECH_CORNER_HZ / f;
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf[..len].iter().map(|c| c.re / n as f64).collect()
}

/// Convolves one source signal with the impulse responses of every microphone.
///
/// Holds the per-room RIR generator and FFT plans so repeated calls for
/// different source positions stay cheap.
pub struct Simulator {
    rir: RirGenerator,
    mics: Vec<Vec3>,
    planner_cache: std::sync::Mutex<Vec<(usize, Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>)>>,
}

impl Simulator {
    pub fn new(room: &RoomSpec, array: &ArrayLayout) -> Result<Self> {
        array.validate(room)?;
        Ok(Simulator {
            rir: RirGenerator::with_default_order(room)?,
            mics: array.mic_positions(),
            planner_cache: std::sync::Mutex::new(Vec::new()),
        })
    }

    pub fn room(&self) -> &RoomSpec {
        self.rir.room()
    }

    pub fn rir_generator(&self) -> &RirGenerator {
        &self.rir
    }

    fn plans(&self, n: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
        let mut cache = self.planner_cache.lock().expect("fft cache poisoned");
        if let Some((_, f, i)) = cache.iter().find(|(len, _, _)| *len == n) {
            return (f.clone(), i.clone());
        }
        let mut planner = FftPlanner::new();
        let f = planner.plan_fft_forward(n);
        let i = planner.plan_fft_inverse(n);
        cache.push((n, f.clone(), i.clone()));
        (f, i)
    }

    /// Noise-free reverberant channels for a source at `src`.
    pub fn reverberant(&self, src: &Vec3, signal: &[f64]) -> Result<Vec<Vec<f64>>> {
        if signal.is_empty() || signal.iter().all(|&v| v == 0.0) {
            return Err(Error::Config("source signal has zero power".into()));
        }
        let rirs = self
            .mics
            .iter()
            .map(|m| self.rir.generate(src, m))
            .collect::<Result<Vec<_>>>()?;
        let out_len = signal.len() + self.rir.length() - 1;
        let n = out_len.next_power_of_two();
        let (fwd, inv) = self.plans(n);

        let mut spec: Vec<Complex64> = signal.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        spec.resize(n, Complex64::default());
        fwd.process(&mut spec);

        let scale = 1.0 / n as f64;
        let mut channels = Vec::with_capacity(rirs.len());
        // two real responses per complex transform: re = first, im = second
        for pair in rirs.chunks(2) {
            let mut buf = vec![Complex64::default(); n];
            for (t, v) in pair[0].iter().enumerate() {
                buf[t].re = *v;
            }
            if let Some(second) = pair.get(1) {
                for (t, v) in second.iter().enumerate() {
                    buf[t].im = *v;
                }
            }
            fwd.process(&mut buf);
            buf.iter_mut().zip(&spec).for_each(|(b, s)| *b *= s);
            inv.process(&mut buf);
            channels.push(buf[..out_len].iter().map(|c| c.re * scale).collect());
            if pair.len() == 2 {
                channels.push(buf[..out_len].iter().map(|c| c.im * scale).collect());
            }
        }
        Ok(channels)
    }

    /// Reverberant channels plus white Gaussian noise at `snr_db` per channel.
    pub fn record(&self, src: &Vec3, signal: &[f64], snr_db: f64, rng: &mut impl Rng) -> Result<MultichannelRecording> {
        let mut samples = self.reverberant(src, signal)?;
        add_noise(&mut samples, snr_db, rng);
        Ok(MultichannelRecording {
            samples,
            sample_rate: self.room().sample_rate,
        })
    }
}

/// Adds independent white Gaussian noise to every channel so each channel's
/// signal-to-noise power ratio equals `snr_db`. `+inf` leaves channels untouched.
pub fn add_noise(channels: &mut [Vec<f64>], snr_db: f64, rng: &mut impl Rng) {
    if snr_db == f64::INFINITY {
        return;
    }
    for ch in channels.iter_mut() {
        let power = ch.iter().map(|v| v * v).sum::<f64>() / ch.len().max(1) as f64;
        let std = (power / 10f64.powf(snr_db / 10.0)).sqrt();
        for v in ch.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v += std * z;
        }
    }
}

/// Records `source_signal` emitted at `scene.source_pos`.
///
/// Noise is seeded by `rng_seed`; identical inputs give bit-identical output.
pub fn simulate_recording(scene: &Scene, source_signal: &[f64], rng_seed: u64) -> Result<MultichannelRecording> {
    scene.validate()?;
    let sim = Simulator::new(&scene.room, &scene.array)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    sim.record(&scene.source_position(), source_signal, scene.snr_db, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::rir::generate_rir;

    fn anechoic_scene(snr_db: f64) -> Scene {
        let mut scene = Scene::default();
        scene.room.t60 = 0.0;
        scene.snr_db = snr_db;
        scene
    }

    fn white(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SourceSignal::WhiteNoise.draw(len, 16000.0, &mut rng).unwrap()
    }

    #[test]
    fn noiseless_anechoic_is_scaled_delayed_copy() {
        let scene = anechoic_scene(f64::INFINITY);
        let s = white(4000, 1);
        let rec = simulate_recording(&scene, &s, 7).unwrap();
        let h = generate_rir(&scene.room, &scene.source_position(), &scene.array.nodes[0].mic1_pos, 0).unwrap();
        // direct convolution oracle
        let ch = &rec.samples[0];
        for t in (0..ch.len()).step_by(97) {
            let expect: f64 = h
                .iter()
                .enumerate()
                .filter(|(k, _)| *k <= t && t - k < s.len())
                .map(|(k, hk)| hk * s[t - k])
                .sum();
            assert!((ch[t] - expect).abs() < 1e-10, "t={t}");
        }
    }

    #[test]
    fn snr_is_calibrated() {
        let scene = anechoic_scene(0.0);
        let s = white(5 * 16000, 2);
        let sim = Simulator::new(&scene.room, &scene.array).unwrap();
        let clean = sim.reverberant(&scene.source_position(), &s).unwrap();
        let mut noisy = clean.clone();
        add_noise(&mut noisy, 0.0, &mut ChaCha8Rng::seed_from_u64(3));
        for (c, n) in clean.iter().zip(&noisy) {
            let ps: f64 = c.iter().map(|v| v * v).sum();
            let pn: f64 = c.iter().zip(n).map(|(a, b)| (b - a).powi(2)).sum();
            let snr = 10.0 * (ps / pn).log10();
            assert!(snr.abs() <= 0.5, "measured {snr} dB");
        }
    }

    #[test]
    fn noise_is_uncorrelated_across_channels() {
        let scene = anechoic_scene(0.0);
        let n = 5 * 16000;
        let mut chans = vec![vec![1e-3; n]; 4];
        add_noise(&mut chans, 0.0, &mut ChaCha8Rng::seed_from_u64(11));
        let centered: Vec<Vec<f64>> = chans
            .iter()
            .map(|c| {
                let m = c.iter().sum::<f64>() / n as f64;
                c.iter().map(|v| v - m).collect()
            })
            .collect();
        for i in 0..4 {
            for j in i + 1..4 {
                let dot: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
                let ni: f64 = centered[i].iter().map(|a| a * a).sum::<f64>().sqrt();
                let nj: f64 = centered[j].iter().map(|a| a * a).sum::<f64>().sqrt();
                assert!((dot / (ni * nj)).abs() < 0.05);
            }
        }
        let _ = scene;
    }

    #[test]
    fn deterministic_given_seed() {
        let mut scene = Scene::default();
        scene.snr_db = 5.0;
        let s = white(3000, 4);
        let a = simulate_recording(&scene, &s, 42).unwrap();
        let b = simulate_recording(&scene, &s, 42).unwrap();
        assert_eq!(a, b);
        let c = simulate_recording(&scene, &s, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn linear_in_source_without_noise() {
        let mut scene = Scene::default();
        scene.snr_db = f64::INFINITY;
        let s = white(2000, 5);
        let s3: Vec<f64> = s.iter().map(|v| -2.5 * v).collect();
        let a = simulate_recording(&scene, &s, 0).unwrap();
        let b = simulate_recording(&scene, &s3, 0).unwrap();
        for (ca, cb) in a.samples.iter().zip(&b.samples) {
            for (x, y) in ca.iter().zip(cb) {
                assert!((-2.5 * x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn zero_source_is_rejected() {
        let scene = Scene::default();
        assert!(matches!(
            simulate_recording(&scene, &[0.0; 100], 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn speech_shaped_spectrum_falls_off() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = SourceSignal::SpeechShaped.draw(1 << 16, 16000.0, &mut rng).unwrap();
        let n = x.len();
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let band = |lo: f64, hi: f64| {
            let (a, b) = ((lo * n as f64 / 16000.0) as usize, (hi * n as f64 / 16000.0) as usize);
            buf[a..b].iter().map(|c| c.norm_sqr()).sum::<f64>() / (b - a) as f64
        };
        // one octave up from 1-2 kHz to 2-4 kHz: about -6 dB in power density
        let drop = 10.0 * (band(2000.0, 4000.0) / band(1000.0, 2000.0)).log10();
        assert!((drop + 6.0).abs() < 1.0, "{drop}");
        let flat = 10.0 * (band(200.0, 300.0) / band(300.0, 450.0)).log10();
        assert!(flat.abs() < 1.0, "{flat}");
    }
}
