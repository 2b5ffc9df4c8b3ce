//! STFT analysis and relative-transfer-function features.
//!
//! For every node the RTF at bin k is the ratio of the cross-PSD between the
//! two microphones to the PSD of the first one, both estimated by averaging
//! over STFT frames. The per-node vectors over the selected band are
//! concatenated into one [`AggregatedRtf`].

pub mod file;

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::MultichannelRecording;

pub use file::{FeatureHeader, FeatureRow, FeatureSet};

/// Minimum frame count for a usable PSD estimate.
pub const MIN_FRAMES: usize = 8;
/// Bins whose first-mic PSD falls below this fraction of the band mean are rejected.
pub const PSD_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    #[default]
    Hann,
    Rectangular,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StftConfig {
    pub fft_size: usize,
    pub overlap: f64,
    #[serde(default)]
    pub window: WindowKind,
    pub sample_rate: f64,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig {
            fft_size: 1024,
            overlap: 0.75,
            window: WindowKind::Hann,
            sample_rate: 16_000.0,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.fft_size.is_power_of_two() || self.fft_size < 2 {
            return Err(Error::Config(format!(
                "fft_size must be a power of two, got {}",
                self.fft_size
            )));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(Error::Config(format!("overlap must be in [0, 1), got {}", self.overlap)));
        }
        if !(self.sample_rate > 0.0) {
            return Err(Error::Config(format!("sample rate must be positive, got {}", self.sample_rate)));
        }
        if self.hop() == 0 {
            return Err(Error::Config("overlap leaves a zero hop".into()));
        }
        Ok(())
    }

    /// One-sided bin count, `fft_size / 2 + 1`.
    pub fn num_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn hop(&self) -> usize {
        (self.fft_size as f64 * (1.0 - self.overlap)).round() as usize
    }

    pub fn num_frames(&self, len: usize) -> usize {
        if len < self.fft_size {
            0
        } else {
            (len - self.fft_size) / self.hop() + 1
        }
    }

    /// Window normalized to unit sum.
    pub fn window(&self) -> Vec<f64> {
        let n = self.fft_size;
        let w: Vec<f64> = match self.window {
            WindowKind::Hann => (0..n)
                .map(|i| 0.5 * (1.0 - (2.0 * PI * i as f64 / n as f64).cos()))
                .collect(),
            WindowKind::Rectangular => vec![1.0; n],
        };
        let sum: f64 = w.iter().sum();
        w.into_iter().map(|v| v / sum).collect()
    }

    pub fn bin_frequency(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate / self.fft_size as f64
    }
}

/// Selected band; bin indices are inclusive and rounded to the nearest bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSelection {
    pub f_low: f64,
    pub f_high: f64,
    pub bin_indices: Vec<usize>,
}

impl BandSelection {
    pub fn new(f_low: f64, f_high: f64, cfg: &StftConfig) -> Result<Self> {
        cfg.validate()?;
        if !(f_low < f_high) || f_low < 0.0 {
            return Err(Error::Config(format!("invalid band {f_low}..{f_high} Hz")));
        }
        let to_bin = |f: f64| (f * cfg.fft_size as f64 / cfg.sample_rate).round() as usize;
        let lo = to_bin(f_low);
        let hi = to_bin(f_high).min(cfg.num_bins() - 1);
        if lo > hi {
            return Err(Error::Config(format!("band {f_low}..{f_high} Hz selects no bins")));
        }
        Ok(BandSelection {
            f_low,
            f_high,
            bin_indices: (lo..=hi).collect(),
        })
    }

    pub fn num_bins(&self) -> usize {
        self.bin_indices.len()
    }
}

/// One-sided STFT, `bins x frames`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub bins: usize,
    pub frames: usize,
    /// Frame-major: `data[l * bins + k]`.
    pub data: Vec<Complex64>,
}

impl Spectrogram {
    pub fn get(&self, k: usize, l: usize) -> Complex64 {
        self.data[l * self.bins + k]
    }

    pub fn frame(&self, l: usize) -> &[Complex64] {
        &self.data[l * self.bins..(l + 1) * self.bins]
    }
}

/// Reusable STFT machinery for one configuration.
pub struct Analyzer {
    cfg: StftConfig,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl Analyzer {
    pub fn new(cfg: &StftConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Analyzer {
            cfg: *cfg,
            window: cfg.window(),
            fft: FftPlanner::new().plan_fft_forward(cfg.fft_size),
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.cfg
    }

    pub fn stft(&self, signal: &[f64]) -> Result<Spectrogram> {
        let n = self.cfg.fft_size;
        if signal.len() < n {
            return Err(Error::Input(format!(
                "signal has {} samples, fewer than fft_size {n}",
                signal.len()
            )));
        }
        let frames = self.cfg.num_frames(signal.len());
        let bins = self.cfg.num_bins();
        let hop = self.cfg.hop();
        let mut data = Vec::with_capacity(frames * bins);
        let mut buf = vec![Complex64::default(); n];
        for l in 0..frames {
            let seg = &signal[l * hop..l * hop + n];
            for ((b, &x), &w) in buf.iter_mut().zip(seg).zip(&self.window) {
                *b = Complex64::new(x * w, 0.0);
            }
            self.fft.process(&mut buf);
            data.extend_from_slice(&buf[..bins]);
        }
        Ok(Spectrogram { bins, frames, data })
    }

    /// RTF of one node: CPSD(mic2, mic1) / PSD(mic1) over the selected bins.
    pub fn estimate_rtf(&self, mic1: &[f64], mic2: &[f64], band: &BandSelection) -> Result<NodeRtf> {
        if mic1.len() != mic2.len() {
            return Err(Error::Input(format!(
                "node channels differ in length: {} vs {}",
                mic1.len(),
                mic2.len()
            )));
        }
        let n = self.cfg.fft_size;
        let frames = self.cfg.num_frames(mic1.len());
        if frames < MIN_FRAMES {
            return Err(Error::Input(format!(
                "{frames} STFT frames available, at least {MIN_FRAMES} required"
            )));
        }
        if band.bin_indices.iter().any(|&k| k >= self.cfg.num_bins()) {
            return Err(Error::Input("band selects bins beyond the STFT range".into()));
        }
        let hop = self.cfg.hop();
        let f = band.num_bins();
        let mut s11 = vec![0.0; f];
        let mut s21 = vec![Complex64::default(); f];
        let mut buf = vec![Complex64::default(); n];
        for l in 0..frames {
            let off = l * hop;
            // both real channels in one transform: z = x1 + i x2
            for (t, b) in buf.iter_mut().enumerate() {
                let w = self.window[t];
                *b = Complex64::new(mic1[off + t] * w, mic2[off + t] * w);
            }
            self.fft.process(&mut buf);
            for (j, &k) in band.bin_indices.iter().enumerate() {
                let zk = buf[k];
                let zn = buf[(n - k) % n].conj();
                let x1 = (zk + zn) * 0.5;
                let x2 = (zk - zn) * Complex64::new(0.0, -0.5);
                s11[j] += x1.norm_sqr();
                s21[j] += x2 * x1.conj();
            }
        }
        let mean_power = s11.iter().sum::<f64>() / f as f64;
        let degenerate: Vec<usize> = band
            .bin_indices
            .iter()
            .zip(&s11)
            .filter(|(_, &p)| !(p > PSD_FLOOR * mean_power) || mean_power == 0.0)
            .map(|(&k, _)| k)
            .collect();
        if !degenerate.is_empty() {
            return Err(Error::DegenerateBins { bins: degenerate });
        }
        Ok(NodeRtf {
            values: s21.iter().zip(&s11).map(|(c, p)| c / p).collect(),
        })
    }

    /// Aggregated feature over all nodes of a recording.
    pub fn extract(&self, rec: &MultichannelRecording, band: &BandSelection) -> Result<AggregatedRtf> {
        if rec.num_channels() == 0 || rec.num_channels() % 2 != 0 {
            return Err(Error::Input(format!(
                "recording has {} channels, expected two per node",
                rec.num_channels()
            )));
        }
        let nodes = (0..rec.num_channels() / 2)
            .map(|m| {
                let [a, b] = rec.node(m);
                self.estimate_rtf(a, b, band)
            })
            .collect::<Result<Vec<_>>>()?;
        aggregate(&nodes)
    }
}

pub fn stft(signal: &[f64], cfg: &StftConfig) -> Result<Spectrogram> {
    Analyzer::new(cfg)?.stft(signal)
}

/// RTF estimate for a two-channel node recording.
pub fn estimate_rtf(node_recording: [&[f64]; 2], cfg: &StftConfig, band: &BandSelection) -> Result<NodeRtf> {
    Analyzer::new(cfg)?.estimate_rtf(node_recording[0], node_recording[1], band)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRtf {
    pub values: Vec<Complex64>,
}

impl NodeRtf {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Concatenated RTF vector of all nodes, node-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedRtf {
    nodes: usize,
    bins: usize,
    flat: Vec<Complex64>,
}

impl AggregatedRtf {
    pub fn from_flat(nodes: usize, bins: usize, flat: Vec<Complex64>) -> Result<Self> {
        if nodes == 0 || bins == 0 || flat.len() != nodes * bins {
            return Err(Error::Input(format!(
                "flat feature of length {} does not match {nodes} nodes x {bins} bins",
                flat.len()
            )));
        }
        Ok(AggregatedRtf { nodes, bins, flat })
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes
    }

    pub fn num_bins(&self) -> usize {
        self.bins
    }

    pub fn flat(&self) -> &[Complex64] {
        &self.flat
    }

    pub fn node(&self, m: usize) -> &[Complex64] {
        &self.flat[m * self.bins..(m + 1) * self.bins]
    }

    pub fn split(&self) -> Vec<NodeRtf> {
        (0..self.nodes)
            .map(|m| NodeRtf {
                values: self.node(m).to_vec(),
            })
            .collect()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nodes, self.bins)
    }
}

pub fn aggregate(rtfs: &[NodeRtf]) -> Result<AggregatedRtf> {
    let first = rtfs
        .first()
        .ok_or_else(|| Error::Input("no node RTFs to aggregate".into()))?;
    let bins = first.len();
    if let Some((m, bad)) = rtfs.iter().enumerate().find(|(_, r)| r.len() != bins) {
        return Err(Error::Input(format!(
            "node {m} has {} bins, node 0 has {bins}",
            bad.len()
        )));
    }
    let flat = rtfs.iter().flat_map(|r| r.values.iter().copied()).collect();
    AggregatedRtf::from_flat(rtfs.len(), bins, flat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn noise(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.sample(StandardNormal)).collect()
    }

    fn paper_band() -> (StftConfig, BandSelection) {
        let cfg = StftConfig::default();
        let band = BandSelection::new(150.0, 1500.0, &cfg).unwrap();
        (cfg, band)
    }

    #[test]
    fn band_index_arithmetic() {
        let (cfg, band) = paper_band();
        assert_eq!(cfg.num_bins(), 513);
        assert_eq!(cfg.hop(), 256);
        assert_eq!(band.bin_indices.first(), Some(&10));
        assert_eq!(band.bin_indices.last(), Some(&96));
        assert_eq!(band.num_bins(), 87);
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = StftConfig::default();
        cfg.fft_size = 1000;
        assert!(cfg.validate().is_err());
        cfg.fft_size = 1024;
        cfg.overlap = 1.0;
        assert!(cfg.validate().is_err());
        assert!(BandSelection::new(1500.0, 150.0, &StftConfig::default()).is_err());
    }

    #[test]
    fn tone_concentrates_energy() {
        let mut cfg = StftConfig::default();
        let k0 = 40;
        let x: Vec<f64> = (0..4096)
            .map(|t| (2.0 * PI * k0 as f64 * t as f64 / 1024.0).cos())
            .collect();
        cfg.window = WindowKind::Rectangular;
        let spec = stft(&x, &cfg).unwrap();
        let frame = spec.frame(2);
        let total: f64 = frame.iter().map(|c| c.norm_sqr()).sum();
        assert!(frame[k0].norm_sqr() / total > 0.9);
        // Hann: the main lobe (center and two neighbours) holds the energy
        cfg.window = WindowKind::Hann;
        let spec = stft(&x, &cfg).unwrap();
        let frame = spec.frame(2);
        let total: f64 = frame.iter().map(|c| c.norm_sqr()).sum();
        let lobe: f64 = frame[k0 - 1..=k0 + 1].iter().map(|c| c.norm_sqr()).sum();
        assert!(lobe / total > 0.9);
        assert!(frame[k0].norm() > frame[k0 + 1].norm());
    }

    #[test]
    fn zero_signal_gives_zero_spectrum() {
        let spec = stft(&vec![0.0; 3000], &StftConfig::default()).unwrap();
        assert!(spec.data.iter().all(|c| c.norm() == 0.0));
        assert_eq!(spec.frames, (3000 - 1024) / 256 + 1);
    }

    #[test]
    fn too_short_signal() {
        assert!(matches!(stft(&[1.0; 100], &StftConfig::default()), Err(Error::Input(_))));
    }

    #[test]
    fn parseval_per_frame() {
        let cfg = StftConfig::default();
        let x = noise(2048, 1);
        let spec = stft(&x, &cfg).unwrap();
        let w = cfg.window();
        let n = cfg.fft_size;
        for l in 0..spec.frames {
            let seg = &x[l * cfg.hop()..l * cfg.hop() + n];
            let time: f64 = seg.iter().zip(&w).map(|(a, b)| (a * b).powi(2)).sum();
            let f = spec.frame(l);
            let mut freq = f[0].norm_sqr() + f[n / 2].norm_sqr();
            freq += 2.0 * f[1..n / 2].iter().map(|c| c.norm_sqr()).sum::<f64>();
            freq /= n as f64;
            assert!((time - freq).abs() / time < 1e-6);
        }
    }

    #[test]
    fn identical_channels_give_unit_rtf() {
        let (cfg, band) = paper_band();
        let x = noise(16000, 2);
        let rtf = estimate_rtf([&x, &x], &cfg, &band).unwrap();
        assert_eq!(rtf.len(), 87);
        for v in &rtf.values {
            assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn pure_delay_rtf_phase() {
        let (cfg, band) = paper_band();
        let d = 2usize;
        let src = noise(30 * 16000 + d, 3);
        let x1 = &src[d..];
        let x2 = &src[..src.len() - d];
        let rtf = estimate_rtf([x1, x2], &cfg, &band).unwrap();
        for (j, &k) in band.bin_indices.iter().enumerate() {
            let expect = -2.0 * PI * k as f64 * d as f64 / cfg.fft_size as f64;
            let err = (rtf.values[j].arg() - expect + PI).rem_euclid(2.0 * PI) - PI;
            assert!(err.abs() < 1e-3, "bin {k}: {err}");
        }
    }

    #[test]
    fn rtf_is_scale_invariant() {
        let (cfg, band) = paper_band();
        let x1 = noise(8000, 4);
        let x2: Vec<f64> = x1.iter().zip(noise(8000, 5)).map(|(a, b)| 0.7 * a + 0.3 * b).collect();
        let base = estimate_rtf([&x1, &x2], &cfg, &band).unwrap();
        for alpha in [0.1, 10.0] {
            let y1: Vec<f64> = x1.iter().map(|v| alpha * v).collect();
            let y2: Vec<f64> = x2.iter().map(|v| alpha * v).collect();
            let r = estimate_rtf([&y1, &y2], &cfg, &band).unwrap();
            for (a, b) in base.values.iter().zip(&r.values) {
                assert!((a - b).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn degenerate_bins_are_reported() {
        let (cfg, band) = paper_band();
        let zeros = vec![0.0; 8000];
        match estimate_rtf([&zeros, &zeros], &cfg, &band) {
            Err(Error::DegenerateBins { bins }) => assert_eq!(bins.len(), 87),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn needs_enough_frames() {
        let (cfg, band) = paper_band();
        let x = noise(1024 + 6 * 256, 6);
        assert!(matches!(estimate_rtf([&x, &x], &cfg, &band), Err(Error::Input(_))));
        let y = noise(100, 7);
        assert!(matches!(estimate_rtf([&x, &y], &cfg, &band), Err(Error::Input(_))));
    }

    #[test]
    fn aggregation_layout() {
        let u = NodeRtf {
            values: vec![Complex64::new(1.0, 2.0), Complex64::new(3.0, 4.0)],
        };
        let v = NodeRtf {
            values: vec![Complex64::new(5.0, 6.0), Complex64::new(7.0, 8.0)],
        };
        let single = aggregate(std::slice::from_ref(&u)).unwrap();
        assert_eq!(single.flat(), &u.values[..]);
        let agg = aggregate(&[u.clone(), v.clone()]).unwrap();
        assert_eq!(agg.flat().len(), 4);
        assert_eq!(agg.split(), vec![u.clone(), v]);
        let w = NodeRtf {
            values: vec![Complex64::new(0.0, 0.0)],
        };
        assert!(matches!(aggregate(&[u, w]), Err(Error::Input(_))));
    }
}
