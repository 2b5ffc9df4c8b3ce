//! Coverage experiments: simulate, extract features, fit, and score every
//! interval method on the same data.
//!
//! One work unit is a (t60, repeat) pair. Its clean reverberant channels are
//! simulated once and reused for every SNR level; positions and source
//! excitations depend only on the repeat, so cells that differ in t60 or SNR
//! see the same geometry and source material.

mod report;
mod sweep;

use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conformal::{conformal_intervals, JackknifePlus, DEFAULT_GAMMA};
use crate::error::{Error, Result};
use crate::features::{AggregatedRtf, Analyzer, BandSelection, StftConfig};
use crate::gpr::{fit, gpr_interval, Axis, MmgpModel, DEFAULT_SIGMA_P2};
use crate::interval::PredictionInterval;
use crate::kernel::ScaleRule;
use crate::sim::dataset::{measurement_rng, DatasetPlan, GridSpec, Role, SignalSpec};
use crate::sim::signal::{add_noise, Simulator};
use crate::sim::{MultichannelRecording, Roi, Scene};

pub use report::{
    format_table, prediction_rows, read_predictions, summarize_predictions, write_predictions, CellFailure,
    CoverageReport, CoverageRow, PredictionRow, RepeatRow, RunManifest, COVERAGE_COLUMNS, REPEAT_COLUMNS, REPORT_FORMAT,
};
pub use sweep::{run_sweep, sweep_positions, SweepRow, SweepSpec};

/// Interval construction method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Gaussian interval from the posterior variance.
    Gpr,
    JackknifePlus,
    /// Exact transductive conformal interval.
    GprCp,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Gpr, Method::JackknifePlus, Method::GprCp];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Gpr => "gpr",
            Method::JackknifePlus => "jackknife_plus",
            Method::GprCp => "gpr_cp",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}; expected gpr, jackknife_plus or gpr_cp")))
    }
}

/// Full experiment description; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Room, array and ROI. `room.t60` and `snr_db` are overridden per cell.
    pub scene: Scene,
    pub t60s: Vec<f64>,
    #[serde(with = "crate::serde_float::vec")]
    pub snrs_db: Vec<f64>,
    pub deltas: Vec<f64>,
    pub methods: Vec<Method>,
    pub repeats: usize,
    pub seed: u64,
    #[serde(with = "crate::serde_float")]
    pub gamma: f64,
    pub grid: GridSpec,
    pub n_unlabeled: usize,
    pub n_test: usize,
    pub signal: SignalSpec,
    pub stft: StftConfig,
    pub band_hz: [f64; 2],
    pub sigma_p2: f64,
    pub scale_rule: ScaleRule,
    /// Add the label noise to the Gaussian baseline's predictive variance.
    pub baseline_noise: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scene: Scene::default(),
            t60s: vec![0.3, 0.7],
            snrs_db: vec![5.0, 15.0],
            deltas: vec![0.1, 0.05, 0.01],
            methods: Method::ALL.to_vec(),
            repeats: 10,
            seed: 0,
            gamma: DEFAULT_GAMMA,
            grid: GridSpec::default(),
            n_unlabeled: 100,
            n_test: 200,
            signal: SignalSpec::default(),
            stft: StftConfig::default(),
            band_hz: [150.0, 1500.0],
            sigma_p2: DEFAULT_SIGMA_P2,
            scale_rule: ScaleRule::default(),
            baseline_noise: true,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let nonempty = |name: &str, len: usize| {
            if len == 0 {
                Err(Error::Config(format!("{name} must not be empty")))
            } else {
                Ok(())
            }
        };
        nonempty("t60s", self.t60s.len())?;
        nonempty("snrs_db", self.snrs_db.len())?;
        nonempty("deltas", self.deltas.len())?;
        nonempty("methods", self.methods.len())?;
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        if let Some(d) = self.deltas.iter().find(|d| !(**d > 0.0 && **d < 1.0)) {
            return Err(Error::Config(format!("delta must be in (0, 1), got {d}")));
        }
        if let Some(t) = self.t60s.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
            return Err(Error::Config(format!("t60 must be finite and non-negative, got {t}")));
        }
        if self.snrs_db.iter().any(|s| s.is_nan()) {
            return Err(Error::Config("snr_db must not be NaN".into()));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::Config(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.sigma_p2 > 0.0 && self.sigma_p2.is_finite()) {
            return Err(Error::Config(format!("sigma_p2 must be positive, got {}", self.sigma_p2)));
        }
        if !(self.signal.duration > 0.0) {
            return Err(Error::Config("signal duration must be positive".into()));
        }
        self.grid.validate()?;
        self.scene.validate()?;
        for &t60 in &self.t60s {
            self.scene_for(t60, self.snrs_db[0]).validate()?;
        }
        if (self.stft.sample_rate - self.scene.room.sample_rate).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "STFT sample rate {} Hz differs from room sample rate {} Hz",
                self.stft.sample_rate, self.scene.room.sample_rate
            )));
        }
        BandSelection::new(self.band_hz[0], self.band_hz[1], &self.stft)?;
        Ok(())
    }

    pub fn scene_for(&self, t60: f64, snr_db: f64) -> Scene {
        let mut s = self.scene.clone();
        s.room.t60 = t60;
        s.snr_db = snr_db;
        s
    }

    /// Seed of repeat `r`.
    pub fn repeat_seed(&self, repeat: usize) -> u64 {
        mix_seed(self.seed, repeat as u64 + 1)
    }
}

/// SplitMix64 finalizer of `seed + k * golden`.
fn mix_seed(seed: u64, k: u64) -> u64 {
    let mut z = seed.wrapping_add(k.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Noise stream for measurement `index` of `role` at SNR level `level`.
fn noise_rng(seed: u64, level: usize, role: Role, index: usize) -> ChaCha8Rng {
    measurement_rng(mix_seed(seed, 0x4E01_5E00 + level as u64), role, index)
}

/// Simulation plus feature extraction for one room.
pub struct Pipeline {
    scene: Scene,
    signal: SignalSpec,
    sim: Simulator,
    analyzer: Analyzer,
    band: BandSelection,
}

impl Pipeline {
    pub fn new(scene: &Scene, signal: &SignalSpec, stft: &StftConfig, band_hz: [f64; 2]) -> Result<Self> {
        scene.validate()?;
        if (stft.sample_rate - scene.room.sample_rate).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "STFT sample rate {} Hz differs from room sample rate {} Hz",
                stft.sample_rate, scene.room.sample_rate
            )));
        }
        Ok(Pipeline {
            scene: scene.clone(),
            signal: signal.clone(),
            sim: Simulator::new(&scene.room, &scene.array)?,
            analyzer: Analyzer::new(stft)?,
            band: BandSelection::new(band_hz[0], band_hz[1], stft)?,
        })
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn band(&self) -> &BandSelection {
        &self.band
    }

    pub fn stft(&self) -> &StftConfig {
        self.analyzer.config()
    }

    /// Noise-free channels for measurement `index` of `role`; the excitation comes from its own stream.
    pub fn clean(&self, pos: [f64; 2], seed: u64, role: Role, index: usize) -> Result<Vec<Vec<f64>>> {
        if !self.scene.roi.contains(pos) {
            return Err(Error::Geometry(format!("source position {pos:?} is outside the ROI")));
        }
        let fs = self.scene.room.sample_rate;
        let mut rng = measurement_rng(seed, role, index);
        let s = self.signal.source.draw(self.signal.num_samples(fs), fs, &mut rng)?;
        self.sim.reverberant(&self.scene.source_at(pos), &s)
    }

    /// Noisy recording from clean channels at SNR level `level` (index into the caller's SNR list).
    pub fn noisy(&self, clean: &[Vec<f64>], snr_db: f64, seed: u64, level: usize, role: Role, index: usize) -> MultichannelRecording {
        let mut samples = clean.to_vec();
        add_noise(&mut samples, snr_db, &mut noise_rng(seed, level, role, index));
        MultichannelRecording {
            samples,
            sample_rate: self.scene.room.sample_rate,
        }
    }

    pub fn features(&self, rec: &MultichannelRecording) -> Result<AggregatedRtf> {
        self.analyzer.extract(rec, &self.band)
    }

    /// Recording at the scene's SNR.
    pub fn recording(&self, pos: [f64; 2], seed: u64, role: Role, index: usize) -> Result<MultichannelRecording> {
        let clean = self.clean(pos, seed, role, index)?;
        Ok(self.noisy(&clean, self.scene.snr_db, seed, 0, role, index))
    }

    /// Feature of one measurement at the scene's SNR.
    pub fn measure(&self, pos: [f64; 2], seed: u64, role: Role, index: usize) -> Result<AggregatedRtf> {
        self.features(&self.recording(pos, seed, role, index)?)
    }
}

/// Features of one dataset realization at one SNR.
#[derive(Debug, Clone)]
pub struct SplitFeatures {
    pub labeled: Vec<AggregatedRtf>,
    pub unlabeled: Vec<AggregatedRtf>,
    pub test: Vec<AggregatedRtf>,
}

/// Simulates every measurement of `plan` once and returns features per SNR level.
pub fn simulate_split(pipeline: &Pipeline, plan: &DatasetPlan, seed: u64, snrs_db: &[f64]) -> Result<Vec<SplitFeatures>> {
    let mut out: Vec<SplitFeatures> = snrs_db
        .iter()
        .map(|_| SplitFeatures {
            labeled: Vec::new(),
            unlabeled: Vec::new(),
            test: Vec::new(),
        })
        .collect();
    for role in [Role::Labeled, Role::Unlabeled, Role::Test] {
        for (i, &pos) in plan.positions(role).iter().enumerate() {
            let clean = pipeline.clean(pos, seed, role, i)?;
            for (level, (&snr, split)) in snrs_db.iter().zip(out.iter_mut()).enumerate() {
                let h = pipeline.features(&pipeline.noisy(&clean, snr, seed, level, role, i))?;
                match role {
                    Role::Labeled => split.labeled.push(h),
                    Role::Unlabeled => split.unlabeled.push(h),
                    Role::Test => split.test.push(h),
                }
            }
        }
    }
    Ok(out)
}

/// Intervals of one method at one miscoverage level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodIntervals {
    pub method: Method,
    pub delta: f64,
    pub intervals: [PredictionInterval; 2],
}

/// Point estimate and all requested intervals for one test feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointPrediction {
    pub estimate: [f64; 2],
    pub variance: [f64; 2],
    /// Ordered by method, then delta, as requested.
    pub intervals: Vec<MethodIntervals>,
}

/// Options shared by every prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictOptions {
    pub methods: Vec<Method>,
    pub deltas: Vec<f64>,
    pub gamma: f64,
    pub baseline_noise: bool,
}

impl PredictOptions {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        PredictOptions {
            methods: cfg.methods.clone(),
            deltas: cfg.deltas.clone(),
            gamma: cfg.gamma,
            baseline_noise: cfg.baseline_noise,
        }
    }

    pub fn needs_jackknife(&self) -> bool {
        self.methods.contains(&Method::JackknifePlus)
    }
}

/// Model plus the optional Jackknife+ refits, ready for prediction.
pub struct Predictor<'a> {
    pub model: &'a MmgpModel,
    jackknife: Option<JackknifePlus>,
    pub options: PredictOptions,
}

impl<'a> Predictor<'a> {
    pub fn new(model: &'a MmgpModel, options: PredictOptions) -> Result<Self> {
        let jackknife = if options.needs_jackknife() {
            Some(JackknifePlus::fit(model)?)
        } else {
            None
        };
        Ok(Predictor {
            model,
            jackknife,
            options,
        })
    }

    pub fn predict(&self, h_t: &AggregatedRtf) -> Result<PointPrediction> {
        let opts = &self.options;
        let tk = self.model.test_kernel(h_t)?;
        let post = self.model.posterior_from(&tk);
        let cp = if opts.methods.contains(&Method::GprCp) {
            Some(conformal_intervals(self.model, &tk, &opts.deltas, opts.gamma)?.1)
        } else {
            None
        };
        let mut intervals = Vec::with_capacity(opts.methods.len() * opts.deltas.len());
        for &method in &opts.methods {
            for (di, &delta) in opts.deltas.iter().enumerate() {
                let pair = match method {
                    Method::Gpr => [
                        gpr_interval(&post[0], self.model.sigma_p2(), delta, opts.baseline_noise)?,
                        gpr_interval(&post[1], self.model.sigma_p2(), delta, opts.baseline_noise)?,
                    ],
                    Method::JackknifePlus => {
                        let jk = self.jackknife.as_ref().expect("refits prepared for Jackknife+");
                        [jk.interval(&tk, Axis::X, delta)?, jk.interval(&tk, Axis::Y, delta)?]
                    }
                    Method::GprCp => cp.as_ref().expect("conformal intervals computed")[di].clone(),
                };
                intervals.push(MethodIntervals {
                    method,
                    delta,
                    intervals: pair,
                });
            }
        }
        Ok(PointPrediction {
            estimate: [post[0].mean, post[1].mean],
            variance: [post[0].variance, post[1].variance],
            intervals,
        })
    }
}

/// Fraction of truths inside their interval (closed endpoints count). NaN for empty input.
pub fn coverage(intervals: &[PredictionInterval], truths: &[f64]) -> Result<f64> {
    if intervals.len() != truths.len() {
        return Err(Error::Input(format!(
            "{} intervals vs {} truths",
            intervals.len(),
            truths.len()
        )));
    }
    if truths.is_empty() {
        return Ok(f64::NAN);
    }
    let hits = intervals.iter().zip(truths).filter(|(pi, &t)| pi.contains(t)).count();
    Ok(hits as f64 / truths.len() as f64)
}

/// Width used in statistics: total width, after clipping unbounded sets to `[lo, hi]`.
/// The flag reports whether clipping was needed.
pub fn reported_width(pi: &PredictionInterval, extent: [f64; 2]) -> (f64, bool) {
    if pi.is_unbounded() {
        (pi.clip(extent[0], extent[1]).total_width(), true)
    } else {
        (pi.total_width(), false)
    }
}

/// Running totals for one (method, delta, axis) cell.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Tally {
    pub covered: usize,
    pub n: usize,
    pub width_sum: f64,
    pub clipped: usize,
}

impl Tally {
    pub fn add(&mut self, pi: &PredictionInterval, truth: f64, extent: [f64; 2]) {
        let (w, clipped) = reported_width(pi, extent);
        self.n += 1;
        self.covered += pi.contains(truth) as usize;
        self.width_sum += w;
        self.clipped += clipped as usize;
    }

    pub fn merge(&mut self, other: &Tally) {
        self.covered += other.covered;
        self.n += other.n;
        self.width_sum += other.width_sum;
        self.clipped += other.clipped;
    }

    pub fn coverage(&self) -> Option<f64> {
        (self.n > 0).then(|| self.covered as f64 / self.n as f64)
    }

    pub fn mean_width(&self) -> Option<f64> {
        (self.n > 0).then(|| self.width_sum / self.n as f64)
    }
}

/// Tallies indexed `[method][delta][axis]` in config order.
pub type CellTallies = Vec<Vec<[Tally; 2]>>;

/// Fits on one split and scores every method on its test points.
pub fn evaluate_split(
    split: &SplitFeatures,
    plan: &DatasetPlan,
    roi: &Roi,
    cfg: &ExperimentConfig,
) -> Result<CellTallies> {
    let opts = PredictOptions::from_config(cfg);
    let mut tallies: CellTallies = vec![vec![[Tally::default(); 2]; opts.deltas.len()]; opts.methods.len()];
    let model = fit(
        split.labeled.clone(),
        &plan.labeled,
        split.unlabeled.clone(),
        &cfg.scale_rule,
        cfg.sigma_p2,
    )?;
    if split.test.is_empty() {
        return Ok(tallies);
    }
    let predictor = Predictor::new(&model, opts)?;
    let extents = [roi.extent(0), roi.extent(1)];
    for (h, truth) in split.test.iter().zip(&plan.test) {
        let pred = predictor.predict(h)?;
        for (k, mi) in pred.intervals.iter().enumerate() {
            let (m, d) = (k / cfg.deltas.len(), k % cfg.deltas.len());
            for axis in Axis::BOTH {
                let a = axis.index();
                tallies[m][d][a].add(&mi.intervals[a], truth[a], extents[a]);
            }
        }
    }
    Ok(tallies)
}

/// Runs the whole grid. Stage errors inside a cell are recorded in the report
/// and the remaining cells still run; configuration errors abort.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<CoverageReport> {
    cfg.validate()?;
    let start = Instant::now();
    let pipelines = cfg
        .t60s
        .iter()
        .map(|&t60| Pipeline::new(&cfg.scene_for(t60, cfg.snrs_db[0]), &cfg.signal, &cfg.stft, cfg.band_hz))
        .collect::<Result<Vec<_>>>()?;
    let units: Vec<(usize, usize)> = (0..cfg.t60s.len())
        .flat_map(|t| (0..cfg.repeats).map(move |r| (t, r)))
        .collect();

    let results: Vec<Vec<std::result::Result<CellTallies, String>>> = units
        .par_iter()
        .map(|&(t, r)| {
            let seed = cfg.repeat_seed(r);
            log::info!("t60 = {} s, repeat {}: simulating", cfg.t60s[t], r);
            let plan = match DatasetPlan::new(&cfg.scene.roi, &cfg.grid, cfg.n_unlabeled, cfg.n_test, seed) {
                Ok(p) => p,
                Err(e) => return vec![Err(e.to_string()); cfg.snrs_db.len()],
            };
            match simulate_split(&pipelines[t], &plan, seed, &cfg.snrs_db) {
                Err(e) => vec![Err(format!("simulation: {e}")); cfg.snrs_db.len()],
                Ok(splits) => splits
                    .iter()
                    .zip(&cfg.snrs_db)
                    .map(|(split, snr)| {
                        log::info!("t60 = {} s, snr = {snr} dB, repeat {r}: evaluating", cfg.t60s[t]);
                        evaluate_split(split, &plan, &cfg.scene.roi, cfg).map_err(|e| e.to_string())
                    })
                    .collect(),
            }
        })
        .collect();

    let mut report = CoverageReport::assemble(cfg, &units, results);
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pi(lo: f64, hi: f64) -> PredictionInterval {
        PredictionInterval::single(lo, hi, 0.1)
    }

    #[test]
    fn coverage_examples() {
        let whole: Vec<_> = (0..5).map(|_| pi(1.6, 3.6)).collect();
        let truths = [1.6, 2.0, 2.5, 3.0, 3.6];
        assert_eq!(coverage(&whole, &truths).unwrap(), 1.0);
        let empty: Vec<_> = (0..5).map(|_| PredictionInterval::empty(0.1)).collect();
        assert_eq!(coverage(&empty, &truths).unwrap(), 0.0);
        let four = [pi(0.0, 1.0), pi(0.0, 1.0), pi(0.0, 1.0), pi(0.0, 1.0)];
        assert_eq!(coverage(&four, &[0.5, 1.0, 0.0, 1.5]).unwrap(), 0.75);
        assert!(coverage(&four, &[0.5]).is_err());
    }

    #[test]
    fn unbounded_widths_are_clipped() {
        let open = PredictionInterval::single(f64::NEG_INFINITY, 2.0, 0.1);
        assert_eq!(reported_width(&open, [1.6, 3.6]), (0.3999999999999999, true));
        assert_eq!(reported_width(&pi(0.0, 5.0), [1.6, 3.6]), (5.0, false));
    }

    #[test]
    fn config_defaults_and_round_trip() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.grid.len(), 225);
        assert_eq!((cfg.n_unlabeled, cfg.n_test, cfg.repeats), (100, 200, 10));
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
        let partial = ExperimentConfig::from_toml_str("repeats = 2\ngamma = \"inf\"\n").unwrap();
        assert_eq!(partial.repeats, 2);
        assert!(partial.gamma.is_infinite());
    }

    #[test]
    fn config_errors() {
        for text in ["repeats = 0", "deltas = []", "deltas = [1.5]", "methods = []", "t60s = [-1.0]", "bogus = 1"] {
            assert!(ExperimentConfig::from_toml_str(text).is_err(), "{text}");
        }
    }

    #[test]
    fn method_names() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("svm".parse::<Method>().is_err());
    }

    #[test]
    fn seeds_differ_per_repeat() {
        let cfg = ExperimentConfig::default();
        assert_ne!(cfg.repeat_seed(0), cfg.repeat_seed(1));
        assert_eq!(cfg.repeat_seed(3), ExperimentConfig::default().repeat_seed(3));
    }
}
