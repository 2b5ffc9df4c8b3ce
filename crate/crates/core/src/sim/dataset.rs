//! Labeled grid, random unlabeled and test positions, and their recordings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::signal::{SourceSignal, Simulator};
use super::{MultichannelRecording, Roi, Scene};
use crate::error::{Error, Result};

/// Uniform labeled grid over the ROI, `nx` by `ny` cell centers.
///
/// A 2 m ROI with 15 points per axis gives a 2/15 = 0.133 m pitch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { nx: 15, ny: 15 }
    }
}

impl GridSpec {
    /// Grid with the given pitch in meters (rounded to whole cells).
    pub fn from_pitch(roi: &Roi, pitch: f64) -> Result<Self> {
        if !(pitch > 0.0) || !pitch.is_finite() {
            return Err(Error::Config(format!("grid resolution must be positive, got {pitch}")));
        }
        let nx = (roi.width() / pitch).round().max(1.0) as usize;
        let ny = (roi.height() / pitch).round().max(1.0) as usize;
        Ok(GridSpec { nx, ny })
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::Config(format!(
                "grid resolution must be positive, got {}x{}",
                self.nx, self.ny
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pitch(&self, roi: &Roi) -> [f64; 2] {
        [roi.width() / self.nx as f64, roi.height() / self.ny as f64]
    }

    /// Positions in row-major order (x fastest).
    pub fn positions(&self, roi: &Roi) -> Result<Vec<[f64; 2]>> {
        self.validate()?;
        let [px, py] = self.pitch(roi);
        Ok((0..self.ny)
            .flat_map(|j| {
                (0..self.nx).map(move |i| {
                    [
                        roi.x[0] + (i as f64 + 0.5) * px,
                        roi.y[0] + (j as f64 + 0.5) * py,
                    ]
                })
            })
            .collect())
    }
}

/// Which subset a measurement belongs to; also selects its RNG stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Labeled,
    Unlabeled,
    Test,
}

impl Role {
    fn stream(self) -> u64 {
        match self {
            Role::Labeled => 1,
            Role::Unlabeled => 2,
            Role::Test => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Labeled => "labeled",
            Role::Unlabeled => "unlabeled",
            Role::Test => "test",
        }
    }
}

impl std::str::FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "labeled" => Ok(Role::Labeled),
            "unlabeled" => Ok(Role::Unlabeled),
            "test" => Ok(Role::Test),
            other => Err(Error::Format(format!("unknown role {other:?}"))),
        }
    }
}

/// Independent RNG for measurement `index` of `role`.
pub fn measurement_rng(seed: u64, role: Role, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((role.stream() << 40) | index as u64);
    rng
}

/// Source positions for one dataset realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetPlan {
    pub labeled: Vec<[f64; 2]>,
    pub unlabeled: Vec<[f64; 2]>,
    pub test: Vec<[f64; 2]>,
}

pub fn uniform_positions(roi: &Roi, n: usize, rng: &mut impl Rng) -> Vec<[f64; 2]> {
    (0..n)
        .map(|_| {
            [
                rng.gen_range(roi.x[0]..=roi.x[1]),
                rng.gen_range(roi.y[0]..=roi.y[1]),
            ]
        })
        .collect()
}

impl DatasetPlan {
    pub fn new(roi: &Roi, grid: &GridSpec, n_unlabeled: usize, n_test: usize, seed: u64) -> Result<Self> {
        let labeled = grid.positions(roi)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0xD47A);
        let unlabeled = uniform_positions(roi, n_unlabeled, &mut rng);
        let test = uniform_positions(roi, n_test, &mut rng);
        Ok(DatasetPlan {
            labeled,
            unlabeled,
            test,
        })
    }

    pub fn positions(&self, role: Role) -> &[[f64; 2]] {
        match role {
            Role::Labeled => &self.labeled,
            Role::Unlabeled => &self.unlabeled,
            Role::Test => &self.test,
        }
    }
}

/// How each measurement's excitation is drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub source: SourceSignal,
    /// Excitation duration in seconds.
    pub duration: f64,
}

impl Default for SignalSpec {
    fn default() -> Self {
        SignalSpec {
            source: SourceSignal::SpeechShaped,
            duration: 1.0,
        }
    }
}

impl SignalSpec {
    pub fn num_samples(&self, sample_rate: f64) -> usize {
        (self.duration * sample_rate).round() as usize
    }
}

/// Records one measurement: fresh excitation and noise from the measurement's own stream.
pub fn record_measurement(
    sim: &Simulator,
    scene: &Scene,
    signals: &SignalSpec,
    pos: [f64; 2],
    snr_db: f64,
    rng: &mut ChaCha8Rng,
) -> Result<MultichannelRecording> {
    let fs = sim.room().sample_rate;
    let s = signals.source.draw(signals.num_samples(fs), fs, rng)?;
    sim.record(&scene.source_at(pos), &s, snr_db, rng)
}

#[derive(Debug, Clone)]
pub struct LabeledRecording {
    pub recording: MultichannelRecording,
    pub position: [f64; 2],
}

/// Labeled, unlabeled and test recordings. Test positions are kept for
/// scoring only.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub labeled: Vec<LabeledRecording>,
    pub unlabeled: Vec<MultichannelRecording>,
    pub test: Vec<LabeledRecording>,
    pub plan: DatasetPlan,
}

pub fn build_dataset(
    scene_template: &Scene,
    grid_spec: &GridSpec,
    n_unlabeled: usize,
    n_test: usize,
    signals: &SignalSpec,
    rng_seed: u64,
) -> Result<Dataset> {
    scene_template.validate()?;
    let plan = DatasetPlan::new(&scene_template.roi, grid_spec, n_unlabeled, n_test, rng_seed)?;
    let sim = Simulator::new(&scene_template.room, &scene_template.array)?;
    let record = |role: Role| -> Result<Vec<LabeledRecording>> {
        plan.positions(role)
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let mut rng = measurement_rng(rng_seed, role, i);
                let recording = record_measurement(&sim, scene_template, signals, p, scene_template.snr_db, &mut rng)?;
                Ok(LabeledRecording { recording, position: p })
            })
            .collect()
    };
    let labeled = record(Role::Labeled)?;
    let unlabeled = record(Role::Unlabeled)?.into_iter().map(|r| r.recording).collect();
    let test = record(Role::Test)?;
    Ok(Dataset {
        labeled,
        unlabeled,
        test,
        plan,
    })
}
