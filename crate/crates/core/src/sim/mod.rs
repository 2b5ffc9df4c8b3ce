//! Reverberant multichannel recordings from a shoebox room.
//!
//! [`rir`] holds the image-source impulse response generator, [`signal`]
//! the built-in source signals and convolution, and [`dataset`] the
//! labeled/unlabeled/test split used by the experiments.

pub mod dataset;
pub mod rir;
pub mod signal;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dataset::{build_dataset, Dataset, GridSpec, LabeledRecording};
pub use rir::{generate_rir, reflection_coefficient, RirGenerator};
pub use signal::{simulate_recording, SourceSignal};

pub type Vec3 = [f64; 3];

pub const DEFAULT_SAMPLE_RATE: f64 = 16_000.0;
pub const DEFAULT_SPEED_OF_SOUND: f64 = 343.0;
pub const DEFAULT_HEIGHT: f64 = 1.5;

/// Shoebox room with frequency-independent wall absorption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    /// Length, width, height in meters.
    pub dimensions: Vec3,
    /// Reverberation time in seconds; 0 gives an anechoic room.
    pub t60: f64,
    #[serde(default = "default_sample_rate")]
    pub sample_rate: f64,
    #[serde(default = "default_speed_of_sound")]
    pub speed_of_sound: f64,
}

fn default_sample_rate() -> f64 {
    DEFAULT_SAMPLE_RATE
}

fn default_speed_of_sound() -> f64 {
    DEFAULT_SPEED_OF_SOUND
}

fn default_height() -> f64 {
    DEFAULT_HEIGHT
}

impl RoomSpec {
    pub fn new(dimensions: Vec3, t60: f64) -> Result<Self> {
        let room = RoomSpec {
            dimensions,
            t60,
            sample_rate: DEFAULT_SAMPLE_RATE,
            speed_of_sound: DEFAULT_SPEED_OF_SOUND,
        };
        room.validate()?;
        Ok(room)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimensions.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return Err(Error::Config(format!(
                "room dimensions must be positive, got {:?}",
                self.dimensions
            )));
        }
        if !(self.t60 >= 0.0) {
            return Err(Error::Config(format!("t60 must be >= 0, got {}", self.t60)));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(Error::Config(format!(
                "sample rate must be positive, got {}",
                self.sample_rate
            )));
        }
        if !(self.speed_of_sound > 0.0 && self.speed_of_sound.is_finite()) {
            return Err(Error::Config(format!(
                "speed of sound must be positive, got {}",
                self.speed_of_sound
            )));
        }
        Ok(())
    }

    /// Strict interior test.
    pub fn contains(&self, p: &Vec3) -> bool {
        p.iter()
            .zip(self.dimensions.iter())
            .all(|(&x, &d)| x > 0.0 && x < d)
    }

    pub fn volume(&self) -> f64 {
        self.dimensions.iter().product()
    }

    pub fn surface(&self) -> f64 {
        let [lx, ly, lz] = self.dimensions;
        2.0 * (lx * ly + lx * lz + ly * lz)
    }
}

/// A two-microphone node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub mic1_pos: Vec3,
    pub mic2_pos: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayLayout {
    pub nodes: Vec<Node>,
}

impl ArrayLayout {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_channels(&self) -> usize {
        2 * self.nodes.len()
    }

    /// Microphone positions in channel order: node 0 mic 1, node 0 mic 2, node 1 mic 1, ...
    pub fn mic_positions(&self) -> Vec<Vec3> {
        self.nodes
            .iter()
            .flat_map(|n| [n.mic1_pos, n.mic2_pos])
            .collect()
    }

    pub fn validate(&self, room: &RoomSpec) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Config("array needs at least one node".into()));
        }
        for (m, node) in self.nodes.iter().enumerate() {
            for p in [&node.mic1_pos, &node.mic2_pos] {
                if !room.contains(p) {
                    return Err(Error::Geometry(format!(
                        "node {m}: microphone at {p:?} is not strictly inside the room"
                    )));
                }
            }
            if node.mic1_pos == node.mic2_pos {
                return Err(Error::Geometry(format!(
                    "node {m}: both microphones at {:?}",
                    node.mic1_pos
                )));
            }
        }
        Ok(())
    }
}

/// Axis-aligned rectangle in the horizontal plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Roi {
    pub x: [f64; 2],
    pub y: [f64; 2],
}

impl Roi {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x[0] && p[0] <= self.x[1] && p[1] >= self.y[0] && p[1] <= self.y[1]
    }

    pub fn extent(&self, axis: usize) -> [f64; 2] {
        if axis == 0 {
            self.x
        } else {
            self.y
        }
    }

    pub fn width(&self) -> f64 {
        self.x[1] - self.x[0]
    }

    pub fn height(&self) -> f64 {
        self.y[1] - self.y[0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub room: RoomSpec,
    pub array: ArrayLayout,
    pub source_pos: [f64; 2],
    #[serde(default = "default_height")]
    pub source_height: f64,
    pub roi: Roi,
    /// Per-channel SNR in dB; `inf` disables noise.
    #[serde(with = "crate::serde_float")]
    pub snr_db: f64,
    #[serde(default)]
    pub seed: u64,
}

const DEFAULT_SCENE_TOML: &str = include_str!("../../../../configs/default_scene.toml");

impl Scene {
    pub fn validate(&self) -> Result<()> {
        self.room.validate()?;
        self.array.validate(&self.room)?;
        let [lx, ly, _] = self.room.dimensions;
        if !(self.roi.x[0] < self.roi.x[1] && self.roi.y[0] < self.roi.y[1]) {
            return Err(Error::Config(format!("empty ROI {:?}", self.roi)));
        }
        if self.roi.x[0] <= 0.0 || self.roi.x[1] >= lx || self.roi.y[0] <= 0.0 || self.roi.y[1] >= ly {
            return Err(Error::Geometry(format!(
                "ROI {:?} is not inside the room footprint",
                self.roi
            )));
        }
        if !self.roi.contains(self.source_pos) {
            return Err(Error::Geometry(format!(
                "source {:?} outside ROI {:?}",
                self.source_pos, self.roi
            )));
        }
        if !(self.source_height > 0.0 && self.source_height < self.room.dimensions[2]) {
            return Err(Error::Geometry(format!(
                "source height {} outside the room",
                self.source_height
            )));
        }
        if self.snr_db.is_nan() {
            return Err(Error::Config("snr_db is NaN".into()));
        }
        Ok(())
    }

    pub fn source_position(&self) -> Vec3 {
        self.source_at(self.source_pos)
    }

    /// Source placed at `p` at this scene's source height.
    pub fn source_at(&self, p: [f64; 2]) -> Vec3 {
        [p[0], p[1], self.source_height]
    }

    pub fn with_source(&self, p: [f64; 2]) -> Scene {
        Scene {
            source_pos: p,
            ..self.clone()
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let scene: Scene = toml::from_str(s)?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn from_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("scene is always serializable")
    }
}

impl Default for Scene {
    /// 5.2 x 6.2 x 3.5 m room, five nodes (four facing the X walls, one on a Y wall),
    /// 2 x 2 m ROI around the room center.
    fn default() -> Self {
        Self::from_toml_str(DEFAULT_SCENE_TOML).expect("bundled default scene is valid")
    }
}

/// Time-domain samples, channel-major (`samples[channel][time]`).
#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelRecording {
    pub samples: Vec<Vec<f64>>,
    pub sample_rate: f64,
}

impl MultichannelRecording {
    pub fn num_channels(&self) -> usize {
        self.samples.len()
    }

    pub fn len(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The two channels of node `m`.
    pub fn node(&self, m: usize) -> [&[f64]; 2] {
        [&self.samples[2 * m], &self.samples[2 * m + 1]]
    }

    pub fn write_wav(&self, path: impl AsRef<std::path::Path>, float32: bool) -> Result<()> {
        crate::wav::write(path.as_ref(), self, float32)
    }

    pub fn read_wav(path: impl AsRef<std::path::Path>) -> Result<Self> {
        crate::wav::read(path.as_ref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_scene_is_valid() {
        let scene = Scene::default();
        assert_eq!(scene.array.num_nodes(), 5);
        assert_eq!(scene.room.dimensions, [5.2, 6.2, 3.5]);
        assert!((scene.roi.width() - 2.0).abs() < 1e-12);
        assert!((scene.roi.height() - 2.0).abs() < 1e-12);
        // the sweep lines at 3.0 m cross the ROI on both axes
        assert!(scene.roi.contains([3.0, 3.0]));
    }

    #[test]
    fn rejects_mic_outside_room() {
        let mut scene = Scene::default();
        scene.array.nodes[0].mic1_pos = [-0.1, 1.0, 1.5];
        assert!(matches!(scene.validate(), Err(Error::Geometry(_))));
    }

    #[test]
    fn rejects_coincident_mics() {
        let mut scene = Scene::default();
        scene.array.nodes[1].mic2_pos = scene.array.nodes[1].mic1_pos;
        assert!(matches!(scene.validate(), Err(Error::Geometry(_))));
    }

    #[test]
    fn rejects_source_outside_roi() {
        let mut scene = Scene::default();
        scene.source_pos = [0.5, 0.5];
        assert!(matches!(scene.validate(), Err(Error::Geometry(_))));
    }

    #[test]
    fn toml_round_trip() {
        let scene = Scene::default();
        let back = Scene::from_toml_str(&scene.to_toml_string()).unwrap();
        assert_eq!(scene, back);
    }
}
