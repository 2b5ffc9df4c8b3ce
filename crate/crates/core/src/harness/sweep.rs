//! Interval width along a line through the ROI, one coordinate held fixed.

use serde::{Deserialize, Serialize};

use super::{mix_seed, reported_width, simulate_split, ExperimentConfig, Method, Pipeline, PredictOptions, Predictor};
use crate::error::{Error, Result};
use crate::gpr::{fit, Axis, MmgpModel};
use crate::sim::dataset::{DatasetPlan, Role};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    /// Coordinate that varies.
    pub axis: Axis,
    /// Value of the other coordinate.
    pub fixed_other: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: Axis,
    pub position: f64,
    pub fixed_other: f64,
    /// Estimate of the swept coordinate.
    pub estimate: f64,
    pub method: Method,
    pub delta: f64,
    pub width: f64,
    pub clipped: bool,
    pub covered: bool,
}

impl SweepSpec {
    /// Positions from the low ROI edge to the high edge (inclusive when the step lands on it).
    pub fn positions(&self, extent: [f64; 2]) -> Result<Vec<f64>> {
        if !(self.step > 0.0) {
            return Err(Error::Config(format!("sweep step must be positive, got {}", self.step)));
        }
        let n = ((extent[1] - extent[0]) / self.step + 1e-9).floor() as usize;
        Ok((0..=n).map(|k| extent[0] + k as f64 * self.step).collect())
    }
}

/// Simulates a test measurement at each sweep position and scores it with `predictor`.
pub fn sweep_positions(pipeline: &Pipeline, predictor: &Predictor, spec: &SweepSpec, seed: u64) -> Result<Vec<SweepRow>> {
    let roi = &pipeline.scene().roi;
    let a = spec.axis.index();
    let other = 1 - a;
    let other_extent = roi.extent(other);
    if !(spec.fixed_other >= other_extent[0] && spec.fixed_other <= other_extent[1]) {
        return Err(Error::Geometry(format!(
            "fixed coordinate {} is outside the ROI range {:?}",
            spec.fixed_other, other_extent
        )));
    }
    let extent = roi.extent(a);
    let mut rows = Vec::new();
    for (k, position) in spec.positions(extent)?.into_iter().enumerate() {
        let mut pos = [0.0; 2];
        pos[a] = position;
        pos[other] = spec.fixed_other;
        let h = pipeline.measure(pos, seed, Role::Test, k)?;
        let pred = predictor.predict(&h)?;
        for mi in &pred.intervals {
            let pi = &mi.intervals[a];
            let (width, clipped) = reported_width(pi, extent);
            rows.push(SweepRow {
                axis: spec.axis,
                position,
                fixed_other: spec.fixed_other,
                estimate: pred.estimate[a],
                method: mi.method,
                delta: mi.delta,
                width,
                clipped,
                covered: pi.contains(position),
            });
        }
    }
    Ok(rows)
}

/// Fits on repeat `repeat` of the experiment at (t60, snr_db) and sweeps.
///
/// Returns the fitted model with the rows so callers can reuse it.
pub fn run_sweep(
    cfg: &ExperimentConfig,
    t60: f64,
    snr_db: f64,
    repeat: usize,
    spec: &SweepSpec,
) -> Result<(MmgpModel, Vec<SweepRow>)> {
    cfg.validate()?;
    let pipeline = Pipeline::new(&cfg.scene_for(t60, snr_db), &cfg.signal, &cfg.stft, cfg.band_hz)?;
    let seed = cfg.repeat_seed(repeat);
    let plan = DatasetPlan::new(&cfg.scene.roi, &cfg.grid, cfg.n_unlabeled, 0, seed)?;
    let split = simulate_split(&pipeline, &plan, seed, &[snr_db])?
        .pop()
        .expect("one SNR level");
    let model = fit(split.labeled, &plan.labeled, split.unlabeled, &cfg.scale_rule, cfg.sigma_p2)?;
    let rows = {
        let predictor = Predictor::new(&model, PredictOptions::from_config(cfg))?;
        sweep_positions(&pipeline, &predictor, spec, mix_seed(seed, 0x5_7EE9))?
    };
    Ok((model, rows))
}
