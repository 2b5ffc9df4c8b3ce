//! Browser demo: room impulse responses and conformal intervals on a toy
//! one-dimensional localization problem.
//!
//! The toy problem places a source at `p` in `[0, 2]` m and observes a single
//! node whose RTF is `exp(i k p)` for a few bins, plus complex noise. Every
//! exported function returns a JSON string.

use mmgp_cp::conformal::{build_profile, p_value, predict_interval, DEFAULT_GAMMA};
use mmgp_cp::features::AggregatedRtf;
use mmgp_cp::gpr::{fit, Axis, MmgpModel};
use mmgp_cp::harness::{reported_width, Method, PredictOptions, Predictor};
use mmgp_cp::kernel::ScaleRule;
use mmgp_cp::sim::rir::{default_max_order, reflection_coefficient};
use mmgp_cp::sim::{generate_rir, RoomSpec};
use mmgp_cp::PredictionInterval;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Toy source range, meters.
pub const TOY_RANGE: [f64; 2] = [0.0, 2.0];
const TOY_BINS: usize = 3;
const TOY_SIGMA_P2: f64 = 1e-2;

fn js_err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn to_json(v: &impl Serialize) -> String {
    serde_json::to_string(v).expect("demo output is serializable")
}

#[derive(Debug, Serialize)]
pub struct RirOutput {
    pub sample_rate: f64,
    pub beta: f64,
    pub max_order: usize,
    pub samples: Vec<f64>,
}

/// Impulse response in a `lx x ly x lz` room, source and mic at 1.5 m height.
pub fn rir(dims: [f64; 3], t60: f64, src: [f64; 2], mic: [f64; 2]) -> mmgp_cp::Result<RirOutput> {
    let room = RoomSpec::new(dims, t60)?;
    let order = default_max_order(&room);
    let samples = generate_rir(&room, &[src[0], src[1], 1.5], &[mic[0], mic[1], 1.5], order)?;
    Ok(RirOutput {
        sample_rate: room.sample_rate,
        beta: if t60 > 0.0 { reflection_coefficient(&room)? } else { 0.0 },
        max_order: order,
        samples,
    })
}

fn toy_feature(p: f64, noise: f64, rng: &mut ChaCha8Rng) -> AggregatedRtf {
    let n = Normal::new(0.0, noise.max(0.0) / std::f64::consts::SQRT_2).expect("finite std");
    let flat = (1..=TOY_BINS)
        .map(|k| {
            let clean = Complex64::from_polar(1.0, k as f64 * p);
            if noise > 0.0 {
                clean + Complex64::new(n.sample(rng), n.sample(rng))
            } else {
                clean
            }
        })
        .collect();
    AggregatedRtf::from_flat(1, TOY_BINS, flat).expect("toy feature shape")
}

/// Toy model: `n_labeled` evenly spaced labeled sources and as many random unlabeled ones.
pub struct ToyProblem {
    model: MmgpModel,
    noise: f64,
    rng: ChaCha8Rng,
}

impl ToyProblem {
    pub fn new(n_labeled: usize, noise: f64, seed: u64) -> mmgp_cp::Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [lo, hi] = TOY_RANGE;
        let step = (hi - lo) / n_labeled.max(1) as f64;
        let positions: Vec<f64> = (0..n_labeled).map(|i| lo + (i as f64 + 0.5) * step).collect();
        let labeled = positions.iter().map(|&p| toy_feature(p, noise, &mut rng)).collect();
        let unlabeled = (0..n_labeled)
            .map(|_| {
                let p = lo + (hi - lo) * rand::Rng::gen::<f64>(&mut rng);
                toy_feature(p, noise, &mut rng)
            })
            .collect();
        let labels: Vec<[f64; 2]> = positions.iter().map(|&p| [p, p]).collect();
        let model = fit(labeled, &labels, unlabeled, &ScaleRule::MedianHeuristic, TOY_SIGMA_P2)?;
        Ok(ToyProblem { model, noise, rng })
    }

    pub fn model(&self) -> &MmgpModel {
        &self.model
    }

    /// Fresh noisy observation of a source at `p`.
    pub fn observe(&mut self, p: f64) -> AggregatedRtf {
        toy_feature(p, self.noise, &mut self.rng)
    }
}

#[derive(Debug, Serialize)]
pub struct PValueCurve {
    pub estimate: f64,
    pub candidates: Vec<f64>,
    pub p_values: Vec<f64>,
    /// `[lo, hi]` pieces of the exact set `{p : p-value > delta}`.
    pub pieces: Vec<[f64; 2]>,
    pub unbounded: bool,
}

fn pieces(pi: &PredictionInterval) -> Vec<[f64; 2]> {
    pi.pieces().iter().map(|p| [p.lo, p.hi]).collect()
}

/// Conformal p-value of each candidate label for one toy observation at `truth`.
pub fn p_value_curve(
    toy: &mut ToyProblem,
    truth: f64,
    delta: f64,
    gamma: f64,
    steps: usize,
) -> mmgp_cp::Result<PValueCurve> {
    let h = toy.observe(truth);
    let table = toy.model.loo_table(&h)?;
    let profile = build_profile(&table, Axis::X, gamma)?;
    let [lo, hi] = TOY_RANGE;
    let (lo, hi) = (lo - 0.5, hi + 0.5);
    let steps = steps.max(2);
    let candidates: Vec<f64> = (0..steps)
        .map(|k| lo + (hi - lo) * k as f64 / (steps - 1) as f64)
        .collect();
    let p_values = candidates.iter().map(|&c| p_value(&profile, c).value()).collect();
    let pi = predict_interval(&profile, delta)?;
    Ok(PValueCurve {
        estimate: table.posterior_mean(Axis::X),
        candidates,
        p_values,
        pieces: pieces(&pi),
        unbounded: pi.is_unbounded(),
    })
}

#[derive(Debug, Serialize)]
pub struct SweepPoint {
    pub position: f64,
    pub estimate: f64,
    /// Widths in `Method::ALL` order; unbounded sets clipped to the toy range.
    pub widths: [f64; 3],
    pub covered: [bool; 3],
}

/// Interval width of every method along the toy range.
pub fn width_sweep(toy: &mut ToyProblem, delta: f64, gamma: f64, steps: usize) -> mmgp_cp::Result<Vec<SweepPoint>> {
    let opts = PredictOptions {
        methods: Method::ALL.to_vec(),
        deltas: vec![delta],
        gamma,
        baseline_noise: true,
    };
    let [lo, hi] = TOY_RANGE;
    let steps = steps.max(2);
    let positions: Vec<f64> = (0..steps)
        .map(|k| lo + (hi - lo) * k as f64 / (steps - 1) as f64)
        .collect();
    let observations: Vec<AggregatedRtf> = positions.iter().map(|&p| toy.observe(p)).collect();
    let predictor = Predictor::new(&toy.model, opts)?;
    positions
        .iter()
        .zip(&observations)
        .map(|(&p, h)| {
            let pred = predictor.predict(h)?;
            let mut widths = [0.0; 3];
            let mut covered = [false; 3];
            for (k, mi) in pred.intervals.iter().enumerate() {
                widths[k] = reported_width(&mi.intervals[0], TOY_RANGE).0;
                covered[k] = mi.intervals[0].contains(p);
            }
            Ok(SweepPoint {
                position: p,
                estimate: pred.estimate[0],
                widths,
                covered,
            })
        })
        .collect()
}

fn parse_gamma(gamma: f64) -> f64 {
    if gamma > 0.0 {
        gamma
    } else {
        DEFAULT_GAMMA
    }
}

/// RIR as JSON `{sample_rate, beta, max_order, samples}`.
#[wasm_bindgen]
pub fn simulate_rir(lx: f64, ly: f64, lz: f64, t60: f64, sx: f64, sy: f64, mx: f64, my: f64) -> Result<String, JsValue> {
    rir([lx, ly, lz], t60, [sx, sy], [mx, my]).map(|r| to_json(&r)).map_err(js_err)
}

/// P-value curve as JSON. `gamma <= 0` selects the default; `Infinity` disables normalization.
#[wasm_bindgen]
pub fn toy_p_value_curve(
    n_labeled: usize,
    noise: f64,
    seed: u32,
    truth: f64,
    delta: f64,
    gamma: f64,
    steps: usize,
) -> Result<String, JsValue> {
    let mut toy = ToyProblem::new(n_labeled, noise, seed as u64).map_err(js_err)?;
    p_value_curve(&mut toy, truth, delta, parse_gamma(gamma), steps)
        .map(|c| to_json(&c))
        .map_err(js_err)
}

/// Width sweep as a JSON array; method names in `methods`.
#[wasm_bindgen]
pub fn toy_width_sweep(n_labeled: usize, noise: f64, seed: u32, delta: f64, gamma: f64, steps: usize) -> Result<String, JsValue> {
    #[derive(Serialize)]
    struct Out {
        methods: Vec<&'static str>,
        points: Vec<SweepPoint>,
    }
    let mut toy = ToyProblem::new(n_labeled, noise, seed as u64).map_err(js_err)?;
    let points = width_sweep(&mut toy, delta, parse_gamma(gamma), steps).map_err(js_err)?;
    Ok(to_json(&Out {
        methods: Method::ALL.iter().map(|m| m.as_str()).collect(),
        points,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rir_has_direct_path() {
        let r = rir([5.2, 6.2, 3.5], 0.3, [2.6, 3.1], [2.6, 1.1]).unwrap();
        let peak = r
            .samples
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .unwrap()
            .0;
        let expected = 2.0 / 343.0 * r.sample_rate;
        assert!((peak as f64 - expected).abs() <= 1.0, "{peak} vs {expected}");
        assert!(r.beta > 0.0 && r.beta < 1.0);
    }

    #[test]
    fn curve_peaks_inside_interval() {
        let mut toy = ToyProblem::new(30, 0.05, 1).unwrap();
        let c = p_value_curve(&mut toy, 1.0, 0.1, 32.0, 301).unwrap();
        assert!(!c.pieces.is_empty());
        assert!(c.pieces.iter().any(|p| p[0] <= c.estimate && c.estimate <= p[1]));
        for (x, pv) in c.candidates.iter().zip(&c.p_values) {
            let inside = c.pieces.iter().any(|p| p[0] <= *x && *x <= p[1]);
            assert_eq!(inside, *pv > 0.1, "candidate {x}");
        }
    }

    #[test]
    fn sweep_and_json() {
        let mut toy = ToyProblem::new(20, 0.05, 2).unwrap();
        let pts = width_sweep(&mut toy, 0.1, 32.0, 11).unwrap();
        assert_eq!(pts.len(), 11);
        assert!(pts.iter().all(|p| p.widths.iter().all(|w| w.is_finite() && *w >= 0.0)));
        let json = toy_width_sweep(20, 0.05, 2, 0.1, 0.0, 5).unwrap();
        assert!(json.contains("gpr_cp"));
        let json = simulate_rir(5.2, 6.2, 3.5, 0.0, 2.6, 3.1, 2.6, 1.1).unwrap();
        assert!(json.starts_with('{'));
    }
}
