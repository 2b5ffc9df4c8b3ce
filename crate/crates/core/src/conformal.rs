//! Exact transductive conformal intervals for the manifold GP, and the
//! Jackknife+ baseline.
//!
//! With the joint system `B = (K* + sigma_p^2 I)^{-1}` over the labeled samples
//! plus the test point, the leave-one-out residual vector for a candidate test
//! label `p` is `B p* ./ diag(B)`, where `p* = p_a + p e_last`. Normalizing by
//! the leave-one-out variance to the power `1/gamma` gives scores
//! `|a_i + p b_i|` that are affine in `p` inside the absolute value:
//!
//! ```text
//! a = B p_a    ./ diag(B)^(1 - 1/gamma)
//! b = B e_last ./ diag(B)^(1 - 1/gamma)
//! ```
//!
//! The p-value of `p` counts the labeled scores at least as large as the test
//! score. It only changes where `|a_i + p b_i| = |a_t + p b_t|`, so the
//! prediction set is assembled exactly from those (at most 2 n_L) breakpoints.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::AggregatedRtf;
use crate::gpr::{factorize_spd, Axis, LooTable, MmgpModel, TestKernel};
use crate::interval::{Piece, PredictionInterval};

/// Score normalization exponent used by default.
pub const DEFAULT_GAMMA: f64 = 32.0;

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Config(format!("delta must be in (0, 1), got {delta}")));
    }
    Ok(())
}

/// Affine score coefficients for one test point and coordinate; the last entry is the test point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonconformityProfile {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// `f64::INFINITY` means unnormalized scores.
    #[serde(with = "crate::serde_float")]
    pub gamma: f64,
}

impl NonconformityProfile {
    pub fn new(a: Vec<f64>, b: Vec<f64>, gamma: f64) -> Result<Self> {
        if a.len() != b.len() || a.len() < 2 {
            return Err(Error::Input(format!(
                "profile vectors must have equal length >= 2, got {} and {}",
                a.len(),
                b.len()
            )));
        }
        Ok(NonconformityProfile { a, b, gamma })
    }

    pub fn n_labeled(&self) -> usize {
        self.a.len() - 1
    }

    /// Scores `|a_i + p b_i|` for every entry, test last.
    pub fn scores(&self, candidate: f64) -> Vec<f64> {
        self.a
            .iter()
            .zip(&self.b)
            .map(|(a, b)| (a + candidate * b).abs())
            .collect()
    }

    /// Labeled indices whose score ties or exceeds the test score at `candidate`.
    fn count_at(&self, candidate: f64, ties: &[usize]) -> usize {
        let n = self.n_labeled();
        let test = (self.a[n] + candidate * self.b[n]).abs();
        (0..n)
            .filter(|&i| ties.contains(&i) || (self.a[i] + candidate * self.b[i]).abs() >= test)
            .count()
    }

    /// Candidates where some labeled score crosses the test score, sorted, with their owners.
    fn breakpoints(&self) -> Vec<(f64, usize)> {
        let n = self.n_labeled();
        let (at, bt) = (self.a[n], self.b[n]);
        let mut out = Vec::with_capacity(2 * n);
        for i in 0..n {
            let (ai, bi) = (self.a[i], self.b[i]);
            if bi != bt {
                out.push(((at - ai) / (bi - bt), i));
            }
            if bi != -bt {
                out.push((-(at + ai) / (bi + bt), i));
            }
        }
        out.retain(|(x, _)| x.is_finite());
        out.sort_by(|p, q| p.0.total_cmp(&q.0));
        out
    }
}

/// Conformal p-value stored as `count / (n_L + 1)`, count including the test point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PValue {
    pub count: usize,
    pub denom: usize,
}

impl PValue {
    pub fn value(&self) -> f64 {
        self.count as f64 / self.denom as f64
    }

    /// `value > delta`.
    pub fn exceeds(&self, delta: f64) -> bool {
        self.count as f64 > delta * self.denom as f64
    }
}

/// Score coefficients from a leave-one-out table.
pub fn build_profile(loo: &LooTable, axis: Axis, gamma: f64) -> Result<NonconformityProfile> {
    if !(gamma > 0.0) {
        return Err(Error::Config(format!("gamma must be positive, got {gamma}")));
    }
    let exponent = if gamma.is_infinite() { 1.0 } else { 1.0 - 1.0 / gamma };
    if let Some(d) = loo.diag.iter().find(|&&d| !(d > 0.0)) {
        return Err(Error::Numerical(format!(
            "inverse diagonal entry {d:.3e} is not positive"
        )));
    }
    let inv_labels = &loo.inv_labels[axis.index()];
    let scale: Vec<f64> = loo.diag.iter().map(|d| d.powf(exponent)).collect();
    let a = inv_labels.iter().zip(&scale).map(|(v, s)| v / s).collect();
    let b = loo.inv_last.iter().zip(&scale).map(|(v, s)| v / s).collect();
    NonconformityProfile::new(a, b, gamma)
}

pub fn p_value(profile: &NonconformityProfile, candidate: f64) -> PValue {
    PValue {
        count: profile.count_at(candidate, &[]) + 1,
        denom: profile.n_labeled() + 1,
    }
}

/// Exact set `{p : p_value(p) > delta}` as a union of closed pieces.
///
/// Unbounded ends are returned as infinite endpoints; callers clip as needed.
pub fn predict_interval(profile: &NonconformityProfile, delta: f64) -> Result<PredictionInterval> {
    check_delta(delta)?;
    let denom = profile.n_labeled() + 1;
    let keep = |count: usize| PValue { count: count + 1, denom }.exceeds(delta);

    let bps = profile.breakpoints();
    if bps.is_empty() {
        return Ok(if keep(profile.count_at(0.0, &[])) {
            PredictionInterval::single(f64::NEG_INFINITY, f64::INFINITY, delta)
        } else {
            PredictionInterval::empty(delta)
        });
    }

    // distinct breakpoint values with the indices that tie there
    let mut points: Vec<(f64, Vec<usize>)> = Vec::new();
    for (x, i) in bps {
        match points.last_mut() {
            Some((last, owners)) if *last == x => owners.push(i),
            _ => points.push((x, vec![i])),
        }
    }

    let mut pieces = Vec::new();
    let mut open_lo: Option<f64> = None;
    let first = points[0].0;
    if keep(profile.count_at(first - (1.0 + first.abs()), &[])) {
        open_lo = Some(f64::NEG_INFINITY);
    }
    for (k, (x, owners)) in points.iter().enumerate() {
        let at_point = keep(profile.count_at(*x, owners));
        let right = match points.get(k + 1) {
            Some((next, _)) => 0.5 * (x + next),
            None => x + (1.0 + x.abs()),
        };
        let after = keep(profile.count_at(right, &[]));
        match (open_lo, at_point || after) {
            // the set is closed: an included neighbourhood includes its endpoint
            (Some(lo), true) if after => open_lo = Some(lo),
            (Some(lo), _) => {
                pieces.push(Piece { lo, hi: *x });
                open_lo = None;
                if after {
                    open_lo = Some(*x);
                }
            }
            (None, true) => {
                if after {
                    open_lo = Some(*x);
                } else {
                    pieces.push(Piece { lo: *x, hi: *x });
                }
            }
            (None, false) => {}
        }
    }
    if let Some(lo) = open_lo {
        pieces.push(Piece {
            lo,
            hi: f64::INFINITY,
        });
    }
    Ok(PredictionInterval::new(pieces, delta))
}

/// Point estimate and conformal interval per coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Localization {
    pub point: [f64; 2],
    pub intervals: [PredictionInterval; 2],
}

/// Conformal intervals for one test point at several miscoverage levels.
pub fn conformal_intervals(
    model: &MmgpModel,
    tk: &TestKernel,
    deltas: &[f64],
    gamma: f64,
) -> Result<([f64; 2], Vec<[PredictionInterval; 2]>)> {
    let table = model.loo_table_from(tk)?;
    let profiles = [build_profile(&table, Axis::X, gamma)?, build_profile(&table, Axis::Y, gamma)?];
    let point = [table.posterior_mean(Axis::X), table.posterior_mean(Axis::Y)];
    let intervals = deltas
        .iter()
        .map(|&d| Ok([predict_interval(&profiles[0], d)?, predict_interval(&profiles[1], d)?]))
        .collect::<Result<Vec<_>>>()?;
    Ok((point, intervals))
}

/// Posterior-mean position and GPR-CP intervals at `h_t`.
pub fn localize_with_pi(model: &MmgpModel, h_t: &AggregatedRtf, delta: f64, gamma: f64) -> Result<Localization> {
    check_delta(delta)?;
    let tk = model.test_kernel(h_t)?;
    let (point, mut intervals) = conformal_intervals(model, &tk, &[delta], gamma)?;
    Ok(Localization {
        point,
        intervals: intervals.pop().expect("one delta requested"),
    })
}

fn order_statistic(values: &mut [f64], k: usize) -> f64 {
    let (_, v, _) = values.select_nth_unstable_by(k - 1, f64::total_cmp);
    *v
}

/// Ranks used by Jackknife+: `floor(delta (n+1))` and `ceil((1-delta)(n+1))`, both 1-based.
pub fn jackknife_ranks(n: usize, delta: f64) -> Result<(usize, usize)> {
    check_delta(delta)?;
    let m = (n + 1) as f64;
    let lo = (delta * m + 1e-9).floor() as usize;
    let hi = ((1.0 - delta) * m - 1e-9).ceil() as usize;
    if lo < 1 || hi > n {
        return Err(Error::Config(format!(
            "Jackknife+ with {n} samples cannot reach delta = {delta}; need at least {} samples",
            (1.0 / delta).ceil() as usize - 1
        )));
    }
    Ok((lo, hi))
}

/// Jackknife+ interval from leave-one-out predictions at the test point and LOO residuals.
pub fn jackknife_plus_from(predictions: &[f64], residuals: &[f64], delta: f64) -> Result<PredictionInterval> {
    if predictions.len() != residuals.len() {
        return Err(Error::Input(format!(
            "{} predictions vs {} residuals",
            predictions.len(),
            residuals.len()
        )));
    }
    let (lo_k, hi_k) = jackknife_ranks(predictions.len(), delta)?;
    let mut lower: Vec<f64> = predictions.iter().zip(residuals).map(|(p, r)| p - r).collect();
    let mut upper: Vec<f64> = predictions.iter().zip(residuals).map(|(p, r)| p + r).collect();
    Ok(PredictionInterval::single(
        order_statistic(&mut lower, lo_k),
        order_statistic(&mut upper, hi_k),
        delta,
    ))
}

/// Leave-one-out refits of the labeled GP (shared kernel), one per labeled sample.
#[derive(Debug, Clone)]
pub struct JackknifePlus {
    /// Column i holds the weights of the fit without sample i (zero at i), per axis.
    weights: [DMatrix<f64>; 2],
    residuals: [Vec<f64>; 2],
}

impl JackknifePlus {
    /// Refits the model n_L times, each time without one labeled sample.
    pub fn fit(model: &MmgpModel) -> Result<Self> {
        let n = model.n_labeled();
        if n < 2 {
            return Err(Error::Input("Jackknife+ needs at least two labeled samples".into()));
        }
        let k = model.labeled_kernel();
        let noise = model.noise();
        let mut weights = [DMatrix::zeros(n, n), DMatrix::zeros(n, n)];
        let mut residuals = [vec![0.0; n], vec![0.0; n]];
        let keep_idx: Vec<usize> = (0..n).collect();
        for i in 0..n {
            let idx: Vec<usize> = keep_idx.iter().copied().filter(|&j| j != i).collect();
            let mut a = k.select_rows(&idx).select_columns(&idx);
            for d in 0..n - 1 {
                a[(d, d)] += noise;
            }
            let (chol, _) = factorize_spd(&a)?;
            for ax in Axis::BOTH {
                let labels = model.labels(ax);
                let rhs = DVector::from_iterator(n - 1, idx.iter().map(|&j| labels[j]));
                let w = chol.solve(&rhs);
                let mut pred_i = 0.0;
                for (slot, &j) in idx.iter().enumerate() {
                    weights[ax.index()][(j, i)] = w[slot];
                    pred_i += k[(i, j)] * w[slot];
                }
                residuals[ax.index()][i] = (labels[i] - pred_i).abs();
            }
        }
        Ok(JackknifePlus { weights, residuals })
    }

    pub fn residuals(&self, axis: Axis) -> &[f64] {
        &self.residuals[axis.index()]
    }

    /// Leave-one-out predictions at the test point, one per removed sample.
    pub fn predictions(&self, tk: &TestKernel, axis: Axis) -> Vec<f64> {
        (self.weights[axis.index()].transpose() * &tk.k).iter().copied().collect()
    }

    pub fn interval(&self, tk: &TestKernel, axis: Axis, delta: f64) -> Result<PredictionInterval> {
        jackknife_plus_from(&self.predictions(tk, axis), self.residuals(axis), delta)
    }
}

/// Jackknife+ intervals per coordinate for `h_t` under `model`'s kernel.
pub fn jackknife_plus_interval(model: &MmgpModel, h_t: &AggregatedRtf, delta: f64) -> Result<[PredictionInterval; 2]> {
    let jk = JackknifePlus::fit(model)?;
    let tk = model.test_kernel(h_t)?;
    Ok([jk.interval(&tk, Axis::X, delta)?, jk.interval(&tk, Axis::Y, delta)?])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> NonconformityProfile {
        NonconformityProfile::new(vec![0.5, -0.2, 0.0], vec![0.0, 0.0, 1.0], f64::INFINITY).unwrap()
    }

    #[test]
    fn hand_p_value() {
        let p = p_value(&toy(), 0.3);
        assert_eq!((p.count, p.denom), (2, 3));
        assert!((p.value() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn all_ties_give_one() {
        let prof = NonconformityProfile::new(vec![1.0; 4], vec![0.0; 4], f64::INFINITY).unwrap();
        assert_eq!(p_value(&prof, 12.0).value(), 1.0);
    }

    #[test]
    fn largest_test_score_gives_minimum() {
        let prof = NonconformityProfile::new(vec![0.1, 0.2, 0.3, 5.0], vec![0.0; 4], f64::INFINITY).unwrap();
        assert_eq!(p_value(&prof, 0.0).value(), 0.25);
    }

    #[test]
    fn toy_intervals() {
        let pi = predict_interval(&toy(), 0.4).unwrap();
        assert_eq!(pi.pieces(), &[Piece { lo: -0.5, hi: 0.5 }]);
        assert!((pi.total_width() - 1.0).abs() < 1e-15);
        for delta in [2.0 / 3.0, 0.8] {
            let pi = predict_interval(&toy(), delta).unwrap();
            assert_eq!(pi.pieces(), &[Piece { lo: -0.2, hi: 0.2 }]);
        }
        let whole = predict_interval(&toy(), 0.3).unwrap();
        assert!(whole.is_unbounded());
        assert_eq!(whole.pieces(), &[Piece { lo: f64::NEG_INFINITY, hi: f64::INFINITY }]);
    }

    #[test]
    fn half_line() {
        let prof = NonconformityProfile::new(vec![-1.0, 0.0], vec![1.0, 1.0], f64::INFINITY).unwrap();
        let pi = predict_interval(&prof, 0.6).unwrap();
        // |p - 1| >= |p|  <=>  p <= 0.5
        assert_eq!(pi.pieces(), &[Piece { lo: f64::NEG_INFINITY, hi: 0.5 }]);
    }

    #[test]
    fn gamma_validation() {
        let table = LooTable {
            diag: vec![1.0, 2.0],
            inv_labels: [vec![0.1, 0.2], vec![0.0, 0.0]],
            inv_last: vec![0.3, 0.4],
            labels: [vec![1.0], vec![0.0]],
        };
        assert!(build_profile(&table, Axis::X, 0.0).is_err());
        let bad = LooTable {
            diag: vec![0.0, 2.0],
            ..table.clone()
        };
        assert!(matches!(build_profile(&bad, Axis::X, 32.0), Err(Error::Numerical(_))));
        let p = build_profile(&table, Axis::X, f64::INFINITY).unwrap();
        assert_eq!(p.a, vec![0.1, 0.1]);
        assert_eq!(p.b, vec![0.3, 0.2]);
    }

    #[test]
    fn zero_labels_give_pure_slope() {
        let table = LooTable {
            diag: vec![1.5, 2.0, 3.0],
            inv_labels: [vec![0.0; 3], vec![0.0; 3]],
            inv_last: vec![0.3, -0.4, 0.5],
            labels: [vec![0.0; 2], vec![0.0; 2]],
        };
        let p = build_profile(&table, Axis::X, 32.0).unwrap();
        assert!(p.a.iter().all(|&v| v == 0.0));
        let s = p.scores(2.0);
        for (si, bi) in s.iter().zip(&p.b) {
            assert!((si - 2.0 * bi.abs()).abs() < 1e-15);
        }
    }

    #[test]
    fn jackknife_hand_example() {
        let preds = [1.0, 1.2, 0.9, 1.1];
        let res = [0.1, 0.3, 0.2, 0.1];
        let pi = jackknife_plus_from(&preds, &res, 0.2).unwrap();
        let h = pi.hull().unwrap();
        assert!((h.lo - 0.7).abs() < 1e-12 && (h.hi - 1.5).abs() < 1e-12);
    }

    #[test]
    fn jackknife_constant_case() {
        let pi = jackknife_plus_from(&[2.0; 30], &[0.5; 30], 0.1).unwrap();
        assert_eq!(pi.pieces(), &[Piece { lo: 1.5, hi: 2.5 }]);
    }

    #[test]
    fn jackknife_needs_enough_samples() {
        assert!(matches!(jackknife_ranks(5, 0.1), Err(Error::Config(_))));
        assert_eq!(jackknife_ranks(9, 0.1).unwrap(), (1, 9));
        assert_eq!(jackknife_ranks(4, 0.2).unwrap(), (1, 4));
    }
}
