//! Gaussian-process regression with the fused manifold kernel.
//!
//! Each coordinate is an independent scalar regression sharing one kernel.
//! The labeled system `A = K_L + sigma_p^2 I` is factorized once; per test
//! point everything else (posterior, leave-one-out table) is obtained by
//! bordering `A` with the test row, which costs O(n_L^2).

use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::features::AggregatedRtf;
use crate::interval::PredictionInterval;
use crate::kernel::{select_scales, KernelConfig, ManifoldKernel, ReferenceSet, ScaleRule};

/// Default position-noise variance (about 0.22 m standard deviation), m^2.
pub const DEFAULT_SIGMA_P2: f64 = 0.05;

/// Coordinate index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub const BOTH: [Axis; 2] = [Axis::X, Axis::Y];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
        }
    }
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Cholesky factorization with one jitter retry (`1e-8 * trace / n`).
///
/// Returns the factor and the jitter that was added (zero if none).
pub fn factorize_spd(a: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if let Some(c) = Cholesky::new(a.clone()) {
        return Ok((c, 0.0));
    }
    let n = a.nrows().max(1) as f64;
    let jitter = 1e-8 * a.trace().abs().max(f64::MIN_POSITIVE) / n;
    let mut b = a.clone();
    for i in 0..b.nrows() {
        b[(i, i)] += jitter;
    }
    match Cholesky::new(b) {
        Some(c) => {
            log::warn!("kernel factorization needed jitter {jitter:.3e}");
            Ok((c, jitter))
        }
        None => Err(Error::IllConditioned(format!(
            "Cholesky failed even with jitter {jitter:.3e}; increase sigma_p2"
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub mean: f64,
    pub variance: f64,
}

/// Kernel quantities of one test feature against the labeled set.
#[derive(Debug, Clone)]
pub struct TestKernel {
    /// Cross covariance with each labeled sample.
    pub k: DVector<f64>,
    /// Prior variance of the test point.
    pub ktt: f64,
}

/// Leave-one-out quantities of the joint (labeled + test) system
/// `B = (K* + sigma_p^2 I)^{-1}`, for one test feature.
#[derive(Debug, Clone, PartialEq)]
pub struct LooTable {
    /// `diag(B)`, length n_L + 1.
    pub diag: Vec<f64>,
    /// `B p_a` per axis with `p_a = [p_1 .. p_nL, 0]`.
    pub inv_labels: [Vec<f64>; 2],
    /// `B e_{n_L+1}`, the last column of B.
    pub inv_last: Vec<f64>,
    /// Labels per axis, length n_L.
    pub labels: [Vec<f64>; 2],
}

impl LooTable {
    pub fn n_labeled(&self) -> usize {
        self.diag.len() - 1
    }

    /// Leave-one-out variances `1 / B_ii`.
    pub fn loo_var(&self) -> Vec<f64> {
        self.diag.iter().map(|d| 1.0 / d).collect()
    }

    /// `p*_i - [B p*]_i / B_ii` with the test label set to `candidate`;
    /// the last entry is the posterior mean at the test point.
    pub fn loo_mean(&self, axis: Axis, candidate: f64) -> Vec<f64> {
        let a = axis.index();
        let n = self.n_labeled();
        (0..=n)
            .map(|i| {
                let p = if i < n { self.labels[a][i] } else { candidate };
                p - (self.inv_labels[a][i] + candidate * self.inv_last[i]) / self.diag[i]
            })
            .collect()
    }

    pub fn posterior_mean(&self, axis: Axis) -> f64 {
        let n = self.n_labeled();
        -self.inv_labels[axis.index()][n] / self.diag[n]
    }
}

/// Fitted multiple-manifold GP. Immutable after construction.
#[derive(Debug, Clone)]
pub struct MmgpModel {
    kernel: ManifoldKernel,
    sigma_p2: f64,
    labels: [Vec<f64>; 2],
    jitter: f64,
    /// Factor rows of the labeled samples, n_L x n.
    c_labeled: DMatrix<f64>,
    /// `K_L` without noise.
    k_labeled: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    a_inv: DMatrix<f64>,
    alpha: [DVector<f64>; 2],
}

impl MmgpModel {
    /// Builds the model from a fixed kernel and one label pair per labeled reference sample.
    pub fn new(kernel: ManifoldKernel, labels: &[[f64; 2]], sigma_p2: f64) -> Result<Self> {
        if !(sigma_p2 > 0.0 && sigma_p2.is_finite()) {
            return Err(Error::Config(format!("sigma_p2 must be positive, got {sigma_p2}")));
        }
        let n_l = kernel.refs().n_labeled();
        if labels.len() != n_l {
            return Err(Error::Input(format!(
                "{} labels for {n_l} labeled samples",
                labels.len()
            )));
        }
        if labels.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Input("labels must be finite".into()));
        }
        let c_labeled = kernel.factor(kernel.refs().labeled())?.0;
        let k_labeled = &c_labeled * c_labeled.transpose();
        let mut a = k_labeled.clone();
        for i in 0..n_l {
            a[(i, i)] += sigma_p2;
        }
        let (chol, jitter) = factorize_spd(&a)?;
        let a_inv = chol.inverse();
        let labels = [
            labels.iter().map(|p| p[0]).collect::<Vec<_>>(),
            labels.iter().map(|p| p[1]).collect::<Vec<_>>(),
        ];
        let alpha = [
            chol.solve(&DVector::from_column_slice(&labels[0])),
            chol.solve(&DVector::from_column_slice(&labels[1])),
        ];
        Ok(MmgpModel {
            kernel,
            sigma_p2,
            labels,
            jitter,
            c_labeled,
            k_labeled,
            chol,
            a_inv,
            alpha,
        })
    }

    pub fn kernel(&self) -> &ManifoldKernel {
        &self.kernel
    }

    pub fn sigma_p2(&self) -> f64 {
        self.sigma_p2
    }

    /// Diagonal loading actually used: `sigma_p2` plus any jitter.
    pub fn noise(&self) -> f64 {
        self.sigma_p2 + self.jitter
    }

    pub fn n_labeled(&self) -> usize {
        self.labels[0].len()
    }

    pub fn labels(&self, axis: Axis) -> &[f64] {
        &self.labels[axis.index()]
    }

    pub fn label_pairs(&self) -> Vec<[f64; 2]> {
        self.labels[0]
            .iter()
            .zip(&self.labels[1])
            .map(|(&x, &y)| [x, y])
            .collect()
    }

    /// `K_L` (no noise).
    pub fn labeled_kernel(&self) -> &DMatrix<f64> {
        &self.k_labeled
    }

    /// `(K_L + sigma_p^2 I)^{-1}`.
    pub fn system_inverse(&self) -> &DMatrix<f64> {
        &self.a_inv
    }

    pub fn weights(&self, axis: Axis) -> &DVector<f64> {
        &self.alpha[axis.index()]
    }

    pub fn test_kernel(&self, h_t: &AggregatedRtf) -> Result<TestKernel> {
        let profile = DVector::from_vec(self.kernel.profile(h_t)?);
        Ok(TestKernel {
            k: &self.c_labeled * &profile,
            ktt: profile.dot(&profile),
        })
    }

    pub fn posterior_from(&self, tk: &TestKernel) -> [PosteriorSummary; 2] {
        let v = self.chol.solve(&tk.k);
        let raw = tk.ktt - tk.k.dot(&v);
        if raw < -1e-8 * tk.ktt.abs().max(1.0) {
            log::debug!("posterior variance {raw:.3e} clamped to zero");
        }
        let variance = raw.max(0.0);
        Axis::BOTH.map(|ax| PosteriorSummary {
            mean: tk.k.dot(&self.alpha[ax.index()]),
            variance,
        })
    }

    /// Posterior mean and variance per coordinate at `h_t`.
    pub fn posterior(&self, h_t: &AggregatedRtf) -> Result<[PosteriorSummary; 2]> {
        Ok(self.posterior_from(&self.test_kernel(h_t)?))
    }

    /// Leave-one-out table of the joint system, by bordering the cached labeled factorization.
    pub fn loo_table_from(&self, tk: &TestKernel) -> Result<LooTable> {
        let n = self.n_labeled();
        let v = self.chol.solve(&tk.k);
        let schur = tk.ktt + self.noise() - tk.k.dot(&v);
        if !(schur > 0.0) || !schur.is_finite() {
            return Err(Error::IllConditioned(format!(
                "joint system is not positive definite (Schur complement {schur:.3e})"
            )));
        }
        let inv_s = 1.0 / schur;
        let mut diag: Vec<f64> = (0..n).map(|i| self.a_inv[(i, i)] + v[i] * v[i] * inv_s).collect();
        diag.push(inv_s);
        let mut inv_last: Vec<f64> = v.iter().map(|vi| -vi * inv_s).collect();
        inv_last.push(inv_s);
        let inv_labels = Axis::BOTH.map(|ax| {
            let alpha = &self.alpha[ax.index()];
            let mean = tk.k.dot(alpha);
            let mut out: Vec<f64> = (0..n).map(|i| alpha[i] + v[i] * mean * inv_s).collect();
            out.push(-mean * inv_s);
            out
        });
        if let Some(d) = diag.iter().find(|&&d| !(d > 0.0)) {
            return Err(Error::IllConditioned(format!("non-positive inverse diagonal {d:.3e}")));
        }
        Ok(LooTable {
            diag,
            inv_labels,
            inv_last,
            labels: self.labels.clone(),
        })
    }

    pub fn loo_table(&self, h_t: &AggregatedRtf) -> Result<LooTable> {
        self.loo_table_from(&self.test_kernel(h_t)?)
    }

    /// Same table through an explicit (n_L+1)-dimensional factorization and inverse.
    pub fn loo_table_dense(&self, h_t: &AggregatedRtf) -> Result<LooTable> {
        let n = self.n_labeled();
        let tk = self.test_kernel(h_t)?;
        let mut m = DMatrix::zeros(n + 1, n + 1);
        m.view_mut((0, 0), (n, n)).copy_from(&self.k_labeled);
        for i in 0..n {
            m[(i, n)] = tk.k[i];
            m[(n, i)] = tk.k[i];
        }
        m[(n, n)] = tk.ktt;
        for i in 0..=n {
            m[(i, i)] += self.noise();
        }
        let chol = Cholesky::new(m)
            .ok_or_else(|| Error::IllConditioned("joint system is not positive definite".into()))?;
        let b = chol.inverse();
        let diag: Vec<f64> = (0..=n).map(|i| b[(i, i)]).collect();
        let inv_last: Vec<f64> = b.column(n).iter().copied().collect();
        let inv_labels = Axis::BOTH.map(|ax| {
            let mut pa = DVector::from_column_slice(&self.labels[ax.index()]);
            pa = pa.push(0.0);
            (&b * pa).iter().copied().collect()
        });
        Ok(LooTable {
            diag,
            inv_labels,
            inv_last,
            labels: self.labels.clone(),
        })
    }

    /// Classical leave-one-out over the labeled set alone: `p_i - alpha_i / [A^{-1}]_ii`.
    pub fn labeled_loo(&self, axis: Axis) -> Vec<f64> {
        let alpha = &self.alpha[axis.index()];
        let labels = &self.labels[axis.index()];
        (0..self.n_labeled())
            .map(|i| labels[i] - alpha[i] / self.a_inv[(i, i)])
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = ModelFile::from(self);
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(std::io::BufWriter::new(f), &file)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let file: ModelFile = serde_json::from_reader(std::io::BufReader::new(f))?;
        file.into_model()
    }
}

pub const MODEL_FORMAT: &str = "mmgp-model";

/// Self-describing on-disk model: kernel (references + scales), noise level and labels.
/// Cached factorizations are rebuilt on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub sigma_p2: f64,
    pub kernel: ManifoldKernel,
    pub labels_x: Vec<f64>,
    pub labels_y: Vec<f64>,
}

impl From<&MmgpModel> for ModelFile {
    fn from(m: &MmgpModel) -> Self {
        ModelFile {
            format: MODEL_FORMAT.into(),
            version: 1,
            sigma_p2: m.sigma_p2,
            kernel: m.kernel.clone(),
            labels_x: m.labels[0].clone(),
            labels_y: m.labels[1].clone(),
        }
    }
}

impl ModelFile {
    pub fn into_model(self) -> Result<MmgpModel> {
        if self.format != MODEL_FORMAT || self.version != 1 {
            return Err(Error::Format(format!(
                "unsupported model format {} v{}",
                self.format, self.version
            )));
        }
        if self.labels_x.len() != self.labels_y.len() {
            return Err(Error::Format("label vectors differ in length".into()));
        }
        let labels: Vec<[f64; 2]> = self
            .labels_x
            .iter()
            .zip(&self.labels_y)
            .map(|(&x, &y)| [x, y])
            .collect();
        let kernel = ManifoldKernel::new(self.kernel.refs().clone(), self.kernel.config().clone())?;
        MmgpModel::new(kernel, &labels, self.sigma_p2)
    }
}

/// Fits the model: scales from `scale_rule` over labeled + unlabeled features, then the GP.
pub fn fit(
    labeled: Vec<AggregatedRtf>,
    labels: &[[f64; 2]],
    unlabeled: Vec<AggregatedRtf>,
    scale_rule: &ScaleRule,
    sigma_p2: f64,
) -> Result<MmgpModel> {
    if labeled.len() < 2 {
        return Err(Error::Input(format!(
            "need at least two labeled samples, got {}",
            labeled.len()
        )));
    }
    let refs = ReferenceSet::new(labeled, unlabeled)?;
    let cfg: KernelConfig = select_scales(&refs, scale_rule)?;
    MmgpModel::new(ManifoldKernel::new(refs, cfg)?, labels, sigma_p2)
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").inverse_cdf(p)
}

/// Gaussian interval `mean +- z_{1-delta/2} * sqrt(var [+ sigma_p^2])`.
pub fn gpr_interval(post: &PosteriorSummary, sigma_p2: f64, delta: f64, include_noise: bool) -> Result<PredictionInterval> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Config(format!("delta must be in (0, 1), got {delta}")));
    }
    let var = post.variance + if include_noise { sigma_p2 } else { 0.0 };
    let half = normal_quantile(1.0 - delta / 2.0) * var.max(0.0).sqrt();
    Ok(PredictionInterval::single(post.mean - half, post.mean + half, delta))
}

/// Plain-GPR baseline interval per coordinate, including label noise in the predictive variance.
pub fn gpr_baseline_interval(model: &MmgpModel, h_t: &AggregatedRtf, delta: f64) -> Result<[PredictionInterval; 2]> {
    let post = model.posterior(h_t)?;
    Ok([
        gpr_interval(&post[0], model.sigma_p2(), delta, true)?,
        gpr_interval(&post[1], model.sigma_p2(), delta, true)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn feat(v: &[f64]) -> AggregatedRtf {
        AggregatedRtf::from_flat(1, v.len(), v.iter().map(|&x| Complex64::new(x, 0.0)).collect()).unwrap()
    }

    fn random_model(seed: u64, n_l: usize, n_u: usize, sigma_p2: f64) -> (MmgpModel, Vec<AggregatedRtf>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = |n: usize| -> Vec<AggregatedRtf> {
            (0..n)
                .map(|_| {
                    let flat = (0..6)
                        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                        .collect();
                    AggregatedRtf::from_flat(2, 3, flat).unwrap()
                })
                .collect()
        };
        let labeled = f(n_l);
        let unlabeled = f(n_u);
        let tests = f(4);
        let labels: Vec<[f64; 2]> = (0..n_l).map(|i| [i as f64 * 0.3 - 1.0, (i as f64).sin()]).collect();
        let model = fit(labeled, &labels, unlabeled, &ScaleRule::MedianHeuristic, sigma_p2).unwrap();
        (model, tests)
    }

    #[test]
    fn scalar_kernel_closed_form() {
        // infinite scales make every node kernel 1, so K = n everywhere
        let refs = ReferenceSet::new(vec![feat(&[0.0])], vec![feat(&[1.0]), feat(&[2.0])]).unwrap();
        let kernel = ManifoldKernel::new(refs, KernelConfig::fixed(vec![1e15]).unwrap()).unwrap();
        let s2 = 0.5;
        let model = MmgpModel::new(kernel, &[[2.0, -1.0]], s2).unwrap();
        let post = model.posterior(&feat(&[5.0])).unwrap();
        let c = 3.0;
        assert!((post[0].mean - c * 2.0 / (c + s2)).abs() < 1e-12);
        assert!((post[1].mean - c * -1.0 / (c + s2)).abs() < 1e-12);
        assert!((post[0].variance - (c - c * c / (c + s2))).abs() < 1e-12);
    }

    #[test]
    fn duplicate_features_average_labels() {
        let h = feat(&[0.3, -0.2]);
        let refs = ReferenceSet::new(vec![h.clone(), h.clone()], vec![feat(&[1.0, 1.0])]).unwrap();
        let kernel = ManifoldKernel::new(refs, KernelConfig::fixed(vec![1.0]).unwrap()).unwrap();
        for s2 in [1e-2, 1e-4, 1e-6] {
            let model = MmgpModel::new(kernel.clone(), &[[1.0, 0.0], [3.0, 2.0]], s2).unwrap();
            // 2x2 closed form: mean = 2k * (p1+p2)/2 / (2k + s2)
            let k = model.labeled_kernel()[(0, 0)];
            let post = model.posterior(&h).unwrap();
            assert!((post[0].mean - 2.0 * k * 2.0 / (2.0 * k + s2)).abs() < 1e-9);
            assert!((post[1].mean - 2.0 * k / (2.0 * k + s2)).abs() < 1e-9);
        }
    }

    #[test]
    fn interpolates_labels_as_noise_vanishes() {
        let (model, _) = random_model(1, 6, 4, 1e-10);
        let refs = model.kernel().refs().labeled().to_vec();
        for (i, h) in refs.iter().enumerate() {
            let post = model.posterior(h).unwrap();
            assert!((post[0].mean - model.labels(Axis::X)[i]).abs() < 1e-4);
        }
    }

    #[test]
    fn huge_noise_returns_prior_mean() {
        let (model, tests) = random_model(2, 6, 4, 1e6);
        for t in &tests {
            let post = model.posterior(t).unwrap();
            assert!(post[0].mean.abs() < 1e-3 && post[1].mean.abs() < 1e-3);
        }
    }

    #[test]
    fn posterior_matches_dense_solve() {
        let (model, tests) = random_model(3, 6, 3, 1e-2);
        let n = model.n_labeled();
        let mut a = model.labeled_kernel().clone();
        for i in 0..n {
            a[(i, i)] += model.sigma_p2();
        }
        let lu = a.clone().lu();
        for t in &tests {
            let tk = model.test_kernel(t).unwrap();
            let post = model.posterior(t).unwrap();
            let w = lu.solve(&DVector::from_column_slice(model.labels(Axis::X))).unwrap();
            assert!((post[0].mean - tk.k.dot(&w)).abs() < 1e-9);
            let v = lu.solve(&tk.k).unwrap();
            assert!((post[0].variance - (tk.ktt - tk.k.dot(&v)).max(0.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn bordered_and_dense_tables_agree() {
        let (model, tests) = random_model(4, 7, 5, 1e-2);
        for t in &tests {
            let a = model.loo_table(t).unwrap();
            let b = model.loo_table_dense(t).unwrap();
            for (x, y) in a.diag.iter().zip(&b.diag) {
                assert!((x - y).abs() < 1e-8 * y.abs().max(1.0));
            }
            for (x, y) in a.inv_last.iter().zip(&b.inv_last) {
                assert!((x - y).abs() < 1e-8 * y.abs().max(1.0));
            }
            for ax in 0..2 {
                for (x, y) in a.inv_labels[ax].iter().zip(&b.inv_labels[ax]) {
                    assert!((x - y).abs() < 1e-8 * y.abs().max(1.0));
                }
            }
            let post = model.posterior(t).unwrap();
            assert!((a.posterior_mean(Axis::X) - post[0].mean).abs() < 1e-9);
        }
    }

    #[test]
    fn diagonal_kernel_loo() {
        // far-apart features with a tiny scale: K* = I (each sample only sees itself)
        let feats: Vec<AggregatedRtf> = (0..4).map(|i| feat(&[10.0 * i as f64])).collect();
        let refs = ReferenceSet::from_parts(feats[..3].to_vec(), 3).unwrap();
        let kernel = ManifoldKernel::new(refs, KernelConfig::fixed(vec![1e-3]).unwrap()).unwrap();
        let s2 = 0.25;
        let model = MmgpModel::new(kernel, &[[1.0, 2.0], [-1.0, 0.5], [3.0, 3.0]], s2).unwrap();
        // test feature outside the references: K*_tt = 0, so c = 0 there
        let table = model.loo_table(&feats[3]).unwrap();
        let mean = table.loo_mean(Axis::X, 0.7);
        let var = table.loo_var();
        for i in 0..3 {
            assert!(mean[i].abs() < 1e-12);
            assert!((var[i] - (1.0 + s2)).abs() < 1e-12);
        }
    }

    #[test]
    fn baseline_half_width() {
        let post = PosteriorSummary { mean: 1.0, variance: 0.03 };
        let pi = gpr_interval(&post, 0.01, 0.05, true).unwrap();
        assert!((pi.total_width() / 2.0 - 1.959964 * 0.2).abs() < 1e-6);
        let zero = gpr_interval(&PosteriorSummary { mean: 2.0, variance: 0.0 }, 0.0, 0.1, true).unwrap();
        assert_eq!(zero.total_width(), 0.0);
        assert!(zero.contains(2.0));
        assert!(gpr_interval(&post, 0.01, 1.0, true).is_err());
    }

    #[test]
    fn model_file_round_trip() {
        let (model, tests) = random_model(5, 5, 2, 1e-3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        model.save(&path).unwrap();
        let back = MmgpModel::load(&path).unwrap();
        let a = model.posterior(&tests[0]).unwrap();
        let b = back.posterior(&tests[0]).unwrap();
        assert!((a[0].mean - b[0].mean).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (model, _) = random_model(6, 3, 1, 1e-3);
        assert!(MmgpModel::new(model.kernel().clone(), &model.label_pairs(), 0.0).is_err());
        assert!(MmgpModel::new(model.kernel().clone(), &model.label_pairs()[..2], 1e-3).is_err());
        let one = vec![feat(&[1.0])];
        assert!(fit(one, &[[0.0, 0.0]], vec![feat(&[2.0])], &ScaleRule::MedianHeuristic, 1e-3).is_err());
    }
}
