//! Manifold covariance fused over nodes.
//!
//! Each node m contributes a Gaussian kernel `k_m(u, v) = exp(-|u - v|^2 / sigma_m)`
//! over its own RTF sub-vector. Two samples are compared through their kernel
//! affinities to the n reference samples (labeled + unlabeled), and the node
//! views are averaged:
//!
//! ```text
//! K(h_i, h_j) = 1/M^2 * sum_r sum_m sum_g k_m(h_i^m, h_r^m) k_g(h_j^g, h_r^g)
//!             = sum_r C[i, r] C[j, r],   C[i, r] = 1/M * sum_m k_m(h_i^m, h_r^m)
//! ```
//!
//! All matrices are built through the factor `C`, which is also what makes
//! them positive semidefinite with rank at most n.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::AggregatedRtf;

/// How the per-node scales are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ScaleRule {
    Fixed {
        sigma: Vec<f64>,
    },
    /// Median squared distance between reference samples, per node.
    #[default]
    MedianHeuristic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub sigma: Vec<f64>,
    pub scale_rule: ScaleRule,
}

impl KernelConfig {
    pub fn fixed(sigma: Vec<f64>) -> Result<Self> {
        let cfg = KernelConfig {
            scale_rule: ScaleRule::Fixed { sigma: sigma.clone() },
            sigma,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma.is_empty() {
            return Err(Error::Config("kernel needs one scale per node".into()));
        }
        if let Some(s) = self.sigma.iter().find(|&&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::Config(format!("kernel scales must be positive, got {s}")));
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.sigma.len()
    }
}

/// The n training features the manifold kernel integrates over, labeled first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSet {
    features: Vec<AggregatedRtf>,
    n_labeled: usize,
}

impl ReferenceSet {
    pub fn new(labeled: Vec<AggregatedRtf>, unlabeled: Vec<AggregatedRtf>) -> Result<Self> {
        let n_labeled = labeled.len();
        let mut features = labeled;
        features.extend(unlabeled);
        Self::from_parts(features, n_labeled)
    }

    pub fn from_parts(features: Vec<AggregatedRtf>, n_labeled: usize) -> Result<Self> {
        if n_labeled == 0 || n_labeled > features.len() {
            return Err(Error::Input(format!(
                "need 1 <= n_labeled <= n, got n_labeled = {n_labeled}, n = {}",
                features.len()
            )));
        }
        let shape = features[0].shape();
        if let Some(bad) = features.iter().find(|f| f.shape() != shape) {
            return Err(Error::Input(format!(
                "reference features have mixed shapes {:?} and {:?}",
                shape,
                bad.shape()
            )));
        }
        Ok(ReferenceSet { features, n_labeled })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn n_labeled(&self) -> usize {
        self.n_labeled
    }

    pub fn features(&self) -> &[AggregatedRtf] {
        &self.features
    }

    pub fn labeled(&self) -> &[AggregatedRtf] {
        &self.features[..self.n_labeled]
    }

    pub fn unlabeled(&self) -> &[AggregatedRtf] {
        &self.features[self.n_labeled..]
    }

    pub fn shape(&self) -> (usize, usize) {
        self.features[0].shape()
    }
}

fn sq_dist(u: &[Complex64], v: &[Complex64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b).norm_sqr()).sum()
}

/// Gaussian kernel on one node's RTF vectors.
pub fn node_kernel(u: &[Complex64], v: &[Complex64], sigma: f64) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Input(format!(
            "node vectors differ in length: {} vs {}",
            u.len(),
            v.len()
        )));
    }
    if !(sigma > 0.0) {
        return Err(Error::Config(format!("kernel scale must be positive, got {sigma}")));
    }
    Ok((-sq_dist(u, v) / sigma).exp())
}

/// Single-node manifold covariance `sum_r k_m(u^m, h_r^m) k_m(v^m, h_r^m)`.
pub fn manifold_kernel(u: &AggregatedRtf, v: &AggregatedRtf, node: usize, refs: &ReferenceSet, cfg: &KernelConfig) -> Result<f64> {
    if refs.is_empty() {
        return Err(Error::Input("empty reference set".into()));
    }
    if node >= cfg.num_nodes() || u.shape() != refs.shape() || v.shape() != refs.shape() {
        return Err(Error::Input("feature/config shape mismatch".into()));
    }
    let sigma = cfg.sigma[node];
    refs.features().iter().try_fold(0.0, |acc, r| {
        Ok(acc + node_kernel(u.node(node), r.node(node), sigma)? * node_kernel(v.node(node), r.node(node), sigma)?)
    })
}

/// `C[i, r] = 1/M * sum_m k_m(q_i^m, h_r^m)`, queries by reference samples.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeBaseMatrix(pub DMatrix<f64>);

/// Combined-kernel values between two query sets.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedKernelMatrix(pub DMatrix<f64>);

impl CombinedKernelMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn max_asymmetry(&self) -> f64 {
        let k = &self.0;
        (k - k.transpose()).amax()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        nalgebra::SymmetricEigen::new(self.0.clone())
            .eigenvalues
            .min()
    }

    /// Minimum eigenvalue above `-1e-8 * trace / p`.
    pub fn is_psd(&self) -> bool {
        let p = self.0.nrows() as f64;
        self.min_eigenvalue() >= -1e-8 * self.0.trace() / p
    }
}

/// Reference set plus scales: everything needed to evaluate the fused kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldKernel {
    refs: ReferenceSet,
    cfg: KernelConfig,
}

impl ManifoldKernel {
    pub fn new(refs: ReferenceSet, cfg: KernelConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.num_nodes() != refs.shape().0 {
            return Err(Error::Input(format!(
                "kernel has {} scales, features have {} nodes",
                cfg.num_nodes(),
                refs.shape().0
            )));
        }
        Ok(ManifoldKernel { refs, cfg })
    }

    pub fn refs(&self) -> &ReferenceSet {
        &self.refs
    }

    pub fn config(&self) -> &KernelConfig {
        &self.cfg
    }

    fn check(&self, q: &AggregatedRtf) -> Result<()> {
        if q.shape() != self.refs.shape() {
            return Err(Error::Input(format!(
                "query shape {:?} does not match reference shape {:?}",
                q.shape(),
                self.refs.shape()
            )));
        }
        Ok(())
    }

    /// Averaged node-kernel profile of one query against every reference sample.
    pub fn profile(&self, q: &AggregatedRtf) -> Result<Vec<f64>> {
        self.check(q)?;
        let m_nodes = self.cfg.num_nodes();
        let inv_m = 1.0 / m_nodes as f64;
        Ok(self
            .refs
            .features()
            .iter()
            .map(|r| {
                (0..m_nodes)
                    .map(|m| (-sq_dist(q.node(m), r.node(m)) / self.cfg.sigma[m]).exp())
                    .sum::<f64>()
                    * inv_m
            })
            .collect())
    }

    pub fn factor(&self, queries: &[AggregatedRtf]) -> Result<NodeBaseMatrix> {
        let n = self.refs.len();
        let mut c = DMatrix::zeros(queries.len(), n);
        for (i, q) in queries.iter().enumerate() {
            for (r, v) in self.profile(q)?.into_iter().enumerate() {
                c[(i, r)] = v;
            }
        }
        Ok(NodeBaseMatrix(c))
    }

    /// `C_a C_b^T`.
    pub fn cross(a: &NodeBaseMatrix, b: &NodeBaseMatrix) -> CombinedKernelMatrix {
        CombinedKernelMatrix(&a.0 * b.0.transpose())
    }

    pub fn gram(&self, queries: &[AggregatedRtf]) -> Result<CombinedKernelMatrix> {
        let c = self.factor(queries)?;
        Ok(Self::cross(&c, &c))
    }

    pub fn cross_matrix(&self, rows: &[AggregatedRtf], cols: &[AggregatedRtf]) -> Result<CombinedKernelMatrix> {
        Ok(Self::cross(&self.factor(rows)?, &self.factor(cols)?))
    }

    pub fn value(&self, u: &AggregatedRtf, v: &AggregatedRtf) -> Result<f64> {
        let a = self.profile(u)?;
        let b = self.profile(v)?;
        Ok(a.iter().zip(&b).map(|(x, y)| x * y).sum())
    }
}

/// Fused kernel Gram matrix over `queries`.
pub fn combined_kernel_matrix(queries: &[AggregatedRtf], refs: &ReferenceSet, cfg: &KernelConfig) -> Result<CombinedKernelMatrix> {
    ManifoldKernel::new(refs.clone(), cfg.clone())?.gram(queries)
}

/// Per-node scales for `refs` under `rule`.
pub fn select_scales(refs: &ReferenceSet, rule: &ScaleRule) -> Result<KernelConfig> {
    let (nodes, _) = refs.shape();
    match rule {
        ScaleRule::Fixed { sigma } => {
            if sigma.len() != nodes {
                return Err(Error::Config(format!(
                    "{} fixed scales for {nodes} nodes",
                    sigma.len()
                )));
            }
            KernelConfig::fixed(sigma.clone())
        }
        ScaleRule::MedianHeuristic => {
            let n = refs.len();
            if n < 2 {
                return Err(Error::Input("median heuristic needs at least two reference samples".into()));
            }
            let feats = refs.features();
            let sigma = (0..nodes)
                .map(|m| {
                    let mut d: Vec<f64> = (0..n)
                        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                        .map(|(i, j)| sq_dist(feats[i].node(m), feats[j].node(m)))
                        .collect();
                    let mid = d.len() / 2;
                    let (_, upper, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
                    let upper = *upper;
                    let med = if d.len() % 2 == 1 {
                        upper
                    } else {
                        let lower = d[..mid].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        0.5 * (lower + upper)
                    };
                    if med > 0.0 {
                        Ok(med)
                    } else if d.iter().any(|&x| x > 0.0) {
                        // more than half the pairs coincide; fall back to the mean
                        Ok(d.iter().sum::<f64>() / d.len() as f64)
                    } else {
                        Err(Error::DegenerateManifold { node: m })
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(KernelConfig {
                sigma,
                scale_rule: ScaleRule::MedianHeuristic,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_feature(rng: &mut impl Rng, nodes: usize, bins: usize) -> AggregatedRtf {
        let flat = (0..nodes * bins)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        AggregatedRtf::from_flat(nodes, bins, flat).unwrap()
    }

    fn random_instance(seed: u64, n: usize, nodes: usize, bins: usize) -> (ReferenceSet, KernelConfig) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let feats = (0..n).map(|_| random_feature(&mut rng, nodes, bins)).collect();
        let refs = ReferenceSet::from_parts(feats, n.min(2)).unwrap();
        let sigma = (0..nodes).map(|_| rng.gen_range(0.5..4.0)).collect();
        (refs, KernelConfig::fixed(sigma).unwrap())
    }

    /// Direct triple sum over r, m, g.
    fn triple_sum(u: &AggregatedRtf, v: &AggregatedRtf, refs: &ReferenceSet, cfg: &KernelConfig) -> f64 {
        let big_m = cfg.num_nodes();
        let mut acc = 0.0;
        for r in refs.features() {
            for m in 0..big_m {
                for g in 0..big_m {
                    acc += node_kernel(u.node(m), r.node(m), cfg.sigma[m]).unwrap()
                        * node_kernel(v.node(g), r.node(g), cfg.sigma[g]).unwrap();
                }
            }
        }
        acc / (big_m * big_m) as f64
    }

    #[test]
    fn node_kernel_values() {
        let u = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)];
        assert_eq!(node_kernel(&u, &u, 2.0).unwrap(), 1.0);
        let v = [Complex64::new(1.0, 1.0), Complex64::new(0.0, 1.0)];
        assert!((node_kernel(&u, &v, 1.0).unwrap() - (-1f64).exp()).abs() < 1e-15);
        assert_eq!(node_kernel(&u, &v, 3.0).unwrap(), node_kernel(&v, &u, 3.0).unwrap());
        assert!(matches!(node_kernel(&u, &v[..1], 1.0), Err(Error::Input(_))));
    }

    #[test]
    fn single_sample_manifold_kernel() {
        let (refs, cfg) = random_instance(1, 1, 2, 3);
        let h = &refs.features()[0];
        assert!((manifold_kernel(h, h, 0, &refs, &cfg).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn manifold_kernel_is_row_dot_product() {
        let (refs, cfg) = random_instance(2, 6, 1, 4);
        let k = ManifoldKernel::new(refs.clone(), cfg.clone()).unwrap();
        let c = k.factor(refs.features()).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let direct = manifold_kernel(&refs.features()[i], &refs.features()[j], 0, &refs, &cfg).unwrap();
                let dot = c.0.row(i).dot(&c.0.row(j));
                assert!((direct - dot).abs() < 1e-12);
                assert!(direct > 0.0);
            }
        }
    }

    #[test]
    fn factorization_matches_triple_sum() {
        let (refs, cfg) = random_instance(3, 5, 3, 4);
        let k = combined_kernel_matrix(refs.features(), &refs, &cfg).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let t = triple_sum(&refs.features()[i], &refs.features()[j], &refs, &cfg);
                assert!((k.0[(i, j)] - t).abs() < 1e-12);
            }
        }
        assert!(k.max_asymmetry() < 1e-10);
        assert!(k.is_psd());
    }

    #[test]
    fn one_node_reduces_to_manifold_kernel() {
        let (refs, cfg) = random_instance(4, 5, 1, 3);
        let k = combined_kernel_matrix(refs.features(), &refs, &cfg).unwrap();
        let f = refs.features();
        assert!((k.0[(1, 3)] - manifold_kernel(&f[1], &f[3], 0, &refs, &cfg).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn duplicated_node_reduces_to_manifold_kernel() {
        let (refs1, cfg1) = random_instance(5, 4, 1, 3);
        let dup: Vec<AggregatedRtf> = refs1
            .features()
            .iter()
            .map(|f| {
                let mut flat = f.flat().to_vec();
                flat.extend_from_slice(f.flat());
                AggregatedRtf::from_flat(2, 3, flat).unwrap()
            })
            .collect();
        let refs2 = ReferenceSet::from_parts(dup, 2).unwrap();
        let cfg2 = KernelConfig::fixed(vec![cfg1.sigma[0]; 2]).unwrap();
        let k1 = combined_kernel_matrix(refs1.features(), &refs1, &cfg1).unwrap();
        let k2 = combined_kernel_matrix(refs2.features(), &refs2, &cfg2).unwrap();
        assert!((k1.0 - k2.0).amax() < 1e-12);
    }

    #[test]
    fn large_scale_limit() {
        let (refs, _) = random_instance(6, 4, 2, 3);
        let cfg = KernelConfig::fixed(vec![1e12; 2]).unwrap();
        let k = combined_kernel_matrix(refs.features(), &refs, &cfg).unwrap();
        assert!(k.0.iter().all(|&v| (v - 4.0).abs() < 1e-9));
    }

    #[test]
    fn reference_order_is_irrelevant() {
        let (refs, cfg) = random_instance(7, 6, 2, 3);
        let mut shuffled = refs.features().to_vec();
        shuffled.reverse();
        let refs_rev = ReferenceSet::from_parts(shuffled, 2).unwrap();
        let q = refs.features();
        let a = combined_kernel_matrix(q, &refs, &cfg).unwrap();
        let b = combined_kernel_matrix(q, &refs_rev, &cfg).unwrap();
        assert!((a.0 - b.0).amax() < 1e-12);
    }

    #[test]
    fn median_heuristic() {
        let a = AggregatedRtf::from_flat(1, 1, vec![Complex64::new(0.0, 0.0)]).unwrap();
        let b = AggregatedRtf::from_flat(1, 1, vec![Complex64::new(1.0, 2.0)]).unwrap();
        let refs = ReferenceSet::from_parts(vec![a.clone(), b.clone()], 1).unwrap();
        let cfg = select_scales(&refs, &ScaleRule::MedianHeuristic).unwrap();
        assert!((cfg.sigma[0] - 5.0).abs() < 1e-12);

        let scaled: Vec<AggregatedRtf> = [a.clone(), b]
            .iter()
            .map(|f| AggregatedRtf::from_flat(1, 1, f.flat().iter().map(|c| c * 3.0).collect()).unwrap())
            .collect();
        let cfg3 = select_scales(&ReferenceSet::from_parts(scaled, 1).unwrap(), &ScaleRule::MedianHeuristic).unwrap();
        assert!((cfg3.sigma[0] - 45.0).abs() < 1e-9);

        let same = ReferenceSet::from_parts(vec![a.clone(), a], 1).unwrap();
        assert!(matches!(
            select_scales(&same, &ScaleRule::MedianHeuristic),
            Err(Error::DegenerateManifold { node: 0 })
        ));
    }

    #[test]
    fn fixed_rule_passes_through() {
        let (refs, _) = random_instance(8, 3, 2, 2);
        let cfg = select_scales(&refs, &ScaleRule::Fixed { sigma: vec![1.5, 2.5] }).unwrap();
        assert_eq!(cfg.sigma, vec![1.5, 2.5]);
        assert!(select_scales(&refs, &ScaleRule::Fixed { sigma: vec![1.0] }).is_err());
        assert!(KernelConfig::fixed(vec![0.0, 1.0]).is_err());
    }
}
