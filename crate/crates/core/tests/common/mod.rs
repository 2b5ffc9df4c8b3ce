//! Random instances shared by the integration tests.
#![allow(dead_code)]

use mmgp_cp::features::AggregatedRtf;
use mmgp_cp::gpr::MmgpModel;
use mmgp_cp::kernel::{KernelConfig, ManifoldKernel, ReferenceSet};
use num_complex::Complex64;
use rand::Rng;

pub fn random_feature(rng: &mut impl Rng, nodes: usize, bins: usize) -> AggregatedRtf {
    let flat = (0..nodes * bins)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    AggregatedRtf::from_flat(nodes, bins, flat).unwrap()
}

/// Feature of a source at `u` on a line: phase ramps per bin and node, plus complex noise.
pub fn line_feature(rng: &mut impl Rng, u: f64, nodes: usize, bins: usize, noise: f64) -> AggregatedRtf {
    let flat = (0..nodes)
        .flat_map(|m| (1..=bins).map(move |k| (m, k)))
        .map(|(m, k)| {
            Complex64::from_polar(1.0, k as f64 * (u + 0.37 * m as f64))
                + Complex64::new(rng.gen_range(-noise..=noise), rng.gen_range(-noise..=noise))
        })
        .collect();
    AggregatedRtf::from_flat(nodes, bins, flat).unwrap()
}

pub fn random_scales(rng: &mut impl Rng, nodes: usize) -> KernelConfig {
    KernelConfig::fixed((0..nodes).map(|_| rng.gen_range(0.5..4.0)).collect()).unwrap()
}

/// Model on random features with random labels.
pub fn random_model(rng: &mut impl Rng, n_labeled: usize, n_unlabeled: usize, nodes: usize, bins: usize, sigma_p2: f64) -> MmgpModel {
    let labeled = (0..n_labeled).map(|_| random_feature(rng, nodes, bins)).collect();
    let unlabeled = (0..n_unlabeled).map(|_| random_feature(rng, nodes, bins)).collect();
    let refs = ReferenceSet::new(labeled, unlabeled).unwrap();
    let kernel = ManifoldKernel::new(refs, random_scales(rng, nodes)).unwrap();
    let labels: Vec<[f64; 2]> = (0..n_labeled)
        .map(|_| [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)])
        .collect();
    MmgpModel::new(kernel, &labels, sigma_p2).unwrap()
}
