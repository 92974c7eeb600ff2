//! Deterministic inputs shared by the benchmarks.

use mcast_core::channel::{correlation_matrix, standard_complex_normal, ArrayGeometry, DEFAULT_RAYS};
use mcast_core::config::ScenarioConfig;
use mcast_core::harness::generate_drop;
use mcast_core::power::SinrCoefficients;
use mcast_core::rng::stream;
use mcast_core::{CMat, DropContext, SimilarityMatrix};
use rand::Rng;

/// `m x g` matrix of i.i.d. standard complex Gaussian entries.
pub fn composite_estimates(m: usize, g: usize, seed: u64) -> CMat {
    let z = standard_complex_normal(m * g, &mut stream(seed, &[m as u64, g as u64]));
    CMat::from_iterator(m, g, z.iter().copied())
}

/// Random SINR coefficients with `users` members per group.
pub fn coefficients(groups: usize, users: usize, seed: u64) -> SinrCoefficients {
    let mut rng = stream(seed, &[groups as u64, users as u64]);
    let mut table = |lo: f64, hi: f64| -> Vec<Vec<f64>> {
        (0..groups).map(|_| (0..users).map(|_| rng.random_range(lo..hi)).collect()).collect()
    };
    let a = table(0.5, 2.0);
    let noise = table(0.05, 0.5);
    let b = (0..groups)
        .map(|_| (0..users).map(|_| (0..groups).map(|_| rng.random_range(0.0..0.1)).collect()).collect())
        .collect();
    SinrCoefficients { a, b, noise, n_samples: 1 }
}

/// Similarity matrix of `k` users spread over a quarter circle.
pub fn similarity(k: usize, m: usize) -> SimilarityMatrix {
    let geom = ArrayGeometry::half_wavelength(m).expect("positive antenna count");
    let users: Vec<_> = (0..k)
        .map(|i| {
            let phi = -0.8 + 1.6 * i as f64 / k as f64;
            let r = correlation_matrix(phi, 0.17, 1e-9, &geom, DEFAULT_RAYS).expect("valid geometry");
            mcast_core::pipeline::synthetic_user([100.0 * phi.cos(), 100.0 * phi.sin()], r)
        })
        .collect();
    SimilarityMatrix::from_profiles(&users).expect("consistent users")
}

/// A drop of the default scenario with `m` antennas and pre-drawn channels.
pub fn drop_context(m: usize, n_clusters: usize, users_per_cluster: usize, realizations: usize) -> DropContext {
    let cfg = ScenarioConfig { antennas: m, n_clusters, users_per_cluster, ..ScenarioConfig::default() };
    let users = generate_drop(&cfg, &mut stream(cfg.seed, &[1, 0])).expect("valid config");
    DropContext::new(users, cfg.link_params(), realizations, cfg.seed, 0).expect("valid drop")
}
