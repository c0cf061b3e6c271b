//! Thread-scaling harness: times consensus-solver iterations and Gibbs
//! sweeps under worker pools of different sizes, with content digests to
//! confirm that worker count never changes results.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::admm::{AdmmState, SolverConfig};
use crate::data::Dataset;
use crate::error::Result;
use crate::gibbs::{sample_prior_blocked, BlockPartition, MrfSpec};
use crate::graph::SocialGraph;
use crate::model::Hyperparams;

/// Uniform random graph with exactly `num_edges` distinct edges.
pub fn random_graph(num_nodes: usize, num_edges: usize, rng_seed: u64) -> Result<SocialGraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut seen = std::collections::HashSet::with_capacity(num_edges * 2);
    let mut edges = Vec::with_capacity(num_edges);
    while edges.len() < num_edges {
        let u = rng.random_range(0..num_nodes);
        let v = rng.random_range(0..num_nodes);
        if u == v {
            continue;
        }
        let pair = (u.min(v), u.max(v));
        if seen.insert(pair) {
            edges.push(pair);
        }
    }
    SocialGraph::new(num_nodes, &edges)
}

/// Random labeled dataset matched to a graph.
pub fn random_dataset(graph: &SocialGraph, num_features: usize, rng_seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let n = graph.num_nodes();
    let features: Vec<f64> = (0..n * num_features)
        .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
        .collect();
    let labels: Vec<i8> = (0..n)
        .map(|_| if rng.random::<f64>() < 0.5 { 1 } else { -1 })
        .collect();
    Dataset::new(features, num_features, labels)
}

/// FNV-1a over the raw bits of a float slice; used to compare runs.
pub fn digest_f64(values: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in values {
        for byte in v.to_bits().to_le_bytes() {
            h ^= u64::from(byte);
            h = h.wrapping_mul(0x100_0000_01b3);
        }
    }
    h
}

fn digest_u8_rows(rows: &[Vec<u8>]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for row in rows {
        for &byte in row {
            h ^= u64::from(byte);
            h = h.wrapping_mul(0x100_0000_01b3);
        }
    }
    h
}

/// Seconds per unit of repeated work, plus a digest of the final state.
#[derive(Debug, Clone, Copy)]
pub struct TimedRun {
    pub workers: usize,
    pub seconds_per_rep: f64,
    pub digest: u64,
}

fn pool(workers: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("worker pool")
}

/// Times `reps` solver iterations from a fresh state under a dedicated
/// pool of `workers` threads.
pub fn time_admm_iterations(
    data: &Dataset,
    graph: &SocialGraph,
    hyper: &Hyperparams,
    config: &SolverConfig,
    reps: usize,
    workers: usize,
) -> Result<TimedRun> {
    let node_weights = vec![1.0; data.num_nodes()];
    let edge_weights = vec![1.0; graph.num_edges()];
    let mut state = AdmmState::new(data, graph, hyper, node_weights, edge_weights, None)?;
    let pool = pool(workers);
    let start = std::time::Instant::now();
    pool.install(|| -> Result<()> {
        for _ in 0..reps {
            state.iterate(data, graph, config)?;
        }
        Ok(())
    })?;
    let seconds = start.elapsed().as_secs_f64();
    let mut snapshot = state.weights.clone();
    snapshot.extend_from_slice(&state.offsets);
    Ok(TimedRun {
        workers,
        seconds_per_rep: seconds / reps as f64,
        digest: digest_f64(&snapshot),
    })
}

/// Times Gibbs sweeps (burn-in only, one recorded sample) under a
/// dedicated pool. With the trivial partition this is the single-threaded
/// sampler regardless of `workers`.
pub fn time_gibbs_sweeps(
    spec: &MrfSpec,
    partition: &BlockPartition,
    sweeps: usize,
    workers: usize,
    rng_seed: u64,
) -> Result<TimedRun> {
    let pool = pool(workers);
    let start = std::time::Instant::now();
    let samples =
        pool.install(|| sample_prior_blocked(spec, partition, 1, sweeps, 1, rng_seed))?;
    let seconds = start.elapsed().as_secs_f64();
    Ok(TimedRun {
        workers,
        seconds_per_rep: seconds / (sweeps + 1) as f64,
        digest: digest_u8_rows(&samples),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_graph_has_requested_shape() {
        let g = random_graph(100, 300, 9).unwrap();
        assert_eq!(g.num_nodes(), 100);
        assert_eq!(g.num_edges(), 300);
    }

    #[test]
    fn admm_iterations_identical_across_worker_counts() {
        let graph = random_graph(60, 150, 2).unwrap();
        let data = random_dataset(&graph, 3, 3).unwrap();
        let hyper = Hyperparams::new(0.5).unwrap();
        let config = SolverConfig::default();
        let one = time_admm_iterations(&data, &graph, &hyper, &config, 3, 1).unwrap();
        let four = time_admm_iterations(&data, &graph, &hyper, &config, 3, 4).unwrap();
        assert_eq!(one.digest, four.digest);
    }

    #[test]
    fn gibbs_sweeps_identical_across_worker_counts() {
        let graph = random_graph(80, 200, 5).unwrap();
        let offsets: Vec<f64> = (0..160).map(|i| ((i % 13) as f64 - 6.0) / 6.0).collect();
        let spec = MrfSpec::new(&graph, &offsets, 2, 1.0).unwrap();
        let partition = BlockPartition::contiguous(&graph, 8);
        let one = time_gibbs_sweeps(&spec, &partition, 10, 1, 7).unwrap();
        let eight = time_gibbs_sweeps(&spec, &partition, 10, 8, 7).unwrap();
        assert_eq!(one.digest, eight.digest);
    }
}
