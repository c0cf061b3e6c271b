//! Community-structured synthetic benchmarks.
//!
//! Two generators:
//!
//! - the **cross-class connectivity** experiment: three equal communities,
//!   two classes, Gaussian-mixture features drawn independently of the
//!   class, and pairwise edges at rates p_in / p_same_class / beta
//!   depending on the pair's relationship;
//! - the **preference-strength** experiment: two equal classes with
//!   mirrored weight vectors W and −W, per-node Gaussian offsets, and
//!   labels sampled from the choice probability.
//!
//! Feature/label draws and edge draws use separate streams derived from the
//! master seed, so varying an edge probability resamples the graph while
//! leaving features and labels bit-identical.

use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{Dataset, Label};
use crate::error::{Error, Result};
use crate::graph::SocialGraph;
use crate::seeds;

const SALT_FEATURES: u64 = 0xf1;
const SALT_EDGES: u64 = 0xed;

/// Per-node ground truth emitted alongside generated data.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub community: Vec<usize>,
    pub class: Vec<usize>,
    pub label: Vec<Label>,
}

/// Generating parameters of the preference-strength experiment, returned
/// for recovery checks.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueParams {
    /// Row-major K×d class weights.
    pub weights: Vec<f64>,
    pub num_features: usize,
    /// Per-node offsets shared across classes.
    pub offsets: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetaExperimentSpec {
    pub n_nodes: usize,
    pub n_communities: usize,
    pub n_classes: usize,
    /// Within-community edge probability.
    pub p_in: f64,
    /// Same-class, cross-community edge probability.
    pub p_same_class: f64,
    /// Cross-class edge probability.
    pub beta: f64,
    pub feature_dim: usize,
    /// Mixture component means are ±feature_mean·(1,…,1).
    pub feature_mean: f64,
    pub rng_seed: u64,
}

impl BetaExperimentSpec {
    pub fn new(beta: f64, rng_seed: u64) -> Self {
        Self {
            n_nodes: 300,
            n_communities: 3,
            n_classes: 2,
            p_in: 0.2,
            p_same_class: 0.01,
            beta,
            feature_dim: 2,
            feature_mean: 1.0,
            rng_seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_communities == 0 || self.n_nodes % self.n_communities != 0 {
            return Err(Error::validation(format!(
                "{} nodes cannot be split into {} equal communities",
                self.n_nodes, self.n_communities
            )));
        }
        if self.n_classes != 2 {
            return Err(Error::validation("binary choices require exactly two classes"));
        }
        if self.n_communities < self.n_classes {
            return Err(Error::validation("need at least one community per class"));
        }
        for (name, p) in [
            ("p_in", self.p_in),
            ("p_same_class", self.p_same_class),
            ("beta", self.beta),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::validation(format!("{name}={p} outside [0,1]")));
            }
        }
        if self.feature_dim == 0 {
            return Err(Error::validation("feature_dim must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WExperimentSpec {
    pub n_nodes: usize,
    /// ‖W₁‖₂; the second class uses −W₁.
    pub w_norm: f64,
    /// Scale of the per-node offset draws.
    pub b_sigma: f64,
    /// Within-class edge probability.
    pub p_in: f64,
    /// Cross-class edge probability.
    pub p_cross: f64,
    pub feature_dim: usize,
    /// Features are N(feature_mean·(1,…,1), I). The positive mean aligns
    /// scores with the class weight sign, so large ‖W₁‖ drives each class
    /// toward a single choice instead of merely sharpening a coin flip.
    pub feature_mean: f64,
    pub rng_seed: u64,
}

impl WExperimentSpec {
    pub fn new(w_norm: f64, rng_seed: u64) -> Self {
        Self {
            n_nodes: 200,
            w_norm,
            b_sigma: 1.0,
            p_in: 0.2,
            p_cross: 1e-4,
            feature_dim: 2,
            feature_mean: 2.5,
            rng_seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_nodes == 0 || self.n_nodes % 2 != 0 {
            return Err(Error::validation("n_nodes must be positive and even"));
        }
        if !(self.w_norm >= 0.0) {
            return Err(Error::validation("w_norm must be >= 0"));
        }
        if !(self.b_sigma >= 0.0) {
            return Err(Error::validation("b_sigma must be >= 0"));
        }
        for (name, p) in [("p_in", self.p_in), ("p_cross", self.p_cross)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::validation(format!("{name}={p} outside [0,1]")));
            }
        }
        if self.feature_dim == 0 {
            return Err(Error::validation("feature_dim must be positive"));
        }
        Ok(())
    }
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
}

/// Bernoulli edge draws over all unordered pairs in (i,j) lexicographic
/// order, with the probability chosen per pair. One uniform draw per pair
/// regardless of outcome keeps graphs coupled across probability settings.
fn sample_edges(
    n: usize,
    rng: &mut ChaCha8Rng,
    prob_of: impl Fn(usize, usize) -> f64,
) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let u: f64 = rng.random();
            if u < prob_of(i, j) {
                edges.push((i, j));
            }
        }
    }
    edges
}

/// Community-structured graph with class-independent feature mixture.
pub fn generate_beta_experiment(
    spec: &BetaExperimentSpec,
) -> Result<(SocialGraph, Dataset, GroundTruth)> {
    spec.validate()?;
    let n = spec.n_nodes;
    let d = spec.feature_dim;
    let community_size = n / spec.n_communities;
    let community: Vec<usize> = (0..n).map(|i| i / community_size).collect();
    let class: Vec<usize> = community.iter().map(|&c| c % spec.n_classes).collect();
    let label: Vec<Label> = class.iter().map(|&c| if c == 0 { 1 } else { -1 }).collect();

    let mut feature_rng =
        ChaCha8Rng::seed_from_u64(seeds::derive(spec.rng_seed, SALT_FEATURES));
    let mut features = Vec::with_capacity(n * d);
    for _ in 0..n {
        // Mixture component chosen independently of community and class.
        let sign = if feature_rng.random::<f64>() < 0.5 { 1.0 } else { -1.0 };
        for _ in 0..d {
            features.push(sign * spec.feature_mean + standard_normal(&mut feature_rng));
        }
    }

    let mut edge_rng = ChaCha8Rng::seed_from_u64(seeds::derive(spec.rng_seed, SALT_EDGES));
    let edges = sample_edges(n, &mut edge_rng, |i, j| {
        if community[i] == community[j] {
            spec.p_in
        } else if class[i] == class[j] {
            spec.p_same_class
        } else {
            spec.beta
        }
    });

    let graph = SocialGraph::new(n, &edges)?;
    let dataset = Dataset::new(features, d, label.clone())?;
    Ok((
        graph,
        dataset,
        GroundTruth {
            community,
            class,
            label,
        },
    ))
}

/// Two mirrored classes with labels sampled from the choice model.
pub fn generate_w_experiment(
    spec: &WExperimentSpec,
) -> Result<(SocialGraph, Dataset, GroundTruth, TrueParams)> {
    spec.validate()?;
    let n = spec.n_nodes;
    let d = spec.feature_dim;
    let class: Vec<usize> = (0..n).map(|i| if i < n / 2 { 0 } else { 1 }).collect();

    let mut feature_rng =
        ChaCha8Rng::seed_from_u64(seeds::derive(spec.rng_seed, SALT_FEATURES));
    let mut features = Vec::with_capacity(n * d);
    for _ in 0..n * d {
        features.push(spec.feature_mean + standard_normal(&mut feature_rng));
    }
    let offsets: Vec<f64> = (0..n)
        .map(|_| spec.b_sigma * standard_normal(&mut feature_rng))
        .collect();

    // W₁ = w_norm·(1,…,1)/√d, W₂ = −W₁.
    let w1: Vec<f64> = (0..d).map(|_| spec.w_norm / (d as f64).sqrt()).collect();
    let mut weights = w1.clone();
    weights.extend(w1.iter().map(|w| -w));

    let mut label = Vec::with_capacity(n);
    for i in 0..n {
        let row = &features[i * d..(i + 1) * d];
        let base: f64 = row.iter().zip(&w1).map(|(x, w)| x * w).sum();
        let score = if class[i] == 0 { base } else { -base } + offsets[i];
        let p_plus = crate::model::sigmoid(score);
        label.push(if feature_rng.random::<f64>() < p_plus { 1 } else { -1 });
    }

    let mut edge_rng = ChaCha8Rng::seed_from_u64(seeds::derive(spec.rng_seed, SALT_EDGES));
    let edges = sample_edges(n, &mut edge_rng, |i, j| {
        if class[i] == class[j] {
            spec.p_in
        } else {
            spec.p_cross
        }
    });

    let graph = SocialGraph::new(n, &edges)?;
    let dataset = Dataset::new(features, d, label.clone())?;
    let community = class.clone();
    Ok((
        graph,
        dataset,
        GroundTruth {
            community,
            class,
            label,
        },
        TrueParams {
            weights,
            num_features: d,
            offsets,
        },
    ))
}

/// Truth CSV: `node_id,community,class,label`.
pub fn write_truth_csv(mut w: impl Write, truth: &GroundTruth) -> std::io::Result<()> {
    writeln!(w, "node_id,community,class,label")?;
    for i in 0..truth.label.len() {
        writeln!(
            w,
            "{i},{},{},{}",
            truth.community[i], truth.class[i], truth.label[i]
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_zero_means_no_cross_class_edges() {
        let spec = BetaExperimentSpec::new(0.0, 42);
        let (graph, _, truth) = generate_beta_experiment(&spec).unwrap();
        for &(u, v) in graph.edges() {
            assert_eq!(truth.class[u], truth.class[v]);
        }
    }

    #[test]
    fn beta_edge_count_matches_binomial_expectation() {
        let spec = BetaExperimentSpec::new(0.1, 7);
        let (graph, _, truth) = generate_beta_experiment(&spec).unwrap();
        let mut cross_pairs = 0usize;
        let n = spec.n_nodes;
        for i in 0..n {
            for j in (i + 1)..n {
                if truth.class[i] != truth.class[j] {
                    cross_pairs += 1;
                }
            }
        }
        let cross_edges = graph
            .edges()
            .iter()
            .filter(|&&(u, v)| truth.class[u] != truth.class[v])
            .count();
        let mean = spec.beta * cross_pairs as f64;
        let sd = (cross_pairs as f64 * spec.beta * (1.0 - spec.beta)).sqrt();
        assert!(
            (cross_edges as f64 - mean).abs() < 4.0 * sd,
            "{cross_edges} vs {mean} ± {sd}"
        );
    }

    #[test]
    fn fixed_seed_reproduces_and_beta_leaves_features_alone() {
        let spec = BetaExperimentSpec::new(0.01, 11);
        let (g1, d1, t1) = generate_beta_experiment(&spec).unwrap();
        let (g2, d2, t2) = generate_beta_experiment(&spec).unwrap();
        assert_eq!(g1, g2);
        assert_eq!(d1, d2);
        assert_eq!(t1, t2);

        let other_beta = BetaExperimentSpec::new(0.1, 11);
        let (_, d3, t3) = generate_beta_experiment(&other_beta).unwrap();
        assert_eq!(d1, d3, "features/labels must not depend on beta");
        assert_eq!(t1.label, t3.label);
    }

    #[test]
    fn w_experiment_zero_norm_balances_labels() {
        let spec = WExperimentSpec::new(0.0, 9);
        let (_, _, truth, params) = generate_w_experiment(&spec).unwrap();
        assert!(params.weights.iter().all(|&w| w == 0.0));
        let rate = |class: usize| {
            let members: Vec<_> = (0..spec.n_nodes).filter(|&i| truth.class[i] == class).collect();
            members.iter().filter(|&&i| truth.label[i] == 1).count() as f64 / members.len() as f64
        };
        assert!((rate(0) - rate(1)).abs() < 0.05, "{} vs {}", rate(0), rate(1));
    }

    #[test]
    fn w_experiment_strong_norm_purifies_class_labels() {
        let spec = WExperimentSpec::new(10.0, 3);
        let (_, _, truth, _) = generate_w_experiment(&spec).unwrap();
        for class in 0..2 {
            let members: Vec<_> = (0..spec.n_nodes).filter(|&i| truth.class[i] == class).collect();
            let plus = members.iter().filter(|&&i| truth.label[i] == 1).count();
            let majority = plus.max(members.len() - plus) as f64 / members.len() as f64;
            assert!(majority >= 0.95, "class {class}: majority {majority}");
        }
    }

    #[test]
    fn w_experiment_is_deterministic() {
        let spec = WExperimentSpec::new(2.0, 9);
        let a = generate_w_experiment(&spec).unwrap();
        let b = generate_w_experiment(&spec).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert_eq!(a.2, b.2);
        assert_eq!(a.3, b.3);
    }
}
