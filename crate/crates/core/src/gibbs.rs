//! Gibbs sampling and exact enumeration for the latent-class prior.
//!
//! The prior couples classes along edges: an assignment z has unnormalized
//! weight
//!
//! ```text
//!   Π_{(i,j)∈E} exp(−λ Σ_t (b_it − b_jt)² · 1(z_i = z_j = t))
//! ```
//!
//! so two connected nodes are discouraged from sharing a class exactly when
//! their offsets for that class disagree. Sampling runs systematic-scan
//! Gibbs; for parallelism the graph can be partitioned into blocks that are
//! sampled as independent chains with cut edges ignored.

use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::SocialGraph;
use crate::seeds;

/// A class assignment, one entry per node.
pub type Assignment = Vec<u8>;

/// The prior over latent classes: graph, per-node-per-class offsets
/// (row-major N×K), coupling strength.
#[derive(Debug, Clone, Copy)]
pub struct MrfSpec<'a> {
    graph: &'a SocialGraph,
    offsets: &'a [f64],
    num_classes: usize,
    lambda: f64,
}

impl<'a> MrfSpec<'a> {
    pub fn new(
        graph: &'a SocialGraph,
        offsets: &'a [f64],
        num_classes: usize,
        lambda: f64,
    ) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::validation("sampling needs at least two classes"));
        }
        if num_classes > u8::MAX as usize + 1 {
            return Err(Error::validation("more than 256 classes are unsupported"));
        }
        if !(lambda >= 0.0) {
            return Err(Error::validation(format!("lambda={lambda} must be >= 0")));
        }
        if offsets.len() != graph.num_nodes() * num_classes {
            return Err(Error::dimension(format!(
                "{} offsets for N={} K={num_classes}",
                offsets.len(),
                graph.num_nodes()
            )));
        }
        Ok(Self {
            graph,
            offsets,
            num_classes,
            lambda,
        })
    }

    pub fn graph(&self) -> &SocialGraph {
        self.graph
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn offset(&self, node: usize, class: usize) -> f64 {
        self.offsets[node * self.num_classes + class]
    }

    /// Same-class penalty of an edge at class t: λ(b_it − b_jt)².
    fn edge_energy(&self, i: usize, j: usize, t: usize) -> f64 {
        let diff = self.offset(i, t) - self.offset(j, t);
        self.lambda * diff * diff
    }
}

/// Single-site conditional P(z_i = · | z_{−i}): proportional to
/// exp(−λ Σ_{j∈N(i), z_j = t} (b_it − b_jt)²). Uniform for isolated nodes
/// and at λ = 0.
pub fn gibbs_conditional(node: usize, z: &[u8], spec: &MrfSpec) -> Vec<f64> {
    let k = spec.num_classes();
    let mut energy = vec![0.0; k];
    for &j in spec.graph().neighbors(node) {
        let t = z[j] as usize;
        energy[t] += spec.edge_energy(node, j, t);
    }
    normalized_from_energies(&energy)
}

fn normalized_from_energies(energy: &[f64]) -> Vec<f64> {
    let min = energy.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut probs: Vec<f64> = energy.iter().map(|&e| (-(e - min)).exp()).collect();
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    probs
}

/// Node blocks for parallel chains. Blocks partition the node set; edges
/// crossing blocks are listed in `cut_edges` and ignored while sampling.
#[derive(Debug, Clone)]
pub struct BlockPartition {
    blocks: Vec<Vec<usize>>,
    block_of: Vec<usize>,
    cut_edges: Vec<usize>,
}

impl BlockPartition {
    fn from_block_of(graph: &SocialGraph, block_of: Vec<usize>, num_blocks: usize) -> Self {
        let mut blocks = vec![Vec::new(); num_blocks];
        for (node, &b) in block_of.iter().enumerate() {
            blocks[b].push(node);
        }
        debug_assert!(blocks.iter().all(|b| !b.is_empty()));
        let cut_edges = graph
            .edges()
            .iter()
            .enumerate()
            .filter(|(_, &(u, v))| block_of[u] != block_of[v])
            .map(|(e, _)| e)
            .collect();
        Self {
            blocks,
            block_of,
            cut_edges,
        }
    }

    /// Everything in one block.
    pub fn trivial(graph: &SocialGraph) -> Self {
        Self::from_block_of(graph, vec![0; graph.num_nodes()], 1)
    }

    /// Equal contiguous index ranges; no community structure, but cheap.
    pub fn contiguous(graph: &SocialGraph, num_blocks: usize) -> Self {
        let n = graph.num_nodes();
        let c = num_blocks.clamp(1, n.max(1));
        let block_of = (0..n).map(|i| (i * c / n).min(c - 1)).collect();
        Self::from_block_of(graph, block_of, c)
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn block_of(&self, node: usize) -> usize {
        self.block_of[node]
    }

    /// Edge ids whose endpoints live in different blocks.
    pub fn cut_edges(&self) -> &[usize] {
        &self.cut_edges
    }
}

/// Partitions the graph into exactly `num_blocks` blocks by greedy
/// modularity: one level of local-move passes over singleton communities,
/// then pairwise merges (or splits of the largest blocks) until the target
/// count is met. The seed only randomizes the node visiting order.
pub fn partition_blocks(
    graph: &SocialGraph,
    num_blocks: usize,
    rng_seed: u64,
) -> Result<BlockPartition> {
    let n = graph.num_nodes();
    if num_blocks == 0 || num_blocks > n {
        return Err(Error::validation(format!(
            "block count {num_blocks} outside [1,{n}]"
        )));
    }
    if num_blocks == n {
        return Ok(BlockPartition::from_block_of(graph, (0..n).collect(), n));
    }

    let m = graph.num_edges();
    let mut community: Vec<usize> = (0..n).collect();
    if m > 0 {
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }

        let m_f = m as f64;
        let two_m = 2.0 * m_f;
        let mut total_degree: Vec<f64> = vec![0.0; n];
        for i in 0..n {
            total_degree[community[i]] += graph.degree(i) as f64;
        }
        // Local moves: relocate each node to the adjacent community with the
        // best modularity gain until a full pass makes no move.
        let mut improved = true;
        let mut passes = 0;
        while improved && passes < 16 {
            improved = false;
            passes += 1;
            for &i in &order {
                let current = community[i];
                let k_i = graph.degree(i) as f64;
                let mut links: Vec<(usize, f64)> = Vec::new();
                for &j in graph.neighbors(i) {
                    let c = community[j];
                    match links.iter_mut().find(|(cc, _)| *cc == c) {
                        Some((_, w)) => *w += 1.0,
                        None => links.push((c, 1.0)),
                    }
                }
                total_degree[current] -= k_i;
                let links_current = links
                    .iter()
                    .find(|(c, _)| *c == current)
                    .map_or(0.0, |(_, w)| *w);
                let gain_of = |links_c: f64, tot_c: f64| links_c / m_f - tot_c * k_i / (two_m * two_m) * 2.0;
                let mut best_c = current;
                let mut best_gain = gain_of(links_current, total_degree[current]);
                for &(c, w) in &links {
                    if c == current {
                        continue;
                    }
                    let gain = gain_of(w, total_degree[c]);
                    if gain > best_gain + 1e-12
                        || ((gain - best_gain).abs() <= 1e-12 && c < best_c)
                    {
                        best_c = c;
                        best_gain = gain;
                    }
                }
                total_degree[best_c] += k_i;
                if best_c != current {
                    community[i] = best_c;
                    improved = true;
                }
            }
        }
    }

    let (mut block_of, mut count) = compact_ids(&community);
    if count > num_blocks {
        block_of = merge_to(graph, block_of, count, num_blocks);
        count = num_blocks;
    }
    while count < num_blocks {
        // Split: peel the highest node index out of the largest block.
        let sizes = block_sizes(&block_of, count);
        let largest = (0..count)
            .filter(|&b| sizes[b] > 1)
            .max_by_key(|&b| (sizes[b], std::cmp::Reverse(b)))
            .expect("a block of size >= 2 must exist while count < num_blocks");
        let node = (0..n)
            .rev()
            .find(|&i| block_of[i] == largest)
            .unwrap();
        block_of[node] = count;
        count += 1;
    }

    Ok(BlockPartition::from_block_of(graph, block_of, num_blocks))
}

fn block_sizes(block_of: &[usize], count: usize) -> Vec<usize> {
    let mut sizes = vec![0usize; count];
    for &b in block_of {
        sizes[b] += 1;
    }
    sizes
}

/// Renumbers arbitrary community labels to 0..count, ordered by smallest
/// member node so the result is independent of label history.
fn compact_ids(community: &[usize]) -> (Vec<usize>, usize) {
    let n = community.len();
    let mut first_member = vec![usize::MAX; n];
    for (node, &c) in community.iter().enumerate() {
        first_member[c] = first_member[c].min(node);
    }
    let mut ids: Vec<usize> = (0..n).filter(|&c| first_member[c] != usize::MAX).collect();
    ids.sort_by_key(|&c| first_member[c]);
    let mut remap = vec![usize::MAX; n];
    for (new_id, &c) in ids.iter().enumerate() {
        remap[c] = new_id;
    }
    (community.iter().map(|&c| remap[c]).collect(), ids.len())
}

/// Agglomerates communities down to `target` by repeatedly merging the pair
/// with the largest modularity gain (adjacent pairs preferred; disconnected
/// communities merge by smallest ids once no adjacent pair remains).
fn merge_to(
    graph: &SocialGraph,
    mut block_of: Vec<usize>,
    count: usize,
    target: usize,
) -> Vec<usize> {
    let m = graph.num_edges().max(1) as f64;
    let mut alive: Vec<bool> = vec![true; count];
    let mut total_degree = vec![0.0; count];
    for i in 0..graph.num_nodes() {
        total_degree[block_of[i]] += graph.degree(i) as f64;
    }
    let mut inter: Vec<std::collections::BTreeMap<usize, f64>> =
        vec![std::collections::BTreeMap::new(); count];
    for &(u, v) in graph.edges() {
        let (a, b) = (block_of[u], block_of[v]);
        if a != b {
            *inter[a].entry(b).or_insert(0.0) += 1.0;
            *inter[b].entry(a).or_insert(0.0) += 1.0;
        }
    }

    let mut remaining = count;
    while remaining > target {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..count {
            if !alive[a] {
                continue;
            }
            for (&b, &w) in &inter[a] {
                if b <= a || !alive[b] {
                    continue;
                }
                let gain = w / m - total_degree[a] * total_degree[b] / (2.0 * m * m);
                let better = match best {
                    None => true,
                    Some((g, ba, bb)) => {
                        gain > g + 1e-12 || ((gain - g).abs() <= 1e-12 && (a, b) < (ba, bb))
                    }
                };
                if better {
                    best = Some((gain, a, b));
                }
            }
        }
        let (a, b) = match best {
            Some((_, a, b)) => (a, b),
            None => {
                let mut it = (0..count).filter(|&c| alive[c]);
                (it.next().unwrap(), it.next().unwrap())
            }
        };
        alive[b] = false;
        total_degree[a] += total_degree[b];
        let b_links: Vec<(usize, f64)> = inter[b].iter().map(|(&c, &w)| (c, w)).collect();
        for (c, w) in b_links {
            if c == a {
                continue;
            }
            *inter[a].entry(c).or_insert(0.0) += w;
            let wc = inter[c].remove(&b).unwrap_or(0.0);
            *inter[c].entry(a).or_insert(0.0) += wc;
        }
        inter[a].remove(&b);
        inter[b].clear();
        for slot in &mut block_of {
            if *slot == b {
                *slot = a;
            }
        }
        remaining -= 1;
    }

    compact_ids(&block_of).0
}

/// Systematic-scan Gibbs over the whole graph: `burn_in` sweeps, then one
/// recorded assignment every `thin` sweeps. Implemented as blocked sampling
/// with the trivial single-block partition, so the two paths cannot drift
/// apart.
pub fn sample_prior(
    spec: &MrfSpec,
    n_samples: usize,
    burn_in: usize,
    thin: usize,
    rng_seed: u64,
) -> Result<Vec<Assignment>> {
    let partition = BlockPartition::trivial(spec.graph());
    sample_prior_blocked(spec, &partition, n_samples, burn_in, thin, rng_seed)
}

/// Blocked sampler: one independent chain per block using only
/// within-block edges. Blocks run in parallel; each block's stream is
/// seeded from (master seed, block id), so results are identical for any
/// worker count.
pub fn sample_prior_blocked(
    spec: &MrfSpec,
    partition: &BlockPartition,
    n_samples: usize,
    burn_in: usize,
    thin: usize,
    rng_seed: u64,
) -> Result<Vec<Assignment>> {
    if n_samples == 0 {
        return Err(Error::validation("need at least one sample"));
    }
    let thin = thin.max(1);
    let n = spec.graph().num_nodes();
    if partition.block_of.len() != n {
        return Err(Error::dimension("partition does not match graph"));
    }

    let per_block: Vec<Vec<Vec<(usize, u8)>>> = partition
        .blocks()
        .par_iter()
        .enumerate()
        .map(|(block_id, nodes)| {
            sample_block(
                spec,
                partition,
                nodes,
                n_samples,
                burn_in,
                thin,
                seeds::derive(rng_seed, block_id as u64),
            )
        })
        .collect();

    let mut samples = vec![vec![0u8; n]; n_samples];
    for block in per_block {
        for (s, slice) in block.into_iter().enumerate() {
            for (node, class) in slice {
                samples[s][node] = class;
            }
        }
    }
    Ok(samples)
}

fn sample_block(
    spec: &MrfSpec,
    partition: &BlockPartition,
    nodes: &[usize],
    n_samples: usize,
    burn_in: usize,
    thin: usize,
    seed: u64,
) -> Vec<Vec<(usize, u8)>> {
    let k = spec.num_classes();
    let block_id = partition.block_of(nodes[0]);
    // Within-block neighbor lists, indexed like `nodes`.
    let local_neighbors: Vec<Vec<usize>> = nodes
        .iter()
        .map(|&i| {
            spec.graph()
                .neighbors(i)
                .iter()
                .cloned()
                .filter(|&j| partition.block_of(j) == block_id)
                .collect()
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z: Vec<u8> = vec![0; spec.graph().num_nodes()];
    for &i in nodes {
        z[i] = rng.random_range(0..k) as u8;
    }

    let mut energy = vec![0.0; k];
    let sweep = |z: &mut Vec<u8>, rng: &mut ChaCha8Rng, energy: &mut Vec<f64>| {
        for (local, &i) in nodes.iter().enumerate() {
            energy.iter_mut().for_each(|e| *e = 0.0);
            for &j in &local_neighbors[local] {
                let t = z[j] as usize;
                energy[t] += spec.edge_energy(i, j, t);
            }
            let min = energy.iter().cloned().fold(f64::INFINITY, f64::min);
            let mut total = 0.0;
            for e in energy.iter() {
                total += (-(e - min)).exp();
            }
            let mut u = rng.random::<f64>() * total;
            let mut chosen = k - 1;
            for (t, e) in energy.iter().enumerate() {
                u -= (-(e - min)).exp();
                if u <= 0.0 {
                    chosen = t;
                    break;
                }
            }
            z[i] = chosen as u8;
        }
    };

    for _ in 0..burn_in {
        sweep(&mut z, &mut rng, &mut energy);
    }
    let mut out = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        for _ in 0..thin {
            sweep(&mut z, &mut rng, &mut energy);
        }
        out.push(nodes.iter().map(|&i| (i, z[i])).collect());
    }
    out
}

/// Smoothed empirical marginals: per-node class frequencies and per-edge
/// joint class frequencies.
#[derive(Debug, Clone)]
pub struct MarginalEstimates {
    node: Vec<f64>,
    edge_pair: Vec<f64>,
    num_classes: usize,
    pub sample_count: usize,
}

impl MarginalEstimates {
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Length-K distribution of node i.
    pub fn node_row(&self, node: usize) -> &[f64] {
        let k = self.num_classes;
        &self.node[node * k..(node + 1) * k]
    }

    /// Row-major K×K joint distribution of edge e's endpoint classes,
    /// rows = lower endpoint.
    pub fn edge_matrix(&self, edge: usize) -> &[f64] {
        let kk = self.num_classes * self.num_classes;
        &self.edge_pair[edge * kk..(edge + 1) * kk]
    }

    pub fn num_nodes(&self) -> usize {
        self.node.len() / self.num_classes
    }

    pub fn num_edges(&self) -> usize {
        self.edge_pair.len() / (self.num_classes * self.num_classes)
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..self.num_nodes() {
            let row = self.node_row(i);
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 || row.iter().any(|&p| p < 0.0) {
                return Err(Error::validation(format!(
                    "node {i} marginal is not a distribution (sum {sum})"
                )));
            }
        }
        for e in 0..self.num_edges() {
            let mat = self.edge_matrix(e);
            let sum: f64 = mat.iter().sum();
            if (sum - 1.0).abs() > 1e-9 || mat.iter().any(|&p| p < 0.0) {
                return Err(Error::validation(format!(
                    "edge {e} pair marginal is not a distribution (sum {sum})"
                )));
            }
        }
        Ok(())
    }

    /// Exactly uniform marginals, the λ = 0 distribution.
    pub fn uniform(num_nodes: usize, num_edges: usize, num_classes: usize) -> Self {
        let k = num_classes;
        Self {
            node: vec![1.0 / k as f64; num_nodes * k],
            edge_pair: vec![1.0 / (k * k) as f64; num_edges * k * k],
            num_classes: k,
            sample_count: 0,
        }
    }
}

/// Laplace-smoothed frequency estimates from recorded assignments.
pub fn estimate_marginals(
    samples: &[Assignment],
    spec: &MrfSpec,
    smoothing: f64,
) -> Result<MarginalEstimates> {
    if samples.is_empty() {
        return Err(Error::Empty("no samples to estimate marginals from".into()));
    }
    if !(smoothing >= 0.0) {
        return Err(Error::validation("smoothing must be >= 0"));
    }
    let n = spec.graph().num_nodes();
    let k = spec.num_classes();
    let s = samples.len() as f64;

    let node: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut counts = vec![0u64; k];
            for sample in samples {
                counts[sample[i] as usize] += 1;
            }
            let denom = s + k as f64 * smoothing;
            counts
                .into_iter()
                .map(move |c| (c as f64 + smoothing) / denom)
                .collect::<Vec<_>>()
        })
        .collect();

    let edges = spec.graph().edges();
    let edge_pair: Vec<f64> = (0..edges.len())
        .into_par_iter()
        .flat_map_iter(|e| {
            let (u, v) = edges[e];
            let mut counts = vec![0u64; k * k];
            for sample in samples {
                counts[sample[u] as usize * k + sample[v] as usize] += 1;
            }
            let denom = s + (k * k) as f64 * smoothing;
            counts
                .into_iter()
                .map(move |c| (c as f64 + smoothing) / denom)
                .collect::<Vec<_>>()
        })
        .collect();

    Ok(MarginalEstimates {
        node,
        edge_pair,
        num_classes: k,
        sample_count: samples.len(),
    })
}

/// Exact marginals by enumerating all K^N assignments. Only viable for
/// small graphs; the work is capped at ~16M configurations.
pub fn enumerate_marginals(spec: &MrfSpec) -> Result<MarginalEstimates> {
    let n = spec.graph().num_nodes();
    let k = spec.num_classes();
    let configs = (k as f64).powi(n as i32);
    if configs > 16_777_216.0 {
        return Err(Error::validation(format!(
            "enumeration over K^N = {configs} assignments is infeasible"
        )));
    }
    let edges = spec.graph().edges();
    let mut node = vec![0.0; n * k];
    let mut edge_pair = vec![0.0; edges.len() * k * k];
    let mut total = 0.0;

    let mut z = vec![0u8; n];
    loop {
        let mut energy = 0.0;
        for &(u, v) in edges {
            if z[u] == z[v] {
                energy += spec.edge_energy(u, v, z[u] as usize);
            }
        }
        let weight = (-energy).exp();
        total += weight;
        for (i, &t) in z.iter().enumerate() {
            node[i * k + t as usize] += weight;
        }
        for (e, &(u, v)) in edges.iter().enumerate() {
            edge_pair[e * k * k + z[u] as usize * k + z[v] as usize] += weight;
        }

        // Next assignment in base-K counter order.
        let mut pos = 0;
        while pos < n {
            z[pos] += 1;
            if (z[pos] as usize) < k {
                break;
            }
            z[pos] = 0;
            pos += 1;
        }
        if pos == n {
            break;
        }
    }

    if total <= 0.0 {
        return Err(Error::validation(
            "prior weights underflowed to zero; offsets or lambda are too extreme",
        ));
    }
    for x in node.iter_mut().chain(edge_pair.iter_mut()) {
        *x /= total;
    }
    Ok(MarginalEstimates {
        node,
        edge_pair,
        num_classes: k,
        sample_count: 0,
    })
}

/// Writes recorded assignments as CSV, one sample per row, one column per
/// node.
pub fn write_samples_csv(mut w: impl Write, samples: &[Assignment]) -> std::io::Result<()> {
    for sample in samples {
        let mut line = String::with_capacity(sample.len() * 2);
        for (i, &c) in sample.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push_str(&c.to_string());
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3_offsets() -> Vec<f64> {
        // N=3, K=2, row-major (b_i0, b_i1).
        vec![0.4, -0.8, -0.2, 0.6, 1.0, 0.1]
    }

    #[test]
    fn conditional_uniform_when_flat() {
        let graph = SocialGraph::new(3, &[(0, 1), (1, 2)]).unwrap();
        let offsets = path3_offsets();
        let spec = MrfSpec::new(&graph, &offsets, 2, 0.0).unwrap();
        let p = gibbs_conditional(1, &[0, 0, 1], &spec);
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn conditional_uniform_for_isolated_node() {
        let graph = SocialGraph::new(3, &[(1, 2)]).unwrap();
        let offsets = path3_offsets();
        let spec = MrfSpec::new(&graph, &offsets, 2, 3.0).unwrap();
        let p = gibbs_conditional(0, &[0, 1, 1], &spec);
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn conditional_matches_direct_formula_on_an_edge() {
        let graph = SocialGraph::new(2, &[(0, 1)]).unwrap();
        let offsets = vec![0.7, -0.3, -0.5, 0.9];
        let lambda = 1.3;
        let spec = MrfSpec::new(&graph, &offsets, 2, lambda).unwrap();
        // Neighbor sits in class 1, so only class 1 is penalized.
        let p = gibbs_conditional(0, &[0, 1], &spec);
        let e1 = lambda * (offsets[1] - offsets[3]).powi(2);
        let w = [1.0, (-e1).exp()];
        let z = w[0] + w[1];
        assert!((p[0] - w[0] / z).abs() < 1e-15);
        assert!((p[1] - w[1] / z).abs() < 1e-15);
    }

    #[test]
    fn single_sample_without_smoothing_is_an_indicator() {
        let graph = SocialGraph::new(3, &[(0, 1), (1, 2)]).unwrap();
        let offsets = path3_offsets();
        let spec = MrfSpec::new(&graph, &offsets, 2, 1.0).unwrap();
        let samples = vec![vec![1u8, 0, 1]];
        let m = estimate_marginals(&samples, &spec, 0.0).unwrap();
        assert_eq!(m.node_row(0), &[0.0, 1.0]);
        assert_eq!(m.node_row(1), &[1.0, 0.0]);
        assert_eq!(m.edge_matrix(0), &[0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn huge_smoothing_flattens_marginals() {
        let graph = SocialGraph::new(2, &[(0, 1)]).unwrap();
        let offsets = vec![0.0, 1.0, 2.0, 3.0];
        let spec = MrfSpec::new(&graph, &offsets, 2, 1.0).unwrap();
        let samples = vec![vec![0u8, 0], vec![0, 0]];
        let m = estimate_marginals(&samples, &spec, 1e9).unwrap();
        for &p in m.node_row(0) {
            assert!((p - 0.5).abs() < 1e-6);
        }
        for &p in m.edge_matrix(0) {
            assert!((p - 0.25).abs() < 1e-6);
        }
        m.validate().unwrap();
    }

    #[test]
    fn empty_sample_list_is_an_error() {
        let graph = SocialGraph::new(2, &[(0, 1)]).unwrap();
        let offsets = vec![0.0; 4];
        let spec = MrfSpec::new(&graph, &offsets, 2, 1.0).unwrap();
        assert!(estimate_marginals(&[], &spec, 0.5).is_err());
    }

    #[test]
    fn partition_disconnected_cliques() {
        let graph =
            SocialGraph::new(6, &[(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5)]).unwrap();
        let p = partition_blocks(&graph, 2, 7).unwrap();
        assert_eq!(p.blocks(), &[vec![0, 1, 2], vec![3, 4, 5]]);
        assert!(p.cut_edges().is_empty());
    }

    #[test]
    fn partition_extremes() {
        let graph = SocialGraph::new(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let single = partition_blocks(&graph, 1, 0).unwrap();
        assert_eq!(single.num_blocks(), 1);
        assert_eq!(single.blocks()[0], vec![0, 1, 2, 3]);
        assert!(single.cut_edges().is_empty());

        let discrete = partition_blocks(&graph, 4, 0).unwrap();
        assert_eq!(discrete.num_blocks(), 4);
        assert!(discrete.blocks().iter().all(|b| b.len() == 1));
        assert_eq!(discrete.cut_edges().len(), graph.num_edges());
    }

    #[test]
    fn blocked_with_one_block_equals_unblocked() {
        let graph = SocialGraph::new(4, &[(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap();
        let offsets: Vec<f64> = (0..8).map(|i| (i as f64) * 0.3 - 1.0).collect();
        let spec = MrfSpec::new(&graph, &offsets, 2, 1.5).unwrap();
        let a = sample_prior(&spec, 25, 10, 2, 99).unwrap();
        let partition = BlockPartition::trivial(&graph);
        let b = sample_prior_blocked(&spec, &partition, 25, 10, 2, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn flat_prior_samples_look_uniform() {
        let graph = SocialGraph::new(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]).unwrap();
        let offsets = vec![0.5; 10];
        let spec = MrfSpec::new(&graph, &offsets, 2, 0.0).unwrap();
        let n_samples = 4000;
        let samples = sample_prior(&spec, n_samples, 20, 1, 5).unwrap();
        let m = estimate_marginals(&samples, &spec, 0.0).unwrap();
        // i.i.d. draws: se of a class frequency is sqrt(p(1-p)/S).
        let se = (0.25f64 / n_samples as f64).sqrt();
        for i in 0..5 {
            assert!(
                (m.node_row(i)[0] - 0.5).abs() < 3.0 * se,
                "node {i}: {:?}",
                m.node_row(i)
            );
        }
    }

    #[test]
    fn enumeration_on_a_single_edge() {
        let graph = SocialGraph::new(2, &[(0, 1)]).unwrap();
        let offsets = vec![1.0, 0.0, 0.0, 0.5];
        let lambda = 2.0;
        let spec = MrfSpec::new(&graph, &offsets, 2, lambda).unwrap();
        let m = enumerate_marginals(&spec).unwrap();
        // Four assignments with weights e^{-2·1}, 1, 1, e^{-2·0.25}.
        let w00 = (-lambda * 1.0f64).exp();
        let w11 = (-lambda * 0.25f64).exp();
        let z = w00 + w11 + 2.0;
        assert!((m.node_row(0)[0] - (w00 + 1.0) / z).abs() < 1e-12);
        assert!((m.edge_matrix(0)[0] - w00 / z).abs() < 1e-12);
        assert!((m.edge_matrix(0)[3] - w11 / z).abs() < 1e-12);
        m.validate().unwrap();
    }
}
