//! Monte Carlo EM for the latent-class model.
//!
//! Each iteration alternates:
//!
//! - **E-step** — estimate prior marginals of the class field (Gibbs
//!   sampling, blocked for parallelism, or exact enumeration on small
//!   graphs), then fold in the observed choices to get per-node posteriors
//!   q(z_i=t) and per-edge same-class posteriors q(z_i=z_j=t).
//! - **M-step** — one weighted consensus fit per class, warm-started from
//!   the previous parameters; node posteriors weight the losses, edge
//!   posteriors weight the penalty.
//!
//! The Gibbs sample count grows over EM iterations on a caller-provided
//! nondecreasing schedule.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::admm::{admm_fit, weighted_objective, SolverConfig};
use crate::data::{is_labeled, Dataset, Label};
use crate::error::{Error, Result};
use crate::gibbs::{
    enumerate_marginals, estimate_marginals, partition_blocks, sample_prior_blocked,
    BlockPartition, MarginalEstimates, MrfSpec,
};
use crate::graph::SocialGraph;
use crate::model::{choice_probability, decide, sigmoid, Hyperparams, LcgrParams, LlgrParams};
use crate::seeds;

/// Node and edge posteriors assembled by an E-step. `node` is row-major
/// N×K; `edge_same` is row-major E×K holding q(z_i = z_j = t).
#[derive(Debug, Clone)]
pub struct PosteriorEstimates {
    node: Vec<f64>,
    edge_same: Vec<f64>,
    num_classes: usize,
}

impl PosteriorEstimates {
    pub fn new(node: Vec<f64>, edge_same: Vec<f64>, num_classes: usize) -> Result<Self> {
        let estimates = Self {
            node,
            edge_same,
            num_classes,
        };
        estimates.validate()?;
        Ok(estimates)
    }

    /// Degenerate posteriors for a single class: everything is 1.
    pub fn unit(num_nodes: usize, num_edges: usize) -> Self {
        Self {
            node: vec![1.0; num_nodes],
            edge_same: vec![1.0; num_edges],
            num_classes: 1,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_nodes(&self) -> usize {
        self.node.len() / self.num_classes
    }

    pub fn num_edges(&self) -> usize {
        self.edge_same.len() / self.num_classes
    }

    pub fn node_row(&self, node: usize) -> &[f64] {
        let k = self.num_classes;
        &self.node[node * k..(node + 1) * k]
    }

    /// Same-class posterior vector of an edge, length K.
    pub fn edge_row(&self, edge: usize) -> &[f64] {
        let k = self.num_classes;
        &self.edge_same[edge * k..(edge + 1) * k]
    }

    pub fn node_weights_for_class(&self, class: usize) -> Vec<f64> {
        (0..self.num_nodes()).map(|i| self.node_row(i)[class]).collect()
    }

    pub fn edge_weights_for_class(&self, class: usize) -> Vec<f64> {
        (0..self.num_edges()).map(|e| self.edge_row(e)[class]).collect()
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..self.num_nodes() {
            let row = self.node_row(i);
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 || row.iter().any(|&p| !(0.0..=1.0 + 1e-9).contains(&p)) {
                return Err(Error::validation(format!(
                    "node {i} posterior is not a distribution: {row:?}"
                )));
            }
        }
        for e in 0..self.num_edges() {
            let row = self.edge_row(e);
            let sum: f64 = row.iter().sum();
            if sum > 1.0 + 1e-9 || row.iter().any(|&p| !(0.0..=1.0 + 1e-9).contains(&p)) {
                return Err(Error::validation(format!(
                    "edge {e} same-class posterior out of range: {row:?}"
                )));
            }
        }
        Ok(())
    }
}

/// How the E-step obtains prior marginals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum EStepMode {
    /// Blocked Gibbs sampling with the configured schedule.
    Gibbs,
    /// Exact enumeration; only for small graphs.
    Enumerate,
}

#[derive(Debug, Clone)]
pub struct McemConfig {
    pub num_classes: usize,
    pub hyper: Hyperparams,
    /// Recorded Gibbs samples per EM iteration; must be nondecreasing. The
    /// last entry repeats for later iterations.
    pub schedule: Vec<usize>,
    pub burn_in: usize,
    pub thin: usize,
    pub smoothing: f64,
    /// Number of sampler blocks; 1 means unblocked.
    pub blocks: usize,
    pub max_em_iters: usize,
    /// Relative change threshold on the expected loss, applied over a
    /// window of three iterations.
    pub em_tol: f64,
    pub solver: SolverConfig,
    pub rng_seed: u64,
    pub e_step: EStepMode,
    /// Starting parameters; default is small seeded Gaussian weights and
    /// zero offsets (an all-zero start is a fixed point of class symmetry).
    pub init: Option<LcgrParams>,
}

impl McemConfig {
    pub fn new(num_classes: usize, lambda: f64) -> Result<Self> {
        Self {
            num_classes,
            hyper: Hyperparams::new(lambda)?,
            schedule: (1..=20).map(|k| 500 * k).collect(),
            burn_in: 200,
            thin: 1,
            smoothing: 0.5,
            blocks: 1,
            max_em_iters: 20,
            em_tol: 1e-4,
            solver: SolverConfig::default(),
            rng_seed: 0,
            e_step: EStepMode::Gibbs,
            init: None,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        if self.num_classes == 0 {
            return Err(Error::validation("need at least one class"));
        }
        self.hyper.validated()?;
        self.solver.validate()?;
        if self.schedule.is_empty() {
            return Err(Error::validation("sample schedule is empty"));
        }
        if self.schedule.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::validation(
                "sample schedule must be nondecreasing across EM iterations",
            ));
        }
        if self.schedule.iter().any(|&s| s == 0) {
            return Err(Error::validation("sample counts must be >= 1"));
        }
        if self.max_em_iters == 0 {
            return Err(Error::validation("max_em_iters must be >= 1"));
        }
        if !(self.em_tol > 0.0) {
            return Err(Error::validation("em_tol must be positive"));
        }
        if !(self.smoothing >= 0.0) {
            return Err(Error::validation("smoothing must be >= 0"));
        }
        if self.blocks == 0 {
            return Err(Error::validation("block count must be >= 1"));
        }
        Ok(self)
    }

    pub fn samples_at(&self, em_iter: usize) -> usize {
        self.schedule[em_iter.min(self.schedule.len() - 1)]
    }
}

/// P(y_i | x_i, z_i = t) for a labeled node.
pub fn class_likelihood(node: usize, class: usize, params: &LcgrParams, data: &Dataset) -> f64 {
    let y = data.label(node);
    assert!(
        is_labeled(y),
        "class_likelihood called on unlabeled node {node}; unlabeled nodes take the uniform-likelihood path"
    );
    choice_probability(params.score(data, node, class), y)
}

fn likelihood_or_one(node: usize, class: usize, params: &LcgrParams, data: &Dataset) -> f64 {
    if is_labeled(data.label(node)) {
        class_likelihood(node, class, params, data)
    } else {
        1.0
    }
}

/// Posterior over node i's class given its own choice: likelihood × prior
/// marginal, normalized. Unlabeled nodes keep their prior row.
pub fn node_posterior(
    node: usize,
    prior_row: &[f64],
    params: &LcgrParams,
    data: &Dataset,
) -> Vec<f64> {
    let k = prior_row.len();
    let mut post: Vec<f64> = (0..k)
        .map(|t| likelihood_or_one(node, t, params, data) * prior_row[t])
        .collect();
    let total: f64 = post.iter().sum();
    debug_assert!(total > 0.0, "zero posterior mass at node {node}");
    for p in &mut post {
        *p /= total;
    }
    post
}

/// Same-class posterior of an edge: for each class t,
/// likelihood(i,t)·likelihood(j,t)·P(z_i=t, z_j=t) over the total mass of
/// the full K×K table. Off-diagonal mass enters only the normalizer.
pub fn edge_posterior(
    endpoints: (usize, usize),
    prior_matrix: &[f64],
    num_classes: usize,
    params: &LcgrParams,
    data: &Dataset,
) -> Vec<f64> {
    let (i, j) = endpoints;
    let k = num_classes;
    let like_i: Vec<f64> = (0..k).map(|m| likelihood_or_one(i, m, params, data)).collect();
    let like_j: Vec<f64> = (0..k).map(|q| likelihood_or_one(j, q, params, data)).collect();
    let mut denom = 0.0;
    for m in 0..k {
        for q in 0..k {
            denom += like_i[m] * like_j[q] * prior_matrix[m * k + q];
        }
    }
    debug_assert!(denom > 0.0, "zero pair posterior mass on edge ({i},{j})");
    (0..k)
        .map(|t| like_i[t] * like_j[t] * prior_matrix[t * k + t] / denom)
        .collect()
}

/// The expected loss the M-step minimizes: posterior-weighted logistic
/// losses plus the posterior-weighted penalty. Decomposes as the sum over
/// classes of [`weighted_objective`] on each class slice.
pub fn expected_nll(
    params: &LcgrParams,
    posteriors: &PosteriorEstimates,
    data: &Dataset,
    graph: &SocialGraph,
    lambda: f64,
) -> Result<f64> {
    if posteriors.num_classes() != params.num_classes() {
        return Err(Error::dimension("posterior/parameter class count mismatch"));
    }
    let mut total = 0.0;
    for t in 0..params.num_classes() {
        let slice = params.class_slice(t);
        total += weighted_objective(
            &slice,
            data,
            graph,
            lambda,
            &posteriors.node_weights_for_class(t),
            &posteriors.edge_weights_for_class(t),
        )?;
    }
    Ok(total)
}

/// Assembles posteriors from explicitly provided prior marginals. This is
/// the injection point for exact enumeration priors; the sampling E-step
/// goes through here too.
pub fn e_step_with_prior(
    params: &LcgrParams,
    data: &Dataset,
    graph: &SocialGraph,
    prior: &MarginalEstimates,
) -> Result<PosteriorEstimates> {
    let k = prior.num_classes();
    if k != params.num_classes() {
        return Err(Error::dimension("prior/parameter class count mismatch"));
    }
    let n = data.num_nodes();
    let node: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| node_posterior(i, prior.node_row(i), params, data))
        .collect();
    let edge_same: Vec<f64> = graph
        .edges()
        .par_iter()
        .enumerate()
        .flat_map_iter(|(e, &pair)| edge_posterior(pair, prior.edge_matrix(e), k, params, data))
        .collect();
    PosteriorEstimates::new(node, edge_same, k)
}

/// One E-step: prior marginals per the configured mode, then posterior
/// assembly. `em_iter` selects the sample budget and derives the sampling
/// seed.
pub fn e_step(
    params: &LcgrParams,
    data: &Dataset,
    graph: &SocialGraph,
    config: &McemConfig,
    em_iter: usize,
) -> Result<PosteriorEstimates> {
    let partition = build_partition(graph, config)?;
    e_step_inner(params, data, graph, config, em_iter, &partition)
}

fn build_partition(graph: &SocialGraph, config: &McemConfig) -> Result<BlockPartition> {
    if config.blocks <= 1 {
        Ok(BlockPartition::trivial(graph))
    } else {
        partition_blocks(
            graph,
            config.blocks.min(graph.num_nodes()),
            seeds::derive(config.rng_seed, SALT_PARTITION),
        )
    }
}

const SALT_PARTITION: u64 = 0x70;
const SALT_ESTEP: u64 = 0xe5;
const SALT_INIT: u64 = 0x11;

fn e_step_inner(
    params: &LcgrParams,
    data: &Dataset,
    graph: &SocialGraph,
    config: &McemConfig,
    em_iter: usize,
    partition: &BlockPartition,
) -> Result<PosteriorEstimates> {
    let k = config.num_classes;
    if k == 1 {
        return Ok(PosteriorEstimates::unit(data.num_nodes(), graph.num_edges()));
    }
    let prior = if config.hyper.lambda == 0.0 {
        // A flat field: the prior is exactly uniform, no sampling needed.
        MarginalEstimates::uniform(data.num_nodes(), graph.num_edges(), k)
    } else {
        let spec = MrfSpec::new(graph, &params.offsets, k, config.hyper.lambda)?;
        match config.e_step {
            EStepMode::Enumerate => enumerate_marginals(&spec)?,
            EStepMode::Gibbs => {
                let samples = sample_prior_blocked(
                    &spec,
                    partition,
                    config.samples_at(em_iter),
                    config.burn_in,
                    config.thin,
                    seeds::derive2(config.rng_seed, SALT_ESTEP, em_iter as u64),
                )?;
                estimate_marginals(&samples, &spec, config.smoothing)?
            }
        }
    };
    e_step_with_prior(params, data, graph, &prior)
}

/// One M-step: an independent weighted consensus fit per class,
/// warm-started from the previous parameters. A class whose node weights
/// are all zero keeps its warm start untouched; a class whose fit fails to
/// improve on the warm start keeps the warm start too, so the expected
/// loss never increases under fixed posteriors.
pub fn m_step(
    posteriors: &PosteriorEstimates,
    data: &Dataset,
    graph: &SocialGraph,
    hyper: &Hyperparams,
    solver: &SolverConfig,
    warm_start: &LcgrParams,
) -> Result<(LcgrParams, bool)> {
    let k = warm_start.num_classes();
    if posteriors.num_classes() != k {
        return Err(Error::dimension("posterior/parameter class count mismatch"));
    }
    let fits: Vec<Result<(LlgrParams, bool)>> = (0..k)
        .into_par_iter()
        .map(|t| {
            let node_weights = posteriors.node_weights_for_class(t);
            let edge_weights = posteriors.edge_weights_for_class(t);
            let warm = warm_start.class_slice(t);
            if node_weights.iter().all(|&w| w == 0.0) {
                return Ok((warm, true));
            }
            let outcome = admm_fit(
                data,
                graph,
                hyper,
                &node_weights,
                &edge_weights,
                solver,
                Some(&warm),
            )?;
            let fitted_obj = weighted_objective(
                &outcome.params,
                data,
                graph,
                hyper.lambda,
                &node_weights,
                &edge_weights,
            )?;
            let warm_obj = weighted_objective(
                &warm,
                data,
                graph,
                hyper.lambda,
                &node_weights,
                &edge_weights,
            )?;
            if fitted_obj <= warm_obj {
                Ok((outcome.params, outcome.converged))
            } else {
                Ok((warm, outcome.converged))
            }
        })
        .collect();

    let mut params = warm_start.clone();
    let mut all_converged = true;
    for (t, fit) in fits.into_iter().enumerate() {
        let (slice, converged) = fit?;
        params.set_class_slice(t, &slice);
        all_converged &= converged;
    }
    Ok((params, all_converged))
}

/// One EM iteration in the fit history.
#[derive(Debug, Clone, Copy)]
pub struct McemIteration {
    pub iter: usize,
    /// Expected loss at the incoming parameters under this iteration's
    /// posteriors.
    pub q_before: f64,
    /// Expected loss after the M-step under the same posteriors.
    pub q_after: f64,
    pub samples: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct McemOutcome {
    pub params: LcgrParams,
    pub history: Vec<McemIteration>,
    pub converged: bool,
}

/// Seeded default initialization: small Gaussian weights, zero offsets.
pub fn default_init(
    num_classes: usize,
    num_features: usize,
    num_nodes: usize,
    rng_seed: u64,
) -> LcgrParams {
    let mut params = LcgrParams::zeros(num_classes, num_features, num_nodes);
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(rng_seed, SALT_INIT));
    for w in &mut params.weights {
        *w = 0.1 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
    }
    params
}

/// Full Monte Carlo EM loop. Deterministic given the config seed;
/// non-convergence within `max_em_iters` is flagged, never fatal.
pub fn mcem_fit(data: &Dataset, graph: &SocialGraph, config: &McemConfig) -> Result<McemOutcome> {
    let config = config.clone().validated()?;
    let k = config.num_classes;
    let mut params = match &config.init {
        Some(p) => {
            p.validate(data.num_features(), data.num_nodes())?;
            p.clone()
        }
        None => default_init(k, data.num_features(), data.num_nodes(), config.rng_seed),
    };
    if params.num_classes() != k {
        return Err(Error::dimension("init class count mismatch"));
    }

    let partition = build_partition(graph, &config)?;
    let start = std::time::Instant::now();
    let mut history: Vec<McemIteration> = Vec::new();
    let mut converged = false;

    for em_iter in 0..config.max_em_iters {
        let posteriors = e_step_inner(&params, data, graph, &config, em_iter, &partition)?;
        let q_before = expected_nll(&params, &posteriors, data, graph, config.hyper.lambda)?;
        let (new_params, _inner_converged) = m_step(
            &posteriors,
            data,
            graph,
            &config.hyper,
            &config.solver,
            &params,
        )?;
        let q_after = expected_nll(&new_params, &posteriors, data, graph, config.hyper.lambda)?;
        params = new_params;
        history.push(McemIteration {
            iter: em_iter,
            q_before,
            q_after,
            samples: if k == 1 || config.hyper.lambda == 0.0 || config.e_step == EStepMode::Enumerate
            {
                0
            } else {
                config.samples_at(em_iter)
            },
            seconds: start.elapsed().as_secs_f64(),
        });

        // Windowed relative-change stop on the post-M-step expected loss.
        if history.len() >= 4 {
            let tail = &history[history.len() - 4..];
            let stalled = tail.windows(2).all(|w| {
                let prev = w[0].q_after;
                let next = w[1].q_after;
                (next - prev).abs() / prev.abs().max(1.0) < config.em_tol
            });
            if stalled {
                converged = true;
                break;
            }
        }
    }

    Ok(McemOutcome {
        params,
        history,
        converged,
    })
}

/// A scored node: mixture probability of choosing +1 and the thresholded
/// label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub node: usize,
    pub p_plus: f64,
    pub label: Label,
}

/// Posterior-mixture scoring: P(y_i=+1) = Σ_t q(z_i=t)·σ(W_tᵀx_i + b_it).
pub fn predict(
    params: &LcgrParams,
    posteriors: &PosteriorEstimates,
    data: &Dataset,
    nodes: &[usize],
) -> Vec<Prediction> {
    nodes
        .iter()
        .map(|&i| {
            let q = posteriors.node_row(i);
            let p_plus: f64 = (0..params.num_classes())
                .map(|t| q[t] * sigmoid(params.score(data, i, t)))
                .sum();
            Prediction {
                node: i,
                p_plus,
                label: decide(p_plus),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_instance() -> (Dataset, SocialGraph) {
        let data = Dataset::new(
            vec![0.5, -0.2, -1.0, 0.3, 0.8, 0.8],
            2,
            vec![1, -1, 0],
        )
        .unwrap();
        let graph = SocialGraph::new(3, &[(0, 1), (1, 2)]).unwrap();
        (data, graph)
    }

    #[test]
    fn class_likelihood_closed_forms() {
        let (data, _) = small_instance();
        let params = LcgrParams::zeros(2, 2, 3);
        assert_eq!(class_likelihood(0, 0, &params, &data), 0.5);
        assert_eq!(class_likelihood(1, 1, &params, &data), 0.5);

        let mut shifted = LcgrParams::zeros(2, 2, 3);
        let zero_x = Dataset::new(vec![0.0; 6], 2, vec![1, -1, 0]).unwrap();
        shifted.offsets[0] = 3f64.ln(); // node 0, class 0
        let p = class_likelihood(0, 0, &shifted, &zero_x);
        assert!((p - 0.75).abs() < 1e-15);
    }

    #[test]
    fn class_likelihood_composes_with_choice_probability() {
        let (data, _) = small_instance();
        let mut params = LcgrParams::zeros(2, 2, 3);
        params.weights = vec![0.7, -1.2, 0.4, 2.0];
        params.offsets = vec![0.1, -0.5, 0.9, 0.0, -0.3, 0.6];
        for t in 0..2 {
            for i in [0usize, 1] {
                let direct = class_likelihood(i, t, &params, &data);
                let composed = choice_probability(params.score(&data, i, t), data.label(i));
                assert!((direct - composed).abs() < 1e-15);
            }
        }
    }

    #[test]
    #[should_panic]
    fn class_likelihood_rejects_unlabeled() {
        let (data, _) = small_instance();
        let params = LcgrParams::zeros(2, 2, 3);
        class_likelihood(2, 0, &params, &data);
    }

    #[test]
    fn node_posterior_trivial_cases() {
        let (data, _) = small_instance();
        // Zero parameters: equal likelihoods cancel, prior survives.
        let params = LcgrParams::zeros(2, 2, 3);
        let post = node_posterior(0, &[0.3, 0.7], &params, &data);
        assert!((post[0] - 0.3).abs() < 1e-15);
        assert!((post[1] - 0.7).abs() < 1e-15);

        // Single class.
        let one = LcgrParams::zeros(1, 2, 3);
        let post = node_posterior(0, &[1.0], &one, &data);
        assert_eq!(post, vec![1.0]);

        // Uniform prior: likelihoods survive. Build likelihoods (.75, .25).
        let zero_x = Dataset::new(vec![0.0; 6], 2, vec![1, -1, 0]).unwrap();
        let mut params = LcgrParams::zeros(2, 2, 3);
        params.offsets[0] = 3f64.ln();
        params.offsets[1] = -(3f64.ln());
        let post = node_posterior(0, &[0.5, 0.5], &params, &zero_x);
        assert!((post[0] - 0.75).abs() < 1e-12, "{post:?}");
        assert!((post[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn edge_posterior_trivial_cases() {
        let (_, graph) = small_instance();
        let all_unlabeled = Dataset::new(vec![0.0; 6], 2, vec![0, 0, 0]).unwrap();
        let params = LcgrParams::zeros(2, 2, 3);
        // Unit likelihoods: the same-class entries are the prior diagonal.
        let prior = [0.4, 0.1, 0.2, 0.3];
        let post = edge_posterior((0, 1), &prior, 2, &params, &all_unlabeled);
        assert!((post[0] - 0.4).abs() < 1e-15);
        assert!((post[1] - 0.3).abs() < 1e-15);

        // Full symmetry: uniform pairwise prior and equal likelihoods.
        let (data, _) = small_instance();
        let uniform = [0.25; 4];
        let post = edge_posterior((0, 1), &uniform, 2, &params, &data);
        assert!((post[0] - 0.25).abs() < 1e-15);
        assert!((post[1] - 0.25).abs() < 1e-15);
        let _ = graph;
    }

    #[test]
    fn edge_posterior_matches_two_node_enumeration() {
        // Exact Bayes over the four joint assignments of one edge.
        let data = Dataset::new(vec![0.6, -0.4], 1, vec![1, -1]).unwrap();
        let graph = SocialGraph::new(2, &[(0, 1)]).unwrap();
        let lambda = 0.9;
        let mut params = LcgrParams::zeros(2, 1, 2);
        params.weights = vec![1.1, -0.7];
        params.offsets = vec![0.4, -0.2, -0.8, 0.5];

        let spec = MrfSpec::new(&graph, &params.offsets, 2, lambda).unwrap();
        let prior = enumerate_marginals(&spec).unwrap();
        let post = edge_posterior((0, 1), prior.edge_matrix(0), 2, &params, &data);

        // Independent direct enumeration of P(z0=m, z1=q | y) over m,q.
        let mut joint = [[0.0f64; 2]; 2];
        let mut total = 0.0;
        for m in 0..2 {
            for q in 0..2 {
                let energy = if m == q {
                    lambda * (params.offset(0, m) - params.offset(1, m)).powi(2)
                } else {
                    0.0
                };
                let w = (-energy).exp()
                    * class_likelihood(0, m, &params, &data)
                    * class_likelihood(1, q, &params, &data);
                joint[m][q] = w;
                total += w;
            }
        }
        for t in 0..2 {
            assert!(
                (post[t] - joint[t][t] / total).abs() < 1e-12,
                "class {t}: {} vs {}",
                post[t],
                joint[t][t] / total
            );
        }
    }

    #[test]
    fn expected_nll_collapses_to_weighted_objective() {
        let (data, graph) = small_instance();
        let params = {
            let mut p = LcgrParams::zeros(1, 2, 3);
            p.weights = vec![0.4, -0.9];
            p.offsets = vec![0.3, -0.1, 0.8];
            p
        };
        let post = PosteriorEstimates::unit(3, 2);
        let lambda = 1.4;
        let q = expected_nll(&params, &post, &data, &graph, lambda).unwrap();
        let direct = weighted_objective(
            &params.class_slice(0),
            &data,
            &graph,
            lambda,
            &[1.0; 3],
            &[1.0; 2],
        )
        .unwrap();
        assert_eq!(q, direct);
    }

    #[test]
    fn expected_nll_decomposes_over_classes() {
        let (data, graph) = small_instance();
        let mut params = LcgrParams::zeros(2, 2, 3);
        params.weights = vec![0.7, -1.2, 0.4, 2.0];
        params.offsets = vec![0.1, -0.5, 0.9, 0.0, -0.3, 0.6];
        let node = vec![0.6, 0.4, 0.2, 0.8, 0.5, 0.5];
        let edge_same = vec![0.3, 0.45, 0.1, 0.2];
        let post = PosteriorEstimates::new(node, edge_same, 2).unwrap();
        let lambda = 0.7;
        let q = expected_nll(&params, &post, &data, &graph, lambda).unwrap();
        let mut by_class = 0.0;
        for t in 0..2 {
            by_class += weighted_objective(
                &params.class_slice(t),
                &data,
                &graph,
                lambda,
                &post.node_weights_for_class(t),
                &post.edge_weights_for_class(t),
            )
            .unwrap();
        }
        assert!((q - by_class).abs() < 1e-12);
    }

    #[test]
    fn flat_prior_estep_returns_normalized_likelihoods() {
        let (data, graph) = small_instance();
        let mut config = McemConfig::new(2, 0.0).unwrap();
        config.rng_seed = 3;
        let mut params = LcgrParams::zeros(2, 2, 3);
        params.weights = vec![0.9, -0.4, -1.1, 0.2];
        let post = e_step(&params, &data, &graph, &config, 0).unwrap();
        for i in 0..2 {
            let l0 = class_likelihood(i, 0, &params, &data);
            let l1 = class_likelihood(i, 1, &params, &data);
            let row = post.node_row(i);
            assert!((row[0] - l0 / (l0 + l1)).abs() < 1e-12);
            assert!((row[1] - l1 / (l0 + l1)).abs() < 1e-12);
        }
        // Unlabeled node keeps the uniform prior.
        assert_eq!(post.node_row(2), &[0.5, 0.5]);
        post.validate().unwrap();
    }

    #[test]
    fn mstep_with_unit_posteriors_reproduces_llgr_exactly() {
        let (data, graph) = small_instance();
        let hyper = Hyperparams::new(0.6).unwrap();
        let solver = SolverConfig {
            max_iters: 200,
            ..Default::default()
        };
        let warm = LcgrParams::zeros(1, 2, 3);
        let post = PosteriorEstimates::unit(3, 2);
        let (params, _) = m_step(&post, &data, &graph, &hyper, &solver, &warm).unwrap();
        let llgr = crate::admm::llgr_fit(&data, &graph, &hyper, &solver, None).unwrap();
        assert_eq!(params.class_slice(0).weights, llgr.params.weights);
        assert_eq!(params.class_slice(0).offsets, llgr.params.offsets);
    }

    #[test]
    fn mstep_skips_empty_class() {
        let (data, graph) = small_instance();
        let hyper = Hyperparams::new(0.6).unwrap();
        let solver = SolverConfig {
            max_iters: 100,
            ..Default::default()
        };
        let mut warm = LcgrParams::zeros(2, 2, 3);
        warm.weights = vec![0.0, 0.0, 5.0, -5.0];
        warm.offsets[1] = 9.0; // node 0, class 1
        let node = vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        let edge_same = vec![1.0, 0.0, 1.0, 0.0];
        let post = PosteriorEstimates::new(node, edge_same, 2).unwrap();
        let (params, _) = m_step(&post, &data, &graph, &hyper, &solver, &warm).unwrap();
        // Class 1 had zero mass everywhere: untouched.
        assert_eq!(params.weights_row(1), &[5.0, -5.0]);
        assert_eq!(params.offset(0, 1), 9.0);
    }

    #[test]
    fn k1_fit_equals_llgr_trajectory() {
        let (data, graph) = small_instance();
        let mut config = McemConfig::new(1, 0.5).unwrap();
        config.max_em_iters = 1;
        config.solver.max_iters = 150;
        let init = default_init(1, 2, 3, config.rng_seed);
        config.init = Some(init.clone());
        let out = mcem_fit(&data, &graph, &config).unwrap();

        let llgr = crate::admm::llgr_fit(
            &data,
            &graph,
            &config.hyper,
            &config.solver,
            Some(&init.class_slice(0)),
        )
        .unwrap();
        assert_eq!(out.params.class_slice(0).weights, llgr.params.weights);
        assert_eq!(out.params.class_slice(0).offsets, llgr.params.offsets);
    }

    #[test]
    fn prediction_rules() {
        let data = Dataset::new(vec![0.5, -0.5, 1.0, 0.2], 2, vec![0, 0]).unwrap();
        // Single class reduces to plain scoring.
        let mut one = LcgrParams::zeros(1, 2, 2);
        one.weights = vec![1.0, 2.0];
        one.offsets = vec![0.3, -0.7];
        let post = PosteriorEstimates::unit(2, 0);
        let preds = predict(&one, &post, &data, &[0, 1]);
        for p in &preds {
            let want = sigmoid(one.score(&data, p.node, 0));
            assert!((p.p_plus - want).abs() < 1e-15);
        }

        // Mirror symmetry with even posteriors: exact ties go to +1.
        let mut two = LcgrParams::zeros(2, 2, 2);
        two.weights = vec![1.5, -0.4, -1.5, 0.4];
        let node = vec![0.5, 0.5, 0.5, 0.5];
        let post = PosteriorEstimates::new(node, vec![], 2).unwrap();
        let preds = predict(&two, &post, &data, &[0, 1]);
        for p in &preds {
            assert!((p.p_plus - 0.5).abs() < 1e-15);
            assert_eq!(p.label, 1);
        }

        // Hand-built mixture probability.
        let mut params = LcgrParams::zeros(2, 2, 2);
        params.weights = vec![0.9, -0.2, -0.1, 1.1];
        params.offsets = vec![0.25, -0.5, 0.0, 0.75];
        let node = vec![0.6, 0.4, 0.3, 0.7];
        let post = PosteriorEstimates::new(node.clone(), vec![], 2).unwrap();
        let preds = predict(&params, &post, &data, &[1]);
        let want = node[2] * sigmoid(params.score(&data, 1, 0))
            + node[3] * sigmoid(params.score(&data, 1, 1));
        assert!((preds[0].p_plus - want).abs() < 1e-15);
    }

    #[test]
    fn config_rejects_decreasing_schedule() {
        let mut config = McemConfig::new(2, 1.0).unwrap();
        config.schedule = vec![500, 400];
        assert!(config.validated().is_err());
    }
}
