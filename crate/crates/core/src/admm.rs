//! Consensus ADMM for the weighted graph-regularized logistic objective
//!
//! ```text
//!   min_{W,b}  Σ_i w_i · log(1 + e^{−y_i (Wᵀx_i + b_i)})
//!            + λ Σ_{(i,j)∈E} q_ij (b_i − b_j)²
//! ```
//!
//! Each node i keeps a local copy `g_i` of the global weights and each
//! undirected edge keeps one copy of the offset per endpoint, so every
//! subproblem touches a single node's (or edge's) data and the per-node and
//! per-edge updates within one iteration can run on any number of workers
//! without changing the result.
//!
//! Unweighted training (LLGR) is the all-ones instance; the latent-class
//! M-step passes posterior node and edge weights instead.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;

use crate::data::{is_labeled, Dataset};
use crate::error::{Error, Result};
use crate::graph::SocialGraph;
use crate::model::{dot, log1p_exp, sigmoid, Hyperparams, LlgrParams};

/// Iteration limits and tolerances for the outer loop and both inner
/// subproblem solvers.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub tol_primal: f64,
    pub tol_dual: f64,
    pub newton_max_iters: usize,
    pub newton_tol: f64,
    pub bisection_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tol_primal: 1e-4,
            tol_dual: 1e-4,
            newton_max_iters: 50,
            newton_tol: 1e-9,
            bisection_tol: 1e-7,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || self.newton_max_iters == 0 {
            return Err(Error::validation("iteration counts must be >= 1"));
        }
        for (name, v) in [
            ("tol_primal", self.tol_primal),
            ("tol_dual", self.tol_dual),
            ("newton_tol", self.newton_tol),
            ("bisection_tol", self.bisection_tol),
        ] {
            if !(v > 0.0) {
                return Err(Error::validation(format!("{name}={v} must be positive")));
            }
        }
        Ok(())
    }
}

/// Value of the weighted objective at `(W, b)`.
///
/// Unobserved nodes contribute no loss regardless of their weight; they
/// still appear in the penalty through their offsets.
pub fn weighted_objective(
    params: &LlgrParams,
    data: &Dataset,
    graph: &SocialGraph,
    lambda: f64,
    node_weights: &[f64],
    edge_weights: &[f64],
) -> Result<f64> {
    params.validate(data.num_features(), data.num_nodes())?;
    check_weights(data, graph, node_weights, edge_weights)?;
    let mut total = 0.0;
    for i in 0..data.num_nodes() {
        let y = data.label(i);
        if !is_labeled(y) || node_weights[i] == 0.0 {
            continue;
        }
        let margin = f64::from(y) * params.score(data, i);
        total += node_weights[i] * log1p_exp(-margin);
    }
    for (e, &(u, v)) in graph.edges().iter().enumerate() {
        let diff = params.offsets[u] - params.offsets[v];
        total += lambda * edge_weights[e] * diff * diff;
    }
    if !total.is_finite() {
        return Err(Error::validation(format!("objective is non-finite: {total}")));
    }
    Ok(total)
}

fn check_weights(
    data: &Dataset,
    graph: &SocialGraph,
    node_weights: &[f64],
    edge_weights: &[f64],
) -> Result<()> {
    if node_weights.len() != data.num_nodes() {
        return Err(Error::dimension(format!(
            "{} node weights for N={}",
            node_weights.len(),
            data.num_nodes()
        )));
    }
    if edge_weights.len() != graph.num_edges() {
        return Err(Error::dimension(format!(
            "{} edge weights for |E|={}",
            edge_weights.len(),
            graph.num_edges()
        )));
    }
    if graph.num_nodes() != data.num_nodes() {
        return Err(Error::dimension(format!(
            "graph has {} nodes, dataset has {}",
            graph.num_nodes(),
            data.num_nodes()
        )));
    }
    for &w in node_weights.iter().chain(edge_weights) {
        if !w.is_finite() || w < 0.0 {
            return Err(Error::validation(format!("weight {w} must be finite and >= 0")));
        }
    }
    Ok(())
}

/// Full solver state. Edge copies and their duals live in "slots": slot
/// `2e` belongs to the lower endpoint of edge `e`, slot `2e+1` to the
/// higher one.
#[derive(Debug, Clone)]
pub struct AdmmState {
    pub weights: Vec<f64>,
    pub offsets: Vec<f64>,
    /// Per-node weight copies, row-major N×d.
    pub locals: Vec<f64>,
    /// Per-slot offset copies, length 2|E|.
    pub edge_copies: Vec<f64>,
    /// Per-slot scaled duals, length 2|E|.
    pub duals_edge: Vec<f64>,
    /// Per-node scaled duals, row-major N×d.
    pub duals_node: Vec<f64>,
    pub node_weights: Vec<f64>,
    pub edge_weights: Vec<f64>,
    pub lambda: f64,
    pub rho1: f64,
    pub rho2: f64,
    num_features: usize,
    /// Slots owned by each node, ascending.
    owned_slots: Vec<Vec<usize>>,
    /// Loss weight actually applied per node: node_weights masked by label.
    loss_weights: Vec<f64>,
}

/// Residuals of one completed iteration.
#[derive(Debug, Clone, Copy)]
pub struct IterationResiduals {
    pub primal: f64,
    pub dual: f64,
}

/// One row of the per-iteration diagnostics history.
#[derive(Debug, Clone, Copy)]
pub struct IterationStats {
    pub iter: usize,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub seconds: f64,
}

/// Fit result: consensus parameters plus convergence diagnostics.
#[derive(Debug, Clone)]
pub struct AdmmOutcome {
    pub params: LlgrParams,
    pub converged: bool,
    pub iters: usize,
    pub history: Vec<IterationStats>,
}

impl AdmmState {
    pub fn new(
        data: &Dataset,
        graph: &SocialGraph,
        hyper: &Hyperparams,
        node_weights: Vec<f64>,
        edge_weights: Vec<f64>,
        init: Option<&LlgrParams>,
    ) -> Result<Self> {
        hyper.validated()?;
        check_weights(data, graph, &node_weights, &edge_weights)?;
        for &w in node_weights.iter().chain(&edge_weights) {
            if w > 1.0 + 1e-9 {
                return Err(Error::validation(format!("weight {w} exceeds 1")));
            }
        }
        // Posterior weights are probabilities; rounding can push them a hair
        // outside [0,1], so floor at zero.
        let node_weights: Vec<f64> = node_weights.into_iter().map(|w| w.max(0.0)).collect();
        let edge_weights: Vec<f64> = edge_weights.into_iter().map(|w| w.max(0.0)).collect();

        let n = data.num_nodes();
        let d = data.num_features();
        let (weights, offsets) = match init {
            Some(p) => {
                p.validate(d, n)?;
                (p.weights.clone(), p.offsets.clone())
            }
            None => (vec![0.0; d], vec![0.0; n]),
        };

        let mut owned_slots = vec![Vec::new(); n];
        for (e, &(u, v)) in graph.edges().iter().enumerate() {
            owned_slots[u].push(2 * e);
            owned_slots[v].push(2 * e + 1);
        }
        let loss_weights = (0..n)
            .map(|i| {
                if is_labeled(data.label(i)) {
                    node_weights[i]
                } else {
                    0.0
                }
            })
            .collect();

        Ok(Self {
            weights,
            offsets,
            locals: vec![0.0; n * d],
            edge_copies: vec![0.0; 2 * graph.num_edges()],
            duals_edge: vec![0.0; 2 * graph.num_edges()],
            duals_node: vec![0.0; n * d],
            node_weights,
            edge_weights,
            lambda: hyper.lambda,
            rho1: hyper.rho1,
            rho2: hyper.rho2,
            num_features: d,
            owned_slots,
            loss_weights,
        })
    }

    pub fn local_row(&self, node: usize) -> &[f64] {
        let d = self.num_features;
        &self.locals[node * d..(node + 1) * d]
    }

    fn dual_row(&self, node: usize) -> &[f64] {
        let d = self.num_features;
        &self.duals_node[node * d..(node + 1) * d]
    }

    /// Consensus weight update: the mean over nodes of `g_i − r_i`, taken
    /// from the current (pre-update) copies and duals. Summation order is
    /// fixed so the result is identical for any worker count.
    pub fn update_global_weights(&self) -> Vec<f64> {
        let d = self.num_features;
        let n = self.offsets.len();
        let mut mean = vec![0.0; d];
        for i in 0..n {
            let g = self.local_row(i);
            let r = self.dual_row(i);
            for j in 0..d {
                mean[j] += g[j] - r[j];
            }
        }
        let scale = 1.0 / n as f64;
        for m in &mut mean {
            *m *= scale;
        }
        mean
    }

    /// Offset subproblem for one node:
    ///
    /// ```text
    ///   min_b  w_i·log(1+e^{−y_i(g_iᵀx_i + b)}) + (ρ₂/2) Σ_slots (b − c + u)²
    /// ```
    ///
    /// Solved by bisection on the derivative. With no incident edges the
    /// quadratic anchor vanishes: a weighted node then has no finite
    /// minimizer (the loss decreases forever in one direction) and an
    /// unweighted one has a flat objective, so both keep their current
    /// offset and the node is learned through the weight consensus alone.
    pub fn update_offset(&self, node: usize, data: &Dataset, config: &SolverConfig) -> f64 {
        let slots = &self.owned_slots[node];
        if slots.is_empty() {
            return self.offsets[node];
        }
        let centers: Vec<f64> = slots
            .iter()
            .map(|&s| self.edge_copies[s] - self.duals_edge[s])
            .collect();
        let w = self.loss_weights[node];
        if w == 0.0 {
            return centers.iter().sum::<f64>() / centers.len() as f64;
        }

        let y = f64::from(data.label(node));
        let base = dot(self.local_row(node), data.feature_row(node));
        let rho2 = self.rho2;
        let derivative = |b: f64| -> f64 {
            let quad: f64 = centers.iter().map(|&c| b - c).sum::<f64>() * rho2;
            quad - w * y * sigmoid(-y * (base + b))
        };

        let min_c = centers.iter().cloned().fold(f64::INFINITY, f64::min);
        let max_c = centers.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let slack = w / rho2 + 1.0;
        let mut lo = min_c - slack;
        let mut hi = max_c + slack;
        let mut expansions = 0;
        while derivative(lo) >= 0.0 && expansions < 100 {
            lo -= hi - lo;
            expansions += 1;
        }
        while derivative(hi) <= 0.0 && expansions < 100 {
            hi += hi - lo;
            expansions += 1;
        }
        while hi - lo > config.bisection_tol {
            let mid = 0.5 * (lo + hi);
            if derivative(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Local weight subproblem for one node:
    ///
    /// ```text
    ///   min_g  w_i·log(1+e^{−y_i(gᵀx_i + b_i)}) + (ρ₁/2)‖W − g + r_i‖²
    /// ```
    ///
    /// Smooth and strongly convex; solved by damped Newton with
    /// backtracking. The Hessian is ρ₁I plus a rank-one term, so the Newton
    /// direction comes from a Sherman–Morrison solve.
    pub fn update_local(
        &self,
        node: usize,
        data: &Dataset,
        config: &SolverConfig,
    ) -> Result<Vec<f64>> {
        let d = self.num_features;
        // Anchor of the proximal term: W + r_i.
        let anchor: Vec<f64> = (0..d)
            .map(|j| self.weights[j] + self.dual_row(node)[j])
            .collect();
        let w = self.loss_weights[node];
        let x = data.feature_row(node);
        let x_norm2 = dot(x, x);
        if w == 0.0 || x_norm2 == 0.0 {
            return Ok(anchor);
        }

        let y = f64::from(data.label(node));
        let b = self.offsets[node];
        let rho1 = self.rho1;
        let value = |g: &[f64]| -> f64 {
            let margin = y * (dot(g, x) + b);
            let prox: f64 = g.iter().zip(&anchor).map(|(gi, ai)| (gi - ai).powi(2)).sum();
            w * log1p_exp(-margin) + 0.5 * rho1 * prox
        };

        let mut g = self.local_row(node).to_vec();
        let mut grad = vec![0.0; d];
        for _ in 0..config.newton_max_iters {
            let margin = y * (dot(&g, x) + b);
            let s = sigmoid(-margin);
            let mut grad_norm2 = 0.0;
            for j in 0..d {
                grad[j] = -w * s * y * x[j] + rho1 * (g[j] - anchor[j]);
                grad_norm2 += grad[j] * grad[j];
            }
            if !grad_norm2.is_finite() {
                return Err(Error::Solver {
                    node,
                    msg: "non-finite gradient in local weight update".into(),
                });
            }
            if grad_norm2.sqrt() <= config.newton_tol {
                break;
            }
            // Newton direction for H = κ·xxᵀ + ρ₁I via Sherman–Morrison.
            let kappa = w * s * sigmoid(margin);
            let gx = dot(&grad, x);
            let coef = kappa * gx / (rho1 * (rho1 + kappa * x_norm2));
            let mut dir = vec![0.0; d];
            let mut slope = 0.0;
            for j in 0..d {
                dir[j] = -(grad[j] / rho1 - coef * x[j]);
                slope += grad[j] * dir[j];
            }
            let f0 = value(&g);
            let mut step = 1.0;
            let mut candidate: Vec<f64> = g.iter().zip(&dir).map(|(gi, di)| gi + di).collect();
            let mut halvings = 0;
            while value(&candidate) > f0 + 1e-4 * step * slope && halvings < 60 {
                step *= 0.5;
                halvings += 1;
                for j in 0..d {
                    candidate[j] = g[j] + step * dir[j];
                }
            }
            g = candidate;
            if !g.iter().all(|v| v.is_finite()) {
                return Err(Error::Solver {
                    node,
                    msg: "non-finite iterate in local weight update".into(),
                });
            }
        }
        Ok(g)
    }

    /// Edge-copy subproblem: the unique stationary point of
    ///
    /// ```text
    ///   λ q_e (c_lo − c_hi)² + (ρ₂/2)[(b_lo + u_lo − c_lo)² + (b_hi + u_hi − c_hi)²]
    /// ```
    ///
    /// The 2×2 first-order system diagonalizes in the sum/difference basis.
    pub fn update_edge_copies(&self, edge: usize, endpoints: (usize, usize)) -> (f64, f64) {
        let (lo, hi) = endpoints;
        let a = self.offsets[lo] + self.duals_edge[2 * edge];
        let e = self.offsets[hi] + self.duals_edge[2 * edge + 1];
        let gamma = 2.0 * self.lambda * self.edge_weights[edge] / self.rho2;
        let sum = a + e;
        let diff = (a - e) / (1.0 + 2.0 * gamma);
        (0.5 * (sum + diff), 0.5 * (sum - diff))
    }

    /// Dual ascent: `r_i += W − g_i` per node, `u += b_owner − c` per slot.
    pub fn update_duals(&mut self, graph: &SocialGraph) {
        let d = self.num_features;
        let weights = &self.weights;
        self.duals_node
            .par_chunks_mut(d)
            .zip(self.locals.par_chunks(d))
            .for_each(|(r, g)| {
                for j in 0..d {
                    r[j] += weights[j] - g[j];
                }
            });
        let offsets = &self.offsets;
        let copies = &self.edge_copies;
        self.duals_edge
            .par_iter_mut()
            .enumerate()
            .for_each(|(slot, u)| {
                let (lo, hi) = graph.edges()[slot / 2];
                let owner = if slot % 2 == 0 { lo } else { hi };
                *u += offsets[owner] - copies[slot];
            });
    }

    /// One full iteration in algorithm order: global weights, offsets,
    /// local weights, edge copies, duals. Node- and edge-level updates run
    /// data-parallel; every reduction has a fixed order, so results are
    /// bit-identical for any worker count.
    pub fn iterate(&mut self, data: &Dataset, graph: &SocialGraph, config: &SolverConfig) -> Result<IterationResiduals> {
        let d = self.num_features;
        let prev_weights = self.weights.clone();
        let new_weights = self.update_global_weights();

        // Offsets depend on the pre-update local copies, not on W.
        let new_offsets: Vec<f64> = (0..self.offsets.len())
            .into_par_iter()
            .map(|i| self.update_offset(i, data, config))
            .collect();
        self.weights = new_weights;
        self.offsets = new_offsets;

        let new_locals: Vec<Vec<f64>> = (0..self.offsets.len())
            .into_par_iter()
            .map(|i| self.update_local(i, data, config))
            .collect::<Result<_>>()?;
        for (i, row) in new_locals.iter().enumerate() {
            self.locals[i * d..(i + 1) * d].copy_from_slice(row);
        }

        let new_copies: Vec<(f64, f64)> = graph
            .edges()
            .par_iter()
            .enumerate()
            .map(|(e, &pair)| self.update_edge_copies(e, pair))
            .collect();
        // Max over slots of |c_new − c_old|; max is exact, so a parallel
        // reduce stays deterministic.
        let copy_change = new_copies
            .par_iter()
            .enumerate()
            .map(|(e, &(c_lo, c_hi))| {
                let old_lo = self.edge_copies[2 * e];
                let old_hi = self.edge_copies[2 * e + 1];
                (c_lo - old_lo).abs().max((c_hi - old_hi).abs())
            })
            .reduce(|| 0.0, f64::max);
        for (e, (c_lo, c_hi)) in new_copies.into_iter().enumerate() {
            self.edge_copies[2 * e] = c_lo;
            self.edge_copies[2 * e + 1] = c_hi;
        }

        self.update_duals(graph);

        let weight_change = self
            .weights
            .iter()
            .zip(&prev_weights)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let dual = (self.rho1 * weight_change).max(self.rho2 * copy_change);

        let weights = &self.weights;
        let locals = &self.locals;
        let weight_gap = (0..self.offsets.len())
            .into_par_iter()
            .map(|i| {
                locals[i * d..(i + 1) * d]
                    .iter()
                    .zip(weights)
                    .map(|(g, w)| (w - g).abs())
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max);
        let offsets = &self.offsets;
        let copies = &self.edge_copies;
        let offset_gap = graph
            .edges()
            .par_iter()
            .enumerate()
            .map(|(e, &(lo, hi))| {
                (offsets[lo] - copies[2 * e])
                    .abs()
                    .max((offsets[hi] - copies[2 * e + 1]).abs())
            })
            .reduce(|| 0.0, f64::max);

        Ok(IterationResiduals {
            primal: weight_gap.max(offset_gap),
            dual,
        })
    }

    pub fn params(&self) -> LlgrParams {
        LlgrParams {
            weights: self.weights.clone(),
            offsets: self.offsets.clone(),
        }
    }
}

/// Runs the consensus solver until both residuals drop below their
/// tolerances or `max_iters` is reached. On non-convergence the
/// best-objective iterate seen is returned, flagged, never a panic.
pub fn admm_fit(
    data: &Dataset,
    graph: &SocialGraph,
    hyper: &Hyperparams,
    node_weights: &[f64],
    edge_weights: &[f64],
    config: &SolverConfig,
    init: Option<&LlgrParams>,
) -> Result<AdmmOutcome> {
    config.validate()?;
    let mut state = AdmmState::new(
        data,
        graph,
        hyper,
        node_weights.to_vec(),
        edge_weights.to_vec(),
        init,
    )?;

    let start = Instant::now();
    let mut history = Vec::new();
    let mut best: Option<(f64, LlgrParams)> = None;
    let mut converged = false;
    let mut iters = 0;

    for iter in 0..config.max_iters {
        let residuals = state.iterate(data, graph, config)?;
        let params = state.params();
        let objective = weighted_objective(&params, data, graph, hyper.lambda, node_weights, edge_weights)?;
        if best.as_ref().map_or(true, |(obj, _)| objective < *obj) {
            best = Some((objective, params));
        }
        history.push(IterationStats {
            iter,
            objective,
            primal_residual: residuals.primal,
            dual_residual: residuals.dual,
            seconds: start.elapsed().as_secs_f64(),
        });
        iters = iter + 1;
        if residuals.primal <= config.tol_primal && residuals.dual <= config.tol_dual {
            converged = true;
            break;
        }
    }

    let params = if converged {
        state.params()
    } else {
        best.map(|(_, p)| p).unwrap_or_else(|| state.params())
    };
    Ok(AdmmOutcome {
        params,
        converged,
        iters,
        history,
    })
}

/// Unweighted fit: the plain LLGR model.
pub fn llgr_fit(
    data: &Dataset,
    graph: &SocialGraph,
    hyper: &Hyperparams,
    config: &SolverConfig,
    init: Option<&LlgrParams>,
) -> Result<AdmmOutcome> {
    let node_weights = vec![1.0; data.num_nodes()];
    let edge_weights = vec![1.0; graph.num_edges()];
    admm_fit(data, graph, hyper, &node_weights, &edge_weights, config, init)
}

/// Diagnostics CSV: `iter,objective,primal_residual,dual_residual,seconds`.
pub fn write_diagnostics_csv(mut w: impl Write, history: &[IterationStats]) -> std::io::Result<()> {
    writeln!(w, "iter,objective,primal_residual,dual_residual,seconds")?;
    for row in history {
        writeln!(
            w,
            "{},{},{},{},{:.6}",
            row.iter, row.objective, row.primal_residual, row.dual_residual, row.seconds
        )?;
    }
    Ok(())
}
