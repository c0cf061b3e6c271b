//! Independent numeric oracles for the three solver subproblems.
//!
//! The oracles never call solver code: the offset oracle is a dense grid
//! search, the local-weight oracle is projected gradient descent with
//! random restarts, and the edge-copy oracle is coordinate descent with
//! golden-section line searches.

use graphchoice::admm::{AdmmState, SolverConfig};
use graphchoice::model::{log1p_exp, sigmoid};
use graphchoice::{Dataset, Hyperparams, SocialGraph};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
}

/// A star instance: node 0 labeled, a few neighbors, randomized state.
struct OffsetInstance {
    data: Dataset,
    graph: SocialGraph,
    state: AdmmState,
    weight: f64,
}

fn random_offset_instance(seed: u64) -> OffsetInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let degree = rng.random_range(1..4usize);
    let n = degree + 1;
    let d = 3;
    let features: Vec<f64> = (0..n * d).map(|_| normal(&mut rng)).collect();
    let mut labels = vec![0i8; n];
    labels[0] = if rng.random::<bool>() { 1 } else { -1 };
    let data = Dataset::new(features, d, labels).unwrap();
    let edges: Vec<(usize, usize)> = (1..n).map(|j| (0, j)).collect();
    let graph = SocialGraph::new(n, &edges).unwrap();
    let hyper = Hyperparams {
        lambda: rng.random::<f64>() * 2.0,
        rho1: 1.0,
        rho2: 0.5 + rng.random::<f64>(),
    };
    let weight = 0.2 + 0.8 * rng.random::<f64>();
    let mut node_weights = vec![1.0; n];
    node_weights[0] = weight;
    let mut state = AdmmState::new(
        &data,
        &graph,
        &hyper,
        node_weights,
        vec![1.0; graph.num_edges()],
        None,
    )
    .unwrap();
    for g in &mut state.locals {
        *g = normal(&mut rng);
    }
    for c in &mut state.edge_copies {
        *c = 3.0 * normal(&mut rng);
    }
    for u in &mut state.duals_edge {
        *u = normal(&mut rng);
    }
    OffsetInstance {
        data,
        graph,
        state,
        weight,
    }
}

/// The offset subproblem objective, written independently.
fn offset_objective(inst: &OffsetInstance, b: f64) -> f64 {
    let d = inst.data.num_features();
    let x = inst.data.feature_row(0);
    let g = inst.state.local_row(0);
    let base: f64 = (0..d).map(|j| g[j] * x[j]).sum();
    let y = f64::from(inst.data.label(0));
    let mut v = inst.weight * log1p_exp(-y * (base + b));
    for e in 0..inst.graph.num_edges() {
        // Node 0 is the lower endpoint of every star edge: slot 2e.
        let c = inst.state.edge_copies[2 * e];
        let u = inst.state.duals_edge[2 * e];
        v += 0.5 * inst.state.rho2 * (b - c + u).powi(2);
    }
    v
}

#[test]
fn offset_update_beats_dense_grid() {
    let config = SolverConfig::default();
    for seed in 0..30 {
        let inst = random_offset_instance(seed);
        let solved = inst.state.update_offset(0, &inst.data, &config);

        let mut best_b = -20.0;
        let mut best_v = f64::INFINITY;
        // Dense grid over [-20, 20]: coarse pass at 1e-3, then 1e-5 around
        // the coarse winner.
        let coarse = 1e-3;
        let steps = (40.0 / coarse) as usize;
        for k in 0..=steps {
            let b = -20.0 + k as f64 * coarse;
            let v = offset_objective(&inst, b);
            if v < best_v {
                best_v = v;
                best_b = b;
            }
        }
        let fine = 1e-5;
        let start = best_b - coarse;
        for k in 0..=(2.0 * coarse / fine) as usize {
            let b = start + k as f64 * fine;
            let v = offset_objective(&inst, b);
            if v < best_v {
                best_v = v;
                best_b = b;
            }
        }

        assert!(
            (solved - best_b).abs() < 1e-4,
            "seed {seed}: solved {solved} vs grid {best_b}"
        );
        assert!(
            offset_objective(&inst, solved) <= best_v + 1e-8,
            "seed {seed}: objective {} vs grid {}",
            offset_objective(&inst, solved),
            best_v
        );
    }
}

#[test]
fn offset_update_first_order_check() {
    let config = SolverConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for seed in 0..20 {
        let inst = random_offset_instance(seed);
        let solved = inst.state.update_offset(0, &inst.data, &config);
        let f0 = offset_objective(&inst, solved);
        for _ in 0..20 {
            let dir: f64 = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let eps = 1e-6;
            let deriv = (offset_objective(&inst, solved + eps * dir) - f0) / eps;
            assert!(deriv >= -1e-6, "seed {seed}: directional derivative {deriv}");
        }
    }
}

struct LocalInstance {
    data: Dataset,
    state: AdmmState,
    weight: f64,
    anchor: Vec<f64>,
}

fn random_local_instance(seed: u64) -> LocalInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
    let d = 3;
    let features: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
    let labels = vec![if rng.random::<bool>() { 1i8 } else { -1 }];
    let data = Dataset::new(features, d, labels).unwrap();
    let graph = SocialGraph::edgeless(1);
    let hyper = Hyperparams {
        lambda: 0.0,
        rho1: 0.5 + rng.random::<f64>(),
        rho2: 1.0,
    };
    let weight = 0.2 + 0.8 * rng.random::<f64>();
    let mut state = AdmmState::new(&data, &graph, &hyper, vec![weight], vec![], None).unwrap();
    for w in &mut state.weights {
        *w = normal(&mut rng);
    }
    for r in &mut state.duals_node {
        *r = normal(&mut rng);
    }
    state.offsets[0] = normal(&mut rng);
    for g in &mut state.locals {
        *g = normal(&mut rng);
    }
    let anchor: Vec<f64> = (0..d).map(|j| state.weights[j] + state.duals_node[j]).collect();
    LocalInstance {
        data,
        state,
        weight,
        anchor,
    }
}

fn local_objective(inst: &LocalInstance, g: &[f64]) -> f64 {
    let x = inst.data.feature_row(0);
    let y = f64::from(inst.data.label(0));
    let score: f64 = g.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + inst.state.offsets[0];
    let prox: f64 = g.iter().zip(&inst.anchor).map(|(gi, ai)| (gi - ai).powi(2)).sum();
    inst.weight * log1p_exp(-y * score) + 0.5 * inst.state.rho1 * prox
}

fn local_gradient_norm(inst: &LocalInstance, g: &[f64]) -> f64 {
    let x = inst.data.feature_row(0);
    let y = f64::from(inst.data.label(0));
    let score: f64 = g.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + inst.state.offsets[0];
    let s = sigmoid(-y * score);
    (0..g.len())
        .map(|j| (-inst.weight * s * y * x[j] + inst.state.rho1 * (g[j] - inst.anchor[j])).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Plain gradient descent with backtracking, restarted from random points.
fn local_oracle(inst: &LocalInstance, rng: &mut ChaCha8Rng) -> f64 {
    let d = 3;
    let mut best = f64::INFINITY;
    for _ in 0..5 {
        let mut g: Vec<f64> = (0..d).map(|_| 2.0 * normal(rng)).collect();
        for _ in 0..3000 {
            let x = inst.data.feature_row(0);
            let y = f64::from(inst.data.label(0));
            let score: f64 = g.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + inst.state.offsets[0];
            let s = sigmoid(-y * score);
            let grad: Vec<f64> = (0..d)
                .map(|j| -inst.weight * s * y * x[j] + inst.state.rho1 * (g[j] - inst.anchor[j]))
                .collect();
            let norm: f64 = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < 1e-10 {
                break;
            }
            let f0 = local_objective(inst, &g);
            let mut step = 1.0;
            loop {
                let cand: Vec<f64> = g.iter().zip(&grad).map(|(gi, gr)| gi - step * gr).collect();
                if local_objective(inst, &cand) < f0 || step < 1e-12 {
                    g = cand;
                    break;
                }
                step *= 0.5;
            }
        }
        best = best.min(local_objective(inst, &g));
    }
    best
}

#[test]
fn local_update_matches_descent_oracle() {
    let config = SolverConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(123);
    for seed in 0..30 {
        let inst = random_local_instance(seed);
        let solved = inst.state.update_local(0, &inst.data, &config).unwrap();
        let norm = local_gradient_norm(&inst, &solved);
        assert!(norm <= 1e-8, "seed {seed}: gradient norm {norm}");
        let oracle = local_oracle(&inst, &mut rng);
        let value = local_objective(&inst, &solved);
        assert!(
            value <= oracle + 1e-8,
            "seed {seed}: value {value} vs oracle {oracle}"
        );
    }
}

#[test]
fn local_update_first_order_check() {
    let config = SolverConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(321);
    for seed in 0..20 {
        let inst = random_local_instance(seed);
        let solved = inst.state.update_local(0, &inst.data, &config).unwrap();
        let f0 = local_objective(&inst, &solved);
        for _ in 0..20 {
            let mut dir: Vec<f64> = (0..3).map(|_| normal(&mut rng)).collect();
            let norm: f64 = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            for v in &mut dir {
                *v /= norm;
            }
            let eps = 1e-6;
            let moved: Vec<f64> = solved.iter().zip(&dir).map(|(s, u)| s + eps * u).collect();
            let deriv = (local_objective(&inst, &moved) - f0) / eps;
            assert!(deriv >= -1e-6, "seed {seed}: directional derivative {deriv}");
        }
    }
}

struct EdgeInstance {
    state: AdmmState,
    lambda_q: f64,
    targets: (f64, f64),
}

fn random_edge_instance(seed: u64) -> EdgeInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let data = Dataset::new(vec![0.0, 0.0], 1, vec![1, -1]).unwrap();
    let graph = SocialGraph::new(2, &[(0, 1)]).unwrap();
    let hyper = Hyperparams {
        lambda: rng.random::<f64>() * 5.0,
        rho1: 1.0,
        rho2: 0.5 + rng.random::<f64>(),
    };
    let q = rng.random::<f64>();
    let mut state =
        AdmmState::new(&data, &graph, &hyper, vec![1.0, 1.0], vec![q], None).unwrap();
    state.offsets = vec![3.0 * normal(&mut rng), 3.0 * normal(&mut rng)];
    state.duals_edge = vec![normal(&mut rng), normal(&mut rng)];
    let targets = (
        state.offsets[0] + state.duals_edge[0],
        state.offsets[1] + state.duals_edge[1],
    );
    EdgeInstance {
        lambda_q: hyper.lambda * q,
        targets,
        state,
    }
}

fn edge_objective(inst: &EdgeInstance, c_lo: f64, c_hi: f64) -> f64 {
    inst.lambda_q * (c_lo - c_hi).powi(2)
        + 0.5 * inst.state.rho2 * ((inst.targets.0 - c_lo).powi(2) + (inst.targets.1 - c_hi).powi(2))
}

#[test]
fn edge_copies_match_coordinate_descent_oracle() {
    for seed in 0..100 {
        let inst = random_edge_instance(seed);
        let (c_lo, c_hi) = inst.state.update_edge_copies(0, (0, 1));

        // Oracle: coordinate descent with exact one-dimensional
        // minimizations (each coordinate's slice is a parabola whose vertex
        // is elementary), iterated to a fixed point. A different route to
        // the minimizer than the solver's simultaneous two-variable solve.
        let rho2 = inst.state.rho2;
        let coupling = 2.0 * inst.lambda_q;
        let mut p = 0.0;
        let mut q = 0.0;
        for _ in 0..20_000 {
            let p_new = (rho2 * inst.targets.0 + coupling * q) / (rho2 + coupling);
            let q_new = (rho2 * inst.targets.1 + coupling * p_new) / (rho2 + coupling);
            let moved = (p_new - p).abs().max((q_new - q).abs());
            p = p_new;
            q = q_new;
            if moved < 1e-16 {
                break;
            }
        }

        assert!(
            (c_lo - p).abs() < 1e-9 && (c_hi - q).abs() < 1e-9,
            "seed {seed}: ({c_lo},{c_hi}) vs oracle ({p},{q})"
        );
        assert!(edge_objective(&inst, c_lo, c_hi) <= edge_objective(&inst, p, q) + 1e-12);
    }
}
