//! Evaluation harness: masked k-fold cross-validation, λ sweeps against a
//! fixed held-out test set, and regularization-path snapshots.
//!
//! Held-out nodes are never removed from the graph; their labels are
//! recoded as unobserved during training and scored afterwards against the
//! original labels.

use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::admm::{llgr_fit, SolverConfig};
use crate::baselines::{fit_latent_class, fit_logistic, predict_baseline, BaselineModel};
use crate::data::{is_labeled, Dataset, Label};
use crate::error::{Error, Result};
use crate::graph::SocialGraph;
use crate::mcem::{e_step, mcem_fit, predict, McemConfig, PosteriorEstimates};
use crate::model::{decide, sigmoid, Hyperparams};
use crate::seeds;

const SALT_FOLDS: u64 = 0xf0;

/// Stratified fold assignment over the labeled nodes. Unlabeled nodes
/// belong to no fold.
#[derive(Debug, Clone)]
pub struct CvPlan {
    pub num_folds: usize,
    fold_of: Vec<Option<usize>>,
}

impl CvPlan {
    /// Stratifies by label so no fold degenerates to a single class.
    pub fn stratified(labels: &[Label], num_folds: usize, rng_seed: u64) -> Result<Self> {
        if num_folds == 0 {
            return Err(Error::validation("need at least one fold"));
        }
        let labeled = labels.iter().filter(|&&y| is_labeled(y)).count();
        if labeled < num_folds {
            return Err(Error::validation(format!(
                "{labeled} labeled nodes cannot fill {num_folds} folds"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(rng_seed, SALT_FOLDS));
        let mut fold_of = vec![None; labels.len()];
        let mut next_fold = 0usize;
        for target in [1i8, -1] {
            let mut members: Vec<usize> = (0..labels.len())
                .filter(|&i| labels[i] == target)
                .collect();
            for i in (1..members.len()).rev() {
                let j = rng.random_range(0..=i);
                members.swap(i, j);
            }
            // Continue dealing round-robin across strata so fold sizes stay
            // balanced even with skewed labels.
            for node in members {
                fold_of[node] = Some(next_fold);
                next_fold = (next_fold + 1) % num_folds;
            }
        }
        Ok(Self { num_folds, fold_of })
    }

    pub fn fold_nodes(&self, fold: usize) -> Vec<usize> {
        self.fold_of
            .iter()
            .enumerate()
            .filter(|(_, f)| **f == Some(fold))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn fold_of(&self, node: usize) -> Option<usize> {
        self.fold_of[node]
    }
}

/// Fraction of correct predictions over the masked nodes.
pub fn accuracy(predicted: &[Label], truth: &[Label], eval_nodes: &[usize]) -> Result<f64> {
    if eval_nodes.is_empty() {
        return Err(Error::Empty("empty evaluation mask".into()));
    }
    if predicted.len() != truth.len() {
        return Err(Error::dimension("prediction/truth length mismatch"));
    }
    let mut correct = 0usize;
    for &i in eval_nodes {
        if !is_labeled(truth[i]) {
            return Err(Error::validation(format!(
                "evaluation mask selects unlabeled node {i}"
            )));
        }
        if predicted[i] == truth[i] {
            correct += 1;
        }
    }
    Ok(correct as f64 / eval_nodes.len() as f64)
}

/// A trainable model configuration, one per experiment column.
#[derive(Debug, Clone)]
pub enum ModelSpec {
    Logistic {
        l2: f64,
    },
    LatentClass {
        num_classes: usize,
        em_iters: usize,
        rng_seed: u64,
    },
    Llgr {
        hyper: Hyperparams,
        solver: SolverConfig,
    },
    Lcgr {
        config: McemConfig,
    },
}

impl ModelSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ModelSpec::Logistic { .. } => "logistic",
            ModelSpec::LatentClass { .. } => "latent_class",
            ModelSpec::Llgr { .. } => "llgr",
            ModelSpec::Lcgr { .. } => "lcgr",
        }
    }

    pub fn lambda(&self) -> f64 {
        match self {
            ModelSpec::Logistic { .. } | ModelSpec::LatentClass { .. } => 0.0,
            ModelSpec::Llgr { hyper, .. } => hyper.lambda,
            ModelSpec::Lcgr { config } => config.hyper.lambda,
        }
    }

    /// Copy with the regularization strength replaced; baselines ignore λ.
    pub fn with_lambda(&self, lambda: f64) -> ModelSpec {
        let mut spec = self.clone();
        match &mut spec {
            ModelSpec::Llgr { hyper, .. } => hyper.lambda = lambda,
            ModelSpec::Lcgr { config } => config.hyper.lambda = lambda,
            _ => {}
        }
        spec
    }

    /// Trains on `data` as given (mask beforehand) and predicts labels for
    /// every node; callers score whichever subset they held out.
    pub fn train_and_predict(&self, data: &Dataset, graph: &SocialGraph) -> Result<Vec<Label>> {
        match self {
            ModelSpec::Logistic { l2 } => {
                let fit = fit_logistic(data, *l2)?;
                let model = BaselineModel::Logistic(fit.model);
                Ok((0..data.num_nodes())
                    .map(|i| predict_baseline(&model, data.feature_row(i)).1)
                    .collect())
            }
            ModelSpec::LatentClass {
                num_classes,
                em_iters,
                rng_seed,
            } => {
                let fit = fit_latent_class(data, *num_classes, *em_iters, *rng_seed)?;
                let model = BaselineModel::LatentClass(fit.model);
                Ok((0..data.num_nodes())
                    .map(|i| predict_baseline(&model, data.feature_row(i)).1)
                    .collect())
            }
            ModelSpec::Llgr { hyper, solver } => {
                let outcome = llgr_fit(data, graph, hyper, solver, None)?;
                Ok((0..data.num_nodes())
                    .map(|i| decide(sigmoid(outcome.params.score(data, i))))
                    .collect())
            }
            ModelSpec::Lcgr { config } => {
                let outcome = mcem_fit(data, graph, config)?;
                // Score through a final E-step: masked nodes are unlabeled
                // here, so their posterior is the prior marginal.
                let posteriors = e_step(
                    &outcome.params,
                    data,
                    graph,
                    config,
                    outcome.history.len().saturating_sub(1),
                )?;
                let nodes: Vec<usize> = (0..data.num_nodes()).collect();
                Ok(predict(&outcome.params, &posteriors, data, &nodes)
                    .into_iter()
                    .map(|p| p.label)
                    .collect())
            }
        }
    }
}

/// One fold's outcome; `accuracy` is None when training failed.
#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub fold: usize,
    pub accuracy: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct CvResult {
    pub folds: Vec<FoldOutcome>,
    pub mean_accuracy: f64,
    pub failed_folds: usize,
}

impl CvResult {
    pub fn std_accuracy(&self) -> f64 {
        let accs: Vec<f64> = self.folds.iter().filter_map(|f| f.accuracy).collect();
        if accs.len() < 2 {
            return 0.0;
        }
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        (accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / accs.len() as f64).sqrt()
    }
}

/// Masked k-fold CV: each fold's labels are recoded to unobserved, the
/// model trains on the rest with the full graph intact, and the held-out
/// nodes are scored against their original labels. Failed folds carry the
/// error and are excluded from the mean.
pub fn kfold_masked_cv(
    spec: &ModelSpec,
    data: &Dataset,
    graph: &SocialGraph,
    plan: &CvPlan,
) -> Result<CvResult> {
    let folds: Vec<FoldOutcome> = (0..plan.num_folds)
        .into_par_iter()
        .map(|fold| {
            let held_out = plan.fold_nodes(fold);
            let masked = data.masked(&held_out);
            match spec
                .train_and_predict(&masked, graph)
                .and_then(|pred| accuracy(&pred, data.labels(), &held_out))
            {
                Ok(acc) => FoldOutcome {
                    fold,
                    accuracy: Some(acc),
                    error: None,
                },
                Err(e) => FoldOutcome {
                    fold,
                    accuracy: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let accs: Vec<f64> = folds.iter().filter_map(|f| f.accuracy).collect();
    if accs.is_empty() {
        return Err(Error::Empty("every fold failed".into()));
    }
    Ok(CvResult {
        mean_accuracy: accs.iter().sum::<f64>() / accs.len() as f64,
        failed_folds: plan.num_folds - accs.len(),
        folds,
    })
}

#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub model: String,
    pub lambda: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub best: SweepEntry,
    pub table: Vec<SweepEntry>,
}

/// Trains the model once per λ on the masked data and scores the fixed
/// held-out set. Ties break toward the smaller λ.
pub fn lambda_sweep(
    spec: &ModelSpec,
    lambdas: &[f64],
    data: &Dataset,
    graph: &SocialGraph,
    test_nodes: &[usize],
) -> Result<SweepResult> {
    if lambdas.is_empty() {
        return Err(Error::Empty("empty lambda grid".into()));
    }
    let mut grid = lambdas.to_vec();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let masked = data.masked(test_nodes);

    let table: Vec<SweepEntry> = grid
        .par_iter()
        .map(|&lambda| {
            let pred = spec.with_lambda(lambda).train_and_predict(&masked, graph)?;
            Ok(SweepEntry {
                model: spec.kind_name().to_string(),
                lambda,
                accuracy: accuracy(&pred, data.labels(), test_nodes)?,
            })
        })
        .collect::<Result<_>>()?;

    let mut best = table[0].clone();
    for entry in &table[1..] {
        if entry.accuracy > best.accuracy {
            best = entry.clone();
        }
    }
    Ok(SweepResult { best, table })
}

/// Draws a test set of labeled nodes, independent of any generator stream.
pub fn sample_test_nodes(
    labels: &[Label],
    test_size: usize,
    rng_seed: u64,
) -> Result<Vec<usize>> {
    let mut labeled: Vec<usize> = (0..labels.len()).filter(|&i| is_labeled(labels[i])).collect();
    if labeled.len() < test_size {
        return Err(Error::validation(format!(
            "cannot hold out {test_size} of {} labeled nodes",
            labeled.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(rng_seed, 0x7e57));
    for i in (1..labeled.len()).rev() {
        let j = rng.random_range(0..=i);
        labeled.swap(i, j);
    }
    let mut test: Vec<usize> = labeled.into_iter().take(test_size).collect();
    test.sort_unstable();
    Ok(test)
}

/// Node-level snapshot of a trained latent-class fit at one λ.
#[derive(Debug, Clone)]
pub struct PathSnapshot {
    pub lambda: f64,
    pub num_classes: usize,
    /// Row-major N×K class membership probabilities.
    pub membership: Vec<f64>,
    /// Row-major N×K offsets.
    pub offsets: Vec<f64>,
}

impl PathSnapshot {
    pub fn num_nodes(&self) -> usize {
        self.membership.len() / self.num_classes
    }

    /// Membership rows as posteriors (edge part empty); fails if any row
    /// is not a distribution.
    pub fn to_posteriors(&self) -> Result<PosteriorEstimates> {
        PosteriorEstimates::new(self.membership.clone(), Vec::new(), self.num_classes)
    }

    /// CSV: `node_id,prob_class_0..,b_class_0..`.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        let k = self.num_classes;
        let mut header = String::from("node_id");
        for t in 0..k {
            header.push_str(&format!(",prob_class_{t}"));
        }
        for t in 0..k {
            header.push_str(&format!(",b_class_{t}"));
        }
        writeln!(w, "{header}")?;
        for i in 0..self.num_nodes() {
            let mut line = i.to_string();
            for t in 0..k {
                line.push_str(&format!(",{}", self.membership[i * k + t]));
            }
            for t in 0..k {
                line.push_str(&format!(",{}", self.offsets[i * k + t]));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn parse_csv(text: &str, lambda: f64) -> Result<PathSnapshot> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Empty("empty snapshot".into()))?;
        let cols = header.split(',').count();
        if cols < 3 || (cols - 1) % 2 != 0 {
            return Err(Error::Parse {
                path: "<snapshot>".into(),
                line: 1,
                msg: format!("unexpected column count {cols}"),
            });
        }
        let k = (cols - 1) / 2;
        let mut membership = Vec::new();
        let mut offsets = Vec::new();
        for (idx, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != cols {
                return Err(Error::Parse {
                    path: "<snapshot>".into(),
                    line: idx + 2,
                    msg: "ragged row".into(),
                });
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse().map_err(|e| Error::Parse {
                    path: "<snapshot>".into(),
                    line: idx + 2,
                    msg: format!("bad float {s:?}: {e}"),
                })
            };
            for t in 0..k {
                membership.push(parse(fields[1 + t])?);
            }
            for t in 0..k {
                offsets.push(parse(fields[1 + k + t])?);
            }
        }
        Ok(PathSnapshot {
            lambda,
            num_classes: k,
            membership,
            offsets,
        })
    }
}

/// Trains the latent-class model at each λ and snapshots node memberships
/// and offsets for plotting.
pub fn regularization_path(
    data: &Dataset,
    graph: &SocialGraph,
    lambdas: &[f64],
    template: &McemConfig,
) -> Result<Vec<PathSnapshot>> {
    if lambdas.is_empty() {
        return Err(Error::Empty("empty lambda list".into()));
    }
    lambdas
        .iter()
        .map(|&lambda| {
            let mut config = template.clone();
            config.hyper.lambda = lambda;
            let config = config.validated()?;
            let outcome = mcem_fit(data, graph, &config)?;
            let posteriors = e_step(
                &outcome.params,
                data,
                graph,
                &config,
                outcome.history.len().saturating_sub(1),
            )?;
            let k = config.num_classes;
            let n = data.num_nodes();
            let mut membership = Vec::with_capacity(n * k);
            for i in 0..n {
                membership.extend_from_slice(posteriors.node_row(i));
            }
            Ok(PathSnapshot {
                lambda,
                num_classes: k,
                membership,
                offsets: outcome.params.offsets.clone(),
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct MetricsRow {
    pub model: String,
    pub lambda: f64,
    pub fold: usize,
    pub accuracy: Option<f64>,
}

/// Per-fold metrics CSV: `model,lambda,fold,accuracy`. Failed folds leave
/// the accuracy cell empty.
pub fn write_metrics_csv(mut w: impl Write, rows: &[MetricsRow]) -> std::io::Result<()> {
    writeln!(w, "model,lambda,fold,accuracy")?;
    for row in rows {
        match row.accuracy {
            Some(acc) => writeln!(w, "{},{},{},{}", row.model, row.lambda, row.fold, acc)?,
            None => writeln!(w, "{},{},{},", row.model, row.lambda, row.fold)?,
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub model: String,
    pub lambda: f64,
    pub mean_accuracy: f64,
    pub std: f64,
}

/// Summary CSV: `model,lambda,mean_accuracy,std`.
pub fn write_summary_csv(mut w: impl Write, rows: &[SummaryRow]) -> std::io::Result<()> {
    writeln!(w, "model,lambda,mean_accuracy,std")?;
    for row in rows {
        writeln!(
            w,
            "{},{},{},{}",
            row.model, row.lambda, row.mean_accuracy, row.std
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_counts() {
        let truth = vec![1i8, -1, 1, -1];
        assert_eq!(accuracy(&truth.clone(), &truth, &[0, 1, 2, 3]).unwrap(), 1.0);
        let half = vec![1i8, 1, 1, 1];
        assert_eq!(accuracy(&half, &truth, &[0, 1, 2, 3]).unwrap(), 0.5);
        assert!(accuracy(&half, &truth, &[]).is_err());
    }

    #[test]
    fn accuracy_matches_counting_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let truth: Vec<i8> = (0..50).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
        let pred: Vec<i8> = (0..50).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
        let nodes: Vec<usize> = (0..50).step_by(3).collect();
        let mut correct = 0;
        let mut total = 0;
        for &i in &nodes {
            total += 1;
            if pred[i] == truth[i] {
                correct += 1;
            }
        }
        let got = accuracy(&pred, &truth, &nodes).unwrap();
        assert_eq!(got, correct as f64 / total as f64);
    }

    #[test]
    fn stratified_folds_partition_labeled_nodes() {
        let labels = vec![1, -1, 0, 1, 1, -1, 0, -1, 1, -1, 1, 1];
        let plan = CvPlan::stratified(&labels, 3, 4).unwrap();
        let mut seen = vec![false; labels.len()];
        for fold in 0..3 {
            for node in plan.fold_nodes(fold) {
                assert!(!seen[node], "node {node} in two folds");
                seen[node] = true;
                assert!(is_labeled(labels[node]));
            }
        }
        for (i, &y) in labels.iter().enumerate() {
            assert_eq!(seen[i], is_labeled(y));
        }
    }

    #[test]
    fn leave_one_out_folds_are_singletons() {
        let labels = vec![1, -1, 1, -1];
        let plan = CvPlan::stratified(&labels, 4, 0).unwrap();
        for fold in 0..4 {
            assert_eq!(plan.fold_nodes(fold).len(), 1);
        }
    }

    #[test]
    fn constant_predictor_scores_one_on_constant_labels() {
        // A logistic fit on all-(+1) labels predicts +1 everywhere.
        let labels = vec![1i8; 9];
        let features: Vec<f64> = (0..9).map(|i| (i % 3) as f64).collect();
        let data = Dataset::new(features, 1, labels).unwrap();
        let graph = SocialGraph::edgeless(9);
        let plan = CvPlan::stratified(data.labels(), 3, 1).unwrap();
        let spec = ModelSpec::Logistic { l2: 1e-6 };
        let result = kfold_masked_cv(&spec, &data, &graph, &plan).unwrap();
        assert_eq!(result.mean_accuracy, 1.0);
        assert_eq!(result.failed_folds, 0);
    }

    #[test]
    fn sweep_tie_breaks_toward_smaller_lambda() {
        // Baselines ignore λ entirely: every accuracy ties, smallest wins.
        let labels = vec![1i8, -1, 1, -1, 1, -1];
        let features = vec![1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
        let data = Dataset::new(features, 1, labels).unwrap();
        let graph = SocialGraph::edgeless(6);
        let spec = ModelSpec::Logistic { l2: 1e-6 };
        let result = lambda_sweep(&spec, &[1.0, 0.1, 10.0], &data, &graph, &[0, 1]).unwrap();
        assert_eq!(result.best.lambda, 0.1);
        assert_eq!(result.table.len(), 3);
        let single = lambda_sweep(&spec, &[0.7], &data, &graph, &[0, 1]).unwrap();
        assert_eq!(single.best.lambda, 0.7);
    }

    #[test]
    fn snapshot_round_trips_into_valid_posteriors() {
        let snap = PathSnapshot {
            lambda: 0.5,
            num_classes: 2,
            membership: vec![0.25, 0.75, 0.9, 0.1, 0.5, 0.5],
            offsets: vec![0.1, -0.2, 0.3, 0.0, -1.5, 2.5],
        };
        let mut buf = Vec::new();
        snap.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let back = PathSnapshot::parse_csv(&text, 0.5).unwrap();
        assert_eq!(back.membership, snap.membership);
        assert_eq!(back.offsets, snap.offsets);
        back.to_posteriors().unwrap().validate().unwrap();
    }

    #[test]
    fn masking_leaves_dataset_recoverable() {
        let data = Dataset::new(vec![0.0, 1.0, 2.0, 3.0], 1, vec![1, -1, 1, -1]).unwrap();
        let masked = data.masked(&[1, 3]);
        assert_eq!(masked.labels(), &[1, 0, 1, 0]);
        assert_eq!(data.labels(), &[1, -1, 1, -1]);
    }
}
