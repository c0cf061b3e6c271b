//! Graph-blind reference models: plain logistic regression and an i.i.d.
//! latent-class mixture of logistic regressions trained by standard EM.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::data::{is_labeled, Dataset, Label};
use crate::error::{Error, Result};
use crate::model::{choice_probability, decide, dot, log1p_exp, sigmoid};
use crate::seeds;

const COEFFICIENT_CAP: f64 = 1e3;

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl LogisticModel {
    pub fn score(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.intercept
    }
}

#[derive(Debug, Clone)]
pub struct LogisticFit {
    pub model: LogisticModel,
    pub converged: bool,
    /// Set when separation pushed the coefficients to the norm cap.
    pub capped: bool,
    pub iters: usize,
}

/// Mixture of logistic regressions with i.i.d. class proportions.
#[derive(Debug, Clone)]
pub struct LatentClassModel {
    pub num_classes: usize,
    /// Row-major K×d.
    pub weights: Vec<f64>,
    pub intercepts: Vec<f64>,
    pub proportions: Vec<f64>,
}

impl LatentClassModel {
    pub fn weights_row(&self, class: usize) -> &[f64] {
        let d = self.weights.len() / self.num_classes;
        &self.weights[class * d..(class + 1) * d]
    }

    pub fn score(&self, class: usize, x: &[f64]) -> f64 {
        dot(self.weights_row(class), x) + self.intercepts[class]
    }
}

#[derive(Debug, Clone)]
pub struct LatentClassFit {
    pub model: LatentClassModel,
    pub loglik: f64,
    /// Training log-likelihood after every EM iteration of the winning
    /// restart.
    pub loglik_trace: Vec<f64>,
}

/// Either baseline, as loaded from a model document.
#[derive(Debug, Clone)]
pub enum BaselineModel {
    Logistic(LogisticModel),
    LatentClass(LatentClassModel),
}

/// Choice probability and label for a feature vector under a trained
/// baseline.
pub fn predict_baseline(model: &BaselineModel, x: &[f64]) -> (f64, Label) {
    let p = match model {
        BaselineModel::Logistic(m) => sigmoid(m.score(x)),
        BaselineModel::LatentClass(m) => (0..m.num_classes)
            .map(|t| m.proportions[t] * sigmoid(m.score(t, x)))
            .sum(),
    };
    (p, decide(p))
}

/// Maximum-likelihood logistic regression over the labeled nodes with an
/// optional ridge term on the weights (never on the intercept), by damped
/// Newton. Perfect separation at l2 = 0 diverges; the fit is then capped at
/// coefficient norm 1e3 and flagged.
pub fn fit_logistic(data: &Dataset, l2: f64) -> Result<LogisticFit> {
    let weights: Vec<f64> = data
        .labels()
        .iter()
        .map(|&y| if is_labeled(y) { 1.0 } else { 0.0 })
        .collect();
    fit_logistic_weighted(data, &weights, l2, None)
}

/// Weighted variant used by the mixture M-step: node i contributes
/// `weights[i] · log(1+e^{−y_i θᵀx̃_i})`. Unobserved nodes are skipped
/// regardless of weight.
pub fn fit_logistic_weighted(
    data: &Dataset,
    weights: &[f64],
    l2: f64,
    init: Option<&LogisticModel>,
) -> Result<LogisticFit> {
    if weights.len() != data.num_nodes() {
        return Err(Error::dimension("one weight per node required"));
    }
    if !(l2 >= 0.0) {
        return Err(Error::validation("l2 must be >= 0"));
    }
    let active: Vec<usize> = (0..data.num_nodes())
        .filter(|&i| is_labeled(data.label(i)) && weights[i] > 0.0)
        .collect();
    if active.is_empty() {
        return Err(Error::Empty("no labeled nodes with positive weight".into()));
    }

    let d = data.num_features();
    let p = d + 1; // weights then intercept
    let mut theta = match init {
        Some(m) => {
            let mut t = m.weights.clone();
            t.push(m.intercept);
            t
        }
        None => vec![0.0; p],
    };

    let objective = |theta: &[f64]| -> f64 {
        let mut v = 0.0;
        for &i in &active {
            let m = margin(data, i, theta);
            v += weights[i] * log1p_exp(-m);
        }
        v + 0.5 * l2 * theta[..d].iter().map(|w| w * w).sum::<f64>()
    };

    let mut converged = false;
    let mut capped = false;
    let mut iters = 0;
    for iter in 0..100 {
        iters = iter + 1;
        let mut grad = vec![0.0; p];
        let mut hess = vec![0.0; p * p];
        for &i in &active {
            let y = f64::from(data.label(i));
            let m = margin(data, i, &theta);
            let s = sigmoid(-m);
            let coef = -weights[i] * s * y;
            let curv = weights[i] * s * sigmoid(m);
            let x = data.feature_row(i);
            for a in 0..p {
                let xa = if a < d { x[a] } else { 1.0 };
                grad[a] += coef * xa;
                for b in a..p {
                    let xb = if b < d { x[b] } else { 1.0 };
                    hess[a * p + b] += curv * xa * xb;
                }
            }
        }
        for a in 0..d {
            grad[a] += l2 * theta[a];
            hess[a * p + a] += l2;
        }
        for a in 0..p {
            for b in a..p {
                hess[b * p + a] = hess[a * p + b];
            }
        }

        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if grad_norm <= 1e-8 {
            converged = true;
            break;
        }

        let dir = match solve_spd(&mut hess, &grad, p) {
            Some(mut dir) => {
                for v in &mut dir {
                    *v = -*v;
                }
                dir
            }
            None => grad.iter().map(|g| -g).collect(),
        };
        let slope: f64 = grad.iter().zip(&dir).map(|(g, s)| g * s).sum();
        let f0 = objective(&theta);
        let mut step = 1.0;
        let mut candidate: Vec<f64> = theta.iter().zip(&dir).map(|(t, s)| t + s).collect();
        let mut halvings = 0;
        while objective(&candidate) > f0 + 1e-4 * step * slope && halvings < 60 {
            step *= 0.5;
            halvings += 1;
            for a in 0..p {
                candidate[a] = theta[a] + step * dir[a];
            }
        }
        theta = candidate;

        let norm = theta.iter().map(|t| t * t).sum::<f64>().sqrt();
        if norm > COEFFICIENT_CAP {
            let scale = COEFFICIENT_CAP / norm;
            for t in &mut theta {
                *t *= scale;
            }
            capped = true;
            break;
        }
        if !theta.iter().all(|t| t.is_finite()) {
            return Err(Error::Solver {
                node: usize::MAX,
                msg: "non-finite iterate in logistic fit".into(),
            });
        }
    }

    // Without a ridge term, a fit that classifies every active point with a
    // strictly positive margin has no finite maximizer: scaling the
    // coefficients up only improves the likelihood, so the small-gradient
    // stop above landed on a flat tail. Return the capped representative.
    if l2 == 0.0 && !capped && active.iter().all(|&i| margin(data, i, &theta) > 0.0) {
        let norm = theta.iter().map(|t| t * t).sum::<f64>().sqrt();
        if norm > 0.0 {
            let scale = COEFFICIENT_CAP / norm;
            for t in &mut theta {
                *t *= scale;
            }
            capped = true;
        }
    }

    let intercept = theta[d];
    theta.truncate(d);
    Ok(LogisticFit {
        model: LogisticModel {
            weights: theta,
            intercept,
        },
        converged,
        capped,
        iters,
    })
}

fn margin(data: &Dataset, node: usize, theta: &[f64]) -> f64 {
    let d = data.num_features();
    f64::from(data.label(node)) * (dot(&theta[..d], data.feature_row(node)) + theta[d])
}

/// Cholesky solve of a symmetric positive definite system, in place. A tiny
/// jitter keeps near-singular Hessians factorizable; outright failure falls
/// back to gradient descent at the call site.
fn solve_spd(a: &mut [f64], rhs: &[f64], p: usize) -> Option<Vec<f64>> {
    for i in 0..p {
        a[i * p + i] += 1e-12;
    }
    // L overwrites the lower triangle.
    for i in 0..p {
        for j in 0..=i {
            let mut sum = a[i * p + j];
            for k in 0..j {
                sum -= a[i * p + k] * a[j * p + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return None;
                }
                a[i * p + i] = sum.sqrt();
            } else {
                a[i * p + j] = sum / a[j * p + j];
            }
        }
    }
    let mut x = rhs.to_vec();
    for i in 0..p {
        for k in 0..i {
            x[i] = x[i] - a[i * p + k] * x[k];
        }
        x[i] /= a[i * p + i];
    }
    for i in (0..p).rev() {
        for k in i + 1..p {
            x[i] = x[i] - a[k * p + i] * x[k];
        }
        x[i] /= a[i * p + i];
    }
    Some(x)
}

const LATENT_CLASS_RESTARTS: usize = 5;

/// EM for the mixture of logistic regressions. Five seeded restarts run
/// concurrently and the best final log-likelihood wins (ties break toward
/// the lowest restart index).
pub fn fit_latent_class(
    data: &Dataset,
    num_classes: usize,
    em_iters: usize,
    rng_seed: u64,
) -> Result<LatentClassFit> {
    if num_classes == 0 {
        return Err(Error::validation("need at least one class"));
    }
    if data.labeled_nodes().next().is_none() {
        return Err(Error::Empty("no labeled nodes".into()));
    }
    if num_classes == 1 {
        let fit = fit_logistic(data, 0.0)?;
        let loglik = labeled_loglik(data, |i| sigmoid_label(&fit.model, data, i));
        return Ok(LatentClassFit {
            model: LatentClassModel {
                num_classes: 1,
                weights: fit.model.weights.clone(),
                intercepts: vec![fit.model.intercept],
                proportions: vec![1.0],
            },
            loglik,
            loglik_trace: vec![loglik],
        });
    }

    let fits: Vec<Result<LatentClassFit>> = (0..LATENT_CLASS_RESTARTS)
        .into_par_iter()
        .map(|restart| {
            latent_class_em(
                data,
                num_classes,
                em_iters,
                seeds::derive(rng_seed, restart as u64),
            )
        })
        .collect();

    let mut best: Option<LatentClassFit> = None;
    for fit in fits {
        let fit = fit?;
        if best.as_ref().map_or(true, |b| fit.loglik > b.loglik) {
            best = Some(fit);
        }
    }
    Ok(best.unwrap())
}

fn sigmoid_label(model: &LogisticModel, data: &Dataset, node: usize) -> f64 {
    choice_probability(model.score(data.feature_row(node)), data.label(node))
}

fn labeled_loglik(data: &Dataset, prob: impl Fn(usize) -> f64) -> f64 {
    data.labeled_nodes().map(|i| prob(i).ln()).sum()
}

fn latent_class_em(
    data: &Dataset,
    k: usize,
    em_iters: usize,
    seed: u64,
) -> Result<LatentClassFit> {
    let d = data.num_features();
    let labeled: Vec<usize> = data.labeled_nodes().collect();
    let n_labeled = labeled.len() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let draw_component = |rng: &mut ChaCha8Rng| -> LogisticModel {
        let weights: Vec<f64> = (0..d)
            .map(|_| 0.5 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
            .collect();
        let intercept =
            0.5 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng);
        LogisticModel { weights, intercept }
    };

    let mut components: Vec<LogisticModel> = (0..k).map(|_| draw_component(&mut rng)).collect();
    let mut proportions = vec![1.0 / k as f64; k];

    let loglik_of = |components: &[LogisticModel], proportions: &[f64]| -> f64 {
        labeled
            .iter()
            .map(|&i| {
                let x = data.feature_row(i);
                let y = data.label(i);
                let total: f64 = (0..k)
                    .map(|t| proportions[t] * choice_probability(components[t].score(x), y))
                    .sum();
                total.max(f64::MIN_POSITIVE).ln()
            })
            .sum()
    };

    let mut trace = Vec::with_capacity(em_iters);
    let mut responsibilities = vec![0.0; labeled.len() * k];
    for _ in 0..em_iters {
        // E-step: Bayes responsibilities over classes.
        for (row, &i) in labeled.iter().enumerate() {
            let x = data.feature_row(i);
            let y = data.label(i);
            let mut total = 0.0;
            for t in 0..k {
                let r = proportions[t] * choice_probability(components[t].score(x), y);
                responsibilities[row * k + t] = r;
                total += r;
            }
            for t in 0..k {
                responsibilities[row * k + t] /= total.max(f64::MIN_POSITIVE);
            }
        }

        // M-step: weighted logistic fit per class, proportions from mean
        // responsibility.
        for t in 0..k {
            let mass: f64 = (0..labeled.len())
                .map(|row| responsibilities[row * k + t])
                .sum();
            if mass < 1e-8 {
                // Dead class: re-seed it and give it a sliver of mass.
                components[t] = draw_component(&mut rng);
                proportions[t] = 1e-3;
                continue;
            }
            let mut node_weights = vec![0.0; data.num_nodes()];
            for (row, &i) in labeled.iter().enumerate() {
                node_weights[i] = responsibilities[row * k + t];
            }
            let fit = fit_logistic_weighted(data, &node_weights, 1e-6, Some(&components[t]))?;
            components[t] = fit.model;
            proportions[t] = mass / n_labeled;
        }
        let total_pi: f64 = proportions.iter().sum();
        for p in &mut proportions {
            *p /= total_pi;
        }

        trace.push(loglik_of(&components, &proportions));
    }

    let loglik = trace
        .last()
        .copied()
        .unwrap_or_else(|| loglik_of(&components, &proportions));
    let mut weights = Vec::with_capacity(k * d);
    let mut intercepts = Vec::with_capacity(k);
    for c in components {
        weights.extend_from_slice(&c.weights);
        intercepts.push(c.intercept);
    }
    Ok(LatentClassFit {
        model: LatentClassModel {
            num_classes: k,
            weights,
            intercepts,
            proportions,
        },
        loglik,
        loglik_trace: trace,
    })
}
