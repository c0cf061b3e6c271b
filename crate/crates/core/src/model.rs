//! Model parameters, the binary choice probability, and the serialized
//! model documents shared by the CLI and the evaluation harness.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Label};
use crate::error::{Error, Result};

/// log(1 + e^t) without overflow for any finite t.
pub fn log1p_exp(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Logistic function, stable on both tails: the negative branch evaluates
/// e^t/(1+e^t) so probabilities underflow gracefully instead of rounding a
/// denominator to infinity.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Probability of observing choice `y` under score `h`: 1/(1+e^{−y·h}).
///
/// `y` must be an observed choice; routing an unobserved label here is a
/// caller bug.
pub fn choice_probability(h: f64, y: Label) -> f64 {
    assert!(
        y == 1 || y == -1,
        "choice_probability requires y in {{-1,+1}}, got {y}"
    );
    sigmoid(f64::from(y) * h)
}

/// Decision rule shared by every predictor: threshold at 1/2, ties to +1.
pub fn decide(p_plus: f64) -> Label {
    if p_plus >= 0.5 {
        1
    } else {
        -1
    }
}

/// Global weights plus one offset per node.
#[derive(Debug, Clone, PartialEq)]
pub struct LlgrParams {
    pub weights: Vec<f64>,
    pub offsets: Vec<f64>,
}

impl LlgrParams {
    pub fn zeros(num_features: usize, num_nodes: usize) -> Self {
        Self {
            weights: vec![0.0; num_features],
            offsets: vec![0.0; num_nodes],
        }
    }

    pub fn score(&self, data: &Dataset, node: usize) -> f64 {
        dot(&self.weights, data.feature_row(node)) + self.offsets[node]
    }

    pub fn validate(&self, num_features: usize, num_nodes: usize) -> Result<()> {
        if self.weights.len() != num_features {
            return Err(Error::dimension(format!(
                "{} weights for d={num_features}",
                self.weights.len()
            )));
        }
        if self.offsets.len() != num_nodes {
            return Err(Error::dimension(format!(
                "{} offsets for N={num_nodes}",
                self.offsets.len()
            )));
        }
        if !self.weights.iter().chain(&self.offsets).all(|x| x.is_finite()) {
            return Err(Error::validation("non-finite parameter"));
        }
        Ok(())
    }
}

/// Per-class weights plus one offset per node and class. Weights are stored
/// row-major K×d, offsets row-major N×K.
#[derive(Debug, Clone, PartialEq)]
pub struct LcgrParams {
    num_classes: usize,
    num_features: usize,
    pub weights: Vec<f64>,
    pub offsets: Vec<f64>,
}

impl LcgrParams {
    pub fn zeros(num_classes: usize, num_features: usize, num_nodes: usize) -> Self {
        assert!(num_classes >= 1, "need at least one class");
        Self {
            num_classes,
            num_features,
            weights: vec![0.0; num_classes * num_features],
            offsets: vec![0.0; num_nodes * num_classes],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_nodes(&self) -> usize {
        self.offsets.len() / self.num_classes
    }

    pub fn weights_row(&self, class: usize) -> &[f64] {
        let d = self.num_features;
        &self.weights[class * d..(class + 1) * d]
    }

    pub fn offset(&self, node: usize, class: usize) -> f64 {
        self.offsets[node * self.num_classes + class]
    }

    pub fn score(&self, data: &Dataset, node: usize, class: usize) -> f64 {
        dot(self.weights_row(class), data.feature_row(node)) + self.offset(node, class)
    }

    /// View of one class as an LLGR parameter set (copying the slices).
    pub fn class_slice(&self, class: usize) -> LlgrParams {
        let n = self.num_nodes();
        LlgrParams {
            weights: self.weights_row(class).to_vec(),
            offsets: (0..n).map(|i| self.offset(i, class)).collect(),
        }
    }

    /// Overwrites one class from an LLGR parameter set.
    pub fn set_class_slice(&mut self, class: usize, params: &LlgrParams) {
        let d = self.num_features;
        let k = self.num_classes;
        self.weights[class * d..(class + 1) * d].copy_from_slice(&params.weights);
        for (i, &b) in params.offsets.iter().enumerate() {
            self.offsets[i * k + class] = b;
        }
    }

    pub fn validate(&self, num_features: usize, num_nodes: usize) -> Result<()> {
        if self.num_features != num_features || self.weights.len() != self.num_classes * num_features
        {
            return Err(Error::dimension("class weight matrix shape"));
        }
        if self.offsets.len() != num_nodes * self.num_classes {
            return Err(Error::dimension("offset matrix shape"));
        }
        if !self.weights.iter().chain(&self.offsets).all(|x| x.is_finite()) {
            return Err(Error::validation("non-finite parameter"));
        }
        Ok(())
    }
}

/// Graph-regularization strength and the two consensus penalty parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub lambda: f64,
    pub rho1: f64,
    pub rho2: f64,
}

impl Hyperparams {
    pub fn new(lambda: f64) -> Result<Self> {
        Self {
            lambda,
            rho1: 1.0,
            rho2: 1.0,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.lambda >= 0.0) {
            return Err(Error::validation(format!("lambda={} must be >= 0", self.lambda)));
        }
        if !(self.rho1 > 0.0) || !(self.rho2 > 0.0) {
            return Err(Error::validation("penalty parameters must be positive"));
        }
        Ok(self)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// --- Serialized model documents -------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LlgrModelDoc {
    pub model: String,
    pub lambda: f64,
    #[serde(rename = "W")]
    pub weights: Vec<f64>,
    pub b: Vec<f64>,
    pub converged: bool,
    pub iters: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McemHistoryDoc {
    pub iter: usize,
    #[serde(rename = "Q")]
    pub q: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LcgrModelDoc {
    pub model: String,
    #[serde(rename = "K")]
    pub num_classes: usize,
    pub lambda: f64,
    #[serde(rename = "W")]
    pub weights: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub history: Vec<McemHistoryDoc>,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogisticModelDoc {
    pub model: String,
    pub l2: f64,
    pub w: Vec<f64>,
    pub b: f64,
    pub converged: bool,
    pub capped: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatentClassModelDoc {
    pub model: String,
    #[serde(rename = "K")]
    pub num_classes: usize,
    #[serde(rename = "W")]
    pub weights: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub pi: Vec<f64>,
    pub loglik: f64,
}

impl LcgrModelDoc {
    pub fn params(&self) -> Result<LcgrParams> {
        let k = self.num_classes;
        if self.weights.len() != k {
            return Err(Error::dimension("weight rows != K"));
        }
        let d = self.weights.first().map_or(0, Vec::len);
        let mut weights = Vec::with_capacity(k * d);
        for row in &self.weights {
            if row.len() != d {
                return Err(Error::dimension("ragged weight rows"));
            }
            weights.extend_from_slice(row);
        }
        let mut offsets = Vec::with_capacity(self.b.len() * k);
        for row in &self.b {
            if row.len() != k {
                return Err(Error::dimension("ragged offset rows"));
            }
            offsets.extend_from_slice(row);
        }
        Ok(LcgrParams {
            num_classes: k,
            num_features: d,
            weights,
            offsets,
        })
    }

    pub fn from_params(params: &LcgrParams, lambda: f64, history: Vec<McemHistoryDoc>, converged: bool) -> Self {
        let k = params.num_classes();
        Self {
            model: "lcgr".into(),
            num_classes: k,
            lambda,
            weights: (0..k).map(|t| params.weights_row(t).to_vec()).collect(),
            b: (0..params.num_nodes())
                .map(|i| (0..k).map(|t| params.offset(i, t)).collect())
                .collect(),
            history,
            converged,
        }
    }
}
