use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::LocalDataset;
use crate::rng::RngStream;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    /// Multinomial logistic (softmax) regression.
    LogisticRegression,
    /// One tanh hidden layer followed by a softmax output layer.
    OneHiddenLayerMlp,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::LogisticRegression => "logistic",
            ModelKind::OneHiddenLayerMlp => "mlp",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" | "logistic-regression" => Ok(ModelKind::LogisticRegression),
            "mlp" => Ok(ModelKind::OneHiddenLayerMlp),
            other => Err(Error::config(
                "model",
                format!("unknown model `{other}` (expected logistic or mlp)"),
            )),
        }
    }
}

/// Architecture of the trained model. Parameters are stored flat:
/// logistic as `[W (K×D), b (K)]`, MLP as `[W1 (H×D), b1 (H), W2 (K×H), b2 (K)]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub num_classes: usize,
    pub hidden_units: usize,
}

impl ModelSpec {
    pub fn logistic(input_dim: usize, num_classes: usize) -> Self {
        Self {
            kind: ModelKind::LogisticRegression,
            input_dim,
            num_classes,
            hidden_units: 0,
        }
    }

    pub fn mlp(input_dim: usize, hidden_units: usize, num_classes: usize) -> Self {
        Self {
            kind: ModelKind::OneHiddenLayerMlp,
            input_dim,
            num_classes,
            hidden_units,
        }
    }

    /// Number of trainable parameters `d`.
    pub fn dim(&self) -> usize {
        let (dd, k, h) = (self.input_dim, self.num_classes, self.hidden_units);
        match self.kind {
            ModelKind::LogisticRegression => k * (dd + 1),
            ModelKind::OneHiddenLayerMlp => h * (dd + 1) + k * (h + 1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::config("input_dim", "must be >= 1"));
        }
        if self.num_classes < 2 {
            return Err(Error::config("num_classes", "must be >= 2"));
        }
        if self.kind == ModelKind::OneHiddenLayerMlp && self.hidden_units == 0 {
            return Err(Error::config(
                "hidden_units",
                "MLP needs at least one hidden unit",
            ));
        }
        Ok(())
    }

    /// Logistic models start at zero; the MLP needs a symmetry-breaking
    /// Glorot-scaled draw.
    pub fn initial_model(&self, stream: &mut RngStream) -> ModelVector {
        let mut w = vec![0.0; self.dim()];
        if self.kind == ModelKind::OneHiddenLayerMlp {
            let (dd, h, k) = (self.input_dim, self.hidden_units, self.num_classes);
            let s1 = (1.0 / dd as f64).sqrt();
            let s2 = (1.0 / h as f64).sqrt();
            for v in &mut w[..h * dd] {
                *v = s1 * stream.sample_standard_normal();
            }
            let w2 = h * (dd + 1);
            for v in &mut w[w2..w2 + k * h] {
                *v = s2 * stream.sample_standard_normal();
            }
        }
        ModelVector::new(w)
    }
}

/// Trainable parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelVector {
    pub w: Vec<f64>,
}

impl ModelVector {
    pub fn new(w: Vec<f64>) -> Self {
        Self { w }
    }

    pub fn zeros(d: usize) -> Self {
        Self { w: vec![0.0; d] }
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self) -> Result<()> {
        match self.w.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(Error::Numerical {
                round: 0,
                device: None,
                message: format!("model coordinate {i} is {}", self.w[i]),
            }),
        }
    }
}

fn softmax_in_place(z: &mut [f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
    max + sum.ln()
}

/// Logits for one sample; `hidden` receives MLP activations.
fn forward(spec: &ModelSpec, w: &[f64], x: &[f64], hidden: &mut [f64], logits: &mut [f64]) {
    let (dd, k) = (spec.input_dim, spec.num_classes);
    match spec.kind {
        ModelKind::LogisticRegression => {
            let (weights, bias) = w.split_at(k * dd);
            for c in 0..k {
                let row = &weights[c * dd..(c + 1) * dd];
                logits[c] = bias[c] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        ModelKind::OneHiddenLayerMlp => {
            let h = spec.hidden_units;
            let (w1, rest) = w.split_at(h * dd);
            let (b1, rest) = rest.split_at(h);
            let (w2, b2) = rest.split_at(k * h);
            for j in 0..h {
                let row = &w1[j * dd..(j + 1) * dd];
                hidden[j] = (b1[j] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()).tanh();
            }
            for c in 0..k {
                let row = &w2[c * h..(c + 1) * h];
                logits[c] = b2[c]
                    + row
                        .iter()
                        .zip(hidden.iter())
                        .map(|(a, b)| a * b)
                        .sum::<f64>();
            }
        }
    }
}

fn check_shapes(spec: &ModelSpec, w: &[f64], data: &LocalDataset) -> Result<()> {
    if w.len() != spec.dim() {
        return Err(Error::Contract(format!(
            "model has {} parameters, spec expects {}",
            w.len(),
            spec.dim()
        )));
    }
    if data.input_dim() != spec.input_dim {
        return Err(Error::Contract(format!(
            "dataset features have dimension {}, model expects {}",
            data.input_dim(),
            spec.input_dim
        )));
    }
    if let Some(&bad) = data
        .labels()
        .iter()
        .find(|&&y| y as usize >= spec.num_classes)
    {
        return Err(Error::Contract(format!(
            "label {bad} outside the model's {} classes",
            spec.num_classes
        )));
    }
    Ok(())
}

/// Mean cross-entropy over `data`; writes the mean gradient into `grad`
/// when given.
pub fn loss_and_gradient(
    spec: &ModelSpec,
    w: &[f64],
    data: &LocalDataset,
    mut grad: Option<&mut [f64]>,
) -> Result<f64> {
    check_shapes(spec, w, data)?;
    if data.is_empty() {
        return Err(Error::Domain(
            "loss of an empty dataset is undefined".into(),
        ));
    }
    let (dd, k, h) = (spec.input_dim, spec.num_classes, spec.hidden_units);
    let mut hidden = vec![0.0; h];
    let mut logits = vec![0.0; k];
    let mut delta_h = vec![0.0; h];
    if let Some(g) = grad.as_deref_mut() {
        if g.len() != w.len() {
            return Err(Error::Contract("gradient buffer length mismatch".into()));
        }
        g.fill(0.0);
    }
    let mut total = 0.0;
    for (x, y) in data.iter() {
        forward(spec, w, x, &mut hidden, &mut logits);
        let y = y as usize;
        let log_norm = {
            let z_y = logits[y];
            let lse = softmax_in_place(&mut logits);
            lse - z_y
        };
        total += log_norm;
        let Some(g) = grad.as_deref_mut() else {
            continue;
        };
        // logits now hold probabilities; turn them into dL/dz.
        logits[y] -= 1.0;
        match spec.kind {
            ModelKind::LogisticRegression => {
                let (gw, gb) = g.split_at_mut(k * dd);
                for c in 0..k {
                    let dz = logits[c];
                    for (gv, xv) in gw[c * dd..(c + 1) * dd].iter_mut().zip(x) {
                        *gv += dz * xv;
                    }
                    gb[c] += dz;
                }
            }
            ModelKind::OneHiddenLayerMlp => {
                let w2 = &w[h * (dd + 1)..h * (dd + 1) + k * h];
                let (gw1, rest) = g.split_at_mut(h * dd);
                let (gb1, rest) = rest.split_at_mut(h);
                let (gw2, gb2) = rest.split_at_mut(k * h);
                delta_h.fill(0.0);
                for c in 0..k {
                    let dz = logits[c];
                    for j in 0..h {
                        gw2[c * h + j] += dz * hidden[j];
                        delta_h[j] += w2[c * h + j] * dz;
                    }
                    gb2[c] += dz;
                }
                for j in 0..h {
                    let da = delta_h[j] * (1.0 - hidden[j] * hidden[j]);
                    for (gv, xv) in gw1[j * dd..(j + 1) * dd].iter_mut().zip(x) {
                        *gv += da * xv;
                    }
                    gb1[j] += da;
                }
            }
        }
    }
    let n = data.len() as f64;
    if let Some(g) = grad {
        for v in g.iter_mut() {
            *v /= n;
        }
    }
    Ok(total / n)
}

/// Mean cross-entropy of `w` on one device's data.
pub fn local_loss(w: &ModelVector, data: &LocalDataset, spec: &ModelSpec) -> Result<f64> {
    loss_and_gradient(spec, &w.w, data, None)
}

/// Dataset-size-weighted mean of local losses.
pub fn global_loss(w: &ModelVector, datasets: &[&LocalDataset], spec: &ModelSpec) -> Result<f64> {
    let total: usize = datasets.iter().map(|d| d.len()).sum();
    if total == 0 {
        return Err(Error::Domain("global loss over empty datasets".into()));
    }
    let mut acc = 0.0;
    for data in datasets.iter().filter(|d| !d.is_empty()) {
        acc += data.len() as f64 * local_loss(w, data, spec)?;
    }
    Ok(acc / total as f64)
}

/// Argmax class; ties resolve to the lowest index.
pub fn predict(spec: &ModelSpec, w: &ModelVector, x: &[f64]) -> usize {
    let mut hidden = vec![0.0; spec.hidden_units];
    let mut logits = vec![0.0; spec.num_classes];
    forward(spec, &w.w, x, &mut hidden, &mut logits);
    let mut best = 0;
    for (c, &z) in logits.iter().enumerate().skip(1) {
        if z > logits[best] {
            best = c;
        }
    }
    best
}

/// Fraction of argmax-correct predictions.
pub fn evaluate_accuracy(w: &ModelVector, test: &LocalDataset, spec: &ModelSpec) -> Result<f64> {
    check_shapes(spec, &w.w, test)?;
    if test.is_empty() {
        return Err(Error::Domain(
            "accuracy of an empty test set is undefined".into(),
        ));
    }
    let correct = test
        .iter()
        .filter(|(x, y)| predict(spec, w, x) == *y as usize)
        .count();
    Ok(correct as f64 / test.len() as f64)
}
