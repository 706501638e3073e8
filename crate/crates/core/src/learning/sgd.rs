use rand::seq::SliceRandom;

use super::{loss_and_gradient, LocalDataset, ModelSpec, ModelVector};
use crate::rng::RngStream;
use crate::{Error, Result};

/// A differentiable objective over a flat parameter vector.
pub trait Objective {
    fn dim(&self) -> usize;
    /// Returns the loss and writes the gradient into `grad`.
    fn loss_grad(&self, w: &[f64], grad: &mut [f64]) -> Result<f64>;
}

/// Mean cross-entropy of a model on one dataset.
pub struct ModelObjective<'a> {
    pub spec: &'a ModelSpec,
    pub data: &'a LocalDataset,
}

impl Objective for ModelObjective<'_> {
    fn dim(&self) -> usize {
        self.spec.dim()
    }

    fn loss_grad(&self, w: &[f64], grad: &mut [f64]) -> Result<f64> {
        loss_and_gradient(self.spec, w, self.data, Some(grad))
    }
}

fn check_step(eta: f64) -> Result<()> {
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::Domain(format!(
            "learning rate must be finite and >= 0, got {eta}"
        )));
    }
    Ok(())
}

fn non_finite(step: u32, what: &str) -> Error {
    Error::Numerical {
        round: 0,
        device: None,
        message: format!("non-finite {what} at local step {step}"),
    }
}

/// `tau` steps of `w ← w − η ∇f(w)`. Returns the final iterate and the
/// squared gradient norm seen at each step.
pub fn gradient_descent<O: Objective + ?Sized>(
    objective: &O,
    w0: &ModelVector,
    eta: f64,
    tau: u32,
) -> Result<(ModelVector, Vec<f64>)> {
    check_step(eta)?;
    if w0.len() != objective.dim() {
        return Err(Error::Contract(format!(
            "model has {} parameters, objective expects {}",
            w0.len(),
            objective.dim()
        )));
    }
    let mut w = w0.w.clone();
    let mut grad = vec![0.0; w.len()];
    let mut norms = Vec::with_capacity(tau as usize);
    for step in 0..tau {
        objective.loss_grad(&w, &mut grad)?;
        let norm_sq: f64 = grad.iter().map(|g| g * g).sum();
        if !norm_sq.is_finite() {
            return Err(non_finite(step, "gradient"));
        }
        norms.push(norm_sq);
        for (wi, gi) in w.iter_mut().zip(&grad) {
            *wi -= eta * gi;
        }
    }
    Ok((ModelVector::new(w), norms))
}

/// How one local epoch walks the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Batching {
    /// One step on the full local gradient per epoch.
    #[default]
    FullBatch,
    /// Reshuffle each epoch, one step per batch of this size.
    MiniBatch(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalTraining {
    pub model: ModelVector,
    /// `‖∇F_m‖²` at each step; the first entry is taken at the broadcast model
    /// in full-batch mode.
    pub grad_norms_sq: Vec<f64>,
}

/// Local training for `tau` epochs starting from `w0`.
pub fn train_local(
    w0: &ModelVector,
    data: &LocalDataset,
    eta: f64,
    tau: u32,
    spec: &ModelSpec,
    batching: Batching,
    stream: &mut RngStream,
) -> Result<LocalTraining> {
    if data.is_empty() {
        return Err(Error::Domain("local training on an empty dataset".into()));
    }
    match batching {
        Batching::FullBatch => {
            let (model, grad_norms_sq) =
                gradient_descent(&ModelObjective { spec, data }, w0, eta, tau)?;
            Ok(LocalTraining {
                model,
                grad_norms_sq,
            })
        }
        Batching::MiniBatch(size) => {
            if size == 0 {
                return Err(Error::config("batch_size", "must be >= 1"));
            }
            check_step(eta)?;
            let mut w = w0.clone();
            let mut grad = vec![0.0; w.len()];
            let mut order: Vec<usize> = (0..data.len()).collect();
            let mut grad_norms_sq = Vec::new();
            for epoch in 0..tau {
                order.shuffle(stream);
                for chunk in order.chunks(size) {
                    let batch = data.subset(chunk);
                    loss_and_gradient(spec, &w.w, &batch, Some(&mut grad))?;
                    let norm_sq: f64 = grad.iter().map(|g| g * g).sum();
                    if !norm_sq.is_finite() {
                        return Err(non_finite(epoch, "minibatch gradient"));
                    }
                    grad_norms_sq.push(norm_sq);
                    for (wi, gi) in w.w.iter_mut().zip(&grad) {
                        *wi -= eta * gi;
                    }
                }
            }
            Ok(LocalTraining {
                model: w,
                grad_norms_sq,
            })
        }
    }
}

/// Full-batch local SGD; returns the trained model only.
pub fn local_sgd(
    w0: &ModelVector,
    data: &LocalDataset,
    eta: f64,
    tau: u32,
    spec: &ModelSpec,
    stream: &mut RngStream,
) -> Result<ModelVector> {
    Ok(train_local(w0, data, eta, tau, spec, Batching::FullBatch, stream)?.model)
}

/// `w_t − w^τ`: broadcast model minus trained model.
pub fn model_difference(w_t: &ModelVector, w_tau: &ModelVector) -> Result<Vec<f64>> {
    if w_t.len() != w_tau.len() {
        return Err(Error::Contract(format!(
            "model lengths differ: {} vs {}",
            w_t.len(),
            w_tau.len()
        )));
    }
    Ok(w_t.w.iter().zip(&w_tau.w).map(|(a, b)| a - b).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learning::make_synthetic_dataset;
    use crate::rng::{substream, StreamKind, StreamLabel};

    /// f(w) = w²/2 in one dimension.
    struct HalfSquare;

    impl Objective for HalfSquare {
        fn dim(&self) -> usize {
            1
        }
        fn loss_grad(&self, w: &[f64], grad: &mut [f64]) -> Result<f64> {
            grad[0] = w[0];
            Ok(0.5 * w[0] * w[0])
        }
    }

    fn stream() -> RngStream {
        substream(5, StreamLabel::new(StreamKind::Minibatch, 0, 0))
    }

    #[test]
    fn quadratic_contracts_geometrically() {
        let w0 = ModelVector::new(vec![1.0]);
        let (w1, _) = gradient_descent(&HalfSquare, &w0, 0.1, 1).unwrap();
        assert!((w1.w[0] - 0.9).abs() < 1e-15);
        let (w2, norms) = gradient_descent(&HalfSquare, &w0, 0.1, 2).unwrap();
        assert!((w2.w[0] - 0.81).abs() < 1e-15);
        assert_eq!(norms.len(), 2);
        let diff = model_difference(&w0, &w1).unwrap();
        assert!((diff[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn zero_rate_is_identity() {
        let w0 = ModelVector::new(vec![0.7]);
        let (w, _) = gradient_descent(&HalfSquare, &w0, 0.0, 5).unwrap();
        assert_eq!(w, w0);
    }

    fn toy() -> (ModelSpec, LocalDataset) {
        let spec = ModelSpec::logistic(4, 3);
        let mut s = substream(8, StreamLabel::new(StreamKind::Dataset, 0, 0));
        (spec, make_synthetic_dataset(3, 60, 4, 2.0, &mut s).unwrap())
    }

    #[test]
    fn tau_steps_equal_repeated_single_steps() {
        let (spec, data) = toy();
        let w0 = ModelVector::zeros(spec.dim());
        let direct = local_sgd(&w0, &data, 0.3, 4, &spec, &mut stream()).unwrap();
        let mut w = w0;
        for _ in 0..4 {
            w = local_sgd(&w, &data, 0.3, 1, &spec, &mut stream()).unwrap();
        }
        assert_eq!(direct, w);
    }

    #[test]
    fn difference_is_sum_of_scaled_gradients() {
        let (spec, data) = toy();
        let eta = 0.2;
        let mut w = ModelVector::zeros(spec.dim());
        let w0 = w.clone();
        let mut acc = vec![0.0; spec.dim()];
        let mut g = vec![0.0; spec.dim()];
        for _ in 0..3 {
            loss_and_gradient(&spec, &w.w, &data, Some(&mut g)).unwrap();
            for ((a, wi), gi) in acc.iter_mut().zip(w.w.iter_mut()).zip(&g) {
                *a += eta * gi;
                *wi -= eta * gi;
            }
        }
        let trained = local_sgd(&w0, &data, eta, 3, &spec, &mut stream()).unwrap();
        let diff = model_difference(&w0, &trained).unwrap();
        for (d, a) in diff.iter().zip(&acc) {
            assert!((d - a).abs() < 1e-14);
        }
    }

    #[test]
    fn minibatch_is_seeded() {
        let (spec, data) = toy();
        let w0 = ModelVector::zeros(spec.dim());
        let run = |seed| {
            let mut s = substream(seed, StreamLabel::new(StreamKind::Minibatch, 0, 0));
            train_local(&w0, &data, 0.1, 2, &spec, Batching::MiniBatch(16), &mut s).unwrap()
        };
        assert_eq!(run(1), run(1));
        assert_ne!(run(1).model, run(2).model);
        assert_eq!(run(1).grad_norms_sq.len(), 2 * 4);
    }

    #[test]
    fn training_reduces_loss() {
        let (spec, data) = toy();
        let w0 = ModelVector::zeros(spec.dim());
        let w = local_sgd(&w0, &data, 0.5, 20, &spec, &mut stream()).unwrap();
        let before = loss_and_gradient(&spec, &w0.w, &data, None).unwrap();
        let after = loss_and_gradient(&spec, &w.w, &data, None).unwrap();
        assert!(after < before);
    }

    #[test]
    fn length_mismatch_is_contract_error() {
        let a = ModelVector::zeros(2);
        let b = ModelVector::zeros(3);
        assert!(matches!(model_difference(&a, &b), Err(Error::Contract(_))));
    }
}
