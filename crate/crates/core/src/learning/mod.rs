//! Datasets, desk-scale models, local training and evaluation.

mod dataset;
mod idx;
mod model;
mod sgd;

pub use dataset::{make_synthetic_dataset, LocalDataset, SyntheticTask};
pub use idx::{load_idx, write_idx_images, write_idx_labels};
pub use model::{
    evaluate_accuracy, global_loss, local_loss, loss_and_gradient, predict, ModelKind, ModelSpec,
    ModelVector,
};
pub use sgd::{
    gradient_descent, local_sgd, model_difference, train_local, Batching, LocalTraining,
    ModelObjective, Objective,
};
