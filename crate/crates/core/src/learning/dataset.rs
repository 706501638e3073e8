use crate::rng::{substream, RngStream, StreamKind, StreamLabel};
use crate::{Error, Result};

/// Labelled samples stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalDataset {
    features: Vec<f64>,
    labels: Vec<u32>,
    input_dim: usize,
}

impl LocalDataset {
    pub fn new(features: Vec<f64>, labels: Vec<u32>, input_dim: usize) -> Result<Self> {
        if input_dim == 0 || features.len() != labels.len() * input_dim {
            return Err(Error::Contract(format!(
                "{} feature values for {} samples of dimension {input_dim}",
                features.len(),
                labels.len()
            )));
        }
        Ok(Self {
            features,
            labels,
            input_dim,
        })
    }

    pub fn empty(input_dim: usize) -> Self {
        Self {
            features: Vec::new(),
            labels: Vec::new(),
            input_dim,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.features[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], u32)> + '_ {
        self.features
            .chunks_exact(self.input_dim)
            .zip(self.labels.iter().copied())
    }

    /// Copies the listed rows, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut features = Vec::with_capacity(indices.len() * self.input_dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.features(i));
            labels.push(self.labels[i]);
        }
        Self {
            features,
            labels,
            input_dim: self.input_dim,
        }
    }

    /// Uniform subset of `size` rows without replacement (partial
    /// Fisher-Yates), returned in draw order.
    pub fn random_subset(&self, size: usize, stream: &mut RngStream) -> Self {
        use rand::seq::index::sample;
        let size = size.min(self.len());
        let picked: Vec<usize> = sample(stream, self.len(), size).into_vec();
        self.subset(&picked)
    }
}

/// Gaussian class clusters with unit isotropic noise. Class means are shared
/// by every device and drawn from the task stream of the root seed, so the
/// partition across devices is IID.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    means: Vec<Vec<f64>>,
    input_dim: usize,
}

impl SyntheticTask {
    /// `separation` is the root-mean-square distance between two class
    /// means, in units of the per-axis noise standard deviation.
    pub fn new(num_classes: usize, input_dim: usize, separation: f64, seed: u64) -> Result<Self> {
        if !(separation >= 0.0 && separation.is_finite()) {
            return Err(Error::config("separation", "must be finite and >= 0"));
        }
        if input_dim == 0 || num_classes == 0 {
            return Err(Error::config(
                "input_dim",
                "task needs >= 1 class and dimension",
            ));
        }
        let mut s = substream(seed, StreamLabel::new(StreamKind::TaskMeans, 0, 0));
        // u ~ N(0, I/D) gives E‖u_j − u_k‖² = 2.
        let scale = separation / (2.0 * input_dim as f64).sqrt();
        let means = (0..num_classes)
            .map(|_| {
                (0..input_dim)
                    .map(|_| scale * s.sample_standard_normal())
                    .collect()
            })
            .collect();
        Ok(Self { means, input_dim })
    }

    pub fn num_classes(&self) -> usize {
        self.means.len()
    }

    pub fn sample(&self, n: usize, stream: &mut RngStream) -> LocalDataset {
        let k = self.means.len();
        let mut features = Vec::with_capacity(n * self.input_dim);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let class = ((stream.sample_unit() * k as f64) as usize).min(k - 1);
            for &mu in &self.means[class] {
                features.push(mu + stream.sample_standard_normal());
            }
            labels.push(class as u32);
        }
        LocalDataset {
            features,
            labels,
            input_dim: self.input_dim,
        }
    }
}

/// One device's share of a synthetic task keyed by `stream`'s root seed.
pub fn make_synthetic_dataset(
    num_classes: usize,
    samples_per_device: usize,
    input_dim: usize,
    separation: f64,
    stream: &mut RngStream,
) -> Result<LocalDataset> {
    let task = SyntheticTask::new(num_classes, input_dim, separation, stream.root_seed())?;
    Ok(task.sample(samples_per_device, stream))
}
