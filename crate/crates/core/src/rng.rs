//! Labelled, counter-based random substreams.
//!
//! Every random quantity in a run is drawn from a stream identified by
//! `(root_seed, kind, entity, round)`. The four words form the 256-bit key of
//! a ChaCha8 generator, so each label owns an independent keystream and no
//! generator state is ever shared between devices, rounds, or threads.

use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// What a stream is used for. Tags are part of the key and must stay stable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamKind {
    Geometry,
    Uplink,
    Cci,
    HarvestIn,
    HarvestOut,
    Noise,
    TaskMeans,
    Dataset,
    TestSet,
    Subset,
    Minibatch,
    ModelInit,
}

impl StreamKind {
    const fn tag(self) -> u64 {
        match self {
            StreamKind::Geometry => 1,
            StreamKind::Uplink => 2,
            StreamKind::Cci => 3,
            StreamKind::HarvestIn => 4,
            StreamKind::HarvestOut => 5,
            StreamKind::Noise => 6,
            StreamKind::TaskMeans => 7,
            StreamKind::Dataset => 8,
            StreamKind::TestSet => 9,
            StreamKind::Subset => 10,
            StreamKind::Minibatch => 11,
            StreamKind::ModelInit => 12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamLabel {
    pub kind: StreamKind,
    pub entity: u64,
    pub round: u64,
}

impl StreamLabel {
    pub const fn new(kind: StreamKind, entity: u64, round: u64) -> Self {
        Self {
            kind,
            entity,
            round,
        }
    }
}

/// A deterministic generator bound to one `(root_seed, label)` pair.
#[derive(Debug, Clone)]
pub struct RngStream {
    root_seed: u64,
    label: StreamLabel,
    inner: ChaCha8Rng,
}

/// Opens the substream for `label` under `root_seed`.
pub fn substream(root_seed: u64, label: StreamLabel) -> RngStream {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&root_seed.to_le_bytes());
    key[8..16].copy_from_slice(&label.kind.tag().to_le_bytes());
    key[16..24].copy_from_slice(&label.entity.to_le_bytes());
    key[24..32].copy_from_slice(&label.round.to_le_bytes());
    RngStream {
        root_seed,
        label,
        inner: ChaCha8Rng::from_seed(key),
    }
}

impl RngStream {
    pub fn root_seed(&self) -> u64 {
        self.root_seed
    }

    pub fn label(&self) -> StreamLabel {
        self.label
    }

    /// Circularly-symmetric CN(0, 1): real and imaginary parts are
    /// independent N(0, 1/2), so `E|h|^2 = 1`.
    pub fn sample_complex_gaussian(&mut self) -> Complex64 {
        let re: f64 = self.inner.sample(StandardNormal);
        let im: f64 = self.inner.sample(StandardNormal);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    }

    /// `|h|^2` of a CN(0, 1) draw (unit-mean exponential).
    pub fn sample_fading_power(&mut self) -> f64 {
        self.sample_complex_gaussian().norm_sqr()
    }

    pub fn sample_standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform on `[0, 1)`.
    pub fn sample_unit(&mut self) -> f64 {
        self.inner.random::<f64>()
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const UPLINK_0_1: StreamLabel = StreamLabel::new(StreamKind::Uplink, 0, 1);

    fn first_n(mut s: RngStream, n: usize) -> Vec<u64> {
        (0..n).map(|_| s.next_u64()).collect()
    }

    #[test]
    fn same_label_same_sequence() {
        assert_eq!(
            first_n(substream(42, UPLINK_0_1), 64),
            first_n(substream(42, UPLINK_0_1), 64)
        );
    }

    #[test]
    fn different_entity_or_seed_differs() {
        let base = first_n(substream(42, UPLINK_0_1), 4);
        let other_entity = first_n(substream(42, StreamLabel::new(StreamKind::Uplink, 1, 1)), 4);
        let other_seed = first_n(substream(43, UPLINK_0_1), 4);
        let other_kind = first_n(substream(42, StreamLabel::new(StreamKind::Cci, 0, 1)), 4);
        assert_ne!(base[0], other_entity[0]);
        assert_ne!(base, other_seed);
        assert_ne!(base, other_kind);
    }

    #[test]
    fn complex_gaussian_moments() {
        let mut s = substream(7, UPLINK_0_1);
        let n = 100_000;
        let (mut sum_re, mut sum_im, mut sum_pow) = (0.0, 0.0, 0.0);
        let mut mags = Vec::with_capacity(n);
        for _ in 0..n {
            let h = s.sample_complex_gaussian();
            sum_re += h.re;
            sum_im += h.im;
            sum_pow += h.norm_sqr();
            mags.push(h.norm());
        }
        let nf = n as f64;
        // Var|h|^2 = 1, so 3 sigma of the mean is 3/sqrt(n) ~ 0.0095.
        assert!((sum_pow / nf - 1.0).abs() < 0.02);
        assert!((sum_re / nf).abs() < 0.01);
        assert!((sum_im / nf).abs() < 0.01);
        mags.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = mags[n / 2];
        // Rayleigh(scale 1/sqrt 2) median = sqrt(ln 2).
        assert!((median - std::f64::consts::LN_2.sqrt()).abs() < 0.01);
    }

    #[test]
    fn substreams_are_uncorrelated() {
        let n = 10_000;
        let mut a = substream(11, UPLINK_0_1);
        let mut b = substream(11, StreamLabel::new(StreamKind::Uplink, 1, 1));
        let xa: Vec<f64> = (0..n).map(|_| a.sample_complex_gaussian().norm()).collect();
        let xb: Vec<f64> = (0..n).map(|_| b.sample_complex_gaussian().norm()).collect();
        let corr = pearson(&xa, &xb);
        assert!(corr.abs() < 0.02, "corr = {corr}");
    }

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }
}
