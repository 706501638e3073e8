//! Receiver-side scaling of the superposed signal.
//!
//! The PS divides the received vector by `α_t N_t`. Three ways to pick `α_t`
//! are provided: fading-based and MSE-based need the channel state of the
//! active devices (and, for MSE, of the interferers); the variance-based
//! factor needs none. The empirical variance variant sees only the received
//! vector and the active count, which is enforced by its signature.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::ReceivedSignal;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DenoisePolicy {
    /// Mean post-alignment amplitude of the active devices.
    #[serde(rename = "fading")]
    FadingBased,
    /// Minimizer of the aggregation MSE; needs device and CCI CSI.
    #[serde(rename = "mse")]
    MseBased,
    /// Closed form from the average received powers.
    VarianceAnalytic,
    /// Raw second moment of the actual received vector; CSI-free.
    VarianceEmpirical,
}

impl DenoisePolicy {
    pub const ALL: [DenoisePolicy; 4] = [
        DenoisePolicy::FadingBased,
        DenoisePolicy::MseBased,
        DenoisePolicy::VarianceAnalytic,
        DenoisePolicy::VarianceEmpirical,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DenoisePolicy::FadingBased => "fading",
            DenoisePolicy::MseBased => "mse",
            DenoisePolicy::VarianceAnalytic => "variance-analytic",
            DenoisePolicy::VarianceEmpirical => "variance-empirical",
        }
    }

    pub fn needs_csi(self) -> bool {
        matches!(self, DenoisePolicy::FadingBased | DenoisePolicy::MseBased)
    }
}

impl fmt::Display for DenoisePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DenoisePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fading" | "fading-based" => Ok(DenoisePolicy::FadingBased),
            "mse" | "mse-based" => Ok(DenoisePolicy::MseBased),
            "variance-analytic" => Ok(DenoisePolicy::VarianceAnalytic),
            "variance" | "variance-empirical" => Ok(DenoisePolicy::VarianceEmpirical),
            other => Err(Error::config(
                "denoise",
                format!(
                    "unknown policy `{other}` (expected fading, mse, variance-analytic, variance-empirical)"
                ),
            )),
        }
    }
}

/// Ground-truth channel state of the active set for one round.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveCsi {
    /// `sqrt(P_up d^-ξ) |h|` per active device.
    pub amplitudes: Vec<f64>,
    /// `P_up d^-ξ` per active device (no small-scale fading).
    pub powers: Vec<f64>,
    /// `φ_t`, interference plus noise power.
    pub phi: f64,
}

impl ActiveCsi {
    pub fn squared_gains(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a * a).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateOutcome {
    pub s_hat: Vec<f64>,
    pub s_ideal: Vec<f64>,
    pub alpha: f64,
    pub error_sq: f64,
}

/// `(1/N) Σ amplitudes`.
pub fn fading_alpha(amplitudes: &[f64]) -> Result<f64> {
    if amplitudes.is_empty() {
        return Err(Error::NoAggregation);
    }
    Ok(amplitudes.iter().sum::<f64>() / amplitudes.len() as f64)
}

/// `(Σ gains² + φ) / Σ amplitudes`.
pub fn mse_alpha(amplitudes: &[f64], squared_gains: &[f64], phi: f64) -> Result<f64> {
    if amplitudes.is_empty() {
        return Err(Error::NoAggregation);
    }
    if amplitudes.len() != squared_gains.len() {
        return Err(Error::Contract(format!(
            "{} amplitudes but {} squared gains",
            amplitudes.len(),
            squared_gains.len()
        )));
    }
    let denom: f64 = amplitudes.iter().sum();
    if !(denom > 0.0) {
        return Err(Error::DegenerateChannel(
            "every active amplitude is zero; MSE factor undefined".into(),
        ));
    }
    Ok((squared_gains.iter().sum::<f64>() + phi) / denom)
}

/// `(d/N²) Σ (a_m/α − 1)² + d φ / (α² N²)`.
pub fn mse_objective(alpha: f64, amplitudes: &[f64], phi: f64, n: usize, d: usize) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::Domain(format!(
            "denoising factor must be > 0, got {alpha}"
        )));
    }
    let n = n as f64;
    let d = d as f64;
    let misfit: f64 = amplitudes.iter().map(|a| (a / alpha - 1.0).powi(2)).sum();
    Ok(d / (n * n) * misfit + d * phi / (alpha * alpha * n * n))
}

/// `(1/N) sqrt(Σ powers + φ)`.
pub fn variance_alpha_analytic(powers: &[f64], phi: f64) -> Result<f64> {
    if powers.is_empty() {
        return Err(Error::NoAggregation);
    }
    Ok((powers.iter().sum::<f64>() + phi).sqrt() / powers.len() as f64)
}

/// `sqrt(‖y‖² / d) / N`: raw second moment, no mean subtraction.
pub fn variance_alpha_empirical(y: &ReceivedSignal, n: usize) -> Result<f64> {
    if y.dim() == 0 {
        return Err(Error::Domain("received signal has zero dimension".into()));
    }
    if n == 0 {
        return Err(Error::NoAggregation);
    }
    Ok((y.norm_sqr() / y.dim() as f64).sqrt() / n as f64)
}

/// `ŝ = y / (α N)`.
pub fn denoise(y: &ReceivedSignal, alpha: f64, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::NoAggregation);
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::DegenerateChannel(format!(
            "denoising factor {alpha} is not positive and finite"
        )));
    }
    let scale = alpha * n as f64;
    Ok(y.y.iter().map(|v| v / scale).collect())
}

/// Elementwise mean of the model differences.
pub fn ideal_aggregate<V: AsRef<[f64]>>(diffs: &[V]) -> Result<Vec<f64>> {
    let first = diffs.first().ok_or(Error::NoAggregation)?.as_ref();
    let d = first.len();
    let mut sum = vec![0.0; d];
    for diff in diffs {
        let diff = diff.as_ref();
        if diff.len() != d {
            return Err(Error::Contract(format!(
                "model differences of lengths {d} and {}",
                diff.len()
            )));
        }
        for (acc, v) in sum.iter_mut().zip(diff) {
            *acc += v;
        }
    }
    let n = diffs.len() as f64;
    Ok(sum.into_iter().map(|v| v / n).collect())
}

/// `‖ŝ − s‖²`.
pub fn aggregation_error(s_hat: &[f64], s_ideal: &[f64]) -> Result<f64> {
    if s_hat.len() != s_ideal.len() {
        return Err(Error::Contract(format!(
            "aggregate lengths differ: {} vs {}",
            s_hat.len(),
            s_ideal.len()
        )));
    }
    Ok(s_hat
        .iter()
        .zip(s_ideal)
        .map(|(a, b)| (a - b).powi(2))
        .sum())
}

/// Picks `α_t` under `policy`. The CSI-free variant never touches `csi`.
pub fn select_alpha(policy: DenoisePolicy, y: &ReceivedSignal, csi: &ActiveCsi) -> Result<f64> {
    match policy {
        DenoisePolicy::FadingBased => fading_alpha(&csi.amplitudes),
        DenoisePolicy::MseBased => mse_alpha(&csi.amplitudes, &csi.squared_gains(), csi.phi),
        DenoisePolicy::VarianceAnalytic => variance_alpha_analytic(&csi.powers, csi.phi),
        DenoisePolicy::VarianceEmpirical => variance_alpha_empirical(y, csi.amplitudes.len()),
    }
}

/// Denoises `y` and scores it against the ideal mean of `diffs`.
pub fn aggregate<V: AsRef<[f64]>>(
    policy: DenoisePolicy,
    y: &ReceivedSignal,
    csi: &ActiveCsi,
    diffs: &[V],
) -> Result<AggregateOutcome> {
    let n = diffs.len();
    if csi.amplitudes.len() != n || csi.powers.len() != n {
        return Err(Error::Contract(format!(
            "CSI for {} devices but {n} model differences",
            csi.amplitudes.len()
        )));
    }
    let alpha = select_alpha(policy, y, csi)?;
    let s_hat = denoise(y, alpha, n)?;
    let s_ideal = ideal_aggregate(diffs)?;
    let error_sq = aggregation_error(&s_hat, &s_ideal)?;
    Ok(AggregateOutcome {
        s_hat,
        s_ideal,
        alpha,
        error_sq,
    })
}
