//! Runtime convergence diagnostic built from measured quantities.

use serde::Serialize;

use crate::sim::RoundRecord;
use crate::{Error, Result};

/// `Δ0/(η T τ_min) + L η τ_max G²/2 + L ζ²/(2 η τ_min)`.
#[allow(clippy::too_many_arguments)]
pub fn convergence_bound(
    delta0: f64,
    eta: f64,
    rounds: usize,
    tau_min: f64,
    tau_max: f64,
    l: f64,
    g_sq: f64,
    zeta_sq: f64,
) -> Result<f64> {
    if !(eta > 0.0) || rounds == 0 || !(tau_min > 0.0) || !(tau_max > 0.0) {
        return Err(Error::Domain(format!(
            "bound needs eta, T, tau_min, tau_max > 0 (got {eta}, {rounds}, {tau_min}, {tau_max})"
        )));
    }
    if tau_min > tau_max {
        return Err(Error::Domain(format!(
            "tau_min {tau_min} > tau_max {tau_max}"
        )));
    }
    let t = rounds as f64;
    Ok(delta0 / (eta * t * tau_min)
        + l * eta * tau_max * g_sq / 2.0
        + l * zeta_sq / (2.0 * eta * tau_min))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceDiagnostics {
    /// Largest observed `‖∇F_m(w_t)‖²` over participating devices.
    pub g_sq_hat: f64,
    /// Largest observed aggregation error `‖ŝ − s‖²`.
    pub zeta_sq_hat: f64,
    /// Mean epochs of the active set per round; `None` for idle rounds.
    pub tau_bar_per_round: Vec<Option<f64>>,
    pub tau_hat_min: f64,
    pub tau_hat_max: f64,
    /// `F(w_1) − min_t F(w_t)`, the observed minimum standing in for `F*`.
    pub delta0: f64,
    pub bound_value: f64,
    /// Mean of `‖∇F(w_t)‖²` over evaluated rounds.
    pub avg_grad_norm_sq: f64,
}

/// Summarizes a finished run. `initial_loss` is `F(w_1)`; per-device
/// gradient norms are read from the records.
pub fn estimate_diagnostics(
    records: &[RoundRecord],
    initial_loss: f64,
    eta: f64,
    l: f64,
) -> Result<ConvergenceDiagnostics> {
    let tau_bar_per_round: Vec<Option<f64>> = records
        .iter()
        .map(|r| {
            (!r.tau_per_device.is_empty()).then(|| {
                r.tau_per_device.iter().map(|&t| f64::from(t)).sum::<f64>()
                    / r.tau_per_device.len() as f64
            })
        })
        .collect();
    let active: Vec<f64> = tau_bar_per_round.iter().flatten().copied().collect();
    if active.is_empty() {
        return Err(Error::DiagnosticsUnavailable);
    }
    let tau_hat_min = active.iter().copied().fold(f64::INFINITY, f64::min);
    let tau_hat_max = active.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let g_sq_hat = records
        .iter()
        .flat_map(|r| r.local_grad_norms_sq.iter().copied())
        .fold(0.0, f64::max);
    let zeta_sq_hat = records
        .iter()
        .filter_map(|r| r.error_sq)
        .fold(0.0, f64::max);
    let f_min = records
        .iter()
        .filter_map(|r| r.global_loss)
        .fold(initial_loss, f64::min);
    let delta0 = initial_loss - f_min;
    let grads: Vec<f64> = records.iter().filter_map(|r| r.grad_norm_sq).collect();
    let avg_grad_norm_sq = if grads.is_empty() {
        f64::NAN
    } else {
        grads.iter().sum::<f64>() / grads.len() as f64
    };
    let bound_value = convergence_bound(
        delta0,
        eta,
        records.len(),
        tau_hat_min,
        tau_hat_max,
        l,
        g_sq_hat,
        zeta_sq_hat,
    )?;
    Ok(ConvergenceDiagnostics {
        g_sq_hat,
        zeta_sq_hat,
        tau_bar_per_round,
        tau_hat_min,
        tau_hat_max,
        delta0,
        bound_value,
        avg_grad_norm_sq,
    })
}
