//! RF energy harvesting, per-round energy consumption and battery dynamics.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Physical energy constants shared by every device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    /// Round (harvesting) duration, seconds.
    pub t_h: f64,
    /// RF-to-DC conversion efficiency in (0, 1].
    pub delta: f64,
    /// Path-loss exponent.
    pub xi: f64,
    /// Transmit power of each in-band source, watts.
    pub p_in: Vec<f64>,
    /// Transmit power of each out-band source, watts.
    pub p_out: Vec<f64>,
    /// Effective switched capacitance.
    pub kappa: f64,
    /// CPU cycles per sample.
    pub c_m: f64,
    /// Processor frequency, Hz.
    pub f_m: f64,
    /// Uplink energy per transmission, joules.
    pub e_up: f64,
    /// Battery capacity, joules.
    pub b_max: f64,
}

impl EnergyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::config("delta_m", "δ ∈ (0,1] required"));
        }
        if !(self.xi > 0.0 && self.xi.is_finite()) {
            return Err(Error::config("xi", "path-loss exponent must be > 0"));
        }
        let non_negative = [
            ("T_h", self.t_h),
            ("kappa", self.kappa),
            ("C_m", self.c_m),
            ("f_m", self.f_m),
            ("E_up", self.e_up),
            ("B_max", self.b_max),
        ];
        for (field, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(
                    field,
                    format!("must be finite and >= 0, got {v}"),
                ));
            }
        }
        if self
            .p_in
            .iter()
            .chain(&self.p_out)
            .any(|p| !(*p >= 0.0 && p.is_finite()))
        {
            return Err(Error::config(
                "P_in/P_out",
                "powers must be finite and >= 0",
            ));
        }
        Ok(())
    }

    /// Per-epoch computation energy for a dataset of `dataset_size` samples.
    pub fn computation_energy(&self, dataset_size: usize) -> f64 {
        computation_energy(self.kappa, self.c_m, dataset_size, self.f_m)
    }
}

/// Stored energy of one device, joules.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct BatteryState {
    pub level: f64,
}

impl BatteryState {
    pub const fn new(level: f64) -> Self {
        Self { level }
    }
}

/// Received power `P · d^(−ξ)`.
pub fn path_gain(power: f64, distance: f64, xi: f64) -> Result<f64> {
    if !(distance > 0.0) {
        return Err(Error::Domain(format!(
            "distance must be > 0, got {distance}"
        )));
    }
    Ok(power * distance.powf(-xi))
}

/// Energy harvested by one device over a round:
/// `T_h · δ · (Σ_i L_i^in |h_i^in|² + Σ_k L_k^out |h_k^out|²)`.
///
/// `d_in`/`d_out` are the device's distances to each source and `h_in_sq`/
/// `h_out_sq` the squared fading magnitudes drawn for this round.
pub fn harvested_energy(
    params: &EnergyParams,
    h_in_sq: &[f64],
    h_out_sq: &[f64],
    d_in: &[f64],
    d_out: &[f64],
) -> Result<f64> {
    let i = params.p_in.len();
    let k = params.p_out.len();
    if h_in_sq.len() != i || d_in.len() != i || h_out_sq.len() != k || d_out.len() != k {
        return Err(Error::Contract(format!(
            "harvest inputs misaligned: I = {i} (draws {}, distances {}), K = {k} (draws {}, distances {})",
            h_in_sq.len(),
            d_in.len(),
            h_out_sq.len(),
            d_out.len()
        )));
    }
    let mut received = 0.0;
    for ((&p, &d), &h) in params.p_in.iter().zip(d_in).zip(h_in_sq) {
        received += path_gain(p, d, params.xi)? * h;
    }
    for ((&p, &d), &h) in params.p_out.iter().zip(d_out).zip(h_out_sq) {
        received += path_gain(p, d, params.xi)? * h;
    }
    Ok(params.t_h * params.delta * received)
}

/// `κ · C_m · |D| · f_m²`, joules per epoch.
pub fn computation_energy(kappa: f64, c_m: f64, dataset_size: usize, f_m: f64) -> f64 {
    kappa * c_m * dataset_size as f64 * f_m * f_m
}

/// Energy spent in a participating round. `fraction < 1` is the
/// single-epoch fractional-dataset mode.
pub fn round_consumption(e_up: f64, tau: u32, e_comp: f64, fraction: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Contract(format!(
            "fraction {fraction} outside [0, 1]"
        )));
    }
    if fraction < 1.0 {
        if tau != 1 {
            return Err(Error::Contract(format!(
                "fractional dataset requires exactly one epoch, got tau = {tau}"
            )));
        }
        return Ok(e_up + fraction * e_comp);
    }
    Ok(e_up + f64::from(tau) * e_comp)
}

/// `min(B_max, level − consumed + harvested)`.
pub fn update_battery(
    state: BatteryState,
    consumed: f64,
    harvested: f64,
    b_max: f64,
) -> Result<BatteryState> {
    if consumed > state.level {
        return Err(Error::Contract(format!(
            "consumption {consumed} J exceeds battery level {} J",
            state.level
        )));
    }
    Ok(BatteryState::new(
        b_max.min(state.level - consumed + harvested),
    ))
}

/// Activity indicator: the battery covers the round's consumption.
pub fn is_eligible(level: f64, required: f64) -> bool {
    level >= required
}
