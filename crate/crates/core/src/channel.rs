//! Per-round fading draws and the analog superposition seen by the PS.
//!
//! Devices pre-rotate their transmit signal by the conjugate phase of their
//! uplink channel, so after alignment the desired term is real with
//! amplitude `sqrt(P_up d^-ξ) |h|`. In-band CCI plus AWGN is modelled as one
//! real Gaussian vector whose per-dimension power is the full `φ_t`.

use serde::Serialize;

use crate::energy::path_gain;
use crate::rng::{substream, RngStream, StreamKind, StreamLabel};
use crate::topology::Geometry;
use crate::{Error, Result};

/// One round of fading realizations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelDraw {
    /// `|h_m|` per device (drawn for every device, used for active ones).
    pub h_up: Vec<f64>,
    /// `|g_i|²` per in-band interferer on its link to the PS.
    pub g_cci: Vec<f64>,
    /// `|h^in_{m,i}|²`, indexed `[m][i]`.
    pub h_eh_in: Vec<Vec<f64>>,
    /// `|h^out_{m,k}|²`, indexed `[m][k]`.
    pub h_eh_out: Vec<Vec<f64>>,
}

/// Received vector at the PS, same length as the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedSignal {
    pub y: Vec<f64>,
}

impl ReceivedSignal {
    pub fn dim(&self) -> usize {
        self.y.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.y.iter().map(|v| v * v).sum()
    }
}

/// Draws every fading coefficient for round `t`. Each device and each
/// interferer reads its own labelled stream, so the draw for one node does
/// not depend on how many other nodes exist.
pub fn draw_round_channels(geometry: &Geometry, t: usize, seed: u64) -> ChannelDraw {
    let t = t as u64;
    let m_count = geometry.num_devices();
    let i_count = geometry.num_inband();
    let k_count = geometry.num_outband();
    let h_up = (0..m_count)
        .map(|m| {
            substream(seed, StreamLabel::new(StreamKind::Uplink, m as u64, t))
                .sample_complex_gaussian()
                .norm()
        })
        .collect();
    let g_cci = (0..i_count)
        .map(|i| {
            substream(seed, StreamLabel::new(StreamKind::Cci, i as u64, t)).sample_fading_power()
        })
        .collect();
    let fading_row = |kind, m: usize, n: usize| -> Vec<f64> {
        let mut s = substream(seed, StreamLabel::new(kind, m as u64, t));
        (0..n).map(|_| s.sample_fading_power()).collect()
    };
    let h_eh_in = (0..m_count)
        .map(|m| fading_row(StreamKind::HarvestIn, m, i_count))
        .collect();
    let h_eh_out = (0..m_count)
        .map(|m| fading_row(StreamKind::HarvestOut, m, k_count))
        .collect();
    ChannelDraw {
        h_up,
        g_cci,
        h_eh_in,
        h_eh_out,
    }
}

/// Post-alignment amplitude `sqrt(P_up · d^(−ξ)) · |h|`.
pub fn effective_gain(p_up: f64, d_m: f64, xi: f64, h_mag: f64) -> Result<f64> {
    if p_up < 0.0 {
        return Err(Error::Domain(format!(
            "uplink power must be >= 0, got {p_up}"
        )));
    }
    Ok(path_gain(p_up, d_m, xi)?.sqrt() * h_mag)
}

/// Per-interferer received CCI powers `P_i (d_i)^(−ξ) |g_i|²`.
pub fn interferer_powers(
    geometry: &Geometry,
    draw: &ChannelDraw,
    p_in: &[f64],
    xi: f64,
) -> Result<Vec<f64>> {
    if p_in.len() != geometry.num_inband() || draw.g_cci.len() != geometry.num_inband() {
        return Err(Error::Contract(format!(
            "interferer lists misaligned: geometry {}, powers {}, draws {}",
            geometry.num_inband(),
            p_in.len(),
            draw.g_cci.len()
        )));
    }
    p_in.iter()
        .zip(&geometry.d_i_in)
        .zip(&draw.g_cci)
        .map(|((&p, &d), &g)| Ok(path_gain(p, d, xi)? * g))
        .collect()
}

/// `φ_t = Σ_i P_i (d_i)^(−ξ) |g_i|² + N0`.
pub fn interference_power(
    geometry: &Geometry,
    draw: &ChannelDraw,
    p_in: &[f64],
    xi: f64,
    n0: f64,
) -> Result<f64> {
    Ok(interferer_powers(geometry, draw, p_in, xi)?
        .iter()
        .sum::<f64>()
        + n0)
}

/// `y = Σ_m gain_m Δw_m + c` with `c ~ N(0, φ I_d)`.
///
/// With `phi == 0` no noise is drawn and the sum is exact.
pub fn superpose<V: AsRef<[f64]>>(
    updates: &[V],
    gains: &[f64],
    phi: f64,
    d: usize,
    stream: &mut RngStream,
) -> Result<ReceivedSignal> {
    if updates.len() != gains.len() {
        return Err(Error::Contract(format!(
            "{} updates but {} gains",
            updates.len(),
            gains.len()
        )));
    }
    if !(phi >= 0.0) {
        return Err(Error::Domain(format!(
            "interference power must be >= 0, got {phi}"
        )));
    }
    let mut y = vec![0.0; d];
    for (update, &gain) in updates.iter().zip(gains) {
        let update = update.as_ref();
        if update.len() != d {
            return Err(Error::Contract(format!(
                "update of length {} in a {d}-dimensional superposition",
                update.len()
            )));
        }
        for (acc, &v) in y.iter_mut().zip(update) {
            *acc += gain * v;
        }
    }
    if phi > 0.0 {
        let sigma = phi.sqrt();
        for acc in &mut y {
            *acc += sigma * stream.sample_standard_normal();
        }
    }
    Ok(ReceivedSignal { y })
}
