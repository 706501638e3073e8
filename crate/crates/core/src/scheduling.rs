//! Per-device participation decisions: the energy-adaptive epoch/dataset
//! rule and the two fixed-epoch baselines.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::energy::{round_consumption, update_battery, BatteryState};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScheduleDecision {
    pub active: bool,
    pub tau: u32,
    /// Share of the local dataset used; 1 for the full dataset.
    pub fraction: f64,
    pub planned_consumption: f64,
}

impl ScheduleDecision {
    pub const IDLE: ScheduleDecision = ScheduleDecision {
        active: false,
        tau: 0,
        fraction: 1.0,
        planned_consumption: 0.0,
    };

    /// Number of samples trained on for a dataset of `dataset_size`.
    pub fn subset_size(&self, dataset_size: usize) -> usize {
        if self.fraction >= 1.0 {
            dataset_size
        } else {
            (self.fraction * dataset_size as f64).floor() as usize
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SchedulerVariant {
    #[serde(rename = "adaptive")]
    Adaptive,
    #[serde(rename = "with-storage")]
    NonAdaptiveWithStorage,
    #[serde(rename = "no-storage")]
    NonAdaptiveNoStorage,
}

impl SchedulerVariant {
    pub const ALL: [SchedulerVariant; 3] = [
        SchedulerVariant::Adaptive,
        SchedulerVariant::NonAdaptiveWithStorage,
        SchedulerVariant::NonAdaptiveNoStorage,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchedulerVariant::Adaptive => "adaptive",
            SchedulerVariant::NonAdaptiveWithStorage => "with-storage",
            SchedulerVariant::NonAdaptiveNoStorage => "no-storage",
        }
    }
}

impl fmt::Display for SchedulerVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchedulerVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adaptive" => Ok(SchedulerVariant::Adaptive),
            "with-storage" | "nonadaptive-with-storage" => {
                Ok(SchedulerVariant::NonAdaptiveWithStorage)
            }
            "no-storage" | "nonadaptive-no-storage" => Ok(SchedulerVariant::NonAdaptiveNoStorage),
            other => Err(Error::config(
                "scheduler",
                format!(
                    "unknown scheduler `{other}` (expected adaptive, with-storage, no-storage)"
                ),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SchedulerKind {
    pub variant: SchedulerVariant,
    /// Epochs per round for the fixed baselines.
    pub fixed_tau: u32,
    /// Upper bound on adaptive epochs; `None` keeps the raw floor.
    pub tau_cap: Option<u32>,
}

impl SchedulerKind {
    pub fn validate(&self) -> Result<()> {
        if self.variant != SchedulerVariant::Adaptive && self.fixed_tau == 0 {
            return Err(Error::config("fixed_tau", "must be >= 1"));
        }
        if self.tau_cap == Some(0) {
            return Err(Error::config("tau_cap", "must be >= 1 (or off)"));
        }
        Ok(())
    }

    pub fn decide(
        &self,
        b: f64,
        e_up: f64,
        e_comp: f64,
        dataset_size: usize,
    ) -> Result<ScheduleDecision> {
        match self.variant {
            SchedulerVariant::Adaptive => {
                Ok(decide_adaptive(b, e_up, e_comp, dataset_size, self.tau_cap))
            }
            _ => decide_nonadaptive(b, e_up, e_comp, self.fixed_tau),
        }
    }
}

/// Spends whatever the battery allows: as many full epochs as fit, or a
/// single epoch on a random fraction of the data when not even one does.
pub fn decide_adaptive(
    b: f64,
    e_up: f64,
    e_comp: f64,
    dataset_size: usize,
    tau_cap: Option<u32>,
) -> ScheduleDecision {
    if e_comp > 0.0 && b >= e_up + e_comp {
        let raw = ((b - e_up) / e_comp).floor();
        let mut tau = match tau_cap {
            Some(cap) => raw.min(f64::from(cap)),
            None => raw.min(f64::from(u32::MAX)),
        } as u32;
        let mut cost = e_up + f64::from(tau) * e_comp;
        // Guard the floor against rounding up past the battery.
        while cost > b && tau > 1 {
            tau -= 1;
            cost = e_up + f64::from(tau) * e_comp;
        }
        if cost <= b {
            return ScheduleDecision {
                active: true,
                tau: tau.max(1),
                fraction: 1.0,
                planned_consumption: cost,
            };
        }
    }
    if e_comp > 0.0 && b > e_up {
        let r = ((b - e_up) / e_comp).min(1.0);
        if (r * dataset_size as f64).floor() >= 1.0 {
            return ScheduleDecision {
                active: true,
                tau: 1,
                fraction: r,
                planned_consumption: (e_up + r * e_comp).min(b),
            };
        }
    }
    ScheduleDecision::IDLE
}

/// Fixed `fixed_tau` epochs on the full dataset iff the battery covers them.
pub fn decide_nonadaptive(
    b: f64,
    e_up: f64,
    e_comp: f64,
    fixed_tau: u32,
) -> Result<ScheduleDecision> {
    if fixed_tau == 0 {
        return Err(Error::Contract(
            "fixed-epoch schedule needs tau >= 1".into(),
        ));
    }
    let cost = round_consumption(e_up, fixed_tau, e_comp, 1.0)?;
    if b >= cost {
        Ok(ScheduleDecision {
            active: true,
            tau: fixed_tau,
            fraction: 1.0,
            planned_consumption: cost,
        })
    } else {
        Ok(ScheduleDecision::IDLE)
    }
}

/// Battery after the round and the energy thrown away (no-storage resets
/// plus overflow above `b_max`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StorageOutcome {
    pub next: f64,
    pub discarded: f64,
}

pub fn apply_storage_policy(
    variant: SchedulerVariant,
    decision: &ScheduleDecision,
    b: f64,
    harvested: f64,
    b_max: f64,
) -> Result<StorageOutcome> {
    let consumed = decision.planned_consumption;
    match variant {
        SchedulerVariant::Adaptive | SchedulerVariant::NonAdaptiveWithStorage => {
            let next = update_battery(BatteryState::new(b), consumed, harvested, b_max)?.level;
            let discarded = ((b - consumed + harvested) - next).max(0.0);
            Ok(StorageOutcome { next, discarded })
        }
        SchedulerVariant::NonAdaptiveNoStorage => {
            if consumed > b {
                return Err(Error::Contract(format!(
                    "consumption {consumed} J exceeds battery level {b} J"
                )));
            }
            let next = b_max.min(harvested);
            let discarded = (b - consumed) + (harvested - next);
            Ok(StorageOutcome { next, discarded })
        }
    }
}
