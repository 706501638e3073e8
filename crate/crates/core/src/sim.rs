//! The round loop: harvest, schedule, train, superpose, denoise, update.

use rayon::prelude::*;

use crate::channel::{draw_round_channels, effective_gain, interference_power, superpose};
use crate::config::{DatasetKind, SimConfig};
use crate::denoising::{aggregate, ideal_aggregate, ActiveCsi};
use crate::diagnostics::{estimate_diagnostics, ConvergenceDiagnostics};
use crate::energy::{harvested_energy, path_gain, EnergyParams};
use crate::learning::{
    evaluate_accuracy, load_idx, loss_and_gradient, model_difference, train_local, LocalDataset,
    ModelSpec, ModelVector, SyntheticTask,
};
use crate::rng::{substream, StreamKind, StreamLabel};
use crate::scheduling::{apply_storage_policy, ScheduleDecision, SchedulerKind, SchedulerVariant};
use crate::topology::{build_geometry, Geometry};
use crate::{Error, Result};

/// Per-round metrics. Per-device vectors are indexed by device id; the
/// `tau_per_device`, `fractions` and `local_grad_norms_sq` lists follow
/// `active_ids`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoundRecord {
    pub t: usize,
    pub active_ids: Vec<usize>,
    pub n_active: usize,
    pub tau_per_device: Vec<u32>,
    pub fractions: Vec<f64>,
    /// `None` when no device was active.
    pub alpha: Option<f64>,
    pub error_sq: Option<f64>,
    pub phi: f64,
    /// `F(w_{t+1})` over every device's data, at evaluation rounds.
    pub global_loss: Option<f64>,
    pub test_accuracy: Option<f64>,
    /// `‖∇F(w_t)‖²` over the union of active datasets, at evaluation rounds.
    pub grad_norm_sq: Option<f64>,
    /// `‖∇F_m(w_t)‖²` on the data each active device trained on.
    pub local_grad_norms_sq: Vec<f64>,
    pub harvested: Vec<f64>,
    pub consumed: Vec<f64>,
    /// Energy lost to battery overflow or, without storage, to the reset.
    pub discarded: Vec<f64>,
    pub battery_before: Vec<f64>,
    pub battery_after: Vec<f64>,
    pub cumulative_consumed: f64,
    pub cumulative_discarded: f64,
    /// Consumed plus discarded energy summed over devices and rounds so far.
    pub cumulative_energy: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: SimConfig,
    pub geometry: Geometry,
    pub records: Vec<RoundRecord>,
    /// `None` when every round was idle.
    pub diagnostics: Option<ConvergenceDiagnostics>,
    pub initial_loss: f64,
    pub initial_accuracy: f64,
    pub final_model: ModelVector,
}

impl RunOutput {
    /// Accuracy at the last evaluated round, or the untrained accuracy.
    pub fn final_accuracy(&self) -> f64 {
        self.records
            .iter()
            .rev()
            .find_map(|r| r.test_accuracy)
            .unwrap_or(self.initial_accuracy)
    }
}

/// Mutable state carried from one round to the next.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub model: ModelVector,
    pub batteries: Vec<f64>,
    pub cumulative_consumed: f64,
    pub cumulative_discarded: f64,
}

/// Everything fixed for the lifetime of a run.
pub struct Simulation {
    config: SimConfig,
    geometry: Geometry,
    params: EnergyParams,
    spec: ModelSpec,
    scheduler: SchedulerKind,
    datasets: Vec<LocalDataset>,
    test: LocalDataset,
    p_up: f64,
    n0: f64,
    pool: rayon::ThreadPool,
}

struct DeviceOutcome {
    harvested: f64,
    decision: ScheduleDecision,
    diff: Option<Vec<f64>>,
    grad_sq: f64,
}

fn in_context(err: Error, t: usize, m: Option<usize>) -> Error {
    match err {
        Error::Numerical { message, .. } => Error::Numerical {
            round: t,
            device: m,
            message,
        },
        other => other,
    }
}

fn non_finite(t: usize, m: Option<usize>, what: &str) -> Error {
    Error::Numerical {
        round: t,
        device: m,
        message: format!("{what} is not finite"),
    }
}

fn build_datasets(config: &SimConfig) -> Result<(Vec<LocalDataset>, LocalDataset)> {
    let n = config.samples_per_device;
    match config.dataset {
        DatasetKind::Synthetic => {
            let task = SyntheticTask::new(
                config.num_classes,
                config.input_dim,
                config.separation,
                config.seed,
            )?;
            let devices = (0..config.devices)
                .map(|m| {
                    let mut s = substream(
                        config.seed,
                        StreamLabel::new(StreamKind::Dataset, m as u64, 0),
                    );
                    task.sample(n, &mut s)
                })
                .collect();
            let mut s = substream(config.seed, StreamLabel::new(StreamKind::TestSet, 0, 0));
            Ok((devices, task.sample(config.test_samples, &mut s)))
        }
        DatasetKind::Idx => {
            let path = |p: &Option<std::path::PathBuf>| p.clone().unwrap_or_default();
            let train = load_idx(
                path(&config.idx_train_images),
                path(&config.idx_train_labels),
            )?;
            let test = load_idx(path(&config.idx_test_images), path(&config.idx_test_labels))?;
            if train.input_dim() != config.input_dim {
                return Err(Error::config(
                    "input_dim",
                    format!("IDX images have {} pixels", train.input_dim()),
                ));
            }
            let max_label = train
                .labels()
                .iter()
                .chain(test.labels())
                .max()
                .copied()
                .unwrap_or(0);
            if max_label as usize >= config.num_classes {
                return Err(Error::config(
                    "num_classes",
                    format!("IDX labels reach {max_label}"),
                ));
            }
            let needed = n * config.devices;
            if needed > train.len() {
                return Err(Error::config(
                    "samples_per_device",
                    format!(
                        "{needed} samples needed, training file holds {}",
                        train.len()
                    ),
                ));
            }
            // IID split: one shuffle, then consecutive blocks.
            let mut s = substream(
                config.seed,
                StreamLabel::new(StreamKind::Dataset, u64::MAX, 0),
            );
            let order = rand::seq::index::sample(&mut s, train.len(), needed).into_vec();
            let devices = order.chunks(n).map(|idx| train.subset(idx)).collect();
            Ok((devices, test))
        }
    }
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self> {
        config.validate()?;
        let geometry = build_geometry(&config.placement(), config.seed)?;
        let (datasets, test) = build_datasets(&config)?;
        let mut builder = rayon::ThreadPoolBuilder::new();
        if config.workers > 0 {
            builder = builder.num_threads(config.workers);
        }
        let pool = builder
            .build()
            .map_err(|e| Error::config("workers", e.to_string()))?;
        Ok(Self {
            params: config.energy_params(),
            spec: config.model_spec(),
            scheduler: config.scheduler_kind(),
            p_up: config.p_up.watts(),
            n0: config.n0.watts(),
            geometry,
            datasets,
            test,
            pool,
            config,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn datasets(&self) -> &[LocalDataset] {
        &self.datasets
    }

    pub fn test_set(&self) -> &LocalDataset {
        &self.test
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn initial_state(&self) -> SimState {
        let mut s = substream(
            self.config.seed,
            StreamLabel::new(StreamKind::ModelInit, 0, 0),
        );
        SimState {
            model: self.spec.initial_model(&mut s),
            batteries: vec![self.config.b_init; self.config.devices],
            cumulative_consumed: 0.0,
            cumulative_discarded: 0.0,
        }
    }

    /// `F(w)` over every device's data and test accuracy.
    pub fn evaluate(&self, w: &ModelVector) -> Result<(f64, f64)> {
        let losses: Vec<f64> = self.pool.install(|| {
            self.datasets
                .par_iter()
                .map(|d| loss_and_gradient(&self.spec, &w.w, d, None))
                .collect::<Result<Vec<f64>>>()
        })?;
        let total: usize = self.datasets.iter().map(LocalDataset::len).sum();
        let mut acc = 0.0;
        for (l, d) in losses.iter().zip(&self.datasets) {
            acc += d.len() as f64 * l;
        }
        let accuracy = evaluate_accuracy(w, &self.test, &self.spec)?;
        Ok((acc / total as f64, accuracy))
    }

    /// Gradient of the size-weighted loss over the listed devices' data.
    fn union_grad_norm_sq(&self, w: &ModelVector, ids: &[usize]) -> Result<f64> {
        let d = self.spec.dim();
        let parts: Vec<Vec<f64>> = self.pool.install(|| {
            ids.par_iter()
                .map(|&m| {
                    let mut g = vec![0.0; d];
                    loss_and_gradient(&self.spec, &w.w, &self.datasets[m], Some(&mut g))?;
                    let n = self.datasets[m].len() as f64;
                    g.iter_mut().for_each(|v| *v *= n);
                    Ok(g)
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let total: usize = ids.iter().map(|&m| self.datasets[m].len()).sum();
        let mut g = vec![0.0; d];
        for p in &parts {
            for (a, b) in g.iter_mut().zip(p) {
                *a += b;
            }
        }
        Ok(g.iter().map(|v| (v / total as f64).powi(2)).sum())
    }

    fn device_round(
        &self,
        m: usize,
        t: usize,
        w: &ModelVector,
        battery: f64,
        draw_in: &[f64],
        draw_out: &[f64],
    ) -> Result<DeviceOutcome> {
        let seed = self.config.seed;
        let harvested = harvested_energy(
            &self.params,
            draw_in,
            draw_out,
            &self.geometry.d_mi_in[m],
            &self.geometry.d_mk_out[m],
        )?;
        let data = &self.datasets[m];
        let e_comp = self.params.computation_energy(data.len());
        let decision = self
            .scheduler
            .decide(battery, self.params.e_up, e_comp, data.len())?;
        if !decision.active {
            return Ok(DeviceOutcome {
                harvested,
                decision,
                diff: None,
                grad_sq: 0.0,
            });
        }
        let label = |kind| StreamLabel::new(kind, m as u64, t as u64);
        let subset;
        let train_data = if decision.fraction < 1.0 {
            let mut s = substream(seed, label(StreamKind::Subset));
            subset = data.random_subset(decision.subset_size(data.len()), &mut s);
            &subset
        } else {
            data
        };
        let mut s = substream(seed, label(StreamKind::Minibatch));
        let trained = train_local(
            w,
            train_data,
            self.config.eta,
            decision.tau,
            &self.spec,
            self.config.batching(),
            &mut s,
        )?;
        trained.model.ensure_finite()?;
        Ok(DeviceOutcome {
            harvested,
            decision,
            diff: Some(model_difference(w, &trained.model)?),
            grad_sq: trained.grad_norms_sq.first().copied().unwrap_or(0.0),
        })
    }

    /// Executes round `t` (1-based) and advances `state`.
    pub fn run_round(&self, state: &mut SimState, t: usize) -> Result<RoundRecord> {
        let cfg = &self.config;
        let geo = &self.geometry;
        let draw = draw_round_channels(geo, t, cfg.seed);
        let phi = interference_power(geo, &draw, &self.params.p_in, cfg.xi, self.n0)?;

        let w = &state.model;
        let outcomes: Vec<DeviceOutcome> = self.pool.install(|| {
            (0..cfg.devices)
                .into_par_iter()
                .map(|m| {
                    self.device_round(
                        m,
                        t,
                        w,
                        state.batteries[m],
                        &draw.h_eh_in[m],
                        &draw.h_eh_out[m],
                    )
                    .map_err(|e| in_context(e, t, Some(m)))
                })
                .collect::<Result<Vec<_>>>()
        })?;

        let mut rec = RoundRecord {
            t,
            phi,
            battery_before: state.batteries.clone(),
            ..RoundRecord::default()
        };
        let mut diffs: Vec<&[f64]> = Vec::new();
        let mut amplitudes = Vec::new();
        let mut powers = Vec::new();
        for (m, o) in outcomes.iter().enumerate() {
            if let Some(diff) = &o.diff {
                rec.active_ids.push(m);
                rec.tau_per_device.push(o.decision.tau);
                rec.fractions.push(o.decision.fraction);
                rec.local_grad_norms_sq.push(o.grad_sq);
                diffs.push(diff);
                amplitudes.push(effective_gain(self.p_up, geo.d_m[m], cfg.xi, draw.h_up[m])?);
                powers.push(path_gain(self.p_up, geo.d_m[m], cfg.xi)?);
            }
        }
        rec.n_active = rec.active_ids.len();

        let evaluate = t.is_multiple_of(cfg.eval_every) || t == cfg.rounds;
        if evaluate && rec.n_active > 0 {
            rec.grad_norm_sq = Some(self.union_grad_norm_sq(w, &rec.active_ids)?);
        }

        let mut next_model = state.model.clone();
        if rec.n_active > 0 {
            let step = if cfg.oracle_aggregate {
                rec.error_sq = Some(0.0);
                ideal_aggregate(&diffs)?
            } else {
                let mut noise =
                    substream(cfg.seed, StreamLabel::new(StreamKind::Noise, 0, t as u64));
                let y = superpose(&diffs, &amplitudes, phi, self.spec.dim(), &mut noise)?;
                let csi = ActiveCsi {
                    amplitudes,
                    powers,
                    phi,
                };
                let out = aggregate(cfg.denoise, &y, &csi, &diffs)?;
                rec.alpha = Some(out.alpha);
                rec.error_sq = Some(out.error_sq);
                out.s_hat
            };
            for (wi, si) in next_model.w.iter_mut().zip(&step) {
                *wi -= si;
            }
            if !next_model.is_finite() {
                return Err(non_finite(t, None, "global model"));
            }
        }

        for (m, o) in outcomes.iter().enumerate() {
            let b = state.batteries[m];
            let store = apply_storage_policy(
                self.scheduler.variant,
                &o.decision,
                b,
                o.harvested,
                cfg.b_max,
            )
            .map_err(|e| in_context(e, t, Some(m)))?;
            let consumed = o.decision.planned_consumption;
            check_ledger(
                self.scheduler.variant,
                b,
                consumed,
                o.harvested,
                cfg.b_max,
                store.next,
            )
            .map_err(|msg| Error::Contract(format!("round {t}, device {m}: {msg}")))?;
            rec.harvested.push(o.harvested);
            rec.consumed.push(consumed);
            rec.discarded.push(store.discarded);
            rec.battery_after.push(store.next);
            state.cumulative_consumed += consumed;
            state.cumulative_discarded += store.discarded;
        }
        state.batteries.clone_from(&rec.battery_after);
        rec.cumulative_consumed = state.cumulative_consumed;
        rec.cumulative_discarded = state.cumulative_discarded;
        rec.cumulative_energy = state.cumulative_consumed + state.cumulative_discarded;
        state.model = next_model;

        if evaluate {
            let (loss, acc) = self.evaluate(&state.model)?;
            if !loss.is_finite() {
                return Err(non_finite(t, None, "global loss"));
            }
            rec.global_loss = Some(loss);
            rec.test_accuracy = Some(acc);
        }
        Ok(rec)
    }
}

/// Battery bookkeeping identity for one device and round.
fn check_ledger(
    variant: SchedulerVariant,
    before: f64,
    consumed: f64,
    harvested: f64,
    b_max: f64,
    after: f64,
) -> std::result::Result<(), String> {
    let expected = match variant {
        SchedulerVariant::NonAdaptiveNoStorage => b_max.min(harvested),
        _ => b_max.min(before - consumed + harvested),
    };
    let scale = expected.abs().max(f64::MIN_POSITIVE);
    if (after - expected).abs() > 1e-12 * scale {
        return Err(format!("battery {after} J, ledger expects {expected} J"));
    }
    if !(0.0..=b_max).contains(&after) {
        return Err(format!("battery {after} J outside [0, {b_max}]"));
    }
    Ok(())
}

/// Runs `config.rounds` rounds from the configured initial state.
pub fn run(config: &SimConfig) -> Result<RunOutput> {
    let sim = Simulation::new(config.clone())?;
    let mut state = sim.initial_state();
    let (initial_loss, initial_accuracy) = sim.evaluate(&state.model)?;
    let mut records = Vec::with_capacity(config.rounds);
    for t in 1..=config.rounds {
        records.push(sim.run_round(&mut state, t)?);
    }
    let diagnostics =
        match estimate_diagnostics(&records, initial_loss, config.eta, config.smoothness_l) {
            Ok(d) => Some(d),
            Err(Error::DiagnosticsUnavailable) | Err(Error::Domain(_)) => None,
            Err(e) => return Err(e),
        };
    Ok(RunOutput {
        config: config.clone(),
        geometry: sim.geometry,
        records,
        diagnostics,
        initial_loss,
        initial_accuracy,
        final_model: state.model,
    })
}
