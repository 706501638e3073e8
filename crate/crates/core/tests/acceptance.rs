//! Acceptance suite. Prints one `PASS`/`FAIL` line per criterion and exits
//! non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::Instant;

use otafl::channel::{
    draw_round_channels, effective_gain, interference_power, superpose, ReceivedSignal,
};
use otafl::config::parse_override;
use otafl::denoising::{
    denoise, fading_alpha, mse_alpha, mse_objective, variance_alpha_analytic,
    variance_alpha_empirical,
};
use otafl::diagnostics::convergence_bound;
use otafl::energy::{
    computation_energy, harvested_energy, path_gain, round_consumption, update_battery,
    BatteryState, EnergyParams,
};
use otafl::learning::{
    loss_and_gradient, make_synthetic_dataset, train_local, Batching, ModelSpec,
};
use otafl::rng::{substream, StreamKind, StreamLabel};
use otafl::scheduling::SchedulerVariant;
use otafl::sim::Simulation;
use otafl::topology::Geometry;
use otafl::{run, RunOutput, SimConfig};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs())
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn config(pairs: &[(&str, &str)]) -> SimConfig {
    let mut c = SimConfig::default();
    for (k, v) in pairs {
        let (key, value) = parse_override(&format!("{k}={v}")).expect("override parses");
        c.set(&key, &value).expect("override applies");
    }
    c.validate().expect("config is valid");
    c
}

fn run_cfg(c: &SimConfig) -> RunOutput {
    run(c).expect("simulation runs")
}

fn median3(mut v: [f64; 3]) -> f64 {
    v.sort_by(f64::total_cmp);
    v[1]
}

fn formulas() -> Outcome {
    let tol = 1e-12;
    let mut checks = 0;
    let mut check = |name: &str, got: f64, want: f64| -> Result<(), String> {
        checks += 1;
        ensure(close(got, want, tol), || {
            format!("{name}: got {got:e}, want {want:e}")
        })
    };
    check(
        "path gain",
        path_gain(0.1, 130.0, 2.5).map_err(|e| e.to_string())?,
        5.189692421935084e-7,
    )?;
    let params = EnergyParams {
        t_h: 1.0,
        delta: 0.9,
        xi: 2.5,
        p_in: vec![0.1],
        p_out: vec![],
        e_up: 1e-3,
        b_max: 50.0,
        kappa: 1e-28,
        c_m: 1.3e4,
        f_m: 2e9,
    };
    check(
        "harvest",
        harvested_energy(&params, &[1.0], &[], &[130.0], &[]).map_err(|e| e.to_string())?,
        4.670723179741576e-7,
    )?;
    let defaults = SimConfig::default();
    let e_comp = defaults
        .energy_params()
        .computation_energy(defaults.samples_per_device);
    check("E_comp (defaults)", e_comp, 6.24e-3)?;
    check(
        "E_comp (direct)",
        computation_energy(1e-28, 1.3e4, 1200, 2e9),
        6.24e-3,
    )?;
    check(
        "consumption full",
        round_consumption(1e-3, 2, 6.24e-3, 1.0).map_err(|e| e.to_string())?,
        1.348e-2,
    )?;
    check(
        "consumption fractional",
        round_consumption(1e-3, 1, 6.24e-3, 0.5).map_err(|e| e.to_string())?,
        4.12e-3,
    )?;
    let b =
        update_battery(BatteryState::new(10.0), 0.004, 0.003, 50.0).map_err(|e| e.to_string())?;
    check("battery update", b.level, 9.999)?;
    let b =
        update_battery(BatteryState::new(49.999), 0.0, 0.01, 50.0).map_err(|e| e.to_string())?;
    check("battery clamp", b.level, 50.0)?;
    check(
        "effective gain",
        effective_gain(0.01, 100.0, 2.5, 1.0).map_err(|e| e.to_string())?,
        3.162277660168379e-4,
    )?;
    let a = [0.5, 1.5];
    check(
        "fading alpha",
        fading_alpha(&a).map_err(|e| e.to_string())?,
        1.0,
    )?;
    check(
        "mse alpha",
        mse_alpha(&a, &[0.25, 2.25], 0.5).map_err(|e| e.to_string())?,
        1.5,
    )?;
    check(
        "variance alpha (analytic)",
        variance_alpha_analytic(&[1.0, 2.0], 1.0).map_err(|e| e.to_string())?,
        1.0,
    )?;
    let y = ReceivedSignal { y: vec![3.0, -4.0] };
    check(
        "variance alpha (empirical)",
        variance_alpha_empirical(&y, 2).map_err(|e| e.to_string())?,
        (12.5f64).sqrt() / 2.0,
    )?;
    let s = denoise(&y, 0.5, 2).map_err(|e| e.to_string())?;
    check("denoise", s[1], -4.0)?;
    check(
        "convergence bound",
        convergence_bound(1.0, 0.01, 100, 2.0, 2.0, 1.0, 1.0, 0.0).map_err(|e| e.to_string())?,
        0.51,
    )?;
    Ok(format!(
        "{checks} closed-form values at 1e-12 relative, E_comp = {e_comp:e} J"
    ))
}

fn mse_optimality() -> Outcome {
    let start = Instant::now();
    let mut s = substream(2024, StreamLabel::new(StreamKind::Uplink, 0, 0));
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..100 {
        let n = 1 + (s.sample_unit() * 5.0) as usize;
        let d = 1 + (s.sample_unit() * 50.0) as usize;
        let amps: Vec<f64> = (0..n)
            .map(|_| {
                let dist = 10.0 + 90.0 * s.sample_unit();
                effective_gain(0.01, dist, 2.5, s.sample_complex_gaussian().norm()).unwrap()
            })
            .collect();
        let scale = amps.iter().sum::<f64>() / n as f64;
        let phi = scale * scale * 10f64.powf(-3.0 + 4.0 * s.sample_unit());
        let sq: Vec<f64> = amps.iter().map(|a| a * a).collect();
        let alpha = mse_alpha(&amps, &sq, phi).map_err(|e| e.to_string())?;
        let best = mse_objective(alpha, &amps, phi, n, d).unwrap();
        let (lo, hi) = ((scale * 1e-3).ln(), (scale * 1e3).ln());
        let grid_min = (0..10_000)
            .map(|k| {
                let a = (lo + (hi - lo) * k as f64 / 9_999.0).exp();
                mse_objective(a, &amps, phi, n, d).unwrap()
            })
            .fold(f64::INFINITY, f64::min);
        let excess = (best - grid_min) / grid_min;
        worst = worst.max(excess);
        ensure(best <= grid_min * (1.0 + 1e-9), || {
            format!("n = {n}: closed form {best:e} above grid minimum {grid_min:e}")
        })?;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 5.0, || format!("took {secs:.2} s"))?;
    Ok(format!(
        "100 instances, worst relative excess {worst:.2e}, {secs:.2} s"
    ))
}

fn exact_inversion() -> Outcome {
    let c = config(&[
        ("M", "1"),
        ("I", "0"),
        ("N0", "off"),
        ("denoise", "fading"),
        ("T", "50"),
        ("samples_per_device", "300"),
        ("test_samples", "200"),
    ]);
    let sim = Simulation::new(c.clone()).map_err(|e| e.to_string())?;
    let mut state = sim.initial_state();
    let mut direct = state.model.clone();
    let mut worst_err: f64 = 0.0;
    let mut worst_dev: f64 = 0.0;
    let mut active_rounds = 0;
    for t in 1..=c.rounds {
        let rec = sim.run_round(&mut state, t).map_err(|e| e.to_string())?;
        if rec.n_active == 1 {
            active_rounds += 1;
            let err = rec.error_sq.ok_or("active round without error")?;
            worst_err = worst_err.max(err);
            ensure(err < 1e-20, || {
                format!("round {t}: aggregation error {err:e}")
            })?;
            ensure(rec.fractions[0] == 1.0, || {
                format!("round {t}: fractional round")
            })?;
            let mut unused = substream(0, StreamLabel::new(StreamKind::Minibatch, 0, 0));
            let trained = train_local(
                &direct,
                &sim.datasets()[0],
                c.eta,
                rec.tau_per_device[0],
                sim.spec(),
                Batching::FullBatch,
                &mut unused,
            )
            .map_err(|e| e.to_string())?;
            direct = trained.model;
        }
        for (a, b) in state.model.w.iter().zip(&direct.w) {
            worst_dev = worst_dev.max((a - b).abs());
        }
        ensure(worst_dev <= 1e-10, || {
            format!("round {t}: trajectories differ by {worst_dev:e}")
        })?;
    }
    ensure(active_rounds == c.rounds, || {
        format!("only {active_rounds} of {} rounds active", c.rounds)
    })?;
    Ok(format!(
        "{active_rounds} rounds, max error {worst_err:.1e}, max coordinate gap {worst_dev:.1e}"
    ))
}

#[allow(clippy::needless_range_loop)]
fn energy_ledger() -> Outcome {
    let c = SimConfig::default();
    let start = Instant::now();
    let out = run_cfg(&c);
    let secs = start.elapsed().as_secs_f64();
    let params = c.energy_params();
    let e_comp = params.computation_energy(c.samples_per_device);
    let geo = &out.geometry;
    let mut prev: Vec<f64> = vec![c.b_init; c.devices];
    let mut checked = 0;
    for r in &out.records {
        let draw = draw_round_channels(geo, r.t, c.seed);
        for m in 0..c.devices {
            let h = harvested_energy(
                &params,
                &draw.h_eh_in[m],
                &draw.h_eh_out[m],
                &geo.d_mi_in[m],
                &geo.d_mk_out[m],
            )
            .map_err(|e| e.to_string())?;
            ensure(close(r.harvested[m], h, 1e-12), || {
                format!("t = {}, m = {m}: harvested {} vs {h}", r.t, r.harvested[m])
            })?;
            let consumed = match r.active_ids.iter().position(|&id| id == m) {
                Some(k) => {
                    round_consumption(params.e_up, r.tau_per_device[k], e_comp, r.fractions[k])
                        .map_err(|e| e.to_string())?
                        .min(prev[m])
                }
                None => 0.0,
            };
            ensure(
                close(r.consumed[m], consumed, 1e-12) || r.consumed[m] == consumed,
                || {
                    format!(
                        "t = {}, m = {m}: consumed {} vs {consumed}",
                        r.t, r.consumed[m]
                    )
                },
            )?;
            ensure(r.battery_before[m] == prev[m], || {
                format!("t = {}, m = {m}: battery not carried", r.t)
            })?;
            let want = c.b_max.min(prev[m] - consumed + h);
            let got = r.battery_after[m];
            ensure(close(got, want, 1e-12), || {
                format!("t = {}, m = {m}: battery {got} vs {want}", r.t)
            })?;
            ensure((0.0..=c.b_max).contains(&got), || {
                format!("t = {}, m = {m}: battery {got} out of range", r.t)
            })?;
            prev[m] = got;
            checked += 1;
        }
    }
    ensure(out.records.len() == 100 && c.devices == 25, || {
        "not the default scale".into()
    })?;
    ensure(secs < 60.0, || format!("run took {secs:.1} s"))?;
    Ok(format!(
        "{checked} device-rounds verified, run took {secs:.1} s"
    ))
}

fn channel_statistics() -> Outcome {
    let seed = 77;
    let geo = Geometry::from_positions(
        vec![(12.0, 16.0), (0.0, 25.0), (-18.0, -24.0)],
        vec![(40.0, 30.0), (-60.0, 80.0), (70.0, -10.0), (-30.0, -45.0)],
        vec![],
    )
    .map_err(|e| e.to_string())?;
    let (p_up, p_in, xi, n0) = (0.01, vec![0.1; 4], 2.5, 1e-7);
    let d = 8;
    // Each device owns two coordinates; the last two carry noise only.
    let mut diffs = vec![vec![0.0; d]; 3];
    for (m, diff) in diffs.iter_mut().enumerate() {
        diff[2 * m] = 1.0 + m as f64;
        diff[2 * m + 1] = -0.5;
    }
    let draws = 10_000;
    let mut second = vec![0.0; d];
    let mut h_sq = 0.0;
    for t in 1..=draws {
        let draw = draw_round_channels(&geo, t, seed);
        let phi = interference_power(&geo, &draw, &p_in, xi, n0).map_err(|e| e.to_string())?;
        let gains: Vec<f64> = (0..3)
            .map(|m| effective_gain(p_up, geo.d_m[m], xi, draw.h_up[m]).unwrap())
            .collect();
        h_sq += draw.h_up.iter().map(|h| h * h).sum::<f64>();
        let mut noise = substream(seed, StreamLabel::new(StreamKind::Noise, 0, t as u64));
        let y = superpose(&diffs, &gains, phi, d, &mut noise).map_err(|e| e.to_string())?;
        for (acc, v) in second.iter_mut().zip(&y.y) {
            *acc += v * v;
        }
    }
    let mean_phi: f64 = p_in
        .iter()
        .zip(&geo.d_i_in)
        .map(|(&p, &di)| path_gain(p, di, xi).unwrap())
        .sum::<f64>()
        + n0;
    let mut worst: f64 = 0.0;
    for k in 0..d {
        let signal: f64 = (0..3)
            .map(|m| path_gain(p_up, geo.d_m[m], xi).unwrap() * diffs[m][k].powi(2))
            .sum();
        let want = signal + mean_phi;
        let got = second[k] / draws as f64;
        let rel = (got - want).abs() / want;
        worst = worst.max(rel);
        ensure(rel <= 0.05, || {
            format!("coordinate {k}: empirical {got:e} vs analytic {want:e}")
        })?;
    }
    let mean_h = h_sq / (3 * draws) as f64;
    ensure((mean_h - 1.0).abs() <= 0.03, || {
        format!("E|h|^2 = {mean_h}")
    })?;
    Ok(format!(
        "worst per-coordinate deviation {:.2}%, E|h|^2 = {mean_h:.4}",
        worst * 100.0
    ))
}

const TREND_BASE: [(&str, &str); 6] = [
    ("separation", "8"),
    ("I", "1"),
    ("eta", "0.3"),
    ("samples_per_device", "300"),
    ("test_samples", "1000"),
    ("eval_every", "100"),
];

fn trend_config(extra: &[(&str, &str)]) -> SimConfig {
    let mut pairs: Vec<(&str, &str)> = TREND_BASE.to_vec();
    pairs.extend_from_slice(extra);
    config(&pairs)
}

fn denoiser_trend() -> Outcome {
    let mut lines = Vec::new();
    for seed in ["1", "2", "3"] {
        let acc = |policy| {
            let out = run_cfg(&trend_config(&[
                ("M", "10"),
                ("T", "100"),
                ("seed", seed),
                ("denoise", policy),
            ]));
            (out.final_accuracy(), out.initial_accuracy)
        };
        let (fading, _) = acc("fading");
        let (mse, untrained) = acc("mse");
        let (var, _) = acc("variance-empirical");
        lines.push(format!("seed {seed}: fading {fading:.3} mse {mse:.3} variance {var:.3} untrained {untrained:.3}"));
        ensure((var - mse).abs() <= 0.03, || {
            format!("seed {seed}: variance {var:.3} vs mse {mse:.3}")
        })?;
        ensure(var - untrained >= 0.20 && mse - untrained >= 0.20, || {
            format!("seed {seed}: gain over untrained {untrained:.3} below 20 points")
        })?;
        ensure(fading <= var + 0.01, || {
            format!("seed {seed}: fading {fading:.3} > variance {var:.3} + 0.01")
        })?;
    }
    Ok(lines.join("; "))
}

const TARGET_ACCURACY: f64 = 0.8;

struct SchedulerRun {
    participation: f64,
    hit: Option<(usize, f64)>,
}

fn scheduler_run(seed: &str, variant: SchedulerVariant) -> SchedulerRun {
    let variant = variant.to_string();
    let c = config(&[
        ("seed", seed),
        ("M", "10"),
        ("T", "100"),
        ("separation", "8"),
        ("eta", "0.01"),
        ("P_in", "off"),
        ("denoise", "mse"),
        ("B_init", "0.0"),
        ("samples_per_device", "300"),
        ("test_samples", "1000"),
        ("eval_every", "1"),
        ("scheduler", &variant),
    ]);
    let out = run_cfg(&c);
    let participation =
        out.records.iter().map(|r| r.n_active as f64).sum::<f64>() / out.records.len() as f64;
    let hit = out
        .records
        .iter()
        .find(|r| r.test_accuracy.is_some_and(|a| a >= TARGET_ACCURACY))
        .map(|r| (r.t, r.cumulative_energy));
    SchedulerRun { participation, hit }
}

fn scheduler_trends() -> Outcome {
    let mut lines = Vec::new();
    for seed in ["1", "2", "3"] {
        let a = scheduler_run(seed, SchedulerVariant::Adaptive);
        let w = scheduler_run(seed, SchedulerVariant::NonAdaptiveWithStorage);
        let n = scheduler_run(seed, SchedulerVariant::NonAdaptiveNoStorage);
        ensure(
            a.participation >= w.participation && a.participation >= n.participation,
            || {
                format!(
                    "seed {seed}: participation adaptive {:.2}, with storage {:.2}, without {:.2}",
                    a.participation, w.participation, n.participation
                )
            },
        )?;
        let (Some((ta, ea)), Some((tw, ew)), Some((tn, en))) = (a.hit, w.hit, n.hit) else {
            return Err(format!(
                "seed {seed}: target {TARGET_ACCURACY} not reached (adaptive {:?}, with storage {:?}, without {:?})",
                a.hit, w.hit, n.hit
            ));
        };
        ensure(ea < 0.95 * ew && ew < 0.95 * en, || {
            format!("seed {seed}: energy to target adaptive {ea:.4}, with storage {ew:.4}, without {en:.4}")
        })?;
        ensure(ta < tw && ta < tn, || {
            format!("seed {seed}: rounds to target {ta}, {tw}, {tn}")
        })?;
        lines.push(format!(
            "seed {seed}: participation {:.2}/{:.2}/{:.2}, energy {ea:.3}/{ew:.3}/{en:.3} J, rounds {ta}/{tw}/{tn}",
            a.participation, w.participation, n.participation
        ));
    }
    Ok(lines.join("; "))
}

fn interference_trend() -> Outcome {
    let mut degradation = [[0.0; 3]; 2];
    let mut lines = Vec::new();
    for (mi, m) in ["10", "50"].into_iter().enumerate() {
        for (si, seed) in ["1", "2", "3"].into_iter().enumerate() {
            let acc: Vec<f64> = ["off", "0.1 W", "50 dBm"]
                .into_iter()
                .map(|p| {
                    run_cfg(&trend_config(&[
                        ("M", m),
                        ("T", "100"),
                        ("seed", seed),
                        ("P_in", p),
                    ]))
                    .final_accuracy()
                })
                .collect();
            degradation[mi][si] = acc[0] - acc[2];
            lines.push(format!(
                "M={m} seed {seed}: {:.3}/{:.3}/{:.3}",
                acc[0], acc[1], acc[2]
            ));
        }
    }
    let d10 = median3(degradation[0]);
    let d50 = median3(degradation[1]);
    ensure(d10 >= 0.10, || {
        format!("median degradation at M = 10 is {d10:.3}")
    })?;
    ensure(d50 < d10, || {
        format!("median degradation at M = 50 ({d50:.3}) not below M = 10 ({d10:.3})")
    })?;
    Ok(format!(
        "median degradation M=10 {d10:.3}, M=50 {d50:.3} ({})",
        lines.join("; ")
    ))
}

fn determinism() -> Outcome {
    let dir = std::env::temp_dir().join(format!("otafl-acceptance-{}", std::process::id()));
    let bin = env!("CARGO_BIN_EXE_otafl");
    let mut outputs = Vec::new();
    for workers in ["1", "8"] {
        let out = dir.join(format!("w{workers}"));
        let status = Command::new(bin)
            .args(["run", "--workers", workers, "--out"])
            .arg(&out)
            .args([
                "--set",
                "M=12",
                "--set",
                "T=15",
                "--set",
                "samples_per_device=200",
                "--set",
                "eval_every=5",
            ])
            .output()
            .map_err(|e| e.to_string())?;
        ensure(status.status.success(), || {
            String::from_utf8_lossy(&status.stderr).into_owned()
        })?;
        outputs.push(std::fs::read(out.join("records.jsonl")).map_err(|e| e.to_string())?);
    }
    let _ = std::fs::remove_dir_all(&dir);
    ensure(!outputs[0].is_empty() && outputs[0] == outputs[1], || {
        "records.jsonl differs".into()
    })?;
    Ok(format!(
        "{} bytes identical across 1 and 8 workers",
        outputs[0].len()
    ))
}

fn gradient_checks() -> Outcome {
    let mut s = substream(5, StreamLabel::new(StreamKind::Dataset, 0, 0));
    let data = make_synthetic_dataset(4, 25, 6, 2.0, &mut s).map_err(|e| e.to_string())?;
    let mut lines = Vec::new();
    for spec in [ModelSpec::logistic(6, 4), ModelSpec::mlp(6, 5, 4)] {
        let mut init = substream(5, StreamLabel::new(StreamKind::ModelInit, 0, 0));
        let w: Vec<f64> = (0..spec.dim())
            .map(|_| 0.5 * init.sample_standard_normal())
            .collect();
        let mut grad = vec![0.0; w.len()];
        loss_and_gradient(&spec, &w, &data, Some(&mut grad)).map_err(|e| e.to_string())?;
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..w.len() {
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp[i] += h;
            wm[i] -= h;
            let lp = loss_and_gradient(&spec, &wp, &data, None).unwrap();
            let lm = loss_and_gradient(&spec, &wm, &data, None).unwrap();
            let numeric = (lp - lm) / (2.0 * h);
            let scale = grad[i].abs().max(numeric.abs()).max(1e-6);
            let rel = (grad[i] - numeric).abs() / scale;
            worst = worst.max(rel);
            ensure(rel <= 1e-4, || {
                format!("{:?} coordinate {i}: {} vs {numeric}", spec.kind, grad[i])
            })?;
        }
        lines.push(format!(
            "{} ({} params) worst {worst:.1e}",
            spec.kind.as_str(),
            spec.dim()
        ));
    }
    Ok(lines.join(", "))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("closed-form formulas", formulas),
        ("MSE denoiser optimality", mse_optimality),
        ("exact-inversion oracle", exact_inversion),
        ("energy ledger", energy_ledger),
        ("Monte-Carlo channel statistics", channel_statistics),
        ("denoiser trend", denoiser_trend),
        ("scheduler trends", scheduler_trends),
        ("interference trend", interference_trend),
        ("determinism across workers", determinism),
        ("gradient checks", gradient_checks),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name} [{secs:.1} s]: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name} [{secs:.1} s]: {detail}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
