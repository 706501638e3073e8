use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use otafl::config::parse_override;
use otafl::experiment::{report, sweep};
use otafl::output::write_run;
use otafl::{run, SimConfig};

#[derive(Parser)]
#[command(
    name = "otafl",
    version,
    about = "Over-the-air federated learning simulator with RF energy harvesting"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config file; defaults are used for missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "otafl-out")]
    out: PathBuf,
    /// `key=value` override, applied after the file (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Worker threads for per-device training (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation.
    Run(Common),
    /// Run one simulation per value of a config field.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Config key to vary.
        #[arg(long)]
        axis: String,
        /// Values for the axis, e.g. `--values fading --values mse`
        /// or `--values "off;0.1 W;50 dBm"`.
        #[arg(long, required = true, value_delimiter = ';')]
        values: Vec<String>,
    },
    /// Compare finished runs.
    Report {
        /// Run directories (each holding summary.csv).
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Accuracy target for the energy-to-accuracy table.
        #[arg(long)]
        target: Option<f64>,
        /// Also write the comparison as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn load(common: &Common) -> otafl::Result<SimConfig> {
    let mut overrides = common
        .set
        .iter()
        .map(|s| parse_override(s))
        .collect::<otafl::Result<Vec<_>>>()?;
    if let Some(seed) = common.seed {
        overrides.push(("seed".into(), toml::Value::Integer(seed as i64)));
    }
    if let Some(w) = common.workers {
        overrides.push(("workers".into(), toml::Value::Integer(w as i64)));
    }
    SimConfig::load(common.config.as_deref(), &overrides)
}

fn execute(cli: Cli) -> otafl::Result<()> {
    match cli.command {
        Command::Run(common) => {
            let cfg = load(&common)?;
            let out = run(&cfg)?;
            write_run(&out, &common.out)?;
            println!(
                "{} rounds, final accuracy {:.4}, cumulative energy {:.6e} J -> {}",
                out.records.len(),
                out.final_accuracy(),
                out.records.last().map_or(0.0, |r| r.cumulative_energy),
                common.out.display()
            );
        }
        Command::Sweep {
            common,
            axis,
            values,
        } => {
            let cfg = load(&common)?;
            let runs = sweep(&cfg, &axis, &values, Some(&common.out))?;
            for (value, out) in &runs {
                println!(
                    "{axis} = {value}: final accuracy {:.4}",
                    out.final_accuracy()
                );
            }
            println!(
                "merged results -> {}",
                common.out.join(otafl::experiment::SWEEP_FILE).display()
            );
        }
        Command::Report { dirs, target, csv } => {
            let rep = report(&dirs, target)?;
            for w in &rep.warnings {
                eprintln!("warning: {w}");
            }
            print!("{}", rep.render_text());
            if let Some(path) = csv {
                rep.write_csv(&path)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
