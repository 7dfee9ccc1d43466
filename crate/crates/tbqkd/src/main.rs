use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tbqkd::config::Format;
use tbqkd::experiment::{self, SessionReport};
use tbqkd::report::{emit, with_output, write_json};
use tbqkd::{tags, Error, ExperimentConfig, Result};
use tbqkd_core::detection::SessionCounts;

/// Monte Carlo simulator for ultrafast time-bin decoy-state BB84.
#[derive(Debug, Parser)]
#[command(name = "tbqkd", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment configuration (TOML). Built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Pulses per preparation setting; overrides the verb's pulse count.
    #[arg(long, global = true)]
    pulses: Option<u64>,
    /// Output file; overrides `output.path`. Standard output when neither is set.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// csv or json; overrides `output.format`.
    #[arg(long, global = true)]
    format: Option<Format>,
    /// Configuration override `section.key=value`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Verb {
    /// One session at the configured loss: counts, probability matrix, key rate.
    Session {
        /// Also write the session counts as JSON (input for `analyze --counts`).
        #[arg(long)]
        counts_out: Option<PathBuf>,
        /// Also dump the raw time tags here; needs --pulses-out.
        #[arg(long, requires = "pulses_out")]
        tags_out: Option<PathBuf>,
        /// Pulse log accompanying --tags-out.
        #[arg(long, requires = "tags_out")]
        pulses_out: Option<PathBuf>,
    },
    /// Key rate versus channel loss.
    SweepLoss {
        /// Comma-separated channel losses in dB; overrides `sweep.channel_db`.
        #[arg(long, value_delimiter = ',')]
        losses: Option<Vec<f64>>,
    },
    /// Time-basis fidelities versus pump delay.
    PumpScan {
        #[arg(long, allow_hyphen_values = true)]
        start: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        stop: Option<f64>,
        #[arg(long)]
        step: Option<f64>,
    },
    /// Fidelities and QBER over a long run with pump drift.
    Stability {
        #[arg(long)]
        hours: Option<f64>,
        #[arg(long)]
        samples_per_hour: Option<u32>,
    },
    /// Analysis chain on recorded counts or a time-tag dump.
    Analyze {
        /// Session counts JSON written by `session --counts-out`.
        #[arg(long, conflicts_with_all = ["tags", "pulse_log"], required_unless_present = "tags")]
        counts: Option<PathBuf>,
        /// Tag file written by `session --tags-out`.
        #[arg(long, requires = "pulse_log")]
        tags: Option<PathBuf>,
        /// Pulse log written by `session --pulses-out`.
        #[arg(long, requires = "tags")]
        pulse_log: Option<PathBuf>,
    },
}

fn load_config(c: &Common, pulses_key: &str) -> Result<ExperimentConfig> {
    let mut overrides = c.overrides.clone();
    if let Some(seed) = c.seed {
        overrides.push(format!("run.seed={seed}"));
    }
    if let Some(n) = c.pulses {
        overrides.push(format!("{pulses_key}={n}"));
    }
    if let Some(p) = &c.out {
        overrides.push(format!("output.path={}", toml_string(&p.to_string_lossy())));
    }
    if let Some(f) = c.format {
        let name = match f {
            Format::Csv => "csv",
            Format::Json => "json",
        };
        overrides.push(format!("output.format=\"{name}\""));
    }
    ExperimentConfig::load(c.config.as_deref(), &overrides)
}

fn toml_string(s: &str) -> String {
    toml::Value::String(s.to_owned()).to_string()
}

fn read_counts(path: &Path) -> Result<SessionCounts> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    // Either bare counts or a full session report.
    let v: serde_json::Value = serde_json::from_reader(f).map_err(|e| Error::format(path, e))?;
    let v = match v.get("counts") {
        Some(inner) if v.get("analysis").is_some() => inner.clone(),
        _ => v,
    };
    serde_json::from_value(v).map_err(|e| Error::format(path, e))
}

fn run(cli: Cli) -> Result<()> {
    let c = &cli.common;
    match cli.verb {
        Verb::Session {
            counts_out,
            tags_out,
            pulses_out,
        } => {
            let cfg = load_config(c, "run.pulses_per_setting")?;
            let dump = tags_out.zip(pulses_out);
            let session = if dump.is_some() {
                experiment::run_session_with_tags(&cfg)?
            } else {
                experiment::run_session(&cfg)?
            };
            if let Some(p) = &counts_out {
                with_output(Some(p), |w| write_json(&session.counts, w))?;
            }
            if let Some((t, p)) = &dump {
                tags::dump(&session.counts, &session.tags, t, p)?;
            }
            let out = cfg.output.path.as_deref();
            match cfg.output.format {
                Format::Csv => emit(&session.row, Format::Csv, out),
                Format::Json => {
                    let report: SessionReport = session.report(&cfg);
                    with_output(out, |w| write_json(&report, w))
                }
            }
        }
        Verb::SweepLoss { losses } => {
            let cfg = load_config(c, "run.pulses_per_setting")?;
            let losses = losses.unwrap_or_else(|| cfg.sweep.channel_db.clone());
            let result = experiment::run_loss_sweep(&cfg, &losses)?;
            emit(&result, cfg.output.format, cfg.output.path.as_deref())
        }
        Verb::PumpScan { start, stop, step } => {
            let mut cfg = load_config(c, "scan.pulses_per_setting")?;
            cfg.scan.start_ps = start.unwrap_or(cfg.scan.start_ps);
            cfg.scan.stop_ps = stop.unwrap_or(cfg.scan.stop_ps);
            cfg.scan.step_ps = step.unwrap_or(cfg.scan.step_ps);
            let delays = cfg.scan.delays()?;
            let result = experiment::run_pump_delay_scan(&cfg, &delays)?;
            emit(&result, cfg.output.format, cfg.output.path.as_deref())
        }
        Verb::Stability { hours, samples_per_hour } => {
            let cfg = load_config(c, "stability.pulses_per_sample")?;
            let hours = hours.unwrap_or(cfg.stability.hours);
            let sph = samples_per_hour.unwrap_or(cfg.stability.samples_per_hour);
            let result = experiment::run_stability(&cfg, hours, sph)?;
            emit(&result, cfg.output.format, cfg.output.path.as_deref())
        }
        Verb::Analyze { counts, tags, pulse_log } => {
            let cfg = load_config(c, "run.pulses_per_setting")?;
            let counts = match (counts, tags, pulse_log) {
                (Some(p), _, _) => read_counts(&p)?,
                (None, Some(t), Some(p)) => {
                    let windows = cfg.apparatus().windows()?;
                    tags::counts_from_dump(&t, &p, &windows, cfg.detector.double_click)?
                }
                _ => return Err(Error::Usage("analyze needs --counts or --tags with --pulse-log".into())),
            };
            let analysis = experiment::analyze_counts(&cfg, &counts)?;
            with_output(cfg.output.path.as_deref(), |w| write_json(&analysis, w))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
