mod checks;
mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use rplab::{ChargedCondition, RPCondition};

use checks::{label, Outcome, Session, Table};
use config::{CheckSpec, RunConfig};

/// Reflection-positivity checks for complex Gaussian covariances on finite lattices.
#[derive(Parser, Debug)]
#[command(name = "rplab", version)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// Run configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory for reports, witnesses and spectra.
    #[arg(long, global = true, value_name = "DIR", default_value = "rplab-out")]
    out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Overrides the global default tolerance in the config.
    #[arg(long, global = true, value_name = "X")]
    tol: Option<f64>,
    /// Write JSON reports (report.json, timings.json).
    #[arg(long, global = true)]
    json: bool,
    /// Write CSV spectra.
    #[arg(long, global = true)]
    csv: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Positivity and reflection-positivity conditions on the neutral covariance.
    CheckRp {
        /// Condition ID, e.g. TimeRP or SpatialRP(1); repeatable.
        #[arg(long = "condition", value_name = "ID")]
        conditions: Vec<RPCondition>,
    },
    /// Conditions on the doubled charged covariance.
    ChargedCheck {
        #[arg(long = "condition", value_name = "ID")]
        conditions: Vec<ChargedCondition>,
    },
    /// Gaussian moments by recursion, cross-checked by pairing enumeration.
    Schwinger {
        /// Comma-separated site indices; repeatable.
        #[arg(long = "points", value_name = "SITES")]
        points: Vec<String>,
        /// Number of random tuples to draw.
        #[arg(long)]
        random: Option<usize>,
        /// Points per random tuple.
        #[arg(long)]
        order: Option<usize>,
    },
    /// Transfer matrices and energies per spatial momentum.
    Quantize {
        /// Comma-separated signed spatial mode numbers; repeatable.
        #[arg(long = "mode", value_name = "MODES", allow_hyphen_values = true)]
        modes: Vec<String>,
        #[arg(long)]
        rank_tol: Option<f64>,
        /// Mass for the reference dispersion.
        #[arg(long)]
        mass_ref: Option<f64>,
    },
    /// Periodizes a line axis and re-checks reflection positivity.
    Compactify {
        #[arg(long)]
        axis: Option<usize>,
        #[arg(long)]
        period: Option<f64>,
        /// Axis of the DoublyRP check (default: the compactified axis).
        #[arg(long)]
        check_axis: Option<usize>,
        /// Relative size of the first omitted image pair.
        #[arg(long)]
        image_tol: Option<f64>,
    },
    /// Hilbert-Schmidt diagnostics of the complex part.
    Yngvason {
        /// Refinement factors for a divergence sweep.
        #[arg(long, value_delimiter = ',')]
        refine: Vec<usize>,
    },
    /// Every check in the config, in order.
    All,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::CheckRp { .. } => "check-rp",
            Command::ChargedCheck { .. } => "charged-check",
            Command::Schwinger { .. } => "schwinger",
            Command::Quantize { .. } => "quantize",
            Command::Compactify { .. } => "compactify",
            Command::Yngvason { .. } => "yngvason",
            Command::All => "all",
        }
    }

    fn selects(&self, spec: &CheckSpec) -> bool {
        let kind = spec.kind();
        match self {
            Command::CheckRp { .. } => matches!(kind, "rp" | "equivalence" | "gaussian_identity"),
            Command::ChargedCheck { .. } => kind == "charged",
            Command::Schwinger { .. } => kind == "schwinger",
            Command::Quantize { .. } => kind == "quantize",
            Command::Compactify { .. } => kind == "compactify",
            Command::Yngvason { .. } => kind == "yngvason",
            Command::All => true,
        }
    }

    /// Checks requested on the command line.
    fn extra_checks(&self) -> Result<Vec<CheckSpec>> {
        Ok(match self {
            Command::CheckRp { conditions } => conditions
                .iter()
                .map(|&condition| CheckSpec::Rp { condition, tol: None })
                .collect(),
            Command::ChargedCheck { conditions } => conditions
                .iter()
                .map(|&condition| CheckSpec::Charged { condition, tol: None })
                .collect(),
            Command::Schwinger { points, random, order } => {
                if points.is_empty() && random.is_none() {
                    return Ok(Vec::new());
                }
                let points = points
                    .iter()
                    .map(|p| parse_list::<usize>(p).with_context(|| format!("--points {p}")))
                    .collect::<Result<_>>()?;
                vec![CheckSpec::Schwinger {
                    points,
                    coords: Vec::new(),
                    random: *random,
                    order: *order,
                    tol: None,
                }]
            }
            Command::Quantize {
                modes,
                rank_tol,
                mass_ref,
            } => {
                if modes.is_empty() && rank_tol.is_none() && mass_ref.is_none() {
                    return Ok(Vec::new());
                }
                let modes = if modes.is_empty() {
                    None
                } else {
                    Some(
                        modes
                            .iter()
                            .map(|m| parse_list::<isize>(m).with_context(|| format!("--mode {m}")))
                            .collect::<Result<_>>()?,
                    )
                };
                vec![CheckSpec::Quantize {
                    modes,
                    rank_tol: *rank_tol,
                    mass_ref: *mass_ref,
                    tol: None,
                }]
            }
            Command::Compactify {
                axis,
                period,
                check_axis,
                image_tol,
            } => match (axis, period) {
                (Some(axis), Some(period)) => vec![CheckSpec::Compactify {
                    axis: *axis,
                    period: *period,
                    check_axis: *check_axis,
                    image_tol: *image_tol,
                    tol: None,
                }],
                (None, None) => Vec::new(),
                _ => bail!("compactify needs both --axis and --period"),
            },
            Command::Yngvason { refine } if !refine.is_empty() => vec![CheckSpec::Yngvason { refine: refine.clone() }],
            Command::Yngvason { .. } | Command::All => Vec::new(),
        })
    }

    /// What to run when neither the config nor the flags name a check.
    fn default_check(&self) -> Result<Option<CheckSpec>> {
        Ok(match self {
            Command::CheckRp { .. } => Some(CheckSpec::Rp {
                condition: RPCondition::TimeRP,
                tol: None,
            }),
            Command::ChargedCheck { .. } => Some(CheckSpec::Charged {
                condition: ChargedCondition::ChargedTimeRP,
                tol: None,
            }),
            Command::Schwinger { .. } => Some(CheckSpec::Schwinger {
                points: Vec::new(),
                coords: Vec::new(),
                random: None,
                order: None,
                tol: None,
            }),
            Command::Quantize { .. } => Some(CheckSpec::Quantize {
                modes: None,
                rank_tol: None,
                mass_ref: None,
                tol: None,
            }),
            Command::Yngvason { .. } => Some(CheckSpec::Yngvason { refine: Vec::new() }),
            Command::Compactify { .. } => {
                bail!("compactify needs --axis and --period or a compactify entry in the config")
            }
            Command::All => None,
        })
    }
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    s.split(',')
        .map(|x| x.trim().parse::<T>().with_context(|| format!("bad entry `{x}`")))
        .collect()
}

#[derive(Serialize)]
struct Versions {
    rplab: &'static str,
    rplab_cli: &'static str,
}

#[derive(Serialize)]
struct CheckRecord {
    index: usize,
    kind: &'static str,
    label: String,
    verdict: Outcome,
    detail: Value,
    error: Option<String>,
    witness_file: Option<String>,
    csv_file: Option<String>,
}

#[derive(Serialize, Default)]
struct Summary {
    total: usize,
    pass: usize,
    fail: usize,
    not_applicable: usize,
    error: usize,
}

#[derive(Serialize)]
struct RunReport<'a> {
    tool: &'static str,
    versions: Versions,
    command: &'static str,
    seed: u64,
    tol: f64,
    config: &'a RunConfig,
    results: Vec<CheckRecord>,
    summary: Summary,
}

#[derive(Serialize)]
struct Timing {
    index: usize,
    kind: &'static str,
    seconds: f64,
}

#[derive(Serialize)]
struct Timings {
    total_seconds: f64,
    checks: Vec<Timing>,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_csv(path: &Path, table: &Table) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    let g = &cli.global;
    let path = g.config.as_deref().context("--config PATH is required")?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(tol) = g.tol {
        cfg.tol = tol;
    }

    let mut plan: Vec<CheckSpec> = cfg.checks.iter().filter(|c| cli.command.selects(c)).cloned().collect();
    plan.extend(cli.command.extra_checks()?);
    if plan.is_empty() {
        plan.extend(cli.command.default_check()?);
    }
    cfg.checks = plan;
    cfg.validate().context("command-line checks")?;

    // Neither toggle given means both formats.
    let (want_json, want_csv) = if g.json || g.csv { (g.json, g.csv) } else { (true, true) };
    fs::create_dir_all(&g.out).with_context(|| format!("creating {}", g.out.display()))?;

    let session = Session::new(&cfg)?;
    let started = Instant::now();
    let mut results = Vec::with_capacity(cfg.checks.len());
    let mut timings = Vec::with_capacity(cfg.checks.len());
    let mut summary = Summary::default();
    for (index, spec) in cfg.checks.iter().enumerate() {
        let t0 = Instant::now();
        let outcome = session.run(index, spec);
        timings.push(Timing {
            index,
            kind: spec.kind(),
            seconds: t0.elapsed().as_secs_f64(),
        });
        let mut record = CheckRecord {
            index,
            kind: spec.kind(),
            label: label(spec),
            verdict: Outcome::Error,
            detail: Value::Null,
            error: None,
            witness_file: None,
            csv_file: None,
        };
        match outcome {
            Ok(out) => {
                record.verdict = out.verdict;
                record.detail = out.detail;
                if let Some(w) = out.witness {
                    let name = format!("witness_{index:03}.json");
                    write_json(&g.out.join(&name), &w)?;
                    record.witness_file = Some(name);
                }
                if let (true, Some(table)) = (want_csv, out.table) {
                    let name = format!("{}_{index:03}.csv", table.stem);
                    write_csv(&g.out.join(&name), &table)?;
                    record.csv_file = Some(name);
                }
            }
            Err(e) => record.error = Some(format!("{e:#}")),
        }
        summary.total += 1;
        match record.verdict {
            Outcome::Pass => summary.pass += 1,
            Outcome::Fail => summary.fail += 1,
            Outcome::NotApplicable => summary.not_applicable += 1,
            Outcome::Error => summary.error += 1,
        }
        let note = record.error.as_deref().map(|e| format!(" ({e})")).unwrap_or_default();
        println!("[{index}] {} {}: {:?}{note}", record.kind, record.label, record.verdict);
        results.push(record);
    }
    let all_pass = summary.pass == summary.total;
    println!(
        "{} checks: {} pass, {} fail, {} not applicable, {} error",
        summary.total, summary.pass, summary.fail, summary.not_applicable, summary.error
    );

    if want_json {
        let report = RunReport {
            tool: "rplab",
            versions: Versions {
                rplab: rplab::VERSION,
                rplab_cli: env!("CARGO_PKG_VERSION"),
            },
            command: cli.command.name(),
            seed: cfg.seed,
            tol: cfg.tol,
            config: &cfg,
            results,
            summary,
        };
        write_json(&g.out.join("report.json"), &report)?;
        write_json(
            &g.out.join("timings.json"),
            &Timings {
                total_seconds: started.elapsed().as_secs_f64(),
                checks: timings,
            },
        )?;
    }
    Ok(all_pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
