use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use tlsloss::design::{proportionality_report, search_min_condition_with, DEFAULT_ALTERNATIVES};
use tlsloss::io::{
    digest_file, load_dataset, load_loss_vector, load_regions, load_simexp_config, read_report, render_report,
    write_report, DecompositionReport, DecompositionRow, ExtractionReport, PredictionReport, Report, ReportData,
    ReportFormat,
};
use tlsloss::model::{decompose_losses, LossBasis, LossVector};
use tlsloss::simexp::run_simulated_experiment;
use tlsloss::uncertainty::{extract_mc_with, predict_q_mc, ExtractionResult, McOptions, SamplingSpace};
use tlsloss::{condition_number, Error, Result};

#[derive(Parser)]
#[command(name = "tlsloss", version, about = "Extract per-region dielectric loss from resonator Q measurements")]
struct Cli {
    /// Format of what is printed to stdout.
    #[arg(long, value_enum, global = true, default_value_t = OutputFormat::Text)]
    format: OutputFormat,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Direction {
    FactorToTangent,
    TangentToFactor,
}

#[derive(Clone, Copy, ValueEnum)]
enum Sampling {
    InverseQ,
    Q,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo loss-factor extraction with 95% intervals.
    Extract {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Sampling::InverseQ)]
        sampling: Sampling,
        /// Disable multithreading (results are identical).
        #[arg(long)]
        serial: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predicted Q_TLS of one device from an extraction ensemble.
    Predict {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        extraction: PathBuf,
        #[arg(long)]
        device: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-region inverse-Q contributions of every device.
    Decompose {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long = "loss-vector")]
        loss_vector: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Condition number of the participation matrix.
    Condition {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Minimum condition-number subset of a device library.
    DesignSearch {
        #[arg(long)]
        library: PathBuf,
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[arg(long, default_value_t = DEFAULT_ALTERNATIVES)]
        top: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Worst-case extraction uncertainty against number of devices.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        serial: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convert between loss factors and loss tangents.
    Convert {
        #[arg(long)]
        regions: PathBuf,
        #[arg(long, value_enum)]
        direction: Direction,
        #[arg(long, value_delimiter = ',', num_args = 1.., allow_negative_numbers = true)]
        values: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean and standard error of 1/Q_TLS per measured device.
    Summarize {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Participation ratio of two regions per device, by trench depth.
    Proportionality {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "MS")]
        numerator: String,
        #[arg(long, default_value = "SA")]
        denominator: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn emit<T: ReportData>(report: Report<T>, out: Option<&Path>, format: OutputFormat, text: impl FnOnce(&T) -> String) -> Result<()> {
    if let Some(path) = out {
        write_report(&report, path, ReportFormat::from_path(path))?;
    }
    match format {
        OutputFormat::Json => print!("{}", render_report(&report, ReportFormat::Json)?),
        OutputFormat::Text => print!("{}", text(&report.result)),
    }
    Ok(())
}

fn fmt_row(regions: &[String], values: &[f64]) -> String {
    regions
        .iter()
        .zip(values)
        .map(|(r, v)| format!("  {r:<4} {v:.4e}\n"))
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    let format = cli.format;
    match cli.command {
        Command::Extract {
            dataset,
            trials,
            seed,
            sampling,
            serial,
            out,
        } => {
            let ds = load_dataset(&dataset)?;
            let p = ds.participation_matrix()?;
            let dists = ds.distributions_for_devices()?;
            let opts = McOptions {
                sampling: match sampling {
                    Sampling::InverseQ => SamplingSpace::InverseQ,
                    Sampling::Q => SamplingSpace::Q,
                },
                parallel: !serial,
            };
            let result = extract_mc_with(&p, &dists, trials, seed, &opts)?;
            let report = Report::new(vec![digest_file(&dataset)?], ExtractionReport::new(result, p.regions())?);
            emit(report, out.as_deref(), format, |r| {
                let mut s = format!("{} trials, seed {}\n", r.extraction.n_trials, r.extraction.seed);
                s.push_str("region  tangent mean  95% CI\n");
                for (i, name) in r.tangents.regions.iter().enumerate() {
                    let ci = r.tangents.ci95[i];
                    s.push_str(&format!("  {name:<4} {:.3e}  [{:.3e}, {:.3e}]\n", r.tangents.mean[i], ci.low, ci.high));
                }
                s
            })
        }
        Command::Predict {
            dataset,
            extraction,
            device,
            out,
        } => {
            let ds = load_dataset(&dataset)?;
            let p = ds.participation_matrix()?;
            let row = p
                .device(&device)
                .ok_or_else(|| Error::InvalidInput(format!("device `{device}` not in dataset")))?
                .participation
                .clone();
            let result = read_extraction(&extraction)?;
            if result.regions() != p.region_names().as_slice() {
                return Err(Error::InvalidInput("extraction regions do not match dataset regions".into()));
            }
            let prediction = predict_q_mc(&row, &result)?;
            let report = Report::new(
                vec![digest_file(&dataset)?, digest_file(&extraction)?],
                PredictionReport {
                    device_id: device,
                    participation: row,
                    prediction,
                },
            );
            emit(report, out.as_deref(), format, |r| {
                format!(
                    "{}: Q_TLS = {:.4e}  95% CI [{:.4e}, {:.4e}]\n",
                    r.device_id, r.prediction.q_mean, r.prediction.q_ci95.low, r.prediction.q_ci95.high
                )
            })
        }
        Command::Decompose {
            dataset,
            loss_vector,
            out,
        } => {
            let ds = load_dataset(&dataset)?;
            let p = ds.participation_matrix()?;
            let x = load_loss_vector(&loss_vector)?.to_factors(p.regions())?;
            let rows = p
                .devices()
                .iter()
                .map(|dev| {
                    let contributions = decompose_losses(&dev.participation, &x)?;
                    let inv_q_total: f64 = contributions.iter().sum();
                    Ok(DecompositionRow {
                        device_id: dev.id.clone(),
                        contributions,
                        inv_q_total,
                        q_tls: 1.0 / inv_q_total,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let report = Report::new(
                vec![digest_file(&dataset)?, digest_file(&loss_vector)?],
                DecompositionReport { loss_factors: x, rows },
            );
            emit(report, out.as_deref(), format, |r| {
                let mut s = String::new();
                for row in &r.rows {
                    s.push_str(&format!("{}: Q_TLS = {:.4e}\n", row.device_id, row.q_tls));
                    s.push_str(&fmt_row(&r.loss_factors.regions, &row.contributions));
                }
                s
            })
        }
        Command::Condition { dataset, out } => {
            let ds = load_dataset(&dataset)?;
            let report = Report::new(vec![digest_file(&dataset)?], condition_number(&ds.participation_matrix()?)?);
            emit(report, out.as_deref(), format, |r| {
                let sv: Vec<String> = r.singular_values.iter().map(|s| format!("{s:.6e}")).collect();
                format!(
                    "kappa = {}\nrank = {}\nsingular values = [{}]\n",
                    r.kappa,
                    r.rank_estimate,
                    sv.join(", ")
                )
            })
        }
        Command::DesignSearch { library, k, top, out } => {
            let ds = load_dataset(&library)?;
            let result = search_min_condition_with(&ds.participation_matrix()?, k, top)?;
            let report = Report::new(vec![digest_file(&library)?], result);
            emit(report, out.as_deref(), format, |r| {
                let mut s = format!("selected {} (kappa = {})\n", r.selected_ids.join(", "), r.kappa);
                for (i, alt) in r.ranked_alternatives.iter().enumerate().skip(1) {
                    s.push_str(&format!("  #{} {} (kappa = {})\n", i + 1, alt.ids.join(", "), alt.kappa));
                }
                s
            })
        }
        Command::Simulate {
            config,
            seed,
            serial,
            out,
        } => {
            let (mut cfg, inputs) = load_simexp_config(&config, seed)?;
            cfg.parallel = !serial;
            let curve = run_simulated_experiment(&cfg)?;
            let report = Report::new(inputs, curve);
            emit(report, out.as_deref(), format, |c| {
                let mut s = String::from("region  N     worst_low   worst_high  target\n");
                for p in &c.points {
                    let i = c.regions.iter().position(|r| *r == p.region).unwrap_or(0);
                    s.push_str(&format!(
                        "  {:<4} {:>5}  {:.3e}  {:.3e}  {:.3e}\n",
                        p.region, p.n_devices, p.worst_low, p.worst_high, c.target[i]
                    ));
                }
                s
            })
        }
        Command::Convert {
            regions,
            direction,
            values,
            out,
        } => {
            let specs = load_regions(&regions)?;
            let names = specs.iter().map(|r| r.name.clone()).collect();
            let converted = match direction {
                Direction::FactorToTangent => LossVector::new(names, values, LossBasis::LossFactor)?.to_tangents(&specs)?,
                Direction::TangentToFactor => LossVector::new(names, values, LossBasis::LossTangent)?.to_factors(&specs)?,
            };
            let report = Report::new(vec![digest_file(&regions)?], converted);
            emit(report, out.as_deref(), format, |v| {
                format!("{}:\n{}", v.basis, fmt_row(&v.regions, &v.values))
            })
        }
        Command::Summarize { dataset, out } => {
            let ds = load_dataset(&dataset)?;
            let table = ds.summaries()?;
            let report = Report::new(vec![digest_file(&dataset)?], table);
            emit(report, out.as_deref(), format, |t| {
                let mut s = String::from("device        n    mean 1/Q     stderr       Q_TLS\n");
                for d in t {
                    s.push_str(&format!(
                        "  {:<10} {:>3}  {:.4e}  {:.4e}  {:.4e}\n",
                        d.device_id,
                        d.n_samples,
                        d.inv_q_mean,
                        d.inv_q_stderr,
                        d.q_mean()
                    ));
                }
                s
            })
        }
        Command::Proportionality {
            dataset,
            numerator,
            denominator,
            out,
        } => {
            let ds = load_dataset(&dataset)?;
            let rows = proportionality_report(&ds.participation_matrix()?, &numerator, &denominator)?;
            let report = Report::new(vec![digest_file(&dataset)?], rows);
            emit(report, out.as_deref(), format, |rows| {
                let mut s = format!("device      d (um)   {numerator}/{denominator}\n");
                for r in rows {
                    let d = r.d_um.map(|d| format!("{d:.2}")).unwrap_or_else(|| "-".into());
                    let ratio = r.ratio.map(|v| format!("{v:.4}")).unwrap_or_else(|| "flagged".into());
                    s.push_str(&format!("  {:<10} {d:>6}   {ratio}\n", r.device_id));
                }
                s
            })
        }
    }
}

/// Accepts a full extraction report or a bare `ExtractionResult`.
fn read_extraction(path: &Path) -> Result<ExtractionResult> {
    if let Ok(report) = read_report::<ExtractionReport>(path) {
        return Ok(report.result.extraction);
    }
    if let Ok(report) = read_report::<ExtractionResult>(path) {
        return Ok(report.result);
    }
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
