//! noisescape — multi-station noise analytics from the command line.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use noisescape_core::changepoint::changepoint_report;
use noisescape_core::config::AnalysisConfig;
use noisescape_core::exceedance::{exceedance_report, period_summary};
use noisescape_core::ingest::{audit_gaps_for, load_schools, load_stations, load_traffic};
use noisescape_core::report::{
    all_band_series, band_daily_csv, changepoints_csv, curves_csv, exceedance_csv, fig2_csv,
    fig3_csv, fig8_csv, fig8_fits_csv, gaps_csv, hourly_by_station, hourly_csv, linearity_csvs,
    linearity_rows, read_samples_file, run_pipeline, table1_csv, table3_csv, trends_csv,
    FailureKind, InputPaths, PipelineError,
};
use noisescape_core::spatial::{school_count, station_traffic};
use noisescape_core::synthgen::{generate, ScenarioSpec};
use noisescape_core::trend::band_trends;

const DEFAULTS_HELP: &str = "\
Defaults (all overridable through --config, a `key = value` file):
  analysis_start       2020-01-01T00:00  analysis window start
  split_instant        2020-03-25T00:00  pre/during boundary (Dublin lockdown
                                         midnight)
  analysis_end         2020-05-12T00:00  window end, exclusive
  threshold_db         55                WHO guideline level above which
                                         average noise is treated as harmful
  radius_m             500               neighborhood radius for the traffic
                                         and school joins
  day_start_hour       7                 day band 07:00-19:00
  evening_start_hour   19                evening band 19:00-23:00
  night_start_hour     23                night band 23:00-07:00
  max_lag              50                linearity lags 0..=50
  alpha                0.05              two-sided slope significance level
  min_segment_len      5                 shortest change-point segment
  variance_floor       1e-8              Gaussian cost variance floor (dB^2)
  penalty_dim          3                 model parameters charged per change
                                         point (BIC penalty = 3 log n)
  changepoint_mode     single            `single` or `multiple`
  coverage_mode        inclusive         `strict` drops hours under 50% slot
                                         coverage
  linearity_rule       strict            `fraction95` allows 5% of lags
                                         outside the +/-1.96/sqrt(n) band
  city_center_stations (empty)           station ids grouped separately in
                                         the traffic-noise fits";

#[derive(Parser)]
#[command(
    name = "noisescape",
    about = "Noise-monitoring analytics: aggregation, trends, change points, linearity, exceedance, spatial joins",
    after_long_help = DEFAULTS_HELP,
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Key-value config file; omitted keys keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for the emitted files.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a samples file, reporting flags and missing slots.
    IngestCheck {
        /// 5-minute samples CSV (station_id,timestamp,leq_db,lmax_db).
        #[arg(long)]
        samples: PathBuf,
        /// Optional station gazetteer; when given, the gap audit covers
        /// every listed station rather than only those present in samples.
        #[arg(long)]
        stations: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Optional directory for ingest_report.json and gaps.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Hourly metrics and band-daily series.
    Aggregate {
        #[arg(long)]
        samples: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Least-squares trends per station, band and metric.
    Trend {
        #[arg(long)]
        samples: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Change-point detection on the hourly average series.
    Changepoint {
        #[arg(long)]
        samples: PathBuf,
        /// Also emit the per-tau penalized objective curves.
        #[arg(long)]
        curves: bool,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Cross-correlation linearity diagnostics per station and band.
    Linearity {
        #[arg(long)]
        samples: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Threshold exceedance counts per period.
    Exceedance {
        #[arg(long)]
        samples: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Radius joins against traffic detectors and schools; with samples,
    /// also the traffic-noise scatter and fits.
    Spatial {
        #[arg(long)]
        stations: PathBuf,
        #[arg(long)]
        traffic: PathBuf,
        #[arg(long)]
        schools: PathBuf,
        /// Needed for the traffic-noise scatter (pre-period noise levels).
        #[arg(long)]
        samples: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Full pipeline: every table, series and the manifest.
    Report {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        stations: PathBuf,
        #[arg(long)]
        traffic: PathBuf,
        #[arg(long)]
        schools: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Generate a synthetic samples file with a ground-truth manifest.
    Synth {
        /// Scenario spec (JSON).
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("noisescape: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn input_error(step: &'static str, source: noisescape_core::Error) -> PipelineError {
    PipelineError {
        step,
        kind: FailureKind::Input,
        source,
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<AnalysisConfig, PipelineError> {
    match path {
        None => Ok(AnalysisConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| input_error("config", e.into()))?;
            AnalysisConfig::parse(&text).map_err(|e| input_error("config", e))
        }
    }
}

fn write_out(dir: &Path, name: &str, content: &str) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(|e| input_error("write-output", e.into()))?;
    fs::write(dir.join(name), content).map_err(|e| input_error("write-output", e.into()))?;
    println!("wrote {}", dir.join(name).display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::IngestCheck {
            samples,
            stations,
            config,
            out,
        } => {
            let config = load_config(&config)?;
            let split = config.period_split().map_err(|e| input_error("config", e))?;
            let (parsed, mut report) = read_samples_file(&samples)?;
            let station_ids: Vec<_> = match stations {
                Some(path) => {
                    let file = fs::File::open(&path).map_err(|e| input_error("ingest", e.into()))?;
                    let (st, _) = load_stations(file).map_err(|e| input_error("ingest", e))?;
                    st.into_iter().map(|s| s.station_id).collect()
                }
                None => {
                    let mut ids: Vec<_> =
                        parsed.iter().map(|s| s.station_id.clone()).collect();
                    ids.sort();
                    ids.dedup();
                    ids
                }
            };
            report.gaps = audit_gaps_for(&parsed, &station_ids, &split);
            println!(
                "rows read {}, accepted {}, flagged {}, missing slots {}",
                report.rows_read,
                report.rows_accepted,
                report.rows_flagged,
                report.gaps.len()
            );
            for flag in report.flags.iter().take(20) {
                println!("  line {}: {} ({})", flag.line, flag.reason.code(), flag.detail);
            }
            if report.flags.len() > 20 {
                println!("  ... {} more flags", report.flags.len() - 20);
            }
            if let Some(dir) = out {
                let json = serde_json::to_string_pretty(&report)
                    .map_err(|e| input_error("write-output", e.into()))?;
                write_out(&dir, "ingest_report.json", &json)?;
                write_out(&dir, "gaps.csv", &gaps_csv(&report.gaps))?;
            }
            Ok(())
        }
        Command::Aggregate { samples, common } => {
            let config = load_config(&common.config)?;
            let (parsed, _) = read_samples_file(&samples)?;
            let hourly = hourly_by_station(&parsed, &config)?;
            let series = all_band_series(&hourly, &config)?;
            write_out(&common.out, "hourly.csv", &hourly_csv(&hourly))?;
            write_out(&common.out, "band_daily.csv", &band_daily_csv(&series))
        }
        Command::Trend { samples, common } => {
            let config = load_config(&common.config)?;
            let (parsed, _) = read_samples_file(&samples)?;
            let hourly = hourly_by_station(&parsed, &config)?;
            let series = all_band_series(&hourly, &config)?;
            let cells = band_trends(&series, config.alpha);
            write_out(&common.out, "table2_trends.csv", &trends_csv(&cells))
        }
        Command::Changepoint {
            samples,
            curves,
            common,
        } => {
            let config = load_config(&common.config)?;
            let (parsed, _) = read_samples_file(&samples)?;
            let hourly = hourly_by_station(&parsed, &config)?;
            let params = config.changepoint_params();
            let rows = changepoint_report(&hourly, &params, config.changepoint_mode);
            write_out(&common.out, "changepoints.csv", &changepoints_csv(&rows))?;
            if curves {
                write_out(
                    &common.out,
                    "changepoint_curves.csv",
                    &curves_csv(&hourly, &params),
                )?;
            }
            Ok(())
        }
        Command::Linearity { samples, common } => {
            let config = load_config(&common.config)?;
            let (parsed, _) = read_samples_file(&samples)?;
            let hourly = hourly_by_station(&parsed, &config)?;
            let series = all_band_series(&hourly, &config)?;
            let rows = linearity_rows(&series, &config);
            let (lin, verdicts) = linearity_csvs(&rows);
            write_out(&common.out, "linearity.csv", &lin)?;
            write_out(&common.out, "linearity_verdicts.csv", &verdicts)
        }
        Command::Exceedance { samples, common } => {
            let config = load_config(&common.config)?;
            let split = config.period_split().map_err(|e| input_error("config", e))?;
            let (parsed, _) = read_samples_file(&samples)?;
            let hourly = hourly_by_station(&parsed, &config)?;
            let rows = exceedance_report(&hourly, config.threshold_db, &split);
            write_out(&common.out, "table4_exceedance.csv", &exceedance_csv(&rows))?;
            let summaries = period_summary(&hourly, &split)
                .map_err(|e| input_error("exceedance", e))?;
            write_out(&common.out, "fig2_period_averages.csv", &fig2_csv(&summaries))?;
            write_out(&common.out, "fig3_percentiles.csv", &fig3_csv(&hourly, &split))
        }
        Command::Spatial {
            stations,
            traffic,
            schools,
            samples,
            common,
        } => {
            let config = load_config(&common.config)?;
            let file = fs::File::open(&stations).map_err(|e| input_error("ingest", e.into()))?;
            let (stations, _) = load_stations(file).map_err(|e| input_error("ingest", e))?;
            let file = fs::File::open(&traffic).map_err(|e| input_error("ingest", e.into()))?;
            let (traffic, _) = load_traffic(file).map_err(|e| input_error("ingest", e))?;
            let file = fs::File::open(&schools).map_err(|e| input_error("ingest", e.into()))?;
            let (schools, _) = load_schools(file).map_err(|e| input_error("ingest", e))?;

            let joined = station_traffic(&stations, &traffic, config.radius_m);
            write_out(&common.out, "table3_traffic.csv", &table3_csv(&joined))?;
            let counts = school_count(&stations, &schools, config.radius_m);
            write_out(&common.out, "table1_stations.csv", &table1_csv(&stations, &[], &counts))?;

            if let Some(samples_path) = samples {
                let split = config.period_split().map_err(|e| input_error("config", e))?;
                let (parsed, _) = read_samples_file(&samples_path)?;
                let hourly = hourly_by_station(&parsed, &config)?;
                let rows =
                    noisescape_core::report::fig8_rows(&hourly, &joined, &config, &split)?;
                write_out(&common.out, "fig8_noise_traffic.csv", &fig8_csv(&rows))?;
                write_out(&common.out, "fig8_fits.csv", &fig8_fits_csv(&rows))?;
            }
            Ok(())
        }
        Command::Report {
            samples,
            stations,
            traffic,
            schools,
            common,
        } => {
            let config = load_config(&common.config)?;
            let inputs = InputPaths {
                samples,
                stations,
                traffic,
                schools,
            };
            let manifest = run_pipeline(&config, &inputs, &common.out)?;
            for step in &manifest.steps {
                println!("{:<12} {}  {}", step.step, step.status, step.detail);
            }
            println!("bundle written to {}", common.out.display());
            Ok(())
        }
        Command::Synth { spec, out } => {
            let text = fs::read_to_string(&spec).map_err(|e| input_error("synth", e.into()))?;
            let scenario: ScenarioSpec =
                serde_json::from_str(&text).map_err(|e| input_error("synth", e.into()))?;
            let (samples_csv, truth) = generate(&scenario).map_err(|e| input_error("synth", e))?;
            let truth_json = serde_json::to_string_pretty(&truth)
                .map_err(|e| input_error("synth", e.into()))?;
            write_out(&out, "samples.csv", &samples_csv)?;
            write_out(&out, "truth.json", &truth_json)
        }
    }
}
