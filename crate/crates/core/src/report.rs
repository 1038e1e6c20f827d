//! Pipeline orchestration and machine-readable report emission.
//!
//! `run_pipeline` ingests the four input files, runs every analysis stage
//! and writes a deterministic bundle of CSV/JSON outputs plus a manifest
//! that echoes the effective config and the per-step status. Identical
//! inputs and config produce byte-identical bundles: station ordering is
//! fixed, all maps are ordered, and no timestamps or environment state leak
//! into the output. Plotting is the caller's concern; these files are the
//! data behind the plots, never rendered images.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregate::{
    aggregate_hourly, build_band_series, energy_average, filter_coverage, percentile_summary,
    BandDailySeries,
};
use crate::changepoint::{changepoint_report, objective_curve, StationChangePoint, Verdict};
use crate::config::AnalysisConfig;
use crate::diagnostics::{linearity_test, LinearityDiagnostic, LinearityVerdict};
use crate::error::Error;
use crate::exceedance::{exceedance_report, period_summary};
use crate::exceedance::ExceedanceRow;
use crate::ingest::{
    audit_gaps_for, load_schools, load_stations, load_traffic, parse_samples, Gap, IngestReport,
    SchoolPoint, TrafficPoint,
};
use crate::model::{
    format_timestamp, period_of, Decibel, HourlyMetrics, NoiseSample, Period, PeriodSplit,
    Station, StationId, TimeBand,
};
use crate::spatial::{noise_traffic_fit, school_count, station_traffic};
use crate::trend::{band_trends, Metric};

/// Paths to the four inputs of a full run.
#[derive(Debug, Clone)]
pub struct InputPaths {
    pub samples: PathBuf,
    pub stations: PathBuf,
    pub traffic: PathBuf,
    pub schools: PathBuf,
}

/// Whether a failure came from reading inputs or from analysis, which maps
/// onto the CLI exit codes (1 and 2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FailureKind {
    Input,
    Analysis,
}

/// A pipeline failure pinned to the step that raised it.
#[derive(Debug)]
pub struct PipelineError {
    pub step: &'static str,
    pub kind: FailureKind,
    pub source: Error,
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self.kind {
            FailureKind::Input => 1,
            FailureKind::Analysis => 2,
        }
    }
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "step {} failed: {}", self.step, self.source)
    }
}

impl std::error::Error for PipelineError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

/// Per-step status recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepStatus {
    pub step: String,
    pub status: String,
    pub detail: String,
}

/// The JSON manifest closing a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// Key-value echo of the effective config; re-parses to an equal config.
    pub config: String,
    pub steps: Vec<StepStatus>,
    pub outputs: Vec<String>,
    pub failed_step: Option<String>,
}

type StepResult<T> = std::result::Result<T, PipelineError>;

fn input_err(step: &'static str) -> impl FnOnce(Error) -> PipelineError {
    move |source| PipelineError {
        step,
        kind: FailureKind::Input,
        source,
    }
}

fn analysis_err(step: &'static str) -> impl FnOnce(Error) -> PipelineError {
    move |source| PipelineError {
        step,
        kind: FailureKind::Analysis,
        source,
    }
}

/// Everything the full pipeline loads.
pub struct LoadedInputs {
    pub samples: Vec<NoiseSample>,
    pub ingest_report: IngestReport,
    pub stations: Vec<Station>,
    pub traffic: Vec<TrafficPoint>,
    pub schools: Vec<SchoolPoint>,
}

/// Read and validate all four inputs.
pub fn load_inputs(paths: &InputPaths) -> StepResult<LoadedInputs> {
    let (samples, ingest_report) = read_samples_file(&paths.samples)?;
    if samples.is_empty() {
        return Err(input_err("ingest")(Error::EmptyInput(
            "no accepted samples in the samples file",
        )));
    }
    let file = fs::File::open(&paths.stations).map_err(|e| input_err("ingest")(e.into()))?;
    let (stations, _) = load_stations(file).map_err(input_err("ingest"))?;
    if stations.is_empty() {
        return Err(input_err("ingest")(Error::EmptyInput("no valid stations")));
    }
    let file = fs::File::open(&paths.traffic).map_err(|e| input_err("ingest")(e.into()))?;
    let (traffic, _) = load_traffic(file).map_err(input_err("ingest"))?;
    let file = fs::File::open(&paths.schools).map_err(|e| input_err("ingest")(e.into()))?;
    let (schools, _) = load_schools(file).map_err(input_err("ingest"))?;
    Ok(LoadedInputs {
        samples,
        ingest_report,
        stations,
        traffic,
        schools,
    })
}

/// Parse a samples file from disk.
pub fn read_samples_file(path: &Path) -> StepResult<(Vec<NoiseSample>, IngestReport)> {
    let file = fs::File::open(path).map_err(|e| input_err("ingest")(e.into()))?;
    parse_samples(file).map_err(input_err("ingest"))
}

/// Hourly metrics grouped per station, clipped to the analysis window and
/// filtered by the coverage policy. Per-station aggregation runs in
/// parallel; the keyed result is deterministic.
pub fn hourly_by_station(
    samples: &[NoiseSample],
    config: &AnalysisConfig,
) -> StepResult<BTreeMap<StationId, Vec<HourlyMetrics>>> {
    let split = config.period_split().map_err(analysis_err("hourly"))?;
    let mut per_station: BTreeMap<StationId, Vec<NoiseSample>> = BTreeMap::new();
    for s in samples {
        per_station
            .entry(s.station_id.clone())
            .or_default()
            .push(s.clone());
    }
    let groups: Vec<(StationId, Vec<NoiseSample>)> = per_station.into_iter().collect();
    let results: Vec<Result<(StationId, Vec<HourlyMetrics>), Error>> = groups
        .into_par_iter()
        .map(|(id, station_samples)| {
            let hourly = aggregate_hourly(&station_samples)?;
            let hourly = filter_coverage(hourly, config.coverage_mode);
            let clipped: Vec<HourlyMetrics> = hourly
                .into_iter()
                .filter(|h| h.hour_start >= split.analysis_start && h.hour_start < split.analysis_end)
                .collect();
            Ok((id, clipped))
        })
        .collect();

    let mut map = BTreeMap::new();
    for r in results {
        let (id, hourly) = r.map_err(analysis_err("hourly"))?;
        if !hourly.is_empty() {
            map.insert(id, hourly);
        }
    }
    if map.is_empty() {
        return Err(analysis_err("hourly")(Error::EmptyInput(
            "no hourly metrics inside the analysis window",
        )));
    }
    Ok(map)
}

/// All band series for every station, in (station, band) order.
pub fn all_band_series(
    hourly: &BTreeMap<StationId, Vec<HourlyMetrics>>,
    config: &AnalysisConfig,
) -> StepResult<Vec<BandDailySeries>> {
    let scheme = config.band_scheme().map_err(analysis_err("band-series"))?;
    let mut out = Vec::new();
    for hours in hourly.values() {
        for band in TimeBand::ALL {
            let series = build_band_series(hours, band, &scheme).map_err(analysis_err("band-series"))?;
            if !series.entries.is_empty() {
                out.push(series);
            }
        }
    }
    Ok(out)
}

fn fmt_f(v: f64) -> String {
    format!("{v:.6}")
}

fn fmt_pct(v: f64) -> String {
    format!("{v:.2}")
}

fn write_file(dir: &Path, name: &str, content: &str) -> StepResult<()> {
    let mut f = fs::File::create(dir.join(name)).map_err(|e| PipelineError {
        step: "write-output",
        kind: FailureKind::Input,
        source: e.into(),
    })?;
    f.write_all(content.as_bytes()).map_err(|e| PipelineError {
        step: "write-output",
        kind: FailureKind::Input,
        source: e.into(),
    })
}

fn csv_quote(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Render the hourly metrics CSV.
pub fn hourly_csv(hourly: &BTreeMap<StationId, Vec<HourlyMetrics>>) -> String {
    let mut out = String::from("station_id,hour_start,avg_db,max_db,min_db,n_samples,low_coverage\n");
    for (id, hours) in hourly {
        for h in hours {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                csv_quote(id.as_str()),
                format_timestamp(h.hour_start),
                fmt_f(h.avg.value()),
                fmt_f(h.max.value()),
                fmt_f(h.min.value()),
                h.n_samples,
                h.is_low_coverage()
            ));
        }
    }
    out
}

/// Render the band-daily series CSV (the per-band time series data).
pub fn band_daily_csv(series: &[BandDailySeries]) -> String {
    let mut out = String::from("station_id,band,date,avg_db,max_db,min_db,n_hours\n");
    for s in series {
        for e in &s.entries {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                csv_quote(s.station_id.as_str()),
                s.band,
                e.date,
                fmt_f(e.avg.value()),
                fmt_f(e.max.value()),
                fmt_f(e.min.value()),
                e.n_hours
            ));
        }
    }
    out
}

/// Render the station × band × metric trend table.
pub fn trends_csv(cells: &[crate::trend::TrendCell]) -> String {
    let mut out =
        String::from("station_id,band,metric,slope_db_per_day,intercept_db,slope_se,t_stat,p_value,significant,n\n");
    for c in cells {
        match &c.result {
            Some(r) => out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                csv_quote(c.station_id.as_str()),
                c.band,
                c.metric.label(),
                fmt_f(r.slope),
                fmt_f(r.intercept),
                fmt_f(r.slope_se),
                fmt_f(r.t_stat),
                fmt_f(r.p_value),
                r.significant,
                r.n
            )),
            None => out.push_str(&format!(
                "{},{},{},unavailable,,,,,,\n",
                csv_quote(c.station_id.as_str()),
                c.band,
                c.metric.label()
            )),
        }
    }
    out
}

/// Render the per-station change point table.
pub fn changepoints_csv(rows: &[StationChangePoint]) -> String {
    let mut out = String::from(
        "station_id,verdict,tau,change_date,cost_unsplit,best_split_cost,penalty,multiple_changes,error\n",
    );
    for row in rows {
        match &row.result {
            Ok(r) => {
                let change = r
                    .changed_at
                    .map(format_timestamp)
                    .unwrap_or_else(|| "none".to_string());
                let tau = r.tau.map(|t| t.to_string()).unwrap_or_default();
                let multiple = row
                    .multiple
                    .as_ref()
                    .map(|ts| {
                        ts.iter()
                            .map(|t| format_timestamp(*t))
                            .collect::<Vec<_>>()
                            .join(";")
                    })
                    .unwrap_or_default();
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},\n",
                    csv_quote(row.station_id.as_str()),
                    match r.verdict {
                        Verdict::Change => "change",
                        Verdict::NoChange => "no-change",
                    },
                    tau,
                    change,
                    fmt_f(r.cost_unsplit),
                    fmt_f(r.cost_left + r.cost_right),
                    fmt_f(r.penalty),
                    multiple
                ));
            }
            Err(msg) => out.push_str(&format!(
                "{},error,,,,,,,{}\n",
                csv_quote(row.station_id.as_str()),
                csv_quote(msg)
            )),
        }
    }
    out
}

/// Render the gap list.
pub fn gaps_csv(gaps: &[Gap]) -> String {
    let mut out = String::from("station_id,slot_start\n");
    for g in gaps {
        out.push_str(&format!(
            "{},{}\n",
            csv_quote(g.station_id.as_str()),
            format_timestamp(g.slot_start)
        ));
    }
    out
}

/// Render the per-station exceedance table.
pub fn exceedance_csv(rows: &[ExceedanceRow]) -> String {
    let mut out = String::from(
        "station_id,pre_count,pre_total,pre_pct,during_count,during_total,during_pct\n",
    );
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            csv_quote(row.station_id.as_str()),
            row.pre_count,
            row.pre_total,
            fmt_pct(row.pre_pct),
            row.during_count,
            row.during_total,
            fmt_pct(row.during_pct)
        ));
    }
    out
}

/// Render the per-lag linearity table and the per-series verdict table.
pub fn linearity_csvs(
    rows: &[(StationId, TimeBand, std::result::Result<LinearityDiagnostic, String>)],
) -> (String, String) {
    let mut lin = String::from("station_id,band,lag,phi,bound,inside_band\n");
    let mut verdicts = String::from("station_id,band,n,bound,verdict\n");
    for (id, band, outcome) in rows {
        match outcome {
            Ok(d) => {
                for (lag, phi) in d.phi.iter().enumerate() {
                    lin.push_str(&format!(
                        "{},{},{},{},{},{}\n",
                        csv_quote(id.as_str()),
                        band,
                        lag,
                        fmt_f(*phi),
                        fmt_f(d.bound),
                        phi.abs() <= d.bound
                    ));
                }
                verdicts.push_str(&format!(
                    "{},{},{},{},{}\n",
                    csv_quote(id.as_str()),
                    band,
                    d.n,
                    fmt_f(d.bound),
                    match d.verdict {
                        LinearityVerdict::Linear => "linear",
                        LinearityVerdict::Nonlinear => "nonlinear",
                    }
                ));
            }
            Err(msg) => verdicts.push_str(&format!(
                "{},{},,,unavailable: {}\n",
                csv_quote(id.as_str()),
                band,
                csv_quote(msg)
            )),
        }
    }
    (lin, verdicts)
}

/// Render the per-τ penalized split objective per station.
pub fn curves_csv(
    hourly: &BTreeMap<StationId, Vec<HourlyMetrics>>,
    params: &crate::changepoint::ChangePointParams,
) -> String {
    let mut out = String::from("station_id,tau,split_objective\n");
    for (id, hours) in hourly {
        let y: Vec<f64> = hours.iter().map(|h| h.avg.value()).collect();
        if let Ok(curve) = objective_curve(&y, params) {
            for (tau, objective) in curve {
                out.push_str(&format!(
                    "{},{},{}\n",
                    csv_quote(id.as_str()),
                    tau,
                    fmt_f(objective)
                ));
            }
        }
    }
    out
}

/// Render the traffic join table.
pub fn table3_csv(traffic: &[crate::spatial::StationTraffic]) -> String {
    let mut sorted = traffic.to_vec();
    sorted.sort_by(|a, b| a.station_id.cmp(&b.station_id));
    let mut out = String::from("station_id,n_points_500m,night_mean,day_mean,evening_mean\n");
    for row in &sorted {
        match row.means {
            Some(m) => out.push_str(&format!(
                "{},{},{},{},{}\n",
                csv_quote(row.station_id.as_str()),
                row.n_points_in_radius,
                fmt_f(m.night),
                fmt_f(m.day),
                fmt_f(m.evening)
            )),
            None => out.push_str(&format!("{},0,,,\n", csv_quote(row.station_id.as_str()))),
        }
    }
    out
}

/// Render the per-station period energy averages.
pub fn fig2_csv(summaries: &[crate::exceedance::PeriodAverages]) -> String {
    let mut out = String::from("station_id,pre_avg_db,during_avg_db\n");
    for s in summaries {
        out.push_str(&format!(
            "{},{},{}\n",
            csv_quote(s.station_id.as_str()),
            s.pre_avg.map(|d| fmt_f(d.value())).unwrap_or_default(),
            s.during_avg.map(|d| fmt_f(d.value())).unwrap_or_default()
        ));
    }
    out
}

/// Render box-plot style percentile summaries per station, period and
/// metric over the hourly values.
pub fn fig3_csv(
    hourly: &BTreeMap<StationId, Vec<HourlyMetrics>>,
    split: &PeriodSplit,
) -> String {
    let mut out = String::from("station_id,period,metric,p5,p25,p50,p75,p95\n");
    for (id, hours) in hourly {
        for period in [Period::Pre, Period::During] {
            for metric in Metric::ALL {
                let values: Vec<Decibel> = hours
                    .iter()
                    .filter(|h| matches!(period_of(h.hour_start, split), Ok(p) if p == period))
                    .map(|h| match metric {
                        Metric::Avg => h.avg,
                        Metric::Max => h.max,
                        Metric::Min => h.min,
                    })
                    .collect();
                if let Ok(p) = percentile_summary(&values) {
                    out.push_str(&format!(
                        "{},{},{},{},{},{},{},{}\n",
                        csv_quote(id.as_str()),
                        period,
                        metric.label(),
                        fmt_f(p.p5),
                        fmt_f(p.p25),
                        fmt_f(p.p50),
                        fmt_f(p.p75),
                        fmt_f(p.p95)
                    ));
                }
            }
        }
    }
    out
}

/// Render the noise-traffic scatter points.
pub fn fig8_csv(rows: &[Fig8Row]) -> String {
    let mut out = String::from("station_id,band,mean_traffic,mean_noise_db,group\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            csv_quote(r.0.as_str()),
            r.1,
            fmt_f(r.2),
            fmt_f(r.3),
            r.4
        ));
    }
    out
}

/// Render one fit per (group, band) with at least three scatter points.
pub fn fig8_fits_csv(rows: &[Fig8Row]) -> String {
    let mut out = String::from("group,band,slope,intercept,r_squared,n\n");
    for (group, band) in fit_groups(rows) {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.4 == group && r.1 == band)
            .map(|r| (r.2, r.3))
            .collect();
        if let Ok(fit) = noise_traffic_fit(&pts) {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                group,
                band,
                fmt_f(fit.slope),
                fmt_f(fit.intercept),
                fmt_f(fit.r_squared),
                fit.n
            ));
        }
    }
    out
}

/// Render the station gazetteer joined with change dates and school counts.
pub fn table1_csv(
    stations: &[Station],
    changes: &[StationChangePoint],
    schools: &[(StationId, usize)],
) -> String {
    let change_by_id: BTreeMap<&StationId, String> = changes
        .iter()
        .map(|c| {
            let s = match &c.result {
                Ok(r) => r
                    .changed_at
                    .map(format_timestamp)
                    .unwrap_or_else(|| "none".to_string()),
                Err(_) => "error".to_string(),
            };
            (&c.station_id, s)
        })
        .collect();
    let schools_by_id: BTreeMap<&StationId, usize> =
        schools.iter().map(|(id, n)| (id, *n)).collect();

    let mut sorted: Vec<&Station> = stations.iter().collect();
    sorted.sort_by(|a, b| a.station_id.cmp(&b.station_id));

    let mut out = String::from("station_id,name,lat,lon,change_date,n_schools_500m\n");
    for st in sorted {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            csv_quote(st.station_id.as_str()),
            csv_quote(&st.name),
            st.location.lat,
            st.location.lon,
            change_by_id
                .get(&st.station_id)
                .cloned()
                .unwrap_or_else(|| "none".to_string()),
            schools_by_id.get(&st.station_id).copied().unwrap_or(0)
        ));
    }
    out
}

struct Bundle<'a> {
    dir: &'a Path,
    outputs: Vec<String>,
    steps: Vec<StepStatus>,
}

impl<'a> Bundle<'a> {
    fn emit(&mut self, name: &str, content: &str) -> StepResult<()> {
        write_file(self.dir, name, content)?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn step_ok(&mut self, step: &str, detail: String) {
        self.steps.push(StepStatus {
            step: step.to_string(),
            status: "ok".to_string(),
            detail,
        });
    }
}

/// Run the whole pipeline and write the report bundle into `out_dir`.
///
/// On failure a partial manifest naming the failed step is still written
/// (best effort) and the error carries the step and failure kind for exit
/// code mapping.
pub fn run_pipeline(
    config: &AnalysisConfig,
    inputs: &InputPaths,
    out_dir: &Path,
) -> std::result::Result<Manifest, PipelineError> {
    let result = run_pipeline_inner(config, inputs, out_dir);
    match result {
        Ok(manifest) => Ok(manifest),
        Err((err, steps)) => {
            let manifest = Manifest {
                config: config.to_kv_string(),
                steps,
                outputs: Vec::new(),
                failed_step: Some(err.step.to_string()),
            };
            if let Ok(json) = serde_json::to_string_pretty(&manifest) {
                let _ = fs::create_dir_all(out_dir);
                let _ = fs::write(out_dir.join("manifest.json"), json);
            }
            Err(err)
        }
    }
}

#[allow(clippy::type_complexity)]
fn run_pipeline_inner(
    config: &AnalysisConfig,
    inputs: &InputPaths,
    out_dir: &Path,
) -> std::result::Result<Manifest, (PipelineError, Vec<StepStatus>)> {
    let mut steps: Vec<StepStatus> = Vec::new();
    macro_rules! try_step {
        ($expr:expr) => {
            match $expr {
                Ok(v) => v,
                Err(e) => return Err((e, steps)),
            }
        };
    }

    try_step!(config.validate().map_err(input_err("config")));
    try_step!(fs::create_dir_all(out_dir).map_err(|e| input_err("config")(e.into())));
    let split = config.period_split().expect("validated");
    steps.push(StepStatus {
        step: "config".into(),
        status: "ok".into(),
        detail: String::new(),
    });

    let mut bundle = Bundle {
        dir: out_dir,
        outputs: Vec::new(),
        steps,
    };

    macro_rules! try_b {
        ($expr:expr) => {
            match $expr {
                Ok(v) => v,
                Err(e) => return Err((e, bundle.steps)),
            }
        };
    }

    // ingest
    let mut loaded = try_b!(load_inputs(inputs));
    let station_ids: Vec<StationId> = loaded
        .stations
        .iter()
        .map(|s| s.station_id.clone())
        .collect();
    loaded.ingest_report.gaps = audit_gaps_for(&loaded.samples, &station_ids, &split);
    let gap_count = loaded.ingest_report.gaps.len();
    try_b!(bundle.emit("config_echo.txt", &config.to_kv_string()));
    let ingest_json = try_b!(serde_json::to_string_pretty(&loaded.ingest_report)
        .map_err(|e| input_err("ingest")(e.into())));
    try_b!(bundle.emit("ingest_report.json", &ingest_json));
    try_b!(bundle.emit("gaps.csv", &gaps_csv(&loaded.ingest_report.gaps)));
    bundle.step_ok(
        "ingest",
        format!(
            "accepted {} of {} rows, {} flagged, {} missing slots",
            loaded.ingest_report.rows_accepted,
            loaded.ingest_report.rows_read,
            loaded.ingest_report.rows_flagged,
            gap_count
        ),
    );

    // hourly metrics
    let hourly = try_b!(hourly_by_station(&loaded.samples, config));
    try_b!(bundle.emit("hourly.csv", &hourly_csv(&hourly)));
    bundle.step_ok(
        "hourly",
        format!(
            "{} station series, {} hours",
            hourly.len(),
            hourly.values().map(Vec::len).sum::<usize>()
        ),
    );

    // band-daily series
    let band_series = try_b!(all_band_series(&hourly, config));
    try_b!(bundle.emit("band_daily.csv", &band_daily_csv(&band_series)));
    bundle.step_ok("band-series", format!("{} series", band_series.len()));

    // trends
    let cells = band_trends(&band_series, config.alpha);
    try_b!(bundle.emit("table2_trends.csv", &trends_csv(&cells)));
    bundle.step_ok(
        "trend",
        format!(
            "{} cells, {} significant",
            cells.len(),
            cells
                .iter()
                .filter(|c| c.result.as_ref().is_some_and(|r| r.significant))
                .count()
        ),
    );

    // change points
    let params = config.changepoint_params();
    let changes = changepoint_report(&hourly, &params, config.changepoint_mode);
    try_b!(bundle.emit("changepoints.csv", &changepoints_csv(&changes)));
    try_b!(bundle.emit("changepoint_curves.csv", &curves_csv(&hourly, &params)));
    bundle.step_ok(
        "changepoint",
        format!(
            "{} stations, {} with a change",
            changes.len(),
            changes
                .iter()
                .filter(|c| c.result.as_ref().is_ok_and(|r| r.verdict == Verdict::Change))
                .count()
        ),
    );

    // linearity
    let diagnostics = linearity_rows(&band_series, config);
    let (lin, verdicts) = linearity_csvs(&diagnostics);
    try_b!(bundle.emit("linearity.csv", &lin));
    try_b!(bundle.emit("linearity_verdicts.csv", &verdicts));
    bundle.step_ok("linearity", format!("{} series tested", diagnostics.len()));

    // exceedance
    let exceedance = exceedance_report(&hourly, config.threshold_db, &split);
    try_b!(bundle.emit("table4_exceedance.csv", &exceedance_csv(&exceedance)));
    bundle.step_ok("exceedance", format!("{} stations", exceedance.len()));

    // spatial joins and the traffic-noise relation
    let schools = school_count(&loaded.stations, &loaded.schools, config.radius_m);
    let traffic = station_traffic(&loaded.stations, &loaded.traffic, config.radius_m);
    try_b!(bundle.emit("table3_traffic.csv", &table3_csv(&traffic)));
    try_b!(bundle.emit(
        "table1_stations.csv",
        &table1_csv(&loaded.stations, &changes, &schools)
    ));

    let fig8 = try_b!(fig8_rows(&hourly, &traffic, config, &split));
    try_b!(bundle.emit("fig8_noise_traffic.csv", &fig8_csv(&fig8)));
    try_b!(bundle.emit("fig8_fits.csv", &fig8_fits_csv(&fig8)));
    bundle.step_ok(
        "spatial",
        format!(
            "{} stations joined, {} scatter points",
            traffic.len(),
            fig8.len()
        ),
    );

    // period comparison data
    let summaries = try_b!(period_summary(&hourly, &split).map_err(analysis_err("figures")));
    try_b!(bundle.emit("fig2_period_averages.csv", &fig2_csv(&summaries)));
    try_b!(bundle.emit("fig3_percentiles.csv", &fig3_csv(&hourly, &split)));
    bundle.step_ok("figures", format!("{} stations summarized", summaries.len()));

    // manifest
    let manifest = Manifest {
        config: config.to_kv_string(),
        steps: bundle.steps.clone(),
        outputs: {
            let mut o = bundle.outputs.clone();
            o.push("manifest.json".to_string());
            o
        },
        failed_step: None,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| (input_err("manifest")(e.into()), bundle.steps.clone()))?;
    write_file(out_dir, "manifest.json", &json).map_err(|e| (e, bundle.steps.clone()))?;
    Ok(manifest)
}

/// Linearity diagnostics per (station, band) over the band-daily average
/// series, in deterministic order. Failures are kept as messages.
pub fn linearity_rows(
    band_series: &[BandDailySeries],
    config: &AnalysisConfig,
) -> Vec<(StationId, TimeBand, std::result::Result<LinearityDiagnostic, String>)> {
    let mut rows: Vec<_> = band_series
        .par_iter()
        .map(|s| {
            let y: Vec<f64> = s.entries.iter().map(|e| e.avg.value()).collect();
            let outcome = linearity_test(&y, config.max_lag, config.linearity_rule)
                .map_err(|e| e.to_string());
            (s.station_id.clone(), s.band, outcome)
        })
        .collect();
    rows.sort_by(|a, b| (&a.0, a.1).cmp(&(&b.0, b.1)));
    rows
}

/// One traffic-noise scatter point: station, band, mean traffic, mean
/// noise, group label.
pub type Fig8Row = (StationId, TimeBand, f64, f64, &'static str);

/// Scatter points for the traffic-noise relation: per station and band,
/// the mean in-radius traffic against the pre-period energy average of the
/// band's hourly levels. Stations without traffic data or without
/// pre-period hours in a band are left out.
pub fn fig8_rows(
    hourly: &BTreeMap<StationId, Vec<HourlyMetrics>>,
    traffic: &[crate::spatial::StationTraffic],
    config: &AnalysisConfig,
    split: &PeriodSplit,
) -> StepResult<Vec<Fig8Row>> {
    let scheme = config.band_scheme().map_err(analysis_err("spatial"))?;
    let mut rows = Vec::new();
    for t in traffic {
        let Some(means) = t.means else { continue };
        let Some(hours) = hourly.get(&t.station_id) else {
            continue;
        };
        for band in TimeBand::ALL {
            let levels: Vec<Decibel> = hours
                .iter()
                .filter(|h| {
                    scheme.band_of(h.hour_start) == band
                        && matches!(period_of(h.hour_start, split), Ok(Period::Pre))
                })
                .map(|h| h.avg)
                .collect();
            if levels.is_empty() {
                continue;
            }
            let noise = energy_average(&levels).map_err(analysis_err("spatial"))?;
            let group = if config.is_city_center(&t.station_id) {
                "city_center"
            } else {
                "other"
            };
            rows.push((t.station_id.clone(), band, means.for_band(band), noise.value(), group));
        }
    }
    rows.sort_by(|a, b| (&a.0, a.1).cmp(&(&b.0, b.1)));
    Ok(rows)
}

fn fit_groups(rows: &[Fig8Row]) -> Vec<(&'static str, TimeBand)> {
    let mut seen = Vec::new();
    for r in rows {
        let key = (r.4, r.1);
        if !seen.contains(&key) {
            seen.push(key);
        }
    }
    seen.sort_by_key(|(g, b)| (*g, *b));
    seen
}
