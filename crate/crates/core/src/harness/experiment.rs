//! One experiment: simulate (or load) a scenario, fuse every seed, evaluate, and write
//! the artifacts.
//!
//! Everything written depends only on the configuration and the seeds, so two runs of
//! the same experiment produce byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::report::{compute_error_report, ErrorReport, Stamped};
use super::HarnessError;
use crate::fusion::{
    nees, run_filter, write_output_csv, FilterKind, FilterState, FusionConfig, FusionInputs,
    FusionStats,
};
use crate::geo::GeodeticPosition;
use crate::ins::ImuErrorModel;
use crate::sim::presets::{self, Drive};
use crate::sim::{trace_trajectory, CleanRun, Scenario};

/// Prefix of environment variables that override configuration keys; nested keys are
/// joined with `__`, e.g. `MMFUSE__FUSION__ODOMETER_SIGMA=0.1`.
pub const ENV_PREFIX: &str = "MMFUSE__";

/// IMU error models selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImuPreset {
    Perfect,
    Consumer,
    /// The consumer unit's white noise without biases.
    ConsumerWhite,
    Tactical,
}

impl ImuPreset {
    pub fn model(self) -> ImuErrorModel {
        match self {
            Self::Perfect => ImuErrorModel::perfect(),
            Self::Consumer => ImuErrorModel::consumer_mems(),
            Self::ConsumerWhite => ImuErrorModel::consumer_mems().white_only(),
            Self::Tactical => ImuErrorModel::tactical(),
        }
    }
}

/// Exactly one of `preset`, `scenario_path` and `scenario` names the drive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Drive>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<Scenario>,
    /// Replaces the scenario's scene.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_path: Option<PathBuf>,
    /// Replaces the scenario's IMU error model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imu: Option<ImuPreset>,
    #[serde(default)]
    pub fusion: FusionConfig,
    /// Overrides `fusion.filter`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<FilterKind>,
    /// Overrides `fusion.use_sbr`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sbr: Option<bool>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// Fusion settings with the ablation flags applied.
    pub fn effective_fusion(&self) -> FusionConfig {
        let mut f = self.fusion.clone();
        if let Some(k) = self.filter {
            f.filter = k;
        }
        if let Some(s) = self.sbr {
            f.use_sbr = s;
        }
        f
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.name.trim().is_empty() {
            return Err(HarnessError::Config("`name` must not be empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("`seeds` must list at least one seed".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(HarnessError::Config("`seeds` contains duplicates".into()));
        }
        let sources = [self.preset.is_some(), self.scenario_path.is_some(), self.scenario.is_some()];
        if sources.iter().filter(|&&s| s).count() != 1 {
            return Err(HarnessError::Config(
                "set exactly one of `preset`, `scenario_path` or an inline [scenario] table".into(),
            ));
        }
        for p in self.scenario_path.iter().chain(&self.scene_path) {
            if !p.is_file() {
                return Err(HarnessError::Config(format!("referenced file {} does not exist", p.display())));
            }
        }
        self.effective_fusion()
            .validate()
            .map_err(|e| HarnessError::Config(format!("[fusion]: {e}")))
    }

    /// The scenario to simulate.
    pub fn resolve_scenario(&self) -> Result<Scenario, HarnessError> {
        let mut sc = match (&self.preset, &self.scenario_path, &self.scenario) {
            (Some(d), _, _) => presets::scenario(*d, ImuErrorModel::consumer_mems()),
            (_, Some(p), _) => parse_file(p)?,
            (_, _, Some(s)) => s.clone(),
            _ => return Err(HarnessError::Config("no scenario source".into())),
        };
        if let Some(p) = &self.scene_path {
            sc.scene = parse_file(p)?;
        }
        sc.scene.finalize()?;
        if let Some(imu) = self.imu {
            sc.imu_errors = imu.model();
        }
        sc.validate()?;
        Ok(sc)
    }

    /// Paths of the referenced input files.
    pub fn inputs(&self) -> Vec<&Path> {
        self.scenario_path.iter().chain(&self.scene_path).map(|p| p.as_path()).collect()
    }

    /// SHA-256 of the configuration, excluding the output directory.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let json = serde_json::to_vec(&c).expect("config serializes");
        hex(&Sha256::digest(&json))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(2 * bytes.len()), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn read_file(path: &Path) -> Result<String, HarnessError> {
    fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))
}

/// Parses TOML, or JSON when the extension says so.
fn parse_file<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, HarnessError> {
    let text = read_file(path)?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|message| HarnessError::Parse { path: path.to_path_buf(), message })
}

/// Sets `value` at the key path of each `PREFIX`ed variable. Values are read as TOML
/// literals where possible and as strings otherwise.
pub fn apply_env_overrides(
    value: &mut toml::Value,
    vars: impl IntoIterator<Item = (String, String)>,
) -> Result<(), HarnessError> {
    for (key, raw) in vars {
        let Some(rest) = key.strip_prefix(ENV_PREFIX) else { continue };
        let path: Vec<String> = rest.split("__").map(|s| s.to_ascii_lowercase()).collect();
        if path.iter().any(|s| s.is_empty()) {
            return Err(HarnessError::Config(format!("malformed override variable {key}")));
        }
        let parsed = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or(toml::Value::String(raw.clone()));
        let mut node = &mut *value;
        for seg in &path[..path.len() - 1] {
            let table = node
                .as_table_mut()
                .ok_or_else(|| HarnessError::Config(format!("{key}: `{seg}` is not inside a table")))?;
            node = table
                .entry(seg.clone())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        }
        node.as_table_mut()
            .ok_or_else(|| HarnessError::Config(format!("{key}: parent is not a table")))?
            .insert(path[path.len() - 1].clone(), parsed);
    }
    Ok(())
}

/// Reads an experiment file with environment overrides applied. Relative paths in the
/// file are taken relative to the file's directory.
pub fn load_config(
    path: &Path,
    vars: impl IntoIterator<Item = (String, String)>,
) -> Result<ExperimentConfig, HarnessError> {
    let text = read_file(path)?;
    let parse_err = |message: String| HarnessError::Parse { path: path.to_path_buf(), message };
    let mut value: toml::Value = toml::from_str(&text).map_err(|e| parse_err(e.to_string()))?;
    apply_env_overrides(&mut value, vars)?;
    let mut cfg: ExperimentConfig = value.try_into().map_err(|e: toml::de::Error| parse_err(e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new(""));
    for p in [&mut cfg.scenario_path, &mut cfg.scene_path].into_iter().flatten() {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
    if cfg.output_dir.is_relative() {
        cfg.output_dir = base.join(&cfg.output_dir);
    }
    Ok(cfg)
}

/// Outcome of one seed.
#[derive(Debug, Clone)]
pub struct SeedResult {
    pub seed: u64,
    pub report: ErrorReport,
    pub stats: FusionStats,
    /// Time average of the 9-state NEES against truth.
    pub mean_nees: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    /// All seeds pooled.
    pub report: ErrorReport,
    pub seeds: Vec<SeedResult>,
    /// Written files, relative to the output directory, in writing order.
    pub files: Vec<PathBuf>,
}

/// Fuses the sensor streams of one seed and scores the result.
pub fn run_seed(scenario: &Scenario, clean: &CleanRun, fusion: &FusionConfig, seed: u64) -> Result<(SeedResult, crate::fusion::FusionRun), HarnessError> {
    let frame = scenario.scene.frame();
    let meas = scenario.corrupt(clean, seed)?;
    let truth0 = clean.truth.samples.first().ok_or(HarnessError::EmptySeries)?.nav;
    let init = FilterState::new(truth0, fusion.initial.covariance(&truth0.position, &frame.earth), clean.truth.samples[0].t)?;
    let inputs = FusionInputs {
        imu: &meas.imu,
        odometer: &meas.odometer,
        channel: &meas.channel,
        stations: &clean.stations,
        frame: &frame,
    };
    let run = run_filter(&inputs, init, fusion)?;
    let estimate: Vec<Stamped> = run.epochs.iter().map(|e| Stamped { t: e.t, position: e.nav.position }).collect();
    let truth: Vec<Stamped> = clean
        .truth
        .samples
        .iter()
        .map(|s| Stamped { t: s.t, position: s.nav.position })
        .collect();
    let report = compute_error_report(&estimate, &truth, &frame)?;
    let mut total = 0.0;
    for e in &run.epochs {
        let st = FilterState { nav: e.nav, covariance: e.covariance, epoch: e.t };
        total += nees(&st, &clean.truth.nearest(e.t).nav)?;
    }
    let mean_nees = total / run.epochs.len().max(1) as f64;
    Ok((SeedResult { seed, report, stats: run.stats, mean_nees }, run))
}

/// Runs the experiment and writes its artifacts under `config.output_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome, HarnessError> {
    config.validate()?;
    let scenario = config.resolve_scenario()?;
    let fusion = config.effective_fusion();
    let clean = trace_trajectory(&scenario)?;
    let results: Vec<(SeedResult, Vec<u8>)> = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let (res, run) = run_seed(&scenario, &clean, &fusion, seed)?;
            let mut csv = Vec::new();
            write_output_csv(&mut csv, &run.epochs)?;
            Ok((res, csv))
        })
        .collect::<Result<_, HarnessError>>()?;
    let report = ErrorReport::pooled(results.iter().map(|(r, _)| &r.report))?;

    let out = &config.output_dir;
    fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    let mut files: Vec<(PathBuf, Vec<u8>)> = vec![
        ("report.txt".into(), report_text(config, &fusion, &report, &results).into_bytes()),
        ("report.csv".into(), report_csv(&report, &results)?),
        ("errors.csv".into(), errors_csv(&results)?),
        ("cdf.csv".into(), cdf_csv(&report)?),
        ("plot_cdf.py".into(), plot_script(&config.name).into_bytes()),
    ];
    for (r, csv) in &results {
        files.push((format!("estimate_seed{}.csv", r.seed).into(), csv.clone()));
    }
    let manifest = manifest_json(config, &files)?;
    files.push(("manifest.json".into(), manifest));
    for (name, bytes) in &files {
        let p = out.join(name);
        fs::write(&p, bytes).map_err(|e| HarnessError::io(&p, e))?;
    }
    Ok(ExperimentOutcome {
        report,
        seeds: results.into_iter().map(|(r, _)| r).collect(),
        files: files.into_iter().map(|(n, _)| n).collect(),
    })
}

fn filter_name(k: FilterKind) -> &'static str {
    match k {
        FilterKind::Ukf => "ukf",
        FilterKind::Ekf => "ekf",
    }
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    experiment: &'a str,
    filter: &'static str,
    sbr: bool,
    seeds: Vec<u64>,
    epochs: usize,
    rms_2d_m: f64,
    max_2d_m: f64,
    pct_sub_2m: f64,
    pct_sub_1m: f64,
    pct_sub_30cm: f64,
    seed: Vec<SeedSummary>,
}

#[derive(Serialize)]
struct SeedSummary {
    seed: u64,
    rms_2d_m: f64,
    max_2d_m: f64,
    pct_sub_30cm: f64,
    mean_nees: f64,
    stats: FusionStats,
}

/// TOML summary of the pooled and per-seed statistics.
fn report_text(cfg: &ExperimentConfig, fusion: &FusionConfig, r: &ErrorReport, results: &[(SeedResult, Vec<u8>)]) -> String {
    let summary = SummaryFile {
        experiment: &cfg.name,
        filter: filter_name(fusion.filter),
        sbr: fusion.use_sbr,
        seeds: cfg.seeds.clone(),
        epochs: r.errors.len(),
        rms_2d_m: r.rms_2d,
        max_2d_m: r.max_2d,
        pct_sub_2m: r.pct_sub_2m,
        pct_sub_1m: r.pct_sub_1m,
        pct_sub_30cm: r.pct_sub_30cm,
        seed: results
            .iter()
            .map(|(s, _)| SeedSummary {
                seed: s.seed,
                rms_2d_m: s.report.rms_2d,
                max_2d_m: s.report.max_2d,
                pct_sub_30cm: s.report.pct_sub_30cm,
                mean_nees: s.mean_nees,
                stats: s.stats,
            })
            .collect(),
    };
    toml::to_string(&summary).expect("summary serializes")
}

fn report_csv(r: &ErrorReport, results: &[(SeedResult, Vec<u8>)]) -> Result<Vec<u8>, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["seed", "rms_2d_m", "max_2d_m", "pct_sub_2m", "pct_sub_1m", "pct_sub_30cm"])?;
    let row = |label: String, r: &ErrorReport| {
        [label, r.rms_2d.to_string(), r.max_2d.to_string(), r.pct_sub_2m.to_string(), r.pct_sub_1m.to_string(), r.pct_sub_30cm.to_string()]
    };
    for (s, _) in results {
        w.write_record(row(s.seed.to_string(), &s.report))?;
    }
    w.write_record(row("all".into(), r))?;
    finish(w)
}

fn errors_csv(results: &[(SeedResult, Vec<u8>)]) -> Result<Vec<u8>, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["seed", "t", "error_2d_m"])?;
    for (s, _) in results {
        for e in &s.report.errors {
            w.write_record([s.seed.to_string(), e.t.to_string(), e.error_2d.to_string()])?;
        }
    }
    finish(w)
}

fn cdf_csv(r: &ErrorReport) -> Result<Vec<u8>, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["error_2d_m", "fraction"])?;
    for (e, f) in &r.cdf {
        w.write_record([e.to_string(), f.to_string()])?;
    }
    finish(w)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>, HarnessError> {
    w.into_inner().map_err(|e| HarnessError::Csv(e.into_error().into()))
}

fn plot_script(name: &str) -> String {
    format!(
        r#"# Plots the horizontal error CDF written next to this script.
import csv
import os

import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
with open(os.path.join(here, "cdf.csv")) as f:
    rows = list(csv.DictReader(f))
err = [float(r["error_2d_m"]) for r in rows]
frac = [float(r["fraction"]) for r in rows]

fig, ax = plt.subplots(figsize=(6, 4))
ax.step(err, frac, where="post")
ax.axvline(0.3, color="grey", linestyle=":", label="30 cm")
ax.set_xscale("log")
ax.set_xlabel("2D position error (m)")
ax.set_ylabel("CDF")
ax.set_title({name:?})
ax.grid(True, which="both", alpha=0.3)
ax.legend()
fig.tight_layout()
fig.savefig(os.path.join(here, "cdf.png"), dpi=150)
"#
    )
}

#[derive(Serialize)]
struct Manifest<'a> {
    experiment: &'a str,
    version: &'static str,
    config_sha256: String,
    seeds: &'a [u64],
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
}

#[derive(Serialize)]
struct FileDigest {
    path: String,
    sha256: String,
}

fn manifest_json(cfg: &ExperimentConfig, files: &[(PathBuf, Vec<u8>)]) -> Result<Vec<u8>, HarnessError> {
    let mut inputs = Vec::new();
    for p in cfg.inputs() {
        let mut bytes = Vec::new();
        fs::File::open(p)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| HarnessError::io(p, e))?;
        inputs.push(FileDigest { path: p.display().to_string(), sha256: hex(&Sha256::digest(&bytes)) });
    }
    let m = Manifest {
        experiment: &cfg.name,
        version: env!("CARGO_PKG_VERSION"),
        config_sha256: cfg.digest(),
        seeds: &cfg.seeds,
        inputs,
        outputs: files
            .iter()
            .map(|(n, b)| FileDigest { path: n.display().to_string(), sha256: hex(&Sha256::digest(b)) })
            .collect(),
    };
    let mut out = serde_json::to_vec_pretty(&m).expect("manifest serializes");
    out.push(b'\n');
    Ok(out)
}

#[derive(Deserialize)]
struct PositionRow {
    t: f64,
    #[serde(alias = "lat_rad")]
    lat: f64,
    #[serde(alias = "lon_rad")]
    lon: f64,
    #[serde(alias = "alt_m")]
    h: f64,
}

/// Reads `t, lat, lon, h` (radians, meters) from a CSV with a header row. Both the
/// filter output and the simulator's truth file have these columns; others are ignored.
pub fn read_positions_csv<R: Read>(reader: R) -> Result<Vec<Stamped>, HarnessError> {
    let mut out = Vec::new();
    for row in csv::Reader::from_reader(reader).deserialize() {
        let r: PositionRow = row?;
        out.push(Stamped { t: r.t, position: GeodeticPosition::new(r.lat, r.lon, r.h)? });
    }
    Ok(out)
}
