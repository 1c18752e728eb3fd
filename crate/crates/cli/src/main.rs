use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use mmfuse_core::fiveg::{read_observations_csv, write_observations_csv};
use mmfuse_core::fusion::{run_filter, write_output_csv, FilterKind, FilterState, FusionInputs};
use mmfuse_core::geo::{EarthModel, LocalFrame};
use mmfuse_core::harness::{
    self, compare, compare_experiments, compute_error_report, load_config, read_positions_csv,
    run_experiment, ExperimentConfig, Stamped,
};
use mmfuse_core::ins::{read_imu_csv, read_odometer_csv, write_imu_csv, write_odometer_csv};
use mmfuse_core::sim::presets::Drive;
use mmfuse_core::sim::{read_truth_csv, trace_trajectory, write_truth_csv};

/// 5G mmWave / INS / odometer fusion: simulate, fuse, evaluate.
///
/// Configuration keys can be overridden with MMFUSE__-prefixed environment variables,
/// nested keys joined by "__", e.g. MMFUSE__FUSION__ODOMETER_SIGMA=0.1.
#[derive(Parser)]
#[command(name = "mmfuse", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate truth and noisy sensor streams for one seed.
    Simulate(Common),
    /// Fuse a scenario's sensor streams (simulated, or recorded with --input).
    Fuse {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ablation: Ablation,
        /// Directory written by `simulate` to fuse instead of simulating afresh.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Score an estimate CSV against a truth CSV.
    Evaluate {
        #[arg(long)]
        estimate: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run several experiments and tabulate them side by side.
    Compare {
        /// Experiment files; give the flag once per experiment.
        #[arg(long = "config", required = true)]
        configs: Vec<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the bundled experiments as editable TOML files.
    Presets {
        #[arg(long, default_value = "configs")]
        out: PathBuf,
        /// Seeds listed in the written files.
        #[arg(long, num_args = 1.., default_values_t = [1, 2, 3, 4, 5])]
        seeds: Vec<u64>,
    },
    /// Run the bundled UKF/EKF and SBR ablations on both bundled drives.
    Demo {
        #[arg(long, default_value = "1")]
        seed: u64,
        #[arg(long, default_value = "demo-out")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Replaces the seed list of the config with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Replaces the output directory of the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Ablation {
    #[arg(long, value_enum)]
    filter: Option<FilterArg>,
    #[arg(long, value_enum)]
    sbr: Option<Switch>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FilterArg {
    Ukf,
    Ekf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = load_config(&common.config, std::env::vars())
        .with_context(|| format!("loading {}", common.config.display()))?;
    if let Some(s) = common.seed {
        cfg.seeds = vec![s];
    }
    if let Some(o) = &common.out {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn single_seed(cfg: &ExperimentConfig) -> Result<u64> {
    match cfg.seeds.as_slice() {
        [s] => Ok(*s),
        _ => bail!("this command needs exactly one seed; pass --seed"),
    }
}

fn simulate(common: &Common) -> Result<()> {
    let cfg = load(common)?;
    cfg.validate()?;
    let seed = single_seed(&cfg)?;
    let scenario = cfg.resolve_scenario()?;
    let clean = trace_trajectory(&scenario)?;
    let meas = scenario.corrupt(&clean, seed)?;
    let out = &cfg.output_dir;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("scenario.toml"), toml::to_string(&scenario)?)?;
    write_truth_csv(create(&out.join("truth.csv"))?, &clean.truth.samples, &scenario.scene.frame())?;
    write_imu_csv(create(&out.join("imu.csv"))?, &meas.imu)?;
    write_odometer_csv(create(&out.join("odometer.csv"))?, &meas.odometer)?;
    write_observations_csv(create(&out.join("channel.csv"))?, &meas.channel, true)?;
    println!(
        "{}: {:.1} s, {} IMU samples, {} channel paths -> {}",
        cfg.name,
        clean.truth.samples.last().map_or(0.0, |s| s.t),
        meas.imu.len(),
        meas.channel.len(),
        out.display()
    );
    Ok(())
}

fn fuse(common: &Common, ablation: &Ablation, input: Option<&Path>) -> Result<()> {
    let mut cfg = load(common)?;
    if let Some(f) = ablation.filter {
        cfg.filter = Some(match f {
            FilterArg::Ukf => FilterKind::Ukf,
            FilterArg::Ekf => FilterKind::Ekf,
        });
    }
    if let Some(s) = ablation.sbr {
        cfg.sbr = Some(matches!(s, Switch::On));
    }
    let Some(dir) = input else {
        let outcome = run_experiment(&cfg)?;
        print_summary(&cfg.name, &outcome.report);
        println!("artifacts in {}", cfg.output_dir.display());
        return Ok(());
    };
    // recorded streams; the scenario only supplies the scene
    cfg.validate()?;
    let scenario = cfg.resolve_scenario()?;
    let frame = scenario.scene.frame();
    let truth = read_truth_csv(open(&dir.join("truth.csv"))?)?;
    let first = truth.first().context("truth.csv is empty")?;
    let fusion = cfg.effective_fusion();
    let init = FilterState::new(first.nav, fusion.initial.covariance(&first.nav.position, &frame.earth), first.t)?;
    let imu = read_imu_csv(open(&dir.join("imu.csv"))?)?;
    let odometer = read_odometer_csv(open(&dir.join("odometer.csv"))?)?;
    let channel = read_observations_csv(open(&dir.join("channel.csv"))?)?;
    let stations = scenario.scene.base_stations();
    let inputs = FusionInputs { imu: &imu, odometer: &odometer, channel: &channel, stations: &stations, frame: &frame };
    let run = run_filter(&inputs, init, &fusion)?;
    fs::create_dir_all(&cfg.output_dir)?;
    write_output_csv(create(&cfg.output_dir.join("estimate.csv"))?, &run.epochs)?;
    let est: Vec<Stamped> = run.epochs.iter().map(|e| Stamped { t: e.t, position: e.nav.position }).collect();
    let tr: Vec<Stamped> = truth.iter().map(|s| Stamped { t: s.t, position: s.nav.position }).collect();
    print_summary(&cfg.name, &compute_error_report(&est, &tr, &frame)?);
    println!("{:?}", run.stats);
    Ok(())
}

fn print_summary(name: &str, r: &harness::ErrorReport) {
    println!(
        "{name}: RMS {:.3} m, max {:.3} m, sub-2 m {:.1} %, sub-1 m {:.1} %, sub-30 cm {:.1} %",
        r.rms_2d, r.max_2d, r.pct_sub_2m, r.pct_sub_1m, r.pct_sub_30cm
    );
}

fn evaluate(estimate: &Path, truth: &Path, out: Option<&Path>) -> Result<()> {
    let est = read_positions_csv(open(estimate)?)?;
    let tr = read_positions_csv(open(truth)?)?;
    let origin = tr.first().context("truth file is empty")?.position;
    let frame = LocalFrame::new(origin, EarthModel::wgs84());
    let r = compute_error_report(&est, &tr, &frame)?;
    print_summary(&estimate.display().to_string(), &r);
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_writer(create(&dir.join("errors.csv"))?);
        w.write_record(["t", "error_2d_m"])?;
        for e in &r.errors {
            w.write_record([e.t.to_string(), e.error_2d.to_string()])?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_writer(create(&dir.join("cdf.csv"))?);
        w.write_record(["error_2d_m", "fraction"])?;
        for (e, f) in &r.cdf {
            w.write_record([e.to_string(), f.to_string()])?;
        }
        w.flush()?;
    }
    Ok(())
}

fn write_table(out: &Path, stem: &str, table: &harness::ComparisonTable) -> Result<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join(format!("{stem}.txt")), table.to_string())?;
    fs::write(out.join(format!("{stem}.json")), serde_json::to_string_pretty(table)? + "\n")?;
    Ok(())
}

fn run_compare(paths: &[PathBuf], seed: Option<u64>, out: Option<&Path>) -> Result<()> {
    let mut configs = Vec::new();
    for p in paths {
        let mut c = load(&Common { config: p.clone(), seed, out: None })?;
        if let Some(o) = out {
            c.output_dir = o.join(&c.name);
        }
        configs.push(c);
    }
    let (table, _) = compare_experiments(&configs)?;
    print!("{table}");
    if let Some(o) = out {
        write_table(o, "comparison", &table)?;
    }
    Ok(())
}

fn demo(seed: u64, out: &Path) -> Result<()> {
    use harness::presets::{drive_name, sbr_ablation, ukf_vs_ekf};
    for drive in [Drive::HighOutage, Drive::LowOutage] {
        let dir = out.join(drive_name(drive));
        let [ukf_sbr, ekf_sbr] = ukf_vs_ekf(drive, &[seed], &dir);
        let [_, ukf_nosbr] = sbr_ablation(drive, &[seed], &dir);
        let reports: Vec<_> = [&ukf_sbr, &ekf_sbr, &ukf_nosbr]
            .into_iter()
            .map(run_experiment)
            .collect::<Result<_, _>>()?;
        let engines = compare(&[("UKF".into(), &reports[0].report), ("EKF".into(), &reports[1].report)]);
        let sbr = compare(&[("W/o SBRs".into(), &reports[2].report), ("W/ SBRs".into(), &reports[0].report)]);
        println!("== {} drive, seed {seed}\n\n{engines}\n{sbr}", drive_name(drive));
        write_table(&dir, "ukf_vs_ekf", &engines)?;
        write_table(&dir, "sbr_ablation", &sbr)?;
    }
    println!("artifacts in {}", out.display());
    Ok(())
}

fn write_presets(out: &Path, seeds: &[u64]) -> Result<()> {
    use harness::presets::{sbr_ablation, ukf_vs_ekf};
    fs::create_dir_all(out)?;
    for drive in [Drive::LowOutage, Drive::HighOutage] {
        let [ukf, ekf] = ukf_vs_ekf(drive, seeds, Path::new("runs"));
        let [_, nosbr] = sbr_ablation(drive, seeds, Path::new("runs"));
        for cfg in [ukf, ekf, nosbr] {
            let path = out.join(format!("{}.toml", cfg.name));
            fs::write(&path, toml::to_string(&cfg)?)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Simulate(c) => simulate(c),
        Command::Fuse { common, ablation, input } => fuse(common, ablation, input.as_deref()),
        Command::Evaluate { estimate, truth, out } => evaluate(estimate, truth, out.as_deref()),
        Command::Compare { configs, seed, out } => run_compare(configs, *seed, out.as_deref()),
        Command::Presets { out, seeds } => write_presets(out, seeds),
        Command::Demo { seed, out } => demo(*seed, out),
    }
}
