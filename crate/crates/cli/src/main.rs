use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use letap::dataset::{export_pr_csv, load_config, load_dataset, read_report, save_dataset, write_report, DatasetError};
use letap::metrics::{evaluate_with_workers, EvalError};
use letap::synth::{synthesize, NoiseModel, SceneSpec, SynthError};
use letap::{ClassLabel, Config, Matcher, Report};

/// Longitudinal-error-tolerant evaluation of 3D object detections.
#[derive(Debug, Parser)]
#[command(name = "letap", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate predictions against ground truth and print a summary table.
    Evaluate {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        eval: EvalFlags,
        /// Where to write the JSON report.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Evaluate at several longitudinal tolerances and tabulate LET-3D-AP and LET-3D-APL.
    Sweep {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        eval: EvalFlags,
        /// Tolerances as fractions of the range, comma separated, each in (0, 1].
        #[arg(long, value_name = "FRACTIONS", value_delimiter = ',', required = true)]
        tolerances: Vec<f64>,
        /// Where to write the table as CSV.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic ground-truth and prediction dataset.
    Synth(SynthFlags),
    /// Export the PR curves of a report as CSV.
    PrExport {
        /// JSON report written by `evaluate`.
        #[arg(long, value_name = "PATH")]
        report: PathBuf,
        /// Output CSV path.
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct Input {
    /// Ground-truth records, one JSON object per line.
    #[arg(long, value_name = "PATH")]
    gt: PathBuf,
    /// Prediction records, one JSON object per line.
    #[arg(long, value_name = "PATH")]
    pred: PathBuf,
}

#[derive(Debug, Args)]
struct EvalFlags {
    /// JSON config file; the flags below override its values.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Longitudinal tolerance as a fraction of the ground-truth range [default: 0.1].
    #[arg(long, value_name = "FRACTION")]
    tolerance: Option<f64>,
    /// Floor of the longitudinal tolerance, in meters [default: 0.5].
    #[arg(long = "min-tolerance-m", value_name = "METERS")]
    min_tolerance_m: Option<f64>,
    /// Per-class IoU threshold, dimensionless in (0, 1); repeatable
    /// [default: vehicle=0.5, pedestrian=0.3, cyclist=0.3].
    #[arg(long = "iou-threshold", value_name = "CLASS=VALUE", value_parser = parse_threshold)]
    iou_threshold: Vec<(ClassLabel, f64)>,
    /// Association algorithm [default: hungarian].
    #[arg(long, value_enum)]
    matcher: Option<MatcherArg>,
    /// Worker threads; 0 uses every core. Output does not depend on it.
    #[arg(long, value_name = "N", default_value_t = 0)]
    workers: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MatcherArg {
    Hungarian,
    Greedy,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    Camera,
    Lidar,
    Noiseless,
}

#[derive(Debug, Args)]
struct SynthFlags {
    /// Output ground-truth file.
    #[arg(long = "out-gt", value_name = "PATH")]
    out_gt: PathBuf,
    /// Output prediction file.
    #[arg(long = "out-pred", value_name = "PATH")]
    out_pred: PathBuf,
    /// Scene seed; the detector uses seed + 1.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of frames.
    #[arg(long, default_value_t = 100)]
    frames: usize,
    /// Fewest objects per frame.
    #[arg(long, default_value_t = 5)]
    min_objects: usize,
    /// Most objects per frame.
    #[arg(long, default_value_t = 20)]
    max_objects: usize,
    /// Smallest object range, in meters.
    #[arg(long = "min-range-m", value_name = "METERS", default_value_t = 5.0)]
    min_range_m: f64,
    /// Largest object range, in meters.
    #[arg(long = "max-range-m", value_name = "METERS", default_value_t = 80.0)]
    max_range_m: f64,
    /// Noise preset the flags below start from.
    #[arg(long, value_enum, default_value = "camera")]
    preset: Preset,
    /// Radial error std as a fraction of the range (dimensionless).
    #[arg(long = "sigma-frac", value_name = "FRACTION")]
    sigma_frac: Option<f64>,
    /// Lateral error std, in meters.
    #[arg(long = "lateral-sigma-m", value_name = "METERS")]
    lateral_sigma_m: Option<f64>,
    /// Relative std of box dimensions (dimensionless).
    #[arg(long = "dims-sigma-frac", value_name = "FRACTION")]
    dims_sigma_frac: Option<f64>,
    /// Heading error std, in radians.
    #[arg(long = "heading-sigma-rad", value_name = "RADIANS")]
    heading_sigma_rad: Option<f64>,
    /// Probability of missing an object, in [0, 1].
    #[arg(long = "miss-rate", value_name = "PROB")]
    miss_rate: Option<f64>,
    /// Mean number of false positives per frame.
    #[arg(long = "fp-rate", value_name = "PER_FRAME")]
    fp_rate: Option<f64>,
    /// Std of the additive score jitter (score units).
    #[arg(long = "score-jitter", value_name = "STD")]
    score_jitter: Option<f64>,
}

fn parse_threshold(s: &str) -> Result<(ClassLabel, f64), String> {
    let (class, value) = s.split_once('=').ok_or_else(|| format!("expected CLASS=VALUE, got `{s}`"))?;
    let value: f64 = value.trim().parse().map_err(|e| format!("bad threshold `{value}`: {e}"))?;
    Ok((class.trim().parse()?, value))
}

enum Failure {
    Usage(String),
    Evaluation(String),
}

impl From<DatasetError> for Failure {
    fn from(e: DatasetError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Config(c) => Failure::Usage(format!("invalid configuration: {c}")),
            other => Failure::Evaluation(other.to_string()),
        }
    }
}

impl From<SynthError> for Failure {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::PlacementFailure { .. } => Failure::Evaluation(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

fn build_config(flags: &EvalFlags) -> Result<Config, Failure> {
    let mut cfg = match &flags.config {
        Some(path) => load_config(path)?,
        None => Config::default(),
    };
    if let Some(t) = flags.tolerance {
        cfg.tolerance.longitudinal_tolerance_percentage = t;
    }
    if let Some(m) = flags.min_tolerance_m {
        cfg.tolerance.min_longitudinal_tolerance_meter = m;
    }
    for (class, value) in &flags.iou_threshold {
        cfg.iou_thresholds.insert(class.clone(), *value);
    }
    if let Some(m) = flags.matcher {
        cfg.matcher = match m {
            MatcherArg::Hungarian => Matcher::Hungarian,
            MatcherArg::Greedy => Matcher::Greedy,
        };
    }
    cfg.validate().map_err(|e| Failure::Usage(format!("invalid configuration: {e}")))?;
    Ok(cfg)
}

fn percent(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{:.1}", 100.0 * v))
}

fn summary_table(report: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<12} {:<8} {:>6} {:>6} {:>8} {:>10} {:>11} {:>6}",
        "class", "range", "#gt", "#pred", "3D AP", "LET-3D-AP", "LET-3D-APL", "mLA"
    );
    for e in &report.entries {
        let _ = writeln!(
            out,
            "{:<12} {:<8} {:>6} {:>6} {:>8} {:>10} {:>11} {:>6}",
            e.class.as_str(),
            e.range_bin,
            e.num_ground_truths,
            e.num_predictions,
            percent(e.ap_3d),
            percent(e.let_3d_ap),
            percent(e.let_3d_apl),
            e.mla.map_or_else(|| "-".to_string(), |m| format!("{m:.3}")),
        );
    }
    out
}

fn run_evaluate(input: &Input, flags: &EvalFlags, out: Option<&Path>) -> Result<(), Failure> {
    let cfg = build_config(flags)?;
    let frames = load_dataset(&input.gt, &input.pred)?;
    let report = evaluate_with_workers(&frames, &cfg, flags.workers)?;
    if let Some(path) = out {
        write_report(&report, path)?;
    }
    print!("{}", summary_table(&report));
    Ok(())
}

fn run_sweep(input: &Input, flags: &EvalFlags, tolerances: &[f64], out: Option<&Path>) -> Result<(), Failure> {
    if let Some(t) = tolerances.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
        return Err(Failure::Usage(format!("tolerance {t} is outside (0, 1]")));
    }
    let base = build_config(flags)?;
    let frames = load_dataset(&input.gt, &input.pred)?;
    let mut csv = String::from("tolerance,class,range_bin,let_3d_ap,let_3d_apl\n");
    let mut table = format!("{:>9} {:<12} {:<8} {:>10} {:>11}\n", "tolerance", "class", "range", "LET-3D-AP", "LET-3D-APL");
    for &t in tolerances {
        let mut cfg = base.clone();
        cfg.tolerance.longitudinal_tolerance_percentage = t;
        let report = evaluate_with_workers(&frames, &cfg, flags.workers)?;
        for e in report.entries.iter().filter(|e| e.let_3d_ap.is_some()) {
            let (ap, apl) = (e.let_3d_ap.unwrap_or(0.0), e.let_3d_apl.unwrap_or(0.0));
            let _ = writeln!(csv, "{t},{},{},{ap},{apl}", e.class, e.range_bin);
            let _ = writeln!(
                table,
                "{:>9} {:<12} {:<8} {:>10} {:>11}",
                format!("{:.1}%", 100.0 * t),
                e.class.as_str(),
                e.range_bin,
                percent(Some(ap)),
                percent(Some(apl))
            );
        }
    }
    if let Some(path) = out {
        std::fs::write(path, csv).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    }
    print!("{table}");
    Ok(())
}

fn run_synth(flags: &SynthFlags) -> Result<(), Failure> {
    let spec = SceneSpec {
        frames: flags.frames,
        min_objects_per_frame: flags.min_objects,
        max_objects_per_frame: flags.max_objects,
        min_range: flags.min_range_m,
        max_range: flags.max_range_m,
        seed: flags.seed,
        ..SceneSpec::default()
    };
    let mut noise = match flags.preset {
        Preset::Camera => NoiseModel::camera_like(),
        Preset::Lidar => NoiseModel::lidar_like(),
        Preset::Noiseless => NoiseModel::noiseless(),
    };
    let overrides = [
        (flags.sigma_frac, &mut noise.longitudinal_sigma_fraction),
        (flags.lateral_sigma_m, &mut noise.lateral_sigma),
        (flags.dims_sigma_frac, &mut noise.dims_sigma_fraction),
        (flags.heading_sigma_rad, &mut noise.heading_sigma),
        (flags.miss_rate, &mut noise.miss_rate),
        (flags.fp_rate, &mut noise.false_positive_rate_per_frame),
        (flags.score_jitter, &mut noise.score_jitter),
    ];
    for (value, field) in overrides {
        if let Some(v) = value {
            *field = v;
        }
    }
    let frames = synthesize(&spec, &noise)?;
    save_dataset(&frames, &flags.out_gt, &flags.out_pred)?;
    let objects: usize = frames.iter().map(|f| f.ground_truths.len()).sum();
    let detections: usize = frames.iter().map(|f| f.predictions.len()).sum();
    println!("seed {}: {} frames, {objects} objects, {detections} detections", flags.seed, frames.len());
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Evaluate { input, eval, out } => run_evaluate(&input, &eval, out.as_deref()),
        Command::Sweep { input, eval, tolerances, out } => run_sweep(&input, &eval, &tolerances, out.as_deref()),
        Command::Synth(flags) => run_synth(&flags),
        Command::PrExport { report, out } => {
            let report = read_report(&report)?;
            export_pr_csv(&report, &out)?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Evaluation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
