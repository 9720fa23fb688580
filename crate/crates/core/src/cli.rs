//! The `cdgin` command line.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data error,
//! 4 verification failure (gradient check above tolerance).

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::cdgin::Stream;
use crate::config::{CliConfigFile, TrainConfig};
use crate::data_io::{load_dataset, signals_to_csv};
use crate::diffcore::checkpoint;
use crate::dynamic_fc::{self, DistanceKind, WindowSpec};
use crate::error::{Error, Result};
use crate::io_util::write_atomic;
use crate::model::{attention_record, AttentionRecord, InputConfig, ModelConfig, SubjectInput};
use crate::synthgen::{self, SynthKind, SynthSpec};
use crate::train_eval::{self, epoch_log_jsonl};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

/// Relative-error tolerance for `gradcheck`.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(name = "cdgin", version, about = "Correlation-distance dual-stream dynamic graph learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled synthetic dataset (CSV per subject + manifest.json).
    Synth(SynthArgs),
    /// Train on the non-test subjects and score the held-out test subjects.
    Train(TrainArgs),
    /// Stratified k-fold cross-validation over the non-test subjects.
    Cv(CvArgs),
    /// Compare reverse-mode gradients of the total loss with central differences.
    Gradcheck(GradcheckArgs),
    /// Write per-window similarity matrices, adjacencies and edge lists for one subject.
    FcDump(FcDumpArgs),
    /// Export channel, temporal and readout attention of a trained model.
    AttnExport(AttnExportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// correlation, amplitude or switching.
    #[arg(long, default_value = "correlation")]
    pub kind: String,
    /// Number of subjects; must be even.
    #[arg(long, default_value_t = 60)]
    pub subjects: usize,
    #[arg(long, default_value_t = 10)]
    pub rois: usize,
    #[arg(long, default_value_t = 120)]
    pub timepoints: usize,
    /// Standard deviation of the i.i.d. Gaussian noise.
    #[arg(long, default_value_t = 0.5)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Class-1 multiplier for `--kind amplitude`.
    #[arg(long, default_value_t = 2.0)]
    pub amplitude_factor: f64,
    /// Size of the shared-latent ROI block [default: rois / 2].
    #[arg(long)]
    pub block_size: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// TOML config; every key is optional (see `TrainConfig` defaults).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one config key, e.g. `--set epochs=20`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Dataset manifest.json [default: `data` from the config].
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory [default: `out` from the config].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Number of folds [default: `folds` from the config, 4].
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Folds trained in parallel.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Config to check [default: the tiny config, 6 ROIs, 40 timepoints,
    /// window 10, stride 5, D 8, 2 layers, alpha 0.1, delta 1].
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct FcDumpArgs {
    /// Dataset manifest.json.
    #[arg(long)]
    pub data: PathBuf,
    /// Subject id from the manifest.
    #[arg(long)]
    pub subject: String,
    #[arg(long, default_value_t = 35)]
    pub window_size: usize,
    #[arg(long, default_value_t = 25)]
    pub stride: usize,
    /// euclidean, manhattan or mahalanobis.
    #[arg(long, default_value = "euclidean")]
    pub distance: String,
    /// Mahalanobis ridge scale (multiplies tr(cov)/WS).
    #[arg(long, default_value_t = DistanceKind::DEFAULT_RIDGE_SCALE)]
    pub ridge: f64,
    /// Skip per-ROI z-scoring.
    #[arg(long)]
    pub no_normalize: bool,
    /// Output directory; without it, CSV blocks go to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AttnExportArgs {
    /// Checkpoint written by `train` (or a `cv` fold).
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset manifest.json; every subject is exported.
    #[arg(long)]
    pub data: PathBuf,
    /// Config [default: config.toml next to the checkpoint].
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err.root() {
        Error::Config(_) | Error::Spec(_) | Error::ContrastiveConfig(_) | Error::Checkpoint(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn execute(command: Command) -> Result<i32> {
    match command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Cv(a) => cmd_cv(&a),
        Command::Gradcheck(a) => cmd_gradcheck(&a),
        Command::FcDump(a) => cmd_fc_dump(&a),
        Command::AttnExport(a) => cmd_attn_export(&a),
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn load_config(args: &ConfigArgs) -> Result<CliConfigFile> {
    match &args.config {
        Some(path) => CliConfigFile::load(path, &args.overrides),
        None => CliConfigFile::parse("", &args.overrides),
    }
}

fn require(path: Option<PathBuf>, fallback: Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    path.or(fallback)
        .ok_or_else(|| Error::Config(format!("`--{flag}` not given and not set in the config")))
}

fn cmd_synth(a: &SynthArgs) -> Result<i32> {
    let spec = SynthSpec {
        kind: SynthKind::parse(&a.kind)?,
        n_subjects: a.subjects,
        rois: a.rois,
        timepoints: a.timepoints,
        noise_std: a.noise,
        seed: a.seed,
        amplitude_factor: a.amplitude_factor,
        block_size: a.block_size,
    };
    let subjects = synthgen::generate(&spec)?;
    let manifest = synthgen::write_dataset(&a.out, &subjects)?;
    println!(
        "wrote {} subjects ({} ROIs x {} timepoints) to {}",
        manifest.entries.len(),
        spec.rois,
        spec.timepoints,
        a.out.join("manifest.json").display()
    );
    Ok(EXIT_OK)
}

fn write_run_config(out: &Path, cfg: &TrainConfig, model: &ModelConfig) -> Result<()> {
    write_atomic(&out.join("config.toml"), cfg.to_toml().as_bytes())?;
    write_atomic(&out.join("model.json"), to_json(model)?.as_bytes())
}

fn cmd_train(a: &TrainArgs) -> Result<i32> {
    let file = load_config(&a.config)?;
    let data = require(a.data.clone(), file.data, "data")?;
    let out = require(a.out.clone(), file.out, "out")?;
    let (manifest, subjects) = load_dataset(&data)?;
    let (trained, report) = train_eval::train_holdout(&manifest, &subjects, &file.train)?;
    checkpoint::save(&out.join("model.ckpt"), &trained.params)?;
    write_atomic(&out.join("epochs.jsonl"), epoch_log_jsonl(&trained.log).as_bytes())?;
    write_atomic(&out.join("report.json"), to_json(&report)?.as_bytes())?;
    write_run_config(&out, &file.train, &trained.model)?;
    println!(
        "trained {} epochs on {} subjects; test auc {} acc {} se {} sp {}",
        trained.log.len(),
        report.train_ids.len(),
        report.test.auc,
        report.test.acc,
        report.test.se,
        report.test.sp
    );
    Ok(EXIT_OK)
}

fn cmd_cv(a: &CvArgs) -> Result<i32> {
    let file = load_config(&a.config)?;
    let mut cfg = file.train;
    if let Some(k) = a.folds {
        cfg.folds = k;
        cfg.validate()?;
    }
    let data = require(a.data.clone(), file.data, "data")?;
    let out = require(a.out.clone(), file.out, "out")?;
    let (manifest, subjects) = load_dataset(&data)?;
    let (report, model, artifacts) = train_eval::cross_validate(&manifest, &subjects, &cfg, a.jobs)?;
    for (i, art) in artifacts.iter().enumerate() {
        checkpoint::save(&out.join(format!("fold{i}.ckpt")), &art.params)?;
        write_atomic(&out.join(format!("fold{i}_epochs.jsonl")), epoch_log_jsonl(&art.log).as_bytes())?;
    }
    write_atomic(&out.join("cv_report.json"), to_json(&report)?.as_bytes())?;
    write_run_config(&out, &cfg, &model)?;
    for f in &report.per_fold {
        println!("fold {}: auc {} acc {} se {} sp {}", f.fold, f.val.auc, f.val.acc, f.val.se, f.val.sp);
    }
    let s = &report.summary.formatted;
    println!("summary: auc {} acc {} se {} sp {}", s["auc"], s["acc"], s["se"], s["sp"]);
    Ok(EXIT_OK)
}

fn cmd_gradcheck(a: &GradcheckArgs) -> Result<i32> {
    let base = match &a.config {
        Some(path) => CliConfigFile::load(path, &a.overrides)?.train,
        None => TrainConfig::from_toml_with_overrides(&train_eval::tiny_config().to_toml(), &a.overrides)?,
    };
    let report = train_eval::gradcheck_model(&base, a.seed)?;
    println!("{}", serde_json::to_string(&report)?);
    println!("max relative error {:.3e} ({}[{}])", report.max_rel_error, report.worst_param, report.worst_index);
    Ok(if report.max_rel_error < GRADCHECK_TOLERANCE { EXIT_OK } else { EXIT_VERIFY })
}

fn edges_csv(adjacency: &crate::matrix::Matrix) -> String {
    let mut s = String::from("src,dst\n");
    for (i, j) in dynamic_fc::edge_list(adjacency) {
        writeln!(s, "{i},{j}").unwrap();
    }
    s
}

fn cmd_fc_dump(a: &FcDumpArgs) -> Result<i32> {
    let spec = WindowSpec::new(a.window_size, a.stride).map_err(|e| Error::Config(e.to_string()))?;
    let kind = DistanceKind::parse(&a.distance, a.ridge)?;
    let (_, subjects) = load_dataset(&a.data)?;
    let subject = subjects
        .iter()
        .find(|s| s.subject_id == a.subject)
        .ok_or_else(|| Error::Manifest(format!("subject `{}` not in manifest", a.subject)))?;
    let subject = if a.no_normalize {
        subject.clone()
    } else {
        crate::data_io::zscore_normalize(subject)
    };
    let windows = dynamic_fc::dynamic_fc(&subject.signals, spec, kind)?;
    let mut stdout_blocks = String::new();
    for w in &windows {
        let blocks = [("r", &w.r), ("d", &w.d), ("a_r", &w.a_r), ("a_d", &w.a_d)];
        match &a.out {
            Some(dir) => {
                for (name, m) in blocks {
                    let path = dir.join(format!("window{:03}_{name}.csv", w.window_index));
                    write_atomic(&path, signals_to_csv(m).as_bytes())?;
                }
                for (name, m) in [("r", &w.a_r), ("d", &w.a_d)] {
                    let path = dir.join(format!("window{:03}_edges_{name}.csv", w.window_index));
                    write_atomic(&path, edges_csv(m).as_bytes())?;
                }
            }
            None => {
                for (name, m) in blocks {
                    writeln!(stdout_blocks, "# window {} start {} {name}", w.window_index, w.start).unwrap();
                    stdout_blocks.push_str(&signals_to_csv(m));
                }
            }
        }
    }
    match &a.out {
        Some(dir) => println!("wrote {} windows for `{}` to {}", windows.len(), a.subject, dir.display()),
        None => print!("{stdout_blocks}"),
    }
    Ok(EXIT_OK)
}

/// Plot-ready series for one subject and layer.
#[derive(Debug, Serialize)]
struct AttentionSeries<'a> {
    subject_id: &'a str,
    label: u8,
    prob: f64,
    layer: usize,
    window_index: Vec<usize>,
    start_timepoint: &'a [usize],
    temporal: &'a [f64],
    /// Per stream: mean channel factor times the temporal factor, by window.
    stream_factor: std::collections::BTreeMap<&'static str, Vec<f64>>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:?}"))
}

pub fn attention_csv(records: &[AttentionRecord]) -> String {
    let mut s = String::from(
        "subject_id,layer,window_index,start_timepoint,temporal_factor,mean_channel_factor_r_block,mean_channel_factor_d_block\n",
    );
    for r in records {
        for l in &r.layers {
            let cr = fmt_opt(l.mean_channel(Stream::Correlation));
            let cd = fmt_opt(l.mean_channel(Stream::Distance));
            for (t, (&start, &temporal)) in l.window_starts.iter().zip(&l.temporal).enumerate() {
                writeln!(s, "{},{},{t},{start},{temporal:?},{cr},{cd}", r.subject_id, l.layer).unwrap();
            }
        }
    }
    s
}

pub fn readout_attention_csv(records: &[AttentionRecord]) -> String {
    let mut s = String::from("subject_id,layer,stream,window_index,node,weight\n");
    for r in records {
        for l in &r.layers {
            for (stream, per_window) in &l.readout_by_stream {
                for (t, weights) in per_window.iter().enumerate() {
                    for (node, w) in weights.iter().enumerate() {
                        writeln!(s, "{},{},{},{t},{node},{w:?}", r.subject_id, l.layer, stream.tag()).unwrap();
                    }
                }
            }
        }
    }
    s
}

fn attention_series(records: &[AttentionRecord]) -> Vec<AttentionSeries<'_>> {
    let mut out = Vec::new();
    for r in records {
        for l in &r.layers {
            let stream_factor = l
                .channel_by_stream
                .iter()
                .map(|(s, _)| {
                    let c = l.mean_channel(*s).unwrap_or(0.0);
                    (s.tag(), l.temporal.iter().map(|t| c * t).collect())
                })
                .collect();
            out.push(AttentionSeries {
                subject_id: &r.subject_id,
                label: r.label,
                prob: r.prob,
                layer: l.layer,
                window_index: (0..l.temporal.len()).collect(),
                start_timepoint: &l.window_starts,
                temporal: &l.temporal,
                stream_factor,
            });
        }
    }
    out
}

fn cmd_attn_export(a: &AttnExportArgs) -> Result<i32> {
    if !a.checkpoint.is_file() {
        return Err(Error::Checkpoint(format!("checkpoint {} not found", a.checkpoint.display())));
    }
    let dir = a.checkpoint.parent().unwrap_or(Path::new("."));
    let config_path = a.config.clone().unwrap_or_else(|| dir.join("config.toml"));
    if !config_path.is_file() {
        return Err(Error::Config(format!(
            "config {} not found; pass --config",
            config_path.display()
        )));
    }
    let cfg = CliConfigFile::load(&config_path, &[])?.train;
    let input: InputConfig = cfg.input_config()?;
    let (_, subjects) = load_dataset(&a.data)?;
    let inputs: Vec<SubjectInput> = train_eval::prepare_inputs(&subjects, &input)?;
    let model_path = dir.join("model.json");
    let model: ModelConfig = if a.config.is_none() && model_path.is_file() {
        let text = std::fs::read_to_string(&model_path).map_err(|e| Error::io(&model_path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", model_path.display())))?
    } else {
        train_eval::model_for(&cfg, &inputs)?
    };
    let mut params = model.init_params(0)?;
    checkpoint::restore_into(&mut params, &checkpoint::load(&a.checkpoint)?)?;
    let records = inputs
        .iter()
        .map(|s| attention_record(&params, &model, s))
        .collect::<Result<Vec<_>>>()?;
    write_atomic(&a.out.join("attention.csv"), attention_csv(&records).as_bytes())?;
    write_atomic(&a.out.join("readout_attention.csv"), readout_attention_csv(&records).as_bytes())?;
    write_atomic(&a.out.join("attention.json"), to_json(&attention_series(&records))?.as_bytes())?;
    println!("exported attention for {} subjects to {}", records.len(), a.out.display());
    Ok(EXIT_OK)
}
