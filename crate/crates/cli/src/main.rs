use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use shotsum::data::{self, LoadOptions, SyntheticSpec, VideoRecord};
use shotsum::eval::{fscore, run_cv};
use shotsum::model::{count_params, Model, ModelInput};
use shotsum::nn::{checkpoint, grad_check, GradCheckOptions};
use shotsum::shotconv::propagation_report;
use shotsum::summarize::{summarize_record, summary_json};
use shotsum::train::{predict, train_model, VideoObjective};
use shotsum::{Error, RunConfig};

#[derive(Parser)]
#[command(name = "shotsum", version, about = "Shot-aware multimodal video summarization")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// HDF5 video container.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the `seed` key.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// `key=value` override, applied after the config file; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker threads for cross-validation folds.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Train on every video of the container; writes a checkpoint and the loss history.
    Train,
    /// Cross-validated training and test F-scores.
    Eval,
    /// Score, segment and select every video with a trained checkpoint.
    Summarize {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Finite-difference check of every parameter gradient on a synthetic video.
    Gradcheck,
    /// Influence masks of single-frame perturbations through the network.
    Trace {
        /// Source frames, comma separated; all frames when omitted.
        #[arg(long, value_delimiter = ',')]
        sources: Vec<usize>,
    },
    /// Write a synthetic container.
    Synth,
    /// Parameter-count breakdown.
    Params,
}

enum Failure {
    Lib(Error),
    Usage(String),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn exit_code(err: &Error) -> u8 {
    match err.root() {
        Error::Config(_) => 3,
        Error::NotFound(_) => 4,
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 4,
        Error::Format(_) | Error::Hdf5(_) => 5,
        _ => 1,
    }
}

fn load_config(common: &Common) -> Outcome<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            if !path.exists() {
                return Err(Error::NotFound(format!("config file {}", path.display())).into());
            }
            RunConfig::from_file(path)?
        }
        None => RunConfig::default(),
    };
    for o in &common.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(seed) = common.seed {
        cfg.train.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn data_path(common: &Common) -> Outcome<&Path> {
    common
        .data
        .as_deref()
        .ok_or_else(|| Failure::Usage("this command needs --data <path>".into()))
}

fn load_options(cfg: &RunConfig) -> LoadOptions {
    LoadOptions {
        strict: cfg.strict_load,
        audio_dim: cfg.model.audio_dim,
        caption_dim: cfg.model.caption_dim,
    }
}

fn dataset_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "data".into())
}

fn create_dir(dir: &Path) -> Outcome {
    fs::create_dir_all(dir).map_err(|e| Failure::Lib(Error::Io { path: dir.into(), source: e }))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Outcome {
    fs::write(path, contents).map_err(|e| Failure::Lib(Error::Io { path: path.into(), source: e }))
}

/// Normalized config with its fingerprint, stored next to every artifact.
fn write_config(out: &Path, cfg: &RunConfig) -> Outcome {
    write(&out.join("config.txt"), format!("# fingerprint {}\n{}", cfg.fingerprint(), cfg.to_text()))
}

fn train(common: &Common, cfg: &RunConfig) -> Outcome {
    let records = data::load_all(data_path(common)?, &load_options(cfg))?;
    create_dir(&common.out)?;
    let mut tcfg = cfg.train.clone();
    tcfg.checkpoint_dir = Some(common.out.join("checkpoints"));
    tcfg.fscore_mode = cfg.fscore_mode.resolve(&target_name(common, cfg)?);
    info!("training on {} videos for {} epochs", records.len(), tcfg.epochs);
    let (params, history) = train_model(&records, &cfg.model, &tcfg)?;
    checkpoint::save(&common.out.join("model.ckpt"), &params)?;
    write(&common.out.join("history.csv"), history.to_csv())?;
    write_config(&common.out, cfg)?;
    if !history.never_updated.is_empty() {
        println!("never updated: {}", history.never_updated.join(", "));
    }
    if let Some(last) = history.epochs.last() {
        println!("epoch {} loss {:.6e}", last.epoch, last.loss);
    }
    println!("wrote {}", common.out.join("model.ckpt").display());
    Ok(())
}

fn target_name(common: &Common, cfg: &RunConfig) -> Outcome<String> {
    Ok(if cfg.target.is_empty() {
        dataset_name(data_path(common)?)
    } else {
        cfg.target.clone()
    })
}

fn eval(common: &Common, cfg: &RunConfig) -> Outcome {
    let target = target_name(common, cfg)?;
    let opts = load_options(cfg);
    let mut datasets: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut records: Vec<VideoRecord> = Vec::new();
    let mut sources = vec![(target.clone(), data_path(common)?.to_path_buf())];
    for (i, p) in cfg.extra_data.iter().enumerate() {
        let mut name = dataset_name(p);
        if name == target || sources.iter().any(|(n, _)| *n == name) {
            name = format!("{name}_{i}");
        }
        sources.push((name, p.clone()));
    }
    for (name, path) in &sources {
        let recs = data::load_all(path, &opts)?;
        for r in &recs {
            if records.iter().any(|o| o.video_id == r.video_id) {
                return Err(Error::Format(format!("video id `{}` appears in more than one container", r.video_id)).into());
            }
        }
        datasets.insert(name.clone(), recs.iter().map(|r| r.video_id.clone()).collect());
        records.extend(recs);
    }
    let plan = data::make_splits(&datasets, &target, cfg.split_policy, cfg.folds, cfg.train.seed)?;
    let mut tcfg = cfg.train.clone();
    tcfg.fscore_mode = cfg.fscore_mode.resolve(&target);
    create_dir(&common.out)?;
    tcfg.checkpoint_dir = Some(common.out.join("checkpoints"));
    write(&common.out.join("splits.txt"), plan.to_text())?;
    let report = run_cv(&records, &plan, &cfg.model, &tcfg, common.workers, &cfg.fingerprint())?;
    write(&common.out.join("eval.csv"), report.to_csv())?;
    let block = report.summary_block();
    write(&common.out.join("report.txt"), &block)?;
    write_config(&common.out, cfg)?;
    print!("{block}");
    Ok(())
}

fn summarize(common: &Common, cfg: &RunConfig, ckpt: &Path) -> Outcome {
    let records = data::load_all(data_path(common)?, &load_options(cfg))?;
    let (model, mut params) = Model::zeros(&cfg.model)?;
    checkpoint::load_into(ckpt, &mut params)?;
    let mode = cfg.fscore_mode.resolve(&target_name(common, cfg)?);
    let dir = common.out.join("summaries");
    create_dir(&dir)?;
    let mut table = String::from("video_id,n_frames,selected_frames,fscore\n");
    let mut total = 0.0;
    for rec in &records {
        let scores = predict(&model, params.values(), rec)?;
        let (summary, seg_scores) = summarize_record(rec, scores.as_slice().expect("contiguous"), &cfg.train.summary)
            .map_err(|e| e.in_video(&rec.video_id))?;
        let f = fscore(&summary.mask, rec.user_summaries.view(), mode)?;
        total += f;
        write(&dir.join(format!("{}.json", rec.video_id)), summary_json(&rec.video_id, &summary, &seg_scores)?)?;
        table.push_str(&format!("{},{},{},{:.6}\n", rec.video_id, rec.n_frames, summary.selected_frames(), f));
    }
    write(&common.out.join("summaries.csv"), &table)?;
    write_config(&common.out, cfg)?;
    println!("{} videos, mean F-score ({mode}) {:.4}", records.len(), total / records.len().max(1) as f64);
    Ok(())
}

fn synthetic_spec(cfg: &RunConfig, frames: usize) -> SyntheticSpec {
    SyntheticSpec::new(frames, cfg.model.feat_dim, cfg.model.audio_dim, cfg.synth_captions, cfg.synth_users)
        .with_caption_dim(cfg.model.caption_dim)
}

fn gradcheck(common: &Common, cfg: &RunConfig) -> Outcome {
    let rec = data::make_synthetic_record(cfg.train.seed, &synthetic_spec(cfg, cfg.gradcheck_frames));
    let (model, mut params) = Model::init(&cfg.model, cfg.train.seed)?;
    let input = ModelInput::from_record(&rec);
    let objective = VideoObjective {
        model: &model,
        input: &input,
        labels: rec.labels.view(),
        focal: cfg.train.focal,
    };
    objective.try_loss(params.values())?;
    let opts = GradCheckOptions {
        seed: cfg.train.seed,
        ..GradCheckOptions::default()
    };
    let report = grad_check(&objective, &mut params, &opts);
    let text = report.to_string();
    println!("{text}");
    create_dir(&common.out)?;
    write(&common.out.join("gradcheck.txt"), format!("{text}\n"))?;
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Check(format!("{} tensors failed the gradient check", report.failures().count())))
    }
}

fn trace(common: &Common, cfg: &RunConfig, sources: &[usize]) -> Outcome {
    let frames = cfg.trace_frames;
    let sources: Vec<usize> = if sources.is_empty() { (0..frames).collect() } else { sources.to_vec() };
    let report = propagation_report(&cfg.model, frames, &sources, cfg.train.seed)?;
    let text = report.to_text();
    print!("{text}");
    create_dir(&common.out)?;
    write(&common.out.join("trace.txt"), &text)?;
    write(&common.out.join("trace.json"), report.to_json()?)?;
    Ok(())
}

fn synth(common: &Common, cfg: &RunConfig) -> Outcome {
    let spec = synthetic_spec(cfg, cfg.synth_frames);
    let base = cfg.train.seed.wrapping_mul(1000);
    let records: Vec<VideoRecord> = (0..cfg.synth_videos as u64)
        .map(|i| {
            let mut r = data::make_synthetic_record(base.wrapping_add(i), &spec);
            r.video_id = format!("video_{}", i + 1);
            r
        })
        .collect();
    create_dir(&common.out)?;
    let path = common.out.join("synthetic.h5");
    data::write_records(&path, &records)?;
    println!("wrote {} videos to {}", records.len(), path.display());
    Ok(())
}

fn params(cfg: &RunConfig) -> Outcome {
    println!("{}", count_params(&cfg.model)?);
    Ok(())
}

fn run(cli: &Cli) -> Outcome {
    let cfg = load_config(&cli.common)?;
    let c = &cli.common;
    match &cli.command {
        Command::Train => train(c, &cfg),
        Command::Eval => eval(c, &cfg),
        Command::Summarize { checkpoint } => summarize(c, &cfg, checkpoint),
        Command::Gradcheck => gradcheck(c, &cfg),
        Command::Trace { sources } => trace(c, &cfg, sources),
        Command::Synth => synth(c, &cfg),
        Command::Params => params(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Check(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
