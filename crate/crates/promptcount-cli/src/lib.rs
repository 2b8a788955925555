//! Command-line front end for the text-prompted counting pipeline.
//!
//! One binary, six subcommands covering the whole workflow:
//!
//! * `gen-synth` — write a synthetic shapes dataset in manifest layout
//! * `fetch-desc` — fill in detailed descriptions, cache-first
//! * `align` — stage 1: contrastive visual-text alignment of the heads
//! * `train` — stage 2: train the cross-attention density counter
//! * `count` — count objects in one image from a text prompt
//! * `eval` — score a checkpoint on a dataset split
//!
//! Every command that writes artifacts also writes its resolved
//! configuration as `<subcommand>.config.json` beside them, so a run can be
//! audited and repeated from its outputs alone. Exit codes are stable for
//! scripting: 0 on success, 2 for usage and file problems, 3 for domain
//! errors (bad data, missing preconditions, empty splits).

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use promptcount::alignment::{
    prepare_data, run_alignment, separation_report, ContrastiveConfig,
};
use promptcount::counter::dmap::save_heatmap_png;
use promptcount::counter::{train_counter, CounterConfig, TermWeights};
use promptcount::data::descriptions::HttpDescriptionClient;
use promptcount::data::{
    fetch_descriptions, generate_synthetic, load_manifest, read_manifest, write_manifest,
    DescriptionClient, DescriptionRequest, ReplayCache, Shape, SynthConfig,
};
use promptcount::data::manifest::load_image;
use promptcount::domain::{PromptVariant, Split};
use promptcount::error::{Error, Result};
use promptcount::eval::{count_image, evaluate};
use promptcount::model::{
    load_checkpoint, save_checkpoint, CountingModel, ModelConfig, TrainPhase, TrainState,
};

#[derive(Parser, Debug)]
#[command(
    name = "promptcount",
    about = "Count objects in images from text prompts",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic shapes dataset in manifest layout.
    GenSynth(GenSynthArgs),
    /// Resolve detailed descriptions for a dataset, cache-first.
    FetchDesc(FetchDescArgs),
    /// Stage 1: align visual and text embeddings contrastively.
    Align(AlignArgs),
    /// Stage 2: train the density counter from an aligned checkpoint.
    Train(TrainArgs),
    /// Count objects in one image with a text prompt.
    Count(CountArgs),
    /// Evaluate a checkpoint on one dataset split.
    Eval(EvalArgs),
}

/// Maps pipeline errors onto the scripting contract: 2 for usage and file
/// problems, 3 for domain-state problems.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. }
        | Error::Image { .. }
        | Error::Json { .. }
        | Error::Format { .. }
        | Error::Config(_) => 2,
        Error::Data(_) | Error::Train(_) | Error::Eval(_) | Error::Description(_) => 3,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenSynth(args) => cmd_gen_synth(args),
        Command::FetchDesc(args) => cmd_fetch_desc(args),
        Command::Align(args) => cmd_align(args),
        Command::Train(args) => cmd_train(args),
        Command::Count(args) => cmd_count(args),
        Command::Eval(args) => cmd_eval(args),
    }
}

// ------------------------------------------------------------- run configs

/// The resolved settings of one invocation, persisted beside its outputs.
///
/// Only the sections a subcommand actually used are present; the file
/// round-trips losslessly so a past run can be reconstructed exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub subcommand: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_root: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_in: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contrastive: Option<ContrastiveConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counter: Option<CounterConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthConfig>,
}

impl RunConfig {
    fn new(subcommand: &str, seed: u64) -> Self {
        RunConfig {
            subcommand: subcommand.to_string(),
            seed,
            data_root: None,
            checkpoint_in: None,
            checkpoint_out: None,
            output_dir: None,
            model: None,
            contrastive: None,
            counter: None,
            synth: None,
        }
    }

    /// Writes the config as pretty JSON into `dir/<subcommand>.config.json`.
    pub fn save_beside(&self, dir: &Path) -> Result<()> {
        let path = dir.join(format!("{}.config.json", self.subcommand));
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(&path, e))?;
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

// -------------------------------------------------------------- gen-synth

#[derive(Args, Debug)]
pub struct GenSynthArgs {
    /// Output dataset directory (manifest layout).
    #[arg(long)]
    pub out: PathBuf,
    /// Number of images to generate.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Square canvas side length in pixels.
    #[arg(long, default_value_t = 64)]
    pub canvas: usize,
    /// Smallest number of target objects per image.
    #[arg(long, default_value_t = 1)]
    pub min_count: u32,
    /// Largest number of target objects per image.
    #[arg(long, default_value_t = 20)]
    pub max_count: u32,
    /// Largest number of off-category distractor shapes per image.
    #[arg(long, default_value_t = 3)]
    pub max_distractors: u32,
    /// Comma-separated shape names (disc, square, triangle).
    #[arg(long)]
    pub shapes: Option<String>,
    /// Comma-separated color names from the built-in palette.
    #[arg(long)]
    pub colors: Option<String>,
}

fn parse_shapes(list: &str) -> Result<Vec<Shape>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|name| {
            Shape::ALL
                .into_iter()
                .find(|s| s.name() == name)
                .ok_or_else(|| Error::Config(format!("unknown shape '{name}'")))
        })
        .collect()
}

pub fn cmd_gen_synth(args: GenSynthArgs) -> Result<()> {
    let mut config = SynthConfig {
        canvas: args.canvas,
        count_range: (args.min_count, args.max_count),
        distractor_range: (0, args.max_distractors),
        seed: args.seed,
        ..SynthConfig::default()
    };
    if let Some(list) = &args.shapes {
        config.shapes = parse_shapes(list)?;
    }
    if let Some(list) = &args.colors {
        config.colors = list
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
    }

    let data = generate_synthetic(&config, args.n)?;
    ensure_dir(&args.out)?;
    write_manifest(&args.out, &data)?;

    let mut run = RunConfig::new("gen-synth", args.seed);
    run.output_dir = Some(args.out.clone());
    run.synth = Some(config);
    run.save_beside(&args.out)?;

    println!("wrote {} images to {}", data.len(), args.out.display());
    Ok(())
}

// -------------------------------------------------------------- fetch-desc

#[derive(Args, Debug)]
pub struct FetchDescArgs {
    /// Dataset root (manifest layout).
    #[arg(long)]
    pub data: PathBuf,
    /// Replay-cache JSON file; defaults to the dataset's descriptions.json.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Ask the live description endpoint for uncached ids (reads the
    /// PROMPTCOUNT_MLLM_* environment variables).
    #[arg(long, default_value_t = false)]
    pub live: bool,
    /// Prompt template; must contain the {category} placeholder.
    #[arg(long)]
    pub template: Option<String>,
}

pub fn cmd_fetch_desc(args: FetchDescArgs) -> Result<()> {
    let manifest = read_manifest(&args.data)?;
    let cache_path = args
        .cache
        .clone()
        .unwrap_or_else(|| args.data.join("descriptions.json"));
    let mut cache = ReplayCache::open(&cache_path)?;

    let requests: Vec<DescriptionRequest> = manifest
        .category_of
        .iter()
        .map(|(id, category)| {
            let mut request = DescriptionRequest::new(id, category);
            if let Some(template) = &args.template {
                request.template = template.clone();
            }
            request
        })
        .collect();

    let live_client;
    let live: Option<&dyn DescriptionClient> = if args.live {
        live_client = HttpDescriptionClient::from_env()?;
        Some(&live_client)
    } else {
        None
    };
    let resolved = fetch_descriptions(&requests, &mut cache, live)?;
    cache.save_to(&cache_path)?;

    // keep the dataset itself complete: its descriptions.json holds every
    // record the loader needs, whatever cache file was used
    let descriptions_path = args.data.join("descriptions.json");
    if descriptions_path != cache_path {
        let records: std::collections::BTreeMap<_, _> = resolved
            .keys()
            .filter_map(|id| cache.get(id).map(|r| (id.clone(), r.clone())))
            .collect();
        write_json(&descriptions_path, &records)?;
    }

    let mut run = RunConfig::new("fetch-desc", 0);
    run.data_root = Some(args.data.clone());
    run.save_beside(&args.data)?;

    println!("resolved {} descriptions", resolved.len());
    Ok(())
}

// ------------------------------------------------------------------- align

#[derive(Args, Debug)]
pub struct AlignArgs {
    /// Dataset root (manifest layout); trains on its train split.
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for the checkpoint and reports.
    #[arg(long)]
    pub out: PathBuf,
    /// Resume from an existing checkpoint instead of a fresh model.
    #[arg(long)]
    pub ckpt_in: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub margin: f64,
    /// Epochs per phase (the head phase, then the adapter phase).
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    /// Negative categories sampled per anchor; all in-batch when omitted.
    #[arg(long)]
    pub negatives_per_anchor: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Embedding width of a freshly initialized model.
    #[arg(long, default_value_t = 32)]
    pub embed_dim: usize,
    /// Input resolution of a freshly initialized model.
    #[arg(long, default_value_t = 32)]
    pub resolution: usize,
}

fn initial_state(
    ckpt_in: &Option<PathBuf>,
    embed_dim: usize,
    resolution: usize,
    seed: u64,
) -> Result<TrainState> {
    match ckpt_in {
        Some(path) => load_checkpoint(path),
        None => {
            let model = CountingModel::new(ModelConfig::toy(embed_dim, resolution, seed))?;
            Ok(TrainState::new(model, seed))
        }
    }
}

pub fn cmd_align(args: AlignArgs) -> Result<()> {
    let config = ContrastiveConfig {
        margin: args.margin,
        negatives_per_anchor: args.negatives_per_anchor,
        batch_size: args.batch_size,
        epochs: args.epochs,
        learning_rate: args.learning_rate,
        momentum: args.momentum,
        seed: args.seed,
    };
    config.validate()?;

    let data = load_manifest(&args.data)?;
    let train: Vec<_> = data
        .into_iter()
        .filter(|(s, _)| s.split == Split::Train)
        .collect();
    let mut state = initial_state(&args.ckpt_in, args.embed_dim, args.resolution, args.seed)?;

    let aligned = prepare_data(&state.model, &train)?;
    run_alignment(&mut state, &aligned, &config)?;

    ensure_dir(&args.out)?;
    let ckpt_path = args.out.join("aligned.ckpt");
    save_checkpoint(&state, &ckpt_path)?;
    let report = separation_report(&aligned, &state)?;
    write_json(&args.out.join("separation_report.json"), &report)?;

    let mut run = RunConfig::new("align", args.seed);
    run.data_root = Some(args.data.clone());
    run.checkpoint_in = args.ckpt_in.clone();
    run.checkpoint_out = Some(ckpt_path);
    run.output_dir = Some(args.out.clone());
    run.model = Some(state.model.config.clone());
    run.contrastive = Some(config);
    run.save_beside(&args.out)?;

    println!(
        "aligned on {} samples: pair accuracy {:.3}",
        aligned.samples.len(),
        report.pair_accuracy
    );
    Ok(())
}

// ------------------------------------------------------------------- train

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset root (manifest layout); trains on its train split.
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for the checkpoint and loss curves.
    #[arg(long)]
    pub out: PathBuf,
    /// Alignment checkpoint to start from.
    #[arg(long, conflicts_with = "no_align")]
    pub ckpt: Option<PathBuf>,
    /// Train from a fresh model without stage-1 alignment (ablation).
    #[arg(long, default_value_t = false)]
    pub no_align: bool,
    /// Turn off the three pairwise prompt-consistency terms (ablation).
    #[arg(long, default_value_t = false)]
    pub no_consistency: bool,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Embedding width of a freshly initialized model (with --no-align).
    #[arg(long, default_value_t = 32)]
    pub embed_dim: usize,
    /// Input resolution of a freshly initialized model (with --no-align).
    #[arg(long, default_value_t = 32)]
    pub resolution: usize,
}

fn phase_name(phase: TrainPhase) -> &'static str {
    match phase {
        TrainPhase::Init => "init",
        TrainPhase::Ffn => "ffn",
        TrainPhase::Adapter => "adapter",
        TrainPhase::Counter => "counter",
    }
}

fn write_loss_curves(path: &Path, state: &TrainState) -> Result<()> {
    let mut text = String::from("phase,epoch,mean_loss\n");
    for record in &state.history {
        text.push_str(&format!(
            "{},{},{}\n",
            phase_name(record.phase),
            record.epoch,
            record.mean_loss
        ));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_term_weights(path: &Path, weights: &TermWeights) -> Result<()> {
    let text = format!(
        "term,weight\n\
         gt_category,{}\n\
         gt_description,{}\n\
         gt_generalized,{}\n\
         pair_category_description,{}\n\
         pair_category_generalized,{}\n\
         pair_description_generalized,{}\n",
        weights.gt_category,
        weights.gt_description,
        weights.gt_generalized,
        weights.pair_category_description,
        weights.pair_category_generalized,
        weights.pair_description_generalized,
    );
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn cmd_train(args: TrainArgs) -> Result<()> {
    if let Some(path) = &args.ckpt {
        if !path.is_file() {
            return Err(Error::Train(format!(
                "alignment checkpoint {} does not exist; train unaligned with --no-align",
                path.display()
            )));
        }
    } else if !args.no_align {
        return Err(Error::Train(
            "no alignment checkpoint given; pass --ckpt, or --no-align to skip stage 1"
                .to_string(),
        ));
    }

    let weights = if args.no_consistency {
        TermWeights::without_consistency()
    } else {
        TermWeights::default()
    };
    let config = CounterConfig {
        weights,
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.learning_rate,
        momentum: args.momentum,
        seed: args.seed,
    };
    config.validate()?;

    let data = load_manifest(&args.data)?;
    let train: Vec<_> = data
        .into_iter()
        .filter(|(s, _)| s.split == Split::Train)
        .collect();
    let mut state = initial_state(&args.ckpt, args.embed_dim, args.resolution, args.seed)?;

    let report = train_counter(&mut state, &train, &config)?;

    ensure_dir(&args.out)?;
    let ckpt_path = args.out.join("counter.ckpt");
    save_checkpoint(&state, &ckpt_path)?;
    write_loss_curves(&args.out.join("loss_curves.csv"), &state)?;
    write_term_weights(&args.out.join("term_weights.csv"), &config.weights)?;

    let mut run = RunConfig::new("train", args.seed);
    run.data_root = Some(args.data.clone());
    run.checkpoint_in = args.ckpt.clone();
    run.checkpoint_out = Some(ckpt_path);
    run.output_dir = Some(args.out.clone());
    run.model = Some(state.model.config.clone());
    run.counter = Some(config);
    run.save_beside(&args.out)?;

    println!(
        "trained {} epochs on {} samples ({} skipped)",
        report.epochs_run, report.samples_used, report.skipped
    );
    Ok(())
}

// ------------------------------------------------------------------- count

#[derive(Args, Debug)]
pub struct CountArgs {
    /// Image file to count in.
    #[arg(long)]
    pub image: PathBuf,
    /// What to count, e.g. "red discs" or a full description.
    #[arg(long)]
    pub prompt: String,
    /// Trained checkpoint.
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Also write the density map as a PNG heatmap.
    #[arg(long)]
    pub heatmap: Option<PathBuf>,
}

pub fn cmd_count(args: CountArgs) -> Result<()> {
    if args.prompt.trim().is_empty() {
        return Err(Error::Config("--prompt must be nonempty".to_string()));
    }
    let state = load_checkpoint(&args.ckpt)?;
    let pixels = load_image(&args.image)?;
    let (count, map) = count_image(&pixels, &args.prompt, &state.model)?;
    if let Some(path) = &args.heatmap {
        save_heatmap_png(path, &map)?;
    }
    println!("{count:.3}");
    Ok(())
}

// -------------------------------------------------------------------- eval

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Dataset root (manifest layout).
    #[arg(long)]
    pub data: PathBuf,
    /// Trained checkpoint.
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Output directory for the report files.
    #[arg(long)]
    pub out: PathBuf,
    /// Split to score: train, val, or test.
    #[arg(long)]
    pub split: Split,
    /// Prompt variant to score with: category, description, or generalized.
    #[arg(long)]
    pub variant: PromptVariant,
}

pub fn cmd_eval(args: EvalArgs) -> Result<()> {
    let state = load_checkpoint(&args.ckpt)?;
    let data = load_manifest(&args.data)?;
    let report = evaluate(&data, args.split, args.variant, &state.model)?;
    report.validate()?;

    ensure_dir(&args.out)?;
    write_json(&args.out.join("eval_report.json"), &report)?;
    let mut table = String::from("id,predicted,truth\n");
    for record in &report.records {
        let predicted = match record.predicted {
            Some(p) => format!("{p:.3}"),
            None => "skipped".to_string(),
        };
        table.push_str(&format!("{},{},{}\n", record.id, predicted, record.truth));
    }
    let table_path = args.out.join("eval_table.csv");
    std::fs::write(&table_path, table).map_err(|e| Error::io(&table_path, e))?;

    let mut run = RunConfig::new("eval", 0);
    run.data_root = Some(args.data.clone());
    run.checkpoint_in = Some(args.ckpt.clone());
    run.output_dir = Some(args.out.clone());
    run.model = Some(state.model.config.clone());
    run.save_beside(&args.out)?;

    println!("MAE  {:.3}", report.mae);
    println!("RMSE {:.3}", report.rmse);
    Ok(())
}
