//! The `zslab` command line: feature extraction, training, encoding,
//! decoding, ABX and bitrate over manifests and checkpoints.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
//! `ZSLAB_THREADS` caps the worker pool.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::bottleneck::BottleneckKind;
use crate::error::{Error, Result};
use crate::evaluation::{
    abx_error_rate, bitrate, eval_report, read_abx_task, read_symbol_file, write_symbol_file, SymbolStream,
};
use crate::features::{fbank45, mfcc39, read_features, read_wav, write_features, FeatureConfig, FeatureKind};
use crate::model::{
    load_checkpoint, read_manifest, run_training, CodecConfig, CodecModel, Corpus, FeatureNorm, Utterance,
};
use crate::synth::{SynthConfig, SynthCorpus};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

pub const FEATURE_EXT: &str = "zsfeat";
pub const SYMBOL_EXT: &str = "sym";
pub const RESOLVED_CONFIG: &str = "config.resolved.json";
pub const REPORT_FILE: &str = "report.tsv";

/// Everything `zslab train` needs. Relative paths are resolved against the
/// directory of the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: CodecConfig,
    pub train_manifest: PathBuf,
    /// Precomputed MFCC39 / FBANK45 files (`<id>.zsfeat`). Both or neither;
    /// without them features are computed from the WAVs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mfcc_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fbank_dir: Option<PathBuf>,
    pub checkpoint_dir: PathBuf,
    /// When set, `train` writes `report.tsv` to the checkpoint directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abx_task: Option<PathBuf>,
    /// Overrides `model.training.seed`.
    pub seed: u64,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.train_manifest);
        fix(&mut self.checkpoint_dir);
        for p in [&mut self.mfcc_dir, &mut self.fbank_dir, &mut self.abx_task]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
    }

    /// Checks the model settings and that every input path exists.
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.model.training.seed != self.seed {
            return Err(Error::invalid("model.training.seed differs from seed"));
        }
        require_file(&self.train_manifest)?;
        match (&self.mfcc_dir, &self.fbank_dir) {
            (Some(m), Some(f)) => {
                require_dir(m)?;
                require_dir(f)?;
            }
            (None, None) => {}
            _ => return Err(Error::invalid("mfcc_dir and fbank_dir must be given together")),
        }
        if let Some(t) = &self.abx_task {
            require_file(t)?;
        }
        if self.checkpoint_dir.is_file() {
            return Err(Error::invalid(format!(
                "checkpoint_dir {} is a file",
                self.checkpoint_dir.display()
            )));
        }
        Ok(())
    }
}

fn require_file(p: &Path) -> Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(Error::io(
            p,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        ))
    }
}

fn require_dir(p: &Path) -> Result<()> {
    if p.is_dir() {
        Ok(())
    } else {
        Err(Error::io(
            p,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such directory"),
        ))
    }
}

fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

pub fn feature_file(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.{FEATURE_EXT}"))
}

pub fn symbol_file(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.{SYMBOL_EXT}"))
}

/// Builds a corpus from a manifest, reading precomputed features when both
/// directories are given and computing them from the WAVs otherwise.
pub fn load_corpus(manifest: &Path, mfcc_dir: Option<&Path>, fbank_dir: Option<&Path>) -> Result<Corpus> {
    match (mfcc_dir, fbank_dir) {
        (None, None) => Corpus::from_manifest(manifest, &FeatureConfig::default()),
        (Some(m), Some(f)) => {
            let utts = read_manifest(manifest)?
                .iter()
                .map(|e| {
                    let mfcc = read_features(feature_file(m, &e.id))?.with_ids(&e.id, &e.speaker);
                    let fbank = read_features(feature_file(f, &e.id))?.with_ids(&e.id, &e.speaker);
                    Utterance::new(&e.id, &e.speaker, mfcc, fbank)
                })
                .collect::<Result<Vec<_>>>()?;
            Corpus::new(utts)
        }
        _ => Err(Error::invalid(
            "MFCC and FBANK feature directories must be given together",
        )),
    }
}

/// Symbol files named directly, plus every `*.sym` inside named directories,
/// in sorted order.
pub fn collect_symbol_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| Error::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == SYMBOL_EXT))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            require_file(p)?;
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        return Err(Error::invalid("no symbol files given"));
    }
    Ok(out)
}

/// Maps an error to the process exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Numeric(_) => EXIT_NUMERIC,
        e if e.is_data_error() => EXIT_DATA,
        _ => EXIT_USAGE,
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "zslab",
    version,
    about = "Discrete speech-unit autoencoders and their evaluation"
)]
pub struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract MFCC39 or FBANK45 feature files for every manifest entry.
    Features(FeaturesArgs),
    /// Print a starting run config.
    Config(ConfigArgs),
    /// Train a codec from a run config.
    Train(TrainArgs),
    /// Encode utterances into symbol files.
    Encode(EncodeArgs),
    /// Decode symbol files into FBANK45 feature files.
    Decode(DecodeArgs),
    /// ABX error rates of a checkpoint or of a feature directory.
    Abx(AbxArgs),
    /// Bitrate of one or more symbol files, in bits per second.
    Bitrate(BitrateArgs),
    /// Write the bundled synthetic two-speaker corpus.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Mfcc39,
    Fbank45,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    Desk,
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BottleneckArg {
    Ste,
    Vqvae,
    Catvae,
}

impl From<BottleneckArg> for BottleneckKind {
    fn from(b: BottleneckArg) -> Self {
        match b {
            BottleneckArg::Ste => BottleneckKind::Ste,
            BottleneckArg::Vqvae => BottleneckKind::Vqvae,
            BottleneckArg::Catvae => BottleneckKind::Catvae,
        }
    }
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    /// JSON Lines manifest of {"id", "wav", "speaker"}.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_enum)]
    pub kind: KindArg,
    /// Rewrite files that already exist.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    #[arg(long, value_enum, default_value = "desk")]
    pub preset: PresetArg,
    #[arg(long, value_enum, default_value = "vqvae")]
    pub bottleneck: BottleneckArg,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub checkpoint_dir: PathBuf,
    #[arg(long)]
    pub abx_task: Option<PathBuf>,
    #[arg(long)]
    pub mfcc_dir: Option<PathBuf>,
    #[arg(long)]
    pub fbank_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Run config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Override the total number of steps.
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub checkpoint_dir: Option<PathBuf>,
    /// Train without the decoder's speaker embedding.
    #[arg(long)]
    pub no_speaker_conditioning: bool,
    /// Optimize the objective as written, without rescaling by 2 sigma^2.
    #[arg(long)]
    pub literal_objective: bool,
    /// Continue from the latest checkpoint in the checkpoint directory.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Precomputed MFCC39 files; computed from the WAVs otherwise.
    #[arg(long)]
    pub mfcc_dir: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Symbol files, or directories of `*.sym` files.
    #[arg(long, num_args = 1.., required = true)]
    pub symbols: Vec<PathBuf>,
    /// Target voice; required for speaker-conditioned models.
    #[arg(long)]
    pub speaker: Option<String>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct AbxArgs {
    /// JSON Lines ABX task.
    #[arg(long)]
    pub task: PathBuf,
    /// Model to evaluate (needs --manifest).
    #[arg(long, conflicts_with = "features_dir", required_unless_present = "features_dir")]
    pub checkpoint: Option<PathBuf>,
    /// Same model trained without speaker conditioning.
    #[arg(long, requires = "checkpoint")]
    pub ablation: Option<PathBuf>,
    /// Target speaker for decoding; the model's first speaker by default.
    #[arg(long, requires = "checkpoint")]
    pub speaker: Option<String>,
    #[arg(long, requires = "checkpoint")]
    pub manifest: Option<PathBuf>,
    #[arg(long, requires = "checkpoint")]
    pub mfcc_dir: Option<PathBuf>,
    #[arg(long, requires = "checkpoint")]
    pub fbank_dir: Option<PathBuf>,
    /// Score `<utt>.zsfeat` files directly instead of a model.
    #[arg(long)]
    pub features_dir: Option<PathBuf>,
    /// Write the TSV report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BitrateArgs {
    /// Symbol files, or directories of `*.sym` files.
    #[arg(long, num_args = 1.., required = true)]
    pub symbols: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Repetitions of every word per speaker.
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long, default_value_t = 2000)]
    pub max_triples: usize,
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code. Output goes to stdout, diagnostics to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    if let Err(e) = init_threads() {
        eprintln!("zslab: {e}");
        return EXIT_USAGE;
    }
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("zslab: {e}");
            exit_code(&e)
        }
    }
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("ZSLAB_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::invalid(format!("ZSLAB_THREADS must be a positive integer, got {v:?}")))?;
    // Fails only if the pool already exists, e.g. a second call in one process.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Features(a) => cmd_features(&a),
        Command::Config(a) => cmd_config(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Encode(a) => cmd_encode(&a),
        Command::Decode(a) => cmd_decode(&a),
        Command::Abx(a) => cmd_abx(&a),
        Command::Bitrate(a) => cmd_bitrate(&a).map(|b| println!("{b:.4}")),
        Command::Synth(a) => cmd_synth(&a),
    }
}

/// Writes one feature file per manifest entry, skipping existing files unless
/// `force`. Every entry is attempted; failures are reported and the first is
/// returned.
pub fn cmd_features(a: &FeaturesArgs) -> Result<()> {
    let entries = read_manifest(&a.manifest)?;
    if a.out_dir.is_file() {
        return Err(Error::invalid(format!("{} is a file", a.out_dir.display())));
    }
    create_dir(&a.out_dir)?;
    let cfg = FeatureConfig::default();
    let (mut written, mut skipped) = (0, 0);
    let mut first_err = None;
    let mut failures = 0;
    for e in &entries {
        let out = feature_file(&a.out_dir, &e.id);
        if out.exists() && !a.force {
            skipped += 1;
            continue;
        }
        let res = read_wav(&e.wav).and_then(|w| match a.kind {
            KindArg::Mfcc39 => mfcc39(&w, &cfg),
            KindArg::Fbank45 => fbank45(&w, &cfg),
        });
        match res.and_then(|f| write_features(&out, &f)) {
            Ok(()) => written += 1,
            Err(err) => {
                eprintln!("zslab: {}: {err}", e.id);
                failures += 1;
                first_err.get_or_insert(err);
            }
        }
    }
    eprintln!("features: {written} written, {skipped} skipped, {failures} failed");
    first_err.map_or(Ok(()), Err)
}

pub fn cmd_config(a: &ConfigArgs) -> Result<()> {
    let kind = a.bottleneck.into();
    let mut model = match a.preset {
        PresetArg::Desk => CodecConfig::desk(kind),
        PresetArg::Full => CodecConfig::full(kind),
    };
    model.training.seed = a.seed;
    let cfg = RunConfig {
        model,
        train_manifest: a.manifest.clone(),
        mfcc_dir: a.mfcc_dir.clone(),
        fbank_dir: a.fbank_dir.clone(),
        checkpoint_dir: a.checkpoint_dir.clone(),
        abx_task: a.abx_task.clone(),
        seed: a.seed,
    };
    let text = serde_json::to_string_pretty(&cfg)? + "\n";
    match &a.out {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Applies command-line overrides to a loaded config.
pub fn resolve_train_config(a: &TrainArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&a.config)?;
    if let Some(s) = a.steps {
        cfg.model.training.total_steps = s;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.model.training.seed = cfg.seed;
    if let Some(lr) = a.lr {
        cfg.model.training.lr = lr;
    }
    if let Some(d) = &a.checkpoint_dir {
        cfg.checkpoint_dir = d.clone();
    }
    if a.no_speaker_conditioning {
        cfg.model.speaker_embed_dim = 0;
    }
    if a.literal_objective {
        cfg.model.literal_objective = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Highest-step `step*.zsckpt` in `dir`.
pub fn latest_checkpoint(dir: &Path) -> Result<Option<PathBuf>> {
    if !dir.is_dir() {
        return Ok(None);
    }
    let mut best: Option<(u64, PathBuf)> = None;
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        let step = p
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("step"))
            .and_then(|n| n.strip_suffix(".zsckpt"))
            .and_then(|n| n.parse::<u64>().ok());
        if let Some(s) = step {
            if best.as_ref().is_none_or(|(b, _)| s > *b) {
                best = Some((s, p));
            }
        }
    }
    Ok(best.map(|(_, p)| p))
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let cfg = resolve_train_config(a)?;
    let corpus = load_corpus(&cfg.train_manifest, cfg.mfcc_dir.as_deref(), cfg.fbank_dir.as_deref())?;
    let task = cfg.abx_task.as_deref().map(read_abx_task).transpose()?;
    let until = cfg.model.training.total_steps;

    let resume_from = if a.resume {
        latest_checkpoint(&cfg.checkpoint_dir)?
    } else {
        None
    };
    let mut model = match resume_from {
        Some(p) => {
            let mut m = load_checkpoint(&p)?;
            let mut expected = cfg.model.clone();
            expected.training.total_steps = m.config.training.total_steps;
            if m.config != expected {
                return Err(Error::invalid(format!(
                    "{} was trained with a different config; only the step count may change on resume",
                    p.display()
                )));
            }
            m.config.training.total_steps = until;
            log::info!("resuming from {} at step {}", p.display(), m.step);
            m
        }
        None => {
            let norm = FeatureNorm::fit(corpus.utterances.iter().map(|u| &u.mfcc))?;
            CodecModel::new(cfg.model.clone(), corpus.speakers(), norm)?
        }
    };

    create_dir(&cfg.checkpoint_dir)?;
    let resolved = cfg.checkpoint_dir.join(RESOLVED_CONFIG);
    fs::write(&resolved, serde_json::to_string_pretty(&cfg)? + "\n").map_err(|e| Error::io(&resolved, e))?;

    let start = model.step;
    let run = run_training(&mut model, &corpus, Some(&cfg.checkpoint_dir), until, |_, _| {})?;
    if let (Some(first), Some(last)) = (run.losses.first(), run.losses.last()) {
        eprintln!(
            "train: steps {start}..{until}, recon {:.4} -> {:.4}, {} checkpoints",
            first.recon,
            last.recon,
            run.checkpoints.len()
        );
    }
    if let Some(task) = task {
        let report = eval_report(&model, None, &task, &corpus, None)?;
        let p = cfg.checkpoint_dir.join(REPORT_FILE);
        fs::write(&p, report.to_tsv()).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

pub fn cmd_encode(a: &EncodeArgs) -> Result<()> {
    let model = load_checkpoint(&a.checkpoint)?;
    let entries = read_manifest(&a.manifest)?;
    if let Some(d) = &a.mfcc_dir {
        require_dir(d)?;
        for e in &entries {
            require_file(&feature_file(d, &e.id))?;
        }
    } else {
        for e in &entries {
            require_file(&e.wav)?;
        }
    }
    let cfg = FeatureConfig::default();
    let seqs = entries
        .iter()
        .map(|e| {
            let mfcc = match &a.mfcc_dir {
                Some(d) => read_features(feature_file(d, &e.id))?,
                None => mfcc39(&read_wav(&e.wav)?, &cfg)?,
            };
            let mut s = model.encode(&mfcc)?.symbols;
            s.utterance_id = e.id.clone();
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    create_dir(&a.out_dir)?;
    for s in &seqs {
        write_symbol_file(s, &symbol_file(&a.out_dir, &s.utterance_id))?;
    }
    eprintln!("encode: {} symbol files", seqs.len());
    Ok(())
}

pub fn cmd_decode(a: &DecodeArgs) -> Result<()> {
    let model = load_checkpoint(&a.checkpoint)?;
    if model.config.speaker_embed_dim > 0 {
        let s = a.speaker.as_deref().ok_or_else(|| {
            Error::invalid(format!(
                "--speaker is required; known speakers: {}",
                model.speakers.join(", ")
            ))
        })?;
        model.speaker_index(s)?;
    }
    let files = collect_symbol_files(&a.symbols)?;
    let seqs = files
        .iter()
        .map(|f| read_symbol_file(f).map(|(s, _)| s))
        .collect::<Result<Vec<_>>>()?;
    let outs = seqs
        .iter()
        .map(|s| Ok((s.utterance_id.clone(), model.decode_symbols(s, a.speaker.as_deref())?)))
        .collect::<Result<Vec<_>>>()?;
    create_dir(&a.out_dir)?;
    for (id, f) in &outs {
        write_features(feature_file(&a.out_dir, id), f)?;
    }
    eprintln!("decode: {} feature files", outs.len());
    Ok(())
}

/// Report TSV for a checkpoint, or a `system\tabx_pct` table for a
/// directory of feature files.
pub fn abx_report(a: &AbxArgs) -> Result<String> {
    let task = read_abx_task(&a.task)?;
    if let Some(dir) = &a.features_dir {
        require_dir(dir)?;
        let mut reps = BTreeMap::new();
        for utt in task.utterances() {
            reps.insert(utt.to_string(), read_features(feature_file(dir, utt))?);
        }
        let kind = reps.values().next().map_or(FeatureKind::Custom(0), |f| f.kind);
        let name = match kind {
            FeatureKind::Mfcc39 => "mfccs".to_string(),
            FeatureKind::Fbank45 => "filterbanks".to_string(),
            FeatureKind::Custom(d) => format!("features{d}"),
        };
        let err = abx_error_rate(&task, &reps)?;
        return Ok(format!("system\tabx_pct\n{name}\t{:.2}\n", 100.0 * err));
    }
    let ckpt = a
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::invalid("--checkpoint or --features-dir is required"))?;
    let manifest = a
        .manifest
        .as_ref()
        .ok_or_else(|| Error::invalid("--manifest is required with --checkpoint"))?;
    let model = load_checkpoint(ckpt)?;
    let ablation = a.ablation.as_deref().map(load_checkpoint).transpose()?;
    if let Some(s) = &a.speaker {
        model.speaker_index(s)?;
    }
    let corpus = load_corpus(manifest, a.mfcc_dir.as_deref(), a.fbank_dir.as_deref())?;
    Ok(eval_report(&model, ablation.as_ref(), &task, &corpus, a.speaker.as_deref())?.to_tsv())
}

pub fn cmd_abx(a: &AbxArgs) -> Result<()> {
    let report = abx_report(a)?;
    match &a.out {
        Some(p) => fs::write(p, report).map_err(|e| Error::io(p, e)),
        None => {
            print!("{report}");
            Ok(())
        }
    }
}

/// Bitrate of the concatenated symbol files over their summed duration.
pub fn cmd_bitrate(a: &BitrateArgs) -> Result<f64> {
    let mut symbols = Vec::new();
    let mut duration = 0.0;
    for f in collect_symbol_files(&a.symbols)? {
        let (s, d) = read_symbol_file(&f)?;
        symbols.extend(s.symbol_ids);
        duration += d;
    }
    Ok(bitrate(&SymbolStream::new(symbols, duration)?))
}

pub fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let mut cfg = SynthConfig::default();
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(r) = a.repeats {
        cfg.repeats = r;
    }
    if a.out_dir.is_file() {
        return Err(Error::invalid(format!("{} is a file", a.out_dir.display())));
    }
    let synth = SynthCorpus::generate(&cfg)?;
    let paths = synth.write(&a.out_dir, a.max_triples)?;
    eprintln!(
        "synth: {} utterances, {:.1} s, manifest {}",
        synth.utterances.len(),
        synth.duration(),
        paths.manifest.display()
    );
    Ok(())
}
