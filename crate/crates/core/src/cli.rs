//! Command-line front end: `analyze`, `train`, `infer`, `augment-preview`
//! and `eval`. Every flag can also be given in a flat `key=value` file
//! passed with `--config`; command-line values take precedence.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::audio::{
    augment_example_with_draws, load_clips, load_index, load_wav, save_wav, split_folds, trim_silence, AudioClip,
    AugmentConfig, DEFAULT_SILENCE_DB, NUM_FOLDS,
};
use crate::builder::{min_input_len, ConvType, NetworkConfig, WidthMultiplier};
use crate::complexity::{
    analyze, compare_published, published_table, sweep, sweep_grid, to_csv, to_table, REFERENCE_WINDOW_SECONDS,
};
use crate::error::Error;
use crate::mixup::MixupConfig;
use crate::store::load_model;
use crate::train::{classify, evaluate, stream_rng, train, Evaluation, OutputDir, TrainConfig};

/// Failure with its process exit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

impl CliError {
    pub fn usage(message: impl Display) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.to_string(),
        }
    }

    pub fn data(message: impl Display) -> Self {
        CliError {
            code: EXIT_DATA,
            message: message.to_string(),
        }
    }

    /// Errors after argument validation: numeric aborts get their own
    /// code, everything else is a data error.
    fn runtime(e: Error) -> Self {
        match e {
            Error::Numeric(_) => CliError {
                code: EXIT_NUMERIC,
                message: e.to_string(),
            },
            e => CliError::data(e),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "aclnet", version, about = "End-to-end waveform CNN for audio classification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parameter and multiply-add counts per configuration.
    Analyze(AnalyzeArgs),
    /// Train on a fold-indexed corpus.
    Train(TrainArgs),
    /// Top-K classes for one WAV file.
    Infer(InferArgs),
    /// Write augmented training crops of one WAV file.
    AugmentPreview(AugmentPreviewArgs),
    /// Accuracy and confusion counts of a saved model.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// key=value file with defaults for any flag.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Sample rate in Hz (16000 or 44100).
    #[arg(long)]
    pub rate: Option<u32>,
    /// `sc` or `dwsc`.
    #[arg(long)]
    pub conv_type: Option<ConvType>,
    /// Width multiplier as a decimal or fraction; repeatable.
    #[arg(long)]
    pub wm: Vec<WidthMultiplier>,
    /// Window length the multiply-add counts refer to.
    #[arg(long)]
    pub input_seconds: Option<f64>,
    /// Also write the rows as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Compare against the ten published configurations and print the
    /// width sweep grid.
    #[arg(long)]
    pub paper_grid: bool,
}

/// `all` or a single test fold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FoldSelection {
    All,
    One(u8),
}

impl FromStr for FoldSelection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(FoldSelection::All);
        }
        match s.parse::<u8>() {
            Ok(f) if (1..=NUM_FOLDS).contains(&f) => Ok(FoldSelection::One(f)),
            _ => Err(format!("fold must be `all` or 1..={NUM_FOLDS}, got `{s}`")),
        }
    }
}

#[derive(Debug, Args)]
pub struct NetArgs {
    #[arg(long)]
    pub rate: Option<u32>,
    #[arg(long)]
    pub conv_type: Option<ConvType>,
    #[arg(long)]
    pub wm: Option<WidthMultiplier>,
    /// Number of output classes.
    #[arg(long)]
    pub classes: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory holding the audio files named in the index.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// CSV with filename, fold, target, category columns.
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Test fold, or `all` for five-fold cross validation.
    #[arg(long)]
    pub fold: Option<FoldSelection>,
    #[command(flatten)]
    pub net: NetArgs,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for metrics and checkpoints.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    #[arg(long)]
    pub mixup_alpha: Option<f64>,
    #[arg(long)]
    pub mixup_warmup: Option<usize>,
    #[arg(long)]
    pub no_mixup: bool,
    #[arg(long)]
    pub no_augment: bool,
    /// Silence trimming threshold relative to the clip peak.
    #[arg(long, allow_negative_numbers = true)]
    pub silence_db: Option<f64>,
    /// Worker threads; 1 gives the strict single-threaded mode.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub wav: Option<PathBuf>,
    /// Number of classes to list.
    #[arg(long)]
    pub top: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub silence_db: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AugmentPreviewArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub wav: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of crops to write.
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Evaluate one fold only; default is every indexed file.
    #[arg(long)]
    pub fold: Option<u8>,
    /// Write the confusion matrix as CSV.
    #[arg(long)]
    pub confusion: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    pub silence_db: Option<f64>,
    #[arg(long)]
    pub threads: Option<usize>,
}

/// Parsed `key=value` file. Blank lines and `#` comments are ignored; keys
/// are the long flag names without the leading dashes.
#[derive(Debug, Default)]
pub struct ConfigFile {
    entries: BTreeMap<String, (usize, String)>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::usage(format!("config line {}: expected key=value", i + 1)))?;
            let key = k.trim().replace('_', "-");
            if entries.insert(key.clone(), (i + 1, v.trim().to_string())).is_some() {
                return Err(CliError::usage(format!("config line {}: duplicate key `{key}`", i + 1)));
            }
        }
        Ok(ConfigFile { entries })
    }

    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        match path {
            None => Ok(ConfigFile::default()),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| CliError::data(format!("{}: {e}", p.display())))?;
                ConfigFile::parse(&text)
            }
        }
    }

    /// Removes and parses `key`.
    pub fn take<T: FromStr>(&mut self, key: &str) -> CliResult<Option<T>>
    where
        T::Err: Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|e| CliError::usage(format!("config line {line}: `{key}`: {e}"))),
        }
    }

    /// Removes `key` as a comma-separated list.
    pub fn take_list<T: FromStr>(&mut self, key: &str) -> CliResult<Vec<T>>
    where
        T::Err: Display,
    {
        match self.entries.remove(key) {
            None => Ok(Vec::new()),
            Some((line, v)) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|e| CliError::usage(format!("config line {line}: `{key}`: {e}")))
                })
                .collect(),
        }
    }

    /// Rejects keys no flag consumed.
    pub fn finish(self) -> CliResult<()> {
        match self.entries.into_iter().next() {
            None => Ok(()),
            Some((k, (line, _))) => Err(CliError::usage(format!("config line {line}: unknown key `{k}`"))),
        }
    }
}

fn merge<T: FromStr>(cli: Option<T>, file: &mut ConfigFile, key: &str) -> CliResult<Option<T>>
where
    T::Err: Display,
{
    let from_file = file.take(key)?;
    Ok(cli.or(from_file))
}

fn flag(cli: bool, file: &mut ConfigFile, key: &str) -> CliResult<bool> {
    Ok(file.take::<bool>(key)?.unwrap_or(false) || cli)
}

fn required<T>(v: Option<T>, flag: &str) -> CliResult<T> {
    v.ok_or_else(|| CliError::usage(format!("missing --{flag}")))
}

fn net_config(net: NetArgs, file: &mut ConfigFile) -> CliResult<NetworkConfig> {
    let rate = merge(net.rate, file, "rate")?.unwrap_or(16_000);
    let conv = merge(net.conv_type, file, "conv-type")?.unwrap_or(ConvType::Standard);
    let wm = merge(net.wm, file, "wm")?.unwrap_or(WidthMultiplier::ONE);
    let classes = merge(net.classes, file, "classes")?.unwrap_or(50);
    let config = NetworkConfig {
        num_classes: classes,
        ..NetworkConfig::new(rate, conv, wm)
    };
    config.validate().map_err(CliError::usage)?;
    Ok(config)
}

fn thread_pool(threads: Option<usize>) -> CliResult<Option<rayon::ThreadPool>> {
    match threads {
        None => Ok(None),
        Some(0) => Err(CliError::usage("--threads must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(Some)
            .map_err(CliError::data),
    }
}

fn in_pool<T: Send>(pool: &Option<rayon::ThreadPool>, f: impl FnOnce() -> T + Send) -> T {
    match pool {
        Some(p) => p.install(f),
        None => f(),
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::data(format!("{}: {e}", path.display()))
}

fn run_analyze(a: AnalyzeArgs, out: &mut dyn Write) -> CliResult<()> {
    let mut file = ConfigFile::load(a.config.as_deref())?;
    let rate = merge(a.rate, &mut file, "rate")?.unwrap_or(16_000);
    let conv = merge(a.conv_type, &mut file, "conv-type")?.unwrap_or(ConvType::Standard);
    let file_wm = file.take_list::<WidthMultiplier>("wm")?;
    let wms = if !a.wm.is_empty() {
        a.wm
    } else if !file_wm.is_empty() {
        file_wm
    } else {
        vec![WidthMultiplier::ONE]
    };
    let window = merge(a.input_seconds, &mut file, "input-seconds")?.unwrap_or(REFERENCE_WINDOW_SECONDS);
    let csv = merge(a.csv, &mut file, "csv")?;
    let paper_grid = flag(a.paper_grid, &mut file, "paper-grid")?;
    file.finish()?;
    if !(window > 0.0 && window.is_finite()) {
        return Err(CliError::usage("--input-seconds must be positive"));
    }

    let w = |out: &mut dyn Write, s: &str| out.write_all(s.as_bytes()).map_err(CliError::data);
    let reports = if paper_grid {
        let published = compare_published().map_err(CliError::usage)?;
        w(out, &published_table(&published))?;
        let grid = sweep(&sweep_grid(), window).map_err(CliError::usage)?;
        w(out, "\n")?;
        w(out, &to_table(&grid))?;
        published.into_iter().map(|c| c.report).chain(grid).collect()
    } else {
        let configs: Vec<NetworkConfig> = wms.iter().map(|&wm| NetworkConfig::new(rate, conv, wm)).collect();
        let reports = configs
            .iter()
            .map(|c| analyze(c, window))
            .collect::<crate::Result<Vec<_>>>()
            .map_err(CliError::usage)?;
        w(out, &to_table(&reports))?;
        reports
    };
    if let Some(path) = csv {
        fs::write(&path, to_csv(&reports)).map_err(io_err(&path))?;
    }
    Ok(())
}

fn run_train(a: TrainArgs, out: &mut dyn Write) -> CliResult<()> {
    let mut file = ConfigFile::load(a.config.as_deref())?;
    let net = net_config(a.net, &mut file)?;
    let data = required(merge(a.data, &mut file, "data")?, "data")?;
    let index = required(merge(a.index, &mut file, "index")?, "index")?;
    let fold = merge(a.fold, &mut file, "fold")?.unwrap_or(FoldSelection::One(1));
    let seed = merge(a.seed, &mut file, "seed")?.unwrap_or(0);
    let out_dir = merge(a.out, &mut file, "out")?.unwrap_or_else(|| PathBuf::from("runs"));
    let silence_db = merge(a.silence_db, &mut file, "silence-db")?.unwrap_or(DEFAULT_SILENCE_DB);
    let threads = merge(a.threads, &mut file, "threads")?;
    let defaults = TrainConfig::default();
    let mixup = MixupConfig {
        alpha: merge(a.mixup_alpha, &mut file, "mixup-alpha")?.unwrap_or(MixupConfig::default().alpha),
        warmup_epochs: merge(a.mixup_warmup, &mut file, "mixup-warmup")?
            .unwrap_or(MixupConfig::default().warmup_epochs),
    };
    let config = TrainConfig {
        epochs: merge(a.epochs, &mut file, "epochs")?,
        batch_size: merge(a.batch_size, &mut file, "batch-size")?.unwrap_or(defaults.batch_size),
        eval_every: merge(a.eval_every, &mut file, "eval-every")?.unwrap_or(defaults.eval_every),
        checkpoint_every: merge(a.checkpoint_every, &mut file, "checkpoint-every")?
            .unwrap_or(defaults.checkpoint_every),
        mixup: (!flag(a.no_mixup, &mut file, "no-mixup")?).then_some(mixup),
        augment: (!flag(a.no_augment, &mut file, "no-augment")?).then(AugmentConfig::default),
        seed,
        ..defaults
    };
    file.finish()?;
    config.validate().map_err(CliError::usage)?;
    let pool = thread_pool(threads)?;

    let say = |out: &mut dyn Write, s: String| writeln!(out, "{s}").map_err(CliError::data);
    say(out, format!("seed: {seed}"))?;
    say(
        out,
        format!("model: {} wm {} classes {}", net.label(), net.width_multiplier, net.num_classes),
    )?;
    let index = load_index(&index, net.num_classes).map_err(CliError::data)?;
    let folds: Vec<u8> = match fold {
        FoldSelection::All => (1..=NUM_FOLDS).collect(),
        FoldSelection::One(f) => vec![f],
    };
    let mut accuracies = Vec::new();
    for f in folds {
        let (train_entries, test_entries) = split_folds(&index, f).map_err(CliError::data)?;
        let train_set = load_clips(&data, &train_entries, net.sample_rate, silence_db).map_err(CliError::data)?;
        let test_set = load_clips(&data, &test_entries, net.sample_rate, silence_db).map_err(CliError::data)?;
        say(
            out,
            format!("fold {f}: {} train / {} test files", train_set.len(), test_set.len()),
        )?;
        let dir = OutputDir::create(out_dir.join(format!("fold{f}"))).map_err(CliError::data)?;
        let mut lines = Vec::new();
        let state = in_pool(&pool, || {
            train(&net, &train_set, &test_set, &config, Some(&dir), |m| {
                if let Some(acc) = m.val_accuracy {
                    let line = format!(
                        "fold {f} epoch {} lr {} loss {:.4} val_acc {acc:.4}",
                        m.epoch + 1,
                        m.lr,
                        m.train_loss
                    );
                    eprintln!("{line}");
                    lines.push(line);
                }
            })
        })
        .map_err(CliError::runtime)?;
        let acc = match test_set.is_empty() {
            true => None,
            false => Some(in_pool(&pool, || evaluate(&state.model, &test_set)).map_err(CliError::runtime)?.accuracy),
        };
        for l in lines {
            say(out, l)?;
        }
        match acc {
            Some(a) => say(out, format!("fold {f} accuracy {a:.4}"))?,
            None => say(out, format!("fold {f} has no test files"))?,
        }
        accuracies.extend(acc);
    }
    if fold == FoldSelection::All && !accuracies.is_empty() {
        let mean = accuracies.iter().sum::<f64>() / accuracies.len() as f64;
        say(out, format!("mean accuracy {mean:.4}"))?;
    }
    Ok(())
}

fn load_input(path: &Path, rate: u32, silence_db: f64) -> CliResult<AudioClip> {
    let clip = load_wav(path).map_err(CliError::data)?;
    if clip.rate != rate {
        return Err(CliError::data(format!(
            "{}: sample rate {} Hz, model expects {rate} Hz",
            path.display(),
            clip.rate
        )));
    }
    trim_silence(&clip, silence_db).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn run_infer(a: InferArgs, out: &mut dyn Write) -> CliResult<()> {
    let mut file = ConfigFile::load(a.config.as_deref())?;
    let model_path = required(merge(a.model, &mut file, "model")?, "model")?;
    let wav = required(merge(a.wav, &mut file, "wav")?, "wav")?;
    let top = merge(a.top, &mut file, "top")?.unwrap_or(5);
    let silence_db = merge(a.silence_db, &mut file, "silence-db")?.unwrap_or(DEFAULT_SILENCE_DB);
    file.finish()?;
    if top == 0 {
        return Err(CliError::usage("--top must be at least 1"));
    }
    let model = load_model(&model_path).map_err(CliError::data)?;
    let clip = load_input(&wav, model.config().sample_rate, silence_db)?;
    let min = min_input_len(model.config()).map_err(CliError::data)?;
    if clip.len() < min {
        return Err(CliError::data(format!(
            "{}: {} samples after trimming, shorter than one 10 ms frame ({min} samples)",
            wav.display(),
            clip.len()
        )));
    }
    let probs = classify(&model, &clip).map_err(CliError::runtime)?;
    let mut ranked: Vec<(usize, f32)> = probs.iter().copied().enumerate().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    for (class, p) in ranked.into_iter().take(top) {
        writeln!(out, "{class}\t{p:.6}").map_err(CliError::data)?;
    }
    Ok(())
}

/// Preview files are written with this fixed gain so unit-variance crops
/// keep their relative levels without clipping.
pub const PREVIEW_HEADROOM: f32 = 0.125;

const PREVIEW_STREAM: u64 = 0x5052_4556;

/// File name for one preview crop.
pub fn preview_name(seed: u64, i: usize, factor: f64, gain_db: f64) -> String {
    format!("aug_seed{seed}_{i:03}_factor{factor:.4}_gain{gain_db:+.2}dB.wav")
}

fn run_augment_preview(a: AugmentPreviewArgs, out: &mut dyn Write) -> CliResult<()> {
    let mut file = ConfigFile::load(a.config.as_deref())?;
    let wav = required(merge(a.wav, &mut file, "wav")?, "wav")?;
    let seed = merge(a.seed, &mut file, "seed")?.unwrap_or(0);
    let count = merge(a.count, &mut file, "count")?.unwrap_or(8);
    let dir = merge(a.out, &mut file, "out")?.unwrap_or_else(|| PathBuf::from("augment_preview"));
    file.finish()?;
    writeln!(out, "seed: {seed}").map_err(CliError::data)?;
    let clip = load_wav(&wav).map_err(CliError::data)?;
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let config = AugmentConfig::default();
    for i in 0..count {
        let mut rng = stream_rng(seed, PREVIEW_STREAM, 0, i as u64);
        let (crop, draws) = augment_example_with_draws(&clip, &config, &mut rng).map_err(CliError::runtime)?;
        let scaled = AudioClip::new(crop.samples.iter().map(|s| s * PREVIEW_HEADROOM).collect(), crop.rate);
        let path = dir.join(preview_name(seed, i, draws.factor, draws.gain_db));
        save_wav(&path, &scaled).map_err(CliError::data)?;
        writeln!(out, "{}", path.display()).map_err(CliError::data)?;
    }
    Ok(())
}

fn run_eval(a: EvalArgs, out: &mut dyn Write) -> CliResult<()> {
    let mut file = ConfigFile::load(a.config.as_deref())?;
    let model_path = required(merge(a.model, &mut file, "model")?, "model")?;
    let data = required(merge(a.data, &mut file, "data")?, "data")?;
    let index = required(merge(a.index, &mut file, "index")?, "index")?;
    let fold = merge(a.fold, &mut file, "fold")?;
    let confusion = merge(a.confusion, &mut file, "confusion")?;
    let silence_db = merge(a.silence_db, &mut file, "silence-db")?.unwrap_or(DEFAULT_SILENCE_DB);
    let threads = merge(a.threads, &mut file, "threads")?;
    file.finish()?;
    if let Some(f) = fold {
        if !(1..=NUM_FOLDS).contains(&f) {
            return Err(CliError::usage(format!("--fold must be in 1..={NUM_FOLDS}")));
        }
    }
    let pool = thread_pool(threads)?;
    let model = load_model(&model_path).map_err(CliError::data)?;
    let index = load_index(&index, model.num_classes()).map_err(CliError::data)?;
    let entries = match fold {
        Some(f) => split_folds(&index, f).map_err(CliError::data)?.1,
        None => index.entries.clone(),
    };
    let clips = load_clips(&data, &entries, model.config().sample_rate, silence_db).map_err(CliError::data)?;
    let e: Evaluation = in_pool(&pool, || evaluate(&model, &clips)).map_err(CliError::runtime)?;
    writeln!(out, "accuracy {:.4} ({}/{})", e.accuracy, e.correct, e.total).map_err(CliError::data)?;
    if let Some(path) = confusion {
        let k = e.confusion.len();
        let mut csv = String::from("true");
        for c in 0..k {
            csv.push_str(&format!(",pred{c}"));
        }
        csv.push('\n');
        for (t, row) in e.confusion.iter().enumerate() {
            csv.push_str(&t.to_string());
            for v in row {
                csv.push_str(&format!(",{v}"));
            }
            csv.push('\n');
        }
        fs::write(&path, csv).map_err(io_err(&path))?;
    }
    Ok(())
}

/// Runs a parsed command.
pub fn execute(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    match cli.command {
        Command::Analyze(a) => run_analyze(a, out),
        Command::Train(a) => run_train(a, out),
        Command::Infer(a) => run_infer(a, out),
        Command::AugmentPreview(a) => run_augment_preview(a, out),
        Command::Eval(a) => run_eval(a, out),
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit code. Failures print one diagnostic line to `err`.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            let _ = writeln!(err, "{first}");
            return EXIT_USAGE;
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let line = e.message.lines().collect::<Vec<_>>().join(" ");
            let _ = writeln!(err, "error: {line}");
            e.code
        }
    }
}
