//! `vowelkit` command-line tool.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vowelkit::experiment::{
    build_dataset, emit_report, evaluate, extract_tokens, grid_search_with, load_audio_with,
    load_phn, read_report_json, scan_corpus, scan_split, select_tokens, train_model,
    with_workers, ExperimentConfig, FeatureFile, PhonemeToken, ReportFormat, RunReport, Split,
    Utterance,
};
use vowelkit::frame_select::SelectionMethod;
use vowelkit::frontend::{FeatureExtractor, FrontendConfig};
use vowelkit::kernels::KernelKind;
use vowelkit::multiclass::{load_model, predict_phoneme, save_model, OvOModel};
use vowelkit::{Error, Matrix};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "vowelkit", version, about = "Kernel-SVM vowel recognition toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Extract per-token features from a corpus into a feature file.
    Extract(ExtractArgs),
    /// Train a one-vs-one model from a feature file or a corpus.
    Train(TrainArgs),
    /// Label the phoneme tokens of audio files with a trained model.
    Predict(PredictArgs),
    /// Score a model on a corpus split.
    Evaluate(EvaluateArgs),
    /// Run the full parameter grid and write reports.
    Grid(GridArgs),
    /// Re-render a stored JSON report as CSV and markdown.
    Report(ReportArgs),
}

/// Settings shared by commands that read a config file.
#[derive(Args, Debug, Default)]
struct Common {
    /// Experiment config file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Corpus root with train/ and test/ subdirectories.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all processors).
    #[arg(long, env = "VOWELKIT_WORKERS")]
    workers: Option<usize>,
    /// Read headerless PCM16 audio at this rate.
    #[arg(long = "sample-rate")]
    sample_rate: Option<u32>,
    /// Comma-separated phoneme whitelist.
    #[arg(long, value_delimiter = ',')]
    phonemes: Option<Vec<String>>,
}

#[derive(Args, Debug)]
struct FeatureFlags {
    /// Feature name such as mfcc36, mfcc12, plp36.
    #[arg(long)]
    feature: Option<String>,
    /// Frame selection as method:K, e.g. middle:3 or fcm:5.
    #[arg(long)]
    frames: Option<String>,
}

#[derive(Args, Debug)]
struct ExtractArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    features: FeatureFlags,
    /// Output feature file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    features: FeatureFlags,
    /// Feature file from `extract`; otherwise features come from --corpus.
    #[arg(long = "features-file")]
    features_file: Option<PathBuf>,
    #[arg(long)]
    kernel: Option<KernelKind>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long = "C", alias = "c")]
    c: Option<f64>,
    /// Output model file (.svmodel).
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Audio files; each needs a sibling .phn giving the token spans.
    #[arg(required = true)]
    audio: Vec<PathBuf>,
    #[arg(long = "sample-rate")]
    sample_rate: Option<u32>,
    /// Comma-separated phoneme whitelist (default: the model's labels).
    #[arg(long, value_delimiter = ',')]
    phonemes: Option<Vec<String>>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "test")]
    split: SplitArg,
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Args, Debug)]
struct GridArgs {
    #[command(flatten)]
    common: Common,
    /// Output directory for report.csv, report.md and report.json.
    #[arg(long)]
    out: PathBuf,
    /// Also write the best cell's model to best.svmodel.
    #[arg(long = "save-best")]
    save_best: bool,
    /// Re-extract features for every cell.
    #[arg(long = "no-cache")]
    no_cache: bool,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// JSON report written by `grid`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// A failure with its exit status.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: EXIT_DATA,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn usage_err(e: Error) -> Failure {
    Failure::usage(e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(f)) => {
            eprintln!("vowelkit: {}", f.message);
            ExitCode::from(f.code)
        }
        Err(_) => {
            eprintln!("vowelkit: internal error");
            ExitCode::from(EXIT_INTERNAL)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Extract(a) => cmd_extract(a),
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Grid(a) => cmd_grid(a),
        Command::Report(a) => cmd_report(a),
    }
}

/// Loads the config file (or defaults) and applies flag overrides.
fn resolve(common: &Common) -> CliResult<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(c) = &common.corpus {
        cfg.corpus = c.clone();
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    if let Some(r) = common.sample_rate {
        cfg.raw_sample_rate = Some(r);
    }
    if let Some(p) = &common.phonemes {
        cfg.phonemes = p.iter().map(|s| s.trim().to_ascii_lowercase()).collect();
    }
    Ok(cfg)
}

fn apply_feature_flags(cfg: &mut ExperimentConfig, flags: &FeatureFlags) -> CliResult<()> {
    if let Some(f) = &flags.feature {
        cfg.grid.features = vec![f.clone()];
    }
    if let Some(spec) = &flags.frames {
        let sel = SelectionMethod::parse(spec, cfg.fcm_params()).map_err(usage_err)?;
        cfg.grid.methods = vec![sel.kind()];
        cfg.grid.k = vec![sel.k()];
    }
    Ok(())
}

fn single<'a, T>(name: &str, values: &'a [T]) -> CliResult<&'a T> {
    match values {
        [v] => Ok(v),
        _ => Err(Failure::usage(format!(
            "this command needs exactly one {name} value, the config lists {}",
            values.len()
        ))),
    }
}

fn echo(cfg: &ExperimentConfig) {
    eprintln!("# resolved configuration");
    eprint!("{}", cfg.to_toml_string());
    eprintln!("# end configuration");
}

fn need_corpus(cfg: &ExperimentConfig) -> CliResult<()> {
    if cfg.corpus.as_os_str().is_empty() {
        return Err(Failure::usage("no corpus given (use --corpus or `corpus` in the config)"));
    }
    Ok(())
}

fn feature_selection(cfg: &ExperimentConfig) -> CliResult<(FrontendConfig, SelectionMethod)> {
    let feature = single("feature", &cfg.grid.features)?;
    let method = *single("frame-selection method", &cfg.grid.methods)?;
    let k = *single("K", &cfg.grid.k)?;
    let frontend = cfg.frontend_for(feature).map_err(usage_err)?;
    let selection = cfg.selection(method, k);
    selection.validate().map_err(usage_err)?;
    Ok((frontend, selection))
}

fn cmd_extract(a: ExtractArgs) -> CliResult<()> {
    let mut cfg = resolve(&a.common)?;
    apply_feature_flags(&mut cfg, &a.features)?;
    need_corpus(&cfg)?;
    let (frontend, selection) = feature_selection(&cfg)?;
    echo(&cfg);
    let utts = scan_corpus(&cfg.corpus)?;
    let table = in_pool(cfg.workers, || {
        extract_tokens(&utts, &frontend, &cfg.phonemes, cfg.raw_sample_rate)
    })??;
    eprintln!(
        "extracted {} train and {} test tokens ({} skipped)",
        table.train.len(),
        table.test.len(),
        table.skipped()
    );
    FeatureFile::new(table, selection).save(&a.out)?;
    Ok(())
}

fn in_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    with_workers(workers, f).map_err(Failure::from)
}

fn cmd_train(a: TrainArgs) -> CliResult<()> {
    let mut cfg = resolve(&a.common)?;
    apply_feature_flags(&mut cfg, &a.features)?;
    if let Some(k) = a.kernel {
        cfg.grid.kernels = vec![k];
    }
    if let Some(c) = a.c {
        cfg.grid.c = vec![c];
    }
    if let Some(s) = a.sigma {
        cfg.grid.sigma = vec![s];
    }
    let kernel = *single("kernel", &cfg.grid.kernels)?;
    let c = *single("C", &cfg.grid.c)?;
    let sigma = *single("sigma", &cfg.grid.sigma)?;
    let params = cfg.svm.params(c, cfg.svm.kernel(kernel, sigma));
    params.validate().map_err(usage_err)?;

    let (table, selection) = match &a.features_file {
        Some(path) => {
            let file = FeatureFile::load(path)?;
            cfg.frontend = file.table.frontend.clone();
            cfg.grid.features = vec![file.table.frontend.feature_name()];
            cfg.grid.methods = vec![file.selection.kind()];
            cfg.grid.k = vec![file.selection.k()];
            (file.table, file.selection)
        }
        None => {
            need_corpus(&cfg)?;
            let (frontend, selection) = feature_selection(&cfg)?;
            let utts = scan_corpus(&cfg.corpus)?;
            let table = in_pool(cfg.workers, || {
                extract_tokens(&utts, &frontend, &cfg.phonemes, cfg.raw_sample_rate)
            })??;
            (table, selection)
        }
    };
    echo(&cfg);
    let data = in_pool(cfg.workers, || build_dataset(&table, &selection))??;
    let model = in_pool(cfg.workers, || train_model(&data, &params))??;
    eprintln!(
        "trained {} pairs on {} tokens ({} frames), {}/{} converged",
        model.binaries.len(),
        data.train.len(),
        data.train.x.rows(),
        model.converged_pairs(),
        model.binaries.len()
    );
    save_model(&model, &a.model)?;
    Ok(())
}

/// Tokens of one utterance with frames prepared as the model expects:
/// its front-end, selection and scaler. `None` marks a token too short
/// to analyse.
fn model_frames(
    model: &OvOModel,
    utt: &Utterance,
    phonemes: &[String],
    raw_rate: Option<u32>,
) -> CliResult<Vec<(PhonemeToken, Option<Matrix>)>> {
    let features = model
        .features
        .as_ref()
        .ok_or_else(|| Failure::usage("model file carries no feature configuration"))?;
    let signal = load_audio_with(&utt.audio, raw_rate)?;
    let tokens = load_phn(&utt.phn, phonemes, Some(signal.len()), &utt.id, utt.split)?;
    let extractor = FeatureExtractor::new(&features.frontend, signal.sample_rate)?;
    let mut out = Vec::with_capacity(tokens.len());
    for token in tokens {
        let piece = signal.slice(token.begin, token.end)?;
        let prepared = match extractor.extract(&piece) {
            Ok(frames) => {
                let selected = features.selection.select(&frames)?;
                Some(model.scale(&selected)?)
            }
            Err(Error::TooShort { .. } | Error::DegenerateSpectrum(_)) => None,
            Err(e) => return Err(e.into()),
        };
        out.push((token, prepared));
    }
    Ok(out)
}

fn cmd_predict(a: PredictArgs) -> CliResult<()> {
    let model = load_model(&a.model)?;
    let phonemes = a.phonemes.unwrap_or_else(|| model.label_names.clone());
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for path in &a.audio {
        let phn = ["phn", "PHN"]
            .iter()
            .map(|e| path.with_extension(e))
            .find(|p| p.is_file())
            .ok_or_else(|| Failure::from(Error::Format(format!("no .phn next to {}", path.display()))))?;
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let utt = Utterance {
            id,
            split: Split::Test,
            audio: path.clone(),
            phn,
        };
        for (t, frames) in model_frames(&model, &utt, &phonemes, a.sample_rate)? {
            let predicted = match frames {
                Some(f) => model.label_names[predict_phoneme(&model, &f)?].clone(),
                None => "<too-short>".to_string(),
            };
            writeln!(
                out,
                "{} {} {} {} {}",
                utt.id, t.begin, t.end, t.label, predicted
            )
            .map_err(|e| Failure::from(Error::Format(format!("stdout: {e}"))))?;
        }
    }
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> CliResult<()> {
    let cfg = resolve(&a.common)?;
    need_corpus(&cfg)?;
    let model = load_model(&a.model)?;
    let features = model
        .features
        .clone()
        .ok_or_else(|| Failure::usage("model file carries no feature configuration"))?;
    let scaler = model
        .scaler
        .clone()
        .ok_or_else(|| Failure::usage("model file carries no scaler"))?;
    echo(&cfg);
    let split = match a.split {
        SplitArg::Train => Split::Train,
        SplitArg::Test => Split::Test,
    };
    let utts = scan_split(&cfg.corpus, split)?;
    if utts.is_empty() {
        return Err(Error::InvalidInput(format!("no {split} utterances under {}", cfg.corpus.display())).into());
    }
    let eval = in_pool(cfg.workers, || -> vowelkit::Result<_> {
        let table = extract_tokens(&utts, &features.frontend, &cfg.phonemes, cfg.raw_sample_rate)?;
        let tokens = match split {
            Split::Train => &table.train,
            Split::Test => &table.test,
        };
        let set = select_tokens(tokens, &features.selection, &model.label_names)?.scaled(&scaler)?;
        let skipped = table.skipped() + set.unknown_labels;
        Ok((evaluate(&model, &set, &features)?, skipped))
    })??;
    let (eval, skipped) = eval;
    println!("frame_accuracy {:.4}", eval.frame_accuracy);
    println!("phoneme_accuracy {:.4}", eval.phoneme_accuracy);
    println!("tokens {} frames {} skipped {}", eval.n_tokens, eval.n_frames, skipped);
    println!("confusion (rows = true, columns = predicted)");
    println!("{:>6} {}", "", model.label_names.iter().map(|l| format!("{l:>6}")).collect::<String>());
    for (name, row) in model.label_names.iter().zip(&eval.confusion) {
        println!("{name:>6} {}", row.iter().map(|n| format!("{n:>6}")).collect::<String>());
    }
    Ok(())
}

fn write_reports(report: &RunReport, dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    emit_report(report, ReportFormat::Csv, &dir.join("report.csv"))?;
    emit_report(report, ReportFormat::Markdown, &dir.join("report.md"))?;
    Ok(())
}

fn cmd_grid(a: GridArgs) -> CliResult<()> {
    let mut cfg = resolve(&a.common)?;
    if a.no_cache {
        cfg.feature_cache = false;
    }
    need_corpus(&cfg)?;
    cfg.validate().map_err(usage_err)?;
    echo(&cfg);
    let outcome = grid_search_with(&cfg, a.save_best)?;
    write_reports(&outcome.report, &a.out)?;
    emit_report(&outcome.report, ReportFormat::Json, &a.out.join("report.json"))?;
    if let Some(best) = &outcome.best_model {
        save_model(best, &a.out.join("best.svmodel"))?;
    }
    let failed = outcome.report.cells.iter().filter(|c| c.error.is_some()).count();
    eprintln!(
        "{} cells, {} failed; reports in {}",
        outcome.report.cells.len(),
        failed,
        a.out.display()
    );
    Ok(())
}

fn cmd_report(a: ReportArgs) -> CliResult<()> {
    let report = read_report_json(&a.input)?;
    echo(&report.config);
    write_reports(&report, &a.out)
}
