//! Corpus ingestion, dataset assembly, evaluation and grid search.

mod audio;
mod config;
mod corpus;
mod report;

use std::collections::HashMap;
use std::ops::Range;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use audio::{decode_audio, decode_raw_pcm16, load_audio, load_audio_with, load_raw_pcm16, write_wav};
pub use config::{CellSpec, ExperimentConfig, FcmSection, GridSpec, SvmSection};
pub use corpus::{
    default_phonemes, load_phn, parse_phn, scan_corpus, scan_split, PhonemeToken, Split,
    Utterance, VOWELS,
};
pub use report::{
    emit_report, read_report_json, render_csv, render_markdown, write_report_json, CellResult,
    ReportFormat, RunReport, CSV_COLUMNS,
};

use crate::error::{Error, Result};
use crate::frame_select::{MethodKind, SelectionMethod};
use crate::frontend::{FeatureExtractor, FrontendConfig};
use crate::matrix::{FeatureMatrix, Matrix};
use crate::multiclass::{
    aggregate_frames, predict_frames, train_ovo, FeatureConfig, LabeledDataset, OvOModel,
};
use crate::preprocessing::{fit_scaler, ScalerParams};

/// Every frame of one token, before selection and scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenFrames {
    pub token: PhonemeToken,
    pub frames: FeatureMatrix,
}

/// Extracted tokens of both splits for one front-end setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub frontend: FrontendConfig,
    pub train: Vec<TokenFrames>,
    pub test: Vec<TokenFrames>,
    /// Tokens dropped because they were shorter than one frame or gave a
    /// degenerate spectrum.
    pub skipped_train: usize,
    pub skipped_test: usize,
}

impl FeatureTable {
    pub fn skipped(&self) -> usize {
        self.skipped_train + self.skipped_test
    }
}

struct UtteranceFrames {
    tokens: Vec<TokenFrames>,
    skipped: usize,
}

fn extract_utterance(
    utt: &Utterance,
    frontend: &FrontendConfig,
    phonemes: &[String],
    raw_rate: Option<u32>,
) -> Result<UtteranceFrames> {
    let signal = load_audio_with(&utt.audio, raw_rate)?;
    let tokens = load_phn(&utt.phn, phonemes, Some(signal.len()), &utt.id, utt.split)?;
    let extractor = FeatureExtractor::new(frontend, signal.sample_rate)?;
    let mut out = UtteranceFrames {
        tokens: Vec::with_capacity(tokens.len()),
        skipped: 0,
    };
    for token in tokens {
        let piece = signal.slice(token.begin, token.end)?;
        match extractor.extract(&piece) {
            Ok(frames) => out.tokens.push(TokenFrames { token, frames }),
            Err(Error::TooShort { .. } | Error::DegenerateSpectrum(_)) => out.skipped += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Loads every utterance and extracts all whitelisted tokens. Runs on the
/// caller's rayon pool; output order follows `utterances`.
pub fn extract_tokens(
    utterances: &[Utterance],
    frontend: &FrontendConfig,
    phonemes: &[String],
    raw_rate: Option<u32>,
) -> Result<FeatureTable> {
    frontend.validate()?;
    let per_utt = utterances
        .par_iter()
        .map(|u| extract_utterance(u, frontend, phonemes, raw_rate).map(|f| (u.split, f)))
        .collect::<Result<Vec<_>>>()?;
    let mut table = FeatureTable {
        frontend: frontend.clone(),
        train: Vec::new(),
        test: Vec::new(),
        skipped_train: 0,
        skipped_test: 0,
    };
    for (split, f) in per_utt {
        match split {
            Split::Train => {
                table.train.extend(f.tokens);
                table.skipped_train += f.skipped;
            }
            Split::Test => {
                table.test.extend(f.tokens);
                table.skipped_test += f.skipped;
            }
        }
    }
    Ok(table)
}

/// Selected frames of many tokens stacked into one matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSet {
    pub x: FeatureMatrix,
    /// Rows of `x` belonging to each token.
    pub groups: Vec<Range<usize>>,
    /// Class id per token.
    pub labels: Vec<usize>,
    pub tokens: Vec<PhonemeToken>,
    /// Tokens dropped for a label outside `label_names`.
    pub unknown_labels: usize,
}

impl TokenSet {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Class id of every row.
    pub fn frame_labels(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.x.rows());
        for (g, &l) in self.groups.iter().zip(&self.labels) {
            out.extend(std::iter::repeat_n(l, g.len()));
        }
        out
    }

    pub fn scaled(&self, scaler: &ScalerParams) -> Result<TokenSet> {
        Ok(TokenSet {
            x: scaler.apply(&self.x)?,
            ..self.clone()
        })
    }

    pub fn to_dataset(&self, label_names: &[String]) -> Result<LabeledDataset> {
        LabeledDataset::new(self.x.clone(), self.frame_labels(), label_names.to_vec())
    }
}

/// Applies frame selection to each token whose label is in `label_names`.
pub fn select_tokens(
    tokens: &[TokenFrames],
    selection: &SelectionMethod,
    label_names: &[String],
) -> Result<TokenSet> {
    selection.validate()?;
    let picked = tokens
        .par_iter()
        .map(|t| match label_names.binary_search(&t.token.label) {
            Ok(id) => selection.select(&t.frames).map(|m| Some((id, m))),
            Err(_) => Ok(None),
        })
        .collect::<Result<Vec<_>>>()?;
    let dim = tokens.first().map_or(0, |t| t.frames.cols());
    let mut set = TokenSet {
        x: Matrix::zeros(0, dim),
        groups: Vec::new(),
        labels: Vec::new(),
        tokens: Vec::new(),
        unknown_labels: 0,
    };
    for (t, p) in tokens.iter().zip(picked) {
        let Some((id, m)) = p else {
            set.unknown_labels += 1;
            continue;
        };
        let start = set.x.rows();
        set.x.append(&m)?;
        set.groups.push(start..set.x.rows());
        set.labels.push(id);
        set.tokens.push(t.token.clone());
    }
    Ok(set)
}

/// Scaled train and test sets for one feature and selection setting.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub features: FeatureConfig,
    pub label_names: Vec<String>,
    pub scaler: ScalerParams,
    pub train: TokenSet,
    pub test: TokenSet,
    /// Too-short, degenerate and unknown-label tokens over both splits.
    pub skipped: usize,
}

impl PreparedData {
    pub fn train_dataset(&self) -> Result<LabeledDataset> {
        self.train.to_dataset(&self.label_names)
    }
}

/// Distinct sorted labels of the training tokens.
pub fn training_labels(table: &FeatureTable) -> Vec<String> {
    let mut names: Vec<String> = table.train.iter().map(|t| t.token.label.clone()).collect();
    names.sort();
    names.dedup();
    names
}

/// Selects frames, fits the scaler on training rows only, and scales both
/// splits.
pub fn build_dataset(table: &FeatureTable, selection: &SelectionMethod) -> Result<PreparedData> {
    let label_names = training_labels(table);
    if table.train.is_empty() {
        return Err(Error::invalid(format!(
            "no usable training tokens ({} skipped)",
            table.skipped_train
        )));
    }
    if label_names.len() < 2 {
        return Err(Error::invalid(format!(
            "training tokens cover {} phoneme class(es); need at least 2",
            label_names.len()
        )));
    }
    let train = select_tokens(&table.train, selection, &label_names)?;
    let test = select_tokens(&table.test, selection, &label_names)?;
    let scaler = fit_scaler(&train.x)?;
    Ok(PreparedData {
        features: FeatureConfig {
            frontend: table.frontend.clone(),
            selection: *selection,
        },
        label_names,
        train: train.scaled(&scaler)?,
        test: test.scaled(&scaler)?,
        skipped: table.skipped() + train.unknown_labels + test.unknown_labels,
        scaler,
    })
}

/// Frame- and token-level test results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub frame_accuracy: f64,
    pub phoneme_accuracy: f64,
    /// Token counts, row = true class, column = predicted class.
    pub confusion: Vec<Vec<usize>>,
    pub n_frames: usize,
    pub n_tokens: usize,
    pub token_predictions: Vec<usize>,
}

impl Evaluation {
    pub fn from_predictions(
        k: usize,
        frame_true: &[usize],
        frame_pred: &[usize],
        token_true: &[usize],
        token_pred: &[usize],
    ) -> Result<Self> {
        if frame_true.len() != frame_pred.len() || token_true.len() != token_pred.len() {
            return Err(Error::invalid("prediction and truth lengths differ"));
        }
        if token_true.is_empty() {
            return Err(Error::invalid("empty test set"));
        }
        let pct = |hits: usize, n: usize| {
            if n == 0 {
                0.0
            } else {
                100.0 * hits as f64 / n as f64
            }
        };
        let frame_hits = frame_true.iter().zip(frame_pred).filter(|(a, b)| a == b).count();
        let mut confusion = vec![vec![0usize; k]; k];
        for (&t, &p) in token_true.iter().zip(token_pred) {
            confusion[t][p] += 1;
        }
        let token_hits = (0..k).map(|c| confusion[c][c]).sum();
        Ok(Evaluation {
            frame_accuracy: pct(frame_hits, frame_true.len()),
            phoneme_accuracy: pct(token_hits, token_true.len()),
            confusion,
            n_frames: frame_true.len(),
            n_tokens: token_true.len(),
            token_predictions: token_pred.to_vec(),
        })
    }
}

/// Scores `model` on a scaled test set built with `features` and the
/// model's label names.
pub fn evaluate(model: &OvOModel, test: &TokenSet, features: &FeatureConfig) -> Result<Evaluation> {
    if let Some(fp) = model.fingerprint() {
        if fp != features.fingerprint() {
            return Err(Error::invalid(
                "test features were built with a different front-end or selection than the model",
            ));
        }
    }
    if test.is_empty() {
        return Err(Error::invalid("empty test set"));
    }
    let frame_pred = predict_frames(model, &test.x)?;
    let k = model.num_classes();
    let token_pred = test
        .groups
        .iter()
        .map(|g| aggregate_frames(k, &frame_pred[g.clone()]))
        .collect::<Result<Vec<_>>>()?;
    Evaluation::from_predictions(k, &test.frame_labels(), &frame_pred, &test.labels, &token_pred)
}

/// Trains a model on prepared data and attaches its scaler and provenance.
pub fn train_model(data: &PreparedData, params: &crate::svm::SvmParams) -> Result<OvOModel> {
    let mut model = train_ovo(&data.train_dataset()?, params)?;
    model.scaler = Some(data.scaler.clone());
    model.features = Some(data.features.clone());
    Ok(model)
}

fn run_cell(cell: &CellSpec, data: &PreparedData, config: &ExperimentConfig) -> Result<(CellResult, OvOModel)> {
    let kernel = config.svm.kernel(cell.kernel, cell.sigma);
    let params = config.svm.params(cell.c, kernel);
    let t0 = Instant::now();
    let model = train_model(data, &params)?;
    let train_s = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let eval = evaluate(&model, &data.test, &data.features)?;
    let test_s = t1.elapsed().as_secs_f64();
    let result = CellResult {
        kernel: cell.kernel,
        feature: cell.feature.clone(),
        c: cell.c,
        sigma: cell.sigma,
        k: cell.k,
        method: cell.method,
        frame_acc: Some(eval.frame_accuracy),
        phoneme_acc: Some(eval.phoneme_accuracy),
        train_s,
        test_s,
        n_train: data.train.len(),
        n_test: data.test.len(),
        skipped: data.skipped,
        converged_pairs: model.converged_pairs(),
        pairs: model.binaries.len(),
        label_names: data.label_names.clone(),
        confusion: eval.confusion,
        error: None,
    };
    Ok((result, model))
}

fn failed_cell(cell: &CellSpec, err: &Error) -> CellResult {
    CellResult {
        kernel: cell.kernel,
        feature: cell.feature.clone(),
        c: cell.c,
        sigma: cell.sigma,
        k: cell.k,
        method: cell.method,
        frame_acc: None,
        phoneme_acc: None,
        train_s: 0.0,
        test_s: 0.0,
        n_train: 0,
        n_test: 0,
        skipped: 0,
        converged_pairs: 0,
        pairs: 0,
        label_names: Vec::new(),
        confusion: Vec::new(),
        error: Some(err.to_string()),
    }
}

type DataKey = (String, MethodKind, usize);

fn prepare(
    config: &ExperimentConfig,
    utterances: &[Utterance],
    feature: &str,
    method: MethodKind,
    k: usize,
    tables: Option<&HashMap<String, std::result::Result<FeatureTable, String>>>,
) -> std::result::Result<PreparedData, String> {
    let selection = config.selection(method, k);
    let owned;
    let table = match tables {
        Some(t) => t[feature].as_ref().map_err(Clone::clone)?,
        None => {
            owned = config
                .frontend_for(feature)
                .and_then(|f| extract_tokens(utterances, &f, &config.phonemes, config.raw_sample_rate))
                .map_err(|e| e.to_string())?;
            &owned
        }
    };
    build_dataset(table, &selection).map_err(|e| e.to_string())
}

/// Runs `f` on a rayon pool of `workers` threads (0 = all processors).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

/// Result of [`grid_search`] with the best cell's model.
pub struct GridOutcome {
    pub report: RunReport,
    /// Highest phoneme accuracy, earliest cell on ties.
    pub best_model: Option<OvOModel>,
}

pub fn grid_search(config: &ExperimentConfig) -> Result<RunReport> {
    grid_search_with(config, false).map(|o| o.report)
}

/// Runs every grid cell. Per-cell failures are recorded in the report;
/// only configuration and corpus-discovery errors abort the run.
pub fn grid_search_with(config: &ExperimentConfig, keep_best: bool) -> Result<GridOutcome> {
    config.validate()?;
    let utterances = scan_corpus(&config.corpus)?;
    let cells = config.cells();
    with_workers(config.workers, || {
        let mut prepared: HashMap<DataKey, std::result::Result<PreparedData, String>> = HashMap::new();
        if config.feature_cache {
            let tables: HashMap<String, std::result::Result<FeatureTable, String>> = config
                .grid
                .features
                .iter()
                .map(|f| {
                    let t = config
                        .frontend_for(f)
                        .and_then(|fe| {
                            extract_tokens(&utterances, &fe, &config.phonemes, config.raw_sample_rate)
                        })
                        .map_err(|e| e.to_string());
                    (f.clone(), t)
                })
                .collect();
            let mut keys: Vec<DataKey> = cells
                .iter()
                .map(|c| (c.feature.clone(), c.method, c.k))
                .collect();
            keys.dedup();
            let built: Vec<_> = keys
                .par_iter()
                .map(|(f, m, k)| prepare(config, &utterances, f, *m, *k, Some(&tables)))
                .collect();
            prepared.extend(keys.into_iter().zip(built));
        }
        let outcomes: Vec<(CellResult, Option<OvOModel>)> = cells
            .par_iter()
            .map(|cell| {
                let uncached;
                let data = if config.feature_cache {
                    &prepared[&(cell.feature.clone(), cell.method, cell.k)]
                } else {
                    uncached = prepare(config, &utterances, &cell.feature, cell.method, cell.k, None);
                    &uncached
                };
                let data = match data {
                    Ok(d) => d,
                    Err(msg) => return (failed_cell(cell, &Error::invalid(msg.clone())), None),
                };
                match run_cell(cell, data, config) {
                    Ok((r, m)) => (r, keep_best.then_some(m)),
                    Err(e) => (failed_cell(cell, &e), None),
                }
            })
            .collect();
        let mut best: Option<(f64, OvOModel)> = None;
        let mut results = Vec::with_capacity(outcomes.len());
        for (r, m) in outcomes {
            if let (Some(m), Some(acc)) = (m, r.phoneme_acc) {
                if best.as_ref().is_none_or(|(b, _)| acc > *b) {
                    best = Some((acc, m));
                }
            }
            results.push(r);
        }
        Ok(GridOutcome {
            report: RunReport {
                config: config.clone(),
                seed: config.seed,
                cells: results,
            },
            best_model: best.map(|(_, m)| m),
        })
    })?
}

/// Selected, unscaled token features written by `extract` and read by
/// `train`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureFile {
    pub format_version: u32,
    pub table: FeatureTable,
    pub selection: SelectionMethod,
}

pub const FEATURE_FILE_VERSION: u32 = 1;

impl FeatureFile {
    pub fn new(table: FeatureTable, selection: SelectionMethod) -> Self {
        FeatureFile {
            format_version: FEATURE_FILE_VERSION,
            table,
            selection,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self).map_err(|e| Error::format(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let f: FeatureFile = serde_json::from_str(&text)
            .map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
        if f.format_version != FEATURE_FILE_VERSION {
            return Err(Error::format(format!(
                "{}: feature file version {} is not supported",
                path.display(),
                f.format_version
            )));
        }
        Ok(f)
    }
}
