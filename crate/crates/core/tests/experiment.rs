use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vowelkit::experiment::*;
use vowelkit::frame_select::{FcmParams, MethodKind, SelectionMethod};
use vowelkit::frontend::{FrontendConfig, RawSignal};
use vowelkit::kernels::{KernelKind, KernelSpec};
use vowelkit::multiclass::{FeatureConfig, OvOModel};
use vowelkit::preprocessing::fit_scaler;
use vowelkit::svm::SvmParams;
use vowelkit::synth::{write_synth_corpus, SynthSpec};
use vowelkit::Error;

fn tone(len: usize, hz: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|n| 0.3 * (2.0 * std::f64::consts::PI * hz * n as f64 / 16000.0).sin() + 0.01 * rng.random_range(-1.0..1.0))
        .collect()
}

/// One utterance holding tokens of the given lengths and labels.
fn write_utterance(dir: &Path, name: &str, tokens: &[(usize, &str, f64)]) {
    std::fs::create_dir_all(dir).unwrap();
    let mut samples = Vec::new();
    let mut phn = String::new();
    for (i, &(len, label, hz)) in tokens.iter().enumerate() {
        let begin = samples.len();
        samples.extend(tone(len, hz, i as u64));
        phn.push_str(&format!("{begin} {} {label}\n", begin + len));
    }
    write_wav(&dir.join(format!("{name}.wav")), &RawSignal::new(samples, 16000).unwrap()).unwrap();
    std::fs::write(dir.join(format!("{name}.phn")), phn).unwrap();
}

fn tiny_corpus(root: &Path) {
    write_utterance(
        &root.join("train/s1"),
        "u1",
        &[(1024, "iy", 300.0), (200, "iy", 300.0), (1024, "aa", 800.0), (900, "h#", 0.0)],
    );
    write_utterance(&root.join("train/s2"), "u2", &[(1500, "iy", 320.0), (1300, "aa", 760.0)]);
    write_utterance(&root.join("test/s3"), "u3", &[(1100, "iy", 310.0), (1200, "aa", 790.0), (1000, "uw", 500.0)]);
}

fn vowels() -> Vec<String> {
    default_phonemes()
}

#[test]
fn token_extraction_and_skips() {
    let dir = tempfile::tempdir().unwrap();
    tiny_corpus(dir.path());
    let utts = scan_corpus(dir.path()).unwrap();
    let table = extract_tokens(&utts, &FrontendConfig::default(), &vowels(), None).unwrap();
    assert_eq!(table.train.len(), 4);
    assert_eq!(table.skipped_train, 1);
    assert_eq!(table.test.len(), 3);
    // 1024 samples at 256/128 give 7 frames of 36 coefficients
    assert_eq!((table.train[0].frames.rows(), table.train[0].frames.cols()), (7, 36));

    let data = build_dataset(&table, &SelectionMethod::Middle { k: 3 }).unwrap();
    assert_eq!(data.label_names, vec!["aa".to_string(), "iy".to_string()]);
    assert_eq!(data.train.groups[0], 0..3);
    assert_eq!(data.train.x.cols(), 36);
    // uw never occurs in training
    assert_eq!(data.test.len(), 2);
    assert_eq!(data.test.unknown_labels, 1);
    assert_eq!(data.skipped, 2);
    assert!(data.train.x.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
    assert!(data.test.x.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn scaler_sees_only_training_rows() {
    let dir = tempfile::tempdir().unwrap();
    tiny_corpus(dir.path());
    let utts = scan_corpus(dir.path()).unwrap();
    let table = extract_tokens(&utts, &FrontendConfig::default(), &vowels(), None).unwrap();
    let sel = SelectionMethod::Middle { k: 3 };
    let data = build_dataset(&table, &sel).unwrap();
    let names = data.label_names.clone();
    let raw_train = select_tokens(&table.train, &sel, &names).unwrap();
    let raw_test = select_tokens(&table.test, &sel, &names).unwrap();
    assert_eq!(data.scaler, fit_scaler(&raw_train.x).unwrap());
    assert_ne!(data.scaler, fit_scaler(&raw_test.x).unwrap());

    // perturbing test audio leaves the scaler untouched
    let mut shifted = table.clone();
    for t in &mut shifted.test {
        for v in t.frames.row_mut(0) {
            *v += 100.0;
        }
    }
    assert_eq!(build_dataset(&shifted, &sel).unwrap().scaler, data.scaler);
}

#[test]
fn no_usable_tokens_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    write_utterance(&dir.path().join("train/a"), "u", &[(100, "iy", 300.0), (150, "aa", 700.0)]);
    let utts = scan_corpus(dir.path()).unwrap();
    let table = extract_tokens(&utts, &FrontendConfig::default(), &vowels(), None).unwrap();
    assert_eq!(table.skipped_train, 2);
    assert!(matches!(
        build_dataset(&table, &SelectionMethod::Middle { k: 3 }),
        Err(Error::InvalidInput(_))
    ));
}

#[test]
fn chance_and_identity_metrics() {
    let k = 20;
    let truth: Vec<usize> = (0..k).flat_map(|c| std::iter::repeat_n(c, 5)).collect();
    let constant = vec![3; truth.len()];
    let e = Evaluation::from_predictions(k, &truth, &constant, &truth, &constant).unwrap();
    assert!((e.phoneme_accuracy - 5.0).abs() < 1e-12);
    assert!((e.frame_accuracy - 5.0).abs() < 1e-12);

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let pred: Vec<usize> = truth.iter().map(|&t| if rng.random_bool(0.6) { t } else { rng.random_range(0..k) }).collect();
    let e = Evaluation::from_predictions(k, &truth, &pred, &truth, &pred).unwrap();
    let trace: usize = (0..k).map(|c| e.confusion[c][c]).sum();
    let total: usize = e.confusion.iter().flatten().sum();
    assert_eq!(total, truth.len());
    assert!((100.0 * trace as f64 / total as f64 - e.phoneme_accuracy).abs() < 1e-12);
    for (c, row) in e.confusion.iter().enumerate() {
        assert_eq!(row.iter().sum::<usize>(), truth.iter().filter(|&&t| t == c).count());
    }
}

fn synth_config(root: &Path) -> ExperimentConfig {
    ExperimentConfig {
        corpus: root.to_path_buf(),
        phonemes: ["aa", "ae", "er", "iy", "uw"].map(String::from).to_vec(),
        seed: 11,
        grid: GridSpec {
            features: vec!["mfcc36".into(), "plp36".into()],
            methods: vec![MethodKind::Middle, MethodKind::Fcm],
            k: vec![3],
            kernels: vec![KernelKind::Rbf],
            c: vec![10.0],
            sigma: vec![0.027],
        },
        ..Default::default()
    }
}

fn strip_timing(r: &RunReport) -> Vec<CellResult> {
    r.cells
        .iter()
        .map(|c| CellResult {
            train_s: 0.0,
            test_s: 0.0,
            ..c.clone()
        })
        .collect()
}

#[test]
fn cache_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    write_synth_corpus(dir.path(), &SynthSpec { tokens_per_class: 12, ..Default::default() }).unwrap();
    let cfg = synth_config(dir.path());
    let cached = grid_search(&cfg).unwrap();
    let uncached = grid_search(&ExperimentConfig { feature_cache: false, ..cfg.clone() }).unwrap();
    assert_eq!(cached.cells.len(), 4);
    assert!(cached.cells.iter().all(|c| c.error.is_none()));
    assert_eq!(strip_timing(&cached), strip_timing(&uncached));
    let again = grid_search(&cfg).unwrap();
    assert_eq!(strip_timing(&cached), strip_timing(&again));
    for c in &cached.cells {
        let acc = c.phoneme_acc.unwrap();
        assert!((0.0..=100.0).contains(&acc));
        let total: usize = c.confusion.iter().flatten().sum();
        assert_eq!(total, c.n_test);
    }
}

#[test]
fn failing_cells_are_isolated() {
    let dir = tempfile::tempdir().unwrap();
    write_synth_corpus(dir.path(), &SynthSpec { tokens_per_class: 8, ..Default::default() }).unwrap();
    let mut cfg = synth_config(dir.path());
    // more LP poles than critical bands at 16 kHz: PLP fails, MFCC does not
    cfg.frontend.lp_order = 30;
    let r = grid_search(&cfg).unwrap();
    assert_eq!(r.cells.len(), 4);
    for c in &r.cells {
        match c.feature.as_str() {
            "mfcc36" => assert!(c.error.is_none() && c.phoneme_acc.is_some()),
            _ => assert!(c.error.as_deref().unwrap().contains("lp_order") && c.phoneme_acc.is_none()),
        }
    }
    let csv = render_csv(&r).unwrap();
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn separable_training_set_scores_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    write_synth_corpus(
        dir.path(),
        &SynthSpec { tokens_per_class: 10, noise_std: 0.005, formant_jitter: 0.0, ..Default::default() },
    )
    .unwrap();
    let cfg = synth_config(dir.path());
    let utts = scan_corpus(dir.path()).unwrap();
    let table = extract_tokens(&utts, &FrontendConfig::default(), &cfg.phonemes, None).unwrap();
    let data = build_dataset(&table, &SelectionMethod::Middle { k: 3 }).unwrap();
    let model = train_model(&data, &SvmParams::new(1000.0, KernelSpec::Rbf { sigma: 1.0 })).unwrap();
    let e = evaluate(&model, &data.train, &data.features).unwrap();
    assert_eq!(e.frame_accuracy, 100.0);
    assert_eq!(e.phoneme_accuracy, 100.0);
}

#[test]
fn fingerprint_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    tiny_corpus(dir.path());
    let utts = scan_corpus(dir.path()).unwrap();
    let table = extract_tokens(&utts, &FrontendConfig::default(), &vowels(), None).unwrap();
    let data = build_dataset(&table, &SelectionMethod::Middle { k: 3 }).unwrap();
    let model: OvOModel = train_model(&data, &SvmParams::new(10.0, KernelSpec::Rbf { sigma: 1.0 })).unwrap();
    let other = FeatureConfig {
        frontend: FrontendConfig::default(),
        selection: SelectionMethod::Fcm { k: 3, params: FcmParams::default() },
    };
    assert!(matches!(evaluate(&model, &data.test, &other), Err(Error::InvalidInput(_))));
    assert!(evaluate(&model, &data.test, &data.features).is_ok());
}

#[test]
fn feature_file_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    tiny_corpus(dir.path());
    let utts = scan_corpus(dir.path()).unwrap();
    let table = extract_tokens(&utts, &FrontendConfig::default(), &vowels(), None).unwrap();
    let file = FeatureFile::new(table, SelectionMethod::Middle { k: 3 });
    let path = dir.path().join("f.json");
    file.save(&path).unwrap();
    assert_eq!(FeatureFile::load(&path).unwrap(), file);
    std::fs::write(&path, "{").unwrap();
    assert!(matches!(FeatureFile::load(&path), Err(Error::Format(_))));
}

#[test]
fn full_grid_has_24_cells() {
    let mut cfg = ExperimentConfig::default();
    cfg.grid.sigma = vec![2.0];
    assert_eq!(cfg.cells().len(), 24);
    let one = GridSpec {
        features: vec!["mfcc36".into()],
        methods: vec![MethodKind::Middle],
        k: vec![3],
        kernels: vec![KernelKind::Rbf],
        c: vec![10.0],
        sigma: vec![0.027],
    };
    assert_eq!(one.cell_count(), 1);
}
