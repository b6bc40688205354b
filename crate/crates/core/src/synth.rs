//! Seeded synthetic vowel corpus: each token is a pair of sinusoids at
//! jittered formant frequencies plus white noise, written in the
//! `train/` + `test/` WAV/PHN layout the experiment loader reads.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::experiment::{write_wav, Split};
use crate::frontend::RawSignal;

/// A vowel class and its first two formants in Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct FormantClass {
    pub label: String,
    pub f1: f64,
    pub f2: f64,
}

impl FormantClass {
    pub fn new(label: &str, f1: f64, f2: f64) -> Self {
        FormantClass {
            label: label.to_owned(),
            f1,
            f2,
        }
    }
}

/// Five vowels with textbook adult-male formant averages.
pub fn default_classes() -> Vec<FormantClass> {
    vec![
        FormantClass::new("aa", 730.0, 1090.0),
        FormantClass::new("ae", 660.0, 1720.0),
        FormantClass::new("er", 490.0, 1350.0),
        FormantClass::new("iy", 270.0, 2290.0),
        FormantClass::new("uw", 300.0, 870.0),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub classes: Vec<FormantClass>,
    pub tokens_per_class: usize,
    /// Share of each class's tokens placed in `test/`.
    pub test_fraction: f64,
    pub tokens_per_utterance: usize,
    pub sample_rate: u32,
    pub min_len: usize,
    pub max_len: usize,
    /// Relative standard deviation of each token's formant frequencies.
    pub formant_jitter: f64,
    /// Standard deviation of the additive white noise.
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            classes: default_classes(),
            tokens_per_class: 200,
            test_fraction: 0.25,
            tokens_per_utterance: 5,
            sample_rate: 16000,
            min_len: 1024,
            max_len: 2048,
            formant_jitter: 0.08,
            noise_std: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthSummary {
    pub train_tokens: usize,
    pub test_tokens: usize,
    pub utterances: usize,
}

fn token_samples(rng: &mut ChaCha8Rng, class: &FormantClass, len: usize, spec: &SynthSpec) -> Vec<f64> {
    let jitter = Normal::new(1.0, spec.formant_jitter).expect("jitter is finite");
    let f1 = class.f1 * jitter.sample(rng);
    let f2 = class.f2 * jitter.sample(rng);
    let a1 = rng.random_range(0.2..0.4);
    let a2 = a1 * rng.random_range(0.3..0.7);
    let (p1, p2) = (rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI));
    let sr = f64::from(spec.sample_rate);
    (0..len)
        .map(|n| {
            let t = n as f64 / sr;
            a1 * (2.0 * PI * f1 * t + p1).sin() + a2 * (2.0 * PI * f2 * t + p2).sin()
        })
        .collect()
}

/// Writes the corpus below `root`, replacing nothing outside it.
pub fn write_synth_corpus(root: &Path, spec: &SynthSpec) -> Result<SynthSummary> {
    if spec.classes.len() < 2 || spec.tokens_per_class == 0 || spec.tokens_per_utterance == 0 {
        return Err(Error::invalid("synthetic corpus needs 2+ classes and 1+ tokens"));
    }
    if !(0.0..1.0).contains(&spec.test_fraction) || spec.min_len == 0 || spec.min_len > spec.max_len {
        return Err(Error::invalid("bad synthetic corpus proportions or lengths"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::invalid(e.to_string()))?;
    let n_test = (spec.tokens_per_class as f64 * spec.test_fraction).round() as usize;

    let mut summary = SynthSummary {
        train_tokens: 0,
        test_tokens: 0,
        utterances: 0,
    };
    for split in [Split::Train, Split::Test] {
        let mut order: Vec<usize> = Vec::new();
        for c in 0..spec.classes.len() {
            let n = match split {
                Split::Train => spec.tokens_per_class - n_test,
                Split::Test => n_test,
            };
            order.extend(std::iter::repeat_n(c, n));
        }
        order.shuffle(&mut rng);
        match split {
            Split::Train => summary.train_tokens = order.len(),
            Split::Test => summary.test_tokens = order.len(),
        }
        for (u, chunk) in order.chunks(spec.tokens_per_utterance).enumerate() {
            let dir = root.join(split.dir_name()).join(format!("spk{:02}", u % 10));
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let mut samples = Vec::new();
            let mut phn = String::new();
            let gap = |samples: &mut Vec<f64>, phn: &mut String, rng: &mut ChaCha8Rng, label: &str| {
                let len = rng.random_range(400..800);
                let begin = samples.len();
                samples.extend(std::iter::repeat_n(0.0, len));
                writeln!(phn, "{begin} {} {label}", begin + len).unwrap();
            };
            gap(&mut samples, &mut phn, &mut rng, "h#");
            for (i, &c) in chunk.iter().enumerate() {
                if i > 0 {
                    gap(&mut samples, &mut phn, &mut rng, "pau");
                }
                let class = &spec.classes[c];
                let len = rng.random_range(spec.min_len..=spec.max_len);
                let begin = samples.len();
                samples.extend(token_samples(&mut rng, class, len, spec));
                writeln!(phn, "{begin} {} {}", begin + len, class.label).unwrap();
            }
            gap(&mut samples, &mut phn, &mut rng, "h#");
            for s in &mut samples {
                *s = (*s + noise.sample(&mut rng)).clamp(-1.0, 1.0);
            }
            let stem = dir.join(format!("utt{u:04}"));
            write_wav(&stem.with_extension("wav"), &RawSignal::new(samples, spec.sample_rate)?)?;
            let phn_path = stem.with_extension("phn");
            std::fs::write(&phn_path, phn).map_err(|e| Error::io(&phn_path, e))?;
            summary.utterances += 1;
        }
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{load_audio, load_phn, scan_corpus};

    #[test]
    fn layout_and_counts() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            tokens_per_class: 8,
            ..Default::default()
        };
        let s = write_synth_corpus(dir.path(), &spec).unwrap();
        assert_eq!(s.train_tokens, 30);
        assert_eq!(s.test_tokens, 10);
        let utts = scan_corpus(dir.path()).unwrap();
        assert_eq!(utts.len(), s.utterances);
        let labels: Vec<String> = spec.classes.iter().map(|c| c.label.clone()).collect();
        let mut total = 0;
        for u in &utts {
            let sig = load_audio(&u.audio).unwrap();
            assert_eq!(sig.sample_rate, 16000);
            let toks = load_phn(&u.phn, &labels, Some(sig.len()), &u.id, u.split).unwrap();
            assert!(toks.iter().all(|t| (1024..=2048).contains(&t.len())));
            total += toks.len();
        }
        assert_eq!(total, 40);
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            tokens_per_class: 4,
            ..Default::default()
        };
        write_synth_corpus(a.path(), &spec).unwrap();
        write_synth_corpus(b.path(), &spec).unwrap();
        for u in scan_corpus(a.path()).unwrap() {
            let rel = u.audio.strip_prefix(a.path()).unwrap();
            assert_eq!(
                std::fs::read(&u.audio).unwrap(),
                std::fs::read(b.path().join(rel)).unwrap()
            );
        }
    }
}
