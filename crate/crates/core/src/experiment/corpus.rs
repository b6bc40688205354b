//! TIMIT-style corpus layout: `root/{train,test}/**/<utt>.{wav,phn}`.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::error::{Error, Result};

/// The 20 vowel symbols used for recognition.
pub const VOWELS: [&str; 20] = [
    "aa", "ae", "ah", "ao", "aw", "ax", "ax-h", "axr", "ay", "eh", "er", "ey", "ih", "ix", "iy",
    "ow", "oy", "uh", "uw", "ux",
];

pub fn default_phonemes() -> Vec<String> {
    VOWELS.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.dir_name())
    }
}

/// One labelled span `[begin, end)` of an utterance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhonemeToken {
    pub label: String,
    pub begin: usize,
    pub end: usize,
    pub utterance: String,
    pub split: Split,
}

impl PhonemeToken {
    pub fn len(&self) -> usize {
        self.end - self.begin
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.begin
    }
}

/// Parses `.phn` text, keeping labels in `whitelist`. Spans are checked
/// against `signal_len` when given.
pub fn parse_phn(
    text: &str,
    whitelist: &[String],
    signal_len: Option<usize>,
    utterance: &str,
    split: Split,
) -> Result<Vec<PhonemeToken>> {
    let mut tokens = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let bad = |msg: String| Error::format(format!("{utterance}.phn line {line_no}: {msg}"));
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let [begin, end, label] = fields[..] else {
            return Err(bad(format!("expected `begin end label`, got `{line}`")));
        };
        let begin: usize = begin
            .parse()
            .map_err(|_| bad(format!("bad begin sample `{begin}`")))?;
        let end: usize = end
            .parse()
            .map_err(|_| bad(format!("bad end sample `{end}`")))?;
        if end <= begin {
            return Err(bad(format!("end {end} is not after begin {begin}")));
        }
        if let Some(len) = signal_len {
            if end > len {
                return Err(bad(format!("end {end} is past the signal length {len}")));
            }
        }
        let label = label.to_ascii_lowercase();
        if whitelist.contains(&label) {
            tokens.push(PhonemeToken {
                label,
                begin,
                end,
                utterance: utterance.to_owned(),
                split,
            });
        }
    }
    Ok(tokens)
}

pub fn load_phn(
    path: &Path,
    whitelist: &[String],
    signal_len: Option<usize>,
    utterance: &str,
    split: Split,
) -> Result<Vec<PhonemeToken>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_phn(&text, whitelist, signal_len, utterance, split)
}

/// An audio file with its transcription.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    /// Path below the split directory, without extension, `/`-separated.
    pub id: String,
    pub split: Split,
    pub audio: PathBuf,
    pub phn: PathBuf,
}

fn find_split_dir(root: &Path, split: Split) -> Result<Option<PathBuf>> {
    let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut found: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.eq_ignore_ascii_case(split.dir_name()))
        })
        .collect();
    found.sort();
    Ok(found.into_iter().next())
}

fn has_ext(path: &Path, ext: &str) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

/// Finds every audio file with a sibling `.phn` under one split, sorted by id.
pub fn scan_split(root: &Path, split: Split) -> Result<Vec<Utterance>> {
    let Some(dir) = find_split_dir(root, split)? else {
        return Ok(Vec::new());
    };
    let mut out = Vec::new();
    for entry in WalkDir::new(&dir).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(&dir).to_path_buf();
            Error::io(path, e.into())
        })?;
        let path = entry.path();
        if !entry.file_type().is_file() || !has_ext(path, "wav") {
            continue;
        }
        let phn = ["phn", "PHN"]
            .iter()
            .map(|e| path.with_extension(e))
            .find(|p| p.is_file());
        let Some(phn) = phn else { continue };
        let rel = path.strip_prefix(&dir).unwrap_or(path).with_extension("");
        let id = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        out.push(Utterance {
            id,
            split,
            audio: path.to_path_buf(),
            phn,
        });
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}

/// Train and test utterances under `root`.
pub fn scan_corpus(root: &Path) -> Result<Vec<Utterance>> {
    if !root.is_dir() {
        return Err(Error::invalid(format!(
            "corpus root {} is not a directory",
            root.display()
        )));
    }
    let mut all = scan_split(root, Split::Train)?;
    all.extend(scan_split(root, Split::Test)?);
    if all.is_empty() {
        return Err(Error::invalid(format!(
            "no .wav/.phn pairs under {}/{{train,test}}",
            root.display()
        )));
    }
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vowels() -> Vec<String> {
        default_phonemes()
    }

    #[test]
    fn vowel_list() {
        assert_eq!(VOWELS.len(), 20);
        let mut sorted = VOWELS.to_vec();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 20);
    }

    #[test]
    fn phn_filtering() {
        let text = "0 2260 h#\n2260 4070 iy\n4070 5000 sh\n5000 6000 AE\n";
        let t = parse_phn(text, &vowels(), Some(6000), "u1", Split::Train).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(
            t[0],
            PhonemeToken {
                label: "iy".into(),
                begin: 2260,
                end: 4070,
                utterance: "u1".into(),
                split: Split::Train
            }
        );
        assert_eq!(t[1].label, "ae");
    }

    #[test]
    fn phn_errors_carry_line_numbers() {
        for (text, line) in [
            ("0 10 iy\n20 20 aa\n", "line 2"),
            ("0 10 iy\nx 20 aa\n", "line 2"),
            ("0 10\n", "line 1"),
            ("0 10 iy\n\n10 99 aa\n", "line 3"),
        ] {
            let err = parse_phn(text, &vowels(), Some(50), "u", Split::Test).unwrap_err();
            let msg = err.to_string();
            assert!(matches!(err, Error::Format(_)));
            assert!(msg.contains(line), "{msg}");
        }
    }

    #[test]
    fn scan_finds_pairs_case_insensitively() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        for (rel, phn) in [
            ("TRAIN/DR1/SPK1/SA1.WAV", Some("SA1.PHN")),
            ("TRAIN/DR1/SPK1/SA2.WAV", None),
            ("test/dr1/spk2/sx3.wav", Some("sx3.phn")),
        ] {
            let p = root.join(rel);
            std::fs::create_dir_all(p.parent().unwrap()).unwrap();
            std::fs::write(&p, b"").unwrap();
            if let Some(phn) = phn {
                std::fs::write(p.parent().unwrap().join(phn), b"").unwrap();
            }
        }
        let all = scan_corpus(root).unwrap();
        let ids: Vec<(&str, Split)> = all.iter().map(|u| (u.id.as_str(), u.split)).collect();
        assert_eq!(ids, vec![("DR1/SPK1/SA1", Split::Train), ("dr1/spk2/sx3", Split::Test)]);
        assert!(scan_corpus(&root.join("nope")).is_err());
    }
}
