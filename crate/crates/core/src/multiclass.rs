//! One-against-one multiclass SVM with majority voting.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::frame_select::SelectionMethod;
use crate::frontend::FrontendConfig;
use crate::kernels::KernelSpec;
use crate::matrix::{FeatureMatrix, Matrix};
use crate::preprocessing::ScalerParams;
use crate::svm::{smo_train, BinaryModel, BinaryProblem, SvmParams, TrainStats};

const MODEL_MAGIC: &str = "vowelkit-svmodel";
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Feature vectors with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub x: FeatureMatrix,
    pub labels: Vec<usize>,
    pub label_names: Vec<String>,
}

impl LabeledDataset {
    pub fn new(x: FeatureMatrix, labels: Vec<usize>, label_names: Vec<String>) -> Result<Self> {
        let data = LabeledDataset {
            x,
            labels,
            label_names,
        };
        data.validate()?;
        Ok(data)
    }

    pub fn num_classes(&self) -> usize {
        self.label_names.len()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        validate_label_names(&self.label_names)?;
        if self.x.rows() != self.labels.len() {
            return Err(Error::invalid(format!(
                "{} feature rows but {} labels",
                self.x.rows(),
                self.labels.len()
            )));
        }
        let k = self.num_classes();
        if let Some(&bad) = self.labels.iter().find(|&&c| c >= k) {
            return Err(Error::invalid(format!("class id {bad} out of range for k = {k}")));
        }
        Ok(())
    }

    /// Number of rows per class id.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for &c in &self.labels {
            counts[c] += 1;
        }
        counts
    }
}

fn validate_label_names(names: &[String]) -> Result<()> {
    if names.len() < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 classes, got {}",
            names.len()
        )));
    }
    for w in names.windows(2) {
        if w[0] >= w[1] {
            return Err(Error::invalid(format!(
                "label names must be sorted and distinct (`{}` before `{}`)",
                w[0], w[1]
            )));
        }
    }
    if let Some(bad) = names
        .iter()
        .find(|n| n.is_empty() || n.chars().any(char::is_whitespace))
    {
        return Err(Error::invalid(format!("label name `{bad}` is empty or has whitespace")));
    }
    Ok(())
}

/// All pairs `(i, j)` with `i < j < k`, in lexicographic order.
pub fn pair_index(k: usize) -> Vec<(usize, usize)> {
    (0..k)
        .flat_map(|i| (i + 1..k).map(move |j| (i, j)))
        .collect()
}

/// Front-end and frame-selection settings a model was trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureConfig {
    pub frontend: FrontendConfig,
    pub selection: SelectionMethod,
}

impl FeatureConfig {
    /// SHA-256 of the canonical JSON encoding, hex.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("feature config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OvOModel {
    pub label_names: Vec<String>,
    pub pairs: Vec<(usize, usize)>,
    pub binaries: Vec<BinaryModel>,
    pub kernel: KernelSpec,
    pub c: f64,
    pub scaler: Option<ScalerParams>,
    pub features: Option<FeatureConfig>,
}

impl OvOModel {
    pub fn num_classes(&self) -> usize {
        self.label_names.len()
    }

    pub fn dimension(&self) -> usize {
        self.binaries.first().map_or(0, BinaryModel::dimension)
    }

    pub fn converged_pairs(&self) -> usize {
        self.binaries.iter().filter(|b| b.converged()).count()
    }

    pub fn fingerprint(&self) -> Option<String> {
        self.features.as_ref().map(FeatureConfig::fingerprint)
    }

    /// Applies the stored scaler, if any.
    pub fn scale(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        match &self.scaler {
            Some(s) => s.apply(x),
            None => Ok(x.clone()),
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        predict_ovo(self, x)
    }

    pub fn decisions(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dimension() {
            return Err(Error::invalid(format!(
                "input has {} attributes, model expects {}",
                x.len(),
                self.dimension()
            )));
        }
        Ok(self.binaries.iter().map(|b| b.decision(x)).collect())
    }

    fn validate(&self) -> Result<()> {
        validate_label_names(&self.label_names)?;
        let k = self.num_classes();
        if self.pairs != pair_index(k) {
            return Err(Error::format("pair list is not the lexicographic i<j enumeration"));
        }
        if self.binaries.len() != self.pairs.len() {
            return Err(Error::format(format!(
                "{} binary models for {} pairs",
                self.binaries.len(),
                self.pairs.len()
            )));
        }
        let d = self.dimension();
        if self.binaries.iter().any(|b| b.dimension() != d && b.support_count() > 0) {
            return Err(Error::format("binary models disagree on dimension"));
        }
        if let Some(s) = &self.scaler {
            if s.mins.len() != s.maxs.len() {
                return Err(Error::format("scaler mins and maxs differ in length"));
            }
        }
        Ok(())
    }
}

/// Trains every pair on the rayon pool of the caller.
pub fn train_ovo(data: &LabeledDataset, params: &SvmParams) -> Result<OvOModel> {
    data.validate()?;
    params.validate()?;
    let counts = data.class_counts();
    if let Some(empty) = counts.iter().position(|&n| n == 0) {
        return Err(Error::invalid(format!(
            "class `{}` has no training samples",
            data.label_names[empty]
        )));
    }
    let pairs = pair_index(data.num_classes());
    let binaries = pairs
        .par_iter()
        .map(|&(i, j)| smo_train(&pair_problem(data, i, j)?, params))
        .collect::<Result<Vec<_>>>()?;
    Ok(OvOModel {
        label_names: data.label_names.clone(),
        pairs,
        binaries,
        kernel: params.kernel,
        c: params.c,
        scaler: None,
        features: None,
    })
}

/// Trains on a dedicated pool of `workers` threads (0 = rayon default).
pub fn train_ovo_with_workers(
    data: &LabeledDataset,
    params: &SvmParams,
    workers: usize,
) -> Result<OvOModel> {
    crate::experiment::with_workers(workers, || train_ovo(data, params))?
}

/// Rows of classes `i` (+1) and `j` (−1) in dataset order.
fn pair_problem(data: &LabeledDataset, i: usize, j: usize) -> Result<BinaryProblem> {
    let mut idx = Vec::new();
    let mut y = Vec::new();
    for (r, &c) in data.labels.iter().enumerate() {
        if c == i {
            idx.push(r);
            y.push(1.0);
        } else if c == j {
            idx.push(r);
            y.push(-1.0);
        }
    }
    BinaryProblem::new(data.x.select_rows(&idx), y)
}

/// Majority vote over oriented pairs: pair `(a, b)` votes for `a` when its
/// decision is `>= 0`, else for `b`. Ties go to the class with the larger
/// sum of `|f|` over the binaries it won, then to the lowest id.
pub fn vote(k: usize, pairs: &[(usize, usize)], decisions: &[f64]) -> usize {
    let mut votes = vec![0usize; k];
    let mut strength = vec![0.0f64; k];
    for (&(a, b), &f) in pairs.iter().zip(decisions) {
        let winner = if f >= 0.0 { a } else { b };
        votes[winner] += 1;
        strength[winner] += f.abs();
    }
    let mut best = 0;
    for c in 1..k {
        if votes[c] > votes[best] || (votes[c] == votes[best] && strength[c] > strength[best]) {
            best = c;
        }
    }
    best
}

pub fn predict_ovo(model: &OvOModel, x: &[f64]) -> Result<usize> {
    let decisions = model.decisions(x)?;
    Ok(vote(model.num_classes(), &model.pairs, &decisions))
}

/// Per-frame predictions for every row.
pub fn predict_frames(model: &OvOModel, frames: &FeatureMatrix) -> Result<Vec<usize>> {
    frames.iter_rows().map(|row| predict_ovo(model, row)).collect()
}

/// Majority over per-frame predictions. A tie goes to the prediction of
/// the middle frame `(n - 1) / 2` when it is among the tied classes,
/// otherwise to the tied class predicted nearest the middle.
pub fn aggregate_frames(k: usize, frame_preds: &[usize]) -> Result<usize> {
    if frame_preds.is_empty() {
        return Err(Error::invalid("no frames to classify"));
    }
    let mut counts = vec![0usize; k];
    for &p in frame_preds {
        counts[p] += 1;
    }
    let top = *counts.iter().max().expect("k >= 1");
    let tied = |c: usize| counts[c] == top;
    let n = frame_preds.len();
    let mid = (n - 1) / 2;
    let nearest = (0..n)
        .flat_map(|d| [mid.checked_sub(d), Some(mid + d).filter(|&i| d > 0 && i < n)])
        .flatten()
        .find(|&i| tied(frame_preds[i]))
        .expect("some frame predicts a tied class");
    Ok(frame_preds[nearest])
}

pub fn predict_phoneme(model: &OvOModel, frames: &FeatureMatrix) -> Result<usize> {
    if frames.rows() == 0 {
        return Err(Error::invalid("empty frame set"));
    }
    aggregate_frames(model.num_classes(), &predict_frames(model, frames)?)
}

fn push_floats(out: &mut String, key: &str, values: &[f64]) {
    out.push_str(key);
    for v in values {
        write!(out, " {v:.16e}").unwrap();
    }
    out.push('\n');
}

/// Renders the versioned text form of a model.
pub fn model_to_string(model: &OvOModel) -> String {
    let mut out = String::new();
    writeln!(out, "{MODEL_MAGIC}").unwrap();
    writeln!(out, "format_version {MODEL_FORMAT_VERSION}").unwrap();
    writeln!(out, "labels {}", model.label_names.join(" ")).unwrap();
    writeln!(
        out,
        "kernel {}",
        serde_json::to_string(&model.kernel).expect("kernel serializes")
    )
    .unwrap();
    writeln!(out, "c {:.16e}", model.c).unwrap();
    match &model.features {
        Some(f) => {
            writeln!(
                out,
                "features {}",
                serde_json::to_string(f).expect("feature config serializes")
            )
            .unwrap();
            writeln!(out, "fingerprint {}", f.fingerprint()).unwrap();
        }
        None => out.push_str("features none\n"),
    }
    match &model.scaler {
        Some(s) => {
            writeln!(out, "scaler {}", s.dimension()).unwrap();
            push_floats(&mut out, "mins", &s.mins);
            push_floats(&mut out, "maxs", &s.maxs);
        }
        None => out.push_str("scaler none\n"),
    }
    writeln!(out, "pairs {}", model.pairs.len()).unwrap();
    for (&(i, j), b) in model.pairs.iter().zip(&model.binaries) {
        writeln!(
            out,
            "pair {i} {j} bias {:.16e} converged {} iterations {} sweeps {} sv {} dim {}",
            b.bias,
            b.stats.converged,
            b.stats.iterations,
            b.stats.sweeps,
            b.support_count(),
            b.dimension()
        )
        .unwrap();
        for ((a, y), sv) in b.alphas.iter().zip(&b.labels).zip(b.support_vectors.iter_rows()) {
            write!(out, "{a:.16e} {}", if *y > 0.0 { "+1" } else { "-1" }).unwrap();
            for v in sv {
                write!(out, " {v:.16e}").unwrap();
            }
            out.push('\n');
        }
    }
    out.push_str("end\n");
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str> {
        match self.inner.next() {
            Some((n, line)) => {
                self.last = n + 1;
                Ok(line)
            }
            None => Err(Error::format(format!(
                "model file truncated after line {}",
                self.last
            ))),
        }
    }

    fn keyed(&mut self, key: &str) -> Result<&'a str> {
        let line = self.next()?;
        match line.split_once(' ') {
            Some((k, rest)) if k == key => Ok(rest),
            _ => Err(self.err(format!("expected `{key}`"))),
        }
    }

    fn value<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let s = self.keyed(key)?;
        parse_num(self, s)
    }

    fn err(&self, msg: impl std::fmt::Display) -> Error {
        Error::format(format!("model line {}: {msg}", self.last))
    }
}

fn parse_num<T: std::str::FromStr>(lines: &Lines<'_>, s: &str) -> Result<T> {
    s.parse().map_err(|_| lines.err(format!("cannot parse `{s}`")))
}

fn parse_floats(lines: &Lines<'_>, s: &str, n: usize) -> Result<Vec<f64>> {
    let v = s
        .split_whitespace()
        .map(|t| parse_num(lines, t))
        .collect::<Result<Vec<f64>>>()?;
    if v.len() != n {
        return Err(lines.err(format!("expected {n} values, found {}", v.len())));
    }
    Ok(v)
}

/// Parses the output of [`model_to_string`].
pub fn model_from_str(text: &str) -> Result<OvOModel> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        last: 0,
    };
    if lines.next()? != MODEL_MAGIC {
        return Err(Error::format("not a vowelkit model file"));
    }
    let version: u32 = lines.value("format_version")?;
    if version != MODEL_FORMAT_VERSION {
        return Err(Error::format(format!(
            "model format version {version} is not supported (expected {MODEL_FORMAT_VERSION})"
        )));
    }
    let label_names: Vec<String> = lines
        .keyed("labels")?
        .split_whitespace()
        .map(str::to_owned)
        .collect();
    let kernel: KernelSpec = serde_json::from_str(lines.keyed("kernel")?)
        .map_err(|e| lines.err(format!("kernel: {e}")))?;
    let c: f64 = lines.value("c")?;
    let features = match lines.keyed("features")? {
        "none" => None,
        json => {
            let f: FeatureConfig =
                serde_json::from_str(json).map_err(|e| lines.err(format!("features: {e}")))?;
            let stored = lines.keyed("fingerprint")?;
            if stored != f.fingerprint() {
                return Err(lines.err("fingerprint does not match feature config"));
            }
            Some(f)
        }
    };
    let scaler = match lines.keyed("scaler")? {
        "none" => None,
        n => {
            let d: usize = parse_num(&lines, n)?;
            let mins = lines.keyed("mins")?;
            let mins = parse_floats(&lines, mins, d)?;
            let maxs = lines.keyed("maxs")?;
            let maxs = parse_floats(&lines, maxs, d)?;
            Some(ScalerParams { mins, maxs })
        }
    };
    let n_pairs: usize = lines.value("pairs")?;
    let mut pairs = Vec::with_capacity(n_pairs);
    let mut binaries = Vec::with_capacity(n_pairs);
    for _ in 0..n_pairs {
        let head: Vec<&str> = lines.keyed("pair")?.split_whitespace().collect();
        let field = |key: &str, pos: usize| -> Result<&str> {
            match (head.get(pos), head.get(pos + 1)) {
                (Some(&k), Some(&v)) if k == key => Ok(v),
                _ => Err(lines.err(format!("pair header lacks `{key}`"))),
            }
        };
        if head.len() != 14 {
            return Err(lines.err("malformed pair header"));
        }
        let i: usize = parse_num(&lines, head[0])?;
        let j: usize = parse_num(&lines, head[1])?;
        let bias: f64 = parse_num(&lines, field("bias", 2)?)?;
        let converged: bool = parse_num(&lines, field("converged", 4)?)?;
        let iterations: usize = parse_num(&lines, field("iterations", 6)?)?;
        let sweeps: usize = parse_num(&lines, field("sweeps", 8)?)?;
        let n_sv: usize = parse_num(&lines, field("sv", 10)?)?;
        let dim: usize = parse_num(&lines, field("dim", 12)?)?;
        let mut alphas = Vec::with_capacity(n_sv);
        let mut labels = Vec::with_capacity(n_sv);
        let mut data = Vec::with_capacity(n_sv * dim);
        for _ in 0..n_sv {
            let line = lines.next()?;
            let mut tok = line.split_whitespace();
            let a: f64 = parse_num(&lines, tok.next().unwrap_or(""))?;
            let y = match tok.next() {
                Some("+1") => 1.0,
                Some("-1") => -1.0,
                _ => return Err(lines.err("support-vector label must be +1 or -1")),
            };
            let before = data.len();
            for t in tok {
                data.push(parse_num(&lines, t)?);
            }
            if data.len() - before != dim {
                return Err(lines.err(format!("support vector must have {dim} values")));
            }
            alphas.push(a);
            labels.push(y);
        }
        pairs.push((i, j));
        binaries.push(BinaryModel {
            support_vectors: Matrix::from_vec(n_sv, dim, data)?,
            alphas,
            labels,
            bias,
            kernel,
            stats: TrainStats {
                converged,
                iterations,
                sweeps,
            },
        });
    }
    if lines.next()? != "end" {
        return Err(lines.err("expected `end`"));
    }
    let model = OvOModel {
        label_names,
        pairs,
        binaries,
        kernel,
        c,
        scaler,
        features,
    };
    model.validate()?;
    Ok(model)
}

pub fn save_model(model: &OvOModel, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_string(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<OvOModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelSpec;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("c{i:02}")).collect()
    }

    fn blobs(k: usize, per_class: usize, dim: usize, seed: u64) -> LabeledDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.05).unwrap();
        let mut x = Matrix::zeros(0, dim);
        let mut labels = Vec::new();
        for c in 0..k {
            let center: Vec<f64> = (0..dim)
                .map(|j| if j == c % dim { (1 + c / dim) as f64 } else { 0.0 })
                .collect();
            for _ in 0..per_class {
                let row: Vec<f64> = center.iter().map(|m| m + noise.sample(&mut rng)).collect();
                x.push_row(&row).unwrap();
                labels.push(c);
            }
        }
        LabeledDataset::new(x, labels, names(k)).unwrap()
    }

    #[test]
    fn pair_enumeration() {
        assert_eq!(pair_index(3), vec![(0, 1), (0, 2), (1, 2)]);
        for k in 2..=25 {
            let p = pair_index(k);
            assert_eq!(p.len(), k * (k - 1) / 2);
            assert!(p.windows(2).all(|w| w[0] < w[1]));
            assert!(p.iter().all(|&(i, j)| i < j && j < k));
        }
        assert_eq!(pair_index(20).len(), 190);
    }

    #[test]
    fn dataset_invariants() {
        let x = Matrix::zeros(2, 1);
        assert!(LabeledDataset::new(x.clone(), vec![0, 1], names(1)).is_err());
        assert!(LabeledDataset::new(x.clone(), vec![0, 2], names(2)).is_err());
        assert!(LabeledDataset::new(x.clone(), vec![0], names(2)).is_err());
        let unsorted = vec!["b".to_string(), "a".to_string()];
        assert!(LabeledDataset::new(x.clone(), vec![0, 1], unsorted).is_err());
        let dup = vec!["a".to_string(), "a".to_string()];
        assert!(LabeledDataset::new(x, vec![0, 1], dup).is_err());
    }

    #[test]
    fn simple_votes() {
        assert_eq!(vote(2, &[(0, 1)], &[0.7]), 0);
        assert_eq!(vote(2, &[(0, 1)], &[-0.7]), 1);
        assert_eq!(vote(2, &[(0, 1)], &[0.0]), 0);
        // (0,1)->0, (0,2)->0, (1,2)->1: votes {2,1,0}
        assert_eq!(vote(3, &pair_index(3), &[1.0, 1.0, 1.0]), 0);
    }

    /// Independent restatement of the tie-break chain.
    fn oracle(k: usize, pairs: &[(usize, usize)], f: &[f64]) -> usize {
        let tally = |c: usize| -> (usize, f64) {
            let mut n = 0;
            let mut s = 0.0;
            for (&(a, b), &v) in pairs.iter().zip(f) {
                let won = if v >= 0.0 { a == c } else { b == c };
                if won {
                    n += 1;
                    s += v.abs();
                }
            }
            (n, s)
        };
        let all: Vec<(usize, f64)> = (0..k).map(tally).collect();
        let max_votes = all.iter().map(|t| t.0).max().unwrap();
        let tied: Vec<usize> = (0..k).filter(|&c| all[c].0 == max_votes).collect();
        let max_s = tied.iter().map(|&c| all[c].1).fold(f64::NEG_INFINITY, f64::max);
        *tied.iter().find(|&&c| all[c].1 == max_s).unwrap()
    }

    #[test]
    fn three_class_cycles_match_brute_force() {
        let pairs = pair_index(3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for signs in 0..8u32 {
            for _ in 0..50 {
                let f: Vec<f64> = (0..3)
                    .map(|b| {
                        let mag = rng.random_range(0.01..2.0);
                        if signs >> b & 1 == 1 { mag } else { -mag }
                    })
                    .collect();
                assert_eq!(vote(3, &pairs, &f), oracle(3, &pairs, &f), "{f:?}");
            }
        }
        // cycle 0>1, 1>2, 2>0 with 0's win the strongest
        assert_eq!(vote(3, &pairs, &[2.0, -0.5, 0.5]), 0);
        // 2 beats 0 strongly
        assert_eq!(vote(3, &pairs, &[0.1, -3.0, 0.5]), 2);
        // exact magnitude tie falls to lowest id
        assert_eq!(vote(3, &pairs, &[1.0, -1.0, 1.0]), 0);
    }

    proptest! {
        #[test]
        fn vote_matches_oracle(k in 2usize..8, seed in any::<u64>()) {
            let pairs = pair_index(k);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f: Vec<f64> = pairs.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
            let c = vote(k, &pairs, &f);
            prop_assert!(c < k);
            prop_assert_eq!(c, oracle(k, &pairs, &f));
        }

        #[test]
        fn orientation_swap_preserves_vote(k in 2usize..8, seed in any::<u64>(), flips in any::<u64>()) {
            let pairs = pair_index(k);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f: Vec<f64> = pairs
                .iter()
                .map(|_| {
                    let v: f64 = rng.random_range(0.01..1.0);
                    if rng.random::<bool>() { v } else { -v }
                })
                .collect();
            let mut swapped_pairs = pairs.clone();
            let mut swapped_f = f.clone();
            for (p, (pair, v)) in swapped_pairs.iter_mut().zip(swapped_f.iter_mut()).enumerate() {
                if flips >> (p % 64) & 1 == 1 {
                    *pair = (pair.1, pair.0);
                    *v = -*v;
                }
            }
            prop_assert_eq!(vote(k, &pairs, &f), vote(k, &swapped_pairs, &swapped_f));
        }
    }

    #[test]
    fn frame_aggregation() {
        assert_eq!(aggregate_frames(3, &[2]).unwrap(), 2);
        assert_eq!(aggregate_frames(3, &[0, 0, 1]).unwrap(), 0);
        assert_eq!(aggregate_frames(3, &[0, 1]).unwrap(), 0);
        assert_eq!(aggregate_frames(3, &[1, 0]).unwrap(), 1);
        // tie between 0 and 1, middle frame (index 1) says 1
        assert_eq!(aggregate_frames(3, &[0, 1, 1, 0]).unwrap(), 1);
        // middle frame (index 2) predicts 2, not tied; nearest tied frame wins
        assert_eq!(aggregate_frames(3, &[0, 0, 2, 1, 1]).unwrap(), 0);
        assert!(aggregate_frames(3, &[]).is_err());
    }

    fn small_model() -> OvOModel {
        let data = blobs(3, 15, 4, 1);
        let mut m = train_ovo(&data, &SvmParams::new(10.0, KernelSpec::Rbf { sigma: 0.5 })).unwrap();
        m.scaler = Some(ScalerParams {
            mins: vec![0.0, -1.0, 0.5, 0.0],
            maxs: vec![1.0, 1.0, 0.5, 2.0],
        });
        m.features = Some(FeatureConfig {
            frontend: FrontendConfig::default(),
            selection: SelectionMethod::Middle { k: 3 },
        });
        m
    }

    #[test]
    fn separable_blobs_train_perfectly() {
        let data = blobs(4, 20, 3, 2);
        let m = train_ovo(&data, &SvmParams::new(100.0, KernelSpec::Rbf { sigma: 1.0 })).unwrap();
        assert_eq!(m.binaries.len(), 6);
        assert_eq!(m.converged_pairs(), 6);
        for (row, &c) in data.x.iter_rows().zip(&data.labels) {
            assert_eq!(predict_ovo(&m, row).unwrap(), c);
        }
        assert!(predict_ovo(&m, &[0.0; 2]).is_err());
    }

    #[test]
    fn worker_count_does_not_change_model() {
        let data = blobs(5, 10, 3, 3);
        let params = SvmParams::new(10.0, KernelSpec::Rbf { sigma: 0.3 });
        let one = train_ovo_with_workers(&data, &params, 1).unwrap();
        let four = train_ovo_with_workers(&data, &params, 4).unwrap();
        assert_eq!(model_to_string(&one), model_to_string(&four));
    }

    #[test]
    fn empty_class_is_rejected() {
        let x = Matrix::from_rows(vec![vec![0.0], vec![1.0]]).unwrap();
        let data = LabeledDataset::new(x, vec![0, 2], names(3)).unwrap();
        assert!(train_ovo(&data, &SvmParams::default()).is_err());
    }

    #[test]
    fn model_text_round_trip() {
        let m = small_model();
        let text = model_to_string(&m);
        let back = model_from_str(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(model_to_string(&back), text);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-0.5..1.5)).collect();
            assert_eq!(predict_ovo(&m, &x).unwrap(), predict_ovo(&back, &x).unwrap());
        }
    }

    #[test]
    fn file_round_trip() {
        let m = small_model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.svmodel");
        save_model(&m, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), m);
        assert!(matches!(
            load_model(&dir.path().join("missing.svmodel")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn malformed_models_are_format_errors() {
        let text = model_to_string(&small_model());
        let lines: Vec<&str> = text.lines().collect();
        for cut in [0, 1, 3, lines.len() / 2, lines.len() - 1] {
            let truncated = lines[..cut].join("\n");
            assert!(
                matches!(model_from_str(&truncated), Err(Error::Format(_))),
                "cut at {cut}"
            );
        }
        let bumped = text.replacen("format_version 1", "format_version 2", 1);
        assert!(matches!(model_from_str(&bumped), Err(Error::Format(_))));
        let tampered = text.replacen("\"k\":3", "\"k\":5", 1);
        assert!(matches!(model_from_str(&tampered), Err(Error::Format(_))));
        assert!(matches!(model_from_str("hello\n"), Err(Error::Format(_))));
    }

    #[test]
    fn phoneme_prediction_uses_frames() {
        let m = small_model();
        let data = blobs(3, 15, 4, 1);
        let frames = data.x.select_rows(&[15, 16, 0]);
        assert_eq!(predict_phoneme(&m, &frames).unwrap(), 1);
        assert!(predict_phoneme(&m, &Matrix::zeros(0, 4)).is_err());
    }

    #[test]
    fn fingerprint_tracks_config() {
        let a = FeatureConfig {
            frontend: FrontendConfig::default(),
            selection: SelectionMethod::Middle { k: 3 },
        };
        let mut b = a.clone();
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.selection = SelectionMethod::Middle { k: 5 };
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint().len(), 64);
    }
}
