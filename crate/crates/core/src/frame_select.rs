//! Reduction of a phoneme's frames to K representatives: a centered window
//! of middle frames, or one observed frame per fuzzy c-means cluster.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{squared_distance, FeatureMatrix, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FcmParams {
    /// Fuzzifier, must exceed 1.
    pub m: f64,
    /// Stop once no center moves farther than this.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for FcmParams {
    fn default() -> Self {
        FcmParams {
            m: 2.0,
            tol: 1e-5,
            max_iter: 300,
            seed: 0,
        }
    }
}

impl FcmParams {
    fn validate(&self) -> Result<()> {
        if !(self.m > 1.0) {
            return Err(Error::invalid(format!("fuzzifier {} must exceed 1", self.m)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid("FCM tolerance must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodKind {
    Middle,
    Fcm,
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MethodKind::Middle => "middle",
            MethodKind::Fcm => "fcm",
        })
    }
}

impl std::str::FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "middle" | "mf" | "middleframes" => Ok(MethodKind::Middle),
            "fcm" => Ok(MethodKind::Fcm),
            other => Err(Error::invalid(format!("unknown selection method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum SelectionMethod {
    Middle { k: usize },
    Fcm { k: usize, params: FcmParams },
}

impl SelectionMethod {
    pub fn new(kind: MethodKind, k: usize, fcm: FcmParams) -> Self {
        match kind {
            MethodKind::Middle => SelectionMethod::Middle { k },
            MethodKind::Fcm => SelectionMethod::Fcm { k, params: fcm },
        }
    }

    pub fn kind(&self) -> MethodKind {
        match self {
            SelectionMethod::Middle { .. } => MethodKind::Middle,
            SelectionMethod::Fcm { .. } => MethodKind::Fcm,
        }
    }

    pub fn k(&self) -> usize {
        match *self {
            SelectionMethod::Middle { k } | SelectionMethod::Fcm { k, .. } => k,
        }
    }

    /// Parses `middle:3` or `fcm:5`; FCM parameters come from `fcm`.
    pub fn parse(spec: &str, fcm: FcmParams) -> Result<Self> {
        let (kind, k) = spec
            .split_once(':')
            .ok_or_else(|| Error::invalid(format!("frame selection `{spec}` is not `method:K`")))?;
        let k: usize = k
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("bad K in `{spec}`")))?;
        let m = Self::new(kind.parse()?, k, fcm);
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k() == 0 {
            return Err(Error::invalid("K must be at least 1"));
        }
        if let SelectionMethod::Fcm { params, .. } = self {
            params.validate()?;
        }
        Ok(())
    }

    /// Indices of the selected frames, ascending.
    pub fn select_indices(&self, features: &FeatureMatrix) -> Result<Vec<usize>> {
        match *self {
            SelectionMethod::Middle { k } => middle_indices(features.rows(), k),
            SelectionMethod::Fcm { k, params } => fcm_select_indices(features, k, &params),
        }
    }

    pub fn select(&self, features: &FeatureMatrix) -> Result<FeatureMatrix> {
        Ok(features.select_rows(&self.select_indices(features)?))
    }
}

fn middle_indices(n: usize, k: usize) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::invalid("no frames to select from"));
    }
    if k == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    if n <= k {
        return Ok((0..n).collect());
    }
    let start = (n - k) / 2;
    Ok((start..start + k).collect())
}

/// The `min(K, N)` frames centered in the sequence, in original order.
pub fn select_middle(features: &FeatureMatrix, k: usize) -> Result<FeatureMatrix> {
    Ok(features.select_rows(&middle_indices(features.rows(), k)?))
}

/// Result of a fuzzy c-means run.
#[derive(Debug, Clone, PartialEq)]
pub struct FcmState {
    /// `c × D` cluster centers.
    pub centers: Matrix,
    /// `N × c` memberships; rows sum to one.
    pub membership: Matrix,
    /// `Σ_i Σ_j u_ij^m ||x_i - c_j||²` for the final memberships and centers.
    pub objective: f64,
    /// Objective after every alternating update, ending with `objective`.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn memberships(x: &Matrix, centers: &Matrix, m: f64) -> Matrix {
    let c = centers.rows();
    let mut u = Matrix::zeros(x.rows(), c);
    let exponent = 1.0 / (m - 1.0);
    let mut d2 = vec![0.0; c];
    for i in 0..x.rows() {
        for (j, d) in d2.iter_mut().enumerate() {
            *d = squared_distance(x.row(i), centers.row(j));
        }
        let row = u.row_mut(i);
        if let Some(hit) = d2.iter().position(|&d| d == 0.0) {
            row[hit] = 1.0;
            continue;
        }
        let dmin = d2.iter().copied().fold(f64::INFINITY, f64::min);
        let mut total = 0.0;
        for (r, d) in row.iter_mut().zip(&d2) {
            *r = (dmin / d).powf(exponent);
            total += *r;
        }
        for r in row.iter_mut() {
            *r /= total;
        }
    }
    u
}

fn update_centers(x: &Matrix, u: &Matrix, m: f64, previous: &Matrix) -> Matrix {
    let mut centers = Matrix::zeros(u.cols(), x.cols());
    for j in 0..u.cols() {
        let mut weight = 0.0;
        let center = centers.row_mut(j);
        for i in 0..x.rows() {
            let w = u.get(i, j).powf(m);
            if w == 0.0 {
                continue;
            }
            weight += w;
            for (c, v) in center.iter_mut().zip(x.row(i)) {
                *c += w * v;
            }
        }
        if weight > 0.0 {
            for c in center.iter_mut() {
                *c /= weight;
            }
        } else {
            center.copy_from_slice(previous.row(j));
        }
    }
    centers
}

fn objective(x: &Matrix, u: &Matrix, centers: &Matrix, m: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..x.rows() {
        for j in 0..centers.rows() {
            let w = u.get(i, j);
            if w > 0.0 {
                total += w.powf(m) * squared_distance(x.row(i), centers.row(j));
            }
        }
    }
    total
}

/// Fuzzy c-means with alternating membership and center updates.
///
/// Centers start at `c` distinct rows drawn with a ChaCha8 generator
/// seeded from `params.seed`, so the result is a pure function of the
/// inputs.
pub fn fcm_cluster(features: &FeatureMatrix, c: usize, params: &FcmParams) -> Result<FcmState> {
    params.validate()?;
    let n = features.rows();
    if c == 0 {
        return Err(Error::invalid("FCM needs at least one cluster"));
    }
    if n < c {
        return Err(Error::invalid(format!("{n} points cannot form {c} clusters")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let init = rand::seq::index::sample(&mut rng, n, c).into_vec();
    let mut centers = features.select_rows(&init);
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < params.max_iter {
        iterations += 1;
        let u = memberships(features, &centers, params.m);
        let next = update_centers(features, &u, params.m, &centers);
        history.push(objective(features, &u, &next, params.m));
        let shift = (0..c)
            .map(|j| squared_distance(centers.row(j), next.row(j)).sqrt())
            .fold(0.0, f64::max);
        centers = next;
        if shift < params.tol {
            converged = true;
            break;
        }
    }

    let membership = memberships(features, &centers, params.m);
    let objective = objective(features, &membership, &centers, params.m);
    history.push(objective);
    Ok(FcmState {
        centers,
        membership,
        objective,
        history,
        iterations,
        converged,
    })
}

fn fcm_select_indices(features: &FeatureMatrix, k: usize, params: &FcmParams) -> Result<Vec<usize>> {
    let n = features.rows();
    if n == 0 {
        return Err(Error::invalid("no frames to select from"));
    }
    if k == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    let state = fcm_cluster(features, k.min(n), params)?;
    let u = &state.membership;
    let mut picked: Vec<usize> = (0..u.cols())
        .map(|j| {
            let mut best = 0;
            for i in 1..n {
                if u.get(i, j) > u.get(best, j) {
                    best = i;
                }
            }
            best
        })
        .collect();
    picked.sort_unstable();
    picked.dedup();
    Ok(picked)
}

/// For each of `min(K, N)` fuzzy clusters, the frame with the highest
/// membership (lowest index on ties); sorted, without duplicates.
pub fn fcm_select(features: &FeatureMatrix, k: usize, params: &FcmParams) -> Result<FeatureMatrix> {
    Ok(features.select_rows(&fcm_select_indices(features, k, params)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn column(v: &[f64]) -> Matrix {
        Matrix::from_rows(v.iter().map(|x| [*x])).unwrap()
    }

    fn blobs(seed: u64) -> (Matrix, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut rows = Vec::new();
        let mut truth = Vec::new();
        for (g, center) in [(0.0, 0.0), (10.0, 10.0)].iter().enumerate() {
            for _ in 0..20 {
                rows.push([center.0 + noise.sample(&mut rng), center.1 + noise.sample(&mut rng)]);
                truth.push(g);
            }
        }
        (Matrix::from_rows(rows).unwrap(), truth)
    }

    #[test]
    fn middle_examples() {
        let m = column(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(select_middle(&m, 3).unwrap().as_slice(), &[2.0, 3.0, 4.0]);
        let m3 = column(&[0.0, 1.0, 2.0]);
        assert_eq!(select_middle(&m3, 3).unwrap(), m3);
        let m2 = column(&[0.0, 1.0]);
        assert_eq!(select_middle(&m2, 3).unwrap(), m2);
        assert!(select_middle(&Matrix::default(), 3).is_err());
    }

    #[test]
    fn middle_is_a_contiguous_slice() {
        for n in 1..40 {
            for k in 1..10 {
                let idx = middle_indices(n, k).unwrap();
                assert_eq!(idx.len(), k.min(n));
                assert!(idx.windows(2).all(|w| w[1] == w[0] + 1));
                // centered: frames left out on either side differ by at most one
                let left = idx[0];
                let right = n - 1 - idx[idx.len() - 1];
                assert!(right == left || right == left + 1);
            }
        }
    }

    #[test]
    fn two_points_two_clusters() {
        let x = column(&[0.0, 1.0]);
        let s = fcm_cluster(&x, 2, &FcmParams::default()).unwrap();
        let mut centers: Vec<f64> = s.centers.as_slice().to_vec();
        centers.sort_by(f64::total_cmp);
        assert_eq!(centers, vec![0.0, 1.0]);
        for i in 0..2 {
            let row = s.membership.row(i);
            assert!(row.contains(&1.0) && row.contains(&0.0));
        }
        assert_eq!(fcm_select(&x, 2, &FcmParams::default()).unwrap(), x);
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let (x, _) = blobs(1);
        let s = fcm_cluster(&x, 1, &FcmParams::default()).unwrap();
        for d in 0..2 {
            let mean = x.iter_rows().map(|r| r[d]).sum::<f64>() / x.rows() as f64;
            assert_abs_diff_eq!(s.centers.get(0, d), mean, epsilon = 1e-9);
        }
        assert!(s.membership.as_slice().iter().all(|&u| u == 1.0));
    }

    #[test]
    fn separated_blobs_get_confident_memberships() {
        let (x, truth) = blobs(2);
        let s = fcm_cluster(&x, 2, &FcmParams::default()).unwrap();
        assert!(s.converged);
        // map each cluster to the blob of its nearest center
        let cluster_of_blob: Vec<usize> = [(0.0, 0.0), (10.0, 10.0)]
            .iter()
            .map(|c| {
                (0..2)
                    .min_by(|&a, &b| {
                        squared_distance(s.centers.row(a), &[c.0, c.1])
                            .total_cmp(&squared_distance(s.centers.row(b), &[c.0, c.1]))
                    })
                    .unwrap()
            })
            .collect();
        assert_ne!(cluster_of_blob[0], cluster_of_blob[1]);
        for (i, g) in truth.iter().enumerate() {
            assert!(s.membership.get(i, cluster_of_blob[*g]) >= 0.9);
        }
    }

    #[test]
    fn objective_never_increases_and_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for seed in 0..20 {
            let n = rng.random_range(5..40);
            let d = rng.random_range(1..6);
            let x = Matrix::from_rows(
                (0..n).map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect::<Vec<_>>()),
            )
            .unwrap();
            let c = rng.random_range(1..=4.min(n));
            let s = fcm_cluster(&x, c, &FcmParams { seed, ..Default::default() }).unwrap();
            for w in s.history.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-15, "{:?}", s.history);
            }
            for row in s.membership.iter_rows() {
                assert_abs_diff_eq!(row.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
                assert!(row.iter().all(|u| (0.0..=1.0).contains(u)));
            }
        }
    }

    #[test]
    fn clustering_is_deterministic() {
        let (x, _) = blobs(4);
        let p = FcmParams { seed: 42, ..Default::default() };
        assert_eq!(fcm_cluster(&x, 3, &p).unwrap(), fcm_cluster(&x, 3, &p).unwrap());
    }

    #[test]
    fn fcm_select_picks_one_frame_per_group() {
        let x = column(&[0.0, 0.01, 5.0, 5.02, 5.01, 10.0, 10.01]);
        let groups = [0, 0, 1, 1, 1, 2, 2];
        for seed in 0..10 {
            let p = FcmParams { seed, ..Default::default() };
            let idx = fcm_select_indices(&x, 3, &p).unwrap();
            let mut seen: Vec<usize> = idx.iter().map(|&i| groups[i]).collect();
            seen.sort_unstable();
            assert_eq!(seen, vec![0, 1, 2], "seed {seed} picked {idx:?}");
        }
    }

    #[test]
    fn fcm_select_edge_cases() {
        let one = column(&[3.0]);
        assert_eq!(fcm_select(&one, 5, &FcmParams::default()).unwrap(), one);
        assert!(fcm_select(&Matrix::default(), 3, &FcmParams::default()).is_err());
        assert!(fcm_cluster(&column(&[1.0]), 2, &FcmParams::default()).is_err());
        let bad = FcmParams { m: 1.0, ..Default::default() };
        assert!(fcm_cluster(&column(&[1.0, 2.0]), 1, &bad).is_err());
    }

    #[test]
    fn parse_selection() {
        let fcm = FcmParams::default();
        assert_eq!(
            SelectionMethod::parse("middle:3", fcm).unwrap(),
            SelectionMethod::Middle { k: 3 }
        );
        assert_eq!(SelectionMethod::parse("fcm:5", fcm).unwrap().k(), 5);
        assert!(SelectionMethod::parse("middle:0", fcm).is_err());
        assert!(SelectionMethod::parse("random:3", fcm).is_err());
    }
}
