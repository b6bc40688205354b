//! Binary soft-margin SVM trained in the dual by sequential minimal
//! optimization.
//!
//! The solver follows Platt's scheme: an outer loop alternating between
//! sweeps over all examples and over the non-bound ones, a second-choice
//! heuristic maximizing `|E1 - E2|`, and an analytic two-variable step.
//! When the kernel is indefinite along the chosen pair (`eta <= 0`), the
//! objective is evaluated at both ends of the feasible segment.

use std::collections::HashMap;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::matrix::{FeatureMatrix, Matrix};

/// Problems up to this many rows get a full Gram cache under
/// [`CachePolicy::Auto`].
pub const FULL_CACHE_LIMIT: usize = 4000;

/// Training set for one binary problem, labels in `{-1, +1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryProblem {
    pub x: FeatureMatrix,
    pub y: Vec<f64>,
}

impl BinaryProblem {
    pub fn new(x: FeatureMatrix, y: Vec<f64>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::invalid(format!(
                "{} rows but {} labels",
                x.rows(),
                y.len()
            )));
        }
        if y.len() < 2 {
            return Err(Error::invalid("a binary problem needs at least 2 samples"));
        }
        if let Some(v) = y.iter().find(|&&v| v != 1.0 && v != -1.0) {
            return Err(Error::invalid(format!("label {v} is not -1 or +1")));
        }
        if !y.contains(&1.0) || !y.contains(&-1.0) {
            return Err(Error::invalid("both classes must be present"));
        }
        if !x.all_finite() {
            return Err(Error::invalid("training features contain non-finite values"));
        }
        Ok(BinaryProblem { x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CachePolicy {
    /// Full Gram matrix up to [`FULL_CACHE_LIMIT`] rows, LRU rows beyond.
    #[default]
    Auto,
    Full,
    /// Keep at most this many kernel rows.
    Rows(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmParams {
    pub c: f64,
    pub kernel: KernelSpec,
    pub kkt_tol: f64,
    pub alpha_eps: f64,
    /// Consecutive full sweeps without any α moving by more than
    /// `alpha_eps` before the solver stops.
    pub max_passes: usize,
    /// Cap on applied pair updates; `None` means `100 * l`.
    pub max_iter: Option<usize>,
    pub cache: CachePolicy,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1.0,
            kernel: KernelSpec::Rbf { sigma: 1.0 },
            kkt_tol: 1e-3,
            alpha_eps: 1e-12,
            max_passes: 10,
            max_iter: None,
            cache: CachePolicy::Auto,
        }
    }
}

impl SvmParams {
    pub fn new(c: f64, kernel: KernelSpec) -> Self {
        SvmParams {
            c,
            kernel,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(Error::invalid(format!("C = {} must be positive", self.c)));
        }
        if !(self.kkt_tol > 0.0) {
            return Err(Error::invalid("kkt_tol must be positive"));
        }
        if !(self.alpha_eps >= 0.0) {
            return Err(Error::invalid("alpha_eps must be non-negative"));
        }
        if self.max_passes == 0 {
            return Err(Error::invalid("max_passes must be at least 1"));
        }
        self.kernel.validate()
    }
}

/// Solver diagnostics kept alongside a trained model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub converged: bool,
    pub iterations: usize,
    pub sweeps: usize,
}

/// Trained decision function `f(x) = Σ α_i y_i K(x_i, x) + b` over its
/// support vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryModel {
    pub support_vectors: Matrix,
    pub alphas: Vec<f64>,
    pub labels: Vec<f64>,
    pub bias: f64,
    pub kernel: KernelSpec,
    pub stats: TrainStats,
}

impl BinaryModel {
    pub fn dimension(&self) -> usize {
        self.support_vectors.cols()
    }

    pub fn support_count(&self) -> usize {
        self.alphas.len()
    }

    pub fn converged(&self) -> bool {
        self.stats.converged
    }

    /// Decision value without the dimension check.
    #[inline]
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.alphas
            .iter()
            .zip(&self.labels)
            .zip(self.support_vectors.iter_rows())
            .map(|((a, y), sv)| a * y * self.kernel.compute(sv, x))
            .sum::<f64>()
            + self.bias
    }

    /// Implicit primal weight vector; only meaningful for the linear kernel.
    pub fn linear_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.dimension()];
        for ((a, y), sv) in self
            .alphas
            .iter()
            .zip(&self.labels)
            .zip(self.support_vectors.iter_rows())
        {
            for (wi, v) in w.iter_mut().zip(sv) {
                *wi += a * y * v;
            }
        }
        w
    }

    /// `Σ α_i - ½ Σ_i Σ_j α_i α_j y_i y_j K(x_i, x_j)` over the support
    /// vectors.
    pub fn dual_objective(&self) -> f64 {
        let n = self.alphas.len();
        let mut quad = 0.0;
        for i in 0..n {
            let ci = self.alphas[i] * self.labels[i];
            for j in 0..n {
                quad += ci
                    * self.alphas[j]
                    * self.labels[j]
                    * self
                        .kernel
                        .compute(self.support_vectors.row(i), self.support_vectors.row(j));
            }
        }
        self.alphas.iter().sum::<f64>() - 0.5 * quad
    }
}

pub fn decision_value(model: &BinaryModel, x: &[f64]) -> Result<f64> {
    if x.len() != model.dimension() {
        return Err(Error::invalid(format!(
            "input has {} attributes, model expects {}",
            x.len(),
            model.dimension()
        )));
    }
    Ok(model.decision(x))
}

/// `+1` when `f(x) >= 0`, else `-1`.
pub fn predict_binary(model: &BinaryModel, x: &[f64]) -> Result<f64> {
    Ok(sign(decision_value(model, x)?))
}

#[inline]
pub fn sign(f: f64) -> f64 {
    if f >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// `ξ_i = max(0, 1 - y_i f(x_i))`.
pub fn compute_slacks(model: &BinaryModel, problem: &BinaryProblem) -> Vec<f64> {
    problem
        .x
        .iter_rows()
        .zip(&problem.y)
        .map(|(x, y)| (1.0 - y * model.decision(x)).max(0.0))
        .collect()
}

pub fn dual_objective(model: &BinaryModel) -> f64 {
    model.dual_objective()
}

/// State handed to a training observer after every applied pair update.
#[derive(Debug)]
pub struct SmoStep<'a> {
    pub iteration: usize,
    pub alphas: &'a [f64],
    pub bias: f64,
    /// Dual objective tracked incrementally from the pair updates.
    pub dual_objective: f64,
}

enum RowStore {
    Full(Vec<Rc<[f64]>>),
    Lru {
        capacity: usize,
        rows: HashMap<usize, (Rc<[f64]>, u64)>,
        tick: u64,
    },
}

struct KernelCache<'a> {
    x: &'a Matrix,
    kernel: KernelSpec,
    diag: Vec<f64>,
    store: RowStore,
}

impl<'a> KernelCache<'a> {
    fn new(x: &'a Matrix, kernel: KernelSpec, policy: CachePolicy) -> Self {
        let l = x.rows();
        let diag = (0..l).map(|i| kernel.compute(x.row(i), x.row(i))).collect();
        let full = match policy {
            CachePolicy::Full => true,
            CachePolicy::Auto => l <= FULL_CACHE_LIMIT,
            CachePolicy::Rows(_) => false,
        };
        let store = if full {
            RowStore::Full(
                (0..l)
                    .map(|i| Self::compute_row(x, &kernel, i))
                    .collect(),
            )
        } else {
            let capacity = match policy {
                CachePolicy::Rows(n) => n.max(2),
                _ => (FULL_CACHE_LIMIT * FULL_CACHE_LIMIT / l.max(1)).max(2),
            };
            RowStore::Lru {
                capacity,
                rows: HashMap::new(),
                tick: 0,
            }
        };
        KernelCache {
            x,
            kernel,
            diag,
            store,
        }
    }

    fn compute_row(x: &Matrix, kernel: &KernelSpec, i: usize) -> Rc<[f64]> {
        let xi = x.row(i);
        x.iter_rows().map(|xj| kernel.compute(xi, xj)).collect()
    }

    fn row(&mut self, i: usize) -> Rc<[f64]> {
        match &mut self.store {
            RowStore::Full(rows) => rows[i].clone(),
            RowStore::Lru {
                capacity,
                rows,
                tick,
            } => {
                *tick += 1;
                if let Some((row, used)) = rows.get_mut(&i) {
                    *used = *tick;
                    return row.clone();
                }
                if rows.len() >= *capacity {
                    let oldest = rows
                        .iter()
                        .min_by_key(|(_, (_, used))| *used)
                        .map(|(&k, _)| k)
                        .expect("cache is non-empty");
                    rows.remove(&oldest);
                }
                let row = Self::compute_row(self.x, &self.kernel, i);
                rows.insert(i, (row.clone(), *tick));
                row
            }
        }
    }
}

struct Solver<'a, F> {
    y: &'a [f64],
    c: f64,
    tol: f64,
    alpha_eps: f64,
    alpha: Vec<f64>,
    errors: Vec<f64>,
    bias: f64,
    dual: f64,
    cache: KernelCache<'a>,
    iterations: usize,
    max_iter: usize,
    observer: F,
}

enum StepOutcome {
    Rejected,
    Applied { delta: f64 },
}

impl<'a, F: FnMut(&SmoStep<'_>)> Solver<'a, F> {
    fn is_free(&self, i: usize) -> bool {
        self.alpha[i] > 0.0 && self.alpha[i] < self.c
    }

    fn exhausted(&self) -> bool {
        self.iterations >= self.max_iter
    }

    /// Recomputes every error `E_i = f(x_i) - y_i` from the current α.
    fn refresh_errors(&mut self) {
        let l = self.y.len();
        let mut f = vec![self.bias; l];
        for j in 0..l {
            if self.alpha[j] == 0.0 {
                continue;
            }
            let coef = self.alpha[j] * self.y[j];
            let row = self.cache.row(j);
            for (fi, k) in f.iter_mut().zip(row.iter()) {
                *fi += coef * k;
            }
        }
        for (e, (fi, yi)) in self.errors.iter_mut().zip(f.iter().zip(self.y)) {
            *e = fi - yi;
        }
    }

    fn take_step(&mut self, i1: usize, i2: usize) -> StepOutcome {
        if i1 == i2 {
            return StepOutcome::Rejected;
        }
        let c = self.c;
        let (alph1, alph2) = (self.alpha[i1], self.alpha[i2]);
        let (y1, y2) = (self.y[i1], self.y[i2]);
        let (e1, e2) = (self.errors[i1], self.errors[i2]);
        let s = y1 * y2;
        let (lo, hi) = if y1 != y2 {
            ((alph2 - alph1).max(0.0), (c + alph2 - alph1).min(c))
        } else {
            ((alph1 + alph2 - c).max(0.0), (alph1 + alph2).min(c))
        };
        if lo >= hi {
            return StepOutcome::Rejected;
        }
        let row1 = self.cache.row(i1);
        let k11 = self.cache.diag[i1];
        let k22 = self.cache.diag[i2];
        let k12 = row1[i2];
        let eta = k11 + k22 - 2.0 * k12;
        // Change of the minimized objective Ψ = -W when α2 moves by t and
        // α1 by -s·t along the equality constraint.
        let psi = |t: f64| t * y2 * (e2 - e1) + 0.5 * t * t * eta;

        let mut a2 = if eta > 0.0 {
            (alph2 + y2 * (e1 - e2) / eta).clamp(lo, hi)
        } else {
            let (psi_lo, psi_hi) = (psi(lo - alph2), psi(hi - alph2));
            let margin = self.alpha_eps * (1.0 + psi_lo.abs().max(psi_hi.abs()));
            if psi_lo < psi_hi - margin {
                lo
            } else if psi_lo > psi_hi + margin {
                hi
            } else {
                alph2
            }
        };
        if a2 == alph2 {
            return StepOutcome::Rejected;
        }
        let mut a1 = alph1 + s * (alph2 - a2);
        if a1 < 0.0 {
            a2 += s * a1;
            a1 = 0.0;
        } else if a1 > c {
            a2 += s * (a1 - c);
            a1 = c;
        }
        a2 = a2.clamp(0.0, c);
        let t = a2 - alph2;
        if t == 0.0 {
            return StepOutcome::Rejected;
        }

        let d1 = y1 * (a1 - alph1);
        let d2 = y2 * t;
        let b1 = self.bias - e1 - d1 * k11 - d2 * k12;
        let b2 = self.bias - e2 - d1 * k12 - d2 * k22;
        let free1 = a1 > 0.0 && a1 < c;
        let free2 = a2 > 0.0 && a2 < c;
        let new_bias = match (free1, free2) {
            (true, false) => b1,
            (false, true) => b2,
            _ => 0.5 * (b1 + b2),
        };
        let db = new_bias - self.bias;

        let row2 = self.cache.row(i2);
        for (k, e) in self.errors.iter_mut().enumerate() {
            *e += d1 * row1[k] + d2 * row2[k] + db;
        }
        self.alpha[i1] = a1;
        self.alpha[i2] = a2;
        self.bias = new_bias;
        self.dual -= psi(t);
        self.iterations += 1;

        debug_assert!(self.alpha.iter().all(|&a| (0.0..=c + 1e-12).contains(&a)));
        debug_assert!({
            let sum: f64 = self.alpha.iter().zip(self.y).map(|(a, y)| a * y).sum();
            let scale: f64 = self.alpha.iter().sum::<f64>().max(1.0);
            sum.abs() <= 1e-9 * scale
        });

        (self.observer)(&SmoStep {
            iteration: self.iterations,
            alphas: &self.alpha,
            bias: self.bias,
            dual_objective: self.dual,
        });
        StepOutcome::Applied { delta: t.abs() }
    }

    /// Examines one example; returns `Some(delta)` if a pair update was
    /// applied.
    fn examine(&mut self, i2: usize) -> Option<f64> {
        let l = self.y.len();
        let r2 = self.errors[i2] * self.y[i2];
        let a2 = self.alpha[i2];
        if !((r2 < -self.tol && a2 < self.c) || (r2 > self.tol && a2 > 0.0)) {
            return None;
        }
        let free: Vec<usize> = (0..l).filter(|&i| self.is_free(i)).collect();
        if free.len() > 1 {
            let e2 = self.errors[i2];
            let best = free
                .iter()
                .copied()
                .filter(|&i| i != i2)
                .max_by(|&a, &b| {
                    (self.errors[a] - e2)
                        .abs()
                        .total_cmp(&(self.errors[b] - e2).abs())
                        .then(b.cmp(&a))
                });
            if let Some(i1) = best {
                if let StepOutcome::Applied { delta } = self.take_step(i1, i2) {
                    return Some(delta);
                }
            }
        }
        // Deterministic rotating start in place of Platt's random one.
        let start = (i2 + 1 + self.iterations) % l;
        if !free.is_empty() {
            let offset = free.partition_point(|&i| i < start);
            for k in 0..free.len() {
                let i1 = free[(offset + k) % free.len()];
                if let StepOutcome::Applied { delta } = self.take_step(i1, i2) {
                    return Some(delta);
                }
            }
        }
        for k in 0..l {
            let i1 = (start + k) % l;
            if self.is_free(i1) {
                continue;
            }
            if let StepOutcome::Applied { delta } = self.take_step(i1, i2) {
                return Some(delta);
            }
        }
        None
    }

    fn run(&mut self, max_passes: usize) -> (bool, usize) {
        let l = self.y.len();
        let mut examine_all = true;
        let mut quiet_sweeps = 0;
        let mut sweeps = 0;
        loop {
            if self.exhausted() {
                return (false, sweeps);
            }
            let mut progress = 0usize;
            let mut applied = 0usize;
            if examine_all {
                self.refresh_errors();
            }
            for i in 0..l {
                if !examine_all && !self.is_free(i) {
                    continue;
                }
                if let Some(delta) = self.examine(i) {
                    applied += 1;
                    if delta > self.alpha_eps {
                        progress += 1;
                    }
                }
                if self.exhausted() {
                    return (false, sweeps + 1);
                }
            }
            sweeps += 1;
            if examine_all {
                if applied == 0 {
                    return (true, sweeps);
                }
                if progress == 0 {
                    quiet_sweeps += 1;
                    if quiet_sweeps >= max_passes {
                        return (true, sweeps);
                    }
                    continue;
                }
                quiet_sweeps = 0;
                examine_all = false;
            } else if progress == 0 {
                examine_all = true;
            }
        }
    }
}

/// Trains with an observer called after every applied pair update.
pub fn smo_train_observed<F>(
    problem: &BinaryProblem,
    params: &SvmParams,
    observer: F,
) -> Result<BinaryModel>
where
    F: FnMut(&SmoStep<'_>),
{
    params.validate()?;
    let l = problem.len();
    let mut solver = Solver {
        y: &problem.y,
        c: params.c,
        tol: params.kkt_tol,
        alpha_eps: params.alpha_eps,
        alpha: vec![0.0; l],
        errors: problem.y.iter().map(|y| -y).collect(),
        bias: 0.0,
        dual: 0.0,
        cache: KernelCache::new(&problem.x, params.kernel, params.cache),
        iterations: 0,
        max_iter: params.max_iter.unwrap_or(100 * l),
        observer,
    };
    let (converged, sweeps) = solver.run(params.max_passes);

    let keep: Vec<usize> = (0..l).filter(|&i| solver.alpha[i] > 0.0).collect();
    Ok(BinaryModel {
        support_vectors: problem.x.select_rows(&keep),
        alphas: keep.iter().map(|&i| solver.alpha[i]).collect(),
        labels: keep.iter().map(|&i| problem.y[i]).collect(),
        bias: solver.bias,
        kernel: params.kernel,
        stats: TrainStats {
            converged,
            iterations: solver.iterations,
            sweeps,
        },
    })
}

/// Trains a binary soft-margin SVM. A model that hit `max_iter` is still
/// returned, with `stats.converged == false`.
pub fn smo_train(problem: &BinaryProblem, params: &SvmParams) -> Result<BinaryModel> {
    smo_train_observed(problem, params, |_| {})
}
