//! Polynomial, RBF and sigmoid kernels, Gram matrices, and a positive
//! semi-definiteness probe.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, squared_distance, FeatureMatrix, Matrix};

/// Kernel choice with its parameters. `sigma` is the scale parameter of
/// every variant (slope, inverse width, or input scaling).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    /// `(sigma * x·y + r)^d`
    Polynomial { sigma: f64, r: f64, d: u32 },
    /// `exp(-sigma * |x - y|²)`
    Rbf { sigma: f64 },
    /// `tanh(sigma * x·y + r)`
    Sigmoid { sigma: f64, r: f64 },
    /// `x·y`
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Polynomial,
    Rbf,
    Sigmoid,
    Linear,
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelKind::Polynomial => "polynomial",
            KernelKind::Rbf => "rbf",
            KernelKind::Sigmoid => "sigmoid",
            KernelKind::Linear => "linear",
        })
    }
}

impl std::str::FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "polynomial" | "poly" => Ok(KernelKind::Polynomial),
            "rbf" | "gaussian" => Ok(KernelKind::Rbf),
            "sigmoid" | "tanh" => Ok(KernelKind::Sigmoid),
            "linear" => Ok(KernelKind::Linear),
            other => Err(Error::invalid(format!("unknown kernel `{other}`"))),
        }
    }
}

impl KernelSpec {
    /// Builds a kernel of the given kind; `r` and `d` are ignored where
    /// the kind has no such parameter.
    pub fn new(kind: KernelKind, sigma: f64, r: f64, d: u32) -> Self {
        match kind {
            KernelKind::Polynomial => KernelSpec::Polynomial { sigma, r, d },
            KernelKind::Rbf => KernelSpec::Rbf { sigma },
            KernelKind::Sigmoid => KernelSpec::Sigmoid { sigma, r },
            KernelKind::Linear => KernelSpec::Linear,
        }
    }

    pub fn kind(&self) -> KernelKind {
        match self {
            KernelSpec::Polynomial { .. } => KernelKind::Polynomial,
            KernelSpec::Rbf { .. } => KernelKind::Rbf,
            KernelSpec::Sigmoid { .. } => KernelKind::Sigmoid,
            KernelSpec::Linear => KernelKind::Linear,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Rbf { sigma } if !(sigma > 0.0) || !sigma.is_finite() => {
                Err(Error::invalid(format!("RBF sigma {sigma} must be positive")))
            }
            KernelSpec::Polynomial { sigma, .. } if !(sigma > 0.0) || !sigma.is_finite() => Err(
                Error::invalid(format!("polynomial sigma {sigma} must be positive")),
            ),
            KernelSpec::Polynomial { d: 0, .. } => {
                Err(Error::invalid("polynomial degree must be at least 1"))
            }
            KernelSpec::Polynomial { r, .. } | KernelSpec::Sigmoid { r, .. } if !r.is_finite() => {
                Err(Error::invalid("kernel offset must be finite"))
            }
            KernelSpec::Sigmoid { sigma, .. } if !sigma.is_finite() => {
                Err(Error::invalid("sigmoid sigma must be finite"))
            }
            _ => Ok(()),
        }
    }

    /// Kernel value without dimension checks.
    #[inline]
    pub fn compute(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            KernelSpec::Polynomial { sigma, r, d } => (sigma * dot(x, y) + r).powi(d as i32),
            KernelSpec::Rbf { sigma } => (-sigma * squared_distance(x, y)).exp(),
            KernelSpec::Sigmoid { sigma, r } => (sigma * dot(x, y) + r).tanh(),
            KernelSpec::Linear => dot(x, y),
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Polynomial { sigma, r, d } => {
                write!(f, "polynomial(sigma={sigma}, r={r}, d={d})")
            }
            KernelSpec::Rbf { sigma } => write!(f, "rbf(sigma={sigma})"),
            KernelSpec::Sigmoid { sigma, r } => write!(f, "sigmoid(sigma={sigma}, r={r})"),
            KernelSpec::Linear => f.write_str("linear"),
        }
    }
}

pub fn kernel_eval(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "kernel operands have dimensions {} and {}",
            x.len(),
            y.len()
        )));
    }
    Ok(spec.compute(x, y))
}

/// `G[i][j] = K(X_i, Y_j)`.
pub fn gram_matrix(spec: &KernelSpec, x: &FeatureMatrix, y: &FeatureMatrix) -> Result<Matrix> {
    if x.cols() != y.cols() {
        return Err(Error::invalid(format!(
            "Gram operands have dimensions {} and {}",
            x.cols(),
            y.cols()
        )));
    }
    let mut g = Matrix::zeros(x.rows(), y.rows());
    for i in 0..x.rows() {
        let xi = x.row(i);
        for (j, v) in g.row_mut(i).iter_mut().enumerate() {
            *v = spec.compute(xi, y.row(j));
        }
    }
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdReport {
    pub is_psd: bool,
    pub min_eigenvalue: f64,
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn symmetric_eigenvalues(a: &Matrix) -> Result<Vec<f64>> {
    let n = a.rows();
    if n != a.cols() {
        return Err(Error::invalid("eigenvalues need a square matrix"));
    }
    let mut m = a.clone();
    let scale: f64 = m.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m.get(i, j).powi(2))
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let theta = (m.get(q, q) - m.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
            }
        }
    }
    Ok((0..n).map(|i| m.get(i, i)).collect())
}

/// PSD iff the smallest eigenvalue is at least `-tol * max(1, trace)`.
pub fn psd_check(gram: &Matrix, tol: f64) -> Result<PsdReport> {
    let n = gram.rows();
    if n != gram.cols() {
        return Err(Error::invalid("PSD check needs a square matrix"));
    }
    if n == 0 {
        return Err(Error::invalid("PSD check needs a non-empty matrix"));
    }
    for i in 0..n {
        for j in i + 1..n {
            if (gram.get(i, j) - gram.get(j, i)).abs() > 1e-9 {
                return Err(Error::invalid(format!("matrix is not symmetric at ({i}, {j})")));
            }
        }
    }
    let min_eigenvalue = symmetric_eigenvalues(gram)?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let trace: f64 = (0..n).map(|i| gram.get(i, i)).sum();
    Ok(PsdReport {
        is_psd: min_eigenvalue >= -tol * trace.max(1.0),
        min_eigenvalue,
    })
}
