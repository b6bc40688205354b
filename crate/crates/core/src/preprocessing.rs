use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{FeatureMatrix, Matrix};

/// Per-attribute minima and maxima learned from training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

impl ScalerParams {
    pub fn dimension(&self) -> usize {
        self.mins.len()
    }

    /// Maps one vector into `[0, 1]` per attribute, clamping values outside
    /// the fitted range. Constant attributes map to 0.
    pub fn scale_row(&self, row: &[f64], out: &mut [f64]) {
        for (((o, x), lo), hi) in out.iter_mut().zip(row).zip(&self.mins).zip(&self.maxs) {
            let range = hi - lo;
            *o = if range > 0.0 {
                ((x - lo) / range).clamp(0.0, 1.0)
            } else {
                0.0
            };
        }
    }

    pub fn apply(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        apply_scaler(self, x)
    }
}

pub fn fit_scaler(train: &FeatureMatrix) -> Result<ScalerParams> {
    if train.is_empty() || train.cols() == 0 {
        return Err(Error::invalid("cannot fit a scaler on an empty matrix"));
    }
    let mut mins = train.row(0).to_vec();
    let mut maxs = mins.clone();
    for row in train.iter_rows().skip(1) {
        for ((lo, hi), v) in mins.iter_mut().zip(maxs.iter_mut()).zip(row) {
            *lo = lo.min(*v);
            *hi = hi.max(*v);
        }
    }
    Ok(ScalerParams { mins, maxs })
}

pub fn apply_scaler(params: &ScalerParams, x: &FeatureMatrix) -> Result<FeatureMatrix> {
    if x.cols() != params.dimension() && !x.is_empty() {
        return Err(Error::invalid(format!(
            "scaler fit on {} attributes applied to {}",
            params.dimension(),
            x.cols()
        )));
    }
    let mut out = Matrix::zeros(x.rows(), params.dimension());
    for i in 0..x.rows() {
        params.scale_row(x.row(i), out.row_mut(i));
    }
    Ok(out)
}
