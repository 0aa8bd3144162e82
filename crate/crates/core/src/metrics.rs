//! Phase error metrics and run reports.

use std::collections::BTreeMap;

use ndarray::Zip;
use serde::Serialize;

use crate::error::{ensure_same_shape, Error, Result};
use crate::grid::{masked_mean, Mask, PhaseMap};
use crate::scalar::Scalar;
use crate::zernike::{PupilGrid, ZernikeFitter, ZernikeWeights};

/// RMSE over `mask` after removing each map's masked mean, radians.
pub fn rmse<T: Scalar>(a: &PhaseMap<T>, b: &PhaseMap<T>, mask: &Mask) -> Result<f64> {
    ensure_same_shape(a.shape(), b.shape())?;
    ensure_same_shape(a.shape(), mask.dim())?;
    let ma = masked_mean(&a.values, mask)
        .ok_or(Error::EmptyMask)?
        .to_f64_lossy();
    let mb = masked_mean(&b.values, mask)
        .ok_or(Error::EmptyMask)?
        .to_f64_lossy();
    let mut sum = 0.0;
    let mut count = 0usize;
    Zip::from(&a.values)
        .and(&b.values)
        .and(mask)
        .for_each(|x, y, m| {
            if *m {
                let d = (x.to_f64_lossy() - ma) - (y.to_f64_lossy() - mb);
                sum += d * d;
                count += 1;
            }
        });
    Ok((sum / count as f64).sqrt())
}

/// Piston-removed RMSE over every pixel.
pub fn full_frame_rmse<T: Scalar>(a: &PhaseMap<T>, b: &PhaseMap<T>) -> Result<f64> {
    rmse(a, b, &Mask::from_elem(a.shape(), true))
}

/// `|w_true - w_fit|` for OSA indices `1..=fitter.max_index()`.
pub fn weight_errors_with<T: Scalar>(
    true_weights: &ZernikeWeights<T>,
    retrieved: &PhaseMap<T>,
    fitter: &ZernikeFitter,
) -> Result<BTreeMap<usize, f64>> {
    let fitted = fitter.fit(retrieved)?;
    Ok((1..=fitter.max_index())
        .map(|i| {
            let e = (true_weights.get(i) - fitted.get(i)).abs().to_f64_lossy();
            (i, e)
        })
        .collect())
}

/// Per-index weight reconstruction errors, piston excluded.
pub fn weight_errors<T: Scalar>(
    true_weights: &ZernikeWeights<T>,
    retrieved: &PhaseMap<T>,
    grid: &PupilGrid<T>,
    max_index: usize,
) -> Result<BTreeMap<usize, f64>> {
    weight_errors_with(
        true_weights,
        retrieved,
        &ZernikeFitter::new(grid, max_index)?,
    )
}

/// Evaluation of one retrieval run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    /// Pupil, piston-removed RMSE, radians.
    pub rmse: f64,
    /// Piston-removed RMSE over the full frame, radians.
    pub rmse_full_frame: f64,
    pub per_index_weight_error: BTreeMap<usize, f64>,
    /// Regularization constant used by the solve.
    pub regularization: f64,
    /// Parameters of the run, as `key = value` strings.
    pub config_echo: BTreeMap<String, String>,
}
