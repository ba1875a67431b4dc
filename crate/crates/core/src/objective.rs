//! Physics-informed loss and the evaluation metrics.
//!
//! Batches are flat row-major slices: predictions and labels are
//! `(batch, numz·numr)`, measurements are `(batch, n)`. Reductions run
//! sequentially in `f64`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ContributionMatrix;
use crate::nn::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Strength of the back-projection term; 0 disables it.
    pub c1: f64,
    /// L2 coefficient on all trainable parameters.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Treat `w2 = c1·loss1/loss2` as a constant when differentiating.
    #[serde(default = "default_detach")]
    pub detach_weight: bool,
}

fn default_lambda() -> f64 {
    1e-4
}

fn default_detach() -> bool {
    true
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            c1: 0.0,
            lambda: default_lambda(),
            detach_weight: true,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c1 >= 0.0 && self.c1.is_finite()) || !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "c1 = {} and lambda = {} must be finite and non-negative",
                self.c1, self.lambda
            )));
        }
        Ok(())
    }
}

/// A scalar loss and its gradient with respect to the predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad<T> {
    pub value: f64,
    pub grad: Vec<T>,
}

fn batch_of(len: usize, width: usize, what: &str) -> Result<usize> {
    if width == 0 || !len.is_multiple_of(width) || len == 0 {
        return Err(Error::shape(format!("{what}: multiple of {width}"), len));
    }
    Ok(len / width)
}

/// Mean squared error over pixels, averaged over the batch.
pub fn loss1<T: Scalar>(pred: &[T], label: &[T]) -> Result<LossGrad<T>> {
    if pred.len() != label.len() || pred.is_empty() {
        return Err(Error::shape(label.len(), pred.len()));
    }
    let count = pred.len() as f64;
    let mut sum = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (p, y) in pred.iter().zip(label) {
        let d = p.to_f64() - y.to_f64();
        sum += d * d;
        grad.push(T::from_f64(2.0 * d / count));
    }
    Ok(LossGrad {
        value: sum / count,
        grad,
    })
}

/// Back-projection residuals `C·pred_b − x_b` for every sample.
pub fn bp_residuals<T: Scalar>(pred: &[T], x: &[T], cmatrix: &ContributionMatrix) -> Result<Vec<f64>> {
    let cells = cmatrix.cells();
    let n = cmatrix.n();
    let batch = batch_of(pred.len(), cells, "prediction")?;
    if x.len() != batch * n {
        return Err(Error::shape(batch * n, x.len()));
    }
    let mut residuals = Vec::with_capacity(batch * n);
    for (p, xb) in pred.chunks_exact(cells).zip(x.chunks_exact(n)) {
        for (row, xi) in cmatrix.rows().zip(xb) {
            let bp: f64 = row.iter().zip(p).map(|(w, v)| w * v.to_f64()).sum();
            residuals.push(bp - xi.to_f64());
        }
    }
    Ok(residuals)
}

/// Mean squared back-projection residual over chords, averaged over the batch.
/// The gradient is `2/(batch·n) · Cᵀ(C·pred − x)` per sample.
pub fn loss2<T: Scalar>(pred: &[T], x: &[T], cmatrix: &ContributionMatrix) -> Result<LossGrad<T>> {
    let residuals = bp_residuals(pred, x, cmatrix)?;
    let count = residuals.len() as f64;
    let value = residuals.iter().map(|r| r * r).sum::<f64>() / count;
    let cells = cmatrix.cells();
    let mut grad = Vec::with_capacity(pred.len());
    for r in residuals.chunks_exact(cmatrix.n()) {
        let scaled: Vec<f64> = r.iter().map(|v| 2.0 * v / count).collect();
        let g = cmatrix.back_project(&scaled)?;
        debug_assert_eq!(g.len(), cells);
        grad.extend(g.into_iter().map(T::from_f64));
    }
    Ok(LossGrad { value, grad })
}

/// Value and gradient of the composite loss `loss1 + w2·loss2 + λ‖w‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct PilfTerms<T> {
    pub loss1: f64,
    pub loss2: f64,
    pub w2: f64,
    pub l2: f64,
    pub total: f64,
    /// Gradient with respect to the predictions (the L2 part is applied to
    /// the parameters separately, see [`l2_gradient`]).
    pub grad: Vec<T>,
    /// Set when `loss2` vanished while `c1 > 0`; `w2` was forced to 0.
    pub degenerate: bool,
}

impl<T> PilfTerms<T> {
    /// `w2·loss2`, which equals `c1·loss1` by construction.
    pub fn weighted_loss2(&self) -> f64 {
        self.w2 * self.loss2
    }
}

/// Physics-informed loss. `sum_squares` is `Σ w²` over the trainable parameters.
pub fn pilf<T: Scalar>(
    pred: &[T],
    label: &[T],
    x: &[T],
    cmatrix: &ContributionMatrix,
    sum_squares: f64,
    cfg: &LossConfig,
) -> Result<PilfTerms<T>> {
    cfg.validate()?;
    let l1 = loss1(pred, label)?;
    let l2_reg = cfg.lambda * sum_squares;
    if cfg.c1 == 0.0 {
        let loss2_value = loss2(pred, x, cmatrix)?.value;
        return Ok(PilfTerms {
            loss1: l1.value,
            loss2: loss2_value,
            w2: 0.0,
            l2: l2_reg,
            total: l1.value + l2_reg,
            grad: l1.grad,
            degenerate: false,
        });
    }
    let l2 = loss2(pred, x, cmatrix)?;
    if l2.value == 0.0 {
        log::warn!("loss2 vanished with c1 = {}; w2 set to 0", cfg.c1);
        return Ok(PilfTerms {
            loss1: l1.value,
            loss2: 0.0,
            w2: 0.0,
            l2: l2_reg,
            total: l1.value + l2_reg,
            grad: l1.grad,
            degenerate: true,
        });
    }
    let w2 = cfg.c1 * l1.value / l2.value;
    let grad = if cfg.detach_weight {
        l1.grad
            .iter()
            .zip(&l2.grad)
            .map(|(a, b)| T::from_f64(a.to_f64() + w2 * b.to_f64()))
            .collect()
    } else {
        // w2·loss2 ≡ c1·loss1 when the ratio is differentiated through.
        l1.grad
            .iter()
            .map(|a| T::from_f64((1.0 + cfg.c1) * a.to_f64()))
            .collect()
    };
    Ok(PilfTerms {
        loss1: l1.value,
        loss2: l2.value,
        w2,
        l2: l2_reg,
        total: l1.value + w2 * l2.value + l2_reg,
        grad,
        degenerate: false,
    })
}

/// Gradient of `λ‖w‖²` with respect to one parameter value.
pub fn l2_gradient(lambda: f64, w: f64) -> f64 {
    2.0 * lambda * w
}

fn max_abs<T: Scalar>(v: &[T]) -> f64 {
    v.iter().map(|a| a.to_f64().abs()).fold(0.0, f64::max)
}

/// Per-pixel `|pred − label| / max(label)` for one sample.
pub fn eps1_map<T: Scalar>(pred: &[T], label: &[T]) -> Result<Vec<f64>> {
    if pred.len() != label.len() {
        return Err(Error::shape(label.len(), pred.len()));
    }
    let y_max = label.iter().map(|v| v.to_f64()).fold(f64::NEG_INFINITY, f64::max);
    if !(y_max > 0.0) {
        return Err(Error::DegenerateSample { index: 0 });
    }
    Ok(pred
        .iter()
        .zip(label)
        .map(|(p, y)| (p.to_f64() - y.to_f64()).abs() / y_max)
        .collect())
}

/// Per-chord `|x_i − bp_i| / max|x|` for one sample.
pub fn relative_bp_error<T: Scalar>(x: &[T], bp: &[f64]) -> Result<Vec<f64>> {
    if x.len() != bp.len() {
        return Err(Error::shape(x.len(), bp.len()));
    }
    let x_max = max_abs(x);
    if !(x_max > 0.0) {
        return Err(Error::DegenerateSample { index: 0 });
    }
    Ok(x.iter()
        .zip(bp)
        .map(|(xi, b)| (xi.to_f64() - b).abs() / x_max)
        .collect())
}

/// Per-chord `|x_i − C^i·pred| / max|x|` for one sample.
pub fn eps2_vector<T: Scalar>(pred: &[T], x: &[T], cmatrix: &ContributionMatrix) -> Result<Vec<f64>> {
    if pred.len() != cmatrix.cells() {
        return Err(Error::shape(cmatrix.cells(), pred.len()));
    }
    if x.len() != cmatrix.n() {
        return Err(Error::shape(cmatrix.n(), x.len()));
    }
    let bp: Vec<f64> = cmatrix
        .rows()
        .map(|row| row.iter().zip(pred).map(|(w, v)| w * v.to_f64()).sum())
        .collect();
    relative_bp_error(x, &bp)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// A dataset-level error with its per-sample means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanError {
    pub value: f64,
    pub per_sample: Vec<f64>,
}

fn reindex(err: Error, index: usize) -> Error {
    match err {
        Error::DegenerateSample { .. } => Error::DegenerateSample { index },
        other => other,
    }
}

/// Mean over samples of the mean relative prediction error.
pub fn metric_e1<T: Scalar>(preds: &[T], labels: &[T], cells: usize) -> Result<MeanError> {
    if preds.len() != labels.len() {
        return Err(Error::shape(labels.len(), preds.len()));
    }
    batch_of(preds.len(), cells, "prediction")?;
    let per_sample = preds
        .chunks_exact(cells)
        .zip(labels.chunks_exact(cells))
        .enumerate()
        .map(|(j, (p, y))| eps1_map(p, y).map(|m| mean(&m)).map_err(|e| reindex(e, j)))
        .collect::<Result<Vec<_>>>()?;
    Ok(MeanError {
        value: mean(&per_sample),
        per_sample,
    })
}

/// Mean over samples of the mean relative back-projection error of the
/// predictions against the measured inputs.
pub fn metric_e2<T: Scalar>(preds: &[T], inputs: &[T], cmatrix: &ContributionMatrix) -> Result<MeanError> {
    let cells = cmatrix.cells();
    let n = cmatrix.n();
    let batch = batch_of(preds.len(), cells, "prediction")?;
    if inputs.len() != batch * n {
        return Err(Error::shape(batch * n, inputs.len()));
    }
    let per_sample = preds
        .chunks_exact(cells)
        .zip(inputs.chunks_exact(n))
        .enumerate()
        .map(|(j, (p, x))| eps2_vector(p, x, cmatrix).map(|v| mean(&v)).map_err(|e| reindex(e, j)))
        .collect::<Result<Vec<_>>>()?;
    Ok(MeanError {
        value: mean(&per_sample),
        per_sample,
    })
}

/// E1/E2 summary plus the unreduced maps of requested samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(rename = "E1")]
    pub e1: f64,
    #[serde(rename = "E2")]
    pub e2: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_sample: Vec<SampleErrors>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleErrors {
    pub index: usize,
    pub eps1: Vec<f64>,
    pub eps2: Vec<f64>,
}
