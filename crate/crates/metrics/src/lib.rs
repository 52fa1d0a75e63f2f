//! Distribution-match and causal-estimate metrics.
//!
//! Three quantities drive evaluation and model selection: squared maximum
//! mean discrepancy between two samples, absolute error of an average
//! treatment effect, and standardized per-column counterfactual error. All
//! are pure functions.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("inputs must have equal column counts, got {0} and {1}")]
    ColumnMismatch(usize, usize),
    #[error("each sample needs at least {0} rows")]
    TooFewRows(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("standard deviations must be positive")]
    NonPositiveSd,
}

/// Kernel bandwidth choice for [`mmd`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// Median pairwise Euclidean distance of the pooled sample.
    Median,
    Fixed(f64),
}

/// Estimator variant. The biased V-statistic includes the diagonal terms and
/// is exactly zero on identical inputs; the unbiased U-statistic drops them
/// and can go negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    VStatistic,
    UStatistic,
}

/// Squared maximum mean discrepancy with a Gaussian kernel
/// k(a, b) = exp(-|a-b|^2 / (2 sigma^2)), V-statistic estimator.
pub fn mmd(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    bandwidth: Bandwidth,
) -> Result<f64, MetricError> {
    mmd_est(x, y, bandwidth, Estimator::VStatistic)
}

/// [`mmd`] with an explicit estimator choice.
pub fn mmd_est(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    bandwidth: Bandwidth,
    estimator: Estimator,
) -> Result<f64, MetricError> {
    if x.ncols() != y.ncols() {
        return Err(MetricError::ColumnMismatch(x.ncols(), y.ncols()));
    }
    let (n, m) = (x.nrows(), y.nrows());
    if n < 2 || m < 2 {
        return Err(MetricError::TooFewRows(2));
    }
    let sigma = match bandwidth {
        Bandwidth::Fixed(s) => s,
        Bandwidth::Median => median_pairwise_distance(x, y),
    };
    let gamma = 1.0 / (2.0 * sigma * sigma);
    let kernel = |a: ArrayView1<f64>, b: ArrayView1<f64>| {
        let mut d2 = 0.0;
        for (u, v) in a.iter().zip(b.iter()) {
            let d = u - v;
            d2 += d * d;
        }
        (-gamma * d2).exp()
    };

    let mut kxx = 0.0;
    let mut kyy = 0.0;
    let mut kxy = 0.0;
    for i in 0..n {
        for j in 0..n {
            if estimator == Estimator::UStatistic && i == j {
                continue;
            }
            kxx += kernel(x.row(i), x.row(j));
        }
    }
    for i in 0..m {
        for j in 0..m {
            if estimator == Estimator::UStatistic && i == j {
                continue;
            }
            kyy += kernel(y.row(i), y.row(j));
        }
    }
    for i in 0..n {
        for j in 0..m {
            kxy += kernel(x.row(i), y.row(j));
        }
    }
    let (nf, mf) = (n as f64, m as f64);
    let value = match estimator {
        Estimator::VStatistic => kxx / (nf * nf) + kyy / (mf * mf) - 2.0 * kxy / (nf * mf),
        Estimator::UStatistic => {
            kxx / (nf * (nf - 1.0)) + kyy / (mf * (mf - 1.0)) - 2.0 * kxy / (nf * mf)
        }
    };
    Ok(value)
}

/// Median pairwise Euclidean distance over the pooled rows of both samples.
fn median_pairwise_distance(x: ArrayView2<f64>, y: ArrayView2<f64>) -> f64 {
    let mut pooled: Vec<ArrayView1<f64>> = x.rows().into_iter().collect();
    pooled.extend(y.rows());
    let n = pooled.len();
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let mut d2 = 0.0;
            for (u, v) in pooled[i].iter().zip(pooled[j].iter()) {
                let d = u - v;
                d2 += d * d;
            }
            dists.push(d2.sqrt());
        }
    }
    dists.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let mid = dists.len() / 2;
    let median = if dists.len() % 2 == 1 {
        dists[mid]
    } else {
        0.5 * (dists[mid - 1] + dists[mid])
    };
    // All-identical pooled rows would give bandwidth zero; fall back to one.
    if median > 0.0 {
        median
    } else {
        1.0
    }
}

/// Absolute error between an estimated and a true average treatment effect,
/// both in standardized outcome units.
pub fn ate_error(estimate: f64, truth: f64) -> f64 {
    (estimate - truth).abs()
}

/// Mean absolute counterfactual error per column, standardized: for each
/// column, mean over rows of |estimate - truth| / sd.
pub fn cf_error(
    estimates: ArrayView2<f64>,
    truths: ArrayView2<f64>,
    sd: &[f64],
) -> Result<Vec<f64>, MetricError> {
    if estimates.shape() != truths.shape() {
        return Err(MetricError::ShapeMismatch(format!(
            "{:?} vs {:?}",
            estimates.shape(),
            truths.shape()
        )));
    }
    if sd.len() != estimates.ncols() {
        return Err(MetricError::ShapeMismatch(format!(
            "{} sd values for {} columns",
            sd.len(),
            estimates.ncols()
        )));
    }
    if sd.iter().any(|&s| s <= 0.0) {
        return Err(MetricError::NonPositiveSd);
    }
    let n = estimates.nrows() as f64;
    let mut out = vec![0.0; estimates.ncols()];
    for (est_row, tru_row) in estimates.rows().into_iter().zip(truths.rows()) {
        for (j, (e, t)) in est_row.iter().zip(tru_row.iter()).enumerate() {
            out[j] += (e - t).abs() / sd[j];
        }
    }
    for v in &mut out {
        *v /= n;
    }
    Ok(out)
}

/// Summary of an evaluation run, serialized to JSON by the CLI.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub mmd_obs: f64,
    /// Keyed by intervention, e.g. "do(t=1.25)".
    pub mmd_int: BTreeMap<String, f64>,
    /// Keyed by "t:alpha1->alpha2:y".
    pub ate_abs_error: BTreeMap<String, f64>,
    /// Keyed by "t:alpha:y"; values are means over rows.
    pub cf_abs_error: BTreeMap<String, f64>,
}

impl MetricReport {
    /// All stored values must be non-negative and finite.
    pub fn validate(&self) -> Result<(), MetricError> {
        let ok = |v: &f64| v.is_finite() && *v >= -1e-12;
        let all = std::iter::once(&self.mmd_obs)
            .chain(self.mmd_int.values())
            .chain(self.ate_abs_error.values())
            .chain(self.cf_abs_error.values());
        for v in all {
            if !ok(v) {
                return Err(MetricError::ShapeMismatch(format!(
                    "metric value {v} is negative or non-finite"
                )));
            }
        }
        Ok(())
    }
}

/// Column means and standard deviations (population convention).
pub fn column_moments(x: ArrayView2<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = x.nrows().max(1) as f64;
    let mut means = vec![0.0; x.ncols()];
    for row in x.rows() {
        for (j, v) in row.iter().enumerate() {
            means[j] += v;
        }
    }
    for m in &mut means {
        *m /= n;
    }
    let mut sds = vec![0.0; x.ncols()];
    for row in x.rows() {
        for (j, v) in row.iter().enumerate() {
            let d = v - means[j];
            sds[j] += d * d;
        }
    }
    for s in &mut sds {
        *s = (*s / n).sqrt();
    }
    (means, sds)
}

/// Convenience wrapper for owned matrices.
pub fn mmd_owned(
    x: &Array2<f64>,
    y: &Array2<f64>,
    bandwidth: Bandwidth,
) -> Result<f64, MetricError> {
    mmd(x.view(), y.view(), bandwidth)
}
