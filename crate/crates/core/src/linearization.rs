//! First-difference linearization of the ratio metric.
//!
//! Differencing Z = Ŷ₁/Ŷ₂ along time and freezing the partial derivatives at
//! constants C₁, C₂ turns period-to-period metric changes into a linear
//! combination of the underlying changes. Cumulating the approximation
//! reconstructs the metric; swapping the summation order yields a per-element
//! linear form L(i,t) = C₁·Y₁(i,t) − C₂·Y₂(i,t) that can be fitted directly
//! at the element level, giving an independent route to the same per-feature
//! series as the segment pipeline.

use serde::{Deserialize, Serialize};

use crate::panel::{AggOp, ElementPanel, MetricSpec};
use crate::pipeline::fit::{fit_points, FitOptions, FitPoints};
use crate::pipeline::segment::{segment_values, BinScheme, UNSEGMENTED};
use crate::pipeline::transform::FittedTransform;
use crate::pipeline::JointModel;
use crate::scalar::Real;
use crate::stats::weighted_r2;
use crate::{Error, Link, Result};

/// Frozen sensitivities of the ratio and the alignment intercept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearizationConstants<F> {
    /// Sensitivity to the numerator level (units of 1/denominator).
    pub c1: F,
    /// Sensitivity to the denominator level (units of numerator/denominator²).
    pub c2: F,
    /// Intercept aligning Σᵢ L(i,t) with the exact metric, chosen to zero the
    /// mean reconstruction error over the monitoring period.
    pub z0_star: F,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantsMode {
    /// Closed forms from the series means: C₁ = T/ΣŶ₂, C₂ = T·ΣŶ₁/(ΣŶ₂)².
    MeanBased,
    /// Least squares of ΔZ on (ΔŶ₁, −ΔŶ₂); a degenerate regressor falls back
    /// to its mean-based value.
    Fitted,
}

/// Compute C₁, C₂ and the alignment intercept from the aggregated numerator
/// and denominator series. The denominator must stay positive.
pub fn linearization_constants<F: Real>(
    y1: &[F],
    y2: &[F],
    mode: ConstantsMode,
) -> Result<LinearizationConstants<F>> {
    let t_len = y1.len();
    if t_len != y2.len() {
        return Err(Error::Contract("aggregate series lengths differ".into()));
    }
    if t_len < 2 {
        return Err(Error::InsufficientData(
            "linearization needs at least two periods".into(),
        ));
    }
    if y2.iter().any(|&v| v <= F::zero()) {
        return Err(Error::Contract("denominator aggregate must stay positive".into()));
    }

    let t_f = F::from_usize(t_len).unwrap();
    let sum1 = y1.iter().fold(F::zero(), |a, &b| a + b);
    let sum2 = y2.iter().fold(F::zero(), |a, &b| a + b);
    let mean_c1 = t_f / sum2;
    let mean_c2 = t_f * sum1 / (sum2 * sum2);

    let (c1, c2) = match mode {
        ConstantsMode::MeanBased => (mean_c1, mean_c2),
        ConstantsMode::Fitted => {
            // ΔZ on (ΔŶ1, −ΔŶ2), no intercept
            let mut a11 = F::zero();
            let mut a12 = F::zero();
            let mut a22 = F::zero();
            let mut b1 = F::zero();
            let mut b2 = F::zero();
            for t in 1..t_len {
                let d1 = y1[t] - y1[t - 1];
                let d2 = -(y2[t] - y2[t - 1]);
                let dz = y1[t] / y2[t] - y1[t - 1] / y2[t - 1];
                a11 += d1 * d1;
                a12 += d1 * d2;
                a22 += d2 * d2;
                b1 += d1 * dz;
                b2 += d2 * dz;
            }
            let scale = a11.max(a22).max(F::one());
            let tol = scale * F::of(1e-12);
            if a11 <= tol && a22 <= tol {
                (mean_c1, mean_c2)
            } else if a22 <= tol {
                // denominator never moves: C2 unidentified
                (b1 / a11, mean_c2)
            } else if a11 <= tol {
                (mean_c1, b2 / a22)
            } else {
                let det = a11 * a22 - a12 * a12;
                if det.abs() <= scale * scale * F::of(1e-14) {
                    (mean_c1, mean_c2)
                } else {
                    ((b1 * a22 - b2 * a12) / det, (a11 * b2 - a12 * b1) / det)
                }
            }
        }
    };

    // intercept minimizing the mean squared reconstruction error of
    // Σ L(i,t) + z0_star against the exact metric
    let mut err_sum = F::zero();
    for t in 0..t_len {
        err_sum += y1[t] / y2[t] - (c1 * y1[t] - c2 * y2[t]);
    }
    let z0_star = err_sum / t_f;

    Ok(LinearizationConstants { c1, c2, z0_star })
}

/// Per-row linear form L(i,t) = C₁·Y₁(i,t) − C₂·Y₂(i,t), in panel row order.
///
/// Only defined for sum/sum ratio metrics: the summation-order swap behind
/// the element form requires the aggregates to be plain sums.
pub fn element_linear_form(
    panel: &ElementPanel,
    spec: &MetricSpec,
    constants: &LinearizationConstants<f64>,
) -> Result<Vec<f64>> {
    if spec.numerator.op != AggOp::Sum || spec.denominator.op != AggOp::Sum {
        return Err(Error::Config(
            "the element linear form requires sum/sum aggregation".into(),
        ));
    }
    let num_col = panel.underlying_index(&spec.numerator.column)?;
    let den_col = panel.underlying_index(&spec.denominator.column)?;
    let num = panel.underlying_column(num_col);
    let den = panel.underlying_column(den_col);
    Ok((0..panel.n_rows())
        .map(|r| constants.c1 * num[r] - constants.c2 * den[r])
        .collect())
}

/// Reconstruct the metric from its starting level and the aggregate series:
/// Z̃(t) = Z(0) + Σ_{τ≤t} (C₁·ΔŶ₁(τ) − C₂·ΔŶ₂(τ)).
pub fn reconstruct_metric<F: Real>(
    z0: F,
    y1: &[F],
    y2: &[F],
    constants: &LinearizationConstants<F>,
) -> Vec<F> {
    let mut values = Vec::with_capacity(y1.len());
    let mut level = z0;
    values.push(level);
    for t in 1..y1.len() {
        level += constants.c1 * (y1[t] - y1[t - 1]) - constants.c2 * (y2[t] - y2[t - 1]);
        values.push(level);
    }
    values
}

/// Fit one feature's transform against segment means of the element linear
/// form (the element-level counterpart of the univariate metric fit). The
/// link must be identity: L is unbounded.
#[allow(clippy::too_many_arguments)]
pub fn fit_element_transform(
    panel: &ElementPanel,
    lform: &[f64],
    feature: &str,
    scheme: BinScheme,
    bins: usize,
    categorical_cap: usize,
    n_min: usize,
    monotonicity: crate::pipeline::Monotonicity,
) -> Result<FittedTransform> {
    if lform.len() != panel.n_rows() {
        return Err(Error::Contract("linear form does not match the panel".into()));
    }
    let j = panel.feature_index(feature)?;
    let table = segment_values(panel.feature_column(j), None, scheme, bins, categorical_cap)?;

    let mut sums: Vec<(f64, f64, usize)> = vec![(0.0, 0.0, 0); table.n_segments];
    for (row, &seg) in table.assignment.iter().enumerate() {
        if seg == UNSEGMENTED {
            continue;
        }
        let cell = &mut sums[seg as usize];
        cell.0 += panel.feature_column(j)[row];
        cell.1 += lform[row];
        cell.2 += 1;
    }
    let mut points = FitPoints { x: Vec::new(), z: Vec::new(), w: Vec::new() };
    for &(x_sum, l_sum, n) in sums.iter().filter(|&&(_, _, n)| n >= n_min.max(1)) {
        points.x.push(x_sum / n as f64);
        points.z.push(l_sum / n as f64);
        points.w.push(n as f64);
    }
    let options = FitOptions { monotonicity, link: Link::Identity, bounds: None };
    fit_points(feature, &points, &options, 0)
}

/// Joint element-level model: the linear form regressed on the transformed
/// rows with non-negative weights and a free intercept.
pub fn fit_element_joint(
    lform: &[f64],
    transformed: &[crate::pipeline::TransformedSeries],
) -> Result<JointModel> {
    if transformed.is_empty() {
        return Err(Error::Contract("joint element fit needs transformed series".into()));
    }
    let columns: Vec<Vec<f64>> = transformed.iter().map(|s| s.values.clone()).collect();
    if columns.iter().any(|c| c.len() != lform.len()) {
        return Err(Error::Contract("transformed series do not match the linear form".into()));
    }
    let fit = crate::nnls::nnls_with_intercept(&columns, lform, None)?;
    let ones = vec![1.0; lform.len()];
    let fit_r2 = weighted_r2(lform, &fit.fitted, &ones);
    Ok(JointModel {
        gamma0: fit.intercept,
        gammas: fit.coefficients,
        features: transformed.iter().map(|s| s.feature.clone()).collect(),
        fit_r2,
        fitted: fit.fitted,
        note: None,
    })
}
