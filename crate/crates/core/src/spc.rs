//! Individuals & moving-range control charts.

use crate::scalar::Real;
use crate::{Error, Result};

/// Multiplier relating the mean moving range of consecutive pairs to the
/// individuals-chart limit width.
const IX_MR_FACTOR: f64 = 2.66;

/// Control limits of an individuals chart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlLimits<F> {
    /// Mean of the charted series.
    pub r_bar: F,
    /// Mean absolute difference of consecutive values.
    pub mr_bar: F,
    pub lcl: F,
    pub ucl: F,
}

/// Which limit an out-of-control point crossed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Lower,
    Upper,
}

/// An out-of-control point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Signal<F> {
    pub t: usize,
    pub value: F,
    pub side: Side,
}

/// Compute IX & MR limits: mean ± 2.66 × mean moving range, with the moving
/// range taken over consecutive pairs.
pub fn ix_mr_limits<F: Real>(series: &[F]) -> Result<ControlLimits<F>> {
    if series.len() < 2 {
        return Err(Error::InsufficientData(
            "control limits require at least two observations".into(),
        ));
    }
    let n = F::from_usize(series.len()).unwrap();
    let r_bar = series.iter().fold(F::zero(), |a, &b| a + b) / n;
    let mr_sum = series.windows(2).fold(F::zero(), |a, w| a + (w[1] - w[0]).abs());
    let mr_bar = mr_sum / F::from_usize(series.len() - 1).unwrap();
    let width = F::of(IX_MR_FACTOR) * mr_bar;
    Ok(ControlLimits { r_bar, mr_bar, lcl: r_bar - width, ucl: r_bar + width })
}

/// Every point strictly below LCL or strictly above UCL. Boundary values are
/// in-control. An empty result means the series is in-control.
pub fn detect_signals<F: Real>(series: &[F], limits: &ControlLimits<F>) -> Vec<Signal<F>> {
    series
        .iter()
        .enumerate()
        .filter_map(|(t, &value)| {
            if value < limits.lcl {
                Some(Signal { t, value, side: Side::Lower })
            } else if value > limits.ucl {
                Some(Signal { t, value, side: Side::Upper })
            } else {
                None
            }
        })
        .collect()
}
