//! Small statistics helpers shared across the fitting stages.

use crate::scalar::Real;

pub fn mean<F: Real>(values: &[F]) -> F {
    let n = F::from_usize(values.len()).unwrap();
    values.iter().fold(F::zero(), |acc, &v| acc + v) / n
}

pub fn weighted_mean<F: Real>(values: &[F], weights: &[F]) -> F {
    debug_assert_eq!(values.len(), weights.len());
    let mut num = F::zero();
    let mut den = F::zero();
    for (&v, &w) in values.iter().zip(weights) {
        num += v * w;
        den += w;
    }
    num / den
}

/// Weighted coefficient of determination of `fitted` against `actual`.
/// Returns 0 when the actual values carry no variance.
pub fn weighted_r2<F: Real>(actual: &[F], fitted: &[F], weights: &[F]) -> F {
    let mean = weighted_mean(actual, weights);
    let mut sse = F::zero();
    let mut sst = F::zero();
    for ((&a, &f), &w) in actual.iter().zip(fitted).zip(weights) {
        sse += w * (a - f) * (a - f);
        sst += w * (a - mean) * (a - mean);
    }
    if sst <= F::zero() {
        F::zero()
    } else {
        F::one() - sse / sst
    }
}

/// Unweighted R².
pub fn r2<F: Real>(actual: &[F], fitted: &[F]) -> F {
    let ones = vec![F::one(); actual.len()];
    weighted_r2(actual, fitted, &ones)
}

/// Piecewise-linear interpolation through `knots` (x strictly increasing),
/// clamping to the end values outside the knot range.
pub fn interp_clamped<F: Real>(knots: &[(F, F)], x: F) -> F {
    debug_assert!(!knots.is_empty());
    if x <= knots[0].0 {
        return knots[0].1;
    }
    if x >= knots[knots.len() - 1].0 {
        return knots[knots.len() - 1].1;
    }
    let hi = knots.partition_point(|&(kx, _)| kx < x);
    let (x0, y0) = knots[hi - 1];
    let (x1, y1) = knots[hi];
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Pearson correlation of two equal-length series; 0 when either side is
/// constant.
pub fn pearson<F: Real>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    let ma = mean(a);
    let mb = mean(b);
    let mut sab = F::zero();
    let mut saa = F::zero();
    let mut sbb = F::zero();
    for (&x, &y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa <= F::zero() || sbb <= F::zero() {
        F::zero()
    } else {
        sab / (saa * sbb).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn weighted_mean_two_terms() {
        assert_abs_diff_eq!(
            weighted_mean(&[0.1f64, 0.3], &[100.0, 300.0]),
            0.25,
            epsilon = 1e-15
        );
    }

    #[test]
    fn r2_perfect_and_flat() {
        let y = [1.0f64, 2.0, 4.0];
        assert_abs_diff_eq!(r2(&y, &y), 1.0, epsilon = 1e-15);
        let flat = [2.0f64, 2.0, 2.0];
        assert_eq!(r2(&flat, &flat), 0.0);
    }

    #[test]
    fn interp_clamps_and_interpolates() {
        let knots = [(0.0f64, 0.0), (10.0, 1.0)];
        assert_abs_diff_eq!(interp_clamped(&knots, 5.0), 0.5, epsilon = 1e-15);
        assert_eq!(interp_clamped(&knots, -3.0), 0.0);
        assert_eq!(interp_clamped(&knots, 25.0), 1.0);
        assert_eq!(interp_clamped(&[(2.0f64, 7.0)], 100.0), 7.0);
    }

    #[test]
    fn pearson_sign() {
        let a = [1.0f64, 2.0, 3.0, 4.0];
        let b = [2.0f64, 4.0, 6.0, 8.0];
        assert_abs_diff_eq!(pearson(&a, &b), 1.0, epsilon = 1e-12);
        let c = [4.0f64, 3.0, 2.0, 1.0];
        assert_abs_diff_eq!(pearson(&a, &c), -1.0, epsilon = 1e-12);
    }
}
