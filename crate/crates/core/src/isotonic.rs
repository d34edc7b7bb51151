//! Weighted isotonic regression by pool-adjacent-violators.

use crate::scalar::Real;

/// Least-squares monotone fit of a sequence, aligned to the input order.
#[derive(Debug, Clone, PartialEq)]
pub struct IsotonicFit<F> {
    /// Fitted values, one per input position.
    pub fitted: Vec<F>,
    /// Weighted sum of squared errors of the fit.
    pub sse: F,
}

/// Pool-adjacent-violators on `y` (already ordered by the regressor) with
/// positive weights `w`. `increasing` selects the direction of monotonicity.
///
/// The stack invariant: block means are strictly monotone; a violating new
/// block is merged backwards until the invariant holds again, which yields the
/// unique weighted least-squares monotone fit.
pub fn pava<F: Real>(y: &[F], w: &[F], increasing: bool) -> IsotonicFit<F> {
    assert_eq!(y.len(), w.len());
    assert!(!y.is_empty(), "pava requires at least one point");

    // A decreasing fit is the increasing fit of the negated sequence.
    let sign = if increasing { F::one() } else { -F::one() };

    struct Block<F> {
        mean: F,
        weight: F,
        len: usize,
    }
    let mut blocks: Vec<Block<F>> = Vec::with_capacity(y.len());
    for (&yi, &wi) in y.iter().zip(w) {
        debug_assert!(wi > F::zero());
        let mut block = Block { mean: sign * yi, weight: wi, len: 1 };
        while let Some(last) = blocks.last() {
            if last.mean <= block.mean {
                break;
            }
            let merged_w = last.weight + block.weight;
            block.mean = (last.mean * last.weight + block.mean * block.weight) / merged_w;
            block.weight = merged_w;
            block.len += last.len;
            blocks.pop();
        }
        blocks.push(block);
    }

    let mut fitted = Vec::with_capacity(y.len());
    for block in &blocks {
        for _ in 0..block.len {
            fitted.push(sign * block.mean);
        }
    }
    let mut sse = F::zero();
    for ((&yi, &wi), &fi) in y.iter().zip(w).zip(&fitted) {
        sse += wi * (yi - fi) * (yi - fi);
    }
    IsotonicFit { fitted, sse }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Exhaustive oracle: enumerate every partition of the sequence into
    /// contiguous blocks, level each block at its weighted mean, keep the
    /// candidates whose levels are monotone, and return the smallest SSE.
    fn exhaustive_monotone_sse(y: &[f64], w: &[f64], increasing: bool) -> f64 {
        let n = y.len();
        let mut best = f64::INFINITY;
        for mask in 0..(1u32 << (n - 1)) {
            // bit i set = block boundary between i and i+1
            let mut levels: Vec<f64> = Vec::new();
            let mut sse = 0.0;
            let mut start = 0;
            for end in 0..n {
                let boundary = end == n - 1 || mask >> end & 1 == 1;
                if boundary {
                    let ww: f64 = w[start..=end].iter().sum();
                    let mean: f64 =
                        y[start..=end].iter().zip(&w[start..=end]).map(|(a, b)| a * b).sum::<f64>() / ww;
                    for i in start..=end {
                        sse += w[i] * (y[i] - mean) * (y[i] - mean);
                    }
                    levels.push(mean);
                    start = end + 1;
                }
            }
            let monotone = levels.windows(2).all(|p| {
                if increasing {
                    p[0] <= p[1]
                } else {
                    p[0] >= p[1]
                }
            });
            if monotone && sse < best {
                best = sse;
            }
        }
        best
    }

    #[test]
    fn pools_single_violation() {
        let fit = pava(&[0.1f64, 0.3, 0.2], &[1.0, 1.0, 1.0], true);
        assert_abs_diff_eq!(fit.fitted[0], 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(fit.fitted[1], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(fit.fitted[2], 0.25, epsilon = 1e-15);
        // exhaustive search over monotone step fits agrees
        let oracle = exhaustive_monotone_sse(&[0.1, 0.3, 0.2], &[1.0, 1.0, 1.0], true);
        assert_abs_diff_eq!(fit.sse, oracle, epsilon = 1e-14);
    }

    #[test]
    fn already_monotone_passes_through() {
        let y = [0.0f64, 0.5, 0.6, 2.0];
        let fit = pava(&y, &[1.0; 4], true);
        assert_eq!(fit.fitted, y.to_vec());
        assert_eq!(fit.sse, 0.0);
    }

    #[test]
    fn decreasing_mirrors_increasing() {
        let y = [0.2f64, 0.3, 0.1];
        let w = [1.0f64, 2.0, 1.0];
        let dec = pava(&y, &w, false);
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        let inc = pava(&neg, &w, true);
        for (a, b) in dec.fitted.iter().zip(&inc.fitted) {
            assert_abs_diff_eq!(*a, -b, epsilon = 1e-15);
        }
    }

    #[test]
    fn matches_exhaustive_oracle_on_random_instances() {
        // deterministic xorshift so the failure set is reproducible
        let mut state = 0x9E3779B97F4A7C15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for case in 0..300 {
            let n = 2 + case % 5; // up to 6 points
            let y: Vec<f64> = (0..n).map(|_| next() * 2.0 - 1.0).collect();
            let w: Vec<f64> = (0..n).map(|_| 0.25 + next() * 4.0).collect();
            let increasing = case % 2 == 0;
            let fit = pava(&y, &w, increasing);
            let oracle = exhaustive_monotone_sse(&y, &w, increasing);
            assert!(
                fit.sse <= oracle + 1e-12,
                "case {case}: pava sse {} exceeds oracle {}",
                fit.sse,
                oracle
            );
            // and the fit itself respects the constraint
            assert!(fit.fitted.windows(2).all(|p| if increasing {
                p[0] <= p[1] + 1e-15
            } else {
                p[0] >= p[1] - 1e-15
            }));
        }
    }

    #[test]
    fn works_in_f32() {
        let fit = pava(&[0.1f32, 0.3, 0.2], &[1.0, 1.0, 1.0], true);
        assert!((fit.fitted[1] - 0.25).abs() < 1e-6);
    }
}
