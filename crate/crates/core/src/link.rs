//! Link functions mapping a bounded metric onto an unconstrained fitting scale.
//!
//! Fitting through a logit or probit link keeps evaluated transform outputs
//! strictly inside the metric bounds. Values are rescaled to the unit interval
//! with the metric bounds first; absent bounds default to `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// Fraction of the bound width used to clamp boundary values before linking,
/// so that observed 0% / 100% segments stay finite on the link scale.
const BOUNDARY_CLAMP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    #[default]
    Identity,
    Logit,
    Probit,
}

impl Link {
    /// Metric scale -> link scale.
    pub fn apply<F: Real>(self, z: F, bounds: Option<(F, F)>) -> F {
        match self {
            Link::Identity => z,
            Link::Logit | Link::Probit => {
                let u = unit_scale(z, bounds);
                match self {
                    Link::Logit => (u / (F::one() - u)).ln(),
                    Link::Probit => F::of(norm_quantile(u.to_f64().unwrap())),
                    Link::Identity => unreachable!(),
                }
            }
        }
    }

    /// Link scale -> metric scale. Inverse of [`Link::apply`] up to boundary
    /// clamping; outputs of the bounded links are strictly inside the bounds.
    pub fn invert<F: Real>(self, g: F, bounds: Option<(F, F)>) -> F {
        match self {
            Link::Identity => g,
            Link::Logit | Link::Probit => {
                let u = match self {
                    Link::Logit => {
                        // 1/(1+e^-g), stable for large |g|
                        if g >= F::zero() {
                            F::one() / (F::one() + (-g).exp())
                        } else {
                            let e = g.exp();
                            e / (F::one() + e)
                        }
                    }
                    Link::Probit => F::of(norm_cdf(g.to_f64().unwrap())),
                    Link::Identity => unreachable!(),
                };
                // keep outputs strictly interior even where the CDF
                // saturates in floating point
                let eps = F::of(BOUNDARY_CLAMP);
                let u = u.max(eps).min(F::one() - eps);
                let (lo, hi) = limits(bounds);
                lo + (hi - lo) * u
            }
        }
    }
}

fn limits<F: Real>(bounds: Option<(F, F)>) -> (F, F) {
    bounds.unwrap_or((F::zero(), F::one()))
}

fn unit_scale<F: Real>(z: F, bounds: Option<(F, F)>) -> F {
    let (lo, hi) = limits(bounds);
    let u = (z - lo) / (hi - lo);
    let eps = F::of(BOUNDARY_CLAMP);
    u.max(eps).min(F::one() - eps)
}

/// Standard normal CDF, Hart's rational approximation (double precision,
/// absolute error below 1e-15).
pub fn norm_cdf(x: f64) -> f64 {
    let xabs = x.abs();
    let cum = if xabs > 37.0 {
        0.0
    } else {
        let e = (-xabs * xabs / 2.0).exp();
        if xabs < 7.071067811865475 {
            let mut num = 3.52624965998911e-2 * xabs + 0.700383064443688;
            num = num * xabs + 6.37396220353165;
            num = num * xabs + 33.912866078383;
            num = num * xabs + 112.079291497871;
            num = num * xabs + 221.213596169931;
            num = num * xabs + 220.206867912376;
            let mut den = 8.83883476483184e-2 * xabs + 1.75566716318264;
            den = den * xabs + 16.064177579207;
            den = den * xabs + 86.7807322029461;
            den = den * xabs + 296.564248779674;
            den = den * xabs + 637.333633378831;
            den = den * xabs + 793.826512519948;
            den = den * xabs + 440.413735824752;
            e * num / den
        } else {
            let mut build = xabs + 0.65;
            build = xabs + 4.0 / build;
            build = xabs + 3.0 / build;
            build = xabs + 2.0 / build;
            build = xabs + 1.0 / build;
            e / build / 2.506628274631
        }
    };
    if x > 0.0 {
        1.0 - cum
    } else {
        cum
    }
}

/// Standard normal quantile: Acklam's approximation with one Halley
/// refinement against [`norm_cdf`]. Relative error well below 1e-12 on
/// (1e-300, 1 - 1e-16).
pub fn norm_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "norm_quantile requires p in (0,1)");
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    let mut x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    // Halley refinement
    let e = norm_cdf(x) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
    x -= u / (1.0 + x * u / 2.0);
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn norm_cdf_reference_values() {
        assert_abs_diff_eq!(norm_cdf(0.0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(norm_cdf(1.0), 0.8413447460685429, epsilon = 1e-14);
        assert_abs_diff_eq!(norm_cdf(-1.96), 0.024997895148220435, epsilon = 1e-14);
        assert_abs_diff_eq!(norm_cdf(3.0), 0.9986501019683699, epsilon = 1e-14);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-8, 0.001, 0.024, 0.3, 0.5, 0.7, 0.975, 0.999, 1.0 - 1e-9] {
            assert_abs_diff_eq!(norm_cdf(norm_quantile(p)), p, epsilon = 1e-12);
        }
    }

    #[test]
    fn logit_round_trip_and_interior() {
        let link = Link::Logit;
        for &z in &[0.0001f64, 0.05, 0.5, 0.99] {
            let g = link.apply(z, None);
            assert_abs_diff_eq!(link.invert(g, None), z, epsilon = 1e-12);
        }
        // boundary values stay finite and map strictly inside
        let g0 = link.apply(0.0f64, None);
        assert!(g0.is_finite());
        let back = link.invert(g0, None);
        assert!(back > 0.0 && back < 1.0);
    }

    #[test]
    fn probit_respects_custom_bounds() {
        let link = Link::Probit;
        let bounds = Some((-2.0f64, 6.0));
        let g = link.apply(1.3, bounds);
        assert_abs_diff_eq!(link.invert(g, bounds), 1.3, epsilon = 1e-10);
        assert!(link.invert(9.0, bounds) < 6.0);
        assert!(link.invert(-9.0, bounds) > -2.0);
    }

    #[test]
    fn identity_passes_through() {
        assert_eq!(Link::Identity.apply(0.37f64, None), 0.37);
        assert_eq!(Link::Identity.invert(-4.2f64, None), -4.2);
    }
}
