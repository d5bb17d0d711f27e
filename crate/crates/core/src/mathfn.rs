//! Numerically stable scalar functions of the standard normal distribution:
//! density, cumulative distribution, quantile, and the inverse Mills ratio.
//!
//! Every estimator in this crate bottoms out in these four functions, so they
//! are written for full double precision and for stability far into the
//! tails. Non-finite inputs (and out-of-range quantile probabilities) are
//! rejected by returning NaN rather than a garbage finite value.

use std::f64::consts::FRAC_1_SQRT_2;

/// 1/sqrt(2*pi)
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
/// sqrt(2/pi) = inv_mills(0)
const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

/// Standard normal density phi(x) = exp(-x^2/2)/sqrt(2*pi).
#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    if !x.is_finite() {
        return f64::NAN;
    }
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal cumulative distribution Phi(x), computed through the
/// complementary error function so the lower tail keeps full relative
/// accuracy down to the underflow limit (~ x = -38).
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    if !x.is_finite() {
        return f64::NAN;
    }
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Scaled complementary error function exp(z^2) * erfc(z) for z >= 0.
///
/// For moderate z the direct product is exact to a couple of ulps; past
/// z = 8 the product would multiply a huge exponential into a result that
/// approaches the subnormal range, so the classical asymptotic expansion
/// erfcx(z) ~ 1/(z sqrt(pi)) * sum_k (-1)^k (2k-1)!!/(2 z^2)^k
/// is used instead (truncation error below 1e-16 there).
fn erfcx(z: f64) -> f64 {
    debug_assert!(z >= 0.0);
    if z < 8.0 {
        return (z * z).exp() * libm::erfc(z);
    }
    let inv2z2 = 1.0 / (2.0 * z * z);
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..=20 {
        term *= -((2 * k - 1) as f64) * inv2z2;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum / (z * std::f64::consts::PI.sqrt())
}

/// Inverse Mills ratio lambda(x) = phi(x)/Phi(x).
///
/// The naive ratio loses digits long before Phi underflows, so below
/// x = -5 the identity lambda(x) = sqrt(2/pi) / erfcx(-x/sqrt(2)) takes
/// over; it stays finite and accurate for arbitrarily negative x
/// (lambda(-40) = 40.02497...).
#[inline]
pub fn inv_mills(x: f64) -> f64 {
    if !x.is_finite() {
        return f64::NAN;
    }
    if x < -5.0 {
        SQRT_2_OVER_PI / erfcx(-x * FRAC_1_SQRT_2)
    } else {
        norm_pdf(x) / norm_cdf(x)
    }
}

/// log Phi(x), stable for very negative x (used for probit deviances).
pub(crate) fn log_norm_cdf(x: f64) -> f64 {
    if !x.is_finite() {
        return f64::NAN;
    }
    if x > -1.0 {
        norm_cdf(x).ln()
    } else {
        // log(0.5 * erfcx(-x/sqrt(2))) - x^2/2
        (0.5 * erfcx(-x * FRAC_1_SQRT_2)).ln() - 0.5 * x * x
    }
}

/// Standard normal quantile Phi^{-1}(p).
///
/// Acklam's rational approximation (|rel err| < 1.15e-9) followed by one
/// Newton step against the erfc-based `norm_cdf`, which brings the result to
/// full double precision. Returns NaN unless 0 < p < 1.
pub fn norm_quantile(p: f64) -> f64 {
    if !(p > 0.0 && p < 1.0) {
        return f64::NAN;
    }
    let x = acklam(p);
    // One Newton polish step: x <- x - (Phi(x) - p)/phi(x).
    let err = norm_cdf(x) - p;
    x - err / norm_pdf(x)
}

fn acklam(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
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
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pdf_known_values() {
        assert_eq!(norm_pdf(0.0), 0.3989422804014327);
        // exp(-1/2)/sqrt(2*pi), checked against 40-digit arithmetic
        assert!((norm_pdf(1.0) - 0.24197072451914337).abs() < 1e-16);
        assert_eq!(norm_pdf(-1.0), norm_pdf(1.0));
        assert!(norm_pdf(f64::NAN).is_nan());
        assert!(norm_pdf(f64::INFINITY).is_nan());
    }

    #[test]
    fn cdf_known_values() {
        assert_eq!(norm_cdf(0.0), 0.5);
        assert!((norm_cdf(1.959964) - 0.975).abs() < 1e-7);
        // high-precision erfc oracle: Phi(-10) = 7.619853024160526e-24
        assert!((norm_cdf(-10.0) / 7.619853024160526e-24 - 1.0).abs() < 1e-13);
        assert!(norm_cdf(f64::NEG_INFINITY).is_nan());
    }

    #[test]
    fn quantile_known_values() {
        assert_eq!(norm_quantile(0.5), 0.0);
        assert!((norm_quantile(0.975) - 1.959963984540054).abs() < 1e-12);
        // bisection/inversion oracle value
        assert!((norm_quantile(0.995) - 2.5758293035489004).abs() < 1e-12);
        assert!(norm_quantile(0.0).is_nan());
        assert!(norm_quantile(1.0).is_nan());
        assert!(norm_quantile(-0.2).is_nan());
        assert!(norm_quantile(f64::NAN).is_nan());
    }

    #[test]
    fn inv_mills_known_values() {
        assert_eq!(inv_mills(0.0), 0.7978845608028654);
        // high-precision oracle: lambda(-10) = 10.098093233962512
        assert!((inv_mills(-10.0) / 10.098093233962512 - 1.0).abs() < 1e-13);
        assert!(inv_mills(-10.0).is_finite());
        // phi(5)/Phi(5) with Phi(5) ~ 1: 1.4867199409049057e-6
        assert!((inv_mills(5.0) / 1.4867199409049057e-6 - 1.0).abs() < 1e-12);
        // deep tail stays finite and tracks the asymptote -x + o(1)
        let l40 = inv_mills(-40.0);
        assert!((l40 / 40.024968847207264 - 1.0).abs() < 1e-13);
        assert!(inv_mills(f64::NAN).is_nan());
    }

    #[test]
    fn inv_mills_branch_seam() {
        // both formulations agree around the x = -5 switch point
        for x in [-5.0 - 1e-9, -5.0, -5.0 + 1e-9, -4.999, -5.001] {
            let naive = norm_pdf(x) / norm_cdf(x);
            assert!((inv_mills(x) / naive - 1.0).abs() < 1e-12, "seam at {x}");
        }
    }

    #[test]
    fn log_norm_cdf_stable() {
        assert!((log_norm_cdf(0.0) - 0.5f64.ln()).abs() < 1e-15);
        assert!((log_norm_cdf(-10.0) - 7.619853024160526e-24f64.ln()).abs() < 1e-10);
        assert!(log_norm_cdf(-300.0).is_finite());
    }

    proptest! {
        #[test]
        fn cdf_symmetry(x in -8.0f64..8.0) {
            prop_assert!((norm_cdf(x) + norm_cdf(-x) - 1.0).abs() < 1e-15);
        }

        #[test]
        fn cdf_monotone(x in -8.0f64..8.0, d in 1e-6f64..2.0) {
            prop_assert!(norm_cdf(x + d) >= norm_cdf(x));
        }

        #[test]
        fn quantile_roundtrip(x in -6.0f64..6.0) {
            prop_assert!((norm_quantile(norm_cdf(x)) - x).abs() < 1e-8);
        }

        #[test]
        fn quantile_postcondition(p in 1e-12f64..1.0) {
            prop_assume!(p < 1.0);
            let q = norm_quantile(p);
            prop_assert!((norm_cdf(q) / p - 1.0).abs() < 1e-12);
        }

        #[test]
        fn inv_mills_matches_naive_ratio(x in -5.0f64..5.0) {
            let naive = norm_pdf(x) / norm_cdf(x);
            prop_assert!((inv_mills(x) / naive - 1.0).abs() < 1e-10);
        }

        #[test]
        fn inv_mills_lipschitz(x in -40.0f64..38.0, y in -40.0f64..38.0) {
            // |lambda(x) - lambda(y)| <= |x - y|
            let (lx, ly) = (inv_mills(x), inv_mills(y));
            prop_assert!((lx - ly).abs() <= (x - y).abs() * (1.0 + 1e-10) + 1e-15);
        }

        #[test]
        fn inv_mills_monotone_decreasing(x in -40.0f64..30.0, d in 1e-6f64..2.0) {
            prop_assert!(inv_mills(x) > inv_mills(x + d));
        }

        #[test]
        fn inv_mills_positive_and_dominates_asymptote(x in -40.0f64..38.0) {
            let l = inv_mills(x);
            prop_assert!(l > 0.0);
            prop_assert!(l + x > 0.0);
        }
    }
}
