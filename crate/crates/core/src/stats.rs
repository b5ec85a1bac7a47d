//! Small statistics kernels: moments, median/MAD, and the χ² quantile used by
//! the variance-nullity pruning test.
//!
//! The special functions (log-gamma, regularized incomplete gamma, normal and
//! χ² quantiles) are evaluated internally in `f64` for accuracy and converted
//! to the caller's scalar type at the boundary; everything else is computed in
//! the caller's type directly.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Arithmetic mean. Panics on an empty slice (internal callers guarantee
/// non-empty input; public entry points validate earlier).
pub fn mean<F: Scalar>(xs: &[F]) -> F {
    assert!(!xs.is_empty(), "mean of an empty slice");
    xs.iter().copied().sum::<F>() / F::of(xs.len() as f64)
}

/// Population variance (division by `n`, not `n - 1`).
pub fn population_variance<F: Scalar>(xs: &[F]) -> F {
    let m = mean(xs);
    xs.iter().map(|&x| (x - m) * (x - m)).sum::<F>() / F::of(xs.len() as f64)
}

/// Population standard deviation.
pub fn population_std<F: Scalar>(xs: &[F]) -> F {
    population_variance(xs).sqrt()
}

/// Median. Sorts a copy; ties/even lengths take the midpoint of the two
/// central order statistics. Panics on an empty slice or NaN entries.
pub fn median<F: Scalar>(xs: &[F]) -> F {
    assert!(!xs.is_empty(), "median of an empty slice");
    let mut v = xs.to_vec();
    v.sort_unstable_by(|a, b| a.partial_cmp(b).expect("median input must not contain NaN"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / F::of(2.0)
    }
}

/// Median absolute deviation around the median, without any consistency
/// factor: `median(|x_i - median(x)|)`.
pub fn mad<F: Scalar>(xs: &[F]) -> F {
    let m = median(xs);
    let dev: Vec<F> = xs.iter().map(|&x| (x - m).abs()).collect();
    median(&dev)
}

/// Scale factor that makes the MAD consistent with the standard deviation of
/// a normal distribution.
pub const MAD_NORMAL_CONSISTENCY: f64 = 1.4826;

/// Natural log of the gamma function, Lanczos approximation (g = 7, 9 terms).
///
/// Accurate to ~1e-13 relative over the positive reals, which is all this
/// crate evaluates (χ² shape parameters are positive half-integers).
fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507343278686905,
        -0.13857109526572012,
        9.984_369_578_019_572e-6,
        1.5056327351493116e-7,
    ];
    assert!(x > 0.0, "ln_gamma requires a positive argument, got {x}");
    if x < 0.5 {
        // Reflection keeps the Lanczos series in its accurate range.
        return std::f64::consts::PI.ln()
            - (std::f64::consts::PI * x).sin().ln()
            - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = 0.999_999_999_999_809_9;
    for (i, c) in COEFFS.iter().enumerate() {
        acc += c / (x + (i + 1) as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized lower incomplete gamma function P(a, x).
///
/// Series expansion for `x < a + 1`, Lentz continued fraction for the upper
/// tail otherwise — the classic split that keeps both branches fast and
/// well-conditioned.
fn gamma_p(a: f64, x: f64) -> f64 {
    assert!(a > 0.0, "gamma_p shape must be positive, got {a}");
    if x <= 0.0 {
        return 0.0;
    }
    let ln_prefactor = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        // P(a,x) = x^a e^-x / Γ(a) · Σ_n x^n / (a(a+1)...(a+n))
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut n = 1.0;
        for _ in 0..100_000 {
            term *= x / (a + n);
            sum += term;
            if term.abs() < sum.abs() * 1e-16 {
                break;
            }
            n += 1.0;
        }
        (ln_prefactor.exp() * sum).min(1.0)
    } else {
        // Q(a,x) via Lentz's algorithm on the standard continued fraction.
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..100_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        let q = ln_prefactor.exp() * h;
        (1.0 - q).clamp(0.0, 1.0)
    }
}

/// χ² cumulative distribution function with `dof` degrees of freedom.
pub fn chi_square_cdf<F: Scalar>(x: F, dof: usize) -> Result<F> {
    if dof == 0 {
        return Err(Error::InvalidConfig(
            "chi-square distribution needs at least 1 degree of freedom".into(),
        ));
    }
    let x = x.into_f64();
    if x <= 0.0 {
        return Ok(F::zero());
    }
    Ok(F::of(gamma_p(dof as f64 / 2.0, x / 2.0)))
}

/// Standard normal quantile, Acklam's rational approximation (~1e-9 absolute).
/// Only used as the starting point of the χ² quantile search.
fn normal_quantile(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
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
        -normal_quantile(1.0 - p)
    }
}

/// χ² density, used as the derivative inside the quantile Newton iteration.
fn chi_square_pdf(x: f64, dof: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let k2 = dof / 2.0;
    ((k2 - 1.0) * x.ln() - x / 2.0 - k2 * 2.0f64.ln() - ln_gamma(k2)).exp()
}

/// Lower quantile of the χ² distribution: the `x` with `CDF(x) = alpha`.
///
/// `alpha <= 0` returns exactly 0 (the degenerate threshold under which no
/// nullity statistic can pass a strict `<` comparison). `alpha >= 1` is
/// rejected — it has no finite quantile. The search starts from the
/// Wilson–Hilferty cube approximation and polishes with safeguarded Newton
/// steps (bisection fallback inside a maintained bracket), giving close to
/// machine-precision results across the degree-of-freedom range used here
/// (1 to a few thousand).
pub fn chi_square_quantile<F: Scalar>(alpha: F, dof: usize) -> Result<F> {
    if dof == 0 {
        return Err(Error::InvalidConfig(
            "chi-square quantile needs at least 1 degree of freedom".into(),
        ));
    }
    let alpha = alpha.into_f64();
    if !alpha.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "chi-square quantile level must be finite, got {alpha}"
        )));
    }
    if alpha <= 0.0 {
        return Ok(F::zero());
    }
    if alpha >= 1.0 {
        return Err(Error::InvalidConfig(format!(
            "chi-square quantile level must be below 1, got {alpha}"
        )));
    }

    let k = dof as f64;
    let a = k / 2.0;
    let f = |x: f64| gamma_p(a, x / 2.0) - alpha;

    // Wilson–Hilferty start, clamped away from zero so the bracket search
    // below always has somewhere to begin.
    let z = normal_quantile(alpha);
    let wh = {
        let c = 2.0 / (9.0 * k);
        k * (1.0 - c + z * c.sqrt()).powi(3)
    };
    let mut x = wh.max(1e-12);

    // Bracket the root: `lo` always has f < 0 (f(0) = -alpha), `hi` has f >= 0.
    let mut lo = 0.0;
    let mut hi = x;
    while f(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        assert!(hi.is_finite(), "chi-square quantile bracket diverged");
    }
    x = x.clamp(lo.max(1e-300), hi);

    for _ in 0..200 {
        let fx = f(x);
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let dfx = chi_square_pdf(x, k);
        let newton = x - fx / dfx;
        x = if dfx > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (hi - lo) <= 1e-15 * hi.max(1.0) {
            break;
        }
    }
    Ok(F::of(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn mean_and_population_moments() {
        assert_eq!(mean(&[1.0f64, 2.0, 3.0]), 2.0);
        // Population (not sample) variance: divide by n.
        assert_eq!(population_variance(&[-1.0f64, 1.0]), 1.0);
        assert_eq!(population_std(&[-1.0f64, 1.0]), 1.0);
        assert_eq!(population_variance(&[4.0f64, 4.0, 4.0]), 0.0);
    }

    #[test]
    fn median_handles_odd_even_and_unsorted_input() {
        assert_eq!(median(&[3.0f64, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0f64, 1.0, 3.0, 2.0]), 2.5);
        assert_eq!(median(&[7.0f64]), 7.0);
    }

    #[test]
    fn mad_of_constant_data_is_zero() {
        assert_eq!(mad(&[5.0f64, 5.0, 5.0, 5.0]), 0.0);
        // x = [0.5, -1.2, 0.3, 4.0, -0.2, 0.1, 12.0]: median 0.3,
        // |x - 0.3| = [0.2, 1.5, 0.0, 3.7, 0.5, 0.2, 11.7], median 0.5.
        let xs = [0.5f64, -1.2, 0.3, 4.0, -0.2, 0.1, 12.0];
        assert_eq!(median(&xs), 0.3);
        assert_relative_eq!(mad(&xs), 0.5, max_relative = 1e-15);
    }

    #[test]
    fn ln_gamma_matches_known_values() {
        // Γ(1) = Γ(2) = 1, Γ(5) = 24, Γ(0.5) = sqrt(pi).
        assert_relative_eq!(ln_gamma(1.0), 0.0, epsilon = 1e-13);
        assert_relative_eq!(ln_gamma(2.0), 0.0, epsilon = 1e-13);
        assert_relative_eq!(ln_gamma(5.0), 24.0f64.ln(), max_relative = 1e-13);
        assert_relative_eq!(
            ln_gamma(0.5),
            std::f64::consts::PI.sqrt().ln(),
            max_relative = 1e-13
        );
    }

    #[test]
    fn chi_square_cdf_basics() {
        // CDF at 0 is 0; exponential special case dof = 2: CDF(x) = 1 - e^(-x/2).
        assert_eq!(chi_square_cdf(0.0f64, 4).unwrap(), 0.0);
        assert_relative_eq!(
            chi_square_cdf(3.0f64, 2).unwrap(),
            1.0 - (-1.5f64).exp(),
            max_relative = 1e-12
        );
        assert!(chi_square_cdf(1.0f64, 0).is_err());
    }

    /// Frozen reference values computed with an independent implementation of
    /// the inverse χ² CDF; agreement required to 1e-10 relative.
    #[test]
    fn chi_square_quantile_matches_frozen_references() {
        let cases: [(f64, usize, f64); 12] = [
            (0.05, 4, 0.7107230213973239),
            (0.05, 2666, 2547.0396223952594),
            (0.05, 9, 3.325112843066815),
            (0.05, 30, 18.49266098195347),
            (0.05, 100, 77.92946516501726),
            (0.01, 4, 0.2971094805065319),
            (0.5, 10, 9.34181776559197),
            (0.95, 30, 43.77297182574219),
            (0.99, 500, 576.4928125116545),
            (0.025, 7, 1.689869180677355),
            (0.05, 1, 0.003932140000019522),
            (0.05, 2, 0.10258658877510106),
        ];
        for (alpha, dof, expected) in cases {
            let got: f64 = chi_square_quantile(alpha, dof).unwrap();
            assert_relative_eq!(got, expected, max_relative = 1e-10);
        }
    }

    /// Cross-check against statrs over a grid of levels and degrees of freedom.
    #[test]
    fn chi_square_quantile_agrees_with_statrs() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        for dof in [1usize, 2, 3, 5, 9, 24, 30, 100, 300, 1000, 2666] {
            let dist = ChiSquared::new(dof as f64).unwrap();
            for alpha in [0.001, 0.01, 0.025, 0.05, 0.1, 0.5, 0.9, 0.95, 0.99, 0.999] {
                let got: f64 = chi_square_quantile(alpha, dof).unwrap();
                let want = dist.inverse_cdf(alpha);
                assert_relative_eq!(got, want, max_relative = 1e-9, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn quantile_is_inverse_of_cdf() {
        for dof in [1usize, 4, 17, 250] {
            for alpha in [0.01, 0.05, 0.5, 0.95] {
                let q: f64 = chi_square_quantile(alpha, dof).unwrap();
                let back: f64 = chi_square_cdf(q, dof).unwrap();
                assert_relative_eq!(back, alpha, max_relative = 1e-9, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_levels() {
        // alpha <= 0 pins the threshold to exactly zero (strict comparisons
        // against it can then never pass).
        assert_eq!(chi_square_quantile(0.0f64, 9).unwrap(), 0.0);
        assert_eq!(chi_square_quantile(-1.0f64, 9).unwrap(), 0.0);
        assert!(chi_square_quantile(1.0f64, 9).is_err());
        assert!(chi_square_quantile(1.5f64, 9).is_err());
        assert!(chi_square_quantile(0.05f64, 0).is_err());
        assert!(chi_square_quantile(f64::NAN, 9).is_err());
    }

    #[test]
    fn quantile_works_in_f32_too() {
        let got: f32 = chi_square_quantile(0.05f32, 4).unwrap();
        assert_relative_eq!(got, 0.710_723f32, max_relative = 1e-5);
    }
}
