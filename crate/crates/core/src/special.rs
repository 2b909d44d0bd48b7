//! Monotone scalar inversions used by the optimal-correlator formulas.
//!
//! `lambert_p` inverts `b(x) = x e^x` on `x >= 0` (the principal Lambert W
//! branch restricted to nonnegative arguments). `p_zeta` inverts the
//! gain-averaged analogue
//!
//! ```text
//! b_zeta(x) = x (e^(x+zeta) - 1)^2 / (e^(x+2 zeta) - e^(x+zeta))
//!           = x e^x (1 - e^-(x+zeta))^2 / (1 - e^-zeta)
//! ```
//!
//! which tends to `x e^x` as `zeta -> inf`. The second form never forms
//! `e^zeta` and only overflows where `x e^x` itself does.

use crate::error::{domain, Error, Result};

/// Tolerance and iteration cap for the scalar inversions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InversionSettings {
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl InversionSettings {
    pub fn new(rel_tol: f64, max_iter: usize) -> Result<Self> {
        if !(rel_tol > 0.0 && rel_tol.is_finite()) {
            return domain(format!("rel_tol must be positive, got {rel_tol}"));
        }
        if max_iter == 0 {
            return domain("max_iter must be at least 1");
        }
        Ok(Self { rel_tol, max_iter })
    }
}

impl Default for InversionSettings {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            max_iter: 200,
        }
    }
}

/// `x e^x`.
pub fn b(x: f64) -> f64 {
    x * x.exp()
}

/// Gain-averaged analogue of [`b`] for a geometric gain with parameter `zeta`.
pub fn b_zeta(x: f64, zeta: f64) -> f64 {
    b_zeta_with_derivative(x, zeta).0
}

fn b_with_derivative(x: f64) -> (f64, f64) {
    let e = x.exp();
    (x * e, (1.0 + x) * e)
}

fn b_zeta_with_derivative(x: f64, zeta: f64) -> (f64, f64) {
    let kappa = -(-zeta).exp_m1();
    let decay = (-(x + zeta)).exp();
    let a = -(-(x + zeta)).exp_m1();
    let e = x.exp();
    let value = x * e * a * a / kappa;
    let slope = e * a * ((1.0 + x) * a + 2.0 * x * decay) / kappa;
    (value, slope)
}

fn check_argument(y: f64) -> Result<()> {
    if !y.is_finite() || y < 0.0 {
        return domain(format!(
            "inversion argument must be finite and >= 0, got {y}"
        ));
    }
    Ok(())
}

/// Starting point for the Newton iteration on `x e^x = y`.
fn lambert_guess(y: f64) -> f64 {
    if y < 3.0 {
        y.ln_1p()
    } else {
        let l1 = y.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    }
}

/// Solves `f(x) = y` for a smooth, strictly increasing `f` with `f(0) = 0`.
///
/// Newton steps are kept inside a bracket `[lo, hi]` that always contains the
/// root; a step that leaves it is replaced by bisection.
fn invert_increasing(
    y: f64,
    guess: f64,
    settings: InversionSettings,
    what: &'static str,
    f: impl Fn(f64) -> (f64, f64),
) -> Result<f64> {
    if y == 0.0 {
        return Ok(0.0);
    }
    let tol = settings.rel_tol * y.max(f64::MIN_POSITIVE);

    let mut lo = 0.0_f64;
    let mut hi = y.ln_1p().max(1.0) + 1.0;
    while f(hi).0 < y {
        lo = hi;
        hi *= 2.0;
    }

    let mut x = if guess > lo && guess < hi {
        guess
    } else {
        0.5 * (lo + hi)
    };
    let mut residual = f64::INFINITY;
    for _ in 0..settings.max_iter {
        let (fx, dfx) = f(x);
        residual = fx - y;
        if residual.abs() <= tol {
            return Ok(x);
        }
        if residual < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        // bracket exhausted at floating-point resolution
        if hi - lo <= 2.0 * f64::EPSILON * hi {
            return Ok(x);
        }
        let newton = x - residual / dfx;
        x = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(Error::NotConverged {
        what,
        iterations: settings.max_iter,
        residual: residual.abs() / y,
    })
}

/// Inverse of `x e^x` on `[0, inf)`: returns `x >= 0` with `x e^x = y`.
pub fn lambert_p(y: f64, settings: InversionSettings) -> Result<f64> {
    check_argument(y)?;
    invert_increasing(
        y,
        lambert_guess(y),
        settings,
        "lambert_p",
        b_with_derivative,
    )
}

/// Inverse of [`b_zeta`] on `[0, inf)`.
pub fn p_zeta(y: f64, zeta: f64, settings: InversionSettings) -> Result<f64> {
    check_argument(y)?;
    if !(zeta > 0.0) || zeta.is_nan() {
        return domain(format!("zeta must be positive, got {zeta}"));
    }
    let kappa = -(-zeta).exp_m1();
    let linear = y / kappa;
    let guess = if linear < 1.0 {
        linear
    } else {
        lambert_guess(y * kappa)
    };
    invert_increasing(y, guess, settings, "p_zeta", |x| {
        b_zeta_with_derivative(x, zeta)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bisect(y: f64, f: impl Fn(f64) -> f64) -> f64 {
        let (mut lo, mut hi) = (0.0, 1.0);
        while f(hi) < y {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn literal_b_zeta(x: f64, zeta: f64) -> f64 {
        let num = ((x + zeta).exp() - 1.0).powi(2);
        let den = (x + 2.0 * zeta).exp() - (x + zeta).exp();
        x * num / den
    }

    #[test]
    fn lambert_fixed_points() {
        let s = InversionSettings::default();
        assert_eq!(lambert_p(0.0, s).unwrap(), 0.0);
        assert!((lambert_p(std::f64::consts::E, s).unwrap() - 1.0).abs() < 1e-10);
        // omega constant
        let omega = bisect(1.0, b);
        assert!((omega - 0.567_143_290_4).abs() < 1e-10);
        assert!((lambert_p(1.0, s).unwrap() - omega).abs() < 1e-10);
    }

    #[test]
    fn stable_form_matches_literal() {
        for &zeta in &[0.01, 0.1, 1.0, 5.0] {
            for &x in &[1e-3, 0.1, 1.0, 3.0, 10.0] {
                let lit = literal_b_zeta(x, zeta);
                let ours = b_zeta(x, zeta);
                assert!((lit - ours).abs() <= 1e-12 * lit, "x={x} zeta={zeta}");
            }
        }
    }

    #[test]
    fn stable_form_derivative() {
        for &zeta in &[0.05, 2.0] {
            for &x in &[0.01_f64, 0.7, 4.0] {
                let h = 1e-6 * x.max(1e-3);
                let fd = (b_zeta(x + h, zeta) - b_zeta(x - h, zeta)) / (2.0 * h);
                let (_, d) = b_zeta_with_derivative(x, zeta);
                assert!((fd - d).abs() <= 1e-6 * d, "x={x} zeta={zeta}");
            }
        }
    }

    #[test]
    fn p_zeta_round_trip_and_linear_regime() {
        let s = InversionSettings::default();
        assert_eq!(p_zeta(0.0, 0.1, s).unwrap(), 0.0);
        let y = b_zeta(1.0, 0.1);
        assert!((p_zeta(y, 0.1, s).unwrap() - 1.0).abs() < 1e-9);
        let kappa = 1.0 - (-0.1_f64).exp();
        // relative deviation of the linearization grows like ~20 x here
        for &(y, tol) in &[(1e-8, 1e-5), (1e-6, 1e-3), (4e-5, 0.01), (1e-4, 0.025)] {
            let approx = y / kappa;
            let exact = p_zeta(y, 0.1, s).unwrap();
            assert!((approx - exact).abs() <= tol * exact, "y={y}");
        }
    }

    #[test]
    fn large_zeta_tends_to_lambert() {
        let s = InversionSettings::default();
        let mut y = 0.01;
        while y <= 100.0 {
            let a = p_zeta(y, 50.0, s).unwrap();
            let b = lambert_p(y, s).unwrap();
            assert!((a - b).abs() <= 1e-6);
            y *= 1.3;
        }
    }

    #[test]
    fn asymptotics() {
        let s = InversionSettings::default();
        let big = 1e8_f64;
        let ratio = lambert_p(big, s).unwrap() / big.ln();
        assert!((ratio - 1.0).abs() < 0.15, "ratio {ratio}");
        let ratio_1e12 = lambert_p(1e12, s).unwrap() / 1e12_f64.ln();
        assert!((ratio_1e12 - 1.0).abs() < (ratio - 1.0).abs());
        let small = 1e-4;
        assert!((lambert_p(small, s).unwrap() / small - 1.0).abs() < 0.01);
    }

    #[test]
    fn extreme_arguments() {
        let s = InversionSettings::default();
        let x = lambert_p(1e300, s).unwrap();
        assert!(((b(x) - 1e300) / 1e300).abs() < 1e-10);
        let x = lambert_p(1e-300, s).unwrap();
        assert!((x - 1e-300).abs() < 1e-310);
        let x = p_zeta(1e200, 0.01, s).unwrap();
        assert!(((b_zeta(x, 0.01) - 1e200) / 1e200).abs() < 1e-10);
    }

    #[test]
    fn rejects_bad_arguments() {
        let s = InversionSettings::default();
        assert!(lambert_p(-1.0, s).is_err());
        assert!(lambert_p(f64::NAN, s).is_err());
        assert!(lambert_p(f64::INFINITY, s).is_err());
        assert!(p_zeta(1.0, 0.0, s).is_err());
        assert!(p_zeta(1.0, -2.0, s).is_err());
        assert!(p_zeta(-0.5, 1.0, s).is_err());
        assert!(InversionSettings::new(0.0, 10).is_err());
        assert!(InversionSettings::new(1e-8, 0).is_err());
    }

    #[test]
    fn iteration_cap_is_reported() {
        let s = InversionSettings::new(1e-15, 1).unwrap();
        match lambert_p(123.0, s) {
            Err(Error::NotConverged { what, .. }) => assert_eq!(what, "lambert_p"),
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }
}
