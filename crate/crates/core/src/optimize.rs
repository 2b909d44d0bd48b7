//! One-dimensional search helpers: log-grid scan with golden-section
//! refinement, and a bracketed root finder.

use crate::error::{Error, Result};

/// Points in the logarithmic scan that precedes golden-section refinement.
pub const SCAN_POINTS: usize = 64;

const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maximum {
    pub arg: f64,
    pub value: f64,
}

impl Maximum {
    /// Keeps the larger value; on a tie keeps the smaller argument.
    fn merge(self, other: Maximum) -> Maximum {
        if other.value > self.value || (other.value == self.value && other.arg < self.arg) {
            other
        } else {
            self
        }
    }
}

/// Golden-section search for the maximum of a unimodal `f` on `[a, b]`.
pub fn golden_max(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, rel_tol: f64) -> Maximum {
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut best = Maximum { arg: x1, value: f1 }.merge(Maximum { arg: x2, value: f2 });
    for _ in 0..200 {
        if b - a <= rel_tol * b.abs().max(f64::MIN_POSITIVE) {
            break;
        }
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
            best = best.merge(Maximum { arg: x1, value: f1 });
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
            best = best.merge(Maximum { arg: x2, value: f2 });
        }
    }
    best
}

/// Supremum of `f` over `[0, hi]`: `f(0)` plus a logarithmic scan on
/// `[lo, hi]`, refined by golden section between the neighbours of the best
/// scan point.
pub fn scan_and_refine(f: &impl Fn(f64) -> f64, lo: f64, hi: f64) -> Maximum {
    debug_assert!(lo > 0.0 && hi > lo);
    let mut args = Vec::with_capacity(SCAN_POINTS + 1);
    args.push(0.0);
    let ratio = (hi / lo).ln() / (SCAN_POINTS - 1) as f64;
    args.extend((0..SCAN_POINTS).map(|k| lo * (ratio * k as f64).exp()));
    let values: Vec<f64> = args.iter().map(|&s| f(s)).collect();

    let mut k_best = 0;
    for k in 1..args.len() {
        if values[k] > values[k_best] {
            k_best = k;
        }
    }
    let grid_best = Maximum {
        arg: args[k_best],
        value: values[k_best],
    };
    let left = args[k_best.saturating_sub(1)];
    let right = args[(k_best + 1).min(args.len() - 1)];
    if right <= left {
        return grid_best;
    }
    grid_best.merge(golden_max(f, left, right, 1e-10))
}

/// Finds `u` with `h(u) = 0` for an increasing `h`, given `h(lo) < 0 < h(hi)`,
/// by the Illinois variant of regula falsi.
pub fn bracketed_root(
    h: &impl Fn(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
    what: &'static str,
) -> Result<f64> {
    let mut h_lo = h(lo);
    let mut h_hi = h(hi);
    let mut side = 0i8;
    let mut u = lo;
    let mut hu = h_lo;
    for _ in 0..300 {
        u = (lo * h_hi - hi * h_lo) / (h_hi - h_lo);
        if !u.is_finite() || u <= lo || u >= hi {
            u = 0.5 * (lo + hi);
        }
        hu = h(u);
        if hu.abs() <= tol || (hi - lo) <= 4.0 * f64::EPSILON * hi.abs().max(1.0) {
            return Ok(u);
        }
        if hu < 0.0 {
            lo = u;
            h_lo = hu;
            if side == -1 {
                h_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = u;
            h_hi = hu;
            if side == 1 {
                h_lo *= 0.5;
            }
            side = 1;
        }
    }
    Err(Error::NotConverged {
        what,
        iterations: 300,
        residual: hu
            .abs()
            .max(if u.is_finite() { 0.0 } else { f64::INFINITY }),
    })
}
