use apdcorr::special::{b, b_zeta, lambert_p, p_zeta, InversionSettings};
use proptest::prelude::*;

fn log_grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let r = (hi / lo).ln() / (n - 1) as f64;
    (0..n).map(move |k| lo * (r * k as f64).exp())
}

#[test]
fn round_trips_on_log_grid() {
    let s = InversionSettings::default();
    for x in log_grid(1e-6, 50.0, 200) {
        let tol = 1e-9 * x.max(1.0);
        assert!((lambert_p(b(x), s).unwrap() - x).abs() <= tol, "x={x}");
        for zeta in [0.01, 0.1, 1.0, 10.0, 50.0] {
            let back = p_zeta(b_zeta(x, zeta), zeta, s).unwrap();
            assert!((back - x).abs() <= tol, "x={x} zeta={zeta}");
        }
    }
    for y in log_grid(1e-6, 1e20, 200) {
        assert!((p_zeta(y, 50.0, s).unwrap() - lambert_p(y, s).unwrap()).abs() <= 1e-6);
    }
}

proptest! {
    #[test]
    fn inverse_is_monotone(y1 in 0.0..1e6_f64, y2 in 0.0..1e6_f64, zeta in 0.01..20.0_f64) {
        let s = InversionSettings::default();
        let (lo, hi) = if y1 <= y2 { (y1, y2) } else { (y2, y1) };
        prop_assert!(lambert_p(lo, s).unwrap() <= lambert_p(hi, s).unwrap());
        prop_assert!(p_zeta(lo, zeta, s).unwrap() <= p_zeta(hi, zeta, s).unwrap());
    }

    #[test]
    fn inverse_satisfies_equation(ly in -20.0..40.0_f64, zeta in 0.01..20.0_f64) {
        let s = InversionSettings::default();
        let y = 10f64.powf(ly);
        prop_assert!((b(lambert_p(y, s).unwrap()) - y).abs() <= 1e-9 * y);
        prop_assert!((b_zeta(p_zeta(y, zeta, s).unwrap(), zeta) - y).abs() <= 1e-9 * y);
    }
}
