//! Chernoff error exponents of correlator detectors and the power-constrained
//! optimal correlator.
//!
//! The detector computes `integral of w(t) y(t)` and declares a signal when it
//! exceeds `theta T`. With no dark current the false-alarm exponent is
//! `theta^2 / (N0 P)` for every correlator of power `P`, so the design problem
//! is to maximize the missed-detection exponent at fixed power.

use std::cell::RefCell;

use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::optimize::{scan_and_refine, Maximum};
use crate::signal::{GainModel, RateFunction, ReceiverConfig, SampledWaveform};
use crate::special::{lambert_p, p_zeta, InversionSettings};

/// Ratio between the two ends of the logarithmic `s` scan.
const SCAN_SPAN: f64 = 1e9;

/// Largest `s q_e sqrt(P)` explored when designing; beyond it `e^-p`
/// underflows and the objective no longer changes.
const MAX_TILT: f64 = 600.0;

/// False-alarm exponent; infinite when there is no thermal noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FaExponent {
    Finite(f64),
    /// `N0 = 0`: the statistic is noiseless under the null hypothesis.
    NoiseFree,
}

impl FaExponent {
    pub fn value(&self) -> f64 {
        match *self {
            FaExponent::Finite(v) => v,
            FaExponent::NoiseFree => f64::INFINITY,
        }
    }
}

/// `theta^2 / (N0 P)`.
pub fn fa_exponent(theta: f64, power: f64, n0: f64) -> Result<FaExponent> {
    if !(power > 0.0) {
        return domain(format!("power must be positive, got {power}"));
    }
    if !(n0 >= 0.0) {
        return domain(format!("N0 must be nonnegative, got {n0}"));
    }
    if n0 == 0.0 {
        return Ok(FaExponent::NoiseFree);
    }
    Ok(FaExponent::Finite(theta * theta / (n0 * power)))
}

/// FA exponent of a specific correlator (its own power enters).
pub fn fa_exponent_for_correlator(
    w: &SampledWaveform,
    theta: f64,
    cfg: &ReceiverConfig,
) -> Result<FaExponent> {
    fa_exponent(theta, w.power(), cfg.n0)
}

/// Value and maximizing tilt of a Chernoff bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChernoffExponent {
    pub exponent: f64,
    pub s: f64,
}

/// Gain-averaged MGF term per unit rate, `a = s q_e w(t)`:
/// `1 - e^-a` (deterministic) or `e^zeta (e^a - 1) / (e^(a+zeta) - 1)`.
/// Returns `-inf` past the pole at `a = -zeta`.
fn md_kernel(a: f64, gain: GainModel) -> f64 {
    match gain {
        GainModel::Deterministic => -(-a).exp_m1(),
        GainModel::Geometric { zeta } => {
            let kappa = -(-zeta).exp_m1();
            if a <= 1.0 {
                let m = a.exp_m1();
                let den = m + kappa;
                if den <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    m / den
                }
            } else {
                1.0 - kappa / (a.exp() - (-zeta).exp())
            }
        }
    }
}

/// Dark-current MGF term under the null hypothesis:
/// `e^a - 1` (deterministic) or `e^zeta (e^a - 1) / (e^zeta - e^a)`.
/// Returns `+inf` at and past the pole `a = zeta`.
fn dark_kernel(a: f64, gain: GainModel) -> f64 {
    match gain {
        GainModel::Deterministic => a.exp_m1(),
        GainModel::Geometric { zeta } => {
            if a >= zeta {
                f64::INFINITY
            } else {
                a.exp_m1() / -(a - zeta).exp_m1()
            }
        }
    }
}

fn check_inputs(w: &SampledWaveform, rate: &RateFunction, cfg: &ReceiverConfig) -> Result<()> {
    w.ensure_same_grid(rate.waveform())?;
    cfg.check_grid(rate.grid())
}

/// Largest `s` for which the gain-averaged MGF stays finite under H1.
fn md_pole(w: &SampledWaveform, gain: GainModel, q_e: f64) -> f64 {
    match gain {
        GainModel::Geometric { zeta } if w.min() < 0.0 => zeta / (q_e * -w.min()),
        _ => f64::INFINITY,
    }
}

/// `s` beyond which `mean_rate - s theta - s^2 n0 p / 4` is negative.
fn penalty_bound(mean_rate: f64, theta: f64, n0p: f64) -> f64 {
    if n0p > 0.0 {
        (-theta + (theta * theta + n0p * mean_rate).sqrt()) / (0.5 * n0p)
    } else if theta > 0.0 {
        mean_rate / theta
    } else {
        f64::INFINITY
    }
}

/// Missed-detection exponent of a fixed correlator:
/// `sup_s [ (1/T) int G(s q_e w(t)) lambda(t) dt - s theta - s^2 N0 P_w / 4 ]`.
pub fn md_exponent_for_correlator(
    w: &SampledWaveform,
    theta: f64,
    rate: &RateFunction,
    gain: GainModel,
    cfg: &ReceiverConfig,
) -> Result<ChernoffExponent> {
    check_inputs(w, rate, cfg)?;
    let horizon = rate.grid().horizon();
    let dt = rate.grid().dt();
    let pw = w.power();
    let q = cfg.q_e;
    let lam = rate.values();
    let wv = w.values();

    let objective = |s: f64| {
        let sum: f64 = lam
            .iter()
            .zip(wv)
            .filter(|(&l, _)| l != 0.0)
            .map(|(&l, &x)| l * md_kernel(s * q * x, gain))
            .sum();
        sum * dt / horizon - s * theta - s * s * cfg.n0 * pw / 4.0
    };

    let w_abs = w.max().abs().max(w.min().abs());
    if w_abs == 0.0 {
        return Ok(ChernoffExponent {
            exponent: 0.0,
            s: 0.0,
        });
    }
    let mut hi =
        penalty_bound(rate.mean_count() / horizon, theta, cfg.n0 * pw).min(1e6 / (q * w_abs));
    let pole = md_pole(w, gain, q);
    if pole.is_finite() {
        hi = hi.min(pole * (1.0 - 1e-9));
    }
    let best = scan_and_refine(&objective, hi / SCAN_SPAN, hi);

    if best.value.is_nan() {
        let i = lam
            .iter()
            .zip(wv)
            .position(|(&l, &x)| (l * md_kernel(best.arg * q * x, gain)).is_nan())
            .unwrap_or(0);
        return Err(Error::NonFinite {
            what: "missed-detection integrand",
            t: rate.grid().time(i),
        });
    }
    Ok(ChernoffExponent {
        exponent: best.value.max(0.0),
        s: if best.value > 0.0 { best.arg } else { 0.0 },
    })
}

/// Distinct nonzero rate values with their total duration.
#[derive(Debug, Clone)]
struct RateLevels {
    levels: Vec<(f64, f64)>,
}

impl RateLevels {
    fn new(rate: &RateFunction) -> Self {
        let dt = rate.grid().dt();
        let mut sorted: Vec<f64> = rate.values().iter().copied().filter(|&v| v > 0.0).collect();
        sorted.sort_by(f64::total_cmp);
        let mut levels: Vec<(f64, f64)> = Vec::new();
        for v in sorted {
            match levels.last_mut() {
                Some((last, weight)) if *last == v => *weight += dt,
                _ => levels.push((v, dt)),
            }
        }
        Self { levels }
    }
}

/// Inverse of the stationarity map for the gain law: `p` or `p_zeta`.
fn invert(y: f64, gain: GainModel, settings: InversionSettings) -> Result<f64> {
    match gain {
        GainModel::Deterministic => lambert_p(y, settings),
        GainModel::Geometric { zeta } => p_zeta(y, zeta, settings),
    }
}

fn kappa(gain: GainModel) -> f64 {
    match gain {
        GainModel::Deterministic => 1.0,
        GainModel::Geometric { zeta } => -(-zeta).exp_m1(),
    }
}

/// Solves `int p^2[c lambda] dt = target` for `c` on compressed levels.
fn solve_constant_on_levels(
    levels: &RateLevels,
    target: f64,
    gain: GainModel,
    settings: InversionSettings,
) -> Result<f64> {
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let log_energy = |u: f64| -> f64 {
        let c = u.exp();
        let mut total = 0.0;
        for &(l, weight) in &levels.levels {
            let y = c * l;
            if !y.is_finite() {
                return f64::INFINITY;
            }
            match invert(y, gain, settings) {
                Ok(x) => total += weight * x * x,
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    return f64::NAN;
                }
            }
        }
        total.ln() - target.ln()
    };

    // p[y] <= y / kappa, so this start never overshoots the root.
    let sum_sq: f64 = levels.levels.iter().map(|(l, wt)| wt * l * l).sum();
    let mut lo = (kappa(gain) * (target / sum_sq).sqrt()).ln();
    let mut h_lo = log_energy(lo);
    while h_lo > 0.0 {
        lo -= 1.0;
        h_lo = log_energy(lo);
    }
    let mut step = 1.0;
    let mut hi = lo + step;
    loop {
        let h = log_energy(hi);
        if let Some(e) = failure.borrow_mut().take() {
            return Err(e);
        }
        if h >= 0.0 {
            break;
        }
        lo = hi;
        step *= 2.0;
        hi = lo + step;
    }
    let u = crate::optimize::bracketed_root(&log_energy, lo, hi, 1e-10, "power constant")?;
    if let Some(e) = failure.borrow_mut().take() {
        return Err(e);
    }
    Ok(u.exp())
}

fn require_signal(rate: &RateFunction) -> Result<()> {
    if rate.values().iter().all(|&v| v == 0.0) {
        return domain("rate function is identically zero; no signal to detect");
    }
    Ok(())
}

/// Constant `c` such that `int p^2[c lambda(t)] dt = s^2 q_e^2 P T`
/// (`p_zeta` for a geometric gain).
pub fn solve_power_constant(
    s: f64,
    rate: &RateFunction,
    gain: GainModel,
    cfg: &ReceiverConfig,
) -> Result<f64> {
    if !(s > 0.0 && s.is_finite()) {
        return domain(format!("tilt s must be positive, got {s}"));
    }
    require_signal(rate)?;
    cfg.check_grid(rate.grid())?;
    let target = s * s * cfg.q_e * cfg.q_e * cfg.power * cfg.horizon;
    solve_constant_on_levels(
        &RateLevels::new(rate),
        target,
        gain,
        InversionSettings::default(),
    )
}

/// Optimal correlator at one threshold, with its exponents.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorDesign {
    /// Optimal correlator, normalized to the power budget.
    pub w_star: SampledWaveform,
    /// Maximizing Chernoff tilt (0 when the exponent vanishes).
    pub s_star: f64,
    /// Constraint constant at `s_star` (0 when `s_star = 0`).
    pub c_star: f64,
    pub e_md: f64,
    pub e_fa: FaExponent,
    pub theta: f64,
}

/// Designs the power-constrained correlator maximizing the MD exponent at
/// threshold density `theta`.
///
/// For each tilt `s` the optimal waveform is `w(t) = p[c lambda(t)] / (s q_e)`
/// with `c(s)` fixed by the power budget, so `s q_e w(t) = p[c lambda(t)]`
/// and the exponent reduces to a scalar search over `s`.
pub fn design_detector(
    theta: f64,
    rate: &RateFunction,
    gain: GainModel,
    cfg: &ReceiverConfig,
) -> Result<DetectorDesign> {
    if !(theta >= 0.0 && theta.is_finite()) {
        return domain(format!("threshold must be finite and >= 0, got {theta}"));
    }
    require_signal(rate)?;
    cfg.check_grid(rate.grid())?;
    let levels = RateLevels::new(rate);
    let settings = InversionSettings::default();
    let horizon = cfg.horizon;
    let q = cfg.q_e;

    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let evaluate = |s: f64| -> Result<f64> {
        if s == 0.0 {
            return Ok(0.0);
        }
        let target = s * s * q * q * cfg.power * horizon;
        let c = solve_constant_on_levels(&levels, target, gain, settings)?;
        let mut total = 0.0;
        for &(l, weight) in &levels.levels {
            let x = invert(c * l, gain, settings)?;
            total += weight * l * md_kernel(x, gain);
        }
        Ok(total / horizon - s * theta - s * s * cfg.n0 * cfg.power / 4.0)
    };
    let objective = |s: f64| match evaluate(s) {
        Ok(v) => v,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            f64::NEG_INFINITY
        }
    };

    let mean_rate = rate.mean_count() / horizon;
    let hi =
        penalty_bound(mean_rate, theta, cfg.n0 * cfg.power).min(MAX_TILT / (q * cfg.power.sqrt()));
    let best: Maximum = scan_and_refine(&objective, hi / SCAN_SPAN, hi);
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }

    let e_fa = fa_exponent(theta, cfg.power, cfg.n0)?;
    if best.value <= 0.0 || best.arg == 0.0 {
        return Ok(DetectorDesign {
            w_star: rate.waveform().normalize_power(cfg.power)?,
            s_star: 0.0,
            c_star: 0.0,
            e_md: 0.0,
            e_fa,
            theta,
        });
    }
    let s_star = best.arg;
    let c_star = solve_constant_on_levels(
        &levels,
        s_star * s_star * q * q * cfg.power * horizon,
        gain,
        settings,
    )?;
    let raw = rate
        .values()
        .iter()
        .map(|&l| invert(c_star * l, gain, settings).map(|x| x / (s_star * q)))
        .collect::<Result<Vec<f64>>>()?;
    let w_star = SampledWaveform::new(*rate.grid(), raw)?.normalize_power(cfg.power)?;
    Ok(DetectorDesign {
        w_star,
        s_star,
        c_star,
        e_md: best.value,
        e_fa,
        theta,
    })
}

/// Optical matched filter `lambda / (lambda + N0 / (2 q_e^2 E{g^2}))`,
/// normalized to the power budget.
pub fn omf_correlator(
    rate: &RateFunction,
    gain: GainModel,
    cfg: &ReceiverConfig,
) -> Result<SampledWaveform> {
    omf_shape(rate, gain, cfg)?.normalize_power(cfg.power)
}

/// The optical matched filter before power normalization.
pub fn omf_shape(
    rate: &RateFunction,
    gain: GainModel,
    cfg: &ReceiverConfig,
) -> Result<SampledWaveform> {
    let floor = cfg.n0 / (2.0 * cfg.q_e * cfg.q_e * gain.second_moment());
    rate.waveform()
        .map(|l| if l == 0.0 { 0.0 } else { l / (l + floor) })
}

/// Threshold density above which the optimal MD exponent vanishes:
/// `E{g} q_e sqrt(P (1/T) int lambda^2)`.
pub fn md_threshold_limit(rate: &RateFunction, gain: GainModel, cfg: &ReceiverConfig) -> f64 {
    let mean_sq = rate.values().iter().map(|l| l * l).sum::<f64>() / rate.grid().len() as f64;
    gain.mean() * cfg.q_e * (cfg.power * mean_sq).sqrt()
}

/// MD exponents versus threshold for the optimal correlator and a set of
/// fixed, labelled correlators.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentCurve {
    pub theta: Vec<f64>,
    pub e_fa: Vec<f64>,
    pub e_md_optimal: Vec<f64>,
    pub s_opt: Vec<f64>,
    pub c_opt: Vec<f64>,
    /// `(label, E_MD per theta)` for each fixed correlator.
    pub fixed: Vec<(String, Vec<f64>)>,
}

/// Sweeps `theta`, re-designing the optimal correlator at every point and
/// evaluating each fixed correlator at the power budget.
pub fn exponent_tradeoff_curve(
    theta_grid: &[f64],
    correlators: &[(String, SampledWaveform)],
    rate: &RateFunction,
    gain: GainModel,
    cfg: &ReceiverConfig,
) -> Result<ExponentCurve> {
    if theta_grid.iter().any(|&t| !(t >= 0.0)) {
        return domain("threshold values must be >= 0");
    }
    if theta_grid.windows(2).any(|p| p[1] <= p[0]) {
        return domain("threshold values must be strictly increasing");
    }
    let normalized = correlators
        .iter()
        .map(|(label, w)| Ok((label.clone(), w.normalize_power(cfg.power)?)))
        .collect::<Result<Vec<_>>>()?;

    let rows = theta_grid
        .par_iter()
        .map(|&theta| {
            let design = design_detector(theta, rate, gain, cfg)?;
            let fixed = normalized
                .iter()
                .map(|(_, w)| {
                    md_exponent_for_correlator(w, theta, rate, gain, cfg).map(|e| e.exponent)
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok((design, fixed))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut curve = ExponentCurve {
        theta: theta_grid.to_vec(),
        e_fa: Vec::with_capacity(rows.len()),
        e_md_optimal: Vec::with_capacity(rows.len()),
        s_opt: Vec::with_capacity(rows.len()),
        c_opt: Vec::with_capacity(rows.len()),
        fixed: normalized
            .iter()
            .map(|(l, _)| (l.clone(), Vec::with_capacity(rows.len())))
            .collect(),
    };
    for (design, fixed) in rows {
        curve.e_fa.push(design.e_fa.value());
        curve.e_md_optimal.push(design.e_md);
        curve.s_opt.push(design.s_star);
        curve.c_opt.push(design.c_star);
        for (slot, v) in curve.fixed.iter_mut().zip(fixed) {
            slot.1.push(v);
        }
    }
    Ok(curve)
}

fn dark_pole(w_max: f64, gain: GainModel, q_e: f64) -> f64 {
    match gain {
        GainModel::Deterministic => f64::INFINITY,
        GainModel::Geometric { zeta } => zeta / (q_e * w_max),
    }
}

/// FA exponent with dark current:
/// `sup_{0 <= s q_e w_max < zeta} [ s theta - s^2 N0 P / 4 - (lambda_d / T) int D(s q_e w) ]`.
pub fn fa_exponent_dark(
    theta: f64,
    w: &SampledWaveform,
    dark_rate: f64,
    gain: GainModel,
    cfg: &ReceiverConfig,
) -> Result<ChernoffExponent> {
    if !(theta >= 0.0 && theta.is_finite()) {
        return domain(format!("threshold must be finite and >= 0, got {theta}"));
    }
    if !(dark_rate >= 0.0) {
        return domain(format!("dark rate must be >= 0, got {dark_rate}"));
    }
    cfg.check_grid(w.grid())?;
    let w_max = w.max();
    if !(w_max > 0.0) {
        return domain("feasible tilt interval is empty: correlator has no positive part");
    }
    let horizon = cfg.horizon;
    let dt = w.dt();
    let pw = w.power();
    let q = cfg.q_e;
    let objective = |s: f64| {
        let dark: f64 = w
            .values()
            .iter()
            .map(|&x| dark_kernel(s * q * x, gain))
            .sum();
        s * theta - s * s * cfg.n0 * pw / 4.0 - dark_rate * dark * dt / horizon
    };

    let n0p = cfg.n0 * pw;
    let mut hi = if n0p > 0.0 {
        (theta + (theta * theta + n0p * dark_rate).sqrt()) / (0.5 * n0p)
    } else {
        1e6 / (q * w_max)
    };
    let pole = dark_pole(w_max, gain, q);
    if pole.is_finite() {
        hi = hi.min(pole * (1.0 - 1e-12));
    }
    if !(hi > 0.0) {
        return domain("feasible tilt interval is empty");
    }
    let best = scan_and_refine(&objective, hi / SCAN_SPAN, hi);
    Ok(ChernoffExponent {
        exponent: best.value.max(0.0),
        s: if best.value > 0.0 { best.arg } else { 0.0 },
    })
}

/// Lagrangian of the joint FA/MD trade-off with dark current, for fixed
/// tilts `s` (FA) and `sigma` (MD), threshold `theta` and multiplier `mu`.
#[allow(clippy::too_many_arguments)]
pub fn dark_lagrangian_objective(
    s: f64,
    sigma: f64,
    theta: f64,
    mu: f64,
    w: &SampledWaveform,
    rate: &RateFunction,
    gain: GainModel,
    cfg: &ReceiverConfig,
) -> Result<f64> {
    if !(s >= 0.0 && sigma >= 0.0 && theta >= 0.0 && mu >= 0.0) {
        return domain("s, sigma, theta and mu must all be >= 0");
    }
    check_inputs(w, rate, cfg)?;
    let q = cfg.q_e;
    let w_max = w.max();
    if let GainModel::Geometric { zeta } = gain {
        if s * q * w_max >= zeta {
            return domain(format!(
                "infeasible tilt: s q_e w_max = {} >= zeta = {zeta}",
                s * q * w_max
            ));
        }
    }
    let lambda_d = rate.dark_rate();
    let integral: f64 = rate
        .values()
        .iter()
        .zip(w.values())
        .map(|(&l, &x)| {
            let signal = if l == 0.0 {
                0.0
            } else {
                l * md_kernel(sigma * q * x, gain)
            };
            let dark = if mu == 0.0 || lambda_d == 0.0 {
                0.0
            } else {
                mu * lambda_d * dark_kernel(s * q * x, gain)
            };
            signal - dark
        })
        .sum::<f64>()
        * w.dt()
        / cfg.horizon;
    Ok(integral + (mu * s - sigma) * theta
        - (sigma * sigma + mu * s * s) * cfg.n0 * w.power() / 4.0)
}

/// Pointwise maximizer of the deterministic-gain Lagrangian integrand,
/// `w(t) = ln[sigma lambda(t) / (mu lambda_d s)] / ((sigma + s) q_e)`.
pub fn dark_stationary_correlator(
    s: f64,
    sigma: f64,
    mu: f64,
    rate: &RateFunction,
    cfg: &ReceiverConfig,
) -> Result<SampledWaveform> {
    let lambda_d = rate.dark_rate();
    if !(s > 0.0 && sigma > 0.0 && mu > 0.0 && lambda_d > 0.0) {
        return domain("s, sigma, mu and the dark rate must all be positive");
    }
    if rate.values().iter().any(|&l| l <= 0.0) {
        return domain("stationary correlator needs a strictly positive rate");
    }
    let scale = 1.0 / ((sigma + s) * cfg.q_e);
    rate.waveform()
        .map(|l| scale * (sigma * l / (mu * lambda_d * s)).ln())
}

/// Axes of the coarse dark-current grid search.
#[derive(Debug, Clone, PartialEq)]
pub struct DarkSearchGrid {
    pub s: Vec<f64>,
    pub sigma: Vec<f64>,
    pub theta: Vec<f64>,
    pub mu: Vec<f64>,
}

/// Best grid point for one multiplier value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DarkSearchPoint {
    pub mu: f64,
    pub s: f64,
    pub sigma: f64,
    pub theta: f64,
    pub value: f64,
}

/// Exhaustive search of [`dark_lagrangian_objective`] over the grid for a
/// fixed correlator; one best point per `mu`. Infeasible tilts are skipped.
/// No global optimality is implied.
pub fn dark_tradeoff_grid_search(
    grid: &DarkSearchGrid,
    w: &SampledWaveform,
    rate: &RateFunction,
    gain: GainModel,
    cfg: &ReceiverConfig,
) -> Result<Vec<DarkSearchPoint>> {
    check_inputs(w, rate, cfg)?;
    let mut out = Vec::with_capacity(grid.mu.len());
    for &mu in &grid.mu {
        let mut best: Option<DarkSearchPoint> = None;
        for &s in &grid.s {
            for &sigma in &grid.sigma {
                for &theta in &grid.theta {
                    let value =
                        match dark_lagrangian_objective(s, sigma, theta, mu, w, rate, gain, cfg) {
                            Ok(v) => v,
                            Err(Error::Domain(_)) => continue,
                            Err(e) => return Err(e),
                        };
                    if best.is_none_or(|b| value > b.value) {
                        best = Some(DarkSearchPoint {
                            mu,
                            s,
                            sigma,
                            theta,
                            value,
                        });
                    }
                }
            }
        }
        match best {
            Some(b) => out.push(b),
            None => return domain(format!("no feasible grid point for mu = {mu}")),
        }
    }
    Ok(out)
}
