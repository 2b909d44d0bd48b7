//! High-SNR delay estimation with correlator peak picking.
//!
//! The estimator maximizes `Q(tau) = int y(t) w(t - tau) dt`. Linearizing the
//! peak condition around the true delay gives
//!
//! ```text
//! MSE ~ int [N0/2 + E{g^2} q_e^2 lambda] w'^2 dt / (E{g}^2 q_e^2 [int lambda w'' dt]^2)
//! ```
//!
//! which is minimized by `w(t) ~ ln(1 + lambda(t) / lambda_0)` with
//! `lambda_0 = N0 / (2 E{g^2} q_e^2)`. A dark rate `lambda_d` acts like extra
//! white noise: `N0 -> N0 + 2 E{g^2} q_e^2 lambda_d`.

use nalgebra::{DMatrix, DVector};

use crate::error::{domain, Error, Result};
use crate::signal::{GainModel, Grid, RateFunction, ReceiverConfig, SampledWaveform};

/// Relative tolerance on `lambda(0) = lambda(T) = 0`.
pub const BOUNDARY_TOL: f64 = 1e-9;

/// Relative tolerance on `int lambda w' dt = 0`.
pub const STATIONARITY_TOL: f64 = 1e-6;

/// Below this relative size the peak curvature counts as zero.
const FLAT_PEAK_TOL: f64 = 1e-9;

/// Condition estimate above which a kernel solve is refused.
const MAX_CONDITION: f64 = 1e14;

/// Same, when the diagonal had to be regularized first.
const MAX_REGULARIZED_CONDITION: f64 = 1e9;

fn l2(v: &[f64], dt: f64) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() * dt).sqrt()
}

fn check_boundary(signal: &RateFunction) -> Result<()> {
    let peak = signal.waveform().max();
    let (left, right) = signal.waveform().boundary_values();
    let tol = BOUNDARY_TOL * peak;
    if left.abs() > tol {
        return domain(format!(
            "rate must vanish at t = 0 (extrapolated value {left:e}, tolerance {tol:e})"
        ));
    }
    if right.abs() > tol {
        return domain(format!(
            "rate must vanish at t = T (extrapolated value {right:e}, tolerance {tol:e})"
        ));
    }
    Ok(())
}

/// Thermal density after folding the dark-current shot noise into it.
fn effective_n0(rate: &RateFunction, gain: GainModel, cfg: &ReceiverConfig) -> f64 {
    cfg.n0 + 2.0 * gain.second_moment() * cfg.q_e * cfg.q_e * rate.dark_rate()
}

/// Optimal high-SNR delay correlator `ln(1 + 2 E{g^2} q_e^2 lambda(t) / N0)`,
/// normalized to the power budget. The dark rate is folded into `N0` and
/// removed from `lambda`.
pub fn optimal_delay_correlator(
    rate: &RateFunction,
    gain: GainModel,
    cfg: &ReceiverConfig,
) -> Result<SampledWaveform> {
    cfg.check_grid(rate.grid())?;
    let n0 = effective_n0(rate, gain, cfg);
    if !(n0 > 0.0) {
        return domain("optimal delay correlator needs N0 > 0 (or a dark rate)");
    }
    let signal = rate.signal_part();
    check_boundary(&signal)?;
    let inv_lambda0 = 2.0 * gain.second_moment() * cfg.q_e * cfg.q_e / n0;
    signal
        .waveform()
        .map(|l| (inv_lambda0 * l).ln_1p())?
        .normalize_power(cfg.power)
}

/// Terms of the linearized delay error `U_n / A`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayLinearization {
    /// `A = E{g} q_e int lambda w'' dt`.
    pub curvature: f64,
    /// `E{U_n^2} = int [N0/2 + E{g^2} q_e^2 lambda] w'^2 dt`.
    pub var_un: f64,
}

impl DelayLinearization {
    pub fn mse(&self) -> f64 {
        self.var_un / (self.curvature * self.curvature)
    }
}

/// Linearized MSE of the correlator `w`, with derivatives by central
/// differences.
pub fn delay_mse(
    w: &SampledWaveform,
    rate: &RateFunction,
    gain: GainModel,
    cfg: &ReceiverConfig,
) -> Result<(f64, DelayLinearization)> {
    w.ensure_same_grid(rate.waveform())?;
    cfg.check_grid(rate.grid())?;
    let dt = w.dt();
    let lam = rate.values();
    let dw = w.derivative();
    let ddw = w.second_derivative();

    let slope = rate.waveform().inner(&dw)?;
    let tol = STATIONARITY_TOL * l2(lam, dt) * l2(dw.values(), dt);
    if slope.abs() > tol {
        return Err(Error::NotStationary {
            value: slope,
            tolerance: tol,
        });
    }
    let curv = rate.waveform().inner(&ddw)?;
    if curv.abs() <= FLAT_PEAK_TOL * l2(lam, dt) * l2(ddw.values(), dt) {
        return Err(Error::FlatPeak { curvature: curv });
    }

    let (mean, second) = (gain.mean(), gain.second_moment());
    let q = cfg.q_e;
    let var_un = lam
        .iter()
        .zip(dw.values())
        .map(|(&l, &d)| (0.5 * cfg.n0 + second * q * q * l) * d * d)
        .sum::<f64>()
        * dt;
    let lin = DelayLinearization {
        curvature: mean * q * curv,
        var_un,
    };
    Ok((lin.mse(), lin))
}

/// Closed-form MSEs of the matched (`w = lambda`) and optimal correlators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormMse {
    pub matched: f64,
    pub optimal: f64,
}

/// With `lambda_0 = N0 / (2 E{g^2} q_e^2)` and `k = N0 / (2 E{g}^2 q_e^2)`:
///
/// ```text
/// MSE_matched = k int (1 + lambda/lambda_0) lambda'^2 / [int lambda'^2]^2
/// MSE_opt     = k / int lambda'^2 / (1 + lambda/lambda_0)
/// ```
///
/// so `MSE_opt <= MSE_matched` by Cauchy-Schwarz.
pub fn mse_closed_forms(
    rate: &RateFunction,
    gain: GainModel,
    cfg: &ReceiverConfig,
) -> Result<ClosedFormMse> {
    cfg.check_grid(rate.grid())?;
    let n0 = effective_n0(rate, gain, cfg);
    if !(n0 > 0.0) {
        return domain("closed-form MSEs need N0 > 0 (or a dark rate)");
    }
    let signal = rate.signal_part();
    check_boundary(&signal)?;
    let dt = signal.grid().dt();
    let dl = signal.waveform().derivative();
    let lambda0 = n0 / (2.0 * gain.second_moment() * cfg.q_e * cfg.q_e);
    let k = n0 / (2.0 * gain.mean().powi(2) * cfg.q_e * cfg.q_e);

    let energy: f64 = dl.values().iter().map(|d| d * d).sum::<f64>() * dt;
    if energy == 0.0 {
        return domain("rate has no slope; the delay is unobservable");
    }
    let (mut weighted, mut info) = (0.0, 0.0);
    for (&l, &d) in signal.values().iter().zip(dl.values()) {
        let weight = 1.0 + l / lambda0;
        weighted += weight * d * d;
        info += d * d / weight;
    }
    Ok(ClosedFormMse {
        matched: k * weighted * dt / (energy * energy),
        optimal: k / (info * dt),
    })
}

/// Noise autocorrelation kernel `R_0(s, t)` sampled on the grid, with
/// `delta(s - t)` represented as `1/dt` on the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseKernel {
    grid: Grid,
    matrix: DMatrix<f64>,
}

impl NoiseKernel {
    /// Takes a symmetric kernel matrix in continuous-kernel units.
    pub fn from_matrix(grid: Grid, matrix: DMatrix<f64>) -> Result<Self> {
        let n = grid.len();
        if matrix.nrows() != n || matrix.ncols() != n {
            return domain(format!(
                "kernel is {}x{} but the grid has {n} samples",
                matrix.nrows(),
                matrix.ncols()
            ));
        }
        let scale = matrix.amax();
        for i in 0..n {
            for j in 0..i {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > 1e-12 * scale {
                    return domain(format!("kernel is not symmetric at ({i}, {j})"));
                }
            }
        }
        Ok(Self { grid, matrix })
    }

    /// White thermal noise only: `N0/2 delta(s - t)`.
    pub fn thermal(grid: Grid, cfg: &ReceiverConfig) -> Self {
        let d = 0.5 * cfg.n0 / grid.dt();
        Self {
            grid,
            matrix: DMatrix::from_diagonal_element(grid.len(), grid.len(), d),
        }
    }

    /// Thermal plus shot and multiplicative noise:
    /// `[N0/2 + E{g^2} q_e^2 lambda(t)] delta(s - t)`.
    pub fn white(rate: &RateFunction, gain: GainModel, cfg: &ReceiverConfig) -> Self {
        let grid = *rate.grid();
        let dt = grid.dt();
        let g2q2 = gain.second_moment() * cfg.q_e * cfg.q_e;
        let diag = DVector::from_iterator(
            grid.len(),
            rate.values()
                .iter()
                .map(|&l| (0.5 * cfg.n0 + g2q2 * l) / dt),
        );
        Self {
            grid,
            matrix: DMatrix::from_diagonal(&diag),
        }
    }

    /// Adds a smooth (colored) thermal component `r(s, t)`.
    pub fn with_colored(mut self, r: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let n = self.grid.len();
        for i in 0..n {
            for j in 0..n {
                self.matrix[(i, j)] += r(self.grid.time(i), self.grid.time(j));
            }
        }
        Self::from_matrix(self.grid, self.matrix)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// The discretized integral operator `v -> int R_0(., t) v(t) dt`.
    pub fn operator(&self) -> DMatrix<f64> {
        &self.matrix * self.grid.dt()
    }

    /// Solves `int R_0(s, t) v(t) dt = rhs(s)`.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let op = self.operator();
        let b = DVector::from_column_slice(rhs);
        let mut limit = MAX_CONDITION;
        let chol = match op.clone().cholesky() {
            Some(c) => c,
            None => {
                let n = op.nrows();
                let eps = 1e-10 * op.trace() / n as f64;
                let reg = &op + DMatrix::from_diagonal_element(n, n, eps);
                limit = MAX_REGULARIZED_CONDITION;
                match reg.cholesky() {
                    Some(c) => c,
                    None => {
                        return Err(Error::SingularKernel {
                            condition: condition_estimate(&op),
                        })
                    }
                }
            }
        };
        let l = chol.l_dirty();
        let (lo, hi) = l
            .diagonal()
            .iter()
            .fold((f64::INFINITY, 0.0_f64), |(lo, hi), &d| {
                (lo.min(d), hi.max(d))
            });
        let cond = (hi / lo).powi(2);
        if !(cond < limit) {
            return Err(Error::SingularKernel { condition: cond });
        }
        Ok(chol.solve(&b).iter().copied().collect())
    }
}

fn condition_estimate(op: &DMatrix<f64>) -> f64 {
    let eig = op.clone().symmetric_eigen();
    let (lo, hi) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), &e| {
            (lo.min(e.abs()), hi.max(e.abs()))
        });
    hi / lo
}

/// Optimal delay correlator for a general noise kernel:
/// `w(t) = int_0^t v`, where `int R_0(s, tau) v(tau) dtau = lambda'(s)`.
/// Normalized to the power budget.
pub fn nonwhite_optimal_correlator(
    kernel: &NoiseKernel,
    rate: &RateFunction,
    cfg: &ReceiverConfig,
) -> Result<SampledWaveform> {
    if kernel.grid() != rate.grid() {
        return Err(Error::GridMismatch("kernel and rate grids differ".into()));
    }
    cfg.check_grid(rate.grid())?;
    let signal = rate.signal_part();
    check_boundary(&signal)?;
    let slope = signal.waveform().derivative();
    let v = kernel.solve(slope.values())?;
    SampledWaveform::new(*rate.grid(), v)?
        .cumulative_integral()
        .normalize_power(cfg.power)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{pearson_correlation, raised_cosine_rate};

    fn pulse(n: usize, amplitude: f64) -> RateFunction {
        let grid = Grid::new(1.0, n).unwrap();
        raised_cosine_rate(amplitude, 0.1, 0.8, 0.0, grid).unwrap()
    }

    #[test]
    fn boundary_condition_is_enforced() {
        let grid = Grid::new(1.0, 256).unwrap();
        let cfg = ReceiverConfig::normalized(1.0, 1.0, 1.0).unwrap();
        let flat = RateFunction::new(SampledWaveform::constant(grid, 2.0).unwrap(), 0.0).unwrap();
        let err = optimal_delay_correlator(&flat, GainModel::Deterministic, &cfg).unwrap_err();
        assert!(err.to_string().contains("t = 0"));
    }

    #[test]
    fn correlator_limits() {
        let rate = pulse(1024, 10.0);
        let big = ReceiverConfig::normalized(1e8, 1.0, 1.0).unwrap();
        let w = optimal_delay_correlator(&rate, GainModel::Deterministic, &big).unwrap();
        assert!(pearson_correlation(w.values(), rate.values()) >= 0.9999);

        let small = ReceiverConfig::normalized(1e-8, 1.0, 1.0).unwrap();
        let w = optimal_delay_correlator(&rate, GainModel::Deterministic, &small).unwrap();
        let peak = rate.waveform().max();
        let (a, b): (Vec<f64>, Vec<f64>) = rate
            .values()
            .iter()
            .zip(w.values())
            .filter(|(&l, _)| l > peak / 100.0)
            .map(|(&l, &x)| (l.ln(), x))
            .unzip();
        assert!(pearson_correlation(&a, &b) >= 0.999);
    }

    #[test]
    fn dark_rate_acts_as_thermal_noise() {
        let grid = Grid::new(1.0, 512).unwrap();
        let gain = GainModel::Geometric { zeta: 0.5 };
        let q = 1.0;
        let cfg = ReceiverConfig::normalized(0.3, 2.0, 1.0).unwrap();
        let lambda_d = 4.0;
        let with_dark = raised_cosine_rate(50.0, 0.1, 0.7, lambda_d, grid).unwrap();
        let clean = raised_cosine_rate(50.0, 0.1, 0.7, 0.0, grid).unwrap();
        let n0_eff = cfg.n0 + 2.0 * gain.second_moment() * q * q * lambda_d;
        let a = optimal_delay_correlator(&with_dark, gain, &cfg).unwrap();
        let b = optimal_delay_correlator(&clean, gain, &cfg.with_n0(n0_eff).unwrap()).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() <= 1e-9 * y.abs().max(1e-300));
        }
    }

    #[test]
    fn mse_is_scale_invariant_and_matches_closed_forms() {
        let rate = pulse(4096, 20.0);
        let gain = GainModel::Geometric { zeta: 1.0 };
        let cfg = ReceiverConfig::normalized(0.5, 1.0, 1.0).unwrap();
        let w = optimal_delay_correlator(&rate, gain, &cfg).unwrap();
        let (m1, _) = delay_mse(&w, &rate, gain, &cfg).unwrap();
        let (m2, _) = delay_mse(&w.scaled(7.5).unwrap(), &rate, gain, &cfg).unwrap();
        assert!((m1 - m2).abs() <= 1e-9 * m1);

        let closed = mse_closed_forms(&rate, gain, &cfg).unwrap();
        assert!((m1 - closed.optimal).abs() <= 1e-3 * closed.optimal);
        let (mm, _) = delay_mse(rate.waveform(), &rate, gain, &cfg).unwrap();
        assert!((mm - closed.matched).abs() <= 1e-3 * closed.matched);
        assert!(closed.optimal <= closed.matched);
    }

    #[test]
    fn preconditions_are_reported() {
        let rate = pulse(512, 5.0);
        let cfg = ReceiverConfig::normalized(1.0, 1.0, 1.0).unwrap();
        let ramp = SampledWaveform::from_fn(*rate.grid(), |t| t).unwrap();
        assert!(matches!(
            delay_mse(&ramp, &rate, GainModel::Deterministic, &cfg),
            Err(Error::NotStationary { .. })
        ));
        let flat = SampledWaveform::constant(*rate.grid(), 1.0).unwrap();
        assert!(matches!(
            delay_mse(&flat, &rate, GainModel::Deterministic, &cfg),
            Err(Error::FlatPeak { .. })
        ));
        let zero =
            RateFunction::new(SampledWaveform::constant(*rate.grid(), 0.0).unwrap(), 0.0).unwrap();
        assert!(mse_closed_forms(&zero, GainModel::Deterministic, &cfg).is_err());
    }

    #[test]
    fn thermal_kernel_gives_matched_correlator() {
        let rate = pulse(128, 3.0);
        let cfg = ReceiverConfig::normalized(0.7, 1.0, 1.0).unwrap();
        let k = NoiseKernel::thermal(*rate.grid(), &cfg);
        let w = nonwhite_optimal_correlator(&k, &rate, &cfg).unwrap();
        assert!(pearson_correlation(w.values(), rate.values()) > 0.9999);
    }

    #[test]
    fn colored_kernel_solve_satisfies_the_system() {
        let rate = pulse(128, 3.0);
        let cfg = ReceiverConfig::normalized(0.7, 1.0, 1.0).unwrap();
        let k = NoiseKernel::white(&rate, GainModel::Deterministic, &cfg)
            .with_colored(|s, t| 0.4 * (-((s - t) / 0.05).powi(2)).exp())
            .unwrap();
        let rhs = rate.waveform().derivative();
        let v = k.solve(rhs.values()).unwrap();
        let r = k.operator() * DVector::from_column_slice(&v)
            - DVector::from_column_slice(rhs.values());
        assert!(r.norm() <= 1e-8 * rhs.values().iter().map(|x| x * x).sum::<f64>().sqrt());
    }

    #[test]
    fn singular_kernel_is_rejected() {
        let grid = Grid::new(1.0, 32).unwrap();
        let rate = raised_cosine_rate(1.0, 0.1, 0.8, 0.0, grid).unwrap();
        let cfg = ReceiverConfig::normalized(1.0, 1.0, 1.0).unwrap();
        let mut m = DMatrix::zeros(32, 32);
        m[(0, 0)] = 1.0;
        let k = NoiseKernel::from_matrix(grid, m).unwrap();
        assert!(matches!(
            nonwhite_optimal_correlator(&k, &rate, &cfg),
            Err(Error::SingularKernel { .. })
        ));
        let mut asym = DMatrix::identity(32, 32);
        asym[(0, 1)] = 0.5;
        assert!(NoiseKernel::from_matrix(grid, asym).is_err());
    }
}
