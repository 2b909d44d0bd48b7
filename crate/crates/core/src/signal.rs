//! Sampled waveforms on a uniform midpoint grid, photo-electron rate
//! functions, avalanche gain laws and receiver constants.

use crate::error::{domain, Error, Result};

/// Reduced Planck constant (J s), CODATA 2018.
pub const HBAR: f64 = 1.054_571_817e-34;

/// Minimum number of samples on a [`Grid`].
pub const MIN_SAMPLES: usize = 16;

/// Default resolution for design computations.
pub const DEFAULT_SAMPLES: usize = 4096;

/// Uniform grid over `[0, T]` with samples at the bin midpoints
/// `t_i = (i + 1/2) dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    horizon: f64,
    n: usize,
}

impl Grid {
    pub fn new(horizon: f64, n: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return domain(format!("grid horizon must be positive, got {horizon}"));
        }
        if n < MIN_SAMPLES {
            return domain(format!(
                "grid needs at least {MIN_SAMPLES} samples, got {n}"
            ));
        }
        Ok(Self { horizon, n })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dt()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(|i| self.time(i))
    }

    /// Index of the bin containing `t`, clamped to the grid.
    pub fn bin_of(&self, t: f64) -> usize {
        let i = (t / self.dt()).floor();
        if i <= 0.0 {
            0
        } else {
            (i as usize).min(self.n - 1)
        }
    }
}

/// A real function sampled on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct SampledWaveform {
    grid: Grid,
    values: Vec<f64>,
}

impl SampledWaveform {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return domain(format!(
                "waveform has {} samples but the grid has {}",
                values.len(),
                grid.len()
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "waveform sample",
                t: grid.time(i),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.times().map(f).collect())
    }

    pub fn constant(grid: Grid, value: f64) -> Result<Self> {
        Self::new(grid, vec![value; grid.len()])
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn dt(&self) -> f64 {
        self.grid.dt()
    }

    pub fn ensure_same_grid(&self, other: &SampledWaveform) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!(
                "({}, {}) vs ({}, {})",
                self.grid.horizon, self.grid.n, other.grid.horizon, other.grid.n
            )));
        }
        Ok(())
    }

    /// Midpoint-rule integral over `[0, T]`.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.dt()
    }

    /// `integral of w^2`.
    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() * self.dt()
    }

    /// `(1/T) integral of w^2`.
    pub fn power(&self) -> f64 {
        self.energy() / self.grid.horizon
    }

    /// `integral of self * other`.
    pub fn inner(&self, other: &SampledWaveform) -> Result<f64> {
        self.ensure_same_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * self.dt())
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<SampledWaveform> {
        Self::new(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn scaled(&self, factor: f64) -> Result<SampledWaveform> {
        self.map(|v| v * factor)
    }

    /// Rescales by a positive factor so that `integral of w^2 = power * T`.
    pub fn normalize_power(&self, power: f64) -> Result<SampledWaveform> {
        if !(power > 0.0 && power.is_finite()) {
            return domain(format!("power budget must be positive, got {power}"));
        }
        let energy = self.energy();
        if energy == 0.0 {
            return domain("cannot normalize an identically zero waveform");
        }
        let alpha = (power * self.grid.horizon / energy).sqrt();
        self.scaled(alpha)
    }

    /// First derivative: central differences inside, second-order one-sided
    /// stencils at the two ends.
    pub fn derivative(&self) -> SampledWaveform {
        let v = &self.values;
        let n = v.len();
        let h = self.dt();
        let mut d = vec![0.0; n];
        d[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h);
        d[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h);
        for i in 1..n - 1 {
            d[i] = (v[i + 1] - v[i - 1]) / (2.0 * h);
        }
        SampledWaveform {
            grid: self.grid,
            values: d,
        }
    }

    /// Second derivative with the matching second-order boundary stencils.
    pub fn second_derivative(&self) -> SampledWaveform {
        let v = &self.values;
        let n = v.len();
        let h2 = self.dt() * self.dt();
        let mut d = vec![0.0; n];
        d[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / h2;
        d[n - 1] = (2.0 * v[n - 1] - 5.0 * v[n - 2] + 4.0 * v[n - 3] - v[n - 4]) / h2;
        for i in 1..n - 1 {
            d[i] = (v[i + 1] - 2.0 * v[i] + v[i - 1]) / h2;
        }
        SampledWaveform {
            grid: self.grid,
            values: d,
        }
    }

    /// Running integral `W(t_i) = integral_0^{t_i} w`, midpoint convention.
    pub fn cumulative_integral(&self) -> SampledWaveform {
        let h = self.dt();
        let mut acc = 0.0;
        let values = self
            .values
            .iter()
            .map(|&v| {
                let out = acc + 0.5 * v * h;
                acc += v * h;
                out
            })
            .collect();
        SampledWaveform {
            grid: self.grid,
            values,
        }
    }

    /// `w(t - delay)` by linear interpolation, zero outside the grid.
    pub fn shifted(&self, delay: f64) -> SampledWaveform {
        let shift = delay / self.dt();
        let n = self.values.len() as isize;
        let at = |j: isize| {
            if j < 0 || j >= n {
                0.0
            } else {
                self.values[j as usize]
            }
        };
        let values = (0..n)
            .map(|i| {
                let pos = i as f64 - shift;
                let j0 = pos.floor();
                let frac = pos - j0;
                let j0 = j0 as isize;
                (1.0 - frac) * at(j0) + frac * at(j0 + 1)
            })
            .collect();
        SampledWaveform {
            grid: self.grid,
            values,
        }
    }

    /// Indices of the first and last nonzero samples.
    pub fn support(&self) -> Option<(usize, usize)> {
        let first = self.values.iter().position(|&v| v != 0.0)?;
        let last = self.values.iter().rposition(|&v| v != 0.0)?;
        Some((first, last))
    }

    /// Quadratic extrapolation of the samples to `t = 0` and `t = T`.
    pub fn boundary_values(&self) -> (f64, f64) {
        let v = &self.values;
        let n = v.len();
        let left = (15.0 * v[0] - 10.0 * v[1] + 3.0 * v[2]) / 8.0;
        let right = (15.0 * v[n - 1] - 10.0 * v[n - 2] + 3.0 * v[n - 3]) / 8.0;
        (left, right)
    }
}

/// Pearson correlation coefficient of two equally long sample vectors.
pub fn pearson_correlation(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "correlation of unequal lengths");
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    sab / (saa * sbb).sqrt()
}

/// Photo-electron rate `lambda(t)` (1/s), including the dark rate.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFunction {
    waveform: SampledWaveform,
    dark_rate: f64,
}

impl RateFunction {
    /// `waveform` is the total rate; `dark_rate` records the part of it that
    /// is present without an optical signal.
    pub fn new(waveform: SampledWaveform, dark_rate: f64) -> Result<Self> {
        if !(dark_rate >= 0.0 && dark_rate.is_finite()) {
            return domain(format!(
                "dark rate must be finite and >= 0, got {dark_rate}"
            ));
        }
        if let Some(i) = waveform.values().iter().position(|&v| v < 0.0) {
            return domain(format!(
                "rate must be nonnegative, got {} at t = {}",
                waveform.values()[i],
                waveform.grid().time(i)
            ));
        }
        Ok(Self {
            waveform,
            dark_rate,
        })
    }

    pub fn waveform(&self) -> &SampledWaveform {
        &self.waveform
    }

    pub fn values(&self) -> &[f64] {
        self.waveform.values()
    }

    pub fn grid(&self) -> &Grid {
        self.waveform.grid()
    }

    pub fn dark_rate(&self) -> f64 {
        self.dark_rate
    }

    /// Expected photo-electron count `Lambda = integral of lambda`.
    pub fn mean_count(&self) -> f64 {
        self.waveform.integral()
    }

    /// The rate with the dark component removed (clamped at zero).
    pub fn signal_part(&self) -> RateFunction {
        let d = self.dark_rate;
        let values = self.values().iter().map(|&v| (v - d).max(0.0)).collect();
        RateFunction {
            waveform: SampledWaveform {
                grid: *self.grid(),
                values,
            },
            dark_rate: 0.0,
        }
    }

    /// `lambda(t - delay)` for the signal part, with the dark level kept flat.
    pub fn shifted(&self, delay: f64) -> RateFunction {
        let sig = self.signal_part().waveform.shifted(delay);
        let d = self.dark_rate;
        RateFunction {
            waveform: SampledWaveform {
                grid: *self.grid(),
                values: sig.values.iter().map(|v| v + d).collect(),
            },
            dark_rate: d,
        }
    }
}

/// `lambda(t) = eta P(t) / (hbar omega) + lambda_d`.
pub fn rate_from_physical(
    optical_power: &SampledWaveform,
    eta: f64,
    omega: f64,
    dark_rate: f64,
) -> Result<RateFunction> {
    if !(eta > 0.0 && eta <= 1.0) {
        return domain(format!("quantum efficiency must lie in (0, 1], got {eta}"));
    }
    if !(omega > 0.0 && omega.is_finite()) {
        return domain(format!("angular frequency must be positive, got {omega}"));
    }
    if let Some(i) = optical_power.values().iter().position(|&p| p < 0.0) {
        return domain(format!(
            "negative optical power {} at t = {}",
            optical_power.values()[i],
            optical_power.grid().time(i)
        ));
    }
    let scale = eta / (HBAR * omega);
    let wf = optical_power.map(|p| scale * p + dark_rate)?;
    RateFunction::new(wf, dark_rate)
}

/// `lambda1` on `[0, T/2)` and `lambda2` on `[T/2, T)`.
pub fn two_level_rate(lambda1: f64, lambda2: f64, grid: Grid) -> Result<RateFunction> {
    if !(lambda1 >= 0.0 && lambda2 >= 0.0) {
        return domain(format!(
            "two-level rate needs nonnegative levels, got ({lambda1}, {lambda2})"
        ));
    }
    let half = 0.5 * grid.horizon();
    let wf = SampledWaveform::from_fn(grid, |t| if t < half { lambda1 } else { lambda2 })?;
    RateFunction::new(wf, 0.0)
}

/// Raised-cosine pulse `a (1 - cos(2 pi (t - start) / width))` on
/// `[start, start + width]`, zero elsewhere, on top of a flat dark rate.
pub fn raised_cosine_rate(
    amplitude: f64,
    start: f64,
    width: f64,
    dark_rate: f64,
    grid: Grid,
) -> Result<RateFunction> {
    if !(amplitude >= 0.0) || !(width > 0.0) || !(start >= 0.0) {
        return domain(format!(
            "raised cosine needs amplitude >= 0, width > 0, start >= 0 (got {amplitude}, {width}, {start})"
        ));
    }
    if start + width > grid.horizon() * (1.0 + 1e-12) {
        return domain(format!(
            "raised cosine [{start}, {}] exceeds the horizon {}",
            start + width,
            grid.horizon()
        ));
    }
    let k = 2.0 * std::f64::consts::PI / width;
    let wf = SampledWaveform::from_fn(grid, |t| {
        let u = t - start;
        let pulse = if (0.0..=width).contains(&u) {
            amplitude * (1.0 - (k * u).cos())
        } else {
            0.0
        };
        pulse + dark_rate
    })?;
    RateFunction::new(wf, dark_rate)
}

/// Avalanche gain law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GainModel {
    /// `g = 1` with probability one (PIN diode, the `zeta -> inf` limit).
    Deterministic,
    /// `Pr{g} = (e^zeta - 1) e^(-zeta g)`, `g = 1, 2, ...`.
    Geometric { zeta: f64 },
}

impl GainModel {
    pub fn geometric(zeta: f64) -> Result<Self> {
        if !(zeta > 0.0 && zeta.is_finite()) {
            return domain(format!("geometric gain needs zeta > 0, got {zeta}"));
        }
        Ok(GainModel::Geometric { zeta })
    }

    pub fn zeta(&self) -> Option<f64> {
        match *self {
            GainModel::Deterministic => None,
            GainModel::Geometric { zeta } => Some(zeta),
        }
    }

    /// `E{g}`.
    pub fn mean(&self) -> f64 {
        gain_moments(*self).0
    }

    /// `E{g^2}`.
    pub fn second_moment(&self) -> f64 {
        gain_moments(*self).1
    }
}

/// `(E{g}, E{g^2})` for the gain law.
pub fn gain_moments(g: GainModel) -> (f64, f64) {
    match g {
        GainModel::Deterministic => (1.0, 1.0),
        GainModel::Geometric { zeta } => {
            let kappa = -(-zeta).exp_m1();
            let mean = 1.0 / kappa;
            let second = (1.0 + (-zeta).exp()) / (kappa * kappa);
            (mean, second)
        }
    }
}

/// Physical constants of the receiver and the correlator power budget.
///
/// `n0` is such that the thermal noise has two-sided spectral density
/// `n0 / 2`. In normalized units `q_e = 1` and `n0` stands for `N0 / q_e^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReceiverConfig {
    pub n0: f64,
    pub q_e: f64,
    pub power: f64,
    pub horizon: f64,
}

impl ReceiverConfig {
    pub fn new(n0: f64, q_e: f64, power: f64, horizon: f64) -> Result<Self> {
        if !(n0 >= 0.0 && n0.is_finite()) {
            return domain(format!("N0 must be finite and >= 0, got {n0}"));
        }
        if !(q_e > 0.0 && q_e.is_finite()) {
            return domain(format!("electron charge must be positive, got {q_e}"));
        }
        if !(power > 0.0 && power.is_finite()) {
            return domain(format!("power budget must be positive, got {power}"));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return domain(format!("horizon must be positive, got {horizon}"));
        }
        Ok(Self {
            n0,
            q_e,
            power,
            horizon,
        })
    }

    /// Normalized units: `q_e = 1`, `n0 = N0 / q_e^2`.
    pub fn normalized(n0_over_qe2: f64, power: f64, horizon: f64) -> Result<Self> {
        Self::new(n0_over_qe2, 1.0, power, horizon)
    }

    pub fn with_n0(&self, n0: f64) -> Result<Self> {
        Self::new(n0, self.q_e, self.power, self.horizon)
    }

    pub(crate) fn check_grid(&self, grid: &Grid) -> Result<()> {
        if (grid.horizon() - self.horizon).abs() > 1e-12 * self.horizon {
            return Err(Error::GridMismatch(format!(
                "receiver horizon {} differs from grid horizon {}",
                self.horizon,
                grid.horizon()
            )));
        }
        Ok(())
    }
}
