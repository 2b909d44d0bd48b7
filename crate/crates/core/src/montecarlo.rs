//! Monte Carlo simulation of the photodetector output
//!
//! ```text
//! y(t) = sum_k g_k q_e delta(t - t_k) + n(t)
//! ```
//!
//! on a sampled grid. Photon arrivals are an inhomogeneous Poisson process
//! drawn by inverse CDF on the piecewise-constant rate. Each arrival deposits
//! `g_k q_e / dt` into its bin, and each bin gets white noise of variance
//! `N0 / (2 dt)`.
//!
//! Trial `i` draws from its own ChaCha stream keyed by `(seed, i)`. Results do
//! not depend on how trials are spread over threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::signal::{GainModel, Grid, RateFunction, ReceiverConfig, SampledWaveform};

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub trials: u64,
    pub seed: u64,
    pub grid: Grid,
    /// Pair trials `(2k, 2k + 1)`: the odd trial replays the even one's
    /// arrivals and gains with the thermal noise negated.
    pub antithetic: bool,
}

impl SimConfig {
    pub fn new(trials: u64, seed: u64, grid: Grid) -> Result<Self> {
        if trials == 0 {
            return domain("at least one trial is required");
        }
        Ok(Self {
            trials,
            seed,
            grid,
            antithetic: false,
        })
    }

    pub fn with_antithetic(mut self, on: bool) -> Self {
        self.antithetic = on;
        self
    }

    fn check(&self, rate: &RateFunction) -> Result<()> {
        if rate.grid() != &self.grid {
            return Err(Error::GridMismatch(
                "simulation grid differs from the rate grid".into(),
            ));
        }
        Ok(())
    }

    /// Generator for trial `i` and whether its noise is negated.
    pub fn trial_rng(&self, i: u64) -> (ChaCha8Rng, bool) {
        let (stream, flip) = if self.antithetic {
            (i / 2, i % 2 == 1)
        } else {
            (i, false)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        (rng, flip)
    }
}

/// Inverse-CDF sampler for arrivals of a piecewise-constant rate.
#[derive(Debug, Clone)]
pub struct ArrivalSampler {
    grid: Grid,
    cumulative: Vec<f64>,
    poisson: Option<Poisson<f64>>,
}

impl ArrivalSampler {
    pub fn new(rate: &RateFunction) -> Result<Self> {
        let grid = *rate.grid();
        let dt = grid.dt();
        let mut acc = 0.0;
        let mut cumulative = Vec::with_capacity(grid.len() + 1);
        cumulative.push(0.0);
        for &l in rate.values() {
            acc += l * dt;
            cumulative.push(acc);
        }
        let poisson = if acc > 0.0 {
            Some(Poisson::new(acc).map_err(|e| Error::Domain(format!("Poisson mean {acc}: {e}")))?)
        } else {
            None
        };
        Ok(Self {
            grid,
            cumulative,
            poisson,
        })
    }

    pub fn mean_count(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// Arrival times of one realization, unsorted.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let Some(poisson) = &self.poisson else {
            return Vec::new();
        };
        let count = poisson.sample(rng) as usize;
        let total = self.mean_count();
        let dt = self.grid.dt();
        (0..count)
            .map(|_| {
                let u = rng.random::<f64>() * total;
                let k = self
                    .cumulative
                    .partition_point(|&c| c <= u)
                    .clamp(1, self.grid.len());
                let (c0, c1) = (self.cumulative[k - 1], self.cumulative[k]);
                let frac = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
                (((k - 1) as f64 + frac) * dt).min(self.grid.horizon())
            })
            .collect()
    }
}

/// One Poisson realization of the rate.
pub fn sample_arrivals<R: Rng + ?Sized>(rate: &RateFunction, rng: &mut R) -> Result<Vec<f64>> {
    Ok(ArrivalSampler::new(rate)?.sample(rng))
}

/// One avalanche gain.
pub fn sample_gain<R: Rng + ?Sized>(gain: GainModel, rng: &mut R) -> u64 {
    match gain {
        GainModel::Deterministic => 1,
        GainModel::Geometric { zeta } => {
            let u = 1.0 - rng.random::<f64>();
            1 + (-u.ln() / zeta).floor() as u64
        }
    }
}

/// Sampled photodetector output for the given arrivals. `negate_noise`
/// flips the sign of every thermal sample.
pub fn synthesize_signal<R: Rng + ?Sized>(
    arrivals: &[f64],
    gain: GainModel,
    cfg: &ReceiverConfig,
    grid: Grid,
    negate_noise: bool,
    rng: &mut R,
) -> SampledWaveform {
    let dt = grid.dt();
    let mut y = vec![0.0; grid.len()];
    let scale = cfg.q_e / dt;
    for &t in arrivals {
        y[grid.bin_of(t)] += sample_gain(gain, rng) as f64 * scale;
    }
    if cfg.n0 > 0.0 {
        let sigma = (0.5 * cfg.n0 / dt).sqrt();
        let sign = if negate_noise { -1.0 } else { 1.0 };
        for v in &mut y {
            let z: f64 = rng.sample(StandardNormal);
            *v += sign * sigma * z;
        }
    }
    SampledWaveform::new(grid, y).expect("simulated samples are finite")
}

/// Hypothesis under which trials are simulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hypothesis {
    /// Thermal noise and dark arrivals only.
    Absent,
    /// Full rate.
    Present,
}

fn hypothesis_rate(rate: &RateFunction, h: Hypothesis) -> Result<RateFunction> {
    match h {
        Hypothesis::Present => Ok(rate.clone()),
        Hypothesis::Absent => RateFunction::new(
            SampledWaveform::constant(*rate.grid(), rate.dark_rate())?,
            rate.dark_rate(),
        ),
    }
}

/// Per-trial statistics `int w y dt`, in trial order.
pub fn detection_statistics(
    w: &SampledWaveform,
    hypothesis: Hypothesis,
    rate: &RateFunction,
    gain: GainModel,
    cfg: &ReceiverConfig,
    sim: &SimConfig,
) -> Result<Vec<f64>> {
    sim.check(rate)?;
    w.ensure_same_grid(rate.waveform())?;
    let sampler = ArrivalSampler::new(&hypothesis_rate(rate, hypothesis)?)?;
    let grid = sim.grid;
    let dt = grid.dt();
    Ok((0..sim.trials)
        .into_par_iter()
        .map(|i| {
            let (mut rng, flip) = sim.trial_rng(i);
            let arrivals = sampler.sample(&mut rng);
            let y = synthesize_signal(&arrivals, gain, cfg, grid, flip, &mut rng);
            y.values()
                .iter()
                .zip(w.values())
                .map(|(a, b)| a * b)
                .sum::<f64>()
                * dt
        })
        .collect())
}

/// Error-probability estimate with a Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionReport {
    pub trials: u64,
    pub errors: u64,
    pub probability: f64,
    pub lower: f64,
    pub upper: f64,
}

impl DetectionReport {
    pub fn from_counts(errors: u64, trials: u64) -> Self {
        let (lower, upper) = wilson_interval(errors, trials);
        Self {
            trials,
            errors,
            probability: errors as f64 / trials as f64,
            lower,
            upper,
        }
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.upper - self.lower)
    }
}

/// Wilson 95% score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: u64, n: u64) -> (f64, f64) {
    let n_f = n as f64;
    let p = k as f64 / n_f;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n_f;
    let center = (p + z2 / (2.0 * n_f)) / denom;
    let half = Z95 * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    let lower = if k == 0 {
        0.0
    } else {
        (center - half).max(0.0)
    };
    let upper = if k == n {
        1.0
    } else {
        (center + half).min(1.0)
    };
    (lower, upper)
}

/// Estimates `Pr{FA}` (under [`Hypothesis::Absent`], statistic `>= theta T`)
/// or `Pr{MD}` (under [`Hypothesis::Present`], statistic `< theta T`).
pub fn detection_experiment(
    w: &SampledWaveform,
    theta: f64,
    hypothesis: Hypothesis,
    rate: &RateFunction,
    gain: GainModel,
    cfg: &ReceiverConfig,
    sim: &SimConfig,
) -> Result<DetectionReport> {
    let stats = detection_statistics(w, hypothesis, rate, gain, cfg, sim)?;
    let level = theta * sim.grid.horizon();
    let errors = stats
        .iter()
        .filter(|&&x| match hypothesis {
            Hypothesis::Absent => x >= level,
            Hypothesis::Present => x < level,
        })
        .count() as u64;
    Ok(DetectionReport::from_counts(errors, sim.trials))
}

/// Search range for the delay estimate, in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayWindow {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayReport {
    pub trials: u64,
    pub mse: f64,
    /// 95% half-width of the MSE from the sample variance of squared errors.
    pub mse_half_width: f64,
    pub bias: f64,
    pub bias_std_error: f64,
    /// Trials whose error exceeds the pulse FWHM.
    pub anomalies: u64,
    pub anomaly_lower: f64,
    pub anomaly_upper: f64,
    /// MSE over the non-anomalous trials.
    pub mse_local: f64,
}

impl DelayReport {
    pub fn anomaly_fraction(&self) -> f64 {
        self.anomalies as f64 / self.trials as f64
    }
}

/// Full width at half maximum of the signal part of the rate.
pub fn pulse_fwhm(rate: &RateFunction) -> f64 {
    let signal = rate.signal_part();
    let v = signal.values();
    let half = 0.5 * signal.waveform().max();
    let first = v.iter().position(|&x| x >= half).unwrap_or(0);
    let last = v.iter().rposition(|&x| x >= half).unwrap_or(0);
    (last - first + 1) as f64 * rate.grid().dt()
}

/// Correlation peak over integer shifts in `[k_lo, k_hi]`, refined by a
/// parabola through the best sample and its neighbours.
fn peak_shift(y: &[f64], w: &[f64], support: (usize, usize), k_lo: isize, k_hi: isize) -> f64 {
    let q = |k: isize| -> f64 {
        let mut acc = 0.0;
        for j in support.0..=support.1 {
            acc += w[j] * y[(j as isize + k) as usize];
        }
        acc
    };
    let values: Vec<f64> = (k_lo..=k_hi).map(q).collect();
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    let mut shift = (k_lo + best as isize) as f64;
    if best > 0 && best + 1 < values.len() {
        let (a, b, c) = (values[best - 1], values[best], values[best + 1]);
        let denom = a - 2.0 * b + c;
        if denom < 0.0 {
            shift += 0.5 * (a - c) / denom;
        }
    }
    shift
}

/// Simulates `lambda(t - true_delay)` and estimates the delay by maximizing
/// `int y(t) w(t - tau) dt` over the window.
#[allow(clippy::too_many_arguments)]
pub fn delay_experiment(
    w: &SampledWaveform,
    rate: &RateFunction,
    true_delay: f64,
    window: DelayWindow,
    gain: GainModel,
    cfg: &ReceiverConfig,
    sim: &SimConfig,
) -> Result<DelayReport> {
    sim.check(rate)?;
    w.ensure_same_grid(rate.waveform())?;
    if !(window.min <= true_delay && true_delay <= window.max) {
        return domain(format!(
            "true delay {true_delay} outside the search window [{}, {}]",
            window.min, window.max
        ));
    }
    let grid = sim.grid;
    let dt = grid.dt();
    let n = grid.len() as isize;
    let support = w
        .support()
        .ok_or_else(|| Error::Domain("correlator is identically zero".into()))?;
    let k_lo = (window.min / dt).floor() as isize;
    let k_hi = (window.max / dt).ceil() as isize;
    if support.0 as isize + k_lo < 0 || support.1 as isize + k_hi >= n {
        return domain("search window shifts the correlator support outside the horizon");
    }
    let pulse = rate
        .signal_part()
        .waveform()
        .support()
        .ok_or_else(|| Error::Domain("rate has no signal component".into()))?;
    let s = true_delay / dt;
    if pulse.0 as f64 + s < 0.0 || pulse.1 as f64 + s > (n - 1) as f64 {
        return domain("delayed pulse leaves the horizon");
    }

    let fwhm = pulse_fwhm(rate);
    let sampler = ArrivalSampler::new(&rate.shifted(true_delay))?;
    let errors: Vec<f64> = (0..sim.trials)
        .into_par_iter()
        .map(|i| {
            let (mut rng, flip) = sim.trial_rng(i);
            let arrivals = sampler.sample(&mut rng);
            let y = synthesize_signal(&arrivals, gain, cfg, grid, flip, &mut rng);
            peak_shift(y.values(), w.values(), support, k_lo, k_hi) * dt - true_delay
        })
        .collect();

    let trials = sim.trials as f64;
    let bias = neumaier(errors.iter().copied()) / trials;
    let mse = neumaier(errors.iter().map(|e| e * e)) / trials;
    let var_err = neumaier(errors.iter().map(|e| (e - bias).powi(2))) / (trials - 1.0).max(1.0);
    let var_sq = neumaier(errors.iter().map(|e| (e * e - mse).powi(2))) / (trials - 1.0).max(1.0);
    let local: Vec<f64> = errors.iter().copied().filter(|e| e.abs() <= fwhm).collect();
    let anomalies = sim.trials - local.len() as u64;
    let (anomaly_lower, anomaly_upper) = wilson_interval(anomalies, sim.trials);
    let mse_local = if local.is_empty() {
        f64::NAN
    } else {
        neumaier(local.iter().map(|e| e * e)) / local.len() as f64
    };
    Ok(DelayReport {
        trials: sim.trials,
        mse,
        mse_half_width: Z95 * (var_sq / trials).sqrt(),
        bias,
        bias_std_error: (var_err / trials).sqrt(),
        anomalies,
        anomaly_lower,
        anomaly_upper,
        mse_local,
    })
}

/// Compensated sum, evaluated sequentially.
fn neumaier(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0_f64, 0.0_f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{raised_cosine_rate, two_level_rate};

    #[test]
    fn wilson_interval_brackets_estimate() {
        let (lo, hi) = wilson_interval(30, 1000);
        assert!(lo < 0.03 && 0.03 < hi);
        let (lo, hi) = wilson_interval(0, 100);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.05);
    }

    #[test]
    fn compensated_sum() {
        let v = [1e16, 1.0, -1e16];
        assert_eq!(neumaier(v.iter().copied()), 1.0);
    }

    #[test]
    fn arrivals_follow_the_rate() {
        let grid = Grid::new(1.0, 64).unwrap();
        let rate = two_level_rate(10.0, 1.0, grid).unwrap();
        let sampler = ArrivalSampler::new(&rate).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (mut first, mut total) = (0usize, 0usize);
        let trials = 20_000;
        for _ in 0..trials {
            let a = sampler.sample(&mut rng);
            first += a.iter().filter(|&&t| t < 0.5).count();
            total += a.len();
        }
        let mean = total as f64 / trials as f64;
        let sd = (5.5 / trials as f64).sqrt();
        assert!((mean - 5.5).abs() < 4.0 * sd, "mean {mean}");
        let frac = first as f64 / total as f64;
        let sd = (frac * (1.0 - frac) / total as f64).sqrt();
        assert!((frac - 10.0 / 11.0).abs() < 4.0 * sd, "fraction {frac}");
    }

    #[test]
    fn single_arrival_deposits_charge() {
        let grid = Grid::new(2.0, 16).unwrap();
        let cfg = ReceiverConfig::new(0.0, 3.0, 1.0, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = synthesize_signal(
            &[0.6],
            GainModel::Deterministic,
            &cfg,
            grid,
            false,
            &mut rng,
        );
        let nz: Vec<usize> = (0..16).filter(|&i| y.values()[i] != 0.0).collect();
        assert_eq!(nz, vec![4]);
        assert!((y.integral() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn noise_statistic_has_expected_variance() {
        let grid = Grid::new(1.0, 64).unwrap();
        let cfg = ReceiverConfig::normalized(2.0, 1.0, 1.0).unwrap();
        let rate = RateFunction::new(SampledWaveform::constant(grid, 0.0).unwrap(), 0.0).unwrap();
        let w = SampledWaveform::from_fn(grid, |t| 1.0 + t).unwrap();
        let sim = SimConfig::new(40_000, 3, grid).unwrap();
        let s = detection_statistics(
            &w,
            Hypothesis::Absent,
            &rate,
            GainModel::Deterministic,
            &cfg,
            &sim,
        )
        .unwrap();
        let n = s.len() as f64;
        let var = s.iter().map(|x| x * x).sum::<f64>() / n;
        let expect = 0.5 * cfg.n0 * w.energy();
        // sd of a sample variance of Gaussians is var * sqrt(2 / n)
        assert!(
            (var - expect).abs() < 4.0 * expect * (2.0 / n).sqrt(),
            "{var} vs {expect}"
        );
    }

    #[test]
    fn antithetic_pairs_negate_noise() {
        let grid = Grid::new(1.0, 32).unwrap();
        let cfg = ReceiverConfig::normalized(1.0, 1.0, 1.0).unwrap();
        let rate = RateFunction::new(SampledWaveform::constant(grid, 0.0).unwrap(), 0.0).unwrap();
        let w = SampledWaveform::constant(grid, 1.0).unwrap();
        let sim = SimConfig::new(6, 11, grid).unwrap().with_antithetic(true);
        let s = detection_statistics(
            &w,
            Hypothesis::Absent,
            &rate,
            GainModel::Deterministic,
            &cfg,
            &sim,
        )
        .unwrap();
        for pair in s.chunks(2) {
            assert!((pair[0] + pair[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn extreme_thresholds() {
        let grid = Grid::new(1.0, 64).unwrap();
        let cfg = ReceiverConfig::normalized(0.1, 1.0, 1.0).unwrap();
        let rate = two_level_rate(10.0, 1.0, grid).unwrap();
        let w = SampledWaveform::constant(grid, 1.0).unwrap();
        let sim = SimConfig::new(500, 5, grid).unwrap();
        let g = GainModel::Deterministic;
        let fa = detection_experiment(&w, 1e6, Hypothesis::Absent, &rate, g, &cfg, &sim).unwrap();
        assert_eq!(fa.errors, 0);
        let md = detection_experiment(&w, 1e6, Hypothesis::Present, &rate, g, &cfg, &sim).unwrap();
        assert_eq!(md.errors, 500);
        let fa = detection_experiment(&w, -1e6, Hypothesis::Absent, &rate, g, &cfg, &sim).unwrap();
        assert_eq!(fa.errors, 500);
    }

    #[test]
    fn delay_estimate_is_accurate_at_high_snr() {
        let grid = Grid::new(1.0, 512).unwrap();
        let rate = raised_cosine_rate(4000.0, 0.3, 0.3, 0.0, grid).unwrap();
        let cfg = ReceiverConfig::normalized(1.0, 1.0, 1.0).unwrap();
        let w = rate.waveform().clone();
        let sim = SimConfig::new(200, 9, grid).unwrap();
        let window = DelayWindow {
            min: -0.1,
            max: 0.1,
        };
        let r = delay_experiment(
            &w,
            &rate,
            0.0123,
            window,
            GainModel::Deterministic,
            &cfg,
            &sim,
        )
        .unwrap();
        assert_eq!(r.anomalies, 0);
        assert!(r.mse.sqrt() < 0.01, "rmse {}", r.mse.sqrt());
        assert!(delay_experiment(
            &w,
            &rate,
            0.5,
            DelayWindow { min: 0.0, max: 0.6 },
            GainModel::Deterministic,
            &cfg,
            &sim
        )
        .is_err());
    }
}
