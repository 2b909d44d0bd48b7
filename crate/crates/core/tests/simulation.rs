use apdcorr::montecarlo::{
    detection_experiment, detection_statistics, sample_arrivals, sample_gain, Hypothesis, SimConfig,
};
use apdcorr::signal::{
    gain_moments, two_level_rate, GainModel, Grid, RateFunction, ReceiverConfig, SampledWaveform,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

fn silent(grid: Grid) -> RateFunction {
    RateFunction::new(SampledWaveform::constant(grid, 0.0).unwrap(), 0.0).unwrap()
}

#[test]
fn poisson_count_mean() {
    let grid = Grid::new(2.0, 32).unwrap();
    let rate = RateFunction::new(SampledWaveform::constant(grid, 3.0).unwrap(), 0.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let trials = 100_000;
    let total: usize = (0..trials)
        .map(|_| sample_arrivals(&rate, &mut rng).unwrap().len())
        .sum();
    let mean = total as f64 / trials as f64;
    assert!(
        (mean - 6.0).abs() < 3.0 * (6.0 / trials as f64).sqrt(),
        "mean {mean}"
    );
    assert!(sample_arrivals(&silent(grid), &mut rng).unwrap().is_empty());
}

#[test]
fn gain_sampler_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for zeta in [0.1, 1.0, 3.0] {
        let g = GainModel::Geometric { zeta };
        let n = 1_000_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_gain(g, &mut rng) as f64).collect();
        let m1 = draws.iter().sum::<f64>() / n as f64;
        let m2 = draws.iter().map(|x| x * x).sum::<f64>() / n as f64;
        let m4 = draws.iter().map(|x| x.powi(4)).sum::<f64>() / n as f64;
        let (e1, e2) = gain_moments(g);
        let sd1 = ((m2 - m1 * m1) / n as f64).sqrt();
        let sd2 = ((m4 - m2 * m2) / n as f64).sqrt();
        assert!(
            (m1 - e1).abs() < 4.0 * sd1,
            "zeta {zeta}: mean {m1} vs {e1}"
        );
        assert!(
            (m2 - e2).abs() < 4.0 * sd2,
            "zeta {zeta}: second {m2} vs {e2}"
        );
    }
}

#[test]
fn null_statistic_is_gaussian() {
    let grid = Grid::new(1.0, 128).unwrap();
    let cfg = ReceiverConfig::normalized(0.5, 1.0, 1.0).unwrap();
    let w = SampledWaveform::from_fn(grid, |t| (6.0 * t).sin() + 0.3).unwrap();
    let sim = SimConfig::new(20_000, 23, grid).unwrap();
    let mut s = detection_statistics(
        &w,
        Hypothesis::Absent,
        &silent(grid),
        GainModel::Deterministic,
        &cfg,
        &sim,
    )
    .unwrap();
    s.sort_by(f64::total_cmp);
    let normal = Normal::new(0.0, (0.5 * cfg.n0 * w.energy()).sqrt()).unwrap();
    let n = s.len() as f64;
    // DKW band at confidence 0.999
    let eps = ((2.0 / 1e-3_f64).ln() / (2.0 * n)).sqrt();
    for q in [0.05, 0.25, 0.5, 0.75, 0.95] {
        let x = normal.inverse_cdf(q);
        let empirical = s.partition_point(|&v| v <= x) as f64 / n;
        assert!((empirical - q).abs() <= eps, "quantile {q}: {empirical}");
    }
}

#[test]
fn false_alarm_rate_matches_gaussian_tail() {
    let grid = Grid::new(1.0, 64).unwrap();
    let cfg = ReceiverConfig::normalized(0.2, 1.0, 1.0).unwrap();
    let w = SampledWaveform::constant(grid, 1.0).unwrap();
    let sim = SimConfig::new(50_000, 99, grid).unwrap();
    let theta = 0.4;
    let r = detection_experiment(
        &w,
        theta,
        Hypothesis::Absent,
        &silent(grid),
        GainModel::Deterministic,
        &cfg,
        &sim,
    )
    .unwrap();
    let sigma = (0.5 * cfg.n0 * w.energy()).sqrt();
    let q = 1.0 - Normal::new(0.0, 1.0).unwrap().cdf(theta / sigma);
    let sd = (q * (1.0 - q) / 50_000.0).sqrt();
    assert!(
        (r.probability - q).abs() <= 3.0 * sd,
        "{} vs {q}",
        r.probability
    );
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let grid = Grid::new(1.0, 256).unwrap();
    let rate = two_level_rate(5.0, 50.0, grid).unwrap();
    let cfg = ReceiverConfig::normalized(0.1, 1.0, 1.0).unwrap();
    let w = SampledWaveform::from_fn(grid, |t| 1.0 + t).unwrap();
    let gain = GainModel::Geometric { zeta: 0.4 };
    let sim = SimConfig::new(3000, 2024, grid).unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                detection_statistics(&w, Hypothesis::Present, &rate, gain, &cfg, &sim).unwrap()
            })
    };
    let one = run(1);
    let four = run(4);
    assert!(one
        .iter()
        .zip(&four)
        .all(|(a, b)| a.to_bits() == b.to_bits()));
}
