use std::fmt::Write as _;

use apdcorr::delay::{delay_mse, optimal_delay_correlator};
use apdcorr::detection::{
    design_detector, exponent_tradeoff_curve, fa_exponent_dark, md_threshold_limit, omf_correlator,
};
use apdcorr::montecarlo::{
    delay_experiment, detection_experiment, DelayWindow, DetectionReport, Hypothesis, SimConfig,
};
use apdcorr::output::{csv_table, curve_csv, fmt_g, summary_block};
use apdcorr::signal::SampledWaveform;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::scenario::{RateKind, Scenario};
use crate::CliError;

/// Text printed to stdout plus an optional CSV artifact.
pub struct Output {
    pub text: String,
    pub csv: Option<String>,
}

pub fn design(scn: &Scenario, theta: f64) -> Result<Output, CliError> {
    let rx = &scn.receiver;
    let d = design_detector(theta, &scn.rate, scn.gain, rx)?;
    let omf = omf_correlator(&scn.rate, scn.gain, rx)?;
    let omf_md =
        apdcorr::detection::md_exponent_for_correlator(&omf, theta, &scn.rate, scn.gain, rx)?;

    let mut text = format!("scenario = {}\n", scn.id);
    let mut entries = vec![
        ("theta", theta),
        ("E_FA", d.e_fa.value()),
        ("E_MD", d.e_md),
        ("s_star", d.s_star),
        ("c_star", d.c_star),
        ("E_MD_omf", omf_md.exponent),
    ];
    let w = d.w_star.values();
    if scn.rate_kind == RateKind::TwoLevel {
        entries.push(("w_level1", w[0]));
        entries.push(("w_level2", w[w.len() - 1]));
    }
    text.push_str(&summary_block(&entries));

    let t: Vec<f64> = scn.grid.times().collect();
    let csv = csv_table(
        &["t", "lambda", "w_star", "w_omf"],
        &[&t, scn.rate.values(), w, omf.values()],
    )?;
    Ok(Output {
        text,
        csv: Some(csv),
    })
}

pub fn tradeoff(
    scn: &Scenario,
    theta_min: f64,
    theta_max: Option<f64>,
    points: usize,
) -> Result<Output, CliError> {
    let rx = &scn.receiver;
    let theta_max = theta_max.unwrap_or_else(|| md_threshold_limit(&scn.rate, scn.gain, rx));
    if points == 0 {
        return Err(CliError::Usage("--points must be at least 1".into()));
    }
    if !(theta_min >= 0.0) || (points > 1 && !(theta_max > theta_min)) {
        return Err(CliError::Usage(format!(
            "need 0 <= theta-min < theta-max, got {theta_min} and {theta_max}"
        )));
    }
    let theta: Vec<f64> = if points == 1 {
        vec![theta_min]
    } else {
        (0..points)
            .map(|k| theta_min + (theta_max - theta_min) * k as f64 / (points - 1) as f64)
            .collect()
    };
    let omf = omf_correlator(&scn.rate, scn.gain, rx)?;
    let curve = exponent_tradeoff_curve(&theta, &[("omf".into(), omf)], &scn.rate, scn.gain, rx)?;
    Ok(Output {
        text: curve_csv(&curve)?,
        csv: None,
    })
}

fn sim_config(scn: &Scenario) -> Result<SimConfig, CliError> {
    let Some(sim) = scn.simulation else {
        return Err(CliError::Usage(
            "scenario has no [simulation] section".into(),
        ));
    };
    Ok(SimConfig::new(sim.trials, sim.seed, scn.grid)?.with_antithetic(sim.antithetic))
}

struct DetectRow {
    theta: f64,
    hypothesis: &'static str,
    report: DetectionReport,
    analytic: f64,
    check: &'static str,
    pass: bool,
}

/// Empirical rate within 3 binomial standard deviations of `q`.
fn matches_exact(r: &DetectionReport, q: f64) -> bool {
    let sd = (q * (1.0 - q) / r.trials as f64).sqrt();
    (r.probability - q).abs() <= 3.0 * sd
}

/// One-sided: `p <= bound (1 + 3 half_width / p)`.
pub fn within_chernoff(r: &DetectionReport, bound: f64) -> bool {
    let p = r.probability;
    p == 0.0 || p <= bound * (1.0 + 3.0 * r.half_width() / p)
}

pub fn simulate_detect(scn: &Scenario, thetas: &[f64]) -> Result<Output, CliError> {
    if thetas.is_empty() {
        return Err(CliError::Usage(
            "no thresholds: pass --theta or list them in [detection]".into(),
        ));
    }
    let sim = sim_config(scn)?;
    let rx = &scn.receiver;
    let horizon = scn.grid.horizon();
    let dark = scn.rate.dark_rate();
    let mut rows = Vec::new();
    for &theta in thetas {
        let d = design_detector(theta, &scn.rate, scn.gain, rx)?;
        let w = &d.w_star;
        let fa = detection_experiment(w, theta, Hypothesis::Absent, &scn.rate, scn.gain, rx, &sim)?;
        rows.push(if dark == 0.0 {
            let q = gaussian_tail(theta * horizon, 0.5 * rx.n0 * w.energy());
            DetectRow {
                theta,
                hypothesis: "H0",
                pass: matches_exact(&fa, q),
                report: fa,
                analytic: q,
                check: "gaussian_tail",
            }
        } else {
            let e = fa_exponent_dark(theta, w, dark, scn.gain, rx)?.exponent;
            let bound = (-horizon * e).exp();
            DetectRow {
                theta,
                hypothesis: "H0",
                pass: within_chernoff(&fa, bound),
                report: fa,
                analytic: bound,
                check: "chernoff",
            }
        });
        let md =
            detection_experiment(w, theta, Hypothesis::Present, &scn.rate, scn.gain, rx, &sim)?;
        let bound = (-horizon * d.e_md).exp();
        rows.push(DetectRow {
            theta,
            hypothesis: "H1",
            pass: within_chernoff(&md, bound),
            report: md,
            analytic: bound,
            check: "chernoff",
        });
    }

    let mut text = String::new();
    let mut csv = String::from(
        "scenario,theta,hypothesis,trials,errors,empirical_rate,half_width,analytic,check,pass\n",
    );
    for r in &rows {
        let _ = writeln!(
            text,
            "[detect {} theta={} {}]",
            scn.id,
            fmt_g(r.theta),
            r.hypothesis
        );
        let _ = writeln!(text, "trials = {}", r.report.trials);
        let _ = writeln!(text, "errors = {}", r.report.errors);
        text.push_str(&summary_block(&[
            ("empirical_rate", r.report.probability),
            ("half_width", r.report.half_width()),
            ("analytic", r.analytic),
        ]));
        let _ = writeln!(text, "check = {}\npass = {}\n", r.check, r.pass);
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{}",
            scn.id,
            fmt_g(r.theta),
            r.hypothesis,
            r.report.trials,
            r.report.errors,
            fmt_g(r.report.probability),
            fmt_g(r.report.half_width()),
            fmt_g(r.analytic),
            r.check,
            r.pass
        );
    }
    Ok(Output {
        text,
        csv: Some(csv),
    })
}

/// `Pr{N(0, variance) >= x}`; a point mass at zero when `variance = 0`.
fn gaussian_tail(x: f64, variance: f64) -> f64 {
    if variance == 0.0 {
        return if x <= 0.0 { 1.0 } else { 0.0 };
    }
    1.0 - Normal::new(0.0, variance.sqrt()).unwrap().cdf(x)
}

pub fn simulate_delay(scn: &Scenario) -> Result<Output, CliError> {
    let Some(est) = scn.estimation else {
        return Err(CliError::Usage(
            "scenario has no [estimation] section".into(),
        ));
    };
    let sim = sim_config(scn)?;
    let rx = &scn.receiver;
    let optimal = optimal_delay_correlator(&scn.rate, scn.gain, rx)?;
    let matched = scn
        .rate
        .signal_part()
        .waveform()
        .normalize_power(rx.power)?;
    let window = DelayWindow {
        min: est.window_min,
        max: est.window_max,
    };

    let mut text = String::new();
    let mut csv = String::from(
        "scenario,correlator,trials,empirical_mse,half_width,analytic_mse,ratio,anomaly_fraction,anomaly_half_width,bias,pass\n",
    );
    let correlators: [(&str, &SampledWaveform); 2] = [("optimal", &optimal), ("matched", &matched)];
    for (name, w) in correlators {
        let (analytic, _) = delay_mse(w, &scn.rate, scn.gain, rx)?;
        let r = delay_experiment(w, &scn.rate, est.true_delay, window, scn.gain, rx, &sim)?;
        let ratio = r.mse / analytic;
        let pass = (0.5..=2.0).contains(&ratio);
        let anomaly_hw = 0.5 * (r.anomaly_upper - r.anomaly_lower);
        let _ = writeln!(text, "[delay {} {name}]", scn.id);
        let _ = writeln!(text, "trials = {}", r.trials);
        text.push_str(&summary_block(&[
            ("empirical_mse", r.mse),
            ("half_width", r.mse_half_width),
            ("analytic_mse", analytic),
            ("ratio", ratio),
            ("anomaly_fraction", r.anomaly_fraction()),
            ("anomaly_half_width", anomaly_hw),
            ("bias", r.bias),
        ]));
        let _ = writeln!(text, "pass = {pass}\n");
        let _ = writeln!(
            csv,
            "{},{name},{},{},{},{},{},{},{},{},{pass}",
            scn.id,
            r.trials,
            fmt_g(r.mse),
            fmt_g(r.mse_half_width),
            fmt_g(analytic),
            fmt_g(ratio),
            fmt_g(r.anomaly_fraction()),
            fmt_g(anomaly_hw),
            fmt_g(r.bias),
        );
    }
    Ok(Output {
        text,
        csv: Some(csv),
    })
}
