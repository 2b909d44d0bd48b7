//! Scenario files: `[section]` headers, `key = value` lines, `#` comments.
//! A bare `id = ...` may precede the first section.

use std::collections::BTreeMap;
use std::fmt;

use apdcorr::signal::{
    raised_cosine_rate, two_level_rate, GainModel, Grid, RateFunction, ReceiverConfig,
    SampledWaveform, DEFAULT_SAMPLES,
};

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub line: usize,
    pub msg: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.msg)
    }
}

impl std::error::Error for ParseError {}

fn fail<T>(line: usize, msg: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError {
        line,
        msg: msg.into(),
    })
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("", &["id"]),
    ("grid", &["horizon", "samples"]),
    (
        "rate",
        &[
            "kind",
            "lambda1",
            "lambda2",
            "amplitude",
            "start",
            "width",
            "values",
            "dark",
        ],
    ),
    ("gain", &["model", "zeta"]),
    ("receiver", &["N0_over_qe2", "N0", "q_e", "power"]),
    ("detection", &["theta"]),
    ("estimation", &["true_delay", "window_min", "window_max"]),
    ("simulation", &["trials", "seed", "antithetic"]),
];

#[derive(Debug, Default)]
struct Section {
    line: usize,
    entries: BTreeMap<String, (String, usize)>,
}

impl Section {
    fn get(&self, key: &str) -> Option<(&str, usize)> {
        self.entries.get(key).map(|(v, l)| (v.as_str(), *l))
    }

    fn require(&self, name: &str, key: &str) -> Result<(&str, usize), ParseError> {
        self.get(key).map_or_else(
            || fail(self.line, format!("missing key `{key}` in [{name}]")),
            Ok,
        )
    }

    fn number(&self, name: &str, key: &str) -> Result<f64, ParseError> {
        let (v, l) = self.require(name, key)?;
        parse_f64(v, l, key)
    }

    fn number_or(&self, key: &str, default: f64) -> Result<f64, ParseError> {
        match self.get(key) {
            Some((v, l)) => parse_f64(v, l, key),
            None => Ok(default),
        }
    }
}

fn parse_f64(v: &str, line: usize, key: &str) -> Result<f64, ParseError> {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => fail(line, format!("`{key}` must be a finite number, got `{v}`")),
    }
}

fn parse_list(v: &str, line: usize, key: &str) -> Result<Vec<f64>, ParseError> {
    v.split(',')
        .map(|s| parse_f64(s.trim(), line, key))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateKind {
    TwoLevel,
    RaisedCosine,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimation {
    pub true_delay: f64,
    pub window_min: f64,
    pub window_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Simulation {
    pub trials: u64,
    pub seed: u64,
    pub antithetic: bool,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub id: String,
    pub grid: Grid,
    pub rate_kind: RateKind,
    pub rate: RateFunction,
    pub gain: GainModel,
    pub receiver: ReceiverConfig,
    pub thetas: Vec<f64>,
    pub estimation: Option<Estimation>,
    pub simulation: Option<Simulation>,
}

fn split_sections(text: &str) -> Result<BTreeMap<String, Section>, ParseError> {
    let mut sections: BTreeMap<String, Section> = BTreeMap::new();
    sections.insert(String::new(), Section::default());
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap().trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let Some(name) = rest.strip_suffix(']') else {
                return fail(line, format!("malformed section header `{content}`"));
            };
            let name = name.trim().to_string();
            if !SECTIONS.iter().any(|(s, _)| *s == name) || name.is_empty() {
                return fail(line, format!("unknown section [{name}]"));
            }
            if sections.contains_key(&name) {
                return fail(line, format!("duplicate section [{name}]"));
            }
            sections.insert(
                name.clone(),
                Section {
                    line,
                    entries: BTreeMap::new(),
                },
            );
            current = name;
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return fail(line, format!("expected `key = value`, got `{content}`"));
        };
        let (key, value) = (key.trim(), value.trim());
        let allowed = SECTIONS.iter().find(|(s, _)| *s == current).unwrap().1;
        if !allowed.contains(&key) {
            let place = if current.is_empty() {
                "before the first section".to_string()
            } else {
                format!("in [{current}]")
            };
            return fail(line, format!("unknown key `{key}` {place}"));
        }
        if value.is_empty() {
            return fail(line, format!("empty value for `{key}`"));
        }
        let section = sections.get_mut(&current).unwrap();
        if section.entries.contains_key(key) {
            return fail(line, format!("duplicate key `{key}`"));
        }
        section
            .entries
            .insert(key.to_string(), (value.to_string(), line));
    }
    Ok(sections)
}

fn require_section<'a>(
    sections: &'a BTreeMap<String, Section>,
    name: &str,
    eof: usize,
) -> Result<&'a Section, ParseError> {
    sections
        .get(name)
        .map_or_else(|| fail(eof, format!("missing section [{name}]")), Ok)
}

fn domain_at<T>(line: usize, r: apdcorr::Result<T>) -> Result<T, ParseError> {
    r.or_else(|e| fail(line, e.to_string()))
}

pub fn parse(text: &str) -> Result<Scenario, ParseError> {
    let sections = split_sections(text)?;
    let eof = text.lines().count().max(1);
    let id = sections[""]
        .get("id")
        .map_or("scenario", |(v, _)| v)
        .to_string();

    let rate_sec = require_section(&sections, "rate", eof)?;
    let (kind, kind_line) = rate_sec.require("rate", "kind")?;
    let rate_kind = match kind {
        "two_level" => RateKind::TwoLevel,
        "raised_cosine" => RateKind::RaisedCosine,
        "table" => RateKind::Table,
        other => {
            return fail(
                kind_line,
                format!("unknown rate kind `{other}` (two_level, raised_cosine, table)"),
            )
        }
    };
    let table = match rate_kind {
        RateKind::Table => {
            let (v, l) = rate_sec.require("rate", "values")?;
            Some((parse_list(v, l, "values")?, l))
        }
        _ => None,
    };

    let grid_sec = require_section(&sections, "grid", eof)?;
    let horizon = grid_sec.number("grid", "horizon")?;
    let samples = match (grid_sec.get("samples"), &table) {
        (Some((v, l)), _) => match v.parse::<usize>() {
            Ok(n) => (n, l),
            Err(_) => {
                return fail(
                    l,
                    format!("`samples` must be a positive integer, got `{v}`"),
                )
            }
        },
        (None, Some((t, l))) => (t.len(), *l),
        (None, None) => (DEFAULT_SAMPLES, grid_sec.line),
    };
    let grid = domain_at(samples.1, Grid::new(horizon, samples.0))?;

    let dark = rate_sec.number_or("dark", 0.0)?;
    let rate = match rate_kind {
        RateKind::TwoLevel => {
            let l1 = rate_sec.number("rate", "lambda1")?;
            let l2 = rate_sec.number("rate", "lambda2")?;
            let base = domain_at(rate_sec.line, two_level_rate(l1, l2, grid))?;
            let wf = domain_at(rate_sec.line, base.waveform().map(|v| v + dark))?;
            domain_at(rate_sec.line, RateFunction::new(wf, dark))?
        }
        RateKind::RaisedCosine => {
            let a = rate_sec.number("rate", "amplitude")?;
            let start = rate_sec.number("rate", "start")?;
            let width = rate_sec.number("rate", "width")?;
            domain_at(
                rate_sec.line,
                raised_cosine_rate(a, start, width, dark, grid),
            )?
        }
        RateKind::Table => {
            let (values, line) = table.unwrap();
            if values.len() != grid.len() {
                return fail(
                    line,
                    format!(
                        "table has {} values but the grid has {} samples",
                        values.len(),
                        grid.len()
                    ),
                );
            }
            let wf = domain_at(line, SampledWaveform::new(grid, values))?;
            domain_at(line, RateFunction::new(wf, dark))?
        }
    };

    let gain = match sections.get("gain") {
        None => GainModel::Deterministic,
        Some(sec) => {
            let (model, line) = sec.get("model").unwrap_or(("deterministic", sec.line));
            match model {
                "deterministic" => GainModel::Deterministic,
                "geometric" => {
                    domain_at(sec.line, GainModel::geometric(sec.number("gain", "zeta")?))?
                }
                other => {
                    return fail(
                        line,
                        format!("unknown gain model `{other}` (deterministic, geometric)"),
                    )
                }
            }
        }
    };

    let rx = require_section(&sections, "receiver", eof)?;
    let power = rx.number("receiver", "power")?;
    let receiver = match (rx.get("N0_over_qe2"), rx.get("N0"), rx.get("q_e")) {
        (Some((v, l)), None, None) => domain_at(
            l,
            ReceiverConfig::normalized(parse_f64(v, l, "N0_over_qe2")?, power, horizon),
        )?,
        (None, Some(_), Some(_)) => {
            let n0 = rx.number("receiver", "N0")?;
            let q = rx.number("receiver", "q_e")?;
            domain_at(rx.line, ReceiverConfig::new(n0, q, power, horizon))?
        }
        (Some(_), _, _) => {
            return fail(
                rx.line,
                "give either `N0_over_qe2` or `N0` with `q_e`, not both",
            )
        }
        (None, Some(_), None) => return fail(rx.line, "missing key `q_e` in [receiver]"),
        (None, None, _) => return fail(rx.line, "missing key `N0_over_qe2` in [receiver]"),
    };

    let thetas = match sections.get("detection").and_then(|s| s.get("theta")) {
        Some((v, l)) => {
            let t = parse_list(v, l, "theta")?;
            if t.iter().any(|&x| x < 0.0) {
                return fail(l, "threshold values must be >= 0");
            }
            t
        }
        None => Vec::new(),
    };

    let estimation = match sections.get("estimation") {
        None => None,
        Some(sec) => {
            let e = Estimation {
                true_delay: sec.number("estimation", "true_delay")?,
                window_min: sec.number("estimation", "window_min")?,
                window_max: sec.number("estimation", "window_max")?,
            };
            if e.window_min > e.window_max {
                return fail(sec.line, "window_min exceeds window_max");
            }
            Some(e)
        }
    };

    let simulation = match sections.get("simulation") {
        None => None,
        Some(sec) => {
            let int = |key: &str| -> Result<u64, ParseError> {
                let (v, l) = sec.require("simulation", key)?;
                v.parse::<u64>().or_else(|_| {
                    fail(
                        l,
                        format!("`{key}` must be a nonnegative integer, got `{v}`"),
                    )
                })
            };
            let trials = int("trials")?;
            if trials == 0 {
                return fail(
                    sec.require("simulation", "trials")?.1,
                    "`trials` must be at least 1",
                );
            }
            let antithetic = match sec.get("antithetic") {
                None | Some(("false", _)) => false,
                Some(("true", _)) => true,
                Some((v, l)) => {
                    return fail(l, format!("`antithetic` must be true or false, got `{v}`"))
                }
            };
            Some(Simulation {
                trials,
                seed: int("seed")?,
                antithetic,
            })
        }
    };

    Ok(Scenario {
        id,
        grid,
        rate_kind,
        rate,
        gain,
        receiver,
        thetas,
        estimation,
        simulation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG1: &str = "\
id = fig1
[grid]
horizon = 1
samples = 64   # coarse
[rate]
kind = two_level
lambda1 = 1
lambda2 = 10
[receiver]
N0_over_qe2 = 0.0001
power = 10
[detection]
theta = 0, 2.5, 5
";

    #[test]
    fn parses_a_full_scenario() {
        let s = parse(FIG1).unwrap();
        assert_eq!(s.id, "fig1");
        assert_eq!(s.grid.len(), 64);
        assert_eq!(s.rate_kind, RateKind::TwoLevel);
        assert_eq!(s.rate.values()[0], 1.0);
        assert_eq!(s.rate.values()[63], 10.0);
        assert_eq!(s.gain, GainModel::Deterministic);
        assert_eq!(s.receiver.n0, 1e-4);
        assert_eq!(s.thetas, vec![0.0, 2.5, 5.0]);
        assert!(s.simulation.is_none());
    }

    #[test]
    fn missing_key_names_the_key() {
        let text = FIG1.replace("lambda2 = 10\n", "");
        let e = parse(&text).unwrap_err();
        assert!(e.msg.contains("lambda2"), "{e}");
        assert_eq!(e.line, 5);
    }

    #[test]
    fn bad_lines_carry_line_numbers() {
        let e = parse(&FIG1.replace("samples = 64", "samples = many")).unwrap_err();
        assert_eq!(e.line, 4);
        let e = parse(&FIG1.replace("lambda1 = 1", "lambda1 1")).unwrap_err();
        assert_eq!(e.line, 7);
        let e = parse(&FIG1.replace("[detection]", "[detect]")).unwrap_err();
        assert_eq!(e.line, 12);
        let e = parse(&FIG1.replace("power = 10", "power = 10\nN0 = 1")).unwrap_err();
        assert!(e.msg.contains("not both"));
    }

    #[test]
    fn table_rate_sets_grid_size() {
        let text = "[grid]\nhorizon = 2\n[rate]\nkind = table\nvalues = 0,1,2,3,4,5,6,7,8,9,10,11,12,13,14,15\n[receiver]\nN0 = 2e-38\nq_e = 1.6e-19\npower = 1\n[gain]\nmodel = geometric\nzeta = 0.5\n";
        let s = parse(text).unwrap();
        assert_eq!(s.grid.len(), 16);
        assert_eq!(s.gain, GainModel::Geometric { zeta: 0.5 });
        assert!((s.receiver.q_e - 1.6e-19).abs() < 1e-30);
        let e = parse(&text.replace("zeta = 0.5", "zeta = -1")).unwrap_err();
        assert_eq!(e.line, 10);
    }
}
