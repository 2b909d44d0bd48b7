//! Text output: C-style `%.12g` numbers and CSV tables with LF line endings.

use std::fmt::Write as _;

use crate::detection::ExponentCurve;
use crate::error::{domain, Result};

const SIGNIFICANT: i32 = 12;

/// Formats `v` like C's `printf("%.12g", v)`.
pub fn fmt_g(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let sci = format!("{:.*e}", (SIGNIFICANT - 1) as usize, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..SIGNIFICANT).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    } else {
        let fixed = format!("{:.*}", (SIGNIFICANT - 1 - exp) as usize, v);
        trim_zeros(&fixed).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// CSV with a header row and numeric columns of equal length.
pub fn csv_table(header: &[&str], columns: &[&[f64]]) -> Result<String> {
    if header.len() != columns.len() {
        return domain("header and column counts differ");
    }
    let rows = columns.first().map_or(0, |c| c.len());
    if columns.iter().any(|c| c.len() != rows) {
        return domain("columns have different lengths");
    }
    let mut out = header.join(",");
    out.push('\n');
    for i in 0..rows {
        for (j, c) in columns.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&fmt_g(c[i]));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Curve CSV: `theta,E_FA,E_MD_optimal,E_MD_omf,s_opt,c_opt`, followed by
/// one `E_MD_<label>` column per further fixed correlator. The curve must
/// carry a fixed correlator labelled `omf`.
pub fn curve_csv(curve: &ExponentCurve) -> Result<String> {
    let omf = curve
        .fixed
        .iter()
        .find(|(l, _)| l == "omf")
        .map(|(_, v)| v.as_slice());
    let Some(omf) = omf else {
        return domain("curve has no omf column");
    };
    let extra: Vec<(String, &[f64])> = curve
        .fixed
        .iter()
        .filter(|(l, _)| l != "omf")
        .map(|(l, v)| (format!("E_MD_{l}"), v.as_slice()))
        .collect();
    let mut header = vec![
        "theta",
        "E_FA",
        "E_MD_optimal",
        "E_MD_omf",
        "s_opt",
        "c_opt",
    ];
    header.extend(extra.iter().map(|(l, _)| l.as_str()));
    let mut columns: Vec<&[f64]> = vec![
        &curve.theta,
        &curve.e_fa,
        &curve.e_md_optimal,
        omf,
        &curve.s_opt,
        &curve.c_opt,
    ];
    columns.extend(extra.iter().map(|(_, v)| *v));
    csv_table(&header, &columns)
}

/// `key = value` lines, numbers in `%.12g`.
pub fn summary_block(entries: &[(&str, f64)]) -> String {
    let mut out = String::new();
    for (k, v) in entries {
        let _ = writeln!(out, "{k} = {}", fmt_g(*v));
    }
    out
}
