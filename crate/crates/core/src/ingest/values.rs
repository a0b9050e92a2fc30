//! Numeric table cells: plain numbers, `mean ± sd`, `<LOQ`, ranges and
//! missing markers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Qualifier {
    Exact,
    BelowLoq,
    RangeMidpoint,
    Missing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParsedValue {
    /// `None` iff the qualifier is `Missing`.
    pub value: Option<f64>,
    pub error_sd: Option<f64>,
    pub qualifier: Qualifier,
}

impl ParsedValue {
    pub const MISSING: ParsedValue = ParsedValue {
        value: None,
        error_sd: None,
        qualifier: Qualifier::Missing,
    };

    fn exact(value: f64, error_sd: Option<f64>) -> Self {
        Self {
            value: Some(value),
            error_sd,
            qualifier: Qualifier::Exact,
        }
    }
}

const MISSING_MARKERS: [&str; 9] = ["", "nd", "na", "n/a", "nr", "nc", "-", "—", "–"];

const FOOTNOTE_MARKS: [char; 8] = ['*', '†', '‡', '§', '¶', '#', '‖', '′'];

fn is_superscript_letter(c: char) -> bool {
    matches!(c, 'ᵃ'..='ᵐ' | 'ⁱ' | 'ⁿ' | 'ʰ'..='ʸ' | 'ᶜ' | 'ᶠ')
}

fn strip_footnotes(s: &str) -> &str {
    s.trim_end_matches(|c: char| FOOTNOTE_MARKS.contains(&c) || is_superscript_letter(c) || c.is_whitespace())
}

/// Strict decimal number: optional sign, digits with at most one decimal
/// point or a single decimal comma, optional exponent. Grouped thousands
/// (`1,234` or `1,234.5`) are rejected.
pub fn parse_number(text: &str) -> Option<f64> {
    let s = text.trim();
    let body = s.strip_prefix(['-', '−', '+']).unwrap_or(s);
    let negative = body.len() != s.len() && matches!(s.chars().next(), Some('-' | '−'));
    let (mantissa, exponent) = match body.find(['e', 'E']) {
        Some(i) => (&body[..i], Some(&body[i + 1..])),
        None => (body, None),
    };
    let commas = mantissa.matches(',').count();
    let dots = mantissa.matches('.').count();
    if commas + dots > 1 {
        return None;
    }
    if commas == 1 {
        let (int, frac) = mantissa.split_once(',')?;
        // three trailing digits after an integer part reads as grouping
        if frac.len() == 3 && !int.is_empty() && int != "0" {
            return None;
        }
    }
    let mantissa = mantissa.replace(',', ".");
    let digits = mantissa.chars().filter(|c| c.is_ascii_digit()).count();
    if digits == 0 || !mantissa.chars().all(|c| c.is_ascii_digit() || c == '.') {
        return None;
    }
    let mut literal = mantissa;
    if let Some(e) = exponent {
        let e_body = e.strip_prefix(['-', '+']).unwrap_or(e);
        if e_body.is_empty() || !e_body.chars().all(|c| c.is_ascii_digit()) {
            return None;
        }
        literal.push('e');
        literal.push_str(e);
    }
    let v: f64 = literal.parse().ok()?;
    if !v.is_finite() {
        return None;
    }
    Some(if negative { -v } else { v })
}

/// Splits `a ± b` (also `+/-`, `+-`).
fn split_plus_minus(s: &str) -> Option<(&str, &str)> {
    for sep in ["±", "+/-", "+/−", "+-"] {
        if let Some((a, b)) = s.split_once(sep) {
            return Some((a, b));
        }
    }
    None
}

/// Splits a range `a–b`, `a—b`, `a-b` or `a to b`. A leading minus sign is
/// never a range separator.
fn split_range(s: &str) -> Option<(&str, &str)> {
    for sep in ['–', '—', '~'] {
        if let Some((a, b)) = s.split_once(sep) {
            return Some((a, b));
        }
    }
    if let Some((a, b)) = s.split_once(" to ") {
        return Some((a, b));
    }
    let start = usize::from(s.starts_with('-'));
    s[start..].find('-').map(|i| (&s[..start + i], &s[start + i + 1..]))
}

/// Parses one value cell.
pub fn parse_value(cell: &str) -> Result<ParsedValue> {
    let fail = || Error::Value(cell.to_string());
    let s = strip_footnotes(cell.trim());
    if MISSING_MARKERS.contains(&s.to_lowercase().as_str()) {
        return Ok(ParsedValue::MISSING);
    }
    if let Some(rest) = s.strip_prefix(['<', '≤']) {
        let rest = rest.strip_prefix('=').unwrap_or(rest);
        let v = parse_number(rest).ok_or_else(fail)?;
        return Ok(ParsedValue {
            value: Some(v),
            error_sd: None,
            qualifier: Qualifier::BelowLoq,
        });
    }
    if let Some((a, b)) = split_plus_minus(s) {
        let v = parse_number(a).ok_or_else(fail)?;
        let sd = parse_number(strip_footnotes(b)).ok_or_else(fail)?;
        if sd < 0.0 {
            return Err(fail());
        }
        return Ok(ParsedValue::exact(v, Some(sd)));
    }
    if let Some(v) = parse_number(s) {
        return Ok(ParsedValue::exact(v, None));
    }
    // "12.3 (4.5)" reports the SD in parentheses
    if let Some((a, b)) = s.split_once('(') {
        if let (Some(v), Some(sd)) = (parse_number(a), b.strip_suffix(')').and_then(parse_number)) {
            if sd >= 0.0 {
                return Ok(ParsedValue::exact(v, Some(sd)));
            }
        }
    }
    if let Some((a, b)) = split_range(s) {
        let lo = parse_number(a).ok_or_else(fail)?;
        let hi = parse_number(b).ok_or_else(fail)?;
        return Ok(ParsedValue {
            value: Some(lo + (hi - lo) / 2.0),
            error_sd: None,
            qualifier: Qualifier::RangeMidpoint,
        });
    }
    Err(fail())
}

/// True when a cell holds a parseable, non-missing number.
pub fn is_numeric_cell(cell: &str) -> bool {
    matches!(parse_value(cell), Ok(ParsedValue { value: Some(_), .. }))
}
