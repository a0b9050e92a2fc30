//! Unit strings such as `µg/mL`, `mg·h/L` or `mL/min/kg`, parsed into
//! dimension exponents plus an exact scale to the canonical PK units
//! (mg, L, h, mol, kg body mass).
//!
//! Grammar: `unit := term (sep term)*`, `sep := '/' | '·' | '*' | '.'`,
//! `term := prefix? base ('^'? int)?`. Each `/` divides only the term that
//! follows it, so `mL/min/kg` is `mL·min⁻¹·kg⁻¹`. Whitespace between two
//! terms multiplies. A leading `1` (as in `1/h`) is allowed.
//!
//! A `kg` term is body mass when it follows a second `/` or sits in the
//! denominator of an expression whose numerator carries a volume (`L/kg`,
//! `mL/kg/min`). `kgBW` always means body mass.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Base dimensions in canonical sort order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseDimension {
    Mass,
    Volume,
    Time,
    Amount,
    BodyMass,
}

impl BaseDimension {
    pub const ALL: [BaseDimension; 5] = [
        BaseDimension::Mass,
        BaseDimension::Volume,
        BaseDimension::Time,
        BaseDimension::Amount,
        BaseDimension::BodyMass,
    ];

    fn index(self) -> usize {
        self as usize
    }

    fn canonical_symbol(self) -> &'static str {
        match self {
            BaseDimension::Mass => "mg",
            BaseDimension::Volume => "L",
            BaseDimension::Time => "h",
            BaseDimension::Amount => "mol",
            BaseDimension::BodyMass => "kg",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseUnit {
    Gram,
    Liter,
    Second,
    Minute,
    Hour,
    Day,
    Mole,
    /// Kilogram of body weight.
    BodyKilogram,
}

impl BaseUnit {
    pub fn dimension(self) -> BaseDimension {
        match self {
            BaseUnit::Gram => BaseDimension::Mass,
            BaseUnit::Liter => BaseDimension::Volume,
            BaseUnit::Second | BaseUnit::Minute | BaseUnit::Hour | BaseUnit::Day => BaseDimension::Time,
            BaseUnit::Mole => BaseDimension::Amount,
            BaseUnit::BodyKilogram => BaseDimension::BodyMass,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            BaseUnit::Gram => "g",
            BaseUnit::Liter => "L",
            BaseUnit::Second => "s",
            BaseUnit::Minute => "min",
            BaseUnit::Hour => "h",
            BaseUnit::Day => "d",
            BaseUnit::Mole => "mol",
            BaseUnit::BodyKilogram => "kgBW",
        }
    }

    /// Canonical-unit value of one unprefixed unit as `(num, den, pow10)`.
    fn to_canonical(self) -> (u128, u128, i32) {
        match self {
            BaseUnit::Gram => (1, 1, 3),
            BaseUnit::Liter | BaseUnit::Hour | BaseUnit::Mole | BaseUnit::BodyKilogram => (1, 1, 0),
            BaseUnit::Second => (1, 3600, 0),
            BaseUnit::Minute => (1, 60, 0),
            BaseUnit::Day => (24, 1, 0),
        }
    }

    fn accepts_prefix(self) -> bool {
        matches!(self, BaseUnit::Gram | BaseUnit::Liter | BaseUnit::Second | BaseUnit::Mole)
    }
}

/// One parsed term: `(10^prefix_power · unit)^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitFactor {
    pub unit: BaseUnit,
    pub prefix_power: i32,
    pub exponent: i32,
}

impl UnitFactor {
    pub fn dimension(&self) -> BaseDimension {
        self.unit.dimension()
    }
}

/// A product of unit factors with its canonical dimension vector and the
/// factor that converts a value into the canonical unit of that dimension.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnitExpression {
    factors: Vec<UnitFactor>,
    dimensions: [i32; 5],
    scale_to_canonical: f64,
    /// The scale as a reduced fraction when both parts fit in an f64 exactly.
    #[serde(default)]
    ratio: Option<(u64, u64)>,
}

impl PartialEq for UnitExpression {
    fn eq(&self, other: &Self) -> bool {
        self.dimensions == other.dimensions && self.scale_to_canonical == other.scale_to_canonical
    }
}

impl UnitExpression {
    pub fn dimensionless() -> Self {
        Self::from_factors(Vec::new())
    }

    pub fn from_factors(raw: Vec<UnitFactor>) -> Self {
        let mut factors: Vec<UnitFactor> = Vec::new();
        for f in raw {
            match factors
                .iter_mut()
                .find(|g| g.unit == f.unit && g.prefix_power == f.prefix_power)
            {
                Some(g) => g.exponent += f.exponent,
                None => factors.push(f),
            }
        }
        factors.retain(|f| f.exponent != 0);
        factors.sort_by_key(|f| (f.dimension(), f.prefix_power));

        let mut dimensions = [0; 5];
        let (mut num, mut den, mut pow10) = (1u128, 1u128, 0i32);
        for f in &factors {
            dimensions[f.dimension().index()] += f.exponent;
            let (n, d, p) = f.unit.to_canonical();
            let (n, d) = if f.exponent > 0 { (n, d) } else { (d, n) };
            for _ in 0..f.exponent.unsigned_abs() {
                num = num.saturating_mul(n);
                den = den.saturating_mul(d);
            }
            pow10 += (p + f.prefix_power) * f.exponent;
        }
        let (n, d) = apply_pow10(num, den, pow10);
        let g = gcd(n, d);
        const EXACT: u128 = 1 << 53;
        let ratio = (n <= EXACT && d <= EXACT && g > 0).then(|| ((n / g) as u64, (d / g) as u64));
        Self {
            factors,
            dimensions,
            scale_to_canonical: exact_scale(num, den, pow10),
            ratio,
        }
    }

    /// Exponent of every base dimension, in [`BaseDimension::ALL`] order.
    pub fn dimensions(&self) -> [i32; 5] {
        self.dimensions
    }

    pub fn factors(&self) -> &[UnitFactor] {
        &self.factors
    }

    pub fn scale_to_canonical(&self) -> f64 {
        self.scale_to_canonical
    }

    /// `value` in the canonical unit. Integer and reciprocal-integer scales
    /// round once, so 350 ng/mL gives exactly 0.35 mg/L.
    pub fn convert(&self, value: f64) -> f64 {
        match self.ratio {
            Some((n, 1)) => value * n as f64,
            Some((1, d)) => value / d as f64,
            Some((n, d)) => value * n as f64 / d as f64,
            None => value * self.scale_to_canonical,
        }
    }

    /// The canonical unit for this expression's dimension (scale 1).
    pub fn canonical(&self) -> UnitExpression {
        canonical_for(self.dimensions)
    }

    pub fn is_canonical(&self) -> bool {
        self.scale_to_canonical == 1.0 && *self == self.canonical()
    }

    /// Symbol string of the canonical unit, re-parseable by [`parse_unit`].
    pub fn canonical_symbol(&self) -> String {
        format_dimensions(self.dimensions)
    }
}

impl fmt::Display for UnitExpression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.factors.is_empty() {
            return write!(f, "1");
        }
        let parts: Vec<String> = self
            .factors
            .iter()
            .map(|x| {
                let prefix = match x.prefix_power {
                    3 => "k",
                    -3 => "m",
                    -6 => "µ",
                    -9 => "n",
                    _ => "",
                };
                if x.exponent == 1 {
                    format!("{prefix}{}", x.unit.symbol())
                } else {
                    format!("{prefix}{}^{}", x.unit.symbol(), x.exponent)
                }
            })
            .collect();
        write!(f, "{}", parts.join("·"))
    }
}

fn pow10_int(p: u32) -> u128 {
    10u128.saturating_pow(p)
}

fn apply_pow10(num: u128, den: u128, pow10: i32) -> (u128, u128) {
    if pow10 >= 0 {
        (num.saturating_mul(pow10_int(pow10 as u32)), den)
    } else {
        (num, den.saturating_mul(pow10_int(pow10.unsigned_abs())))
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// `num / den * 10^pow10` with a single rounding when the integers are exact.
fn exact_scale(num: u128, den: u128, pow10: i32) -> f64 {
    let (n, d) = apply_pow10(num, den, pow10);
    const EXACT: u128 = 1 << 53;
    if n <= EXACT && d <= EXACT {
        n as f64 / d as f64
    } else {
        num as f64 / den as f64 * format!("1e{pow10}").parse::<f64>().unwrap_or(f64::NAN)
    }
}

fn canonical_for(dimensions: [i32; 5]) -> UnitExpression {
    let factors = BaseDimension::ALL
        .iter()
        .zip(dimensions)
        .filter(|(_, e)| *e != 0)
        .map(|(&dim, exponent)| {
            let (unit, prefix_power) = match dim {
                BaseDimension::Mass => (BaseUnit::Gram, -3),
                BaseDimension::Volume => (BaseUnit::Liter, 0),
                BaseDimension::Time => (BaseUnit::Hour, 0),
                BaseDimension::Amount => (BaseUnit::Mole, 0),
                BaseDimension::BodyMass => (BaseUnit::BodyKilogram, 0),
            };
            UnitFactor {
                unit,
                prefix_power,
                exponent,
            }
        })
        .collect();
    UnitExpression::from_factors(factors)
}

/// Formats a dimension vector with canonical symbols: numerator terms joined
/// by `·`, then one `/term` per denominator factor.
fn format_dimensions(dimensions: [i32; 5]) -> String {
    const ORDER: [BaseDimension; 5] = [
        BaseDimension::Mass,
        BaseDimension::Amount,
        BaseDimension::Volume,
        BaseDimension::Time,
        BaseDimension::BodyMass,
    ];
    let volume_up = dimensions[BaseDimension::Volume.index()] > 0;
    let term = |dim: BaseDimension, e: i32| {
        let sym = if dim == BaseDimension::BodyMass && !volume_up {
            "kgBW"
        } else {
            dim.canonical_symbol()
        };
        if e == 1 {
            sym.to_string()
        } else {
            format!("{sym}^{e}")
        }
    };
    let num: Vec<String> = ORDER
        .iter()
        .filter(|d| dimensions[d.index()] > 0)
        .map(|&d| term(d, dimensions[d.index()]))
        .collect();
    let den: Vec<String> = ORDER
        .iter()
        .filter(|d| dimensions[d.index()] < 0)
        .map(|&d| term(d, -dimensions[d.index()]))
        .collect();
    let mut out = if num.is_empty() { "1".to_string() } else { num.join("·") };
    for d in den {
        out.push('/');
        out.push_str(&d);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Sep {
    Mul,
    Div,
}

struct RawTerm {
    unit: BaseUnit,
    prefix_power: i32,
    exponent: i32,
    /// Number of `/` seen before this term.
    slashes: usize,
    explicit_kg: bool,
}

fn is_sep(c: char) -> Option<Sep> {
    match c {
        '/' => Some(Sep::Div),
        '·' | '*' | '.' | '⋅' | '•' => Some(Sep::Mul),
        _ => None,
    }
}

fn superscript_digit(c: char) -> Option<u32> {
    Some(match c {
        '⁰' => 0,
        '¹' => 1,
        '²' => 2,
        '³' => 3,
        '⁴' => 4,
        '⁵' => 5,
        '⁶' => 6,
        '⁷' => 7,
        '⁸' => 8,
        '⁹' => 9,
        _ => return None,
    })
}

fn resolve_word(word: &str) -> Option<(BaseUnit, i32, bool)> {
    let whole = match word {
        "g" => Some(BaseUnit::Gram),
        "L" | "l" => Some(BaseUnit::Liter),
        "s" | "sec" => Some(BaseUnit::Second),
        "min" | "mins" => Some(BaseUnit::Minute),
        "h" | "hr" | "hrs" | "hour" | "hours" => Some(BaseUnit::Hour),
        "d" | "day" | "days" => Some(BaseUnit::Day),
        "mol" => Some(BaseUnit::Mole),
        "kgBW" | "kgbw" | "kg_bw" => return Some((BaseUnit::BodyKilogram, 0, true)),
        _ => None,
    };
    if let Some(unit) = whole {
        return Some((unit, 0, false));
    }
    let mut chars = word.chars();
    let first = chars.next()?;
    let power = match first {
        'k' => 3,
        'm' => -3,
        'µ' | 'μ' | 'u' => -6,
        'n' => -9,
        _ => return None,
    };
    let rest = chars.as_str();
    let unit = match rest {
        "g" => BaseUnit::Gram,
        "L" | "l" => BaseUnit::Liter,
        "s" => BaseUnit::Second,
        "mol" => BaseUnit::Mole,
        _ => return None,
    };
    debug_assert!(unit.accepts_prefix());
    Some((unit, power, false))
}

/// Parses a unit string. Errors carry the offending token and its character
/// position.
pub fn parse_unit(text: &str) -> Result<UnitExpression> {
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    let skip_ws = |i: &mut usize| {
        while *i < chars.len() && chars[*i].is_whitespace() {
            *i += 1;
        }
    };
    let err = |token: String, position: usize| Error::UnitToken { token, position };

    skip_ws(&mut i);
    if i == chars.len() {
        return Err(err(String::new(), 0));
    }

    let mut terms: Vec<RawTerm> = Vec::new();
    let mut pending = Sep::Mul;
    let mut slashes = 0usize;
    let mut expect_term = true;
    // a leading "1" numerator, as in "1/h"
    if chars[i] == '1' && chars[i + 1..].iter().find(|c| !c.is_whitespace()) == Some(&'/') {
        i += 1;
        skip_ws(&mut i);
    }
    if i < chars.len() && chars[i] == '/' {
        expect_term = false;
    }

    while i < chars.len() {
        skip_ws(&mut i);
        if i == chars.len() {
            break;
        }
        if let Some(sep) = is_sep(chars[i]) {
            if expect_term && !(sep == Sep::Div && terms.is_empty()) {
                return Err(err(chars[i].to_string(), i));
            }
            pending = sep;
            if sep == Sep::Div {
                slashes += 1;
            }
            expect_term = true;
            i += 1;
            continue;
        }
        if !expect_term {
            // whitespace-separated terms multiply
            pending = Sep::Mul;
        }
        let start = i;
        while i < chars.len() && (chars[i].is_alphabetic() || chars[i] == '_') {
            i += 1;
        }
        if start == i {
            let end = (i + 1).min(chars.len());
            return Err(err(chars[start..end].iter().collect(), start));
        }
        let word: String = chars[start..i].iter().collect();
        let (unit, prefix_power, explicit_kg) = resolve_word(&word).ok_or_else(|| err(word.clone(), start))?;

        // optional exponent: ^-2, -1, 2, ², ⁻¹
        let exp_start = i;
        if i < chars.len() && chars[i] == '^' {
            i += 1;
        }
        let mut negative = false;
        if i < chars.len() && matches!(chars[i], '-' | '−' | '⁻') {
            negative = true;
            i += 1;
        } else if i < chars.len() && chars[i] == '+' {
            i += 1;
        }
        let digits_start = i;
        let mut value: i64 = 0;
        while i < chars.len() {
            let d = chars[i].to_digit(10).or_else(|| superscript_digit(chars[i]));
            match d {
                Some(d) => {
                    value = value * 10 + d as i64;
                    if value > 64 {
                        return Err(err(chars[exp_start..=i].iter().collect(), exp_start));
                    }
                    i += 1;
                }
                None => break,
            }
        }
        let exponent = if digits_start == i {
            if i != exp_start {
                return Err(err(chars[exp_start..i].iter().collect(), exp_start));
            }
            1
        } else {
            let e = if negative { -value } else { value } as i32;
            if e == 0 {
                return Err(err(chars[exp_start..i].iter().collect(), exp_start));
            }
            e
        };
        let signed = if pending == Sep::Div { -exponent } else { exponent };
        terms.push(RawTerm {
            unit,
            prefix_power,
            exponent: signed,
            slashes,
            explicit_kg,
        });
        expect_term = false;
        pending = Sep::Mul;
    }
    if expect_term {
        return Err(err(String::new(), chars.len()));
    }

    let volume_up = terms
        .iter()
        .any(|t| t.unit == BaseUnit::Liter && t.exponent > 0);
    let factors = terms
        .into_iter()
        .map(|t| {
            let body = t.explicit_kg
                || (t.unit == BaseUnit::Gram && t.prefix_power == 3 && t.exponent < 0 && (t.slashes >= 2 || volume_up));
            if body {
                UnitFactor {
                    unit: BaseUnit::BodyKilogram,
                    prefix_power: 0,
                    exponent: t.exponent,
                }
            } else {
                UnitFactor {
                    unit: t.unit,
                    prefix_power: t.prefix_power,
                    exponent: t.exponent,
                }
            }
        })
        .collect();
    Ok(UnitExpression::from_factors(factors))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(u: &UnitExpression) -> [i32; 5] {
        u.dimensions()
    }

    #[test]
    fn concentration_scale() {
        let u = parse_unit("µg/mL").unwrap();
        assert_eq!(dims(&u), [1, -1, 0, 0, 0]);
        assert_eq!(u.scale_to_canonical(), 1.0);
        assert_eq!(parse_unit("ug/ml").unwrap(), u);
        assert_eq!(parse_unit("μg/mL").unwrap(), u);
        assert_eq!(parse_unit("ng/mL").unwrap().scale_to_canonical(), 0.001);
    }

    #[test]
    fn canonical_time() {
        let u = parse_unit("h").unwrap();
        assert_eq!(dims(&u), [0, 0, 1, 0, 0]);
        assert_eq!(u.scale_to_canonical(), 1.0);
        assert_eq!(parse_unit("min").unwrap().scale_to_canonical(), 1.0 / 60.0);
        assert_eq!(parse_unit("d").unwrap().scale_to_canonical(), 24.0);
    }

    #[test]
    fn clearance_per_body_weight() {
        let u = parse_unit("mL/min/kg").unwrap();
        assert_eq!(dims(&u), [0, 1, -1, 0, -1]);
        assert!((u.scale_to_canonical() - 0.06).abs() < 1e-15);
        let same = parse_unit("mL/kg/min").unwrap();
        assert_eq!(same, u);
        assert_eq!(parse_unit("L/kg").unwrap().dimensions(), [0, 1, 0, 0, -1]);
    }

    #[test]
    fn kg_without_volume_is_mass() {
        assert_eq!(parse_unit("mg/kg").unwrap().dimensions(), [0, 0, 0, 0, 0]);
        assert_eq!(parse_unit("mg/kgBW").unwrap().dimensions(), [1, 0, 0, 0, -1]);
    }

    #[test]
    fn separators_and_exponents() {
        let auc = parse_unit("mg·h/L").unwrap();
        assert_eq!(auc.dimensions(), [1, -1, 1, 0, 0]);
        for s in ["mg*h/L", "mg.h/L", "mg h/L", "mg · h / L", "mg·h·L^-1", "mg·h·L-1", "mg·h·L⁻¹"] {
            assert_eq!(parse_unit(s).unwrap(), auc, "{s}");
        }
        // left-associative division
        assert_eq!(parse_unit("µg/mL·h").unwrap(), parse_unit("µg·h/mL").unwrap());
        assert_eq!(parse_unit("1/h").unwrap().dimensions(), [0, 0, -1, 0, 0]);
        assert_eq!(parse_unit("h^-1").unwrap(), parse_unit("1/h").unwrap());
        assert_eq!(parse_unit("/min").unwrap().scale_to_canonical(), 60.0);
        assert_eq!(parse_unit("L^2").unwrap().dimensions(), [0, 2, 0, 0, 0]);
    }

    #[test]
    fn errors_carry_position() {
        match parse_unit("mg/dL") {
            Err(Error::UnitToken { token, position }) => {
                assert_eq!(token, "dL");
                assert_eq!(position, 3);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_unit(""), Err(Error::UnitToken { .. })));
        assert!(matches!(parse_unit("mg//L"), Err(Error::UnitToken { position: 3, .. })));
        assert!(matches!(parse_unit("mg/"), Err(Error::UnitToken { .. })));
        assert!(matches!(parse_unit("mg^"), Err(Error::UnitToken { .. })));
        assert!(matches!(parse_unit("kmin"), Err(Error::UnitToken { .. })));
        assert!(matches!(parse_unit("%"), Err(Error::UnitToken { position: 0, .. })));
    }

    #[test]
    fn canonical_symbols_reparse() {
        for (s, sym) in [
            ("µg/mL", "mg/L"),
            ("ng·h/mL", "mg·h/L"),
            ("min", "h"),
            ("mL/min/kg", "L/h/kg"),
            ("mL/kg", "L/kg"),
            ("1/min", "1/h"),
            ("nmol/L", "mol/L"),
        ] {
            let u = parse_unit(s).unwrap();
            assert_eq!(u.canonical_symbol(), sym);
            let c = parse_unit(sym).unwrap();
            assert_eq!(c, u.canonical());
            assert!(c.is_canonical());
        }
    }
}
