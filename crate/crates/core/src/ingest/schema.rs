//! Column-role and parameter-kind lookup against an editable alias table.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::units::UnitExpression;

const DEFAULT_ALIASES: &str = include_str!("aliases.json");

/// Prefix matching is only allowed for aliases at least this long.
const MIN_PREFIX_ALIAS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Drug,
    Species,
    Parameter,
    Unit,
    Value,
    Statistic,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParameterKind {
    Cmax,
    Tmax,
    Auc,
    HalfLife,
    Cl,
    Vd,
    Mrt,
    KRate,
    Other(String),
}

impl ParameterKind {
    pub const TRACKED: [ParameterKind; 8] = [
        ParameterKind::Cmax,
        ParameterKind::Tmax,
        ParameterKind::Auc,
        ParameterKind::HalfLife,
        ParameterKind::Cl,
        ParameterKind::Vd,
        ParameterKind::Mrt,
        ParameterKind::KRate,
    ];

    fn key(&self) -> &str {
        match self {
            ParameterKind::Cmax => "cmax",
            ParameterKind::Tmax => "tmax",
            ParameterKind::Auc => "auc",
            ParameterKind::HalfLife => "half_life",
            ParameterKind::Cl => "cl",
            ParameterKind::Vd => "vd",
            ParameterKind::Mrt => "mrt",
            ParameterKind::KRate => "k_rate",
            ParameterKind::Other(s) => s,
        }
    }

    fn from_key(key: &str) -> ParameterKind {
        Self::TRACKED
            .into_iter()
            .find(|k| k.key() == key)
            .unwrap_or_else(|| ParameterKind::Other(key.to_string()))
    }

    /// Required dimension exponents `[mass, volume, time, amount, body_mass]`;
    /// `None` for untracked kinds.
    pub fn canonical_dimensions(&self) -> Option<[i32; 5]> {
        Some(match self {
            ParameterKind::Cmax => [1, -1, 0, 0, 0],
            ParameterKind::Auc => [1, -1, 1, 0, 0],
            ParameterKind::HalfLife | ParameterKind::Tmax | ParameterKind::Mrt => [0, 0, 1, 0, 0],
            ParameterKind::Cl => [0, 1, -1, 0, -1],
            ParameterKind::Vd => [0, 1, 0, 0, -1],
            ParameterKind::KRate => [0, 0, -1, 0, 0],
            ParameterKind::Other(_) => return None,
        })
    }
}

impl fmt::Display for ParameterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// Converts a value into the canonical unit of `kind`.
pub fn to_si(value: f64, unit: &UnitExpression, kind: &ParameterKind) -> Result<(f64, UnitExpression)> {
    if let Some(dims) = kind.canonical_dimensions() {
        if dims != unit.dimensions() {
            return Err(Error::IncompatibleDimension {
                unit: unit.to_string(),
                kind: kind.to_string(),
            });
        }
    }
    Ok((unit.convert(value), unit.canonical()))
}

/// Lowercases, maps `½ ∞ λ`, drops parenthesized segments and keeps only
/// alphanumerics and `/`.
pub fn normalize_label(label: &str) -> String {
    let mut out = String::with_capacity(label.len());
    let mut depth = 0usize;
    for c in label.chars() {
        match c {
            '(' | '[' | '{' => depth += 1,
            ')' | ']' | '}' => depth = depth.saturating_sub(1),
            _ if depth > 0 => {}
            '½' => out.push_str("1/2"),
            '∞' => out.push_str("inf"),
            'λ' | 'Λ' => out.push_str("lambda"),
            '/' => out.push('/'),
            c if c.is_alphanumeric() => out.extend(c.to_lowercase()),
            _ => {}
        }
    }
    out
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AliasFile {
    #[serde(default)]
    pub drug: Vec<String>,
    #[serde(default)]
    pub species: Vec<String>,
    #[serde(default)]
    pub parameter: Vec<String>,
    #[serde(default)]
    pub unit: Vec<String>,
    #[serde(default)]
    pub value: Vec<String>,
    #[serde(default)]
    pub statistic: Vec<String>,
    #[serde(default)]
    pub parameter_kinds: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone)]
enum Target {
    Role(Role),
    Kind(ParameterKind),
}

/// Normalized alias table. Immutable once built.
#[derive(Debug, Clone)]
pub struct AliasDictionary {
    entries: Vec<(String, Target)>,
}

impl Default for AliasDictionary {
    fn default() -> Self {
        Self::from_json(DEFAULT_ALIASES).expect("bundled alias table is valid")
    }
}

impl AliasDictionary {
    pub fn from_file(file: AliasFile) -> Self {
        let mut entries = Vec::new();
        let roles = [
            (Role::Drug, file.drug),
            (Role::Species, file.species),
            (Role::Parameter, file.parameter),
            (Role::Unit, file.unit),
            (Role::Value, file.value),
            (Role::Statistic, file.statistic),
        ];
        for (role, aliases) in roles {
            for a in aliases {
                entries.push((normalize_label(&a), Target::Role(role)));
            }
        }
        for (key, aliases) in file.parameter_kinds {
            let kind = ParameterKind::from_key(&key);
            entries.push((normalize_label(&key), Target::Kind(kind.clone())));
            for a in aliases {
                entries.push((normalize_label(&a), Target::Kind(kind.clone())));
            }
        }
        entries.retain(|(a, _)| !a.is_empty());
        Self { entries }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(Self::from_file(serde_json::from_str(text)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Longest alias matching `label` exactly, or as a prefix when the alias
    /// has at least three characters. Earlier entries win ties.
    fn lookup(&self, label: &str) -> Option<&Target> {
        let norm = normalize_label(label);
        if norm.is_empty() {
            return None;
        }
        let mut best: Option<(usize, &Target)> = None;
        for (alias, target) in &self.entries {
            let hit = norm == *alias || (alias.chars().count() >= MIN_PREFIX_ALIAS && norm.starts_with(alias.as_str()));
            if hit && best.map_or(true, |(len, _)| alias.len() > len) {
                best = Some((alias.len(), target));
            }
        }
        best.map(|(_, t)| t)
    }

    pub fn role(&self, label: &str) -> Role {
        match self.lookup(label) {
            Some(Target::Role(r)) => *r,
            Some(Target::Kind(_)) => Role::Parameter,
            None => Role::Other,
        }
    }

    /// The parameter kind named by `label`, if any.
    pub fn parameter_kind(&self, label: &str) -> Option<ParameterKind> {
        match self.lookup(label) {
            Some(Target::Kind(k)) => Some(k.clone()),
            _ => None,
        }
    }
}

/// External helper consulted for columns the alias table leaves unresolved.
pub trait SchemaAssist {
    fn suggest(&self, header: &str) -> Option<Role>;
}

pub fn map_schema(header_cells: &[String], aliases: &AliasDictionary) -> Vec<Role> {
    header_cells.iter().map(|h| aliases.role(h)).collect()
}

/// As [`map_schema`], letting `assist` fill in only `Other` columns.
pub fn map_schema_with_assist(
    header_cells: &[String],
    aliases: &AliasDictionary,
    assist: &dyn SchemaAssist,
) -> Vec<Role> {
    header_cells
        .iter()
        .map(|h| match aliases.role(h) {
            Role::Other => assist.suggest(h).unwrap_or(Role::Other),
            r => r,
        })
        .collect()
}

/// The first parenthesized or bracketed segment of a header that parses as
/// a unit, or the whole cell when it is itself a unit.
pub fn header_unit(header: &str) -> Option<UnitExpression> {
    let mut rest = header;
    while let Some(open) = rest.find(['(', '[']) {
        let close_char = if rest[open..].starts_with('(') { ')' } else { ']' };
        let Some(len) = rest[open + 1..].find(close_char) else {
            break;
        };
        let inner = &rest[open + 1..open + 1 + len];
        if let Ok(u) = super::units::parse_unit(inner) {
            return Some(u);
        }
        rest = &rest[open + 1 + len + 1..];
    }
    super::units::parse_unit(header.trim()).ok()
}
