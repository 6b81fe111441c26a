//! Subgroup criteria: conjunctions of level-set and half-open interval
//! predicates, with canonicalization, row membership and a string form that
//! round-trips through [`Criterion::parse`].

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::{AttributeKind, DataSource};
use crate::error::{Error, Result};

/// Condition on a single attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// Categorical value is one of the listed levels.
    OneOf(BTreeSet<String>),
    /// Continuous value lies in `(lower, upper]`; `None` is unbounded.
    Interval { lower: Option<f64>, upper: Option<f64> },
}

impl Condition {
    fn lower(&self) -> f64 {
        match self {
            Condition::Interval { lower, .. } => lower.unwrap_or(f64::NEG_INFINITY),
            _ => f64::NEG_INFINITY,
        }
    }

    fn upper(&self) -> f64 {
        match self {
            Condition::Interval { upper, .. } => upper.unwrap_or(f64::INFINITY),
            _ => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub attribute: String,
    pub condition: Condition,
}

impl Predicate {
    pub fn one_of<I, S>(attribute: impl Into<String>, levels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let levels: BTreeSet<String> = levels.into_iter().map(Into::into).collect();
        if levels.is_empty() {
            return Err(Error::InvalidPredicate("empty level set".into()));
        }
        Ok(Self { attribute: attribute.into(), condition: Condition::OneOf(levels) })
    }

    /// `(lower, upper]` with infinite bounds meaning unbounded.
    pub fn interval(attribute: impl Into<String>, lower: f64, upper: f64) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() || lower >= upper {
            return Err(Error::InvalidPredicate(format!("interval ({lower}, {upper}] is empty")));
        }
        if lower == f64::NEG_INFINITY && upper == f64::INFINITY {
            return Err(Error::InvalidPredicate("interval has no finite bound".into()));
        }
        let wrap = |v: f64| if v.is_finite() { Some(v) } else { None };
        Ok(Self {
            attribute: attribute.into(),
            condition: Condition::Interval { lower: wrap(lower), upper: wrap(upper) },
        })
    }

    pub fn at_most(attribute: impl Into<String>, upper: f64) -> Result<Self> {
        Self::interval(attribute, f64::NEG_INFINITY, upper)
    }

    pub fn greater_than(attribute: impl Into<String>, lower: f64) -> Result<Self> {
        Self::interval(attribute, lower, f64::INFINITY)
    }

    /// Bounds of an interval predicate.
    pub fn bounds(&self) -> Option<(f64, f64)> {
        match self.condition {
            Condition::Interval { .. } => Some((self.condition.lower(), self.condition.upper())),
            Condition::OneOf(_) => None,
        }
    }

    pub fn levels(&self) -> Option<&BTreeSet<String>> {
        match &self.condition {
            Condition::OneOf(l) => Some(l),
            Condition::Interval { .. } => None,
        }
    }

    /// Check against a schema: the attribute must exist with a matching kind,
    /// and a level set must be a non-empty proper subset of the levels.
    pub fn validate(&self, schema: &[crate::data::AttributeSchema]) -> Result<usize> {
        let idx = schema
            .iter()
            .position(|a| a.name == self.attribute)
            .ok_or_else(|| Error::UnknownAttribute(self.attribute.clone()))?;
        match (&schema[idx].kind, &self.condition) {
            (AttributeKind::Categorical { levels }, Condition::OneOf(set)) => {
                if let Some(bad) = set.iter().find(|l| !levels.contains(l)) {
                    return Err(Error::InvalidPredicate(format!(
                        "`{bad}` is not a level of `{}`",
                        self.attribute
                    )));
                }
                if set.len() >= levels.len() {
                    return Err(Error::InvalidPredicate(format!(
                        "level set on `{}` is not a proper subset",
                        self.attribute
                    )));
                }
                Ok(idx)
            }
            (AttributeKind::Continuous, Condition::Interval { .. }) => Ok(idx),
            (AttributeKind::Categorical { .. }, Condition::Interval { .. }) => Err(Error::KindMismatch {
                attribute: self.attribute.clone(),
                expected: "continuous",
                actual: "categorical",
            }),
            (AttributeKind::Continuous, Condition::OneOf(_)) => Err(Error::KindMismatch {
                attribute: self.attribute.clone(),
                expected: "categorical",
                actual: "continuous",
            }),
        }
    }

    fn cmp_condition(a: &Condition, b: &Condition) -> Ordering {
        match (a, b) {
            (Condition::OneOf(x), Condition::OneOf(y)) => x.cmp(y),
            (Condition::Interval { .. }, Condition::Interval { .. }) => a
                .lower()
                .total_cmp(&b.lower())
                .then_with(|| a.upper().total_cmp(&b.upper())),
            (Condition::OneOf(_), Condition::Interval { .. }) => Ordering::Less,
            (Condition::Interval { .. }, Condition::OneOf(_)) => Ordering::Greater,
        }
    }
}

impl Eq for Predicate {}

impl Ord for Predicate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.attribute
            .cmp(&other.attribute)
            .then_with(|| Self::cmp_condition(&self.condition, &other.condition))
    }
}

impl PartialOrd for Predicate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Conjunction of predicates. An empty criterion matches every row.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Criterion {
    pub predicates: Vec<Predicate>,
}

impl Criterion {
    pub fn new(predicates: Vec<Predicate>) -> Self {
        Self { predicates }
    }

    pub fn is_empty(&self) -> bool {
        self.predicates.is_empty()
    }

    pub fn attributes(&self) -> BTreeSet<&str> {
        self.predicates.iter().map(|p| p.attribute.as_str()).collect()
    }

    pub fn predicate(&self, attribute: &str) -> Option<&Predicate> {
        self.predicates.iter().find(|p| p.attribute == attribute)
    }

    /// Conjunction with one more predicate, not canonicalized.
    pub fn and(&self, predicate: Predicate) -> Self {
        let mut predicates = self.predicates.clone();
        predicates.push(predicate);
        Self { predicates }
    }

    /// Merge predicates per attribute (interval or level-set intersection)
    /// and sort by attribute name.
    pub fn canonicalize(&self) -> Result<Self> {
        let mut merged: BTreeMap<&str, Condition> = BTreeMap::new();
        for p in &self.predicates {
            let next = match merged.remove(p.attribute.as_str()) {
                None => p.condition.clone(),
                Some(Condition::OneOf(a)) => match &p.condition {
                    Condition::OneOf(b) => {
                        let both: BTreeSet<String> = a.intersection(b).cloned().collect();
                        if both.is_empty() {
                            return Err(Error::Unsatisfiable(p.attribute.clone()));
                        }
                        Condition::OneOf(both)
                    }
                    Condition::Interval { .. } => {
                        return Err(Error::KindMismatch {
                            attribute: p.attribute.clone(),
                            expected: "categorical",
                            actual: "continuous",
                        })
                    }
                },
                Some(prev @ Condition::Interval { .. }) => match &p.condition {
                    Condition::Interval { .. } => {
                        let lo = prev.lower().max(p.condition.lower());
                        let hi = prev.upper().min(p.condition.upper());
                        if lo >= hi {
                            return Err(Error::Unsatisfiable(p.attribute.clone()));
                        }
                        let wrap = |v: f64| if v.is_finite() { Some(v) } else { None };
                        Condition::Interval { lower: wrap(lo), upper: wrap(hi) }
                    }
                    Condition::OneOf(_) => {
                        return Err(Error::KindMismatch {
                            attribute: p.attribute.clone(),
                            expected: "continuous",
                            actual: "categorical",
                        })
                    }
                },
            };
            merged.insert(&p.attribute, next);
        }
        Ok(Self {
            predicates: merged
                .into_iter()
                .map(|(attribute, condition)| Predicate { attribute: attribute.to_string(), condition })
                .collect(),
        })
    }

    /// Row mask over the whole source.
    pub fn membership<S: DataSource + ?Sized>(&self, data: &S) -> Result<Vec<bool>> {
        let all: Vec<usize> = (0..data.n_rows()).collect();
        self.membership_rows(data, &all)
    }

    /// Mask over the given rows (same order as `rows`).
    pub fn membership_rows<S: DataSource + ?Sized>(&self, data: &S, rows: &[usize]) -> Result<Vec<bool>> {
        let checks = self.compile(data)?;
        Ok(rows.iter().map(|&r| checks.iter().all(|c| c.matches(data, r))).collect())
    }

    /// Number of the given rows satisfying the criterion.
    pub fn count_rows<S: DataSource + ?Sized>(&self, data: &S, rows: &[usize]) -> Result<usize> {
        let checks = self.compile(data)?;
        Ok(rows.iter().filter(|&&r| checks.iter().all(|c| c.matches(data, r))).count())
    }

    fn compile<S: DataSource + ?Sized>(&self, data: &S) -> Result<Vec<Check>> {
        let schema = data.schema();
        self.predicates
            .iter()
            .map(|p| {
                let idx = schema
                    .iter()
                    .position(|a| a.name == p.attribute)
                    .ok_or_else(|| Error::UnknownAttribute(p.attribute.clone()))?;
                match (&schema[idx].kind, &p.condition) {
                    (AttributeKind::Categorical { levels }, Condition::OneOf(set)) => {
                        let mask = levels.iter().map(|l| set.contains(l)).collect();
                        Ok(Check::Levels { attr: idx, mask })
                    }
                    (AttributeKind::Continuous, cond @ Condition::Interval { .. }) => {
                        Ok(Check::Range { attr: idx, lower: cond.lower(), upper: cond.upper() })
                    }
                    (AttributeKind::Categorical { .. }, _) => Err(Error::KindMismatch {
                        attribute: p.attribute.clone(),
                        expected: "continuous",
                        actual: "categorical",
                    }),
                    (AttributeKind::Continuous, _) => Err(Error::KindMismatch {
                        attribute: p.attribute.clone(),
                        expected: "categorical",
                        actual: "continuous",
                    }),
                }
            })
            .collect()
    }

    /// Parse the string form produced by `Display`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s == "TRUE" {
            return Ok(Self::default());
        }
        let mut predicates = Vec::new();
        for part in split_conjuncts(s)? {
            predicates.push(parse_predicate(part.trim())?);
        }
        Ok(Self { predicates })
    }
}

enum Check {
    Levels { attr: usize, mask: Vec<bool> },
    Range { attr: usize, lower: f64, upper: f64 },
}

impl Check {
    #[inline]
    fn matches<S: DataSource + ?Sized>(&self, data: &S, row: usize) -> bool {
        match self {
            Check::Levels { attr, mask } => mask[data.level(*attr, row) as usize],
            Check::Range { attr, lower, upper } => {
                let v = data.continuous(*attr, row);
                v > *lower && v <= *upper
            }
        }
    }
}

fn needs_quotes(s: &str) -> bool {
    s.is_empty()
        || s.trim() != s
        || s.contains([',', '{', '}', '"', '\\'])
        || [" AND ", " in ", " <= ", " > "].iter().any(|op| s.contains(op))
}

fn quote(s: &str) -> String {
    if needs_quotes(s) {
        format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
    } else {
        s.to_string()
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = quote(&self.attribute);
        match &self.condition {
            Condition::OneOf(levels) => {
                let inner: Vec<String> = levels.iter().map(|l| quote(l)).collect();
                write!(f, "{name} in {{{}}}", inner.join(","))
            }
            Condition::Interval { lower, upper } => match (lower, upper) {
                (Some(lo), Some(hi)) => write!(f, "{name} > {lo:?} AND {name} <= {hi:?}"),
                (Some(lo), None) => write!(f, "{name} > {lo:?}"),
                (None, Some(hi)) => write!(f, "{name} <= {hi:?}"),
                (None, None) => write!(f, "TRUE"),
            },
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.predicates.is_empty() {
            return write!(f, "TRUE");
        }
        for (i, p) in self.predicates.iter().enumerate() {
            if i > 0 {
                write!(f, " AND ")?;
            }
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

/// Split on ` AND ` outside of quotes.
fn split_conjuncts(s: &str) -> Result<Vec<&str>> {
    let bytes = s.as_bytes();
    let mut parts = Vec::new();
    let mut start = 0;
    let mut in_quotes = false;
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'\\' if in_quotes => i += 1,
            b'"' => in_quotes = !in_quotes,
            b' ' if !in_quotes && s[i..].starts_with(" AND ") => {
                parts.push(&s[start..i]);
                i += 5;
                start = i;
                continue;
            }
            _ => {}
        }
        i += 1;
    }
    if in_quotes {
        return Err(Error::CriterionSyntax("unterminated quote".into()));
    }
    parts.push(&s[start..]);
    Ok(parts)
}

/// Read a possibly quoted token; returns (token, rest).
fn read_token(s: &str) -> Result<(String, &str)> {
    let s = s.trim_start();
    if let Some(rest) = s.strip_prefix('"') {
        let mut out = String::new();
        let mut chars = rest.char_indices();
        while let Some((i, c)) = chars.next() {
            match c {
                '\\' => match chars.next() {
                    Some((_, e)) => out.push(e),
                    None => break,
                },
                '"' => return Ok((out, &rest[i + 1..])),
                c => out.push(c),
            }
        }
        Err(Error::CriterionSyntax(format!("unterminated quote in `{s}`")))
    } else {
        Ok((String::new(), s))
    }
}

fn parse_predicate(s: &str) -> Result<Predicate> {
    let (quoted, rest) = read_token(s)?;
    let (name, op_and_value) = if s.trim_start().starts_with('"') {
        (quoted, rest.trim_start())
    } else {
        let ops = [" in {", " <= ", " > "];
        let (pos, _) = ops
            .iter()
            .filter_map(|op| s.find(op).map(|p| (p, *op)))
            .min_by_key(|(p, _)| *p)
            .ok_or_else(|| Error::CriterionSyntax(format!("no operator in `{s}`")))?;
        (s[..pos].trim().to_string(), s[pos..].trim_start())
    };
    if let Some(body) = op_and_value.strip_prefix("in {") {
        let body = body
            .trim_end()
            .strip_suffix('}')
            .ok_or_else(|| Error::CriterionSyntax(format!("missing `}}` in `{s}`")))?;
        let mut levels = Vec::new();
        let mut rest = body;
        loop {
            let trimmed = rest.trim_start();
            if trimmed.is_empty() {
                break;
            }
            let (level, after) = if trimmed.starts_with('"') {
                let (tok, after) = read_token(trimmed)?;
                (tok, after)
            } else {
                let end = trimmed.find(',').unwrap_or(trimmed.len());
                (trimmed[..end].trim().to_string(), &trimmed[end..])
            };
            levels.push(level);
            let after = after.trim_start();
            match after.strip_prefix(',') {
                Some(r) => rest = r,
                None if after.is_empty() => break,
                None => return Err(Error::CriterionSyntax(format!("unexpected `{after}`"))),
            }
        }
        Predicate::one_of(name, levels)
    } else if let Some(v) = op_and_value.strip_prefix("<=") {
        Predicate::at_most(name, parse_number(v)?)
    } else if let Some(v) = op_and_value.strip_prefix('>') {
        Predicate::greater_than(name, parse_number(v)?)
    } else {
        Err(Error::CriterionSyntax(format!("unknown operator in `{s}`")))
    }
}

fn parse_number(s: &str) -> Result<f64> {
    let s = s.trim();
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::CriterionSyntax(format!("bad number `{s}`")))
}
