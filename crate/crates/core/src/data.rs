//! Tabular audit data: attribute schema, columnar storage and the
//! [`DataSource`] access trait used by tree growth and testing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kind of a predictor column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeKind {
    /// Levels are kept in first-appearance order (or declaration order).
    Categorical { levels: Vec<String> },
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSchema {
    pub name: String,
    pub kind: AttributeKind,
    /// Only sensitive attributes are eligible for splitting.
    pub sensitive: bool,
}

impl AttributeSchema {
    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, AttributeKind::Categorical { .. })
    }

    pub fn levels(&self) -> Option<&[String]> {
        match &self.kind {
            AttributeKind::Categorical { levels } => Some(levels),
            AttributeKind::Continuous => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    /// Level codes indexing into the schema's level list.
    Categorical(Vec<u32>),
    Continuous(Vec<f64>),
}

impl Column {
    fn len(&self) -> usize {
        match self {
            Column::Categorical(v) => v.len(),
            Column::Continuous(v) => v.len(),
        }
    }
}

/// What the binary outcome column records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutcomeKind {
    /// `y` is the classifier's decision.
    #[default]
    Decision,
    /// `y = 1` iff the decision disagrees with the truth label.
    PredictionError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FairnessMetric {
    StatisticalParity,
    EqualizedOdds,
}

impl FairnessMetric {
    pub fn requires_truth(self) -> bool {
        matches!(self, FairnessMetric::EqualizedOdds)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FairnessMetric::StatisticalParity => "statistical-parity",
            FairnessMetric::EqualizedOdds => "equalized-odds",
        }
    }
}

impl std::str::FromStr for FairnessMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "statistical-parity" | "sp" => Ok(FairnessMetric::StatisticalParity),
            "equalized-odds" | "eo" => Ok(FairnessMetric::EqualizedOdds),
            other => Err(Error::Config(format!("unknown metric `{other}`"))),
        }
    }
}

/// Read access to audit rows.
///
/// Tree growth and disparity testing are generic over this trait so that an
/// instrumented wrapper can observe exactly which rows are touched.
pub trait DataSource: Sync {
    fn schema(&self) -> &[AttributeSchema];
    fn n_rows(&self) -> usize;
    /// Value of a continuous attribute.
    fn continuous(&self, attr: usize, row: usize) -> f64;
    /// Level code of a categorical attribute.
    fn level(&self, attr: usize, row: usize) -> u32;
    fn outcome(&self, row: usize) -> bool;
    fn truth(&self, row: usize) -> Option<bool>;
    fn outcome_kind(&self) -> OutcomeKind;
    fn has_truth(&self) -> bool;

    /// The classifier's decision, recovered from the outcome when the outcome
    /// is an error indicator.
    fn decision(&self, row: usize) -> bool {
        match (self.outcome_kind(), self.truth(row)) {
            (OutcomeKind::PredictionError, Some(t)) => self.outcome(row) ^ t,
            _ => self.outcome(row),
        }
    }

    /// Whether the decision disagrees with the truth label.
    fn is_error(&self, row: usize) -> Option<bool> {
        self.truth(row).map(|t| self.decision(row) != t)
    }

    fn attribute_index(&self, name: &str) -> Option<usize> {
        self.schema().iter().position(|a| a.name == name)
    }
}

/// Immutable, validated audit dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditDataset {
    schema: Vec<AttributeSchema>,
    columns: Vec<Column>,
    outcome_name: String,
    outcome: Vec<bool>,
    truth_name: Option<String>,
    truth: Option<Vec<bool>>,
    outcome_kind: OutcomeKind,
}

impl AuditDataset {
    pub fn new(
        schema: Vec<AttributeSchema>,
        columns: Vec<Column>,
        outcome_name: impl Into<String>,
        outcome: Vec<bool>,
        truth: Option<(String, Vec<bool>)>,
        outcome_kind: OutcomeKind,
    ) -> Result<Self> {
        if schema.len() != columns.len() {
            return Err(Error::InvalidDataset(format!(
                "{} schema entries but {} columns",
                schema.len(),
                columns.len()
            )));
        }
        let n = outcome.len();
        for (attr, col) in schema.iter().zip(&columns) {
            if col.len() != n {
                return Err(Error::InvalidDataset(format!(
                    "column `{}` has {} values, expected {n}",
                    attr.name,
                    col.len()
                )));
            }
            match (&attr.kind, col) {
                (AttributeKind::Categorical { levels }, Column::Categorical(codes)) => {
                    if levels.is_empty() {
                        return Err(Error::InvalidDataset(format!(
                            "categorical attribute `{}` has no levels",
                            attr.name
                        )));
                    }
                    let mut seen = std::collections::HashSet::new();
                    if !levels.iter().all(|l| seen.insert(l)) {
                        return Err(Error::InvalidDataset(format!(
                            "categorical attribute `{}` has duplicate levels",
                            attr.name
                        )));
                    }
                    if codes.iter().any(|&c| c as usize >= levels.len()) {
                        return Err(Error::InvalidDataset(format!(
                            "level code out of range in `{}`",
                            attr.name
                        )));
                    }
                }
                (AttributeKind::Continuous, Column::Continuous(values)) => {
                    if values.iter().any(|v| !v.is_finite()) {
                        return Err(Error::InvalidDataset(format!(
                            "non-finite value in `{}`",
                            attr.name
                        )));
                    }
                }
                _ => {
                    return Err(Error::InvalidDataset(format!(
                        "column kind does not match schema for `{}`",
                        attr.name
                    )))
                }
            }
        }
        let mut names = std::collections::HashSet::new();
        let outcome_name = outcome_name.into();
        for name in schema.iter().map(|a| &a.name).chain(std::iter::once(&outcome_name)) {
            if !names.insert(name.clone()) {
                return Err(Error::InvalidDataset(format!("duplicate column name `{name}`")));
            }
        }
        let (truth_name, truth) = match truth {
            Some((name, values)) => {
                if values.len() != n {
                    return Err(Error::InvalidDataset(format!(
                        "truth column has {} values, expected {n}",
                        values.len()
                    )));
                }
                (Some(name), Some(values))
            }
            None => (None, None),
        };
        if outcome_kind == OutcomeKind::PredictionError && truth.is_none() {
            return Err(Error::InvalidDataset(
                "an error-indicator outcome requires a truth column".into(),
            ));
        }
        Ok(Self { schema, columns, outcome_name, outcome, truth_name, truth, outcome_kind })
    }

    /// Number of predictor attributes (K).
    pub fn n_attributes(&self) -> usize {
        self.schema.len()
    }

    pub fn column(&self, attr: usize) -> &Column {
        &self.columns[attr]
    }

    pub fn outcome_name(&self) -> &str {
        &self.outcome_name
    }

    pub fn outcomes(&self) -> &[bool] {
        &self.outcome
    }

    pub fn truth_name(&self) -> Option<&str> {
        self.truth_name.as_deref()
    }

    pub fn truths(&self) -> Option<&[bool]> {
        self.truth.as_deref()
    }

    pub fn sensitive_indices(&self) -> Vec<usize> {
        self.schema.iter().enumerate().filter(|(_, a)| a.sensitive).map(|(i, _)| i).collect()
    }

    /// Restrict splitting to the named attributes. An empty list marks every
    /// attribute sensitive.
    pub fn set_sensitive<S: AsRef<str>>(&mut self, names: &[S]) -> Result<()> {
        if names.is_empty() {
            self.schema.iter_mut().for_each(|a| a.sensitive = true);
            return Ok(());
        }
        for name in names {
            if !self.schema.iter().any(|a| a.name == name.as_ref()) {
                return Err(Error::UnknownAttribute(name.as_ref().to_string()));
            }
        }
        for attr in &mut self.schema {
            attr.sensitive = names.iter().any(|n| n.as_ref() == attr.name);
        }
        Ok(())
    }

    /// Display form of a cell, as it would appear in CSV.
    pub fn display_value(&self, attr: usize, row: usize) -> String {
        match (&self.schema[attr].kind, &self.columns[attr]) {
            (AttributeKind::Categorical { levels }, Column::Categorical(codes)) => {
                levels[codes[row] as usize].clone()
            }
            (_, Column::Continuous(v)) => format!("{}", v[row]),
            _ => unreachable!("validated at construction"),
        }
    }
}

impl DataSource for AuditDataset {
    fn schema(&self) -> &[AttributeSchema] {
        &self.schema
    }

    fn n_rows(&self) -> usize {
        self.outcome.len()
    }

    #[inline]
    fn continuous(&self, attr: usize, row: usize) -> f64 {
        match &self.columns[attr] {
            Column::Continuous(v) => v[row],
            Column::Categorical(_) => panic!("attribute {attr} is categorical"),
        }
    }

    #[inline]
    fn level(&self, attr: usize, row: usize) -> u32 {
        match &self.columns[attr] {
            Column::Categorical(v) => v[row],
            Column::Continuous(_) => panic!("attribute {attr} is continuous"),
        }
    }

    #[inline]
    fn outcome(&self, row: usize) -> bool {
        self.outcome[row]
    }

    #[inline]
    fn truth(&self, row: usize) -> Option<bool> {
        self.truth.as_ref().map(|t| t[row])
    }

    fn outcome_kind(&self) -> OutcomeKind {
        self.outcome_kind
    }

    fn has_truth(&self) -> bool {
        self.truth.is_some()
    }
}
