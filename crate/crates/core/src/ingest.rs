//! CSV ingestion against a column-role declaration, and the inverse
//! serialization used by the generators.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{AttributeKind, AttributeSchema, AuditDataset, Column, OutcomeKind};
use crate::error::{Error, Location, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Categorical,
    Continuous,
    /// Binary outcome `y`.
    Outcome,
    /// Binary classifier decision; combined with `Truth` into an
    /// error-indicator outcome.
    Prediction,
    /// Binary ground-truth label.
    Truth,
    Ignored,
    /// Continuous if every value parses as a finite number, else categorical.
    Auto,
}

impl std::str::FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "categorical" => Ok(Role::Categorical),
            "continuous" => Ok(Role::Continuous),
            "outcome" => Ok(Role::Outcome),
            "prediction" => Ok(Role::Prediction),
            "truth" => Ok(Role::Truth),
            "ignored" | "ignore" => Ok(Role::Ignored),
            "auto" => Ok(Role::Auto),
            other => Err(Error::Schema(format!("unknown role `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnDecl {
    pub role: Role,
    /// Fixed level order for a categorical column; values outside the list
    /// are rejected.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<String>>,
}

/// Column name to role mapping.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SchemaDecl {
    pub columns: BTreeMap<String, ColumnDecl>,
    /// Role of columns the declaration does not mention. `None` makes an
    /// unmentioned column an error.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_role: Option<Role>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawColumn {
    Role(String),
    Full { role: String, levels: Option<Vec<String>> },
}

#[derive(Deserialize)]
struct RawDecl {
    #[serde(default)]
    columns: BTreeMap<String, RawColumn>,
    default_role: Option<String>,
}

impl SchemaDecl {
    pub fn with_default(role: Role) -> Self {
        Self { columns: BTreeMap::new(), default_role: Some(role) }
    }

    pub fn set(&mut self, column: impl Into<String>, role: Role) -> &mut Self {
        self.columns.insert(column.into(), ColumnDecl { role, levels: None });
        self
    }

    pub fn set_levels(&mut self, column: impl Into<String>, levels: Vec<String>) -> &mut Self {
        self.columns
            .insert(column.into(), ColumnDecl { role: Role::Categorical, levels: Some(levels) });
        self
    }

    /// Parse the TOML table form:
    ///
    /// ```toml
    /// [columns]
    /// age = "continuous"
    /// race = { role = "categorical", levels = ["r1", "r2"] }
    /// y = "outcome"
    /// ```
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawDecl = toml::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        let mut columns = BTreeMap::new();
        for (name, col) in raw.columns {
            let decl = match col {
                RawColumn::Role(role) => ColumnDecl { role: role.parse()?, levels: None },
                RawColumn::Full { role, levels } => ColumnDecl { role: role.parse()?, levels },
            };
            columns.insert(name, decl);
        }
        let default_role = raw.default_role.map(|r| r.parse()).transpose()?;
        Ok(Self { columns, default_role })
    }

    pub fn to_toml(&self) -> String {
        let mut out = String::new();
        if let Some(role) = self.default_role {
            out.push_str(&format!("default_role = \"{}\"\n\n", role_name(role)));
        }
        out.push_str("[columns]\n");
        for (name, decl) in &self.columns {
            let key = toml_key(name);
            match &decl.levels {
                None => out.push_str(&format!("{key} = \"{}\"\n", role_name(decl.role))),
                Some(levels) => {
                    let items: Vec<String> = levels.iter().map(|l| toml_string(l)).collect();
                    out.push_str(&format!(
                        "{key} = {{ role = \"{}\", levels = [{}] }}\n",
                        role_name(decl.role),
                        items.join(", ")
                    ));
                }
            }
        }
        out
    }

    /// Declaration reproducing `dataset` exactly, including level order.
    pub fn for_dataset(dataset: &AuditDataset) -> Self {
        let mut decl = SchemaDecl::default();
        for attr in crate::data::DataSource::schema(dataset) {
            match &attr.kind {
                AttributeKind::Categorical { levels } => {
                    decl.set_levels(attr.name.clone(), levels.clone());
                }
                AttributeKind::Continuous => {
                    decl.set(attr.name.clone(), Role::Continuous);
                }
            }
        }
        match crate::data::DataSource::outcome_kind(dataset) {
            OutcomeKind::Decision => decl.set(dataset.outcome_name(), Role::Outcome),
            OutcomeKind::PredictionError => decl.set(dataset.outcome_name(), Role::Prediction),
        };
        if let Some(t) = dataset.truth_name() {
            decl.set(t, Role::Truth);
        }
        decl
    }

    fn role_of(&self, column: &str) -> Result<(Role, Option<&Vec<String>>)> {
        match self.columns.get(column) {
            Some(d) => Ok((d.role, d.levels.as_ref())),
            None => self
                .default_role
                .map(|r| (r, None))
                .ok_or_else(|| Error::Schema(format!("column `{column}` has no declared role"))),
        }
    }
}

fn role_name(role: Role) -> &'static str {
    match role {
        Role::Categorical => "categorical",
        Role::Continuous => "continuous",
        Role::Outcome => "outcome",
        Role::Prediction => "prediction",
        Role::Truth => "truth",
        Role::Ignored => "ignored",
        Role::Auto => "auto",
    }
}

fn toml_string(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

fn toml_key(s: &str) -> String {
    if !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
        s.to_string()
    } else {
        toml_string(s)
    }
}

fn at(row: usize, column: &str) -> Location {
    Location { row: Some(row), column: Some(column.to_string()) }
}

fn parse_binary(value: &str, row: usize, column: &str) -> Result<bool> {
    match value {
        "1" => Ok(true),
        "0" => Ok(false),
        "" => Err(Error::MissingValue(at(row, column))),
        other => Err(Error::NotBinary { value: other.to_string(), at: at(row, column) }),
    }
}

/// Read an RFC-4180 CSV with a header row into a validated dataset.
/// Every attribute starts out sensitive.
pub fn ingest<R: Read>(source: R, decl: &SchemaDecl) -> Result<AuditDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();

    let mut seen = HashSet::new();
    for h in &headers {
        if !seen.insert(h.as_str()) {
            return Err(Error::DuplicateColumn(h.clone()));
        }
    }
    for name in decl.columns.keys() {
        if !seen.contains(name.as_str()) {
            return Err(Error::Schema(format!("declared column `{name}` is not in the header")));
        }
    }

    let roles: Vec<(Role, Option<&Vec<String>>)> =
        headers.iter().map(|h| decl.role_of(h)).collect::<Result<_>>()?;
    let find_unique = |want: Role| -> Result<Option<usize>> {
        let idx: Vec<usize> = roles.iter().enumerate().filter(|(_, r)| r.0 == want).map(|(i, _)| i).collect();
        match idx.len() {
            0 => Ok(None),
            1 => Ok(Some(idx[0])),
            _ => Err(Error::Schema(format!("more than one `{}` column", role_name(want)))),
        }
    };
    let outcome_col = find_unique(Role::Outcome)?;
    let prediction_col = find_unique(Role::Prediction)?;
    let truth_col = find_unique(Role::Truth)?;
    let (y_col, kind) = match (outcome_col, prediction_col) {
        (Some(o), None) => (o, OutcomeKind::Decision),
        (None, Some(p)) => {
            if truth_col.is_none() {
                return Err(Error::Schema("a prediction column needs a truth column".into()));
            }
            (p, OutcomeKind::PredictionError)
        }
        (None, None) => return Err(Error::Schema("no outcome (or prediction) column declared".into())),
        (Some(_), Some(_)) => {
            return Err(Error::Schema("declare either an outcome or a prediction column, not both".into()))
        }
    };

    let mut raw: Vec<csv::StringRecord> = Vec::new();
    for record in reader.records() {
        raw.push(record?);
    }
    let n = raw.len();

    let mut y = Vec::with_capacity(n);
    let mut truth = truth_col.map(|_| Vec::with_capacity(n));
    for (i, rec) in raw.iter().enumerate() {
        let row = i + 1;
        let yv = parse_binary(&rec[y_col], row, &headers[y_col])?;
        match (&mut truth, truth_col) {
            (Some(t), Some(tc)) => {
                let tv = parse_binary(&rec[tc], row, &headers[tc])?;
                t.push(tv);
                y.push(if kind == OutcomeKind::PredictionError { yv != tv } else { yv });
            }
            _ => y.push(yv),
        }
    }

    let mut schema = Vec::new();
    let mut columns = Vec::new();
    for (c, (role, levels)) in roles.iter().enumerate() {
        let name = &headers[c];
        let role = match role {
            Role::Auto => {
                let numeric = raw.iter().all(|rec| {
                    let v = &rec[c];
                    v.is_empty() || v.parse::<f64>().map(f64::is_finite).unwrap_or(false)
                });
                if numeric {
                    Role::Continuous
                } else {
                    Role::Categorical
                }
            }
            r => *r,
        };
        match role {
            Role::Continuous => {
                let mut values = Vec::with_capacity(n);
                for (i, rec) in raw.iter().enumerate() {
                    let v = &rec[c];
                    if v.is_empty() {
                        return Err(Error::MissingValue(at(i + 1, name)));
                    }
                    match v.parse::<f64>() {
                        Ok(x) if x.is_finite() => values.push(x),
                        _ => {
                            return Err(Error::BadNumber { value: v.to_string(), at: at(i + 1, name) })
                        }
                    }
                }
                schema.push(AttributeSchema { name: name.clone(), kind: AttributeKind::Continuous, sensitive: true });
                columns.push(Column::Continuous(values));
            }
            Role::Categorical => {
                let (mut level_list, fixed) = match levels {
                    Some(l) => ((*l).clone(), true),
                    None => (Vec::new(), false),
                };
                let mut index: HashMap<String, u32> =
                    level_list.iter().enumerate().map(|(i, l)| (l.clone(), i as u32)).collect();
                if index.len() != level_list.len() {
                    return Err(Error::Schema(format!("duplicate declared levels for `{name}`")));
                }
                let mut codes = Vec::with_capacity(n);
                for (i, rec) in raw.iter().enumerate() {
                    let v = &rec[c];
                    if v.is_empty() {
                        return Err(Error::MissingValue(at(i + 1, name)));
                    }
                    let code = match index.get(v) {
                        Some(&code) => code,
                        None if fixed => {
                            return Err(Error::UndeclaredLevel { value: v.to_string(), at: at(i + 1, name) })
                        }
                        None => {
                            let code = level_list.len() as u32;
                            level_list.push(v.to_string());
                            index.insert(v.to_string(), code);
                            code
                        }
                    };
                    codes.push(code);
                }
                if level_list.is_empty() {
                    return Err(Error::Schema(format!("categorical column `{name}` has no values")));
                }
                schema.push(AttributeSchema {
                    name: name.clone(),
                    kind: AttributeKind::Categorical { levels: level_list },
                    sensitive: true,
                });
                columns.push(Column::Categorical(codes));
            }
            _ => {}
        }
    }

    let truth = match (truth, truth_col) {
        (Some(t), Some(tc)) => Some((headers[tc].clone(), t)),
        _ => None,
    };
    AuditDataset::new(schema, columns, headers[y_col].clone(), y, truth, kind)
}

pub fn ingest_path(path: &Path, decl: &SchemaDecl) -> Result<AuditDataset> {
    let file = std::fs::File::open(path)?;
    ingest(std::io::BufReader::new(file), decl)
}

/// Write the dataset as CSV: attributes in schema order, then the outcome
/// (or the reconstructed prediction) and the truth column.
pub fn write_csv<W: Write>(dataset: &AuditDataset, sink: W) -> Result<()> {
    use crate::data::DataSource;
    let mut w = csv::Writer::from_writer(sink);
    let mut header: Vec<&str> = dataset.schema().iter().map(|a| a.name.as_str()).collect();
    header.push(dataset.outcome_name());
    if let Some(t) = dataset.truth_name() {
        header.push(t);
    }
    w.write_record(&header)?;
    let bit = |b: bool| if b { "1" } else { "0" };
    for row in 0..dataset.n_rows() {
        let mut rec: Vec<String> = (0..dataset.n_attributes()).map(|a| dataset.display_value(a, row)).collect();
        let y = match dataset.outcome_kind() {
            OutcomeKind::Decision => dataset.outcome(row),
            OutcomeKind::PredictionError => dataset.decision(row),
        };
        rec.push(bit(y).to_string());
        if let Some(t) = dataset.truth(row) {
            rec.push(bit(t).to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
