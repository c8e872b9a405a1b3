//! Typed tabular data: schema, validated tables, CSV ingestion and splits.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Separator used between phrases when a record is rendered as text. Values
/// containing it are rejected so that rendering stays injective.
pub const PHRASE_SEPARATOR: &str = ", ";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("column `{0}` is missing from the header")]
    MissingColumn(String),
    #[error("column `{0}` is not part of the schema")]
    UnexpectedColumn(String),
    #[error("row {row}: value for `{feature}` does not match its kind ({detail})")]
    TypeMismatch {
        row: usize,
        feature: String,
        detail: String,
    },
    #[error("row {row}: missing value for `{feature}`")]
    MissingValue { row: usize, feature: String },
    #[error("table has no data rows")]
    EmptyTable,
    #[error("row {row} has {found} values, schema has {expected} features")]
    RowArity {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Numerical,
    Categorical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Regression,
    #[default]
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
}

impl FeatureSpec {
    pub fn numerical(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Numerical,
        }
    }

    pub fn categorical(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Categorical,
        }
    }
}

/// Ordered feature list plus the optional supervised target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<FeatureSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default)]
    pub task: Task,
}

impl FeatureSchema {
    pub fn new(
        features: Vec<FeatureSpec>,
        target: Option<String>,
        task: Task,
    ) -> Result<Self, DatasetError> {
        let schema = Self {
            features,
            target,
            task,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let schema: FeatureSchema = serde_json::from_str(&text)
            .map_err(|e| DatasetError::InvalidSchema(format!("{}: {e}", path.display())))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.features.is_empty() {
            return Err(DatasetError::InvalidSchema("no features".into()));
        }
        let mut seen = HashSet::new();
        for f in &self.features {
            if f.name.trim().is_empty() {
                return Err(DatasetError::InvalidSchema("empty feature name".into()));
            }
            if f.name.contains(PHRASE_SEPARATOR) {
                return Err(DatasetError::InvalidSchema(format!(
                    "feature name `{}` contains the phrase separator",
                    f.name
                )));
            }
            if !seen.insert(f.name.as_str()) {
                return Err(DatasetError::InvalidSchema(format!(
                    "duplicate feature name `{}`",
                    f.name
                )));
            }
        }
        if let Some(t) = &self.target {
            if !seen.contains(t.as_str()) {
                return Err(DatasetError::InvalidSchema(format!(
                    "target `{t}` is not a feature"
                )));
            }
        }
        match (self.task, self.target_index()) {
            (Task::Classification, Some(i)) if self.features[i].kind != FeatureKind::Categorical => {
                Err(DatasetError::InvalidSchema(
                    "classification target must be categorical".into(),
                ))
            }
            (Task::Regression, Some(i)) if self.features[i].kind != FeatureKind::Numerical => Err(
                DatasetError::InvalidSchema("regression target must be numerical".into()),
            ),
            (Task::Classification | Task::Regression, None) => Err(DatasetError::InvalidSchema(
                "a supervised task requires a target".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn target_index(&self) -> Option<usize> {
        self.target.as_deref().and_then(|t| self.index_of(t))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|f| f.name.as_str())
    }
}

/// A single cell. Numerical values are always finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Num(f64),
    Cat(String),
}

impl Value {
    pub fn as_num(&self) -> Option<f64> {
        match self {
            Value::Num(v) => Some(*v),
            Value::Cat(_) => None,
        }
    }

    pub fn as_cat(&self) -> Option<&str> {
        match self {
            Value::Cat(s) => Some(s),
            Value::Num(_) => None,
        }
    }

    pub fn kind(&self) -> FeatureKind {
        match self {
            Value::Num(_) => FeatureKind::Numerical,
            Value::Cat(_) => FeatureKind::Categorical,
        }
    }

    /// Parses a raw cell according to the feature kind.
    pub fn parse(raw: &str, kind: FeatureKind) -> Result<Value, String> {
        match kind {
            FeatureKind::Numerical => parse_number(raw).map(Value::Num),
            FeatureKind::Categorical => {
                if raw.contains(PHRASE_SEPARATOR) {
                    Err(format!("category `{raw}` contains the phrase separator"))
                } else {
                    Ok(Value::Cat(raw.to_string()))
                }
            }
        }
    }
}

/// Numerical values print in the shortest form that parses back to the same
/// float.
impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(v) => write!(f, "{v}"),
            Value::Cat(s) => f.write_str(s),
        }
    }
}

fn parse_number(raw: &str) -> Result<f64, String> {
    let t = raw.trim();
    // f64::from_str also accepts "inf" and "NaN"; only plain decimal or
    // scientific notation is allowed here.
    let plausible = !t.is_empty()
        && t
            .chars()
            .all(|c| c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E'));
    if !plausible {
        return Err(format!("`{raw}` is not a number"));
    }
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Err(format!("`{raw}` is not finite")),
        Err(_) => Err(format!("`{raw}` is not a number")),
    }
}

pub type Record = Vec<Value>;

/// An immutable, validated table. Cloning is cheap for the schema only.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    schema: Arc<FeatureSchema>,
    rows: Vec<Record>,
}

impl Table {
    /// Validates every row against the schema. Empty tables are allowed here;
    /// only `load_table` rejects them.
    pub fn new(schema: Arc<FeatureSchema>, rows: Vec<Record>) -> Result<Self, DatasetError> {
        for (r, row) in rows.iter().enumerate() {
            if row.len() != schema.len() {
                return Err(DatasetError::RowArity {
                    row: r,
                    found: row.len(),
                    expected: schema.len(),
                });
            }
            for (value, spec) in row.iter().zip(&schema.features) {
                let ok = match value {
                    Value::Num(v) => spec.kind == FeatureKind::Numerical && v.is_finite(),
                    Value::Cat(s) => {
                        spec.kind == FeatureKind::Categorical && !s.contains(PHRASE_SEPARATOR)
                    }
                };
                if !ok {
                    return Err(DatasetError::TypeMismatch {
                        row: r,
                        feature: spec.name.clone(),
                        detail: format!("got {value:?}"),
                    });
                }
            }
        }
        Ok(Self { schema, rows })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn schema_arc(&self) -> &Arc<FeatureSchema> {
        &self.schema
    }

    pub fn rows(&self) -> &[Record] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, feature: usize) -> impl Iterator<Item = &Value> + '_ {
        self.rows.iter().map(move |r| &r[feature])
    }

    pub fn numeric_column(&self, feature: usize) -> Vec<f64> {
        self.column(feature).filter_map(Value::as_num).collect()
    }

    /// Builds a table holding the rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Table {
        Table {
            schema: Arc::clone(&self.schema),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        self.write_to(&mut w)?;
        w.flush().map_err(|source| DatasetError::Io {
            path: path.as_ref().display().to_string(),
            source,
        })
    }

    pub fn to_csv_string(&self) -> Result<String, DatasetError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        self.write_to(&mut w)?;
        let bytes = w
            .into_inner()
            .map_err(|e| DatasetError::Csv(csv::Error::from(e.into_error())))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    fn write_to<W: std::io::Write>(&self, w: &mut csv::Writer<W>) -> Result<(), DatasetError> {
        w.write_record(self.schema.names())?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        Ok(())
    }
}

/// Loads a CSV file with a header row. Columns may appear in any order but
/// must match the schema's feature names exactly.
pub fn load_table(path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<Table, DatasetError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_table(file, schema)
}

pub fn read_table<R: std::io::Read>(reader: R, schema: &FeatureSchema) -> Result<Table, DatasetError> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let mut column_of: HashMap<&str, usize> = HashMap::new();
    for (i, name) in header.iter().enumerate() {
        let name = name.trim();
        if schema.index_of(name).is_none() {
            return Err(DatasetError::UnexpectedColumn(name.to_string()));
        }
        column_of.insert(name, i);
    }
    let columns: Vec<usize> = schema
        .features
        .iter()
        .map(|f| {
            column_of
                .get(f.name.as_str())
                .copied()
                .ok_or_else(|| DatasetError::MissingColumn(f.name.clone()))
        })
        .collect::<Result<_, _>>()?;

    let mut rows = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mut row = Vec::with_capacity(schema.len());
        for (spec, &col) in schema.features.iter().zip(&columns) {
            let raw = rec.get(col).unwrap_or("");
            if raw.trim().is_empty() {
                return Err(DatasetError::MissingValue {
                    row: r,
                    feature: spec.name.clone(),
                });
            }
            let value = Value::parse(raw, spec.kind).map_err(|detail| DatasetError::TypeMismatch {
                row: r,
                feature: spec.name.clone(),
                detail,
            })?;
            row.push(value);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(DatasetError::EmptyTable);
    }
    Table::new(Arc::new(schema.clone()), rows)
}

/// Deterministic train/test partition: `floor(n * train_fraction)` rows go to
/// train. Both parts keep the original relative row order.
pub fn split(table: &Table, train_fraction: f64, seed: u64) -> Result<(Table, Table), DatasetError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DatasetError::InvalidFraction(train_fraction));
    }
    let n = table.len();
    let n_train = (n as f64 * train_fraction).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (train_idx, test_idx) = order.split_at(n_train);
    let mut train_idx = train_idx.to_vec();
    let mut test_idx = test_idx.to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((table.select(&train_idx), table.select(&test_idx)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> FeatureSchema {
        FeatureSchema::new(
            vec![FeatureSpec::numerical("x"), FeatureSpec::categorical("c")],
            Some("c".into()),
            Task::Classification,
        )
        .unwrap()
    }

    #[test]
    fn header_is_order_insensitive() {
        let t = read_table("c,x\na,1\nb,2.5\n".as_bytes(), &schema()).unwrap();
        assert_eq!(t.rows()[1], vec![Value::Num(2.5), Value::Cat("b".into())]);
    }

    #[test]
    fn non_numeric_token_is_type_mismatch() {
        let err = read_table("x,c\n1,a\nabc,b\n".as_bytes(), &schema()).unwrap_err();
        assert!(matches!(err, DatasetError::TypeMismatch { row: 1, ref feature, .. } if feature == "x"));
    }

    #[test]
    fn non_finite_is_rejected() {
        for bad in ["inf", "NaN", "1e999"] {
            let csv = format!("x,c\n{bad},a\n");
            assert!(matches!(
                read_table(csv.as_bytes(), &schema()),
                Err(DatasetError::TypeMismatch { .. })
            ));
        }
    }

    #[test]
    fn scientific_notation_parses() {
        let t = read_table("x,c\n1.5e3,a\n-2E-2,b\n".as_bytes(), &schema()).unwrap();
        assert_eq!(t.rows()[0][0], Value::Num(1500.0));
        assert_eq!(t.rows()[1][0], Value::Num(-0.02));
    }

    #[test]
    fn empty_table() {
        assert!(matches!(
            read_table("x,c\n".as_bytes(), &schema()),
            Err(DatasetError::EmptyTable)
        ));
    }

    #[test]
    fn missing_column_and_missing_value() {
        assert!(matches!(
            read_table("x\n1\n".as_bytes(), &schema()),
            Err(DatasetError::MissingColumn(c)) if c == "c"
        ));
        assert!(matches!(
            read_table("x,c\n1,\n".as_bytes(), &schema()),
            Err(DatasetError::MissingValue { .. })
        ));
        assert!(matches!(
            read_table("x,c,z\n1,a,2\n".as_bytes(), &schema()),
            Err(DatasetError::UnexpectedColumn(c)) if c == "z"
        ));
    }

    #[test]
    fn separator_inside_category_is_rejected() {
        assert!(read_table("x,c\n1,\"a, b\"\n".as_bytes(), &schema()).is_err());
    }

    #[test]
    fn schema_invariants() {
        let dup = FeatureSchema::new(
            vec![FeatureSpec::numerical("a"), FeatureSpec::numerical("a")],
            None,
            Task::None,
        );
        assert!(dup.is_err());
        let bad_target = FeatureSchema::new(vec![FeatureSpec::numerical("a")], Some("b".into()), Task::Regression);
        assert!(bad_target.is_err());
        let json = r#"{"features":[{"name":"a","kind":"numerical"}],"target":"a","task":"regression"}"#;
        let s: FeatureSchema = serde_json::from_str(json).unwrap();
        s.validate().unwrap();
    }

    #[test]
    fn split_counts_and_determinism() {
        let rows = (0..150).map(|i| vec![Value::Num(i as f64), Value::Cat("a".into())]).collect();
        let t = Table::new(Arc::new(schema()), rows).unwrap();
        let (tr, te) = split(&t, 0.8, 7).unwrap();
        assert_eq!((tr.len(), te.len()), (120, 30));
        let (tr2, _) = split(&t, 0.8, 7).unwrap();
        assert_eq!(tr, tr2);
        assert!(split(&t, 1.0, 7).is_err());
        assert!(split(&t, 0.0, 7).is_err());
    }

    #[test]
    fn split_varies_with_seed() {
        let rows = (0..10).map(|i| vec![Value::Num(i as f64), Value::Cat("a".into())]).collect();
        let t = Table::new(Arc::new(schema()), rows).unwrap();
        let distinct: HashSet<Vec<String>> = (0..100u64)
            .map(|s| {
                let (tr, _) = split(&t, 0.8, s).unwrap();
                tr.column(0).map(|v| v.to_string()).collect()
            })
            .collect();
        assert!(distinct.len() >= 2);
    }
}
