//! Numeric encodings of tables for the evaluation models.

use crate::dataset::{FeatureKind, Table, Value};

/// Raw numbers plus one 0/1 column per category seen in the fitting tables.
/// Unseen categories encode as all zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct OneHotEncoder {
    columns: Vec<Column>,
}

#[derive(Debug, Clone, PartialEq)]
enum Column {
    Numeric(usize),
    Indicator(usize, String),
}

impl OneHotEncoder {
    pub fn fit(tables: &[&Table], exclude: Option<usize>) -> Self {
        let schema = tables[0].schema();
        let mut columns = Vec::new();
        for (f, spec) in schema.features.iter().enumerate() {
            if Some(f) == exclude {
                continue;
            }
            match spec.kind {
                FeatureKind::Numerical => columns.push(Column::Numeric(f)),
                FeatureKind::Categorical => {
                    let mut seen: Vec<&str> = Vec::new();
                    for t in tables {
                        for v in t.column(f).filter_map(Value::as_cat) {
                            if !seen.contains(&v) {
                                seen.push(v);
                            }
                        }
                    }
                    columns.extend(seen.into_iter().map(|c| Column::Indicator(f, c.to_string())));
                }
            }
        }
        Self { columns }
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn transform(&self, table: &Table) -> Vec<Vec<f64>> {
        table
            .rows()
            .iter()
            .map(|row| {
                self.columns
                    .iter()
                    .map(|c| match c {
                        Column::Numeric(f) => row[*f].as_num().unwrap_or(0.0),
                        Column::Indicator(f, cat) => {
                            f64::from(u8::from(row[*f].as_cat() == Some(cat.as_str())))
                        }
                    })
                    .collect()
            })
            .collect()
    }
}
