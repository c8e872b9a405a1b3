//! Rule-based constraints and their violation rates.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::dataset::{FeatureKind, Table};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstraintKind {
    /// The point `(lon, lat)` must lie inside (or on the boundary of) a
    /// closed ring given as `[[lon, lat], ...]` with first == last.
    PolygonContainment {
        lon: String,
        lat: String,
        polygon: Vec<[f64; 2]>,
    },
    /// The numeric feature must equal the rank the order map assigns to the
    /// categorical feature's value.
    OrdinalConsistency {
        category: String,
        numeric: String,
        order: BTreeMap<String, f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    #[serde(flatten)]
    pub kind: ConstraintKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ConstraintSet {
    pub constraints: Vec<Constraint>,
}

impl ConstraintSet {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| EvalError::InvalidConstraint(format!("{}: {e}", path.display())))?;
        let set: ConstraintSet = serde_json::from_str(&text)
            .map_err(|e| EvalError::InvalidConstraint(format!("{}: {e}", path.display())))?;
        for c in &set.constraints {
            c.validate()?;
        }
        Ok(set)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub name: String,
    pub rate: f64,
    pub violations: usize,
    pub rows: usize,
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn on_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> bool {
    let scale = (b[0] - a[0]).abs().max((b[1] - a[1]).abs()).max(1.0);
    cross(a, b, p).abs() <= 1e-12 * scale * scale
        && p[0] >= a[0].min(b[0])
        && p[0] <= a[0].max(b[0])
        && p[1] >= a[1].min(b[1])
        && p[1] <= a[1].max(b[1])
}

fn segments_intersect(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    on_segment(a, c, d) || on_segment(b, c, d) || on_segment(c, a, b) || on_segment(d, a, b)
}

/// Checks that `ring` is closed, has at least three distinct vertices, finite
/// coordinates and no self-intersections.
pub fn validate_ring(ring: &[[f64; 2]]) -> Result<(), EvalError> {
    if ring.len() < 4 {
        return Err(EvalError::MalformedPolygon("a ring needs at least 3 vertices plus the closing point".into()));
    }
    if ring.iter().flatten().any(|c| !c.is_finite()) {
        return Err(EvalError::MalformedPolygon("non-finite coordinate".into()));
    }
    if ring[0] != ring[ring.len() - 1] {
        return Err(EvalError::MalformedPolygon("ring is not closed (first != last)".into()));
    }
    let n = ring.len() - 1;
    for i in 0..n {
        if ring[i] == ring[i + 1] {
            return Err(EvalError::MalformedPolygon(format!("repeated vertex at {i}")));
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            if segments_intersect(ring[i], ring[i + 1], ring[j], ring[j + 1]) {
                return Err(EvalError::MalformedPolygon(format!("edges {i} and {j} intersect")));
            }
        }
    }
    Ok(())
}

/// Ray-casting containment; points on the boundary count as inside.
pub fn point_in_ring(p: [f64; 2], ring: &[[f64; 2]]) -> bool {
    let n = ring.len() - 1;
    if (0..n).any(|i| on_segment(p, ring[i], ring[i + 1])) {
        return true;
    }
    let mut inside = false;
    for i in 0..n {
        let (a, b) = (ring[i], ring[i + 1]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}

impl Constraint {
    pub fn validate(&self) -> Result<(), EvalError> {
        match &self.kind {
            ConstraintKind::PolygonContainment { polygon, .. } => validate_ring(polygon),
            ConstraintKind::OrdinalConsistency { order, .. } => {
                let mut ranks: Vec<f64> = order.values().copied().collect();
                if ranks.iter().any(|r| !r.is_finite()) {
                    return Err(EvalError::InvalidConstraint(format!("{}: non-finite rank", self.name)));
                }
                ranks.sort_by(f64::total_cmp);
                if ranks.windows(2).any(|w| w[0] == w[1]) {
                    return Err(EvalError::InvalidConstraint(format!(
                        "{}: order map is not injective",
                        self.name
                    )));
                }
                Ok(())
            }
        }
    }

    fn feature(table: &Table, name: &str, kind: FeatureKind) -> Result<usize, EvalError> {
        let f = table
            .schema()
            .index_of(name)
            .ok_or_else(|| EvalError::UnknownFeature(name.to_string()))?;
        if table.schema().features[f].kind != kind {
            return Err(EvalError::InvalidConstraint(format!("`{name}` has the wrong kind")));
        }
        Ok(f)
    }

    /// Whether each row violates the constraint.
    pub fn violations(&self, table: &Table) -> Result<Vec<bool>, EvalError> {
        self.validate()?;
        match &self.kind {
            ConstraintKind::PolygonContainment { lon, lat, polygon } => {
                let fx = Self::feature(table, lon, FeatureKind::Numerical)?;
                let fy = Self::feature(table, lat, FeatureKind::Numerical)?;
                Ok(table
                    .rows()
                    .iter()
                    .map(|r| {
                        let p = [r[fx].as_num().unwrap_or(f64::NAN), r[fy].as_num().unwrap_or(f64::NAN)];
                        !point_in_ring(p, polygon)
                    })
                    .collect())
            }
            ConstraintKind::OrdinalConsistency { category, numeric, order } => {
                let fc = Self::feature(table, category, FeatureKind::Categorical)?;
                let fv = Self::feature(table, numeric, FeatureKind::Numerical)?;
                Ok(table
                    .rows()
                    .iter()
                    .map(|r| {
                        let expected = r[fc].as_cat().and_then(|c| order.get(c));
                        expected != r[fv].as_num().as_ref()
                    })
                    .collect())
            }
        }
    }
}

/// Fraction of rows violating `constraint`; an empty table has rate 0.
pub fn eval_violations(table: &Table, constraint: &Constraint) -> Result<ViolationReport, EvalError> {
    let flags = constraint.violations(table)?;
    let violations = flags.iter().filter(|&&v| v).count();
    if flags.is_empty() {
        log::warn!("violation rate of `{}` over 0 rows reported as 0", constraint.name);
    }
    Ok(ViolationReport {
        name: constraint.name.clone(),
        rate: if flags.is_empty() { 0.0 } else { violations as f64 / flags.len() as f64 },
        violations,
        rows: flags.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Vec<[f64; 2]> {
        vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.0, 0.0]]
    }

    #[test]
    fn containment_with_boundary() {
        let sq = square();
        assert!(point_in_ring([0.5, 0.5], &sq));
        assert!(point_in_ring([0.0, 0.5], &sq));
        assert!(point_in_ring([1.0, 1.0], &sq));
        assert!(!point_in_ring([1.5, 0.5], &sq));
        assert!(!point_in_ring([-0.1, 0.0], &sq));
    }

    #[test]
    fn concave_ring() {
        // U shape: notch between x in (1,2) above y = 1
        let u = vec![[0.0, 0.0], [3.0, 0.0], [3.0, 3.0], [2.0, 3.0], [2.0, 1.0], [1.0, 1.0], [1.0, 3.0], [0.0, 3.0], [0.0, 0.0]];
        validate_ring(&u).unwrap();
        assert!(!point_in_ring([1.5, 2.0], &u));
        assert!(point_in_ring([0.5, 2.0], &u));
        assert!(point_in_ring([1.5, 0.5], &u));
    }

    #[test]
    fn malformed_rings() {
        assert!(validate_ring(&square()[..4]).is_err());
        let bowtie = vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0], [0.0, 0.0]];
        assert!(matches!(validate_ring(&bowtie), Err(EvalError::MalformedPolygon(_))));
        assert!(validate_ring(&[[0.0, 0.0], [1.0, 0.0], [0.0, 0.0]]).is_err());
        validate_ring(&square()).unwrap();
    }

    #[test]
    fn non_injective_order_map() {
        let c = Constraint {
            name: "edu".into(),
            kind: ConstraintKind::OrdinalConsistency {
                category: "e".into(),
                numeric: "n".into(),
                order: [("a".to_string(), 1.0), ("b".to_string(), 1.0)].into_iter().collect(),
            },
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn constraint_json_shape() {
        let json = r#"{"constraints":[
            {"name":"ca","kind":"polygon_containment","lon":"x","lat":"y","polygon":[[0,0],[1,0],[1,1],[0,0]]},
            {"name":"edu","kind":"ordinal_consistency","category":"e","numeric":"n","order":{"HS":9,"BSc":13}}
        ]}"#;
        let set: ConstraintSet = serde_json::from_str(json).unwrap();
        assert_eq!(set.constraints.len(), 2);
        assert!(matches!(set.constraints[1].kind, ConstraintKind::OrdinalConsistency { .. }));
    }
}
