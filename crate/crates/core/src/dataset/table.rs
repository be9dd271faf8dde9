use std::collections::{BTreeMap, HashMap};
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::schema::Schema;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Column names used when reading a survey extract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoadOptions {
    pub student_col: String,
    pub school_col: String,
    pub country_col: String,
    pub weight_col: Option<String>,
    /// Extra numeric columns carried alongside the features (SES, subject scores).
    pub aux_cols: Vec<String>,
    /// Cell text treated as missing in addition to the empty cell.
    pub missing_sentinel: String,
    pub delimiter: char,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            student_col: "student_id".into(),
            school_col: "school_id".into(),
            country_col: "country_id".into(),
            weight_col: None,
            aux_cols: vec![
                "escs".into(),
                "pv_math".into(),
                "pv_read".into(),
                "pv_scie".into(),
            ],
            missing_sentinel: String::new(),
            delimiter: ',',
        }
    }
}

/// Immutable table of covariates keyed by student, school and country.
///
/// Feature values are stored row-major; a missing cell is `NaN`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    schema: Schema,
    values: Vec<f64>,
    student_ids: Vec<String>,
    school_ids: Vec<String>,
    country_ids: Vec<String>,
    weights: Vec<f64>,
    aux: BTreeMap<String, Vec<f64>>,
}

impl FeatureTable {
    /// Builds a table from row vectors, validating every invariant.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        schema: Schema,
        rows: Vec<Vec<f64>>,
        student_ids: Vec<String>,
        school_ids: Vec<String>,
        country_ids: Vec<String>,
        weights: Option<Vec<f64>>,
        aux: BTreeMap<String, Vec<f64>>,
    ) -> Result<Self> {
        let n = rows.len();
        let m = schema.len();
        let mut values = Vec::with_capacity(n * m);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::WidthMismatch {
                    expected: m,
                    got: row.len(),
                });
            }
            for (c, &v) in row.iter().enumerate() {
                schema
                    .get(c)
                    .check_value(v)
                    .map_err(|reason| Error::SchemaViolation {
                        row: r,
                        column: schema.get(c).name.clone(),
                        reason,
                    })?;
            }
            values.extend_from_slice(row);
        }
        let weights = weights.unwrap_or_else(|| vec![1.0; n]);
        Self::from_parts(schema, values, student_ids, school_ids, country_ids, weights, aux)
    }

    fn from_parts(
        schema: Schema,
        values: Vec<f64>,
        student_ids: Vec<String>,
        school_ids: Vec<String>,
        country_ids: Vec<String>,
        weights: Vec<f64>,
        aux: BTreeMap<String, Vec<f64>>,
    ) -> Result<Self> {
        let n = student_ids.len();
        if school_ids.len() != n || country_ids.len() != n || weights.len() != n {
            return Err(Error::InvalidInput("key/weight columns differ in length".into()));
        }
        if values.len() != n * schema.len() {
            return Err(Error::InvalidInput("value buffer does not match n * M".into()));
        }
        for (name, col) in &aux {
            if col.len() != n {
                return Err(Error::InvalidInput(format!("aux column `{name}` has wrong length")));
            }
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidInput("weights must be finite and >= 0".into()));
        }
        if n > 0 && !weights.iter().any(|&w| w > 0.0) {
            return Err(Error::InvalidInput("at least one weight must be positive".into()));
        }
        let mut school_country: HashMap<&str, &str> = HashMap::new();
        for (s, c) in school_ids.iter().zip(&country_ids) {
            if let Some(prev) = school_country.insert(s, c) {
                if prev != c {
                    return Err(Error::SchoolInTwoCountries {
                        school: s.clone(),
                        first: prev.to_string(),
                        second: c.clone(),
                    });
                }
            }
        }
        Ok(Self {
            schema,
            values,
            student_ids,
            school_ids,
            country_ids,
            weights,
            aux,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.student_ids.len()
    }

    pub fn n_features(&self) -> usize {
        self.schema.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.n_features();
        &self.values[i * m..(i + 1) * m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.n_rows()).map(move |i| self.row(i))
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_features() + col]
    }

    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        self.value(row, col).is_nan()
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_nan()).count()
    }

    /// Feature values as a dense matrix.
    pub fn matrix(&self) -> Matrix {
        Matrix::new(self.values.clone(), self.n_features()).expect("table buffer is n * M")
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|r| self.value(r, col)).collect()
    }

    pub fn student_ids(&self) -> &[String] {
        &self.student_ids
    }

    pub fn school_ids(&self) -> &[String] {
        &self.school_ids
    }

    pub fn country_ids(&self) -> &[String] {
        &self.country_ids
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn aux(&self, name: &str) -> Option<&[f64]> {
        self.aux.get(name).map(Vec::as_slice)
    }

    pub fn require_aux(&self, name: &str) -> Result<&[f64]> {
        self.aux(name).ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    pub fn aux_columns(&self) -> &BTreeMap<String, Vec<f64>> {
        &self.aux
    }

    /// Returns a table with the given rows, in the given order.
    pub fn subset(&self, indices: &[usize]) -> FeatureTable {
        let m = self.n_features();
        let mut values = Vec::with_capacity(indices.len() * m);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        let pick = |v: &[String]| indices.iter().map(|&i| v[i].clone()).collect::<Vec<_>>();
        let aux = self
            .aux
            .iter()
            .map(|(k, col)| (k.clone(), indices.iter().map(|&i| col[i]).collect()))
            .collect();
        let mut weights: Vec<f64> = indices.iter().map(|&i| self.weights[i]).collect();
        if !weights.iter().any(|&w| w > 0.0) {
            weights.iter_mut().for_each(|w| *w = 1.0);
        }
        FeatureTable {
            schema: self.schema.clone(),
            values,
            student_ids: pick(&self.student_ids),
            school_ids: pick(&self.school_ids),
            country_ids: pick(&self.country_ids),
            weights,
            aux,
        }
    }

    /// Copy of the table with one feature column overwritten.
    pub fn with_feature_value(&self, col: usize, value: f64) -> FeatureTable {
        let mut t = self.clone();
        let m = t.n_features();
        for r in 0..t.n_rows() {
            t.values[r * m + col] = value;
        }
        t
    }

    /// Unique school ids in sorted order, with each school's country.
    pub fn schools(&self) -> Vec<(String, String)> {
        let mut map = BTreeMap::new();
        for (s, c) in self.school_ids.iter().zip(&self.country_ids) {
            map.entry(s.clone()).or_insert_with(|| c.clone());
        }
        map.into_iter().collect()
    }
}

/// Writes the table in the layout read by [`load_table`] with default options
/// (plus a `weight` column). Missing cells are empty.
pub fn write_table_csv<W: std::io::Write>(table: &FeatureTable, out: W) -> Result<()> {
    let defaults = LoadOptions::default();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![
        defaults.student_col.clone(),
        defaults.school_col.clone(),
        defaults.country_col.clone(),
        "weight".to_string(),
    ];
    header.extend(table.schema.names());
    header.extend(table.aux.keys().cloned());
    w.write_record(&header)?;
    let cell = |v: f64| if v.is_nan() { String::new() } else { v.to_string() };
    for i in 0..table.n_rows() {
        let mut rec = vec![
            table.student_ids[i].clone(),
            table.school_ids[i].clone(),
            table.country_ids[i].clone(),
            table.weights[i].to_string(),
        ];
        rec.extend(table.row(i).iter().map(|&v| cell(v)));
        rec.extend(table.aux.values().map(|c| cell(c[i])));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("table", e))?;
    Ok(())
}

fn is_missing_cell(raw: &str, sentinel: &str) -> bool {
    let t = raw.trim();
    t.is_empty() || (!sentinel.is_empty() && t == sentinel)
}

/// Reads a CSV extract into a validated [`FeatureTable`].
///
/// Every schema feature must appear as a column; other columns are ignored
/// unless named in `options`. Row order is preserved.
pub fn load_table<R: Read>(source: R, schema: &Schema, options: &LoadOptions) -> Result<FeatureTable> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(options.delimiter as u8)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let student = find(&options.student_col)?;
    let school = find(&options.school_col)?;
    let country = find(&options.country_col)?;
    let weight = options.weight_col.as_deref().map(find).transpose()?;
    let feature_cols = schema
        .features()
        .iter()
        .map(|f| find(&f.name))
        .collect::<Result<Vec<_>>>()?;
    let aux_cols = options
        .aux_cols
        .iter()
        .map(|name| find(name).map(|i| (name.clone(), i)))
        .collect::<Result<Vec<_>>>()?;

    let m = schema.len();
    let mut values = Vec::new();
    let (mut students, mut schools, mut countries, mut weights) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut aux: BTreeMap<String, Vec<f64>> =
        aux_cols.iter().map(|(n, _)| (n.clone(), Vec::new())).collect();

    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let key = |idx: usize, name: &str| -> Result<String> {
            let v = record.get(idx).unwrap_or("").trim();
            if v.is_empty() {
                return Err(Error::SchemaViolation {
                    row: r,
                    column: name.to_string(),
                    reason: "empty key".into(),
                });
            }
            Ok(v.to_string())
        };
        students.push(key(student, &options.student_col)?);
        schools.push(key(school, &options.school_col)?);
        countries.push(key(country, &options.country_col)?);
        weights.push(match weight {
            None => 1.0,
            Some(idx) => {
                let raw = record.get(idx).unwrap_or("");
                raw.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|w| w.is_finite() && *w >= 0.0)
                    .ok_or_else(|| Error::SchemaViolation {
                        row: r,
                        column: options.weight_col.clone().unwrap_or_default(),
                        reason: format!("`{raw}` is not a nonnegative weight"),
                    })?
            }
        });
        for (c, &idx) in feature_cols.iter().enumerate() {
            let spec = schema.get(c);
            let raw = record.get(idx).unwrap_or("");
            let v = if is_missing_cell(raw, &options.missing_sentinel) {
                spec.check_value(f64::NAN).map(|_| f64::NAN)
            } else {
                spec.parse_cell(raw)
            }
            .map_err(|reason| Error::SchemaViolation {
                row: r,
                column: spec.name.clone(),
                reason,
            })?;
            values.push(v);
        }
        for (name, idx) in &aux_cols {
            let raw = record.get(*idx).unwrap_or("");
            let v = if is_missing_cell(raw, &options.missing_sentinel) {
                f64::NAN
            } else {
                raw.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::SchemaViolation {
                        row: r,
                        column: name.clone(),
                        reason: format!("`{raw}` is not a number"),
                    })?
            };
            aux.get_mut(name).expect("initialized").push(v);
        }
    }
    debug_assert_eq!(values.len(), students.len() * m);
    FeatureTable::from_parts(schema.clone(), values, students, schools, countries, weights, aux)
}
