//! Dataset representation: CSV ingestion against a declared schema,
//! standardization of continuous covariates, and one-hot expansion of
//! categorical covariates.
//!
//! The encoded design matrix contains only continuous columns (standardized
//! when requested) and {0,1} columns; categorical inputs are expanded into
//! one-hot groups named `<col>_<level>`.

use std::collections::HashMap;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::mean_sd;

/// Declared kind of a raw covariate column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SchemaKind {
    Continuous,
    Binary,
    Categorical { levels: Vec<String> },
}

/// One raw covariate column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: SchemaKind,
}

/// Ordered covariate schema. The declaration order fixes the layout of the
/// encoded design matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSchema {
    pub columns: Vec<ColumnSpec>,
}

impl CovariateSchema {
    pub fn new(columns: Vec<ColumnSpec>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::Schema("schema declares no covariate columns".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for c in &columns {
            if !seen.insert(c.name.clone()) {
                return Err(Error::Schema(format!("duplicate column name `{}`", c.name)));
            }
            if let SchemaKind::Categorical { levels } = &c.kind {
                if levels.is_empty() {
                    return Err(Error::Schema(format!(
                        "categorical column `{}` has no levels",
                        c.name
                    )));
                }
                let mut lv = std::collections::HashSet::new();
                for l in levels {
                    if !lv.insert(l) {
                        return Err(Error::Schema(format!(
                            "categorical column `{}` has duplicate level `{}`",
                            c.name, l
                        )));
                    }
                }
            }
        }
        Ok(Self { columns })
    }

    /// Parse the JSON sidecar: an object mapping column name to its kind.
    /// Column order follows the object's key order.
    pub fn from_sidecar_json(text: &str) -> Result<Self> {
        let map: serde_json::Map<String, serde_json::Value> = serde_json::from_str(text)?;
        let mut columns = Vec::with_capacity(map.len());
        for (name, v) in map {
            let kind: SchemaKind = serde_json::from_value(v)
                .map_err(|e| Error::Schema(format!("column `{name}`: {e}")))?;
            columns.push(ColumnSpec { name, kind });
        }
        Self::new(columns)
    }

    pub fn to_sidecar_json(&self) -> String {
        let mut map = serde_json::Map::new();
        for c in &self.columns {
            map.insert(c.name.clone(), serde_json::to_value(&c.kind).unwrap());
        }
        serde_json::to_string_pretty(&serde_json::Value::Object(map)).unwrap()
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_sidecar_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_sidecar_json())?;
        Ok(())
    }

    /// Names of the encoded design-matrix columns, in order.
    pub fn encoded_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for c in &self.columns {
            match &c.kind {
                SchemaKind::Continuous | SchemaKind::Binary => names.push(c.name.clone()),
                SchemaKind::Categorical { levels } => {
                    for l in levels {
                        names.push(format!("{}_{}", c.name, l));
                    }
                }
            }
        }
        names
    }
}

/// Kind of an encoded design-matrix column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Continuous,
    Binary,
}

/// Outcome family and, for binary outcomes, which raw label counts as
/// favorable. Internally the favorable label is always mapped to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "lowercase")]
pub enum OutcomeType {
    Continuous,
    Binary {
        #[serde(default = "default_favorable")]
        favorable_label: u8,
    },
}

fn default_favorable() -> u8 {
    1
}

impl OutcomeType {
    pub fn is_binary(&self) -> bool {
        matches!(self, OutcomeType::Binary { .. })
    }

    pub fn validate(&self) -> Result<()> {
        if let OutcomeType::Binary { favorable_label } = self {
            if *favorable_label > 1 {
                return Err(Error::InvalidValue(format!(
                    "favorable_label must be 0 or 1, got {favorable_label}"
                )));
            }
        }
        Ok(())
    }
}

/// Per-column standardization statistics (train-split mean and unbiased sd).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: f64,
    pub sd: f64,
}

/// One categorical column's footprint in the encoded matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneHotGroup {
    pub name: String,
    pub levels: Vec<String>,
    /// Index of the first encoded column of the group.
    pub col_start: usize,
}

/// Encoded dataset: design matrix, treatment, outcome, and optional
/// ground-truth columns carried through from simulation.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub column_kinds: Vec<ColumnKind>,
    pub column_names: Vec<String>,
    pub a: Vec<u8>,
    pub y: Vec<f64>,
    pub true_tau: Option<Vec<f64>>,
    pub true_cluster: Option<Vec<usize>>,
    pub true_y0: Option<Vec<f64>>,
    pub true_y1: Option<Vec<f64>>,
    /// Per encoded column; `Some` only for standardized continuous columns.
    pub standardization: Vec<Option<Standardization>>,
    pub onehot_groups: Vec<OneHotGroup>,
    /// Stable row identifiers, assigned at ingestion and preserved by `split`.
    pub row_ids: Vec<usize>,
}

/// Ingestion options.
#[derive(Debug, Clone, Copy)]
pub struct IngestOptions {
    pub drop_missing: bool,
    pub standardize: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self { drop_missing: true, standardize: true }
    }
}

const RESERVED: [&str; 6] = ["a", "y", "true_tau", "true_cluster", "true_y0", "true_y1"];

fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan")
}

fn parse_f64(cell: &str, col: &str, row: usize) -> Result<f64> {
    cell.trim().parse::<f64>().map_err(|_| {
        Error::InvalidValue(format!("row {row}: cannot parse `{cell}` in column `{col}` as a number"))
    })
}

fn parse_01(cell: &str, col: &str, row: usize) -> Result<f64> {
    let v = parse_f64(cell, col, row)?;
    if v == 0.0 || v == 1.0 {
        Ok(v)
    } else {
        Err(Error::InvalidValue(format!(
            "row {row}: column `{col}` must be 0 or 1, got {v}"
        )))
    }
}

/// Read a CSV file against `schema`, returning the encoded dataset.
///
/// The header must contain every schema column plus `a` and `y`;
/// `true_tau`, `true_cluster`, `true_y0`, `true_y1` are picked up when
/// present. Unknown columns are rejected.
pub fn ingest_csv(
    path: &Path,
    schema: &CovariateSchema,
    outcome_type: OutcomeType,
    options: IngestOptions,
) -> Result<Dataset> {
    outcome_type.validate()?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.to_string()).collect();

    let mut index: HashMap<&str, usize> = HashMap::new();
    for (i, h) in headers.iter().enumerate() {
        if index.insert(h.as_str(), i).is_some() {
            return Err(Error::Schema(format!("duplicate header column `{h}`")));
        }
    }
    let schema_names: std::collections::HashSet<&str> =
        schema.columns.iter().map(|c| c.name.as_str()).collect();
    for h in &headers {
        if !schema_names.contains(h.as_str()) && !RESERVED.contains(&h.as_str()) {
            return Err(Error::Schema(format!("unexpected column `{h}` not in schema")));
        }
    }
    for c in &schema.columns {
        if !index.contains_key(c.name.as_str()) {
            return Err(Error::Schema(format!("schema column `{}` missing from file", c.name)));
        }
    }
    for required in ["a", "y"] {
        if !index.contains_key(required) {
            return Err(Error::Schema(format!("required column `{required}` missing from file")));
        }
    }
    let has_tau = index.contains_key("true_tau");
    let has_cluster = index.contains_key("true_cluster");
    let has_y0 = index.contains_key("true_y0");
    let has_y1 = index.contains_key("true_y1");

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut a = Vec::new();
    let mut y = Vec::new();
    let mut true_tau = Vec::new();
    let mut true_cluster = Vec::new();
    let mut true_y0 = Vec::new();
    let mut true_y1 = Vec::new();

    'rows: for (ridx, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::Schema(format!(
                "row {ridx} has {} fields, expected {}",
                record.len(),
                headers.len()
            )));
        }
        // Missing-value scan first so a partially parsed row is never kept.
        for cell in record.iter() {
            if is_missing(cell) {
                if options.drop_missing {
                    continue 'rows;
                }
                return Err(Error::InvalidValue(format!("row {ridx} contains a missing value")));
            }
        }

        let mut encoded = Vec::new();
        for c in &schema.columns {
            let cell = &record[index[c.name.as_str()]];
            match &c.kind {
                SchemaKind::Continuous => encoded.push(parse_f64(cell, &c.name, ridx)?),
                SchemaKind::Binary => encoded.push(parse_01(cell, &c.name, ridx)?),
                SchemaKind::Categorical { levels } => {
                    let trimmed = cell.trim();
                    let pos = levels.iter().position(|l| l == trimmed).ok_or_else(|| {
                        Error::InvalidValue(format!(
                            "row {ridx}: `{trimmed}` is not a declared level of `{}`",
                            c.name
                        ))
                    })?;
                    for (i, _) in levels.iter().enumerate() {
                        encoded.push(if i == pos { 1.0 } else { 0.0 });
                    }
                }
            }
        }
        let a_cell = &record[index["a"]];
        let av = parse_f64(a_cell, "a", ridx)?;
        if av != 0.0 && av != 1.0 {
            return Err(Error::InvalidValue(format!("row {ridx}: invalid treatment value {av}")));
        }
        let y_cell = &record[index["y"]];
        let mut yv = parse_f64(y_cell, "y", ridx)?;
        if let OutcomeType::Binary { favorable_label } = outcome_type {
            if yv != 0.0 && yv != 1.0 {
                return Err(Error::InvalidValue(format!(
                    "row {ridx}: binary outcome must be 0 or 1, got {yv}"
                )));
            }
            if favorable_label == 0 {
                yv = 1.0 - yv;
            }
        }

        rows.push(encoded);
        a.push(av as u8);
        y.push(yv);
        if has_tau {
            true_tau.push(parse_f64(&record[index["true_tau"]], "true_tau", ridx)?);
        }
        if has_cluster {
            let v = parse_f64(&record[index["true_cluster"]], "true_cluster", ridx)?;
            if v < 0.0 || v.fract() != 0.0 {
                return Err(Error::InvalidValue(format!(
                    "row {ridx}: true_cluster must be a non-negative integer, got {v}"
                )));
            }
            true_cluster.push(v as usize);
        }
        if has_y0 {
            true_y0.push(parse_f64(&record[index["true_y0"]], "true_y0", ridx)?);
        }
        if has_y1 {
            true_y1.push(parse_f64(&record[index["true_y1"]], "true_y1", ridx)?);
        }
    }

    build_dataset(
        schema,
        rows,
        a,
        y,
        has_tau.then_some(true_tau),
        has_cluster.then_some(true_cluster),
        has_y0.then_some(true_y0),
        has_y1.then_some(true_y1),
        options.standardize,
    )
}

/// Assemble and validate a dataset from already-encoded rows.
#[allow(clippy::too_many_arguments)]
pub(crate) fn build_dataset(
    schema: &CovariateSchema,
    rows: Vec<Vec<f64>>,
    a: Vec<u8>,
    y: Vec<f64>,
    true_tau: Option<Vec<f64>>,
    true_cluster: Option<Vec<usize>>,
    true_y0: Option<Vec<f64>>,
    true_y1: Option<Vec<f64>>,
    standardize: bool,
) -> Result<Dataset> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::InvalidValue("empty dataset after dropping missing rows".into()));
    }
    if !a.contains(&0) || !a.contains(&1) {
        return Err(Error::InvalidValue("treatment column must contain both arms".into()));
    }

    let column_names = schema.encoded_names();
    let d = column_names.len();
    let mut column_kinds = Vec::with_capacity(d);
    let mut onehot_groups = Vec::new();
    {
        let mut col = 0usize;
        for c in &schema.columns {
            match &c.kind {
                SchemaKind::Continuous => {
                    column_kinds.push(ColumnKind::Continuous);
                    col += 1;
                }
                SchemaKind::Binary => {
                    column_kinds.push(ColumnKind::Binary);
                    col += 1;
                }
                SchemaKind::Categorical { levels } => {
                    onehot_groups.push(OneHotGroup {
                        name: c.name.clone(),
                        levels: levels.clone(),
                        col_start: col,
                    });
                    for _ in levels {
                        column_kinds.push(ColumnKind::Binary);
                    }
                    col += levels.len();
                }
            }
        }
    }

    let mut x = Array2::<f64>::zeros((n, d));
    for (i, row) in rows.iter().enumerate() {
        if row.len() != d {
            return Err(Error::Schema(format!(
                "encoded row {i} has {} entries, expected {d}",
                row.len()
            )));
        }
        for (j, &v) in row.iter().enumerate() {
            x[[i, j]] = v;
        }
    }

    let mut standardization = vec![None; d];
    if standardize {
        for j in 0..d {
            if column_kinds[j] != ColumnKind::Continuous {
                continue;
            }
            let col: Vec<f64> = x.column(j).to_vec();
            let (mean, sd) = mean_sd(&col);
            if sd <= 0.0 || !sd.is_finite() {
                return Err(Error::InvalidValue(format!(
                    "column `{}` has zero variance; cannot standardize",
                    column_names[j]
                )));
            }
            for i in 0..n {
                x[[i, j]] = (x[[i, j]] - mean) / sd;
            }
            standardization[j] = Some(Standardization { mean, sd });
        }
    }

    Ok(Dataset {
        x,
        column_kinds,
        column_names,
        a,
        y,
        true_tau,
        true_cluster,
        true_y0,
        true_y1,
        standardization,
        onehot_groups,
        row_ids: (0..n).collect(),
    })
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_standardized(&self) -> bool {
        self.standardization.iter().any(|s| s.is_some())
    }

    /// Indices of control-arm rows.
    pub fn control_rows(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.a[i] == 0).collect()
    }

    /// Indices of treated-arm rows.
    pub fn treated_rows(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.a[i] == 1).collect()
    }

    /// Undo standardization, returning raw-scale values and no stats.
    pub fn to_raw(&self) -> Dataset {
        let mut out = self.clone();
        for j in 0..self.d() {
            if let Some(s) = self.standardization[j] {
                for i in 0..self.n() {
                    out.x[[i, j]] = self.x[[i, j]] * s.sd + s.mean;
                }
            }
        }
        out.standardization = vec![None; self.d()];
        out
    }

    /// Original-scale value of cell (i, j).
    pub fn raw_value(&self, i: usize, j: usize) -> f64 {
        match self.standardization[j] {
            Some(s) => self.x[[i, j]] * s.sd + s.mean,
            None => self.x[[i, j]],
        }
    }

    /// Decode the level of a one-hot group for one row. The group must
    /// contain exactly one 1.
    pub fn decode_onehot(&self, row: usize, group: &OneHotGroup) -> Result<String> {
        let mut hit = None;
        for (i, level) in group.levels.iter().enumerate() {
            let v = self.x[[row, group.col_start + i]];
            if v == 1.0 {
                if hit.is_some() {
                    return Err(Error::InvalidValue(format!(
                        "row {row}: one-hot group `{}` has multiple active levels",
                        group.name
                    )));
                }
                hit = Some(level.clone());
            } else if v != 0.0 {
                return Err(Error::InvalidValue(format!(
                    "row {row}: one-hot group `{}` has non-binary entry {v}",
                    group.name
                )));
            }
        }
        hit.ok_or_else(|| {
            Error::InvalidValue(format!("row {row}: one-hot group `{}` has no active level", group.name))
        })
    }

    fn take_rows(&self, idx: &[usize]) -> Dataset {
        let d = self.d();
        let mut x = Array2::<f64>::zeros((idx.len(), d));
        for (i, &r) in idx.iter().enumerate() {
            for j in 0..d {
                x[[i, j]] = self.x[[r, j]];
            }
        }
        let take = |v: &Option<Vec<f64>>| v.as_ref().map(|v| idx.iter().map(|&r| v[r]).collect());
        Dataset {
            x,
            column_kinds: self.column_kinds.clone(),
            column_names: self.column_names.clone(),
            a: idx.iter().map(|&r| self.a[r]).collect(),
            y: idx.iter().map(|&r| self.y[r]).collect(),
            true_tau: take(&self.true_tau),
            true_cluster: self
                .true_cluster
                .as_ref()
                .map(|v| idx.iter().map(|&r| v[r]).collect()),
            true_y0: take(&self.true_y0),
            true_y1: take(&self.true_y1),
            standardization: self.standardization.clone(),
            onehot_groups: self.onehot_groups.clone(),
            row_ids: idx.iter().map(|&r| self.row_ids[r]).collect(),
        }
    }
}

/// Re-apply previously computed standardization statistics to a raw dataset.
///
/// Used for test splits and held-out files, which must be transformed with
/// the fitting split's statistics rather than their own.
pub fn apply_standardization(ds: &Dataset, stats: &[Option<Standardization>]) -> Result<Dataset> {
    if stats.len() != ds.d() {
        return Err(Error::Schema(format!(
            "standardization stats cover {} columns, dataset has {}",
            stats.len(),
            ds.d()
        )));
    }
    if ds.is_standardized() {
        return Err(Error::InvalidValue(
            "dataset is already standardized; ingest with standardize=false first".into(),
        ));
    }
    let mut out = ds.clone();
    for j in 0..ds.d() {
        match (ds.column_kinds[j], stats[j]) {
            (ColumnKind::Continuous, Some(s)) => {
                for i in 0..ds.n() {
                    out.x[[i, j]] = (ds.x[[i, j]] - s.mean) / s.sd;
                }
            }
            (ColumnKind::Continuous, None) => {
                return Err(Error::InvalidValue(format!(
                    "missing standardization stats for continuous column `{}`",
                    ds.column_names[j]
                )));
            }
            (ColumnKind::Binary, _) => {}
        }
    }
    out.standardization = stats.to_vec();
    Ok(out)
}

/// Deterministic row split into sizes floor(f*N) and the remainder.
///
/// When the input is standardized, statistics are recomputed on the first
/// split and re-applied to the second, so the second split's moments are
/// generally not (0, 1).
pub fn split(ds: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidValue(format!("split fraction must be in (0,1), got {fraction}")));
    }
    let n = ds.n();
    let n1 = (fraction * n as f64).floor() as usize;
    if n1 == 0 || n1 == n {
        return Err(Error::InvalidValue(format!(
            "fraction {fraction} yields an empty split for {n} rows"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut first: Vec<usize> = order[..n1].to_vec();
    let mut second: Vec<usize> = order[n1..].to_vec();
    first.sort_unstable();
    second.sort_unstable();

    if ds.is_standardized() {
        let raw = ds.to_raw();
        let raw1 = raw.take_rows(&first);
        let raw2 = raw.take_rows(&second);
        let mut std1 = vec![None; ds.d()];
        let mut ds1 = raw1.clone();
        for j in 0..ds.d() {
            if ds.column_kinds[j] != ColumnKind::Continuous {
                continue;
            }
            let col: Vec<f64> = raw1.x.column(j).to_vec();
            let (mean, sd) = mean_sd(&col);
            if sd <= 0.0 || !sd.is_finite() {
                return Err(Error::InvalidValue(format!(
                    "column `{}` has zero variance on the first split",
                    ds.column_names[j]
                )));
            }
            std1[j] = Some(Standardization { mean, sd });
            for i in 0..ds1.n() {
                ds1.x[[i, j]] = (raw1.x[[i, j]] - mean) / sd;
            }
        }
        ds1.standardization = std1.clone();
        let ds2 = apply_standardization(&raw2, &std1)?;
        Ok((ds1, ds2))
    } else {
        Ok((ds.take_rows(&first), ds.take_rows(&second)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::io::Write;

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn simple_schema() -> CovariateSchema {
        CovariateSchema::new(vec![
            ColumnSpec { name: "age".into(), kind: SchemaKind::Continuous },
            ColumnSpec {
                name: "grp".into(),
                kind: SchemaKind::Categorical {
                    levels: vec!["a".into(), "b".into(), "c".into()],
                },
            },
        ])
        .unwrap()
    }

    #[test]
    fn onehot_expansion_sums_to_one() {
        let f = write_csv("age,grp,a,y\n1,a,0,0.1\n2,b,1,0.2\n3,c,0,0.3\n4,a,1,0.4\n");
        let ds = ingest_csv(
            f.path(),
            &simple_schema(),
            OutcomeType::Continuous,
            IngestOptions { drop_missing: true, standardize: false },
        )
        .unwrap();
        assert_eq!(ds.d(), 4);
        assert_eq!(ds.column_names, vec!["age", "grp_a", "grp_b", "grp_c"]);
        for i in 0..ds.n() {
            let s: f64 = (1..4).map(|j| ds.x[[i, j]]).sum();
            assert_eq!(s, 1.0);
        }
        // Round trip: decoding recovers the original level.
        let group = ds.onehot_groups[0].clone();
        assert_eq!(ds.decode_onehot(0, &group).unwrap(), "a");
        assert_eq!(ds.decode_onehot(1, &group).unwrap(), "b");
        assert_eq!(ds.decode_onehot(2, &group).unwrap(), "c");
    }

    #[test]
    fn standardization_z_scores() {
        let f = write_csv("age,grp,a,y\n1,a,0,0.1\n2,b,1,0.2\n3,c,0,0.3\n");
        let ds = ingest_csv(
            f.path(),
            &simple_schema(),
            OutcomeType::Continuous,
            IngestOptions::default(),
        )
        .unwrap();
        // (1,2,3) standardized with sd = 1 (n-1 denominator) -> (-1, 0, 1)
        assert_relative_eq!(ds.x[[0, 0]], -1.0, epsilon = 1e-12);
        assert_relative_eq!(ds.x[[1, 0]], 0.0, epsilon = 1e-12);
        assert_relative_eq!(ds.x[[2, 0]], 1.0, epsilon = 1e-12);
        let s = ds.standardization[0].unwrap();
        assert_relative_eq!(s.mean, 2.0);
        assert_relative_eq!(s.sd, 1.0);
    }

    #[test]
    fn invalid_treatment_value_rejected() {
        let f = write_csv("age,grp,a,y\n1,a,2,0.1\n2,b,1,0.2\n");
        let err = ingest_csv(
            f.path(),
            &simple_schema(),
            OutcomeType::Continuous,
            IngestOptions::default(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("invalid treatment value"));
    }

    #[test]
    fn binary_outcome_flipped_by_favorable_label() {
        let f = write_csv("age,grp,a,y\n1,a,0,1\n2,b,1,0\n5,c,1,1\n");
        let ds = ingest_csv(
            f.path(),
            &simple_schema(),
            OutcomeType::Binary { favorable_label: 0 },
            IngestOptions { drop_missing: true, standardize: false },
        )
        .unwrap();
        assert_eq!(ds.y, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn binary_outcome_out_of_domain() {
        let f = write_csv("age,grp,a,y\n1,a,0,0.5\n2,b,1,0\n");
        assert!(ingest_csv(
            f.path(),
            &simple_schema(),
            OutcomeType::Binary { favorable_label: 1 },
            IngestOptions::default(),
        )
        .is_err());
    }

    #[test]
    fn missing_values_dropped_or_rejected() {
        let f = write_csv("age,grp,a,y\n1,a,0,0.1\n,b,1,0.2\n3,c,1,0.3\n");
        let ds = ingest_csv(
            f.path(),
            &simple_schema(),
            OutcomeType::Continuous,
            IngestOptions { drop_missing: true, standardize: false },
        )
        .unwrap();
        assert_eq!(ds.n(), 2);
        assert!(ingest_csv(
            f.path(),
            &simple_schema(),
            OutcomeType::Continuous,
            IngestOptions { drop_missing: false, standardize: false },
        )
        .is_err());
    }

    #[test]
    fn unknown_column_rejected() {
        let f = write_csv("age,grp,extra,a,y\n1,a,9,0,0.1\n2,b,9,1,0.2\n");
        assert!(matches!(
            ingest_csv(
                f.path(),
                &simple_schema(),
                OutcomeType::Continuous,
                IngestOptions::default()
            ),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn apply_standardization_is_exact_arithmetic() {
        let f = write_csv("age,grp,a,y\n5,a,0,0.1\n1,b,1,0.2\n");
        let ds = ingest_csv(
            f.path(),
            &simple_schema(),
            OutcomeType::Continuous,
            IngestOptions { drop_missing: true, standardize: false },
        )
        .unwrap();
        let stats = vec![Some(Standardization { mean: 3.0, sd: 2.0 }), None, None, None];
        let out = apply_standardization(&ds, &stats).unwrap();
        assert_relative_eq!(out.x[[0, 0]], 1.0);
        assert_relative_eq!(out.x[[1, 0]], -1.0);
        // Identity stats leave values alone.
        let id = vec![Some(Standardization { mean: 0.0, sd: 1.0 }), None, None, None];
        let same = apply_standardization(&ds, &id).unwrap();
        assert_relative_eq!(same.x[[0, 0]], 5.0);
    }

    #[test]
    fn split_sizes_and_partition() {
        let mut content = String::from("age,grp,a,y\n");
        for i in 0..10 {
            content.push_str(&format!("{},a,{},{}\n", i, i % 2, i as f64 / 10.0));
        }
        let f = write_csv(&content);
        let ds = ingest_csv(
            f.path(),
            &simple_schema(),
            OutcomeType::Continuous,
            IngestOptions::default(),
        )
        .unwrap();
        let (d1, d2) = split(&ds, 0.5, 42).unwrap();
        assert_eq!(d1.n(), 5);
        assert_eq!(d2.n(), 5);
        let mut ids: Vec<usize> = d1.row_ids.iter().chain(d2.row_ids.iter()).cloned().collect();
        ids.sort_unstable();
        assert_eq!(ids, (0..10).collect::<Vec<_>>());
        // Deterministic given the seed.
        let (e1, _) = split(&ds, 0.5, 42).unwrap();
        assert_eq!(d1.row_ids, e1.row_ids);
        // First split is re-standardized: mean 0, sd 1.
        let col: Vec<f64> = d1.x.column(0).to_vec();
        let (m, s) = mean_sd(&col);
        assert_relative_eq!(m, 0.0, epsilon = 1e-9);
        assert_relative_eq!(s, 1.0, epsilon = 1e-9);
        // Second split reuses the first split's stats, so its mean is
        // generally nonzero.
        let col2: Vec<f64> = d2.x.column(0).to_vec();
        let (m2, _) = mean_sd(&col2);
        assert!(m2.abs() > 1e-6);
    }

    #[test]
    fn split_round_trip_to_raw() {
        let mut content = String::from("age,grp,a,y\n");
        for i in 0..8 {
            content.push_str(&format!("{},b,{},0.5\n", i * 3 + 1, i % 2));
        }
        let f = write_csv(&content);
        let ds = ingest_csv(
            f.path(),
            &simple_schema(),
            OutcomeType::Continuous,
            IngestOptions::default(),
        )
        .unwrap();
        let (d1, d2) = split(&ds, 0.5, 7).unwrap();
        let raw = ds.to_raw();
        for (part, _) in [(&d1, "first"), (&d2, "second")] {
            let back = part.to_raw();
            for (i, &rid) in part.row_ids.iter().enumerate() {
                let orig_row = raw.row_ids.iter().position(|&r| r == rid).unwrap();
                assert_relative_eq!(back.x[[i, 0]], raw.x[[orig_row, 0]], epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn split_rejects_degenerate_fraction() {
        let f = write_csv("age,grp,a,y\n1,a,0,0.1\n2,b,1,0.2\n3,c,1,0.3\n");
        let ds = ingest_csv(
            f.path(),
            &simple_schema(),
            OutcomeType::Continuous,
            IngestOptions { drop_missing: true, standardize: false },
        )
        .unwrap();
        assert!(split(&ds, 0.01, 1).is_err());
        assert!(split(&ds, 1.5, 1).is_err());
    }

    #[test]
    fn sidecar_round_trip() {
        let schema = simple_schema();
        let text = schema.to_sidecar_json();
        let back = CovariateSchema::from_sidecar_json(&text).unwrap();
        assert_eq!(schema, back);
    }
}
