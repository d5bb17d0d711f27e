//! CSV ingestion: column-role validation, missing-value handling and one-hot
//! encoding of categorical columns.

use super::config::AnalysisConfig;
use crate::error::{Error, Result};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

/// Parsed input data before covariate expansion.
#[derive(Debug, Clone)]
pub struct IngestedData {
    /// numeric covariates in configured order
    pub numeric: Vec<(String, Vec<f64>)>,
    /// dummy columns, grouped by parent variable in configured order
    pub dummies: Vec<DummyColumn>,
    pub treat: Vec<bool>,
    pub y: Vec<f64>,
    /// rows dropped because a used column had a missing value
    pub n_dropped: usize,
}

#[derive(Debug, Clone)]
pub struct DummyColumn {
    /// e.g. "education=high_school"
    pub name: String,
    pub parent: String,
    pub values: Vec<f64>,
}

impl IngestedData {
    pub fn n(&self) -> usize {
        self.y.len()
    }
}

fn is_missing(s: &str) -> bool {
    let t = s.trim();
    t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan")
}

/// Read a CSV (RFC 4180, header row required) and split the used columns
/// into numeric covariates, categorical levels, treatment and outcome. Rows
/// with a missing value in any used column are dropped with a count;
/// categorical variables are one-hot encoded with the lexicographically
/// first level as the dropped reference.
pub fn ingest(path: &Path, config: &AnalysisConfig) -> Result<IngestedData> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| Error::Data(format!("cannot read header: {e}")))?
        .clone();
    if headers.is_empty() {
        return Err(Error::Data("empty input file".into()));
    }

    let input = &config.input;
    let mut col_index: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, h) in headers.iter().enumerate() {
        col_index.insert(h, i);
    }
    let mut used: Vec<(&str, usize)> = Vec::new();
    let mut missing_cols = Vec::new();
    for name in std::iter::once(input.treatment.as_str())
        .chain(std::iter::once(input.outcome.as_str()))
        .chain(input.covariates.iter().map(|s| s.as_str()))
    {
        match col_index.get(name) {
            Some(&i) => used.push((name, i)),
            None => missing_cols.push(name.to_string()),
        }
    }
    if !missing_cols.is_empty() {
        return Err(Error::Data(format!("missing columns: {}", missing_cols.join(", "))));
    }

    // collect raw used cells, dropping rows with missing values
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut n_dropped = 0usize;
    for (ri, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Data(format!("row {}: {e}", ri + 2)))?;
        let cells: Vec<&str> = used.iter().map(|&(_, i)| rec.get(i).unwrap_or("")).collect();
        if cells.iter().any(|c| is_missing(c)) {
            n_dropped += 1;
            continue;
        }
        rows.push(cells.into_iter().map(|s| s.trim().to_string()).collect());
    }
    if n_dropped > 0 {
        log::warn!("dropped {n_dropped} rows with missing values in used columns");
    }
    if rows.len() < 2 {
        return Err(Error::Data(format!(
            "need at least 2 complete rows, got {} ({} dropped)",
            rows.len(),
            n_dropped
        )));
    }

    // cell layout: 0 treatment, 1 outcome, 2.. covariates in config order
    let mut treat = Vec::with_capacity(rows.len());
    let mut bad_treat: BTreeSet<String> = BTreeSet::new();
    for r in &rows {
        match r[0].parse::<f64>() {
            Ok(v) if v == 0.0 => treat.push(false),
            Ok(v) if v == 1.0 => treat.push(true),
            _ => {
                bad_treat.insert(r[0].clone());
            }
        }
    }
    if !bad_treat.is_empty() {
        let shown: Vec<String> = bad_treat.iter().take(5).cloned().collect();
        return Err(Error::Data(format!(
            "treatment column {:?} is not binary; offending values: {}",
            input.treatment,
            shown.join(", ")
        )));
    }

    let mut y = Vec::with_capacity(rows.len());
    for (ri, r) in rows.iter().enumerate() {
        let v: f64 = r[1].parse().map_err(|_| {
            Error::Data(format!(
                "outcome column {:?} row {}: cannot parse {:?} as a number",
                input.outcome,
                ri + 1,
                r[1]
            ))
        })?;
        y.push(v);
    }

    let is_cat: Vec<bool> =
        input.covariates.iter().map(|c| input.categorical.contains(c)).collect();
    let mut numeric: Vec<(String, Vec<f64>)> = Vec::new();
    let mut dummies: Vec<DummyColumn> = Vec::new();
    for (ci, cname) in input.covariates.iter().enumerate() {
        let cell = |r: &Vec<String>| r[2 + ci].clone();
        if is_cat[ci] {
            let levels: BTreeSet<String> = rows.iter().map(&cell).collect();
            if levels.len() < 2 {
                log::warn!("categorical column {cname:?} has a single level; no dummies emitted");
                continue;
            }
            // lexicographically first level is the dropped reference
            for level in levels.iter().skip(1) {
                let values: Vec<f64> =
                    rows.iter().map(|r| f64::from(cell(r) == *level)).collect();
                dummies.push(DummyColumn {
                    name: format!("{cname}={level}"),
                    parent: cname.clone(),
                    values,
                });
            }
        } else {
            let mut vals = Vec::with_capacity(rows.len());
            for (ri, r) in rows.iter().enumerate() {
                let v: f64 = cell(r).parse().map_err(|_| {
                    Error::Data(format!(
                        "numeric column {:?} row {}: cannot parse {:?}",
                        cname,
                        ri + 1,
                        cell(r)
                    ))
                })?;
                vals.push(v);
            }
            numeric.push((cname.clone(), vals));
        }
    }

    Ok(IngestedData { numeric, dummies, treat, y, n_dropped })
}
