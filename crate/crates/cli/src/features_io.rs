//! Feature-table CSV: one row per image (id, named feature columns, flags).
//! NaN serializes as an empty cell; the sidecar `flags` column lists the
//! degenerate component names.

use std::path::Path;

use simtally::similarity::FeatureVector;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone)]
pub struct FeatureTable {
    pub names: Vec<String>,
    pub ids: Vec<String>,
    /// Row-major values; NaN marks a degenerate component.
    pub rows: Vec<Vec<f64>>,
    pub flags: Vec<String>,
}

impl FeatureTable {
    pub fn new(names: Vec<String>) -> Self {
        Self {
            names,
            ids: Vec::new(),
            rows: Vec::new(),
            flags: Vec::new(),
        }
    }

    pub fn push(&mut self, id: String, values: Vec<f64>, flagged: &[String]) {
        debug_assert_eq!(values.len(), self.names.len());
        self.ids.push(id);
        self.rows.push(values);
        self.flags.push(flagged.join(";"));
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn feature_vector(&self, row: usize) -> FeatureVector {
        FeatureVector::new(self.rows[row].clone(), self.names.clone())
            .expect("table rows are valid feature vectors")
    }

    /// Column values across all rows.
    pub fn column(&self, idx: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[idx]).collect()
    }

    pub fn write_csv(&self, path: &Path) -> CliResult<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["id".to_string()];
        header.extend(self.names.iter().cloned());
        header.push("flags".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = vec![self.ids[i].clone()];
            for v in &self.rows[i] {
                rec.push(if v.is_nan() { String::new() } else { format!("{v}") });
            }
            rec.push(self.flags[i].clone());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> CliResult<Self> {
        let mut r = csv::Reader::from_path(path)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let header = r.headers()?.clone();
        if header.len() < 3 || header.get(0) != Some("id") {
            return Err(CliError::Data(format!(
                "{}: expected header starting with `id` and ending with `flags`",
                path.display()
            )));
        }
        let last = header.len() - 1;
        if header.get(last) != Some("flags") {
            return Err(CliError::Data(format!(
                "{}: missing trailing `flags` column",
                path.display()
            )));
        }
        let names: Vec<String> = (1..last).map(|i| header.get(i).unwrap().to_string()).collect();
        let mut table = FeatureTable::new(names);
        for rec in r.records() {
            let rec = rec?;
            let id = rec.get(0).unwrap_or_default().to_string();
            let mut values = Vec::with_capacity(last - 1);
            for i in 1..last {
                let cell = rec.get(i).unwrap_or_default();
                if cell.is_empty() {
                    values.push(f64::NAN);
                } else {
                    values.push(cell.parse::<f64>().map_err(|e| {
                        CliError::Data(format!("{}: row `{id}` column {i}: {e}", path.display()))
                    })?);
                }
            }
            let flags = rec.get(last).unwrap_or_default().to_string();
            table.ids.push(id);
            table.rows.push(values);
            table.flags.push(flags);
        }
        if table.is_empty() {
            return Err(CliError::Data(format!("{}: no data rows", path.display())));
        }
        Ok(table)
    }
}
