use crate::error::CliError;
use serde::Serialize;
use serde_json::{json, Value};
use std::io::Write;
use std::path::{Path, PathBuf};

pub const SCHEMA: &str = "lrd-output-v1";

/// A CSV file held as raw records, with typed column access.
#[derive(Debug, Clone)]
pub struct Table {
    pub headers: Vec<String>,
    pub records: Vec<csv::StringRecord>,
}

impl Table {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn column_index(&self, name: &str) -> Result<usize, CliError> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Validation(format!("missing column \"{name}\" (have: {})", self.headers.join(", "))))
    }

    /// Parsed numeric column; rows are numbered from 1 after the header.
    pub fn numeric(&self, name: &str) -> Result<Vec<f64>, CliError> {
        let j = self.column_index(name)?;
        self.records
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let cell = r.get(j).unwrap_or("").trim();
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => Err(CliError::Validation(format!(
                        "row {}, column \"{name}\": cannot parse '{cell}' as a finite number",
                        i + 1
                    ))),
                }
            })
            .collect()
    }

    pub fn binary(&self, name: &str) -> Result<Vec<f64>, CliError> {
        let v = self.numeric(name)?;
        if let Some(i) = v.iter().position(|&a| a != 0.0 && a != 1.0) {
            return Err(CliError::Validation(format!(
                "row {}, column \"{name}\": value {} is not 0 or 1",
                i + 1,
                v[i]
            )));
        }
        Ok(v)
    }
}

pub fn ingest_csv(path: &Path) -> Result<Table, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Validation(format!("cannot open {}: {e}", path.display())))?;
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut records = Vec::new();
    for (i, r) in rdr.records().enumerate() {
        let r = r.map_err(|e| CliError::Validation(format!("row {}: {e}", i + 1)))?;
        records.push(r);
    }
    if records.is_empty() {
        return Err(CliError::Validation(format!("{} has no data rows", path.display())));
    }
    Ok(Table { headers, records })
}

/// Outcome plus optional weights from the table.
pub fn read_sample(t: &Table, x_col: &str, weight_col: Option<&str>) -> Result<(Vec<f64>, Option<Vec<f64>>), CliError> {
    let x = t.numeric(x_col)?;
    let w = weight_col.map(|c| t.numeric(c)).transpose()?;
    Ok((x, w))
}

pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v}")
    }
}

pub struct CsvOut {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvOut {
    pub fn new(headers: &[&str]) -> Self {
        CsvOut { headers: headers.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }
}

pub fn write_csv(out: &CsvOut, path: Option<&PathBuf>) -> Result<(), CliError> {
    let sink: Box<dyn Write> = match path {
        Some(p) => Box::new(
            std::fs::File::create(p).map_err(|e| CliError::Validation(format!("cannot write {}: {e}", p.display())))?,
        ),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(&out.headers)?;
    for r in &out.rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn sidecar_path(output: Option<&PathBuf>, json: Option<&PathBuf>) -> Option<PathBuf> {
    json.cloned().or_else(|| output.map(|p| {
        let mut s = p.clone().into_os_string();
        s.push(".json");
        PathBuf::from(s)
    }))
}

pub fn write_sidecar<C: Serialize>(
    path: Option<PathBuf>,
    command: &str,
    config: &C,
    seed: Option<u64>,
    rows: usize,
    results: Value,
    warnings: &[String],
) -> Result<(), CliError> {
    let Some(path) = path else { return Ok(()) };
    let doc = json!({
        "schema": SCHEMA,
        "command": command,
        "config": config,
        "seed": seed,
        "rows": rows,
        "results": results,
        "warnings": warnings,
    });
    let f = std::fs::File::create(&path).map_err(|e| CliError::Validation(format!("cannot write {}: {e}", path.display())))?;
    serde_json::to_writer_pretty(f, &doc)?;
    Ok(())
}
