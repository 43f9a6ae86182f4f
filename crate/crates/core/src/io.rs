//! CSV ingestion of data and group maps, and CSV writers for results.

use std::io::{Read, Write};

use chrono::NaiveDate;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{DataMatrix, GroupSpec};
use crate::error::{Error, Result};

/// Which columns play which role. Everything that is neither the response
/// nor the date is a feature unless `features` lists them explicitly.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvSchema {
    pub response: Option<String>,
    pub date: Option<String>,
    pub features: Option<Vec<String>>,
}

impl CsvSchema {
    pub fn with_response(name: &str) -> Self {
        Self { response: Some(name.to_string()), ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedData {
    pub x: DataMatrix,
    pub y: Option<Vec<f64>>,
    pub dates: Option<Vec<NaiveDate>>,
}

impl LoadedData {
    pub fn require_response(&self) -> Result<&[f64]> {
        self.y.as_deref().ok_or_else(|| Error::MissingColumn("response".into()))
    }
}

fn column_index(header: &[String], name: &str) -> Result<usize> {
    header.iter().position(|h| h == name).ok_or_else(|| Error::MissingColumn(name.to_string()))
}

/// Parse a CSV table. Rows are numbered from 1 after the header; any
/// unparsable cell (including `NA`) aborts the load.
pub fn read_dataset<R: Read>(reader: R, schema: &CsvSchema) -> Result<LoadedData> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::MissingColumn("header row".into()));
    }
    let y_col = schema.response.as_deref().map(|n| column_index(&header, n)).transpose()?;
    let d_col = schema.date.as_deref().map(|n| column_index(&header, n)).transpose()?;
    let x_cols: Vec<usize> = match &schema.features {
        Some(names) => names.iter().map(|n| column_index(&header, n)).collect::<Result<_>>()?,
        None => (0..header.len()).filter(|&c| Some(c) != y_col && Some(c) != d_col).collect(),
    };
    if x_cols.is_empty() {
        return Err(Error::MissingColumn("no feature columns".into()));
    }

    let mut values = Vec::new();
    let mut ys = Vec::new();
    let mut dates = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::ParseError { row, col: String::new(), message: e.to_string() })?;
        if rec.len() != header.len() {
            return Err(Error::ParseError {
                row,
                col: String::new(),
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        let num = |c: usize| -> Result<f64> {
            let cell = &rec[c];
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::ParseError {
                    row,
                    col: header[c].clone(),
                    message: format!("'{cell}' is not a finite number"),
                }),
            }
        };
        for &c in &x_cols {
            values.push(num(c)?);
        }
        if let Some(c) = y_col {
            ys.push(num(c)?);
        }
        if let Some(c) = d_col {
            let cell = &rec[c];
            let d = NaiveDate::parse_from_str(cell, "%Y-%m-%d").map_err(|_| Error::ParseError {
                row,
                col: header[c].clone(),
                message: format!("'{cell}' is not an ISO-8601 date"),
            })?;
            dates.push(d);
        }
    }
    let n = values.len() / x_cols.len();
    if n == 0 {
        return Err(Error::ParseError { row: 1, col: String::new(), message: "no data rows".into() });
    }
    let names = x_cols.iter().map(|&c| header[c].clone()).collect();
    let x = DataMatrix::new(DMatrix::from_row_slice(n, x_cols.len(), &values), names)?;
    Ok(LoadedData { x, y: y_col.map(|_| ys), dates: d_col.map(|_| dates) })
}

pub fn load_dataset(path: &std::path::Path, schema: &CsvSchema) -> Result<LoadedData> {
    read_dataset(std::fs::File::open(path)?, schema)
}

/// Group map with columns `variable,group_id[,group_name]`, aligned to `names`.
pub fn read_group_map<R: Read>(reader: R, names: &[String]) -> Result<GroupSpec> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let v_col = column_index(&header, "variable")?;
    let g_col = column_index(&header, "group_id")?;
    let n_col = header.iter().position(|h| h == "group_name");
    let mut map = std::collections::HashMap::new();
    let mut labels = std::collections::BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::ParseError { row, col: String::new(), message: e.to_string() })?;
        let g: usize = rec[g_col].parse().map_err(|_| Error::ParseError {
            row,
            col: "group_id".into(),
            message: format!("'{}' is not a positive integer", &rec[g_col]),
        })?;
        map.insert(rec[v_col].to_string(), g);
        if let Some(c) = n_col {
            labels.insert(g, rec[c].to_string());
        }
    }
    let assignments = names
        .iter()
        .map(|n| map.get(n).copied().ok_or_else(|| Error::MissingColumn(format!("group for variable {n}"))))
        .collect::<Result<Vec<_>>>()?;
    let spec = GroupSpec::new(assignments)?;
    if labels.len() == spec.group_count() {
        spec.with_names(labels.into_values().collect())
    } else {
        Ok(spec)
    }
}

pub fn load_group_map(path: &std::path::Path, names: &[String]) -> Result<GroupSpec> {
    read_group_map(std::fs::File::open(path)?, names)
}

/// Write `[date,] features..., [response]` with a header row.
pub fn write_dataset<W: Write>(
    writer: W,
    x: &DataMatrix,
    y: Option<(&str, &[f64])>,
    dates: Option<&[NaiveDate]>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = Vec::new();
    if dates.is_some() {
        header.push("date".into());
    }
    header.extend(x.names().iter().cloned());
    if let Some((name, _)) = y {
        header.push(name.to_string());
    }
    w.write_record(&header)?;
    for i in 0..x.nrows() {
        let mut rec: Vec<String> = Vec::with_capacity(header.len());
        if let Some(d) = dates {
            rec.push(d[i].format("%Y-%m-%d").to_string());
        }
        rec.extend(x.values().row(i).iter().map(|v| format!("{v:?}")));
        if let Some((_, ys)) = y {
            rec.push(format!("{:?}", ys[i]));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Plain CSV table from a header and string rows.
pub fn write_table<W: Write>(writer: W, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}
