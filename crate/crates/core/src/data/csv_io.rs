use std::fs::File;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::{Sample, SeriesDataset, Target};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapPolicy {
    /// Any empty cell is an error.
    Reject,
    /// Empty cells take the previous row's value; leading gaps are still errors.
    #[default]
    ForwardFill,
}

/// Column mapping for a time-indexed CSV file. Empty `value_columns` selects
/// every column other than the timestamp and label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub timestamp_column: String,
    pub value_columns: Vec<String>,
    pub label_column: Option<String>,
    pub gap_policy: GapPolicy,
}

fn parse_timestamp(raw: &str) -> Option<i64> {
    let s = raw.trim();
    if let Ok(v) = s.parse::<i64>() {
        return Some(v);
    }
    for fmt in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M", "%Y/%m/%d %H:%M:%S", "%Y/%m/%d %H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    for fmt in ["%Y-%m-%d", "%Y/%m/%d"] {
        if let Ok(d) = NaiveDate::parse_from_str(s, fmt) {
            return Some(d.and_hms_opt(0, 0, 0)?.and_utc().timestamp());
        }
    }
    None
}

fn format_timestamp(ts: i64) -> String {
    DateTime::from_timestamp(ts, 0)
        .map(|d| d.naive_utc().format("%Y-%m-%d %H:%M:%S").to_string())
        .unwrap_or_else(|| ts.to_string())
}

fn open_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path)?;
    if file.metadata()?.len() == 0 {
        return Err(Error::EmptyFile { path: path.to_path_buf() });
    }
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn column_index(headers: &csv::StringRecord, path: &Path, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::MissingColumn {
            path: path.to_path_buf(),
            column: name.to_string(),
        })
}

/// Cell value; `None` marks a gap (empty or NaN).
fn parse_cell(raw: &str, path: &Path, row: usize, column: &str) -> Result<Option<f64>> {
    let s = raw.trim();
    if s.is_empty() {
        return Ok(None);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_nan() => Ok(None),
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(Error::Parse {
            path: path.to_path_buf(),
            row,
            column: column.to_string(),
            value: s.to_string(),
        }),
    }
}

/// Reads a time-indexed CSV into a time-sorted dataset.
///
/// Rows are numbered from 1 (the first data row after the header) in errors.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<SeriesDataset> {
    let mut reader = open_reader(path)?;
    let headers = reader.headers()?.clone();
    if headers.is_empty() {
        return Err(Error::EmptyFile { path: path.to_path_buf() });
    }
    let ts_idx = column_index(&headers, path, &schema.timestamp_column)?;
    let value_columns: Vec<String> = if schema.value_columns.is_empty() {
        headers
            .iter()
            .map(|h| h.trim().to_string())
            .filter(|h| *h != schema.timestamp_column && Some(h.as_str()) != schema.label_column.as_deref())
            .collect()
    } else {
        schema.value_columns.clone()
    };
    if value_columns.is_empty() {
        return Err(Error::Data(format!("{}: no value columns", path.display())));
    }
    let val_idx: Vec<usize> = value_columns
        .iter()
        .map(|c| column_index(&headers, path, c))
        .collect::<Result<_>>()?;
    let label_idx = schema
        .label_column
        .as_deref()
        .map(|c| column_index(&headers, path, c))
        .transpose()?;

    struct Raw {
        ts: i64,
        ts_text: String,
        values: Vec<Option<f64>>,
        label: Option<usize>,
        row: usize,
    }
    let mut raw = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let field = |idx: usize| rec.get(idx).unwrap_or("");
        let ts_text = field(ts_idx).trim().to_string();
        let ts = parse_timestamp(&ts_text).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            row,
            column: schema.timestamp_column.clone(),
            value: ts_text.clone(),
        })?;
        let values = val_idx
            .iter()
            .zip(&value_columns)
            .map(|(&idx, name)| parse_cell(field(idx), path, row, name))
            .collect::<Result<Vec<_>>>()?;
        let label = match label_idx {
            Some(idx) => {
                let text = field(idx).trim();
                Some(text.parse::<usize>().map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    row,
                    column: schema.label_column.clone().unwrap_or_default(),
                    value: text.to_string(),
                })?)
            }
            None => None,
        };
        raw.push(Raw {
            ts,
            ts_text,
            values,
            label,
            row,
        });
    }
    if raw.is_empty() {
        return Err(Error::EmptyFile { path: path.to_path_buf() });
    }
    raw.sort_by_key(|r| r.ts);
    if let Some(w) = raw.windows(2).find(|w| w[0].ts == w[1].ts) {
        return Err(Error::DuplicateTimestamp {
            path: path.to_path_buf(),
            timestamp: w[1].ts_text.clone(),
        });
    }

    let mut filled = 0;
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(raw.len());
    for r in &raw {
        let mut out = Vec::with_capacity(r.values.len());
        for (ch, v) in r.values.iter().enumerate() {
            match (v, schema.gap_policy, rows.last()) {
                (Some(v), _, _) => out.push(*v),
                (None, GapPolicy::ForwardFill, Some(prev)) => {
                    out.push(prev[ch]);
                    filled += 1;
                }
                (None, GapPolicy::ForwardFill, None) => {
                    return Err(Error::Gap {
                        column: value_columns[ch].clone(),
                        row: r.row,
                        reason: "leading gap cannot be forward-filled",
                    })
                }
                (None, GapPolicy::Reject, _) => {
                    return Err(Error::Gap {
                        column: value_columns[ch].clone(),
                        row: r.row,
                        reason: "empty cell and gap policy is reject",
                    })
                }
            }
        }
        rows.push(out);
    }
    if filled > 0 {
        log::info!("{}: forward-filled {filled} cells", path.display());
    }

    Ok(SeriesDataset {
        name: path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        channels: value_columns,
        timestamps: raw.iter().map(|r| r.ts).collect(),
        labels: label_idx.map(|_| raw.iter().map(|r| r.label.unwrap_or(0)).collect()),
        rows,
        filled_cells: filled,
    })
}

/// Writes a dataset with a `timestamp_column` header followed by its channels.
pub fn write_csv(ds: &SeriesDataset, timestamp_column: &str, out: &mut impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![timestamp_column.to_string()];
    header.extend(ds.channels.iter().cloned());
    w.write_record(&header)?;
    for (ts, row) in ds.timestamps.iter().zip(&ds.rows) {
        let mut rec = vec![format_timestamp(*ts)];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads pre-extracted beat windows: every column except `label_column` is a
/// sample value, in header order. The label column is optional in the file.
pub fn read_beat_rows(path: &Path, label_column: &str) -> Result<Vec<(Vec<f64>, Option<usize>)>> {
    let mut reader = open_reader(path)?;
    let headers = reader.headers()?.clone();
    let label_idx = headers.iter().position(|h| h.trim() == label_column);
    let value_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != label_idx)
        .map(|(i, h)| (i, h.trim().to_string()))
        .collect();
    if value_cols.is_empty() {
        return Err(Error::EmptyFile { path: path.to_path_buf() });
    }
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let values = value_cols
            .iter()
            .map(|(idx, name)| {
                parse_cell(rec.get(*idx).unwrap_or(""), path, row, name)?.ok_or_else(|| Error::Gap {
                    column: name.clone(),
                    row,
                    reason: "beat windows may not contain gaps",
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let label = match label_idx {
            Some(idx) => {
                let text = rec.get(idx).unwrap_or("").trim();
                Some(text.parse::<usize>().map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    row,
                    column: label_column.to_string(),
                    value: text.to_string(),
                })?)
            }
            None => None,
        };
        out.push((values, label));
    }
    if out.is_empty() {
        return Err(Error::EmptyFile { path: path.to_path_buf() });
    }
    Ok(out)
}

/// Labeled beat windows as single-channel samples.
pub fn load_beats(path: &Path, label_column: &str) -> Result<Vec<Sample>> {
    read_beat_rows(path, label_column)?
        .into_iter()
        .enumerate()
        .map(|(i, (values, label))| {
            let label = label.ok_or_else(|| Error::MissingColumn {
                path: path.to_path_buf(),
                column: label_column.to_string(),
            })?;
            let l = values.len();
            Sample::from_window(Tensor::new(vec![1, l], values)?, 0, Target::Class(label), i)
        })
        .collect()
}
