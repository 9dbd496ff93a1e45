//! CSV readers and writers for data matrices and label files.
//!
//! Numbers use '.' as the decimal separator. A data file may start with one
//! header row, detected by any non-numeric field in the first record.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::data::DataMatrix;
use crate::error::{Error, Result};

fn parse_number(s: &str) -> Option<f64> {
    let v: f64 = s.trim().parse().ok()?;
    v.is_finite().then_some(v)
}

pub fn read_data<R: Read>(reader: R) -> Result<DataMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (idx, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Io(e.to_string()))?;
        let line = idx + 1;
        if idx == 0 && record.iter().any(|f| parse_number(f).is_none()) {
            continue; // header
        }
        if record.len() == 1 && record.get(0).is_some_and(str::is_empty) {
            continue;
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(Error::Parse {
                row: line,
                column: record.len().min(expected) + 1,
                message: format!("expected {expected} fields, found {}", record.len()),
            });
        }
        let mut row = Vec::with_capacity(expected);
        for (c, field) in record.iter().enumerate() {
            match parse_number(field) {
                Some(v) => row.push(v),
                None => {
                    return Err(Error::Parse {
                        row: line,
                        column: c + 1,
                        message: format!("{field:?} is not a finite number"),
                    })
                }
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput("data file contains no numeric rows".into()));
    }
    let (n, p) = (rows.len(), rows[0].len());
    DataMatrix::new(DMatrix::from_fn(n, p, |i, j| rows[i][j]))
}

pub fn read_data_file(path: &Path) -> Result<DataMatrix> {
    let f = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_data(BufReader::new(f))
}

pub fn write_data<W: Write>(data: &DataMatrix, header: bool, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Io(e.to_string());
    if header {
        w.write_record((1..=data.p()).map(|j| format!("x{j}"))).map_err(io)?;
    }
    for row in data.values().row_iter() {
        w.write_record(row.iter().map(|v| format!("{v}"))).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Labels are stored 1-based, one integer per line; returned 0-based.
pub fn read_labels<R: Read>(reader: R) -> Result<Vec<usize>> {
    let mut labels = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        match t.parse::<usize>() {
            Ok(v) if v >= 1 => labels.push(v - 1),
            Ok(_) | Err(_) if idx == 0 && t.parse::<f64>().is_err() => continue, // header
            _ => {
                return Err(Error::Parse {
                    row: idx + 1,
                    column: 1,
                    message: format!("{t:?} is not a positive integer label"),
                })
            }
        }
    }
    Ok(labels)
}

pub fn read_labels_file(path: &Path) -> Result<Vec<usize>> {
    let f = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_labels(f)
}

pub fn write_labels<W: Write>(labels: &[usize], mut writer: W) -> Result<()> {
    for l in labels {
        writeln!(writer, "{}", l + 1)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn create_file(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}
