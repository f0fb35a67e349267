use std::path::Path;

use ndarray::Array2;

use crate::{Error, Result};

/// Reads a numeric CSV with a header row.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Array2<f64>)> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut values = Vec::new();
    let mut rows = 0;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        if record.len() != header.len() {
            return Err(Error::format(
                path,
                format!(
                    "row {} has {} fields, header has {}",
                    i + 2,
                    record.len(),
                    header.len()
                ),
            ));
        }
        for field in record.iter() {
            let v: f64 = field.parse().map_err(|_| {
                Error::format(path, format!("row {}: not a number: {field:?}", i + 2))
            })?;
            values.push(v);
        }
        rows += 1;
    }
    let table = Array2::from_shape_vec((rows, header.len()), values).expect("row lengths checked");
    Ok((header, table))
}

/// Writes `table` under `header`; floats are printed in shortest
/// round-trip form.
pub fn write_csv(path: &Path, header: &[&str], table: &Array2<f64>) -> Result<()> {
    if header.len() != table.ncols() {
        return Err(Error::shape(
            format!("{} columns", header.len()),
            table.ncols(),
        ));
    }
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    writer
        .write_record(header)
        .map_err(|e| csv_error(path, e))?;
    for row in table.rows() {
        writer
            .write_record(row.iter().map(|v| v.to_string()))
            .map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::format(path, e.to_string())
    }
}
