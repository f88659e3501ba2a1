use std::path::Path;

use reassembly_core::{Dataset, Matrix, IN_DIM};

use super::{io_err, IoError, IoResult};

/// Header of `historical_data.csv`, in order.
pub static COLUMNS: std::sync::LazyLock<Vec<String>> = std::sync::LazyLock::new(|| {
    (0..IN_DIM)
        .map(|i| format!("measurement_{i}"))
        .chain(["pred".to_string(), "true".to_string()])
        .collect()
});

pub fn read_dataset(path: &Path) -> IoResult<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|source| IoError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
    let header = reader
        .headers()
        .map_err(|source| IoError::Csv {
            path: path.to_path_buf(),
            source,
        })?
        .clone();
    check_header(&header, path)?;

    let mut x = Vec::new();
    let mut pred = Vec::new();
    let mut truth = Vec::new();
    for (r, record) in reader.records().enumerate() {
        // Row numbers count data rows from 1, excluding the header.
        let row = r + 1;
        let record = record.map_err(|source| IoError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        if record.len() != COLUMNS.len() {
            return Err(IoError::Cell {
                path: path.to_path_buf(),
                row,
                column: String::from("*"),
                message: format!("{} fields, expected {}", record.len(), COLUMNS.len()),
            });
        }
        for (c, field) in record.iter().enumerate() {
            let value: f64 = field.trim().parse().map_err(|_| IoError::Cell {
                path: path.to_path_buf(),
                row,
                column: COLUMNS[c].clone(),
                message: format!("{field:?} is not a number"),
            })?;
            if !value.is_finite() {
                return Err(IoError::Cell {
                    path: path.to_path_buf(),
                    row,
                    column: COLUMNS[c].clone(),
                    message: format!("{field:?} is not finite"),
                });
            }
            match c {
                c if c < IN_DIM => x.push(value),
                c if c == IN_DIM => pred.push(value),
                _ => truth.push(value),
            }
        }
    }
    let n = pred.len();
    let model = |source| IoError::Model {
        path: path.to_path_buf(),
        source,
    };
    let x = Matrix::new(n, IN_DIM, x).map_err(model)?;
    Dataset::new(x, pred, truth).map_err(model)
}

fn check_header(header: &csv::StringRecord, path: &Path) -> IoResult<()> {
    let found: Vec<&str> = header.iter().map(str::trim).collect();
    if let Some(missing) = COLUMNS.iter().find(|c| !found.contains(&c.as_str())) {
        return Err(IoError::Header {
            path: path.to_path_buf(),
            message: format!("missing column {missing}"),
        });
    }
    if found.len() != COLUMNS.len() {
        return Err(IoError::Header {
            path: path.to_path_buf(),
            message: format!("{} columns, expected {}", found.len(), COLUMNS.len()),
        });
    }
    if let Some(i) = (0..COLUMNS.len()).find(|&i| found[i] != COLUMNS[i]) {
        return Err(IoError::Header {
            path: path.to_path_buf(),
            message: format!("column {i} is {}, expected {}", found[i], COLUMNS[i]),
        });
    }
    Ok(())
}

/// Every value with 17 significant digits, enough to read back the exact
/// `f64`.
pub fn write_dataset(ds: &Dataset, path: &Path) -> IoResult<()> {
    let csv_err = |source| IoError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut writer = csv::Writer::from_path(path).map_err(csv_err)?;
    writer.write_record(COLUMNS.iter()).map_err(csv_err)?;
    let mut fields: Vec<String> = Vec::with_capacity(COLUMNS.len());
    for r in 0..ds.len() {
        fields.clear();
        fields.extend(ds.x().row(r).iter().map(|v| format!("{v:.16e}")));
        fields.push(format!("{:.16e}", ds.pred()[r]));
        fields.push(format!("{:.16e}", ds.truth()[r]));
        writer.write_record(&fields).map_err(csv_err)?;
    }
    writer.flush().map_err(io_err(path))
}
