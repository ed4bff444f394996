use std::io::Write;
use std::path::Path;

use super::IoError;
use crate::numcore::Tensor;

/// Exports a `[n_classes, width]` class-embedding table as CSV, one row
/// per class: `class_name, v0, v1, ...`.
pub fn write_embeddings_csv(
    names: &[String],
    table: &Tensor,
    path: &Path,
) -> Result<(), IoError> {
    let [rows, width] = table.shape() else {
        return Err(IoError::BadHeader {
            format: "embeddings",
            reason: format!("expected a rank-2 table, got {:?}", table.shape()),
        });
    };
    if *rows <= 1 {
        return Err(IoError::NoClassTable);
    }
    if names.len() != *rows {
        return Err(IoError::BadHeader {
            format: "embeddings",
            reason: format!("{} names for {} rows", names.len(), rows),
        });
    }
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    for (r, name) in names.iter().enumerate() {
        write!(w, "{name}")?;
        for c in 0..*width {
            write!(w, ",{:.9e}", table.data()[r * width + c])?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the CSV written by `write_embeddings_csv` back into
/// `(names, row-major values, width)`.
pub fn read_embeddings_csv(path: &Path) -> Result<(Vec<String>, Vec<f64>, usize), IoError> {
    let text = std::fs::read_to_string(path)?;
    parse_embeddings_csv(&text)
}

pub fn parse_embeddings_csv(text: &str) -> Result<(Vec<String>, Vec<f64>, usize), IoError> {
    let mut names = Vec::new();
    let mut data = Vec::new();
    let mut width: Option<usize> = None;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let name = fields.next().unwrap_or_default();
        let row: Result<Vec<f64>, _> = fields.map(|f| f.trim().parse::<f64>()).collect();
        let row = row.map_err(|_| IoError::MalformedRecord {
            line: i + 1,
            reason: "bad float".into(),
        })?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(IoError::MalformedRecord {
                    line: i + 1,
                    reason: format!("row width {} != {}", row.len(), w),
                })
            }
            _ => {}
        }
        names.push(name.to_string());
        data.extend(row);
    }
    let width = width.ok_or(IoError::EmptyGeometry)?;
    if width == 0 {
        return Err(IoError::MalformedRecord {
            line: 1,
            reason: "rows carry no values".into(),
        });
    }
    Ok((names, data, width))
}
