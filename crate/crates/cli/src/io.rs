//! Headerless CSV files: data (one row of floats per datum) and labels
//! (`index,class[,name]`).

use std::path::Path;

use rbhmc::Dataset;

use crate::{CliError, CliResult};

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

/// Parse data rows. Ragged rows, unparsable cells and non-finite values are
/// reported with their line number.
pub fn parse_rows(text: &str) -> CliResult<Vec<Vec<f64>>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in reader(text).records() {
        let rec = rec.map_err(|e| CliError::Data(format!("data CSV: {e}")))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, cell)| {
                let v: f64 = cell.parse().map_err(|_| {
                    CliError::Data(format!(
                        "line {line}, column {}: '{cell}' is not a number",
                        j + 1
                    ))
                })?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(CliError::Data(format!(
                        "line {line}, column {}: non-finite value",
                        j + 1
                    )))
                }
            })
            .collect::<CliResult<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(CliError::Data(format!(
                    "line {line}: ragged row with {} columns, expected {}",
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Data("data CSV has no rows".into()));
    }
    Ok(rows)
}

pub fn read_data(path: &Path) -> CliResult<Dataset> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let rows = parse_rows(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(Dataset::from_rows(&rows)?)
}

/// Rows in shortest round-trip float form.
pub fn format_rows<'a, I: IntoIterator<Item = &'a [f64]>>(rows: I) -> String {
    let mut out = String::new();
    for r in rows {
        let cells: Vec<String> = r.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn format_dataset(data: &Dataset) -> String {
    let rows: Vec<Vec<f64>> = data
        .points()
        .iter()
        .map(|p| p.iter().copied().collect())
        .collect();
    format_rows(rows.iter().map(|r| r.as_slice()))
}

/// Labels for `n` data; indices absent from the file stay `None`.
pub fn parse_labels(text: &str, n: usize) -> CliResult<Vec<Option<String>>> {
    let mut out = vec![None; n];
    for rec in reader(text).records() {
        let rec = rec.map_err(|e| CliError::Data(format!("labels CSV: {e}")))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() < 2 || rec.len() > 3 {
            return Err(CliError::Data(format!(
                "labels line {line}: expected index,class[,name]"
            )));
        }
        let i: usize = rec[0].parse().map_err(|_| {
            CliError::Data(format!("labels line {line}: '{}' is not an index", &rec[0]))
        })?;
        let slot = out.get_mut(i).ok_or_else(|| {
            CliError::Data(format!(
                "labels line {line}: index {i} out of range for {n} data"
            ))
        })?;
        if slot.is_some() {
            return Err(CliError::Data(format!(
                "labels line {line}: index {i} repeated"
            )));
        }
        *slot = Some(rec[1].to_string());
    }
    Ok(out)
}

pub fn read_labels(path: &Path, n: usize) -> CliResult<Vec<Option<String>>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    parse_labels(&text, n).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn format_labels(labels: &[String]) -> String {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    for (i, l) in labels.iter().enumerate() {
        w.write_record([i.to_string(), l.clone()])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf-8 input")
}
