//! CSV matrix input/output and report serialization helpers.

use std::fs;
use std::path::Path;

use flagstat_core::matcore::Mat;

/// Reads a headerless CSV of floats into a matrix. `skip_header` drops the
/// first line.
pub fn read_matrix_csv(path: &str, skip_header: bool) -> Result<Mat, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read {path}: {e}"))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 && skip_header {
            continue;
        }
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let row = trimmed
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|_| format!("{path}:{}: invalid number {tok:?}", lineno + 1))
            })
            .collect::<Result<Vec<f64>, String>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(format!(
                    "{path}:{}: expected {} columns, found {}",
                    lineno + 1,
                    first.len(),
                    row.len()
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(format!("{path}: no data rows"));
    }
    let cols = rows[0].len();
    Ok(Mat::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

/// Formats a matrix as CSV rows with 17 significant digits.
pub fn matrix_to_csv(m: &Mat) -> String {
    let mut out = String::new();
    for i in 0..m.rows() {
        let row: Vec<String> = (0..m.cols()).map(|j| format!("{:.16e}", m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Matrix as a JSON array of rows (full double precision).
pub fn matrix_to_json(m: &Mat) -> serde_json::Value {
    serde_json::Value::Array(
        (0..m.rows())
            .map(|i| {
                serde_json::Value::Array(
                    (0..m.cols())
                        .map(|j| serde_json::json!(m[(i, j)]))
                        .collect(),
                )
            })
            .collect(),
    )
}

/// Writes to `--output` when given, stdout otherwise.
pub fn emit(output: Option<&str>, content: &str) -> Result<(), String> {
    match output {
        Some(path) => {
            fs::write(Path::new(path), content).map_err(|e| format!("cannot write {path}: {e}"))
        }
        None => {
            println!("{content}");
            Ok(())
        }
    }
}
