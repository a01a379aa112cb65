use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::TargetColumn;
use crate::error::{Error, Result, ResultExt};
use crate::kernels::Dataset;

/// A numeric table split into features and target.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTable {
    pub data: Dataset,
    pub feature_names: Vec<String>,
    pub target_name: String,
}

impl LabeledTable {
    pub fn targets(&self) -> &[f64] {
        self.data.targets().expect("loaded tables always carry targets")
    }
}

/// Picks whichever of `,`, `;` and tab occurs most often in the header line,
/// ignoring quoted text. Ties go to the comma.
pub fn detect_delimiter(header: &str) -> u8 {
    let mut counts = [0usize; 3];
    let mut quoted = false;
    for c in header.chars() {
        match c {
            '"' => quoted = !quoted,
            ',' if !quoted => counts[0] += 1,
            ';' if !quoted => counts[1] += 1,
            '\t' if !quoted => counts[2] += 1,
            _ => {}
        }
    }
    let best = (0..3).max_by_key(|&i| (counts[i], std::cmp::Reverse(i))).unwrap_or(0);
    [b',', b';', b'\t'][best]
}

pub fn load_csv(path: &Path, target: &TargetColumn) -> Result<LabeledTable> {
    let text = std::fs::read_to_string(path).context(|| format!("reading {}", path.display()))?;
    parse_csv(&text, target).context(|| format!("parsing {}", path.display()))
}

pub fn parse_csv(text: &str, target: &TargetColumn) -> Result<LabeledTable> {
    let header_line = text.lines().next().unwrap_or("");
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(detect_delimiter(header_line))
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if headers.len() < 2 {
        return Err(Error::invalid(
            "header",
            format!("need a target and at least one feature column, found {} columns", headers.len()),
        ));
    }
    let target_idx = match target {
        TargetColumn::Last => headers.len() - 1,
        TargetColumn::Name(name) => headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::invalid("target", format!("no column named `{name}`")))?,
    };

    let dim = headers.len() - 1;
    let mut values = Vec::new();
    let mut targets = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        // 1-based line number in the file, counting the header
        let row = r + 2;
        if record.len() != headers.len() {
            return Err(Error::Parse {
                row,
                column: String::new(),
                reason: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column: headers[c].clone(),
                reason: format!("`{cell}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: headers[c].clone(),
                    reason: "value is not finite".into(),
                });
            }
            if c == target_idx {
                targets.push(v);
            } else {
                values.push(v);
            }
        }
    }
    if targets.is_empty() {
        return Err(Error::Empty("data rows"));
    }
    let feature_names = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != target_idx)
        .map(|(_, h)| h.clone())
        .collect();
    Ok(LabeledTable {
        data: Dataset::from_flat(values, dim, Some(targets))?,
        feature_names,
        target_name: headers[target_idx].clone(),
    })
}

/// Writes features then target as a comma-separated file with a header row.
pub fn write_csv<W: Write>(table: &LabeledTable, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = table.feature_names.clone();
    header.push(table.target_name.clone());
    w.write_record(&header)?;
    for (i, p) in table.data.points().enumerate() {
        let mut row: Vec<String> = p.iter().map(|v| v.to_string()).collect();
        row.push(table.targets()[i].to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-column affine map `(x - mean) / scale`, fitted on one dataset and applied to others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardizer {
    /// Columns with zero spread keep scale 1.
    pub fn fit(data: &Dataset) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        let d = data.feature_dim();
        let n = data.len() as f64;
        let mut means = vec![0.0; d];
        for p in data.points() {
            for (m, v) in means.iter_mut().zip(p) {
                *m += v / n;
            }
        }
        let mut scales = vec![0.0; d];
        for p in data.points() {
            for j in 0..d {
                scales[j] += (p[j] - means[j]).powi(2) / n;
            }
        }
        for s in &mut scales {
            *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
        }
        Ok(Standardizer { means, scales })
    }

    pub fn transform(&self, data: &Dataset) -> Result<Dataset> {
        if data.feature_dim() != self.means.len() {
            return Err(Error::DimensionMismatch {
                expected: self.means.len(),
                found: data.feature_dim(),
            });
        }
        let values: Vec<f64> = data
            .points()
            .flat_map(|p| {
                p.iter()
                    .enumerate()
                    .map(|(j, v)| (v - self.means[j]) / self.scales[j])
            })
            .collect();
        Dataset::from_flat(values, data.feature_dim(), data.targets().map(<[f64]>::to_vec))
    }
}
