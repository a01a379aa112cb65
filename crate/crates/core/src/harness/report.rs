use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::experiment::{ExperimentOutput, ResultsTable, SpectrumRecord};
use crate::diagnostics::{write_envelope_csv, PowerLawFit};
use crate::eigensystem::EigenSystem;
use crate::error::{Error, Result, ResultExt};

/// Decimal places that show `value` with four significant digits.
fn decimals_for(value: f64) -> usize {
    if value == 0.0 || !value.is_finite() {
        return 4;
    }
    let magnitude = value.abs().log10().floor() as i32;
    (3 - magnitude).max(0) as usize
}

/// `mean ± std` with the mean at four significant digits and the std at the same
/// number of decimals.
pub fn format_cell(mean: f64, std: f64) -> String {
    let mut d = decimals_for(mean);
    // rounding can carry into a new digit, e.g. 9.99996 -> 10.000
    let rounded: f64 = format!("{mean:.d$}").parse().unwrap_or(mean);
    if rounded != 0.0 && decimals_for(rounded) < d {
        d = decimals_for(rounded);
    }
    format!("{mean:.d$} ± {std:.d$}")
}

fn fraction_label(f: f64) -> String {
    let pct = f * 100.0;
    if (pct - pct.round()).abs() < 1e-9 {
        format!("{}%", pct.round())
    } else {
        format!("{pct}%")
    }
}

/// Methods as rows, label fractions as columns.
pub fn format_table(table: &ResultsTable) -> Result<String> {
    if table.methods.is_empty() || table.label_fractions.is_empty() {
        return Err(Error::Empty("results table"));
    }
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut header = vec!["method".to_string()];
    header.extend(table.label_fractions.iter().map(|&f| fraction_label(f)));
    rows.push(header);
    for &m in &table.methods {
        let mut row = vec![m.name().to_string()];
        for &f in &table.label_fractions {
            let cell = table
                .cell(m, f)
                .ok_or_else(|| Error::Config(format!("missing cell for {m} at {f}")))?;
            row.push(format_cell(cell.mean, cell.std));
        }
        rows.push(row);
    }
    let ncol = rows[0].len();
    let widths: Vec<usize> = (0..ncol)
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let repeats = table.cells.first().map_or(0, |c| c.repeats);
    let mut out = String::new();
    writeln!(
        out,
        "test {} (mean ± std over {repeats} repeats) by labeled fraction of the whole dataset",
        table.metric.name()
    )
    .expect("writing to a String");
    for r in &rows {
        let line: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(c, s)| {
                let pad = widths[c] - s.chars().count();
                if c == 0 {
                    format!("{s}{}", " ".repeat(pad))
                } else {
                    format!("{}{s}", " ".repeat(pad))
                }
            })
            .collect();
        writeln!(out, "{}", line.join("  ").trim_end()).expect("writing to a String");
    }
    Ok(out)
}

/// Machine-readable twin of [`format_table`].
pub fn table_csv(table: &ResultsTable) -> String {
    let mut out = String::from("method,label_fraction,metric,mean,std,repeats\n");
    for c in &table.cells {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            c.method,
            c.label_fraction,
            table.metric.name(),
            c.mean,
            c.std,
            c.repeats
        )
        .expect("writing to a String");
    }
    out
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).context(|| format!("creating {}", path.display()))?,
    ))
}

/// Writes `index,lambda,envelope` for the eigenvalues of `es`.
pub fn export_spectrum(es: &EigenSystem, fit: &PowerLawFit, path: &Path) -> Result<()> {
    if es.s() == 0 {
        return Err(Error::Empty("eigensystem"));
    }
    let mut w = create(path)?;
    write_envelope_csv(es.lambdas().as_slice(), fit, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_spectrum_record(record: &SpectrumRecord, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    write_envelope_csv(&record.lambdas, &record.fit, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Writes `results.txt`, `results.csv`, `results.json` and, when available,
/// `spectrum.csv` into `dir`. Returns the paths written.
pub fn write_outputs(output: &ExperimentOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();
    let mut put = |name: &str, text: &str| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, text).context(|| format!("writing {}", path.display()))?;
        written.push(path);
        Ok(())
    };
    put("results.txt", &format_table(&output.table)?)?;
    put("results.csv", &table_csv(&output.table))?;
    let mut json = serde_json::to_string_pretty(&output.table)?;
    json.push('\n');
    put("results.json", &json)?;
    if let Some(spectrum) = &output.spectrum {
        let path = dir.join("spectrum.csv");
        write_spectrum_record(spectrum, &path)?;
        written.push(path);
    }
    Ok(written)
}
