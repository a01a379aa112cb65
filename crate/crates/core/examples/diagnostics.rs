//! Assumption report for a CSV file: spectrum decay, eigenfunction bounds,
//! eigengap and label/unlabeled budgets.
//!
//! cargo run --release --example diagnostics -- [csv] [target] [bandwidth-factor]

use std::path::PathBuf;

use sssl::diagnostics::{assumption_report, ReportParams};
use sssl::eigensystem::top_eigenpairs;
use sssl::harness::{load_csv, Standardizer, TargetColumn};
use sssl::kernels::{gram_matrix, median_pairwise_distance, KernelSpec};

fn main() -> sssl::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/winequality-red.csv"));
    let target = TargetColumn::from(args.next().unwrap_or_else(|| "last".into()));
    let factor: f64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(5.0);

    let table = load_csv(&path, &target)?;
    let data = Standardizer::fit(&table.data)?.transform(&table.data)?;
    let kernel = KernelSpec::rbf(factor * median_pairwise_distance(&data)?);
    let es = top_eigenpairs(&gram_matrix(&kernel, &data)?, 64)?;

    let params = ReportParams {
        n_labeled: Some(data.len() / 20),
        ..ReportParams::default()
    };
    let report = assumption_report(&es, &kernel, &data, params)?;
    println!("{} rows, target {:?}, kernel {kernel:?}", data.len(), table.target_name);
    println!(
        "power law: a2 = {:.4}, p = {:.3} (decay ok: {})",
        report.power_law.a2, report.power_law.p, report.decay_ok
    );
    println!("c_hat = {:.3}, M(s) = {:.2} at s = {}", report.c_hat, report.m_of_s, report.inputs.s);
    println!(
        "eigengap {:.3e} vs threshold {:.3e} (ok: {})",
        report.eigengap, report.eigengap_threshold, report.eigengap_ok
    );
    println!("n0 = {:?}, recommended s = {:?}", report.n0, report.recommended_s);
    println!("unlabeled budget: {:?}", report.unlabeled_budget);
    for note in &report.notes {
        println!("note: {note}");
    }
    Ok(())
}
