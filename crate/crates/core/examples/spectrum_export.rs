//! Kernel spectrum and fitted power-law envelope for each bandwidth in a grid.
//!
//! cargo run --release --example spectrum_export -- [csv] [out-dir]

use std::path::PathBuf;

use sssl::diagnostics::fit_power_law;
use sssl::eigensystem::top_eigenpairs;
use sssl::harness::{export_spectrum, load_csv, Standardizer, TargetColumn};
use sssl::kernels::{gram_matrix, median_pairwise_distance, KernelSpec};

fn main() -> sssl::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/winequality-red.csv"));
    let out_dir = PathBuf::from(args.next().unwrap_or_else(|| "spectra".into()));
    std::fs::create_dir_all(&out_dir)?;

    let table = load_csv(&path, &TargetColumn::Last)?;
    let data = Standardizer::fit(&table.data)?.transform(&table.data)?;
    let median = median_pairwise_distance(&data)?;
    for factor in [0.5, 1.0, 2.0, 5.0, 10.0] {
        let kernel = KernelSpec::rbf(factor * median);
        let es = top_eigenpairs(&gram_matrix(&kernel, &data)?, 64)?;
        let es = es.truncated(es.numerical_rank().max(1))?;
        let fit = fit_power_law(es.lambdas().as_slice())?;
        let file = out_dir.join(format!("spectrum_x{factor}.csv"));
        export_spectrum(&es, &fit, &file)?;
        println!(
            "bandwidth {:.3} ({factor} x median): p = {:.3}, a2 = {:.4}, {} eigenvalues -> {}",
            factor * median,
            fit.p,
            fit.a2,
            es.s(),
            file.display()
        );
    }
    Ok(())
}
