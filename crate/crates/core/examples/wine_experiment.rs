//! Label-fraction sweep on the bundled red wine quality data.
//!
//! cargo run --release --example wine_experiment -- [repeats] [out-dir]

use std::path::PathBuf;

use sssl::harness::{format_table, run_experiment_with, write_outputs, DataSource, ExperimentConfig, TargetColumn};

fn main() -> sssl::Result<()> {
    let mut args = std::env::args().skip(1);
    let repeats: usize = args.next().map_or(Ok(10), |s| s.parse()).unwrap_or(10);
    let out_dir = args.next().map(PathBuf::from);

    let path = std::env::var_os("SSSL_WINE_CSV")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/winequality-red.csv"));
    let mut config = ExperimentConfig::new(DataSource::Csv {
        path,
        target: TargetColumn::Name("quality".into()),
    });
    config.repeats = repeats;
    config.standardize_features = true;
    config.center_labels = std::env::var_os("SSSL_CENTER").is_some();

    let out = run_experiment_with(&config, &mut |line| eprintln!("{line}"))?;
    print!("{}", format_table(&out.table)?);
    if let Some(s) = &out.spectrum {
        println!("spectrum of {:?}: p = {:.3}, a2 = {:.4}", s.kernel, s.fit.p, s.fit.a2);
    }
    if let Some(dir) = out_dir {
        for p in write_outputs(&out, &dir)? {
            println!("wrote {}", p.display());
        }
    }
    Ok(())
}
