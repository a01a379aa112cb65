//! Kernel ridge regression and Laplacian RLS next to the eigenfunction regressor
//! on one labeled/unlabeled split.
//!
//! cargo run --release --example baselines

use std::sync::Arc;

use sssl::eigensystem::top_eigenpairs;
use sssl::kernels::{gram_matrix, median_pairwise_distance, KernelSpec};
use sssl::models::{
    regression_error, KnnGraph, KrrModel, LapRlsParams, Metric, Regressor, SpectralLapRls, SsslModel,
};
use sssl::synthetic::{make_synthetic, SyntheticSpec};

fn main() -> sssl::Result<()> {
    let spec = SyntheticSpec::new(2.5, 3).with_eps_sq(5e-3);
    let (all, _, _) = make_synthetic(&spec, 1200)?;
    let idx: Vec<usize> = (0..all.len()).collect();
    let (train_idx, test_idx) = idx.split_at(1000);
    let train = Arc::new(all.subset(train_idx)?);
    let test = all.subset(test_idx)?;
    let y_train = train.targets().unwrap();
    let y_test = test.targets().unwrap();

    let kernel = KernelSpec::rbf(0.5 * median_pairwise_distance(&train)?);
    let labeled: Vec<usize> = (0..train.len()).step_by(25).collect();
    let y: Vec<f64> = labeled.iter().map(|&i| y_train[i]).collect();
    println!("{} labeled of {} training points, kernel {kernel:?}", labeled.len(), train.len());

    let es = Arc::new(top_eigenpairs(&gram_matrix(&kernel, &train)?, 128)?);
    for s in [4, 8, 16] {
        let m = SsslModel::fit_on_training_points(es.clone(), &labeled, &y, s, kernel, train.clone())?;
        report(&format!("sssl s={s}"), &m, &test, y_test)?;
    }

    let points = Arc::new(train.subset(&labeled)?);
    for ridge in [1e-4, 1e-2] {
        let m = KrrModel::fit(kernel, points.clone(), &y, ridge)?;
        report(&format!("krr ridge={ridge:e}"), &m, &test, y_test)?;
    }

    let graph = KnnGraph::build(&train, 10, KnnGraph::median_knn_distance(&train, 10)?)?;
    let laprls = SpectralLapRls::new(&es, &graph, 128)?;
    for weight in [0.0, 10.0, 1000.0] {
        let params = LapRlsParams {
            ridge: 1e-4,
            laplacian_weight: weight,
        };
        let m = laprls.fit(&labeled, &y, params, kernel, train.clone())?;
        report(&format!("laprls weight={weight}"), &m, &test, y_test)?;
    }
    Ok(())
}

fn report(name: &str, model: &dyn Regressor, test: &sssl::kernels::Dataset, y: &[f64]) -> sssl::Result<()> {
    let pred = model.predict_batch(test)?;
    println!("{name:<22} test mse {:.4e}", regression_error(&pred, y, Metric::Mse)?);
    Ok(())
}
