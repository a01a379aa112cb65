//! Fit the eigenfunction regressor on synthetic data with a known target and
//! measure its error against the noiseless function.
//!
//! cargo run --release --example fit_sssl -- [n_labeled] [s]

use std::sync::Arc;

use sssl::eigensystem::top_eigenpairs;
use sssl::kernels::gram_matrix;
use sssl::models::SsslModel;
use sssl::synthetic::{make_synthetic, true_generalization_error, SyntheticSpec};

fn main() -> sssl::Result<()> {
    let mut args = std::env::args().skip(1);
    let n_labeled: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(40);
    let s: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(8);

    let spec = SyntheticSpec::new(3.0, 7).with_eps_sq(1e-3);
    let (data, truth, kernel) = make_synthetic(&spec, 1500)?;
    let data = Arc::new(data);
    let targets = data.targets().expect("synthetic data carries targets");

    // every point is used as unlabeled data; the first n_labeled also keep their labels
    let es = Arc::new(top_eigenpairs(&gram_matrix(&kernel, &data)?, s)?);
    let labeled: Vec<usize> = (0..n_labeled).collect();
    let y: Vec<f64> = labeled.iter().map(|&i| targets[i]).collect();
    let model = SsslModel::fit_on_training_points(es.clone(), &labeled, &y, s, kernel, data.clone())?;

    println!("N = {}, n = {n_labeled}, s = {s}", data.len());
    let lambdas: Vec<String> = es.lambdas().iter().map(|l| format!("{l:.3e}")).collect();
    println!("lambda_1..{s}: {}", lambdas.join(" "));
    println!("gamma:      {:.4?}", model.gamma().as_slice());
    for x in [0.1, 0.5, 0.9] {
        println!("f({x}) = {:+.4}  prediction = {:+.4}", truth.f(x), model.predict(&[x])?);
    }
    let err = true_generalization_error(&model, &truth, 20_000, 1)?;
    println!(
        "generalization mse = {:.3e} ± {:.1e}  (eps^2 = {:.1e})",
        err.mean, err.std_err, truth.eps_sq
    );
    Ok(())
}
