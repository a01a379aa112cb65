//! Error of the eigenfunction regressor as the basis size and label count vary,
//! on data whose spectrum and approximation error are known exactly.
//!
//! cargo run --release --example synthetic_bounds -- [p] [eps_sq]

use std::sync::Arc;

use sssl::diagnostics::{recommended_s, required_labels};
use sssl::eigensystem::top_eigenpairs;
use sssl::kernels::gram_matrix;
use sssl::models::SsslModel;
use sssl::synthetic::{make_synthetic, true_generalization_error, SyntheticSpec};

fn main() -> sssl::Result<()> {
    let mut args = std::env::args().skip(1);
    let p: f64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(3.0);
    let eps_sq: f64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(1e-3);

    let spec = SyntheticSpec::new(p, 0).with_eps_sq(eps_sq);
    let (data, truth, kernel) = make_synthetic(&spec, 2000)?;
    let data = Arc::new(data);
    let targets = data.targets().unwrap();
    let es = Arc::new(top_eigenpairs(&gram_matrix(&kernel, &data)?, 48)?);

    let a = spec.a2().sqrt();
    let s_rec = recommended_s(a, spec.r, eps_sq.sqrt(), p)?;
    println!("p = {p}, a2 = {:.4}, eps^2 = {eps_sq:.1e}, recommended s = {s_rec}", spec.a2());
    println!("n0 with C = 1: {:.0}", required_labels(1.0, data.len(), spec.r, a, eps_sq.sqrt(), p)?);

    let sizes = [2, 4, 8, s_rec.min(es.s()), 32];
    print!("{:>6}", "n \\ s");
    for s in sizes {
        print!("{s:>11}");
    }
    println!();
    for n in [20, 40, 80, 160, 320] {
        let labeled: Vec<usize> = (0..n).collect();
        let y: Vec<f64> = labeled.iter().map(|&i| targets[i]).collect();
        print!("{n:>6}");
        for s in sizes {
            let model = SsslModel::fit_on_training_points(es.clone(), &labeled, &y, s, kernel, data.clone())?;
            print!("{:>11.3e}", true_generalization_error(&model, &truth, 10_000, 5)?.mean);
        }
        println!();
    }
    Ok(())
}
