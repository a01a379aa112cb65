//! Grid search over the labeled points of one trial.

use std::cmp::Ordering;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::config::Method;
use super::split::folds;
use crate::eigensystem::{top_eigenpairs, EigenSystem};
use crate::error::{Error, Result};
use crate::kernels::{gram_matrix, kernel_matrix, Dataset, GramMatrix, KernelSpec};
use crate::models::{
    fit_krr, lstsq_min_norm, regression_error, training_features, KnnGraph, LapRlsParams, Metric,
    SpectralLapRls, SsslModel, PINV_RCOND,
};

/// Everything derived from one kernel on one trial's training features.
#[derive(Debug, Clone)]
pub struct KernelContext {
    pub kernel: KernelSpec,
    pub train: Arc<Dataset>,
    pub eigensystem: Arc<EigenSystem>,
    /// `V diag(sigma)^{1/2}` over the non-null pairs: eigenfunction values at training points.
    pub features: DMatrix<f64>,
    laprls: Option<SpectralLapRls>,
}

impl KernelContext {
    /// Decomposes the training Gram matrix, keeping at most `max_eigenpairs` pairs.
    /// A graph enables the LapRLS baseline.
    pub fn build(
        kernel: KernelSpec,
        train: Arc<Dataset>,
        max_eigenpairs: usize,
        graph: Option<&KnnGraph>,
    ) -> Result<Self> {
        let k = gram_matrix(&kernel, &train)?;
        Self::from_gram(kernel, train, &k, max_eigenpairs, graph)
    }

    pub fn from_gram(
        kernel: KernelSpec,
        train: Arc<Dataset>,
        k: &GramMatrix,
        max_eigenpairs: usize,
        graph: Option<&KnnGraph>,
    ) -> Result<Self> {
        let es = top_eigenpairs(k, max_eigenpairs.min(k.n_points()))?;
        let rank = es.numerical_rank();
        if rank == 0 {
            return Err(Error::invalid("kernel", "Gram matrix is numerically zero"));
        }
        let features = training_features(&es, rank);
        let laprls = graph
            .map(|g| SpectralLapRls::new(&es, g, max_eigenpairs))
            .transpose()?;
        Ok(KernelContext {
            kernel,
            train,
            eigensystem: Arc::new(es),
            features,
            laprls,
        })
    }

    pub fn rank(&self) -> usize {
        self.features.ncols()
    }

    pub fn laprls(&self) -> Result<&SpectralLapRls> {
        self.laprls
            .as_ref()
            .ok_or_else(|| Error::Config("LapRLS needs a neighbour graph".into()))
    }

    /// Basis sizes from `requested` that this kernel supports; falls back to the full rank.
    pub fn s_grid(&self, requested: &[usize]) -> Vec<usize> {
        let mut s: Vec<usize> = requested.iter().copied().filter(|&s| s >= 1 && s <= self.rank()).collect();
        s.sort_unstable();
        s.dedup();
        if s.is_empty() {
            s.push(self.rank());
        }
        s
    }
}

/// `2, 4, 8, ...` up to `min(cap, rank)`, ending at that bound.
pub fn default_s_grid(rank: usize, cap: usize) -> Vec<usize> {
    let top = rank.min(cap).max(1);
    let mut out: Vec<usize> = std::iter::successors(Some(2usize), |s| Some(s * 2))
        .take_while(|&s| s < top)
        .collect();
    out.push(top);
    out
}

#[derive(Debug, Clone)]
pub struct SearchGrid {
    /// `None` means [`default_s_grid`] for each kernel.
    pub s: Option<Vec<usize>>,
    pub s_cap: usize,
    pub ridges: Vec<f64>,
    pub laplacian_weights: Vec<f64>,
}

/// Hyperparameters chosen for one method, with their cross-validation score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chosen {
    pub kernel: KernelSpec,
    pub s: Option<usize>,
    pub ridge: Option<f64>,
    pub laplacian_weight: Option<f64>,
    pub cv_error: f64,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    kernel_index: usize,
    s: Option<usize>,
    ridge: Option<f64>,
    laplacian_weight: Option<f64>,
    score: f64,
}

/// Lower score wins; exact ties go to smaller `s`, then larger ridge, then larger
/// graph weight, then the earlier (smaller-bandwidth) kernel.
fn preference(a: &Candidate, b: &Candidate) -> Ordering {
    a.score
        .total_cmp(&b.score)
        .then(a.s.cmp(&b.s))
        .then(b.ridge.unwrap_or(0.0).total_cmp(&a.ridge.unwrap_or(0.0)))
        .then(
            b.laplacian_weight
                .unwrap_or(0.0)
                .total_cmp(&a.laplacian_weight.unwrap_or(0.0)),
        )
        .then(a.kernel_index.cmp(&b.kernel_index))
}

struct Fold {
    fit: Vec<usize>,
    val: Vec<usize>,
    y_fit: Vec<f64>,
    y_val: Vec<f64>,
    offset: f64,
}

fn make_folds(labeled: &[usize], y_l: &[f64], k: usize, center: bool) -> Result<Vec<Fold>> {
    let parts = folds(labeled.len(), k)?;
    Ok(parts
        .iter()
        .map(|val_pos| {
            let mut is_val = vec![false; labeled.len()];
            for &p in val_pos {
                is_val[p] = true;
            }
            let (mut fit, mut y_fit, mut val, mut y_val) = (vec![], vec![], vec![], vec![]);
            for (p, (&i, &y)) in labeled.iter().zip(y_l).enumerate() {
                if is_val[p] {
                    val.push(i);
                    y_val.push(y);
                } else {
                    fit.push(i);
                    y_fit.push(y);
                }
            }
            let offset = if center {
                y_fit.iter().sum::<f64>() / y_fit.len() as f64
            } else {
                0.0
            };
            for y in &mut y_fit {
                *y -= offset;
            }
            Fold {
                fit,
                val,
                y_fit,
                y_val,
                offset,
            }
        })
        .collect())
}

fn fold_error(pred: &DVector<f64>, fold: &Fold, metric: Metric) -> Result<f64> {
    let p: Vec<f64> = pred.iter().map(|v| v + fold.offset).collect();
    regression_error(&p, &fold.y_val, metric)
}

/// Mean validation error of each grid point, one entry per (kernel, hyperparameter) pair.
fn scores(
    method: Method,
    contexts: &[KernelContext],
    folds: &[Fold],
    grid: &SearchGrid,
    metric: Metric,
) -> Result<Vec<Candidate>> {
    let mut out = Vec::new();
    for (ki, ctx) in contexts.iter().enumerate() {
        match method {
            Method::Sssl => {
                let s_grid = match &grid.s {
                    Some(s) => ctx.s_grid(s),
                    None => default_s_grid(ctx.rank(), grid.s_cap),
                };
                let mut totals = vec![0.0; s_grid.len()];
                for fold in folds {
                    let phi_fit = ctx.features.select_rows(&fold.fit);
                    let phi_val = ctx.features.select_rows(&fold.val);
                    let y = DVector::from_column_slice(&fold.y_fit);
                    for (t, &s) in s_grid.iter().enumerate() {
                        let gamma = lstsq_min_norm(&phi_fit.columns(0, s).into_owned(), &y, PINV_RCOND)?;
                        let pred = phi_val.columns(0, s) * gamma;
                        totals[t] += fold_error(&pred, fold, metric)?;
                    }
                }
                for (t, &s) in s_grid.iter().enumerate() {
                    out.push(Candidate {
                        kernel_index: ki,
                        s: Some(s),
                        ridge: None,
                        laplacian_weight: None,
                        score: totals[t] / folds.len() as f64,
                    });
                }
            }
            Method::Krr => {
                let mut totals = vec![0.0; grid.ridges.len()];
                for fold in folds {
                    let fit_pts = ctx.train.subset(&fold.fit)?;
                    let val_pts = ctx.train.subset(&fold.val)?;
                    let k_ff = gram_matrix(&ctx.kernel, &fit_pts)?.into_inner();
                    let k_vf = kernel_matrix(&ctx.kernel, &val_pts, &fit_pts)?;
                    let eig = k_ff.symmetric_eigen();
                    let qty = eig.eigenvectors.transpose() * DVector::from_column_slice(&fold.y_fit);
                    for (t, &ridge) in grid.ridges.iter().enumerate() {
                        let z = DVector::from_fn(qty.len(), |i, _| {
                            qty[i] / (eig.eigenvalues[i].max(0.0) + ridge)
                        });
                        let c = &eig.eigenvectors * z;
                        totals[t] += fold_error(&(&k_vf * c), fold, metric)?;
                    }
                }
                for (t, &ridge) in grid.ridges.iter().enumerate() {
                    out.push(Candidate {
                        kernel_index: ki,
                        s: None,
                        ridge: Some(ridge),
                        laplacian_weight: None,
                        score: totals[t] / folds.len() as f64,
                    });
                }
            }
            Method::Laprls => {
                let lap = ctx.laprls()?;
                let nr = grid.ridges.len();
                let mut totals = vec![0.0; nr * grid.laplacian_weights.len()];
                for fold in folds {
                    let f_val = lap.features().select_rows(&fold.val);
                    for (wi, &lw) in grid.laplacian_weights.iter().enumerate() {
                        let path = lap.primal_path(&fold.fit, &fold.y_fit, lw, &grid.ridges)?;
                        for (ri, w) in path.iter().enumerate() {
                            totals[wi * nr + ri] += fold_error(&(&f_val * w), fold, metric)?;
                        }
                    }
                }
                for (wi, &lw) in grid.laplacian_weights.iter().enumerate() {
                    for (ri, &ridge) in grid.ridges.iter().enumerate() {
                        out.push(Candidate {
                            kernel_index: ki,
                            s: None,
                            ridge: Some(ridge),
                            laplacian_weight: Some(lw),
                            score: totals[wi * nr + ri] / folds.len() as f64,
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Picks the grid point with the lowest mean validation error over folds of the
/// labeled set. `labeled` are positions in the contexts' training set; all training
/// features stay visible to the semi-supervised methods inside every fold.
pub fn cross_validate(
    method: Method,
    contexts: &[KernelContext],
    labeled: &[usize],
    y_l: &[f64],
    grid: &SearchGrid,
    cv_folds: usize,
    metric: Metric,
    center_labels: bool,
) -> Result<Chosen> {
    if contexts.is_empty() {
        return Err(Error::Config("kernel grid is empty".into()));
    }
    if grid.ridges.is_empty() && method != Method::Sssl {
        return Err(Error::Config("ridge grid is empty".into()));
    }
    if grid.laplacian_weights.is_empty() && method == Method::Laprls {
        return Err(Error::Config("laplacian weight grid is empty".into()));
    }
    if labeled.len() != y_l.len() {
        return Err(Error::DimensionMismatch {
            expected: labeled.len(),
            found: y_l.len(),
        });
    }
    let folds = make_folds(labeled, y_l, cv_folds, center_labels)?;
    let candidates = scores(method, contexts, &folds, grid, metric)?;
    let best = candidates
        .iter()
        .filter(|c| c.score.is_finite())
        .min_by(|a, b| preference(a, b))
        .ok_or_else(|| Error::Singular(format!("no {method} grid point gave a finite validation error")))?;
    Ok(Chosen {
        kernel: contexts[best.kernel_index].kernel,
        s: best.s,
        ridge: best.ridge,
        laplacian_weight: best.laplacian_weight,
        cv_error: best.score,
    })
}

/// A fitted model reduced to what test-time prediction needs.
#[derive(Debug, Clone)]
pub struct FittedPredictor {
    /// Coefficients against `basis` points of the training set.
    pub dual: DVector<f64>,
    /// Training positions the coefficients refer to.
    pub basis: Basis,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Basis {
    AllTraining,
    Labeled(Vec<usize>),
}

impl FittedPredictor {
    /// Predictions from kernel rows against every training point.
    pub fn predict(&self, kernel_rows: &DMatrix<f64>) -> DVector<f64> {
        let raw = match &self.basis {
            Basis::AllTraining => kernel_rows * &self.dual,
            Basis::Labeled(idx) => kernel_rows.select_columns(idx) * &self.dual,
        };
        raw.add_scalar(self.offset)
    }
}

/// Refits `method` with the chosen hyperparameters on every labeled point.
pub fn fit_chosen(
    method: Method,
    ctx: &KernelContext,
    chosen: &Chosen,
    labeled: &[usize],
    y_l: &[f64],
    center_labels: bool,
) -> Result<FittedPredictor> {
    let offset = if center_labels {
        y_l.iter().sum::<f64>() / y_l.len() as f64
    } else {
        0.0
    };
    let y: Vec<f64> = y_l.iter().map(|v| v - offset).collect();
    let missing = |name: &'static str| Error::invalid(name, format!("not chosen for {method}"));
    let (dual, basis) = match method {
        Method::Sssl => {
            let s = chosen.s.ok_or_else(|| missing("s"))?;
            let m = SsslModel::fit_on_training_points(
                ctx.eigensystem.clone(),
                labeled,
                &y,
                s,
                ctx.kernel,
                ctx.train.clone(),
            )?;
            (m.dual_coeffs().clone(), Basis::AllTraining)
        }
        Method::Krr => {
            let ridge = chosen.ridge.ok_or_else(|| missing("ridge"))?;
            let pts = Arc::new(ctx.train.subset(labeled)?);
            let k = gram_matrix(&ctx.kernel, &pts)?;
            let m = fit_krr(&k, &y, ridge, ctx.kernel, pts)?;
            (m.dual_coeffs().clone(), Basis::Labeled(labeled.to_vec()))
        }
        Method::Laprls => {
            let params = LapRlsParams {
                ridge: chosen.ridge.ok_or_else(|| missing("ridge"))?,
                laplacian_weight: chosen.laplacian_weight.ok_or_else(|| missing("laplacian_weight"))?,
            };
            let m = ctx.laprls()?.fit(labeled, &y, params, ctx.kernel, ctx.train.clone())?;
            (m.dual_coeffs().clone(), Basis::AllTraining)
        }
    };
    Ok(FittedPredictor {
        dual,
        basis,
        offset,
    })
}
