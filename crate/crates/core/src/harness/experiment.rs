use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::{DataSource, ExperimentConfig, Method};
use super::cv::{cross_validate, fit_chosen, Chosen, KernelContext, SearchGrid};
use super::data::{load_csv, LabeledTable, Standardizer};
use super::split::{label_count, TrialSplit};
use crate::diagnostics::{fit_power_law, PowerLawFit};
use crate::error::{Error, Result, ResultExt};
use crate::kernels::{kernel_matrix, median_pairwise_distance, Dataset, KernelSpec};
use crate::models::{regression_error, KnnGraph, Metric};
use crate::synthetic::{make_synthetic, GroundTruth};

/// Loaded data plus, for synthetic sources, the generating kernel and ground truth.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub table: LabeledTable,
    pub native_kernel: Option<KernelSpec>,
    pub truth: Option<GroundTruth>,
}

pub fn load_source(source: &DataSource) -> Result<LoadedData> {
    match source {
        DataSource::Csv { path, target } => Ok(LoadedData {
            table: load_csv(path, target)?,
            native_kernel: None,
            truth: None,
        }),
        DataSource::Synthetic { spec, n } => {
            let (data, truth, kernel) = make_synthetic(spec, *n)?;
            Ok(LoadedData {
                table: LabeledTable {
                    data,
                    feature_names: vec!["x".into()],
                    target_name: "y".into(),
                },
                native_kernel: Some(kernel),
                truth: Some(truth),
            })
        }
    }
}

/// One trial's training and test sets after optional standardization.
#[derive(Debug, Clone)]
pub struct TrialData {
    pub split: TrialSplit,
    pub train: Arc<Dataset>,
    pub test: Dataset,
    pub y_train: Vec<f64>,
    pub y_test: Vec<f64>,
}

impl TrialData {
    pub fn new(data: &Dataset, config: &ExperimentConfig, trial: usize) -> Result<Self> {
        let split = TrialSplit::new(data.len(), config.test_fraction, config.seed, trial)?;
        let mut train = data.subset(&split.train)?;
        let mut test = data.subset(&split.test)?;
        if config.standardize_features {
            let st = Standardizer::fit(&train)?;
            train = st.transform(&train)?;
            test = st.transform(&test)?;
        }
        let targets = |d: &Dataset| -> Result<Vec<f64>> {
            d.targets()
                .map(<[f64]>::to_vec)
                .ok_or(Error::Empty("targets"))
        };
        Ok(TrialData {
            y_train: targets(&train)?,
            y_test: targets(&test)?,
            train: Arc::new(train),
            test,
            split,
        })
    }

    pub fn labeled(&self, fraction: f64) -> Result<(Vec<usize>, Vec<f64>)> {
        let idx = self.split.labeled(fraction)?.to_vec();
        let y = idx.iter().map(|&i| self.y_train[i]).collect();
        Ok((idx, y))
    }
}

/// Kernel grid, LapRLS graph and decompositions for one trial, shared by every
/// label fraction and method.
pub struct TrialContexts {
    pub contexts: Vec<KernelContext>,
    /// Test-by-train kernel rows, aligned with `contexts`.
    pub test_kernels: Vec<nalgebra::DMatrix<f64>>,
}

impl TrialContexts {
    pub fn build(trial: &TrialData, config: &ExperimentConfig, native: Option<KernelSpec>) -> Result<Self> {
        let median = median_pairwise_distance(&trial.train)?;
        let kernels = config.kernel.expand(median, native)?;
        let graph = if config.methods.contains(&Method::Laprls) {
            let h = KnnGraph::median_knn_distance(&trial.train, config.graph_k)?;
            Some(KnnGraph::build(&trial.train, config.graph_k, h)?)
        } else {
            None
        };
        let mut contexts = Vec::with_capacity(kernels.len());
        let mut test_kernels = Vec::with_capacity(kernels.len());
        for k in kernels {
            contexts.push(
                KernelContext::build(k, trial.train.clone(), config.max_eigenpairs, graph.as_ref())
                    .context(|| format!("kernel {k:?}"))?,
            );
            test_kernels.push(kernel_matrix(&k, &trial.test, &trial.train)?);
        }
        Ok(TrialContexts {
            contexts,
            test_kernels,
        })
    }

    fn index_of(&self, kernel: &KernelSpec) -> Result<usize> {
        self.contexts
            .iter()
            .position(|c| &c.kernel == kernel)
            .ok_or_else(|| Error::Config(format!("kernel {kernel:?} is not in the grid")))
    }
}

pub fn search_grid(config: &ExperimentConfig) -> SearchGrid {
    SearchGrid {
        s: config.s_grid.clone(),
        s_cap: config.max_eigenpairs,
        ridges: config.ridge_grid.clone(),
        laplacian_weights: config.laplacian_weights.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub label_fraction: f64,
    pub n_labeled: usize,
    pub method: Method,
    pub chosen: Chosen,
    pub test_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub method: Method,
    pub label_fraction: f64,
    pub mean: f64,
    /// Sample standard deviation over repeats; zero for a single repeat.
    pub std: f64,
    pub repeats: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub metric: Metric,
    pub methods: Vec<Method>,
    pub label_fractions: Vec<f64>,
    pub cells: Vec<Cell>,
    pub trials: Vec<TrialRecord>,
    pub config: ExperimentConfig,
}

impl ResultsTable {
    pub fn cell(&self, method: Method, fraction: f64) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.label_fraction == fraction)
    }
}

/// Eigenvalues of the kernel chosen on the first trial, with their power-law envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRecord {
    pub kernel: KernelSpec,
    pub lambdas: Vec<f64>,
    pub fit: PowerLawFit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub table: ResultsTable,
    pub spectrum: Option<SpectrumRecord>,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

fn spectrum_of(ctx: &KernelContext) -> Result<SpectrumRecord> {
    let es = &ctx.eigensystem;
    let lambdas: Vec<f64> = es.lambdas().iter().take(es.numerical_rank()).copied().collect();
    Ok(SpectrumRecord {
        kernel: ctx.kernel,
        fit: fit_power_law(&lambdas)?,
        lambdas,
    })
}

/// Runs every trial, fraction and method of `config`. `progress` receives one line per
/// finished (trial, fraction).
pub fn run_experiment_with(
    config: &ExperimentConfig,
    progress: &mut dyn FnMut(&str),
) -> Result<ExperimentOutput> {
    config.validate()?;
    let loaded = load_source(&config.data_source)?;
    let data = &loaded.table.data;
    for &f in &config.label_fractions {
        let n_test = (config.test_fraction * data.len() as f64).round() as usize;
        if label_count(f, data.len()) > data.len().saturating_sub(n_test) {
            return Err(Error::Config(format!(
                "label fraction {f} needs more labels than the training split holds"
            )));
        }
    }
    let grid = search_grid(config);
    let mut records = Vec::new();
    let mut spectrum = None;

    for t in 0..config.repeats {
        let trial = TrialData::new(data, config, t).context(|| format!("trial {t}"))?;
        let ctxs = TrialContexts::build(&trial, config, loaded.native_kernel)
            .context(|| format!("trial {t}"))?;
        for (fi, &fraction) in config.label_fractions.iter().enumerate() {
            let (labeled, y_l) = trial.labeled(fraction)?;
            for &method in &config.methods {
                let where_ = || format!("trial {t}, label fraction {fraction}, method {method}");
                let chosen = cross_validate(
                    method,
                    &ctxs.contexts,
                    &labeled,
                    &y_l,
                    &grid,
                    config.cv_folds,
                    config.metric,
                    config.center_labels,
                )
                .context(where_)?;
                let ki = ctxs.index_of(&chosen.kernel)?;
                let model = fit_chosen(method, &ctxs.contexts[ki], &chosen, &labeled, &y_l, config.center_labels)
                    .context(where_)?;
                let pred = model.predict(&ctxs.test_kernels[ki]);
                let test_error = regression_error(pred.as_slice(), &trial.y_test, config.metric).context(where_)?;
                if t == 0 && fi == 0 && spectrum.is_none() && (method == Method::Sssl || !config.methods.contains(&Method::Sssl)) {
                    spectrum = spectrum_of(&ctxs.contexts[ki]).ok();
                }
                records.push(TrialRecord {
                    trial: t,
                    label_fraction: fraction,
                    n_labeled: labeled.len(),
                    method,
                    chosen,
                    test_error,
                });
            }
            progress(&format!(
                "trial {}/{} fraction {fraction}: {}",
                t + 1,
                config.repeats,
                records
                    .iter()
                    .rev()
                    .take(config.methods.len())
                    .rev()
                    .map(|r| format!("{}={:.4}", r.method, r.test_error))
                    .collect::<Vec<_>>()
                    .join(" ")
            ));
        }
    }

    let mut cells = Vec::new();
    for &method in &config.methods {
        for &fraction in &config.label_fractions {
            let errs: Vec<f64> = records
                .iter()
                .filter(|r| r.method == method && r.label_fraction == fraction)
                .map(|r| r.test_error)
                .collect();
            let (mean, std) = mean_std(&errs);
            cells.push(Cell {
                method,
                label_fraction: fraction,
                mean,
                std,
                repeats: errs.len(),
            });
        }
    }
    Ok(ExperimentOutput {
        table: ResultsTable {
            metric: config.metric,
            methods: config.methods.clone(),
            label_fractions: config.label_fractions.clone(),
            cells,
            trials: records,
            config: config.clone(),
        },
        spectrum,
    })
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    run_experiment_with(config, &mut |_| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::KernelGrid;
    use crate::synthetic::SyntheticSpec;

    fn small_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(DataSource::Synthetic {
            spec: SyntheticSpec::new(3.0, 5).with_eps_sq(1e-3),
            n: 300,
        });
        cfg.kernel = KernelGrid::Native;
        cfg.label_fractions = vec![0.05, 0.1, 0.2];
        cfg.repeats = 2;
        cfg.max_eigenpairs = 64;
        cfg.ridge_grid = vec![1e-4, 1e-2, 1.0];
        cfg.laplacian_weights = vec![0.0, 10.0];
        cfg
    }

    #[test]
    fn sample_std() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn synthetic_run_shape_and_determinism() {
        let cfg = small_config();
        let a = run_experiment(&cfg).unwrap();
        assert_eq!(a.table.cells.len(), 9);
        assert_eq!(a.table.trials.len(), 18);
        assert!(a.table.cells.iter().all(|c| c.std >= 0.0 && c.mean.is_finite()));
        let spec = a.spectrum.as_ref().unwrap();
        assert!((spec.fit.p - 3.0).abs() < 0.5);
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a, b);
        // recomputable from the per-trial log
        for cell in &a.table.cells {
            let errs: Vec<f64> = a
                .table
                .trials
                .iter()
                .filter(|r| r.method == cell.method && r.label_fraction == cell.label_fraction)
                .map(|r| r.test_error)
                .collect();
            assert_eq!(mean_std(&errs), (cell.mean, cell.std));
        }
    }

    #[test]
    fn labeled_sets_nested_across_fractions() {
        let cfg = small_config();
        let loaded = load_source(&cfg.data_source).unwrap();
        let trial = TrialData::new(&loaded.table.data, &cfg, 0).unwrap();
        let (small, _) = trial.labeled(0.05).unwrap();
        let (big, _) = trial.labeled(0.2).unwrap();
        assert_eq!(small.len(), 15);
        assert_eq!(big.len(), 60);
        assert_eq!(&big[..15], &small[..]);
        assert_eq!(trial.train.len(), 270);
    }

    #[test]
    fn oversized_fraction_rejected() {
        let mut cfg = small_config();
        cfg.label_fractions = vec![0.95];
        assert!(run_experiment(&cfg).is_err());
    }
}
