use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::models::Metric;
use crate::synthetic::SyntheticSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sssl,
    Krr,
    Laprls,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Sssl => "sssl",
            Method::Krr => "krr",
            Method::Laprls => "laprls",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which column holds the regression target: a header name, or `last`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum TargetColumn {
    #[default]
    Last,
    Name(String),
}

impl From<String> for TargetColumn {
    fn from(s: String) -> Self {
        if s == "last" {
            TargetColumn::Last
        } else {
            TargetColumn::Name(s)
        }
    }
}

impl From<TargetColumn> for String {
    fn from(t: TargetColumn) -> Self {
        match t {
            TargetColumn::Last => "last".into(),
            TargetColumn::Name(n) => n,
        }
    }
}

impl std::str::FromStr for TargetColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(TargetColumn::from(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Csv {
        path: PathBuf,
        #[serde(default)]
        target: TargetColumn,
    },
    Synthetic { spec: SyntheticSpec, n: usize },
}

pub const DEFAULT_BANDWIDTH_FACTORS: [f64; 7] = [0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0];

fn default_bandwidth_factors() -> Vec<f64> {
    DEFAULT_BANDWIDTH_FACTORS.to_vec()
}

/// Kernel family searched by cross-validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelGrid {
    /// Bandwidths are `factor * median pairwise distance` of the training features,
    /// unless absolute `bandwidths` are given.
    Rbf {
        #[serde(default = "default_bandwidth_factors")]
        bandwidth_factors: Vec<f64>,
        #[serde(default)]
        bandwidths: Option<Vec<f64>>,
    },
    LinearNormalized,
    PolynomialNormalized { degrees: Vec<u32> },
    /// The generating kernel of a synthetic data source.
    Native,
}

impl Default for KernelGrid {
    fn default() -> Self {
        KernelGrid::Rbf {
            bandwidth_factors: default_bandwidth_factors(),
            bandwidths: None,
        }
    }
}

impl KernelGrid {
    /// Concrete kernels, ordered from smallest to largest bandwidth where that applies.
    pub fn expand(&self, median_distance: f64, native: Option<KernelSpec>) -> Result<Vec<KernelSpec>> {
        let mut out = match self {
            KernelGrid::Rbf {
                bandwidth_factors,
                bandwidths,
            } => {
                let mut bw: Vec<f64> = match bandwidths {
                    Some(b) => b.clone(),
                    None => bandwidth_factors.iter().map(|f| f * median_distance).collect(),
                };
                bw.sort_by(f64::total_cmp);
                bw.dedup();
                bw.into_iter().map(KernelSpec::rbf).collect::<Vec<_>>()
            }
            KernelGrid::LinearNormalized => vec![KernelSpec::LinearNormalized],
            KernelGrid::PolynomialNormalized { degrees } => degrees
                .iter()
                .map(|&degree| KernelSpec::PolynomialNormalized { degree })
                .collect(),
            KernelGrid::Native => vec![native.ok_or_else(|| {
                Error::Config("kernel kind `native` needs a synthetic data source".into())
            })?],
        };
        if out.is_empty() {
            return Err(Error::Config("kernel grid is empty".into()));
        }
        for k in &mut out {
            k.validate()?;
        }
        Ok(out)
    }
}

fn default_methods() -> Vec<Method> {
    vec![Method::Sssl, Method::Krr, Method::Laprls]
}

fn default_label_fractions() -> Vec<f64> {
    (2..=9).map(|i| i as f64 / 100.0).collect()
}

fn default_test_fraction() -> f64 {
    0.1
}

fn default_repeats() -> usize {
    10
}

fn default_cv_folds() -> usize {
    5
}

fn default_ridge_grid() -> Vec<f64> {
    (-6..=1).map(|e| 10f64.powi(e)).collect()
}

fn default_laplacian_weights() -> Vec<f64> {
    vec![0.0, 1.0, 10.0, 100.0, 1000.0]
}

fn default_graph_k() -> usize {
    10
}

fn default_max_eigenpairs() -> usize {
    256
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data_source: DataSource,
    #[serde(default)]
    pub kernel: KernelGrid,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_label_fractions")]
    pub label_fractions: Vec<f64>,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub metric: Metric,
    #[serde(default = "default_cv_folds")]
    pub cv_folds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub standardize_features: bool,
    /// Subtract the labeled mean from the targets before fitting and add it back afterwards.
    #[serde(default)]
    pub center_labels: bool,
    /// Basis sizes for the eigenfunction learner; powers of two up to the rank when absent.
    #[serde(default)]
    pub s_grid: Option<Vec<usize>>,
    #[serde(default = "default_ridge_grid")]
    pub ridge_grid: Vec<f64>,
    #[serde(default = "default_laplacian_weights")]
    pub laplacian_weights: Vec<f64>,
    #[serde(default = "default_graph_k")]
    pub graph_k: usize,
    /// Eigenpairs computed per kernel; caps the basis size and the LapRLS expansion.
    #[serde(default = "default_max_eigenpairs")]
    pub max_eigenpairs: usize,
}

impl ExperimentConfig {
    /// Config with every optional field at its default.
    pub fn new(data_source: DataSource) -> Self {
        ExperimentConfig {
            data_source,
            kernel: KernelGrid::default(),
            methods: default_methods(),
            label_fractions: default_label_fractions(),
            test_fraction: default_test_fraction(),
            repeats: default_repeats(),
            metric: Metric::default(),
            cv_folds: default_cv_folds(),
            seed: 0,
            standardize_features: false,
            center_labels: false,
            s_grid: None,
            ridge_grid: default_ridge_grid(),
            laplacian_weights: default_laplacian_weights(),
            graph_k: default_graph_k(),
            max_eigenpairs: default_max_eigenpairs(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_json(&text)?;
        // CSV paths are relative to the config file.
        if let DataSource::Csv { path: p, .. } = &mut cfg.data_source {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.methods.is_empty() {
            return bad("methods must not be empty".into());
        }
        let mut seen = self.methods.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.methods.len() {
            return bad("methods must not repeat".into());
        }
        if self.label_fractions.is_empty() {
            return bad("label_fractions must not be empty".into());
        }
        if let Some(f) = self.label_fractions.iter().find(|f| !(**f > 0.0 && **f < 1.0)) {
            return bad(format!("label fraction {f} is outside (0, 1)"));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!("test_fraction {} is outside (0, 1)", self.test_fraction));
        }
        if self.repeats == 0 {
            return bad("repeats must be at least 1".into());
        }
        if self.cv_folds < 2 {
            return bad("cv_folds must be at least 2".into());
        }
        if self.ridge_grid.is_empty() || self.ridge_grid.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return bad("ridge_grid must be non-empty and positive".into());
        }
        if self.laplacian_weights.is_empty()
            || self.laplacian_weights.iter().any(|w| !(*w >= 0.0 && w.is_finite()))
        {
            return bad("laplacian_weights must be non-empty and non-negative".into());
        }
        if let Some(s) = &self.s_grid {
            if s.is_empty() || s.contains(&0) {
                return bad("s_grid must be non-empty and positive".into());
            }
        }
        if self.graph_k == 0 {
            return bad("graph_k must be at least 1".into());
        }
        if self.max_eigenpairs == 0 {
            return bad("max_eigenpairs must be at least 1".into());
        }
        match &self.kernel {
            KernelGrid::Rbf {
                bandwidth_factors,
                bandwidths,
            } => {
                let list = bandwidths.as_ref().unwrap_or(bandwidth_factors);
                if list.is_empty() || list.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
                    return bad("rbf bandwidths must be non-empty and positive".into());
                }
            }
            KernelGrid::PolynomialNormalized { degrees } if degrees.is_empty() => {
                return bad("polynomial degrees must not be empty".into());
            }
            KernelGrid::Native if !matches!(self.data_source, DataSource::Synthetic { .. }) => {
                return bad("kernel kind `native` needs a synthetic data source".into());
            }
            _ => {}
        }
        if let DataSource::Synthetic { spec, n } = &self.data_source {
            spec.validate()?;
            if *n < 2 {
                return bad("synthetic n must be at least 2".into());
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
