//! One-dimensional regression problems whose kernel spectrum, eigenfunctions and
//! target decomposition are known exactly.
//!
//! Inputs are uniform on `[0, 1]`. The kernel is the cosine series
//! `k(x, y) = sum_{k <= k_max} lambda_k phi_k(x) phi_k(y)` with
//! `phi_k(x) = sqrt(2) cos(k pi x)` and `lambda_k = a2 k^-p`, where `a2` makes
//! `k(0, 0) = 1`. The target is `f = g + residual_amp * cos(m pi x)` with
//! `g = sum_k alpha_k phi_k` and `m = k_max + 1`, so the residual is orthogonal to
//! every eigenfunction.

use std::f64::consts::{PI, SQRT_2};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{CosineSeries, Dataset, KernelSpec};
use crate::models::Regressor;

pub const DEFAULT_K_MAX: usize = 64;

/// Midpoint-rule nodes for the mean-square residual.
pub const QUADRATURE_NODES: usize = 1 << 14;

/// Relative slack allowed on the RKHS-norm budget.
const NORM_SLACK: f64 = 1e-12;

fn default_k_max() -> usize {
    DEFAULT_K_MAX
}

fn default_r() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    /// Spectrum decay exponent, above 2.
    pub p: f64,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    /// RKHS-norm budget for `g`.
    #[serde(default = "default_r")]
    pub r: f64,
    /// Coefficients of `g`, one per eigenfunction; see [`SyntheticSpec::decaying_alpha`] for the default.
    #[serde(default)]
    pub alpha: Option<Vec<f64>>,
    /// Sup-norm of `f - g`.
    #[serde(default)]
    pub residual_amp: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticSpec {
    /// Spec with the default coefficient profile and no residual.
    pub fn new(p: f64, seed: u64) -> Self {
        SyntheticSpec {
            p,
            k_max: DEFAULT_K_MAX,
            r: 1.0,
            alpha: None,
            residual_amp: 0.0,
            seed,
        }
    }

    pub fn with_residual_amp(mut self, amp: f64) -> Self {
        self.residual_amp = amp;
        self
    }

    /// Residual amplitude giving a mean-square residual of `eps_sq`.
    pub fn with_eps_sq(self, eps_sq: f64) -> Self {
        self.with_residual_amp((2.0 * eps_sq).sqrt())
    }

    /// `a2 = 1 / (2 sum_k k^-p)`, so the kernel diagonal peaks at exactly 1.
    pub fn a2(&self) -> f64 {
        let s: f64 = (1..=self.k_max).map(|k| (k as f64).powf(-self.p)).sum();
        0.5 / s
    }

    /// `alpha_k = R sqrt(lambda_k) w_k` with `w_k` proportional to `1/k` and unit norm,
    /// which puts `g` exactly on the budget sphere.
    pub fn decaying_alpha(&self) -> Vec<f64> {
        let norm = (1..=self.k_max)
            .map(|k| 1.0 / (k * k) as f64)
            .sum::<f64>()
            .sqrt();
        let a2 = self.a2();
        (1..=self.k_max)
            .map(|k| {
                let lambda = a2 * (k as f64).powf(-self.p);
                self.r * lambda.sqrt() / (k as f64 * norm)
            })
            .collect()
    }

    pub fn alpha(&self) -> Vec<f64> {
        self.alpha.clone().unwrap_or_else(|| self.decaying_alpha())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 2.0 && self.p.is_finite()) {
            return Err(Error::invalid("p", format!("must exceed 2, got {}", self.p)));
        }
        if self.k_max == 0 {
            return Err(Error::invalid("k_max", "must be positive"));
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(Error::invalid("r", "must be positive"));
        }
        if !(self.residual_amp >= 0.0 && self.residual_amp.is_finite()) {
            return Err(Error::invalid("residual_amp", "must be non-negative"));
        }
        if let Some(alpha) = &self.alpha {
            if alpha.len() != self.k_max {
                return Err(Error::DimensionMismatch {
                    expected: self.k_max,
                    found: alpha.len(),
                });
            }
            if let Some(pos) = alpha.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(pos));
            }
        }
        let norm_sq = rkhs_norm_sq(&self.alpha(), self.a2(), self.p);
        if norm_sq > self.r * self.r * (1.0 + NORM_SLACK) {
            return Err(Error::invalid(
                "alpha",
                format!(
                    "RKHS norm^2 of g is {norm_sq:.6e}, above the budget R^2 = {:.6e}",
                    self.r * self.r
                ),
            ));
        }
        Ok(())
    }

    pub fn kernel(&self) -> KernelSpec {
        KernelSpec::CosineSeries(CosineSeries {
            a2: self.a2(),
            p: self.p,
            terms: self.k_max,
        })
    }
}

fn rkhs_norm_sq(alpha: &[f64], a2: f64, p: f64) -> f64 {
    alpha
        .iter()
        .enumerate()
        .map(|(i, a)| a * a / (a2 * ((i + 1) as f64).powf(-p)))
        .sum()
}

/// `sqrt(2) cos(k pi x)`, 1-based `k`.
pub fn eigenfunction(k: usize, x: f64) -> f64 {
    SQRT_2 * (k as f64 * PI * x).cos()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub alpha: Vec<f64>,
    pub residual_amp: f64,
    pub residual_frequency: usize,
    pub a2: f64,
    pub p: f64,
    /// `E[(f - g)^2]` under the uniform distribution, by midpoint quadrature.
    pub eps_sq: f64,
    /// `sup (f - g)^2`.
    pub eps_max_sq: f64,
}

impl GroundTruth {
    pub fn from_spec(spec: &SyntheticSpec) -> Result<Self> {
        spec.validate()?;
        let mut truth = GroundTruth {
            alpha: spec.alpha(),
            residual_amp: spec.residual_amp,
            residual_frequency: spec.k_max + 1,
            a2: spec.a2(),
            p: spec.p,
            eps_sq: 0.0,
            eps_max_sq: spec.residual_amp * spec.residual_amp,
        };
        let h = 1.0 / QUADRATURE_NODES as f64;
        truth.eps_sq = (0..QUADRATURE_NODES)
            .map(|i| {
                let r = truth.residual((i as f64 + 0.5) * h);
                r * r
            })
            .sum::<f64>()
            * h;
        Ok(truth)
    }

    pub fn g(&self, x: f64) -> f64 {
        self.alpha
            .iter()
            .enumerate()
            .map(|(i, a)| a * eigenfunction(i + 1, x))
            .sum()
    }

    /// `f(x) - g(x)`.
    pub fn residual(&self, x: f64) -> f64 {
        self.residual_amp * (self.residual_frequency as f64 * PI * x).cos()
    }

    pub fn f(&self, x: f64) -> f64 {
        self.g(x) + self.residual(x)
    }

    pub fn rkhs_norm_sq(&self) -> f64 {
        rkhs_norm_sq(&self.alpha, self.a2, self.p)
    }

    /// `eps_max^2 ln N / (n eps^2)`; `None` when `eps^2` is zero.
    pub fn residual_ratio(&self, n_labeled: usize, n_points: usize) -> Option<f64> {
        (self.eps_sq > 0.0 && n_labeled > 0 && n_points > 0)
            .then(|| self.eps_max_sq * (n_points as f64).ln() / (n_labeled as f64 * self.eps_sq))
    }
}

/// `N` uniform draws with labels `f(x)`, the ground truth and the generating kernel.
pub fn make_synthetic(spec: &SyntheticSpec, n: usize) -> Result<(Dataset, GroundTruth, KernelSpec)> {
    if n == 0 {
        return Err(Error::invalid("N", "must be positive"));
    }
    let truth = GroundTruth::from_spec(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let xs: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| truth.f(x)).collect();
    let data = Dataset::from_flat(xs, 1, Some(ys))?;
    Ok((data, truth, spec.kernel()))
}

/// `(lambda_1, ..., lambda_{k_max})`.
pub fn population_spectrum(spec: &SyntheticSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let a2 = spec.a2();
    Ok((1..=spec.k_max)
        .map(|k| a2 * (k as f64).powf(-spec.p))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub samples: usize,
}

/// Monte-Carlo estimate of `E[(model(x) - f(x))^2]` over fresh uniform draws.
pub fn true_generalization_error<M: Regressor + ?Sized>(
    model: &M,
    truth: &GroundTruth,
    n_mc: usize,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    if n_mc < 100 {
        return Err(Error::invalid("n_mc", format!("must be at least 100, got {n_mc}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<f64> = (0..n_mc).map(|_| rng.gen::<f64>()).collect();
    let points = Dataset::from_flat(xs.clone(), 1, None)?;
    let pred = model.predict_batch(&points)?;
    let sq: Vec<f64> = pred
        .iter()
        .zip(&xs)
        .map(|(p, &x)| (p - truth.f(x)).powi(2))
        .collect();
    let mean = sq.iter().sum::<f64>() / n_mc as f64;
    let var = sq.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n_mc - 1) as f64;
    Ok(MonteCarloEstimate {
        mean,
        std_err: (var / n_mc as f64).sqrt(),
        samples: n_mc,
    })
}
