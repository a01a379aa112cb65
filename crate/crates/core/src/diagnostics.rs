//! Computable checks on the spectrum and eigenfunctions behind the learner:
//! power-law decay, eigenfunction bounds, eigengaps and sample-size budgets.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::eigensystem::EigenSystem;
use crate::error::{Error, Result, ResultExt};
use crate::kernels::{kernel_matrix, Dataset, KernelSpec};

/// Eigenvalues at or below this fraction of the largest are left out of the power-law fit.
pub const FIT_FLOOR: f64 = 1e-12;

/// Queries are evaluated in blocks of this many rows to bound memory.
const EVAL_BLOCK: usize = 1024;

/// `lambda_k <= a2 * k^-p` over `fitted_range` (1-based, inclusive).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub a2: f64,
    pub p: f64,
    /// Largest `lambda_k - a2 k^-p` over the fitted range; at most rounding noise.
    pub max_violation: f64,
    pub fitted_range: (usize, usize),
}

impl PowerLawFit {
    pub fn a(&self) -> f64 {
        self.a2.sqrt()
    }

    /// `a2 * k^-p` for 1-based `k`.
    pub fn envelope(&self, k: usize) -> f64 {
        self.a2 * (k as f64).powf(-self.p)
    }
}

/// Least-squares slope of `log lambda_k` against `log k`, then the smallest `a2`
/// for which `a2 k^-p` bounds every fitted eigenvalue.
pub fn fit_power_law(lambdas: &[f64]) -> Result<PowerLawFit> {
    if let Some(pos) = lambdas.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(pos));
    }
    if lambdas.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::invalid("lambdas", "must be sorted in descending order"));
    }
    let top = lambdas.first().copied().unwrap_or(0.0);
    let m = lambdas
        .iter()
        .take_while(|&&l| l > 0.0 && l > FIT_FLOOR * top)
        .count();
    if m < 3 {
        return Err(Error::invalid(
            "lambdas",
            format!("need at least 3 positive eigenvalues for a power-law fit, found {m}"),
        ));
    }
    let xs: Vec<f64> = (1..=m).map(|k| (k as f64).ln()).collect();
    let ys: Vec<f64> = lambdas[..m].iter().map(|l| l.ln()).collect();
    let mx = xs.iter().sum::<f64>() / m as f64;
    let my = ys.iter().sum::<f64>() / m as f64;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let p = -sxy / sxx;
    let p = if p == 0.0 { 0.0 } else { p };

    // Calibrate in log space: log a2 = max_k (log lambda_k + p log k).
    let log_a2 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| y + p * x)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut fit = PowerLawFit {
        a2: log_a2.exp(),
        p,
        max_violation: 0.0,
        fitted_range: (1, m),
    };
    fit.max_violation = lambdas[..m]
        .iter()
        .enumerate()
        .map(|(i, l)| l - fit.envelope(i + 1))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(fit)
}

/// Writes `index,lambda,envelope` rows (1-based index).
pub fn write_envelope_csv<W: Write>(lambdas: &[f64], fit: &PowerLawFit, mut out: W) -> Result<()> {
    writeln!(out, "index,lambda,envelope")?;
    for (i, l) in lambdas.iter().enumerate() {
        writeln!(out, "{},{},{}", i + 1, l, fit.envelope(i + 1))?;
    }
    Ok(())
}

/// Values `phi_i(x) / sqrt(lambda_i)` for each query row and `i < s`.
fn normalized_eigenfunctions(
    es: &EigenSystem,
    spec: &KernelSpec,
    train: &Dataset,
    eval_points: &Dataset,
    s: usize,
    mut visit: impl FnMut(&DMatrix<f64>),
) -> Result<()> {
    if eval_points.is_empty() {
        return Err(Error::Empty("evaluation points"));
    }
    if train.len() != es.n_points() {
        return Err(Error::DimensionMismatch {
            expected: es.n_points(),
            found: train.len(),
        });
    }
    let mut map = es.feature_map(s)?;
    for (j, mut col) in map.column_iter_mut().enumerate() {
        col /= es.lambdas()[j].sqrt();
    }
    let all: Vec<usize> = (0..eval_points.len()).collect();
    for block in all.chunks(EVAL_BLOCK) {
        let pts = eval_points.subset(block)?;
        let k = kernel_matrix(spec, &pts, train)?;
        visit(&(k * &map));
    }
    Ok(())
}

/// Empirical bound `max_{x, i <= s} |phi_i(x)| / sqrt(lambda_i)` over `eval_points`,
/// using all pairs held by `es`.
pub fn c_hat_estimate(
    es: &EigenSystem,
    spec: &KernelSpec,
    train: &Dataset,
    eval_points: &Dataset,
) -> Result<f64> {
    c_hat_estimate_s(es, spec, train, eval_points, es.s())
}

pub fn c_hat_estimate_s(
    es: &EigenSystem,
    spec: &KernelSpec,
    train: &Dataset,
    eval_points: &Dataset,
    s: usize,
) -> Result<f64> {
    let mut best = 0.0f64;
    normalized_eigenfunctions(es, spec, train, eval_points, s, |block| {
        best = best.max(block.amax());
    })?;
    Ok(best)
}

/// `max_x sum_{i <= s} (phi_i(x) / sqrt(lambda_i))^2` over `eval_points`.
///
/// Dividing by `sqrt(lambda_i)` turns the RKHS-normalized eigenfunctions into ones
/// with unit mean square over the sample, so a constant kernel gives `M(1) = 1`.
pub fn m_of_s(
    es: &EigenSystem,
    spec: &KernelSpec,
    train: &Dataset,
    eval_points: &Dataset,
    s: usize,
) -> Result<f64> {
    let mut best = 0.0f64;
    normalized_eigenfunctions(es, spec, train, eval_points, s, |block| {
        for row in block.row_iter() {
            best = best.max(row.norm_squared());
        }
    })?;
    Ok(best)
}

/// `lambda_s - lambda_{s+1}` for 1-based `s`.
pub fn eigengap(lambdas: &[f64], s: usize) -> Result<f64> {
    if s == 0 || s + 1 > lambdas.len() {
        return Err(Error::invalid(
            "s",
            format!("need 1 <= s < {} for an eigengap", lambdas.len()),
        ));
    }
    Ok((lambdas[s - 1] - lambdas[s]).max(0.0))
}

/// `12 ln N / sqrt N`. Takes a real `N` so the formula can be probed off the integers.
pub fn tau_n(n: f64) -> Result<f64> {
    if !(n >= 2.0) || !n.is_finite() {
        return Err(Error::invalid("N", format!("must be at least 2, got {n}")));
    }
    Ok(12.0 * n.ln() / n.sqrt())
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be positive, got {v}")))
    }
}

/// Labeled budget `n0 = 64 C^2 ln^2(2 N^3) (R a / eps)^(4 / (p - 1))`.
pub fn required_labels(c: f64, n: usize, r: f64, a: f64, eps: f64, p: f64) -> Result<f64> {
    check_positive("C", c)?;
    check_positive("R", r)?;
    check_positive("a", a)?;
    check_positive("eps", eps)?;
    if n == 0 {
        return Err(Error::invalid("N", "must be positive"));
    }
    if !(p > 1.0) {
        return Err(Error::invalid("p", format!("must exceed 1, got {p}")));
    }
    let log_term = (2.0f64.ln() + 3.0 * (n as f64).ln()).powi(2);
    Ok(64.0 * c * c * log_term * (r * a / eps).powf(4.0 / (p - 1.0)))
}

/// Basis size `ceil((a R / eps)^(2 / (p - 1)))`, at least 1.
pub fn recommended_s(a: f64, r: f64, eps: f64, p: f64) -> Result<usize> {
    check_positive("a", a)?;
    check_positive("R", r)?;
    check_positive("eps", eps)?;
    if !(p > 1.0) {
        return Err(Error::invalid("p", format!("must exceed 1, got {p}")));
    }
    let v = (a * r / eps).powf(2.0 / (p - 1.0));
    // Guard against ceil turning 8.000000000000002 into 9.
    let rounded = v.round();
    let s = if (v - rounded).abs() <= 1e-9 * rounded.max(1.0) {
        rounded
    } else {
        v.ceil()
    };
    if !s.is_finite() || s > usize::MAX as f64 {
        return Err(Error::invalid("s", "recommended basis size overflows"));
    }
    Ok((s as usize).max(1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetVerdict {
    pub ok: bool,
    /// Smallest `N` satisfying the condition; infinite when the eigengap is zero.
    #[serde(with = "finite_or_null")]
    pub required_n: f64,
    pub reason: Option<String>,
}

/// Unlabeled budget `N >= max(144 R^2 ln^2 N / (r_s^2 eps^2), 144 R^4 a^2 ln^2 N / eps^4)`.
pub fn unlabeled_budget(n: usize, r: f64, a: f64, eps: f64, r_s: f64) -> Result<BudgetVerdict> {
    check_positive("R", r)?;
    check_positive("a", a)?;
    check_positive("eps", eps)?;
    if n == 0 {
        return Err(Error::invalid("N", "must be positive"));
    }
    if !(r_s >= 0.0) || !r_s.is_finite() {
        return Err(Error::invalid("r_s", format!("must be non-negative, got {r_s}")));
    }
    let ln2 = (n as f64).ln().powi(2);
    let second = 144.0 * r.powi(4) * a * a * ln2 / eps.powi(4);
    if r_s == 0.0 {
        return Ok(BudgetVerdict {
            ok: false,
            required_n: f64::INFINITY,
            reason: Some("eigengap is zero, so no finite N suffices".into()),
        });
    }
    let first = 144.0 * r * r * ln2 / (r_s * r_s * eps * eps);
    let required_n = first.max(second);
    let ok = n as f64 >= required_n;
    Ok(BudgetVerdict {
        ok,
        required_n,
        reason: (!ok).then(|| format!("N = {n} is below the required {required_n:.4e}")),
    })
}

pub fn unlabeled_budget_ok(n: usize, r: f64, a: f64, eps: f64, r_s: f64) -> Result<bool> {
    Ok(unlabeled_budget(n, r, a, eps, r_s)?.ok)
}

mod finite_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

pub const DEFAULT_R: f64 = 1.0;
pub const DEFAULT_EPS: f64 = 0.1;

/// User-side quantities the report cannot infer from data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportParams {
    /// RKHS-norm budget of the comparator function.
    pub r: f64,
    /// Target approximation error.
    pub eps: f64,
    /// Basis size to examine; the recommended size when absent.
    pub s: Option<usize>,
    pub n_labeled: Option<usize>,
    /// Whether `r` and `eps` were supplied rather than defaulted.
    pub user_supplied: bool,
}

impl Default for ReportParams {
    fn default() -> Self {
        ReportParams {
            r: DEFAULT_R,
            eps: DEFAULT_EPS,
            s: None,
            n_labeled: None,
            user_supplied: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportInputs {
    pub r: f64,
    pub eps: f64,
    pub n_points: usize,
    pub n_labeled: Option<usize>,
    /// Basis size at which the eigenfunction bounds and eigengap were evaluated.
    pub s: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub power_law: PowerLawFit,
    /// Power index above 2.
    pub decay_ok: bool,
    /// Empirical eigenfunction bound over the training points.
    pub c_hat: f64,
    pub m_of_s: f64,
    pub eigengap: f64,
    pub tau: f64,
    /// `3 tau^(2/3)`, the eigengap the separation condition asks for.
    pub eigengap_threshold: f64,
    pub eigengap_ok: bool,
    /// Labeled budget; absent when `p <= 1`.
    pub n0: Option<f64>,
    /// Absent when `p <= 1`.
    pub recommended_s: Option<usize>,
    pub unlabeled_budget: BudgetVerdict,
    pub inputs: ReportInputs,
    pub notes: Vec<String>,
}

impl DiagnosticsReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Runs every check on one eigensystem. `es` must hold at least two pairs.
pub fn assumption_report(
    es: &EigenSystem,
    spec: &KernelSpec,
    train: &Dataset,
    params: ReportParams,
) -> Result<DiagnosticsReport> {
    if es.s() < 2 {
        return Err(Error::invalid("eigensystem", "need at least two eigenpairs"));
    }
    check_positive("R", params.r).context(|| "report inputs".into())?;
    check_positive("eps", params.eps).context(|| "report inputs".into())?;
    let lambdas = es.lambdas().as_slice();
    let n_points = es.n_points();
    let mut notes = vec![
        "c_hat and m_of_s use empirical eigenpairs in place of population ones".to_string(),
    ];
    if !params.user_supplied {
        notes.push(format!(
            "R = {} and eps = {} are defaults, not user inputs; n0, recommended_s and the unlabeled budget depend on them",
            params.r, params.eps
        ));
    }

    let power_law = fit_power_law(lambdas).context(|| "power_law".into())?;
    let decay_ok = power_law.p > 2.0;
    if !decay_ok {
        notes.push(format!("power index {:.4} does not exceed 2", power_law.p));
    }
    let a = power_law.a();
    let (recommended, n0_exponent_ok) = if power_law.p > 1.0 {
        (
            Some(recommended_s(a, params.r, params.eps, power_law.p).context(|| "recommended_s".into())?),
            true,
        )
    } else {
        notes.push("p <= 1: n0 and recommended_s are undefined".into());
        (None, false)
    };

    let cap = (es.s() - 1).min(es.numerical_rank()).max(1);
    let wanted = params.s.or(recommended).unwrap_or(cap);
    let s = wanted.clamp(1, cap);
    if s != wanted {
        notes.push(format!(
            "basis size {wanted} exceeds the {cap} usable eigenpairs; evaluated at s = {s}"
        ));
    }

    let c_hat = c_hat_estimate_s(es, spec, train, train, s).context(|| "c_hat".into())?;
    let m = m_of_s(es, spec, train, train, s).context(|| "m_of_s".into())?;
    let gap = eigengap(lambdas, s).context(|| "eigengap".into())?;
    let tau = tau_n(n_points as f64).context(|| "tau".into())?;
    let eigengap_threshold = 3.0 * tau.powf(2.0 / 3.0);
    let eigengap_ok = gap >= eigengap_threshold;
    let n0 = if n0_exponent_ok {
        Some(required_labels(c_hat, n_points, params.r, a, params.eps, power_law.p).context(|| "n0".into())?)
    } else {
        None
    };
    let budget = unlabeled_budget(n_points, params.r, a, params.eps, gap).context(|| "unlabeled_budget".into())?;

    Ok(DiagnosticsReport {
        power_law,
        decay_ok,
        c_hat,
        m_of_s: m,
        eigengap: gap,
        tau,
        eigengap_threshold,
        eigengap_ok,
        n0,
        recommended_s: recommended,
        unlabeled_budget: budget,
        inputs: ReportInputs {
            r: params.r,
            eps: params.eps,
            n_points,
            n_labeled: params.n_labeled,
            s,
        },
        notes,
    })
}
